//! Maximum-likelihood estimation of model parameters from complete
//! observations.
//!
//! Minimizing the Kullback-Leibler divergence from the empirical distribution
//! of N complete observations to the model is the same as maximizing the
//! average log-likelihood, so the fit needs only the sufficient statistics
//! ⟨x_i⟩, ⟨x_i²⟩ and ⟨(x_i − x_j)²⟩ of the data. The (regularized) negative
//! average log-likelihood and its exact gradient are
//!
//! ```text
//! nll(θ) = −hᵀ⟨x⟩_D + ξ/2 Σ_i ⟨x_i²⟩_D + J/2 Σ_E ⟨(x_i−x_j)²⟩_D + ln Z(θ)
//!          + λ_h ‖h‖² + λ_ξ ξ² + λ_J J²
//! ∂nll/∂h_i = ⟨x_i⟩_model − ⟨x_i⟩_D + 2 λ_h h_i
//! ∂nll/∂ξ   = ½ (Σ_i ⟨x_i²⟩_D − Σ_i ⟨x_i²⟩_model) + 2 λ_ξ ξ
//! ∂nll/∂J   = ½ (Σ_E ⟨(x_i−x_j)²⟩_D − Σ_E ⟨(x_i−x_j)²⟩_model) + 2 λ_J J
//! ```
//!
//! with the model moments coming from [`crate::ggm::exact_moments`]. At λ = 0
//! a stationary point is exactly a moment match. The objective is convex in
//! (h, ξ, J), so the projected gradient descent used by [`fit`] finds the
//! global optimum.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ggm::{exact_moments, GgmParams};
use crate::graph::Graph;

/// Sufficient statistics of a complete-data sample for this model family.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub n_samples: usize,
    /// ⟨x_i⟩ over the data, per vertex.
    pub mean: DVector<f64>,
    /// ⟨x_i²⟩ over the data, per vertex.
    pub second: DVector<f64>,
    /// ⟨(x_i − x_j)²⟩ over the data, aligned with `Graph::edges`.
    pub edge_sq_diff: Vec<f64>,
}

impl EmpiricalMoments {
    /// Σ_i ⟨x_i²⟩_D.
    pub fn total_second(&self) -> f64 {
        self.second.sum()
    }

    /// Σ_E ⟨(x_i − x_j)²⟩_D.
    pub fn total_edge_sq_diff(&self) -> f64 {
        self.edge_sq_diff.iter().sum()
    }
}

/// Exact sample averages of x_i, x_i² and (x_i − x_j)² over the rows of
/// `data` (one observation per row).
pub fn empirical_moments(data: &DMatrix<f64>, g: &Graph) -> Result<EmpiricalMoments> {
    let n = g.vertex_count();
    if data.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: data.ncols(),
        });
    }
    let rows = data.nrows();
    if rows == 0 {
        return Err(Error::InvalidInput("need at least one observation".into()));
    }
    let inv = 1.0 / rows as f64;
    let mut mean = DVector::zeros(n);
    let mut second = DVector::zeros(n);
    for r in 0..rows {
        for i in 0..n {
            let v = data[(r, i)];
            mean[i] += v;
            second[i] += v * v;
        }
    }
    mean *= inv;
    second *= inv;
    let mut edge_sq_diff = vec![0.0; g.edge_count()];
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let mut acc = 0.0;
        for r in 0..rows {
            let d = data[(r, i as usize)] - data[(r, j as usize)];
            acc += d * d;
        }
        edge_sq_diff[e] = acc * inv;
    }
    Ok(EmpiricalMoments {
        n_samples: rows,
        mean,
        second,
        edge_sq_diff,
    })
}

/// Regularization weights, stopping rule and positivity floors for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub lambda_h: f64,
    pub lambda_xi: f64,
    pub lambda_j: f64,
    /// Stop when the gradient max-abs falls below this.
    pub grad_tolerance: f64,
    pub max_iterations: usize,
    /// First trial step of each backtracking line search.
    pub init_step: f64,
    /// ξ is clamped to at least this after every step.
    pub xi_floor: f64,
    /// J is clamped to at least this after every step.
    pub j_floor: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            lambda_h: 1e-3,
            lambda_xi: 1e-3,
            lambda_j: 1e-3,
            grad_tolerance: 1e-6,
            max_iterations: 10_000,
            init_step: 1.0,
            xi_floor: 1e-6,
            j_floor: 0.0,
        }
    }
}

impl LearnConfig {
    fn validate(&self) -> Result<()> {
        if self.lambda_h < 0.0 || self.lambda_xi < 0.0 || self.lambda_j < 0.0 {
            return Err(Error::InvalidInput(
                "regularization weights must be >= 0".into(),
            ));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.grad_tolerance) || self.max_iterations == 0 || !positive(self.init_step) {
            return Err(Error::InvalidInput("invalid stopping rule".into()));
        }
        if !positive(self.xi_floor) || self.j_floor < 0.0 {
            return Err(Error::InvalidInput(
                "floors must satisfy xi_floor > 0, j_floor >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Gradient of the regularized negative average log-likelihood.
#[derive(Debug, Clone)]
pub struct NllGradient {
    pub h: DVector<f64>,
    pub xi: f64,
    pub j: f64,
}

impl NllGradient {
    pub fn max_abs(&self) -> f64 {
        self.h.amax().max(self.xi.abs()).max(self.j.abs())
    }
}

fn regularizer(p: &GgmParams, cfg: &LearnConfig) -> f64 {
    cfg.lambda_h * p.h.norm_squared() + cfg.lambda_xi * p.xi * p.xi + cfg.lambda_j * p.j * p.j
}

/// NLL without the gradient; needs one factorization and one solve.
pub(crate) fn nll_only(
    g: &Graph,
    p: &GgmParams,
    em: &EmpiricalMoments,
    cfg: &LearnConfig,
) -> Result<f64> {
    let moments = exact_moments(g, p)?;
    let n = g.vertex_count() as f64;
    let log_z = 0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * moments.factor().log_det()
        + 0.5 * p.h.dot(moments.mean());
    Ok(-p.h.dot(&em.mean)
        + 0.5 * p.xi * em.total_second()
        + 0.5 * p.j * em.total_edge_sq_diff()
        + log_z
        + regularizer(p, cfg))
}

/// Regularized negative average log-likelihood and its exact gradient.
pub fn nll_and_gradient(
    g: &Graph,
    p: &GgmParams,
    em: &EmpiricalMoments,
    cfg: &LearnConfig,
) -> Result<(f64, NllGradient)> {
    cfg.validate()?;
    let moments = exact_moments(g, p)?;
    let mean = moments.mean();
    let cov = moments.covariance_matrix();
    let n = g.vertex_count() as f64;

    let log_z = 0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * moments.factor().log_det()
        + 0.5 * p.h.dot(mean);
    let nll = -p.h.dot(&em.mean)
        + 0.5 * p.xi * em.total_second()
        + 0.5 * p.j * em.total_edge_sq_diff()
        + log_z
        + regularizer(p, cfg);

    let grad_h = mean - &em.mean + 2.0 * cfg.lambda_h * &p.h;
    let model_second: f64 = (0..g.vertex_count())
        .map(|i| cov[(i, i)] + mean[i] * mean[i])
        .sum();
    let model_edge: f64 = g
        .edges()
        .iter()
        .map(|&(a, b)| {
            let (i, j) = (a as usize, b as usize);
            let md = mean[i] - mean[j];
            cov[(i, i)] + cov[(j, j)] - 2.0 * cov[(i, j)] + md * md
        })
        .sum();
    let grad_xi = 0.5 * (em.total_second() - model_second) + 2.0 * cfg.lambda_xi * p.xi;
    let grad_j = 0.5 * (em.total_edge_sq_diff() - model_edge) + 2.0 * cfg.lambda_j * p.j;

    Ok((
        nll,
        NllGradient {
            h: grad_h,
            xi: grad_xi,
            j: grad_j,
        },
    ))
}

/// Moment-matched starting point: ξ the reciprocal of the pooled data
/// variance, h = ξ ⟨x⟩_D and J = 0 (the exact MLE for an edgeless graph).
pub fn default_init(em: &EmpiricalMoments) -> GgmParams {
    let n = em.mean.len();
    let var: f64 = (0..n)
        .map(|i| (em.second[i] - em.mean[i] * em.mean[i]).max(0.0))
        .sum::<f64>()
        / n as f64;
    let xi = (1.0 / var.max(1e-12)).min(1e9);
    GgmParams {
        h: xi * em.mean.clone(),
        xi,
        j: 0.0,
    }
}

/// Convergence report of a [`fit`] run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    /// Gradient max-abs at the returned parameters.
    pub grad_max_abs: f64,
    /// Regularized NLL at the returned parameters.
    pub nll: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: GgmParams,
    pub report: FitReport,
}

fn project(mut p: GgmParams, cfg: &LearnConfig) -> GgmParams {
    p.xi = p.xi.max(cfg.xi_floor);
    p.j = p.j.max(cfg.j_floor);
    p
}

/// Fits θ = {h, ξ, J} by projected gradient descent with a backtracking line
/// search. Deterministic given (data, cfg, init); on hitting the iteration
/// cap the parameters reached so far are returned with `converged = false`.
pub fn fit(
    g: &Graph,
    data: &DMatrix<f64>,
    cfg: &LearnConfig,
    init: GgmParams,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let em = empirical_moments(data, g)?;
    fit_moments(g, &em, cfg, init)
}

/// [`fit`] against precomputed sufficient statistics.
pub fn fit_moments(
    g: &Graph,
    em: &EmpiricalMoments,
    cfg: &LearnConfig,
    init: GgmParams,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let mut theta = project(init, cfg);
    theta.validate()?;
    let (mut nll, mut grad) = nll_and_gradient(g, &theta, em, cfg)?;
    let mut step = cfg.init_step;
    let mut iterations = 0;

    while grad.max_abs() > cfg.grad_tolerance && iterations < cfg.max_iterations {
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..70 {
            let cand = project(
                GgmParams {
                    h: &theta.h - alpha * &grad.h,
                    xi: theta.xi - alpha * grad.xi,
                    j: theta.j - alpha * grad.j,
                },
                cfg,
            );
            // Sufficient decrease along the realized (projected) displacement.
            let moved = grad.h.dot(&(&theta.h - &cand.h))
                + grad.xi * (theta.xi - cand.xi)
                + grad.j * (theta.j - cand.j);
            if moved > 0.0 {
                if let Ok(cand_nll) = nll_only(g, &cand, em, cfg) {
                    if cand_nll <= nll - 1e-4 * moved {
                        accepted = Some((cand, cand_nll, alpha));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((cand, cand_nll, used)) = accepted else {
            break; // no admissible decrease left at this point
        };
        theta = cand;
        nll = cand_nll;
        step = (used * 2.0).clamp(1e-12, 1e6);
        let (_, new_grad) = nll_and_gradient(g, &theta, em, cfg)?;
        grad = new_grad;
        iterations += 1;
    }

    Ok(FitOutcome {
        params: theta,
        report: FitReport {
            converged: grad.max_abs() <= cfg.grad_tolerance,
            iterations,
            grad_max_abs: grad.max_abs(),
            nll,
        },
    })
}
