//! Closed-form performance analysis on the fully-connected model, and its
//! Monte Carlo validation.
//!
//! Structure is dropped here: the data-generating ("prior") model couples all
//! vertex pairs with strength J/n, and reconstruction runs under a possibly
//! mismatched model with parameters {β = h + ε, ξ₀, J₀/n}. Biases h and model
//! errors ε are drawn per vertex from distributions with means μ_h, μ_ε and
//! standard deviations σ_h, σ_ε. After averaging over observations and bias
//! draws, in the large-n limit at fixed missing rate p the reconstruction
//! error takes the closed form
//!
//! ```text
//! E = 1/(ξ+J) + ( σ_h/(ξ+J) − σ_h/(ξ₀+J₀) )²  +  σ_ε²/(ξ₀+J₀)²
//!     + ( ((ξ−ξ₀) μ_h + ξ μ_ε) / (ξ (ξ₀ + (1−p) J₀)) )²,
//! ```
//!
//! a sum of the irreducible conditional variance 1/(ξ+J) plus one squared
//! term per kind of model error. Only the last term depends on p, so the
//! missing rate matters exactly when bias or variance errors are present, and
//! the minimum E_min = 1/(ξ+J) is reached at a matched model.
//!
//! The finite-n quantities behind the limit — the free energy of the prior
//! and the moments of both models — are exact at every n (the Gaussian
//! integrals are done in closed form), which is what the matrix-oracle tests
//! check. [`mc_mse`] estimates E for finite n with no recourse to any of
//! those formulas: it samples the prior, masks, reconstructs with the
//! iterative solver and scores the error, giving an independent check of the
//! algebra.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{mse, split_mix};
use crate::ggm::{precision_matrix, GgmParams, Observation, PrecisionFactor};
use crate::graph::{make_complete, Graph};
use crate::inference::{reconstruct_mfe, MfeConfig};

/// Prior parameters (J, ξ), reconstruction-model parameters (J₀, ξ₀), the
/// first two moments of the bias and bias-error distributions, and the
/// missing rate p.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSetup {
    pub j: f64,
    pub xi: f64,
    pub j0: f64,
    pub xi0: f64,
    pub mu_h: f64,
    pub sigma_h: f64,
    pub mu_eps: f64,
    pub sigma_eps: f64,
    pub p: f64,
}

impl AnalysisSetup {
    /// A matched setup: reconstruction model equal to the prior, no bias
    /// error.
    pub fn matched(j: f64, xi: f64, mu_h: f64, sigma_h: f64, p: f64) -> Self {
        Self {
            j,
            xi,
            j0: j,
            xi0: xi,
            mu_h,
            sigma_h,
            mu_eps: 0.0,
            sigma_eps: 0.0,
            p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !positive(self.xi) || !positive(self.xi0) {
            return bad(format!(
                "xi and xi0 must be > 0, got {} and {}",
                self.xi, self.xi0
            ));
        }
        if !nonneg(self.j) || !nonneg(self.j0) {
            return bad(format!(
                "j and j0 must be >= 0, got {} and {}",
                self.j, self.j0
            ));
        }
        if !nonneg(self.sigma_h) || !nonneg(self.sigma_eps) {
            return bad("sigma_h and sigma_eps must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p must lie in [0, 1], got {}", self.p));
        }
        Ok(())
    }
}

/// The averaged reconstruction error E in the thermodynamic limit.
pub fn analytic_mse(s: &AnalysisSetup) -> Result<f64> {
    s.validate()?;
    let var_term = s.sigma_h / (s.xi + s.j) - s.sigma_h / (s.xi0 + s.j0);
    let eps_term = s.sigma_eps / (s.xi0 + s.j0);
    let bias_num = (s.xi - s.xi0) * s.mu_h + s.xi * s.mu_eps;
    let bias_term = bias_num / (s.xi * (s.xi0 + (1.0 - s.p) * s.j0));
    Ok(1.0 / (s.xi + s.j) + var_term * var_term + eps_term * eps_term + bias_term * bias_term)
}

/// The minimum of E over reconstruction models: 1/(ξ+J), reached exactly at
/// a matched model (J₀ = J, ξ₀ = ξ, μ_ε = σ_ε = 0).
pub fn analytic_mse_min(s: &AnalysisSetup) -> Result<f64> {
    s.validate()?;
    Ok(1.0 / (s.xi + s.j))
}

/// Free energy per variable, −(1/n) ln Z, of the fully-connected prior at
/// finite n:
///
/// ```text
/// F = −1/(2n) ln((ξ+J)/ξ) − ½ ln(2π/(ξ+J))
///     − 1/(2n(ξ+J)) Σ_i h_i² − J/(2n²(ξ+J)ξ) (Σ_i h_i)².
/// ```
pub fn prior_free_energy(n: usize, j: f64, xi: f64, h: &[f64]) -> Result<f64> {
    check_fc_params(n, j, xi)?;
    if h.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: h.len(),
        });
    }
    let nf = n as f64;
    let sum: f64 = h.iter().sum();
    let sum_sq: f64 = h.iter().map(|v| v * v).sum();
    Ok(-1.0 / (2.0 * nf) * ((xi + j) / xi).ln()
        - 0.5 * (2.0 * std::f64::consts::PI / (xi + j)).ln()
        - sum_sq / (2.0 * nf * (xi + j))
        - j * sum * sum / (2.0 * nf * nf * (xi + j) * xi))
}

fn check_fc_params(n: usize, j: f64, xi: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParams("n must be >= 1".into()));
    }
    if !xi.is_finite() || xi <= 0.0 {
        return Err(Error::InvalidParams(format!("xi must be > 0, got {xi}")));
    }
    if !j.is_finite() || j < 0.0 {
        return Err(Error::InvalidParams(format!("j must be >= 0, got {j}")));
    }
    Ok(())
}

/// Closed-form covariance of the fully-connected prior:
/// Cov(x_i, x_j) = δ_ij/(ξ+J) + J/(n(ξ+J)ξ), identical for every pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcCovariance {
    pub n: usize,
    pub j: f64,
    pub xi: f64,
}

impl FcCovariance {
    pub fn entry(&self, i: usize, k: usize) -> f64 {
        let shared = self.j / (self.n as f64 * (self.xi + self.j) * self.xi);
        if i == k {
            1.0 / (self.xi + self.j) + shared
        } else {
            shared
        }
    }
}

/// First and second moments of the fully-connected prior at finite n:
/// ⟨x_i⟩ = h_i/(ξ+J) + J Σ_j h_j / (n(ξ+J)ξ), covariance as [`FcCovariance`].
pub fn prior_moments_fc(
    n: usize,
    j: f64,
    xi: f64,
    h: &[f64],
) -> Result<(DVector<f64>, FcCovariance)> {
    check_fc_params(n, j, xi)?;
    if h.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: h.len(),
        });
    }
    let sum: f64 = h.iter().sum();
    let shift = j * sum / (n as f64 * (xi + j) * xi);
    let means = DVector::from_fn(n, |i, _| h[i] / (xi + j) + shift);
    Ok((means, FcCovariance { n, j, xi }))
}

/// Conditional means of the fully-connected reconstruction model over a
/// missing set of size t (1 ≤ t ≤ n−1), given the observed-field value
/// f = (J₀/n) Σ_{i ∈ O} x_i:
///
/// ```text
/// ⟨x_i⟩ = (β_i + f)/(ξ₀+J₀) + p J₀ Σ_{j∈M} (β_j + f) / (t (ξ₀+J₀)(ξ₀+(1−p)J₀)),
/// ```
///
/// with p = t/n. Exact at finite n.
pub fn conditional_moments_fc(
    n: usize,
    t: usize,
    j0: f64,
    xi0: f64,
    beta: &[f64],
    f_obs: f64,
) -> Result<DVector<f64>> {
    check_fc_params(n, j0, xi0)?;
    if t < 1 || t >= n {
        return Err(Error::InvalidParams(format!(
            "missing count t must satisfy 1 <= t <= n-1, got t = {t}, n = {n}"
        )));
    }
    if beta.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            got: beta.len(),
        });
    }
    let p = t as f64 / n as f64;
    let total: f64 = beta.iter().map(|b| b + f_obs).sum();
    let shift = p * j0 * total / (t as f64 * (xi0 + j0) * (xi0 + (1.0 - p) * j0));
    Ok(DVector::from_fn(t, |i, _| {
        (beta[i] + f_obs) / (xi0 + j0) + shift
    }))
}

/// Reconstructed value of one missing vertex in the thermodynamic limit:
///
/// ```text
/// x* = (β_i + f)/(ξ₀+J₀) + p J₀ (μ_h + μ_ε + f) / ((ξ₀+J₀)(ξ₀+(1−p)J₀)).
/// ```
pub fn thermo_reconstruction(s: &AnalysisSetup, beta_i: f64, f_obs: f64) -> f64 {
    (beta_i + f_obs) / (s.xi0 + s.j0)
        + s.p * s.j0 * (s.mu_h + s.mu_eps + f_obs) / ((s.xi0 + s.j0) * (s.xi0 + (1.0 - s.p) * s.j0))
}

/// System size, ensemble size and seed for the finite-n Monte Carlo estimate.
/// Bias and bias-error draws are Gaussian with the setup's means and standard
/// deviations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
}

/// Monte Carlo estimate with its standard error across trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Reusable state for Monte Carlo runs that share the same prior: the
/// fully-connected graph and the Cholesky factor of the prior precision
/// (which depends on ξ and J but not on the per-trial biases). Building it
/// for n = 4000 takes a few seconds; reuse it across setups and grid points.
pub struct McContext {
    graph: Graph,
    factor: PrecisionFactor,
    n: usize,
    xi: f64,
    j: f64,
}

impl McContext {
    pub fn new(n: usize, xi: f64, j: f64) -> Result<Self> {
        check_fc_params(n.max(1), j, xi)?;
        if n < 2 {
            return Err(Error::InvalidParams("Monte Carlo needs n >= 2".into()));
        }
        let graph = make_complete(n);
        let params = GgmParams::uniform(n, 0.0, xi, j / n as f64)?;
        let factor = PrecisionFactor::new(precision_matrix(&graph, &params)?)?;
        Ok(Self {
            graph,
            factor,
            n,
            xi,
            j,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn missing_count(p: f64, n: usize) -> usize {
    (p * n as f64).ceil() as usize
}

/// Estimates the averaged reconstruction error at finite n.
///
/// Each trial draws fresh biases h ~ N(μ_h, σ_h²) and errors ε ~ N(μ_ε, σ_ε²),
/// draws one exact sample from the fully-connected prior, masks ⌈p·n⌉
/// uniformly random vertices and reconstructs them under the (possibly
/// mismatched) model with β = h + ε. Reconstruction runs the mean-field
/// sweep, which agrees with the exact conditional mean far below Monte Carlo
/// resolution and shares nothing with the closed-form averaging above.
/// Trials use per-index RNG streams, so results are reproducible for a fixed
/// seed.
pub fn mc_mse(s: &AnalysisSetup, cfg: &McConfig) -> Result<McEstimate> {
    let ctx = McContext::new(cfg.n, s.xi, s.j)?;
    mc_mse_in(&ctx, s, cfg)
}

/// [`mc_mse`] against a prebuilt [`McContext`] (must match the setup's prior
/// parameters and the config's n exactly).
pub fn mc_mse_in(ctx: &McContext, s: &AnalysisSetup, cfg: &McConfig) -> Result<McEstimate> {
    s.validate()?;
    if cfg.trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    if ctx.n != cfg.n || ctx.xi != s.xi || ctx.j != s.j {
        return Err(Error::InvalidInput(
            "Monte Carlo context does not match the setup's prior (n, xi, j)".into(),
        ));
    }
    let n = cfg.n;
    let t = missing_count(s.p, n);
    if t < 1 || t >= n {
        return Err(Error::InvalidParams(format!(
            "ceil(p n) = {t} leaves no missing or no observed vertices at n = {n}"
        )));
    }

    let errors: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(trial as u64);
            let h = DVector::from_fn(n, |_, _| {
                s.mu_h + s.sigma_h * rng.sample::<f64, _>(StandardNormal)
            });
            let eps = DVector::from_fn(n, |_, _| {
                s.mu_eps + s.sigma_eps * rng.sample::<f64, _>(StandardNormal)
            });
            let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            // Exact prior sample: x = L⁻ᵀ (L⁻¹ h + g).
            let truth = ctx
                .factor
                .solve_transposed_half(&(ctx.factor.solve_half(&h) + noise));
            let missing = rand::seq::index::sample(&mut rng, n, t).into_vec();
            let obs = Observation::new(truth.clone(), missing)?;
            let model = GgmParams::new(h + eps, s.xi0, s.j0 / n as f64)?;
            let recon = reconstruct_mfe(&ctx.graph, &model, &obs, &MfeConfig::default())?;
            if !recon.converged {
                return Err(Error::NonConvergence(format!(
                    "mean-field sweep at trial {trial}: residual {}",
                    recon.residual
                )));
            }
            mse(&truth, &recon, obs.missing())
        })
        .collect::<Result<Vec<_>>>()?;

    let tn = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / tn;
    let stderr = if errors.len() > 1 {
        let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (tn - 1.0);
        (var / tn).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        stderr,
        trials: errors.len(),
    })
}

/// Which quantity the error curve varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// J₀ = J + r: coupling error r on the horizontal axis.
    InteractionError,
    /// Missing rate p on the horizontal axis.
    MissingRate,
}

/// One point of the error curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub x: f64,
    pub analytic: f64,
    pub mc: Option<McEstimate>,
}

/// Tabulated error curve: analytic E per grid point, with an optional Monte
/// Carlo column.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisCurve {
    pub variable: SweepVariable,
    pub rows: Vec<CurveRow>,
}

fn setup_at(s: &AnalysisSetup, variable: SweepVariable, x: f64) -> AnalysisSetup {
    let mut out = *s;
    match variable {
        SweepVariable::InteractionError => out.j0 = s.j + x,
        SweepVariable::MissingRate => out.p = x,
    }
    out
}

/// Evaluates the error curve over `grid`, optionally validating each point by
/// Monte Carlo. All grid points share one prior factorization.
pub fn curve(
    s: &AnalysisSetup,
    variable: SweepVariable,
    grid: &[f64],
    mc: Option<&McConfig>,
) -> Result<AnalysisCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("grid must be nonempty".into()));
    }
    let ctx = match mc {
        Some(cfg) => Some(McContext::new(cfg.n, s.xi, s.j)?),
        None => None,
    };
    let mut rows = Vec::with_capacity(grid.len());
    for (k, &x) in grid.iter().enumerate() {
        let point = setup_at(s, variable, x);
        let analytic = analytic_mse(&point)?;
        let mc_est = match (&ctx, mc) {
            (Some(ctx), Some(cfg)) => {
                let point_cfg = McConfig {
                    seed: split_mix(cfg.seed ^ ((k as u64) << 40)),
                    ..*cfg
                };
                Some(mc_mse_in(ctx, &point, &point_cfg)?)
            }
            _ => None,
        };
        rows.push(CurveRow {
            x,
            analytic,
            mc: mc_est,
        });
    }
    Ok(AnalysisCurve { variable, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ggm::{conditional_params, exact_moments, sample};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fig8_setup(r: f64) -> AnalysisSetup {
        AnalysisSetup {
            j: 1.0,
            xi: 0.2,
            j0: 1.0 + r,
            xi0: 0.2,
            mu_h: 1.0,
            sigma_h: 0.5,
            mu_eps: 0.0,
            sigma_eps: 0.0,
            p: 0.5,
        }
    }

    fn fig9_setup(p: f64) -> AnalysisSetup {
        AnalysisSetup {
            j: 1.0,
            xi: 0.2,
            j0: 1.0,
            xi0: 0.4,
            mu_h: 1.0,
            sigma_h: 0.5,
            mu_eps: 0.1,
            sigma_eps: 0.0,
            p,
        }
    }

    #[test]
    fn matched_error_is_min_and_p_free() {
        for p in [0.0, 0.3, 0.9] {
            let s = AnalysisSetup::matched(1.0, 0.2, 1.0, 0.5, p);
            assert_relative_eq!(analytic_mse(&s).unwrap(), 1.0 / 1.2, epsilon = 1e-15);
            assert_relative_eq!(analytic_mse_min(&s).unwrap(), 1.0 / 1.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn coupling_error_spot_values() {
        // Independent evaluation: only the σ_h term reacts to r here.
        let e = |r: f64| {
            let d = 0.5 / 1.2 - 0.5 / (1.2 + r);
            1.0 / 1.2 + d * d
        };
        for (r, approx_value) in [(1.0, 0.869), (-0.5, 0.922), (-1.0, 5.17)] {
            let got = analytic_mse(&fig8_setup(r)).unwrap();
            assert_relative_eq!(got, e(r), epsilon = 1e-14);
            assert!((got - approx_value).abs() < 5e-3, "E({r}) = {got}");
        }
    }

    #[test]
    fn bias_error_spot_values() {
        // ((ξ−ξ₀)μ_h + ξμ_ε)/(ξ(ξ₀+(1−p)J₀)) = −0.18/(0.2(1.4−p)) here.
        let e = |p: f64| {
            let v = 0.5 / 1.2 - 0.5 / 1.4;
            let b = 0.9 / (1.4 - p);
            1.0 / 1.2 + v * v + b * b
        };
        let e0 = analytic_mse(&fig9_setup(0.0)).unwrap();
        let e1 = analytic_mse(&fig9_setup(1.0)).unwrap();
        assert_relative_eq!(e0, e(0.0), epsilon = 1e-14);
        assert_relative_eq!(e1, e(1.0), epsilon = 1e-14);
        assert!((e0 - 1.25).abs() < 5e-3, "E(0) = {e0}");
        assert!((e1 - 5.90).abs() < 5e-3, "E(1) = {e1}");
        let mut prev = e0;
        for k in 1..=20 {
            let p = k as f64 / 20.0;
            let cur = analytic_mse(&fig9_setup(p)).unwrap();
            assert!(cur > prev, "E not increasing at p = {p}");
            prev = cur;
        }
    }

    #[test]
    fn only_last_term_depends_on_p() {
        let s = AnalysisSetup {
            j: 1.3,
            xi: 0.4,
            j0: 0.8,
            xi0: 0.9,
            mu_h: 0.7,
            sigma_h: 0.3,
            mu_eps: 0.2,
            sigma_eps: 0.1,
            p: 0.0,
        };
        let last = |p: f64| {
            let num = (s.xi - s.xi0) * s.mu_h + s.xi * s.mu_eps;
            let b = num / (s.xi * (s.xi0 + (1.0 - p) * s.j0));
            b * b
        };
        let base = analytic_mse(&s).unwrap() - last(0.0);
        for p in [0.1, 0.5, 0.95] {
            let mut sp = s;
            sp.p = p;
            assert_relative_eq!(analytic_mse(&sp).unwrap() - last(p), base, epsilon = 1e-13);
        }
    }

    #[test]
    fn free_energy_single_vertex_oracle() {
        // n = 1 has no pairs, so F must equal the 1-D Gaussian value
        // −½ ln(2π/ξ) − h²/(2ξ) for every J.
        for j in [0.0, 0.7, 3.0] {
            let f = prior_free_energy(1, j, 1.3, &[0.8]).unwrap();
            let oracle = -0.5 * (2.0 * std::f64::consts::PI / 1.3).ln() - 0.8 * 0.8 / (2.0 * 1.3);
            assert_relative_eq!(f, oracle, epsilon = 1e-14);
        }
    }

    #[test]
    fn free_energy_matches_dense_log_det_oracle() {
        // −(1/n) ln Z from a dense factorization of the same Gaussian.
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for n in [2usize, 5, 17, 50] {
            let (xi, j) = (0.6, 1.4);
            let h: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.5)).collect();
            let g = make_complete(n);
            let params = GgmParams::new(DVector::from_vec(h.clone()), xi, j / n as f64).unwrap();
            let factor = PrecisionFactor::new(precision_matrix(&g, &params).unwrap()).unwrap();
            let mean = factor.solve(&params.h);
            let log_z = 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * factor.log_det()
                + 0.5 * params.h.dot(&mean);
            let oracle = -log_z / n as f64;
            assert_relative_eq!(
                prior_free_energy(n, j, xi, &h).unwrap(),
                oracle,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn free_energy_derivatives_give_means() {
        // −n ∂F/∂h_i equals the closed-form mean, by central differences.
        let n = 10;
        let (xi, j) = (0.5, 1.2);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.8)).collect();
        let (means, _) = prior_moments_fc(n, j, xi, &h).unwrap();
        let step = 1e-6;
        for i in 0..n {
            let mut hi = h.clone();
            let mut lo = h.clone();
            hi[i] += step;
            lo[i] -= step;
            let fd = -(n as f64)
                * (prior_free_energy(n, j, xi, &hi).unwrap()
                    - prior_free_energy(n, j, xi, &lo).unwrap())
                / (2.0 * step);
            assert_relative_eq!(fd, means[i], max_relative = 1e-5);
        }
    }

    #[test]
    fn prior_moments_decoupled_limit() {
        let h = [0.3, -0.2, 0.9];
        let (means, cov) = prior_moments_fc(3, 0.0, 2.0, &h).unwrap();
        for i in 0..3 {
            assert_relative_eq!(means[i], h[i] / 2.0, epsilon = 1e-15);
            for k in 0..3 {
                let expect = if i == k { 0.5 } else { 0.0 };
                assert_relative_eq!(cov.entry(i, k), expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn prior_moments_uniform_bias_simplifies() {
        // h = c everywhere: every mean is c/(ξ+J) + Jc/((ξ+J)ξ) = c/ξ.
        let c = 0.85;
        let (xi, j) = (0.7, 2.1);
        let (means, _) = prior_moments_fc(12, j, xi, &[c; 12]).unwrap();
        for i in 0..12 {
            assert_relative_eq!(means[i], c / xi, epsilon = 1e-12);
        }
    }

    #[test]
    fn prior_moments_match_matrix_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for n in [3usize, 10, 50] {
            let (xi, j) = (0.35, 1.6);
            let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
            let g = make_complete(n);
            let params = GgmParams::new(DVector::from_vec(h.clone()), xi, j / n as f64).unwrap();
            let m = exact_moments(&g, &params).unwrap();
            let cov = m.covariance_matrix();
            let (means, fc_cov) = prior_moments_fc(n, j, xi, &h).unwrap();
            for i in 0..n {
                assert_relative_eq!(means[i], m.mean()[i], max_relative = 1e-10);
                for k in 0..n {
                    assert_relative_eq!(fc_cov.entry(i, k), cov[(i, k)], max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn conditional_moments_preconditions() {
        assert!(conditional_moments_fc(5, 5, 1.0, 0.5, &[0.0; 5], 0.1).is_err());
        assert!(conditional_moments_fc(5, 0, 1.0, 0.5, &[], 0.1).is_err());
        // J₀ = 0 decouples: ⟨x_i⟩ = β_i / ξ₀ (f is multiplied by J₀ upstream,
        // so a zero observed field goes with it).
        let means = conditional_moments_fc(6, 3, 0.0, 0.8, &[0.4, -0.2, 1.0], 0.0).unwrap();
        for (i, b) in [0.4, -0.2, 1.0].iter().enumerate() {
            assert_relative_eq!(means[i], b / 0.8, epsilon = 1e-14);
        }
    }

    #[test]
    fn conditional_moments_match_matrix_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for n in [3usize, 10, 50] {
            let (xi0, j0) = (0.45, 1.1);
            let t = (n / 3).max(1);
            let g = make_complete(n);
            let beta: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
            let params =
                GgmParams::new(DVector::from_vec(beta.clone()), xi0, j0 / n as f64).unwrap();
            let values = DVector::from_vec(y.clone());
            let obs = Observation::new(values, 0..t).unwrap();
            let (sub, bias) = conditional_params(&g, &params, &obs).unwrap();
            let oracle = PrecisionFactor::new(sub).unwrap().solve(&bias);

            let f_obs = j0 / n as f64 * y[t..].iter().sum::<f64>();
            let means = conditional_moments_fc(n, t, j0, xi0, &beta[0..t], f_obs).unwrap();
            for k in 0..t {
                assert_relative_eq!(means[k], oracle[k], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn thermo_limit_of_conditional_moments() {
        // With every β_j at its mean, the finite-n conditional mean converges
        // to the thermodynamic-limit formula; at n = 10⁴ they agree within 1%.
        let s = fig9_setup(0.5);
        let n = 10_000;
        let t = missing_count(s.p, n);
        let beta = vec![s.mu_h + s.mu_eps; t];
        // Observed field at its prior average: f → (1−p) J₀ μ_h / ξ.
        let f_obs = (1.0 - s.p) * s.j0 * s.mu_h / s.xi;
        let finite = conditional_moments_fc(n, t, s.j0, s.xi0, &beta, f_obs).unwrap();
        let limit = thermo_reconstruction(&s, s.mu_h + s.mu_eps, f_obs);
        assert!(
            (finite[0] - limit).abs() / limit.abs() < 0.01,
            "finite {} vs limit {limit}",
            finite[0]
        );
        // p → 0 kills the second term.
        let mut s0 = s;
        s0.p = 0.0;
        assert_relative_eq!(
            thermo_reconstruction(&s0, 0.7, 0.3),
            (0.7 + 0.3) / (s.xi0 + s.j0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn averaged_reconstruction_matches_hand_expansion() {
        // Averaging the limit formula over the bias distribution and the
        // observed field must reproduce the expanded form
        // β̄/(ξ₀+J₀) + (J₀/(ξ(ξ₀+J₀))) [(1−p)μ_h + p(ξ(μ_h+μ_ε)+(1−p)J₀μ_h)/(ξ₀+(1−p)J₀)].
        for s in [fig8_setup(0.4), fig9_setup(0.3)] {
            let f_bar = (1.0 - s.p) * s.j0 * s.mu_h / s.xi;
            let got = thermo_reconstruction(&s, s.mu_h + s.mu_eps, f_bar);
            let expanded = (s.mu_h + s.mu_eps) / (s.xi0 + s.j0)
                + s.j0 / (s.xi * (s.xi0 + s.j0))
                    * ((1.0 - s.p) * s.mu_h
                        + s.p * (s.xi * (s.mu_h + s.mu_eps) + (1.0 - s.p) * s.j0 * s.mu_h)
                            / (s.xi0 + (1.0 - s.p) * s.j0));
            assert_relative_eq!(got, expanded, epsilon = 1e-13);
        }
    }

    #[test]
    fn observed_field_variance_decays_like_inverse_n() {
        // Sample variance of f = (J₀/n) Σ_{i∈O} x_i across prior draws at
        // fixed h scales as c/n: the log-log slope is −1 ± 0.2.
        let (xi, j) = (0.2, 1.0);
        let p = 0.5;
        let trials = 150;
        let mut points = Vec::new();
        for (k, n) in [200usize, 400, 800, 1600].into_iter().enumerate() {
            let g = make_complete(n);
            let mut rng = ChaCha12Rng::seed_from_u64(60 + k as u64);
            let h = DVector::from_fn(n, |_, _| 1.0 + 0.5 * rng.sample::<f64, _>(StandardNormal));
            let params = GgmParams::new(h, xi, j / n as f64).unwrap();
            let draws = sample(&g, &params, trials, 77).unwrap();
            let observed = (n / 2)..n; // fixed O with |O| = (1−p) n
            let _ = p;
            let fs: Vec<f64> = (0..trials)
                .map(|r| observed.clone().map(|i| draws[(r, i)]).sum::<f64>() * j / n as f64)
                .collect();
            let mean = fs.iter().sum::<f64>() / trials as f64;
            let var =
                fs.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / (trials as f64 - 1.0);
            points.push(((n as f64).ln(), var.ln()));
        }
        let m = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
        let my = points.iter().map(|p| p.1).sum::<f64>() / m;
        let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
        assert!(
            (-1.2..=-0.8).contains(&slope),
            "variance of f decays with slope {slope}"
        );
    }

    #[test]
    fn mc_is_deterministic() {
        let s = AnalysisSetup::matched(1.0, 0.2, 1.0, 0.5, 0.5);
        let cfg = McConfig {
            n: 60,
            trials: 1,
            seed: 5,
        };
        let a = mc_mse(&s, &cfg).unwrap();
        let b = mc_mse(&s, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials, 1);
        assert_eq!(a.stderr, 0.0);
    }

    #[test]
    fn mc_matches_analytic_for_matched_model() {
        let s = AnalysisSetup::matched(1.0, 0.2, 1.0, 0.5, 0.5);
        let cfg = McConfig {
            n: 2000,
            trials: 200,
            seed: 42,
        };
        let est = mc_mse(&s, &cfg).unwrap();
        let expect = analytic_mse_min(&s).unwrap();
        assert!(
            (est.mean - expect).abs() < 3.0 * est.stderr,
            "estimate {} ± {} vs {}",
            est.mean,
            est.stderr,
            expect
        );
    }

    #[test]
    fn mc_rejects_degenerate_missing_counts() {
        let mut s = AnalysisSetup::matched(1.0, 0.2, 1.0, 0.5, 0.0);
        let cfg = McConfig {
            n: 50,
            trials: 2,
            seed: 1,
        };
        assert!(mc_mse(&s, &cfg).is_err());
        s.p = 1.0;
        assert!(mc_mse(&s, &cfg).is_err());
    }

    #[test]
    fn curve_minimum_sits_at_matched_coupling() {
        let s = fig8_setup(0.0);
        let grid: Vec<f64> = (-20..=20).map(|k| k as f64 * 0.05).collect();
        let c = curve(&s, SweepVariable::InteractionError, &grid, None).unwrap();
        let (argmin, min_row) = c
            .rows
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.analytic.total_cmp(&b.1.analytic))
            .unwrap();
        assert_eq!(c.rows[argmin].x, 0.0);
        assert_relative_eq!(min_row.analytic, 1.0 / 1.2, epsilon = 1e-12);
        // Asymmetry: an underestimated coupling hurts more.
        for k in 1..=20 {
            let r = k as f64 * 0.05;
            let hi = analytic_mse(&fig8_setup(r)).unwrap();
            let lo = analytic_mse(&fig8_setup(-r)).unwrap();
            assert!(lo > hi, "asymmetry violated at r = {r}");
        }
    }

    #[test]
    fn curve_grows_with_missing_rate_under_bias_error() {
        let s = fig9_setup(0.0);
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
        let c = curve(&s, SweepVariable::MissingRate, &grid, None).unwrap();
        for w in c.rows.windows(2) {
            assert!(w[1].analytic > w[0].analytic);
        }
    }

    #[test]
    fn curve_with_mc_column() {
        let s = AnalysisSetup::matched(1.0, 0.2, 1.0, 0.5, 0.5);
        let cfg = McConfig {
            n: 300,
            trials: 60,
            seed: 11,
        };
        let c = curve(
            &s,
            SweepVariable::InteractionError,
            &[-0.2, 0.0, 0.4],
            Some(&cfg),
        )
        .unwrap();
        for row in &c.rows {
            let est = row.mc.unwrap();
            // Loose: small n and few trials, just confirm the columns track.
            assert!(
                (est.mean - row.analytic).abs() < 5.0 * est.stderr + 0.05,
                "r = {}: {} ± {} vs {}",
                row.x,
                est.mean,
                est.stderr,
                row.analytic
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// E is a sum of E_min and squares, so E ≥ E_min with equality exactly
        /// at a matched model.
        #[test]
        fn error_dominates_minimum(j in 0.0f64..3.0, xi in 0.05f64..2.0,
                                   j0 in 0.0f64..3.0, xi0 in 0.05f64..2.0,
                                   mu_h in -1.5f64..1.5, sigma_h in 0.0f64..1.0,
                                   mu_eps in -1.0f64..1.0, sigma_eps in 0.0f64..1.0,
                                   p in 0.0f64..1.0) {
            let s = AnalysisSetup { j, xi, j0, xi0, mu_h, sigma_h, mu_eps, sigma_eps, p };
            let e = analytic_mse(&s).unwrap();
            let e_min = analytic_mse_min(&s).unwrap();
            prop_assert!(e >= e_min - 1e-15);
            let matched = AnalysisSetup::matched(j, xi, mu_h, sigma_h, p);
            prop_assert!((analytic_mse(&matched).unwrap() - e_min).abs() < 1e-15);
        }
    }
}
