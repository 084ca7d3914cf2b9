//! The Gaussian graphical model on a graph.
//!
//! The model density is
//!
//! ```text
//! P(x | θ) ∝ exp( Σ_i h_i x_i − ξ/2 Σ_i x_i² − J/2 Σ_(i,j)∈E (x_i − x_j)² )
//! ```
//!
//! with parameters θ = {h, ξ, J}. Expanding the quadratic form gives a
//! multivariate Gaussian with precision matrix ξ I + J L (L the graph
//! Laplacian): diagonal entries ξ + |∂(i)| J, off-diagonal −J on edges and 0
//! elsewhere. Since ξ > 0 and J ≥ 0 keep the precision positive definite, the
//! model is well defined for every graph, and the zero pattern of the
//! precision is exactly the non-adjacency pattern of the graph — the spatial
//! Markov property.
//!
//! This module assembles the precision matrix, derives exact first and second
//! moments through a Cholesky factorization, conditions on an
//! observed/missing vertex partition, and draws exact samples.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Parameters θ = {h, ξ, J} of the model: one bias per vertex, a variance
/// scale ξ > 0 and an edge coupling J ≥ 0 shared by all edges.
#[derive(Debug, Clone, PartialEq)]
pub struct GgmParams {
    pub h: DVector<f64>,
    pub xi: f64,
    pub j: f64,
}

impl GgmParams {
    pub fn new(h: DVector<f64>, xi: f64, j: f64) -> Result<Self> {
        let p = Self { h, xi, j };
        p.validate()?;
        Ok(p)
    }

    /// Convenience constructor with a constant bias.
    pub fn uniform(n: usize, h: f64, xi: f64, j: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, h), xi, j)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.xi.is_finite() || self.xi <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "xi must be > 0, got {}",
                self.xi
            )));
        }
        if !self.j.is_finite() || self.j < 0.0 {
            return Err(Error::InvalidParams(format!(
                "j must be >= 0, got {}",
                self.j
            )));
        }
        if self.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("h contains a non-finite entry".into()));
        }
        Ok(())
    }

    fn check_against(&self, g: &Graph) -> Result<()> {
        self.validate()?;
        if self.h.len() != g.vertex_count() {
            return Err(Error::DimensionMismatch {
                expected: g.vertex_count(),
                got: self.h.len(),
            });
        }
        Ok(())
    }
}

/// A value vector over all vertices together with the observed/missing
/// partition. Entries on the missing set are carried along but ignored as
/// inputs; `y` is the restriction of `values` to the observed set.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    values: DVector<f64>,
    missing: Vec<usize>,
    mask: Vec<bool>,
}

impl Observation {
    /// `missing` is deduplicated and sorted; indices must address vertices.
    pub fn new(values: DVector<f64>, missing: impl IntoIterator<Item = usize>) -> Result<Self> {
        let n = values.len();
        let mut idx: Vec<usize> = missing.into_iter().collect();
        idx.sort_unstable();
        idx.dedup();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        let mut mask = vec![false; n];
        for &i in &idx {
            mask[i] = true;
        }
        Ok(Self {
            values,
            missing: idx,
            mask,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Sorted missing set M.
    pub fn missing(&self) -> &[usize] {
        &self.missing
    }

    /// Sorted observed set O = V \ M.
    pub fn observed(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.mask[i]).collect()
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.mask[i]
    }
}

/// Cholesky factor L of a precision matrix P = L Lᵀ.
///
/// Covariance entries are recovered through triangular solves against the
/// factor; the full dense inverse is never required by the solvers, though
/// [`PrecisionFactor::covariance_matrix`] will materialize it for moderate n.
#[derive(Debug, Clone)]
pub struct PrecisionFactor {
    l: DMatrix<f64>,
}

impl PrecisionFactor {
    /// Factorizes a symmetric positive-definite matrix, consuming it.
    pub fn new(precision: DMatrix<f64>) -> Result<Self> {
        let chol = precision.cholesky().ok_or(Error::Factorization)?;
        Ok(Self { l: chol.unpack() })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves P x = b.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let w = self
            .l
            .solve_lower_triangular(b)
            .expect("factor has positive diagonal");
        self.l
            .tr_solve_lower_triangular(&w)
            .expect("factor has positive diagonal")
    }

    /// Solves L w = b (forward substitution).
    pub fn solve_half(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("factor has positive diagonal")
    }

    /// Solves Lᵀ x = b (back substitution); maps standard normal noise to a
    /// draw with covariance P⁻¹.
    pub fn solve_transposed_half(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l
            .tr_solve_lower_triangular(b)
            .expect("factor has positive diagonal")
    }

    /// ln det P.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// One covariance entry (P⁻¹)_ij via two forward solves.
    pub fn covariance_entry(&self, i: usize, j: usize) -> f64 {
        let n = self.dim();
        let mut ei = DVector::zeros(n);
        ei[i] = 1.0;
        let wi = self.solve_half(&ei);
        if i == j {
            return wi.dot(&wi);
        }
        let mut ej = DVector::zeros(n);
        ej[j] = 1.0;
        let wj = self.solve_half(&ej);
        wi.dot(&wj)
    }

    /// Dense P⁻¹. Costs O(n³) time and O(n²) memory; intended for moderate n
    /// (learning-scale graphs and test oracles).
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let w = self
            .l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("factor has positive diagonal");
        self.l
            .tr_solve_lower_triangular(&w)
            .expect("factor has positive diagonal")
    }
}

/// Exact mean and covariance access for a model instance.
#[derive(Debug, Clone)]
pub struct GaussianMoments {
    mean: DVector<f64>,
    factor: PrecisionFactor,
}

impl GaussianMoments {
    /// ⟨x⟩, the solution of (ξ I + J L) ⟨x⟩ = h.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Cov(x_i, x_j) on demand.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.factor.covariance_entry(i, j)
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.factor.covariance_entry(i, i)
    }

    /// The full covariance matrix (see [`PrecisionFactor::covariance_matrix`]).
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        self.factor.covariance_matrix()
    }

    pub fn factor(&self) -> &PrecisionFactor {
        &self.factor
    }
}

/// Assembles the precision matrix ξ I + J L of the model on `g`.
pub fn precision_matrix(g: &Graph, p: &GgmParams) -> Result<DMatrix<f64>> {
    p.check_against(g)?;
    let n = g.vertex_count();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = p.xi + g.degree(i) as f64 * p.j;
    }
    for &(i, j) in g.edges() {
        m[(i as usize, j as usize)] = -p.j;
        m[(j as usize, i as usize)] = -p.j;
    }
    Ok(m)
}

/// Exact mean and factorized covariance of the model.
pub fn exact_moments(g: &Graph, p: &GgmParams) -> Result<GaussianMoments> {
    let factor = PrecisionFactor::new(precision_matrix(g, p)?)?;
    let mean = factor.solve(&p.h);
    Ok(GaussianMoments { mean, factor })
}

/// Restricts the model to the missing set of `obs`: returns the sub-precision
/// over M (rows/columns in ascending vertex order) and the effective bias
/// b_i = h_i + J Σ_{j ∈ ∂(i) ∩ O} y_j.
pub fn conditional_params(
    g: &Graph,
    p: &GgmParams,
    obs: &Observation,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    p.check_against(g)?;
    if obs.n() != g.vertex_count() {
        return Err(Error::DimensionMismatch {
            expected: g.vertex_count(),
            got: obs.n(),
        });
    }
    let missing = obs.missing();
    if missing.is_empty() {
        return Err(Error::EmptyMissingSet);
    }
    let t = missing.len();
    let mut pos = vec![usize::MAX; g.vertex_count()];
    for (k, &i) in missing.iter().enumerate() {
        pos[i] = k;
    }
    let mut sub = DMatrix::zeros(t, t);
    let mut bias = DVector::zeros(t);
    for (k, &i) in missing.iter().enumerate() {
        sub[(k, k)] = p.xi + g.degree(i) as f64 * p.j;
        let mut b = p.h[i];
        for &jn in g.neighbors(i) {
            let jn = jn as usize;
            if obs.is_missing(jn) {
                let kk = pos[jn];
                sub[(k, kk)] = -p.j;
            } else {
                b += p.j * obs.values()[jn];
            }
        }
        bias[k] = b;
    }
    Ok((sub, bias))
}

/// Draws `count` i.i.d. exact samples, one per row.
///
/// Each sample k uses its own ChaCha stream derived from `seed`, so the
/// output is bit-identical for a fixed seed regardless of how the work is
/// scheduled across threads.
pub fn sample(g: &Graph, p: &GgmParams, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    let moments = exact_moments(g, p)?;
    let n = g.vertex_count();
    let rows: Vec<DVector<f64>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            moments.mean() + moments.factor().solve_transposed_half(&noise)
        })
        .collect();
    let mut out = DMatrix::zeros(count, n);
    for (k, row) in rows.iter().enumerate() {
        out.row_mut(k).copy_from(&row.transpose());
    }
    Ok(out)
}
