//! Experiment harness: random masking, reconstruction error metrics and the
//! error-versus-missing-rate sweep.
//!
//! The reconstruction error on one observation is the mean square error over
//! the missing set only,
//!
//! ```text
//! MSE = 1/|M| Σ_{i ∈ M} (x_i_data − x_i_recon)²,
//! ```
//!
//! and [`sweep_p`] averages it over randomly drawn masks and held-out samples
//! for each missing probability p, with the standard error across trials.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ggm::{GgmParams, Observation};
use crate::graph::Graph;
use crate::inference::{reconstruct_exact, ReconstructionResult};
use crate::learning::{default_init, empirical_moments, fit_moments, LearnConfig};

/// How the missing set is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskMode {
    /// Each vertex is missing independently with this probability.
    Probability(f64),
    /// A fixed missing set.
    Explicit(Vec<usize>),
}

/// Masking rule plus the seed that makes it reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub mode: MaskMode,
    pub seed: u64,
}

/// The drawn observation together with how many redraws were needed to avoid
/// an empty missing or observed set.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskDraw {
    pub observation: Observation,
    pub redraws: u32,
}

/// Redraw cap: a draw at p strictly inside (0, 1) essentially never needs it,
/// while p = 0 or p = 1 would redraw forever.
pub const MAX_REDRAWS: u32 = 100;

/// Splits the full vector into observed and missing parts.
///
/// Random draws that leave M or O empty are redrawn with an incremented seed,
/// and the number of redraws is reported; after [`MAX_REDRAWS`] failures the
/// draw is abandoned with a degenerate-mask error.
pub fn apply_mask(values: &DVector<f64>, spec: &MaskSpec) -> Result<MaskDraw> {
    let n = values.len();
    match &spec.mode {
        MaskMode::Explicit(indices) => {
            if indices.is_empty() {
                return Err(Error::EmptyMissingSet);
            }
            let obs = Observation::new(values.clone(), indices.iter().copied())?;
            Ok(MaskDraw {
                observation: obs,
                redraws: 0,
            })
        }
        MaskMode::Probability(p) => {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidInput(format!(
                    "missing probability must lie in [0, 1], got {p}"
                )));
            }
            use rand::{Rng, SeedableRng};
            for redraw in 0..MAX_REDRAWS {
                let mut rng =
                    rand_chacha::ChaCha12Rng::seed_from_u64(spec.seed.wrapping_add(redraw as u64));
                let missing: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < *p).collect();
                if !missing.is_empty() && missing.len() < n {
                    let obs = Observation::new(values.clone(), missing)?;
                    return Ok(MaskDraw {
                        observation: obs,
                        redraws: redraw,
                    });
                }
            }
            Err(Error::DegenerateMask {
                p: *p,
                redraws: MAX_REDRAWS,
            })
        }
    }
}

/// Mean square error over the missing set; observed vertices are excluded.
pub fn mse(truth: &DVector<f64>, recon: &ReconstructionResult, missing: &[usize]) -> Result<f64> {
    mse_values(truth, &recon.values, missing)
}

/// [`mse`] against a plain value vector.
pub fn mse_values(truth: &DVector<f64>, recon: &DVector<f64>, missing: &[usize]) -> Result<f64> {
    if truth.len() != recon.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: recon.len(),
        });
    }
    if missing.is_empty() {
        return Err(Error::EmptyMissingSet);
    }
    let mut acc = 0.0;
    for &i in missing {
        if i >= truth.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: truth.len(),
            });
        }
        let d = truth[i] - recon[i];
        acc += d * d;
    }
    Ok(acc / missing.len() as f64)
}

/// Pearson correlation between truth and reconstruction over the missing set.
pub fn correlation(truth: &DVector<f64>, recon: &DVector<f64>, missing: &[usize]) -> Result<f64> {
    if truth.len() != recon.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: recon.len(),
        });
    }
    if missing.len() < 2 {
        return Err(Error::InvalidInput(
            "correlation needs at least two missing vertices".into(),
        ));
    }
    let m = missing.len() as f64;
    let (mut mt, mut mr) = (0.0, 0.0);
    for &i in missing {
        if i >= truth.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: truth.len(),
            });
        }
        mt += truth[i];
        mr += recon[i];
    }
    mt /= m;
    mr /= m;
    let (mut stt, mut srr, mut str_) = (0.0, 0.0, 0.0);
    for &i in missing {
        let dt = truth[i] - mt;
        let dr = recon[i] - mr;
        stt += dt * dt;
        srr += dr * dr;
        str_ += dt * dr;
    }
    if stt == 0.0 || srr == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(str_ / (stt * srr).sqrt())
}

/// Five-stage density quantizer at 0.03-wide intervals: bin 0 covers
/// [0, 0.03), ..., bin 4 covers [0.12, ∞). Values below 0 land in bin 0.
pub fn quantize_density(value: f64) -> u8 {
    if value < 0.0 {
        return 0;
    }
    ((value / 0.03).floor() as i64).clamp(0, 4) as u8
}

/// Whether [`sweep_p`] refits the parameters for each held-out sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefitMode {
    /// Use the supplied parameters for every trial.
    #[default]
    None,
    /// Refit on the data minus the held-out row (cached per held-out index).
    LeaveOneOut,
}

/// Grid, trial count, seeding and refit policy for [`sweep_p`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub p_grid: Vec<f64>,
    pub trials_per_p: usize,
    pub seed: u64,
    pub refit: RefitMode,
    /// Learning configuration used when `refit` is `LeaveOneOut`.
    pub learn: LearnConfig,
}

impl SweepConfig {
    pub fn new(p_grid: Vec<f64>, trials_per_p: usize, seed: u64) -> Self {
        Self {
            p_grid,
            trials_per_p,
            seed,
            refit: RefitMode::None,
            learn: LearnConfig::default(),
        }
    }
}

/// One row of the error-versus-p table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p: f64,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub trials: usize,
}

/// The tabulated error curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub seed: u64,
}

pub(crate) fn split_mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean reconstruction error versus missing probability.
///
/// Trial k at grid point p holds out row `k mod N` of `data` as the truth,
/// masks it at probability p, reconstructs the missing entries with the
/// direct solver and scores the error. Trials run in parallel but each one
/// derives its own seed, so the result is reproducible.
pub fn sweep_p(
    g: &Graph,
    params: &GgmParams,
    data: &DMatrix<f64>,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if data.nrows() < 1 {
        return Err(Error::InvalidInput("need at least one data row".into()));
    }
    if data.ncols() != g.vertex_count() {
        return Err(Error::DimensionMismatch {
            expected: g.vertex_count(),
            got: data.ncols(),
        });
    }
    if cfg.trials_per_p == 0 {
        return Err(Error::InvalidInput("trials_per_p must be >= 1".into()));
    }
    params.validate()?;
    let n_rows = data.nrows();

    // Leave-one-out refits, one per distinct held-out row, computed up front.
    let refits: Vec<Option<GgmParams>> = match cfg.refit {
        RefitMode::None => vec![None; n_rows],
        RefitMode::LeaveOneOut => {
            if n_rows < 2 {
                return Err(Error::InvalidInput(
                    "leave-one-out refit needs at least two data rows".into(),
                ));
            }
            (0..n_rows)
                .into_par_iter()
                .map(|held| {
                    if held >= cfg.trials_per_p {
                        return Ok(None); // row never held out
                    }
                    let mut rest = DMatrix::zeros(n_rows - 1, data.ncols());
                    let mut r = 0;
                    for row in 0..n_rows {
                        if row != held {
                            rest.row_mut(r).copy_from(&data.row(row));
                            r += 1;
                        }
                    }
                    let em = empirical_moments(&rest, g)?;
                    let out = fit_moments(g, &em, &cfg.learn, default_init(&em))?;
                    Ok(Some(out.params))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let mut rows = Vec::with_capacity(cfg.p_grid.len());
    for (p_idx, &p) in cfg.p_grid.iter().enumerate() {
        let errors: Vec<f64> = (0..cfg.trials_per_p)
            .into_par_iter()
            .map(|trial| {
                let held = trial % n_rows;
                let truth = DVector::from_fn(data.ncols(), |i, _| data[(held, i)]);
                let spec = MaskSpec {
                    mode: MaskMode::Probability(p),
                    seed: split_mix(cfg.seed ^ ((p_idx as u64) << 32) ^ trial as u64),
                };
                let draw = apply_mask(&truth, &spec)?;
                let trial_params = refits[held].as_ref().unwrap_or(params);
                let recon = reconstruct_exact(g, trial_params, &draw.observation)?;
                mse(&truth, &recon, draw.observation.missing())
            })
            .collect::<Result<Vec<_>>>()?;
        let t = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / t;
        let stderr = if errors.len() > 1 {
            let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (t - 1.0);
            (var / t).sqrt()
        } else {
            0.0
        };
        rows.push(SweepRow {
            p,
            mse_mean: mean,
            mse_stderr: stderr,
            trials: errors.len(),
        });
    }
    Ok(SweepResult {
        rows,
        seed: cfg.seed,
    })
}
