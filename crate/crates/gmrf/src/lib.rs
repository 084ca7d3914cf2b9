//! Bayesian reconstruction of missing observations with Gaussian Markov
//! random fields on graphs.
//!
//! The crate covers the full workflow:
//!
//! * [`graph`] — road-network, lattice and fully-connected graph construction;
//! * [`ggm`] — the Gaussian graphical model: precision assembly, exact
//!   moments, conditioning and sampling;
//! * [`inference`] — reconstruction of missing entries by mean-field /
//!   Gauss-Seidel sweeps or by direct factorization;
//! * [`learning`] — maximum-likelihood parameter estimation from complete
//!   observations, with L2 regularization;
//! * [`evaluation`] — random masking, reconstruction error metrics and
//!   error-versus-missing-rate sweeps;
//! * [`analysis`] — closed-form averaged-error theory for the fully-connected
//!   model and its Monte Carlo validation;
//! * [`io`] — the text file formats used by the `gmrf` command-line tool;
//! * [`cli`] — the command-line front end itself.
//!
//! A quick taste — reconstruct one missing vertex on a three-vertex path:
//!
//! ```
//! use gmrf::graph::Graph;
//! use gmrf::ggm::{GgmParams, Observation};
//! use gmrf::inference::{reconstruct_mfe, MfeConfig};
//! use nalgebra::DVector;
//!
//! let g = Graph::new(3, [(0, 1), (1, 2)])?;
//! let params = GgmParams::uniform(3, 0.0, 1.0, 2.0)?;
//! // Vertices 0 and 2 observed at 0.9 and 0.3; vertex 1 missing.
//! let obs = Observation::new(DVector::from_vec(vec![0.9, 0.0, 0.3]), [1])?;
//! let recon = reconstruct_mfe(&g, &params, &obs, &MfeConfig::default())?;
//! assert!(recon.converged);
//! let expect = (0.0 + 2.0 * (0.9 + 0.3)) / (1.0 + 2.0 * 2.0);
//! assert!((recon.values[1] - expect).abs() < 1e-9);
//! # Ok::<(), gmrf::Error>(())
//! ```

pub mod analysis;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod ggm;
pub mod graph;
pub mod guide;
pub mod inference;
pub mod io;
pub mod learning;

pub use error::{Error, Result};
pub use ggm::{GgmParams, Observation};
pub use graph::Graph;
pub use inference::ReconstructionResult;
