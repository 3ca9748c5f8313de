//! Probability distributions and estimation on the space of CPTP quantum channels.
//!
//! A CPTP map is represented by its Choi matrix, which factors through a complex
//! Stiefel manifold: every channel of Kraus rank `k` corresponds to a `kN x N`
//! matrix with orthonormal columns. This crate builds on that correspondence:
//!
//! * [`channels`] — Choi, Stiefel, Kraus and Pauli-transfer representations,
//!   conversions among them, and channel metrics (process fidelity, diamond
//!   distance).
//! * [`bingham`] — an exponential family on the Stiefel manifold whose
//!   sufficient statistic is the average Choi matrix, with a Gibbs sampler and
//!   parameter calibration.
//! * [`stiefel`] — feasible first-order and derivative-free optimization on the
//!   manifold via Cayley-transform search curves; every iterate is CPTP.
//! * [`tomography`] — binomial measurement model, simulated process tomography,
//!   and MLE/MAP channel estimation.
//! * [`dephasing`] — full Bayesian posterior for the one-parameter dephasing
//!   channel on a numerical angle grid.
//! * [`report`] — kernel density estimates and violin-plot SVG rendering.
//! * [`io`] — JSON formats for channels, natural parameters and count data.

pub mod bingham;
pub mod channels;
pub mod dephasing;
mod diamond;
pub mod error;
pub mod io;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod special;
pub mod stiefel;
pub mod tomography;

pub use channels::{
    apply_channel, choi_to_kraus, choi_to_ptm, choi_to_stiefel, kraus_to_choi, process_fidelity,
    stiefel_from_kraus, stiefel_to_choi, stiefel_to_stacked_kraus, unstack_kraus, unvectorize,
    vectorize, ChoiMatrix, DensityMatrix, KrausSet, PauliTransferMatrix, StiefelPoint,
};
pub use diamond::{diamond_distance, DiamondOptions, DiamondReport};
pub use error::Error;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
