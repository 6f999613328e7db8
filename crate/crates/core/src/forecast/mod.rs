//! Graph-conditioned forecasters and graph-free LSTM baselines. Every model maps
//! input windows `[B, N, w]` to predictions `[B, N, horizon]`.

pub mod dcrnn;
pub mod diffusion;
pub mod gdn;
pub mod lstm;
pub mod mtgnn;
pub mod nri;

#[cfg(test)]
mod tests;

pub use dcrnn::{Dcrnn, DcrnnCell};
pub use diffusion::{diffuse, diffusion_supports, graph_diffusion_conv, DIFFUSION_ORDER};
pub use gdn::GdnForecaster;
pub use lstm::{JointLstm, LstmU};
pub use mtgnn::{receptive_field, MtgnnForecaster};
pub use nri::NriDecoder;

use crate::autodiff::{Tape, Var};
use crate::{Error, Result};

/// Forecast horizon in steps.
pub const HORIZON: usize = 12;

/// Validates a `[B, N, w]` window tensor and returns `(B, N)`.
pub(crate) fn check_window(tape: &Tape, windows: Var, w: usize) -> Result<(usize, usize)> {
    match tape.shape(windows) {
        [b, n, len] if *len == w => Ok((*b, *n)),
        s => Err(Error::shape("forecast", format!("expected windows [B, N, {w}], got {s:?}"))),
    }
}
