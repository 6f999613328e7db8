use super::params::{Bound, ParamStore};
use super::tape::{Tape, Var};
use crate::{Error, Result};

/// Compares reverse-mode gradients against central finite differences.
///
/// `loss_fn` must build a scalar loss on the given tape from the bound
/// parameters and be deterministic (sampling ops must replay frozen noise,
/// e.g. by cloning a fixed [`RngStream`](super::RngStream) on each call).
/// Returns `max |analytic - numeric| / max(1, |numeric|)` over every scalar
/// parameter.
pub fn finite_difference_check<F>(params: &ParamStore, eps: f64, mut loss_fn: F) -> Result<f64>
where
    F: FnMut(&mut Tape, &Bound) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::invalid(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let mut eval = |store: &ParamStore, grads: bool| -> Result<(f64, Option<Vec<crate::autodiff::Tensor>>)> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let loss = loss_fn(&mut tape, &bound)?;
        let value = tape.value(loss).item();
        if !grads {
            return Ok((value, None));
        }
        let mut g = tape.backward(loss)?;
        let per_param = bound.vars().iter().map(|&v| g.take(v).expect("leaf gradient")).collect();
        Ok((value, Some(per_param)))
    };

    let (base, analytic) = eval(params, true)?;
    let (again, _) = eval(params, false)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic { first: base, second: again });
    }
    let analytic = analytic.expect("requested gradients");

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for j in 0..grad.numel() {
            let orig = probe.tensors()[pi].data()[j];
            probe.tensors_mut()[pi].data_mut()[j] = orig + eps;
            let (up, _) = eval(&probe, false)?;
            probe.tensors_mut()[pi].data_mut()[j] = orig - eps;
            let (down, _) = eval(&probe, false)?;
            probe.tensors_mut()[pi].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = (grad.data()[j] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
