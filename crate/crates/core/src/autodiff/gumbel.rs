use super::rng::RngStream;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Default relaxation temperature for every Gumbel sampler in the crate.
pub const DEFAULT_TEMPERATURE: f64 = 0.5;

/// Gumbel-softmax over the last axis of `logits`.
///
/// Soft mode returns `softmax((logits + g) / temperature)`. Hard mode returns
/// the one-hot argmax of that sample (lowest index on ties) while gradients
/// flow through the soft sample.
pub fn gumbel_softmax(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    hard: bool,
    rng: &mut RngStream,
) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let shape = tape.shape(logits).to_vec();
    if shape.is_empty() {
        return Err(Error::shape("gumbel_softmax", "scalar logits"));
    }
    let noise: Vec<f64> = (0..tape.value(logits).numel()).map(|_| rng.gumbel()).collect();
    let noise = tape.constant(Tensor::from_parts(shape.clone(), noise));
    let perturbed = tape.add(logits, noise)?;
    let scaled = tape.scale(perturbed, 1.0 / temperature);
    let soft = tape.softmax(scaled, None)?;
    if !hard {
        return Ok(soft);
    }
    let classes = *shape.last().unwrap();
    let mut onehot = vec![0.0; tape.value(soft).numel()];
    for (row, dst) in tape.value(soft).data().chunks(classes).zip(onehot.chunks_mut(classes)) {
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        dst[best] = 1.0;
    }
    tape.straight_through(Tensor::from_parts(shape, onehot), soft)
}
