use crate::autodiff::{Degree, Tape, Var};
use crate::{Error, Result};

/// Default diffusion order.
pub const DIFFUSION_ORDER: usize = 2;

/// Random-walk transition matrices `[D_O^-1 A, D_I^-1 A]` for an adjacency
/// of shape `[N, N]` or `[B, N, N]`.
pub fn diffusion_supports(tape: &mut Tape, adj: Var) -> Result<[Var; 2]> {
    Ok([
        tape.degree_normalize(adj, Degree::Out)?,
        tape.degree_normalize(adj, Degree::In)?,
    ])
}

/// `[S_O Z, S_O^2 Z, .., S_I Z, S_I^2 Z, ..]` concatenated along the last axis.
/// `z` is `[B, N, d]`; the result is `[B, N, 2 K d]`.
pub fn diffuse(tape: &mut Tape, supports: &[Var; 2], z: Var, order: usize) -> Result<Var> {
    if order == 0 {
        return Err(Error::invalid("diffusion order must be at least 1"));
    }
    let mut parts = Vec::with_capacity(2 * order);
    for &s in supports {
        let mut cur = z;
        for _ in 0..order {
            cur = tape.bmm(s, cur)?;
            parts.push(cur);
        }
    }
    tape.concat(&parts, 2)
}

/// `sum_k (D_O^-1 A)^k Z W_O^k + (D_I^-1 A)^k Z W_I^k`, `k = 1..=order`.
///
/// `weights` stacks the `2 * order` blocks of shape `[d_in, d_out]` row-wise in
/// the order `W_O^1 .. W_O^K, W_I^1 .. W_I^K`.
pub fn graph_diffusion_conv(tape: &mut Tape, z: Var, adj: Var, weights: Var, order: usize) -> Result<Var> {
    let zs = tape.shape(z).to_vec();
    let ws = tape.shape(weights).to_vec();
    let (z3, unbatched) = match zs.len() {
        2 => (tape.reshape(z, &[1, zs[0], zs[1]])?, true),
        3 => (z, false),
        _ => return Err(Error::shape("graph_diffusion_conv", format!("features {zs:?}"))),
    };
    let din = *zs.last().unwrap_or(&0);
    if ws.len() != 2 || ws[0] != 2 * order * din {
        return Err(Error::shape(
            "graph_diffusion_conv",
            format!("weights {ws:?} for {} blocks of {din} rows", 2 * order),
        ));
    }
    let supports = diffusion_supports(tape, adj)?;
    let x = diffuse(tape, &supports, z3, order)?;
    let y = tape.matmul(x, weights)?;
    if unbatched {
        tape.reshape(y, &[zs[0], ws[1]])
    } else {
        Ok(y)
    }
}
