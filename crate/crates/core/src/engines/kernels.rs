//! Layer kernels over flat channel-major buffers.

use super::arith::Arith;
use super::EngineError;
use crate::netspec::PoolKind;
use crate::numerics::Shape;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// `out[f][y][x] = b[f] + sum_{c,i,j} w[f][c][i][j] * in[c][y*s-p+i][x*s-p+j]`,
/// taps outside the input contributing nothing.
pub(crate) fn conv<A: Arith>(
    a: &A,
    input: &[A::Act],
    in_shape: Shape,
    out_shape: Shape,
    geo: ConvGeometry,
    weights: &[A::Wt],
    biases: &[A::Wt],
) -> Result<Vec<A::Act>, EngineError> {
    let k = geo.kernel;
    let per_filter = in_shape.channels * k * k;
    if input.len() != in_shape.len()
        || weights.len() != out_shape.channels * per_filter
        || biases.len() != out_shape.channels
    {
        return Err(EngineError::Shape(format!(
            "conv: input {} / weights {} / biases {} do not fit {in_shape} -> {out_shape}",
            input.len(),
            weights.len(),
            biases.len()
        )));
    }
    let mut out = Vec::with_capacity(out_shape.len());
    for f in 0..out_shape.channels {
        let filter = &weights[f * per_filter..(f + 1) * per_filter];
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let mut acc = a.start(biases[f]);
                for c in 0..in_shape.channels {
                    for i in 0..k {
                        let Some(iy) = (oy * geo.stride + i).checked_sub(geo.pad) else { continue };
                        if iy >= in_shape.height {
                            continue;
                        }
                        for j in 0..k {
                            let Some(ix) = (ox * geo.stride + j).checked_sub(geo.pad) else { continue };
                            if ix >= in_shape.width {
                                continue;
                            }
                            let w = filter[(c * k + i) * k + j];
                            acc = a.mac(acc, w, input[in_shape.index(c, iy, ix)])?;
                        }
                    }
                }
                out.push(a.finish(acc));
            }
        }
    }
    Ok(out)
}

pub(crate) fn pool<A: Arith>(
    a: &A,
    input: &[A::Act],
    in_shape: Shape,
    out_shape: Shape,
    kind: PoolKind,
    kernel: usize,
    stride: usize,
) -> Result<Vec<A::Act>, EngineError> {
    if input.len() != in_shape.len() {
        return Err(EngineError::Shape(format!("pool: input has {} elements, expected {in_shape}", input.len())));
    }
    let mut out = Vec::with_capacity(out_shape.len());
    let mut window = Vec::with_capacity(kernel * kernel);
    for c in 0..out_shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                window.clear();
                for i in 0..kernel {
                    for j in 0..kernel {
                        window.push(input[in_shape.index(c, oy * stride + i, ox * stride + j)]);
                    }
                }
                out.push(match kind {
                    PoolKind::Max => window
                        .iter()
                        .copied()
                        .fold(window[0], |m, v| if v > m { v } else { m }),
                    PoolKind::Avg => a.mean(&window)?,
                });
            }
        }
    }
    Ok(out)
}

pub(crate) fn relu<A: Arith>(a: &A, values: &mut [A::Act]) {
    let zero = a.zero();
    for v in values {
        // `!(v > 0)` also clears negative zero
        if (*v).partial_cmp(&zero) != Some(std::cmp::Ordering::Greater) {
            *v = zero;
        }
    }
}

/// `out[u] = b[u] + sum_i w[u][i] * in[i]`.
pub(crate) fn fc<A: Arith>(
    a: &A,
    input: &[A::Act],
    units: usize,
    weights: &[A::Wt],
    biases: &[A::Wt],
) -> Result<Vec<A::Act>, EngineError> {
    let fan_in = input.len();
    if weights.len() != units * fan_in || biases.len() != units {
        return Err(EngineError::Shape(format!(
            "fc: weights {} / biases {} do not fit {fan_in} -> {units}",
            weights.len(),
            biases.len()
        )));
    }
    weights
        .chunks_exact(fan_in.max(1))
        .zip(biases)
        .map(|(row, &b)| {
            let mut acc = a.start(b);
            for (&w, &x) in row.iter().zip(input) {
                acc = a.mac(acc, w, x)?;
            }
            Ok(a.finish(acc))
        })
        .collect()
}
