//! Hand-differentiated backward pass.
//!
//! Max pools route gradient to the recorded argmax position; rectifiers
//! gate by the sign of the stored pre-activation. The first convolution
//! accumulates weight gradients only at the nonzero input cells, matching
//! the sparse forward path.

use super::{ForwardTrace, Gradients, NetworkParams, QnetError};

/// Gradients of a scalar loss with respect to every weight and bias,
/// given `dloss_dq` at the network output. The trace must come from a
/// forward pass on the same parameter version.
pub fn backward(
    params: &NetworkParams,
    trace: &ForwardTrace,
    dloss_dq: &[f64],
) -> Result<Gradients, QnetError> {
    if trace.params_version != params.version() {
        return Err(QnetError::VersionMismatch {
            trace: trace.params_version,
            params: params.version(),
        });
    }
    let spec = params.spec();
    if dloss_dq.len() != spec.action_count {
        return Err(QnetError::GradientShape {
            expected: spec.action_count,
            got: dloss_dq.len(),
        });
    }

    let layout = params.layout();
    let mut grads = Gradients::zeros_like(params);

    // Output layer (linear).
    let hidden = &trace.hidden_out;
    let out_w = params.seg(layout.out_w);
    let mut d_hidden = vec![0.0; spec.hidden_dim];
    {
        let (wo, _) = layout.out_w;
        let (bo, _) = layout.out_b;
        for (a, &g) in dloss_dq.iter().enumerate() {
            grads.data[bo + a] = g;
            if g == 0.0 {
                continue;
            }
            let row = a * spec.hidden_dim;
            for j in 0..spec.hidden_dim {
                d_hidden[j] += g * out_w[row + j];
            }
            let grow = &mut grads.data[wo + row..wo + row + spec.hidden_dim];
            for (gv, hv) in grow.iter_mut().zip(hidden) {
                *gv += g * hv;
            }
        }
    }

    // Hidden layer (rectified dense).
    let flat = trace.pool_out.last().unwrap();
    let hidden_w = params.seg(layout.hidden_w);
    let mut d_flat = vec![0.0; flat.len()];
    {
        let (wo, wl) = layout.hidden_w;
        let (bo, _) = layout.hidden_b;
        for j in 0..spec.hidden_dim {
            let g = if trace.hidden_pre[j] > 0.0 { d_hidden[j] } else { 0.0 };
            grads.data[bo + j] = g;
            if g == 0.0 {
                continue;
            }
            let row = j * flat.len();
            let grow = &mut grads.data[wo + row..wo + row + flat.len()];
            for (gv, xv) in grow.iter_mut().zip(flat) {
                *gv += g * xv;
            }
            for (i, xv) in hidden_w[row..row + flat.len()].iter().enumerate() {
                d_flat[i] += g * xv;
            }
        }
        let _ = wl;
    }

    // Conv stages, last to first.
    let shapes = spec.time_shapes();
    let mut d_pool = d_flat;
    for i in (0..spec.convs.len()).rev() {
        let c = spec.convs[i];
        let in_ch = spec.conv_in_ch(i);
        let conv_len = shapes[i].0;

        // Un-pool and gate: gradient lands on the argmax position iff the
        // pre-activation was positive.
        let mut d_pre = vec![0.0; conv_len * c.out_ch];
        let arg = &trace.pool_argmax[i];
        let pre = &trace.conv_pre[i];
        for (cell, &g) in d_pool.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let f = cell % c.out_ch;
            let p = arg[cell] as usize;
            if pre[p * c.out_ch + f] > 0.0 {
                d_pre[p * c.out_ch + f] += g;
            }
        }

        let (wo, _) = layout.conv_w[i];
        let (bo, _) = layout.conv_b[i];

        if i == 0 {
            // Sparse input: weight gradient only at nonzero cells.
            for p in 0..conv_len {
                for f in 0..c.out_ch {
                    let s = d_pre[p * c.out_ch + f];
                    if s != 0.0 {
                        grads.data[bo + f] += s;
                    }
                }
            }
            for &(row, col) in &trace.input_sparse {
                let row = row as usize;
                let col = col as usize;
                let t_lo = (row + 1).saturating_sub(conv_len);
                let t_hi = (row + 1).min(c.kernel);
                for t in t_lo..t_hi {
                    let p = row - t;
                    for f in 0..c.out_ch {
                        let s = d_pre[p * c.out_ch + f];
                        if s != 0.0 {
                            grads.data[wo + (f * c.kernel + t) * in_ch + col] += s;
                        }
                    }
                }
            }
            break;
        }

        let input = &trace.pool_out[i - 1];
        let w = params.seg(layout.conv_w[i]);
        let mut d_input = vec![0.0; input.len()];
        for p in 0..conv_len {
            for f in 0..c.out_ch {
                let s = d_pre[p * c.out_ch + f];
                if s == 0.0 {
                    continue;
                }
                grads.data[bo + f] += s;
                for t in 0..c.kernel {
                    let in_off = (p + t) * in_ch;
                    let w_off = (f * c.kernel + t) * in_ch;
                    {
                        let grow = &mut grads.data[wo + w_off..wo + w_off + in_ch];
                        for (gv, xv) in grow.iter_mut().zip(&input[in_off..in_off + in_ch]) {
                            *gv += s * xv;
                        }
                    }
                    let drow = &mut d_input[in_off..in_off + in_ch];
                    for (dv, wv) in drow.iter_mut().zip(&w[w_off..w_off + in_ch]) {
                        *dv += s * wv;
                    }
                }
            }
        }
        d_pool = d_input;
    }

    Ok(grads)
}
