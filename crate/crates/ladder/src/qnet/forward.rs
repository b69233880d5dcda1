//! Forward pass: dense reference path and the sparse-input fast path.
//!
//! Both produce the same [`ForwardTrace`], which records everything the
//! backward pass needs: pre-activations, pool selections, and the sparse
//! input itself. The sparse path exploits that the input is one-hot: the
//! first convolution gathers one weight column per nonzero instead of
//! multiplying through 600x71 mostly-zero rows.

use super::{NetworkParams, QValues, QnetError};

/// Per-layer activations captured during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub params_version: u64,
    /// Nonzero input cells as (row, alphabet index), row-ascending.
    pub input_sparse: Vec<(u16, u8)>,
    /// Convolution outputs before the rectifier, time-major.
    pub conv_pre: Vec<Vec<f64>>,
    /// Post-rectifier, post-pool outputs per conv stage.
    pub pool_out: Vec<Vec<f64>>,
    /// Absolute conv-output index chosen by each pool cell.
    pub pool_argmax: Vec<Vec<u32>>,
    pub hidden_pre: Vec<f64>,
    /// Rectified hidden layer: the 400-dim embedding.
    pub hidden_out: Vec<f64>,
    pub q: Vec<f64>,
}

impl ForwardTrace {
    /// Time-axis lengths in layer order: conv then pool per stage.
    pub fn time_axis(&self, ch: &[usize]) -> Vec<usize> {
        self.conv_pre
            .iter()
            .zip(self.pool_out.iter())
            .zip(ch)
            .flat_map(|((c, p), &n)| [c.len() / n, p.len() / n])
            .collect()
    }
}

/// Valid 1-d convolution, stride 1, time-major activations.
fn conv_forward(
    input: &[f64],
    in_len: usize,
    in_ch: usize,
    w: &[f64],
    b: &[f64],
    kernel: usize,
    out_ch: usize,
    out: &mut [f64],
) {
    let out_len = in_len + 1 - kernel;
    debug_assert_eq!(out.len(), out_len * out_ch);
    for p in 0..out_len {
        let out_row = &mut out[p * out_ch..(p + 1) * out_ch];
        out_row.copy_from_slice(b);
        for t in 0..kernel {
            let in_row = &input[(p + t) * in_ch..(p + t + 1) * in_ch];
            for (f, o) in out_row.iter_mut().enumerate() {
                let w_row = &w[(f * kernel + t) * in_ch..(f * kernel + t + 1) * in_ch];
                let mut acc = 0.0;
                for (wv, xv) in w_row.iter().zip(in_row) {
                    acc += wv * xv;
                }
                *o += acc;
            }
        }
    }
}

/// Rectify then max-pool non-overlapping windows; trailing remainder
/// positions are dropped. Returns pooled values and the absolute conv
/// index each cell selected (first index wins ties).
fn relu_pool(pre: &[f64], conv_len: usize, ch: usize, pool: usize) -> (Vec<f64>, Vec<u32>) {
    let pooled_len = conv_len / pool;
    let mut out = vec![0.0; pooled_len * ch];
    let mut arg = vec![0u32; pooled_len * ch];
    for j in 0..pooled_len {
        for c in 0..ch {
            let mut best = f64::NEG_INFINITY;
            let mut best_p = j * pool;
            for k in 0..pool {
                let p = j * pool + k;
                let v = pre[p * ch + c].max(0.0);
                if v > best {
                    best = v;
                    best_p = p;
                }
            }
            out[j * ch + c] = best;
            arg[j * ch + c] = best_p as u32;
        }
    }
    (out, arg)
}

fn dense_tail(params: &NetworkParams, trace: &mut ForwardTrace) {
    let spec = params.spec();
    let layout = params.layout();

    // Conv stages after the first.
    let shapes = spec.time_shapes();
    for i in 1..spec.convs.len() {
        let c = spec.convs[i];
        let in_ch = spec.conv_in_ch(i);
        let in_len = shapes[i - 1].1;
        let conv_len = shapes[i].0;
        let mut pre = vec![0.0; conv_len * c.out_ch];
        conv_forward(
            &trace.pool_out[i - 1],
            in_len,
            in_ch,
            params.seg(layout.conv_w[i]),
            params.seg(layout.conv_b[i]),
            c.kernel,
            c.out_ch,
            &mut pre,
        );
        let (pooled, arg) = relu_pool(&pre, conv_len, c.out_ch, c.pool);
        trace.conv_pre.push(pre);
        trace.pool_out.push(pooled);
        trace.pool_argmax.push(arg);
    }

    // Fully connected hidden layer with rectifier.
    let flat = trace.pool_out.last().unwrap();
    let hw = params.seg(layout.hidden_w);
    let hb = params.seg(layout.hidden_b);
    let mut hidden_pre = vec![0.0; spec.hidden_dim];
    for (j, h) in hidden_pre.iter_mut().enumerate() {
        let row = &hw[j * flat.len()..(j + 1) * flat.len()];
        let mut acc = hb[j];
        for (wv, xv) in row.iter().zip(flat) {
            acc += wv * xv;
        }
        *h = acc;
    }
    let hidden_out: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();

    // Linear output layer.
    let ow = params.seg(layout.out_w);
    let ob = params.seg(layout.out_b);
    let mut q = vec![0.0; spec.action_count];
    for (a, qa) in q.iter_mut().enumerate() {
        let row = &ow[a * spec.hidden_dim..(a + 1) * spec.hidden_dim];
        let mut acc = ob[a];
        for (wv, xv) in row.iter().zip(&hidden_out) {
            acc += wv * xv;
        }
        *qa = acc;
    }

    trace.hidden_pre = hidden_pre;
    trace.hidden_out = hidden_out;
    trace.q = q;
}

fn finish(params: &NetworkParams, first_pre: Vec<f64>, input_sparse: Vec<(u16, u8)>) -> (QValues, ForwardTrace) {
    let spec = params.spec();
    let c0 = spec.convs[0];
    let conv_len = spec.time_shapes()[0].0;
    let (pooled, arg) = relu_pool(&first_pre, conv_len, c0.out_ch, c0.pool);
    let mut trace = ForwardTrace {
        params_version: params.version(),
        input_sparse,
        conv_pre: vec![first_pre],
        pool_out: vec![pooled],
        pool_argmax: vec![arg],
        hidden_pre: Vec::new(),
        hidden_out: Vec::new(),
        q: Vec::new(),
    };
    dense_tail(params, &mut trace);
    let q = QValues(trace.q.clone());
    (q, trace)
}

/// Forward pass over a dense binary input of shape input_len x input_width.
pub fn forward(params: &NetworkParams, dense: &[f64]) -> Result<(QValues, ForwardTrace), QnetError> {
    let spec = params.spec();
    let expected = spec.input_len * spec.input_width;
    if dense.len() != expected {
        return Err(QnetError::InputShape { expected, got: dense.len() });
    }
    let layout = params.layout();
    let c0 = spec.convs[0];
    let conv_len = spec.time_shapes()[0].0;
    let mut pre = vec![0.0; conv_len * c0.out_ch];
    conv_forward(
        dense,
        spec.input_len,
        spec.input_width,
        params.seg(layout.conv_w[0]),
        params.seg(layout.conv_b[0]),
        c0.kernel,
        c0.out_ch,
        &mut pre,
    );

    let mut input_sparse = Vec::new();
    for row in 0..spec.input_len {
        for col in 0..spec.input_width {
            if dense[row * spec.input_width + col] != 0.0 {
                input_sparse.push((row as u16, col as u8));
            }
        }
    }
    Ok(finish(params, pre, input_sparse))
}

/// Forward pass gathering first-layer weights per nonzero input cell.
/// Numerically equivalent to [`forward`] on the same encoding.
pub fn forward_sparse(
    params: &NetworkParams,
    positions: &[(u16, u8)],
) -> Result<(QValues, ForwardTrace), QnetError> {
    let spec = params.spec();
    let mut last_row: Option<u16> = None;
    for &(row, col) in positions {
        if row as usize >= spec.input_len || col as usize >= spec.input_width {
            return Err(QnetError::InvalidSparseView);
        }
        if let Some(prev) = last_row {
            if row <= prev {
                return Err(QnetError::InvalidSparseView);
            }
        }
        last_row = Some(row);
    }

    let layout = params.layout();
    let c0 = spec.convs[0];
    let in_ch = spec.input_width;
    let conv_len = spec.time_shapes()[0].0;
    let w = params.seg(layout.conv_w[0]);
    let b = params.seg(layout.conv_b[0]);

    let mut pre = vec![0.0; conv_len * c0.out_ch];
    for p in 0..conv_len {
        pre[p * c0.out_ch..(p + 1) * c0.out_ch].copy_from_slice(b);
    }
    for &(row, col) in positions {
        let row = row as usize;
        let col = col as usize;
        // Cell (row, col) feeds output positions row-t for taps t.
        let t_lo = (row + 1).saturating_sub(conv_len);
        let t_hi = (row + 1).min(c0.kernel);
        for t in t_lo..t_hi {
            let p = row - t;
            let out_row = &mut pre[p * c0.out_ch..(p + 1) * c0.out_ch];
            for (f, o) in out_row.iter_mut().enumerate() {
                *o += w[(f * c0.kernel + t) * in_ch + col];
            }
        }
    }
    Ok(finish(params, pre, positions.to_vec()))
}
