use super::{expect_len, DiscreteParams, SsmError};

/// `h_t = Ā_t h_{t-1} + B̄_t x_t`, `y_t = sum_s C_t h_t`, with `h_{-1} = 0`.
pub fn recurrence_forward(params: &DiscreteParams, x: &[f64]) -> Result<Vec<f64>, SsmError> {
    params.check_input(x)?;
    let (ch, ds) = (params.channels, params.d_state);
    let lanes = params.lanes();
    let mut h = vec![0.0; lanes];
    let mut y = vec![0.0; params.n * ch];
    for t in 0..params.n {
        for c in 0..ch {
            let xv = x[t * ch + c];
            let mut acc = 0.0;
            for s in 0..ds {
                let l = c * ds + s;
                let k = t * lanes + l;
                h[l] = params.a_bar[k] * h[l] + params.b_bar[k] * xv;
                acc += params.c[k] * h[l];
            }
            y[t * ch + c] = acc;
        }
    }
    Ok(y)
}

/// `K̄_k = sum_s C Ā^k B̄` for `k < len`, laid out `[k][c]`. Requires the
/// same parameters at every position.
pub fn conv_kernel(params: &DiscreteParams, len: usize) -> Result<Vec<f64>, SsmError> {
    params.check()?;
    let lanes = params.lanes();
    if params.n == 0 {
        return Err(SsmError::ShapeMismatch {
            what: "params",
            expected: 1,
            got: 0,
        });
    }
    for t in 1..params.n {
        let same = |v: &[f64]| v[t * lanes..(t + 1) * lanes] == v[..lanes];
        if !(same(&params.a_bar) && same(&params.b_bar) && same(&params.c)) {
            return Err(SsmError::NonConstantParams);
        }
    }
    let (ch, ds) = (params.channels, params.d_state);
    let mut power = vec![1.0; lanes];
    let mut kernel = vec![0.0; len * ch];
    for k in 0..len {
        for c in 0..ch {
            let mut acc = 0.0;
            for s in 0..ds {
                let l = c * ds + s;
                acc += params.c[l] * power[l] * params.b_bar[l];
            }
            kernel[k * ch + c] = acc;
        }
        for (p, a) in power.iter_mut().zip(&params.a_bar[..lanes]) {
            *p *= a;
        }
    }
    Ok(kernel)
}

/// Causal per-channel convolution `y_t = sum_{k <= t} K̄_k x_{t-k}`.
pub fn causal_conv(kernel: &[f64], x: &[f64], channels: usize) -> Result<Vec<f64>, SsmError> {
    let len = x.len() / channels.max(1);
    expect_len("x", len * channels, x.len())?;
    expect_len("kernel", len * channels, kernel.len())?;
    let mut y = vec![0.0; x.len()];
    for t in 0..len {
        for c in 0..channels {
            y[t * channels + c] = (0..=t).map(|k| kernel[k * channels + c] * x[(t - k) * channels + c]).sum();
        }
    }
    Ok(y)
}
