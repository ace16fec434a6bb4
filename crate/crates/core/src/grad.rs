//! Reverse-mode gradients of the kernels in [`crate::ssm`].
//!
//! The loss is `sum_t <g_t, y_t>` for an upstream `g` shaped like `y`. With
//! `G_t = g_t C_t` per lane, the bidirectional pass is undone in reverse:
//!
//! ```text
//! dC_t  = g_t (F_t + B_t)
//! backward pass, k ascending:   B̂_{k+1} += B̂_k Ā_{k+1}    dĀ_{k+1} += B̂_k B_{k+1}
//!                               B̂_v     += B̂_k Ā_v        dĀ_v     += B̂_k B_v      (v in U_k)
//! root:                         F̂_root  += B̂_root
//! forward pass, i descending:   dB̄_i += F̂_i x_i           dx_i     += F̂_i B̄_i
//!                               F̂_u  += F̂_i Ā_i           dĀ_i     += F̂_i F_u      (u = i-1 or u in V_i)
//! ```
//!
//! starting from `F̂ = G` and `B̂ = G`. [`discretize_backward`] chains the
//! result through the zero-order hold to `(a, b, c, Δ)`.

use serde::Serialize;
use twofloat::TwoFloat;

use crate::csr::SkipGraph;
use crate::ssm::bdpp::{check_graph, passes, SkipSets};
use crate::ssm::{discretize_derivatives, expect_len, normals, BdppOptions, DiscreteParams, SsmError, SsmParams};

/// Largest sequence the finite-difference checker accepts.
pub const FD_MAX_N: usize = 32;

/// Gradients shaped like `x` (`[t][c]`) and like `Ā`, `B̄`, `C` (`[t][c][s]`).
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub d_x: Vec<f64>,
    pub d_a_bar: Vec<f64>,
    pub d_b_bar: Vec<f64>,
    pub d_c: Vec<f64>,
}

impl GradientBundle {
    fn zeros(p: &DiscreteParams) -> Self {
        let len = p.n * p.lanes();
        Self {
            d_x: vec![0.0; p.n * p.channels],
            d_a_bar: vec![0.0; len],
            d_b_bar: vec![0.0; len],
            d_c: vec![0.0; len],
        }
    }

    pub fn all_finite(&self) -> bool {
        [&self.d_x, &self.d_a_bar, &self.d_b_bar, &self.d_c]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

pub fn bdpp_backward(
    params: &DiscreteParams,
    x: &[f64],
    graph: &SkipGraph,
    upstream: &[f64],
    opts: BdppOptions,
) -> Result<GradientBundle, SsmError> {
    check_graph(params, x, graph)?;
    expect_len("upstream", x.len(), upstream.len())?;
    let sets = SkipSets::new(graph);
    let st = passes(params, x, &sets);
    let (n, ch, ds) = (params.n, params.channels, params.d_state);
    let lanes = ch * ds;
    let ab = &params.a_bar;
    let mut out = GradientBundle::zeros(params);
    if n == 0 {
        return Ok(out);
    }

    let mut bf = vec![0.0; n * lanes];
    let mut bb = vec![0.0; n * lanes];
    for t in 0..n {
        let keep_b = if opts.dedup_root && t + 1 == n { 0.0 } else { 1.0 };
        for c in 0..ch {
            let g = upstream[t * ch + c];
            for s in 0..ds {
                let k = (t * ch + c) * ds + s;
                let gk = g * params.c[k];
                bf[k] = gk;
                bb[k] = keep_b * gk;
                out.d_c[k] = g * (st.f[k] + keep_b * st.b[k]);
            }
        }
    }

    for k in 0..n - 1 {
        let row = k * lanes;
        let up = row + lanes;
        for l in 0..lanes {
            let g = bb[row + l];
            bb[up + l] += g * ab[up + l];
            out.d_a_bar[up + l] += g * st.b[up + l];
        }
        for &v in sets.targets_of(k) {
            let vr = v * lanes;
            for l in 0..lanes {
                let g = bb[row + l];
                bb[vr + l] += g * ab[vr + l];
                out.d_a_bar[vr + l] += g * st.b[vr + l];
            }
        }
    }
    let root = (n - 1) * lanes;
    for l in 0..lanes {
        bf[root + l] += bb[root + l];
    }

    for i in (0..n).rev() {
        let row = i * lanes;
        for c in 0..ch {
            let xv = x[i * ch + c];
            let mut dx = 0.0;
            for s in 0..ds {
                let k = row + c * ds + s;
                out.d_b_bar[k] += bf[k] * xv;
                dx += bf[k] * params.b_bar[k];
            }
            out.d_x[i * ch + c] += dx;
        }
        if i > 0 {
            let prev = row - lanes;
            for l in 0..lanes {
                let g = bf[row + l];
                bf[prev + l] += g * ab[row + l];
                out.d_a_bar[row + l] += g * st.f[prev + l];
            }
        }
        for &u in sets.sources_of(i) {
            let ur = u * lanes;
            for l in 0..lanes {
                let g = bf[row + l];
                bf[ur + l] += g * ab[row + l];
                out.d_a_bar[row + l] += g * st.f[ur + l];
            }
        }
    }
    Ok(out)
}

/// Gradients of `sum_t <g_t, y_t>` for the classic recurrence.
pub fn recurrence_backward(params: &DiscreteParams, x: &[f64], upstream: &[f64]) -> Result<GradientBundle, SsmError> {
    params.check_input(x)?;
    expect_len("upstream", x.len(), upstream.len())?;
    let (n, ch, ds) = (params.n, params.channels, params.d_state);
    let lanes = ch * ds;
    let mut h = vec![0.0; n * lanes];
    for t in 0..n {
        for c in 0..ch {
            for s in 0..ds {
                let k = (t * ch + c) * ds + s;
                let prev = if t > 0 { h[k - lanes] } else { 0.0 };
                h[k] = params.a_bar[k] * prev + params.b_bar[k] * x[t * ch + c];
            }
        }
    }
    let mut out = GradientBundle::zeros(params);
    let mut carry = vec![0.0; lanes];
    for t in (0..n).rev() {
        for c in 0..ch {
            let g = upstream[t * ch + c];
            let mut dx = 0.0;
            for s in 0..ds {
                let l = c * ds + s;
                let k = t * lanes + l;
                let bh = g * params.c[k] + carry[l];
                out.d_c[k] = g * h[k];
                out.d_b_bar[k] = bh * x[t * ch + c];
                if t > 0 {
                    out.d_a_bar[k] = bh * h[k - lanes];
                }
                dx += bh * params.b_bar[k];
                carry[l] = bh * params.a_bar[k];
            }
            out.d_x[t * ch + c] = dx;
        }
    }
    Ok(out)
}

/// Gradients with respect to the continuous parameters, shaped like the
/// fields of [`SsmParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct RawGradients {
    pub d_a: Vec<f64>,
    pub d_b: Vec<f64>,
    pub d_c: Vec<f64>,
    pub d_delta: Vec<f64>,
}

/// Chains discretized-parameter gradients through the zero-order hold.
pub fn discretize_backward(params: &SsmParams, grads: &GradientBundle) -> Result<RawGradients, SsmError> {
    params.check()?;
    let (n, ch, ds) = (params.n, params.channels, params.d_state);
    let len = n * ch * ds;
    expect_len("d_a_bar", len, grads.d_a_bar.len())?;
    expect_len("d_b_bar", len, grads.d_b_bar.len())?;
    expect_len("d_c", len, grads.d_c.len())?;
    let mut out = RawGradients {
        d_a: vec![0.0; ch * ds],
        d_b: vec![0.0; n * ds],
        d_c: vec![0.0; n * ds],
        d_delta: vec![0.0; n * ch],
    };
    for t in 0..n {
        for c in 0..ch {
            let dt = params.delta[t * ch + c];
            let mut d_delta = 0.0;
            for s in 0..ds {
                let k = (t * ch + c) * ds + s;
                let z = discretize_derivatives(params.a[c * ds + s], params.b[t * ds + s], dt)?;
                let (ga, gb) = (grads.d_a_bar[k], grads.d_b_bar[k]);
                out.d_a[c * ds + s] += ga * z.da_bar_da + gb * z.db_bar_da;
                out.d_b[t * ds + s] += gb * z.db_bar_db;
                out.d_c[t * ds + s] += grads.d_c[k];
                d_delta += ga * z.da_bar_ddelta + gb * z.db_bar_ddelta;
            }
            out.d_delta[t * ch + c] = d_delta;
        }
    }
    Ok(out)
}

/// `max(|a - n|) / max(|a|, |n|, 1e-12)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Central-difference step for a parameter of value `theta`.
pub fn fd_step(theta: f64) -> f64 {
    1e-5f64.max(1e-7 * theta.abs())
}

/// Worst relative error per parameter group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GroupErrors {
    pub x: f64,
    #[serde(rename = "A_bar")]
    pub a_bar: f64,
    #[serde(rename = "B_bar")]
    pub b_bar: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

impl GroupErrors {
    pub fn max(&self) -> f64 {
        self.x.max(self.a_bar).max(self.b_bar).max(self.c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub n: usize,
    pub skips: Vec<[usize; 2]>,
    pub groups: GroupErrors,
    pub max_rel_err: f64,
}

impl GradcheckReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain struct")
    }
}

/// Compares [`bdpp_backward`] against central differences of
/// `sum_t <g_t, y_t>` for a standard normal `g` drawn from `seed`.
pub fn finite_difference_check(
    params: &DiscreteParams,
    x: &[f64],
    graph: &SkipGraph,
    seed: u64,
) -> Result<GradcheckReport, SsmError> {
    let upstream = normals(&mut crate::rng::seeded(seed), x.len());
    let groups = finite_difference_errors(params, x, graph, &upstream, BdppOptions::default())?;
    Ok(GradcheckReport {
        seed,
        n: params.n,
        skips: graph.skips().iter().map(|&(u, v)| [u, v]).collect(),
        groups,
        max_rel_err: groups.max(),
    })
}

/// Per-group errors for an explicit upstream gradient.
pub fn finite_difference_errors(
    params: &DiscreteParams,
    x: &[f64],
    graph: &SkipGraph,
    upstream: &[f64],
    opts: BdppOptions,
) -> Result<GroupErrors, SsmError> {
    if params.n > FD_MAX_N {
        return Err(SsmError::TooLarge {
            n: params.n,
            max: FD_MAX_N,
        });
    }
    let analytic = bdpp_backward(params, x, graph, upstream, opts)?;
    let sets = SkipSets::new(graph);
    let loss = |p: &DiscreteParams, x: &[f64]| loss_compensated(p, x, &sets, upstream, opts);
    let worst = |grad: &[f64], theta: &[f64], eval: &mut dyn FnMut(usize, f64) -> TwoFloat| -> f64 {
        let mut m = 0f64;
        for (i, (&g, &t)) in grad.iter().zip(theta).enumerate() {
            let h = fd_step(t);
            let (up, down) = (t + h, t - h);
            let diff: f64 = (eval(i, up) - eval(i, down)).into();
            m = m.max(rel_err(g, diff / (up - down)));
        }
        m
    };

    let mut p = params.clone();
    let mut xs = x.to_vec();
    let ex = worst(&analytic.d_x, x, &mut |i, v| {
        let old = xs[i];
        xs[i] = v;
        let l = loss(params, &xs);
        xs[i] = old;
        l
    });
    let ea = worst(&analytic.d_a_bar, &params.a_bar, &mut |i, v| {
        let old = p.a_bar[i];
        p.a_bar[i] = v;
        let l = loss(&p, x);
        p.a_bar[i] = old;
        l
    });
    let eb = worst(&analytic.d_b_bar, &params.b_bar, &mut |i, v| {
        let old = p.b_bar[i];
        p.b_bar[i] = v;
        let l = loss(&p, x);
        p.b_bar[i] = old;
        l
    });
    let ec = worst(&analytic.d_c, &params.c, &mut |i, v| {
        let old = p.c[i];
        p.c[i] = v;
        let l = loss(&p, x);
        p.c[i] = old;
        l
    });
    Ok(GroupErrors {
        x: ex,
        a_bar: ea,
        b_bar: eb,
        c: ec,
    })
}

/// `sum_t <g_t, y_t>` through both passes in double-double arithmetic, so
/// that differencing two nearby losses keeps about 30 significant digits.
fn loss_compensated(p: &DiscreteParams, x: &[f64], sets: &SkipSets, upstream: &[f64], opts: BdppOptions) -> TwoFloat {
    let (n, ch, ds) = (p.n, p.channels, p.d_state);
    let lanes = ch * ds;
    let zero = TwoFloat::from(0.0);
    let mut f = vec![zero; n * lanes];
    for t in 0..n {
        for l in 0..lanes {
            let k = t * lanes + l;
            let mut acc = TwoFloat::from(p.b_bar[k]) * x[t * ch + l / ds];
            if t > 0 {
                acc += f[k - lanes] * p.a_bar[k];
            }
            for &u in sets.sources_of(t) {
                acc += f[u * lanes + l] * p.a_bar[k];
            }
            f[k] = acc;
        }
    }
    let mut b = vec![zero; n * lanes];
    for t in (0..n).rev() {
        for l in 0..lanes {
            let k = t * lanes + l;
            b[k] = if t + 1 == n {
                f[k]
            } else {
                let mut acc = b[k + lanes] * p.a_bar[k + lanes];
                for &v in sets.targets_of(t) {
                    acc += b[v * lanes + l] * p.a_bar[v * lanes + l];
                }
                acc
            };
        }
    }
    let mut total = zero;
    for t in 0..n {
        let keep_b = !(opts.dedup_root && t + 1 == n);
        for l in 0..lanes {
            let k = t * lanes + l;
            let state = if keep_b { f[k] + b[k] } else { f[k] };
            total += state * (p.c[k] * upstream[t * ch + l / ds]);
        }
    }
    total
}
