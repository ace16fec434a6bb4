use super::{DiscreteParams, SsmError};
use crate::csr::SkipGraph;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BdppOptions {
    /// Output `C F` at the root instead of `C (F + B)`, dropping the second
    /// copy of `F_root`.
    pub dedup_root: bool,
}

/// Skip neighbours per position, both ascending: `sources_of(v)` holds the
/// sources `u < v` of skips ending at `v`, `targets_of(u)` the targets `v > u`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkipSets {
    into_start: Vec<usize>,
    into: Vec<usize>,
    out_start: Vec<usize>,
    out_of: Vec<usize>,
}

/// Groups `(key, value)` pairs by key into offset-indexed storage.
fn group(n: usize, mut pairs: Vec<(usize, usize)>) -> (Vec<usize>, Vec<usize>) {
    pairs.sort_unstable();
    let mut start = vec![0; n + 1];
    for &(k, _) in &pairs {
        start[k + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    (start, pairs.into_iter().map(|(_, v)| v).collect())
}

impl SkipSets {
    pub fn new(graph: &SkipGraph) -> Self {
        let n = graph.n();
        let fwd = graph.forward_skips();
        let (into_start, into) = group(n, fwd.iter().map(|&(u, v)| (v, u)).collect());
        let (out_start, out_of) = group(n, fwd);
        Self {
            into_start,
            into,
            out_start,
            out_of,
        }
    }

    pub fn sources_of(&self, v: usize) -> &[usize] {
        &self.into[self.into_start[v]..self.into_start[v + 1]]
    }

    pub fn targets_of(&self, u: usize) -> &[usize] {
        &self.out_of[self.out_start[u]..self.out_start[u + 1]]
    }
}

/// Forward and backward accumulators, `[t][c][s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BdppStates {
    pub f: Vec<f64>,
    pub b: Vec<f64>,
    /// Edges traversed by the forward and backward pass.
    pub forward_visits: usize,
    pub backward_visits: usize,
}

pub(crate) fn check_graph(params: &DiscreteParams, x: &[f64], graph: &SkipGraph) -> Result<(), SsmError> {
    params.check_input(x)?;
    if graph.n() != params.n {
        return Err(SsmError::GraphMismatch {
            graph: graph.n(),
            n: params.n,
        });
    }
    Ok(())
}

/// Runs both passes and returns the accumulators.
pub fn bdpp_passes(params: &DiscreteParams, x: &[f64], graph: &SkipGraph) -> Result<BdppStates, SsmError> {
    check_graph(params, x, graph)?;
    Ok(passes(params, x, &SkipSets::new(graph)))
}

pub(crate) fn passes(params: &DiscreteParams, x: &[f64], sets: &SkipSets) -> BdppStates {
    let (n, ch, ds) = (params.n, params.channels, params.d_state);
    let lanes = ch * ds;
    let (ab, bb) = (&params.a_bar, &params.b_bar);
    let mut f = vec![0.0; n * lanes];
    let (mut forward_visits, mut backward_visits) = (0, 0);
    for t in 0..n {
        let row = t * lanes;
        let (done, rest) = f.split_at_mut(row);
        let ft = &mut rest[..lanes];
        let (at, bt) = (&ab[row..row + lanes], &bb[row..row + lanes]);
        for ((fc, bc), &xv) in ft.chunks_exact_mut(ds).zip(bt.chunks_exact(ds)).zip(&x[t * ch..(t + 1) * ch]) {
            for (fv, &bv) in fc.iter_mut().zip(bc) {
                *fv = bv * xv;
            }
        }
        if t > 0 {
            forward_visits += 1;
            for ((fv, &pv), &av) in ft.iter_mut().zip(&done[row - lanes..]).zip(at) {
                *fv += pv * av;
            }
        }
        for &u in sets.sources_of(t) {
            forward_visits += 1;
            for ((fv, &pv), &av) in ft.iter_mut().zip(&done[u * lanes..(u + 1) * lanes]).zip(at) {
                *fv += pv * av;
            }
        }
    }

    let mut b = vec![0.0; n * lanes];
    if n > 0 {
        let root = (n - 1) * lanes;
        b[root..].copy_from_slice(&f[root..]);
    }
    for t in (0..n.saturating_sub(1)).rev() {
        let row = t * lanes;
        let (head, later) = b.split_at_mut(row + lanes);
        let bt = &mut head[row..];
        backward_visits += 1;
        for ((bv, &nv), &av) in bt.iter_mut().zip(&later[..lanes]).zip(&ab[row + lanes..row + 2 * lanes]) {
            *bv = nv * av;
        }
        for &v in sets.targets_of(t) {
            backward_visits += 1;
            let off = (v - t - 1) * lanes;
            for ((bv, &nv), &av) in bt
                .iter_mut()
                .zip(&later[off..off + lanes])
                .zip(&ab[v * lanes..(v + 1) * lanes])
            {
                *bv += nv * av;
            }
        }
    }
    BdppStates {
        f,
        b,
        forward_visits,
        backward_visits,
    }
}

pub(crate) fn readout(params: &DiscreteParams, st: &BdppStates, opts: BdppOptions) -> Vec<f64> {
    let (n, ch, ds) = (params.n, params.channels, params.d_state);
    let mut y = vec![0.0; n * ch];
    let rows = params
        .c
        .chunks_exact(ds)
        .zip(st.f.chunks_exact(ds))
        .zip(st.b.chunks_exact(ds));
    for (k, ((c, f), b)) in rows.enumerate() {
        y[k] = if opts.dedup_root && k / ch + 1 == n {
            c.iter().zip(f).map(|(c, f)| c * f).sum()
        } else {
            c.iter().zip(f).zip(b).map(|((c, f), b)| c * (f + b)).sum()
        };
    }
    y
}

/// Output `y_t = sum_s C_t (F_t + B_t)` of the bidirectional pass over
/// `graph`. `x` is `[t][c]`.
pub fn bdpp_forward(params: &DiscreteParams, x: &[f64], graph: &SkipGraph, opts: BdppOptions) -> Result<Vec<f64>, SsmError> {
    let st = bdpp_passes(params, x, graph)?;
    Ok(readout(params, &st, opts))
}

/// Multiply-accumulate edge traversals of one pass: one per path edge and
/// one per skip edge.
pub fn edge_visit_count(graph: &SkipGraph) -> usize {
    graph.n().saturating_sub(1) + graph.skips().len()
}
