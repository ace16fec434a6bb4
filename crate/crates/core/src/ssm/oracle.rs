//! Quadratic reference evaluators, written without the pass structure of
//! the fast kernel.

use super::bdpp::check_graph;
use super::{BdppOptions, DiscreteParams, SsmError};
use crate::csr::SkipGraph;

pub const UNROLLED_MAX_N: usize = 256;
pub const PATHSUM_MAX_N: usize = 128;

/// Sums over every path of the DAG explicitly.
///
/// `W[k][i]` is the total weight of all increasing paths `k -> i`, where
/// stepping into `j` multiplies by `Ā_j`, so `F_i = sum_k W[k][i] B̄_k x_k`.
/// Backward, `R[i]` sums over decreasing paths from the root to `i`, where
/// leaving `j` multiplies by `Ā_j`, so `B_i = F_root R[i]`.
pub fn oracle_unrolled(params: &DiscreteParams, x: &[f64], graph: &SkipGraph, opts: BdppOptions) -> Result<Vec<f64>, SsmError> {
    check_graph(params, x, graph)?;
    let n = params.n;
    if n > UNROLLED_MAX_N {
        return Err(SsmError::TooLarge { n, max: UNROLLED_MAX_N });
    }
    let (ch, ds) = (params.channels, params.d_state);
    let mut y = vec![0.0; n * ch];
    if n == 0 {
        return Ok(y);
    }
    let preds: Vec<Vec<usize>> = (0..n)
        .map(|i| graph.neighbors(i).iter().copied().filter(|&p| p < i).collect())
        .collect();
    let succs: Vec<Vec<usize>> = (0..n)
        .map(|i| graph.neighbors(i).iter().copied().filter(|&s| s > i).collect())
        .collect();
    let at = |t: usize, c: usize, s: usize| (t * ch + c) * ds + s;

    let mut w = vec![0.0; n * n];
    let mut r = vec![0.0; n];
    for c in 0..ch {
        for s in 0..ds {
            let a = |t: usize| params.a_bar[at(t, c, s)];
            w.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..n {
                w[k * n + k] = 1.0;
                for i in k + 1..n {
                    let total: f64 = preds[i].iter().filter(|&&p| p >= k).map(|&p| w[k * n + p]).sum();
                    w[k * n + i] = total * a(i);
                }
            }
            let f: Vec<f64> = (0..n)
                .map(|i| {
                    (0..=i)
                        .map(|k| w[k * n + i] * params.b_bar[at(k, c, s)] * x[k * ch + c])
                        .sum()
                })
                .collect();
            r[n - 1] = 1.0;
            for i in (0..n - 1).rev() {
                r[i] = succs[i].iter().map(|&v| r[v] * a(v)).sum();
            }
            for i in 0..n {
                let mut b = f[n - 1] * r[i];
                if opts.dedup_root && i == n - 1 {
                    b = 0.0;
                }
                y[i * ch + c] += params.c[at(i, c, s)] * (f[i] + b);
            }
        }
    }
    Ok(y)
}

/// Shortest-path semantics: `y_t = sum_s C_t sum_i x_i B̄_i prod_j Ā_j` with
/// `j` running over the vertices of the lexicographically first shortest
/// path `i -> t`, source excluded and target included.
pub fn oracle_pathsum(params: &DiscreteParams, x: &[f64], graph: &SkipGraph) -> Result<Vec<f64>, SsmError> {
    check_graph(params, x, graph)?;
    let n = params.n;
    if n > PATHSUM_MAX_N {
        return Err(SsmError::TooLarge { n, max: PATHSUM_MAX_N });
    }
    let (ch, ds) = (params.channels, params.d_state);
    let at = |t: usize, c: usize, s: usize| (t * ch + c) * ds + s;
    let mut y = vec![0.0; n * ch];
    for t in 0..n {
        let paths: Vec<Vec<usize>> = (0..n)
            .map(|i| graph.shortest_path_vertices(i, t).expect("positions in range"))
            .collect();
        for c in 0..ch {
            for s in 0..ds {
                let mut acc = 0.0;
                for (i, path) in paths.iter().enumerate() {
                    let gain: f64 = path[1..].iter().map(|&j| params.a_bar[at(j, c, s)]).product();
                    acc += x[i * ch + c] * params.b_bar[at(i, c, s)] * gain;
                }
                y[t * ch + c] += params.c[at(t, c, s)] * acc;
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::ssm::{bdpp_forward, recurrence_forward};

    #[test]
    fn small_cases() {
        let p = DiscreteParams::constant(1, 1, 1, &[0.5], &[1.0], &[1.0]).unwrap();
        assert_eq!(
            oracle_unrolled(&p, &[3.0], &SkipGraph::path(1), BdppOptions::default()).unwrap(),
            vec![6.0]
        );
        let p = DiscreteParams::random(&mut rng::seeded(9), 6, 2, 2);
        let g = SkipGraph::with_skips(6, &[(0, 4)]).unwrap();
        assert!(oracle_unrolled(&p, &[0.0; 12], &g, BdppOptions::default())
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn agrees_with_fast_kernel_on_skips() {
        let mut r = rng::seeded(10);
        let p = DiscreteParams::random(&mut r, 12, 2, 3);
        let x = crate::ssm::normals(&mut r, 24);
        let g = SkipGraph::with_skips(12, &[(0, 7), (11, 3), (2, 9)]).unwrap();
        for dedup_root in [false, true] {
            let o = BdppOptions { dedup_root };
            let a = bdpp_forward(&p, &x, &g, o).unwrap();
            let b = oracle_unrolled(&p, &x, &g, o).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn pathsum_on_a_path_is_the_recurrence_for_t_after_i() {
        // no skips: for i <= t the path is i, i+1, .., t and the product is
        // Ā_{i+1} .. Ā_t; for i > t it runs backwards over Ā_{i-1} .. Ā_t.
        let p = DiscreteParams {
            n: 3,
            channels: 1,
            d_state: 1,
            a_bar: vec![0.1, 0.2, 0.3],
            b_bar: vec![1.0, 1.0, 1.0],
            c: vec![1.0, 1.0, 1.0],
        };
        let x = [1.0, 10.0, 100.0];
        let y = oracle_pathsum(&p, &x, &SkipGraph::path(3)).unwrap();
        let want = [
            1.0 + 10.0 * 0.1 + 100.0 * 0.2 * 0.1,
            0.2 + 10.0 + 100.0 * 0.2,
            0.06 + 3.0 + 100.0,
        ];
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{y:?}");
        }
        let rec = recurrence_forward(&p, &x).unwrap();
        assert!((rec[2] - y[2]).abs() < 1e-12);
    }

    #[test]
    fn size_limits() {
        let p = DiscreteParams::zeros(257, 1, 1);
        let g = SkipGraph::path(257);
        assert_eq!(
            oracle_unrolled(&p, &[0.0; 257], &g, BdppOptions::default()),
            Err(SsmError::TooLarge { n: 257, max: 256 })
        );
        let p = DiscreteParams::zeros(129, 1, 1);
        assert_eq!(
            oracle_pathsum(&p, &[0.0; 129], &SkipGraph::path(129)),
            Err(SsmError::TooLarge { n: 129, max: 128 })
        );
    }
}
