//! Greedy skip-edge construction.
//!
//! Each round scores every patch `p` by its information aggregation score
//!
//! ```text
//! S(p) = sum over grid neighbours q in the 3x3 window of D_f(p, q) / D_e(p, q)
//! ```
//!
//! where `D_e` is 1 or sqrt(2). The default rules pick the worst-scoring
//! patch as source and the most misaligned window neighbour as target, add
//! that skip edge with traversal cost one hop, and relax routing distances
//! with
//!
//! ```text
//! D_f(x, y) <- min(D_f(x, y), D_f(x, u) + 1 + D_f(v, y), D_f(x, v) + 1 + D_f(u, y))
//! ```
//!
//! which is exact for a single inserted unit edge. Only window pairs are
//! tracked, so a round costs two BFS passes plus one sweep over the windows.
//! Ties go to the lowest source index, then the lowest target index. A pair
//! that is already an edge is passed over in favour of the next-ranked pair;
//! a round with no usable pair adds nothing and is recorded as skipped.

use std::cmp::Ordering;

use super::{GraphError, SkipGraph};
use crate::curve::ScanOrder;

/// Which window cells count toward a score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WindowPolicy {
    /// Only patches with all eight grid neighbours are scored.
    Full,
    /// Every patch is scored over the in-grid part of its window.
    #[default]
    Clipped,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SourceRule {
    /// Highest score (worst locality) first.
    #[default]
    Worst,
    /// Lowest score first.
    Best,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TargetRule {
    /// Largest `D_f / D_e` first.
    #[default]
    MostMisaligned,
    /// Smallest `D_f / D_e` first.
    LeastMisaligned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CsrConfig {
    /// `None` means `ceil(log2 N)`.
    pub iterations: Option<usize>,
    pub window: WindowPolicy,
    pub source: SourceRule,
    pub target: TargetRule,
}

impl Default for CsrConfig {
    fn default() -> Self {
        Self {
            iterations: None,
            window: WindowPolicy::Clipped,
            source: SourceRule::Worst,
            target: TargetRule::MostMisaligned,
        }
    }
}

/// `ceil(log2 n)` for `n >= 1`.
pub fn default_iterations(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// Per-position scores; `None` for positions the window policy excludes.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationScore {
    pub per_patch: Vec<Option<f64>>,
}

impl AggregationScore {
    pub fn scored(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.per_patch.iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RoundOutcome {
    Added {
        source: usize,
        target: usize,
        score: f64,
        ratio: f64,
    },
    /// Every candidate pair was already an edge.
    Skipped,
}

#[derive(Clone, Debug)]
pub struct CsrBuild {
    pub graph: SkipGraph,
    pub rounds: Vec<RoundOutcome>,
}

impl CsrBuild {
    /// Graph after the first `k` added edges.
    pub fn prefix(&self, k: usize) -> SkipGraph {
        SkipGraph::with_skips(self.graph.n(), &self.graph.skips()[..k]).expect("prefix of a valid graph")
    }

    pub fn skipped_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| matches!(r, RoundOutcome::Skipped)).count()
    }
}

const OFFSETS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

struct Window {
    /// (neighbour sequence index, euclidean distance)
    neighbours: Vec<(usize, f64)>,
    full: bool,
}

fn windows(order: &ScanOrder) -> Vec<Window> {
    let shape = order.shape();
    order
        .cells()
        .iter()
        .map(|c| {
            let mut neighbours = Vec::with_capacity(8);
            for (dx, dy) in OFFSETS {
                let (x, y) = (c.x as isize + dx, c.y as isize + dy);
                if x < 0 || y < 0 || x as usize >= shape.width || y as usize >= shape.height {
                    continue;
                }
                let q = crate::curve::Cell::new(x as usize, y as usize);
                let de = if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                neighbours.push((order.index_of(q), de));
            }
            let full = neighbours.len() == 8;
            Window { neighbours, full }
        })
        .collect()
}

fn score_from(windows: &[Window], dist: &[Vec<u32>], policy: WindowPolicy) -> AggregationScore {
    let per_patch = windows
        .iter()
        .zip(dist)
        .map(|(w, d)| {
            if policy == WindowPolicy::Full && !w.full {
                return None;
            }
            Some(w.neighbours.iter().zip(d).map(|(&(_, de), &df)| df as f64 / de).sum())
        })
        .collect();
    AggregationScore { per_patch }
}

/// Aggregation scores of `order` under the routing distances of `graph`.
pub fn aggregation_scores(order: &ScanOrder, graph: &SkipGraph, policy: WindowPolicy) -> Result<AggregationScore, GraphError> {
    if graph.n() != order.len() {
        return Err(GraphError::LengthMismatch {
            graph: graph.n(),
            order: order.len(),
        });
    }
    let windows = windows(order);
    if policy == WindowPolicy::Full && !windows.iter().any(|w| w.full) {
        return Err(GraphError::GridTooSmall);
    }
    let dist: Vec<Vec<u32>> = windows
        .iter()
        .enumerate()
        .map(|(p, w)| {
            let from_p = graph.distances_from(p).expect("p < n");
            w.neighbours.iter().map(|&(q, _)| from_p[q]).collect()
        })
        .collect();
    Ok(score_from(&windows, &dist, policy))
}

/// Builds the skip graph with the default configuration.
pub fn build_skip_graph(order: &ScanOrder) -> SkipGraph {
    build_skip_graph_with(order, &CsrConfig::default()).graph
}

pub fn build_skip_graph_with(order: &ScanOrder, config: &CsrConfig) -> CsrBuild {
    let n = order.len();
    let iterations = config.iterations.unwrap_or_else(|| default_iterations(n));
    let windows = windows(order);
    let mut graph = SkipGraph::path(n);
    let mut dist: Vec<Vec<u32>> = windows
        .iter()
        .enumerate()
        .map(|(p, w)| w.neighbours.iter().map(|&(q, _)| p.abs_diff(q) as u32).collect())
        .collect();
    let mut rounds = Vec::with_capacity(iterations);

    for _ in 0..iterations {
        let scores = score_from(&windows, &dist, config.window);
        let Some((source, target, score, ratio)) = pick(&windows, &dist, &scores, config) else {
            rounds.push(RoundOutcome::Skipped);
            continue;
        };
        let du = graph.distances_from(source).expect("in range");
        let dv = graph.distances_from(target).expect("in range");
        for (p, (w, d)) in windows.iter().zip(dist.iter_mut()).enumerate() {
            for (&(q, _), dpq) in w.neighbours.iter().zip(d.iter_mut()) {
                let via_uv = du[p] + 1 + dv[q];
                let via_vu = dv[p] + 1 + du[q];
                *dpq = (*dpq).min(via_uv).min(via_vu);
            }
        }
        graph.add_skip(source, target).expect("picked pairs are never edges");
        rounds.push(RoundOutcome::Added {
            source,
            target,
            score,
            ratio,
        });
    }
    CsrBuild { graph, rounds }
}

fn pick(
    windows: &[Window],
    dist: &[Vec<u32>],
    scores: &AggregationScore,
    config: &CsrConfig,
) -> Option<(usize, usize, f64, f64)> {
    let mut sources: Vec<(usize, f64)> = scores.scored().collect();
    sources.sort_by(|a, b| {
        let by_score = match config.source {
            SourceRule::Worst => b.1.total_cmp(&a.1),
            SourceRule::Best => a.1.total_cmp(&b.1),
        };
        by_score.then(a.0.cmp(&b.0))
    });
    for (u, score) in sources {
        let mut targets: Vec<(usize, f64, u32)> = windows[u]
            .neighbours
            .iter()
            .zip(&dist[u])
            .map(|(&(q, de), &df)| (q, df as f64 / de, df))
            .collect();
        targets.sort_by(|a, b| {
            let by_ratio: Ordering = match config.target {
                TargetRule::MostMisaligned => b.1.total_cmp(&a.1),
                TargetRule::LeastMisaligned => a.1.total_cmp(&b.1),
            };
            by_ratio.then(a.0.cmp(&b.0))
        });
        // D_f == 1 means the pair is already joined by an edge
        if let Some(&(v, ratio, _)) = targets.iter().find(|t| t.2 >= 2) {
            return Some((u, v, score, ratio));
        }
    }
    None
}

/// Largest `D_f / D_e` over all grid-neighbour pairs.
pub fn max_window_misalignment(order: &ScanOrder, graph: &SkipGraph) -> f64 {
    windows(order)
        .iter()
        .enumerate()
        .flat_map(|(p, w)| {
            let from_p = graph.distances_from(p).expect("p < n");
            w.neighbours.iter().map(|&(q, de)| from_p[q] as f64 / de).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}
