//! Cross-state routing: the sequence path graph augmented with skip edges.
//!
//! Routing distance `D_f(x, y)` is the unweighted hop count between two
//! sequence positions over path edges `(i, i+1)` and skip edges, treating
//! every edge as undirected. Skip edges are chosen greedily by
//! [`build_skip_graph`]; see [`build`] for the selection rules.

pub mod build;

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use build::{
    aggregation_scores, build_skip_graph, build_skip_graph_with, default_iterations, max_window_misalignment, AggregationScore,
    CsrBuild, CsrConfig, RoundOutcome, SourceRule, TargetRule, WindowPolicy,
};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("position {pos} out of range for a graph of {n} nodes")]
    OutOfRange { pos: usize, n: usize },
    #[error("skip edge ({0}, {1}) is a self-loop or duplicates an existing edge")]
    InvalidEdge(usize, usize),
    #[error("no position has a full 3x3 window on this grid")]
    GridTooSmall,
    #[error("graph has {graph} nodes but the order has {order}")]
    LengthMismatch { graph: usize, order: usize },
}

/// Path graph over `n` sequence positions plus skip edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkipGraph {
    n: usize,
    skips: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl SkipGraph {
    pub fn path(n: usize) -> Self {
        let adj = (0..n)
            .map(|i| {
                let mut v = Vec::with_capacity(2);
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect();
        Self {
            n,
            skips: Vec::new(),
            adj,
        }
    }

    pub fn with_skips(n: usize, skips: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Self::path(n);
        for &(u, v) in skips {
            g.add_skip(u, v)?;
        }
        Ok(g)
    }

    /// Path of `n` nodes plus `min(skips, available)` distinct random skip
    /// edges, each stored with a random orientation.
    pub fn random(rng: &mut crate::rng::Rng, n: usize, skips: usize) -> Self {
        use rand::Rng as _;
        let mut g = Self::path(n);
        let available = if n < 3 { 0 } else { (n - 1) * (n - 2) / 2 };
        while g.skips.len() < skips.min(available) {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a.abs_diff(b) > 1 && !g.has_edge(a, b) {
                g.add_skip(a, b).expect("checked above");
            }
        }
        g
    }

    /// Adds the skip edge `(source, target)`. Rejects self-loops, path edges
    /// and repeats in either direction.
    pub fn add_skip(&mut self, source: usize, target: usize) -> Result<(), GraphError> {
        self.check(source)?;
        self.check(target)?;
        if source == target || self.has_edge(source, target) {
            return Err(GraphError::InvalidEdge(source, target));
        }
        self.skips.push((source, target));
        for (a, b) in [(source, target), (target, source)] {
            let list = &mut self.adj[a];
            let at = list.partition_point(|&w| w < b);
            list.insert(at, b);
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Skip edges as `(source, target)` in insertion order.
    pub fn skips(&self) -> &[(usize, usize)] {
        &self.skips
    }

    /// Skip edges as `(low, high)` pairs, sorted.
    pub fn forward_skips(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<_> = self.skips.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        v.sort_unstable();
        v
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.n && self.adj[a].binary_search(&b).is_ok()
    }

    /// Neighbours of `v`, ascending.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    fn check(&self, pos: usize) -> Result<(), GraphError> {
        if pos < self.n {
            Ok(())
        } else {
            Err(GraphError::OutOfRange { pos, n: self.n })
        }
    }

    /// Hop counts from `src` to every node.
    pub fn distances_from(&self, src: usize) -> Result<Vec<u32>, GraphError> {
        self.check(src)?;
        let mut dist = vec![u32::MAX; self.n];
        let mut queue = VecDeque::with_capacity(self.n);
        dist[src] = 0;
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            let d = dist[v] + 1;
            for &w in &self.adj[v] {
                if dist[w] == u32::MAX {
                    dist[w] = d;
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }

    pub fn routing_distance(&self, x: usize, y: usize) -> Result<u32, GraphError> {
        self.check(y)?;
        Ok(self.distances_from(x)?[y])
    }

    /// One shortest path from `from` to `to`, both inclusive. Among all
    /// shortest paths the lexicographically smallest vertex sequence wins.
    pub fn shortest_path_vertices(&self, from: usize, to: usize) -> Result<Vec<usize>, GraphError> {
        self.check(from)?;
        let dist_to = self.distances_from(to)?;
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            let want = dist_to[cur] - 1;
            cur = *self.adj[cur]
                .iter()
                .find(|&&w| dist_to[w] == want)
                .expect("a neighbour one hop closer always exists");
            path.push(cur);
        }
        Ok(path)
    }

    /// Graphviz rendering: path edges solid, skip edges dashed.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph csr {\n  rankdir=LR;\n  node [shape=circle];\n");
        for i in 0..self.n {
            let _ = writeln!(s, "  {i};");
        }
        for i in 1..self.n {
            let _ = writeln!(s, "  {} -- {};", i - 1, i);
        }
        for &(u, v) in &self.skips {
            let _ = writeln!(s, "  {u} -- {v} [style=dashed, color=red, constraint=false];");
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(GraphFile {
            n: self.n,
            skips: self.skips.iter().map(|&(u, v)| [u, v]).collect(),
        })
        .expect("plain struct")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, serde_json::Error> {
        let file: GraphFile = serde_json::from_value(value.clone())?;
        let skips: Vec<_> = file.skips.iter().map(|e| (e[0], e[1])).collect();
        Self::with_skips(file.n, &skips).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    skips: Vec<[usize; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_graph_counts() {
        let mut r = crate::rng::seeded(4);
        for n in 0..12 {
            let g = SkipGraph::random(&mut r, n, 6);
            let cap = if n < 3 { 0 } else { (n - 1) * (n - 2) / 2 };
            assert_eq!(g.skips().len(), cap.min(6));
            assert!(g.skips().iter().all(|&(a, b)| a.abs_diff(b) > 1));
        }
    }

    #[test]
    fn path_distances() {
        let g = SkipGraph::path(16);
        assert_eq!(g.routing_distance(3, 3).unwrap(), 0);
        assert_eq!(g.routing_distance(0, 5).unwrap(), 5);
        assert_eq!(g.shortest_path_vertices(2, 5).unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(g.shortest_path_vertices(4, 4).unwrap(), vec![4]);
    }

    #[test]
    fn skip_shortcuts() {
        let g = SkipGraph::with_skips(16, &[(0, 9)]).unwrap();
        assert_eq!(g.routing_distance(0, 10).unwrap(), 2);
        assert_eq!(g.shortest_path_vertices(1, 9).unwrap(), vec![1, 0, 9]);
        assert_eq!(g.shortest_path_vertices(9, 1).unwrap(), vec![9, 0, 1]);
    }

    #[test]
    fn lexicographic_tie_break() {
        // 0..=4 with skip (0, 4): from 2 to 0 via 1 only; from 0 to 2 via 1
        // or via 4-3 (longer). With skip (0,2) and (1,3), 0 -> 3 has paths
        // [0,1,3] and [0,2,3]; the smaller wins.
        let g = SkipGraph::with_skips(6, &[(0, 2), (1, 3)]).unwrap();
        assert_eq!(g.shortest_path_vertices(0, 3).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn rejects_bad_edges() {
        let mut g = SkipGraph::path(5);
        assert_eq!(g.add_skip(1, 1), Err(GraphError::InvalidEdge(1, 1)));
        assert_eq!(g.add_skip(1, 2), Err(GraphError::InvalidEdge(1, 2)));
        g.add_skip(0, 3).unwrap();
        assert_eq!(g.add_skip(3, 0), Err(GraphError::InvalidEdge(3, 0)));
        assert_eq!(g.add_skip(0, 7), Err(GraphError::OutOfRange { pos: 7, n: 5 }));
        assert_eq!(g.routing_distance(0, 9), Err(GraphError::OutOfRange { pos: 9, n: 5 }));
    }

    #[test]
    fn json_round_trip_and_dot() {
        let g = SkipGraph::with_skips(8, &[(6, 1), (0, 4)]).unwrap();
        let j = g.to_json();
        assert_eq!(j.to_string(), r#"{"n":8,"skips":[[6,1],[0,4]]}"#);
        assert_eq!(SkipGraph::from_json(&j).unwrap(), g);
        let dot = g.to_dot();
        assert!(dot.contains("6 -- 1 [style=dashed"));
        assert!(dot.contains("  2 -- 3;\n"));
        assert_eq!(g.forward_skips(), vec![(0, 4), (1, 6)]);
    }
}
