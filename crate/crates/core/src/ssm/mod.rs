//! Selective state-space kernels.
//!
//! `A` is diagonal per channel, so every kernel runs independently on each
//! `(channel, state)` lane and all arithmetic is elementwise. Per-position
//! tensors use the layout `[t][c][s]` (position, channel, state) and inputs
//! and outputs use `[t][c]`.
//!
//! [`bdpp_forward`] runs two passes over the path graph plus skip edges. A
//! skip `(u, v)` is always read with `u < v`. Forward, leaf to root:
//!
//! ```text
//! F_0 = B̄_0 x_0
//! F_i = B̄_i x_i + F_{i-1} Ā_i + sum_{u in V_i} F_u Ā_i      V_i = {u : (u, i) skip}
//! ```
//!
//! Backward, root (last position) to leaf. A child takes its parent's
//! accumulator scaled by the parent's `Ā`:
//!
//! ```text
//! B_{n-1} = F_{n-1}
//! B_i     = B_{i+1} Ā_{i+1} + sum_{v in U_i} B_v Ā_v            U_i = {v : (i, v) skip}
//! y_i     = sum_s C_i (F_i + B_i)
//! ```
//!
//! For `n = 3` without skips and scalar lanes this gives
//! `F = (b0 x0, b1 x1 + a1 F0, b2 x2 + a2 F1)` and
//! `B = (a1 B1, a2 F2, F2)`. The root adds `F_root` twice unless
//! [`BdppOptions::dedup_root`] is set.

pub(crate) mod bdpp;
mod discretize;
mod oracle;
mod recurrence;

pub use bdpp::{bdpp_forward, bdpp_passes, edge_visit_count, BdppOptions, BdppStates, SkipSets};
pub use discretize::{discretize, discretize_derivatives, ZohDerivatives, SERIES_CUTOFF};
pub use oracle::{oracle_pathsum, oracle_unrolled, PATHSUM_MAX_N, UNROLLED_MAX_N};
pub use recurrence::{causal_conv, conv_kernel, recurrence_forward};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SsmError {
    #[error("{what}: expected {expected} values, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("graph has {graph} nodes but the sequence has {n}")]
    GraphMismatch { graph: usize, n: usize },
    #[error("delta must be non-negative and finite, got {0}")]
    NonPositiveDelta(f64),
    #[error("parameters vary along the sequence")]
    NonConstantParams,
    #[error("sequence of length {n} exceeds the reference limit {max}")]
    TooLarge { n: usize, max: usize },
}

pub(crate) fn expect_len(what: &'static str, expected: usize, got: usize) -> Result<(), SsmError> {
    if expected == got {
        Ok(())
    } else {
        Err(SsmError::ShapeMismatch { what, expected, got })
    }
}

/// Continuous-time parameters of one sequence.
///
/// `a` is `[c][s]`, `b` and `c` are `[t][s]` (shared by all channels, as in
/// selective models), `delta` is `[t][c]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmParams {
    pub n: usize,
    pub channels: usize,
    pub d_state: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub delta: Vec<f64>,
}

impl SsmParams {
    pub fn check(&self) -> Result<(), SsmError> {
        let (n, ch, ds) = (self.n, self.channels, self.d_state);
        expect_len("a", ch * ds, self.a.len())?;
        expect_len("b", n * ds, self.b.len())?;
        expect_len("c", n * ds, self.c.len())?;
        expect_len("delta", n * ch, self.delta.len())
    }

    /// Zero-order hold on every position, channel and state.
    pub fn discretize(&self) -> Result<DiscreteParams, SsmError> {
        self.check()?;
        let (n, ch, ds) = (self.n, self.channels, self.d_state);
        let mut out = DiscreteParams::zeros(n, ch, ds);
        for t in 0..n {
            for c in 0..ch {
                let dt = self.delta[t * ch + c];
                for s in 0..ds {
                    let k = (t * ch + c) * ds + s;
                    let (ab, bb) = discretize(self.a[c * ds + s], self.b[t * ds + s], dt)?;
                    out.a_bar[k] = ab;
                    out.b_bar[k] = bb;
                    out.c[k] = self.c[t * ds + s];
                }
            }
        }
        Ok(out)
    }

    /// Random stable instance: `a` in `[-2, -0.05]`, `delta` in `[0.05, 1]`,
    /// standard normal `b` and `c`.
    pub fn random(rng: &mut Rng, n: usize, channels: usize, d_state: usize) -> Self {
        Self {
            n,
            channels,
            d_state,
            a: (0..channels * d_state).map(|_| -rng.random_range(0.05..2.0)).collect(),
            b: normals(rng, n * d_state),
            c: normals(rng, n * d_state),
            delta: (0..n * channels).map(|_| rng.random_range(0.05..1.0)).collect(),
        }
    }
}

/// Discretized per-position parameters, all `[t][c][s]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteParams {
    pub n: usize,
    pub channels: usize,
    pub d_state: usize,
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub c: Vec<f64>,
}

impl DiscreteParams {
    pub fn zeros(n: usize, channels: usize, d_state: usize) -> Self {
        let len = n * channels * d_state;
        Self {
            n,
            channels,
            d_state,
            a_bar: vec![0.0; len],
            b_bar: vec![0.0; len],
            c: vec![0.0; len],
        }
    }

    /// Same `(Ā, B̄, C)` at every position; each argument is `[c][s]`.
    pub fn constant(
        n: usize,
        channels: usize,
        d_state: usize,
        a_bar: &[f64],
        b_bar: &[f64],
        c: &[f64],
    ) -> Result<Self, SsmError> {
        let lane = channels * d_state;
        expect_len("a_bar", lane, a_bar.len())?;
        expect_len("b_bar", lane, b_bar.len())?;
        expect_len("c", lane, c.len())?;
        Ok(Self {
            n,
            channels,
            d_state,
            a_bar: a_bar.repeat(n),
            b_bar: b_bar.repeat(n),
            c: c.repeat(n),
        })
    }

    pub fn lanes(&self) -> usize {
        self.channels * self.d_state
    }

    pub fn check(&self) -> Result<(), SsmError> {
        let len = self.n * self.lanes();
        expect_len("a_bar", len, self.a_bar.len())?;
        expect_len("b_bar", len, self.b_bar.len())?;
        expect_len("c", len, self.c.len())
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<(), SsmError> {
        self.check()?;
        expect_len("x", self.n * self.channels, x.len())
    }

    /// Random instance with `Ā` in `(0.05, 0.95)` and standard normal `B̄`, `C`.
    pub fn random(rng: &mut Rng, n: usize, channels: usize, d_state: usize) -> Self {
        let len = n * channels * d_state;
        Self {
            n,
            channels,
            d_state,
            a_bar: (0..len).map(|_| rng.random_range(0.05..0.95)).collect(),
            b_bar: normals(rng, len),
            c: normals(rng, len),
        }
    }
}

pub(crate) fn normals(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// A batch of sequences stored `[b][t][c]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceBatch {
    batch: usize,
    len: usize,
    channels: usize,
    data: Vec<f64>,
}

impl SequenceBatch {
    pub fn new(batch: usize, len: usize, channels: usize, data: Vec<f64>) -> Result<Self, SsmError> {
        expect_len("sequence batch", batch * len * channels, data.len())?;
        Ok(Self {
            batch,
            len,
            channels,
            data,
        })
    }

    pub fn zeros(batch: usize, len: usize, channels: usize) -> Self {
        Self {
            batch,
            len,
            channels,
            data: vec![0.0; batch * len * channels],
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Sequence `b` as `[t][c]`.
    pub fn item(&self, b: usize) -> &[f64] {
        let stride = self.len * self.channels;
        &self.data[b * stride..(b + 1) * stride]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [f64] {
        let stride = self.len * self.channels;
        &mut self.data[b * stride..(b + 1) * stride]
    }

    /// Token `(b, t)` as a slice of `channels` values.
    pub fn token(&self, b: usize, t: usize) -> &[f64] {
        let at = (b * self.len + t) * self.channels;
        &self.data[at..at + self.channels]
    }

    pub fn token_mut(&mut self, b: usize, t: usize) -> &mut [f64] {
        let at = (b * self.len + t) * self.channels;
        &mut self.data[at..at + self.channels]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
