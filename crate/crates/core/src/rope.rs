//! Rotary position encoding along the serialized sequence.
//!
//! Channel pairs `(2t, 2t+1)` are read as the complex number
//! `v[2t] + i v[2t+1]` and multiplied by `exp(i θ_t n)` with
//! `θ_t = 10000^(-t / (d/2))`, where `n` is the 1D sequence index.

use crate::curve::ScanOrder;
use crate::ssm::SequenceBatch;

pub const BASE: f64 = 10000.0;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RopeError {
    #[error("rotary dimension must be even and positive, got {0}")]
    OddDimension(usize),
    #[error("query has {q} components but key has {k}")]
    DimensionMismatch { q: usize, k: usize },
    #[error("channel count must be even, got {0}")]
    OddChannels(usize),
    #[error("batch length {batch} does not match order length {order}")]
    LengthMismatch { batch: usize, order: usize },
}

fn check_dim(d: usize) -> Result<(), RopeError> {
    if d == 0 || d % 2 == 1 {
        Err(RopeError::OddDimension(d))
    } else {
        Ok(())
    }
}

/// Frequencies `θ_t` for a head of dimension `d`.
pub fn frequencies(d: usize) -> Result<Vec<f64>, RopeError> {
    check_dim(d)?;
    let half = d / 2;
    Ok((0..half).map(|t| BASE.powf(-(t as f64) / half as f64)).collect())
}

/// Precomputed `cos(θ_t n)` and `sin(θ_t n)` for `n < max_len`.
#[derive(Clone, Debug, PartialEq)]
pub struct RopeTable {
    d_head: usize,
    theta: Vec<f64>,
    max_len: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RopeTable {
    pub fn new(d_head: usize, max_len: usize) -> Result<Self, RopeError> {
        let theta = frequencies(d_head)?;
        let mut table = Self {
            d_head,
            theta,
            max_len: 0,
            cos: Vec::new(),
            sin: Vec::new(),
        };
        table.ensure_len(max_len);
        Ok(table)
    }

    pub fn d_head(&self) -> usize {
        self.d_head
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Grows the caches to cover positions `< len`.
    pub fn ensure_len(&mut self, len: usize) {
        if len <= self.max_len {
            return;
        }
        let half = self.theta.len();
        self.cos.reserve((len - self.max_len) * half);
        self.sin.reserve((len - self.max_len) * half);
        for n in self.max_len..len {
            for &th in &self.theta {
                let (s, c) = (th * n as f64).sin_cos();
                self.cos.push(c);
                self.sin.push(s);
            }
        }
        self.max_len = len;
    }

    fn angle(&self, n: usize, t: usize) -> (f64, f64) {
        if n < self.max_len {
            let k = n * self.theta.len() + t;
            (self.cos[k], self.sin[k])
        } else {
            let (s, c) = (self.theta[t] * n as f64).sin_cos();
            (c, s)
        }
    }

    /// Rotates `v` in place by `sign * θ n`; `sign = -1` undoes a rotation.
    fn rotate(&self, v: &mut [f64], n: usize, sign: f64) {
        for t in 0..self.theta.len() {
            let (c, s) = self.angle(n, t);
            let s = sign * s;
            let (re, im) = (v[2 * t], v[2 * t + 1]);
            v[2 * t] = re * c - im * s;
            v[2 * t + 1] = re * s + im * c;
        }
    }

    pub fn apply(&self, v: &[f64], n: usize) -> Result<Vec<f64>, RopeError> {
        if v.len() != self.d_head {
            return Err(RopeError::DimensionMismatch {
                q: v.len(),
                k: self.d_head,
            });
        }
        let mut out = v.to_vec();
        if n != 0 {
            self.rotate(&mut out, n, 1.0);
        }
        Ok(out)
    }

    /// Transpose of [`RopeTable::apply`], used to pull gradients back
    /// through the rotation.
    pub fn apply_inverse(&self, v: &[f64], n: usize) -> Result<Vec<f64>, RopeError> {
        if v.len() != self.d_head {
            return Err(RopeError::DimensionMismatch {
                q: v.len(),
                k: self.d_head,
            });
        }
        let mut out = v.to_vec();
        if n != 0 {
            self.rotate(&mut out, n, -1.0);
        }
        Ok(out)
    }
}

/// Rotates `v` to position `n`. Positions are usually sequence indices but
/// any real value is accepted.
pub fn apply_rope(v: &[f64], n: f64) -> Result<Vec<f64>, RopeError> {
    let theta = frequencies(v.len())?;
    let mut out = v.to_vec();
    if n != 0.0 {
        for (t, th) in theta.iter().enumerate() {
            let (s, c) = (th * n).sin_cos();
            let (re, im) = (out[2 * t], out[2 * t + 1]);
            out[2 * t] = re * c - im * s;
            out[2 * t + 1] = re * s + im * c;
        }
    }
    Ok(out)
}

/// `Re <rope(q, n), conj(rope(k, m))>` over complex pairs, which equals
/// `sum_t Re[q_t conj(k_t) exp(i θ_t (n - m))]`.
pub fn rope_score(q: &[f64], k: &[f64], n: f64, m: f64) -> Result<f64, RopeError> {
    if q.len() != k.len() {
        return Err(RopeError::DimensionMismatch { q: q.len(), k: k.len() });
    }
    let rq = apply_rope(q, n)?;
    let rk = apply_rope(k, m)?;
    Ok(rq.iter().zip(&rk).map(|(a, b)| a * b).sum())
}

/// Rotates token `t` of every sequence by its sequence index `t` along
/// `order`. Tokens keep their storage positions.
pub fn embed_positions(batch: &SequenceBatch, order: &ScanOrder, table: &RopeTable) -> Result<SequenceBatch, RopeError> {
    let ch = batch.channels();
    if ch % 2 == 1 {
        return Err(RopeError::OddChannels(ch));
    }
    if batch.len() != order.len() {
        return Err(RopeError::LengthMismatch {
            batch: batch.len(),
            order: order.len(),
        });
    }
    if ch != table.d_head() {
        return Err(RopeError::DimensionMismatch {
            q: ch,
            k: table.d_head(),
        });
    }
    let mut out = batch.clone();
    for b in 0..batch.batch() {
        for t in 1..batch.len() {
            table.rotate(out.token_mut(b, t), t, 1.0);
        }
    }
    Ok(out)
}
