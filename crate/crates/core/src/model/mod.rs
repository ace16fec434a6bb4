//! A minimal single-stage block stack for grid classification.
//!
//! ```text
//! pixels --(order)--> tokens --linear--> u_0 --[RoPE]--> u_0
//! block:  x = norm(u)
//!         Δ = softplus(W_Δ x + b_Δ), B = W_B x, C = W_C x, a = -exp(a_log)
//!         y = SSM(a, B, C, Δ; x)            bidirectional pass over the skip
//!                                           graph, or the plain recurrence
//!                                           when routing is disabled
//!         h = u + y
//!         u' = h + W_2 tanh(W_1 norm(h) + b_1) + b_2
//! logits = W_head mean_t(u_L) + b_head
//! ```
//!
//! `norm` divides each token by `sqrt(mean(x^2) + 1)` and has no gain.
//!
//! All parameters live in one flat `f64` vector; [`Layout`] names the slices
//! in storage order. Biases start at zero except `b_Δ`; `a_log` is set so
//! that `a` is log-spaced over `[-1, -1e-2]` within each channel.

mod task;
mod train;

pub use task::{Dataset, SynthTask, TaskKind};
pub use train::{
    eval_resolution_transfer, evaluate_at, load_checkpoint, model_fd_step, model_gradient_check, save_checkpoint, train,
    Checkpoint, CheckpointError, MetricRow, ModelGradcheck, TrainConfig, TrainError, TransferReport, TransferSeed,
};

use std::ops::Range;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::csr::{build_skip_graph, SkipGraph};
use crate::curve::{generate_order, CurveError, CurveKind, GridShape, ScanOrder};
use crate::grad::{bdpp_backward, discretize_backward, recurrence_backward};
use crate::rng;
use crate::rope::RopeTable;
use crate::ssm::{bdpp_forward, recurrence_forward, BdppOptions, SsmError, SsmParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub d_model: usize,
    pub d_state: usize,
    pub n_blocks: usize,
    pub curve: CurveKind,
    pub use_csr: bool,
    pub use_prc: bool,
    pub seed: u64,
    pub classes: usize,
    pub mlp_hidden: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            d_model: 8,
            d_state: 4,
            n_blocks: 1,
            curve: CurveKind::Hilbert,
            use_csr: true,
            use_prc: true,
            seed: rng::DEFAULT_SEED,
            classes: 2,
            mlp_hidden: 16,
        }
    }
}

impl BlockConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |why: &str| Err(ModelError::InvalidConfig(why.to_string()));
        if self.d_model == 0 || self.d_state == 0 || self.mlp_hidden == 0 {
            return bad("d_model, d_state and mlp_hidden must be at least 1");
        }
        if self.classes < 2 {
            return bad("at least two classes are needed");
        }
        if self.use_prc && self.d_model % 2 == 1 {
            return bad("d_model must be even when rotary positions are enabled");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Ssm(#[from] SsmError),
    #[error("image has {got} cells, expected {expected}")]
    ImageSize { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
}

/// Parameter slices of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSlots {
    pub delta_w: Range<usize>,
    pub delta_b: Range<usize>,
    pub b_w: Range<usize>,
    pub c_w: Range<usize>,
    pub a_log: Range<usize>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
}

/// Storage order of the flat parameter vector. Matrices are `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub embed_w: Range<usize>,
    pub embed_b: Range<usize>,
    pub blocks: Vec<BlockSlots>,
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
    pub total: usize,
    entries: Vec<(String, Vec<usize>)>,
}

impl Layout {
    pub fn new(cfg: &BlockConfig) -> Self {
        let (d, s, hid, k) = (cfg.d_model, cfg.d_state, cfg.mlp_hidden, cfg.classes);
        let mut at = 0;
        let mut entries = Vec::new();
        let mut take = |name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            entries.push((name, shape));
            at += len;
            at - len..at
        };
        let embed_w = take("embed.w".into(), vec![d, 1]);
        let embed_b = take("embed.b".into(), vec![d]);
        let blocks = (0..cfg.n_blocks)
            .map(|i| BlockSlots {
                delta_w: take(format!("block{i}.delta.w"), vec![d, d]),
                delta_b: take(format!("block{i}.delta.b"), vec![d]),
                b_w: take(format!("block{i}.b.w"), vec![s, d]),
                c_w: take(format!("block{i}.c.w"), vec![s, d]),
                a_log: take(format!("block{i}.a_log"), vec![d, s]),
                w1: take(format!("block{i}.mlp.w1"), vec![hid, d]),
                b1: take(format!("block{i}.mlp.b1"), vec![hid]),
                w2: take(format!("block{i}.mlp.w2"), vec![d, hid]),
                b2: take(format!("block{i}.mlp.b2"), vec![d]),
            })
            .collect();
        let head_w = take("head.w".into(), vec![k, d]);
        let head_b = take("head.b".into(), vec![k]);
        Self {
            embed_w,
            embed_b,
            blocks,
            head_w,
            head_b,
            total: at,
            entries,
        }
    }

    /// `(name, shape)` for every slice, in storage order.
    pub fn entries(&self) -> &[(String, Vec<usize>)] {
        &self.entries
    }
}

/// Per-grid-size serialization: scan order, skip graph and rotary table.
#[derive(Clone, Debug)]
pub struct Topology {
    pub side: usize,
    pub order: ScanOrder,
    pub graph: Option<SkipGraph>,
    pub rope: Option<RopeTable>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: BlockConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
}

pub fn build_model(config: &BlockConfig) -> Result<Model, ModelError> {
    Model::new(config)
}

fn uniform_fan_in(rng: &mut rng::Rng, out: &mut [f64], fan_in: usize) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    for v in out {
        *v = rng.random_range(-bound..bound);
    }
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `out[o] += sum_i w[o][i] x[i]`
fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n_in)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dx[i] += sum_o w[o][i] g[o]` and `dw[o][i] += g[o] x[i]`
fn matvec_back(w: &[f64], x: &[f64], g: &[f64], dw: &mut [f64], dx: Option<&mut [f64]>) {
    let n_in = x.len();
    for (o, &go) in g.iter().enumerate() {
        let row = &mut dw[o * n_in..(o + 1) * n_in];
        for (r, xi) in row.iter_mut().zip(x) {
            *r += go * xi;
        }
    }
    if let Some(dx) = dx {
        for (o, &go) in g.iter().enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            for (d, wi) in dx.iter_mut().zip(row) {
                *d += go * wi;
            }
        }
    }
}

/// Large enough that near-zero tokens pass almost unscaled.
const NORM_EPS: f64 = 1.0;

/// Per-token `x / sqrt(mean(x^2) + eps)`; returns the output and the divisors.
fn rms_norm(x: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut out = x.to_vec();
    let mut r = Vec::with_capacity(x.len() / d);
    for tok in out.chunks_exact_mut(d) {
        let rt = (tok.iter().map(|v| v * v).sum::<f64>() / d as f64 + NORM_EPS).sqrt();
        tok.iter_mut().for_each(|v| *v /= rt);
        r.push(rt);
    }
    (out, r)
}

/// `dx += (g - x̂ mean(g x̂)) / r` per token.
fn rms_norm_back(g: &[f64], xn: &[f64], r: &[f64], d: usize, dx: &mut [f64]) {
    for (t, &rt) in r.iter().enumerate() {
        let k = t * d..(t + 1) * d;
        let (gt, xt) = (&g[k.clone()], &xn[k.clone()]);
        let m = gt.iter().zip(xt).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for ((o, gi), xi) in dx[k].iter_mut().zip(gt).zip(xt) {
            *o += (gi - xi * m) / rt;
        }
    }
}

struct BlockCache {
    // block input and residual sum, kept for inspection
    #[allow(dead_code)]
    u: Vec<f64>,
    #[allow(dead_code)]
    h: Vec<f64>,
    x: Vec<f64>,
    x_r: Vec<f64>,
    z: Vec<f64>,
    ssm: SsmParams,
    hn: Vec<f64>,
    h_r: Vec<f64>,
    act: Vec<f64>,
}

struct Cache {
    pixels: Vec<f64>,
    blocks: Vec<BlockCache>,
    pooled: Vec<f64>,
    logits: Vec<f64>,
}

impl Model {
    pub fn new(config: &BlockConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut params = vec![0.0; layout.total];
        let mut r = rng::derive(config.seed, 0x006d_6f64_656c);
        let (d, s, hid) = (config.d_model, config.d_state, config.mlp_hidden);
        let delta_init = Normal::new(0.0, 0.1).expect("valid normal");
        uniform_fan_in(&mut r, &mut params[layout.embed_w.clone()], 1);
        for bl in &layout.blocks {
            uniform_fan_in(&mut r, &mut params[bl.delta_w.clone()], d);
            for v in &mut params[bl.delta_b.clone()] {
                *v = delta_init.sample(&mut r);
            }
            uniform_fan_in(&mut r, &mut params[bl.b_w.clone()], d);
            uniform_fan_in(&mut r, &mut params[bl.c_w.clone()], d);
            for c in 0..d {
                for j in 0..s {
                    let frac = if s == 1 { 0.0 } else { j as f64 / (s - 1) as f64 };
                    // |a| from 1 down to 1e-2, log-spaced
                    let mag = 10f64.powf(-2.0 * frac);
                    params[bl.a_log.start + c * s + j] = mag.ln();
                }
            }
            uniform_fan_in(&mut r, &mut params[bl.w1.clone()], d);
            uniform_fan_in(&mut r, &mut params[bl.w2.clone()], hid);
        }
        uniform_fan_in(&mut r, &mut params[layout.head_w.clone()], d);
        Ok(Self {
            config: config.clone(),
            layout,
            params,
        })
    }

    /// Scan order, skip graph and rotary table for a `side x side` grid.
    pub fn topology(&self, side: usize) -> Result<Topology, ModelError> {
        let shape = GridShape::square(side)?;
        let order = generate_order(self.config.curve, shape)?;
        let graph = self.config.use_csr.then(|| build_skip_graph(&order));
        let rope = if self.config.use_prc {
            Some(RopeTable::new(self.config.d_model, order.len()).map_err(|e| ModelError::InvalidConfig(e.to_string()))?)
        } else {
            None
        };
        Ok(Topology {
            side,
            order,
            graph,
            rope,
        })
    }

    pub fn logits(&self, topo: &Topology, image: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward(topo, image)?.logits)
    }

    fn forward(&self, topo: &Topology, image: &[f64]) -> Result<Cache, ModelError> {
        let n = topo.order.len();
        if image.len() != n {
            return Err(ModelError::ImageSize {
                expected: n,
                got: image.len(),
            });
        }
        let (d, s, hid) = (self.config.d_model, self.config.d_state, self.config.mlp_hidden);
        let p = &self.params;
        let ly = &self.layout;
        let pixels: Vec<f64> = topo.order.cells().iter().map(|c| image[c.y * topo.side + c.x]).collect();

        let mut u = vec![0.0; n * d];
        for t in 0..n {
            let tok = &mut u[t * d..(t + 1) * d];
            for (j, v) in tok.iter_mut().enumerate() {
                *v = p[ly.embed_w.start + j] * pixels[t] + p[ly.embed_b.start + j];
            }
            if let Some(rope) = &topo.rope {
                let rotated = rope.apply(tok, t).expect("token width equals d_model");
                tok.copy_from_slice(&rotated);
            }
        }

        let mut blocks = Vec::with_capacity(ly.blocks.len());
        for bl in &ly.blocks {
            let (x, x_r) = rms_norm(&u, d);
            let mut z = vec![0.0; n * d];
            let mut b = vec![0.0; n * s];
            let mut c = vec![0.0; n * s];
            for t in 0..n {
                let ut = &x[t * d..(t + 1) * d];
                let zt = &mut z[t * d..(t + 1) * d];
                zt.copy_from_slice(&p[bl.delta_b.clone()]);
                matvec_add(&p[bl.delta_w.clone()], ut, zt);
                matvec_add(&p[bl.b_w.clone()], ut, &mut b[t * s..(t + 1) * s]);
                matvec_add(&p[bl.c_w.clone()], ut, &mut c[t * s..(t + 1) * s]);
            }
            let ssm = SsmParams {
                n,
                channels: d,
                d_state: s,
                a: p[bl.a_log.clone()].iter().map(|v| -v.exp()).collect(),
                b,
                c,
                delta: z.iter().map(|&v| softplus(v)).collect(),
            };
            let disc = ssm.discretize()?;
            let y = match &topo.graph {
                Some(g) => bdpp_forward(&disc, &x, g, BdppOptions::default())?,
                None => recurrence_forward(&disc, &x)?,
            };
            let h: Vec<f64> = u.iter().zip(&y).map(|(a, b)| a + b).collect();
            let (hn, h_r) = rms_norm(&h, d);
            let mut act = vec![0.0; n * hid];
            let mut next = h.clone();
            for t in 0..n {
                let ht = &hn[t * d..(t + 1) * d];
                let at = &mut act[t * hid..(t + 1) * hid];
                at.copy_from_slice(&p[bl.b1.clone()]);
                matvec_add(&p[bl.w1.clone()], ht, at);
                at.iter_mut().for_each(|v| *v = v.tanh());
                let nt = &mut next[t * d..(t + 1) * d];
                for (v, bias) in nt.iter_mut().zip(&p[bl.b2.clone()]) {
                    *v += bias;
                }
                matvec_add(&p[bl.w2.clone()], at, nt);
            }
            blocks.push(BlockCache {
                u,
                h,
                x,
                x_r,
                z,
                ssm,
                hn,
                h_r,
                act,
            });
            u = next;
        }

        let mut pooled = vec![0.0; d];
        for t in 0..n {
            for (acc, v) in pooled.iter_mut().zip(&u[t * d..(t + 1) * d]) {
                *acc += v;
            }
        }
        pooled.iter_mut().for_each(|v| *v /= n as f64);
        let mut logits = p[ly.head_b.clone()].to_vec();
        matvec_add(&p[ly.head_w.clone()], &pooled, &mut logits);
        Ok(Cache {
            pixels,
            blocks,
            pooled,
            logits,
        })
    }

    /// Mean softmax cross-entropy over `images`, the number of correct
    /// argmax predictions, and the gradient with respect to `params`.
    pub fn loss_and_grad(
        &self,
        topo: &Topology,
        images: &[Vec<f64>],
        labels: &[usize],
    ) -> Result<(f64, usize, Vec<f64>), ModelError> {
        let mut grad = vec![0.0; self.layout.total];
        let mut loss = 0.0;
        let mut correct = 0;
        let scale = 1.0 / images.len().max(1) as f64;
        for (image, &label) in images.iter().zip(labels) {
            if label >= self.config.classes {
                return Err(ModelError::Label {
                    label,
                    classes: self.config.classes,
                });
            }
            let cache = self.forward(topo, image)?;
            let (l, probs) = cross_entropy(&cache.logits, label);
            loss += l * scale;
            if argmax(&cache.logits) == label {
                correct += 1;
            }
            let mut dlogits = probs;
            dlogits[label] -= 1.0;
            dlogits.iter_mut().for_each(|v| *v *= scale);
            self.backward(topo, &cache, &dlogits, &mut grad)?;
        }
        Ok((loss, correct, grad))
    }

    /// Mean loss and correct count without gradients.
    pub fn evaluate(&self, topo: &Topology, images: &[Vec<f64>], labels: &[usize]) -> Result<(f64, usize), ModelError> {
        let mut loss = 0.0;
        let mut correct = 0;
        for (image, &label) in images.iter().zip(labels) {
            let logits = self.logits(topo, image)?;
            loss += cross_entropy(&logits, label).0;
            if argmax(&logits) == label {
                correct += 1;
            }
        }
        Ok((loss / images.len().max(1) as f64, correct))
    }

    fn backward(&self, topo: &Topology, cache: &Cache, dlogits: &[f64], grad: &mut [f64]) -> Result<(), ModelError> {
        let (d, s, hid) = (self.config.d_model, self.config.d_state, self.config.mlp_hidden);
        let p = &self.params;
        let ly = &self.layout;
        let n = topo.order.len();

        for (g, v) in grad[ly.head_b.clone()].iter_mut().zip(dlogits) {
            *g += v;
        }
        let mut dpooled = vec![0.0; d];
        matvec_back(
            &p[ly.head_w.clone()],
            &cache.pooled,
            dlogits,
            &mut grad[ly.head_w.clone()],
            Some(&mut dpooled),
        );
        let mut du: Vec<f64> = (0..n * d).map(|k| dpooled[k % d] / n as f64).collect();

        for (bl, bc) in ly.blocks.iter().zip(&cache.blocks).rev() {
            // u' = h + W2 tanh(W1 norm(h) + b1) + b2
            let mut dh = du.clone();
            let mut dhn = vec![0.0; n * d];
            let mut dact = vec![0.0; hid];
            for t in 0..n {
                let g = &du[t * d..(t + 1) * d];
                let at = &bc.act[t * hid..(t + 1) * hid];
                for (gb, v) in grad[bl.b2.clone()].iter_mut().zip(g) {
                    *gb += v;
                }
                dact.iter_mut().for_each(|v| *v = 0.0);
                matvec_back(&p[bl.w2.clone()], at, g, &mut grad[bl.w2.clone()], Some(&mut dact));
                for (da, a) in dact.iter_mut().zip(at) {
                    *da *= 1.0 - a * a;
                }
                for (gb, v) in grad[bl.b1.clone()].iter_mut().zip(&dact) {
                    *gb += v;
                }
                let ht = &bc.hn[t * d..(t + 1) * d];
                matvec_back(
                    &p[bl.w1.clone()],
                    ht,
                    &dact,
                    &mut grad[bl.w1.clone()],
                    Some(&mut dhn[t * d..(t + 1) * d]),
                );
            }
            rms_norm_back(&dhn, &bc.hn, &bc.h_r, d, &mut dh);

            // h = u + y(norm(u))
            let disc = bc.ssm.discretize()?;
            let bundle = match &topo.graph {
                Some(g) => bdpp_backward(&disc, &bc.x, g, &dh, BdppOptions::default())?,
                None => recurrence_backward(&disc, &bc.x, &dh)?,
            };
            let raw = discretize_backward(&bc.ssm, &bundle)?;
            let mut dx = bundle.d_x;
            for (k, g) in grad[bl.a_log.clone()].iter_mut().enumerate() {
                *g += raw.d_a[k] * bc.ssm.a[k];
            }
            for t in 0..n {
                let ut = &bc.x[t * d..(t + 1) * d];
                let dz: Vec<f64> = (0..d).map(|c| raw.d_delta[t * d + c] * sigmoid(bc.z[t * d + c])).collect();
                for (gb, v) in grad[bl.delta_b.clone()].iter_mut().zip(&dz) {
                    *gb += v;
                }
                let dut = &mut dx[t * d..(t + 1) * d];
                matvec_back(
                    &p[bl.delta_w.clone()],
                    ut,
                    &dz,
                    &mut grad[bl.delta_w.clone()],
                    Some(&mut *dut),
                );
                matvec_back(
                    &p[bl.b_w.clone()],
                    ut,
                    &raw.d_b[t * s..(t + 1) * s],
                    &mut grad[bl.b_w.clone()],
                    Some(&mut *dut),
                );
                matvec_back(
                    &p[bl.c_w.clone()],
                    ut,
                    &raw.d_c[t * s..(t + 1) * s],
                    &mut grad[bl.c_w.clone()],
                    Some(&mut *dut),
                );
            }
            rms_norm_back(&dx, &bc.x, &bc.x_r, d, &mut dh);
            du = dh;
        }

        for t in 0..n {
            let g = &du[t * d..(t + 1) * d];
            let g = match &topo.rope {
                Some(rope) => rope.apply_inverse(g, t).expect("token width equals d_model"),
                None => g.to_vec(),
            };
            for j in 0..d {
                grad[ly.embed_w.start + j] += g[j] * cache.pixels[t];
                grad[ly.embed_b.start + j] += g[j];
            }
        }
        Ok(())
    }
}

/// Loss `-log softmax(logits)[label]` and the softmax probabilities.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    (z.ln() - (logits[label] - m), exps.iter().map(|e| e / z).collect())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(curve: CurveKind, use_csr: bool, use_prc: bool) -> BlockConfig {
        BlockConfig {
            d_model: 4,
            d_state: 2,
            n_blocks: 1,
            curve,
            use_csr,
            use_prc,
            seed: 21,
            classes: 2,
            mlp_hidden: 6,
        }
    }

    #[test]
    fn config_validation() {
        let mut c = small(CurveKind::Hilbert, true, true);
        c.d_model = 3;
        assert!(matches!(build_model(&c), Err(ModelError::InvalidConfig(_))));
        c.use_prc = false;
        assert!(build_model(&c).is_ok());
        c.d_state = 0;
        assert!(build_model(&c).is_err());
    }

    #[test]
    fn seeded_init_is_bitwise_reproducible() {
        let c = small(CurveKind::Hilbert, true, true);
        let a = build_model(&c).unwrap();
        let b = build_model(&c).unwrap();
        assert_eq!(
            a.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let mut c2 = c.clone();
        c2.seed += 1;
        assert_ne!(a.params, build_model(&c2).unwrap().params);
    }

    #[test]
    fn a_is_log_spaced_in_stable_range() {
        let m = build_model(&BlockConfig {
            d_state: 3,
            ..small(CurveKind::Hilbert, true, true)
        })
        .unwrap();
        let a_log = &m.params[m.layout.blocks[0].a_log.clone()];
        let a: Vec<f64> = a_log[..3].iter().map(|v| -v.exp()).collect();
        assert!((a[0] + 1.0).abs() < 1e-15 && (a[1] + 0.1).abs() < 1e-15 && (a[2] + 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_input_gives_head_bias() {
        let mut m = build_model(&small(CurveKind::Hilbert, true, true)).unwrap();
        let hb = m.layout.head_b.clone();
        m.params[hb.clone()].copy_from_slice(&[0.3, -0.7]);
        let topo = m.topology(4).unwrap();
        assert_eq!(m.logits(&topo, &[0.0; 16]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn no_blocks_is_a_linear_probe() {
        let c = BlockConfig {
            n_blocks: 0,
            use_prc: false,
            ..small(CurveKind::Raster, false, false)
        };
        let m = build_model(&c).unwrap();
        assert_eq!(m.layout.total, 4 + 4 + 8 + 2);
        let topo = m.topology(2).unwrap();
        let img = [1.0, 2.0, 3.0, 4.0];
        let mean = 2.5;
        let pooled: Vec<f64> = (0..4).map(|j| m.params[j] * mean + m.params[4 + j]).collect();
        let want: Vec<f64> = (0..2)
            .map(|k| {
                m.params[m.layout.head_b.start + k]
                    + (0..4)
                        .map(|j| m.params[m.layout.head_w.start + k * 4 + j] * pooled[j])
                        .sum::<f64>()
            })
            .collect();
        let got = m.logits(&topo, &img).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn raster_without_routing_uses_the_recurrence() {
        let m = build_model(&small(CurveKind::Raster, false, false)).unwrap();
        let topo = m.topology(4).unwrap();
        assert!(topo.graph.is_none() && topo.rope.is_none());
        let img: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let cache = m.forward(&topo, &img).unwrap();
        let bc = &cache.blocks[0];
        let y = recurrence_forward(&bc.ssm.discretize().unwrap(), &bc.x).unwrap();
        for ((h, u), y) in bc.h.iter().zip(&bc.u).zip(&y) {
            assert_eq!(*h, u + y);
        }
    }

    #[test]
    fn label_and_image_checks() {
        let m = build_model(&small(CurveKind::Hilbert, true, true)).unwrap();
        let topo = m.topology(2).unwrap();
        assert_eq!(m.logits(&topo, &[0.0; 3]), Err(ModelError::ImageSize { expected: 4, got: 3 }));
        assert!(matches!(
            m.loss_and_grad(&topo, &[vec![0.0; 4]], &[2]),
            Err(ModelError::Label { .. })
        ));
    }

    #[test]
    fn cross_entropy_basics() {
        let (l, p) = cross_entropy(&[0.0, 0.0], 1);
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
