use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_model, BlockConfig, Layout, Model, ModelError, SynthTask};
use crate::curve::CurveKind;
use crate::grad::rel_err;
use crate::ssm::SsmError;

/// Stream ids inside the task seed.
const TRAIN_STREAM: u64 = 0;
const EVAL_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Heavy-ball coefficient; 0 is plain gradient descent.
    pub momentum: f64,
    /// Rescales the gradient to this global L2 norm when it is larger.
    pub clip_norm: Option<f64>,
    /// Size of the fixed training set, used as one full batch per step.
    pub train_count: usize,
    pub eval_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 0.1,
            momentum: 0.0,
            clip_norm: Some(1.0),
            train_count: 128,
            eval_count: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub step: usize,
    pub loss: f64,
    pub acc: f64,
}

impl MetricRow {
    pub fn write_csv<W: Write>(rows: &[MetricRow], mut out: W) -> io::Result<()> {
        writeln!(out, "step,loss,acc")?;
        for r in rows {
            writeln!(out, "{},{},{}", r.step, r.loss, r.acc)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("loss diverged at step {step}: {loss}")]
    DivergedLoss { step: usize, loss: f64 },
    #[error("at least one training step is required")]
    NoSteps,
}

/// Full-batch training on a fixed set drawn from `task` at its train size.
/// The loss and accuracy in row `k` are measured before update `k`.
pub fn train(model: &mut Model, task: &SynthTask, cfg: &TrainConfig) -> Result<Vec<MetricRow>, TrainError> {
    if cfg.steps == 0 {
        return Err(TrainError::NoSteps);
    }
    let topo = model.topology(task.train_size)?;
    let data = task.sample(task.train_size, cfg.train_count, TRAIN_STREAM);
    let mut velocity = vec![0.0; model.params.len()];
    let mut rows = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (loss, correct, grad) = match model.loss_and_grad(&topo, &data.images, &data.labels) {
            Ok(out) => out,
            // finite weights whose activations overflow
            Err(ModelError::Ssm(SsmError::NonPositiveDelta(d))) if !d.is_finite() => {
                return Err(TrainError::DivergedLoss { step, loss: d })
            }
            Err(e) => return Err(e.into()),
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::DivergedLoss { step, loss });
        }
        let scale = match cfg.clip_norm {
            Some(c) => {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        rows.push(MetricRow {
            step,
            loss,
            acc: correct as f64 / data.len() as f64,
        });
        for ((p, v), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
            *v = cfg.momentum * *v + scale * g;
            *p -= cfg.lr * *v;
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(TrainError::DivergedLoss { step, loss });
        }
    }
    Ok(rows)
}

/// Accuracy on the held-out stream of `task`, rendered at `side`.
pub fn evaluate_at(model: &Model, task: &SynthTask, side: usize, count: usize) -> Result<f64, ModelError> {
    let topo = model.topology(side)?;
    let data = task.sample(side, count, EVAL_STREAM);
    let (_, correct) = model.evaluate(&topo, &data.images, &data.labels)?;
    Ok(correct as f64 / data.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferSeed {
    pub seed: u64,
    pub fractal_train: f64,
    pub fractal_test: f64,
    pub raster_train: f64,
    pub raster_test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferReport {
    pub train_size: usize,
    pub test_size: usize,
    pub fractal_curve: CurveKind,
    pub per_seed: Vec<TransferSeed>,
    pub mean_fractal_train: f64,
    pub mean_fractal_test: f64,
    pub mean_raster_train: f64,
    pub mean_raster_test: f64,
}

/// Trains a fractal-ordered and a raster-ordered model per seed, identical
/// apart from the curve, and evaluates both at the train and test sizes.
/// Each seed drives both the task and the initialization.
pub fn eval_resolution_transfer(
    fractal: &BlockConfig,
    raster: &BlockConfig,
    task: &SynthTask,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<TransferReport, TrainError> {
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let task = SynthTask { seed, ..task.clone() };
        let mut accs = [0.0; 4];
        for (i, base) in [fractal, raster].into_iter().enumerate() {
            let mut model = build_model(&BlockConfig { seed, ..base.clone() })?;
            train(&mut model, &task, cfg)?;
            accs[2 * i] = evaluate_at(&model, &task, task.train_size, cfg.eval_count)?;
            accs[2 * i + 1] = evaluate_at(&model, &task, task.test_size, cfg.eval_count)?;
        }
        per_seed.push(TransferSeed {
            seed,
            fractal_train: accs[0],
            fractal_test: accs[1],
            raster_train: accs[2],
            raster_test: accs[3],
        });
    }
    let mean = |f: fn(&TransferSeed) -> f64| per_seed.iter().map(f).sum::<f64>() / per_seed.len().max(1) as f64;
    Ok(TransferReport {
        train_size: task.train_size,
        test_size: task.test_size,
        fractal_curve: fractal.curve,
        mean_fractal_train: mean(|s| s.fractal_train),
        mean_fractal_test: mean(|s| s.fractal_test),
        mean_raster_train: mean(|s| s.raster_train),
        mean_raster_test: mean(|s| s.raster_test),
        per_seed,
    })
}

/// Relative step of the fourth-order stencil in [`model_gradient_check`],
/// `eps^(1/5)`, which balances `O(h^4)` truncation against `eps / h` rounding.
pub fn model_fd_step(theta: f64) -> f64 {
    f64::EPSILON.powf(0.2) * theta.abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelGradcheck {
    /// `|g_a - g_n|_2 / max(|g_a|_2, |g_n|_2)` per named parameter tensor.
    pub tensors: Vec<(String, f64)>,
    /// Largest of `tensors`.
    pub max_tensor_err: f64,
    /// Largest elementwise [`rel_err`]; dominated by rounding for entries
    /// far below the loss scale.
    pub max_elementwise_err: f64,
}

/// Full-model gradient of the mean loss over `count` images at side `side`
/// against central differences.
///
/// The model loss runs in plain `f64`, so a two-point difference with a
/// small step drowns gradients below `1e-7` in rounding noise. The stencil
/// `(8(L(θ+h) - L(θ-h)) - (L(θ+2h) - L(θ-2h))) / 12h` has `O(h^4)`
/// truncation and allows a step large enough to keep that noise down.
pub fn model_gradient_check(config: &BlockConfig, side: usize, count: usize, seed: u64) -> Result<ModelGradcheck, ModelError> {
    let model = build_model(config)?;
    let topo = model.topology(side)?;
    let task = SynthTask {
        classes: config.classes,
        ..SynthTask::stripes(side, seed)
    };
    let data = task.sample(side, count, TRAIN_STREAM);
    let (_, _, analytic) = model.loss_and_grad(&topo, &data.images, &data.labels)?;
    let mut probe = model.clone();
    let mut loss_at = |i: usize, v: f64| -> Result<f64, ModelError> {
        probe.params[i] = v;
        let l = probe.evaluate(&topo, &data.images, &data.labels)?.0;
        probe.params[i] = model.params[i];
        Ok(l)
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..analytic.len() {
        let theta = model.params[i];
        let h = model_fd_step(theta);
        let near = loss_at(i, theta + h)? - loss_at(i, theta - h)?;
        let far = loss_at(i, theta + 2.0 * h)? - loss_at(i, theta - 2.0 * h)?;
        numeric.push((8.0 * near - far) / (6.0 * ((theta + h) - (theta - h))));
    }
    let mut tensors = Vec::new();
    let mut at = 0;
    for (name, shape) in model.layout.entries() {
        let k = at..at + shape.iter().product::<usize>();
        at = k.end;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic[k.clone()]
            .iter()
            .zip(&numeric[k.clone()])
            .map(|(a, n)| a - n)
            .collect();
        let scale = norm(&analytic[k.clone()]).max(norm(&numeric[k])).max(1e-12);
        tensors.push((name.clone(), norm(&diff) / scale));
    }
    Ok(ModelGradcheck {
        max_tensor_err: tensors.iter().map(|t| t.1).fold(0.0, f64::max),
        max_elementwise_err: analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| rel_err(*a, *n))
            .fold(0.0, f64::max),
        tensors,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: BlockConfig,
    task: Option<SynthTask>,
    step: usize,
    /// Where rotary positions are applied when `use_prc` is set.
    prc_attach: String,
    byte_order: String,
    param_count: usize,
    layout: Vec<LayoutEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LayoutEntry {
    name: String,
    shape: Vec<usize>,
}

const FORMAT: &str = "fractalssm-checkpoint";

/// A saved model: one JSON header line, then the parameters as
/// little-endian `f64` in [`Layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub task: Option<SynthTask>,
    pub step: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn save_checkpoint(path: &Path, model: &Model, task: Option<&SynthTask>, step: usize) -> Result<(), CheckpointError> {
    let header = Header {
        format: FORMAT.to_string(),
        version: 1,
        config: model.config.clone(),
        task: task.cloned(),
        step,
        prc_attach: "embeddings".to_string(),
        byte_order: "little".to_string(),
        param_count: model.params.len(),
        layout: model
            .layout
            .entries()
            .iter()
            .map(|(name, shape)| LayoutEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(model.params.len() * 8);
    for v in &model.params {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    let header: Header = serde_json::from_slice(&line)?;
    if header.format != FORMAT || header.version != 1 || header.byte_order != "little" {
        return Err(CheckpointError::Format(format!(
            "unsupported header {} v{}",
            header.format, header.version
        )));
    }
    let mut model = build_model(&header.config)?;
    let layout = Layout::new(&header.config);
    if header.param_count != layout.total {
        return Err(CheckpointError::Format(format!(
            "{} parameters stored, configuration needs {}",
            header.param_count, layout.total
        )));
    }
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    if raw.len() != layout.total * 8 {
        return Err(CheckpointError::Format(format!(
            "expected {} parameter bytes, found {}",
            layout.total * 8,
            raw.len()
        )));
    }
    for (p, chunk) in model.params.iter_mut().zip(raw.chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().expect("chunks of eight"));
    }
    Ok(Checkpoint {
        model,
        task: header.task,
        step: header.step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BlockConfig {
        BlockConfig {
            d_model: 4,
            d_state: 2,
            n_blocks: 1,
            curve: CurveKind::Hilbert,
            use_csr: true,
            use_prc: true,
            seed: 5,
            classes: 2,
            mlp_hidden: 6,
        }
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            steps: 5,
            lr: 0.05,
            momentum: 0.0,
            clip_norm: None,
            train_count: 8,
            eval_count: 8,
        }
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let mut m = build_model(&tiny()).unwrap();
        let rows = train(&mut m, &SynthTask::stripes(4, 1), &TrainConfig { lr: 0.0, ..quick() }).unwrap();
        assert!(rows.iter().all(|r| r.loss == rows[0].loss));
    }

    #[test]
    fn repeated_runs_are_identical() {
        let task = SynthTask::stripes(4, 2);
        let mut a = build_model(&tiny()).unwrap();
        let mut b = build_model(&tiny()).unwrap();
        let ra = train(&mut a, &task, &quick()).unwrap();
        let rb = train(&mut b, &task, &quick()).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.params, b.params);
        assert_eq!(
            train(&mut a, &task, &TrainConfig { steps: 0, ..quick() }),
            Err(TrainError::NoSteps)
        );
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = build_model(&tiny()).unwrap();
        let r = train(
            &mut m,
            &SynthTask::stripes(4, 3),
            &TrainConfig {
                lr: 1e200,
                steps: 4,
                ..quick()
            },
        );
        assert!(matches!(r, Err(TrainError::DivergedLoss { .. })), "{r:?}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = build_model(&tiny()).unwrap();
        let task = SynthTask::stripes(4, 7);
        save_checkpoint(&path, &m, Some(&task), 12).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.model, m);
        assert_eq!(ck.step, 12);
        assert_eq!(ck.task, Some(task));
        let bytes = std::fs::read(&path).unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(bytes.len() - nl - 1, m.params.len() * 8);
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CheckpointError::Format(_))));
    }

    #[test]
    fn end_to_end_gradient_on_small_grid() {
        for (curve, csr, prc) in [(CurveKind::Hilbert, true, true), (CurveKind::Raster, false, false)] {
            let cfg = BlockConfig {
                curve,
                use_csr: csr,
                use_prc: prc,
                ..tiny()
            };
            let r = model_gradient_check(&cfg, 4, 2, 3).unwrap();
            assert!(r.max_tensor_err < 1e-5, "{r:?}");
            assert_eq!(r.tensors.len(), Layout::new(&cfg).entries().len());
        }
    }

    #[test]
    fn metrics_csv_header() {
        let mut out = Vec::new();
        MetricRow::write_csv(
            &[MetricRow {
                step: 0,
                loss: 0.5,
                acc: 1.0,
            }],
            &mut out,
        )
        .unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "step,loss,acc\n0,0.5,1\n");
    }
}
