//! Synthetic, resolution-independent classification tasks.
//!
//! Images are defined on the unit square and sampled at cell centres, so the
//! same label renders at any grid size.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Sinusoidal stripes; class `k` of `K` has orientation near `k π / K`.
    Stripes,
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stripes" => Ok(TaskKind::Stripes),
            other => Err(format!("unknown task `{other}` (expected stripes)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTask {
    pub kind: TaskKind,
    pub train_size: usize,
    pub test_size: usize,
    pub classes: usize,
    /// Labels drawn independently of the image (no-signal control).
    pub shuffle_labels: bool,
    pub noise: f64,
    pub seed: u64,
}

impl SynthTask {
    pub fn stripes(train_size: usize, seed: u64) -> Self {
        Self {
            kind: TaskKind::Stripes,
            train_size,
            test_size: 2 * train_size,
            classes: 2,
            shuffle_labels: false,
            noise: 0.25,
            seed,
        }
    }

    /// `count` images at grid side `side`, row-major, drawn from stream
    /// `stream` of the task seed. The same `(stream, count)` yields the same
    /// continuous patterns at every side.
    pub fn sample(&self, side: usize, count: usize, stream: u64) -> Dataset {
        let mut pattern_rng = rng::derive(self.seed, stream);
        let mut noise_rng = rng::derive(self.seed ^ side as u64, stream.wrapping_add(1 << 32));
        let noise = Normal::new(0.0, self.noise.max(0.0)).expect("finite noise level");
        let mut images = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let class = pattern_rng.random_range(0..self.classes);
            let pattern = Stripe::draw(&mut pattern_rng, class, self.classes);
            let image = (0..side * side)
                .map(|i| {
                    let (x, y) = ((i % side) as f64 + 0.5, (i / side) as f64 + 0.5);
                    pattern.at(x / side as f64, y / side as f64) + noise.sample(&mut noise_rng)
                })
                .collect();
            let label = if self.shuffle_labels {
                pattern_rng.random_range(0..self.classes)
            } else {
                class
            };
            images.push(image);
            labels.push(label);
        }
        Dataset { side, images, labels }
    }
}

struct Stripe {
    angle: f64,
    freq: f64,
    phase: f64,
}

impl Stripe {
    fn draw(rng: &mut Rng, class: usize, classes: usize) -> Self {
        let jitter = PI / (6.0 * classes as f64);
        Self {
            angle: class as f64 * PI / classes as f64 + rng.random_range(-jitter..jitter),
            freq: rng.random_range(1.0..2.5),
            phase: rng.random_range(0.0..2.0 * PI),
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        (2.0 * PI * self.freq * (x * c + y * s) + self.phase).sin()
    }
}

/// Images stored row-major (`y * side + x`), one scalar per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub side: usize,
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
