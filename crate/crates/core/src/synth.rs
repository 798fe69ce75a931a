//! Synthetic "video" of noisy copies of a few prototype vectors.
//!
//! Each class gets one Gaussian prototype; a block plan says which class
//! fills each run of frames. The default plan opens with a long run of one
//! prevalent class, only later mixes in the second prevalent class, and
//! scatters two short, separated occurrences of each of two rare classes.
//! An order-dependent scorer flags the late prevalent class and misses
//! repeated anomalies, which makes the plan a useful end-to-end check.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::GroundTruth;
use crate::ingest::FeatureSequence;
use crate::rng::{self, Domain};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid toy spec: {0}")]
    InvalidSpec(String),
    #[error("could not separate {classes} prototypes in {dim} dimensions")]
    Separation { classes: usize, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub class: usize,
    pub length: usize,
}

const fn run(class: usize, length: usize) -> Run {
    Run { class, length }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub num_classes: usize,
    pub prototype_dim: usize,
    pub noise_sigma: f64,
    pub block_plan: Vec<Run>,
    pub anomaly_classes: Vec<usize>,
    pub prototype_separation: f64,
    pub seed: u64,
}

/// Class 0 and 1 are prevalent, 2 and 3 rare. Class 1 never appears in the
/// opening block; classes 2 and 3 each appear in two separated runs.
const FIG2_PLAN: [Run; 20] = [
    run(0, 200),
    run(1, 30),
    run(0, 30),
    run(2, 3),
    run(1, 40),
    run(0, 30),
    run(3, 3),
    run(1, 30),
    run(0, 40),
    run(1, 30),
    run(0, 20),
    run(2, 3),
    run(1, 30),
    run(0, 20),
    run(1, 20),
    run(3, 3),
    run(0, 30),
    run(1, 20),
    run(0, 10),
    run(1, 8),
];

pub const FIG2_FRAMES: usize = 600;
pub const FIG2_ANOMALOUS_FRAMES: usize = 12;

impl ToySpec {
    pub fn total_frames(&self) -> usize {
        self.block_plan.iter().map(|r| r.length).sum()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.num_classes < 2 {
            return bad("num_classes must be >= 2".into());
        }
        if self.prototype_dim == 0 {
            return bad("prototype_dim must be >= 1".into());
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be positive".into());
        }
        if !(self.prototype_separation > 0.0 && self.prototype_separation.is_finite()) {
            return bad("prototype_separation must be positive".into());
        }
        if self.block_plan.is_empty() || self.total_frames() == 0 {
            return bad("block_plan is empty".into());
        }
        if let Some(r) = self.block_plan.iter().find(|r| r.class >= self.num_classes) {
            return bad(format!("block plan uses unknown class {}", r.class));
        }
        if let Some(&c) = self
            .anomaly_classes
            .iter()
            .find(|&&c| c >= self.num_classes)
        {
            return bad(format!("unknown anomaly class {c}"));
        }
        let mut distinct = self.anomaly_classes.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.is_empty() || distinct.len() >= self.num_classes {
            return bad("anomaly_classes must be a strict nonempty subset of the classes".into());
        }
        Ok(())
    }

    pub fn labels(&self) -> GroundTruth {
        GroundTruth::new(
            self.block_plan
                .iter()
                .flat_map(|r| {
                    std::iter::repeat_n(self.anomaly_classes.contains(&r.class), r.length)
                })
                .collect(),
        )
    }

    /// Class of every frame, in order.
    pub fn frame_classes(&self) -> Vec<usize> {
        self.block_plan
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.class, r.length))
            .collect()
    }
}

/// The canonical plan: 4 classes in 16 dimensions, noise 0.1, separation
/// 4.0, 600 frames of which 12 are anomalous.
pub fn default_fig2_plan() -> ToySpec {
    ToySpec {
        num_classes: 4,
        prototype_dim: 16,
        noise_sigma: 0.1,
        block_plan: FIG2_PLAN.to_vec(),
        anomaly_classes: vec![2, 3],
        prototype_separation: 4.0,
        seed: 0,
    }
}

const MAX_PROTOTYPE_DRAWS: usize = 16;

fn min_pairwise_distance(protos: &Array2<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..protos.nrows() {
        for j in i + 1..protos.nrows() {
            let d = (&protos.row(i) - &protos.row(j))
                .mapv(|v| v * v)
                .sum()
                .sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Prototype vectors, one row per class, with every pairwise distance at
/// least `prototype_separation`.
pub fn prototypes(spec: &ToySpec) -> Result<Array2<f64>, SynthError> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Domain::Synth, 0);
    for _ in 0..MAX_PROTOTYPE_DRAWS {
        let mut protos =
            Array2::from_shape_simple_fn((spec.num_classes, spec.prototype_dim), || {
                rng.sample::<f64, _>(StandardNormal)
            });
        let closest = min_pairwise_distance(&protos);
        if !(closest > 1e-9) {
            continue;
        }
        protos *= spec.prototype_separation / closest;
        // nudge past rounding so the bound holds as computed
        while min_pairwise_distance(&protos) < spec.prototype_separation {
            protos *= 1.0 + 4.0 * f64::EPSILON;
        }
        return Ok(protos);
    }
    Err(SynthError::Separation {
        classes: spec.num_classes,
        dim: spec.prototype_dim,
    })
}

/// Draws the sequence and its frame labels (anomalous iff the frame's class
/// is in `anomaly_classes`).
pub fn make_toy_sequence(spec: &ToySpec) -> Result<(FeatureSequence, GroundTruth), SynthError> {
    let protos = prototypes(spec)?;
    let classes = spec.frame_classes();
    let mut rng = rng::stream(spec.seed, Domain::Synth, 1);
    let mut frames = Array2::zeros((classes.len(), spec.prototype_dim));
    for (mut row, &c) in frames.rows_mut().into_iter().zip(&classes) {
        let noise: Array1<f64> = (0..spec.prototype_dim)
            .map(|_| spec.noise_sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        row.assign(&(&protos.row(c) + &noise));
    }
    let seq = FeatureSequence::new(frames, format!("synth(seed={})", spec.seed))
        .expect("finite by construction");
    Ok((seq, spec.labels()))
}
