//! Unsupervised, order-independent anomaly scoring for frame sequences.
//!
//! A frame is anomalous when a simple classifier can tell it apart from the
//! frames that precede it, across many random reorderings of the sequence.
//! The crate is split into:
//!
//! * [`ingest`]: feature files, standardization, PCA.
//! * [`classifier`]: L2-regularized logistic regression.
//! * [`detector`]: shuffled sliding-window scoring and the score table.
//! * [`theory`]: shuffle-count bounds and empirical Rademacher complexity.
//! * [`eval`]: ROC curves and AUC.
//! * [`synth`]: a synthetic sequence with known anomalies.
//! * [`cli`]: the `shufscan` command line.
//!
//! ```no_run
//! use shufscan::{detector, eval, synth};
//!
//! let (seq, truth) = synth::make_toy_sequence(&synth::default_fig2_plan()).unwrap();
//! let table = detector::detect(&seq, &detector::DetectorConfig::default()).unwrap();
//! let (frames, scores) = table.scored_values();
//! let curve = eval::roc_curve(&scores, &truth.subset(&frames)).unwrap();
//! println!("AUC = {}", curve.auc);
//! ```

pub mod classifier;
pub mod cli;
pub mod detector;
pub mod eval;
pub mod ingest;
pub mod rng;
pub mod synth;
pub mod theory;

pub use detector::{detect, DetectorConfig, ScoreTable};
pub use eval::{roc_curve, GroundTruth, RocCurve};
pub use ingest::{FeatureFormat, FeatureSequence};
