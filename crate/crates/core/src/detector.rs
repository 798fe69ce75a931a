//! Shuffled sliding-window anomaly scoring.
//!
//! For each ordering of the frames (the identity plus `K` seeded random
//! permutations) a window of `t_w` positions slides forward by `Δt_w`.
//! Every position before the window is labeled 0, the window is labeled 1,
//! and a logistic regression is trained on that split. Each window frame is
//! credited with its predicted probability of class 1. Per-frame
//! probabilities are averaged over every time the frame was scored and
//! turned into odds `p / (1 - p)`.
//!
//! All `(shuffle, split)` pairs are independent. They run on a rayon pool
//! of `threads` workers, and their contributions are reduced in
//! `(shuffle, split)` order, so results are bitwise identical for every
//! thread count.

use std::io::{self, BufRead, Write};

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, ClassifierError, TrainSpec};
use crate::ingest::FeatureSequence;
use crate::rng::{self, Domain};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("{frames} frames with window size {window}: no frame can be scored")]
    TooFewFrames { frames: usize, window: usize },
    #[error("permutation covers {found} frames, sequence has {expected}")]
    PermutationLength { expected: usize, found: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("score file line {line}: {message}")]
    ScoreFormat { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// `K`, random permutations on top of the optional identity ordering.
    pub num_shuffles: usize,
    /// `t_w`.
    pub window_size: usize,
    /// `Δt_w`; must not exceed `window_size`.
    pub window_stride: usize,
    pub lambda: f64,
    pub seed: u64,
    pub prob_clamp: f64,
    pub threads: usize,
    pub include_identity_shuffle: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            num_shuffles: 10,
            window_size: 10,
            window_stride: 10,
            lambda: 1.0,
            seed: 0,
            prob_clamp: 1e-6,
            threads: 1,
            include_identity_shuffle: true,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: String| Err(DetectorError::InvalidConfig(m));
        if self.window_size == 0 {
            return bad("window_size must be >= 1".into());
        }
        if self.window_stride == 0 || self.window_stride > self.window_size {
            return bad(format!(
                "window_stride must be in 1..={}, got {}",
                self.window_size, self.window_stride
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return bad(format!(
                "prob_clamp must be in (0, 0.5), got {}",
                self.prob_clamp
            ));
        }
        if self.threads == 0 {
            return bad("threads must be >= 1".into());
        }
        if self.num_shuffles == 0 && !self.include_identity_shuffle {
            return bad("no orderings to score: K = 0 without the identity".into());
        }
        Ok(())
    }

    fn train_spec(&self) -> TrainSpec {
        TrainSpec::new(self.lambda)
    }

    /// Orderings scored by [`detect`], identity first when enabled.
    pub fn orderings(&self, frames: usize) -> Vec<Permutation> {
        let mut out = Vec::with_capacity(self.num_shuffles + 1);
        if self.include_identity_shuffle {
            out.push(Permutation::identity(frames));
        }
        out.extend(generate_permutations(frames, self.num_shuffles, self.seed));
        out
    }
}

/// `order[pos]` is the original frame placed at shuffled position `pos`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    /// Returns `None` unless `order` is a bijection on `0..order.len()`.
    pub fn new(order: Vec<usize>) -> Option<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || std::mem::replace(&mut seen[i], true) {
                return None;
            }
        }
        Some(Self { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.order.len()];
        for (pos, &frame) in self.order.iter().enumerate() {
            inv[frame] = pos;
        }
        Self { order: inv }
    }
}

/// `K` permutations of `0..frames`. Permutation `k` is a Fisher-Yates
/// shuffle driven by shuffle stream `k` of `seed` (see [`crate::rng`]).
pub fn generate_permutations(frames: usize, k: usize, seed: u64) -> Vec<Permutation> {
    (0..k)
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Shuffle, i as u64);
            let mut order: Vec<usize> = (0..frames).collect();
            rng::shuffle(&mut order, &mut rng);
            Permutation { order }
        })
        .collect()
}

/// Negatives are positions `[0, window_start)`, positives
/// `[window_start, window_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub window_start: usize,
    pub window_end: usize,
}

/// Windows start at `window_size` and advance by `window_stride` while the
/// start is before `frames`; the last window may be partial. Empty when
/// `frames <= window_size`.
pub fn enumerate_splits(frames: usize, window_size: usize, window_stride: usize) -> Vec<Split> {
    assert!(window_size >= 1 && (1..=window_size).contains(&window_stride));
    (window_size..frames)
        .step_by(window_stride)
        .map(|start| Split {
            window_start: start,
            window_end: (start + window_size).min(frames),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    SingleClass,
    NonFinite,
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SkipReason::SingleClass => "single_class",
            SkipReason::NonFinite => "non_finite",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedSplit {
    pub shuffle: usize,
    pub window_start: usize,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub splits_trained: usize,
    pub skipped: Vec<SkippedSplit>,
    /// Splits whose optimizer hit its iteration cap; their last iterate is used.
    pub nonconverged: usize,
}

impl Diagnostics {
    /// One line per skipped split: `shuffle,window_start,reason`.
    pub fn write_log<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for s in &self.skipped {
            writeln!(out, "{},{},{}", s.shuffle, s.window_start, s.reason)?;
        }
        Ok(())
    }

    fn absorb(&mut self, other: Diagnostics) {
        self.splits_trained += other.splits_trained;
        self.skipped.extend(other.skipped);
        self.nonconverged += other.nonconverged;
    }
}

/// Per-frame accumulations from one ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleContribution {
    pub prob_sum: Vec<f64>,
    pub prob_count: Vec<u32>,
    pub diagnostics: Diagnostics,
}

enum SplitOutcome {
    Scored {
        /// `(original frame, probability)` for each window position.
        scores: Vec<(usize, f64)>,
        converged: bool,
    },
    Skipped(SkipReason),
}

fn score_split(
    seq: &FeatureSequence,
    perm: &Permutation,
    split: Split,
    spec: &TrainSpec,
) -> Result<SplitOutcome, DetectorError> {
    let rows = &perm.order[..split.window_end];
    let x = seq.frames().select(Axis(0), rows);
    let labels: Vec<bool> = (0..split.window_end)
        .map(|pos| pos >= split.window_start)
        .collect();
    let fit = match classifier::train(x.view(), &labels, spec, None) {
        Ok(fit) => fit,
        Err(ClassifierError::SingleClass) => {
            return Ok(SplitOutcome::Skipped(SkipReason::SingleClass))
        }
        Err(ClassifierError::NonFinite) => return Ok(SplitOutcome::Skipped(SkipReason::NonFinite)),
        Err(e) => return Err(e.into()),
    };
    let scores = (split.window_start..split.window_end)
        .map(|pos| {
            let p = classifier::predict_proba(&fit.model, x.row(pos))?;
            Ok((rows[pos], p))
        })
        .collect::<Result<Vec<_>, ClassifierError>>()?;
    Ok(SplitOutcome::Scored {
        scores,
        converged: fit.converged,
    })
}

fn accumulate(
    prob_sum: &mut [f64],
    prob_count: &mut [u32],
    diagnostics: &mut Diagnostics,
    shuffle: usize,
    split: Split,
    outcome: SplitOutcome,
) {
    match outcome {
        SplitOutcome::Scored { scores, converged } => {
            diagnostics.splits_trained += 1;
            if !converged {
                diagnostics.nonconverged += 1;
            }
            for (frame, p) in scores {
                prob_sum[frame] += p;
                prob_count[frame] += 1;
            }
        }
        SplitOutcome::Skipped(reason) => diagnostics.skipped.push(SkippedSplit {
            shuffle,
            window_start: split.window_start,
            reason,
        }),
    }
}

fn check_inputs(
    seq: &FeatureSequence,
    config: &DetectorConfig,
) -> Result<Vec<Split>, DetectorError> {
    config.validate()?;
    let splits = enumerate_splits(seq.len(), config.window_size, config.window_stride);
    if splits.is_empty() {
        return Err(DetectorError::TooFewFrames {
            frames: seq.len(),
            window: config.window_size,
        });
    }
    Ok(splits)
}

/// Scores every split of one ordering, sequentially. `shuffle` only labels
/// diagnostics.
pub fn score_shuffle(
    seq: &FeatureSequence,
    perm: &Permutation,
    shuffle: usize,
    config: &DetectorConfig,
) -> Result<ShuffleContribution, DetectorError> {
    let splits = check_inputs(seq, config)?;
    if perm.len() != seq.len() {
        return Err(DetectorError::PermutationLength {
            expected: seq.len(),
            found: perm.len(),
        });
    }
    let spec = config.train_spec();
    let mut out = ShuffleContribution {
        prob_sum: vec![0.0; seq.len()],
        prob_count: vec![0; seq.len()],
        diagnostics: Diagnostics::default(),
    };
    for split in splits {
        let outcome = score_split(seq, perm, split, &spec)?;
        accumulate(
            &mut out.prob_sum,
            &mut out.prob_count,
            &mut out.diagnostics,
            shuffle,
            split,
            outcome,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub prob_sum: Vec<f64>,
    pub prob_count: Vec<u32>,
    /// Clamped mean probability; `None` for frames never scored.
    pub mean_prob: Vec<Option<f64>>,
    /// Odds of `mean_prob`; `None` for frames never scored.
    pub anomaly_score: Vec<Option<f64>>,
    pub diagnostics: Diagnostics,
}

impl ScoreTable {
    fn from_sums(
        prob_sum: Vec<f64>,
        prob_count: Vec<u32>,
        clamp: f64,
        diagnostics: Diagnostics,
    ) -> Self {
        let mean_prob: Vec<Option<f64>> = prob_sum
            .iter()
            .zip(&prob_count)
            .map(|(&s, &c)| (c > 0).then(|| (s / f64::from(c)).clamp(clamp, 1.0 - clamp)))
            .collect();
        let anomaly_score = mean_prob.iter().map(|p| p.map(|p| p / (1.0 - p))).collect();
        Self {
            prob_sum,
            prob_count,
            mean_prob,
            anomaly_score,
            diagnostics,
        }
    }

    pub fn len(&self) -> usize {
        self.prob_count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob_count.is_empty()
    }

    /// Frames that no split ever scored.
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&t| self.prob_count[t] == 0)
            .collect()
    }

    pub fn scored(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&t| self.prob_count[t] > 0)
            .collect()
    }

    pub fn log_odds(&self) -> Vec<Option<f64>> {
        self.anomaly_score.iter().map(|a| a.map(f64::ln)).collect()
    }

    /// `(frame, score)` for scored frames only.
    pub fn scored_values(&self) -> (Vec<usize>, Vec<f64>) {
        self.anomaly_score
            .iter()
            .enumerate()
            .filter_map(|(t, a)| a.map(|a| (t, a)))
            .unzip()
    }
}

/// Runs the full scoring pass described in the module docs.
pub fn detect(seq: &FeatureSequence, config: &DetectorConfig) -> Result<ScoreTable, DetectorError> {
    let splits = check_inputs(seq, config)?;
    let orderings = config.orderings(seq.len());
    let spec = config.train_spec();
    let work: Vec<(usize, usize)> = (0..orderings.len())
        .flat_map(|k| (0..splits.len()).map(move |s| (k, s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| DetectorError::ThreadPool(e.to_string()))?;
    let outcomes: Vec<Result<SplitOutcome, DetectorError>> = pool.install(|| {
        work.par_iter()
            .map(|&(k, s)| score_split(seq, &orderings[k], splits[s], &spec))
            .collect()
    });

    let mut prob_sum = vec![0.0; seq.len()];
    let mut prob_count = vec![0u32; seq.len()];
    let mut diagnostics = Diagnostics::default();
    for (&(k, s), outcome) in work.iter().zip(outcomes) {
        let mut d = Diagnostics::default();
        accumulate(
            &mut prob_sum,
            &mut prob_count,
            &mut d,
            k,
            splits[s],
            outcome?,
        );
        diagnostics.absorb(d);
    }
    Ok(ScoreTable::from_sums(
        prob_sum,
        prob_count,
        config.prob_clamp,
        diagnostics,
    ))
}

pub const SCORE_HEADER: &str = "frame_index,mean_prob,anomaly_score,prob_count,flagged";

/// Score CSV: header, then one row per frame. Unscored frames leave both
/// score fields empty and carry `unscored` in the last column.
pub fn write_scores<W: Write>(table: &ScoreTable, out: &mut W, log_odds: bool) -> io::Result<()> {
    writeln!(out, "{SCORE_HEADER}")?;
    for t in 0..table.len() {
        match (table.mean_prob[t], table.anomaly_score[t]) {
            (Some(p), Some(a)) => {
                let a = if log_odds { a.ln() } else { a };
                writeln!(out, "{t},{p:?},{a:?},{},", table.prob_count[t])?
            }
            _ => writeln!(out, "{t},,,{},unscored", table.prob_count[t])?,
        }
    }
    Ok(())
}

pub fn export_scores(
    table: &ScoreTable,
    path: &std::path::Path,
    log_odds: bool,
) -> Result<(), DetectorError> {
    let mut out = io::BufWriter::new(std::fs::File::create(path)?);
    write_scores(table, &mut out, log_odds)?;
    out.flush()?;
    Ok(())
}

/// A parsed row of the score CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub frame_index: usize,
    pub mean_prob: Option<f64>,
    pub anomaly_score: Option<f64>,
    pub prob_count: u32,
}

pub fn read_scores<R: BufRead>(reader: R) -> Result<Vec<ScoreRow>, DetectorError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let err = |message: String| DetectorError::ScoreFormat {
            line: i + 1,
            message,
        };
        if i == 0 {
            if line.trim() != SCORE_HEADER {
                return Err(err(format!("expected header {SCORE_HEADER:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let opt = |s: &str| -> Result<Option<f64>, DetectorError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| err(format!("bad number {s:?}")))
            }
        };
        let row = ScoreRow {
            frame_index: fields[0]
                .parse()
                .map_err(|_| err("bad frame index".into()))?,
            mean_prob: opt(fields[1])?,
            anomaly_score: opt(fields[2])?,
            prob_count: fields[3].parse().map_err(|_| err("bad count".into()))?,
        };
        if row.frame_index != rows.len() {
            return Err(err(format!(
                "expected frame {}, found {}",
                rows.len(),
                row.frame_index
            )));
        }
        let unscored = fields[4] == "unscored";
        if unscored != row.anomaly_score.is_none()
            || row.mean_prob.is_none() != row.anomaly_score.is_none()
        {
            return Err(err("flag column disagrees with score fields".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn seq(frames: Array2<f64>) -> FeatureSequence {
        FeatureSequence::new(frames, "test").unwrap()
    }

    #[test]
    fn split_enumeration() {
        let pairs = |v: Vec<Split>| -> Vec<(usize, usize)> {
            v.into_iter()
                .map(|s| (s.window_start, s.window_end))
                .collect()
        };
        assert_eq!(pairs(enumerate_splits(6, 2, 2)), vec![(2, 4), (4, 6)]);
        assert_eq!(
            pairs(enumerate_splits(7, 2, 2)),
            vec![(2, 4), (4, 6), (6, 7)]
        );
        assert!(enumerate_splits(3, 3, 1).is_empty());
        assert!(enumerate_splits(2, 3, 3).is_empty());

        let splits = enumerate_splits(10, 3, 1);
        assert_eq!(splits.len(), 7);
        let mut cover = [0; 10];
        for s in &splits {
            assert!(s.window_start >= 1 && s.window_end > s.window_start);
            for c in &mut cover[s.window_start..s.window_end] {
                *c += 1;
            }
        }
        assert_eq!(cover, [0, 0, 0, 1, 2, 3, 3, 3, 3, 3]);
    }

    #[test]
    fn permutations_basic() {
        assert_eq!(
            generate_permutations(1, 4, 9),
            vec![Permutation::identity(1); 4]
        );
        assert_eq!(
            generate_permutations(50, 3, 9),
            generate_permutations(50, 3, 9)
        );
        assert_ne!(
            generate_permutations(50, 3, 9),
            generate_permutations(50, 3, 10)
        );
        // adding shuffles leaves earlier ones untouched
        assert_eq!(
            generate_permutations(50, 5, 9)[..3],
            generate_permutations(50, 3, 9)[..]
        );
        for p in generate_permutations(30, 5, 1) {
            assert!(Permutation::new(p.order().to_vec()).is_some());
        }
        assert!(Permutation::new(vec![0, 0]).is_none());
        assert!(Permutation::new(vec![1, 2]).is_none());
        let p = Permutation::new(vec![2, 0, 1]).unwrap();
        assert_eq!(p.inverse().order(), &[1, 2, 0]);
    }

    #[test]
    fn permutations_are_uniform() {
        // exhaustive frequency check against the 1/24 of each ordering of 4
        let perms = generate_permutations(4, 10_000, 2024);
        let mut counts = std::collections::HashMap::new();
        for p in &perms {
            *counts.entry(p.order().to_vec()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 24);
        for (_, c) in counts {
            let freq = c as f64 / 10_000.0;
            assert!((freq - 1.0 / 24.0).abs() <= 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::default().validate().is_ok());
        let bad = [
            DetectorConfig {
                window_size: 0,
                ..Default::default()
            },
            DetectorConfig {
                window_stride: 11,
                ..Default::default()
            },
            DetectorConfig {
                window_stride: 0,
                ..Default::default()
            },
            DetectorConfig {
                lambda: -1.0,
                ..Default::default()
            },
            DetectorConfig {
                prob_clamp: 0.5,
                ..Default::default()
            },
            DetectorConfig {
                threads: 0,
                ..Default::default()
            },
            DetectorConfig {
                num_shuffles: 0,
                include_identity_shuffle: false,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn too_few_frames() {
        let s = seq(Array2::zeros((10, 2)));
        let err = detect(&s, &DetectorConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            DetectorError::TooFewFrames {
                frames: 10,
                window: 10
            }
        ));
    }

    #[test]
    fn identical_frames_score_equally_within_a_split() {
        let s = seq(Array2::from_elem((40, 3), 0.25));
        let cfg = DetectorConfig {
            num_shuffles: 0,
            window_size: 5,
            window_stride: 5,
            ..Default::default()
        };
        let c = score_shuffle(&s, &Permutation::identity(40), 0, &cfg).unwrap();
        for split in enumerate_splits(40, 5, 5) {
            let w = &c.prob_sum[split.window_start..split.window_end];
            assert!(w.iter().all(|&p| p == w[0]));
            // weights vanish at the optimum, leaving the class prior
            let n0 = split.window_start as f64;
            let n1 = (split.window_end - split.window_start) as f64;
            assert!((w[0] - n1 / (n0 + n1)).abs() < 1e-6, "{split:?}");
        }
    }

    #[test]
    fn odds_of_one_half_is_one() {
        let t = ScoreTable::from_sums(vec![0.5, 1.5], vec![1, 3], 1e-6, Diagnostics::default());
        assert_eq!(t.anomaly_score, vec![Some(1.0), Some(1.0)]);
    }

    #[test]
    fn clamp_keeps_scores_finite() {
        let t = ScoreTable::from_sums(
            vec![1.0, 0.0, 0.0],
            vec![1, 1, 0],
            1e-6,
            Diagnostics::default(),
        );
        assert_eq!(t.mean_prob[0], Some(1.0 - 1e-6));
        assert_eq!(t.mean_prob[1], Some(1e-6));
        assert!(t.anomaly_score[0].unwrap().is_finite());
        assert_eq!(t.anomaly_score[2], None);
        assert_eq!(t.flagged(), vec![2]);
    }

    #[test]
    fn step_change_scores_late_window_higher() {
        let s = seq(array![[0.0], [0.0], [0.0], [0.0], [10.0], [10.0]]);
        let cfg = DetectorConfig {
            num_shuffles: 0,
            window_size: 2,
            window_stride: 2,
            ..Default::default()
        };
        let c = score_shuffle(&s, &Permutation::identity(6), 0, &cfg).unwrap();
        assert_eq!(c.prob_count, vec![0, 0, 1, 1, 1, 1]);
        assert!(c.prob_sum[4] > 0.6 && c.prob_sum[5] > 0.6);
        assert!(c.prob_sum[4] > c.prob_sum[2]);
        let table = detect(&s, &cfg).unwrap();
        assert_eq!(table.prob_sum, c.prob_sum);
        assert_eq!(table.flagged(), vec![0, 1]);
    }

    /// Zooming grid search over (w, b), written without the classifier.
    fn grid_minimize(f: impl Fn(f64, f64) -> f64) -> (f64, f64) {
        let (mut cw, mut cb, mut half) = (0.0, 0.0, 20.0);
        for _ in 0..12 {
            let steps = 200;
            let h = 2.0 * half / steps as f64;
            let mut best = (f64::INFINITY, cw, cb);
            for i in 0..=steps {
                for j in 0..=steps {
                    let (w, b) = (cw - half + i as f64 * h, cb - half + j as f64 * h);
                    let v = f(w, b);
                    if v < best.0 {
                        best = (v, w, b);
                    }
                }
            }
            (cw, cb) = (best.1, best.2);
            half = 4.0 * h;
        }
        (cw, cb)
    }

    #[test]
    fn step_change_matches_grid_search() {
        let softplus = |z: f64| {
            if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            }
        };
        let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
        // window [4, 6): four negatives at 0, two positives at 10, lambda 1
        let (w, b) =
            grid_minimize(|w, b| 4.0 * softplus(b) + 2.0 * softplus(-(10.0 * w + b)) + 0.5 * w * w);
        let late = sigmoid(10.0 * w + b);
        // window [2, 4): every frame is 0, so only the bias matters
        let b_early = grid_minimize(|w, b| 2.0 * softplus(b) + 2.0 * softplus(-b) + 0.5 * w * w).1;
        let early = sigmoid(b_early);

        let s = seq(array![[0.0], [0.0], [0.0], [0.0], [10.0], [10.0]]);
        let cfg = DetectorConfig {
            num_shuffles: 0,
            window_size: 2,
            window_stride: 2,
            ..Default::default()
        };
        let c = score_shuffle(&s, &Permutation::identity(6), 0, &cfg).unwrap();
        assert!(
            (c.prob_sum[4] - late).abs() < 1e-6,
            "{} vs {late}",
            c.prob_sum[4]
        );
        assert!((c.prob_sum[5] - late).abs() < 1e-6);
        assert!(
            (c.prob_sum[2] - early).abs() < 1e-6,
            "{} vs {early}",
            c.prob_sum[2]
        );
        assert!(late > 0.96 && (early - 0.5).abs() < 1e-6);
    }

    #[test]
    fn relabeling_permutes_contributions() {
        let s = seq(array![
            [0.0, 1.0],
            [2.0, 0.5],
            [1.0, 1.0],
            [5.0, -1.0],
            [0.3, 0.2],
            [4.0, 4.0],
            [1.5, 0.0]
        ]);
        let cfg = DetectorConfig {
            window_size: 2,
            window_stride: 1,
            ..Default::default()
        };
        let perm = Permutation::new(vec![3, 0, 6, 1, 5, 2, 4]).unwrap();
        let base = score_shuffle(&s, &perm, 0, &cfg).unwrap();

        // reorder the frames by pi; the ordering that visits the same
        // frames in the same shuffled positions is pi^-1 o perm
        let pi = [4usize, 2, 6, 0, 1, 5, 3];
        let moved = s.reordered(&pi);
        let pi_inv = Permutation::new(pi.to_vec()).unwrap().inverse();
        let composed: Vec<usize> = perm.order().iter().map(|&f| pi_inv.order()[f]).collect();
        let other = score_shuffle(&moved, &Permutation::new(composed).unwrap(), 0, &cfg).unwrap();
        for (new_idx, &orig) in pi.iter().enumerate() {
            assert_eq!(other.prob_sum[new_idx], base.prob_sum[orig]);
            assert_eq!(other.prob_count[new_idx], base.prob_count[orig]);
        }
    }

    #[test]
    fn score_csv_round_trip() {
        let t = ScoreTable::from_sums(
            vec![0.3, 0.0, 1.7, 0.123456789],
            vec![1, 0, 2, 1],
            1e-6,
            Diagnostics::default(),
        );
        let mut a = Vec::new();
        write_scores(&t, &mut a, false).unwrap();
        let mut b = Vec::new();
        write_scores(&t, &mut b, false).unwrap();
        assert_eq!(a, b);
        let rows = read_scores(&a[..]).unwrap();
        assert_eq!(rows.len(), 4);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.prob_count, t.prob_count[i]);
            match (r.mean_prob, t.mean_prob[i]) {
                (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-12),
                (None, None) => {}
                other => panic!("mismatch {other:?}"),
            }
            assert_eq!(r.anomaly_score.is_some(), t.anomaly_score[i].is_some());
        }
        let text = String::from_utf8(a).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",1,"));
        assert!(text.lines().nth(2).unwrap().ends_with(",,,0,unscored"));
    }

    #[test]
    fn all_scored_means_empty_flag_column() {
        let t = ScoreTable::from_sums(vec![0.3, 0.6], vec![1, 1], 1e-6, Diagnostics::default());
        let mut a = Vec::new();
        write_scores(&t, &mut a, false).unwrap();
        let text = String::from_utf8(a).unwrap();
        assert!(text.lines().skip(1).all(|l| l.ends_with(',')));
    }

    #[test]
    fn diagnostics_log_lines() {
        let d = Diagnostics {
            splits_trained: 3,
            skipped: vec![SkippedSplit {
                shuffle: 2,
                window_start: 40,
                reason: SkipReason::NonFinite,
            }],
            nonconverged: 0,
        };
        let mut out = Vec::new();
        d.write_log(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "2,40,non_finite\n");
    }
}
