//! Parameter-selection helpers: how many shuffles, and how much capacity
//! the classifier has at a given window size.
//!
//! # Shuffle count
//!
//! With `A` indistinguishable anomalies, each one is first among them in a
//! random shuffle with probability `mu = 1/A`. Asking that every anomaly be
//! first in at least a fraction `mu - eps` of `K` shuffles, with
//! `eps = eps_p / A`, the relative-entropy Chernoff bound plus a union bound
//! over the anomalies give a failure probability of at most
//!
//! ```text
//! delta(K) = A * exp(-K * KL(mu - eps, mu))
//! ```
//!
//! and so `K >= log(A / delta) / KL(mu - eps, mu)` shuffles suffice. Here
//! `KL` is the Bernoulli divergence, which in these variables is
//!
//! ```text
//! KL = (1/A) * [ (1 - eps_p) log(1 - eps_p) + (A - 1 + eps_p) log(1 + eps_p / (A - 1)) ]
//! ```
//!
//! An expansion with `log(eps_p / (A - 1))` in the second term is negative
//! for every `A >= 2`, `eps_p < 1`, so it cannot be the divergence.
//! Since `KL` is of order `eps_p^2 / A`, the required `K` grows as
//! `O(A log A)`.
//!
//! # Empirical Rademacher complexity
//!
//! [`empirical_rademacher`] fits the classifier to random `+-1` labels on
//! random subsets of `m` frames and reports the mean correlation between
//! the labels and `2 p(x) - 1`.

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, ClassifierError, TrainSpec};
use crate::ingest::FeatureSequence;
use crate::rng::{self, Domain};

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("bernoulli kl: q must lie in (0, 1), got {0}")]
    DegenerateReference(f64),
    #[error("bernoulli kl: p must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("invalid shuffle-bound query: {0}")]
    InvalidQuery(String),
    #[error("subset size {m} out of range 2..={frames}")]
    SubsetSize { m: usize, frames: usize },
    #[error("num_trials must be >= 1")]
    NoTrials,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// `KL(Bernoulli(p) || Bernoulli(q))` with `0 log 0 = 0`.
pub fn bernoulli_kl(p: f64, q: f64) -> Result<f64, TheoryError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(TheoryError::DegenerateReference(q));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(TheoryError::InvalidProbability(p));
    }
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    Ok((term(p, q) + term(1.0 - p, 1.0 - q)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuffleBoundQuery {
    /// `A`
    pub num_anomalies: u64,
    /// `delta`
    pub failure_prob: f64,
    /// `eps_p`
    pub rel_tolerance: f64,
}

impl ShuffleBoundQuery {
    pub fn new(
        num_anomalies: u64,
        failure_prob: f64,
        rel_tolerance: f64,
    ) -> Result<Self, TheoryError> {
        if num_anomalies < 2 {
            return Err(TheoryError::InvalidQuery(format!(
                "num_anomalies must be >= 2, got {num_anomalies}"
            )));
        }
        if !(failure_prob > 0.0 && failure_prob < 1.0) {
            return Err(TheoryError::InvalidQuery(format!(
                "failure_prob must lie in (0, 1), got {failure_prob}"
            )));
        }
        if !(rel_tolerance > 0.0 && rel_tolerance < 1.0) {
            return Err(TheoryError::InvalidQuery(format!(
                "rel_tolerance must lie in (0, 1), got {rel_tolerance}"
            )));
        }
        Ok(Self {
            num_anomalies,
            failure_prob,
            rel_tolerance,
        })
    }

    /// `mu = 1/A`
    pub fn mu(&self) -> f64 {
        1.0 / self.num_anomalies as f64
    }

    /// `eps = eps_p / A`
    pub fn eps(&self) -> f64 {
        self.rel_tolerance / self.num_anomalies as f64
    }

    /// `KL(mu - eps, mu)`
    pub fn kl(&self) -> f64 {
        bernoulli_kl(self.mu() - self.eps(), self.mu()).expect("query invariants hold")
    }
}

/// Union-bounded probability that some anomaly is first in too few of `k`
/// shuffles. Values above 1 are vacuous and returned unchanged.
pub fn chernoff_failure_prob(query: &ShuffleBoundQuery, k: u64) -> f64 {
    query.num_anomalies as f64 * (-(k as f64) * query.kl()).exp()
}

/// Smallest `K` with `chernoff_failure_prob(query, K) <= delta`.
pub fn required_shuffles(query: &ShuffleBoundQuery) -> u64 {
    let a = query.num_anomalies as f64;
    let mut k = ((a / query.failure_prob).ln() / query.kl()).ceil().max(0.0) as u64;
    // settle rounding at the boundary against the bound as evaluated
    while chernoff_failure_prob(query, k) > query.failure_prob {
        k += 1;
    }
    while k > 0 && chernoff_failure_prob(query, k - 1) <= query.failure_prob {
        k -= 1;
    }
    k
}

/// Everything the `bound` command prints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuffleBound {
    pub num_anomalies: u64,
    pub failure_prob: f64,
    pub rel_tolerance: f64,
    pub mu: f64,
    pub eps: f64,
    pub kl: f64,
    pub shuffles: u64,
    /// The bound actually achieved at `shuffles`.
    pub achieved_failure_prob: f64,
}

impl ShuffleBound {
    pub fn solve(query: &ShuffleBoundQuery) -> Self {
        let shuffles = required_shuffles(query);
        Self {
            num_anomalies: query.num_anomalies,
            failure_prob: query.failure_prob,
            rel_tolerance: query.rel_tolerance,
            mu: query.mu(),
            eps: query.eps(),
            kl: query.kl(),
            shuffles,
            achieved_failure_prob: chernoff_failure_prob(query, shuffles),
        }
    }

    pub const CSV_HEADER: &'static str = "A,delta,eps_p,mu,eps,kl,K";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{}",
            self.num_anomalies,
            self.failure_prob,
            self.rel_tolerance,
            self.mu,
            self.eps,
            self.kl,
            self.shuffles
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub subset_size: usize,
    pub num_trials: usize,
    pub value: f64,
    pub std_error: f64,
    /// Label draws rejected for being all one sign.
    pub resampled_labels: usize,
}

struct Trial {
    correlation: f64,
    resampled: usize,
}

fn rademacher_trial(
    seq: &FeatureSequence,
    m: usize,
    spec: &TrainSpec,
    seed: u64,
    trial: usize,
) -> Result<Trial, TheoryError> {
    let mut rng = rng::stream(seed, Domain::Rademacher, trial as u64);
    // partial Fisher-Yates: the first m slots are a uniform m-subset
    let mut idx: Vec<usize> = (0..seq.len()).collect();
    for i in 0..m {
        let j = i + rng::bounded(&mut rng, seq.len() - i);
        idx.swap(i, j);
    }
    idx.truncate(m);

    let mut resampled = 0;
    let labels = loop {
        let labels: Vec<bool> = (0..m).map(|_| rng::bounded(&mut rng, 2) == 1).collect();
        let pos = labels.iter().filter(|&&l| l).count();
        if pos != 0 && pos != m {
            break labels;
        }
        resampled += 1;
    };
    let x = seq.frames().select(Axis(0), &idx);
    let fit = classifier::train(x.view(), &labels, spec, None)?;
    let mut total = 0.0;
    for (row, &label) in x.rows().into_iter().zip(&labels) {
        let g = 2.0 * classifier::predict_proba(&fit.model, row)? - 1.0;
        total += if label { g } else { -g };
    }
    Ok(Trial {
        correlation: total / m as f64,
        resampled,
    })
}

/// Monte Carlo estimate of the classifier's empirical Rademacher
/// complexity at subset size `m`. Trials run in parallel on `threads`
/// workers and are reduced in trial order.
pub fn empirical_rademacher(
    seq: &FeatureSequence,
    m: usize,
    lambda: f64,
    num_trials: usize,
    seed: u64,
    threads: usize,
) -> Result<RademacherEstimate, TheoryError> {
    if m < 2 || m > seq.len() {
        return Err(TheoryError::SubsetSize {
            m,
            frames: seq.len(),
        });
    }
    if num_trials == 0 {
        return Err(TheoryError::NoTrials);
    }
    let spec = TrainSpec::new(lambda);
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| TheoryError::ThreadPool(e.to_string()))?;
    let trials: Vec<Result<Trial, TheoryError>> = pool.install(|| {
        (0..num_trials)
            .into_par_iter()
            .map(|t| rademacher_trial(seq, m, &spec, seed, t))
            .collect()
    });
    let trials = trials.into_iter().collect::<Result<Vec<_>, _>>()?;
    let n = num_trials as f64;
    let mean = trials.iter().map(|t| t.correlation).sum::<f64>() / n;
    let var = if num_trials > 1 {
        trials
            .iter()
            .map(|t| (t.correlation - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    Ok(RademacherEstimate {
        subset_size: m,
        num_trials,
        value: mean,
        std_error: (var / n).sqrt(),
        resampled_labels: trials.iter().map(|t| t.resampled).sum(),
    })
}
