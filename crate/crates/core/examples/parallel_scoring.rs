//! Shuffles are independent, so scoring spreads over threads with no change
//! in output. Also shows the same result assembled by hand from per-ordering
//! contributions.
//!
//! cargo run --release --example parallel_scoring

use std::time::Instant;

use shufscan::detector::{self, DetectorConfig, Permutation};
use shufscan::synth;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (seq, _) = synth::make_toy_sequence(&synth::default_fig2_plan())?;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    println!("{cores} core(s) available");

    let mut reference = None;
    for threads in [1, 2, 4, 8] {
        let config = DetectorConfig {
            num_shuffles: 20,
            threads,
            ..Default::default()
        };
        let started = Instant::now();
        let table = detector::detect(&seq, &config)?;
        let elapsed = started.elapsed();
        let same = reference.get_or_insert_with(|| table.clone()) == &table;
        println!(
            "threads={threads}: {:.2}s, identical to 1 thread: {same}",
            elapsed.as_secs_f64()
        );
    }

    // by hand: identity first, then the seeded permutations, summed in order
    let config = DetectorConfig {
        num_shuffles: 20,
        ..Default::default()
    };
    let mut orderings = vec![Permutation::identity(seq.len())];
    orderings.extend(detector::generate_permutations(
        seq.len(),
        config.num_shuffles,
        config.seed,
    ));
    let mut sum = vec![0.0; seq.len()];
    for (k, perm) in orderings.iter().enumerate() {
        let c = detector::score_shuffle(&seq, perm, k, &config)?;
        for (s, v) in sum.iter_mut().zip(&c.prob_sum) {
            *s += v;
        }
    }
    println!(
        "manual reduction matches: {}",
        Some(&sum) == reference.as_ref().map(|t| &t.prob_sum)
    );
    Ok(())
}
