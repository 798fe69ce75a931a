//! Scores the synthetic sequence with and without shuffling and lists the
//! most anomalous frames.
//!
//! cargo run --release --example toy_sequence [-- SEED]

use shufscan::detector::{self, DetectorConfig};
use shufscan::{eval, synth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(0);
    let spec = synth::ToySpec {
        seed,
        ..synth::default_fig2_plan()
    };
    let (seq, truth) = synth::make_toy_sequence(&spec)?;
    let classes = spec.frame_classes();
    println!(
        "{} frames, {} anomalous, d={}",
        seq.len(),
        truth.positives(),
        seq.dim()
    );

    for k in [0, 10] {
        let config = DetectorConfig {
            num_shuffles: k,
            seed,
            ..Default::default()
        };
        let table = detector::detect(&seq, &config)?;
        let (frames, scores) = table.scored_values();
        let curve = eval::roc_curve(&scores, &truth.subset(&frames))?;
        println!(
            "\nK={k}: AUC {:.4}, {} frames unscored",
            curve.auc,
            table.flagged().len()
        );

        let mut ranked: Vec<(usize, f64)> = frames.into_iter().zip(scores).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        println!("  frame  class  odds");
        for (frame, score) in ranked.iter().take(8) {
            println!("  {frame:>5}  {:>5}  {score:.4}", classes[*frame]);
        }
    }
    Ok(())
}
