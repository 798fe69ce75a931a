//! How frame AUC grows with the number of shuffles. K=0 scores only the
//! original order, which is plain change detection: the first appearance of
//! a common class looks anomalous and a repeated rare event does not.
//!
//! cargo run --release --example change_detection

use shufscan::detector::{self, DetectorConfig};
use shufscan::{eval, synth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = synth::default_fig2_plan();
    let (seq, truth) = synth::make_toy_sequence(&spec)?;
    let classes = spec.frame_classes();
    let late_common: Vec<usize> = (0..seq.len()).filter(|&t| classes[t] == 1).collect();

    println!("lambda     K    AUC   mean odds (late common class)");
    for lambda in [0.01, 1.0, 100.0] {
        for k in [0, 1, 2, 5, 10, 20] {
            let config = DetectorConfig {
                num_shuffles: k,
                lambda,
                ..Default::default()
            };
            let table = detector::detect(&seq, &config)?;
            let (frames, scores) = table.scored_values();
            let auc = eval::roc_curve(&scores, &truth.subset(&frames))?.auc;
            let late: Vec<f64> = late_common
                .iter()
                .filter_map(|&t| table.anomaly_score[t])
                .collect();
            let mean = late.iter().sum::<f64>() / late.len() as f64;
            println!("{lambda:>6} {k:>5} {auc:.4}   {mean:.4}");
        }
    }
    Ok(())
}
