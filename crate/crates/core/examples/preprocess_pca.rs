//! Standardize, reduce with PCA, then score in the reduced space.
//!
//! cargo run --release --example preprocess_pca

use shufscan::detector::{self, DetectorConfig};
use shufscan::{eval, ingest, synth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (raw, truth) = synth::make_toy_sequence(&synth::default_fig2_plan())?;
    let params = ingest::fit_standardizer(&raw);
    let seq = ingest::apply_standardizer(&raw, &params)?;

    let full = ingest::fit_pca(&seq, seq.dim())?;
    let total: f64 = full.eigenvalues.sum();
    let mut cumulative = 0.0;
    println!("component  eigenvalue  cumulative share");
    for (i, ev) in full.eigenvalues.iter().enumerate().take(6) {
        cumulative += ev;
        println!("{:>9}  {ev:>10.4}  {:.4}", i + 1, cumulative / total);
    }

    for r in [1, 2, 3, 8] {
        let model = ingest::fit_pca(&seq, r)?;
        let reduced = ingest::project(&seq, &model)?;
        let table = detector::detect(&reduced, &DetectorConfig::default())?;
        let (frames, scores) = table.scored_values();
        let auc = eval::roc_curve(&scores, &truth.subset(&frames))?.auc;
        println!("r={r}: AUC {auc:.4}  ({})", reduced.source());
    }
    Ok(())
}
