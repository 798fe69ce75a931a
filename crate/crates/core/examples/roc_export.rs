//! End to end on files: features and labels in, score and ROC CSVs out.
//! With no arguments the synthetic sequence is written to a temporary
//! directory first.
//!
//! cargo run --release --example roc_export [-- FEATURES.csv TRUTH.txt OUT_DIR]

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use shufscan::detector::{self, DetectorConfig};
use shufscan::ingest::{self, FeatureFormat};
use shufscan::{eval, synth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (features, truth_path, out_dir) = if args.len() == 3 {
        (
            PathBuf::from(&args[0]),
            PathBuf::from(&args[1]),
            PathBuf::from(&args[2]),
        )
    } else {
        let dir = std::env::temp_dir().join("shufscan-roc-export");
        std::fs::create_dir_all(&dir)?;
        let (seq, truth) = synth::make_toy_sequence(&synth::default_fig2_plan())?;
        let f = dir.join("toy.csv");
        let t = dir.join("toy.truth");
        ingest::save_features(&seq, &f, FeatureFormat::Csv)?;
        ingest::save_ground_truth(&truth, &t)?;
        (f, t, dir)
    };

    let seq = ingest::load_features(&features, FeatureFormat::Csv)?;
    let truth = ingest::load_ground_truth(&truth_path)?;
    let table = detector::detect(&seq, &DetectorConfig::default())?;

    let scores_path = out_dir.join("scores.csv");
    detector::export_scores(&table, &scores_path, false)?;

    // read the scores back, as a separate evaluation step would
    let rows = detector::read_scores(BufReader::new(File::open(&scores_path)?))?;
    let (frames, values): (Vec<usize>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.anomaly_score.map(|s| (r.frame_index, s)))
        .unzip();
    let curve = eval::roc_curve(&values, &truth.subset(&frames))?;

    let roc_path = out_dir.join("roc.csv");
    eval::write_roc_csv(&curve, &mut BufWriter::new(File::create(&roc_path)?))?;
    println!("AUC {:.4} over {} scored frames", curve.auc, frames.len());
    println!("wrote {} and {}", scores_path.display(), roc_path.display());
    Ok(())
}
