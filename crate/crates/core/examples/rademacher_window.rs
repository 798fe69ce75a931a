//! Empirical Rademacher complexity of the window classifier: smaller
//! subsets and weaker regularization both let it fit random labels better,
//! which is why short windows and small lambda give noisier scores.
//!
//! cargo run --release --example rademacher_window

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use shufscan::theory;
use shufscan::FeatureSequence;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let frames = Array2::from_shape_simple_fn((512, 8), || rng.sample::<f64, _>(StandardNormal));
    let seq = FeatureSequence::new(frames, "gaussian")?;

    println!("lambda      m   estimate  std.err");
    for lambda in [0.01, 1.0, 100.0] {
        for m in [8, 16, 32, 64, 128] {
            let est = theory::empirical_rademacher(&seq, m, lambda, 100, 7, 1)?;
            println!(
                "{lambda:>6} {m:>6}   {:.4}    {:.4}",
                est.value, est.std_error
            );
        }
    }
    Ok(())
}
