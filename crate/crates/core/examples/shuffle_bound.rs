//! How many shuffles make every one of A anomalies land early in at least
//! some orderings, for a target failure probability.
//!
//! cargo run --example shuffle_bound [-- DELTA EPS_P]

use shufscan::theory::{self, ShuffleBound, ShuffleBoundQuery};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let delta: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.05);
    let eps_p: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.25);

    println!("{}", ShuffleBound::CSV_HEADER);
    for a in [2, 5, 10, 20, 50, 100, 200, 500, 1000] {
        let bound = ShuffleBound::solve(&ShuffleBoundQuery::new(a, delta, eps_p)?);
        println!("{}", bound.csv_line());
    }

    // the failure probability falls off exponentially in K
    let q = ShuffleBoundQuery::new(10, delta, eps_p)?;
    let k = theory::required_shuffles(&q);
    println!("\nA=10: K={k}");
    for frac in [0.25, 0.5, 0.75, 1.0, 1.5] {
        let kk = (k as f64 * frac).round() as u64;
        println!(
            "  K={kk:>6}  P(fail) <= {:.3e}",
            theory::chernoff_failure_prob(&q, kk)
        );
    }
    Ok(())
}
