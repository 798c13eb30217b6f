//! Closed form against simulation at the default scenario.

use std::time::Instant;

use aero_acm::channel::SystemConfig;
use aero_acm::montecarlo::{mean_and_stderr, run_point, SweepSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(500);
    let config = SystemConfig::default();
    let start = Instant::now();
    let point = run_point(&config, &SweepSettings::new(trials, 1))?;
    let (mean, err) = mean_and_stderr(&point.samples);
    println!("theoretical {:.4}  approximate {:.4}  simulated {mean:.4} +- {err:.4} bit/s/Hz per DRA", point.theoretical, point.approximate);
    println!("{trials} trials in {:.2?}", start.elapsed());
    Ok(())
}
