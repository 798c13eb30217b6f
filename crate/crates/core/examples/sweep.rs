//! Sweeps one parameter and prints the three rate series plus a CCDF summary.
//!
//! `cargo run --release --example sweep -- A 0,2,4,8,14 300`

use aero_acm::channel::SystemConfig;
use aero_acm::montecarlo::{ccdf, run_sweep, SweepAxis, SweepSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let axis: SweepAxis = args.next().unwrap_or_else(|| "A".into()).parse()?;
    let values: Vec<f64> = args.next().unwrap_or_else(|| "0,2,4,8,14".into()).split(',').map(str::parse).collect::<Result<_, _>>()?;
    let trials = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300);
    let values: Vec<f64> = match axis {
        SweepAxis::LinkDistance => values.iter().map(|km| km * 1e3).collect(),
        _ => values,
    };
    let result = run_sweep(&SystemConfig::default(), axis, &values, &SweepSettings::new(trials, 1))?;
    println!("{:>10} {:>11} {:>11} {:>10} {:>8} {:>9}", axis.label(), "theoretical", "approximate", "simulated", "stderr", "P(>3.0)");
    for i in 0..values.len() {
        let tail = ccdf(&result.samples[i], &[3.0])?[0];
        println!(
            "{:>10} {:>11.4} {:>11.4} {:>10.4} {:>8.4} {:>9.3}",
            values[i], result.theoretical[i], result.approximate[i], result.simulated_mean[i], result.stderr[i], tail
        );
    }
    Ok(())
}
