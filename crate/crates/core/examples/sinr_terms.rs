//! Closed-form SINR terms per receive antenna as the interferer count grows.

use aero_acm::channel::SystemConfig;
use aero_acm::sinr::{AnalysisOptions, RateModel, SinrMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for interferers in [0, 4, 14] {
        let config = SystemConfig { num_interferers: interferers, ..SystemConfig::default() };
        let model = RateModel::new(&config, AnalysisOptions::default())?;
        let summary = model.summary_at(config.link_distance, SinrMode::Theoretical)?;
        let approximate = model.rate_at(config.link_distance, SinrMode::Approximate)?;
        println!("A = {interferers}: {:.4} bit/s/Hz per DRA (approximate {approximate:.4})", summary.rate_per_dra);
        for (n, terms) in summary.per_dra.iter().enumerate() {
            println!(
                "  dra {} desired {:.3e} error {:.3e} inter-antenna {:.3e} interferer {:.3e} sinr {:.2}",
                n + 1,
                terms.desired,
                terms.est_error_term,
                terms.inter_antenna_term,
                terms.interferer_term,
                terms.sinr
            );
        }
    }
    Ok(())
}
