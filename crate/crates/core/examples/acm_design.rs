//! Designs the switching table for the default scenario and for a 64-antenna array.

use aero_acm::acm::{design_for_scenario, reference_modes, DesignSettings};
use aero_acm::channel::SystemConfig;
use aero_acm::sinr::{AnalysisOptions, RateModel, SinrMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for num_dta in [32, 64] {
        let config = SystemConfig { num_dta, ..SystemConfig::default() };
        let model = RateModel::new(&config, AnalysisOptions::default())?;
        let settings = DesignSettings::from_config(&config);
        let (table, curve) = design_for_scenario(&model, &reference_modes(), &settings, SinrMode::Theoretical, 1e3)?;
        println!("N_t = {num_dta}: rate at 5 km {:.3}, at 740 km {:.3} bit/s/Hz", curve.rates[0], curve.rates[curve.len() - 1]);
        for (mode, d) in table.modes.iter().zip(&table.thresholds) {
            println!("  {:>6} rate {:.3}  SE {:.3}  from {:>7.1} km", mode.modulation(), mode.code_rate, mode.spectral_efficiency, d / 1e3);
        }
        for dropped in &table.dropped {
            println!("  dropped SE {:.3} ({:?})", dropped.mode.spectral_efficiency, dropped.reason);
        }
    }
    Ok(())
}
