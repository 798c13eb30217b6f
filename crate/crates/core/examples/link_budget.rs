//! Path loss and received power over the operating range.

use aero_acm::channel::{average_received_power, noise_power, path_loss_db, received_power, subcarrier_noise_variance, SystemConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SystemConfig::default();
    println!("{:>8} {:>12} {:>14}", "km", "loss_dB", "received_W");
    for km in [5.0, 10.0, 25.0, 40.0, 110.0, 200.0, 350.0, 500.0, 740.0] {
        let d = km * 1e3;
        println!("{km:>8} {:>12.4} {:>14.4e}", path_loss_db(config.carrier_freq, d)?, received_power(config.tx_power_per_antenna, config.carrier_freq, d)?);
    }
    println!("noise over the band      {:.4e} W", noise_power(config.noise_figure, config.ref_temperature, config.bandwidth)?);
    println!("noise per subcarrier     {:.4e} W", subcarrier_noise_variance(&config)?);
    println!(
        "mean interferer power    {:.4e} W (uniform over {}..{} km)",
        average_received_power(config.tx_power_per_antenna, config.carrier_freq, config.d_min, config.d_max)?,
        config.d_min / 1e3,
        config.d_max / 1e3
    );
    Ok(())
}
