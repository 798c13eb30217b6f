//! Link budget and Rician channel model.
//!
//! Channel matrices are kept in the training orientation: `N_t x N_r`, one
//! column per receive antenna. The data-side channel of receive antenna `n` is
//! the conjugate transpose of column `n`. With column-stacking vectorisation
//! the scattered-part covariance is `R_r ⊗ R_t`, whose `N_t x N_t` diagonal
//! blocks are the per-antenna covariances on both sides of the link.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{gaussian_matrix_with, hermitian_sqrt, kron, CMatrix, NumericsError, RngStream};
use num_complex::Complex64;

/// Boltzmann constant as used by the link budget (J/K).
pub const BOLTZMANN: f64 = 1.3e-23;

/// Free-space constant in the path-loss formula (dB).
const PATH_LOSS_OFFSET_DB: f64 = -154.06;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{quantity} must be positive, got {value}")]
    Domain { quantity: &'static str, value: f64 },
    #[error("invalid configuration: {key}: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn positive(quantity: &'static str, value: f64) -> Result<f64, ChannelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ChannelError::Domain { quantity, value })
    }
}

/// Scenario parameters of one air-to-air link and its interferers.
///
/// Distances are in meters, powers in watts, frequencies in hertz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub num_interferers: usize,
    pub num_dra: usize,
    pub num_dta: usize,
    pub tx_power_per_antenna: f64,
    pub num_subcarriers: usize,
    pub cp_length: usize,
    pub rician_k: f64,
    pub bandwidth: f64,
    pub carrier_freq: f64,
    pub correlation_factor: f64,
    pub noise_figure: f64,
    pub link_distance: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub ref_temperature: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_interferers: 4,
            num_dra: 4,
            num_dta: 32,
            tx_power_per_antenna: 1.0,
            num_subcarriers: 512,
            cp_length: 32,
            rician_k: 5.0,
            bandwidth: 6e6,
            carrier_freq: 5e9,
            correlation_factor: 0.1,
            noise_figure: 4.0,
            link_distance: 10e3,
            d_min: 5e3,
            d_max: 740e3,
            ref_temperature: 290.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |key: &'static str, reason: &str| Err(ChannelError::InvalidConfig { key, reason: reason.to_string() });
        if self.num_dra == 0 {
            return bad("num_dra", "must be at least 1");
        }
        if self.num_dra > self.num_dta {
            return bad("num_dra", "must not exceed num_dta");
        }
        if self.num_subcarriers == 0 {
            return bad("num_subcarriers", "must be at least 1");
        }
        if self.cp_length >= self.num_subcarriers {
            return bad("cp_length", "must be smaller than num_subcarriers");
        }
        for (key, value) in [
            ("tx_power_per_antenna", self.tx_power_per_antenna),
            ("bandwidth", self.bandwidth),
            ("carrier_freq", self.carrier_freq),
            ("link_distance", self.link_distance),
            ("d_min", self.d_min),
            ("d_max", self.d_max),
            ("ref_temperature", self.ref_temperature),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return bad(key, "must be positive and finite");
            }
        }
        if !(self.rician_k >= 0.0 && self.rician_k.is_finite()) {
            return bad("rician_k", "must be non-negative and finite");
        }
        if !(0.0..1.0).contains(&self.correlation_factor) {
            return bad("correlation_factor", "must lie in [0, 1)");
        }
        if !self.noise_figure.is_finite() {
            return bad("noise_figure", "must be finite");
        }
        if self.d_min >= self.d_max {
            return bad("d_min", "must be smaller than d_max");
        }
        if self.link_distance < self.d_min || self.link_distance >= self.d_max {
            return bad("link_distance", "must lie in [d_min, d_max)");
        }
        Ok(())
    }

    /// LOS amplitude `sqrt(K / (K + 1))`.
    pub fn nu(&self) -> f64 {
        if self.rician_k.is_infinite() {
            1.0
        } else {
            (self.rician_k / (self.rician_k + 1.0)).sqrt()
        }
    }

    /// Scattered amplitude `sqrt(1 / (K + 1))`.
    pub fn varsigma(&self) -> f64 {
        (1.0 / (self.rician_k + 1.0)).sqrt()
    }

    /// Fraction of subcarrier time carrying payload, `(N - N_cp) / N`.
    pub fn payload_fraction(&self) -> f64 {
        (self.num_subcarriers - self.cp_length) as f64 / self.num_subcarriers as f64
    }
}

/// Free-space path loss in dB.
pub fn path_loss_db(carrier_freq: f64, distance: f64) -> Result<f64, ChannelError> {
    let f = positive("carrier frequency", carrier_freq)?;
    let d = positive("distance", distance)?;
    Ok(PATH_LOSS_OFFSET_DB + 20.0 * f.log10() + 20.0 * d.log10())
}

/// Received power over free space.
pub fn received_power(tx_power: f64, carrier_freq: f64, distance: f64) -> Result<f64, ChannelError> {
    let p = positive("transmit power", tx_power)?;
    Ok(p * 10f64.powf(-0.1 * path_loss_db(carrier_freq, distance)?))
}

/// Thermal noise power over the whole band.
pub fn noise_power(noise_figure_db: f64, ref_temperature: f64, bandwidth: f64) -> Result<f64, ChannelError> {
    let t0 = positive("reference temperature", ref_temperature)?;
    let b = positive("bandwidth", bandwidth)?;
    if !noise_figure_db.is_finite() {
        return Err(ChannelError::Domain { quantity: "noise figure", value: noise_figure_db });
    }
    Ok(10f64.powf(noise_figure_db / 10.0) * BOLTZMANN * t0 * b)
}

/// Noise variance per subcarrier.
pub fn subcarrier_noise_variance(config: &SystemConfig) -> Result<f64, ChannelError> {
    Ok(noise_power(config.noise_figure, config.ref_temperature, config.bandwidth)? / config.num_subcarriers as f64)
}

/// Mean received power when the distance is uniform on `[d_lo, d_hi]`.
///
/// `d_lo == d_hi` is accepted and gives the point value.
pub fn average_received_power(tx_power: f64, carrier_freq: f64, d_lo: f64, d_hi: f64) -> Result<f64, ChannelError> {
    let p = positive("transmit power", tx_power)?;
    let f = positive("carrier frequency", carrier_freq)?;
    let lo = positive("lower distance", d_lo)?;
    let hi = positive("upper distance", d_hi)?;
    if hi < lo {
        return Err(ChannelError::Domain { quantity: "distance interval width", value: hi - lo });
    }
    Ok(p * 10f64.powf(-0.1 * PATH_LOSS_OFFSET_DB) / (f * f) / (lo * hi))
}

/// Exponential correlation matrix `[R]_{m,n} = (c ρ)^{|m-n|}`, conjugated below
/// the diagonal, with `c = e^{jθ}` when a phase is given.
pub fn exponential_correlation(n: usize, rho: f64, phase: Option<f64>) -> Result<CMatrix, ChannelError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(ChannelError::Domain { quantity: "correlation factor below one", value: rho });
    }
    let base = Complex64::from_polar(rho, phase.unwrap_or(0.0));
    Ok(CMatrix::from_fn(n, n, |i, j| {
        if i <= j {
            base.powu((j - i) as u32)
        } else {
            base.conj().powu((i - j) as u32)
        }
    }))
}

/// Second-order statistics of one link.
#[derive(Debug, Clone)]
pub struct ChannelStats {
    /// Deterministic LOS component, `N_t x N_r`.
    pub h_d: CMatrix,
    pub corr_tx: CMatrix,
    pub corr_rx: CMatrix,
    pub corr_tx_sqrt: CMatrix,
    pub corr_rx_sqrt: CMatrix,
    pub nu: f64,
    pub varsigma: f64,
    /// `R_r ⊗ R_t`, the covariance of the column-stacked scattered part.
    pub covariance: CMatrix,
}

impl ChannelStats {
    pub fn num_dta(&self) -> usize {
        self.corr_tx.nrows()
    }

    pub fn num_dra(&self) -> usize {
        self.corr_rx.nrows()
    }

    /// Diagonal block `(n, n)` of the covariance, `R_r[n, n] R_t`.
    pub fn covariance_block(&self, n: usize) -> CMatrix {
        self.corr_tx.scale_complex(self.corr_rx[(n, n)])
    }

    /// Same statistics with another LOS component.
    pub fn with_los(&self, h_d: CMatrix) -> Self {
        Self { h_d, ..self.clone() }
    }
}

/// Builds the channel statistics; receive-side antennas are uncorrelated.
pub fn build_channel_stats(config: &SystemConfig, h_d: CMatrix, phase: Option<f64>) -> Result<ChannelStats, ChannelError> {
    let corr_tx = exponential_correlation(config.num_dta, config.correlation_factor, phase)?;
    let corr_rx = CMatrix::identity(config.num_dra);
    build_channel_stats_with(config, h_d, corr_tx, corr_rx)
}

/// Builds the channel statistics from explicit transmit and receive correlations.
pub fn build_channel_stats_with(
    config: &SystemConfig,
    h_d: CMatrix,
    corr_tx: CMatrix,
    corr_rx: CMatrix,
) -> Result<ChannelStats, ChannelError> {
    let expected = (config.num_dta, config.num_dra);
    if h_d.dims() != expected || corr_tx.dims() != (expected.0, expected.0) || corr_rx.dims() != (expected.1, expected.1) {
        return Err(NumericsError::DimensionMismatch {
            expected: format!("LOS {:?}", expected),
            found: format!("LOS {:?}, R_t {:?}, R_r {:?}", h_d.dims(), corr_tx.dims(), corr_rx.dims()),
        }
        .into());
    }
    let corr_tx_sqrt = hermitian_sqrt(&corr_tx)?;
    let corr_rx_sqrt = hermitian_sqrt(&corr_rx)?;
    let covariance = kron(&corr_rx, &corr_tx);
    Ok(ChannelStats {
        h_d,
        corr_tx,
        corr_rx,
        corr_tx_sqrt,
        corr_rx_sqrt,
        nu: config.nu(),
        varsigma: config.varsigma(),
        covariance,
    })
}

/// Random unit-modulus phase of the transmit correlation, drawn once per scenario.
pub fn draw_correlation_phase(stream: &RngStream) -> f64 {
    stream.generator().random_range(0.0..std::f64::consts::TAU)
}

/// Normalised LOS draw: i.i.d. Gaussian rescaled to `‖H_d‖_F² = N_t N_r`.
pub fn draw_los_with<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> CMatrix {
    let (nt, nr) = (config.num_dta, config.num_dra);
    let g = gaussian_matrix_with(nt, nr, rng);
    let norm = g.frobenius_norm();
    g.scale(((nt * nr) as f64).sqrt() / norm)
}

pub fn draw_los(config: &SystemConfig, stream: &RngStream) -> CMatrix {
    draw_los_with(config, &mut stream.generator())
}

/// Scattered component `R_t^{1/2} G (R_r^{1/2})^T` with vec-covariance `R_r ⊗ R_t`.
pub fn draw_scattered_with<R: Rng + ?Sized>(stats: &ChannelStats, rng: &mut R) -> CMatrix {
    let g = gaussian_matrix_with(stats.num_dta(), stats.num_dra(), rng);
    let left = &stats.corr_tx_sqrt * &g;
    if is_identity(&stats.corr_rx_sqrt) {
        left
    } else {
        &left * &stats.corr_rx_sqrt.transpose()
    }
}

pub fn draw_scattered(stats: &ChannelStats, stream: &RngStream) -> CMatrix {
    draw_scattered_with(stats, &mut stream.generator())
}

fn is_identity(m: &CMatrix) -> bool {
    m.iter().enumerate().all(|(k, z)| {
        let (i, j) = (k % m.nrows(), k / m.nrows());
        let target = if i == j { 1.0 } else { 0.0 };
        (z.re - target).abs() == 0.0 && z.im == 0.0
    })
}

/// One channel draw split into its LOS and scattered parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h_true: CMatrix,
    pub h_los: CMatrix,
    pub h_scatter: CMatrix,
}

/// `H = ν H_d + ς H_r`.
pub fn compose_channel(stats: &ChannelStats, h_r: &CMatrix) -> Result<ChannelRealization, ChannelError> {
    if h_r.dims() != stats.h_d.dims() {
        return Err(NumericsError::DimensionMismatch {
            expected: format!("{:?}", stats.h_d.dims()),
            found: format!("{:?}", h_r.dims()),
        }
        .into());
    }
    let h_los = stats.h_d.scale(stats.nu);
    let h_scatter = h_r.scale(stats.varsigma);
    Ok(ChannelRealization { h_true: &h_los + &h_scatter, h_los, h_scatter })
}

/// A realization with no LOS part (used for pilot contamination paths).
pub fn scattered_only(stats: &ChannelStats, h_r: &CMatrix) -> ChannelRealization {
    let h_scatter = h_r.scale(stats.varsigma);
    ChannelRealization {
        h_true: h_scatter.clone(),
        h_los: CMatrix::zeros(h_r.nrows(), h_r.ncols()),
        h_scatter,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn path_loss_golden_values() {
        assert!((path_loss_db(5e9, 1e4).unwrap() - 119.9194).abs() < 1e-3);
        assert!((path_loss_db(5e9, 7.4e5).unwrap() - 157.30403).abs() < 1e-3);
        let step = path_loss_db(5e9, 2e4).unwrap() - path_loss_db(5e9, 1e4).unwrap();
        assert_relative_eq!(step, 20.0 * 2f64.log10(), epsilon = 1e-12);
        assert!(path_loss_db(0.0, 1.0).is_err());
        assert!(path_loss_db(1.0, -1.0).is_err());
    }

    #[test]
    fn received_power_golden_values() {
        assert_relative_eq!(received_power(1.0, 5e9, 1e4).unwrap(), 1.0187e-12, max_relative = 1e-3);
        assert_relative_eq!(received_power(1.0, 5e9, 7.4e5).unwrap(), 1.86036e-16, max_relative = 1e-3);
        assert_relative_eq!(
            received_power(2.0, 5e9, 1e4).unwrap(),
            2.0 * received_power(1.0, 5e9, 1e4).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn noise_golden_values() {
        assert_relative_eq!(noise_power(4.0, 290.0, 6e6).unwrap(), 5.6819e-14, max_relative = 1e-3);
        assert_relative_eq!(noise_power(0.0, 290.0, 6e6).unwrap(), BOLTZMANN * 290.0 * 6e6, max_relative = 1e-14);
        assert_relative_eq!(
            noise_power(4.0, 290.0, 3e6).unwrap(),
            0.5 * noise_power(4.0, 290.0, 6e6).unwrap(),
            max_relative = 1e-14
        );
        let cfg = SystemConfig::default();
        assert_relative_eq!(subcarrier_noise_variance(&cfg).unwrap(), 1.1098e-16, max_relative = 1e-3);
        let one = SystemConfig { num_subcarriers: 1, cp_length: 0, ..cfg.clone() };
        assert_relative_eq!(subcarrier_noise_variance(&one).unwrap(), noise_power(4.0, 290.0, 6e6).unwrap());
    }

    #[test]
    fn average_power_golden_and_limit() {
        assert_relative_eq!(average_received_power(1.0, 5e9, 5e3, 7.4e5).unwrap(), 2.7533e-14, max_relative = 1e-3);
        assert_relative_eq!(
            average_received_power(1.0, 5e9, 1e4, 1e4).unwrap(),
            received_power(1.0, 5e9, 1e4).unwrap(),
            max_relative = 1e-3
        );
        assert!(average_received_power(1.0, 5e9, 2e4, 1e4).is_err());
    }

    #[test]
    fn average_power_matches_simpson_quadrature() {
        let (lo, hi) = (1e4, 1e5);
        let steps = 20_000;
        let h = (hi - lo) / steps as f64;
        let mut acc = 0.0;
        for i in 0..=steps {
            let w = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * received_power(1.0, 5e9, lo + i as f64 * h).unwrap();
        }
        let quad = acc * h / 3.0 / (hi - lo);
        assert_relative_eq!(average_received_power(1.0, 5e9, lo, hi).unwrap(), quad, max_relative = 1e-4);
    }

    #[test]
    fn exponential_correlation_examples() {
        assert_eq!(exponential_correlation(5, 0.0, None).unwrap(), CMatrix::identity(5));
        let r = exponential_correlation(3, 0.5, None).unwrap();
        let expected = [[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[(i, j)] - Complex64::new(expected[i][j], 0.0)).norm() < 1e-15);
            }
        }
        let r = exponential_correlation(4, 0.9, Some(std::f64::consts::FRAC_PI_3)).unwrap();
        assert!(r.hermitian_asymmetry() < 1e-15);
        let (vals, _) = crate::numerics::hermitian_eigen(&r).unwrap();
        assert!(vals.iter().all(|&v| v >= -1e-12));
        assert!(exponential_correlation(3, 1.0, None).is_err());
    }

    #[test]
    fn stats_amplitudes() {
        let cfg = SystemConfig { rician_k: 0.0, ..SystemConfig::default() };
        assert_eq!((cfg.nu(), cfg.varsigma()), (0.0, 1.0));
        let cfg = SystemConfig::default();
        assert_relative_eq!(cfg.nu(), (5.0f64 / 6.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(cfg.varsigma(), (1.0f64 / 6.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(cfg.nu().powi(2) + cfg.varsigma().powi(2), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn stats_covariance_is_kronecker() {
        let cfg = SystemConfig { num_dta: 4, num_dra: 2, correlation_factor: 0.0, ..SystemConfig::default() };
        let h_d = draw_los(&cfg, &RngStream::new(1, 0));
        let stats = build_channel_stats(&cfg, h_d, None).unwrap();
        assert_eq!(stats.covariance, CMatrix::identity(8));
        let cfg = SystemConfig { correlation_factor: 0.3, ..cfg };
        let stats = build_channel_stats(&cfg, stats.h_d.clone(), Some(0.4)).unwrap();
        let expected = kron(&CMatrix::identity(2), &exponential_correlation(4, 0.3, Some(0.4)).unwrap());
        assert_eq!(stats.covariance, expected);
    }

    #[test]
    fn los_normalisation_and_determinism() {
        let cfg = SystemConfig::default();
        let s = RngStream::new(3, 9);
        let h = draw_los(&cfg, &s);
        assert_relative_eq!(h.norm_sqr(), 128.0, max_relative = 1e-9);
        assert_eq!(h, draw_los(&cfg, &s));
        assert_ne!(h, draw_los(&cfg, &RngStream::new(3, 10)));
    }

    #[test]
    fn scattered_sample_covariance_matches_kronecker() {
        let cfg = SystemConfig { num_dta: 2, num_dra: 2, correlation_factor: 0.6, ..SystemConfig::default() };
        let corr_rx = exponential_correlation(2, 0.4, Some(0.7)).unwrap();
        let corr_tx = exponential_correlation(2, 0.6, Some(1.1)).unwrap();
        let h_d = draw_los(&cfg, &RngStream::new(0, 0));
        let stats = build_channel_stats_with(&cfg, h_d, corr_tx, corr_rx).unwrap();
        let mut rng = RngStream::new(17, 0).generator();
        let draws = 20_000;
        let mut acc = CMatrix::zeros(4, 4);
        for _ in 0..draws {
            let v = draw_scattered_with(&stats, &mut rng).vec();
            acc = &acc + &(&v * &v.adjoint());
        }
        let sample = acc.scale(1.0 / draws as f64);
        for (s, t) in sample.iter().zip(stats.covariance.iter()) {
            assert!((s - t).norm() < 0.05, "{s} vs {t}");
        }
    }

    #[test]
    fn scattered_identity_case_has_identity_covariance() {
        let cfg = SystemConfig { num_dta: 2, num_dra: 2, correlation_factor: 0.0, ..SystemConfig::default() };
        let stats = build_channel_stats(&cfg, draw_los(&cfg, &RngStream::new(0, 1)), None).unwrap();
        let mut rng = RngStream::new(5, 5).generator();
        let mut acc = CMatrix::zeros(4, 4);
        for _ in 0..10_000 {
            let v = draw_scattered_with(&stats, &mut rng).vec();
            acc = &acc + &(&v * &v.adjoint());
        }
        let sample = acc.scale(1e-4);
        assert!((&sample - &CMatrix::identity(4)).iter().all(|z| z.norm() < 0.05));
        let s = RngStream::new(8, 8);
        assert_eq!(draw_scattered(&stats, &s), draw_scattered(&stats, &s));
    }

    #[test]
    fn composition_limits() {
        let cfg = SystemConfig { num_dta: 4, num_dra: 2, rician_k: 0.0, ..SystemConfig::default() };
        let stats = build_channel_stats(&cfg, draw_los(&cfg, &RngStream::new(1, 1)), None).unwrap();
        let h_r = draw_scattered(&stats, &RngStream::new(1, 2));
        assert_eq!(compose_channel(&stats, &h_r).unwrap().h_true, h_r);
        let cfg = SystemConfig { rician_k: 1e12, ..cfg };
        let stats = build_channel_stats(&cfg, stats.h_d.clone(), None).unwrap();
        let real = compose_channel(&stats, &h_r).unwrap();
        assert!((&real.h_true - &stats.h_d).iter().all(|z| z.norm() < 1e-5));
        assert!(compose_channel(&stats, &CMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn empirical_channel_mean_is_los() {
        let cfg = SystemConfig { num_dta: 3, num_dra: 2, ..SystemConfig::default() };
        let stats = build_channel_stats(&cfg, draw_los(&cfg, &RngStream::new(2, 2)), Some(0.3)).unwrap();
        let mut rng = RngStream::new(2, 3).generator();
        let n = 10_000;
        let mut acc = CMatrix::zeros(3, 2);
        for _ in 0..n {
            let h_r = draw_scattered_with(&stats, &mut rng);
            acc = &acc + &compose_channel(&stats, &h_r).unwrap().h_true;
        }
        let mean = acc.scale(1.0 / n as f64);
        let target = stats.h_d.scale(stats.nu);
        // Per-component std of the real part is varsigma / sqrt(2).
        let se = stats.varsigma / (2.0 * n as f64).sqrt();
        for (m, t) in mean.iter().zip(target.iter()) {
            assert!((m.re - t.re).abs() < 3.0 * se && (m.im - t.im).abs() < 3.0 * se);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::default().validate().is_ok());
        let bad = SystemConfig { num_dra: 64, ..SystemConfig::default() };
        assert!(matches!(bad.validate(), Err(ChannelError::InvalidConfig { key: "num_dra", .. })));
        let bad = SystemConfig { link_distance: 1e3, ..SystemConfig::default() };
        assert!(matches!(bad.validate(), Err(ChannelError::InvalidConfig { key: "link_distance", .. })));
        let bad = SystemConfig { correlation_factor: 1.0, ..SystemConfig::default() };
        assert!(bad.validate().is_err());
    }
}
