//! Seeded Monte-Carlo trials of the full pilot, estimate, precode, transmit chain.
//!
//! Trial `t` always draws from stream `t` of the master seed, whatever the
//! sweep point, so neighbouring points of a sweep see the same randomness.
//! Trials run on rayon workers and are collected in order, so results do not
//! depend on the number of threads.

use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{self, received_power, ChannelError, ChannelRealization, ChannelStats, SystemConfig};
use crate::estimation::{dft_pilot, simulate_pilot_rx_with, CovarianceSpectrum, EstimationError, TrainingRatios};
use crate::numerics::{complex_gaussian, pairwise_sum, CMatrix, NumericsError, RngStream};
use crate::precoding::{mf_precoder, InterfererLink, PrecodingError, TermPowers};
use crate::sinr::{AnalysisOptions, InterfererInterval, LinkBudget, PhaseChoice, RateModel, SinrError, SinrMode, DEFAULT_SINR_CAP};

/// Inner draws per trial.
pub const DEFAULT_BATCH: usize = 200;

/// Environment variable bounding the worker count.
pub const THREADS_ENV: &str = "AERO_ACM_THREADS";

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("unknown sweep axis {0:?} (expected A, d_ab, N_t, N_r, rho or K_Rice)")]
    InvalidAxis(String),
    #[error("no samples")]
    EmptySamples,
    #[error("value {value} is not valid for axis {axis}")]
    InvalidValue { axis: &'static str, value: f64 },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Precoding(#[from] PrecodingError),
    #[error(transparent)]
    Sinr(#[from] SinrError),
}

/// Controls of a single trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSettings {
    /// Scattered-channel and pilot-noise draws per trial with the LOS held fixed.
    pub batch: usize,
    /// Use the true channels as estimates.
    pub perfect_csi: bool,
    /// Multiplies the thermal noise variance.
    pub noise_scale: f64,
    /// Seed and phase of the correlation matrices; matches [`AnalysisOptions`].
    pub correlation_seed: u64,
    pub phase: PhaseChoice,
    pub interval: InterfererInterval,
    pub sinr_cap: f64,
}

impl Default for TrialSettings {
    fn default() -> Self {
        let analysis = AnalysisOptions::default();
        Self {
            batch: DEFAULT_BATCH,
            perfect_csi: false,
            noise_scale: 1.0,
            correlation_seed: analysis.seed,
            phase: analysis.phase,
            interval: analysis.interval,
            sinr_cap: DEFAULT_SINR_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub per_dra_sinr: Vec<f64>,
    pub rate_per_dra: f64,
}

/// Everything a trial needs that does not change between trials.
#[derive(Debug, Clone)]
pub struct TrialContext {
    config: SystemConfig,
    settings: TrialSettings,
    stats: ChannelStats,
    spectrum: CovarianceSpectrum,
    pilot: CMatrix,
    p_desired: f64,
    noise_var: f64,
    ratios: TrainingRatios,
    basis: EigenBasis,
}

/// One link: true channel and the estimate its transmitter precodes with.
struct EstimatedLink {
    channel: ChannelRealization,
    estimate: CMatrix,
}

impl TrialContext {
    pub fn new(config: &SystemConfig, settings: TrialSettings) -> Result<Self, MonteCarloError> {
        config.validate()?;
        let phase = settings.phase.resolve(settings.correlation_seed);
        let placeholder = CMatrix::zeros(config.num_dta, config.num_dra);
        let stats = channel::build_channel_stats(config, placeholder, phase)?;
        let spectrum = CovarianceSpectrum::new(&stats)?;
        let budget = LinkBudget::from_config(config, settings.interval)?;
        let noise_var = budget.noise_var * settings.noise_scale;
        let ratios = TrainingRatios::new(budget.p_desired, &budget.interferer_powers(), noise_var)?;
        Ok(Self {
            config: config.clone(),
            settings,
            stats,
            spectrum: spectrum.clone(),
            pilot: dft_pilot(config.num_dra),
            p_desired: budget.p_desired,
            noise_var,
            ratios,
            basis: EigenBasis::new(&spectrum, ratios),
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    fn draw_channel<R: Rng + ?Sized>(&self, stats: &ChannelStats, rng: &mut R) -> Result<ChannelRealization, MonteCarloError> {
        let scattered = channel::draw_scattered_with(stats, rng);
        Ok(channel::compose_channel(stats, &scattered)?)
    }

    /// Trains one link whose pilots are contaminated by the scattered parts of `contaminants`.
    fn train<R: Rng + ?Sized>(
        &self,
        stats: &ChannelStats,
        channel: ChannelRealization,
        contaminants: &[(ChannelRealization, f64)],
        rng: &mut R,
    ) -> Result<EstimatedLink, MonteCarloError> {
        let mut links = vec![channel.clone()];
        let mut powers = vec![self.p_desired];
        for (c, p) in contaminants {
            links.push(c.clone());
            powers.push(*p);
        }
        let obs = simulate_pilot_rx_with(&links, &powers, &self.pilot, self.noise_var, rng)?;
        // the pilot draws are consumed either way so both variants see the same symbols
        let estimate = if self.settings.perfect_csi {
            links.swap_remove(0).h_true
        } else {
            self.spectrum.estimate(&obs, stats, self.p_desired, self.ratios)
        };
        Ok(EstimatedLink { channel, estimate })
    }

    fn scattered_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let scattered = channel::draw_scattered_with(&self.stats, rng);
        channel::scattered_only(&self.stats, &scattered)
    }

    /// Interferer powers and LOS components, fixed for one trial, plus one
    /// generator per link for the inner batch. Link 0 is the desired link and
    /// link `1 + j` interferer `j`, so adding interferers leaves the draws of
    /// the existing links unchanged.
    fn trial_geometry(&self, stream: &RngStream) -> Result<(TrialGeometry, Vec<ChaCha8Rng>), MonteCarloError> {
        let cfg = &self.config;
        let mut rngs: Vec<ChaCha8Rng> = (0..=cfg.num_interferers as u64).map(|link| stream.derive(link).generator()).collect();
        let desired_los = channel::draw_los_with(cfg, &mut rngs[0]);
        let mut interferer_powers = Vec::with_capacity(cfg.num_interferers);
        let mut interferer_los = Vec::with_capacity(cfg.num_interferers);
        for rng in &mut rngs[1..] {
            let distance = rng.random_range(cfg.link_distance..=cfg.d_max);
            interferer_powers.push(received_power(cfg.tx_power_per_antenna, cfg.carrier_freq, distance)?);
            interferer_los.push((channel::draw_los_with(cfg, rng), channel::draw_los_with(cfg, rng)));
        }
        Ok((TrialGeometry { interferer_powers, desired_los, interferer_los }, rngs))
    }

    /// One full trial drawn from `stream`.
    ///
    /// The LOS components and the interferer distances are fixed for the
    /// trial. The inner batch redraws the scattered components and the pilot
    /// noise, re-estimates every link, and averages the symbol-level term
    /// powers exactly. The SINR is `P |E g|² / (P Var g + other streams +
    /// interferers + noise)` with `g` the own-stream gain, so fluctuations of
    /// the beamforming gain count as impairment.
    ///
    /// All draws happen in the eigenbasis of the channel covariance, where the
    /// scattered components and the MMSE filter are diagonal. Every pilot of a
    /// link shares the same contamination, so the contaminating channels are
    /// drawn as one Gaussian of the summed power.
    pub fn run(&self, stream: &RngStream) -> Result<TrialResult, MonteCarloError> {
        let (geometry, mut rngs) = self.trial_geometry(stream)?;
        let (desired_rng, interferer_rngs) = rngs.split_first_mut().expect("desired link generator");
        let basis = &self.basis;
        let nu = self.stats.nu;
        let contamination = (pairwise_sum(&geometry.interferer_powers) / self.p_desired).sqrt();
        let noise = (self.noise_var / self.p_desired).sqrt();
        let desired_los = basis.project(&geometry.desired_los, nu);
        let interferer_los: Vec<(Vec<Complex64>, Vec<Complex64>)> =
            geometry.interferer_los.iter().map(|(own, victim)| (basis.project(own, nu), basis.project(victim, nu))).collect();

        let mut acc = Accumulator::new(self.config.num_dra);
        let mut desired_true = basis.scratch();
        let mut desired_hat = basis.scratch();
        let mut victim = basis.scratch();
        let mut own_hat = basis.scratch();
        let mut cross = Vec::with_capacity(interferer_los.len());
        for _ in 0..self.settings.batch.max(2) {
            basis.link(&desired_los, contamination, noise, self.settings.perfect_csi, &mut desired_true, &mut desired_hat, desired_rng);
            cross.clear();
            for (((own_los, victim_los), &power), rng) in interferer_los.iter().zip(&geometry.interferer_powers).zip(interferer_rngs.iter_mut()) {
                basis.link(own_los, contamination, noise, self.settings.perfect_csi, &mut victim, &mut own_hat, rng);
                basis.draw_true(victim_los, &mut victim, rng);
                cross.push((basis.gram(&victim, &own_hat), power));
            }
            acc.add(&basis.gram(&desired_true, &desired_hat), self.p_desired, &cross);
        }
        Ok(acc.finish(self.p_desired, self.noise_var, self.settings.sinr_cap))
    }

    /// Same trial as [`Self::run`], computed with dense matrices, explicit
    /// pilot matrices and one contaminating channel per interferer. Slow;
    /// kept as an independent check of the fast route.
    pub fn run_reference(&self, stream: &RngStream) -> Result<TrialResult, MonteCarloError> {
        let (geometry, mut rngs) = self.trial_geometry(stream)?;
        let (rng, interferer_rngs) = rngs.split_first_mut().expect("desired link generator");
        let desired_stats = self.stats.with_los(geometry.desired_los);
        let interferer_stats: Vec<(ChannelStats, ChannelStats)> =
            geometry.interferer_los.into_iter().map(|(own, victim)| (self.stats.with_los(own), self.stats.with_los(victim))).collect();
        let powers = &geometry.interferer_powers;

        let mut acc = Accumulator::new(self.config.num_dra);
        for _ in 0..self.settings.batch.max(2) {
            let desired_channel = self.draw_channel(&desired_stats, rng)?;
            let contamination: Vec<(ChannelRealization, f64)> = powers.iter().map(|&p| (self.scattered_draw(rng), p)).collect();
            let desired = self.train(&desired_stats, desired_channel, &contamination, rng)?;

            let mut links = Vec::with_capacity(powers.len());
            for (((own_stats, victim_stats), &power), rng) in interferer_stats.iter().zip(powers).zip(interferer_rngs.iter_mut()) {
                let own_channel = self.draw_channel(own_stats, rng)?;
                let contamination: Vec<(ChannelRealization, f64)> = powers.iter().map(|&p| (self.scattered_draw(rng), p)).collect();
                let own = self.train(own_stats, own_channel, &contamination, rng)?;
                let toward_victim = self.draw_channel(victim_stats, rng)?;
                links.push(InterfererLink { channel: toward_victim.h_true, precoder: mf_precoder(&own.estimate), power });
            }
            let own_gram = desired.channel.h_true.adjoint().checked_mul(&desired.estimate)?;
            let cross: Vec<(CMatrix, f64)> = links
                .iter()
                .map(|l| Ok((l.channel.adjoint().checked_mul(&l.precoder.v)?, l.power)))
                .collect::<Result<_, MonteCarloError>>()?;
            acc.add(&own_gram, self.p_desired, &cross);
        }
        Ok(acc.finish(self.p_desired, self.noise_var, self.settings.sinr_cap))
    }
}

struct TrialGeometry {
    interferer_powers: Vec<f64>,
    desired_los: CMatrix,
    /// `(own link, toward victim)` per interferer.
    interferer_los: Vec<(CMatrix, CMatrix)>,
}

/// Running sums of the gain statistics per receive antenna.
struct Accumulator {
    count: usize,
    gain_sum: Vec<Complex64>,
    gain_sq: Vec<f64>,
    others: Vec<f64>,
}

impl Accumulator {
    fn new(nr: usize) -> Self {
        Self { count: 0, gain_sum: vec![Complex64::new(0.0, 0.0); nr], gain_sq: vec![0.0; nr], others: vec![0.0; nr] }
    }

    /// `own[m, n] = c_m^H v_n` of the desired link; `cross` the same per interferer with its power.
    fn add(&mut self, own: &CMatrix, p_desired: f64, cross: &[(CMatrix, f64)]) {
        self.count += 1;
        for m in 0..self.gain_sum.len() {
            let gain = own[(m, m)];
            self.gain_sum[m] += gain;
            self.gain_sq[m] += gain.norm_sqr();
            let inter_antenna: f64 = (0..own.ncols()).filter(|&n| n != m).map(|n| own[(m, n)].norm_sqr()).sum();
            let interferers: f64 = cross.iter().map(|(g, p)| p * (0..g.ncols()).map(|n| g[(m, n)].norm_sqr()).sum::<f64>()).sum();
            self.others[m] += p_desired * inter_antenna + interferers;
        }
    }

    fn finish(&self, p_desired: f64, noise_var: f64, cap: f64) -> TrialResult {
        let count = self.count as f64;
        let per_dra_sinr: Vec<f64> = (0..self.gain_sum.len())
            .map(|m| {
                let mean = self.gain_sum[m] / count;
                let variance = ((self.gain_sq[m] - count * mean.norm_sqr()) / (count - 1.0)).max(0.0);
                let terms = TermPowers {
                    desired_mean: p_desired * mean.norm_sqr(),
                    estimation_error: p_desired * variance,
                    inter_antenna: self.others[m] / count,
                    interferer: Vec::new(),
                    noise: noise_var,
                };
                terms.sinr(cap)
            })
            .collect();
        let rates: Vec<f64> = per_dra_sinr.iter().map(|g| (1.0 + g).log2()).collect();
        TrialResult { rate_per_dra: pairwise_sum(&rates) / rates.len() as f64, per_dra_sinr }
    }
}

/// The covariance eigenbasis `Z = U_t^H H conj(U_r)`, stored column-major.
#[derive(Debug, Clone)]
struct EigenBasis {
    nt: usize,
    nr: usize,
    tx_adjoint: CMatrix,
    rx_conjugate: CMatrix,
    /// `U_r`, or `None` when it is the identity.
    rx_vectors: Option<CMatrix>,
    /// Standard deviation of each entry of `ς H_r`.
    scatter_std: Vec<f64>,
    /// MMSE gain per entry.
    filter: Vec<f64>,
}

impl EigenBasis {
    fn new(spectrum: &CovarianceSpectrum, ratios: TrainingRatios) -> Self {
        let nt = spectrum.tx_values.len();
        let nr = spectrum.rx_values.len();
        let v2 = spectrum.varsigma * spectrum.varsigma;
        let mut scatter_std = Vec::with_capacity(nt * nr);
        let mut filter = Vec::with_capacity(nt * nr);
        for r in 0..nr {
            for t in 0..nt {
                let value = v2 * spectrum.tx_values[t] * spectrum.rx_values[r];
                scatter_std.push(value.sqrt());
                let denom = ratios.snr_ratio + (1.0 + ratios.interference_ratio) * value;
                filter.push(if denom > 0.0 { value / denom } else { 0.0 });
            }
        }
        let identity = CMatrix::identity(nr);
        let rx_is_identity = (&spectrum.rx_vectors - &identity).frobenius_norm() < 1e-12;
        Self {
            nt,
            nr,
            tx_adjoint: spectrum.tx_vectors.adjoint(),
            rx_conjugate: spectrum.rx_vectors.conjugate(),
            rx_vectors: (!rx_is_identity).then(|| spectrum.rx_vectors.clone()),
            scatter_std,
            filter,
        }
    }

    fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.nt * self.nr]
    }

    /// `ν H_d` in the eigenbasis.
    fn project(&self, los: &CMatrix, nu: f64) -> Vec<Complex64> {
        let z = &(&self.tx_adjoint * los) * &self.rx_conjugate;
        let mut out = self.scratch();
        for r in 0..self.nr {
            for t in 0..self.nt {
                out[t + self.nt * r] = z[(t, r)] * nu;
            }
        }
        out
    }

    /// `out = los + ς H_r`.
    fn draw_true<R: Rng + ?Sized>(&self, los: &[Complex64], out: &mut [Complex64], rng: &mut R) {
        for ((o, l), s) in out.iter_mut().zip(los).zip(&self.scatter_std) {
            *o = l + complex_gaussian(rng) * *s;
        }
    }

    /// True channel and its MMSE estimate from a contaminated, noisy pilot.
    #[allow(clippy::too_many_arguments)]
    fn link<R: Rng + ?Sized>(
        &self,
        los: &[Complex64],
        contamination: f64,
        noise: f64,
        perfect: bool,
        truth: &mut [Complex64],
        estimate: &mut [Complex64],
        rng: &mut R,
    ) {
        for (i, (t, e)) in truth.iter_mut().zip(estimate.iter_mut()).enumerate() {
            let std = self.scatter_std[i];
            let scattered = complex_gaussian(rng) * std;
            *t = los[i] + scattered;
            // despread pilot minus the known mean
            let residual = scattered + complex_gaussian(rng) * (std * contamination) + complex_gaussian(rng) * noise;
            *e = if perfect { *t } else { los[i] + residual * self.filter[i] };
        }
    }

    /// `H^H V` in the antenna basis for eigenbasis matrices `h` and `v`.
    fn gram(&self, h: &[Complex64], v: &[Complex64]) -> CMatrix {
        let nt = self.nt;
        let g = CMatrix::from_fn(self.nr, self.nr, |m, n| {
            h[m * nt..(m + 1) * nt].iter().zip(&v[n * nt..(n + 1) * nt]).map(|(a, b)| a.conj() * b).sum()
        });
        match &self.rx_vectors {
            None => g,
            Some(u) => &(&self.rx_conjugate * &g) * &u.transpose(),
        }
    }
}

/// Stream of trial `trial` under `seed`.
pub fn trial_stream(seed: u64, trial: usize) -> RngStream {
    RngStream::new(seed, trial as u64)
}

pub fn run_trial(config: &SystemConfig, stream: &RngStream) -> Result<TrialResult, MonteCarloError> {
    TrialContext::new(config, TrialSettings::default())?.run(stream)
}

/// Rates per DRA of `trials` trials, in trial order.
pub fn simulate_rates(context: &TrialContext, trials: usize, seed: u64) -> Result<Vec<f64>, MonteCarloError> {
    (0..trials)
        .into_par_iter()
        .map(|t| context.run(&trial_stream(seed, t)).map(|r| r.rate_per_dra))
        .collect()
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(samples) / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let squares: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
    let variance = pairwise_sum(&squares) / (n - 1) as f64;
    (mean, (variance / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Interferers,
    LinkDistance,
    Dta,
    Dra,
    Correlation,
    RiceFactor,
}

impl SweepAxis {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Interferers => "A",
            Self::LinkDistance => "d_ab",
            Self::Dta => "N_t",
            Self::Dra => "N_r",
            Self::Correlation => "rho",
            Self::RiceFactor => "K_Rice",
        }
    }

    /// `config` with the swept parameter set to `value` (meters for distances).
    pub fn apply(&self, config: &SystemConfig, value: f64) -> Result<SystemConfig, MonteCarloError> {
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(MonteCarloError::InvalidValue { axis: self.label(), value })
            }
        };
        let mut out = config.clone();
        match self {
            Self::Interferers => out.num_interferers = count()?,
            Self::LinkDistance => out.link_distance = value,
            Self::Dta => out.num_dta = count()?,
            Self::Dra => out.num_dra = count()?,
            Self::Correlation => out.correlation_factor = value,
            Self::RiceFactor => out.rician_k = value,
        }
        out.validate()?;
        Ok(out)
    }
}

impl FromStr for SweepAxis {
    type Err = MonteCarloError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Self::Interferers),
            "d_ab" | "d" | "distance" => Ok(Self::LinkDistance),
            "n_t" | "nt" => Ok(Self::Dta),
            "n_r" | "nr" => Ok(Self::Dra),
            "rho" => Ok(Self::Correlation),
            "k_rice" | "k" => Ok(Self::RiceFactor),
            _ => Err(MonteCarloError::InvalidAxis(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub trials: usize,
    pub seed: u64,
    pub analysis: AnalysisOptions,
    pub trial: TrialSettings,
}

impl SweepSettings {
    /// Analysis and trials agree on the seed, phase and averaging interval.
    pub fn new(trials: usize, seed: u64) -> Self {
        let analysis = AnalysisOptions { seed, ..AnalysisOptions::default() };
        let trial = TrialSettings { correlation_seed: seed, phase: analysis.phase, interval: analysis.interval, ..TrialSettings::default() };
        Self { trials, seed, analysis, trial }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub axis_values: Vec<f64>,
    pub theoretical: Vec<f64>,
    pub approximate: Vec<f64>,
    pub simulated_mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

/// Closed form and simulation at one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub theoretical: f64,
    pub approximate: f64,
    pub samples: Vec<f64>,
}

pub fn run_point(config: &SystemConfig, settings: &SweepSettings) -> Result<PointResult, MonteCarloError> {
    let model = RateModel::new(config, settings.analysis)?;
    let theoretical = model.rate(SinrMode::Theoretical)?;
    let approximate = model.rate(SinrMode::Approximate)?;
    let samples = if settings.trials > 0 {
        let context = TrialContext::new(config, settings.trial)?;
        simulate_rates(&context, settings.trials, settings.seed)?
    } else {
        Vec::new()
    };
    Ok(PointResult { theoretical, approximate, samples })
}

pub fn run_sweep(config: &SystemConfig, axis: SweepAxis, values: &[f64], settings: &SweepSettings) -> Result<SweepResult, MonteCarloError> {
    let mut result = SweepResult {
        axis,
        axis_values: values.to_vec(),
        theoretical: Vec::with_capacity(values.len()),
        approximate: Vec::with_capacity(values.len()),
        simulated_mean: Vec::with_capacity(values.len()),
        stderr: Vec::with_capacity(values.len()),
        samples: Vec::with_capacity(values.len()),
    };
    for &value in values {
        let point = run_point(&axis.apply(config, value)?, settings)?;
        let (mean, err) = mean_and_stderr(&point.samples);
        result.theoretical.push(point.theoretical);
        result.approximate.push(point.approximate);
        result.simulated_mean.push(mean);
        result.stderr.push(err);
        result.samples.push(point.samples);
    }
    Ok(result)
}

/// `P(sample > x)` at every grid point.
pub fn ccdf(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>, MonteCarloError> {
    if samples.is_empty() {
        return Err(MonteCarloError::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(grid
        .iter()
        .map(|&x| {
            let at_or_below = sorted.partition_point(|&s| s <= x);
            (sorted.len() - at_or_below) as f64 / n
        })
        .collect())
}

/// Evenly spaced grid spanning the samples.
pub fn ccdf_grid(samples: &[f64], points: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) || points < 2 {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

fn number(x: f64) -> String {
    // shortest representation that round-trips exactly
    format!("{x:?}")
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MonteCarloError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["axis_value", "theoretical", "approximate", "simulated_mean", "stderr"])?;
        for i in 0..self.axis_values.len() {
            out.write_record([
                number(self.axis_values[i]),
                number(self.theoretical[i]),
                number(self.approximate[i]),
                number(self.simulated_mean[i]),
                number(self.stderr[i]),
            ])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// One row per trial: `axis_value,trial,rate`.
    pub fn write_samples_csv<W: Write>(&self, writer: W) -> Result<(), MonteCarloError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["axis_value", "trial", "rate"])?;
        for (value, samples) in self.axis_values.iter().zip(&self.samples) {
            for (t, rate) in samples.iter().enumerate() {
                out.write_record([number(*value), t.to_string(), number(*rate)])?;
            }
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn write_ccdf_csv<W: Write>(writer: W, grid: &[f64], probabilities: &[f64]) -> Result<(), MonteCarloError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["rate", "prob"])?;
    for (x, p) in grid.iter().zip(probabilities) {
        out.write_record([number(*x), number(*p)])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `work` on a pool sized by [`THREADS_ENV`] (rayon's default otherwise).
pub fn with_worker_pool<T: Send>(work: impl FnOnce() -> T + Send) -> Result<T, MonteCarloError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads_from_env() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| MonteCarloError::ThreadPool(e.to_string()))?;
    Ok(pool.install(work))
}
