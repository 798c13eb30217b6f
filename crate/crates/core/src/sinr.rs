//! Closed-form asymptotic SINR and achievable rate.
//!
//! Two routes compute the same quantities. The matrix route
//! ([`self_interference_term`], [`cross_interference_term`], ...) works on the
//! `N_t x N_t` blocks directly. [`ClosedForm`] works in the eigenbasis of the
//! transmit correlation, where every statistics block is diagonal, and is the
//! one used for sweeps and threshold design.

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{self, average_received_power, received_power, subcarrier_noise_variance, ChannelError, ChannelStats, SystemConfig};
use crate::estimation::{CovarianceSpectrum, EstimationError, EstimationStats, OmegaForm, TrainingRatios};
use crate::numerics::{CMatrix, NumericsError, RngStream};

/// Default ceiling for the SINR when nothing disturbs the link.
pub const DEFAULT_SINR_CAP: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SinrError {
    #[error("receive antenna {index} out of range for {count} antennas")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("negative SINR {0}")]
    NegativeSinr(f64),
    #[error("expected LOS components for {expected} interferers, got {found}")]
    MissingInterfererMeans { expected: usize, found: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}

/// How the unknown interferer LOS blocks enter the interference term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SinrMode {
    /// Uses the interferers' true LOS components.
    #[default]
    Theoretical,
    /// Replaces both interferer LOS blocks by the desired link's own block.
    Approximate,
}

/// Distance interval over which interferer positions are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterfererInterval {
    /// `[link_distance, d_max]`.
    #[default]
    LinkToMax,
    /// `[d_min, d_max]`.
    MinToMax,
}

impl InterfererInterval {
    pub fn bounds(&self, config: &SystemConfig) -> (f64, f64) {
        match self {
            Self::LinkToMax => (config.link_distance, config.d_max),
            Self::MinToMax => (config.d_min, config.d_max),
        }
    }
}

/// Powers entering the closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Received power of the desired link.
    pub p_desired: f64,
    /// Average received power of one interferer.
    pub p_bar: f64,
    pub noise_var: f64,
    pub num_interferers: usize,
}

impl LinkBudget {
    pub fn from_config(config: &SystemConfig, interval: InterfererInterval) -> Result<Self, ChannelError> {
        let (lo, hi) = interval.bounds(config);
        Ok(Self {
            p_desired: received_power(config.tx_power_per_antenna, config.carrier_freq, config.link_distance)?,
            p_bar: average_received_power(config.tx_power_per_antenna, config.carrier_freq, lo, hi)?,
            noise_var: subcarrier_noise_variance(config)?,
            num_interferers: config.num_interferers,
        })
    }

    /// `σ_w² / P`.
    pub fn snr_ratio(&self) -> f64 {
        self.noise_var / self.p_desired
    }

    /// `A P̄_r / P`.
    pub fn interference_ratio(&self) -> f64 {
        self.num_interferers as f64 * self.p_bar / self.p_desired
    }

    pub fn training_ratios(&self) -> TrainingRatios {
        TrainingRatios { snr_ratio: self.snr_ratio(), interference_ratio: self.interference_ratio() }
    }

    /// Interferer powers as a list, each equal to `P̄_r`.
    pub fn interferer_powers(&self) -> Vec<f64> {
        vec![self.p_bar; self.num_interferers]
    }
}

/// Per-antenna term powers of the closed form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SinrBreakdown {
    pub desired: f64,
    pub est_error_term: f64,
    pub inter_antenna_term: f64,
    pub interferer_term: f64,
    pub noise: f64,
    pub sinr: f64,
    pub rate_per_dra: f64,
}

impl SinrBreakdown {
    fn assemble(desired: f64, est_error_term: f64, inter_antenna_term: f64, interferer_term: f64, noise: f64, cap: f64) -> Self {
        let den = est_error_term + inter_antenna_term + interferer_term + noise;
        let sinr = if den > 0.0 { (desired / den).min(cap) } else if desired > 0.0 { cap } else { 0.0 };
        Self { desired, est_error_term, inter_antenna_term, interferer_term, noise, sinr, rate_per_dra: (1.0 + sinr).log2() }
    }

    /// Interference plus noise.
    pub fn impairment(&self) -> f64 {
        self.est_error_term + self.inter_antenna_term + self.interferer_term + self.noise
    }
}

/// `Tr{(m m^H / N + Υ / N) A}`, the limit of `x^H A x` for `x ~ CN(m/√N, Υ/N)`.
pub fn asymptotic_quadratic_form(m: &CMatrix, upsilon: &CMatrix, a: &CMatrix) -> Result<Complex64, SinrError> {
    let n = m.nrows();
    if m.ncols() != 1 || upsilon.dims() != (n, n) || a.dims() != (n, n) {
        return Err(NumericsError::DimensionMismatch {
            expected: format!("{n}x1, {n}x{n}, {n}x{n}"),
            found: format!("{:?}, {:?}, {:?}", m.dims(), upsilon.dims(), a.dims()),
        }
        .into());
    }
    let outer = &(m * &m.adjoint()) + upsilon;
    Ok(outer.trace_product(a) / n as f64)
}

/// `P (Tr Θ)²`.
pub fn desired_power(p_desired: f64, theta_block: &CMatrix) -> f64 {
    p_desired * theta_block.trace().re.powi(2)
}

/// `P Tr{Ξ Θ}`.
pub fn variance_term(p_desired: f64, xi_block: &CMatrix, theta_block: &CMatrix) -> f64 {
    p_desired * xi_block.trace_product(theta_block).re
}

/// `(Φ + sI + cς²R) Ω` for one block.
fn leakage_block(budget: &LinkBudget, varsigma: f64, phi: &CMatrix, r_block: &CMatrix, omega: &CMatrix) -> CMatrix {
    let n = phi.nrows();
    let inner = &(phi + &CMatrix::identity(n).scale(budget.snr_ratio()))
        + &r_block.scale(budget.interference_ratio() * varsigma * varsigma);
    &inner * omega
}

fn los_block(los: &CMatrix, column: usize) -> CMatrix {
    let c = los.column_at(column);
    &c * &c.adjoint()
}

/// Interference from the other streams of the desired transmitter at `n_star`.
pub fn self_interference_term(budget: &LinkBudget, stats: &ChannelStats, est: &EstimationStats, n_star: usize) -> Result<f64, SinrError> {
    let nr = stats.num_dra();
    if n_star >= nr {
        return Err(SinrError::IndexOutOfRange { index: n_star, count: nr });
    }
    let nu2 = stats.nu * stats.nu;
    let v2 = stats.varsigma * stats.varsigma;
    let target = &est.m_block(n_star).scale(nu2) + &stats.covariance_block(n_star).scale(v2);
    let mut acc = 0.0;
    for n in (0..nr).filter(|&n| n != n_star) {
        let x = leakage_block(budget, stats.varsigma, &est.phi_block(n), &stats.covariance_block(n), &est.omega_blocks[n]);
        let left = &est.m_block(n).scale(nu2) + &x;
        acc += left.trace_product(&target).re;
    }
    Ok(budget.p_desired * acc)
}

/// LOS components of one interferer.
#[derive(Debug, Clone)]
pub struct InterfererMeans {
    /// LOS part of the interferer's link to its own receiver (`N_t x N_r`).
    pub own: CMatrix,
    /// LOS part of the interferer's channel toward the victim (`N_t x N_r`).
    pub toward_victim: CMatrix,
}

/// Interference from the other transmitters at `n_star`.
pub fn cross_interference_term(
    budget: &LinkBudget,
    stats: &ChannelStats,
    est_interferer: &EstimationStats,
    interferers: &[InterfererMeans],
    est_desired: &EstimationStats,
    n_star: usize,
    mode: SinrMode,
) -> Result<f64, SinrError> {
    let nr = stats.num_dra();
    if n_star >= nr {
        return Err(SinrError::IndexOutOfRange { index: n_star, count: nr });
    }
    if mode == SinrMode::Theoretical && interferers.len() != budget.num_interferers {
        return Err(SinrError::MissingInterfererMeans { expected: budget.num_interferers, found: interferers.len() });
    }
    let nu2 = stats.nu * stats.nu;
    let v2 = stats.varsigma * stats.varsigma;
    let r_star = stats.covariance_block(n_star).scale(v2);
    let leakage: Vec<CMatrix> = (0..nr)
        .map(|n| leakage_block(budget, stats.varsigma, &est_interferer.phi_block(n), &stats.covariance_block(n), &est_interferer.omega_blocks[n]))
        .collect();
    let own_mean = est_desired.m_block(n_star);
    let mut acc = 0.0;
    for a in 0..budget.num_interferers {
        let victim_block = match mode {
            SinrMode::Theoretical => los_block(&interferers[a].toward_victim, n_star),
            SinrMode::Approximate => own_mean.clone(),
        };
        let target = &victim_block.scale(nu2) + &r_star;
        for (n, x) in leakage.iter().enumerate() {
            let m_own = match mode {
                SinrMode::Theoretical => los_block(&interferers[a].own, n),
                SinrMode::Approximate => own_mean.clone(),
            };
            acc += (&m_own.scale(nu2) + x).trace_product(&target).re;
        }
    }
    Ok(budget.p_bar * acc)
}

/// Inputs of the matrix route for one scenario.
pub struct MatrixInputs<'a> {
    pub budget: &'a LinkBudget,
    pub stats: &'a ChannelStats,
    pub est: &'a EstimationStats,
    pub est_interferer: &'a EstimationStats,
    pub interferers: &'a [InterfererMeans],
}

/// Term breakdown at `n_star` by the matrix route.
pub fn breakdown(inputs: &MatrixInputs<'_>, n_star: usize, mode: SinrMode, cap: f64) -> Result<SinrBreakdown, SinrError> {
    let MatrixInputs { budget, stats, est, est_interferer, interferers } = inputs;
    if n_star >= stats.num_dra() {
        return Err(SinrError::IndexOutOfRange { index: n_star, count: stats.num_dra() });
    }
    let theta = &est.theta_blocks[n_star];
    Ok(SinrBreakdown::assemble(
        desired_power(budget.p_desired, theta),
        variance_term(budget.p_desired, &est.xi_block(n_star), theta),
        self_interference_term(budget, stats, est, n_star)?,
        cross_interference_term(budget, stats, est_interferer, interferers, est, n_star, mode)?,
        budget.noise_var,
        cap,
    ))
}

/// Interference plus noise at `n_star`.
pub fn interference_plus_noise(inputs: &MatrixInputs<'_>, n_star: usize, mode: SinrMode) -> Result<f64, SinrError> {
    Ok(breakdown(inputs, n_star, mode, DEFAULT_SINR_CAP)?.impairment())
}

/// Asymptotic SINR at `n_star`, capped at [`DEFAULT_SINR_CAP`].
pub fn asymptotic_sinr(inputs: &MatrixInputs<'_>, n_star: usize, mode: SinrMode) -> Result<f64, SinrError> {
    Ok(breakdown(inputs, n_star, mode, DEFAULT_SINR_CAP)?.sinr)
}

/// Mean of `log2(1 + γ)` over the receive antennas.
pub fn rate_per_dra(sinrs: &[f64]) -> Result<f64, SinrError> {
    if let Some(&bad) = sinrs.iter().find(|s| !(**s >= 0.0)) {
        return Err(SinrError::NegativeSinr(bad));
    }
    if sinrs.is_empty() {
        return Ok(0.0);
    }
    Ok(sinrs.iter().map(|g| (1.0 + g).log2()).sum::<f64>() / sinrs.len() as f64)
}

/// LOS columns expressed in the transmit eigenbasis.
#[derive(Debug, Clone)]
pub struct ProjectedLos {
    columns: Vec<Vec<Complex64>>,
    norms: Vec<f64>,
}

impl ProjectedLos {
    pub fn new(spectrum: &CovarianceSpectrum, los: &CMatrix) -> Self {
        let projected = &spectrum.tx_vectors.adjoint() * los;
        let columns: Vec<Vec<Complex64>> = (0..projected.ncols()).map(|j| projected.column(j).iter().copied().collect()).collect();
        let norms = columns.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum()).collect();
        Self { columns, norms }
    }
}

/// LOS components of the desired link and of every interferer.
#[derive(Debug, Clone)]
pub struct LosScene {
    pub desired: ProjectedLos,
    /// `(own link, toward victim)` per interferer.
    pub interferers: Vec<(ProjectedLos, ProjectedLos)>,
}

impl LosScene {
    pub fn new(spectrum: &CovarianceSpectrum, desired: &CMatrix, interferers: &[InterfererMeans]) -> Self {
        Self {
            desired: ProjectedLos::new(spectrum, desired),
            interferers: interferers
                .iter()
                .map(|m| (ProjectedLos::new(spectrum, &m.own), ProjectedLos::new(spectrum, &m.toward_victim)))
                .collect(),
        }
    }
}

/// Draws `draws` LOS scenes (desired link plus `num_interferers` pairs).
pub fn draw_los_scenes(config: &SystemConfig, spectrum: &CovarianceSpectrum, draws: usize, stream: &RngStream) -> Vec<LosScene> {
    // each link of each scene has its own stream, so adding an interferer
    // leaves the other links of the ensemble unchanged
    (0..draws as u64)
        .map(|scene| {
            let scene = stream.derive(scene);
            let desired = channel::draw_los_with(config, &mut scene.derive(0).generator());
            let interferers: Vec<InterfererMeans> = (0..config.num_interferers as u64)
                .map(|j| {
                    let mut rng = scene.derive(1 + j).generator();
                    InterfererMeans { own: channel::draw_los_with(config, &mut rng), toward_victim: channel::draw_los_with(config, &mut rng) }
                })
                .collect();
            LosScene::new(spectrum, &desired, &interferers)
        })
        .collect()
}

/// The closed form with every statistics block diagonalised.
#[derive(Debug, Clone)]
pub struct ClosedForm {
    budget: LinkBudget,
    nu2: f64,
    cap: f64,
    /// Per receive antenna, eigenvalues of ς²R̄, Φ, Ξ and the leakage block.
    scattered: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    xi: Vec<Vec<f64>>,
    leakage: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn weighted_norm(weights: &[f64], v: &[Complex64]) -> f64 {
    weights.iter().zip(v).map(|(w, z)| w * z.norm_sqr()).sum()
}

impl ClosedForm {
    pub fn new(spectrum: &CovarianceSpectrum, nu: f64, budget: LinkBudget, form: OmegaForm) -> Self {
        let ratios = budget.training_ratios();
        let nr = spectrum.rx_diagonal.len();
        let mut scattered = Vec::with_capacity(nr);
        let mut phi = Vec::with_capacity(nr);
        let mut xi = Vec::with_capacity(nr);
        let mut leakage = Vec::with_capacity(nr);
        for n in 0..nr {
            let r = spectrum.scattered_block_eigenvalues(n);
            let p = spectrum.phi_block_eigenvalues(n, ratios);
            let omega = spectrum.omega_block_eigenvalues(n, ratios, form);
            xi.push(r.iter().zip(&p).map(|(r, p)| r - p).collect());
            leakage.push(
                p.iter()
                    .zip(&r)
                    .zip(&omega)
                    .map(|((p, r), o)| (p + ratios.snr_ratio + ratios.interference_ratio * r) * o)
                    .collect(),
            );
            scattered.push(r);
            phi.push(p);
        }
        Self { budget, nu2: nu * nu, cap: DEFAULT_SINR_CAP, scattered, phi, xi, leakage }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self
    }

    pub fn budget(&self) -> &LinkBudget {
        &self.budget
    }

    pub fn num_dra(&self) -> usize {
        self.phi.len()
    }

    /// `Tr{(ν² u_n u_n^H + X_n)(ν² u_* u_*^H + ς²R_*)}` in the eigenbasis.
    fn pair_trace(&self, left: &[Complex64], n: usize, right: &[Complex64], n_star: usize) -> f64 {
        let inner: Complex64 = left.iter().zip(right).map(|(a, b)| a.conj() * b).sum();
        self.nu2 * self.nu2 * inner.norm_sqr()
            + self.nu2 * weighted_norm(&self.scattered[n_star], left)
            + self.nu2 * weighted_norm(&self.leakage[n], right)
            + dot(&self.leakage[n], &self.scattered[n_star])
    }

    /// Per-antenna breakdown for one LOS scene.
    pub fn evaluate(&self, scene: &LosScene, mode: SinrMode) -> Result<Vec<SinrBreakdown>, SinrError> {
        if mode == SinrMode::Theoretical && scene.interferers.len() != self.budget.num_interferers {
            return Err(SinrError::MissingInterfererMeans { expected: self.budget.num_interferers, found: scene.interferers.len() });
        }
        let nr = self.num_dra();
        let d = &scene.desired;
        let p = self.budget.p_desired;
        let mut out = Vec::with_capacity(nr);
        for m in 0..nr {
            let u = &d.columns[m];
            let trace_theta = self.nu2 * d.norms[m] + self.phi[m].iter().sum::<f64>();
            let var = self.nu2 * weighted_norm(&self.xi[m], u) + dot(&self.xi[m], &self.phi[m]);
            let mut own = 0.0;
            for n in (0..nr).filter(|&n| n != m) {
                own += self.pair_trace(&d.columns[n], n, u, m);
            }
            let mut cross = 0.0;
            for a in 0..self.budget.num_interferers {
                for n in 0..nr {
                    cross += match mode {
                        SinrMode::Theoretical => {
                            let (own_los, victim) = &scene.interferers[a];
                            self.pair_trace(&own_los.columns[n], n, &victim.columns[m], m)
                        }
                        SinrMode::Approximate => self.pair_trace(u, n, u, m),
                    };
                }
            }
            out.push(SinrBreakdown::assemble(p * trace_theta * trace_theta, p * var, p * own, self.budget.p_bar * cross, self.budget.noise_var, self.cap));
        }
        Ok(out)
    }

    /// Mean rate per DRA over a set of LOS scenes, with the averaged breakdown.
    pub fn ensemble(&self, scenes: &[LosScene], mode: SinrMode) -> Result<EnsembleSummary, SinrError> {
        let nr = self.num_dra();
        let mut rates = Vec::with_capacity(scenes.len());
        let mut mean = vec![SinrBreakdown::default(); nr];
        for scene in scenes {
            let b = self.evaluate(scene, mode)?;
            rates.push(rate_per_dra(&b.iter().map(|x| x.sinr).collect::<Vec<_>>())?);
            for (acc, x) in mean.iter_mut().zip(&b) {
                acc.desired += x.desired;
                acc.est_error_term += x.est_error_term;
                acc.inter_antenna_term += x.inter_antenna_term;
                acc.interferer_term += x.interferer_term;
                acc.noise += x.noise;
                acc.sinr += x.sinr;
                acc.rate_per_dra += x.rate_per_dra;
            }
        }
        let k = scenes.len().max(1) as f64;
        for acc in mean.iter_mut() {
            acc.desired /= k;
            acc.est_error_term /= k;
            acc.inter_antenna_term /= k;
            acc.interferer_term /= k;
            acc.noise /= k;
            acc.sinr /= k;
            acc.rate_per_dra /= k;
        }
        Ok(EnsembleSummary { rate_per_dra: crate::numerics::pairwise_sum(&rates) / k, per_dra: mean })
    }
}

/// Closed-form results averaged over LOS scenes.
#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub rate_per_dra: f64,
    /// Term powers, SINR and rate per receive antenna, each averaged over scenes.
    pub per_dra: Vec<SinrBreakdown>,
}

/// Transmit-correlation phase choice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PhaseChoice {
    /// Real correlation coefficients.
    None,
    /// Fixed phase in radians.
    Fixed(f64),
    /// Uniform phase drawn once from the analysis seed.
    #[default]
    Random,
}

/// Settings of the closed-form evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    /// Number of LOS scenes the closed form is averaged over.
    pub los_draws: usize,
    pub seed: u64,
    pub form: OmegaForm,
    pub interval: InterfererInterval,
    pub phase: PhaseChoice,
    pub sinr_cap: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            los_draws: 512,
            seed: 1,
            form: OmegaForm::Unscaled,
            interval: InterfererInterval::LinkToMax,
            phase: PhaseChoice::Random,
            sinr_cap: DEFAULT_SINR_CAP,
        }
    }
}

const PHASE_STREAM: u64 = 0xface_0001;
const LOS_STREAM: u64 = 0xface_0002;

impl PhaseChoice {
    pub fn resolve(&self, seed: u64) -> Option<f64> {
        match *self {
            Self::None => None,
            Self::Fixed(theta) => Some(theta),
            Self::Random => Some(channel::draw_correlation_phase(&RngStream::new(seed, PHASE_STREAM))),
        }
    }
}

/// Closed-form rate of one scenario at any link distance, over a fixed LOS ensemble.
#[derive(Debug, Clone)]
pub struct RateModel {
    config: SystemConfig,
    options: AnalysisOptions,
    stats: ChannelStats,
    spectrum: CovarianceSpectrum,
    scenes: Vec<LosScene>,
}

impl RateModel {
    pub fn new(config: &SystemConfig, options: AnalysisOptions) -> Result<Self, SinrError> {
        config.validate()?;
        let phase = options.phase.resolve(options.seed);
        let h_d = channel::draw_los(config, &RngStream::new(options.seed, LOS_STREAM).derive(0));
        let stats = channel::build_channel_stats(config, h_d, phase)?;
        let spectrum = CovarianceSpectrum::new(&stats)?;
        let scenes = draw_los_scenes(config, &spectrum, options.los_draws.max(1), &RngStream::new(options.seed, LOS_STREAM));
        Ok(Self { config: config.clone(), options, stats, spectrum, scenes })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn stats(&self) -> &ChannelStats {
        &self.stats
    }

    pub fn spectrum(&self) -> &CovarianceSpectrum {
        &self.spectrum
    }

    fn config_at(&self, distance: f64) -> SystemConfig {
        SystemConfig { link_distance: distance, ..self.config.clone() }
    }

    pub fn budget_at(&self, distance: f64) -> Result<LinkBudget, SinrError> {
        Ok(LinkBudget::from_config(&self.config_at(distance), self.options.interval)?)
    }

    pub fn closed_form_at(&self, distance: f64) -> Result<ClosedForm, SinrError> {
        let budget = self.budget_at(distance)?;
        Ok(ClosedForm::new(&self.spectrum, self.stats.nu, budget, self.options.form).with_cap(self.options.sinr_cap))
    }

    pub fn summary_at(&self, distance: f64, mode: SinrMode) -> Result<EnsembleSummary, SinrError> {
        self.closed_form_at(distance)?.ensemble(&self.scenes, mode)
    }

    /// Rate per DRA at `distance`.
    pub fn rate_at(&self, distance: f64, mode: SinrMode) -> Result<f64, SinrError> {
        Ok(self.summary_at(distance, mode)?.rate_per_dra)
    }

    /// Rate per DRA at the configured link distance.
    pub fn rate(&self, mode: SinrMode) -> Result<f64, SinrError> {
        self.rate_at(self.config.link_distance, mode)
    }
}
