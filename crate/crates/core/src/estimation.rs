//! MMSE channel estimation with pilot contamination.
//!
//! All interferers reuse the desired pilot, so their scattered channels leak
//! into the estimate. The second-order matrices built here (Φ, Ξ, M, Θ, Ω)
//! are indexed with the column-stacked training orientation of
//! [`crate::channel`].

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::channel::{ChannelRealization, ChannelStats};
use crate::numerics::{self, gaussian_matrix_with, hermitian_eigen, solve_hpd, spectral_map, CMatrix, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("block index {index} out of range for {blocks} blocks")]
    IndexOutOfRange { index: usize, blocks: usize },
    #[error("desired power and noise variance must be positive")]
    NonPositivePower,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Bracket used inside Ω.
///
/// `Unscaled` keeps the bare correlation block as the middle term
/// (`sI + R + cς²R`); `Scaled` scales it by ς² like the estimator does
/// (`sI + ς²R + cς²R`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OmegaForm {
    #[default]
    Unscaled,
    Scaled,
}

/// Powers seen by the training receiver, normalised by the desired power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingRatios {
    /// `σ_w² / P`.
    pub snr_ratio: f64,
    /// `Σ_a P_a / P`.
    pub interference_ratio: f64,
}

impl TrainingRatios {
    pub fn new(p_desired: f64, p_interf: &[f64], noise_var: f64) -> Result<Self, EstimationError> {
        if !(p_desired > 0.0) || noise_var < 0.0 || p_interf.iter().any(|p| *p < 0.0) {
            return Err(EstimationError::NonPositivePower);
        }
        Ok(Self {
            snr_ratio: noise_var / p_desired,
            interference_ratio: numerics::pairwise_sum(p_interf) / p_desired,
        })
    }
}

fn bracket(scaled_cov: &CMatrix, ratios: TrainingRatios) -> CMatrix {
    let n = scaled_cov.nrows();
    &CMatrix::identity(n).scale(ratios.snr_ratio) + &scaled_cov.scale(1.0 + ratios.interference_ratio)
}

/// Φ, the covariance of the estimate around its mean.
pub fn estimation_covariance(
    stats: &ChannelStats,
    p_desired: f64,
    p_interf: &[f64],
    noise_var: f64,
) -> Result<CMatrix, EstimationError> {
    let ratios = TrainingRatios::new(p_desired, p_interf, noise_var)?;
    let r = stats.covariance.scale(stats.varsigma.powi(2));
    let core = solve_hpd(&bracket(&r, ratios), &r)?;
    Ok((&r * &core).hermitian_part())
}

/// Ξ = ς²R̄ − Φ, the error covariance.
pub fn error_covariance(stats: &ChannelStats, phi: &CMatrix) -> CMatrix {
    (&stats.covariance.scale(stats.varsigma.powi(2)) - phi).hermitian_part()
}

/// `vec(H_d) vec(H_d)^H`.
pub fn mean_outer(h_d: &CMatrix) -> CMatrix {
    let v = h_d.vec();
    &v * &v.adjoint()
}

/// Zero-based diagonal block `(i, i)` of size `n_t`.
pub fn diagonal_block(m: &CMatrix, i: usize, n_t: usize) -> Result<CMatrix, EstimationError> {
    let blocks = if n_t == 0 { 0 } else { m.nrows() / n_t };
    if n_t == 0 || i >= blocks || m.ncols() != m.nrows() {
        return Err(EstimationError::IndexOutOfRange { index: i, blocks });
    }
    Ok(m.block(i * n_t, i * n_t, n_t, n_t))
}

/// Zero-based block `(i, j)` of size `n_t`.
pub fn block(m: &CMatrix, i: usize, j: usize, n_t: usize) -> Result<CMatrix, EstimationError> {
    let blocks = if n_t == 0 { 0 } else { m.nrows() / n_t };
    if n_t == 0 || i >= blocks || j >= blocks {
        return Err(EstimationError::IndexOutOfRange { index: i.max(j), blocks });
    }
    Ok(m.block(i * n_t, j * n_t, n_t, n_t))
}

/// Θ block `ν²M + Φ`.
pub fn theta_block(nu: f64, m_block: &CMatrix, phi_block: &CMatrix) -> CMatrix {
    &m_block.scale(nu * nu) + phi_block
}

/// Ω block on one `N_t x N_t` correlation block.
pub fn omega_block(
    stats: &ChannelStats,
    r_block: &CMatrix,
    p_desired: f64,
    p_interf: &[f64],
    noise_var: f64,
    form: OmegaForm,
) -> Result<CMatrix, EstimationError> {
    let ratios = TrainingRatios::new(p_desired, p_interf, noise_var)?;
    omega_block_with(stats.varsigma, r_block, ratios, form)
}

fn omega_block_with(varsigma: f64, r_block: &CMatrix, ratios: TrainingRatios, form: OmegaForm) -> Result<CMatrix, EstimationError> {
    let v2 = varsigma * varsigma;
    let middle = match form {
        OmegaForm::Unscaled => 1.0,
        OmegaForm::Scaled => v2,
    };
    let n = r_block.nrows();
    let b = &CMatrix::identity(n).scale(ratios.snr_ratio) + &r_block.scale(middle + ratios.interference_ratio * v2);
    // r_block and the bracket commute, so R B^{-1} = B^{-1} R.
    Ok(solve_hpd(&b, r_block)?.scale(v2).hermitian_part())
}

/// Estimation-side matrices of one link.
#[derive(Debug, Clone)]
pub struct EstimationStats {
    pub phi: CMatrix,
    pub xi: CMatrix,
    pub m_mean: CMatrix,
    pub theta_blocks: Vec<CMatrix>,
    pub omega_blocks: Vec<CMatrix>,
    /// `P_a / P` for each interferer.
    pub rho_ratios: Vec<f64>,
    /// `σ_w² / P`.
    pub snr_ratio: f64,
}

impl EstimationStats {
    pub fn phi_block(&self, n: usize) -> CMatrix {
        let nt = self.theta_blocks[0].nrows();
        self.phi.block(n * nt, n * nt, nt, nt)
    }

    pub fn xi_block(&self, n: usize) -> CMatrix {
        let nt = self.theta_blocks[0].nrows();
        self.xi.block(n * nt, n * nt, nt, nt)
    }

    pub fn m_block(&self, n: usize) -> CMatrix {
        let nt = self.theta_blocks[0].nrows();
        self.m_mean.block(n * nt, n * nt, nt, nt)
    }
}

/// Builds all estimation matrices by dense solves.
pub fn estimation_stats(
    stats: &ChannelStats,
    p_desired: f64,
    p_interf: &[f64],
    noise_var: f64,
    form: OmegaForm,
) -> Result<EstimationStats, EstimationError> {
    let ratios = TrainingRatios::new(p_desired, p_interf, noise_var)?;
    let nt = stats.num_dta();
    let phi = estimation_covariance(stats, p_desired, p_interf, noise_var)?;
    let xi = error_covariance(stats, &phi);
    let m_mean = mean_outer(&stats.h_d);
    let mut theta_blocks = Vec::with_capacity(stats.num_dra());
    let mut omega_blocks = Vec::with_capacity(stats.num_dra());
    for n in 0..stats.num_dra() {
        theta_blocks.push(theta_block(stats.nu, &diagonal_block(&m_mean, n, nt)?, &diagonal_block(&phi, n, nt)?));
        omega_blocks.push(omega_block_with(stats.varsigma, &stats.covariance_block(n), ratios, form)?);
    }
    Ok(EstimationStats {
        phi,
        xi,
        m_mean,
        theta_blocks,
        omega_blocks,
        rho_ratios: p_interf.iter().map(|p| p / p_desired).collect(),
        snr_ratio: ratios.snr_ratio,
    })
}

/// Received pilot block and the pilot that produced it.
#[derive(Debug, Clone)]
pub struct PilotObservation {
    /// `N_t x N_r`.
    pub y_rx: CMatrix,
    /// `N_r x N_r`, unitary.
    pub pilot: CMatrix,
}

/// Unitary DFT pilot of size `n`.
pub fn dft_pilot(n: usize) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |k, l| {
        Complex64::from_polar(scale, -std::f64::consts::TAU * (k * l) as f64 / n as f64)
    })
}

/// `Y = Σ_i √P_i H_i X̄ + W`; the first channel is the desired link.
pub fn simulate_pilot_rx_with<R: Rng + ?Sized>(
    true_channels: &[ChannelRealization],
    powers: &[f64],
    pilot: &CMatrix,
    noise_var: f64,
    rng: &mut R,
) -> Result<PilotObservation, EstimationError> {
    let first = true_channels.first().ok_or(NumericsError::DimensionMismatch {
        expected: "at least one channel".into(),
        found: "none".into(),
    })?;
    let (nt, nr) = first.h_true.dims();
    if powers.len() != true_channels.len() || pilot.dims() != (nr, nr) {
        return Err(NumericsError::DimensionMismatch {
            expected: format!("{} powers and a {nr}x{nr} pilot", true_channels.len()),
            found: format!("{} powers and a {:?} pilot", powers.len(), pilot.dims()),
        }
        .into());
    }
    let mut sum = CMatrix::zeros(nt, nr);
    for (channel, &power) in true_channels.iter().zip(powers) {
        if channel.h_true.dims() != (nt, nr) {
            return Err(NumericsError::DimensionMismatch {
                expected: format!("{:?}", (nt, nr)),
                found: format!("{:?}", channel.h_true.dims()),
            }
            .into());
        }
        sum = &sum + &channel.h_true.scale(power.sqrt());
    }
    let noise = gaussian_matrix_with(nt, nr, rng).scale(noise_var.sqrt());
    Ok(PilotObservation { y_rx: &(&sum * pilot) + &noise, pilot: pilot.clone() })
}

/// Removes the pilot and the known mean: `Y X̄^H / √P − ν H_d`.
pub fn decorrelate(obs: &PilotObservation, stats: &ChannelStats, p_desired: f64) -> CMatrix {
    let despread = (&obs.y_rx * &obs.pilot.adjoint()).scale(1.0 / p_desired.sqrt());
    &despread - &stats.h_d.scale(stats.nu)
}

/// MMSE estimate of the desired channel (`N_t x N_r`), by a dense solve.
pub fn mmse_estimate(
    obs: &PilotObservation,
    stats: &ChannelStats,
    p_desired: f64,
    p_interf: &[f64],
    noise_var: f64,
) -> Result<CMatrix, EstimationError> {
    let ratios = TrainingRatios::new(p_desired, p_interf, noise_var)?;
    let (nt, nr) = stats.h_d.dims();
    let r = stats.covariance.scale(stats.varsigma.powi(2));
    let e = decorrelate(obs, stats, p_desired).vec();
    let filtered = &r * &solve_hpd(&bracket(&r, ratios), &e)?;
    Ok(&stats.h_d.scale(stats.nu) + &filtered.unvec(nt, nr)?)
}

/// Eigenstructure of `R_r ⊗ R_t`, which diagonalises every estimation matrix
/// at once and makes per-trial filtering cheap.
#[derive(Debug, Clone)]
pub struct CovarianceSpectrum {
    pub tx_values: Vec<f64>,
    pub tx_vectors: CMatrix,
    pub rx_values: Vec<f64>,
    pub rx_vectors: CMatrix,
    pub rx_diagonal: Vec<f64>,
    pub varsigma: f64,
}

impl CovarianceSpectrum {
    pub fn new(stats: &ChannelStats) -> Result<Self, EstimationError> {
        let (tx_values, tx_vectors) = hermitian_eigen(&stats.corr_tx)?;
        let (rx_values, rx_vectors) = hermitian_eigen(&stats.corr_rx)?;
        let rx_diagonal = (0..stats.num_dra()).map(|n| stats.corr_rx[(n, n)].re).collect();
        Ok(Self {
            tx_values: tx_values.into_iter().map(|v| v.max(0.0)).collect(),
            tx_vectors,
            rx_values: rx_values.into_iter().map(|v| v.max(0.0)).collect(),
            rx_vectors,
            rx_diagonal,
            varsigma: stats.varsigma,
        })
    }

    fn v2(&self) -> f64 {
        self.varsigma * self.varsigma
    }

    /// MMSE gain on one eigenmode of `R_r ⊗ R_t`.
    fn filter_gain(&self, eigenvalue: f64, ratios: TrainingRatios) -> f64 {
        let r = self.v2() * eigenvalue;
        let denom = ratios.snr_ratio + (1.0 + ratios.interference_ratio) * r;
        if denom > 0.0 {
            r / denom
        } else {
            0.0
        }
    }

    /// Applies `ς²R̄ (sI + (1 + c) ς²R̄)^{-1}` to an `N_t x N_r` residual.
    pub fn filter(&self, residual: &CMatrix, ratios: TrainingRatios) -> CMatrix {
        let z = &(&self.tx_vectors.adjoint() * residual) * &self.rx_vectors.conjugate();
        let scaled = CMatrix::from_fn(z.nrows(), z.ncols(), |t, r| {
            z[(t, r)] * self.filter_gain(self.tx_values[t] * self.rx_values[r], ratios)
        });
        &(&self.tx_vectors * &scaled) * &self.rx_vectors.transpose()
    }

    /// Fast MMSE estimate; same result as [`mmse_estimate`].
    pub fn estimate(&self, obs: &PilotObservation, stats: &ChannelStats, p_desired: f64, ratios: TrainingRatios) -> CMatrix {
        let residual = decorrelate(obs, stats, p_desired);
        &stats.h_d.scale(stats.nu) + &self.filter(&residual, ratios)
    }

    /// Diagonal block `(n, n)` of Φ, expressed as eigenvalues in the transmit eigenbasis.
    pub fn phi_block_eigenvalues(&self, n: usize, ratios: TrainingRatios) -> Vec<f64> {
        let v2 = self.v2();
        (0..self.tx_values.len())
            .map(|t| {
                let mut acc = 0.0;
                for (r, &mu) in self.rx_values.iter().enumerate() {
                    let weight = self.rx_vectors[(n, r)].norm_sqr();
                    let lam = v2 * self.tx_values[t] * mu;
                    let denom = ratios.snr_ratio + (1.0 + ratios.interference_ratio) * lam;
                    if denom > 0.0 {
                        acc += weight * lam * lam / denom;
                    }
                }
                acc
            })
            .collect()
    }

    /// Diagonal block `(n, n)` of `ς²R̄`, as eigenvalues in the transmit eigenbasis.
    pub fn scattered_block_eigenvalues(&self, n: usize) -> Vec<f64> {
        self.tx_values.iter().map(|l| self.v2() * self.rx_diagonal[n] * l).collect()
    }

    /// Ω block `(n, n)`, as eigenvalues in the transmit eigenbasis.
    pub fn omega_block_eigenvalues(&self, n: usize, ratios: TrainingRatios, form: OmegaForm) -> Vec<f64> {
        let v2 = self.v2();
        let middle = match form {
            OmegaForm::Unscaled => 1.0,
            OmegaForm::Scaled => v2,
        };
        self.tx_values
            .iter()
            .map(|l| {
                let r = self.rx_diagonal[n] * l;
                let denom = ratios.snr_ratio + (middle + ratios.interference_ratio * v2) * r;
                if denom > 0.0 {
                    v2 * r / denom
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Maps transmit-eigenbasis eigenvalues back to an `N_t x N_t` matrix.
    pub fn to_matrix(&self, eigenvalues: &[f64]) -> CMatrix {
        spectral_map(&self.tx_vectors, eigenvalues)
    }
}
