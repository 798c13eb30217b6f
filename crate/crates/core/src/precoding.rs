//! Matched-filter precoding and the received-signal split.
//!
//! Channels and precoders are in training orientation (`N_t x N_r`), so the
//! effective gain from stream `n` to receive antenna `m` is `c_m^H v_n`, where
//! `c_m` is column `m` of the channel and `v_n` column `n` of the precoder.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::numerics::{complex_gaussian, gaussian_matrix_with, CMatrix, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecodingError {
    #[error("antenna index {index} out of range for {count} antennas")]
    IndexOutOfRange { index: usize, count: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Transmit precoder, `N_t x N_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub v: CMatrix,
}

/// Matched filter: the precoder is the training-side channel estimate itself.
pub fn mf_precoder(h_hat_training_side: &CMatrix) -> Precoder {
    Precoder { v: h_hat_training_side.clone() }
}

/// `Y = Σ_i √P_i H_i V_i x_i + W` with data-side channels `H_i` (`N_r x N_t`).
pub fn received_symbol<R: Rng + ?Sized>(
    h_data_side: &[CMatrix],
    precoders: &[Precoder],
    powers: &[f64],
    symbols: &[CMatrix],
    noise_var: f64,
    rng: &mut R,
) -> Result<CMatrix, PrecodingError> {
    let n = h_data_side.len();
    if precoders.len() != n || powers.len() != n || symbols.len() != n || n == 0 {
        return Err(NumericsError::DimensionMismatch {
            expected: format!("{n} channels, precoders, powers and symbol vectors"),
            found: format!("{}, {}, {}", precoders.len(), powers.len(), symbols.len()),
        }
        .into());
    }
    let nr = h_data_side[0].nrows();
    let mut y = gaussian_matrix_with(nr, 1, rng).scale(noise_var.sqrt());
    for ((h, v), (&p, x)) in h_data_side.iter().zip(precoders).zip(powers.iter().zip(symbols)) {
        let contribution = h.checked_mul(&v.v)?.checked_mul(x)?.scale(p.sqrt());
        y = y.checked_add(&contribution)?;
    }
    Ok(y)
}

/// Powers of the five received-signal components at one antenna.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TermPowers {
    /// Gain of the own stream through the estimate, `P |ĉ^H ĉ|²`.
    pub desired_mean: f64,
    /// Own-stream leakage through the estimation error.
    pub estimation_error: f64,
    /// Other streams of the same transmitter.
    pub inter_antenna: f64,
    /// One entry per interferer.
    pub interferer: Vec<f64>,
    pub noise: f64,
}

impl TermPowers {
    pub fn interferer_total(&self) -> f64 {
        self.interferer.iter().sum()
    }

    pub fn impairment(&self) -> f64 {
        self.estimation_error + self.inter_antenna + self.interferer_total() + self.noise
    }

    pub fn total(&self) -> f64 {
        self.desired_mean + self.impairment()
    }

    /// Desired over all other components; `cap` when undisturbed.
    pub fn sinr(&self, cap: f64) -> f64 {
        let den = self.impairment();
        if den > 0.0 {
            (self.desired_mean / den).min(cap)
        } else if self.desired_mean > 0.0 {
            cap
        } else {
            0.0
        }
    }
}

/// One co-channel interferer as seen by the victim receiver.
#[derive(Debug, Clone)]
pub struct InterfererLink {
    /// Channel from the interferer to the victim, training orientation.
    pub channel: CMatrix,
    pub precoder: Precoder,
    pub power: f64,
}

/// All gains needed to split the received signal, for fixed channels.
#[derive(Debug, Clone)]
pub struct LinkCoefficients {
    /// `[m, n] = c_m^H v_n` for the desired transmitter.
    own: CMatrix,
    /// `[m] = ĉ_m^H ĉ_m`.
    matched: Vec<Complex64>,
    /// `[m] = (c_m - ĉ_m)^H ĉ_m`.
    error: Vec<Complex64>,
    /// Per interferer, `[m, n] = (c^a_m)^H v^a_n`.
    cross: Vec<CMatrix>,
    desired_power: f64,
    interferer_powers: Vec<f64>,
    noise_var: f64,
}

impl LinkCoefficients {
    pub fn new(
        desired_true: &CMatrix,
        precoder: &Precoder,
        desired_power: f64,
        interferers: &[InterfererLink],
        noise_var: f64,
    ) -> Result<Self, PrecodingError> {
        if desired_true.dims() != precoder.v.dims() {
            return Err(NumericsError::DimensionMismatch {
                expected: format!("{:?}", desired_true.dims()),
                found: format!("{:?}", precoder.v.dims()),
            }
            .into());
        }
        let own = desired_true.adjoint().checked_mul(&precoder.v)?;
        let nr = own.nrows();
        let v = &precoder.v;
        let mut matched = Vec::with_capacity(nr);
        let mut error = Vec::with_capacity(nr);
        for m in 0..nr {
            let vm = v.column(m);
            let self_gain = vm.dotc(&vm);
            matched.push(self_gain);
            error.push(own[(m, m)] - self_gain);
        }
        let mut cross = Vec::with_capacity(interferers.len());
        for link in interferers {
            cross.push(link.channel.adjoint().checked_mul(&link.precoder.v)?);
        }
        Ok(Self {
            own,
            matched,
            error,
            cross,
            desired_power,
            interferer_powers: interferers.iter().map(|l| l.power).collect(),
            noise_var,
        })
    }

    pub fn num_dra(&self) -> usize {
        self.matched.len()
    }

    fn check(&self, antenna: usize) -> Result<(), PrecodingError> {
        if antenna >= self.num_dra() {
            return Err(PrecodingError::IndexOutOfRange { index: antenna, count: self.num_dra() });
        }
        Ok(())
    }

    /// Own-stream gain `c_m^H v_m` at `antenna`.
    pub fn own_gain(&self, antenna: usize) -> Result<Complex64, PrecodingError> {
        self.check(antenna)?;
        Ok(self.own[(antenna, antenna)])
    }

    /// Term powers averaged exactly over unit-power symbols and noise.
    pub fn expected_terms(&self, antenna: usize) -> Result<TermPowers, PrecodingError> {
        self.check(antenna)?;
        let m = antenna;
        let p = self.desired_power;
        let inter_antenna = (0..self.own.ncols()).filter(|&n| n != m).map(|n| self.own[(m, n)].norm_sqr()).sum::<f64>() * p;
        let interferer = self
            .cross
            .iter()
            .zip(&self.interferer_powers)
            .map(|(g, &pa)| pa * (0..g.ncols()).map(|n| g[(m, n)].norm_sqr()).sum::<f64>())
            .collect();
        Ok(TermPowers {
            desired_mean: p * self.matched[m].norm_sqr(),
            estimation_error: p * self.error[m].norm_sqr(),
            inter_antenna,
            interferer,
            noise: self.noise_var,
        })
    }

    /// Term powers measured over `batch` draws of CN(0, 1) symbols and noise,
    /// for every receive antenna at once. The second value is the measured
    /// total received power per antenna.
    pub fn sampled_terms<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> (Vec<TermPowers>, Vec<f64>) {
        let nr = self.num_dra();
        let mut acc = vec![TermPowers { interferer: vec![0.0; self.cross.len()], ..TermPowers::default() }; nr];
        let mut total = vec![0.0; nr];
        let sp = self.desired_power.sqrt();
        let spa: Vec<f64> = self.interferer_powers.iter().map(|p| p.sqrt()).collect();
        let sn = self.noise_var.sqrt();
        let mut x = vec![Complex64::new(0.0, 0.0); self.own.ncols()];
        let mut xa: Vec<Vec<Complex64>> = self.cross.iter().map(|g| vec![Complex64::new(0.0, 0.0); g.ncols()]).collect();
        let mut w = vec![Complex64::new(0.0, 0.0); nr];
        for _ in 0..batch {
            x.iter_mut().for_each(|s| *s = complex_gaussian(rng));
            for v in xa.iter_mut() {
                v.iter_mut().for_each(|s| *s = complex_gaussian(rng));
            }
            w.iter_mut().for_each(|s| *s = complex_gaussian(rng) * sn);
            for m in 0..nr {
                let t1 = self.matched[m] * x[m] * sp;
                let t2 = self.error[m] * x[m] * sp;
                let mut t3 = Complex64::new(0.0, 0.0);
                for (n, xn) in x.iter().enumerate() {
                    if n != m {
                        t3 += self.own[(m, n)] * xn;
                    }
                }
                t3 *= sp;
                let mut y = t1 + t2 + t3 + w[m];
                let terms = &mut acc[m];
                terms.desired_mean += t1.norm_sqr();
                terms.estimation_error += t2.norm_sqr();
                terms.inter_antenna += t3.norm_sqr();
                terms.noise += w[m].norm_sqr();
                for (a, (g, xs)) in self.cross.iter().zip(&xa).enumerate() {
                    let t4 = (0..g.ncols()).map(|n| g[(m, n)] * xs[n]).sum::<Complex64>() * spa[a];
                    terms.interferer[a] += t4.norm_sqr();
                    y += t4;
                }
                total[m] += y.norm_sqr();
            }
        }
        let scale = 1.0 / batch.max(1) as f64;
        for terms in acc.iter_mut() {
            terms.desired_mean *= scale;
            terms.estimation_error *= scale;
            terms.inter_antenna *= scale;
            terms.noise *= scale;
            terms.interferer.iter_mut().for_each(|v| *v *= scale);
        }
        total.iter_mut().for_each(|t| *t *= scale);
        (acc, total)
    }
}

/// Term powers at `antenna`, measured over an inner batch of symbol and noise draws.
pub fn decompose_terms<R: Rng + ?Sized>(
    coefficients: &LinkCoefficients,
    antenna: usize,
    batch: usize,
    rng: &mut R,
) -> Result<TermPowers, PrecodingError> {
    coefficients.check(antenna)?;
    let (mut terms, _) = coefficients.sampled_terms(batch, rng);
    Ok(terms.swap_remove(antenna))
}
