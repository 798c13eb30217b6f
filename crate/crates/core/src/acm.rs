//! Distance-based adaptive coding and modulation.
//!
//! A mode `k` (sorted by ascending spectral efficiency) is used on
//! `[d_k, d_{k-1})`, with `d_0` the maximum communication distance. The
//! thresholds are read off the achievable-rate curve: `d_k` is where the
//! curve drops below the spectral efficiency of mode `k + 1`.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::SystemConfig;
use crate::sinr::{AnalysisOptions, RateModel, SinrError, SinrMode};

#[derive(Debug, Error)]
pub enum AcmError {
    #[error("no mode is feasible anywhere on the rate curve")]
    EmptyTable,
    #[error("distance {distance} m is at or beyond the maximum range {d_max} m")]
    OutOfRange { distance: f64, d_max: f64 },
    #[error("distance {distance} m is below the minimum separation {d_min} m")]
    BelowMinimumSeparation { distance: f64, d_min: f64 },
    #[error("{quantity} = {value} is outside its domain")]
    Domain { quantity: &'static str, value: f64 },
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Sinr(#[from] SinrError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcmMode {
    pub index: usize,
    pub modulation_order: u32,
    pub code_rate: f64,
    pub spectral_efficiency: f64,
}

pub fn modulation_name(order: u32) -> String {
    match order {
        2 => "BPSK".into(),
        4 => "QPSK".into(),
        8 => "8QAM".into(),
        16 => "16QAM".into(),
        other => format!("{other}-ary"),
    }
}

impl AcmMode {
    pub fn modulation(&self) -> String {
        modulation_name(self.modulation_order)
    }
}

/// `log2(order) * rate * (n - n_cp) / n`.
pub fn spectral_efficiency(modulation_order: u32, code_rate: f64, n: usize, n_cp: usize) -> Result<f64, AcmError> {
    if modulation_order < 2 {
        return Err(AcmError::Domain { quantity: "modulation_order", value: modulation_order as f64 });
    }
    if !(code_rate > 0.0 && code_rate <= 1.0) {
        return Err(AcmError::Domain { quantity: "code_rate", value: code_rate });
    }
    if n == 0 || n_cp >= n {
        return Err(AcmError::Domain { quantity: "n_cp", value: n_cp as f64 });
    }
    Ok((modulation_order as f64).log2() * code_rate * (n - n_cp) as f64 / n as f64)
}

/// The seven built-in modes with their reference spectral efficiencies.
pub fn reference_modes() -> Vec<AcmMode> {
    [(2, 0.488, 0.459), (4, 0.533, 1.000), (4, 0.706, 1.322), (8, 0.642, 1.809), (8, 0.780, 2.194), (16, 0.731, 2.747), (16, 0.853, 3.197)]
        .iter()
        .enumerate()
        .map(|(i, &(order, rate, se))| AcmMode { index: i + 1, modulation_order: order, code_rate: rate, spectral_efficiency: se })
        .collect()
}

/// Reference thresholds for [`reference_modes`] at `N_t = 32`, in meters.
pub const REFERENCE_THRESHOLDS_M: [f64; 7] = [500e3, 350e3, 200e3, 110e3, 40e3, 25e3, 5.56e3];

/// Per-DRA and total data rate in bit/s.
pub fn mode_data_rates(mode: &AcmMode, bandwidth: f64, num_dra: usize) -> (f64, f64) {
    let per_dra = mode.spectral_efficiency * bandwidth;
    (per_dra, per_dra * num_dra as f64)
}

/// Achievable rate per DRA sampled on a distance grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub distances: Vec<f64>,
    pub rates: Vec<f64>,
}

impl RateCurve {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.rates.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Grid from `start` to `end` inclusive with spacing `step`.
pub fn distance_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|i| start + i as f64 * step).collect();
    if end - grid[grid.len() - 1] > 1e-9 * step {
        grid.push(end);
    }
    grid
}

pub fn rate_curve_with(model: &RateModel, grid: &[f64], mode: SinrMode) -> Result<RateCurve, AcmError> {
    let rates = grid.par_iter().map(|&d| model.rate_at(d, mode)).collect::<Result<Vec<_>, _>>()?;
    Ok(RateCurve { distances: grid.to_vec(), rates })
}

/// Closed-form rate curve with the default analysis options.
pub fn rate_curve(config: &SystemConfig, grid: &[f64], mode: SinrMode) -> Result<RateCurve, AcmError> {
    let model = RateModel::new(config, AnalysisOptions::default())?;
    rate_curve_with(&model, grid, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// SE above the curve even at the minimum distance.
    Infeasible,
    /// A faster mode covers the whole interval.
    Unused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedMode {
    pub mode: AcmMode,
    pub reason: DropReason,
}

/// Designed or loaded switching table. `thresholds[k]` is the lower end of `modes[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcmTable {
    pub modes: Vec<AcmMode>,
    pub thresholds: Vec<f64>,
    pub d_max: f64,
    pub dropped: Vec<DroppedMode>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSettings {
    pub d_min: f64,
    pub d_max: f64,
    /// Subtracted from the curve before thresholding, in bit/s/Hz.
    pub margin: f64,
    /// Bisection stops when the bracket is this narrow, in meters.
    pub refine_tolerance: f64,
}

impl DesignSettings {
    pub fn from_config(config: &SystemConfig) -> Self {
        Self { d_min: config.d_min, d_max: config.d_max, margin: 0.0, refine_tolerance: 100.0 }
    }
}

/// Largest distance up to which every grid point supports `se`, or `None`
/// if the first point already fails. Crossings are bisected with `eval` when given.
fn crossing(
    curve: &RateCurve,
    se: f64,
    margin: f64,
    tolerance: f64,
    eval: Option<&(dyn Fn(f64) -> Result<f64, AcmError> + Sync)>,
) -> Result<Option<f64>, AcmError> {
    let ok = |rate: f64| rate - margin >= se;
    let Some(fail) = curve.rates.iter().position(|&r| !ok(r)) else {
        return Ok(Some(curve.distances[curve.len() - 1]));
    };
    if fail == 0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (curve.distances[fail - 1], curve.distances[fail]);
    if let Some(eval) = eval {
        while hi - lo > tolerance {
            let mid = 0.5 * (lo + hi);
            if ok(eval(mid)?) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    Ok(Some(lo))
}

/// Thresholds from a sampled curve; `eval`, when given, refines every crossing.
pub fn design_thresholds_with(
    curve: &RateCurve,
    modes: &[AcmMode],
    settings: &DesignSettings,
    eval: Option<&(dyn Fn(f64) -> Result<f64, AcmError> + Sync)>,
) -> Result<AcmTable, AcmError> {
    if curve.is_empty() || modes.is_empty() {
        return Err(AcmError::EmptyTable);
    }
    let mut sorted = modes.to_vec();
    sorted.sort_by(|a, b| a.spectral_efficiency.total_cmp(&b.spectral_efficiency));
    let mut dropped = Vec::new();
    let mut kept: Vec<(AcmMode, f64)> = Vec::new();
    for mode in sorted {
        match crossing(curve, mode.spectral_efficiency, settings.margin, settings.refine_tolerance, eval)? {
            Some(reach) => kept.push((mode, reach.min(settings.d_max))),
            None => dropped.push(DroppedMode { mode, reason: DropReason::Infeasible }),
        }
    }
    if kept.is_empty() {
        return Err(AcmError::EmptyTable);
    }
    // Mode k spans [reach_{k+1}, reach_k); the fastest one reaches down to D_min.
    loop {
        let count = kept.len();
        let lower = |k: usize, kept: &[(AcmMode, f64)]| if k + 1 < count { kept[k + 1].1 } else { settings.d_min };
        let empty = (0..count).find(|&k| lower(k, &kept) >= kept[k].1);
        match empty {
            Some(k) => {
                let (mode, _) = kept.remove(k);
                dropped.push(DroppedMode { mode, reason: DropReason::Unused });
                if kept.is_empty() {
                    return Err(AcmError::EmptyTable);
                }
            }
            None => break,
        }
    }
    let d_max = kept[0].1;
    let count = kept.len();
    let thresholds = (0..count).map(|k| if k + 1 < count { kept[k + 1].1 } else { settings.d_min }).collect();
    let modes = kept
        .into_iter()
        .enumerate()
        .map(|(i, (mode, _))| AcmMode { index: i + 1, ..mode })
        .collect();
    Ok(AcmTable { modes, thresholds, d_max, dropped })
}

/// Grid-only design.
pub fn design_thresholds(curve: &RateCurve, modes: &[AcmMode], settings: &DesignSettings) -> Result<AcmTable, AcmError> {
    design_thresholds_with(curve, modes, settings, None)
}

/// Full design for a scenario: 1 km grid over `[D_min, D_max]` plus bisection.
pub fn design_for_scenario(model: &RateModel, modes: &[AcmMode], settings: &DesignSettings, mode: SinrMode, grid_step: f64) -> Result<(AcmTable, RateCurve), AcmError> {
    let grid = distance_grid(settings.d_min, settings.d_max, grid_step);
    let curve = rate_curve_with(model, &grid, mode)?;
    let eval = |d: f64| model.rate_at(d, mode).map_err(AcmError::from);
    let table = design_thresholds_with(&curve, modes, settings, Some(&eval))?;
    Ok((table, curve))
}

impl AcmTable {
    /// Table from explicit thresholds; the lowest threshold acts as the minimum distance.
    pub fn new(modes: Vec<AcmMode>, thresholds: Vec<f64>, d_max: f64) -> Result<Self, AcmError> {
        let table = Self { modes, thresholds, d_max, dropped: Vec::new() };
        table.check()?;
        Ok(table)
    }

    pub fn reference() -> Self {
        Self::new(reference_modes(), REFERENCE_THRESHOLDS_M.to_vec(), 740e3).expect("reference table is consistent")
    }

    fn check(&self) -> Result<(), AcmError> {
        if self.modes.is_empty() {
            return Err(AcmError::EmptyTable);
        }
        if self.modes.len() != self.thresholds.len() {
            return Err(AcmError::InvalidTable(format!("{} modes but {} thresholds", self.modes.len(), self.thresholds.len())));
        }
        if self.modes.iter().any(|m| !(m.spectral_efficiency > 0.0)) {
            return Err(AcmError::InvalidTable("spectral efficiency must be positive".into()));
        }
        if self.modes.windows(2).any(|w| w[1].spectral_efficiency <= w[0].spectral_efficiency) {
            return Err(AcmError::InvalidTable("spectral efficiencies must increase".into()));
        }
        let mut upper = self.d_max;
        for &d in &self.thresholds {
            if !(d < upper && d > 0.0) {
                return Err(AcmError::InvalidTable(format!("threshold {d} m not below {upper} m")));
            }
            upper = d;
        }
        Ok(())
    }

    pub fn d_min(&self) -> f64 {
        self.thresholds[self.thresholds.len() - 1]
    }

    /// Distance interval `[lower, upper)` of `modes[k]`.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        (self.thresholds[k], if k == 0 { self.d_max } else { self.thresholds[k - 1] })
    }

    pub fn select_mode(&self, distance: f64) -> Result<&AcmMode, AcmError> {
        select_mode(distance, self)
    }

    /// True when every grid point in each mode's interval supports its SE.
    pub fn is_supported_by(&self, curve: &RateCurve, margin: f64) -> bool {
        curve.distances.iter().zip(&curve.rates).all(|(&d, &rate)| match self.select_mode(d) {
            Ok(mode) => mode.spectral_efficiency <= rate - margin,
            Err(_) => true,
        })
    }

    pub fn to_toml(&self) -> Result<String, AcmError> {
        let doc = TableDocument {
            d_max_m: self.d_max,
            mode: self
                .modes
                .iter()
                .zip(&self.thresholds)
                .map(|(m, &threshold_m)| ModeRecord {
                    index: m.index,
                    modulation: m.modulation(),
                    modulation_order: m.modulation_order,
                    code_rate: m.code_rate,
                    spectral_efficiency: m.spectral_efficiency,
                    threshold_m,
                })
                .collect(),
        };
        toml::to_string(&doc).map_err(|e| AcmError::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, AcmError> {
        let doc: TableDocument = toml::from_str(text).map_err(|e| AcmError::Parse(e.to_string()))?;
        let thresholds = doc.mode.iter().map(|r| r.threshold_m).collect();
        let modes = doc
            .mode
            .into_iter()
            .map(|r| AcmMode { index: r.index, modulation_order: r.modulation_order, code_rate: r.code_rate, spectral_efficiency: r.spectral_efficiency })
            .collect();
        Self::new(modes, thresholds, doc.d_max_m)
    }

    pub fn write_csv<W: Write>(&self, writer: W, bandwidth: f64, num_dra: usize) -> Result<(), AcmError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["mode", "modulation", "code_rate", "se_bps_hz", "threshold_km", "rate_per_dra_mbps", "total_rate_mbps"])?;
        for (mode, &threshold) in self.modes.iter().zip(&self.thresholds) {
            let (per_dra, total) = mode_data_rates(mode, bandwidth, num_dra);
            out.write_record([
                mode.index.to_string(),
                mode.modulation(),
                mode.code_rate.to_string(),
                mode.spectral_efficiency.to_string(),
                (threshold / 1e3).to_string(),
                (per_dra / 1e6).to_string(),
                (total / 1e6).to_string(),
            ])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Mode `k` with `d_k <= distance < d_{k-1}`.
pub fn select_mode(distance: f64, table: &AcmTable) -> Result<&AcmMode, AcmError> {
    if distance >= table.d_max {
        return Err(AcmError::OutOfRange { distance, d_max: table.d_max });
    }
    if distance < table.d_min() {
        return Err(AcmError::BelowMinimumSeparation { distance, d_min: table.d_min() });
    }
    let k = table.thresholds.iter().position(|&d| d <= distance).expect("distance at or above the last threshold");
    Ok(&table.modes[k])
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeRecord {
    index: usize,
    modulation: String,
    modulation_order: u32,
    code_rate: f64,
    spectral_efficiency: f64,
    threshold_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDocument {
    d_max_m: f64,
    mode: Vec<ModeRecord>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeSpec {
    modulation_order: u32,
    code_rate: f64,
    spectral_efficiency: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModesDocument {
    mode: Vec<ModeSpec>,
}

/// Reads `[[mode]]` entries; missing spectral efficiencies come from the OFDM formula.
pub fn read_modes<R: Read>(mut reader: R, n: usize, n_cp: usize) -> Result<Vec<AcmMode>, AcmError> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| AcmError::Parse(e.to_string()))?;
    let doc: ModesDocument = toml::from_str(&text).map_err(|e| AcmError::Parse(e.to_string()))?;
    doc.mode
        .into_iter()
        .enumerate()
        .map(|(i, spec)| {
            let se = match spec.spectral_efficiency {
                Some(se) => se,
                None => spectral_efficiency(spec.modulation_order, spec.code_rate, n, n_cp)?,
            };
            Ok(AcmMode { index: i + 1, modulation_order: spec.modulation_order, code_rate: spec.code_rate, spectral_efficiency: se })
        })
        .collect()
}
