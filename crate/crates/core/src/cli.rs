//! Command-line front end.
//!
//! A scenario is a flat TOML file whose keys are the [`SystemConfig`] field
//! names plus a few run controls. Unknown keys are rejected and missing ones
//! take the default scenario values. Distances given on the command line are
//! in kilometers.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::acm::{self, design_for_scenario, mode_data_rates, reference_modes, AcmError, AcmTable, DesignSettings};
use crate::channel::{path_loss_db, ChannelError, SystemConfig};
use crate::estimation::OmegaForm;
use crate::montecarlo::{self, ccdf, ccdf_grid, mean_and_stderr, run_point, run_sweep, MonteCarloError, SweepAxis, SweepResult, SweepSettings};
use crate::plot::{Chart, Series};
use crate::sinr::{AnalysisOptions, PhaseChoice, RateModel, SinrError, SinrMode};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Acm(#[from] AcmError),
    #[error(transparent)]
    MonteCarlo(#[from] MonteCarloError),
    #[error(transparent)]
    Sinr(#[from] SinrError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Config { .. } => 2,
            Self::Acm(AcmError::OutOfRange { .. }) => 3,
            Self::Acm(AcmError::BelowMinimumSeparation { .. }) => 4,
            Self::Acm(AcmError::EmptyTable) => 5,
            Self::MonteCarlo(MonteCarloError::InvalidAxis(_)) => 2,
            _ => 1,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Theoretical,
    Approximate,
}

impl From<ModeArg> for SinrMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Theoretical => SinrMode::Theoretical,
            ModeArg::Approximate => SinrMode::Approximate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Svg,
    Both,
}

impl OutputFormat {
    fn csv(self) -> bool {
        self != Self::Svg
    }

    fn svg(self) -> bool {
        self != Self::Csv
    }
}

#[derive(Debug, Parser)]
#[command(name = "aero-acm", version, about = "Achievable rate, Monte-Carlo validation and distance-based ACM design for large-array air-to-air links")]
pub struct Cli {
    /// Scenario TOML file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte-Carlo trials per point; overrides the scenario.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Output directory; overrides the scenario.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "theoretical")]
    pub mode: ModeArg,
    #[arg(long, global = true, value_enum, default_value = "both")]
    pub format: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Link budget, closed-form SINR terms and rate at the scenario distance.
    Analyze,
    /// Designs the distance thresholds of an ACM mode table.
    DesignAcm {
        /// TOML file with `[[mode]]` entries; the built-in seven modes otherwise.
        #[arg(long)]
        modes: Option<PathBuf>,
        /// Back-off subtracted from the rate curve, bit/s/Hz.
        #[arg(long, default_value_t = 0.0)]
        margin: f64,
    },
    /// Sweeps one parameter: closed form, approximation and simulation.
    Sweep {
        /// One of A, d_ab, N_t, N_r, rho, K_Rice.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; d_ab in km.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Picks the ACM mode for a link distance.
    Select {
        /// Table written by design-acm; the built-in seven-mode table otherwise.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Link distance in km.
        #[arg(long)]
        distance: f64,
    },
    /// Monte-Carlo simulation at the scenario point.
    Simulate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseSetting {
    Radians(f64),
    /// `"random"` or `"none"`.
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunControls {
    pub trials: usize,
    pub seed: u64,
    /// Threshold design grid spacing in km.
    pub grid: f64,
    pub output_dir: Option<PathBuf>,
    pub correlation_phase: Option<PhaseSetting>,
    /// LOS scenes the closed form is averaged over.
    pub los_draws: usize,
    /// `"unscaled"` or `"scaled"`.
    pub omega_form: String,
}

impl Default for RunControls {
    fn default() -> Self {
        Self {
            trials: 2000,
            seed: 1,
            grid: 1.0,
            output_dir: None,
            correlation_phase: None,
            los_draws: AnalysisOptions::default().los_draws,
            omega_form: "unscaled".into(),
        }
    }
}

const RUN_KEYS: [&str; 7] = ["trials", "seed", "grid", "output_dir", "correlation_phase", "los_draws", "omega_form"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub config: SystemConfig,
    pub run: RunControls,
}

fn config_keys() -> BTreeSet<String> {
    let table = toml::Table::try_from(SystemConfig::default()).expect("config serializes");
    table.keys().cloned().collect()
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config { key: "<document>".into(), reason: e.to_string() })?;
        let known = config_keys();
        let mut physics = toml::Table::new();
        let mut run = toml::Table::new();
        for (key, value) in table {
            if RUN_KEYS.contains(&key.as_str()) {
                run.insert(key, value);
            } else if known.contains(&key) {
                physics.insert(key, value);
            } else {
                return Err(CliError::Config { key, reason: "unknown key".into() });
            }
        }
        let single_key = |t: &toml::Table| if t.len() == 1 { t.keys().next().cloned().unwrap_or_default() } else { "<config>".into() };
        let config: SystemConfig = physics.clone().try_into().map_err(|e: toml::de::Error| CliError::Config { key: single_key(&physics), reason: e.message().to_string() })?;
        let run: RunControls = run.clone().try_into().map_err(|e: toml::de::Error| CliError::Config { key: single_key(&run), reason: e.message().to_string() })?;
        config.validate().map_err(|e| match e {
            ChannelError::InvalidConfig { key, reason } => CliError::Config { key: key.to_string(), reason },
            other => CliError::Config { key: "<config>".into(), reason: other.to_string() },
        })?;
        let scenario = Self { config, run };
        scenario.phase()?;
        scenario.omega_form()?;
        if !(scenario.run.grid > 0.0) {
            return Err(CliError::Config { key: "grid".into(), reason: "must be positive".into() });
        }
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&fs::read_to_string(path).map_err(io_error(path))?)
    }

    pub fn phase(&self) -> Result<PhaseChoice, CliError> {
        match &self.run.correlation_phase {
            None => Ok(PhaseChoice::Random),
            Some(PhaseSetting::Radians(theta)) => Ok(PhaseChoice::Fixed(*theta)),
            Some(PhaseSetting::Named(name)) => match name.as_str() {
                "random" => Ok(PhaseChoice::Random),
                "none" => Ok(PhaseChoice::None),
                _ => Err(CliError::Config { key: "correlation_phase".into(), reason: format!("expected radians, \"random\" or \"none\", got {name:?}") }),
            },
        }
    }

    pub fn omega_form(&self) -> Result<OmegaForm, CliError> {
        match self.run.omega_form.as_str() {
            "unscaled" => Ok(OmegaForm::Unscaled),
            "scaled" => Ok(OmegaForm::Scaled),
            other => Err(CliError::Config { key: "omega_form".into(), reason: format!("expected \"unscaled\" or \"scaled\", got {other:?}") }),
        }
    }

    pub fn analysis_options(&self) -> Result<AnalysisOptions, CliError> {
        Ok(AnalysisOptions {
            los_draws: self.run.los_draws.max(1),
            seed: self.run.seed,
            form: self.omega_form()?,
            phase: self.phase()?,
            ..AnalysisOptions::default()
        })
    }

    pub fn sweep_settings(&self) -> Result<SweepSettings, CliError> {
        let mut settings = SweepSettings::new(self.run.trials, self.run.seed);
        settings.analysis = self.analysis_options()?;
        settings.trial.phase = settings.analysis.phase;
        Ok(settings)
    }

    /// Short digest of everything that affects results.
    pub fn digest(&self) -> String {
        let mut run = self.run.clone();
        run.output_dir = None;
        if run.correlation_phase == Some(PhaseSetting::Named("random".into())) {
            run.correlation_phase = None;
        }
        let text = format!("{}\n{}", toml::to_string(&self.config).unwrap_or_default(), toml::to_string(&run).unwrap_or_default());
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> String {
        format!("aero-acm config sha256:{} seed {}", self.digest(), self.run.seed)
    }
}

struct Outputs {
    dir: Option<PathBuf>,
    format: OutputFormat,
}

impl Outputs {
    fn ensure(&self) -> Result<Option<&Path>, CliError> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(io_error(dir))?;
                Ok(Some(dir.as_path()))
            }
            None => Ok(None),
        }
    }

    fn write(&self, name: &str, bytes: &[u8], out: &mut dyn Write) -> Result<(), CliError> {
        if let Some(dir) = self.ensure()? {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(io_error(&path))?;
            let _ = writeln!(out, "wrote {}", path.display());
        }
        Ok(())
    }

    fn csv(&self, name: &str, bytes: &[u8], out: &mut dyn Write) -> Result<(), CliError> {
        if self.format.csv() {
            self.write(name, bytes, out)?;
        }
        Ok(())
    }

    fn svg(&self, name: &str, chart: &Chart, provenance: &str, out: &mut dyn Write) -> Result<(), CliError> {
        if self.format.svg() {
            self.write(name, chart.to_svg(provenance).as_bytes(), out)?;
        }
        Ok(())
    }
}

fn stdout_error(e: std::io::Error) -> CliError {
    CliError::Io { path: PathBuf::from("<stdout>"), source: e }
}

/// Parses `args` (program name first) and runs the command, printing to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    execute(&cli, out)
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut scenario = match &cli.config {
        Some(path) => Scenario::load(path)?,
        None => Scenario::default(),
    };
    if let Some(seed) = cli.seed {
        scenario.run.seed = seed;
    }
    if let Some(trials) = cli.trials {
        scenario.run.trials = trials;
    }
    let default_dir = match cli.command {
        Command::Analyze | Command::Select { .. } => None,
        _ => Some(PathBuf::from("aero-acm-out")),
    };
    let outputs = Outputs { dir: cli.out.clone().or_else(|| scenario.run.output_dir.clone()).or(default_dir), format: cli.format };
    let mode = SinrMode::from(cli.mode);
    // the pool needs a Send closure, so text is buffered and copied out afterwards
    let (result, text) = montecarlo::with_worker_pool(|| {
        let mut buffer = Vec::new();
        let result = match &cli.command {
            Command::Analyze => analyze(&scenario, mode, &outputs, &mut buffer),
            Command::DesignAcm { modes, margin } => design(&scenario, modes.as_deref(), *margin, mode, &outputs, &mut buffer),
            Command::Sweep { axis, values } => sweep(&scenario, axis, values, &outputs, &mut buffer),
            Command::Select { table, distance } => select(&scenario, table.as_deref(), *distance, &mut buffer),
            Command::Simulate => simulate(&scenario, &outputs, &mut buffer),
        };
        (result, buffer)
    })?;
    out.write_all(&text).map_err(stdout_error)?;
    result
}

fn analyze(scenario: &Scenario, mode: SinrMode, outputs: &Outputs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = &scenario.config;
    let model = RateModel::new(config, scenario.analysis_options()?)?;
    let budget = model.budget_at(config.link_distance)?;
    let theoretical = model.summary_at(config.link_distance, SinrMode::Theoretical)?;
    let approximate = model.summary_at(config.link_distance, SinrMode::Approximate)?;
    let total = |rate: f64| rate * config.bandwidth * config.num_dra as f64 / 1e6;
    let shown = if mode == SinrMode::Theoretical { &theoretical } else { &approximate };

    let w = &mut *out;
    writeln!(w, "scenario {}", scenario.provenance()).map_err(stdout_error)?;
    writeln!(w, "link budget at {:.3} km", config.link_distance / 1e3).map_err(stdout_error)?;
    writeln!(w, "  path loss             {:.4} dB", path_loss_db(config.carrier_freq, config.link_distance)?).map_err(stdout_error)?;
    writeln!(w, "  received power        {:.6e} W", budget.p_desired).map_err(stdout_error)?;
    writeln!(w, "  mean interferer power {:.6e} W", budget.p_bar).map_err(stdout_error)?;
    writeln!(w, "  noise per subcarrier  {:.6e} W", budget.noise_var).map_err(stdout_error)?;
    writeln!(w, "rate per DRA").map_err(stdout_error)?;
    writeln!(w, "  theoretical {:.4} bit/s/Hz, total {:.3} Mbit/s", theoretical.rate_per_dra, total(theoretical.rate_per_dra)).map_err(stdout_error)?;
    writeln!(w, "  approximate {:.4} bit/s/Hz, total {:.3} Mbit/s", approximate.rate_per_dra, total(approximate.rate_per_dra)).map_err(stdout_error)?;
    writeln!(w, "terms per DRA ({}), W", if mode == SinrMode::Theoretical { "theoretical" } else { "approximate" }).map_err(stdout_error)?;
    writeln!(w, "  {:>3} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10} {:>8}", "dra", "desired", "est_error", "inter_ant", "interferer", "noise", "sinr", "rate").map_err(stdout_error)?;

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["dra", "desired_w", "est_error_w", "inter_antenna_w", "interferer_w", "noise_w", "impairment_w", "sinr", "rate_bps_hz"]).map_err(AcmError::from)?;
    for (n, b) in shown.per_dra.iter().enumerate() {
        writeln!(
            w,
            "  {:>3} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.4} {:>8.4}",
            n + 1,
            b.desired,
            b.est_error_term,
            b.inter_antenna_term,
            b.interferer_term,
            b.noise,
            b.sinr,
            b.rate_per_dra
        )
        .map_err(stdout_error)?;
        let impairment = b.est_error_term + b.inter_antenna_term + b.interferer_term + b.noise;
        csv.write_record(
            [n as f64 + 1.0, b.desired, b.est_error_term, b.inter_antenna_term, b.interferer_term, b.noise, impairment, b.sinr, b.rate_per_dra]
                .iter()
                .enumerate()
                .map(|(i, v)| if i == 0 { format!("{}", *v as usize) } else { format!("{v:?}") }),
        )
        .map_err(AcmError::from)?;
    }
    let bytes = csv.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    outputs.csv("analysis.csv", &bytes, out)
}

fn design(scenario: &Scenario, modes_file: Option<&Path>, margin: f64, mode: SinrMode, outputs: &Outputs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = &scenario.config;
    let modes = match modes_file {
        Some(path) => acm::read_modes(fs::File::open(path).map_err(io_error(path))?, config.num_subcarriers, config.cp_length)?,
        None => reference_modes(),
    };
    let model = RateModel::new(config, scenario.analysis_options()?)?;
    let settings = DesignSettings { margin, ..DesignSettings::from_config(config) };
    let (table, curve) = design_for_scenario(&model, &modes, &settings, mode, scenario.run.grid * 1e3)?;

    writeln!(out, "scenario {}", scenario.provenance()).map_err(stdout_error)?;
    writeln!(out, "{:>4} {:>10} {:>9} {:>7} {:>12} {:>14} {:>12}", "mode", "modulation", "code_rate", "se", "from_km", "per_dra_Mbps", "total_Mbps").map_err(stdout_error)?;
    for (m, &d) in table.modes.iter().zip(&table.thresholds) {
        let (per, total) = mode_data_rates(m, config.bandwidth, config.num_dra);
        writeln!(out, "{:>4} {:>10} {:>9} {:>7.3} {:>12.2} {:>14.3} {:>12.3}", m.index, m.modulation(), m.code_rate, m.spectral_efficiency, d / 1e3, per / 1e6, total / 1e6)
            .map_err(stdout_error)?;
    }
    writeln!(out, "range ends at {:.2} km", table.d_max / 1e3).map_err(stdout_error)?;
    for dropped in &table.dropped {
        writeln!(out, "warning: dropped {} rate {} (SE {}): {:?}", dropped.mode.modulation(), dropped.mode.code_rate, dropped.mode.spectral_efficiency, dropped.reason)
            .map_err(stdout_error)?;
    }

    outputs.write("acm_table.toml", table.to_toml()?.as_bytes(), out)?;
    let mut table_csv = Vec::new();
    table.write_csv(&mut table_csv, config.bandwidth, config.num_dra)?;
    outputs.csv("acm_table.csv", &table_csv, out)?;
    let mut curve_csv = csv::Writer::from_writer(Vec::new());
    curve_csv.write_record(["distance_km", "rate_bps_hz"]).map_err(AcmError::from)?;
    for (d, r) in curve.distances.iter().zip(&curve.rates) {
        curve_csv.write_record([format!("{:?}", d / 1e3), format!("{r:?}")]).map_err(AcmError::from)?;
    }
    outputs.csv("rate_curve.csv", &curve_csv.into_inner().map_err(|e| CliError::Usage(e.to_string()))?, out)?;

    let curve_points: Vec<(f64, f64)> = curve.distances.iter().zip(&curve.rates).map(|(d, r)| (d / 1e3, *r)).collect();
    let mut steps = Vec::new();
    for k in (0..table.modes.len()).rev() {
        let (lo, _) = table.interval(k);
        steps.push((lo / 1e3, table.modes[k].spectral_efficiency));
    }
    steps.push((table.d_max / 1e3, table.modes[0].spectral_efficiency));
    let chart = Chart::new("Rate per DRA and ACM modes", "distance (km)", "bit/s/Hz")
        .with(Series::line("achievable rate", curve_points))
        .with(Series::line("mode SE", steps).stepped().dashed());
    outputs.svg("acm_design.svg", &chart, &scenario.provenance(), out)
}

fn sweep(scenario: &Scenario, axis: &str, values: &[f64], outputs: &Outputs, out: &mut dyn Write) -> Result<(), CliError> {
    let axis: SweepAxis = axis.parse()?;
    if values.is_empty() {
        return Err(CliError::Usage("--values needs at least one value".into()));
    }
    let internal: Vec<f64> = values.iter().map(|v| if axis == SweepAxis::LinkDistance { v * 1e3 } else { *v }).collect();
    let result = run_sweep(&scenario.config, axis, &internal, &scenario.sweep_settings()?)?;
    // report in command-line units
    let result = SweepResult { axis_values: values.to_vec(), ..result };
    let label = axis.label();
    let unit = if axis == SweepAxis::LinkDistance { " (km)" } else { "" };

    writeln!(out, "scenario {}", scenario.provenance()).map_err(stdout_error)?;
    writeln!(out, "{:>10} {:>11} {:>11} {:>10} {:>8}", label, "theoretical", "approximate", "simulated", "stderr").map_err(stdout_error)?;
    for i in 0..values.len() {
        writeln!(out, "{:>10} {:>11.4} {:>11.4} {:>10.4} {:>8.4}", values[i], result.theoretical[i], result.approximate[i], result.simulated_mean[i], result.stderr[i])
            .map_err(stdout_error)?;
    }

    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    outputs.csv(&format!("sweep_{label}.csv"), &csv, out)?;
    let mut samples = Vec::new();
    result.write_samples_csv(&mut samples)?;
    outputs.csv(&format!("sweep_{label}_samples.csv"), &samples, out)?;

    let provenance = scenario.provenance();
    let series = |name: &str, ys: &[f64]| Series::line(name, values.iter().copied().zip(ys.iter().copied()).collect());
    let chart = Chart::new(format!("Rate per DRA versus {label}"), format!("{label}{unit}"), "bit/s/Hz")
        .with(series("theoretical", &result.theoretical))
        .with(series("approximate", &result.approximate).dashed())
        .with(series("simulation", &result.simulated_mean));
    outputs.svg(&format!("sweep_{label}.svg"), &chart, &provenance, out)?;

    let all: Vec<f64> = result.samples.iter().flatten().copied().collect();
    if !all.is_empty() {
        let grid = ccdf_grid(&all, 101);
        let mut ccdf_chart = Chart::new(format!("CCDF of simulated rate, {label}"), "rate per DRA (bit/s/Hz)", "P(rate > x)");
        for (value, samples) in values.iter().zip(&result.samples) {
            let probabilities = ccdf(samples, &grid)?;
            let mut bytes = Vec::new();
            montecarlo::write_ccdf_csv(&mut bytes, &grid, &probabilities)?;
            outputs.csv(&format!("ccdf_{label}_{value}.csv"), &bytes, out)?;
            ccdf_chart = ccdf_chart.with(Series::line(format!("{label} = {value}"), grid.iter().copied().zip(probabilities).collect()));
        }
        outputs.svg(&format!("ccdf_{label}.svg"), &ccdf_chart, &provenance, out)?;
    }
    Ok(())
}

fn select(scenario: &Scenario, table_file: Option<&Path>, distance_km: f64, out: &mut dyn Write) -> Result<(), CliError> {
    let table = match table_file {
        Some(path) => AcmTable::from_toml(&fs::read_to_string(path).map_err(io_error(path))?)?,
        None => AcmTable::reference(),
    };
    let mode = table.select_mode(distance_km * 1e3)?;
    let (per, total) = mode_data_rates(mode, scenario.config.bandwidth, scenario.config.num_dra);
    writeln!(
        out,
        "mode {} {} rate {} SE {} at {distance_km} km: {:.3} Mbit/s per DRA, {:.3} Mbit/s total",
        mode.index,
        mode.modulation(),
        mode.code_rate,
        mode.spectral_efficiency,
        per / 1e6,
        total / 1e6
    )
    .map_err(stdout_error)
}

fn simulate(scenario: &Scenario, outputs: &Outputs, out: &mut dyn Write) -> Result<(), CliError> {
    let point = run_point(&scenario.config, &scenario.sweep_settings()?)?;
    let (mean, err) = mean_and_stderr(&point.samples);
    writeln!(out, "scenario {}", scenario.provenance()).map_err(stdout_error)?;
    writeln!(out, "theoretical {:.4}  approximate {:.4}  simulated {mean:.4} +- {err:.4} bit/s/Hz per DRA ({} trials)", point.theoretical, point.approximate, point.samples.len())
        .map_err(stdout_error)?;
    if point.samples.is_empty() {
        return Ok(());
    }
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["trial", "rate"]).map_err(AcmError::from)?;
    for (t, r) in point.samples.iter().enumerate() {
        csv.write_record([t.to_string(), format!("{r:?}")]).map_err(AcmError::from)?;
    }
    outputs.csv("simulate_samples.csv", &csv.into_inner().map_err(|e| CliError::Usage(e.to_string()))?, out)?;
    let grid = ccdf_grid(&point.samples, 101);
    let probabilities = ccdf(&point.samples, &grid)?;
    let mut bytes = Vec::new();
    montecarlo::write_ccdf_csv(&mut bytes, &grid, &probabilities)?;
    outputs.csv("simulate_ccdf.csv", &bytes, out)?;
    let chart = Chart::new("CCDF of simulated rate", "rate per DRA (bit/s/Hz)", "P(rate > x)").with(Series::line("simulation", grid.into_iter().zip(probabilities).collect()));
    outputs.svg("simulate_ccdf.svg", &chart, &scenario.provenance(), out)
}

/// Entry point for the binary.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> ExitCode {
    // clap prints help, version and usage errors itself and exits
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    let mut stdout = std::io::stdout().lock();
    match execute(&cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_defaults_and_overrides() {
        let s = Scenario::parse("num_interferers = 8\nlink_distance = 70e3\ntrials = 10\n").unwrap();
        assert_eq!(s.config.num_interferers, 8);
        assert_eq!(s.config.link_distance, 70e3);
        assert_eq!(s.config.num_dta, 32);
        assert_eq!(s.run.trials, 10);
        assert_eq!(Scenario::parse("").unwrap(), Scenario::default());
    }

    #[test]
    fn scenario_rejects_unknown_and_invalid_keys() {
        match Scenario::parse("num_dtas = 32\n") {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "num_dtas"),
            other => panic!("{other:?}"),
        }
        match Scenario::parse("correlation_factor = 1.5\n") {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "correlation_factor"),
            other => panic!("{other:?}"),
        }
        match Scenario::parse("num_dra = \"four\"\n") {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "num_dra"),
            other => panic!("{other:?}"),
        }
        assert!(Scenario::parse("correlation_phase = \"sideways\"\n").is_err());
        assert!(Scenario::parse("omega_form = \"other\"\n").is_err());
    }

    #[test]
    fn phase_settings() {
        assert_eq!(Scenario::parse("correlation_phase = 0.5\n").unwrap().phase().unwrap(), PhaseChoice::Fixed(0.5));
        assert_eq!(Scenario::parse("correlation_phase = \"none\"\n").unwrap().phase().unwrap(), PhaseChoice::None);
        assert_eq!(Scenario::default().phase().unwrap(), PhaseChoice::Random);
    }

    #[test]
    fn digest_tracks_physics_but_not_output_dir() {
        let a = Scenario::default();
        let b = Scenario::parse("output_dir = \"elsewhere\"\n").unwrap();
        let c = Scenario::parse("num_dta = 64\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn select_reference_table() {
        let mut out = Vec::new();
        run(["aero-acm", "select", "--distance", "30"], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("mode 6 16QAM"), "{text}");
        assert!(text.contains("65.928 Mbit/s total"));
        assert_eq!(run(["aero-acm", "select", "--distance", "750"], &mut Vec::new()).unwrap_err().exit_code(), 3);
        assert_eq!(run(["aero-acm", "select", "--distance", "3"], &mut Vec::new()).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn bad_axis_is_a_usage_error() {
        let err = run(["aero-acm", "sweep", "--axis", "gamma", "--values", "1", "--trials", "0"], &mut Vec::new()).unwrap_err();
        assert!(matches!(err, CliError::MonteCarlo(MonteCarloError::InvalidAxis(_))));
        assert_eq!(err.exit_code(), 2);
    }
}
