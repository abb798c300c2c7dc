//! Command-line front end: synthesize, validate, optimize, sweep and gap.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, DataError, FilterLimits, FilterOutcome, SyntheticYearSpec};
use crate::physics::{self, CalibrationTargets, OperatingRecord, PhysicsError, PlantParameters};
use crate::report::{self, EnergySummary, FileDigest, Manifest, OutputDir, ReportError, Table};
use crate::strategies::{self, StrategyConfig, StrategyError, StrategyLabel, StrategyTrajectory};
use crate::validate::{self, Thresholds, ValidateError};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const OUTPUT: u8 = 1;
    pub const INPUT: u8 = 3;
    pub const CONFIG: u8 = 4;
    pub const SOLVER: u8 = 5;
    pub const THRESHOLD: u8 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("threshold check failed: {0}")]
    Threshold(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => exit::INPUT,
            CliError::Config(_) => exit::CONFIG,
            CliError::Solver(_) => exit::SOLVER,
            CliError::Threshold(_) => exit::THRESHOLD,
            CliError::Output(_) => exit::OUTPUT,
        }
    }
}

impl From<PhysicsError> for CliError {
    fn from(e: PhysicsError) -> Self {
        match e {
            PhysicsError::InvalidParameter { .. } => CliError::Config(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<StrategyError> for CliError {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::InvalidConfig(_) => CliError::Config(e.to_string()),
            StrategyError::Physics(p) => p.into(),
            StrategyError::Solver(_) | StrategyError::DegenerateSavings { .. } => CliError::Solver(e.to_string()),
            StrategyError::EmptyRecords | StrategyError::InfeasibleSetpoint { .. } => CliError::Input(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Strategy(s) => s.into(),
            ReportError::Cadence { .. } | ReportError::Misaligned => CliError::Input(e.to_string()),
            ReportError::NoExponents => CliError::Config(e.to_string()),
            ReportError::Io { .. } | ReportError::Csv(_) | ReportError::Json(_) => CliError::Output(e.to_string()),
        }
    }
}

impl From<ValidateError> for CliError {
    fn from(e: ValidateError) -> Self {
        match e {
            ValidateError::Physics(p) => p.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "coolplant", version, about = "Cooling-plant twin and setpoint optimizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic operating year as CSV.
    Synth(SynthArgs),
    /// Compare predicted and measured return temperatures.
    Validate(ModelArgs),
    /// Run the baseline and the selected strategies.
    Optimize(OptimizeArgs),
    /// Rerun every strategy for several pump exponents.
    Sweep(SweepArgs),
    /// Gap and recovery ratio from energy summaries or raw totals.
    Gap(GapArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Insert this many rows that break a filter rule.
    #[arg(long, default_value_t = 0)]
    pub plant_violations: usize,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Telemetry CSV. Without it a synthetic year is generated in memory.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed of the in-memory synthetic year.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "c-p")]
    pub c_p: Option<f64>,
    #[arg(long)]
    pub pump_exponent: Option<f64>,
    #[arg(long)]
    pub t_limit: Option<f64>,
    #[arg(long)]
    pub ramp_m: Option<f64>,
    #[arg(long)]
    pub ramp_t: Option<f64>,
    /// Use the configured nominals instead of fitting them to the input.
    #[arg(long)]
    pub no_calibrate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum StrategyChoice {
    A,
    B,
    C,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "a,b,c")]
    pub strategies: Vec<StrategyChoice>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Pump exponents; an empty list is rejected.
    #[arg(long, value_delimiter = ',', default_value = "2.0,2.5,3.0")]
    pub sweep: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    /// Energy summary JSON holding the baseline and strategy B.
    pub summary: Option<PathBuf>,
    /// Energy summary JSON holding strategy C; defaults to the first file.
    pub other: Option<PathBuf>,
    /// Baseline, B and C totals in kWh instead of summary files.
    #[arg(long, value_delimiter = ',', conflicts_with = "summary")]
    pub totals: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Optional TOML configuration. Every section may be partial.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SyntheticYearSpec,
    /// Overrides of individual plant parameters.
    pub plant: toml::Table,
    pub strategy: StrategyConfig,
    pub filter: FilterLimits,
    pub thresholds: Thresholds,
    pub calibration: CalibrationTargets,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Default parameters with the `[plant]` overrides applied.
    pub fn plant_parameters(&self) -> Result<PlantParameters<f64>, CliError> {
        let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("[plant]: {e}"));
        let toml::Value::Table(mut table) = toml::Value::try_from(PlantParameters::<f64>::default()).map_err(|e| bad(&e))? else {
            return Err(CliError::Config("[plant]: parameters do not serialize to a table".into()));
        };
        for (key, value) in &self.plant {
            if !table.contains_key(key) {
                return Err(CliError::Config(format!("[plant]: unknown parameter `{key}`")));
            }
            table.insert(key.clone(), value.clone());
        }
        toml::Value::Table(table).try_into().map_err(|e| bad(&e))
    }
}

/// Fully resolved inputs of a validate, optimize or sweep run.
struct Model {
    config: RunConfig,
    params: PlantParameters<f64>,
    cfg: StrategyConfig,
    records: Vec<OperatingRecord>,
    filtered: FilterOutcome,
    cadence_minutes: i64,
    seed: Option<u64>,
    inputs: Vec<FileDigest>,
}

fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| input_err(path, e))?;
    Ok(FileDigest { path: path.display().to_string(), sha256: report::sha256_hex(&bytes) })
}

fn load_model(args: &ModelArgs) -> Result<Model, CliError> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    let mut inputs = Vec::new();
    if let Some(path) = &args.config {
        inputs.push(digest_file(path)?);
    }

    let mut params = config.plant_parameters()?;
    if let Some(c_p) = args.c_p {
        params.c_p = c_p;
    }
    if let Some(n) = args.pump_exponent {
        params.pump_exponent = n;
    }
    params.validate()?;

    let mut cfg = config.strategy;
    if let Some(t) = args.t_limit {
        cfg.t_limit = t;
    }
    if let Some(m) = args.ramp_m {
        cfg.ramp_m_max = m;
    }
    if let Some(t) = args.ramp_t {
        cfg.ramp_t_max = t;
    }
    cfg.validate()?;

    let (raw, seed) = match &args.input {
        Some(path) => {
            inputs.push(digest_file(path)?);
            (data::read_csv_path(path).map_err(|e| input_err(path, e))?, None)
        }
        None => {
            if let Some(seed) = args.seed {
                config.synth.seed = seed;
            }
            let year = data::synthesize_year(&config.synth).map_err(|e| CliError::Config(e.to_string()))?;
            (year.iter().map(data::RawRecord::from).collect(), Some(config.synth.seed))
        }
    };
    let filtered = data::filter_records(&raw, &config.filter);
    let records = filtered.clean.clone();
    if records.is_empty() {
        return Err(CliError::Input(format!("no usable records ({} rejected)", filtered.rejections.len())));
    }
    if !args.no_calibrate {
        params = physics::calibrate_nominals(&params, &records, config.calibration)?;
    }
    let cadence_minutes = report::infer_cadence_minutes(&records).unwrap_or(report::DEFAULT_CADENCE_MINUTES);
    Ok(Model { config, params, cfg, records, filtered, cadence_minutes, seed, inputs })
}

fn command_line() -> String {
    std::iter::once(env!("CARGO_PKG_NAME").to_string()).chain(std::env::args().skip(1)).collect::<Vec<_>>().join(" ")
}

fn manifest(command: &str, seed: Option<u64>, config: serde_json::Value, inputs: Vec<FileDigest>) -> Manifest {
    Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed,
        config,
        inputs,
        outputs: Vec::new(),
    }
}

fn model_echo(model: &Model, extra: serde_json::Value) -> Result<serde_json::Value, CliError> {
    let mut v = serde_json::json!({
        "plant": model.params,
        "strategy": model.cfg,
        "filter": model.config.filter,
        "thresholds": model.config.thresholds,
        "calibration": model.config.calibration,
        "cadence_minutes": model.cadence_minutes,
    });
    if model.seed.is_some() {
        v["synth"] = serde_json::to_value(&model.config.synth).map_err(|e| CliError::Output(e.to_string()))?;
    }
    if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    Ok(v)
}

fn write_rejections(out: &mut OutputDir, model: &Model) -> Result<(), CliError> {
    out.write("rejections.log", model.filtered.rejection_log().as_bytes())?;
    Ok(())
}

fn f(v: f64, digits: usize) -> String {
    format!("{v:.digits$}")
}

pub fn cmd_synth(args: &SynthArgs) -> Result<PathBuf, CliError> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    let mut inputs = Vec::new();
    if let Some(path) = &args.config {
        inputs.push(digest_file(path)?);
    }
    if let Some(seed) = args.seed {
        config.synth.seed = seed;
    }
    let spec = &config.synth;
    let year = data::synthesize_year(spec).map_err(|e| match e {
        DataError::InvalidSpec { .. } => CliError::Config(e.to_string()),
        other => CliError::Output(other.to_string()),
    })?;
    let mut bytes = Vec::new();
    if args.plant_violations > 0 {
        let raw = data::plant_violations(&year, args.plant_violations, spec.seed);
        data::write_raw_csv(&mut bytes, &raw)
    } else {
        data::write_csv(&mut bytes, &year)
    }
    .map_err(|e| CliError::Output(e.to_string()))?;

    let mut out = OutputDir::new(&args.out);
    let path = out.write("year.csv", &bytes)?;
    let echo = serde_json::json!({ "synth": spec, "plant_violations": args.plant_violations });
    out.finish(manifest(&command_line(), Some(spec.seed), echo, inputs))?;
    println!("wrote {} rows to {}", year.len() + args.plant_violations, path.display());
    Ok(path)
}

pub fn validation_table(report: &validate::ValidationReport) -> Table {
    let mut t = Table::new(&["subloop", "cv_rmse_pct", "nmbe_pct", "rmse_k", "r_squared", "pass"]);
    for (i, m) in report.subloops.iter().enumerate() {
        t.push(vec![
            (i + 1).to_string(),
            f(m.cv_rmse, 3),
            f(m.nmbe, 3),
            f(m.rmse, 4),
            f(m.r_squared, 4),
            report.subloop_passes(i).to_string(),
        ]);
    }
    t
}

pub fn cmd_validate(args: &ModelArgs) -> Result<validate::ValidationReport, CliError> {
    let model = load_model(args)?;
    let report = validate::validate_twin(&model.params, &model.records, 1, model.config.thresholds)?;
    let table = validation_table(&report);

    let mut out = OutputDir::new(&args.out);
    write_rejections(&mut out, &model)?;
    out.write_table("validation", &table)?;
    out.write_json("validation.json", &report)?;
    let echo = model_echo(&model, serde_json::json!({}))?;
    out.finish(manifest(&command_line(), model.seed, echo, model.inputs.clone()))?;

    print!("{}", table.to_text());
    if !report.passes() {
        return Err(CliError::Threshold(format!(
            "CV-RMSE <= {}% and |NMBE| <= {}% not met on every subloop",
            report.thresholds.cv_rmse_max, report.thresholds.nmbe_abs_max
        )));
    }
    Ok(report)
}

pub fn overpumping_table(summary: &strategies::OverpumpingSummary) -> Table {
    let mut t = Table::new(&["statistic", "value"]);
    let fmt = |v: Option<f64>| v.map(|x| f(x, 4)).unwrap_or_else(|| "n/a".into());
    t.push(vec!["median".into(), fmt(summary.median)]);
    for (q, label) in [0.05, 0.25, 0.75, 0.95].iter().zip(0..) {
        t.push(vec![format!("q{:02}", (q * 100.0) as u32), fmt(summary.quantiles.map(|v| v[label]))]);
    }
    t.push(vec!["records".into(), summary.ratios.len().to_string()]);
    t.push(vec!["no_flow_needed".into(), summary.infinite_count.to_string()]);
    t
}

pub fn cmd_optimize(args: &OptimizeArgs) -> Result<EnergySummary, CliError> {
    let model = load_model(&args.model)?;
    let (params, cfg, records) = (&model.params, &model.cfg, &model.records);
    let mut chosen = args.strategies.clone();
    chosen.sort_by_key(|c| *c as u8);
    chosen.dedup();
    if chosen.is_empty() {
        return Err(CliError::Config("select at least one strategy".into()));
    }

    let baseline = strategies::baseline(params, cfg, records)?;
    let mut runs: Vec<StrategyTrajectory> = Vec::new();
    for choice in &chosen {
        runs.push(match choice {
            StrategyChoice::A => strategies::strategy_a(params, cfg, records)?,
            StrategyChoice::B => strategies::strategy_b(params, cfg, records)?,
            StrategyChoice::C => strategies::strategy_c(params, cfg, records, report::initial_setpoint(cfg, records))?,
        });
    }
    let refs: Vec<&StrategyTrajectory> = runs.iter().collect();
    let summary = report::energy_summary(&baseline, &refs, model.cadence_minutes)?;
    let rollup = report::seasonal_monthly_rollup(&baseline, &refs, model.cadence_minutes)?;
    let overpumping = strategies::overpumping_ratio(params, cfg, records)?;
    let with_base: Vec<&StrategyTrajectory> = std::iter::once(&baseline).chain(refs.iter().copied()).collect();

    let mut out = OutputDir::new(&args.model.out);
    write_rejections(&mut out, &model)?;
    out.write_json("parameters.json", params)?;
    let energy = report::energy_table(&summary);
    out.write_table("energy_summary", &energy)?;
    out.write_json("energy_summary.json", &summary)?;
    out.write_table("seasonal", &report::bucket_table(&rollup.seasonal))?;
    out.write_table("monthly", &report::bucket_table(&rollup.monthly))?;
    out.write_table("monthly_heatmap", &report::monthly_heatmap_table(&rollup))?;
    out.write_table("envelope", &report::envelope_table(&with_base))?;
    out.write_table("ramp_compliance", &report::ramp_table(&with_base, cfg))?;
    out.write_table("duration_curves", &report::duration_table(&with_base))?;
    out.write_table("ramp_diffs", &report::ramp_diff_table(&with_base))?;
    out.write_table("overpumping", &overpumping_table(&overpumping))?;
    for traj in &with_base {
        out.write(&format!("trajectory_{}.csv", traj.label.name()), &report::trajectory_table(traj).to_csv()?)?;
    }
    if let (Some(e_b), Some(e_c)) = (summary.total_kwh(StrategyLabel::B), summary.total_kwh(StrategyLabel::C)) {
        let base = summary.total_kwh(StrategyLabel::Baseline).expect("baseline row");
        if let Ok(gap) = strategies::gap_metrics(base, e_b, e_c) {
            out.write_json("gap.json", &gap)?;
        }
    }
    let echo = model_echo(&model, serde_json::json!({ "strategies": chosen }))?;
    out.finish(manifest(&command_line(), model.seed, echo, model.inputs.clone()))?;

    print!("{}", energy.to_text());
    Ok(summary)
}

/// Parses the `--sweep` list; empty entries are dropped.
pub fn parse_exponents(items: &[String]) -> Result<Vec<f64>, CliError> {
    items
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Config(format!("bad pump exponent `{s}`"))))
        .collect()
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<report::SensitivityTable, CliError> {
    let exponents = parse_exponents(&args.sweep)?;
    if exponents.is_empty() {
        return Err(CliError::Config("--sweep needs at least one exponent".into()));
    }
    let model = load_model(&args.model)?;
    for &n in &exponents {
        PlantParameters { pump_exponent: n, ..model.params }.validate()?;
    }
    let table = report::sensitivity_sweep(&model.params, &model.cfg, &model.records, &exponents, model.cadence_minutes)?;
    let text = report::sensitivity_table(&table);

    let mut out = OutputDir::new(&args.model.out);
    write_rejections(&mut out, &model)?;
    out.write_table("sensitivity", &text)?;
    out.write_json("sensitivity.json", &table)?;
    let echo = model_echo(&model, serde_json::json!({ "exponents": exponents }))?;
    out.finish(manifest(&command_line(), model.seed, echo, model.inputs.clone()))?;

    print!("{}", text.to_text());
    Ok(table)
}

fn read_summary(path: &Path) -> Result<EnergySummary, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| input_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| input_err(path, e))
}

fn summary_total(summary: &EnergySummary, label: StrategyLabel, path: &Path) -> Result<f64, CliError> {
    summary.total_kwh(label).ok_or_else(|| input_err(path, format!("no {} row", label.name())))
}

pub fn cmd_gap(args: &GapArgs) -> Result<strategies::GapMetrics, CliError> {
    let (base, e_b, e_c, mut inputs) = match (&args.totals, &args.summary) {
        (Some(t), _) => match t[..] {
            [base, e_b, e_c] => (base, e_b, e_c, Vec::new()),
            _ => return Err(CliError::Config("--totals takes exactly three values".into())),
        },
        (None, Some(first)) => {
            let s1 = read_summary(first)?;
            let second = args.other.as_deref().unwrap_or(first);
            let s2 = if args.other.is_some() { read_summary(second)? } else { s1.clone() };
            let base = summary_total(&s1, StrategyLabel::Baseline, first)?;
            let e_b = summary_total(&s1, StrategyLabel::B, first)?;
            let e_c = summary_total(&s2, StrategyLabel::C, second)?;
            (base, e_b, e_c, vec![digest_file(first)?])
        }
        (None, None) => return Err(CliError::Config("give a summary file or --totals".into())),
    };
    if let Some(other) = &args.other {
        inputs.push(digest_file(other)?);
    }
    let gap = strategies::gap_metrics(base, e_b, e_c).map_err(|e| CliError::Input(e.to_string()))?;
    println!("gap {:.2}%  recovery {:.2}%", gap.gap_pct, gap.recovery_pct);
    if let Some(dir) = &args.out {
        let mut out = OutputDir::new(dir);
        out.write_json("gap.json", &gap)?;
        let echo = serde_json::json!({ "baseline_kwh": base, "b_kwh": e_b, "c_kwh": e_c });
        out.finish(manifest(&command_line(), None, echo, inputs))?;
    }
    Ok(gap)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(drop),
        Command::Validate(a) => cmd_validate(a).map(drop),
        Command::Optimize(a) => cmd_optimize(a).map(drop),
        Command::Sweep(a) => cmd_sweep(a).map(drop),
        Command::Gap(a) => cmd_gap(a).map(drop),
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::from(exit::OK),
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
    fn plant_overrides_merge_onto_defaults() {
        let cfg: RunConfig = toml::from_str("[plant]\npump_exponent = 2.5\nflow_fractions = [0.25, 0.25, 0.5]\n").unwrap();
        let p = cfg.plant_parameters().unwrap();
        assert_eq!(p.pump_exponent, 2.5);
        assert_eq!(p.flow_fractions, [0.25, 0.25, 0.5]);
        assert_eq!(p.c_p, 3500.0);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let cfg: RunConfig = toml::from_str("[plant]\npump_exponnent = 2.5\n").unwrap();
        assert!(matches!(cfg.plant_parameters(), Err(CliError::Config(_))));
        assert!(toml::from_str::<RunConfig>("[strategy]\nt_limt = 40\n").is_err());
        assert!(toml::from_str::<RunConfig>("[nonsense]\nx = 1\n").is_err());
    }

    #[test]
    fn exponent_list_parsing() {
        assert_eq!(parse_exponents(&["2.0".into(), " 3".into()]).unwrap(), vec![2.0, 3.0]);
        assert!(parse_exponents(&["".into()]).unwrap().is_empty());
        assert!(matches!(parse_exponents(&["two".into()]), Err(CliError::Config(_))));
    }

    #[test]
    fn error_codes_are_distinct() {
        let codes = [
            CliError::Input(String::new()).exit_code(),
            CliError::Config(String::new()).exit_code(),
            CliError::Solver(String::new()).exit_code(),
            CliError::Threshold(String::new()).exit_code(),
        ];
        assert_eq!(codes, [3, 4, 5, 6]);
    }

    #[test]
    fn strategy_errors_map_to_codes() {
        assert_eq!(CliError::from(StrategyError::EmptyRecords).exit_code(), exit::INPUT);
        assert_eq!(CliError::from(StrategyError::InvalidConfig("x".into())).exit_code(), exit::CONFIG);
        let p = PhysicsError::InvalidParameter { name: "c_p", reason: "x".into() };
        assert_eq!(CliError::from(StrategyError::Physics(p)).exit_code(), exit::CONFIG);
    }
}
