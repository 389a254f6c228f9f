//! Command-line front end: config parsing, data ingestion, report output.
//!
//! Configuration is a sectioned TOML file ([model], [test], [simulation],
//! [io]); unknown keys are rejected. A handful of flags override config
//! values. Every run writes a JSON report that echoes the fully resolved
//! configuration, so a run is reproducible from its own output, plus CSV
//! tables for the mode-specific numbers.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical error,
//! 4 degenerate data.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::families::{
    cosine_nest_gaussian, cosine_nest_uniform, gaussian_location_family, gaussian_noise_family,
    known_gaussian_noise, NoiseModel,
};
use crate::model::ConvolvedModel;
use crate::quadrature::QuadratureSpec;
use crate::scores::build_efficient_scores;
use crate::selection::{data_driven_test, DataDrivenSpec, NuisanceEstimator, Penalty};
use crate::simulation::{
    calibration_from_outcomes, d1_scan, power_curve, run_scenario, Alternative, Procedure,
    ScanMode, ScenarioSpec, Truth,
};
use crate::teststat::TestReport;

/// Errors mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or flags (exit 2).
    Config(String),
    /// Numerical failure inside the engine (exit 3).
    Numerical(String),
    /// Unusable data (exit 4).
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Numerical(m) => write!(f, "numerical: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Config(m),
            Error::DegenerateSample(m) => CliError::Data(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Data-driven efficient score tests for deconvolution problems.
#[derive(Parser, Debug)]
#[command(
    name = "deconv-score",
    version,
    about = "Score tests for signals observed with additive noise",
    long_about = "Tests whether a noisy signal Y = X + noise has a given signal density, \
                  with known or parametrically unknown noise. Statistics are quadratic \
                  forms in the (efficient) score with a penalized data-driven model \
                  dimension, referred to chi-square(1)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the data-driven test on observations from a CSV file.
    Test {
        #[command(flatten)]
        common: CommonArgs,
        /// CSV of observations: one value per line, optional `y` header.
        #[arg(long)]
        data: PathBuf,
    },
    /// Monte Carlo experiments under the configured model.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Inspection helpers for the score system.
    #[command(subcommand)]
    Scores(ScoresCommand),
    /// Scan E l*_i under the configured alternative for the first
    /// detectable component.
    D1Scan {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Subcommand, Debug)]
pub enum SimulateCommand {
    /// Replicate under the null and calibrate against chi-square.
    Null {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rejection rates under the configured alternative over a sample-size
    /// grid.
    Power {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Subcommand, Debug)]
pub enum ScoresCommand {
    /// Emit l*(y) on a grid as CSV.
    Dump {
        #[command(flatten)]
        common: CommonArgs,
        /// Evaluation grid lo:hi:step, e.g. -4:4:0.05.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
    },
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Override [test].penalty: schwarz | akaike | custom:<expr> (default schwarz).
    #[arg(long)]
    pub penalty: Option<String>,
    /// Override [test].alpha, the test level (default 0.05).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Override [model].d, the maximum nest dimension (default 10).
    #[arg(long)]
    pub d: Option<usize>,
    /// Override [simulation].seed (default 20240001).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override [simulation].replications (default 500).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Output directory for report.json and CSV tables (default ".").
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report format written to stdout summary footer: csv | json (default json).
    #[arg(long)]
    pub format: Option<String>,
    /// Diagnostic: refer the selected statistic to chi-square(S) instead of
    /// the asymptotic chi-square(1). Non-asymptotic heuristic.
    #[arg(long = "df-at-s", default_value_t = false)]
    pub df_at_s: bool,
}

// ---- configuration file ----

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<ModelSection>,
    test: Option<TestSection>,
    simulation: Option<SimSection>,
    io: Option<IoSection>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    /// gaussian-location | cosine-gaussian | cosine-uniform
    signal: Option<String>,
    /// Null location for gaussian-location.
    theta0: Option<f64>,
    /// Maximum nest dimension d.
    d: Option<usize>,
    /// known-gaussian | gaussian-family
    noise: Option<String>,
    /// Noise scale: sigma for known noise, the reference eta for the family.
    noise_sigma: Option<f64>,
    /// Lower clamp of the plug-in nuisance estimate (composite case).
    eta_floor: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TestSection {
    penalty: Option<String>,
    alpha: Option<f64>,
    /// Diagnostic: refer the selected statistic to chi-square(S).
    df_at_s: Option<bool>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SimSection {
    n: Option<usize>,
    replications: Option<usize>,
    seed: Option<u64>,
    /// null | mean-shift:<delta> | variance-inflation:<factor> |
    /// bimodal:<mu>[,<component_var>] | uniform-signal:<half_width>
    alternative: Option<String>,
    /// Sample sizes for the power curve.
    n_grid: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct IoSection {
    format: Option<String>,
    out: Option<String>,
}

/// Fully resolved configuration, echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub signal: String,
    pub theta0: f64,
    pub d: usize,
    pub noise: String,
    pub noise_sigma: f64,
    pub eta_floor: f64,
    pub penalty: String,
    pub alpha: f64,
    pub df_at_s: bool,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub alternative: String,
    pub n_grid: Vec<usize>,
    pub format: String,
    pub out: String,
}

fn resolve_config(common: &CommonArgs) -> CliResult<ResolvedConfig> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", common.config.display()))
    })?;
    let file: FileConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", common.config.display())))?;
    let model = file.model.unwrap_or_default();
    let test = file.test.unwrap_or_default();
    let sim = file.simulation.unwrap_or_default();
    let io = file.io.unwrap_or_default();

    let signal = model.signal.unwrap_or_else(|| "cosine-gaussian".into());
    let default_d = if signal == "gaussian-location" { 1 } else { 10 };
    let cfg = ResolvedConfig {
        signal,
        theta0: model.theta0.unwrap_or(0.0),
        d: common.d.or(model.d).unwrap_or(default_d),
        noise: model.noise.unwrap_or_else(|| "gaussian-family".into()),
        noise_sigma: model.noise_sigma.unwrap_or(0.5),
        eta_floor: model.eta_floor.unwrap_or(0.25),
        penalty: common
            .penalty
            .clone()
            .or(test.penalty)
            .unwrap_or_else(|| "schwarz".into()),
        alpha: common.alpha.or(test.alpha).unwrap_or(0.05),
        df_at_s: common.df_at_s || test.df_at_s.unwrap_or(false),
        n: sim.n.unwrap_or(2000),
        replications: common.reps.or(sim.replications).unwrap_or(500),
        seed: common.seed.or(sim.seed).unwrap_or(20_240_001),
        alternative: sim.alternative.unwrap_or_else(|| "null".into()),
        n_grid: sim.n_grid.unwrap_or_else(|| vec![100, 400, 1600]),
        format: common
            .format
            .clone()
            .or(io.format)
            .unwrap_or_else(|| "json".into()),
        out: common
            .out
            .as_ref()
            .map(|p| p.display().to_string())
            .or(io.out)
            .unwrap_or_else(|| ".".into()),
    };

    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) && cfg.alpha != 0.0 {
        return Err(CliError::Config(format!(
            "alpha must lie in [0, 1), got {}",
            cfg.alpha
        )));
    }
    if cfg.d < 1 {
        return Err(CliError::Config("d must be at least 1".into()));
    }
    if !(cfg.noise_sigma > 0.0) {
        return Err(CliError::Config(format!(
            "noise_sigma must be > 0, got {}",
            cfg.noise_sigma
        )));
    }
    match cfg.format.as_str() {
        "json" | "csv" => {}
        other => {
            return Err(CliError::Config(format!(
                "format must be csv or json, got `{other}`"
            )))
        }
    }
    if cfg.signal == "gaussian-location" && cfg.d != 1 {
        return Err(CliError::Config(
            "signal gaussian-location is one-dimensional; set d = 1".into(),
        ));
    }
    Ok(cfg)
}

struct BuiltModel {
    model: Arc<ConvolvedModel>,
    /// Null sampling distribution of the signal.
    null_signal: Truth,
    known_noise: bool,
}

fn build_model(cfg: &ResolvedConfig) -> CliResult<BuiltModel> {
    let spec = QuadratureSpec::default();
    let noise = match cfg.noise.as_str() {
        "known-gaussian" => known_gaussian_noise(cfg.noise_sigma)?,
        "gaussian-family" => gaussian_noise_family(cfg.noise_sigma)?,
        other => {
            return Err(CliError::Config(format!(
                "unknown noise `{other}` (expected known-gaussian or gaussian-family)"
            )))
        }
    };
    let known_noise = matches!(noise, NoiseModel::Known(_));
    let (signal, null_signal): (Arc<dyn crate::families::SignalFamily>, Truth) =
        match cfg.signal.as_str() {
            "gaussian-location" => (
                Arc::new(gaussian_location_family(cfg.theta0)),
                Truth::Normal {
                    mean: cfg.theta0,
                    var: 1.0,
                },
            ),
            "cosine-gaussian" => (
                Arc::new(cosine_nest_gaussian(cfg.d, spec)?.level(cfg.d)?),
                Truth::Normal {
                    mean: 0.0,
                    var: 1.0,
                },
            ),
            "cosine-uniform" => (
                Arc::new(cosine_nest_uniform(cfg.d, spec)?.level(cfg.d)?),
                Truth::Uniform { lo: 0.0, hi: 1.0 },
            ),
            other => {
                return Err(CliError::Config(format!(
                    "unknown signal `{other}` (expected gaussian-location, cosine-gaussian, \
                     or cosine-uniform)"
                )))
            }
        };
    Ok(BuiltModel {
        model: Arc::new(ConvolvedModel::new(signal, noise, spec)?),
        null_signal,
        known_noise,
    })
}

fn parse_alternative(text: &str) -> CliResult<Alternative> {
    let bad = |m: &str| CliError::Config(format!("alternative `{text}`: {m}"));
    if text == "null" {
        return Ok(Alternative::Null);
    }
    let (name, args) = match text.split_once(':') {
        Some((n, a)) => (n, a),
        None => (text, ""),
    };
    let one = |args: &str| -> CliResult<f64> {
        args.parse()
            .map_err(|_| bad("expected one numeric argument"))
    };
    match name {
        "mean-shift" => Ok(Alternative::MeanShift(one(args)?)),
        "variance-inflation" => Ok(Alternative::VarianceInflation(one(args)?)),
        "bimodal" => {
            let mut parts = args.split(',');
            let mu: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("expected bimodal:<mu>[,<component_var>]"))?;
            let component_var = match parts.next() {
                Some(s) => Some(
                    s.parse()
                        .map_err(|_| bad("bad component variance"))?,
                ),
                None => None,
            };
            Ok(Alternative::SymmetricBimodal { mu, component_var })
        }
        "uniform-signal" => Ok(Alternative::UniformSignal {
            half_width: one(args)?,
        }),
        other => Err(bad(&format!("unknown alternative `{other}`"))),
    }
}

fn penalty_from(cfg: &ResolvedConfig) -> CliResult<Penalty> {
    let p = Penalty::parse(&cfg.penalty)?;
    p.validate(cfg.d)?;
    if let Some(w) = p.warning() {
        eprintln!("warning: {w}");
    }
    Ok(p)
}

fn scenario_from(cfg: &ResolvedConfig, built: &BuiltModel, alt: &Alternative) -> CliResult<ScenarioSpec> {
    let signal_truth = alt.apply(&built.null_signal)?;
    let noise_truth = Truth::Normal {
        mean: 0.0,
        var: cfg.noise_sigma * cfg.noise_sigma,
    };
    let dd = DataDrivenSpec {
        penalty: penalty_from(cfg)?,
        alpha: cfg.alpha,
        df_at_s: cfg.df_at_s,
    };
    let procedure = if cfg.signal == "gaussian-location" && !built.known_noise {
        Procedure::Example2Plugin {
            theta0: cfg.theta0,
            alpha: cfg.alpha,
        }
    } else if built.known_noise {
        Procedure::SimpleNest {
            model: built.model.clone(),
            dd,
        }
    } else {
        Procedure::CompositeNest {
            model: built.model.clone(),
            dd,
            eta_floor: cfg.eta_floor,
        }
    };
    Ok(ScenarioSpec {
        signal_truth,
        noise_truth,
        procedure,
        n: cfg.n,
        replications: cfg.replications,
        seed: cfg.seed,
    })
}

/// Read observations from CSV: one value per line, optional `y` header,
/// non-numeric rows rejected with their line numbers.
pub fn read_observations(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if i == 0 && line.eq_ignore_ascii_case("y") {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => {
                return Err(CliError::Data(format!(
                    "{}:{}: not a finite number: `{raw}`",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no observations",
            path.display()
        )));
    }
    Ok(out)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn write_report(dir: &Path, payload: &serde_json::Value) -> CliResult<PathBuf> {
    write_file(
        dir,
        "report.json",
        &serde_json::to_string_pretty(payload).expect("serializable"),
    )
}

fn report_json(mode: &str, cfg: &ResolvedConfig, body: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "mode": mode,
        "config": cfg,
        "result": body,
    })
}

/// After the human-readable summary, stdout carries one machine-readable
/// block in the configured format for piping.
fn emit_machine_block(cfg: &ResolvedConfig, payload: &serde_json::Value, primary_csv: &str) {
    match cfg.format.as_str() {
        "json" => println!("{}", serde_json::to_string_pretty(payload).expect("serializable")),
        _ => print!("{primary_csv}"),
    }
}

fn run_test_mode(common: &CommonArgs, data_path: &Path) -> CliResult<()> {
    let cfg = resolve_config(common)?;
    let built = build_model(&cfg)?;
    let data = read_observations(data_path)?;
    if !built.known_noise && data.len() < 2 {
        return Err(CliError::Data(
            "composite mode needs at least 2 observations".into(),
        ));
    }
    let dd = DataDrivenSpec {
        penalty: penalty_from(&cfg)?,
        alpha: cfg.alpha,
        df_at_s: cfg.df_at_s,
    };
    let nuisance = NuisanceEstimator::GaussianMoment {
        eta_floor: cfg.eta_floor,
    };
    let report: TestReport = data_driven_test(
        &data,
        built.model.clone(),
        if built.known_noise {
            None
        } else {
            Some(&nuisance)
        },
        &dd,
    )?;

    // Human-readable table.
    println!("data-driven efficient score test  (n = {})", data.len());
    println!("  k   statistic    penalized");
    for (i, (s, p)) in report
        .statistics
        .iter()
        .zip(&report.penalized)
        .enumerate()
    {
        let marker = if i + 1 == report.selected_s { " <- S" } else { "" };
        println!("  {:<3} {:>11.5} {:>11.5}{marker}", i + 1, s, p);
    }
    let df_note = if cfg.df_at_s {
        " [df-at-S diagnostic, non-asymptotic]"
    } else {
        ""
    };
    println!(
        "selected S = {}, statistic = {:.5}, p-value = {:.5} (chi-square {}{df_note}), {} at alpha = {}",
        report.selected_s,
        report.stat_at_s,
        report.p_value,
        report.reference_df,
        if report.reject { "REJECT" } else { "RETAIN" },
        report.alpha
    );

    let out_dir = PathBuf::from(&cfg.out);
    let mut stats_csv = String::from("k,statistic,penalized\n");
    for (i, (s, p)) in report
        .statistics
        .iter()
        .zip(&report.penalized)
        .enumerate()
    {
        stats_csv.push_str(&format!("{},{},{}\n", i + 1, s, p));
    }
    write_file(&out_dir, "statistics.csv", &stats_csv)?;
    let payload = report_json("test", &cfg, serde_json::to_value(&report).expect("report"));
    write_report(&out_dir, &payload)?;
    emit_machine_block(&cfg, &payload, &stats_csv);
    Ok(())
}

fn run_simulate_null(common: &CommonArgs) -> CliResult<()> {
    let cfg = resolve_config(common)?;
    let built = build_model(&cfg)?;
    let spec = scenario_from(&cfg, &built, &Alternative::Null)?;
    let outcomes = run_scenario(&spec)?;
    let cal = calibration_from_outcomes(&outcomes)?;

    println!(
        "null calibration: n = {}, replications = {}, seed = {}",
        cfg.n, cfg.replications, cfg.seed
    );
    println!(
        "  KS distance to chi-square({}) = {:.4}",
        cal.reference_df, cal.ks_distance
    );
    println!(
        "  empirical level = {:.4} +- {:.4} (alpha = {})",
        cal.empirical_level, cal.level_se, cfg.alpha
    );
    println!("  P(S = 1) = {:.4}", cal.fraction_s_equals_1);

    let out_dir = PathBuf::from(&cfg.out);
    let mut reps_csv = String::from("replication,statistic,selected_s,p_value,reject\n");
    for (i, o) in outcomes.iter().enumerate() {
        reps_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            i, o.stat_at_s, o.selected_s, o.p_value, o.reject as u8
        ));
    }
    write_file(&out_dir, "replications.csv", &reps_csv)?;
    let mut ecdf_csv = String::from("statistic,empirical_cdf\n");
    let r = cal.statistics.len() as f64;
    for (i, s) in cal.statistics.iter().enumerate() {
        ecdf_csv.push_str(&format!("{},{}\n", s, (i as f64 + 1.0) / r));
    }
    write_file(&out_dir, "empirical_cdf.csv", &ecdf_csv)?;
    let payload = report_json(
        "simulate-null",
        &cfg,
        serde_json::json!({
            "ks_distance": cal.ks_distance,
            "reference_df": cal.reference_df,
            "empirical_level": cal.empirical_level,
            "level_se": cal.level_se,
            "fraction_s_equals_1": cal.fraction_s_equals_1,
        }),
    );
    write_report(&out_dir, &payload)?;
    emit_machine_block(&cfg, &payload, &reps_csv);
    Ok(())
}

fn run_simulate_power(common: &CommonArgs) -> CliResult<()> {
    let cfg = resolve_config(common)?;
    let built = build_model(&cfg)?;
    let alt = parse_alternative(&cfg.alternative)?;
    let spec = scenario_from(&cfg, &built, &alt)?;
    let points = power_curve(&spec, &cfg.n_grid)?;

    println!(
        "power curve: alternative = {}, replications = {} per cell",
        cfg.alternative, cfg.replications
    );
    println!("  n        rate      se");
    let mut csv = String::from("n,rejection_rate,se\n");
    for p in &points {
        println!("  {:<8} {:.4}    {:.4}", p.n, p.rejection_rate, p.se);
        csv.push_str(&format!("{},{},{}\n", p.n, p.rejection_rate, p.se));
    }
    let out_dir = PathBuf::from(&cfg.out);
    write_file(&out_dir, "power.csv", &csv)?;
    let payload = report_json(
        "simulate-power",
        &cfg,
        serde_json::json!({
            "points": points.iter().map(|p| {
                serde_json::json!({"n": p.n, "rejection_rate": p.rejection_rate, "se": p.se})
            }).collect::<Vec<_>>(),
        }),
    );
    write_report(&out_dir, &payload)?;
    emit_machine_block(&cfg, &payload, &csv);
    Ok(())
}

fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "grid must be lo:hi:step, got `{text}`"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid lo `{}`", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid hi `{}`", parts[1])))?;
    let step: f64 = parts[2]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid step `{}`", parts[2])))?;
    if !(step > 0.0 && hi > lo) {
        return Err(CliError::Config(
            "grid needs hi > lo and step > 0".into(),
        ));
    }
    let mut out = Vec::new();
    let mut y = lo;
    while y <= hi + 1e-12 {
        out.push(y);
        y += step;
    }
    Ok(out)
}

fn build_score_system(
    cfg: &ResolvedConfig,
    built: &BuiltModel,
) -> CliResult<crate::scores::ScoreSystem> {
    if built.known_noise {
        Ok(crate::scores::build_simple_scores(built.model.clone())?)
    } else {
        let theta0 = built.model.theta_null();
        Ok(build_efficient_scores(
            built.model.clone(),
            &theta0,
            &[cfg.noise_sigma],
        )?)
    }
}

fn run_scores_dump(common: &CommonArgs, grid: &str) -> CliResult<()> {
    let cfg = resolve_config(common)?;
    let built = build_model(&cfg)?;
    let grid = parse_grid(grid)?;
    let sys = build_score_system(&cfg, &built)?;
    let ev = sys.evaluator()?;
    let k = sys.k();

    let mut csv = String::from("y");
    for j in 1..=k {
        csv.push_str(&format!(",l{j}"));
    }
    csv.push('\n');
    let mut buf = vec![0.0; k];
    for &y in &grid {
        ev.l_star_into(y, &mut buf)?;
        csv.push_str(&format!("{y}"));
        for v in &buf {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    print!("{csv}");
    let out_dir = PathBuf::from(&cfg.out);
    write_file(&out_dir, "scores.csv", &csv)?;
    write_report(
        &out_dir,
        &report_json(
            "scores-dump",
            &cfg,
            serde_json::json!({"points": grid.len(), "k": k}),
        ),
    )?;
    Ok(())
}

fn run_d1_scan(common: &CommonArgs) -> CliResult<()> {
    let cfg = resolve_config(common)?;
    let built = build_model(&cfg)?;
    let alt = parse_alternative(&cfg.alternative)?;
    let signal_truth = alt.apply(&built.null_signal)?;
    let noise_truth = Truth::Normal {
        mean: 0.0,
        var: cfg.noise_sigma * cfg.noise_sigma,
    };

    // For the composite case the scan runs at the pseudo-true nuisance the
    // moment plug-in converges to under this truth.
    let sys = if built.known_noise {
        crate::scores::build_simple_scores(built.model.clone())?
    } else {
        let var_y = signal_truth.variance() + noise_truth.variance();
        let v0 = crate::selection::null_signal_variance(&built.model)?;
        let eta_star = (var_y - v0).max(cfg.eta_floor * cfg.eta_floor).sqrt();
        let theta0 = built.model.theta_null();
        build_efficient_scores(built.model.clone(), &theta0, &[eta_star])?
    };
    let scan = d1_scan(&signal_truth, &noise_truth, &sys, &ScanMode::default())?;

    println!("D1 scan under alternative `{}`:", cfg.alternative);
    println!("  i   E l*_i          tolerance");
    let mut csv = String::from("i,expectation,tolerance\n");
    for (i, (e, t)) in scan
        .expectations
        .iter()
        .zip(&scan.tolerances)
        .enumerate()
    {
        println!("  {:<3} {:>14.6e}  {:>10.2e}", i + 1, e, t);
        csv.push_str(&format!("{},{},{}\n", i + 1, e, t));
    }
    match scan.first_detectable {
        Some(k) => println!("  K = {k}, C_K = {:.6e}", scan.c_k.unwrap()),
        None => println!("  K = none (no detectable component up to d)"),
    }
    let out_dir = PathBuf::from(&cfg.out);
    write_file(&out_dir, "scan.csv", &csv)?;
    let payload = report_json(
        "d1-scan",
        &cfg,
        serde_json::json!({
            "expectations": scan.expectations,
            "tolerances": scan.tolerances,
            "first_detectable": scan.first_detectable,
            "c_k": scan.c_k,
        }),
    );
    write_report(&out_dir, &payload)?;
    emit_machine_block(&cfg, &payload, &csv);
    Ok(())
}

/// Entry point used by the binary.
pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Test { common, data } => run_test_mode(common, data),
        Command::Simulate(SimulateCommand::Null { common }) => run_simulate_null(common),
        Command::Simulate(SimulateCommand::Power { common }) => run_simulate_power(common),
        Command::Scores(ScoresCommand::Dump { common, grid }) => run_scores_dump(common, grid),
        Command::D1Scan { common } => run_d1_scan(common),
    }
}
