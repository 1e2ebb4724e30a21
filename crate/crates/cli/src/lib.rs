//! Library side of the `sbcb` binary: argument types, configuration loading
//! and one function per subcommand. Commands return their output files in
//! memory; [`run`] writes them together with a manifest.

pub mod args;
pub mod config;
pub mod verify;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use sbcb_core::env::{Environment, EnvironmentSpec};
use sbcb_core::grid::Grid;
use sbcb_core::montecarlo::{
    estimate_pseudoregret, sr_compare, sr_validity, tightness_sweep, tightness_validity, write_regret_csv, write_sr_compare_csv,
    write_tightness_csv, SweepConfig,
};
use sbcb_core::rng::{purpose, stream};
use sbcb_triage::metrics::write_results_csv;
use sbcb_triage::study::{run_study, StudyConfig};

pub use args::{Cli, Command, Format};
use config::{RegretConfig, VerifyConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Files and console report produced by a command.
#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(String, Vec<u8>)>,
    pub report: String,
    /// Entries added to the manifest's `[manifest]` table.
    pub extra: toml::Table,
    /// Set when the command ran but a checked property failed.
    pub failed: bool,
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(runtime)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<(), String>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(CliError::Runtime)?;
    Ok(buf)
}

pub fn tightness(cfg: &SweepConfig, format: Format) -> Result<Output, CliError> {
    cfg.validate().map_err(usage)?;
    let records = tightness_sweep(cfg).map_err(runtime)?;
    let validity = tightness_validity(&records);
    let mut out = Output::default();
    out.files.push(match format {
        Format::Csv => ("tightness.csv".into(), csv_bytes(|b| write_tightness_csv(b, &records).map_err(|e| e.to_string()))?),
        Format::Json => (
            "tightness.json".into(),
            json(&serde_json::json!({ "records": records, "validity": validity }))?,
        ),
    });
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    let _ = writeln!(out.report, "{} environments, {} failed", records.len(), failed);
    for v in &validity {
        let _ = writeln!(
            out.report,
            "{:<8} within bound in {}/{} environments (violation rate {:.4})",
            v.statement,
            v.satisfied,
            v.evaluated,
            1.0 - v.rate
        );
    }
    Ok(out)
}

pub fn sr_compare_cmd(cfg: &SweepConfig, format: Format) -> Result<Output, CliError> {
    cfg.validate().map_err(usage)?;
    let cmp = sr_compare(cfg).map_err(runtime)?;
    let validity = sr_validity(&cmp.rows);
    let mut out = Output::default();
    out.files.push(match format {
        Format::Csv => ("sr_compare.csv".into(), csv_bytes(|b| write_sr_compare_csv(b, &cmp.rows).map_err(|e| e.to_string()))?),
        Format::Json => ("sr_compare.json".into(), json(&cmp.rows)?),
    });
    out.files.push((
        "sr_summary.json".into(),
        json(&serde_json::json!({ "summary": cmp.summary, "validity": validity }))?,
    ));
    let s = &cmp.summary;
    let _ = writeln!(
        out.report,
        "{} environments: mean e_hat uniform {:.4}, reference {:.4}; reference worse in {}, uniform worse in {}, ties {}; sign test p = {:.3e} ({})",
        s.envs, s.mean_e_hat_uniform, s.mean_e_hat_reference, s.reference_worse, s.uniform_worse, s.ties, s.sign_test_p, s.direction
    );
    Ok(out)
}

/// Environment described by a regret config; the horizon is the last checkpoint.
pub fn regret_env(cfg: &RegretConfig) -> Result<Environment, CliError> {
    let horizon = cfg.checkpoints.iter().copied().max().unwrap_or(0);
    if horizon == 0 || cfg.checkpoints.contains(&0) {
        return Err(usage("checkpoints must be positive and non-empty"));
    }
    if cfg.runs == 0 {
        return Err(usage("runs must be positive"));
    }
    if cfg.alpha.is_nan() || cfg.alpha <= 2.0 {
        return Err(usage(format!("alpha must exceed 2, got {}", cfg.alpha)));
    }
    let means = Grid::from_rows(cfg.means.clone()).map_err(usage)?;
    let states = means.states();
    let spec = EnvironmentSpec {
        arms: means.arms(),
        states,
        mu: means.rows().map(|row| row.iter().sum::<f64>() / states as f64).collect(),
        sigma2: cfg.sigma2,
        reward_family: cfg.reward_family,
        state_sequence: cfg
            .state_order
            .generate(states, horizon, &mut stream(cfg.master_seed, 0, 0, purpose::STATES)),
        seed: cfg.master_seed,
    };
    Environment::with_means(spec, means).map_err(usage)
}

pub fn regret(cfg: &RegretConfig, format: Format) -> Result<Output, CliError> {
    let env = regret_env(cfg)?;
    let points =
        estimate_pseudoregret(&env, cfg.alpha, &cfg.family, &cfg.checkpoints, cfg.runs, cfg.master_seed, 0).map_err(runtime)?;
    let mut out = Output::default();
    out.files.push(match format {
        Format::Csv => ("regret.csv".into(), csv_bytes(|b| write_regret_csv(b, &points).map_err(|e| e.to_string()))?),
        Format::Json => ("regret.json".into(), json(&points)?),
    });
    for p in &points {
        let _ = writeln!(
            out.report,
            "n = {:>6}: regret {:.3} (se {:.3}), bound {:.3}{}",
            p.n,
            p.mean,
            p.se,
            p.bound.clamped,
            if p.within_bound() { "" } else { "  EXCEEDED" }
        );
    }
    Ok(out)
}

pub fn triage(cfg: &StudyConfig, format: Format) -> Result<Output, CliError> {
    cfg.validate().map_err(usage)?;
    let (t2, t3) = cfg.split().map_err(usage)?;
    let study = run_study(cfg).map_err(runtime)?;
    let mut out = Output::default();
    out.files.push(match format {
        Format::Csv => ("triage.csv".into(), csv_bytes(|b| write_results_csv(b, &study.summaries).map_err(|e| e.to_string()))?),
        Format::Json => ("triage.json".into(), json(&study)?),
    });
    out.extra.insert("stage_budget_t2".into(), toml::Value::Float(t2.dollars()));
    out.extra.insert("stage_budget_t3".into(), toml::Value::Float(t3.dollars()));
    let _ = writeln!(out.report, "stage budgets T_2 = {t2}, T_3 = {t3}; {} seeds", cfg.seeds);
    for w in &study.warnings {
        let _ = writeln!(out.report, "warning: {w}");
    }
    for s in &study.summaries {
        let sens = s.pop_sensitivity.map_or("undefined".to_string(), |v| format!("{:.3}", v.mean));
        let _ = writeln!(out.report, "{:<24} population sensitivity {sens}", s.approach);
    }
    Ok(out)
}

pub fn verify_cmd(cfg: &VerifyConfig, format: Format) -> Result<Output, CliError> {
    if cfg.envs == 0 || cfg.runs == 0 || cfg.trials == 0 {
        return Err(usage("envs, runs and trials must be positive"));
    }
    let results = verify::run_suites(cfg);
    let mut out = Output {
        report: verify::render_table(&results),
        failed: results.iter().any(|r| !r.passed()),
        ..Output::default()
    };
    out.files.push(match format {
        Format::Csv => {
            let mut text = String::from("suite,checks,failures,passed,detail\n");
            for r in &results {
                let _ = writeln!(text, "{},{},{},{},\"{}\"", r.suite, r.checks, r.failures, r.passed(), r.detail.replace('"', "'"));
            }
            ("verify.csv".into(), text.into_bytes())
        }
        Format::Json => ("verify.json".into(), json(&results)?),
    });
    Ok(out)
}

fn write_outputs<T: Serialize>(cli: &Cli, config: &T, seed: u64, out: &Output) -> Result<(), CliError> {
    let dir: &Path = &cli.out;
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in &out.files {
        fs::write(dir.join(name), bytes).map_err(|e| runtime(format!("cannot write {name}: {e}")))?;
    }
    let mut manifest = toml::Table::new();
    manifest.insert("command".into(), cli.command.name().into());
    manifest.insert("seed".into(), toml::Value::Integer(seed as i64));
    manifest.insert("format".into(), cli.format.name().into());
    manifest.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    manifest.insert(
        "outputs".into(),
        toml::Value::Array(out.files.iter().map(|(n, _)| n.as_str().into()).collect()),
    );
    for (k, v) in &out.extra {
        manifest.insert(k.clone(), v.clone());
    }
    config::write_manifest(dir, config, manifest)
}

fn dispatch(cli: &Cli) -> Result<Output, CliError> {
    let path = cli.config.as_deref();
    macro_rules! go {
        ($defaults:expr, $run:expr) => {{
            let mut cfg = config::load(path, $defaults)?;
            if let Some(seed) = cli.seed {
                cfg.master_seed = seed;
            }
            let out = $run(&cfg, cli.format)?;
            write_outputs(cli, &cfg, cfg.master_seed, &out)?;
            Ok(out)
        }};
    }
    match cli.command {
        Command::Tightness => go!(SweepConfig::default(), tightness),
        Command::SrCompare => go!(config::sr_compare_default(), sr_compare_cmd),
        Command::Regret => go!(RegretConfig::default(), regret),
        Command::Triage => go!(StudyConfig::default(), triage),
        Command::Verify => go!(VerifyConfig::default(), verify_cmd),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let workers = match cli.workers {
        Some(0) => {
            eprintln!("error: --workers must be at least 1");
            return 2;
        }
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli)) {
        Ok(out) => {
            print!("{}", out.report);
            i32::from(out.failed)
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
