//! Orchestration of `run`, `validate` and `plots`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use numeraire_core::enlarge::summary_doob_sample;
use numeraire_core::verify::{doob_calibration_bins, SuiteOutcome, Verdict};
use numeraire_core::{run_suite, simulate_path, solve_numeraire_strategy};

use crate::config::{parse_config, serialize_config, ConfigError, Format, RunConfig};
use crate::output::{
    read_doob_csv, read_minima_csv, read_reports_jsonl, write_calibration_csv, write_doob_csv, write_ecdf_csv,
    write_minima_csv, write_path_samples_csv, write_reports_jsonl, write_summary_csv, MinimumRow, ReadError,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_TEST_FAILURE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

pub const SEED_VAR: &str = "NUMERAIRE_SEED";
pub const N_PATHS_VAR: &str = "NUMERAIRE_N_PATHS";

/// Points kept per sampled path in the plot data.
const SAMPLE_POINTS: usize = 2000;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigError>),
    #[error(transparent)]
    Core(#[from] numeraire_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: ReadError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Applies `NUMERAIRE_SEED` and `NUMERAIRE_N_PATHS`; no other setting can be
/// overridden from the environment.
pub fn apply_env_overrides(cfg: &mut RunConfig, var: impl Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let mut errors = Vec::new();
    if let Some(v) = var(SEED_VAR) {
        match v.trim().parse() {
            Ok(seed) => cfg.simulation.seed = seed,
            Err(_) => {
                errors.push(ConfigError { line: None, key: SEED_VAR.into(), message: format!("bad value `{v}`") })
            }
        }
    }
    if let Some(v) = var(N_PATHS_VAR) {
        match v.trim().parse() {
            Ok(n) if n > 0 => cfg.simulation.n_paths = n,
            _ => errors.push(ConfigError { line: None, key: N_PATHS_VAR.into(), message: format!("bad value `{v}`") }),
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(errors))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text).map_err(CliError::Config)
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Runs the suite and writes every output under `out_dir`. Reports are
/// written before the data files, so a later I/O error still leaves them.
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<SuiteOutcome, CliError> {
    let outcome = run_suite(&cfg.market, &cfg.simulation, &cfg.verify)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let reports = &outcome.reports;
    if cfg.output.formats.contains(&Format::Jsonl) {
        write_file(&out_dir.join("reports.jsonl"), |w| write_reports_jsonl(reports, w))?;
    }
    if cfg.output.formats.contains(&Format::Csv) {
        write_file(&out_dir.join("summary.csv"), |w| write_summary_csv(reports, w))?;
    }
    write_file(&out_dir.join("config.txt"), |w| w.write_all(serialize_config(cfg).as_bytes()))?;
    write_file(&out_dir.join("viability.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &outcome.viability)?;
        w.write_all(b"\n")
    })?;

    let ens = &outcome.ensemble;
    let minima: Vec<MinimumRow> = ens.paths.iter().map(MinimumRow::from_summary).collect();
    write_file(&out_dir.join("minima.csv"), |w| write_minima_csv(&minima, w))?;
    let samples =
        ens.paths.iter().map(|p| summary_doob_sample(p, cfg.verify.calibration_time)).collect::<Result<Vec<_>, _>>()?;
    write_file(&out_dir.join("doob_samples.csv"), |w| write_doob_csv(&samples, w))?;

    if cfg.output.traces > 0 {
        let dir = out_dir.join("traces");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let strategy = solve_numeraire_strategy(&cfg.market)?;
        for i in 0..(cfg.output.traces as u64).min(cfg.simulation.n_paths) {
            let p = simulate_path(&cfg.market, &strategy, &cfg.simulation, i)?;
            write_file(&dir.join(format!("path_{i}.csv")), |w| p.write_trace_csv(w))?;
        }
    }
    emit_plot_data(cfg, &minima, &samples, out_dir)?;
    Ok(outcome)
}

/// Empirical CDF of `I(inf)`, the Doob calibration bins and sampled `Xhat`
/// paths, under `out_dir/plots`.
pub fn emit_plot_data(
    cfg: &RunConfig,
    minima: &[MinimumRow],
    samples: &[numeraire_core::enlarge::DoobSample],
    out_dir: &Path,
) -> Result<(), CliError> {
    let dir = out_dir.join("plots");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let values: Vec<f64> = minima.iter().map(|m| m.i_inf_corrected).collect();
    write_file(&dir.join("ecdf.csv"), |w| write_ecdf_csv(&values, w))?;
    let bins = doob_calibration_bins(samples, cfg.verify.bins, cfg.verify.min_bin_count);
    write_file(&dir.join("calibration.csv"), |w| write_calibration_csv(&bins, w))?;
    let strategy = solve_numeraire_strategy(&cfg.market)?;
    let n = (cfg.output.sample_paths as u64).min(cfg.simulation.n_paths);
    let paths =
        (0..n).map(|i| simulate_path(&cfg.market, &strategy, &cfg.simulation, i)).collect::<Result<Vec<_>, _>>()?;
    write_file(&dir.join("paths.csv"), |w| write_path_samples_csv(&paths, SAMPLE_POINTS, w))
}

/// Output directory of a config file: relative paths hang off the file's
/// directory.
pub fn output_dir(cfg: &RunConfig, config_path: &Path) -> PathBuf {
    if cfg.output.directory.is_absolute() {
        cfg.output.directory.clone()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(&cfg.output.directory)
    }
}

pub fn exit_code(outcome: &SuiteOutcome) -> i32 {
    if outcome.reports.iter().any(|r| r.verdict == Verdict::Fail) {
        EXIT_TEST_FAILURE
    } else {
        EXIT_PASS
    }
}

/// `run <config>`: 0 if no test fails, 1 on any failure, 2 on errors.
pub fn run_command(config_path: &Path, var: impl Fn(&str) -> Option<String>, log: &mut dyn Write) -> i32 {
    let result = load_config(config_path).and_then(|mut cfg| {
        apply_env_overrides(&mut cfg, var)?;
        let dir = output_dir(&cfg, config_path);
        execute(&cfg, &dir).map(|o| (o, dir))
    });
    match result {
        Ok((outcome, dir)) => {
            for r in &outcome.reports {
                let _ = writeln!(log, "{:<8} {}", format!("{:?}", r.verdict).to_lowercase(), r.name);
            }
            let _ = writeln!(log, "reports written to {}", dir.display());
            exit_code(&outcome)
        }
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            EXIT_ERROR
        }
    }
}

/// `validate <config>`: 0 if the configuration is valid, 2 otherwise.
pub fn validate_command(config_path: &Path, var: impl Fn(&str) -> Option<String>, log: &mut dyn Write) -> i32 {
    match load_config(config_path).and_then(|mut c| apply_env_overrides(&mut c, var).map(|_| c)) {
        Ok(cfg) => {
            let _ = writeln!(
                log,
                "valid: d = {}, m = {}, {} paths, dt = {}",
                cfg.market.d(),
                cfg.market.m(),
                cfg.simulation.n_paths,
                cfg.simulation.dt
            );
            EXIT_PASS
        }
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// `plots <report-dir>`: regenerates the plot data of a finished run from
/// its `config.txt`, `minima.csv` and `doob_samples.csv`, after checking
/// `reports.jsonl` when present.
pub fn plots_command(dir: &Path, log: &mut dyn Write) -> i32 {
    let result = (|| {
        let cfg = load_config(&dir.join("config.txt"))?;
        let reports_path = dir.join("reports.jsonl");
        let n_reports = if reports_path.exists() {
            read_reports_jsonl(&read(&reports_path)?)
                .map_err(|source| CliError::Read { path: reports_path.clone(), source })?
                .len()
        } else {
            0
        };
        let minima_path = dir.join("minima.csv");
        let minima =
            read_minima_csv(&read(&minima_path)?).map_err(|source| CliError::Read { path: minima_path, source })?;
        let doob_path = dir.join("doob_samples.csv");
        let samples = read_doob_csv(&read(&doob_path)?).map_err(|source| CliError::Read { path: doob_path, source })?;
        emit_plot_data(&cfg, &minima, &samples, dir)?;
        Ok::<_, CliError>((n_reports, minima.len()))
    })();
    match result {
        Ok((r, n)) => {
            let _ = writeln!(log, "plot data for {n} paths ({r} reports) in {}", dir.join("plots").display());
            EXIT_PASS
        }
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            EXIT_ERROR
        }
    }
}
