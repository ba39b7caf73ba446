//! Flat `section.key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment. Vectors are
//! comma-separated; the matrix `market.sigma` is given as one repeated key
//! per row. `market.d` and `market.m` are optional and checked against the
//! data when present.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use numeraire_core::functional::{Event, LevelFunction};
use numeraire_core::verify::TestKind;
use numeraire_core::{MarketSpec, SimConfig, Strategy, VerifyConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, or `None` for whole-file problems such as a missing key.
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    /// Relative paths are taken from the config file's directory.
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    /// Paths sampled into the plot data.
    pub sample_paths: usize,
    /// Paths dumped as full per-path trace CSVs.
    pub traces: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Jsonl, Format::Csv], sample_paths: 5, traces: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub market: MarketSpec,
    pub simulation: SimConfig,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

const KEYS: &[&str] = &[
    "market.d",
    "market.m",
    "market.mu",
    "market.sigma",
    "market.s0",
    "simulation.dt",
    "simulation.t_init",
    "simulation.tail_eps",
    "simulation.max_extensions",
    "simulation.n_paths",
    "simulation.seed",
    "simulation.bridge_correction",
    "simulation.chunk_size",
    "verify.tests",
    "verify.u_grid",
    "verify.bins",
    "verify.min_bin_count",
    "verify.calibration_tolerance",
    "verify.calibration_time",
    "verify.s",
    "verify.t",
    "verify.f",
    "verify.events",
    "verify.hitting_levels",
    "verify.strategies",
    "verify.strict_loss",
    "verify.nu",
    "verify.mutation",
    "output.directory",
    "output.formats",
    "output.sample_paths",
    "output.traces",
];

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("expected a number, got `{s}`"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a finite number, got `{s}`"))
    }
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| item(p.trim())).collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("expected a nonnegative integer, got `{s}`"))
}

fn one_based(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(i - 1),
        _ => Err(format!("expected a 1-based asset number, got `{s}`")),
    }
}

pub fn parse_event(s: &str) -> Result<Event, String> {
    if s == "omega" {
        return Ok(Event::Always);
    }
    if let Some(a) = s.strip_prefix("up:") {
        return Ok(Event::PriceUp { asset: one_based(a)? });
    }
    if let Some(q) = s.strip_prefix("imin:") {
        return Ok(Event::MinBelow { q: parse_f64(q)? });
    }
    Err(format!("unknown event `{s}` (omega, up:<asset>, imin:<q>)"))
}

pub fn parse_level_function(s: &str) -> Result<LevelFunction, String> {
    LevelFunction::ALL
        .into_iter()
        .find(|f| f.label() == s)
        .ok_or_else(|| format!("unknown level function `{s}` (1, u, u2, 1{{u>0.5}})"))
}

pub fn parse_strategy(s: &str) -> Result<Strategy, String> {
    match s {
        "numeraire" => return Ok(Strategy::Numeraire),
        "riskless" => return Ok(Strategy::Riskless),
        _ => {}
    }
    if let Some(a) = s.strip_prefix("buy_and_hold:") {
        return Ok(Strategy::BuyAndHold { asset: one_based(a)? });
    }
    if let Some(rest) = s.strip_prefix("mix:") {
        let fractions = rest.split(':').map(parse_f64).collect::<Result<Vec<_>, _>>()?;
        return Ok(Strategy::ConstantMix { fractions });
    }
    Err(format!("unknown strategy `{s}` (numeraire, riskless, buy_and_hold:<asset>, mix:<f1>:..)"))
}

fn parse_test(s: &str) -> Result<TestKind, String> {
    TestKind::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = TestKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown test `{s}` (one of {})", names.join(", "))
    })
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "jsonl" => Ok(Format::Jsonl),
        "csv" => Ok(Format::Csv),
        _ => Err(format!("unknown format `{s}` (jsonl, csv)")),
    }
}

/// Parses and validates a configuration, collecting every error found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();

    let mut d: Option<(usize, usize)> = None;
    let mut m: Option<(usize, usize)> = None;
    let mut mu: Option<(usize, Vec<f64>)> = None;
    let mut sigma: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut s0: Option<(usize, Vec<f64>)> = None;
    let mut sim = SimConfig::default();
    let mut verify = VerifyConfig::default();
    let mut output = OutputConfig::default();
    let mut seen: Vec<&str> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            push(&mut errors, Some(line), content, "expected `section.key = value`".into());
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            push(&mut errors, Some(line), key, "unknown key".into());
            continue;
        };
        if known != "market.sigma" {
            if seen.contains(&known) {
                push(&mut errors, Some(line), key, "duplicate key".into());
                continue;
            }
            seen.push(known);
        }
        let result: Result<(), String> = (|| {
            match known {
                "market.d" => d = Some((line, parse_int(value)?)),
                "market.m" => m = Some((line, parse_int(value)?)),
                "market.mu" => mu = Some((line, parse_list(value, parse_f64)?)),
                "market.sigma" => sigma.push((line, parse_list(value, parse_f64)?)),
                "market.s0" => s0 = Some((line, parse_list(value, parse_f64)?)),
                "simulation.dt" => sim.dt = parse_f64(value)?,
                "simulation.t_init" => sim.t_init = parse_f64(value)?,
                "simulation.tail_eps" => sim.tail_eps = parse_f64(value)?,
                "simulation.max_extensions" => sim.max_extensions = parse_int(value)?,
                "simulation.n_paths" => sim.n_paths = parse_int(value)?,
                "simulation.seed" => sim.seed = parse_int(value)?,
                "simulation.bridge_correction" => sim.bridge_correction = parse_bool(value)?,
                "simulation.chunk_size" => sim.chunk_size = parse_int(value)?,
                "verify.tests" => verify.tests = parse_list(value, parse_test)?,
                "verify.u_grid" => verify.u_grid = parse_int(value)?,
                "verify.bins" => verify.bins = parse_int(value)?,
                "verify.min_bin_count" => verify.min_bin_count = parse_int(value)?,
                "verify.calibration_tolerance" => verify.calibration_tolerance = parse_f64(value)?,
                "verify.calibration_time" => verify.calibration_time = parse_f64(value)?,
                "verify.s" => verify.s = parse_f64(value)?,
                "verify.t" => verify.t_values = parse_list(value, parse_f64)?,
                "verify.f" => verify.level_functions = parse_list(value, parse_level_function)?,
                "verify.events" => verify.events = parse_list(value, parse_event)?,
                "verify.hitting_levels" => verify.hitting_levels = parse_list(value, parse_f64)?,
                "verify.strategies" => verify.strategies = parse_list(value, parse_strategy)?,
                "verify.strict_loss" => verify.strict_loss = parse_list(value, parse_strategy)?,
                "verify.nu" => {
                    verify.deflator_nu = if value == "none" { None } else { Some(parse_list(value, parse_f64)?) }
                }
                "verify.mutation" => {
                    verify.flip_mu = match value {
                        "none" => false,
                        "flip_mu" => true,
                        _ => return Err(format!("unknown mutation `{value}` (none, flip_mu)")),
                    }
                }
                "output.directory" => {
                    if value.is_empty() {
                        return Err("empty directory".into());
                    }
                    output.directory = PathBuf::from(value)
                }
                "output.formats" => output.formats = parse_list(value, parse_format)?,
                "output.sample_paths" => output.sample_paths = parse_int(value)?,
                "output.traces" => output.traces = parse_int(value)?,
                _ => unreachable!("key list and match arms agree"),
            }
            Ok(())
        })();
        if let Err(message) = result {
            push(&mut errors, Some(line), key, message);
        }
    }

    if mu.is_none() {
        push(&mut errors, None, "market.mu", "missing".into());
    }
    if sigma.is_empty() {
        push(&mut errors, None, "market.sigma", "missing".into());
    }
    if s0.is_none() {
        push(&mut errors, None, "market.s0", "missing".into());
    }
    let market = match (&mu, &s0) {
        (Some((mu_line, mu)), Some((s0_line, s0))) if !sigma.is_empty() => {
            let rows: Vec<Vec<f64>> = sigma.iter().map(|(_, r)| r.clone()).collect();
            if let Some((line, d)) = d {
                if d != mu.len() {
                    push(&mut errors, Some(line), "market.d", format!("d = {d} but mu has {} entries", mu.len()));
                }
            }
            if let Some((line, m)) = m {
                if m != rows[0].len() {
                    push(
                        &mut errors,
                        Some(line),
                        "market.m",
                        format!("m = {m} but sigma rows have {} entries", rows[0].len()),
                    );
                }
            }
            if rows.len() != mu.len() {
                push(
                    &mut errors,
                    Some(sigma[0].0),
                    "market.sigma",
                    format!("{} rows for {} assets", rows.len(), mu.len()),
                );
            }
            if s0.len() != mu.len() {
                push(&mut errors, Some(*s0_line), "market.s0", format!("{} entries for {} assets", s0.len(), mu.len()));
            }
            match MarketSpec::new(mu.clone(), rows, s0.clone()) {
                Ok(spec) => Some(spec),
                Err(e) => {
                    if errors_empty_for_market(&errors) {
                        push(&mut errors, Some(*mu_line), "market", e.to_string());
                    }
                    None
                }
            }
        }
        _ => None,
    };

    if let Err(e) = sim.validate() {
        push(&mut errors, None, "simulation", e.to_string());
    }
    if output.formats.is_empty() {
        push(&mut errors, None, "output.formats", "at least one format is required".into());
    }
    if let Some(spec) = &market {
        if let Err(e) = verify.validate(spec.d()) {
            push(&mut errors, None, "verify", e.to_string());
        }
    }
    match market {
        Some(market) if errors.is_empty() => Ok(RunConfig { market, simulation: sim, verify, output }),
        _ => Err(errors),
    }
}

fn push(errors: &mut Vec<ConfigError>, line: Option<usize>, key: &str, message: String) {
    errors.push(ConfigError { line, key: key.to_string(), message });
}

fn errors_empty_for_market(errors: &[ConfigError]) -> bool {
    !errors.iter().any(|e| e.key.starts_with("market"))
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

/// Writes every key in canonical order with shortest round-trip decimals, so
/// that parsing the output reproduces the configuration exactly.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let spec = &cfg.market;
    let num = |v: &f64| v.to_string();
    let _ = writeln!(out, "market.d = {}", spec.d());
    let _ = writeln!(out, "market.m = {}", spec.m());
    let _ = writeln!(out, "market.mu = {}", join(spec.mu(), num));
    for row in spec.sigma() {
        let _ = writeln!(out, "market.sigma = {}", join(row, num));
    }
    let _ = writeln!(out, "market.s0 = {}", join(spec.s0(), num));
    let s = &cfg.simulation;
    let _ = writeln!(out, "simulation.dt = {}", s.dt);
    let _ = writeln!(out, "simulation.t_init = {}", s.t_init);
    let _ = writeln!(out, "simulation.tail_eps = {}", s.tail_eps);
    let _ = writeln!(out, "simulation.max_extensions = {}", s.max_extensions);
    let _ = writeln!(out, "simulation.n_paths = {}", s.n_paths);
    let _ = writeln!(out, "simulation.seed = {}", s.seed);
    let _ = writeln!(out, "simulation.bridge_correction = {}", s.bridge_correction);
    let _ = writeln!(out, "simulation.chunk_size = {}", s.chunk_size);
    let v = &cfg.verify;
    let _ = writeln!(out, "verify.tests = {}", join(&v.tests, |k| k.name().to_string()));
    let _ = writeln!(out, "verify.u_grid = {}", v.u_grid);
    let _ = writeln!(out, "verify.bins = {}", v.bins);
    let _ = writeln!(out, "verify.min_bin_count = {}", v.min_bin_count);
    let _ = writeln!(out, "verify.calibration_tolerance = {}", v.calibration_tolerance);
    let _ = writeln!(out, "verify.calibration_time = {}", v.calibration_time);
    let _ = writeln!(out, "verify.s = {}", v.s);
    let _ = writeln!(out, "verify.t = {}", join(&v.t_values, num));
    let _ = writeln!(out, "verify.f = {}", join(&v.level_functions, |f| f.label().to_string()));
    let _ = writeln!(out, "verify.events = {}", join(&v.events, Event::label));
    let _ = writeln!(out, "verify.hitting_levels = {}", join(&v.hitting_levels, num));
    let _ = writeln!(out, "verify.strategies = {}", join(&v.strategies, Strategy::label));
    let _ = writeln!(out, "verify.strict_loss = {}", join(&v.strict_loss, Strategy::label));
    let _ =
        writeln!(out, "verify.nu = {}", v.deflator_nu.as_ref().map_or_else(|| "none".to_string(), |nu| join(nu, num)));
    let _ = writeln!(out, "verify.mutation = {}", if v.flip_mu { "flip_mu" } else { "none" });
    let o = &cfg.output;
    let _ = writeln!(out, "output.directory = {}", o.directory.display());
    let _ = writeln!(out, "output.formats = {}", join(&o.formats, |f| f.name().to_string()));
    let _ = writeln!(out, "output.sample_paths = {}", o.sample_paths);
    let _ = writeln!(out, "output.traces = {}", o.traces);
    out
}
