//! End-to-end acceptance checks at desk scale. Prints one PASS/FAIL line per
//! criterion and exits nonzero if any criterion fails.
//!
//! `NUMERAIRE_ACCEPTANCE_N` lowers the path count of the main run for quick
//! local iteration; the default is the full 100 000 paths.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use numeraire_cli::config::{parse_config, RunConfig};
use numeraire_cli::run::{execute, exit_code, EXIT_PASS};
use numeraire_core::verify::SuiteOutcome;
use numeraire_core::{TestReport, Verdict};

const DEFAULT_MARKET: &str = "market.mu = 0.1\nmarket.sigma = 0.2\nmarket.s0 = 1\n";

const SIMULATION: &str = "\
simulation.dt = 0.0009765625
simulation.tail_eps = 0.0001
simulation.bridge_correction = true
simulation.seed = 20240601
";

fn config(market: &str, extra: &str, n_paths: u64) -> RunConfig {
    let text = format!("{market}{SIMULATION}simulation.n_paths = {n_paths}\n{extra}");
    parse_config(&text).unwrap_or_else(|e| panic!("acceptance config invalid: {e:?}"))
}

fn run(cfg: &RunConfig, dir: &Path) -> SuiteOutcome {
    execute(cfg, dir).unwrap_or_else(|e| panic!("run failed: {e}"))
}

fn select<'a>(reports: &'a [TestReport], prefix: &str) -> Vec<&'a TestReport> {
    reports.iter().filter(|r| r.name.starts_with(prefix)).collect()
}

struct Criterion {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn summarize(reports: &[&TestReport]) -> (bool, String) {
    let pass = !reports.is_empty() && reports.iter().all(|r| r.verdict == Verdict::Pass);
    let worst =
        reports.iter().filter_map(|r| Some((r.statistic? / r.threshold?, r))).max_by(|a, b| a.0.total_cmp(&b.0));
    let detail = match worst {
        Some((_, r)) => format!(
            "{} checks; tightest {} = {} vs {}; truncated {}",
            reports.len(),
            r.name,
            r.statistic.unwrap_or(f64::NAN),
            r.threshold.unwrap_or(f64::NAN),
            r.truncated_fraction
        ),
        None => format!("{} checks, none judged", reports.len()),
    };
    (pass, detail)
}

fn judged(id: u32, title: &'static str, reports: Vec<&TestReport>) -> Criterion {
    let (pass, detail) = summarize(&reports);
    Criterion { id, title, pass, detail }
}

fn main() -> ExitCode {
    let n_main: u64 = std::env::var("NUMERAIRE_ACCEPTANCE_N").ok().and_then(|v| v.parse().ok()).unwrap_or(100_000);
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut results = Vec::new();

    let start = Instant::now();
    let main = run(&config(DEFAULT_MARKET, "", n_main), &tmp.path().join("main"));
    let elapsed = start.elapsed().as_secs_f64();
    let r = &main.reports;

    let mut c1 = judged(1, "uniform law of I(inf)", select(r, "uniform_minimum"));
    c1.detail.push_str(&format!("; main run {elapsed:.1}s"));
    results.push(c1);
    results.push(judged(2, "mean minimum", select(r, "mean_minimum")));
    let mut c3 = select(r, "supermartingale_at_rho");
    c3.extend(select(r, "numeraire_at_rho_half"));
    c3.extend(select(r, "strict_loss_at_rho"));
    results.push(judged(3, "supermartingale at rho", c3));
    results.push(judged(4, "Doob calibration", select(r, "doob_calibration")));
    results.push(judged(5, "stopped-price martingale battery", select(r, "stopped_price_martingale")));
    results.push(judged(6, "optional sampling estimators", select(r, "optional_sampling")));
    results.push(judged(7, "short-position identity", select(r, "short_position_identity")));
    let mut c8 = select(r, "hitting_probability");
    c8.extend(select(r, "hitting_level"));
    results.push(judged(8, "hitting-time law", c8));

    let deflator = config(
        "market.d = 1\nmarket.m = 2\nmarket.mu = 0.1\nmarket.sigma = 0.2, 0\nmarket.s0 = 1\n",
        "verify.tests = alternative_deflator\nverify.nu = 0, 0.3\n",
        n_main,
    );
    let out = run(&deflator, &tmp.path().join("deflator"));
    let mut c9 = select(&out.reports, "supermartingale_at_phi");
    c9.extend(select(&out.reports, "deflator_argmax_distinct"));
    results.push(judged(9, "alternative deflator argmax", c9));

    results.push(determinism(tmp.path()));
    results.push(degenerate(tmp.path()));

    let mut failed = 0;
    for c in &results {
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status}: {} ({})", c.id, c.title, c.detail);
        failed += usize::from(!c.pass);
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

const DETERMINISM_PATHS: u64 = 5_000;
const REPORT_FILES: [&str; 4] = ["reports.jsonl", "summary.csv", "minima.csv", "doob_samples.csv"];

/// The same configuration under one and four worker threads.
fn determinism(root: &Path) -> Criterion {
    let cfg = config(DEFAULT_MARKET, "", DETERMINISM_PATHS);
    for threads in [1, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("pool");
        pool.install(|| run(&cfg, &root.join(format!("threads{threads}"))));
    }
    let mut differing = Vec::new();
    for f in REPORT_FILES {
        let a = std::fs::read(root.join("threads1").join(f)).expect("read");
        let b = std::fs::read(root.join("threads4").join(f)).expect("read");
        if a != b {
            differing.push(f);
        }
    }
    Criterion {
        id: 10,
        title: "determinism across thread counts",
        pass: differing.is_empty(),
        detail: if differing.is_empty() {
            format!("{} files byte-identical at {DETERMINISM_PATHS} paths, 1 vs 4 threads", REPORT_FILES.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    }
}

const DEGENERATE_PATHS: u64 = 10_000;
const RHO_DEPENDENT: [&str; 8] = [
    "uniform_minimum",
    "mean_minimum",
    "supermartingale_at_rho",
    "strict_loss_at_rho",
    "doob_calibration",
    "optional_sampling",
    "hitting_probability",
    "hitting_level",
];

/// Zero drift: no growth, no minimum, and every minimum-dependent check refuses.
fn degenerate(root: &Path) -> Criterion {
    let cfg = config("market.mu = 0\nmarket.sigma = 0.2\nmarket.s0 = 1\n", "", DEGENERATE_PATHS);
    let out = run(&cfg, &root.join("degenerate"));
    let flag_ok = out.viability.na1_holds && !out.viability.asymptotically_suboptimal;
    let not_refused: Vec<&str> = out
        .reports
        .iter()
        .filter(|r| RHO_DEPENDENT.iter().any(|p| r.name.starts_with(p)) && r.verdict != Verdict::Refused)
        .map(|r| r.name.as_str())
        .collect();
    let refused = out.reports.iter().filter(|r| r.verdict == Verdict::Refused).count();
    let code = exit_code(&out);
    Criterion {
        id: 11,
        title: "degenerate market refusals",
        pass: flag_ok && not_refused.is_empty() && refused > 0 && code == EXIT_PASS,
        detail: format!(
            "asymptotically_suboptimal = {}; {refused} refusals; not refused: [{}]; exit {code}",
            out.viability.asymptotically_suboptimal,
            not_refused.join(", ")
        ),
    }
}
