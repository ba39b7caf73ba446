//! Report and data files. Writers use shortest round-trip decimals and fixed
//! column order; readers validate every row.

use std::io::{self, Write};

use serde::Deserialize;

use numeraire_core::enlarge::DoobSample;
use numeraire_core::simulate::PathSummary;
use numeraire_core::stats::ecdf;
use numeraire_core::verify::{CalibrationBin, TestReport, Verdict};
use numeraire_core::PathBundle;

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Invalid { row: usize, message: String },
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Refused => "refused",
    }
}

/// Quotes a free-text CSV field.
fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn write_reports_jsonl<W: Write>(reports: &[TestReport], mut out: W) -> io::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One report per nonblank line.
pub fn read_reports_jsonl(text: &str) -> Result<Vec<TestReport>, ReadError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: TestReport =
            serde_json::from_str(line).map_err(|e| ReadError::Json { line: i + 1, message: e.to_string() })?;
        let consistent = match r.verdict {
            Verdict::Refused => r.statistic.is_none() && r.threshold.is_none(),
            Verdict::Pass => matches!((r.statistic, r.threshold), (Some(s), Some(t)) if s <= t),
            Verdict::Fail => !matches!((r.statistic, r.threshold), (Some(s), Some(t)) if s <= t),
        };
        if !consistent {
            return Err(ReadError::Json {
                line: i + 1,
                message: "verdict disagrees with statistic and threshold".into(),
            });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(reports: &[TestReport], mut out: W) -> io::Result<()> {
    writeln!(out, "name,verdict,statistic,threshold,n_paths,truncated_fraction,details")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            quoted(&r.name),
            verdict_name(r.verdict),
            opt(r.statistic),
            opt(r.threshold),
            r.n_paths,
            r.truncated_fraction,
            quoted(&r.details)
        )?;
    }
    Ok(())
}

/// One row of `minima.csv`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MinimumRow {
    pub path: u64,
    pub rho: f64,
    pub i_inf_raw: f64,
    pub i_inf_corrected: f64,
    pub tail_mass: f64,
    pub truncated: bool,
    pub horizon: f64,
}

impl MinimumRow {
    /// Without growth no minimum exists; the row then records the unit
    /// starting level, flagged as truncated.
    pub fn from_summary(p: &PathSummary) -> Self {
        match &p.minimum {
            Some(m) => Self {
                path: p.index,
                rho: m.rho,
                i_inf_raw: m.i_inf_raw,
                i_inf_corrected: m.i_inf_corrected,
                tail_mass: m.tail_mass,
                truncated: m.truncated,
                horizon: m.horizon,
            },
            None => Self {
                path: p.index,
                rho: p.rho.t,
                i_inf_raw: 1.0,
                i_inf_corrected: 1.0,
                tail_mass: 1.0,
                truncated: true,
                horizon: p.horizon,
            },
        }
    }
}

pub fn write_minima_csv<W: Write>(rows: &[MinimumRow], mut out: W) -> io::Result<()> {
    writeln!(out, "path,rho,i_inf_raw,i_inf_corrected,tail_mass,truncated,horizon")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.path, r.rho, r.i_inf_raw, r.i_inf_corrected, r.tail_mass, r.truncated, r.horizon
        )?;
    }
    Ok(())
}

pub fn read_minima_csv(text: &str) -> Result<Vec<MinimumRow>, ReadError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<MinimumRow>().enumerate() {
        let r = rec?;
        let ok = r.rho >= 0.0
            && r.horizon >= r.rho
            && 0.0 < r.i_inf_corrected
            && r.i_inf_corrected <= r.i_inf_raw
            && r.i_inf_raw <= 1.0
            && (0.0..=1.0).contains(&r.tail_mass);
        if !ok {
            return Err(ReadError::Invalid { row: i + 1, message: "minimum record violates its invariants".into() });
        }
        rows.push(r);
    }
    Ok(rows)
}

#[derive(Debug, Deserialize)]
struct DoobRow {
    #[allow(dead_code)]
    path: u64,
    indicator: u8,
    predictor: f64,
}

pub fn write_doob_csv<W: Write>(samples: &[DoobSample], mut out: W) -> io::Result<()> {
    writeln!(out, "path,indicator,predictor")?;
    for (i, s) in samples.iter().enumerate() {
        writeln!(out, "{i},{},{}", u8::from(s.indicator), s.predictor)?;
    }
    Ok(())
}

pub fn read_doob_csv(text: &str) -> Result<Vec<DoobSample>, ReadError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize::<DoobRow>().enumerate() {
        let r = rec?;
        if r.indicator > 1 || !(0.0..=1.0).contains(&r.predictor) {
            return Err(ReadError::Invalid {
                row: i + 1,
                message: "indicator must be 0/1, predictor in [0, 1]".into(),
            });
        }
        out.push(DoobSample { indicator: r.indicator == 1, predictor: r.predictor });
    }
    Ok(out)
}

/// `i_inf,ecdf,uniform`: one row per path, sorted.
pub fn write_ecdf_csv<W: Write>(minima: &[f64], mut out: W) -> io::Result<()> {
    writeln!(out, "i_inf,ecdf,uniform")?;
    for (x, f) in ecdf(minima) {
        writeln!(out, "{x},{f},{}", x.clamp(0.0, 1.0))?;
    }
    Ok(())
}

pub fn write_calibration_csv<W: Write>(bins: &[CalibrationBin], mut out: W) -> io::Result<()> {
    writeln!(out, "lower,upper,count,mean_predictor,frequency")?;
    for b in bins {
        writeln!(out, "{},{},{},{},{}", b.lower, b.upper, b.count, b.mean_predictor, b.frequency)?;
    }
    Ok(())
}

/// `path,time,xhat,is_rho`, thinned to at most `max_points` grid points per
/// path; the point holding the minimum is always kept.
pub fn write_path_samples_csv<W: Write>(paths: &[PathBundle], max_points: usize, mut out: W) -> io::Result<()> {
    writeln!(out, "path,time,xhat,is_rho")?;
    for p in paths {
        let stride = p.len().div_ceil(max_points.max(1)).max(1);
        let k_rho = p.xhat.iter().enumerate().fold(0, |best, (k, &v)| if v < p.xhat[best] { k } else { best });
        for k in 0..p.len() {
            if k % stride == 0 || k == k_rho || k == p.len() - 1 {
                writeln!(out, "{},{},{},{}", p.index, p.times[k], p.xhat[k], u8::from(k == k_rho))?;
            }
        }
    }
    Ok(())
}
