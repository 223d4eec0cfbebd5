//! Result rows and their CSV form.

use std::io::Write;

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// SARRM found no admissible block count for this sample size and `ε`.
    Infeasible,
    /// A baseline asked to run at `ε = ∞`.
    NotApplicable,
    Failed,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Infeasible => "infeasible",
            Status::NotApplicable => "not_applicable",
            Status::Failed => "failed",
        }
    }
}

/// One (grid point, test) cell. `m` is `None` for paired data; `amplitude`
/// and `nu` are `None` where the scenario does not use them.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub test: String,
    pub statistic: String,
    pub epsilon: f64,
    pub delta: f64,
    pub n: usize,
    pub m: Option<usize>,
    pub d: usize,
    pub amplitude: Option<f64>,
    pub nu: Option<f64>,
    pub alpha: f64,
    pub permutations: usize,
    pub rejections: u64,
    pub repetitions: usize,
    pub status: Status,
    pub seconds: f64,
}

impl ResultRow {
    /// Rejection rate, for rows with status `ok`.
    pub fn power(&self) -> Option<f64> {
        (self.status == Status::Ok).then(|| self.rejections as f64 / self.repetitions as f64)
    }

    pub fn interval(&self) -> Option<(f64, f64)> {
        (self.status == Status::Ok).then(|| wilson_interval(self.rejections, self.repetitions as u64))
    }
}

pub const COLUMNS: [&str; 18] = [
    "scenario",
    "test",
    "statistic",
    "epsilon",
    "delta",
    "n",
    "m",
    "d",
    "amplitude",
    "nu",
    "alpha",
    "B",
    "rejections",
    "repetitions",
    "power",
    "ci_low",
    "ci_high",
    "status",
];

fn num(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the table with the fixed columns, plus `seconds` when `timing`.
pub fn write_csv<W: Write>(rows: &[ResultRow], timing: bool, out: W) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| CliError::Failed(format!("writing table: {e}"));
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if timing {
        header.push("seconds");
    }
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let ci = r.interval();
        let mut rec = vec![
            r.scenario.clone(),
            r.test.clone(),
            r.statistic.clone(),
            num(r.epsilon),
            num(r.delta),
            r.n.to_string(),
            opt(r.m),
            r.d.to_string(),
            opt(r.amplitude.map(num)),
            opt(r.nu.map(num)),
            num(r.alpha),
            r.permutations.to_string(),
            r.rejections.to_string(),
            r.repetitions.to_string(),
            opt(r.power().map(num)),
            opt(ci.map(|c| num(c.0))),
            opt(ci.map(|c| num(c.1))),
            r.status.name().to_string(),
        ];
        if timing {
            rec.push(format!("{:.3}", r.seconds));
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Failed(format!("writing table: {e}")))?;
    Ok(())
}

pub fn csv_string(rows: &[ResultRow], timing: bool) -> CliResult<String> {
    let mut buf = Vec::new();
    write_csv(rows, timing, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
