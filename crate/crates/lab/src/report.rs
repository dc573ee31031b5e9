use std::fmt;
use std::path::Path;

use serde::Serialize;

use pmean_fair::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

/// One checked claim. The comparison is baked into `verdict` when the row is built.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub claim: String,
    pub measured: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub id: String,
    pub rows: Vec<Row>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(id: &str) -> Self {
        ExperimentReport {
            id: id.to_string(),
            ..Default::default()
        }
    }

    fn push(&mut self, claim: String, measured: f64, bound: f64, tolerance: f64, ok: bool) {
        self.rows.push(Row {
            experiment: self.id.clone(),
            claim,
            measured,
            bound,
            tolerance,
            verdict: verdict(ok),
        });
    }

    /// `|measured - bound| <= tolerance`
    pub fn near(&mut self, claim: impl Into<String>, measured: f64, bound: f64, tolerance: f64) {
        let ok = (measured - bound).abs() <= tolerance;
        self.push(claim.into(), measured, bound, tolerance, ok);
    }

    /// `measured <= bound + tolerance`
    pub fn at_most(&mut self, claim: impl Into<String>, measured: f64, bound: f64, tolerance: f64) {
        let ok = measured <= bound + tolerance;
        self.push(claim.into(), measured, bound, tolerance, ok);
    }

    /// `measured >= bound - tolerance`
    pub fn at_least(&mut self, claim: impl Into<String>, measured: f64, bound: f64, tolerance: f64) {
        let ok = measured >= bound - tolerance;
        self.push(claim.into(), measured, bound, tolerance, ok);
    }

    /// Strict `measured < bound`.
    pub fn below(&mut self, claim: impl Into<String>, measured: f64, bound: f64) {
        let ok = measured < bound;
        self.push(claim.into(), measured, bound, 0.0, ok);
    }

    /// Strict `measured > bound`.
    pub fn above(&mut self, claim: impl Into<String>, measured: f64, bound: f64) {
        let ok = measured > bound;
        self.push(claim.into(), measured, bound, 0.0, ok);
    }

    /// Counter that must be zero.
    pub fn none(&mut self, claim: impl Into<String>, count: usize) {
        self.push(claim.into(), count as f64, 0.0, 0.0, count == 0);
    }

    pub fn flag(&mut self, claim: impl Into<String>, ok: bool) {
        self.push(claim.into(), if ok { 1.0 } else { 0.0 }, 1.0, 0.0, ok);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.verdict == Verdict::Pass)
    }

    pub fn row(&self, claim_prefix: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.claim.starts_with(claim_prefix))
    }
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "== {} [{}]", self.id, verdict(self.passed()))?;
        for r in &self.rows {
            writeln!(
                f,
                "  {} {}: measured {:.6e}, bound {:.6e}, tol {:.1e}",
                r.verdict, r.claim, r.measured, r.bound, r.tolerance
            )?;
        }
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        Ok(())
    }
}

pub fn write_csv(path: &Path, reports: &[ExperimentReport]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in reports.iter().flat_map(|r| &r.rows) {
        w.serialize(r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
