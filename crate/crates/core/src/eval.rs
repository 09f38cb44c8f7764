//! AUROC and ROC curves. Higher scores are taken to mean "more normal".

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Role;
use crate::error::{Error, Result};
use crate::scoring::ScoreReport;

fn check(normal: &[f64], anomaly: &[f64]) -> Result<()> {
    if normal.is_empty() || anomaly.is_empty() {
        return Err(Error::param(format!(
            "AUROC needs nonempty score lists (got {} normal, {} anomaly)",
            normal.len(),
            anomaly.len()
        )));
    }
    if normal.iter().chain(anomaly).any(|s| !s.is_finite()) {
        return Err(Error::param("AUROC scores must be finite"));
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// P(normal > anomaly) + ½·P(normal = anomaly) over all pairs.
///
/// Both lists are sorted and merged; wins are counted in half-units as exact
/// integers, so the single division at the end is the only rounding.
pub fn auroc(normal: &[f64], anomaly: &[f64]) -> Result<f64> {
    check(normal, anomaly)?;
    let n = sorted(normal);
    let a = sorted(anomaly);
    let mut doubled: u128 = 0;
    let (mut i, mut j) = (0, 0);
    while i < n.len() {
        let v = n[i];
        let mut run = 0;
        while i < n.len() && n[i] == v {
            run += 1;
            i += 1;
        }
        while j < a.len() && a[j] < v {
            j += 1;
        }
        // `j` anomalies lie strictly below `v`; `equal` tie with it.
        let mut equal = 0;
        while j + equal < a.len() && a[j + equal] == v {
            equal += 1;
        }
        doubled += run as u128 * (2 * j as u128 + equal as u128);
    }
    Ok(doubled as f64 / (2.0 * n.len() as f64 * a.len() as f64))
}

/// One operating point: the rates at which samples with score ≥ `threshold`
/// are accepted as normal. TPR is measured on normals, FPR on anomalies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "fpr,tpr,threshold")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sweeps the threshold down through every distinct score. The first point is
/// (0, 0) at threshold +∞; the last is (1, 1) at the smallest score.
pub fn roc_curve(normal: &[f64], anomaly: &[f64]) -> Result<RocCurve> {
    check(normal, anomaly)?;
    let mut n = sorted(normal);
    let mut a = sorted(anomaly);
    n.reverse();
    a.reverse();
    let (nn, na) = (n.len() as f64, a.len() as f64);
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut i, mut j) = (0, 0);
    while i < n.len() || j < a.len() {
        let t = match (n.get(i), a.get(j)) {
            (Some(x), Some(y)) => x.max(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        while i < n.len() && n[i] == t {
            i += 1;
        }
        while j < a.len() && a[j] == t {
            j += 1;
        }
        points.push(RocPoint {
            fpr: j as f64 / na,
            tpr: i as f64 / nn,
            threshold: t,
        });
    }
    Ok(RocCurve { points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub method: String,
    pub auroc: f64,
    pub n_normal: usize,
    pub n_anomaly: usize,
}

/// AUROC of a score report, test normals against test anomalies.
pub fn evaluate(report: &ScoreReport) -> Result<EvalResult> {
    let normal = report.scores_for(Role::TestNormal);
    let anomaly = report.scores_for(Role::TestAnomaly);
    let auroc = auroc(&normal, &anomaly).map_err(|e| match e {
        Error::Parameter(m) => Error::Metric(format!("{}: {m}", report.method)),
        other => other,
    })?;
    Ok(EvalResult {
        method: report.method.clone(),
        auroc,
        n_normal: normal.len(),
        n_anomaly: anomaly.len(),
    })
}
