use std::io::Write;
use std::path::Path;

use crate::dataset::Role;
use crate::error::{Error, Result};

/// Scores of one method over a labelled test set, in input order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub method: String,
    pub scores: Vec<f64>,
    pub roles: Vec<Role>,
    pub sample_index: Vec<usize>,
}

impl ScoreReport {
    pub fn new(
        method: impl Into<String>,
        scores: Vec<f64>,
        roles: Vec<Role>,
        sample_index: Vec<usize>,
    ) -> Result<Self> {
        if scores.len() != roles.len() || scores.len() != sample_index.len() {
            return Err(Error::shape(
                "ScoreReport::new",
                scores.len(),
                (roles.len(), sample_index.len()),
            ));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Data(format!("non-finite score for sample {i}")));
        }
        Ok(Self {
            method: method.into(),
            scores,
            roles,
            sample_index,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores_for(&self, role: Role) -> Vec<f64> {
        self.scores
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == role)
            .map(|(s, _)| *s)
            .collect()
    }

    /// Appends `sample_index,role,method,score` rows.
    pub fn write_rows(&self, out: &mut impl Write) -> Result<()> {
        for ((s, r), i) in self.scores.iter().zip(&self.roles).zip(&self.sample_index) {
            writeln!(out, "{i},{r},{},{s}", self.method)?;
        }
        Ok(())
    }

    pub const CSV_HEADER: &'static str = "sample_index,role,method,score";

    /// Writes several reports into one score dump.
    pub fn write_csv(reports: &[ScoreReport], path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in reports {
            r.write_rows(&mut out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a score dump back, one report per method in order of first appearance.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ScoreReport>> {
        let mut reader = ::csv::Reader::from_path(path.as_ref()).map_err(|e| Error::Format(e.to_string()))?;
        let mut reports: Vec<ScoreReport> = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let bad = |col: usize, msg: &str| Error::Parse {
                row: row + 1,
                col,
                msg: msg.into(),
            };
            if rec.len() != 4 {
                return Err(Error::Format(format!("row {}: expected 4 fields", row + 1)));
            }
            let index: usize = rec[0].parse().map_err(|_| bad(1, "sample_index"))?;
            let role = Role::parse(&rec[1]).ok_or_else(|| bad(2, "role"))?;
            let score: f64 = rec[3].parse().map_err(|_| bad(4, "score"))?;
            if !score.is_finite() {
                return Err(bad(4, "non-finite score"));
            }
            let method = &rec[2];
            let report = match reports.iter_mut().position(|r| r.method == method) {
                Some(p) => &mut reports[p],
                None => {
                    reports.push(ScoreReport {
                        method: method.to_string(),
                        scores: vec![],
                        roles: vec![],
                        sample_index: vec![],
                    });
                    reports.last_mut().unwrap()
                }
            };
            report.scores.push(score);
            report.roles.push(role);
            report.sample_index.push(index);
        }
        Ok(reports)
    }
}
