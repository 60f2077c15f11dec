use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::formula::Formula;

/// Robustness of a formula for every subsignal of every batch element.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessTrace {
    rows: Vec<Vec<f64>>,
    formula: Formula,
    t0: f64,
    dt: f64,
}

impl RobustnessTrace {
    pub(crate) fn new(rows: Vec<Vec<f64>>, formula: Formula, t0: f64, dt: f64) -> Self {
        Self { rows, formula, t0, dt }
    }

    pub fn batch_size(&self) -> usize {
        self.rows.len()
    }

    /// Trace of batch element `b` over its valid length.
    pub fn row(&self, b: usize) -> &[f64] {
        &self.rows[b]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `rho(s_{t_0}, phi)` per batch element.
    pub fn heads(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `t,rho` for a single element; `t,rho_0,rho_1,...` for batches.
    /// Elements shorter than the longest leave trailing cells empty.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        if self.rows.len() == 1 {
            header.push("rho".into());
        } else {
            header.extend((0..self.rows.len()).map(|b| format!("rho_{b}")));
        }
        w.write_record(&header)?;
        let len = self.rows.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..len {
            let mut rec = vec![(self.t0 + i as f64 * self.dt).to_string()];
            rec.extend(self.rows.iter().map(|r| r.get(i).map(|v| format!("{v}")).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Out<'a> {
            formula: String,
            t0: f64,
            dt: f64,
            traces: &'a [Vec<f64>],
        }
        Ok(serde_json::to_string(&Out {
            formula: self.formula.to_string(),
            t0: self.t0,
            dt: self.dt,
            traces: &self.rows,
        })?)
    }
}
