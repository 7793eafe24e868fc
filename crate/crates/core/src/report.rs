//! Uniform result type for every checker, with JSON and CSV writers.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The computation could not decide (empty sample, quadrature budget).
    Inconclusive,
    /// A profile or constant hunt that never fails a run.
    Diagnostic,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_fail(self) -> bool {
        self == Verdict::Fail
    }
}

/// Rows of numeric data, one per witness or grid sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::error::LabError {
    std::io::Error::other(e.to_string()).into()
}

/// Outcome of one checker: the condition, the best fitted constant, the
/// worst witness and a verdict. Sampled checks never claim universal truth;
/// `family` names the sample the verdict refers to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub params: BTreeMap<String, f64>,
    pub best_constant: f64,
    pub witness: BTreeMap<String, f64>,
    pub verdict: Verdict,
    #[serde(default)]
    pub extras: BTreeMap<String, f64>,
    #[serde(default)]
    pub family: String,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub table: Table,
}

impl ConditionReport {
    pub fn new(condition: &str) -> Self {
        Self {
            condition: condition.to_string(),
            params: BTreeMap::new(),
            best_constant: 0.0,
            witness: BTreeMap::new(),
            verdict: Verdict::Inconclusive,
            extras: BTreeMap::new(),
            family: String::new(),
            notes: Vec::new(),
            table: Table::default(),
        }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn set_extra(&mut self, key: &str, value: f64) {
        self.extras.insert(key.to_string(), value);
    }

    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extras.get(key).copied()
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn set_witness(&mut self, entries: &[(&str, f64)]) {
        self.witness = entries.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Tracks the largest value seen together with the witness that produced it.
#[derive(Clone, Debug)]
pub(crate) struct Worst<W> {
    pub value: f64,
    pub witness: Option<W>,
}

impl<W> Worst<W> {
    pub fn new(start: f64) -> Self {
        Self {
            value: start,
            witness: None,
        }
    }

    pub fn offer(&mut self, value: f64, witness: W) {
        if value > self.value || (self.witness.is_none() && value >= self.value) {
            self.value = value;
            self.witness = Some(witness);
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        if let Some(w) = other.witness {
            self.offer(other.value, w);
        }
        self
    }
}
