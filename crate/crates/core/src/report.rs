//! Machine-readable command reports with stable key order.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::graded::GradedLinearMap;
use crate::scenario::{Params, SCHEMA_VERSION};

/// One named residual compared against its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes iff `residual ≤ tolerance`; NaN fails.
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            method: None,
            residual,
            tolerance,
            passed: residual <= tolerance,
        }
    }

    pub fn with_method(mut self, method: impl Into<String>) -> Self {
        self.method = Some(method.into());
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub params: Params,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub data: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Wall-clock milliseconds per stage; only present when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl Report {
    pub fn new(command: &str, seed: u64, params: Params) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            seed,
            params,
            passed: true,
            checks: Vec::new(),
            data: BTreeMap::new(),
            warnings: Vec::new(),
            timings: None,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.passed &= check.passed;
        self.checks.push(check);
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("report data serialises");
        self.data.insert(key.into(), value);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

/// Nonzero blocks of a graded map as row-major matrices keyed `"k->l"`.
pub fn blocks_json(m: &GradedLinearMap) -> BTreeMap<String, Vec<Vec<f64>>> {
    let d = m.degree();
    m.blocks()
        .into_iter()
        .filter(|(_, b)| b.nrows() > 0 && b.ncols() > 0)
        .map(|(k, b)| {
            let rows = (0..b.nrows())
                .map(|i| b.row(i).iter().copied().collect())
                .collect();
            (format!("{k}->{}", k + d), rows)
        })
        .collect()
}
