//! Identity/check reports: one record per verified identity, with a
//! term-by-term breakdown so a failure localizes to a single step.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermEntry {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub id: String,
    pub left: f64,
    pub right: f64,
    pub residual: f64,
    pub relative_residual: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

impl IdentityReport {
    pub fn new(id: impl Into<String>, left: f64, right: f64) -> IdentityReport {
        let residual = (left - right).abs();
        let denom = left.abs() + right.abs();
        let relative_residual = if residual == 0.0 { 0.0 } else { residual / denom };
        IdentityReport {
            id: id.into(),
            left,
            right,
            residual,
            relative_residual,
            terms: Vec::new(),
            tolerance: None,
            pass: None,
        }
    }

    pub fn term(mut self, name: impl Into<String>, value: f64) -> Self {
        self.terms.push(TermEntry {
            name: name.into(),
            value,
        });
        self
    }

    /// Assert the absolute residual against `tol`.
    pub fn with_abs_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self.pass = Some(self.residual < tol);
        self
    }

    /// Assert the relative residual against `tol`.
    pub fn with_rel_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self.pass = Some(self.relative_residual < tol);
        self
    }

    pub fn term_value(&self, name: &str) -> Option<f64> {
        self.terms
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.value)
    }

    pub fn csv_header() -> &'static str {
        "id,left,right,residual,relative_residual,pass"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{}",
            self.id,
            self.left,
            self.right,
            self.residual,
            self.relative_residual,
            self.pass.map(|p| p.to_string()).unwrap_or_default()
        )
    }
}

/// Full report for one CLI run; serialized as deterministic JSON.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RunReport {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub checks: Vec<IdentityReport>,
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> RunReport {
        RunReport {
            command: command.into(),
            seed: None,
            checks: Vec::new(),
        }
    }

    /// True iff every asserted check passed (unasserted checks don't count).
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass != Some(false))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}
