//! JSON report schema.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

/// Where a check attains its worst value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Worst {
    pub point_id: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Offending entry, e.g. `H2[0,1]` or `(C, A, B) = (H0, V1, H1)`.
    pub entry: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    /// Whether the check contributes to the exit code.
    pub enforced: bool,
    pub measured: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst: Option<Worst>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    pub fn new(name: &str, measured: f64, tolerance: f64, worst: Option<Worst>) -> Self {
        // NaN measurements fail.
        let status = if measured <= tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        Check {
            name: name.to_string(),
            status,
            enforced: true,
            measured,
            tolerance,
            worst,
            detail: None,
        }
    }

    pub fn failed(name: &str, tolerance: f64, worst: Option<Worst>, detail: String) -> Self {
        Check {
            name: name.to_string(),
            status: Status::Fail,
            enforced: true,
            measured: f64::NAN,
            tolerance,
            worst,
            detail: Some(detail),
        }
    }

    pub fn informational(mut self) -> Self {
        self.enforced = false;
        self
    }

    pub fn blocking(&self) -> bool {
        self.enforced && self.status == Status::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionalRow {
    pub plane_id: usize,
    pub point_id: usize,
    pub k_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub point_id: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 10]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub family: String,
    pub k: f64,
    pub basis: Vec<&'static str>,
    pub rows: Vec<DecompositionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: &'static str,
    pub config: RunConfig,
    pub dim: usize,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_k: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sectional: Vec<SectionalRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<Decomposition>,
    /// Wall-clock seconds per phase.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl Report {
    pub fn new(command: &'static str, config: RunConfig, dim: usize) -> Self {
        Report {
            command,
            config,
            dim,
            passed: true,
            checks: Vec::new(),
            best_k: None,
            sectional: Vec::new(),
            decomposition: None,
            timings: None,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.passed &= !check.blocking();
        self.checks.push(check);
    }

    pub fn exit_code(&self) -> u8 {
        if self.passed {
            0
        } else {
            1
        }
    }

    /// One line per check, for stderr.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = match (c.status, c.enforced) {
                (Status::Pass, _) => "pass",
                (Status::Fail, true) => "FAIL",
                (Status::Fail, false) => "info",
            };
            s.push_str(&format!(
                "{tag:>4}  {:<26} {:>10.3e} (tol {:.0e})",
                c.name, c.measured, c.tolerance
            ));
            if c.status == Status::Fail {
                if let Some(w) = &c.worst {
                    s.push_str(&format!("  point {} {}", w.point_id, w.entry));
                }
                if let Some(d) = &c.detail {
                    s.push_str(&format!("  {d}"));
                }
            }
            s.push('\n');
        }
        s.push_str(if self.passed {
            "result: pass\n"
        } else {
            "result: FAIL\n"
        });
        s
    }
}
