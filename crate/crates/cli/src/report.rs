//! Machine-readable verification reports.
//!
//! A report is deterministic for a fixed model, seed, and crate version;
//! wall-clock timings are kept in a separate top-level field so the rest of
//! the document can be compared byte for byte.

use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub version: String,
    pub model: String,
    pub seed: u64,
    pub pass: bool,
    pub suites: Vec<SuiteReport>,
    /// Wall time per suite in milliseconds; excluded from the stable form.
    pub wall_ms: BTreeMap<String, u64>,
}

impl Report {
    pub fn new(model: &str, seed: u64) -> Self {
        Report {
            version: env!("CARGO_PKG_VERSION").to_string(),
            model: model.to_string(),
            seed,
            pass: true,
            suites: Vec::new(),
            wall_ms: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, suite: SuiteReport, wall_ms: u64) {
        self.pass &= suite.passed();
        self.wall_ms.insert(suite.name.clone(), wall_ms);
        self.suites.push(suite);
    }

    /// Full JSON document, timings included.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Deterministic JSON: identical bytes for identical model + seed +
    /// version (timings zeroed out).
    pub fn to_stable_json(&self) -> String {
        let mut stable = self.clone();
        stable.wall_ms.clear();
        serde_json::to_string_pretty(&stable).expect("report serializes")
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub status: SuiteStatus,
    /// Present only for skipped suites.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn new(name: &str) -> Self {
        SuiteReport {
            name: name.to_string(),
            status: SuiteStatus::Pass,
            skip_reason: None,
            checks: Vec::new(),
        }
    }

    pub fn skipped(name: &str, reason: &str) -> Self {
        SuiteReport {
            name: name.to_string(),
            status: SuiteStatus::Skipped,
            skip_reason: Some(reason.to_string()),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: CheckReport) {
        if !check.pass {
            self.status = SuiteStatus::Fail;
        }
        self.checks.push(check);
    }

    pub fn passed(&self) -> bool {
        !matches!(self.status, SuiteStatus::Fail)
    }

    /// Names of the failing checks.
    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub value: f64,
    /// Human-readable bound the value was held against.
    pub bound: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_point: Option<Vec<f64>>,
}

impl CheckReport {
    /// `value <= bound`.
    pub fn le(name: &str, value: f64, bound: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            value,
            bound: format!("<= {bound:e}"),
            pass: value <= bound,
            worst_point: None,
        }
    }

    /// `value >= bound`.
    pub fn ge(name: &str, value: f64, bound: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            value,
            bound: format!(">= {bound:e}"),
            pass: value >= bound,
            worst_point: None,
        }
    }

    /// `lo <= value <= hi`.
    pub fn in_range(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            value,
            bound: format!("in [{lo}, {hi}]"),
            pass: (lo..=hi).contains(&value),
            worst_point: None,
        }
    }

    pub fn with_worst_point(mut self, point: Vec<f64>) -> Self {
        self.worst_point = Some(point);
        self
    }
}
