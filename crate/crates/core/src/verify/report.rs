use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
    /// Monitored quantity without a gate.
    Info,
}

/// How a verdict follows from `(estimate, target, se)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Rule {
    /// `|estimate − target| ≤ value · se`.
    WithinSe(f64),
    /// `|estimate − target| ≤ value · |target|`.
    Relative(f64),
    /// `|estimate − target| ≤ value`.
    Absolute(f64),
    /// `estimate ≤ target`.
    AtMost,
    /// `estimate ≥ target`.
    AtLeast,
    Diagnostic,
}

impl Rule {
    pub fn holds(&self, estimate: f64, target: f64, se: f64) -> bool {
        let diff = (estimate - target).abs();
        match *self {
            Rule::WithinSe(k) => diff <= k * se,
            Rule::Relative(tol) => diff <= tol * target.abs(),
            Rule::Absolute(tol) => diff <= tol,
            Rule::AtMost => estimate <= target,
            Rule::AtLeast => estimate >= target,
            Rule::Diagnostic => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    pub se: f64,
    pub n_replicas: usize,
    pub rule: Rule,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl McReport {
    pub fn new(name: impl Into<String>, estimate: f64, target: f64, se: f64, n_replicas: usize, rule: Rule) -> Self {
        let mut r = Self {
            name: name.into(),
            estimate,
            target,
            se,
            n_replicas,
            rule,
            verdict: Verdict::Fail,
            note: None,
        };
        r.verdict = r.recompute();
        r
    }

    /// Exact identity checked to a tolerance.
    pub fn exact(name: impl Into<String>, estimate: f64, target: f64, tol: f64) -> Self {
        Self::new(name, estimate, target, 0.0, 0, Rule::Absolute(tol))
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Marks the report inconclusive (never silently passes).
    pub fn inconclusive(mut self, reason: impl Into<String>) -> Self {
        self.verdict = Verdict::Inconclusive;
        self.note = Some(reason.into());
        self
    }

    pub fn recompute(&self) -> Verdict {
        if self.rule == Rule::Diagnostic {
            return Verdict::Info;
        }
        if !self.estimate.is_finite() || !self.target.is_finite() {
            return Verdict::Fail;
        }
        if matches!(self.rule, Rule::WithinSe(_)) && !(self.se > 0.0) {
            return Verdict::Inconclusive;
        }
        if self.rule.holds(self.estimate, self.target, self.se) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(&self) -> bool {
        matches!(self.verdict, Verdict::Pass | Verdict::Info)
    }

    /// `PASS name: estimate vs target (rule)`.
    pub fn line(&self) -> String {
        let tag = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::Info => "INFO",
        };
        let rule = match self.rule {
            Rule::WithinSe(k) => format!("|Δ| <= {k} se, se = {:.3e}", self.se),
            Rule::Relative(t) => format!("rel <= {t:e}"),
            Rule::Absolute(t) => format!("abs <= {t:e}"),
            Rule::AtMost => "<= target".into(),
            Rule::AtLeast => ">= target".into(),
            Rule::Diagnostic => "diagnostic".into(),
        };
        let mut s = format!("{tag} {}: {:.10e} vs {:.10e} ({rule}", self.name, self.estimate, self.target);
        if self.n_replicas > 0 {
            s.push_str(&format!(", n = {}", self.n_replicas));
        }
        s.push(')');
        if let Some(n) = &self.note {
            s.push_str(&format!(" [{n}]"));
        }
        s
    }
}

/// Raw per-replica (or per-grid-point) values behind a set of reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RawTable {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

/// Reports plus the raw data they were computed from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutput {
    pub reports: Vec<McReport>,
    pub raw: Vec<RawTable>,
}

impl VerifyOutput {
    pub fn push(&mut self, r: McReport) {
        self.reports.push(r);
    }

    pub fn extend(&mut self, other: VerifyOutput) {
        self.reports.extend(other.reports);
        self.raw.extend(other.raw);
    }

    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(McReport::passed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_are_recomputable() {
        let r = McReport::new("a", 1.05, 1.0, 0.02, 10, Rule::WithinSe(3.0));
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(McReport::new("b", 1.2, 1.0, 0.0, 0, Rule::Relative(0.1)).verdict, Verdict::Fail);
        assert_eq!(McReport::new("c", 0.1, 0.05, 0.0, 0, Rule::AtMost).verdict, Verdict::Fail);
        assert_eq!(McReport::new("d", 1.0, 1.0, 0.0, 5, Rule::WithinSe(3.0)).verdict, Verdict::Inconclusive);
        let json = serde_json::to_string(&r).unwrap();
        let back: McReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.recompute(), back.verdict);
        assert!(r.line().starts_with("PASS a"));
    }
}
