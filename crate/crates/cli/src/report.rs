//! Report types, verdicts and the rerun protocol for statistical checks.

use crate::config::{CanonicalConfig, CheckKind};
use rwre_core::rng::split_seed;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt;

pub const SCHEMA_VERSION: &str = "rwre-report/1";

/// Attempts before a statistical check is declared failed.
pub const MAX_ATTEMPTS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    SoftFail,
    Fail,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_failure(self) -> bool {
        self == Verdict::Fail
    }

    /// The worse of the verdicts; `Pass` for none.
    pub fn combine(it: impl IntoIterator<Item = Verdict>) -> Verdict {
        it.into_iter().max().unwrap_or(Verdict::Pass)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::SoftFail => "SOFT-FAIL",
            Verdict::Fail => "FAIL",
        })
    }
}

/// Outcome of a statistical check after the rerun protocol.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Attempts {
    pub verdict: Verdict,
    /// Seeds of the attempts actually run, in order.
    pub seeds: Vec<u64>,
    /// Pass flag of each attempt.
    pub passed: Vec<bool>,
    /// Results of the last attempt.
    pub results: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<String>,
}

/// Runs `attempt` with seeds split from `seed` until it passes, at most
/// [`MAX_ATTEMPTS`] times. A first-attempt pass is `Pass`, a later pass is
/// `SoftFail`, and [`MAX_ATTEMPTS`] consecutive failures are `Fail`.
pub fn with_reruns<F>(seed: u64, mut attempt: F) -> anyhow::Result<Attempts>
where
    F: FnMut(u64) -> anyhow::Result<(bool, Value)>,
{
    let mut seeds = Vec::new();
    let mut passed = Vec::new();
    let mut results = Value::Null;
    for a in 0..MAX_ATTEMPTS {
        let s = split_seed(seed, a as u64);
        let (ok, r) = attempt(s)?;
        seeds.push(s);
        passed.push(ok);
        results = r;
        if ok {
            break;
        }
    }
    let verdict = match (passed.first(), passed.last()) {
        (Some(true), _) => Verdict::Pass,
        (_, Some(true)) => Verdict::SoftFail,
        _ => Verdict::Fail,
    };
    let recommendation = (verdict == Verdict::SoftFail).then(|| {
        format!(
            "attempt 1 failed at the 99% level and attempt {} passed; rerun with another master seed to confirm",
            passed.len()
        )
    });
    Ok(Attempts {
        verdict,
        seeds,
        passed,
        results,
        recommendation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: CheckKind,
    pub verdict: Verdict,
    /// Seeds consumed by the check, one per attempt.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub attempts: Vec<bool>,
    pub results: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<String>,
    /// Data files written by the check, relative to the output directory.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<String>,
}

impl CheckResult {
    pub fn exact(check: CheckKind, pass: bool, results: Value) -> Self {
        CheckResult {
            check,
            verdict: Verdict::from_pass(pass),
            seeds: Vec::new(),
            attempts: Vec::new(),
            results,
            error: None,
            recommendation: None,
            files: Vec::new(),
        }
    }

    pub fn statistical(check: CheckKind, a: Attempts) -> Self {
        CheckResult {
            check,
            verdict: a.verdict,
            seeds: a.seeds,
            attempts: a.passed,
            results: a.results,
            error: None,
            recommendation: a.recommendation,
            files: Vec::new(),
        }
    }

    pub fn errored(check: CheckKind, err: &anyhow::Error) -> Self {
        CheckResult {
            error: Some(format!("{err:#}")),
            ..CheckResult::exact(check, false, Value::Null)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub env_seed: u64,
    /// Base seed of each enabled check.
    pub check_seeds: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Versions {
    pub rwre_cli: String,
    pub rwre_core: String,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            rwre_cli: env!("CARGO_PKG_VERSION").to_string(),
            rwre_core: rwre_core::VERSION.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: String,
    pub versions: Versions,
    pub provenance: Provenance,
    pub config: CanonicalConfig,
    pub checks: Vec<CheckResult>,
    pub verdict: Verdict,
}

impl ExperimentReport {
    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.verdict.is_failure())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Wall-clock timings, kept out of the report so that it stays byte-stable.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Runtimes {
    pub config_hash: String,
    pub threads: usize,
    pub checks: BTreeMap<String, f64>,
    pub total_seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn first_pass_is_pass() {
        let a = with_reruns(1, |_| Ok((true, json!(1)))).unwrap();
        assert_eq!(a.verdict, Verdict::Pass);
        assert_eq!(a.passed, vec![true]);
        assert!(a.recommendation.is_none());
    }

    #[test]
    fn late_pass_is_soft_fail() {
        let mut n = 0;
        let a = with_reruns(1, |_| {
            n += 1;
            Ok((n == 2, json!(n)))
        })
        .unwrap();
        assert_eq!(a.verdict, Verdict::SoftFail);
        assert_eq!(a.passed, vec![false, true]);
        assert_eq!(a.results, json!(2));
        assert!(a.recommendation.is_some());
    }

    #[test]
    fn three_failures_fail() {
        let a = with_reruns(9, |_| Ok((false, Value::Null))).unwrap();
        assert_eq!(a.verdict, Verdict::Fail);
        assert_eq!(a.seeds.len(), 3);
        assert_ne!(a.seeds[0], a.seeds[1]);
    }

    #[test]
    fn combine_takes_the_worst() {
        assert_eq!(Verdict::combine([]), Verdict::Pass);
        assert_eq!(Verdict::combine([Verdict::Pass, Verdict::SoftFail]), Verdict::SoftFail);
        assert_eq!(Verdict::combine([Verdict::Fail, Verdict::SoftFail]), Verdict::Fail);
    }
}
