//! Evaluation plumbing: OR-merging tool reports, tool combinations, and
//! precision/recall/F1 over labeled contracts.

pub mod cli;

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::ingest::{Warning, WarningReport};
use crate::verifier::{Outcome, Verdict};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HarnessError {
    #[error("no report from tool `{0}`")]
    AbsentTool(String),
    #[error("tool `{0}` listed twice")]
    DuplicateTool(String),
    #[error("expected {expected} tools, got {got}")]
    ToolCount { expected: usize, got: usize },
    #[error("combination size {0} is outside 1..=8")]
    BadSize(usize),
    #[error("verdict for unlabeled contract `{0}`")]
    Unlabeled(String),
}

/// OR-merge of the reports whose tool is in `combo`, one report per contract.
pub fn merge_reports(reports: &[WarningReport], combo: &[String]) -> Result<Vec<WarningReport>, HarnessError> {
    let tools: BTreeSet<&str> = reports.iter().map(|r| r.tool_name.as_str()).collect();
    if let Some(t) = combo.iter().find(|t| !tools.contains(t.as_str())) {
        return Err(HarnessError::AbsentTool(t.clone()));
    }
    let chosen: BTreeSet<&str> = combo.iter().map(String::as_str).collect();
    let name = chosen.iter().copied().collect::<Vec<_>>().join("+");
    let mut by_contract: BTreeMap<&str, Vec<Warning>> = BTreeMap::new();
    for r in reports.iter().filter(|r| chosen.contains(r.tool_name.as_str())) {
        by_contract.entry(&r.contract_id).or_default().extend(r.warnings.iter().cloned());
    }
    Ok(by_contract
        .into_iter()
        .map(|(c, mut warnings)| {
            warnings.sort_by_key(|w| w.selector);
            let mut r = WarningReport {
                tool_name: name.clone(),
                contract_id: c.to_string(),
                warnings,
            };
            r.dedup();
            r
        })
        .collect())
}

/// Every subset of `tools` whose size is in `sizes`, sorted by size and then
/// lexicographically by member positions.
pub fn enumerate_combos(tools: &[String], sizes: &[usize]) -> Result<Vec<Vec<String>>, HarnessError> {
    if tools.len() != 8 {
        return Err(HarnessError::ToolCount {
            expected: 8,
            got: tools.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for t in tools {
        if !seen.insert(t) {
            return Err(HarnessError::DuplicateTool(t.clone()));
        }
    }
    let mut sizes: Vec<usize> = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let mut out = Vec::new();
    for k in sizes {
        if k == 0 || k > tools.len() {
            return Err(HarnessError::BadSize(k));
        }
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.iter().map(|&i| tools[i].clone()).collect());
            // advance to the next k-subset in lexicographic order
            let Some(p) = (0..k).rev().find(|&p| idx[p] < tools.len() - k + p) else { break };
            idx[p] += 1;
            for q in p + 1..k {
                idx[q] = idx[q - 1] + 1;
            }
        }
    }
    Ok(out)
}

/// `tN` style names for `--tools N`.
pub fn numbered_tools(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("t{i}")).collect()
}

pub type GroundTruth = BTreeMap<String, bool>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    /// Contracts whose best verdict was unknown; already inside fn/tn.
    pub unknown: u64,
}

/// `value` as a percentage with one decimal, rounding half up.
pub fn percent(value: Ratio<u64>) -> String {
    let (n, d) = (*value.numer() as u128, *value.denom() as u128);
    let tenths = (2000 * n + d) / (2 * d);
    format!("{}.{}", tenths / 10, tenths % 10)
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Metrics {
        Metrics {
            tp,
            fp,
            fn_,
            tn,
            unknown: 0,
        }
    }

    pub fn precision(&self) -> Option<Ratio<u64>> {
        (self.tp + self.fp > 0).then(|| Ratio::new(self.tp, self.tp + self.fp))
    }

    pub fn recall(&self) -> Option<Ratio<u64>> {
        (self.tp + self.fn_ > 0).then(|| Ratio::new(self.tp, self.tp + self.fn_))
    }

    pub fn f1(&self) -> Option<Ratio<u64>> {
        let (p, r) = (self.precision()?, self.recall()?);
        let sum = p + r;
        (*sum.numer() != 0).then(|| Ratio::from_integer(2) * p * r / sum)
    }

    pub fn record(&self) -> MetricsRecord {
        let pct = |r: Option<Ratio<u64>>| r.map(percent);
        let frac = |r: Option<Ratio<u64>>| r.map(|r| format!("{}/{}", r.numer(), r.denom()));
        MetricsRecord {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
            unknown: self.unknown,
            precision: frac(self.precision()),
            recall: frac(self.recall()),
            f1: frac(self.f1()),
            precision_pct: pct(self.precision()),
            recall_pct: pct(self.recall()),
            f1_pct: pct(self.f1()),
            precision_undefined: self.precision().is_none(),
            recall_undefined: self.recall().is_none(),
            f1_undefined: self.f1().is_none(),
        }
    }

    pub fn table(&self) -> String {
        let show = |r: Option<Ratio<u64>>| r.map_or("n/a".to_string(), |r| format!("{}%", percent(r)));
        let rows = [
            ("TP", self.tp.to_string()),
            ("FP", self.fp.to_string()),
            ("FN", self.fn_.to_string()),
            ("TN", self.tn.to_string()),
            ("unknown", self.unknown.to_string()),
            ("precision", show(self.precision())),
            ("recall", show(self.recall())),
            ("F1", show(self.f1())),
        ];
        rows.iter().map(|(k, v)| format!("{k:<10} {v:>8}\n")).collect()
    }
}

/// Machine-readable metrics; ratios as `num/den` strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub unknown: u64,
    pub precision: Option<String>,
    pub recall: Option<String>,
    pub f1: Option<String>,
    pub precision_pct: Option<String>,
    pub recall_pct: Option<String>,
    pub f1_pct: Option<String>,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

/// Scores contracts: a contract counts as flagged when any of its warnings
/// was confirmed. Labeled contracts without verdicts count as unflagged.
pub fn score(verdicts: &[Verdict], truth: &GroundTruth) -> Result<Metrics, HarnessError> {
    let mut best: BTreeMap<&str, Outcome> = BTreeMap::new();
    for v in verdicts {
        if !truth.contains_key(&v.contract_id) {
            return Err(HarnessError::Unlabeled(v.contract_id.clone()));
        }
        let e = best.entry(&v.contract_id).or_insert(v.outcome);
        *e = match (*e, v.outcome) {
            (Outcome::Confirmed, _) | (_, Outcome::Confirmed) => Outcome::Confirmed,
            (Outcome::Unknown, _) | (_, Outcome::Unknown) => Outcome::Unknown,
            _ => Outcome::Refuted,
        };
    }
    let mut m = Metrics::default();
    for (c, &vulnerable) in truth {
        let outcome = best.get(c.as_str()).copied();
        let flagged = outcome == Some(Outcome::Confirmed);
        if outcome == Some(Outcome::Unknown) {
            m.unknown += 1;
        }
        match (flagged, vulnerable) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, true) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    Ok(m)
}
