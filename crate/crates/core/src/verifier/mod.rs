//! Per-warning verification: dependency-ordered symbolic runs, the witness
//! predicate, solver reachability, and a concrete replay of every witness.

pub mod smt;
pub mod witness;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dependency::{build_fdg, extract_rw_sets, target_sets_for, transaction_order};
use crate::ingest::{BundleSet, WarningReport};
use crate::symexec::{
    dump, run_sequence, Budget, Event, ExploreOptions, Flow, Mode, Replay, SymWord, TerminalPath,
};
use crate::word::{parse_word, word_hex, Selector, U256};

pub use smt::{check_reachability, SatResult, SolverConfig, SolverError};
pub use witness::{witness_conditions, witness_predicate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Confirmed,
    Refuted,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub sequence: Vec<Selector>,
    pub schedule: Vec<bool>,
    pub reentry: Vec<bool>,
    /// Symbol name to `0x` hex value.
    pub model: BTreeMap<String, String>,
    pub trace: Vec<String>,
}

impl Witness {
    pub fn replay_inputs(&self) -> Replay {
        Replay {
            model: self
                .model
                .iter()
                .filter_map(|(k, v)| parse_word(v).map(|w| (k.clone(), w)))
                .collect(),
            schedule: self.schedule.clone(),
            reentry: self.reentry.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub contract_id: String,
    pub selector: Selector,
    pub outcome: Outcome,
    pub elapsed_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default)]
    pub steps: u64,
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Wall-clock budget per warning.
    pub timeout: Duration,
    pub jobs: usize,
    pub prune: bool,
    pub max_steps: u64,
    pub solver: SolverConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            timeout: Duration::from_secs(120),
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            prune: true,
            max_steps: Budget::default().max_steps,
            solver: SolverConfig::default(),
        }
    }
}

fn senders_and_targets(trace: &[Event]) -> Vec<SymWord> {
    let mut out = Vec::new();
    for e in trace {
        let w = match e {
            Event::TxStart { sender, .. } => sender,
            Event::Call { target, attacker: true, .. } => target,
            _ => continue,
        };
        if !w.is_const() && !out.contains(w) {
            out.push(w.clone());
        }
    }
    out
}

/// The attacker is an outside account: none of the loaded contracts, none of
/// the addresses configured in their storage, and a valid 160-bit address.
pub fn adversary_constraints(bundles: &BundleSet, trace: &[Event]) -> Vec<SymWord> {
    let mut known: Vec<U256> = Vec::new();
    for b in bundles.iter() {
        known.push(b.address.to_word());
        known.extend(b.initial_storage.values().filter(|v| !v.is_zero()).copied());
    }
    known.sort();
    known.dedup();
    let bound = SymWord::Const(U256::from(1u8) << 160);
    let mut out = Vec::new();
    for w in senders_and_targets(trace) {
        out.push(w.lt(&bound));
        for k in &known {
            out.push(w.eq_word(&SymWord::Const(*k)).iszero());
        }
    }
    out
}

/// Re-runs one path with every input fixed; returns the finished path.
pub fn replay(bundles: &BundleSet, contract_id: &str, sequence: &[Selector], inputs: Replay) -> Option<TerminalPath> {
    let opts = ExploreOptions {
        mode: Mode::Concrete(inputs),
        ..ExploreOptions::default()
    };
    let set = run_sequence(bundles, contract_id, sequence, &opts, |_| Flow::Stop).ok()?;
    set.paths.into_iter().next()
}

fn model_hex(model: &BTreeMap<String, U256>) -> BTreeMap<String, String> {
    model.iter().map(|(k, v)| (k.clone(), word_hex(v))).collect()
}

pub fn verify_warning(bundles: &BundleSet, contract_id: &str, selector: Selector, cfg: &VerifyConfig) -> Verdict {
    let start = Instant::now();
    let mut verdict = Verdict {
        contract_id: contract_id.to_string(),
        selector,
        outcome: Outcome::Unknown,
        elapsed_s: 0.0,
        witness: None,
        reason: None,
        steps: 0,
    };
    let finish = |mut v: Verdict, outcome: Outcome, reason: Option<String>| {
        v.outcome = outcome;
        v.reason = reason;
        v.elapsed_s = start.elapsed().as_secs_f64();
        v
    };
    let Some(bundle) = bundles.get(contract_id) else {
        return finish(verdict, Outcome::Unknown, Some(format!("unknown contract `{contract_id}`")));
    };
    let Some(&entry) = bundle.cfg.function_entries.get(&selector) else {
        return finish(verdict, Outcome::Unknown, Some(format!("{selector} is not a function entry")));
    };
    if bundle
        .cfg
        .reachable_from(entry)
        .iter()
        .any(|b| bundle.cfg.block(*b).dynamic_jump)
    {
        return finish(verdict, Outcome::Unknown, Some("unresolved dynamic jump".into()));
    }

    let summaries = extract_rw_sets(&bundle.cfg, bundle);
    let sequence = match target_sets_for(&[selector], &summaries) {
        Ok(t) if !t.f_target.is_empty() => transaction_order(&build_fdg(&t, &summaries), selector),
        _ => vec![selector],
    };

    let deadline = start + cfg.timeout;
    let opts = ExploreOptions {
        prune: cfg.prune,
        budget: Budget {
            max_steps: cfg.max_steps,
            deadline: Some(deadline),
            ..Budget::default()
        },
        mode: Mode::Symbolic,
        record_transitions: false,
        keep_paths: false,
    };
    let mut witness = None;
    let mut solver_unknown: Option<String> = None;
    let hook = |path: &TerminalPath| {
        let conditions = witness_conditions(&path.trace);
        if conditions.is_empty() {
            return Flow::Continue;
        }
        let mut base: Vec<SymWord> = path.constraints.iter().map(|c| c.cond.clone()).collect();
        base.extend(adversary_constraints(bundles, &path.trace));
        for cond in conditions {
            let mut query = base.clone();
            query.push(cond);
            let remaining = deadline.saturating_duration_since(Instant::now());
            let solver = SolverConfig {
                timeout: cfg.solver.timeout.min(remaining).max(Duration::from_millis(100)),
                ..cfg.solver.clone()
            };
            let model = match check_reachability(&query, &solver) {
                Ok(SatResult::Sat(model)) => model,
                Ok(SatResult::Unsat) => continue,
                Ok(SatResult::Unknown(why)) => {
                    solver_unknown.get_or_insert(why);
                    continue;
                }
                Err(e) => {
                    solver_unknown.get_or_insert(e.to_string());
                    continue;
                }
            };
            let inputs = Replay {
                model: model.clone(),
                schedule: path.schedule.clone(),
                reentry: path.reentry_choices.clone(),
            };
            match replay(bundles, contract_id, &sequence, inputs) {
                Some(p) if !p.reverted && witness_predicate(&p.trace) => {
                    witness = Some(Witness {
                        sequence: sequence.clone(),
                        schedule: path.schedule.clone(),
                        reentry: path.reentry_choices.clone(),
                        model: model_hex(&model),
                        trace: dump(&p.trace).lines().map(str::to_string).collect(),
                    });
                    return Flow::Stop;
                }
                _ => {
                    solver_unknown.get_or_insert_with(|| "model did not replay".into());
                }
            }
        }
        Flow::Continue
    };
    let set = match run_sequence(bundles, contract_id, &sequence, &opts, hook) {
        Ok(set) => set,
        Err(e) => return finish(verdict, Outcome::Unknown, Some(e.to_string())),
    };
    verdict.steps = set.steps;
    if let Some(w) = witness {
        verdict.witness = Some(w);
        return finish(verdict, Outcome::Confirmed, None);
    }
    if set.incomplete {
        return finish(verdict, Outcome::Unknown, Some(set.reasons.join("; ")));
    }
    if let Some(why) = solver_unknown {
        return finish(verdict, Outcome::Unknown, Some(why));
    }
    finish(verdict, Outcome::Refuted, None)
}

/// One verdict per warning, in report order; warnings run in parallel.
pub fn verify(bundles: &BundleSet, reports: &[WarningReport], cfg: &VerifyConfig) -> Vec<Verdict> {
    use rayon::prelude::*;
    let jobs: Vec<(String, Selector)> = reports
        .iter()
        .flat_map(|r| r.selectors().map(move |s| (r.contract_id.clone(), s)))
        .collect();
    let run = || {
        jobs.par_iter()
            .map(|(c, s)| verify_warning(bundles, c, *s, cfg))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}
