//! Depth-first exploration of every path through a transaction sequence.

use std::time::Instant;

use super::machine::{Advance, Machine, Mode, PathState};
use super::store::{ContractId, GlobalStore};
use super::trace::Event;
use super::Constraint;
use crate::evm::BlockId;
use crate::ingest::BundleSet;
use crate::word::Selector;

#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub max_steps: u64,
    /// Bound on pending plus finished paths.
    pub max_paths: usize,
    pub deadline: Option<Instant>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_steps: 1_000_000,
            max_paths: 100_000,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct ExploreOptions {
    pub prune: bool,
    pub budget: Budget,
    pub mode: Mode,
    pub record_transitions: bool,
    /// Keep finished paths in the result, not only hand them to the hook.
    pub keep_paths: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            prune: true,
            budget: Budget::default(),
            mode: Mode::Symbolic,
            record_transitions: false,
            keep_paths: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TerminalPath {
    pub reverted: bool,
    pub constraints: Vec<Constraint>,
    pub trace: Vec<Event>,
    pub schedule: Vec<bool>,
    pub reentry_choices: Vec<bool>,
    pub store: GlobalStore,
    pub transitions: Vec<(ContractId, BlockId, BlockId)>,
}

#[derive(Debug, Clone, Default)]
pub struct PathSet {
    pub paths: Vec<TerminalPath>,
    /// Some path was cut short, so the set is not exhaustive.
    pub incomplete: bool,
    pub reasons: Vec<String>,
    pub steps: u64,
    pub stopped_early: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ExploreError {
    #[error("unknown contract `{0}`")]
    UnknownContract(String),
    #[error("empty transaction sequence")]
    EmptySequence,
    #[error("selector {selector} is not a function of `{contract}`")]
    UnknownSelector { contract: String, selector: Selector },
}

fn finish(st: PathState, reverted: bool) -> TerminalPath {
    TerminalPath {
        reverted,
        constraints: st.constraints.into_iter().collect(),
        trace: st.trace.into_iter().collect(),
        schedule: st.schedule,
        reentry_choices: st.reentry_choices,
        store: st.store,
        transitions: st.transitions.into_iter().collect(),
    }
}

/// Explores `sequence` on `contract_id`; every transaction prefix entry may
/// be skipped, the last one always runs and is where re-entry can happen.
/// `hook` sees each non-reverted path as soon as it finishes.
pub fn run_sequence(
    bundles: &BundleSet,
    contract_id: &str,
    sequence: &[Selector],
    opts: &ExploreOptions,
    mut hook: impl FnMut(&TerminalPath) -> Flow,
) -> Result<PathSet, ExploreError> {
    let warned = bundles
        .position(contract_id)
        .ok_or_else(|| ExploreError::UnknownContract(contract_id.to_string()))?;
    if sequence.is_empty() {
        return Err(ExploreError::EmptySequence);
    }
    let cfg = &bundles.at(warned).cfg;
    if let Some(&selector) = sequence.iter().find(|s| !cfg.function_entries.contains_key(s)) {
        return Err(ExploreError::UnknownSelector {
            contract: contract_id.to_string(),
            selector,
        });
    }
    let mut machine = Machine::new(bundles, warned, sequence.to_vec(), opts.mode.clone());
    machine.prune = opts.prune;
    machine.record_transitions = opts.record_transitions;

    let budget = opts.budget;
    let mut out = PathSet::default();
    let mut finished = 0usize;
    let note = |out: &mut PathSet, why: String| {
        out.incomplete = true;
        if !out.reasons.contains(&why) {
            out.reasons.push(why);
        }
    };
    let mut work = vec![machine.initial_state()];
    'paths: while let Some(mut st) = work.pop() {
        loop {
            if out.steps >= budget.max_steps {
                note(&mut out, "step budget exhausted".into());
                break 'paths;
            }
            if out.steps % 1024 == 0 && budget.deadline.is_some_and(|d| Instant::now() >= d) {
                note(&mut out, "deadline reached".into());
                break 'paths;
            }
            out.steps += 1;
            match machine.step(&mut st) {
                Advance::Running => {}
                Advance::Fork(states) => {
                    if work.len() + states.len() + finished > budget.max_paths {
                        note(&mut out, "path budget exhausted".into());
                        break 'paths;
                    }
                    work.extend(states.into_iter().rev());
                    continue 'paths;
                }
                Advance::Finished { reverted } => {
                    let path = finish(st, reverted);
                    finished += 1;
                    let flow = if reverted { Flow::Continue } else { hook(&path) };
                    if opts.keep_paths {
                        out.paths.push(path);
                    }
                    if flow == Flow::Stop {
                        out.stopped_early = true;
                        break 'paths;
                    }
                    continue 'paths;
                }
                Advance::Dropped => continue 'paths,
                Advance::Unsupported(why) => {
                    note(&mut out, why);
                    continue 'paths;
                }
            }
        }
    }
    Ok(out)
}
