//! Storage read/write summaries, the target-set closure, and the function dependency graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::evm::{BlockId, Cfg, Opcode};
use crate::ingest::{ContractBundle, WarningReport};
use crate::word::{Selector, U256};

/// A storage location at function granularity. Every key of a mapping is
/// folded into the mapping's base slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlotDescriptor {
    #[serde(rename = "slot", with = "crate::word::word_serde")]
    Slot(U256),
    #[serde(rename = "mapping_base", with = "crate::word::word_serde")]
    MappingBase(U256),
}

impl std::fmt::Display for SlotDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SlotDescriptor::Slot(s) => write!(f, "slot {s}"),
            SlotDescriptor::MappingBase(s) => write!(f, "mapping {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunctionSummary {
    pub selector: Selector,
    pub reads: BTreeSet<SlotDescriptor>,
    pub writes: BTreeSet<SlotDescriptor>,
    pub makes_external_call: bool,
    /// Some storage access had a slot that was not a block-local constant.
    pub incomplete: bool,
}

impl FunctionSummary {
    pub fn empty(selector: Selector) -> Self {
        FunctionSummary {
            selector,
            reads: BTreeSet::new(),
            writes: BTreeSet::new(),
            makes_external_call: false,
            incomplete: false,
        }
    }

    pub fn touched(&self) -> BTreeSet<SlotDescriptor> {
        self.reads.union(&self.writes).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Abs {
    Const(U256),
    Mapping(U256),
    Unknown,
}

impl Abs {
    fn slot(self) -> Option<SlotDescriptor> {
        match self {
            Abs::Const(c) => Some(SlotDescriptor::Slot(c)),
            Abs::Mapping(b) => Some(SlotDescriptor::MappingBase(b)),
            Abs::Unknown => None,
        }
    }
}

/// Abstract stack with an unknown bottom: popping past the block's own
/// pushes yields `Unknown`.
#[derive(Default)]
struct AbsStack(Vec<Abs>);

impl AbsStack {
    fn pop(&mut self) -> Abs {
        self.0.pop().unwrap_or(Abs::Unknown)
    }
    fn push(&mut self, v: Abs) {
        self.0.push(v);
    }
    fn peek(&self, depth: usize) -> Abs {
        self.0.len().checked_sub(depth + 1).map_or(Abs::Unknown, |i| self.0[i])
    }
    fn swap(&mut self, n: usize) {
        while self.0.len() < n + 1 {
            self.0.insert(0, Abs::Unknown);
        }
        let top = self.0.len() - 1;
        self.0.swap(top, top - n);
    }
}

fn summarize_block(cfg: &Cfg, id: BlockId, summary: &mut FunctionSummary) {
    let mut stack = AbsStack::default();
    let mut memory: BTreeMap<U256, Abs> = BTreeMap::new();
    for ins in &cfg.block(id).instructions {
        match ins.opcode {
            Opcode::Push(_) => stack.push(ins.push_value().map_or(Abs::Unknown, Abs::Const)),
            Opcode::Dup(n) => stack.push(stack.peek(n as usize - 1)),
            Opcode::Swap(n) => stack.swap(n as usize),
            Opcode::MStore => {
                let off = stack.pop();
                let val = stack.pop();
                match off {
                    Abs::Const(o) => {
                        memory.insert(o, val);
                    }
                    _ => memory.clear(),
                }
            }
            Opcode::MLoad => {
                let off = stack.pop();
                let v = match off {
                    Abs::Const(o) => memory.get(&o).copied().unwrap_or(Abs::Unknown),
                    _ => Abs::Unknown,
                };
                stack.push(v);
            }
            Opcode::Sha3 => {
                let off = stack.pop();
                let len = stack.pop();
                // keccak(key . base) is the mapping slot layout.
                let v = match (off, len) {
                    (Abs::Const(o), Abs::Const(l)) if l == U256::from(64) => {
                        match memory.get(&(o + U256::from(32))) {
                            Some(Abs::Const(base)) => Abs::Mapping(*base),
                            _ => Abs::Unknown,
                        }
                    }
                    _ => Abs::Unknown,
                };
                stack.push(v);
            }
            Opcode::SLoad => {
                match stack.pop().slot() {
                    Some(s) => {
                        summary.reads.insert(s);
                    }
                    None => summary.incomplete = true,
                }
                stack.push(Abs::Unknown);
            }
            Opcode::SStore => {
                match stack.pop().slot() {
                    Some(s) => {
                        summary.writes.insert(s);
                    }
                    None => summary.incomplete = true,
                }
                stack.pop();
            }
            op => {
                if op.call_kind().is_some() {
                    summary.makes_external_call = true;
                }
                let (pops, pushes) = op.stack_io();
                for _ in 0..pops {
                    stack.pop();
                }
                for _ in 0..pushes {
                    stack.push(Abs::Unknown);
                }
            }
        }
    }
}

/// Summarizes each dispatcher entry's reachable blocks.
pub fn extract_rw_sets(cfg: &Cfg, bundle: &ContractBundle) -> BTreeMap<Selector, FunctionSummary> {
    let mut out = BTreeMap::new();
    for (&selector, &entry) in &cfg.function_entries {
        let mut summary = FunctionSummary::empty(selector);
        let mut seen = BTreeSet::new();
        let mut todo = vec![entry];
        while let Some(id) = todo.pop() {
            if !seen.insert(id) {
                continue;
            }
            let block = cfg.block(id);
            if block.dynamic_jump {
                summary.incomplete = true;
            }
            summarize_block(cfg, id, &mut summary);
            todo.extend(block.successors.iter().rev());
        }
        out.insert(selector, summary);
    }
    if let Some(declared) = &bundle.declared_functions {
        for f in declared {
            let s = out
                .entry(f.selector)
                .or_insert_with(|| FunctionSummary::empty(f.selector));
            s.reads.extend(f.declared_state_vars.iter().copied());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct TargetSets {
    pub v_target: BTreeSet<SlotDescriptor>,
    pub v_target_related: BTreeSet<SlotDescriptor>,
    pub f_target: BTreeSet<Selector>,
    /// Number of closure rounds run, including the final one that added nothing.
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no summary for warned function {0}")]
pub struct MissingSummary(pub Selector);

pub fn compute_target_sets(
    report: &WarningReport,
    summaries: &BTreeMap<Selector, FunctionSummary>,
) -> Result<TargetSets, MissingSummary> {
    let warned: Vec<Selector> = report.selectors().collect();
    target_sets_for(&warned, summaries)
}

/// The closure seeded by the slots of `warned`: any function touching a
/// tracked slot joins `f_target` and contributes all of its slots.
pub fn target_sets_for(
    warned: &[Selector],
    summaries: &BTreeMap<Selector, FunctionSummary>,
) -> Result<TargetSets, MissingSummary> {
    let mut t = TargetSets::default();
    for sel in warned {
        let s = summaries.get(sel).ok_or(MissingSummary(*sel))?;
        t.v_target.extend(s.touched());
    }
    loop {
        t.rounds += 1;
        let tracked = if t.v_target_related.is_empty() {
            &t.v_target
        } else {
            &t.v_target_related
        };
        let mut new_f = Vec::new();
        let mut new_v = BTreeSet::new();
        for (sel, s) in summaries {
            let touched = s.touched();
            if touched.iter().any(|v| tracked.contains(v)) {
                if !t.f_target.contains(sel) {
                    new_f.push(*sel);
                }
                new_v.extend(touched.into_iter().filter(|v| !t.v_target_related.contains(v)));
            }
        }
        if new_f.is_empty() && new_v.is_empty() {
            return Ok(t);
        }
        t.f_target.extend(new_f);
        t.v_target_related.extend(new_v);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Fdg {
    pub nodes: BTreeSet<Selector>,
    /// Keyed by `(lo, hi)` with `lo < hi`.
    pub edges: BTreeMap<(Selector, Selector), u32>,
    pub node_weight: BTreeMap<Selector, u32>,
}

pub fn build_fdg(targets: &TargetSets, summaries: &BTreeMap<Selector, FunctionSummary>) -> Fdg {
    let nodes: Vec<Selector> = targets.f_target.iter().copied().collect();
    let touched: Vec<BTreeSet<SlotDescriptor>> = nodes
        .iter()
        .map(|s| {
            summaries.get(s).map_or_else(BTreeSet::new, |f| {
                f.touched()
                    .into_iter()
                    .filter(|v| targets.v_target_related.contains(v))
                    .collect()
            })
        })
        .collect();
    let mut fdg = Fdg {
        nodes: targets.f_target.clone(),
        edges: BTreeMap::new(),
        node_weight: nodes.iter().map(|s| (*s, 0)).collect(),
    };
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            let w = touched[i].intersection(&touched[j]).count() as u32;
            if w > 0 {
                fdg.edges.insert((nodes[i], nodes[j]), w);
                *fdg.node_weight.get_mut(&nodes[i]).unwrap() += w;
                *fdg.node_weight.get_mut(&nodes[j]).unwrap() += w;
            }
        }
    }
    fdg
}

/// Nodes by ascending weight, ties by selector.
pub fn function_sequence(fdg: &Fdg) -> Vec<Selector> {
    let mut seq: Vec<Selector> = fdg.nodes.iter().copied().collect();
    seq.sort_by_key(|s| (fdg.node_weight.get(s).copied().unwrap_or(0), *s));
    seq
}

/// The transaction order for verifying `warned`: the dependency sequence
/// without it, then `warned` last.
pub fn transaction_order(fdg: &Fdg, warned: Selector) -> Vec<Selector> {
    let mut seq: Vec<Selector> = function_sequence(fdg)
        .into_iter()
        .filter(|s| *s != warned)
        .collect();
    seq.push(warned);
    seq
}

pub fn fdg_to_dot(fdg: &Fdg, names: &BTreeMap<Selector, String>) -> String {
    let mut out = String::from("graph fdg {\n  node [shape=box];\n");
    for s in &fdg.nodes {
        let label = names.get(s).map_or_else(|| s.to_string(), |n| format!("{n}\\n{s}"));
        let _ = writeln!(
            out,
            "  \"{s}\" [label=\"{label}\\nw={}\"];",
            fdg.node_weight.get(s).copied().unwrap_or(0)
        );
    }
    for ((a, b), w) in &fdg.edges {
        let _ = writeln!(out, "  \"{a}\" -- \"{b}\" [label=\"{w}\"];");
    }
    out.push_str("}\n");
    out
}
