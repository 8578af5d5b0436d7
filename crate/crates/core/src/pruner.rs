//! Key-instruction weighting of jump edges and the successor policy built on it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::evm::{BasicBlock, BlockId, Cfg, Opcode};

/// Number of key instructions (SLOAD, SSTORE, CALL family) in `block`,
/// together with the block's first pc.
pub fn count_weight(block: &BasicBlock) -> (u32, usize) {
    let w = block.instructions.iter().filter(|i| i.opcode.is_key()).count() as u32;
    (w, block.first_pc)
}

fn is_revert_block(block: &BasicBlock) -> bool {
    block.contains_opcode(|op| matches!(op, Opcode::Revert | Opcode::Invalid))
}

#[derive(Debug, Clone)]
pub struct SmcCfg {
    pub base: Arc<Cfg>,
    pub edge_weight: BTreeMap<(BlockId, usize), u32>,
    pub pruned_edges: BTreeSet<(BlockId, BlockId)>,
}

pub fn build_smc_cfg(cfg: Arc<Cfg>) -> SmcCfg {
    let mut edge_weight = BTreeMap::new();
    let mut pruned_edges = BTreeSet::new();
    for block in &cfg.blocks {
        let succs: Vec<&BasicBlock> = block.successors.iter().map(|s| cfg.block(*s)).collect();
        for s in &succs {
            let (w, pc) = count_weight(s);
            edge_weight.insert((block.id, pc), w);
            // A reverting successor rolls back whatever it touched, so it is
            // dropped even when it holds key instructions.
            if is_revert_block(s) {
                pruned_edges.insert((block.id, s.id));
            }
        }
        let live_weighted = succs
            .iter()
            .any(|s| !is_revert_block(s) && count_weight(s).0 > 0);
        if live_weighted {
            for s in &succs {
                if count_weight(s).0 == 0 {
                    pruned_edges.insert((block.id, s.id));
                }
            }
        }
    }
    SmcCfg {
        base: cfg,
        edge_weight,
        pruned_edges,
    }
}

impl SmcCfg {
    pub fn weight(&self, from: BlockId, to: BlockId) -> u32 {
        let pc = self.base.block(to).first_pc;
        self.edge_weight.get(&(from, pc)).copied().unwrap_or(0)
    }
}

/// Surviving successors of `id`, heaviest first, ties by first pc.
pub fn next_successors(smc: &SmcCfg, id: BlockId) -> Vec<BlockId> {
    let mut out: Vec<BlockId> = Vec::new();
    for s in &smc.base.block(id).successors {
        if !smc.pruned_edges.contains(&(id, *s)) && !out.contains(s) {
            out.push(*s);
        }
    }
    out.sort_by_key(|s| {
        (
            std::cmp::Reverse(smc.weight(id, *s)),
            smc.base.block(*s).first_pc,
        )
    });
    out
}

/// Dot rendering: surviving edges solid with weights, pruned edges dashed
/// and their targets gray.
pub fn smc_to_dot(smc: &SmcCfg, name: &str) -> String {
    let cfg = &smc.base;
    let pruned_targets: BTreeSet<BlockId> = smc.pruned_edges.iter().map(|(_, t)| *t).collect();
    let mut out = format!("digraph \"{name}\" {{\n  node [shape=box, fontname=monospace];\n");
    for b in &cfg.blocks {
        let mut label = String::new();
        for i in &b.instructions {
            let _ = write!(label, "{:04x}: {}\\l", i.pc, i);
        }
        let style = if pruned_targets.contains(&b.id) {
            ", style=filled, fillcolor=gray"
        } else {
            ""
        };
        let _ = writeln!(out, "  {} [label=\"{label}\"{style}];", b.id);
    }
    for b in &cfg.blocks {
        for s in &b.successors {
            let w = smc.weight(b.id, *s);
            let style = if smc.pruned_edges.contains(&(b.id, *s)) {
                "dashed"
            } else {
                "solid"
            };
            let _ = writeln!(out, "  {} -> {} [label=\"{w}\", style={style}];", b.id, s);
        }
    }
    out.push_str("}\n");
    out
}
