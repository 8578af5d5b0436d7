use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;

use super::{Instruction, Opcode};
use crate::word::{Selector, U256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BlockId(pub usize);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Terminator {
    Jump,
    JumpI,
    Fallthrough,
    Halt,
    Revert,
    Invalid,
    /// Falls through after a CALL-family instruction.
    CallReturn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: BlockId,
    pub first_pc: usize,
    pub instructions: Vec<Instruction>,
    /// For JUMPI: `[taken, fallthrough]`.
    pub successors: Vec<BlockId>,
    pub terminator: Terminator,
    /// The block ends in a jump whose target is not a block-local constant.
    pub dynamic_jump: bool,
}

impl BasicBlock {
    pub fn last(&self) -> Option<&Instruction> {
        self.instructions.last()
    }

    pub fn end_pc(&self) -> usize {
        self.last().map_or(self.first_pc, Instruction::next_pc)
    }

    pub fn contains_opcode(&self, pred: impl Fn(Opcode) -> bool) -> bool {
        self.instructions.iter().any(|i| pred(i.opcode))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    /// Indexed by `BlockId`, in pc order.
    pub blocks: Vec<BasicBlock>,
    pub entry: BlockId,
    pub function_entries: BTreeMap<Selector, BlockId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CfgError {
    #[error("malformed control flow: jump at pc {pc} targets {target:#x}, which is not a JUMPDEST")]
    BadJumpTarget { pc: usize, target: U256 },
}

impl Cfg {
    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[id.0]
    }

    /// The block whose first instruction is at `pc`.
    pub fn block_at(&self, pc: usize) -> Option<BlockId> {
        self.blocks
            .binary_search_by_key(&pc, |b| b.first_pc)
            .ok()
            .map(BlockId)
    }

    /// The block containing the instruction at `pc`.
    pub fn block_containing(&self, pc: usize) -> Option<BlockId> {
        let idx = match self.blocks.binary_search_by_key(&pc, |b| b.first_pc) {
            Ok(i) => i,
            Err(0) => return None,
            Err(i) => i - 1,
        };
        (pc < self.blocks[idx].end_pc()).then_some(BlockId(idx))
    }

    pub fn edges(&self) -> impl Iterator<Item = (BlockId, BlockId)> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| b.successors.iter().map(move |s| (b.id, *s)))
    }

    pub fn reachable_from(&self, start: BlockId) -> BTreeSet<BlockId> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(id) = queue.pop_front() {
            for s in &self.block(id).successors {
                if seen.insert(*s) {
                    queue.push_back(*s);
                }
            }
        }
        seen
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.blocks.iter().flat_map(|b| b.instructions.iter())
    }

    pub fn selector_of_entry(&self, id: BlockId) -> Option<Selector> {
        self.function_entries
            .iter()
            .find_map(|(s, b)| (*b == id).then_some(*s))
    }
}

/// Splits instructions into basic blocks and resolves constant jump targets.
///
/// Blocks are cut after every control transfer and before every JUMPDEST.
/// Dispatcher entries are recognised from `PUSH4 sel; EQ; PUSH target; JUMPI`.
pub fn build_cfg(instrs: &[Instruction]) -> Result<Cfg, CfgError> {
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for (i, ins) in instrs.iter().enumerate() {
        if ins.opcode == Opcode::JumpDest && i > start {
            ranges.push((start, i));
            start = i;
        }
        if ins.opcode.is_control_transfer() {
            ranges.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < instrs.len() || ranges.is_empty() {
        ranges.push((start, instrs.len()));
    }

    let first_pcs: Vec<usize> = ranges
        .iter()
        .map(|&(s, _)| instrs.get(s).map_or(0, |i| i.pc))
        .collect();
    let block_at = |pc: usize| first_pcs.binary_search(&pc).ok().map(BlockId);

    let mut blocks = Vec::with_capacity(ranges.len());
    for (idx, &(s, e)) in ranges.iter().enumerate() {
        let body = &instrs[s..e];
        let has_next = e < instrs.len();
        let fallthrough = has_next.then(|| BlockId(idx + 1));
        let last = body.last();
        let mut dynamic_jump = false;
        let mut successors = Vec::new();
        let terminator = match last.map(|i| i.opcode) {
            Some(op @ (Opcode::Jump | Opcode::JumpI)) => {
                let jump = last.unwrap();
                match local_jump_target(body) {
                    Some(target) => {
                        let dest = target
                            .try_into()
                            .ok()
                            .and_then(|pc: usize| block_at(pc).map(|b| (pc, b)))
                            .filter(|(pc, _)| {
                                instrs
                                    .binary_search_by_key(pc, |i| i.pc)
                                    .is_ok_and(|k| instrs[k].opcode == Opcode::JumpDest)
                            });
                        let Some((_, b)) = dest else {
                            return Err(CfgError::BadJumpTarget {
                                pc: jump.pc,
                                target,
                            });
                        };
                        successors.push(b);
                        if op == Opcode::JumpI {
                            successors.extend(fallthrough);
                        }
                    }
                    None => dynamic_jump = true,
                }
                if op == Opcode::Jump {
                    Terminator::Jump
                } else {
                    Terminator::JumpI
                }
            }
            Some(Opcode::Stop | Opcode::Return) => Terminator::Halt,
            Some(Opcode::Revert) => Terminator::Revert,
            Some(Opcode::Invalid) => Terminator::Invalid,
            Some(op) if has_next => {
                successors.extend(fallthrough);
                if op.call_kind().is_some() {
                    Terminator::CallReturn
                } else {
                    Terminator::Fallthrough
                }
            }
            // Running off the end of code behaves as STOP.
            _ => Terminator::Halt,
        };
        blocks.push(BasicBlock {
            id: BlockId(idx),
            first_pc: first_pcs[idx],
            instructions: body.to_vec(),
            successors,
            terminator,
            dynamic_jump,
        });
    }

    let mut cfg = Cfg {
        blocks,
        entry: BlockId(0),
        function_entries: BTreeMap::new(),
    };
    let reachable = cfg.reachable_from(cfg.entry);
    let mut entries = BTreeMap::new();
    for b in &cfg.blocks {
        if !reachable.contains(&b.id) || b.terminator != Terminator::JumpI || b.dynamic_jump {
            continue;
        }
        if let Some(sel) = dispatcher_selector(&b.instructions) {
            entries.entry(sel).or_insert(b.successors[0]);
        }
    }
    cfg.function_entries = entries;
    Ok(cfg)
}

/// Simulates the block's stack on constants to find the jump destination
/// consumed by its final JUMP/JUMPI.
fn local_jump_target(body: &[Instruction]) -> Option<U256> {
    let (last, prefix) = body.split_last()?;
    debug_assert!(matches!(last.opcode, Opcode::Jump | Opcode::JumpI));
    let mut stack: Vec<Option<U256>> = Vec::new();
    for ins in prefix {
        match ins.opcode {
            Opcode::Push(_) => stack.push(ins.push_value()),
            Opcode::Dup(n) => {
                let n = n as usize;
                let v = if stack.len() >= n {
                    stack[stack.len() - n]
                } else {
                    None
                };
                stack.push(v);
            }
            Opcode::Swap(n) => {
                let n = n as usize;
                while stack.len() < n + 1 {
                    stack.insert(0, None);
                }
                let top = stack.len() - 1;
                stack.swap(top, top - n);
            }
            op => {
                let (pops, pushes) = op.stack_io();
                for _ in 0..pops {
                    stack.pop();
                }
                for _ in 0..pushes {
                    stack.push(None);
                }
            }
        }
    }
    stack.pop().flatten()
}

fn dispatcher_selector(body: &[Instruction]) -> Option<Selector> {
    let n = body.len();
    if n < 4 {
        return None;
    }
    if body[n - 1].opcode != Opcode::JumpI || !matches!(body[n - 2].opcode, Opcode::Push(_)) {
        return None;
    }
    let mut k = n - 3;
    if body[k].opcode != Opcode::Eq {
        return None;
    }
    while k > 0 {
        k -= 1;
        match body[k].opcode {
            Opcode::Dup(_) | Opcode::Swap(_) => continue,
            Opcode::Push(4) => {
                let imm = body[k].immediate.as_ref()?;
                return Some(Selector([imm[0], imm[1], imm[2], imm[3]]));
            }
            _ => return None,
        }
    }
    None
}
