//! The reentrancy witness: a guarded read, an attacker call that re-enters
//! and gets past the same guard, and a write to the guarded slot afterwards.

use std::collections::HashMap;

use crate::evm::CallKind;
use crate::symexec::{ContractId, Event, FrameKind, SymWord};

struct FrameInfo {
    kind: FrameKind,
    storage: ContractId,
    exit: Option<(usize, bool)>,
}

/// Events of the last (final) transaction.
fn final_segment(trace: &[Event]) -> &[Event] {
    let start = trace
        .iter()
        .rposition(|e| matches!(e, Event::TxStart { is_final: true, .. }))
        .unwrap_or(0);
    &trace[start..]
}

/// Positions of SLOADs of `(contract, slot)` in `frame` within `range`,
/// each followed (still within range) by a branch on the loaded value.
fn guarded_loads(
    seg: &[Event],
    frame: u32,
    range: std::ops::Range<usize>,
) -> Vec<(usize, usize, ContractId, SymWord)> {
    let mut out = Vec::new();
    for i in range.clone() {
        let Event::SLoad { frame: f, id, contract, slot, .. } = &seg[i] else { continue };
        if *f != frame {
            continue;
        }
        let guard = (i + 1..range.end).find(|&b| {
            matches!(&seg[b], Event::Branch { frame: bf, taint, .. } if *bf == frame && taint.contains(id))
        });
        if let Some(b) = guard {
            out.push((i, b, contract.clone(), slot.clone()));
        }
    }
    out
}

/// 0/1 word that is 1 when two slot keys name the same location.
fn same_slot(a: &SymWord, b: &SymWord) -> SymWord {
    if a == b {
        SymWord::one()
    } else {
        a.eq_word(b)
    }
}

const MAX_CONDITIONS: usize = 64;

/// One condition per way the final transaction can match the witness shape.
/// Each is a 0/1 word over the path's symbols requiring the guarded slots of
/// the outer frame, the re-entry and the late write to coincide; constant
/// zero candidates are dropped.
pub fn witness_conditions(trace: &[Event]) -> Vec<SymWord> {
    let mut out: Vec<SymWord> = Vec::new();
    let mut add = |w: SymWord| {
        if w.as_const().is_some_and(|v| v.is_zero()) || out.contains(&w) || out.len() >= MAX_CONDITIONS {
            return;
        }
        out.push(w);
    };
    let seg = final_segment(trace);
    let mut frames: HashMap<u32, FrameInfo> = HashMap::new();
    let mut outer = None;
    for (i, e) in seg.iter().enumerate() {
        match e {
            Event::FrameEnter { frame, kind, storage, .. } => {
                if *kind == FrameKind::Tx && outer.is_none() {
                    outer = Some(*frame);
                }
                frames.insert(
                    *frame,
                    FrameInfo {
                        kind: *kind,
                        storage: storage.clone(),
                        exit: None,
                    },
                );
            }
            Event::FrameExit { frame, exit } => {
                if let Some(fi) = frames.get_mut(frame) {
                    fi.exit = Some((i, exit.success()));
                }
            }
            _ => {}
        }
    }
    let Some(f) = outer else { return out };
    let ctx = frames[&f].storage.clone();

    for (j, e) in seg.iter().enumerate() {
        let Event::Call { frame, kind, attacker: true, reentry: true, .. } = e else { continue };
        if *frame != f || *kind == CallKind::StaticCall {
            continue;
        }
        let Some(Event::FrameEnter { frame: r, .. }) = seg.get(j + 1) else { continue };
        let info = &frames[r];
        if info.kind != FrameKind::Reentry || info.storage != ctx {
            continue;
        }
        let Some((r_exit, true)) = info.exit else { continue };

        let inner: Vec<SymWord> = guarded_loads(seg, *r, j + 1..r_exit)
            .into_iter()
            .filter(|(_, b, c2, _)| {
                *c2 == ctx
                    && seg[b + 1..r_exit]
                        .iter()
                        .any(|e| matches!(e, Event::Call { frame: cf, .. } if cf == r))
            })
            .map(|(_, _, _, s2)| s2)
            .collect();
        let writes: Vec<&SymWord> = seg[r_exit..]
            .iter()
            .filter_map(|e| match e {
                Event::SStore { frame: wf, contract, slot, .. } if *wf == f && *contract == ctx => Some(slot),
                _ => None,
            })
            .collect();
        for (_, _, c, s) in guarded_loads(seg, f, 0..j) {
            if c != ctx {
                continue;
            }
            for s2 in &inner {
                for s3 in &writes {
                    add(same_slot(s2, &s).and(&same_slot(s3, &s)));
                }
            }
        }
    }
    out
}

/// The witness shape with every slot key already decided: some condition
/// folds to a nonzero constant. Concrete traces are decided exactly.
pub fn witness_predicate(trace: &[Event]) -> bool {
    witness_conditions(trace)
        .iter()
        .any(|w| w.as_const().is_some_and(|v| !v.is_zero()))
}
