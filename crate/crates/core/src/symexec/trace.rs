use std::fmt;

use serde::Serialize;

use super::expr::SymWord;
use super::store::ContractId;
use crate::evm::CallKind;
use crate::word::Selector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    /// The outermost frame of a transaction.
    Tx,
    Call(CallKind),
    /// The attacker calling back into the warned function.
    Reentry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitKind {
    Stop,
    Return,
    Revert,
    Invalid,
    /// Stack fault, bad jump, or a write inside a static frame.
    Exception,
}

impl ExitKind {
    pub fn success(self) -> bool {
        matches!(self, ExitKind::Stop | ExitKind::Return)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    TxStart {
        index: usize,
        selector: Selector,
        sender: SymWord,
        value: SymWord,
        is_final: bool,
    },
    TxEnd {
        index: usize,
        success: bool,
    },
    FrameEnter {
        frame: u32,
        parent: Option<u32>,
        kind: FrameKind,
        exec: ContractId,
        storage: ContractId,
        sender: SymWord,
        value: SymWord,
        is_static: bool,
        selector: Option<Selector>,
    },
    FrameExit {
        frame: u32,
        exit: ExitKind,
    },
    SLoad {
        frame: u32,
        id: u32,
        contract: ContractId,
        slot: SymWord,
        value: SymWord,
        pc: usize,
    },
    SStore {
        frame: u32,
        contract: ContractId,
        slot: SymWord,
        value: SymWord,
        pc: usize,
    },
    Branch {
        frame: u32,
        pc: usize,
        /// Ids of the SLOADs the condition depends on.
        taint: Vec<u32>,
        symbolic: bool,
        taken: bool,
    },
    Call {
        frame: u32,
        pc: usize,
        kind: CallKind,
        target: SymWord,
        value: SymWord,
        attacker: bool,
        reentry: bool,
    },
}

impl Event {
    pub fn frame(&self) -> Option<u32> {
        match self {
            Event::TxStart { .. } | Event::TxEnd { .. } => None,
            Event::FrameEnter { frame, .. }
            | Event::FrameExit { frame, .. }
            | Event::SLoad { frame, .. }
            | Event::SStore { frame, .. }
            | Event::Branch { frame, .. }
            | Event::Call { frame, .. } => Some(*frame),
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::TxStart {
                index,
                selector,
                sender,
                value,
                is_final,
            } => write!(
                f,
                "TX {index} {selector} sender={sender} value={value}{}",
                if *is_final { " final" } else { "" }
            ),
            Event::TxEnd { index, success } => {
                write!(f, "TXEND {index} {}", if *success { "ok" } else { "reverted" })
            }
            Event::FrameEnter {
                frame, kind, exec, storage, sender, value, is_static, ..
            } => {
                let k = match kind {
                    FrameKind::Tx => "TX".to_string(),
                    FrameKind::Call(c) => c.to_string(),
                    FrameKind::Reentry => "REENTER".to_string(),
                };
                write!(
                    f,
                    "ENTER #{frame} {k} code={exec} storage={storage} sender={sender} value={value}{}",
                    if *is_static { " static" } else { "" }
                )
            }
            Event::FrameExit { frame, exit } => {
                let word = if exit.success() { "HALT" } else { "REVERT" };
                write!(f, "{word} #{frame} {exit:?}")
            }
            Event::SLoad { contract, slot, pc, .. } => write!(f, "SLOAD {contract}@{slot} pc={pc}"),
            Event::SStore {
                contract, slot, value, pc, ..
            } => write!(f, "SSTORE {contract}@{slot} = {value} pc={pc}"),
            Event::Branch {
                pc, taken, symbolic, ..
            } => write!(
                f,
                "JUMPI pc={pc} {}{}",
                if *taken { "taken" } else { "fallthrough" },
                if *symbolic { " symbolic" } else { "" }
            ),
            Event::Call {
                kind, target, value, attacker, reentry, ..
            } => write!(
                f,
                "CALL {kind} {target} {value}{}{}",
                if *attacker { " attacker" } else { "" },
                if *reentry { " reenter" } else { "" }
            ),
        }
    }
}

/// One line per event.
pub fn dump(trace: &[Event]) -> String {
    let mut out = String::new();
    for e in trace {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}
