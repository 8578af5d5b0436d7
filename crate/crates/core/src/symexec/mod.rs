//! Symbolic execution over the bundle set with a single global store.

pub mod explore;
pub mod expr;
pub mod machine;
pub mod store;
pub mod trace;

pub use explore::{run_sequence, Budget, ExploreError, ExploreOptions, Flow, PathSet, TerminalPath};
pub use expr::{keccak_words, BinOp, Expr, Node, SymWord, MAX_DEPTH};
pub use machine::{Machine, Memory, Mode, Replay, Val, MAX_CALL_DEPTH};
pub use store::{got_read, got_write, ContractId, GlobalStore, GotKey};
pub use trace::{dump, Event, ExitKind, FrameKind};

/// A path condition: `cond` is nonzero on the path. `origin` is the JUMPI it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub cond: SymWord,
    pub origin: (ContractId, usize),
}
