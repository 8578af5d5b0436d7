//! The single-path interpreter. `step` advances one instruction and reports
//! whether the path continues, forks, or ends.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::expr::{SymWord, MAX_DEPTH};
use super::store::{got_read, got_write, ContractId, GlobalStore, GotKey};
use super::trace::{Event, ExitKind, FrameKind};
use super::Constraint;
use crate::evm::{BlockId, CallKind, Instruction, Opcode};
use crate::ingest::BundleSet;
use crate::pruner::{build_smc_cfg, next_successors, SmcCfg};
use crate::word::{Address, Selector, U256};

pub const MAX_STACK: usize = 1024;
/// Frames alive at once, the outer transaction frame included.
pub const MAX_CALL_DEPTH: usize = 4;

pub type Taint = imbl::OrdSet<u32>;

/// A stack or memory word plus the SLOAD ids it was computed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Val {
    pub word: SymWord,
    pub taint: Taint,
}

impl Val {
    pub fn plain(word: SymWord) -> Val {
        Val {
            word,
            taint: Taint::new(),
        }
    }

    fn derived(word: SymWord, a: &Val, b: &Val) -> Val {
        Val {
            word,
            taint: a.taint.clone().union(b.taint.clone()),
        }
    }
}

/// Word-addressed memory with byte-accurate reads. Entries are kept in write
/// order; a write to an offset already present replaces that entry in place
/// of appending so that the list stays bounded on loops.
#[derive(Debug, Clone, Default)]
pub struct Memory {
    entries: Vec<(i64, Val)>,
}

fn pow2(bits: usize) -> SymWord {
    SymWord::Const(U256::from(1u8) << bits)
}

impl Memory {
    pub fn store(&mut self, off: i64, v: Val) {
        self.entries.retain(|(k, _)| *k != off);
        self.entries.push((off, v));
    }

    /// Reads 32 bytes at `off`. Bytes at or past `limit` read as zero.
    pub fn load(&self, off: i64, limit: Option<i64>) -> Val {
        let covers = |k: i64, p: i64| k <= p && p < k + 32;
        if limit.is_none_or(|l| off + 32 <= l) {
            if let Some(pos) = self.entries.iter().position(|(k, _)| *k == off) {
                let shadowed = self.entries[pos + 1..]
                    .iter()
                    .any(|(k, _)| *k < off + 32 && off < *k + 32);
                if !shadowed {
                    return self.entries[pos].1.clone();
                }
            }
        }
        // (source entry, first byte, end byte) runs over [off, off+32)
        let mut runs: Vec<(Option<usize>, i64, i64)> = Vec::new();
        for p in off..off + 32 {
            let src = if limit.is_some_and(|l| p >= l) {
                None
            } else {
                self.entries.iter().rposition(|(k, _)| covers(*k, p))
            };
            match runs.last_mut() {
                Some(r) if r.0 == src => r.2 = p + 1,
                _ => runs.push((src, p, p + 1)),
            }
        }
        let mut word = SymWord::ZERO;
        let mut taint = Taint::new();
        for (src, a, b) in runs {
            let Some(i) = src else { continue };
            let (k, e) = &self.entries[i];
            let i0 = (a - k) as usize;
            let len = (b - a) as usize;
            let mut part = e.word.clone();
            if i0 > 0 {
                part = part.mul(&pow2(8 * i0));
            }
            if len < 32 {
                part = part.div(&pow2(8 * (32 - len)));
            }
            let tail = 32 - (b - off) as usize;
            if tail > 0 {
                part = part.mul(&pow2(8 * tail));
            }
            word = word.add(&part);
            taint = taint.union(e.taint.clone());
        }
        Val { word, taint }
    }

    /// Entries overlapping `[off, off+len)`, rebased so that `off` becomes 0.
    pub fn slice(&self, off: i64, len: i64) -> Memory {
        Memory {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| *k < off + len && off < *k + 32)
                .map(|(k, v)| (k - off, v.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Calldata {
    /// Transaction input: a known selector followed by free arguments.
    Tx { prefix: Arc<str>, selector: Selector },
    /// Bytes copied from the caller's memory.
    Mem { mem: Memory, len: u64 },
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub id: u32,
    pub kind: FrameKind,
    /// Bundle index of the running code.
    pub exec: usize,
    /// Bundle index whose storage and address this frame acts as.
    pub storage: usize,
    pub sender: SymWord,
    pub value: SymWord,
    pub calldata: Arc<Calldata>,
    pub stack: Vec<Val>,
    pub memory: Memory,
    pub pc: usize,
    pub is_static: bool,
    ret_off: i64,
    ret_len: i64,
    snapshot: GlobalStore,
}

#[derive(Debug, Clone, Default)]
pub struct PathState {
    pub frames: Vec<Frame>,
    pub store: GlobalStore,
    pub constraints: imbl::Vector<Constraint>,
    pub trace: imbl::Vector<Event>,
    pub transitions: imbl::Vector<(ContractId, BlockId, BlockId)>,
    next_frame: u32,
    next_sload: u32,
    attacker_calls: u32,
    reentries: u32,
    pub executed_txs: usize,
    pub seq_pos: usize,
    pub reentry_used: bool,
    pub in_final: bool,
    /// Execute (true) or skip for every non-final transaction slot reached.
    pub schedule: Vec<bool>,
    /// Re-enter (true) or not for every eligible attacker call reached.
    pub reentry_choices: Vec<bool>,
}

/// Inputs fixing every free choice of a path, used to re-run it concretely.
#[derive(Debug, Clone, Default)]
pub struct Replay {
    pub model: BTreeMap<String, U256>,
    pub schedule: Vec<bool>,
    pub reentry: Vec<bool>,
}

#[derive(Debug, Clone)]
pub enum Mode {
    Symbolic,
    Concrete(Replay),
}

pub enum Advance {
    Running,
    /// The current state is superseded by these, in exploration order.
    Fork(Vec<PathState>),
    /// The final transaction ended.
    Finished { reverted: bool },
    /// A non-final transaction reverted; the path is discarded.
    Dropped,
    Unsupported(String),
}

enum Fault {
    Exception,
    Unsupported(String),
}

enum Effect {
    Next,
    Jump(usize),
    Branch(Vec<(usize, Constraint, Event)>),
    Halt(ExitKind, Option<Val>),
    Enter(Frame),
    Attacker(AttackerCall),
}

struct AttackerCall {
    kind: CallKind,
    target: SymWord,
    value: SymWord,
    ret_off: i64,
    ret_len: i64,
    eligible: bool,
}

pub struct Machine<'a> {
    pub bundles: &'a BundleSet,
    ids: Vec<ContractId>,
    smcs: Vec<SmcCfg>,
    warned: usize,
    sequence: Vec<Selector>,
    pub prune: bool,
    pub mode: Mode,
    pub record_transitions: bool,
}

type R<T> = Result<T, Fault>;

fn pop(f: &mut Frame) -> R<Val> {
    f.stack.pop().ok_or(Fault::Exception)
}

fn push(f: &mut Frame, v: Val) -> R<()> {
    if f.stack.len() >= MAX_STACK {
        return Err(Fault::Exception);
    }
    if v.word.depth() > MAX_DEPTH {
        return Err(Fault::Unsupported("expression depth limit".into()));
    }
    f.stack.push(v);
    Ok(())
}

fn concrete(v: &Val, what: &str) -> R<i64> {
    match v.word.as_const() {
        Some(c) if c < U256::from(1u64 << 40) => Ok(c.to::<u64>() as i64),
        Some(_) => Err(Fault::Exception),
        None => Err(Fault::Unsupported(format!("symbolic {what}"))),
    }
}

impl<'a> Machine<'a> {
    /// Runs `sequence` against `warned`; the last selector is the warned function.
    pub fn new(bundles: &'a BundleSet, warned: usize, sequence: Vec<Selector>, mode: Mode) -> Machine<'a> {
        let ids = bundles.iter().map(|b| ContractId::from(b.contract_id.as_str())).collect();
        let smcs = bundles.iter().map(|b| build_smc_cfg(Arc::new(b.cfg.clone()))).collect();
        Machine {
            bundles,
            ids,
            smcs,
            warned,
            sequence,
            prune: true,
            mode,
            record_transitions: false,
        }
    }

    pub fn smc(&self, index: usize) -> &SmcCfg {
        &self.smcs[index]
    }

    pub fn contract_id(&self, index: usize) -> &ContractId {
        &self.ids[index]
    }

    /// Storage at deployment for every bundle.
    pub fn initial_state(&self) -> PathState {
        let mut st = PathState::default();
        for (i, b) in self.bundles.iter().enumerate() {
            for (k, v) in &b.initial_storage {
                got_write(&mut st.store, &GotKey::new(&self.ids[i], (*k).into()), (*v).into());
            }
        }
        st
    }

    fn fresh(&self, name: &str) -> SymWord {
        match &self.mode {
            Mode::Symbolic => SymWord::sym(name),
            Mode::Concrete(r) => SymWord::Const(r.model.get(name).copied().unwrap_or(U256::ZERO)),
        }
    }

    fn address_word(&self, index: usize) -> SymWord {
        SymWord::Const(self.bundles.at(index).address.to_word())
    }

    pub fn step(&self, st: &mut PathState) -> Advance {
        let Some(mut f) = st.frames.pop() else {
            return self.begin_tx(st);
        };
        let Some(ins) = self.bundles.at(f.exec).instruction_at(f.pc).cloned() else {
            return self.exit_frame(st, f, ExitKind::Stop, None);
        };
        match self.exec(st, &mut f, &ins) {
            Ok(Effect::Next) => {
                self.goto(st, &mut f, ins.pc, ins.next_pc());
                st.frames.push(f);
                Advance::Running
            }
            Ok(Effect::Jump(to)) => {
                self.goto(st, &mut f, ins.pc, to);
                st.frames.push(f);
                Advance::Running
            }
            Ok(Effect::Branch(arms)) => {
                let mut out = Vec::with_capacity(arms.len());
                for (to, c, ev) in arms {
                    let mut s = st.clone();
                    let mut g = f.clone();
                    s.constraints.push_back(c);
                    s.trace.push_back(ev);
                    self.goto(&mut s, &mut g, ins.pc, to);
                    s.frames.push(g);
                    out.push(s);
                }
                Advance::Fork(out)
            }
            Ok(Effect::Halt(kind, ret)) => self.exit_frame(st, f, kind, ret),
            Ok(Effect::Enter(callee)) => {
                self.goto(st, &mut f, ins.pc, ins.next_pc());
                st.frames.push(f);
                st.frames.push(callee);
                Advance::Running
            }
            Ok(Effect::Attacker(call)) => self.attacker_call(st, f, &ins, call),
            Err(Fault::Exception) => self.exit_frame(st, f, ExitKind::Exception, None),
            Err(Fault::Unsupported(why)) => Advance::Unsupported(why),
        }
    }

    fn goto(&self, st: &mut PathState, f: &mut Frame, from: usize, to: usize) {
        f.pc = to;
        if !self.record_transitions {
            return;
        }
        let cfg = &self.bundles.at(f.exec).cfg;
        if let (Some(a), Some(b)) = (cfg.block_containing(from), cfg.block_at(to)) {
            st.transitions.push_back((self.ids[f.exec].clone(), a, b));
        }
    }

    fn begin_tx(&self, st: &mut PathState) -> Advance {
        let i = st.seq_pos;
        if i >= self.sequence.len() {
            return Advance::Finished { reverted: false };
        }
        if i + 1 == self.sequence.len() {
            self.start_tx(st, i, true);
            return Advance::Running;
        }
        match &self.mode {
            Mode::Symbolic => {
                let mut run = st.clone();
                run.schedule.push(true);
                self.start_tx(&mut run, i, false);
                let mut skip = st.clone();
                skip.schedule.push(false);
                skip.seq_pos = i + 1;
                Advance::Fork(vec![run, skip])
            }
            Mode::Concrete(r) => {
                let run = r.schedule.get(st.schedule.len()).copied().unwrap_or(false);
                st.schedule.push(run);
                if run {
                    self.start_tx(st, i, false);
                } else {
                    st.seq_pos = i + 1;
                }
                Advance::Running
            }
        }
    }

    fn start_tx(&self, st: &mut PathState, i: usize, is_final: bool) {
        let k = st.executed_txs;
        st.executed_txs += 1;
        st.seq_pos = i + 1;
        st.in_final = is_final;
        let selector = self.sequence[i];
        let sender = self.fresh(&format!("tx{k}_sender"));
        let value = self.fresh(&format!("tx{k}_value"));
        let id = st.next_frame;
        st.next_frame += 1;
        st.trace.push_back(Event::TxStart {
            index: k,
            selector,
            sender: sender.clone(),
            value: value.clone(),
            is_final,
        });
        st.trace.push_back(Event::FrameEnter {
            frame: id,
            parent: None,
            kind: FrameKind::Tx,
            exec: self.ids[self.warned].clone(),
            storage: self.ids[self.warned].clone(),
            sender: sender.clone(),
            value: value.clone(),
            is_static: false,
            selector: Some(selector),
        });
        st.frames.push(Frame {
            id,
            kind: FrameKind::Tx,
            exec: self.warned,
            storage: self.warned,
            sender,
            value,
            calldata: Arc::new(Calldata::Tx {
                prefix: format!("tx{k}_").into(),
                selector,
            }),
            stack: Vec::new(),
            memory: Memory::default(),
            pc: 0,
            is_static: false,
            ret_off: 0,
            ret_len: 0,
            snapshot: st.store.clone(),
        });
    }

    fn exit_frame(&self, st: &mut PathState, f: Frame, exit: ExitKind, ret: Option<Val>) -> Advance {
        if !exit.success() {
            st.store = f.snapshot.clone();
        }
        st.trace.push_back(Event::FrameExit { frame: f.id, exit });
        let Some(mut caller) = st.frames.pop() else {
            st.trace.push_back(Event::TxEnd {
                index: st.executed_txs - 1,
                success: exit.success(),
            });
            return if st.in_final {
                Advance::Finished {
                    reverted: !exit.success(),
                }
            } else if exit.success() {
                Advance::Running
            } else {
                Advance::Dropped
            };
        };
        let result = match f.kind {
            FrameKind::Reentry => self.attacker_return(st, &mut caller, f.ret_off, f.ret_len),
            _ => {
                if exit.success() && f.ret_len >= 32 {
                    if let Some(v) = ret {
                        caller.memory.store(f.ret_off, v);
                    }
                }
                push(&mut caller, Val::plain(SymWord::flag(exit.success())))
            }
        };
        match result {
            Ok(()) => {
                st.frames.push(caller);
                Advance::Running
            }
            Err(Fault::Exception) => self.exit_frame(st, caller, ExitKind::Exception, None),
            Err(Fault::Unsupported(why)) => Advance::Unsupported(why),
        }
    }

    /// The attacker's call returns successfully with arbitrary data.
    fn attacker_return(&self, st: &mut PathState, f: &mut Frame, ret_off: i64, ret_len: i64) -> R<()> {
        let n = st.attacker_calls;
        st.attacker_calls += 1;
        if ret_len >= 32 {
            f.memory.store(ret_off, Val::plain(self.fresh(&format!("atk{n}_ret"))));
        }
        push(f, Val::plain(SymWord::one()))
    }

    fn attacker_call(&self, st: &mut PathState, f: Frame, ins: &Instruction, call: AttackerCall) -> Advance {
        let reenter_state = |st: &PathState, mut f: Frame| {
            let mut s = st.clone();
            s.reentry_choices.push(true);
            s.reentry_used = true;
            let n = s.reentries;
            s.reentries += 1;
            let id = s.next_frame;
            s.next_frame += 1;
            let selector = *self.sequence.last().expect("non-empty sequence");
            let warned = &self.ids[self.warned];
            s.trace.push_back(Event::Call {
                frame: f.id,
                pc: ins.pc,
                kind: call.kind,
                target: call.target.clone(),
                value: call.value.clone(),
                attacker: true,
                reentry: true,
            });
            s.trace.push_back(Event::FrameEnter {
                frame: id,
                parent: Some(f.id),
                kind: FrameKind::Reentry,
                exec: warned.clone(),
                storage: warned.clone(),
                sender: call.target.clone(),
                value: SymWord::ZERO,
                is_static: false,
                selector: Some(selector),
            });
            self.goto(&mut s, &mut f, ins.pc, ins.next_pc());
            s.frames.push(f);
            let snapshot = s.store.clone();
            s.frames.push(Frame {
                id,
                kind: FrameKind::Reentry,
                exec: self.warned,
                storage: self.warned,
                sender: call.target.clone(),
                value: SymWord::ZERO,
                calldata: Arc::new(Calldata::Tx {
                    prefix: format!("re{n}_").into(),
                    selector,
                }),
                stack: Vec::new(),
                memory: Memory::default(),
                pc: 0,
                is_static: false,
                ret_off: call.ret_off,
                ret_len: call.ret_len,
                snapshot,
            });
            s
        };
        let plain_state = |st: &mut PathState, mut f: Frame, record: bool| -> Advance {
            if record {
                st.reentry_choices.push(false);
            }
            st.trace.push_back(Event::Call {
                frame: f.id,
                pc: ins.pc,
                kind: call.kind,
                target: call.target.clone(),
                value: call.value.clone(),
                attacker: true,
                reentry: false,
            });
            match self.attacker_return(st, &mut f, call.ret_off, call.ret_len) {
                Ok(()) => {
                    self.goto(st, &mut f, ins.pc, ins.next_pc());
                    st.frames.push(f);
                    Advance::Running
                }
                Err(Fault::Exception) => self.exit_frame(st, f, ExitKind::Exception, None),
                Err(Fault::Unsupported(why)) => Advance::Unsupported(why),
            }
        };
        if !call.eligible {
            return plain_state(st, f, false);
        }
        match &self.mode {
            Mode::Symbolic => {
                let first = reenter_state(st, f.clone());
                let mut second = st.clone();
                match plain_state(&mut second, f, true) {
                    Advance::Running => Advance::Fork(vec![first, second]),
                    // a stack fault on push; only the re-entering arm survives
                    _ => Advance::Fork(vec![first]),
                }
            }
            Mode::Concrete(r) => {
                let go = r.reentry.get(st.reentry_choices.len()).copied().unwrap_or(false);
                if go {
                    *st = reenter_state(st, f);
                    Advance::Running
                } else {
                    plain_state(st, f, true)
                }
            }
        }
    }

    fn calldata_load(&self, cd: &Calldata, off: i64) -> Val {
        match cd {
            Calldata::Tx { prefix, selector } => {
                if off == 0 {
                    Val::plain(SymWord::Const(selector.calldata_word()))
                } else {
                    Val::plain(self.fresh(&format!("{prefix}cd{off}")))
                }
            }
            Calldata::Mem { mem, len } => mem.load(off, Some(*len as i64)),
        }
    }

    fn exec(&self, st: &mut PathState, f: &mut Frame, ins: &Instruction) -> R<Effect> {
        use Opcode as O;
        let bin = |f: &mut Frame, g: fn(&SymWord, &SymWord) -> SymWord| -> R<Effect> {
            let a = pop(f)?;
            let b = pop(f)?;
            push(f, Val::derived(g(&a.word, &b.word), &a, &b))?;
            Ok(Effect::Next)
        };
        match ins.opcode {
            O::Stop => Ok(Effect::Halt(ExitKind::Stop, None)),
            O::Add => bin(f, SymWord::add),
            O::Sub => bin(f, SymWord::sub),
            O::Mul => bin(f, SymWord::mul),
            O::Div => bin(f, SymWord::div),
            O::Lt => bin(f, SymWord::lt),
            O::Gt => bin(f, SymWord::gt),
            O::Eq => bin(f, SymWord::eq_word),
            O::And => bin(f, SymWord::and),
            O::Or => bin(f, SymWord::or),
            O::IsZero | O::Not => {
                let a = pop(f)?;
                let w = if ins.opcode == O::IsZero { a.word.iszero() } else { a.word.not() };
                push(f, Val { word: w, taint: a.taint })?;
                Ok(Effect::Next)
            }
            O::Sha3 => {
                let off = concrete(&pop(f)?, "hash offset")?;
                let len = concrete(&pop(f)?, "hash length")?;
                if len % 32 != 0 {
                    return Err(Fault::Unsupported("hash of a partial word".into()));
                }
                let mut words = Vec::new();
                let mut taint = Taint::new();
                for i in 0..len / 32 {
                    let v = f.memory.load(off + 32 * i, None);
                    taint = taint.union(v.taint);
                    words.push(v.word);
                }
                let consts: Option<Vec<U256>> = words.iter().map(|w| w.as_const()).collect();
                let h = SymWord::hash(words);
                if let (Some(c), Some(hv)) = (consts, h.as_const()) {
                    st.store.record_preimage(hv, c);
                }
                push(f, Val { word: h, taint })?;
                Ok(Effect::Next)
            }
            O::Caller => {
                push(f, Val::plain(f.sender.clone()))?;
                Ok(Effect::Next)
            }
            O::CallValue => {
                push(f, Val::plain(f.value.clone()))?;
                Ok(Effect::Next)
            }
            O::CallDataLoad => {
                let off = concrete(&pop(f)?, "calldata offset")?;
                let v = self.calldata_load(&f.calldata, off);
                push(f, v)?;
                Ok(Effect::Next)
            }
            O::CallDataSize => {
                let w = match f.calldata.as_ref() {
                    Calldata::Tx { prefix, .. } => self.fresh(&format!("{prefix}cdsize")),
                    Calldata::Mem { len, .. } => SymWord::from(*len),
                };
                push(f, Val::plain(w))?;
                Ok(Effect::Next)
            }
            O::Pop => {
                pop(f)?;
                Ok(Effect::Next)
            }
            O::MLoad => {
                let off = concrete(&pop(f)?, "memory offset")?;
                let v = f.memory.load(off, None);
                push(f, v)?;
                Ok(Effect::Next)
            }
            O::MStore => {
                let off = concrete(&pop(f)?, "memory offset")?;
                let v = pop(f)?;
                f.memory.store(off, v);
                Ok(Effect::Next)
            }
            O::SLoad => {
                let key = pop(f)?;
                let contract = self.ids[f.storage].clone();
                let value = got_read(&st.store, &GotKey::new(&contract, key.word.clone()));
                let id = st.next_sload;
                st.next_sload += 1;
                st.trace.push_back(Event::SLoad {
                    frame: f.id,
                    id,
                    contract,
                    slot: key.word,
                    value: value.clone(),
                    pc: ins.pc,
                });
                push(f, Val { word: value, taint: key.taint.update(id) })?;
                Ok(Effect::Next)
            }
            O::SStore => {
                if f.is_static {
                    return Err(Fault::Exception);
                }
                let key = pop(f)?;
                let v = pop(f)?;
                let contract = self.ids[f.storage].clone();
                got_write(&mut st.store, &GotKey::new(&contract, key.word.clone()), v.word.clone());
                st.trace.push_back(Event::SStore {
                    frame: f.id,
                    contract,
                    slot: key.word,
                    value: v.word,
                    pc: ins.pc,
                });
                Ok(Effect::Next)
            }
            O::Jump => {
                let d = pop(f)?;
                let dest = self.jump_dest(f, &d)?;
                Ok(Effect::Jump(dest))
            }
            O::JumpI => {
                let dest_v = pop(f)?;
                let cond = pop(f)?;
                self.jumpi(st, f, ins, dest_v, cond)
            }
            O::Pc => {
                push(f, Val::plain(SymWord::from(ins.pc as u64)))?;
                Ok(Effect::Next)
            }
            O::JumpDest => Ok(Effect::Next),
            O::Push(_) => {
                push(f, Val::plain(SymWord::Const(ins.push_value().unwrap_or_default())))?;
                Ok(Effect::Next)
            }
            O::Dup(n) => {
                let n = n as usize;
                if f.stack.len() < n {
                    return Err(Fault::Exception);
                }
                let v = f.stack[f.stack.len() - n].clone();
                push(f, v)?;
                Ok(Effect::Next)
            }
            O::Swap(n) => {
                let n = n as usize;
                let len = f.stack.len();
                if len < n + 1 {
                    return Err(Fault::Exception);
                }
                f.stack.swap(len - 1, len - 1 - n);
                Ok(Effect::Next)
            }
            O::Call | O::CallCode | O::DelegateCall | O::StaticCall => self.call(st, f, ins),
            O::Return => {
                let off = concrete(&pop(f)?, "return offset")?;
                let len = concrete(&pop(f)?, "return length")?;
                let word = (len > 0).then(|| f.memory.load(off, None));
                Ok(Effect::Halt(ExitKind::Return, word))
            }
            O::Revert => {
                pop(f)?;
                pop(f)?;
                Ok(Effect::Halt(ExitKind::Revert, None))
            }
            O::Invalid => Ok(Effect::Halt(ExitKind::Invalid, None)),
        }
    }

    fn jump_dest(&self, f: &Frame, v: &Val) -> R<usize> {
        let Some(c) = v.word.as_const() else {
            return Err(Fault::Unsupported("symbolic jump target".into()));
        };
        let bundle = self.bundles.at(f.exec);
        if c >= U256::from(bundle.code.len()) {
            return Err(Fault::Exception);
        }
        let pc = c.to::<u64>() as usize;
        match bundle.instruction_at(pc) {
            Some(i) if i.opcode == Opcode::JumpDest => Ok(pc),
            _ => Err(Fault::Exception),
        }
    }

    fn jumpi(&self, st: &mut PathState, f: &Frame, ins: &Instruction, dest_v: Val, cond: Val) -> R<Effect> {
        let taint: Vec<u32> = cond.taint.iter().copied().collect();
        let branch = |taken: bool, symbolic: bool| Event::Branch {
            frame: f.id,
            pc: ins.pc,
            taint: taint.clone(),
            symbolic,
            taken,
        };
        if let Some(c) = cond.word.as_const() {
            let taken = !c.is_zero();
            st.trace.push_back(branch(taken, false));
            return if taken {
                self.jump_dest(f, &dest_v).map(Effect::Jump)
            } else {
                Ok(Effect::Next)
            };
        }
        let dest = self.jump_dest(f, &dest_v).map_err(|e| match e {
            Fault::Exception => Fault::Unsupported("invalid jump target under a symbolic condition".into()),
            other => other,
        })?;
        let cfg = &self.bundles.at(f.exec).cfg;
        let here = cfg.block_containing(ins.pc).expect("pc inside a block");
        let origin = (self.ids[f.exec].clone(), ins.pc);
        let arm = |taken: bool| {
            let to = if taken { dest } else { ins.next_pc() };
            let c = if taken { cond.word.truthy() } else { cond.word.iszero() };
            (
                to,
                Constraint {
                    cond: c,
                    origin: origin.clone(),
                },
                branch(taken, true),
            )
        };
        let arms = if self.prune && !cfg.block(here).dynamic_jump {
            let mut arms = Vec::new();
            for b in next_successors(&self.smcs[f.exec], here) {
                let pc = cfg.block(b).first_pc;
                if pc == dest {
                    arms.push(arm(true));
                }
                if pc == ins.next_pc() && pc != dest {
                    arms.push(arm(false));
                }
            }
            arms
        } else {
            vec![arm(true), arm(false)]
        };
        Ok(Effect::Branch(arms))
    }

    fn call(&self, st: &mut PathState, f: &mut Frame, ins: &Instruction) -> R<Effect> {
        let kind = ins.opcode.call_kind().expect("call opcode");
        let _gas = pop(f)?;
        let target = pop(f)?;
        let value = if kind.takes_value() { pop(f)?.word } else { SymWord::ZERO };
        let args_off = concrete(&pop(f)?, "call argument offset")?;
        let args_len = concrete(&pop(f)?, "call argument length")?;
        let ret_off = concrete(&pop(f)?, "call return offset")?;
        let ret_len = concrete(&pop(f)?, "call return length")?;
        if f.is_static && kind == CallKind::Call && value.as_const().is_some_and(|v| !v.is_zero()) {
            return Err(Fault::Exception);
        }
        let depth = st.frames.len() + 1;
        let callee = target
            .word
            .as_const()
            .and_then(|c| self.bundles.position_by_address(&Address::from_word(&c)));
        let Some(idx) = callee else {
            return Ok(Effect::Attacker(AttackerCall {
                kind,
                target: target.word,
                value,
                ret_off,
                ret_len,
                eligible: st.in_final
                    && !st.reentry_used
                    && !f.is_static
                    && kind != CallKind::StaticCall
                    && depth < MAX_CALL_DEPTH,
            }));
        };
        st.trace.push_back(Event::Call {
            frame: f.id,
            pc: ins.pc,
            kind,
            target: target.word.clone(),
            value: value.clone(),
            attacker: false,
            reentry: false,
        });
        if depth >= MAX_CALL_DEPTH {
            push(f, Val::plain(SymWord::ZERO))?;
            return Ok(Effect::Next);
        }
        let this = self.address_word(f.storage);
        let (sender, value, storage) = match kind {
            CallKind::Call => (this, value, idx),
            CallKind::StaticCall => (this, SymWord::ZERO, idx),
            CallKind::CallCode => (this, value, f.storage),
            CallKind::DelegateCall => (f.sender.clone(), f.value.clone(), f.storage),
        };
        let mem = f.memory.slice(args_off, args_len);
        let selector = (args_len >= 4)
            .then(|| mem.load(0, Some(args_len)).word.as_const())
            .flatten()
            .map(|w| Selector::from_calldata_word(&w));
        let is_static = f.is_static || kind == CallKind::StaticCall;
        let id = st.next_frame;
        st.next_frame += 1;
        st.trace.push_back(Event::FrameEnter {
            frame: id,
            parent: Some(f.id),
            kind: FrameKind::Call(kind),
            exec: self.ids[idx].clone(),
            storage: self.ids[storage].clone(),
            sender: sender.clone(),
            value: value.clone(),
            is_static,
            selector,
        });
        Ok(Effect::Enter(Frame {
            id,
            kind: FrameKind::Call(kind),
            exec: idx,
            storage,
            sender,
            value,
            calldata: Arc::new(Calldata::Mem {
                mem,
                len: args_len as u64,
            }),
            stack: Vec::new(),
            memory: Memory::default(),
            pc: 0,
            is_static,
            ret_off,
            ret_len,
            snapshot: st.store.clone(),
        }))
    }
}
