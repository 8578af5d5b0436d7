#![allow(dead_code)]

//! Shared fixtures and a small byte-level reference interpreter used as an
//! independent oracle for the symbolic machine's concrete mode.

pub mod tables;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use reverify::evm::CallKind;
use reverify::ingest::{load_bundle, BundleSet, ContractBundle};
use reverify::word::Selector;
use reverify::word::{Address, U256};
use sha3::{Digest, Keccak256};

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus() -> BundleSet {
    load_bundle(&corpus_dir().join("contracts")).expect("corpus loads")
}

pub fn addr(n: u64) -> Address {
    Address::from_word(&U256::from(n))
}

pub fn bundle(id: &str, asm: &str, at: u64) -> ContractBundle {
    ContractBundle::from_asm(id, asm, addr(at)).expect("fixture assembles")
}

/// Dispatcher prefix for the given `(selector, label)` pairs.
pub fn dispatcher(entries: &[(u32, &str)]) -> String {
    let mut s = String::from(
        "PUSH1 0\nCALLDATALOAD\nPUSH29 0x0100000000000000000000000000000000000000000000000000000000\nSWAP1\nDIV\n",
    );
    for (sel, label) in entries {
        s.push_str(&format!("DUP1\nPUSH4 {sel:#010x}\nEQ\nPUSH2 {label}\nJUMPI\n"));
    }
    s.push_str("PUSH1 0\nDUP1\nREVERT\n");
    s
}

pub const A: u64 = 0xaa;
pub const B: u64 = 0xbb;

pub fn entry(kind: CallKind) -> Selector {
    Selector::from_signature(&format!("via{kind:?}()"))
}

/// A calls B with the given kind, forwarding 7 wei where the kind takes a
/// value, and stores the success flag at slot 9. B records msg.sender at
/// slot 0 and msg.value at slot 1.
pub fn call_kinds_fixture() -> BundleSet {
    let mut entries = Vec::new();
    let mut bodies = String::new();
    for kind in CallKind::ALL {
        let label = format!("{kind:?}").to_lowercase();
        entries.push((entry(kind).as_u32(), label.clone()));
        bodies.push_str(&format!("{label}:\nJUMPDEST\nPUSH1 0x00\nPUSH1 0x00\nPUSH1 0x00\nPUSH1 0x00\n"));
        if kind.takes_value() {
            bodies.push_str("PUSH1 0x07\n");
        }
        bodies.push_str(&format!(
            "PUSH20 {:#042x}\nPUSH2 0xffff\n{}\nPUSH1 0x09\nSSTORE\nSTOP\n",
            B,
            format!("{:?}", kind.opcode()).to_uppercase()
        ));
    }
    let refs: Vec<(u32, &str)> = entries.iter().map(|(s, l)| (*s, l.as_str())).collect();
    let a = format!("{}{bodies}", dispatcher(&refs));
    let b = "CALLER\nPUSH1 0x00\nSSTORE\nCALLVALUE\nPUSH1 0x01\nSSTORE\nSTOP\n";
    BundleSet::new(vec![bundle("a", &a, A), bundle("b", b, B)]).unwrap()
}

pub struct RefTx {
    pub sender: U256,
    pub value: U256,
    pub calldata: Vec<u8>,
}

pub fn calldata(selector: u32, args: &[U256]) -> Vec<u8> {
    let mut v = selector.to_be_bytes().to_vec();
    for a in args {
        v.extend_from_slice(&a.to_be_bytes::<32>());
    }
    v
}

#[derive(Clone)]
pub struct RefWorld {
    pub code: HashMap<U256, Vec<u8>>,
    pub storage: BTreeMap<(U256, U256), U256>,
}

struct Outcome {
    ok: bool,
    ret: Vec<u8>,
}

fn keccak(data: &[u8]) -> U256 {
    U256::from_be_bytes::<32>(Keccak256::digest(data).into())
}

fn jumpdests(code: &[u8]) -> Vec<bool> {
    let mut ok = vec![false; code.len()];
    let mut i = 0;
    while i < code.len() {
        let b = code[i];
        if b == 0x5b {
            ok[i] = true;
        }
        i += if (0x60..=0x7f).contains(&b) { (b - 0x5f) as usize + 1 } else { 1 };
    }
    ok
}

fn mem_grow(mem: &mut Vec<u8>, end: usize) {
    if mem.len() < end {
        mem.resize(end, 0);
    }
}

fn small(v: U256) -> Option<usize> {
    (v < U256::from(1u64 << 32)).then(|| v.to::<u64>() as usize)
}

impl RefWorld {
    pub fn new(bundles: &BundleSet) -> RefWorld {
        let mut w = RefWorld {
            code: HashMap::new(),
            storage: BTreeMap::new(),
        };
        for b in bundles.iter() {
            let a = b.address.to_word();
            w.code.insert(a, b.code.clone());
            for (k, v) in &b.initial_storage {
                w.storage.insert((a, *k), *v);
            }
        }
        w
    }

    /// Runs one transaction against `to`; a failed transaction leaves no trace.
    pub fn transact(&mut self, to: U256, tx: &RefTx) -> bool {
        let snapshot = self.storage.clone();
        let out = self.exec(to, to, tx.sender, tx.value, &tx.calldata, false, 1);
        if !out.ok {
            self.storage = snapshot;
        }
        out.ok
    }

    /// Nonzero slots of one account.
    pub fn account(&self, a: U256) -> BTreeMap<U256, U256> {
        self.storage
            .iter()
            .filter(|((acct, _), v)| *acct == a && !v.is_zero())
            .map(|((_, k), v)| (*k, *v))
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn exec(&mut self, code_at: U256, this: U256, sender: U256, value: U256, input: &[u8], is_static: bool, depth: usize) -> Outcome {
        let snapshot = self.storage.clone();
        let out = self.run(code_at, this, sender, value, input, is_static, depth);
        if !out.as_ref().is_some_and(|o| o.ok) {
            self.storage = snapshot;
        }
        out.unwrap_or(Outcome { ok: false, ret: vec![] })
    }

    #[allow(clippy::too_many_arguments)]
    fn run(&mut self, code_at: U256, this: U256, sender: U256, value: U256, input: &[u8], is_static: bool, depth: usize) -> Option<Outcome> {
        let code = self.code.get(&code_at).cloned().unwrap_or_default();
        let valid = jumpdests(&code);
        let mut stack: Vec<U256> = Vec::new();
        let mut mem: Vec<u8> = Vec::new();
        let mut pc = 0usize;
        let one = U256::from(1u8);
        macro_rules! pop {
            () => {
                stack.pop()?
            };
        }
        macro_rules! push {
            ($v:expr) => {{
                if stack.len() >= 1024 {
                    return None;
                }
                stack.push($v)
            }};
        }
        let flag = |b: bool| if b { U256::from(1u8) } else { U256::ZERO };
        loop {
            let Some(&op) = code.get(pc) else {
                return Some(Outcome { ok: true, ret: vec![] });
            };
            pc += 1;
            match op {
                0x00 => return Some(Outcome { ok: true, ret: vec![] }),
                0x01 => { let (a, b) = (pop!(), pop!()); push!(a.wrapping_add(b)) }
                0x02 => { let (a, b) = (pop!(), pop!()); push!(a.wrapping_mul(b)) }
                0x03 => { let (a, b) = (pop!(), pop!()); push!(a.wrapping_sub(b)) }
                0x04 => { let (a, b) = (pop!(), pop!()); push!(if b.is_zero() { U256::ZERO } else { a / b }) }
                0x10 => { let (a, b) = (pop!(), pop!()); push!(flag(a < b)) }
                0x11 => { let (a, b) = (pop!(), pop!()); push!(flag(a > b)) }
                0x14 => { let (a, b) = (pop!(), pop!()); push!(flag(a == b)) }
                0x15 => { let a = pop!(); push!(flag(a.is_zero())) }
                0x16 => { let (a, b) = (pop!(), pop!()); push!(a & b) }
                0x17 => { let (a, b) = (pop!(), pop!()); push!(a | b) }
                0x19 => { let a = pop!(); push!(!a) }
                0x20 => {
                    let (o, l) = (small(pop!())?, small(pop!())?);
                    mem_grow(&mut mem, o + l);
                    push!(keccak(&mem[o..o + l]))
                }
                0x33 => push!(sender),
                0x34 => push!(value),
                0x35 => {
                    let o = pop!();
                    let mut w = [0u8; 32];
                    if let Some(o) = small(o) {
                        for (i, b) in w.iter_mut().enumerate() {
                            *b = input.get(o + i).copied().unwrap_or(0);
                        }
                    }
                    push!(U256::from_be_bytes(w))
                }
                0x36 => push!(U256::from(input.len())),
                0x50 => { pop!(); }
                0x51 => {
                    let o = small(pop!())?;
                    mem_grow(&mut mem, o + 32);
                    push!(U256::from_be_slice(&mem[o..o + 32]))
                }
                0x52 => {
                    let (o, v) = (small(pop!())?, pop!());
                    mem_grow(&mut mem, o + 32);
                    mem[o..o + 32].copy_from_slice(&v.to_be_bytes::<32>());
                }
                0x54 => { let k = pop!(); push!(self.storage.get(&(this, k)).copied().unwrap_or_default()) }
                0x55 => {
                    if is_static {
                        return None;
                    }
                    let (k, v) = (pop!(), pop!());
                    self.storage.insert((this, k), v);
                }
                0x56 => {
                    let d = small(pop!())?;
                    if !valid.get(d).copied().unwrap_or(false) {
                        return None;
                    }
                    pc = d;
                }
                0x57 => {
                    let (d, c) = (pop!(), pop!());
                    if !c.is_zero() {
                        let d = small(d)?;
                        if !valid.get(d).copied().unwrap_or(false) {
                            return None;
                        }
                        pc = d;
                    }
                }
                0x58 => push!(U256::from(pc - 1)),
                0x5b => {}
                0x60..=0x7f => {
                    let n = (op - 0x5f) as usize;
                    let mut w = [0u8; 32];
                    for i in 0..n {
                        w[32 - n + i] = code.get(pc + i).copied().unwrap_or(0);
                    }
                    pc += n;
                    push!(U256::from_be_bytes(w))
                }
                0x80..=0x8f => {
                    let n = (op - 0x7f) as usize;
                    if stack.len() < n {
                        return None;
                    }
                    push!(stack[stack.len() - n])
                }
                0x90..=0x9f => {
                    let n = (op - 0x8f) as usize;
                    let l = stack.len();
                    if l < n + 1 {
                        return None;
                    }
                    stack.swap(l - 1, l - 1 - n);
                }
                0xf1 | 0xf2 | 0xf4 | 0xfa => {
                    let _gas = pop!();
                    let target = pop!() & ((one << 160) - one);
                    let v = if op == 0xf1 || op == 0xf2 { pop!() } else { U256::ZERO };
                    let (ao, al, ro, rl) = (small(pop!())?, small(pop!())?, small(pop!())?, small(pop!())?);
                    if is_static && op == 0xf1 && !v.is_zero() {
                        return None;
                    }
                    mem_grow(&mut mem, (ao + al).max(ro + rl));
                    let args = mem[ao..ao + al].to_vec();
                    let out = if depth >= 4 {
                        Outcome { ok: false, ret: vec![] }
                    } else if self.code.contains_key(&target) {
                        match op {
                            0xf1 => self.exec(target, target, this, v, &args, is_static, depth + 1),
                            0xfa => self.exec(target, target, this, U256::ZERO, &args, true, depth + 1),
                            0xf2 => self.exec(target, this, this, v, &args, is_static, depth + 1),
                            _ => self.exec(target, this, sender, value, &args, is_static, depth + 1),
                        }
                    } else {
                        // an outside account: accepts the call, returns a zero word
                        Outcome { ok: true, ret: vec![0u8; 32] }
                    };
                    if out.ok && rl >= 32 && out.ret.len() >= 32 {
                        mem[ro..ro + 32].copy_from_slice(&out.ret[..32]);
                    }
                    push!(flag(out.ok))
                }
                0xf3 => {
                    let (o, l) = (small(pop!())?, small(pop!())?);
                    mem_grow(&mut mem, o + l.max(32));
                    // the machine models single-word return data
                    let ret = if l > 0 { mem[o..o + 32].to_vec() } else { vec![] };
                    return Some(Outcome { ok: true, ret });
                }
                0xfd => {
                    pop!();
                    pop!();
                    return Some(Outcome { ok: false, ret: vec![] });
                }
                _ => return None,
            }
        }
    }
}
