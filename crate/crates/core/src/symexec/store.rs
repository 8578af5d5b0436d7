use std::sync::Arc;

use super::expr::{Node, SymWord};
use crate::word::U256;

pub type ContractId = Arc<str>;

/// `GOT(contract@slot)`: a storage location in the global store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GotKey {
    pub contract_id: ContractId,
    pub slot_id: SymWord,
}

impl GotKey {
    pub fn new(contract_id: &ContractId, slot_id: SymWord) -> Self {
        GotKey {
            contract_id: contract_id.clone(),
            slot_id,
        }
    }
}

/// Storage of every contract in one map, partitioned by contract id.
///
/// Each partition is an ordered write log where a key appears at most once;
/// rewriting a key moves it to the end. Clones share structure.
#[derive(Debug, Clone, Default)]
pub struct GlobalStore {
    partitions: imbl::OrdMap<ContractId, imbl::Vector<(SymWord, SymWord)>>,
    /// Concrete hash values seen during execution and the words they hash.
    preimages: imbl::HashMap<U256, Arc<[U256]>>,
}

impl GlobalStore {
    pub fn record_preimage(&mut self, hash: U256, words: Vec<U256>) {
        self.preimages.insert(hash, words.into());
    }

    pub fn entries(&self, contract_id: &str) -> Vec<(SymWord, SymWord)> {
        self.partitions
            .get(contract_id)
            .map(|p| p.iter().cloned().collect())
            .unwrap_or_default()
    }

    pub fn contracts(&self) -> impl Iterator<Item = &ContractId> {
        self.partitions.keys()
    }

    /// 0/1 word that is 1 exactly when the two slot keys denote the same
    /// location, assuming keccak has no collisions.
    pub fn key_eq(&self, a: &SymWord, b: &SymWord) -> SymWord {
        if a == b {
            return SymWord::one();
        }
        match (a, b) {
            (SymWord::Const(x), SymWord::Const(y)) => SymWord::flag(x == y),
            (SymWord::Expr(_), SymWord::Expr(_)) => match (a.node(), b.node()) {
                (Some(Node::Hash(xs)), Some(Node::Hash(ys))) => args_eq(xs, ys),
                _ => a.eq_word(b),
            },
            (SymWord::Const(c), e) | (e, SymWord::Const(c)) => match e.node() {
                Some(Node::Hash(xs)) => match self.preimages.get(c) {
                    Some(words) => {
                        let ys: Vec<SymWord> = words.iter().map(|w| SymWord::Const(*w)).collect();
                        args_eq(xs, &ys)
                    }
                    None => SymWord::ZERO,
                },
                _ => a.eq_word(b),
            },
        }
    }
}

fn args_eq(xs: &[SymWord], ys: &[SymWord]) -> SymWord {
    if xs.len() != ys.len() {
        return SymWord::ZERO;
    }
    let mut acc: Option<SymWord> = None;
    for (x, y) in xs.iter().zip(ys) {
        let e = x.eq_word(y);
        match e.as_const() {
            Some(v) if v.is_zero() => return SymWord::ZERO,
            Some(_) => {}
            None => acc = Some(acc.map_or(e.clone(), |a| a.and(&e))),
        }
    }
    acc.unwrap_or_else(SymWord::one)
}

/// Reads a slot: the newest syntactically identical write wins, provably
/// different keys are skipped, and undecided keys become an if-then-else
/// chain ending in 0 for never-written storage.
pub fn got_read(store: &GlobalStore, key: &GotKey) -> SymWord {
    let Some(part) = store.partitions.get(&key.contract_id) else {
        return SymWord::ZERO;
    };
    let mut base = SymWord::ZERO;
    let mut pending = Vec::new();
    for (k, v) in part.iter().rev() {
        if *k == key.slot_id {
            base = v.clone();
            break;
        }
        let same = store.key_eq(k, &key.slot_id);
        match same.as_const() {
            Some(x) if x.is_zero() => continue,
            Some(_) => {
                base = v.clone();
                break;
            }
            None => pending.push((same, v.clone())),
        }
    }
    pending
        .into_iter()
        .rev()
        .fold(base, |acc, (c, v)| SymWord::ite(&c, &v, &acc))
}

pub fn got_write(store: &mut GlobalStore, key: &GotKey, word: SymWord) {
    let part = store.partitions.entry(key.contract_id.clone()).or_default();
    if let Some(i) = part.iter().position(|(k, _)| *k == key.slot_id) {
        part.remove(i);
    }
    part.push_back((key.slot_id.clone(), word));
}
