use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::word::{keccak256, U256};

/// Deepest expression tree the machine accepts before giving up on a path.
pub const MAX_DEPTH: u32 = 10_000;

/// A 256-bit word: a constant, or an expression over named symbols.
///
/// Constructors fold constants eagerly, so a word without symbols is
/// always `Const`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymWord {
    Const(U256),
    Expr(Arc<Expr>),
}

#[derive(Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr {
    pub node: Node,
    depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    And,
    Or,
    Lt,
    Gt,
    Eq,
}

impl BinOp {
    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Lt => "lt",
            BinOp::Gt => "gt",
            BinOp::Eq => "eq",
        }
    }

    pub fn apply(self, a: U256, b: U256) -> U256 {
        let flag = |c: bool| U256::from(c as u8);
        match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Div => a.checked_div(b).unwrap_or(U256::ZERO),
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Lt => flag(a < b),
            BinOp::Gt => flag(a > b),
            BinOp::Eq => flag(a == b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Sym(Arc<str>),
    Bin(BinOp, SymWord, SymWord),
    Not(SymWord),
    IsZero(SymWord),
    /// keccak-256 over the concatenated 32-byte words.
    Hash(Vec<SymWord>),
    /// `if c != 0 { a } else { b }`; produced by storage reads.
    Ite(SymWord, SymWord, SymWord),
}

impl Node {
    pub fn children(&self) -> Vec<&SymWord> {
        match self {
            Node::Sym(_) => vec![],
            Node::Bin(_, a, b) => vec![a, b],
            Node::Not(a) | Node::IsZero(a) => vec![a],
            Node::Hash(ws) => ws.iter().collect(),
            Node::Ite(c, a, b) => vec![c, a, b],
        }
    }
}

fn mk(node: Node) -> SymWord {
    let depth = 1 + node.children().iter().map(|c| c.depth()).max().unwrap_or(0);
    SymWord::Expr(Arc::new(Expr { node, depth }))
}

impl From<U256> for SymWord {
    fn from(v: U256) -> Self {
        SymWord::Const(v)
    }
}

impl From<u64> for SymWord {
    fn from(v: u64) -> Self {
        SymWord::Const(U256::from(v))
    }
}

impl SymWord {
    pub const ZERO: SymWord = SymWord::Const(U256::ZERO);

    pub fn one() -> SymWord {
        SymWord::Const(U256::from(1))
    }

    pub fn flag(b: bool) -> SymWord {
        SymWord::Const(U256::from(b as u8))
    }

    pub fn sym(name: &str) -> SymWord {
        mk(Node::Sym(Arc::from(name)))
    }

    pub fn as_const(&self) -> Option<U256> {
        match self {
            SymWord::Const(v) => Some(*v),
            SymWord::Expr(_) => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, SymWord::Const(_))
    }

    pub fn node(&self) -> Option<&Node> {
        match self {
            SymWord::Const(_) => None,
            SymWord::Expr(e) => Some(&e.node),
        }
    }

    /// 0 for constants, 1 for a bare symbol.
    pub fn depth(&self) -> u32 {
        match self {
            SymWord::Const(_) => 0,
            SymWord::Expr(e) => e.depth,
        }
    }

    pub fn bin(op: BinOp, a: &SymWord, b: &SymWord) -> SymWord {
        use BinOp::*;
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return SymWord::Const(op.apply(x, y));
        }
        let zero = U256::ZERO;
        let one = U256::from(1);
        let (ca, cb) = (a.as_const(), b.as_const());
        match op {
            Add if ca == Some(zero) => return b.clone(),
            Add | Sub | Or if cb == Some(zero) => return a.clone(),
            Or if ca == Some(zero) => return b.clone(),
            Sub | Lt | Gt if a == b => return SymWord::ZERO,
            Eq if a == b => return SymWord::one(),
            Mul | And if ca == Some(zero) || cb == Some(zero) => return SymWord::ZERO,
            Mul if ca == Some(one) => return b.clone(),
            Mul | Div if cb == Some(one) => return a.clone(),
            Div if ca == Some(zero) || cb == Some(zero) => return SymWord::ZERO,
            And if ca == Some(U256::MAX) => return b.clone(),
            And if cb == Some(U256::MAX) => return a.clone(),
            Div => {
                if let Some(w) = cb.and_then(|d| shift_div(a, d)) {
                    return w;
                }
            }
            _ => {}
        }
        mk(Node::Bin(op, a.clone(), b.clone()))
    }

    /// Some `n` with `self < 2^n`.
    pub fn bit_bound(&self) -> usize {
        match self {
            SymWord::Const(v) => v.bit_len(),
            SymWord::Expr(e) => match &e.node {
                Node::IsZero(_) | Node::Bin(BinOp::Lt | BinOp::Gt | BinOp::Eq, _, _) => 1,
                Node::Bin(BinOp::Div, x, d) => match d.as_const() {
                    Some(d) if d.is_power_of_two() => x.bit_bound().saturating_sub(d.trailing_zeros()),
                    _ => x.bit_bound(),
                },
                Node::Bin(BinOp::And, x, y) => x.bit_bound().min(y.bit_bound()),
                Node::Bin(BinOp::Or, x, y) => x.bit_bound().max(y.bit_bound()),
                Node::Bin(BinOp::Add, x, y) => (x.bit_bound().max(y.bit_bound()) + 1).min(256),
                Node::Bin(BinOp::Mul, x, y) => (x.bit_bound() + y.bit_bound()).min(256),
                Node::Ite(_, x, y) => x.bit_bound().max(y.bit_bound()),
                _ => 256,
            },
        }
    }

    pub fn add(&self, o: &SymWord) -> SymWord {
        SymWord::bin(BinOp::Add, self, o)
    }
    pub fn sub(&self, o: &SymWord) -> SymWord {
        SymWord::bin(BinOp::Sub, self, o)
    }
    pub fn mul(&self, o: &SymWord) -> SymWord {
        SymWord::bin(BinOp::Mul, self, o)
    }
    pub fn div(&self, o: &SymWord) -> SymWord {
        SymWord::bin(BinOp::Div, self, o)
    }
    pub fn and(&self, o: &SymWord) -> SymWord {
        SymWord::bin(BinOp::And, self, o)
    }
    pub fn or(&self, o: &SymWord) -> SymWord {
        SymWord::bin(BinOp::Or, self, o)
    }
    pub fn lt(&self, o: &SymWord) -> SymWord {
        SymWord::bin(BinOp::Lt, self, o)
    }
    pub fn gt(&self, o: &SymWord) -> SymWord {
        SymWord::bin(BinOp::Gt, self, o)
    }
    pub fn eq_word(&self, o: &SymWord) -> SymWord {
        SymWord::bin(BinOp::Eq, self, o)
    }

    pub fn not(&self) -> SymWord {
        match self {
            SymWord::Const(v) => SymWord::Const(!*v),
            _ => match self.node() {
                Some(Node::Not(inner)) => inner.clone(),
                _ => mk(Node::Not(self.clone())),
            },
        }
    }

    pub fn iszero(&self) -> SymWord {
        match self {
            SymWord::Const(v) => SymWord::flag(v.is_zero()),
            _ => match self.node() {
                // iszero(iszero(b)) = b when b is already 0/1.
                Some(Node::IsZero(inner)) if inner.is_bool_rooted() => inner.clone(),
                _ => mk(Node::IsZero(self.clone())),
            },
        }
    }

    pub fn hash(words: Vec<SymWord>) -> SymWord {
        if words.iter().all(SymWord::is_const) {
            let consts: Vec<U256> = words.iter().filter_map(SymWord::as_const).collect();
            return SymWord::Const(keccak_words(&consts));
        }
        mk(Node::Hash(words))
    }

    pub fn ite(c: &SymWord, a: &SymWord, b: &SymWord) -> SymWord {
        match c.as_const() {
            Some(v) if v.is_zero() => b.clone(),
            Some(_) => a.clone(),
            None if a == b => a.clone(),
            None => mk(Node::Ite(c.clone(), a.clone(), b.clone())),
        }
    }

    /// Whether the word can only be 0 or 1.
    pub fn is_bool_rooted(&self) -> bool {
        match self {
            SymWord::Const(v) => *v <= U256::from(1),
            SymWord::Expr(e) => matches!(
                e.node,
                Node::IsZero(_) | Node::Bin(BinOp::Lt | BinOp::Gt | BinOp::Eq, _, _)
            ),
        }
    }

    /// A 0/1 word that is 1 exactly when `self != 0`.
    pub fn truthy(&self) -> SymWord {
        if self.is_bool_rooted() {
            self.clone()
        } else {
            self.iszero().iszero()
        }
    }

    pub fn collect_symbols(&self, out: &mut BTreeSet<Arc<str>>) {
        let mut todo = vec![self];
        while let Some(w) = todo.pop() {
            if let Some(n) = w.node() {
                if let Node::Sym(s) = n {
                    out.insert(s.clone());
                }
                todo.extend(n.children());
            }
        }
    }

    pub fn symbols(&self) -> BTreeSet<Arc<str>> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    /// Evaluates under an assignment of symbols, hashing with real keccak.
    pub fn eval(&self, env: &dyn Fn(&str) -> U256) -> U256 {
        match self {
            SymWord::Const(v) => *v,
            SymWord::Expr(e) => match &e.node {
                Node::Sym(s) => env(s),
                Node::Bin(op, a, b) => op.apply(a.eval(env), b.eval(env)),
                Node::Not(a) => !a.eval(env),
                Node::IsZero(a) => U256::from(a.eval(env).is_zero() as u8),
                Node::Hash(ws) => {
                    let vals: Vec<U256> = ws.iter().map(|w| w.eval(env)).collect();
                    keccak_words(&vals)
                }
                Node::Ite(c, a, b) => {
                    if c.eval(env).is_zero() {
                        b.eval(env)
                    } else {
                        a.eval(env)
                    }
                }
            },
        }
    }
}

/// `x / 2^k` when the quotient is decided by known-zero bits: either `x`
/// is below `2^k`, or `x = c + y` with `c` a multiple of `2^k` and `y < 2^k`.
fn shift_div(x: &SymWord, d: U256) -> Option<SymWord> {
    if !d.is_power_of_two() {
        return None;
    }
    let k = d.trailing_zeros();
    if x.bit_bound() <= k {
        return Some(SymWord::ZERO);
    }
    if let Some(Node::Bin(BinOp::Add, p, q)) = x.node() {
        for (c, y) in [(p, q), (q, p)] {
            if let Some(c) = c.as_const() {
                if (c.is_zero() || c.trailing_zeros() >= k) && y.bit_bound() <= k {
                    return Some(SymWord::Const(c >> k));
                }
            }
        }
    }
    None
}

pub fn keccak_words(words: &[U256]) -> U256 {
    let mut buf = Vec::with_capacity(words.len() * 32);
    for w in words {
        buf.extend_from_slice(&w.to_be_bytes::<32>());
    }
    U256::from_be_bytes(keccak256(&buf))
}

impl fmt::Display for SymWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymWord::Const(v) => write!(f, "{v:#x}"),
            SymWord::Expr(e) => match &e.node {
                Node::Sym(s) => f.write_str(s),
                Node::Bin(op, a, b) => write!(f, "({} {a} {b})", op.name()),
                Node::Not(a) => write!(f, "(not {a})"),
                Node::IsZero(a) => write!(f, "(iszero {a})"),
                Node::Hash(ws) => {
                    f.write_str("(hash")?;
                    for w in ws {
                        write!(f, " {w}")?;
                    }
                    f.write_str(")")
                }
                Node::Ite(c, a, b) => write!(f, "(ite {c} {a} {b})"),
            },
        }
    }
}

impl fmt::Debug for SymWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
