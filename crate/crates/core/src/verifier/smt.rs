//! SMT-LIB2 serialization of path constraints and a subprocess solver client.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::Duration;

use wait_timeout::ChildExt;

use crate::symexec::{BinOp, Expr, Node, SymWord};
use crate::word::U256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    /// Values for every symbol in the query; unmentioned ones are 0.
    Sat(BTreeMap<String, U256>),
    Unsat,
    Unknown(String),
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("malformed solver reply ({message}): {raw}")]
    Protocol { message: String, raw: String },
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
    pub seed: Option<u32>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            program: "z3".into(),
            args: vec!["-in".into(), "-smt2".into()],
            timeout: Duration::from_secs(30),
            seed: None,
        }
    }
}

impl SolverConfig {
    /// Parses a command line such as `z3 -in -smt2`.
    pub fn from_command(cmd: &str) -> Option<SolverConfig> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(SolverConfig {
            program,
            args: parts.collect(),
            ..SolverConfig::default()
        })
    }
}

fn bv(v: U256) -> String {
    format!("#x{v:064x}")
}

fn quote(name: &str) -> String {
    format!("|{}|", name.replace('|', "_"))
}

struct Writer {
    out: String,
    names: HashMap<*const Expr, String>,
    hashes: BTreeMap<usize, Vec<(String, Vec<String>)>>,
}

impl Writer {
    fn term(&mut self, w: &SymWord) -> String {
        match w {
            SymWord::Const(v) => bv(*v),
            SymWord::Expr(e) => self.node(e),
        }
    }

    fn node(&mut self, e: &Arc<Expr>) -> String {
        let key = Arc::as_ptr(e);
        if let Some(n) = self.names.get(&key) {
            return n.clone();
        }
        let zero = bv(U256::ZERO);
        let one = bv(U256::from(1));
        let body = match &e.node {
            Node::Sym(s) => {
                let n = quote(s);
                self.names.insert(key, n.clone());
                return n;
            }
            Node::Bin(op, a, b) => {
                let (a, b) = (self.term(a), self.term(b));
                let cmp = |f: &str| format!("(ite ({f} {a} {b}) {one} {zero})");
                match op {
                    BinOp::Add => format!("(bvadd {a} {b})"),
                    BinOp::Sub => format!("(bvsub {a} {b})"),
                    BinOp::Mul => format!("(bvmul {a} {b})"),
                    BinOp::Div => format!("(ite (= {b} {zero}) {zero} (bvudiv {a} {b}))"),
                    BinOp::And => format!("(bvand {a} {b})"),
                    BinOp::Or => format!("(bvor {a} {b})"),
                    BinOp::Lt => cmp("bvult"),
                    BinOp::Gt => cmp("bvugt"),
                    BinOp::Eq => cmp("="),
                }
            }
            Node::Not(a) => format!("(bvnot {})", self.term(a)),
            Node::IsZero(a) => format!("(ite (= {} {zero}) {one} {zero})", self.term(a)),
            Node::Hash(ws) => {
                let args: Vec<String> = ws.iter().map(|w| self.term(w)).collect();
                let call = if args.is_empty() {
                    format!("keccak_{}", 0)
                } else {
                    format!("(keccak_{} {})", args.len(), args.join(" "))
                };
                let n = format!("|h{}|", self.names.len());
                self.hashes.entry(args.len()).or_default().push((n.clone(), args));
                self.out
                    .push_str(&format!("(define-fun {n} () (_ BitVec 256) {call})\n"));
                self.names.insert(key, n.clone());
                return n;
            }
            Node::Ite(c, a, b) => {
                let (c, a, b) = (self.term(c), self.term(a), self.term(b));
                format!("(ite (distinct {c} {zero}) {a} {b})")
            }
        };
        let n = format!("|e{}|", self.names.len());
        self.out.push_str(&format!("(define-fun {n} () (_ BitVec 256) {body})\n"));
        self.names.insert(key, n.clone());
        n
    }
}

/// A complete script asserting that every word is nonzero.
pub fn to_smtlib(constraints: &[SymWord], seed: Option<u32>) -> String {
    let mut symbols = BTreeSet::new();
    let mut arities = BTreeSet::new();
    for c in constraints {
        c.collect_symbols(&mut symbols);
        let mut todo = vec![c];
        while let Some(w) = todo.pop() {
            if let Some(n) = w.node() {
                if let Node::Hash(ws) = n {
                    arities.insert(ws.len());
                }
                todo.extend(n.children());
            }
        }
    }
    let mut head = String::from("(set-option :produce-models true)\n");
    if let Some(s) = seed {
        head.push_str(&format!("(set-option :random-seed {s})\n"));
    }
    head.push_str("(set-logic QF_AUFBV)\n");
    for s in &symbols {
        head.push_str(&format!("(declare-const {} (_ BitVec 256))\n", quote(s)));
    }
    for n in &arities {
        let doms = vec!["(_ BitVec 256)"; *n].join(" ");
        head.push_str(&format!("(declare-fun keccak_{n} ({doms}) (_ BitVec 256))\n"));
    }
    let mut w = Writer {
        out: String::new(),
        names: HashMap::new(),
        hashes: BTreeMap::new(),
    };
    let mut asserts = String::new();
    for c in constraints {
        let t = w.term(c);
        asserts.push_str(&format!("(assert (distinct {t} {}))\n", bv(U256::ZERO)));
    }
    // keccak is treated as collision-free between the terms that occur
    for group in w.hashes.values() {
        for (i, (h1, a1)) in group.iter().enumerate() {
            for (h2, a2) in &group[i + 1..] {
                let same: Vec<String> = a1.iter().zip(a2).map(|(x, y)| format!("(= {x} {y})")).collect();
                let rhs = match same.len() {
                    0 => "true".to_string(),
                    1 => same[0].clone(),
                    _ => format!("(and {})", same.join(" ")),
                };
                asserts.push_str(&format!("(assert (=> (= {h1} {h2}) {rhs}))\n"));
            }
        }
    }
    format!("{head}{}{asserts}(check-sat)\n(get-model)\n(exit)\n", w.out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

/// Parses a sequence of s-expressions. `|quoted|` symbols lose their bars.
pub fn parse_sexps(text: &str) -> Result<Vec<Sexp>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    while i < chars.len() {
        let c = chars[i];
        match c {
            '(' => {
                stack.push(Vec::new());
                i += 1;
            }
            ')' => {
                let done = stack.pop().ok_or("unbalanced `)`")?;
                stack.last_mut().ok_or("unbalanced `)`")?.push(Sexp::List(done));
                i += 1;
            }
            ';' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            c if c.is_whitespace() => i += 1,
            '|' | '"' => {
                let end = chars[i + 1..]
                    .iter()
                    .position(|&d| d == c)
                    .ok_or("unterminated quoted token")?;
                let s: String = chars[i + 1..i + 1 + end].iter().collect();
                stack.last_mut().unwrap().push(Sexp::Atom(s));
                i += end + 2;
            }
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"()|\";".contains(chars[i]) {
                    i += 1;
                }
                stack.last_mut().unwrap().push(Sexp::Atom(chars[start..i].iter().collect()));
            }
        }
        if stack.is_empty() {
            return Err("unbalanced `)`".into());
        }
    }
    if stack.len() != 1 {
        return Err("unbalanced `(`".into());
    }
    Ok(stack.pop().unwrap())
}

fn parse_value(v: &Sexp) -> Option<U256> {
    match v {
        Sexp::Atom(a) => {
            if let Some(h) = a.strip_prefix("#x") {
                U256::from_str_radix(h, 16).ok()
            } else if let Some(b) = a.strip_prefix("#b") {
                U256::from_str_radix(b, 2).ok()
            } else {
                None
            }
        }
        // (_ bvN 256)
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(n), _] if u == "_" => n.strip_prefix("bv")?.parse().ok(),
            _ => None,
        },
    }
}

/// Reads the `define-fun` entries of a model for the given symbols.
pub fn parse_model(model: &Sexp, symbols: &BTreeSet<Arc<str>>) -> Result<BTreeMap<String, U256>, String> {
    let Sexp::List(items) = model else {
        return Err("model is not a list".into());
    };
    let items = match items.first() {
        Some(Sexp::Atom(a)) if a == "model" => &items[1..],
        _ => &items[..],
    };
    let mut out: BTreeMap<String, U256> = symbols.iter().map(|s| (s.to_string(), U256::ZERO)).collect();
    for it in items {
        let Sexp::List(parts) = it else {
            return Err("model entry is not a list".into());
        };
        match parts.as_slice() {
            [Sexp::Atom(kw), Sexp::Atom(name), Sexp::List(args), _sort, value] if kw == "define-fun" => {
                if !args.is_empty() || !out.contains_key(name.as_str()) {
                    continue;
                }
                let v = parse_value(value).ok_or_else(|| format!("value of `{name}` is not a literal"))?;
                out.insert(name.clone(), v);
            }
            [Sexp::Atom(kw), ..] if kw == "define-fun" || kw == "declare-fun" || kw == "forall" => {}
            _ => return Err("unexpected model entry".into()),
        }
    }
    Ok(out)
}

fn run_solver(script: &str, cfg: &SolverConfig) -> Result<Option<String>, String> {
    let mut child = Command::new(&cfg.program)
        .args(&cfg.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("cannot start solver `{}`: {e}", cfg.program))?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    if let Some(mut stdin) = child.stdin.take() {
        // a solver that exits early closes the pipe; the status tells the rest
        let _ = stdin.write_all(script.as_bytes());
    }
    match child.wait_timeout(cfg.timeout).map_err(|e| e.to_string())? {
        Some(_) => Ok(Some(reader.join().unwrap_or_default())),
        None => {
            let _ = child.kill();
            let _ = child.wait();
            Ok(None)
        }
    }
}

/// Decides whether all words can be nonzero at once.
pub fn check_reachability(constraints: &[SymWord], cfg: &SolverConfig) -> Result<SatResult, SolverError> {
    if constraints.iter().any(|c| c.as_const().is_some_and(|v| v.is_zero())) {
        return Ok(SatResult::Unsat);
    }
    let open: Vec<SymWord> = constraints.iter().filter(|c| !c.is_const()).cloned().collect();
    if open.is_empty() {
        return Ok(SatResult::Sat(BTreeMap::new()));
    }
    let mut symbols = BTreeSet::new();
    for c in &open {
        c.collect_symbols(&mut symbols);
    }
    let script = to_smtlib(&open, cfg.seed);
    let raw = match run_solver(&script, cfg) {
        Ok(Some(raw)) => raw,
        Ok(None) => return Ok(SatResult::Unknown("solver timeout".into())),
        Err(e) => return Ok(SatResult::Unknown(e)),
    };
    let protocol = |message: String| SolverError::Protocol {
        message,
        raw: raw.clone(),
    };
    let sexps = parse_sexps(&raw).map_err(protocol)?;
    match sexps.first() {
        Some(Sexp::Atom(a)) if a == "sat" => {
            let model = sexps.get(1).ok_or_else(|| protocol("sat without a model".into()))?;
            Ok(SatResult::Sat(parse_model(model, &symbols).map_err(protocol)?))
        }
        Some(Sexp::Atom(a)) if a == "unsat" => Ok(SatResult::Unsat),
        Some(Sexp::Atom(a)) if a == "unknown" => Ok(SatResult::Unknown("solver returned unknown".into())),
        None => Ok(SatResult::Unknown("solver produced no output".into())),
        _ => Err(protocol("expected sat, unsat or unknown".into())),
    }
}
