//! End-to-end acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::tables::{LABELED, PRECISION};
use common::{call_kinds_fixture, corpus, corpus_dir, entry, fixtures_dir, A};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use reverify::dependency::{
    build_fdg, function_sequence, target_sets_for, transaction_order, FunctionSummary, SlotDescriptor,
};
use reverify::evm::{build_cfg, disassemble, CallKind};
use reverify::harness::{enumerate_combos, numbered_tools, Metrics};
use reverify::ingest::ingest_reports;
use reverify::pruner::{build_smc_cfg, next_successors};
use reverify::symexec::{run_sequence, Event, ExitKind, ExploreOptions, Flow, FrameKind, SymWord};
use reverify::verifier::{replay, verify, witness_predicate, Outcome, Verdict, VerifyConfig};
use reverify::word::{Address, Selector, U256};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn corpus_verdicts(prune: bool) -> Vec<Verdict> {
    let reports = ingest_reports(&corpus_dir().join("reports/mythril.json")).unwrap();
    verify(&corpus(), &reports, &VerifyConfig { prune, ..VerifyConfig::default() })
}

fn c1_corpus() -> Check {
    let set = corpus();
    ensure(set.len() >= 8, || format!("only {} contracts", set.len()))?;
    let start = Instant::now();
    let verdicts = corpus_verdicts(true);
    let elapsed = start.elapsed();
    let expect = [
        ("bank", Outcome::Confirmed),
        ("collect1", Outcome::Confirmed),
        ("collect2", Outcome::Confirmed),
        ("collect3", Outcome::Confirmed),
        ("wallet", Outcome::Refuted),
        ("bitcash", Outcome::Refuted),
    ];
    ensure(verdicts.len() == expect.len(), || format!("{} verdicts", verdicts.len()))?;
    for (id, want) in expect {
        let got = verdicts.iter().find(|v| v.contract_id == id).map(|v| v.outcome);
        ensure(got == Some(want), || format!("{id}: {got:?}, expected {want:?}"))?;
    }
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("{} contracts, 6/6 verdicts, {:.2}s", set.len(), elapsed.as_secs_f64()))
}

fn c2_tables() -> Check {
    let mut n = 0;
    for (tool, before, after) in PRECISION {
        for (tp, fp, want) in [before, after] {
            let got = Metrics::from_counts(tp, fp, 0, 0).record().precision_pct.unwrap();
            ensure(got == want, || format!("{tool} precision {got} != {want}"))?;
            n += 1;
        }
    }
    for (tool, before, after) in LABELED {
        for ([tp, fp, fn_, tn], want) in [before, after] {
            let r = Metrics::from_counts(tp, fp, fn_, tn).record();
            let got = [r.precision_pct.unwrap(), r.recall_pct.unwrap(), r.f1_pct.unwrap()];
            ensure(got == want.map(String::from), || format!("{tool} {got:?} != {want:?}"))?;
            n += 3;
        }
    }
    Ok(format!("{n} percentages match"))
}

fn c3_combos() -> Check {
    let combos = enumerate_combos(&numbered_tools(8), &[2, 4, 6, 8]).map_err(|e| e.to_string())?;
    ensure(combos.len() == 127, || format!("{} combinations", combos.len()))?;
    Ok("127 combinations".into())
}

// ---- random control-flow graphs ----

const KEY_OPS: [u8; 6] = [0x54, 0x55, 0xf1, 0xf2, 0xf4, 0xfa];
const FILLER: [u8; 10] = [0x01, 0x50, 0x54, 0x55, 0xf1, 0xf2, 0xf4, 0xfa, 0x52, 0x33];

enum Term {
    Jump(usize),
    JumpI(usize),
    Halt(u8),
    Fall,
}

/// Random program of `n` blocks; block `i > 0` starts with a JUMPDEST and
/// jump targets are always block starts.
fn random_program(rng: &mut StdRng) -> Vec<u8> {
    let n = rng.random_range(1..=20usize);
    let mut bodies: Vec<Vec<u8>> = Vec::new();
    let mut terms = Vec::new();
    for i in 0..n {
        let budget = rng.random_range(1..=30usize);
        let mut body = Vec::new();
        if i > 0 {
            body.push(0x5b);
        }
        let term = match rng.random_range(0..6) {
            _ if n == 1 => Term::Halt(0x00),
            0 | 1 => Term::JumpI(rng.random_range(1..n)),
            2 => Term::Jump(rng.random_range(1..n)),
            3 => Term::Halt([0x00, 0xf3, 0xfd, 0xfe][rng.random_range(0..4)]),
            _ => Term::Fall,
        };
        let reserved = match term {
            Term::Jump(_) | Term::JumpI(_) => 2,
            Term::Halt(_) => 1,
            Term::Fall => 0,
        };
        while body.len() + reserved < budget {
            match rng.random_range(0..8) {
                0 => {
                    body.push(0x60);
                    body.push(rng.random());
                }
                // a mid-block JUMPDEST starts a new block
                1 if rng.random_bool(0.2) => body.push(0x5b),
                _ => body.push(FILLER[rng.random_range(0..FILLER.len())]),
            }
        }
        bodies.push(body);
        terms.push(term);
    }
    let size = |i: usize| {
        bodies[i].len()
            + match terms[i] {
                Term::Jump(_) | Term::JumpI(_) => 4,
                Term::Halt(_) => 1,
                Term::Fall => 0,
            }
    };
    let mut starts = vec![0usize; n];
    for i in 1..n {
        starts[i] = starts[i - 1] + size(i - 1);
    }
    let mut code = Vec::new();
    for i in 0..n {
        code.extend_from_slice(&bodies[i]);
        match terms[i] {
            Term::Jump(t) | Term::JumpI(t) => {
                code.push(0x61);
                code.extend_from_slice(&(starts[t] as u16).to_be_bytes());
                code.push(if matches!(terms[i], Term::Jump(_)) { 0x56 } else { 0x57 });
            }
            Term::Halt(op) => code.push(op),
            Term::Fall => {}
        }
    }
    code
}

/// Edges `(from_pc, to_pc, weight)` found by scanning the raw bytes.
fn brute_force_edges(code: &[u8]) -> BTreeSet<(usize, usize, u32)> {
    let mut ops: Vec<(usize, u8, usize)> = Vec::new();
    let mut pc = 0;
    while pc < code.len() {
        let op = code[pc];
        let imm = if (0x60..=0x7f).contains(&op) { (op - 0x5f) as usize } else { 0 };
        ops.push((pc, op, imm));
        pc += 1 + imm;
    }
    let ends_block = |op: u8| matches!(op, 0x00 | 0x56 | 0x57 | 0xf3 | 0xfd | 0xfe);
    let mut leaders = BTreeSet::from([0usize]);
    for (k, &(pc, op, _)) in ops.iter().enumerate() {
        if op == 0x5b {
            leaders.insert(pc);
        }
        if ends_block(op) {
            if let Some(next) = ops.get(k + 1) {
                leaders.insert(next.0);
            }
        }
    }
    let leaders: Vec<usize> = leaders.into_iter().collect();
    let block_ops = |start: usize| -> Vec<(usize, u8, usize)> {
        let end = leaders.iter().copied().find(|&l| l > start).unwrap_or(usize::MAX);
        ops.iter().copied().filter(|o| o.0 >= start && o.0 < end).collect()
    };
    let weight = |start: usize| block_ops(start).iter().filter(|o| KEY_OPS.contains(&o.1)).count() as u32;
    let mut edges = BTreeSet::new();
    for (i, &start) in leaders.iter().enumerate() {
        let body = block_ops(start);
        let next = leaders.get(i + 1).copied();
        let last = body.last().unwrap().1;
        let mut succ = Vec::new();
        if last == 0x56 || last == 0x57 {
            let push = body[body.len() - 2];
            assert_eq!(push.1, 0x61);
            succ.push(u16::from_be_bytes([code[push.0 + 1], code[push.0 + 2]]) as usize);
            if last == 0x57 {
                succ.extend(next);
            }
        } else if !ends_block(last) {
            succ.extend(next);
        }
        for s in succ {
            edges.insert((start, s, weight(s)));
        }
    }
    edges
}

fn c4_edge_weights() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    let (mut cases, mut edges) = (0, 0);
    for _ in 0..1500 {
        let code = random_program(&mut rng);
        let cfg = build_cfg(&disassemble(&code).unwrap()).map_err(|e| format!("{e:?}"))?;
        ensure(cfg.blocks.iter().all(|b| b.instructions.len() <= 31), || "oversized block".into())?;
        let smc = build_smc_cfg(Arc::new(cfg));
        let cfg = &smc.base;
        let got: BTreeSet<(usize, usize, u32)> = smc
            .edge_weight
            .iter()
            .map(|(&(from, to_pc), &w)| (cfg.block(from).first_pc, to_pc, w))
            .collect();
        let want = brute_force_edges(&code);
        ensure(got == want, || format!("code {code:02x?}: got {got:?} want {want:?}"))?;
        for b in &cfg.blocks {
            let order = next_successors(&smc, b.id);
            let keys: Vec<(std::cmp::Reverse<u32>, usize)> = order
                .iter()
                .map(|s| (std::cmp::Reverse(smc.weight(b.id, *s)), cfg.block(*s).first_pc))
                .collect();
            ensure(keys.windows(2).all(|w| w[0] <= w[1]), || format!("successor order at {}", b.first_pc))?;
        }
        cases += 1;
        edges += want.len();
    }
    Ok(format!("{cases} CFGs, {edges} edges, 0 mismatches"))
}

// ---- random summary sets ----

fn pool() -> [SlotDescriptor; 8] {
    let s = |n: u64| SlotDescriptor::Slot(U256::from(n));
    let m = |n: u64| SlotDescriptor::MappingBase(U256::from(n));
    [s(0), s(1), s(2), s(3), s(4), m(5), m(6), m(7)]
}

fn c5_dependency_graph() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    let slots = pool();
    let mut cases = 0;
    for _ in 0..1500 {
        let n = rng.random_range(1..=12usize);
        let mut summaries = BTreeMap::new();
        while summaries.len() < n {
            let sel = Selector(rng.random());
            let mut f = FunctionSummary::empty(sel);
            for d in slots {
                if rng.random_bool(0.2) {
                    f.reads.insert(d);
                }
                if rng.random_bool(0.15) {
                    f.writes.insert(d);
                }
            }
            summaries.insert(sel, f);
        }
        let sels: Vec<Selector> = summaries.keys().copied().collect();
        let warned = sels[rng.random_range(0..sels.len())];

        // closure by brute force: grow the slot set until no function adds to it
        let touched = |s: &Selector| -> Vec<SlotDescriptor> {
            slots
                .iter()
                .copied()
                .filter(|d| summaries[s].reads.contains(d) || summaries[s].writes.contains(d))
                .collect()
        };
        let mut reach: Vec<SlotDescriptor> = touched(&warned);
        loop {
            let before = reach.len();
            for s in &sels {
                let t = touched(s);
                if t.iter().any(|d| reach.contains(d)) {
                    for d in t {
                        if !reach.contains(&d) {
                            reach.push(d);
                        }
                    }
                }
            }
            if reach.len() == before {
                break;
            }
        }
        let members: Vec<Selector> = sels.iter().copied().filter(|s| touched(s).iter().any(|d| reach.contains(d))).collect();

        let t = target_sets_for(&[warned], &summaries).map_err(|e| e.to_string())?;
        let got_f: Vec<Selector> = t.f_target.iter().copied().collect();
        ensure(got_f == members, || format!("f_target {got_f:?} != {members:?}"))?;
        let reach_set: BTreeSet<SlotDescriptor> = reach.iter().copied().collect();
        ensure(t.v_target_related == reach_set, || "related slot set differs".into())?;

        let fdg = build_fdg(&t, &summaries);
        let mut node_w: BTreeMap<Selector, u32> = members.iter().map(|s| (*s, 0)).collect();
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                let mut w = 0u32;
                for d in slots {
                    if reach.contains(&d) && touched(a).contains(&d) && touched(b).contains(&d) {
                        w += 1;
                    }
                }
                let got = fdg.edges.get(&(*a, *b)).copied().unwrap_or(0);
                ensure(got == w, || format!("edge {a}-{b}: {got} != {w}"))?;
                *node_w.get_mut(a).unwrap() += w;
                *node_w.get_mut(b).unwrap() += w;
            }
        }
        ensure(fdg.edges.values().all(|w| *w > 0), || "zero-weight edge kept".into())?;
        ensure(fdg.node_weight == node_w, || format!("node weights {:?} != {node_w:?}", fdg.node_weight))?;

        // insertion sort by (weight, selector)
        let mut order: Vec<Selector> = Vec::new();
        for s in &members {
            let key = (node_w[s], *s);
            let at = order.iter().position(|o| (node_w[o], *o) > key).unwrap_or(order.len());
            order.insert(at, *s);
        }
        ensure(function_sequence(&fdg) == order, || "function sequence differs".into())?;
        let mut tx: Vec<Selector> = order.iter().copied().filter(|s| *s != warned).collect();
        tx.push(warned);
        ensure(transaction_order(&fdg, warned) == tx, || "transaction order differs".into())?;
        cases += 1;
    }
    Ok(format!("{cases} summary sets, 0 mismatches"))
}

fn c6_pruning() -> Check {
    let pruned = corpus_verdicts(true);
    let full = corpus_verdicts(false);
    ensure(pruned.len() == full.len(), || "verdict counts differ".into())?;
    let (mut sp, mut sf) = (0, 0);
    for (p, f) in pruned.iter().zip(&full) {
        ensure(p.contract_id == f.contract_id && p.selector == f.selector, || "verdict order differs".into())?;
        ensure(p.outcome == f.outcome, || format!("{}: {:?} vs {:?}", p.contract_id, p.outcome, f.outcome))?;
        ensure(p.steps <= f.steps, || format!("{}: {} > {} steps", p.contract_id, p.steps, f.steps))?;
        sp += p.steps;
        sf += f.steps;
    }
    Ok(format!("identical verdicts, {sp} vs {sf} steps"))
}

fn c7_context_table() -> Check {
    let set = call_kinds_fixture();
    let a = SymWord::Const(Address::from_word(&U256::from(A)).to_word());
    let (tx_sender, tx_value) = (SymWord::sym("tx0_sender"), SymWord::sym("tx0_value"));
    let seven = SymWord::Const(U256::from(7));
    for kind in CallKind::ALL {
        let out = run_sequence(&set, "a", &[entry(kind)], &ExploreOptions::default(), |_| Flow::Continue)
            .map_err(|e| e.to_string())?;
        ensure(out.paths.len() == 1, || format!("{kind:?}: {} paths", out.paths.len()))?;
        let p = &out.paths[0];
        let Some(Event::FrameEnter { frame, exec, storage, sender, value, is_static, .. }) = p
            .trace
            .iter()
            .find(|e| matches!(e, Event::FrameEnter { kind: FrameKind::Call(_), .. }))
        else {
            return Err(format!("{kind:?}: no callee frame"));
        };
        let want = match kind {
            CallKind::Call => ("b", "b", a.clone(), seven.clone(), false),
            CallKind::CallCode => ("b", "a", a.clone(), seven.clone(), false),
            CallKind::DelegateCall => ("b", "a", tx_sender.clone(), tx_value.clone(), false),
            CallKind::StaticCall => ("b", "b", a.clone(), SymWord::ZERO, true),
        };
        let got = (&**exec, &**storage, sender.clone(), value.clone(), *is_static);
        ensure(got == want, || format!("{kind:?}: {got:?} != {want:?}"))?;
        match kind {
            CallKind::DelegateCall => {
                ensure(p.store.entries("b").is_empty(), || "delegatecall wrote the callee".into())?;
                ensure(
                    p.store.entries("a").contains(&(SymWord::ZERO, tx_sender.clone())),
                    || "delegatecall write missing from caller".into(),
                )?;
            }
            CallKind::StaticCall => {
                let exit = p.trace.iter().find_map(|e| match e {
                    Event::FrameExit { frame: f, exit } if f == frame => Some(*exit),
                    _ => None,
                });
                ensure(exit == Some(ExitKind::Exception), || format!("static write exit {exit:?}"))?;
                ensure(p.store.entries("b").is_empty(), || "static write persisted".into())?;
            }
            _ => {}
        }
    }
    Ok("CALL, CALLCODE, DELEGATECALL, STATICCALL".into())
}

fn c8_replay() -> Check {
    let set = corpus();
    let verdicts = corpus_verdicts(true);
    let confirmed: Vec<&Verdict> = verdicts.iter().filter(|v| v.outcome == Outcome::Confirmed).collect();
    ensure(!confirmed.is_empty(), || "nothing confirmed".into())?;
    for v in &confirmed {
        let w = v.witness.as_ref().ok_or_else(|| format!("{}: no witness", v.contract_id))?;
        let p = replay(&set, &v.contract_id, &w.sequence, w.replay_inputs())
            .ok_or_else(|| format!("{}: replay produced no path", v.contract_id))?;
        ensure(!p.reverted && witness_predicate(&p.trace), || format!("{}: replay lacks the witness", v.contract_id))?;
    }
    Ok(format!("{}/{} witnesses replay", confirmed.len(), confirmed.len()))
}

fn c9_budget() -> Check {
    let fixture = fixtures_dir().join("budget");
    let report = fixture.join("report.json");
    let timeout = 5.0;
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_reverify"))
        .args(["verify", "--corpus"])
        .arg(&fixture)
        .arg("--report")
        .arg(&report)
        .args(["--timeout", "5"])
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(out.status.code() == Some(0), || format!("exit {:?}", out.status.code()))?;
    ensure(elapsed < timeout + 5.0, || format!("took {elapsed:.1}s"))?;
    let v: Verdict = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    ensure(v.outcome == Outcome::Unknown, || format!("outcome {:?}", v.outcome))?;
    Ok(format!("unknown after {elapsed:.2}s ({})", v.reason.unwrap_or_default()))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 9] = [
        ("corpus verdicts", c1_corpus),
        ("published metric arithmetic", c2_tables),
        ("combination count", c3_combos),
        ("edge weights vs brute force", c4_edge_weights),
        ("dependency graph vs brute force", c5_dependency_graph),
        ("pruning conservativeness", c6_pruning),
        ("call context table", c7_context_table),
        ("witness replay", c8_replay),
        ("budget honesty", c9_budget),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
