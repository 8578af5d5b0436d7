use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use super::{enumerate_combos, merge_reports, numbered_tools, score, GroundTruth};
use crate::dependency::{build_fdg, extract_rw_sets, fdg_to_dot, target_sets_for};
use crate::ingest::{ingest_reports, load_bundle, BundleSet, WarningReport};
use crate::pruner::{build_smc_cfg, smc_to_dot};
use crate::verifier::{verify, SolverConfig, Verdict, VerifyConfig};

#[derive(Parser, Debug)]
#[command(name = "reverify", about = "Confirm or refute reentrancy warnings by symbolic execution")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Verify every warning in the reports; writes one JSON verdict per line.
    Verify(VerifyArgs),
    /// OR-merge reports of the chosen tools.
    Merge {
        #[arg(long = "report", num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        /// Comma-separated tool names; defaults to every tool present.
        #[arg(long)]
        combo: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision, recall and F1 of a verdict file against labels.
    Score {
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List tool combinations, one per line.
    Combos {
        /// A count N (tools t1..tN) or a comma-separated list of names.
        #[arg(long, default_value = "8")]
        tools: String,
        #[arg(long = "combo-sizes", default_value = "2,4,6,8", value_delimiter = ',')]
        combo_sizes: Vec<usize>,
    },
    /// Write DOT files for each contract's pruned CFG and dependency graphs.
    ExportGraphs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long = "report", num_args = 0..)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long = "report", num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    /// Seconds per warning.
    #[arg(long, default_value_t = 120.0)]
    timeout: f64,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long = "no-prune")]
    no_prune: bool,
    /// Solver command line, e.g. "z3 -in -smt2".
    #[arg(long)]
    solver: Option<String>,
    #[arg(long = "max-steps")]
    max_steps: Option<u64>,
    /// Verdict file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct CliError(String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

type Res = Result<(), CliError>;

fn write_out(out: Option<&Path>, text: &str) -> Res {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_reports(paths: &[PathBuf]) -> Result<Vec<WarningReport>, CliError> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(ingest_reports(p)?);
    }
    Ok(all)
}

fn load_verified_reports(bundles: &BundleSet, paths: &[PathBuf]) -> Result<Vec<WarningReport>, CliError> {
    let reports = read_reports(paths)?;
    for r in &reports {
        bundles.validate_report(r)?;
    }
    Ok(reports)
}

fn cmd_verify(a: VerifyArgs) -> Res {
    if !(a.timeout > 0.0 && a.timeout.is_finite()) {
        return Err(CliError("--timeout must be positive".into()));
    }
    let bundles = load_bundle(&a.corpus)?;
    let reports = load_verified_reports(&bundles, &a.reports)?;
    let mut cfg = VerifyConfig {
        timeout: Duration::from_secs_f64(a.timeout),
        prune: !a.no_prune,
        ..VerifyConfig::default()
    };
    if let Some(j) = a.jobs {
        cfg.jobs = j.max(1);
    }
    if let Some(s) = a.max_steps {
        cfg.max_steps = s;
    }
    if let Some(cmd) = &a.solver {
        cfg.solver = SolverConfig::from_command(cmd).ok_or_else(|| CliError("empty --solver".into()))?;
    }
    cfg.solver.timeout = cfg.solver.timeout.min(cfg.timeout);
    let verdicts = verify(&bundles, &reports, &cfg);
    let mut text = String::new();
    for v in &verdicts {
        text.push_str(&serde_json::to_string(v)?);
        text.push('\n');
        eprintln!(
            "{:<10} {:<16} {} {:>8.2}s",
            format!("{:?}", v.outcome).to_lowercase(),
            v.contract_id,
            v.selector,
            v.elapsed_s
        );
    }
    write_out(a.out.as_deref(), &text)
}

fn read_verdicts(path: &Path) -> Result<Vec<Verdict>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| CliError(format!("{}: {e}", path.display()))))
        .collect()
}

fn cmd_score(verdicts: &Path, truth: &Path, out: Option<&Path>) -> Res {
    let verdicts = read_verdicts(verdicts)?;
    let text = fs::read_to_string(truth).map_err(|e| CliError(format!("{}: {e}", truth.display())))?;
    let truth: GroundTruth = serde_json::from_str(&text)?;
    let m = score(&verdicts, &truth)?;
    print!("{}", m.table());
    if let Some(p) = out {
        write_out(Some(p), &(serde_json::to_string_pretty(&m.record())? + "\n"))?;
    }
    Ok(())
}

fn cmd_merge(paths: &[PathBuf], combo: Option<&str>, out: Option<&Path>) -> Res {
    let reports = read_reports(paths)?;
    let combo: Vec<String> = match combo {
        Some(c) => c.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => {
            let mut t: Vec<String> = reports.iter().map(|r| r.tool_name.clone()).collect();
            t.sort();
            t.dedup();
            t
        }
    };
    let merged = merge_reports(&reports, &combo)?;
    write_out(out, &(serde_json::to_string_pretty(&merged)? + "\n"))
}

fn cmd_combos(tools: &str, sizes: &[usize]) -> Res {
    let tools = match tools.trim().parse::<usize>() {
        Ok(n) => numbered_tools(n),
        Err(_) => tools.split(',').map(|s| s.trim().to_string()).collect(),
    };
    let mut text = String::new();
    for c in enumerate_combos(&tools, sizes)? {
        text.push_str(&c.join("+"));
        text.push('\n');
    }
    write_out(None, &text)
}

fn cmd_export(corpus: &Path, reports: &[PathBuf], out: &Path) -> Res {
    let bundles = load_bundle(corpus)?;
    let reports = load_verified_reports(&bundles, reports)?;
    fs::create_dir_all(out)?;
    for b in bundles.iter() {
        let smc = build_smc_cfg(Arc::new(b.cfg.clone()));
        fs::write(out.join(format!("{}.smc.dot", b.contract_id)), smc_to_dot(&smc, &b.contract_id))?;
    }
    for r in &reports {
        let Some(b) = bundles.get(&r.contract_id) else { continue };
        let summaries = extract_rw_sets(&b.cfg, b);
        let names: BTreeMap<_, _> = b
            .declared_functions
            .iter()
            .flatten()
            .map(|f| (f.selector, f.name.clone()))
            .collect();
        for sel in r.selectors() {
            if let Ok(t) = target_sets_for(&[sel], &summaries) {
                let dot = fdg_to_dot(&build_fdg(&t, &summaries), &names);
                fs::write(out.join(format!("{}.{sel}.fdg.dot", b.contract_id)), dot)?;
            }
        }
    }
    Ok(())
}

/// Runs the command line; returns the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.cmd {
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Merge { reports, combo, out } => cmd_merge(&reports, combo.as_deref(), out.as_deref()),
        Cmd::Score { verdicts, truth, out } => cmd_score(&verdicts, &truth, out.as_deref()),
        Cmd::Combos { tools, combo_sizes } => cmd_combos(&tools, &combo_sizes),
        Cmd::ExportGraphs { corpus, reports, out } => cmd_export(&corpus, &reports, &out),
    };
    match result {
        Ok(()) => 0,
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
