//! Warning reports from upstream analyzers and the contract bundles they refer to.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dependency::SlotDescriptor;
use crate::evm::{assemble, build_cfg, disassemble, AsmError, Cfg, CfgError, CodeTooLarge, Instruction};
use crate::word::{decode_hex, parse_word, Address, HexError, Selector, U256};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Warning {
    pub selector: Selector,
    #[serde(default, rename = "pc", skip_serializing_if = "Option::is_none")]
    pub pc_hint: Option<usize>,
    #[serde(default = "default_kind")]
    pub kind: String,
}

fn default_kind() -> String {
    "reentrancy".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningReport {
    pub tool_name: String,
    pub contract_id: String,
    #[serde(default)]
    pub warnings: Vec<Warning>,
}

impl WarningReport {
    /// Keeps the first warning for each selector, preserving file order.
    pub fn dedup(&mut self) {
        let mut seen = BTreeSet::new();
        self.warnings.retain(|w| seen.insert(w.selector));
    }

    pub fn selectors(&self) -> impl Iterator<Item = Selector> + '_ {
        self.warnings.iter().map(|w| w.selector)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: undecodable hex: {source}")]
    Hex { path: PathBuf, source: HexError },
    #[error("{path}: {source}")]
    Asm { path: PathBuf, source: AsmError },
    #[error("{path}: {source}")]
    TooLarge { path: PathBuf, source: CodeTooLarge },
    #[error("{path}: {source}")]
    Cfg { path: PathBuf, source: CfgError },
    #[error("contract `{0}` has both a .hex and a .asm file")]
    DuplicateContract(String),
    #[error("contracts `{first}` and `{second}` both use address {address}")]
    DuplicateAddress {
        address: Address,
        first: String,
        second: String,
    },
    #[error("report from {tool} names unknown contract `{contract}`")]
    UnknownContract { tool: String, contract: String },
    #[error("report from {tool}: selector {selector} is not a function entry of `{contract}`")]
    UnknownSelector {
        tool: String,
        contract: String,
        selector: Selector,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn schema_err(path: &Path, e: impl std::fmt::Display) -> IngestError {
    IngestError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Parses report text: a single report document or an array of them.
pub fn parse_reports(text: &str, path: &Path) -> Result<Vec<WarningReport>, IngestError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema_err(path, e))?;
    let docs = match value {
        serde_json::Value::Array(items) => items,
        other => vec![other],
    };
    docs.into_iter()
        .map(|doc| {
            let mut r: WarningReport =
                serde_json::from_value(doc).map_err(|e| schema_err(path, e))?;
            r.dedup();
            Ok(r)
        })
        .collect()
}

pub fn ingest_reports(path: &Path) -> Result<Vec<WarningReport>, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_reports(&text, path)
}

/// Reads a file holding exactly one report.
pub fn ingest_report(path: &Path) -> Result<WarningReport, IngestError> {
    let mut reports = ingest_reports(path)?;
    if reports.len() != 1 {
        return Err(schema_err(
            path,
            format!("expected one report, found {}", reports.len()),
        ));
    }
    Ok(reports.remove(0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredFunction {
    pub selector: Selector,
    #[serde(default)]
    pub name: String,
    #[serde(default, rename = "state_vars")]
    pub declared_state_vars: Vec<SlotDescriptor>,
}

#[derive(Debug, Default, Deserialize)]
struct Metadata {
    address: Option<Address>,
    functions: Option<Vec<DeclaredFunction>>,
    /// Storage at deployment, slot → value, both as `0x` hex or decimal strings.
    #[serde(default)]
    storage: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct ContractBundle {
    pub contract_id: String,
    pub code: Vec<u8>,
    pub address: Address,
    pub declared_functions: Option<Vec<DeclaredFunction>>,
    pub initial_storage: BTreeMap<U256, U256>,
    pub instructions: Vec<Instruction>,
    pub cfg: Cfg,
}

impl ContractBundle {
    /// Decodes code and builds its CFG, failing on anything malformed.
    pub fn new(
        contract_id: impl Into<String>,
        code: Vec<u8>,
        address: Address,
        path: &Path,
    ) -> Result<ContractBundle, IngestError> {
        let instructions = disassemble(&code).map_err(|source| IngestError::TooLarge {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = build_cfg(&instructions).map_err(|source| IngestError::Cfg {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(ContractBundle {
            contract_id: contract_id.into(),
            code,
            address,
            declared_functions: None,
            initial_storage: BTreeMap::new(),
            instructions,
            cfg,
        })
    }

    /// Convenience for tests and bindings: assemble text into a bundle.
    pub fn from_asm(contract_id: &str, text: &str, address: Address) -> Result<ContractBundle, IngestError> {
        let path = PathBuf::from(format!("{contract_id}.asm"));
        let code = assemble(text).map_err(|source| IngestError::Asm {
            path: path.clone(),
            source,
        })?;
        ContractBundle::new(contract_id, code, address, &path)
    }

    pub fn instruction_at(&self, pc: usize) -> Option<&Instruction> {
        self.instructions
            .binary_search_by_key(&pc, |i| i.pc)
            .ok()
            .map(|k| &self.instructions[k])
    }
}

/// All loaded contracts, sorted by id, with unique addresses.
#[derive(Debug, Clone, Default)]
pub struct BundleSet {
    bundles: Vec<ContractBundle>,
    by_id: HashMap<String, usize>,
    by_address: HashMap<Address, usize>,
}

impl BundleSet {
    pub fn new(mut bundles: Vec<ContractBundle>) -> Result<BundleSet, IngestError> {
        bundles.sort_by(|a, b| a.contract_id.cmp(&b.contract_id));
        let mut set = BundleSet::default();
        for (i, b) in bundles.iter().enumerate() {
            if set.by_id.insert(b.contract_id.clone(), i).is_some() {
                return Err(IngestError::DuplicateContract(b.contract_id.clone()));
            }
            if let Some(prev) = set.by_address.insert(b.address, i) {
                return Err(IngestError::DuplicateAddress {
                    address: b.address,
                    first: bundles[prev].contract_id.clone(),
                    second: b.contract_id.clone(),
                });
            }
        }
        set.bundles = bundles;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ContractBundle> {
        self.bundles.iter()
    }

    pub fn get(&self, contract_id: &str) -> Option<&ContractBundle> {
        self.by_id.get(contract_id).map(|&i| &self.bundles[i])
    }

    pub fn by_address(&self, address: &Address) -> Option<&ContractBundle> {
        self.by_address.get(address).map(|&i| &self.bundles[i])
    }

    /// Position of a contract in id order; stable for the lifetime of the set.
    pub fn position(&self, contract_id: &str) -> Option<usize> {
        self.by_id.get(contract_id).copied()
    }

    pub fn position_by_address(&self, address: &Address) -> Option<usize> {
        self.by_address.get(address).copied()
    }

    pub fn at(&self, index: usize) -> &ContractBundle {
        &self.bundles[index]
    }

    /// Checks that every warned contract is loaded and every selector is a
    /// dispatcher entry of it.
    pub fn validate_report(&self, report: &WarningReport) -> Result<(), IngestError> {
        let bundle = self
            .get(&report.contract_id)
            .ok_or_else(|| IngestError::UnknownContract {
                tool: report.tool_name.clone(),
                contract: report.contract_id.clone(),
            })?;
        for w in &report.warnings {
            if !bundle.cfg.function_entries.contains_key(&w.selector) {
                return Err(IngestError::UnknownSelector {
                    tool: report.tool_name.clone(),
                    contract: report.contract_id.clone(),
                    selector: w.selector,
                });
            }
        }
        Ok(())
    }
}

/// Loads every `<id>.hex` / `<id>.asm` in `dir`, with optional `<id>.json` metadata.
pub fn load_bundle(dir: &Path) -> Result<BundleSet, IngestError> {
    let mut sources: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let ext = path.extension().and_then(|e| e.to_str());
        if !matches!(ext, Some("hex" | "asm")) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if sources.insert(stem.to_string(), path.clone()).is_some() {
            return Err(IngestError::DuplicateContract(stem.to_string()));
        }
    }

    let mut bundles = Vec::with_capacity(sources.len());
    for (id, path) in sources {
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let code = if path.extension().is_some_and(|e| e == "hex") {
            decode_hex(&text).map_err(|source| IngestError::Hex {
                path: path.clone(),
                source,
            })?
        } else {
            assemble(&text).map_err(|source| IngestError::Asm {
                path: path.clone(),
                source,
            })?
        };
        let meta_path = path.with_extension("json");
        let meta: Metadata = if meta_path.exists() {
            let raw = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
            serde_json::from_str(&raw).map_err(|e| schema_err(&meta_path, e))?
        } else {
            Metadata::default()
        };
        let address = meta.address.unwrap_or_else(|| Address::derived_from(&id));
        let mut bundle = ContractBundle::new(id, code, address, &path)?;
        bundle.declared_functions = meta.functions;
        for (k, v) in &meta.storage {
            let slot = parse_word(k)
                .ok_or_else(|| schema_err(&meta_path, format!("bad storage slot `{k}`")))?;
            let value = parse_word(v)
                .ok_or_else(|| schema_err(&meta_path, format!("bad storage value `{v}`")))?;
            bundle.initial_storage.insert(slot, value);
        }
        bundles.push(bundle);
    }
    BundleSet::new(bundles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn report_with_duplicate_warnings_is_deduplicated() {
        let text = r#"{"tool_name":"t","contract_id":"c","extra":1,
            "warnings":[{"selector":"0x2e1a7d4d","kind":"reentrancy"},
                        {"selector":"0x2e1a7d4d","kind":"reentrancy","pc":7}]}"#;
        let r = parse_reports(text, Path::new("r.json")).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].warnings.len(), 1);
        assert_eq!(r[0].warnings[0].kind, "reentrancy");
    }

    #[test]
    fn empty_report_is_valid() {
        let r = parse_reports(r#"{"tool_name":"t","contract_id":"c","warnings":[]}"#, Path::new("r")).unwrap();
        assert!(r[0].warnings.is_empty());
    }

    #[test]
    fn schema_errors() {
        let p = Path::new("r.json");
        assert!(parse_reports(r#"{"contract_id":"c","warnings":[]}"#, p).is_err());
        assert!(parse_reports(r#"{"tool_name":"t","warnings":[]}"#, p).is_err());
        let short = r#"{"tool_name":"t","contract_id":"c","warnings":[{"selector":"0x2e1a7d","kind":"x"}]}"#;
        assert!(matches!(parse_reports(short, p), Err(IngestError::Schema { .. })));
    }

    #[test]
    fn array_of_reports() {
        let text = r#"[{"tool_name":"a","contract_id":"c"},{"tool_name":"b","contract_id":"d"}]"#;
        let r = parse_reports(text, Path::new("r")).unwrap();
        assert_eq!(r.len(), 2);
        assert!(ingest_report(Path::new("/nonexistent/r.json")).is_err());
    }

    #[test]
    fn empty_directory_loads_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_bundle(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_address_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let meta = r#"{"address":"0x00000000000000000000000000000000000000aa"}"#;
        write(dir.path(), "a.hex", "00");
        write(dir.path(), "a.json", meta);
        write(dir.path(), "b.asm", "STOP");
        write(dir.path(), "b.json", meta);
        assert!(matches!(
            load_bundle(dir.path()),
            Err(IngestError::DuplicateAddress { .. })
        ));
    }

    #[test]
    fn bad_hex_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "broken.hex", "0x6g");
        let err = load_bundle(dir.path()).unwrap_err();
        assert!(err.to_string().contains("broken.hex"), "{err}");
    }

    #[test]
    fn metadata_and_storage() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "w.asm", "PUSH1 0\nSLOAD\nSTOP");
        write(
            dir.path(),
            "w.json",
            r#"{"address":"0x00000000000000000000000000000000000000bb",
                "functions":[{"selector":"0xd0e30db0","name":"deposit()","state_vars":[{"slot":0},{"mapping_base":1}]}],
                "storage":{"0x0":"0xaa"}}"#,
        );
        let set = load_bundle(dir.path()).unwrap();
        let w = set.get("w").unwrap();
        assert_eq!(w.initial_storage[&U256::ZERO], U256::from(0xaa));
        let f = &w.declared_functions.as_ref().unwrap()[0];
        assert_eq!(
            f.declared_state_vars,
            vec![SlotDescriptor::Slot(U256::ZERO), SlotDescriptor::MappingBase(U256::from(1))]
        );
        assert!(set.by_address(&w.address).is_some());
    }

    #[test]
    fn loading_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "x.asm", "PUSH1 1\nSTOP");
        write(dir.path(), "y.hex", "0x60 02 00");
        let a = load_bundle(dir.path()).unwrap();
        let b = load_bundle(dir.path()).unwrap();
        let ids = |s: &BundleSet| s.iter().map(|b| (b.contract_id.clone(), b.code.clone(), b.address)).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
    }
}
