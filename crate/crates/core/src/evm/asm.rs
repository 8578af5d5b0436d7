use std::collections::HashMap;

use super::{Instruction, Opcode, MAX_CODE_SIZE};
use crate::word::parse_word;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: {message}")]
    BadOperand { line: usize, message: String },
    #[error("line {line}: label `{label}` used but never defined")]
    UndefinedLabel { line: usize, label: String },
    #[error("line {line}: label `{label}` defined twice")]
    DuplicateLabel { line: usize, label: String },
    #[error("assembled code is {0} bytes, above the size cap")]
    TooLarge(usize),
}

enum Operand {
    Bytes(Vec<u8>),
    Label(String),
}

struct Pending {
    line: usize,
    opcode: Opcode,
    operand: Option<Operand>,
}

fn is_label_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Assembles mnemonic text into bytecode.
///
/// One instruction per line; `;` starts a comment; `name:` defines a label
/// at the next instruction's pc. PUSH operands are `0x` hex, decimal, or a
/// label name, left-padded to the PUSH width.
pub fn assemble(text: &str) -> Result<Vec<u8>, AsmError> {
    let mut labels: HashMap<String, usize> = HashMap::new();
    let mut pending = Vec::new();
    let mut pc = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut rest = raw.split(';').next().unwrap_or("").trim();
        while let Some(colon) = rest.find(':') {
            let name = rest[..colon].trim();
            if !is_label_name(name) {
                break;
            }
            if labels.insert(name.to_string(), pc).is_some() {
                return Err(AsmError::DuplicateLabel {
                    line,
                    label: name.to_string(),
                });
            }
            rest = rest[colon + 1..].trim();
        }
        if rest.is_empty() {
            continue;
        }
        let mut parts = rest.split_whitespace();
        let mnemonic = parts.next().unwrap_or_default();
        let opcode: Opcode = mnemonic.parse().map_err(|_| AsmError::UnknownMnemonic {
            line,
            mnemonic: mnemonic.to_string(),
        })?;
        let arg = parts.next();
        if let Some(extra) = parts.next() {
            return Err(AsmError::BadOperand {
                line,
                message: format!("unexpected token `{extra}`"),
            });
        }
        let width = opcode.immediate_len();
        let operand = match (width, arg) {
            (0, None) => None,
            (0, Some(a)) => {
                return Err(AsmError::BadOperand {
                    line,
                    message: format!("{opcode} takes no operand, got `{a}`"),
                })
            }
            (_, None) => {
                return Err(AsmError::BadOperand {
                    line,
                    message: format!("{opcode} needs an operand"),
                })
            }
            (w, Some(a)) => Some(parse_operand(a, w, line)?),
        };
        pc += 1 + width;
        pending.push(Pending {
            line,
            opcode,
            operand,
        });
    }

    let mut code = Vec::with_capacity(pc);
    for p in pending {
        let at = code.len();
        let instr = match p.operand {
            None => Instruction::new(at, p.opcode),
            Some(Operand::Bytes(b)) => Instruction::push(at, b),
            Some(Operand::Label(name)) => {
                let target = *labels.get(&name).ok_or(AsmError::UndefinedLabel {
                    line: p.line,
                    label: name.clone(),
                })?;
                let width = p.opcode.immediate_len();
                let bytes = target.to_be_bytes();
                let significant = bytes.iter().skip_while(|b| **b == 0).count();
                if significant > width {
                    return Err(AsmError::BadOperand {
                        line: p.line,
                        message: format!("label `{name}` at {target} does not fit {}", p.opcode),
                    });
                }
                let mut imm = vec![0u8; width];
                let tail = bytes.len().min(width);
                imm[width - tail..].copy_from_slice(&bytes[bytes.len() - tail..]);
                Instruction::push(at, imm)
            }
        };
        instr.encode_into(&mut code);
    }
    if code.len() > MAX_CODE_SIZE {
        return Err(AsmError::TooLarge(code.len()));
    }
    Ok(code)
}

fn parse_operand(arg: &str, width: usize, line: usize) -> Result<Operand, AsmError> {
    if let Some(value) = parse_word(arg) {
        let bytes = value.to_be_bytes::<32>();
        let significant = 32 - (value.leading_zeros() / 8);
        if significant > width {
            return Err(AsmError::BadOperand {
                line,
                message: format!("immediate `{arg}` wider than {width} bytes"),
            });
        }
        return Ok(Operand::Bytes(bytes[32 - width..].to_vec()));
    }
    if is_label_name(arg) {
        return Ok(Operand::Label(arg.to_string()));
    }
    Err(AsmError::BadOperand {
        line,
        message: format!("cannot parse operand `{arg}`"),
    })
}
