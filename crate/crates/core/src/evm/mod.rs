//! The EVM-lite bytecode subset: decoding, assembly text, and control-flow recovery.

mod asm;
mod cfg;
mod opcode;

pub use asm::{assemble, AsmError};
pub use cfg::{build_cfg, BasicBlock, BlockId, Cfg, CfgError, Terminator};
pub use opcode::{CallKind, Opcode, UnknownMnemonic};

use std::fmt;

use crate::word::{encode_hex, U256};

/// Deployed-contract size cap; larger inputs are rejected before decoding.
pub const MAX_CODE_SIZE: usize = 24_576;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub pc: usize,
    pub opcode: Opcode,
    /// Present iff `opcode` is a PUSH; its length equals the PUSH width.
    pub immediate: Option<Vec<u8>>,
    /// Encoded length in bytes. Differs from `1 + immediate.len()` only for a
    /// PUSH truncated by the end of code, which decodes as INVALID.
    pub size: usize,
}

impl Instruction {
    pub fn new(pc: usize, opcode: Opcode) -> Self {
        Instruction {
            pc,
            opcode,
            immediate: None,
            size: 1,
        }
    }

    pub fn push(pc: usize, bytes: Vec<u8>) -> Self {
        let width = bytes.len();
        assert!((1..=32).contains(&width), "PUSH width {width}");
        Instruction {
            pc,
            opcode: Opcode::Push(width as u8),
            immediate: Some(bytes),
            size: 1 + width,
        }
    }

    /// The pushed constant, for PUSH instructions.
    pub fn push_value(&self) -> Option<U256> {
        self.immediate.as_ref().map(|b| U256::from_be_slice(b))
    }

    pub fn next_pc(&self) -> usize {
        self.pc + self.size
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.opcode.to_byte());
        if let Some(imm) = &self.immediate {
            out.extend_from_slice(imm);
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.immediate {
            Some(imm) => write!(f, "{} 0x{}", self.opcode, encode_hex(imm)),
            None => write!(f, "{}", self.opcode),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("code is {0} bytes, above the {MAX_CODE_SIZE}-byte contract size cap")]
pub struct CodeTooLarge(pub usize);

/// Decodes bytecode into instructions.
///
/// Every byte is consumed exactly once. Unknown bytes become INVALID, and a
/// PUSH whose immediate runs past the end of code becomes a single INVALID
/// instruction spanning the remaining bytes.
pub fn disassemble(code: &[u8]) -> Result<Vec<Instruction>, CodeTooLarge> {
    if code.len() > MAX_CODE_SIZE {
        return Err(CodeTooLarge(code.len()));
    }
    let mut out = Vec::new();
    let mut pc = 0;
    while pc < code.len() {
        let op = Opcode::from_byte(code[pc]);
        let width = op.immediate_len();
        let instr = if width == 0 {
            Instruction::new(pc, op)
        } else if pc + 1 + width <= code.len() {
            Instruction::push(pc, code[pc + 1..pc + 1 + width].to_vec())
        } else {
            Instruction {
                pc,
                opcode: Opcode::Invalid,
                immediate: None,
                size: code.len() - pc,
            }
        };
        pc += instr.size;
        out.push(instr);
    }
    Ok(out)
}

pub fn encode(instrs: &[Instruction]) -> Vec<u8> {
    let mut out = Vec::new();
    for i in instrs {
        i.encode_into(&mut out);
    }
    out
}
