use std::fmt;
use std::str::FromStr;

/// The supported EVM opcode subset.
///
/// `Push`, `Dup` and `Swap` carry their width/depth (1..=32 and 1..=16).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Stop,
    Add,
    Mul,
    Sub,
    Div,
    Lt,
    Gt,
    Eq,
    IsZero,
    And,
    Or,
    Not,
    Sha3,
    Caller,
    CallValue,
    CallDataLoad,
    CallDataSize,
    Pop,
    MLoad,
    MStore,
    SLoad,
    SStore,
    Jump,
    JumpI,
    Pc,
    JumpDest,
    Push(u8),
    Dup(u8),
    Swap(u8),
    Call,
    CallCode,
    Return,
    DelegateCall,
    StaticCall,
    Revert,
    Invalid,
}

/// The four external-call instructions, which switch execution context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CallKind {
    Call,
    CallCode,
    DelegateCall,
    StaticCall,
}

impl CallKind {
    pub const ALL: [CallKind; 4] = [
        CallKind::Call,
        CallKind::CallCode,
        CallKind::DelegateCall,
        CallKind::StaticCall,
    ];

    /// Whether the call pops a value operand.
    pub fn takes_value(self) -> bool {
        matches!(self, CallKind::Call | CallKind::CallCode)
    }

    pub fn opcode(self) -> Opcode {
        match self {
            CallKind::Call => Opcode::Call,
            CallKind::CallCode => Opcode::CallCode,
            CallKind::DelegateCall => Opcode::DelegateCall,
            CallKind::StaticCall => Opcode::StaticCall,
        }
    }
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.opcode(), f)
    }
}

impl Opcode {
    /// Decodes one byte. Bytes outside the subset decode to `Invalid`.
    pub fn from_byte(b: u8) -> Opcode {
        use Opcode::*;
        match b {
            0x00 => Stop,
            0x01 => Add,
            0x02 => Mul,
            0x03 => Sub,
            0x04 => Div,
            0x10 => Lt,
            0x11 => Gt,
            0x14 => Eq,
            0x15 => IsZero,
            0x16 => And,
            0x17 => Or,
            0x19 => Not,
            0x20 => Sha3,
            0x33 => Caller,
            0x34 => CallValue,
            0x35 => CallDataLoad,
            0x36 => CallDataSize,
            0x50 => Pop,
            0x51 => MLoad,
            0x52 => MStore,
            0x54 => SLoad,
            0x55 => SStore,
            0x56 => Jump,
            0x57 => JumpI,
            0x58 => Pc,
            0x5b => JumpDest,
            0x60..=0x7f => Push(b - 0x5f),
            0x80..=0x8f => Dup(b - 0x7f),
            0x90..=0x9f => Swap(b - 0x8f),
            0xf1 => Call,
            0xf2 => CallCode,
            0xf3 => Return,
            0xf4 => DelegateCall,
            0xfa => StaticCall,
            0xfd => Revert,
            _ => Invalid,
        }
    }

    pub fn to_byte(self) -> u8 {
        use Opcode::*;
        match self {
            Stop => 0x00,
            Add => 0x01,
            Mul => 0x02,
            Sub => 0x03,
            Div => 0x04,
            Lt => 0x10,
            Gt => 0x11,
            Eq => 0x14,
            IsZero => 0x15,
            And => 0x16,
            Or => 0x17,
            Not => 0x19,
            Sha3 => 0x20,
            Caller => 0x33,
            CallValue => 0x34,
            CallDataLoad => 0x35,
            CallDataSize => 0x36,
            Pop => 0x50,
            MLoad => 0x51,
            MStore => 0x52,
            SLoad => 0x54,
            SStore => 0x55,
            Jump => 0x56,
            JumpI => 0x57,
            Pc => 0x58,
            JumpDest => 0x5b,
            Push(n) => 0x5f + n,
            Dup(n) => 0x7f + n,
            Swap(n) => 0x8f + n,
            Call => 0xf1,
            CallCode => 0xf2,
            Return => 0xf3,
            DelegateCall => 0xf4,
            StaticCall => 0xfa,
            Revert => 0xfd,
            Invalid => 0xfe,
        }
    }

    /// Width of the immediate operand in bytes (PUSH family only).
    pub fn immediate_len(self) -> usize {
        match self {
            Opcode::Push(n) => n as usize,
            _ => 0,
        }
    }

    pub fn call_kind(self) -> Option<CallKind> {
        match self {
            Opcode::Call => Some(CallKind::Call),
            Opcode::CallCode => Some(CallKind::CallCode),
            Opcode::DelegateCall => Some(CallKind::DelegateCall),
            Opcode::StaticCall => Some(CallKind::StaticCall),
            _ => None,
        }
    }

    /// SSTORE, SLOAD and the CALL family: the instructions that make a block a key block.
    pub fn is_key(self) -> bool {
        matches!(self, Opcode::SStore | Opcode::SLoad) || self.call_kind().is_some()
    }

    /// Instructions after which control never falls through to the next pc.
    pub fn is_halting(self) -> bool {
        matches!(
            self,
            Opcode::Stop | Opcode::Return | Opcode::Revert | Opcode::Invalid
        )
    }

    /// Instructions that end a basic block.
    pub fn is_control_transfer(self) -> bool {
        self.is_halting() || matches!(self, Opcode::Jump | Opcode::JumpI)
    }

    /// Number of stack items consumed and produced.
    pub fn stack_io(self) -> (usize, usize) {
        use Opcode::*;
        match self {
            Stop | JumpDest | Invalid => (0, 0),
            Add | Mul | Sub | Div | Lt | Gt | Eq | And | Or | Sha3 => (2, 1),
            IsZero | Not | CallDataLoad | MLoad | SLoad => (1, 1),
            Caller | CallValue | CallDataSize | Pc | Push(_) => (0, 1),
            Pop | Jump => (1, 0),
            MStore | SStore | JumpI | Return | Revert => (2, 0),
            Dup(n) => (n as usize, n as usize + 1),
            Swap(n) => (n as usize + 1, n as usize + 1),
            Call | CallCode => (7, 1),
            DelegateCall | StaticCall => (6, 1),
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Opcode::*;
        let s = match self {
            Stop => "STOP",
            Add => "ADD",
            Mul => "MUL",
            Sub => "SUB",
            Div => "DIV",
            Lt => "LT",
            Gt => "GT",
            Eq => "EQ",
            IsZero => "ISZERO",
            And => "AND",
            Or => "OR",
            Not => "NOT",
            Sha3 => "SHA3",
            Caller => "CALLER",
            CallValue => "CALLVALUE",
            CallDataLoad => "CALLDATALOAD",
            CallDataSize => "CALLDATASIZE",
            Pop => "POP",
            MLoad => "MLOAD",
            MStore => "MSTORE",
            SLoad => "SLOAD",
            SStore => "SSTORE",
            Jump => "JUMP",
            JumpI => "JUMPI",
            Pc => "PC",
            JumpDest => "JUMPDEST",
            Push(n) => return write!(f, "PUSH{n}"),
            Dup(n) => return write!(f, "DUP{n}"),
            Swap(n) => return write!(f, "SWAP{n}"),
            Call => "CALL",
            CallCode => "CALLCODE",
            Return => "RETURN",
            DelegateCall => "DELEGATECALL",
            StaticCall => "STATICCALL",
            Revert => "REVERT",
            Invalid => "INVALID",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mnemonic `{0}`")]
pub struct UnknownMnemonic(pub String);

impl FromStr for Opcode {
    type Err = UnknownMnemonic;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        let numbered = |prefix: &str, max: u8| -> Option<u8> {
            let n: u8 = upper.strip_prefix(prefix)?.parse().ok()?;
            (1..=max).contains(&n).then_some(n)
        };
        if let Some(n) = numbered("PUSH", 32) {
            return Ok(Opcode::Push(n));
        }
        if let Some(n) = numbered("DUP", 16) {
            return Ok(Opcode::Dup(n));
        }
        if let Some(n) = numbered("SWAP", 16) {
            return Ok(Opcode::Swap(n));
        }
        // KECCAK256 is the modern name of SHA3.
        let op = match upper.as_str() {
            "STOP" => Opcode::Stop,
            "ADD" => Opcode::Add,
            "MUL" => Opcode::Mul,
            "SUB" => Opcode::Sub,
            "DIV" => Opcode::Div,
            "LT" => Opcode::Lt,
            "GT" => Opcode::Gt,
            "EQ" => Opcode::Eq,
            "ISZERO" => Opcode::IsZero,
            "AND" => Opcode::And,
            "OR" => Opcode::Or,
            "NOT" => Opcode::Not,
            "SHA3" | "KECCAK256" => Opcode::Sha3,
            "CALLER" => Opcode::Caller,
            "CALLVALUE" => Opcode::CallValue,
            "CALLDATALOAD" => Opcode::CallDataLoad,
            "CALLDATASIZE" => Opcode::CallDataSize,
            "POP" => Opcode::Pop,
            "MLOAD" => Opcode::MLoad,
            "MSTORE" => Opcode::MStore,
            "SLOAD" => Opcode::SLoad,
            "SSTORE" => Opcode::SStore,
            "JUMP" => Opcode::Jump,
            "JUMPI" => Opcode::JumpI,
            "PC" => Opcode::Pc,
            "JUMPDEST" => Opcode::JumpDest,
            "CALL" => Opcode::Call,
            "CALLCODE" => Opcode::CallCode,
            "RETURN" => Opcode::Return,
            "DELEGATECALL" => Opcode::DelegateCall,
            "STATICCALL" => Opcode::StaticCall,
            "REVERT" => Opcode::Revert,
            "INVALID" => Opcode::Invalid,
            _ => return Err(UnknownMnemonic(s.to_string())),
        };
        Ok(op)
    }
}
