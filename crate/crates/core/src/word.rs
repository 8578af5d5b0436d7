//! 256-bit words, addresses, selectors and the hashing primitive shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha3::{Digest, Keccak256};

pub type U256 = ruint::aliases::U256;

pub fn keccak256(data: &[u8]) -> [u8; 32] {
    Keccak256::digest(data).into()
}

/// Decodes hex text: optional `0x` prefix, ASCII whitespace ignored anywhere.
pub fn decode_hex(text: &str) -> Result<Vec<u8>, HexError> {
    let compact: String = text.split_ascii_whitespace().collect();
    let digits = compact
        .strip_prefix("0x")
        .or_else(|| compact.strip_prefix("0X"))
        .unwrap_or(&compact);
    if !digits.len().is_multiple_of(2) {
        return Err(HexError::OddLength);
    }
    digits
        .as_bytes()
        .chunks(2)
        .enumerate()
        .map(|(i, pair)| {
            let s = std::str::from_utf8(pair).map_err(|_| HexError::BadDigit(i * 2))?;
            u8::from_str_radix(s, 16).map_err(|_| HexError::BadDigit(i * 2))
        })
        .collect()
}

pub fn encode_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HexError {
    #[error("odd number of hex digits")]
    OddLength,
    #[error("invalid hex digit at offset {0}")]
    BadDigit(usize),
}

/// Parses `0x…` hex or plain decimal into a word.
pub fn parse_word(text: &str) -> Option<U256> {
    let t = text.trim();
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        if hex.is_empty() || hex.len() > 64 {
            return None;
        }
        U256::from_str_radix(hex, 16).ok()
    } else if !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit()) {
        U256::from_str_radix(t, 10).ok()
    } else {
        None
    }
}

pub fn word_hex(w: &U256) -> String {
    format!("{w:#x}")
}

/// Serde adapter for words: small values as JSON integers, larger ones as
/// `0x` hex strings; both forms are accepted on input.
pub mod word_serde {
    use super::{parse_word, word_hex, U256};
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(w: &U256, s: S) -> Result<S::Ok, S::Error> {
        match u64::try_from(*w) {
            Ok(v) => s.serialize_u64(v),
            Err(_) => s.serialize_str(&word_hex(w)),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<U256, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(U256::from(v)),
            Repr::Text(t) => {
                parse_word(&t).ok_or_else(|| serde::de::Error::custom(format!("bad word `{t}`")))
            }
        }
    }
}

/// A 4-byte function selector.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selector(pub [u8; 4]);

impl Selector {
    /// The selector of a canonical signature such as `withdraw(uint256)`.
    pub fn from_signature(sig: &str) -> Selector {
        let h = keccak256(sig.as_bytes());
        Selector([h[0], h[1], h[2], h[3]])
    }

    pub fn as_u32(self) -> u32 {
        u32::from_be_bytes(self.0)
    }

    /// The first calldata word of a call to this selector with no other bytes set.
    pub fn calldata_word(self) -> U256 {
        U256::from(self.as_u32()) << 224
    }

    /// Reads the selector from the first calldata word.
    pub fn from_calldata_word(w: &U256) -> Selector {
        let top: U256 = *w >> 224;
        Selector((top.to::<u32>()).to_be_bytes())
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", encode_hex(&self.0))
    }
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("selector must be 0x followed by exactly 8 hex digits, got `{0}`")]
pub struct BadSelector(pub String);

impl FromStr for Selector {
    type Err = BadSelector;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadSelector(s.to_string());
        let digits = s.strip_prefix("0x").ok_or_else(bad)?;
        if digits.len() != 8 {
            return Err(bad());
        }
        let bytes = decode_hex(digits).map_err(|_| bad())?;
        Ok(Selector([bytes[0], bytes[1], bytes[2], bytes[3]]))
    }
}

impl Serialize for Selector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Selector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A 20-byte account address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn to_word(self) -> U256 {
        let mut buf = [0u8; 32];
        buf[12..].copy_from_slice(&self.0);
        U256::from_be_bytes(buf)
    }

    /// The low 20 bytes of a word.
    pub fn from_word(w: &U256) -> Address {
        let bytes = w.to_be_bytes::<32>();
        let mut a = [0u8; 20];
        a.copy_from_slice(&bytes[12..]);
        Address(a)
    }

    /// Deterministic address for a contract that declares none.
    pub fn derived_from(name: &str) -> Address {
        let h = keccak256(format!("contract:{name}").as_bytes());
        let mut a = [0u8; 20];
        a.copy_from_slice(&h[12..]);
        Address(a)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", encode_hex(&self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("address must be 0x followed by exactly 40 hex digits, got `{0}`")]
pub struct BadAddress(pub String);

impl FromStr for Address {
    type Err = BadAddress;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadAddress(s.to_string());
        let digits = s.strip_prefix("0x").ok_or_else(bad)?;
        if digits.len() != 40 {
            return Err(bad());
        }
        let bytes = decode_hex(digits).map_err(|_| bad())?;
        let mut a = [0u8; 20];
        a.copy_from_slice(&bytes);
        Ok(Address(a))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_selectors() {
        // Well-known values from deployed ABIs.
        assert_eq!(
            Selector::from_signature("withdraw(uint256)").to_string(),
            "0x2e1a7d4d"
        );
        assert_eq!(Selector::from_signature("deposit()").to_string(), "0xd0e30db0");
        assert_eq!(
            Selector::from_signature("balanceOf(address)").to_string(),
            "0x70a08231"
        );
        assert_eq!(
            Selector::from_signature("transfer(address,uint256)").to_string(),
            "0xa9059cbb"
        );
    }

    #[test]
    fn keccak_of_empty_input() {
        assert_eq!(
            encode_hex(&keccak256(b"")),
            "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
        );
    }

    #[test]
    fn hex_decoding() {
        assert_eq!(decode_hex("0x60 2a\n00").unwrap(), vec![0x60, 0x2a, 0x00]);
        assert_eq!(decode_hex("").unwrap(), Vec::<u8>::new());
        assert_eq!(decode_hex("abc"), Err(HexError::OddLength));
        assert_eq!(decode_hex("zz"), Err(HexError::BadDigit(0)));
    }

    #[test]
    fn selector_parsing() {
        assert!("0x2e1a7d4d".parse::<Selector>().is_ok());
        assert!("0x2e1a7d".parse::<Selector>().is_err());
        assert!("2e1a7d4d".parse::<Selector>().is_err());
        let s: Selector = "0x2e1a7d4d".parse().unwrap();
        assert_eq!(Selector::from_calldata_word(&s.calldata_word()), s);
    }

    #[test]
    fn address_word_round_trip() {
        let a: Address = "0x00000000000000000000000000000000000000aa".parse().unwrap();
        assert_eq!(a.to_word(), U256::from(0xaa));
        assert_eq!(Address::from_word(&a.to_word()), a);
    }

    #[test]
    fn word_parsing() {
        assert_eq!(parse_word("0x2a"), Some(U256::from(42)));
        assert_eq!(parse_word("42"), Some(U256::from(42)));
        assert_eq!(parse_word("label"), None);
        assert_eq!(parse_word("0x"), None);
    }
}
