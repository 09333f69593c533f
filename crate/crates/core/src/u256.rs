//! Fixed-width 256-bit unsigned words.
//!
//! Contract-level arithmetic is checked (overflow is an error the caller turns
//! into a revert); the bytecode interpreter uses the wrapping operations.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Arithmetic failures of the checked operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ArithError {
    #[error("addition overflows 2^256 - 1")]
    Overflow,
    #[error("subtraction underflows zero")]
    Underflow,
}

/// A 256-bit unsigned integer stored as four little-endian 64-bit limbs.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct U256([u64; 4]);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseU256Error {
    #[error("empty number")]
    Empty,
    #[error("invalid digit in {0:?}")]
    InvalidDigit(String),
    #[error("value does not fit in 256 bits")]
    OutOfRange,
}

impl U256 {
    pub const ZERO: U256 = U256([0; 4]);
    pub const ONE: U256 = U256([1, 0, 0, 0]);
    pub const MAX: U256 = U256([u64::MAX; 4]);

    pub const fn from_u64(v: u64) -> Self {
        U256([v, 0, 0, 0])
    }

    pub const fn from_limbs(limbs: [u64; 4]) -> Self {
        U256(limbs)
    }

    pub const fn limbs(&self) -> [u64; 4] {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 4]
    }

    /// Returns the value as a `u64` if it fits.
    pub fn to_u64(&self) -> Option<u64> {
        if self.0[1] == 0 && self.0[2] == 0 && self.0[3] == 0 {
            Some(self.0[0])
        } else {
            None
        }
    }

    pub fn overflowing_add(self, rhs: U256) -> (U256, bool) {
        let mut out = [0u64; 4];
        let mut carry = false;
        for (i, limb) in out.iter_mut().enumerate() {
            let (s1, c1) = self.0[i].overflowing_add(rhs.0[i]);
            let (s2, c2) = s1.overflowing_add(carry as u64);
            *limb = s2;
            carry = c1 || c2;
        }
        (U256(out), carry)
    }

    pub fn overflowing_sub(self, rhs: U256) -> (U256, bool) {
        let mut out = [0u64; 4];
        let mut borrow = false;
        for (i, limb) in out.iter_mut().enumerate() {
            let (d1, b1) = self.0[i].overflowing_sub(rhs.0[i]);
            let (d2, b2) = d1.overflowing_sub(borrow as u64);
            *limb = d2;
            borrow = b1 || b2;
        }
        (U256(out), borrow)
    }

    /// `self + rhs`, or `Overflow` if the exact sum exceeds `MAX`. Never wraps.
    pub fn checked_add(self, rhs: U256) -> Result<U256, ArithError> {
        match self.overflowing_add(rhs) {
            (v, false) => Ok(v),
            (_, true) => Err(ArithError::Overflow),
        }
    }

    /// `self - rhs`, or `Underflow` if `rhs > self`.
    pub fn checked_sub(self, rhs: U256) -> Result<U256, ArithError> {
        match self.overflowing_sub(rhs) {
            (v, false) => Ok(v),
            (_, true) => Err(ArithError::Underflow),
        }
    }

    /// Addition modulo 2^256.
    pub fn wrapping_add(self, rhs: U256) -> U256 {
        self.overflowing_add(rhs).0
    }

    pub fn from_be_bytes(bytes: [u8; 32]) -> Self {
        let mut limbs = [0u64; 4];
        for (i, limb) in limbs.iter_mut().enumerate() {
            let start = 32 - 8 * (i + 1);
            let mut chunk = [0u8; 8];
            chunk.copy_from_slice(&bytes[start..start + 8]);
            *limb = u64::from_be_bytes(chunk);
        }
        U256(limbs)
    }

    /// Interprets up to 32 big-endian bytes, left-padding with zeros.
    pub fn from_be_slice(bytes: &[u8]) -> Option<Self> {
        if bytes.len() > 32 {
            return None;
        }
        let mut buf = [0u8; 32];
        buf[32 - bytes.len()..].copy_from_slice(bytes);
        Some(Self::from_be_bytes(buf))
    }

    pub fn to_be_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, limb) in self.0.iter().enumerate() {
            let start = 32 - 8 * (i + 1);
            out[start..start + 8].copy_from_slice(&limb.to_be_bytes());
        }
        out
    }

    pub fn to_biguint(&self) -> BigUint {
        BigUint::from_bytes_be(&self.to_be_bytes())
    }

    /// Narrows an unbounded natural; fails if it does not fit in 256 bits.
    pub fn try_from_biguint(n: &BigUint) -> Result<U256, ParseU256Error> {
        let bytes = n.to_bytes_be();
        U256::from_be_slice(&bytes).ok_or(ParseU256Error::OutOfRange)
    }

    fn from_str_radix(digits: &str, radix: u32) -> Result<Self, ParseU256Error> {
        if digits.is_empty() {
            return Err(ParseU256Error::Empty);
        }
        let n = BigUint::parse_bytes(digits.as_bytes(), radix)
            .ok_or_else(|| ParseU256Error::InvalidDigit(digits.to_string()))?;
        U256::try_from_biguint(&n)
    }
}

impl From<u64> for U256 {
    fn from(v: u64) -> Self {
        U256::from_u64(v)
    }
}

impl Ord for U256 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.iter().rev().cmp(other.0.iter().rev())
    }
}

impl PartialOrd for U256 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == U256::MAX {
            return f.write_str("MAX");
        }
        match self.to_u64() {
            Some(v) => write!(f, "{v}"),
            None => write!(f, "{}", self.to_biguint()),
        }
    }
}

impl fmt::Debug for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:#x}")
    }
}

impl fmt::LowerHex for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.to_biguint().to_str_radix(16);
        if f.alternate() {
            f.write_str("0x")?;
        }
        f.write_str(&s)
    }
}

/// Accepts `0x`-prefixed hex, plain decimal, or the literal `MAX`.
impl FromStr for U256 {
    type Err = ParseU256Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("max") {
            return Ok(U256::MAX);
        }
        match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            Some(hex) => U256::from_str_radix(hex, 16),
            None => U256::from_str_radix(s, 10),
        }
    }
}

impl Serialize for U256 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format!("{self:#x}"))
    }
}

impl<'de> Deserialize<'de> for U256 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Str(String),
            Num(u64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Num(n) => Ok(U256::from_u64(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checked_add_examples() {
        assert_eq!(U256::from(2).checked_add(3.into()), Ok(5.into()));
        assert_eq!(U256::MAX.checked_add(U256::ONE), Err(ArithError::Overflow));
        assert_eq!(U256::MAX.checked_add(U256::ZERO), Ok(U256::MAX));
    }

    #[test]
    fn checked_sub_examples() {
        assert_eq!(U256::from(5).checked_sub(3.into()), Ok(2.into()));
        assert_eq!(U256::from(3).checked_sub(5.into()), Err(ArithError::Underflow));
        assert_eq!(U256::MAX.checked_sub(U256::ZERO), Ok(U256::MAX));
    }

    #[test]
    fn carries_cross_limbs() {
        let a = U256::from_limbs([u64::MAX, 0, 0, 0]);
        assert_eq!(a.checked_add(U256::ONE), Ok(U256::from_limbs([0, 1, 0, 0])));
        assert_eq!(
            U256::from_limbs([0, 1, 0, 0]).checked_sub(U256::ONE),
            Ok(a)
        );
        assert_eq!(U256::MAX.wrapping_add(U256::ONE), U256::ZERO);
    }

    #[test]
    fn ordering_uses_high_limbs_first() {
        let high = U256::from_limbs([0, 0, 0, 1]);
        let low = U256::from_limbs([u64::MAX, u64::MAX, u64::MAX, 0]);
        assert!(high > low);
    }

    #[test]
    fn parse_and_print() {
        assert_eq!("0xff".parse::<U256>().unwrap(), U256::from(255));
        assert_eq!("MAX".parse::<U256>().unwrap(), U256::MAX);
        assert_eq!("10".parse::<U256>().unwrap(), U256::from(10));
        assert!("0x1".repeat(40).parse::<U256>().is_err());
        let too_big = format!("0x1{}", "0".repeat(64));
        assert_eq!(too_big.parse::<U256>(), Err(ParseU256Error::OutOfRange));
        assert_eq!(format!("{:#x}", U256::from(255)), "0xff");
        assert_eq!(U256::MAX.to_string(), "MAX");
    }

    #[test]
    fn serde_is_hex_string() {
        let v = U256::from(16);
        assert_eq!(serde_json::to_string(&v).unwrap(), "\"0x10\"");
        let back: U256 = serde_json::from_str("\"0x10\"").unwrap();
        assert_eq!(back, v);
        let num: U256 = serde_json::from_str("7").unwrap();
        assert_eq!(num, U256::from(7));
    }
}
