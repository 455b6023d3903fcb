//! Hashing primitives shared by both consensus modes: double SHA-256,
//! 256-bit difficulty targets (with the 4-byte compact header encoding) and
//! Merkle roots.
//!
//! Digests are compared against targets as 256-bit **big-endian** unsigned
//! integers: byte 0 of a [`Digest256`] is the most significant byte, so a
//! digest whose first `z` bits are zero is numerically below `2^(256 - z)`.

use std::fmt;
use std::str::FromStr;

use primitive_types::{U256, U512};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HashError {
    #[error("leading zero bit count {0} out of range 0..=255")]
    ZeroBitsOutOfRange(u32),
    #[error("merkle root of an empty leaf list is undefined")]
    EmptyMerkleLeaves,
    #[error("target must be greater than zero")]
    ZeroTarget,
    #[error("compact bits {0:#010x} do not encode a valid target")]
    BadCompact(u32),
    #[error("invalid hex: {0}")]
    BadHex(String),
}

/// 32-byte hash output, ordered as a big-endian 256-bit integer.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest256(pub [u8; 32]);

impl Digest256 {
    pub const ZERO: Digest256 = Digest256([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_u256(&self) -> U256 {
        U256::from_big_endian(&self.0)
    }

    /// Number of leading zero bits.
    pub fn leading_zero_bits(&self) -> u32 {
        let mut zeros = 0;
        for byte in self.0 {
            if byte == 0 {
                zeros += 8;
            } else {
                zeros += byte.leading_zeros();
                break;
            }
        }
        zeros
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, HashError> {
        let bytes = hex::decode(s).map_err(|e| HashError::BadHex(e.to_string()))?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| HashError::BadHex(format!("expected 32 bytes in {s:?}")))?;
        Ok(Digest256(arr))
    }

    /// First eight hex characters, for log lines.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest256({})", self.to_hex())
    }
}

impl FromStr for Digest256 {
    type Err = HashError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Digest256::from_hex(s)
    }
}

impl Serialize for Digest256 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest256 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest256::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// SHA-256 applied twice.
pub fn double_sha256(data: &[u8]) -> Digest256 {
    Digest256(Sha256::digest(Sha256::digest(data)).into())
}

/// A difficulty target `D`: a hash qualifies when it is numerically at most
/// (or, in strict mode, below) this value. Always in `1..=2^256-1`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Target256(U256);

impl Target256 {
    pub const MAX: Target256 = Target256(U256::MAX);

    pub fn new(value: U256) -> Result<Self, HashError> {
        if value.is_zero() {
            Err(HashError::ZeroTarget)
        } else {
            Ok(Target256(value))
        }
    }

    /// Clamps into the valid range instead of failing.
    pub fn saturating_new(value: U256) -> Self {
        Target256(value.max(U256::one()))
    }

    pub fn value(&self) -> U256 {
        self.0
    }

    /// `2^(256 - zero_bits)`, with `zero_bits = 0` capped to the maximum
    /// representable target. A digest is strictly below the result iff its top
    /// `zero_bits` bits are zero.
    pub fn from_zero_bits(zero_bits: u32) -> Result<Self, HashError> {
        match zero_bits {
            0 => Ok(Target256::MAX),
            1..=255 => Ok(Target256(U256::one() << (256 - zero_bits as usize))),
            _ => Err(HashError::ZeroBitsOutOfRange(zero_bits)),
        }
    }

    /// `fraction * 2^256`, i.e. the target whose per-attempt success
    /// probability is `fraction`.
    pub fn from_fraction(fraction: f64) -> Target256 {
        Target256::MAX.scale(fraction.min(1.0))
    }

    /// `hash <= target` (or `hash < target` when `strict`).
    pub fn is_met_by(&self, hash: &Digest256, strict: bool) -> bool {
        let h = hash.to_u256();
        if strict {
            h < self.0
        } else {
            h <= self.0
        }
    }

    /// Per-attempt success probability `target / 2^256`.
    pub fn success_probability(&self) -> f64 {
        u256_to_f64(self.0) * 2f64.powi(-256)
    }

    /// `target * factor`, saturating at the maximum target.
    pub fn saturating_mul(&self, factor: u64) -> Target256 {
        let (product, overflow) = self.0.overflowing_mul(U256::from(factor));
        if overflow {
            Target256::MAX
        } else {
            Target256::saturating_new(product)
        }
    }

    /// `target * ratio` using 64 fractional bits of fixed point; clamped into
    /// the valid range.
    pub fn scale(&self, ratio: f64) -> Target256 {
        assert!(ratio.is_finite() && ratio > 0.0, "scale ratio must be positive");
        let fixed = (ratio * 18_446_744_073_709_551_616.0).round();
        let fixed = if fixed >= u128::MAX as f64 { u128::MAX } else { fixed as u128 };
        let wide = (U512::from(self.0) * U512::from(fixed)) >> 64;
        match U256::try_from(wide) {
            Ok(v) => Target256::saturating_new(v),
            Err(_) => Target256::MAX,
        }
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0.to_big_endian())
    }

    pub fn from_hex(s: &str) -> Result<Self, HashError> {
        let s = s.strip_prefix("0x").unwrap_or(s);
        if s.is_empty() || s.len() > 64 {
            return Err(HashError::BadHex(format!("target {s:?} must be 1..=64 hex digits")));
        }
        let value = U256::from_str_radix(s, 16).map_err(|e| HashError::BadHex(format!("{e:?}")))?;
        Target256::new(value)
    }

    /// Bitcoin-style compact form: one exponent byte (length in bytes) and a
    /// three-byte mantissa. Low-order bits beyond the mantissa are truncated.
    pub fn to_compact(&self) -> u32 {
        let mut size = (self.0.bits() as u32).div_ceil(8);
        let mut mantissa = if size <= 3 {
            self.0.low_u64() << (8 * (3 - size))
        } else {
            (self.0 >> (8 * (size - 3) as usize)).low_u64()
        } as u32;
        // 0x00800000 is the sign bit of the mantissa; shift it out of the way.
        if mantissa & 0x0080_0000 != 0 {
            mantissa >>= 8;
            size += 1;
        }
        (size << 24) | (mantissa & 0x007f_ffff)
    }

    pub fn from_compact(bits: u32) -> Result<Self, HashError> {
        let size = bits >> 24;
        let mantissa = bits & 0x007f_ffff;
        if bits & 0x0080_0000 != 0 || mantissa == 0 {
            return Err(HashError::BadCompact(bits));
        }
        let value = if size <= 3 {
            U256::from(mantissa >> (8 * (3 - size)))
        } else {
            let shift = 8 * (size - 3);
            let mantissa_bits = 32 - mantissa.leading_zeros();
            if shift + mantissa_bits > 256 {
                return Err(HashError::BadCompact(bits));
            }
            U256::from(mantissa) << shift as usize
        };
        Target256::new(value).map_err(|_| HashError::BadCompact(bits))
    }

    /// The target that the compact encoding actually represents.
    pub fn round_trip_compact(&self) -> Target256 {
        Target256::from_compact(self.to_compact()).expect("encoding of a valid target decodes")
    }
}

impl fmt::Debug for Target256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Target256(0x{})", self.to_hex())
    }
}

impl fmt::Display for Target256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

impl Serialize for Target256 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Target256 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Target256::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub fn target_from_zero_bits(zero_bits: u32) -> Result<Target256, HashError> {
    Target256::from_zero_bits(zero_bits)
}

fn u256_to_f64(value: U256) -> f64 {
    let bits = value.bits();
    if bits <= 64 {
        value.low_u64() as f64
    } else {
        let shift = bits - 64;
        (value >> shift).low_u64() as f64 * 2f64.powi(shift as i32)
    }
}

/// Merkle root over ordered leaf hashes. Each level hashes concatenated
/// sibling pairs with [`double_sha256`]; an odd trailing node is paired with a
/// copy of itself.
pub fn merkle_root(leaves: &[Digest256]) -> Result<Digest256, HashError> {
    if leaves.is_empty() {
        return Err(HashError::EmptyMerkleLeaves);
    }
    let mut level: Vec<Digest256> = leaves.to_vec();
    let mut buf = [0u8; 64];
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                let right = pair.get(1).unwrap_or(&pair[0]);
                buf[..32].copy_from_slice(&pair[0].0);
                buf[32..].copy_from_slice(&right.0);
                double_sha256(&buf)
            })
            .collect();
    }
    Ok(level[0])
}
