//! Bitstrings over `{0,1}^n` and sample sets.
//!
//! A basis index stores qubit `k` in bit `k` (qubit 0 is the least significant
//! bit). Textual bitstrings list qubit 0 first, so the index `0b01` on two
//! qubits prints as `"10"`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 24;

/// A bitstring of fixed length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    bits: u64,
    len: usize,
}

impl BitString {
    pub fn new(bits: u64, len: usize) -> Result<Self> {
        if len == 0 || len > 63 {
            return Err(Error::InvalidArgument(format!(
                "bitstring length {len} out of range"
            )));
        }
        if bits >> len != 0 {
            return Err(Error::InvalidArgument(format!(
                "index {bits} does not fit in {len} bits"
            )));
        }
        Ok(Self { bits, len })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, k: usize) -> bool {
        k < self.len && (self.bits >> k) & 1 == 1
    }

    /// Toggle bit `i`.
    pub fn flip(&self, i: usize) -> Result<Self> {
        if i >= self.len {
            return Err(Error::InvalidArgument(format!(
                "flip index {i} out of range for length {}",
                self.len
            )));
        }
        Ok(Self {
            bits: self.bits ^ (1 << i),
            len: self.len,
        })
    }

    pub fn hamming(&self, other: &Self) -> Result<u32> {
        self.check_len(other)?;
        Ok(hamming(self.bits, other.bits))
    }

    pub(crate) fn check_len(&self, other: &Self) -> Result<()> {
        if self.len != other.len {
            return Err(Error::Shape(format!(
                "bitstring lengths differ: {} vs {}",
                self.len, other.len
            )));
        }
        Ok(())
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_bits(self.bits, self.len))
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (bits, len) = parse_bits(s)?;
        Self::new(bits, len)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[inline]
pub fn hamming(x: u64, y: u64) -> u32 {
    (x ^ y).count_ones()
}

#[inline]
pub fn flip_bit(x: u64, i: usize) -> u64 {
    x ^ (1 << i)
}

/// Render a basis index as text, qubit 0 first.
pub fn format_bits(x: u64, n: usize) -> String {
    (0..n)
        .map(|k| if (x >> k) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Parse text (qubit 0 first) into `(index, length)`.
pub fn parse_bits(s: &str) -> Result<(u64, usize)> {
    let s = s.trim();
    if s.is_empty() || s.len() > 63 {
        return Err(Error::Parse(format!("bad bitstring length in {s:?}")));
    }
    let mut x = 0u64;
    for (k, c) in s.chars().enumerate() {
        match c {
            '0' => {}
            '1' => x |= 1 << k,
            _ => {
                return Err(Error::Parse(format!(
                    "bad character {c:?} in bitstring {s:?}"
                )))
            }
        }
    }
    Ok((x, s.len()))
}

pub(crate) fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "qubit count {n} outside supported range 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

/// Drawn bitstrings on `n` qubits, stored as basis indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleSet {
    n: usize,
    samples: Vec<u64>,
}

impl SampleSet {
    pub fn new(n: usize, samples: Vec<u64>) -> Result<Self> {
        check_qubits(n)?;
        if let Some(bad) = samples.iter().find(|&&x| x >> n != 0) {
            return Err(Error::InvalidArgument(format!(
                "sample {bad} does not fit in {n} bits"
            )));
        }
        Ok(Self { n, samples })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> &[u64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn bitstrings(&self) -> impl Iterator<Item = BitString> + '_ {
        self.samples
            .iter()
            .map(move |&bits| BitString { bits, len: self.n })
    }

    /// The subset at the given positions.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            n: self.n,
            samples: idx.iter().map(|&i| self.samples[i]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_lists_qubit_zero_first() {
        let b = BitString::new(0b01, 2).unwrap();
        assert_eq!(b.to_string(), "10");
        assert_eq!("10".parse::<BitString>().unwrap(), b);
        assert!(b.bit(0));
        assert!(!b.bit(1));
    }

    #[test]
    fn flip_toggles_documented_bit() {
        let zero: BitString = "00".parse().unwrap();
        assert_eq!(zero.flip(0).unwrap().to_string(), "10");
        assert_eq!(zero.flip(1).unwrap().to_string(), "01");
        assert_eq!(zero.flip(0).unwrap().flip(0).unwrap(), zero);
        assert!(zero.flip(2).is_err());
    }

    #[test]
    fn hamming_requires_equal_lengths() {
        let a: BitString = "000".parse().unwrap();
        let b: BitString = "101".parse().unwrap();
        assert_eq!(a.hamming(&b).unwrap(), 2);
        let c: BitString = "10".parse().unwrap();
        assert!(matches!(a.hamming(&c), Err(Error::Shape(_))));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("01x".parse::<BitString>().is_err());
        assert!("".parse::<BitString>().is_err());
    }

    #[test]
    fn sample_set_validates_width() {
        assert!(SampleSet::new(2, vec![0, 3]).is_ok());
        assert!(SampleSet::new(2, vec![4]).is_err());
        assert!(matches!(
            SampleSet::new(25, vec![]),
            Err(Error::Capacity(_))
        ));
    }
}
