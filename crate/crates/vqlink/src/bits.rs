//! Bit-level payload container shared by the transport and PHY stages.

use crate::error::{Error, Result};

/// Ordered sequence of {0,1} bits.
///
/// Stored one bit per byte; payloads here are small (a few kilobits per
/// transmission) so density is not a concern and indexing stays trivial.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitVector {
    bits: Vec<u8>,
}

impl BitVector {
    pub fn new() -> Self {
        Self { bits: Vec::new() }
    }

    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![0; len] }
    }

    /// Validates that every element is 0 or 1.
    pub fn from_slice(bits: &[u8]) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::invalid(format!("bit value {b} outside {{0,1}}")));
        }
        Ok(Self {
            bits: bits.to_vec(),
        })
    }

    /// Builds from booleans.
    pub fn from_bools(bits: &[bool]) -> Self {
        Self {
            bits: bits.iter().map(|&b| b as u8).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, bit: u8) {
        debug_assert!(bit <= 1);
        self.bits.push(bit & 1);
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.bits.iter().copied()
    }

    pub fn extend_from(&mut self, other: &BitVector) {
        self.bits.extend_from_slice(&other.bits);
    }

    pub fn truncate(&mut self, len: usize) {
        self.bits.truncate(len);
    }

    /// Appends `width` bits of `value`, most-significant bit first.
    pub fn push_uint(&mut self, value: u64, width: usize) {
        for i in (0..width).rev() {
            self.bits.push(((value >> i) & 1) as u8);
        }
    }

    /// Reads `width` bits starting at `offset`, most-significant bit first.
    pub fn read_uint(&self, offset: usize, width: usize) -> Result<u64> {
        if offset + width > self.bits.len() {
            return Err(Error::invalid(format!(
                "read of {width} bits at offset {offset} exceeds length {}",
                self.bits.len()
            )));
        }
        let mut v = 0u64;
        for i in 0..width {
            v = (v << 1) | self.bits[offset + i] as u64;
        }
        Ok(v)
    }

    pub fn slice(&self, start: usize, end: usize) -> BitVector {
        BitVector {
            bits: self.bits[start..end].to_vec(),
        }
    }

    /// Componentwise XOR; lengths must match.
    pub fn xor(&self, other: &BitVector) -> Result<BitVector> {
        if self.len() != other.len() {
            return Err(Error::invalid("xor length mismatch"));
        }
        Ok(BitVector {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| a ^ b)
                .collect(),
        })
    }

    /// Number of differing positions; lengths must match.
    pub fn hamming_distance(&self, other: &BitVector) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::invalid("hamming length mismatch"));
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count())
    }
}

impl std::ops::Index<usize> for BitVector {
    type Output = u8;
    fn index(&self, i: usize) -> &u8 {
        &self.bits[i]
    }
}

impl std::fmt::Display for BitVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary() {
        assert!(BitVector::from_slice(&[0, 1, 2]).is_err());
    }

    #[test]
    fn uint_round_trip_msb_first() {
        let mut v = BitVector::new();
        v.push_uint(0b1011, 4);
        assert_eq!(v.as_slice(), &[1, 0, 1, 1]);
        assert_eq!(v.read_uint(0, 4).unwrap(), 0b1011);
    }

    #[test]
    fn xor_and_hamming() {
        let a = BitVector::from_slice(&[1, 0, 1, 1]).unwrap();
        let b = BitVector::from_slice(&[1, 1, 0, 1]).unwrap();
        assert_eq!(a.xor(&b).unwrap().as_slice(), &[0, 1, 1, 0]);
        assert_eq!(a.hamming_distance(&b).unwrap(), 2);
    }
}
