//! Fixed-width byte strings with XOR algebra.
//!
//! Granules, masks derived from group elements, and the running capsule mask
//! are all values in GF(2)^l for one system-wide width l. The width is a
//! multiple of 8, so everything here works on whole bytes.

use rand::RngCore;
use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BitsError {
    #[error("length mismatch: {left} vs {right} bytes")]
    LengthMismatch { left: usize, right: usize },
    #[error("bit index {index} out of range for {len} bytes")]
    BitOutOfRange { index: usize, len: usize },
}

/// Byte string of fixed width, compared and combined bytewise.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        BitString(bytes)
    }

    pub fn zero(len: usize) -> Self {
        BitString(vec![0u8; len])
    }

    pub fn random(rng: &mut impl RngCore, len: usize) -> Self {
        let mut buf = vec![0u8; len];
        rng.fill_bytes(&mut buf);
        BitString(buf)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bit_len(&self) -> usize {
        self.0.len() * 8
    }

    pub fn xor(&self, other: &Self) -> Result<Self, BitsError> {
        if self.len() != other.len() {
            return Err(BitsError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(BitString(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a ^ b)
                .collect(),
        ))
    }

    pub fn xor_assign(&mut self, other: &Self) -> Result<(), BitsError> {
        if self.len() != other.len() {
            return Err(BitsError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a ^= b;
        }
        Ok(())
    }

    /// Flips one bit in place. Bit 0 is the most significant bit of byte 0.
    pub fn flip_bit(&mut self, index: usize) -> Result<(), BitsError> {
        if index >= self.bit_len() {
            return Err(BitsError::BitOutOfRange {
                index,
                len: self.len(),
            });
        }
        self.0[index / 8] ^= 0x80 >> (index % 8);
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({} bytes: ", self.0.len())?;
        for b in self.0.iter().take(8) {
            write!(f, "{b:02x}")?;
        }
        if self.0.len() > 8 {
            write!(f, "..")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn xor_is_involutive() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = BitString::random(&mut rng, 16);
            let b = BitString::random(&mut rng, 16);
            let c = a.xor(&b).unwrap();
            assert_eq!(c.xor(&b).unwrap(), a);
            assert_eq!(c.xor(&a).unwrap(), b);
        }
    }

    #[test]
    fn xor_rejects_length_mismatch() {
        let a = BitString::zero(16);
        let b = BitString::zero(8);
        assert!(matches!(a.xor(&b), Err(BitsError::LengthMismatch { .. })));
    }

    #[test]
    fn flip_bit_changes_exactly_one_bit() {
        let mut s = BitString::zero(4);
        s.flip_bit(0).unwrap();
        assert_eq!(s.as_bytes(), &[0x80, 0, 0, 0]);
        s.flip_bit(31).unwrap();
        assert_eq!(s.as_bytes(), &[0x80, 0, 0, 1]);
        assert!(s.flip_bit(32).is_err());
    }
}
