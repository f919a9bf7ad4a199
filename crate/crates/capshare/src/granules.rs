//! Payload codec: byte payloads to and from fixed-width granules.
//!
//! The encoding prepends an 8-byte big-endian length header, zero-pads to a
//! whole number of granules, and chunks. XOR folds over granules drive the
//! capsule masking: the capsule body carries the fold of all granules, and a
//! shared index is opened by handing out the fold of all the others.

use crate::bits::BitString;
use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GranuleError {
    #[error("granule width {0} bits must be a positive multiple of 8")]
    BadWidth(usize),
    #[error("payload of {got} bytes decodes to no valid length header")]
    BadHeader { got: usize },
    #[error("declared payload length {declared} exceeds available {available} bytes")]
    LengthOverrun { declared: u64, available: usize },
    #[error("padding bytes past the payload must be zero")]
    BadPadding,
    #[error("granule index {index} out of range 1..={count}")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("index set is empty")]
    EmptyIndexSet,
}

/// Payload split into equal-width granules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GranuleSet {
    granules: Vec<BitString>,
    width_bytes: usize,
}

impl GranuleSet {
    pub fn count(&self) -> usize {
        self.granules.len()
    }

    pub fn width_bits(&self) -> usize {
        self.width_bytes * 8
    }

    /// Granule at 1-based index.
    pub fn granule(&self, index: usize) -> Result<&BitString, GranuleError> {
        if index == 0 || index > self.granules.len() {
            return Err(GranuleError::IndexOutOfRange {
                index,
                count: self.granules.len(),
            });
        }
        Ok(&self.granules[index - 1])
    }

    pub fn iter(&self) -> impl Iterator<Item = &BitString> {
        self.granules.iter()
    }

    /// XOR of every granule; the zero string for an empty fold.
    pub fn xor_all(&self) -> BitString {
        let mut acc = BitString::zero(self.width_bytes);
        for g in &self.granules {
            acc.xor_assign(g).expect("uniform widths");
        }
        acc
    }

    /// XOR of every granule except the 1-based `index`.
    pub fn xor_except(&self, index: usize) -> Result<BitString, GranuleError> {
        let skip = self.granule(index)?;
        let mut acc = self.xor_all();
        acc.xor_assign(skip).expect("uniform widths");
        Ok(acc)
    }

    /// Rebuilds from raw granules, e.g. after decryption. Widths must agree.
    pub fn from_granules(granules: Vec<BitString>) -> Result<Self, GranuleError> {
        let width_bytes = match granules.first() {
            Some(g) if g.len() > 0 => g.len(),
            _ => return Err(GranuleError::BadWidth(0)),
        };
        if granules.iter().any(|g| g.len() != width_bytes) {
            return Err(GranuleError::BadWidth(width_bytes * 8));
        }
        Ok(GranuleSet {
            granules,
            width_bytes,
        })
    }
}

/// Splits payload bytes into granules of `width_bits`.
pub fn split_payload(data: &[u8], width_bits: usize) -> Result<GranuleSet, GranuleError> {
    if width_bits == 0 || width_bits % 8 != 0 {
        return Err(GranuleError::BadWidth(width_bits));
    }
    let width_bytes = width_bits / 8;
    let mut framed = Vec::with_capacity(8 + data.len() + width_bytes);
    framed.extend_from_slice(&(data.len() as u64).to_be_bytes());
    framed.extend_from_slice(data);
    let rem = framed.len() % width_bytes;
    if rem != 0 {
        framed.resize(framed.len() + width_bytes - rem, 0);
    }
    let granules = framed
        .chunks(width_bytes)
        .map(|c| BitString::from_bytes(c.to_vec()))
        .collect();
    Ok(GranuleSet {
        granules,
        width_bytes,
    })
}

/// Inverse of [`split_payload`]; validates the header and the zero padding.
pub fn join_payload(set: &GranuleSet) -> Result<Vec<u8>, GranuleError> {
    let mut framed = Vec::with_capacity(set.count() * set.width_bytes);
    for g in &set.granules {
        framed.extend_from_slice(g.as_bytes());
    }
    if framed.len() < 8 {
        return Err(GranuleError::BadHeader { got: framed.len() });
    }
    let declared = u64::from_be_bytes(framed[..8].try_into().unwrap());
    let available = framed.len() - 8;
    if declared as usize > available {
        return Err(GranuleError::LengthOverrun {
            declared,
            available,
        });
    }
    let end = 8 + declared as usize;
    if framed[end..].iter().any(|&b| b != 0) {
        return Err(GranuleError::BadPadding);
    }
    Ok(framed[8..end].to_vec())
}

/// Nonempty set of 1-based granule indices selected for sharing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GranuleIndices(BTreeSet<usize>);

impl GranuleIndices {
    pub fn new(
        indices: impl IntoIterator<Item = usize>,
        count: usize,
    ) -> Result<Self, GranuleError> {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        if set.is_empty() {
            return Err(GranuleError::EmptyIndexSet);
        }
        for &i in &set {
            if i == 0 || i > count {
                return Err(GranuleError::IndexOutOfRange {
                    index: i,
                    count,
                });
            }
        }
        Ok(GranuleIndices(set))
    }

    pub fn all(count: usize) -> Result<Self, GranuleError> {
        GranuleIndices::new(1..=count, count)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(&i)
    }
}
