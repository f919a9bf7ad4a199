//! Pairing group context: curve selection, generators, hashing, counters.
//!
//! One supported curve today (BLS12-381 at the 128-bit level) behind a
//! selector so the constructions never name the backend directly. The target
//! generator e(g1, g2) is derived once here, outside the counters, like the
//! generators themselves.

mod count;
mod elem;
mod hash;

pub use count::{measure, tally, OpCounts};
pub use elem::{
    pairing, G1Elem, G2Elem, GtElem, NonZeroScalar, Scalar, G1_BYTES, G2_BYTES, GT_BYTES,
    SCALAR_BYTES,
};
pub use hash::{attr_label, id_label, sentinel_label, HashSuite};

use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("unsupported security level {0}, only 128 is available")]
    UnsupportedLambda(u32),
    #[error("unsupported curve `{0}`")]
    UnsupportedCurve(String),
    #[error("{what}: expected {expected} bytes, got {got}")]
    BadLength {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-canonical encoding: {0}")]
    NonCanonical(&'static str),
    #[error("bytes do not decode to a valid {0} element")]
    InvalidPoint(&'static str),
    #[error("scalar must be nonzero")]
    ZeroScalar,
    #[error("mask width {0} must be a positive multiple of 8 bits")]
    BadMaskWidth(usize),
}

/// Supported pairing curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    Bls12_381,
}

impl Curve {
    pub fn name(&self) -> &'static str {
        match self {
            Curve::Bls12_381 => "bls12-381",
        }
    }
}

impl fmt::Display for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Curve {
    type Err = GroupError;
    fn from_str(s: &str) -> Result<Self, GroupError> {
        match s.to_ascii_lowercase().as_str() {
            "bls12-381" | "bls12_381" => Ok(Curve::Bls12_381),
            other => Err(GroupError::UnsupportedCurve(other.to_string())),
        }
    }
}

/// Generators and group constants for one curve instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupParams {
    curve: Curve,
    lambda: u32,
    g1: G1Elem,
    g2: G2Elem,
    gt: GtElem,
}

impl GroupParams {
    pub fn curve(&self) -> Curve {
        self.curve
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn g1(&self) -> &G1Elem {
        &self.g1
    }

    pub fn g2(&self) -> &G2Elem {
        &self.g2
    }

    /// e(g1, g2), cached so protocol code can exponentiate in GT instead of
    /// pairing against fixed generators.
    pub fn gt_gen(&self) -> &GtElem {
        &self.gt
    }
}

/// Instantiates the pairing context for a security level and curve choice.
pub fn group_setup(lambda: u32, curve: Curve) -> Result<GroupParams, GroupError> {
    if lambda != 128 {
        return Err(GroupError::UnsupportedLambda(lambda));
    }
    let g1 = G1Elem::generator();
    let g2 = G2Elem::generator();
    // group constant, derived outside the counters by design
    let gt = elem::raw_pairing(&g1, &g2);
    Ok(GroupParams {
        curve,
        lambda,
        g1,
        g2,
        gt,
    })
}
