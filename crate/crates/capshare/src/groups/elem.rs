//! Wrappers over the curve backend with counted exponentiations.
//!
//! The scheme is written multiplicatively, so `pow` is scalar multiplication
//! underneath and `mul` is the group operation. Every `pow` and every
//! [`pairing`] bumps the thread-local tally; `mul`, inversion, and equality do
//! not. Byte encodings are canonical: compressed points for G1/G2, the
//! backend's compressed target-field encoding for GT, and 32-byte big-endian
//! reduced scalars. Decoding validates curve and subgroup membership.

use ark_bls12_381::{Bls12_381, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{CurveGroup, PrimeGroup};
use ark_ff::{Field, PrimeField, UniformRand};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize, Compress, Validate};
use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};

use super::count;
use super::GroupError;

pub const SCALAR_BYTES: usize = 32;
pub const G1_BYTES: usize = 48;
pub const G2_BYTES: usize = 96;
pub const GT_BYTES: usize = 576;

/// Element of the scalar field Z_p.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Scalar(pub(crate) Fr);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(Fr::from(0u64))
    }

    pub fn one() -> Self {
        Scalar(Fr::from(1u64))
    }

    pub fn from_u64(v: u64) -> Self {
        Scalar(Fr::from(v))
    }

    pub fn random(rng: &mut (impl RngCore + CryptoRng)) -> Self {
        Scalar(Fr::rand(rng))
    }

    pub fn is_zero(&self) -> bool {
        self.0 == Fr::from(0u64)
    }

    pub fn inverse(&self) -> Option<Scalar> {
        self.0.inverse().map(Scalar)
    }

    /// 32-byte big-endian encoding of the reduced representative.
    pub fn to_bytes(&self) -> [u8; SCALAR_BYTES] {
        let n: BigUint = self.0.into_bigint().into();
        let raw = n.to_bytes_be();
        let mut out = [0u8; SCALAR_BYTES];
        out[SCALAR_BYTES - raw.len()..].copy_from_slice(&raw);
        out
    }

    /// Rejects wrong lengths and non-reduced values, so the encoding is a
    /// bijection between accepted byte strings and field elements.
    pub fn from_bytes(bytes: &[u8]) -> Result<Scalar, GroupError> {
        if bytes.len() != SCALAR_BYTES {
            return Err(GroupError::BadLength {
                what: "scalar",
                expected: SCALAR_BYTES,
                got: bytes.len(),
            });
        }
        let n = BigUint::from_bytes_be(bytes);
        let modulus: BigUint = Fr::MODULUS.into();
        if n >= modulus {
            return Err(GroupError::NonCanonical("scalar not reduced mod p"));
        }
        Ok(Scalar(Fr::from_be_bytes_mod_order(bytes)))
    }
}

impl std::ops::Add for Scalar {
    type Output = Scalar;
    fn add(self, o: Scalar) -> Scalar {
        Scalar(self.0 + o.0)
    }
}

impl std::ops::Sub for Scalar {
    type Output = Scalar;
    fn sub(self, o: Scalar) -> Scalar {
        Scalar(self.0 - o.0)
    }
}

impl std::ops::Mul for Scalar {
    type Output = Scalar;
    fn mul(self, o: Scalar) -> Scalar {
        Scalar(self.0 * o.0)
    }
}

impl std::ops::Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

/// Scalar known to be nonzero, for exponents whose inverse or secrecy
/// argument needs x != 0.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NonZeroScalar(Fr);

impl NonZeroScalar {
    pub fn new(s: Scalar) -> Option<NonZeroScalar> {
        if s.is_zero() {
            None
        } else {
            Some(NonZeroScalar(s.0))
        }
    }

    /// Uniform over Z_p^* by rejection.
    pub fn random(rng: &mut (impl RngCore + CryptoRng)) -> Self {
        loop {
            let s = Fr::rand(rng);
            if s != Fr::from(0u64) {
                return NonZeroScalar(s);
            }
        }
    }

    pub fn scalar(&self) -> Scalar {
        Scalar(self.0)
    }

    pub fn inverse(&self) -> NonZeroScalar {
        NonZeroScalar(self.0.inverse().expect("nonzero"))
    }

    pub fn mul(&self, o: &NonZeroScalar) -> NonZeroScalar {
        NonZeroScalar(self.0 * o.0)
    }

    pub fn to_bytes(&self) -> [u8; SCALAR_BYTES] {
        self.scalar().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<NonZeroScalar, GroupError> {
        let s = Scalar::from_bytes(bytes)?;
        NonZeroScalar::new(s).ok_or(GroupError::ZeroScalar)
    }
}

impl From<NonZeroScalar> for Scalar {
    fn from(n: NonZeroScalar) -> Scalar {
        n.scalar()
    }
}

macro_rules! point_wrapper {
    ($name:ident, $proj:ty, $affine:ty, $len:expr, $label:expr, $bump:path) => {
        #[derive(Clone, Copy, PartialEq, Eq, Debug)]
        pub struct $name(pub(crate) $proj);

        impl $name {
            pub fn generator() -> Self {
                $name(<$proj>::generator())
            }

            pub fn identity() -> Self {
                $name(<$proj>::default())
            }

            pub fn is_identity(&self) -> bool {
                self.0 == <$proj>::default()
            }

            /// Counted exponentiation.
            pub fn pow(&self, e: &Scalar) -> Self {
                $bump();
                $name(self.0 * e.0)
            }

            /// Group operation; not counted.
            pub fn mul(&self, other: &Self) -> Self {
                $name(self.0 + other.0)
            }

            pub fn inv(&self) -> Self {
                $name(-self.0)
            }

            pub fn to_bytes(&self) -> Vec<u8> {
                let mut buf = Vec::with_capacity($len);
                self.0
                    .into_affine()
                    .serialize_compressed(&mut buf)
                    .expect("serialize into vec");
                debug_assert_eq!(buf.len(), $len);
                buf
            }

            /// Validated decode: curve and subgroup membership checked.
            pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
                if bytes.len() != $len {
                    return Err(GroupError::BadLength {
                        what: $label,
                        expected: $len,
                        got: bytes.len(),
                    });
                }
                let affine = <$affine>::deserialize_with_mode(
                    bytes,
                    Compress::Yes,
                    Validate::Yes,
                )
                .map_err(|_| GroupError::InvalidPoint($label))?;
                Ok($name(affine.into()))
            }
        }
    };
}

point_wrapper!(
    G1Elem,
    G1Projective,
    G1Affine,
    G1_BYTES,
    "g1",
    count::bump_g1_exp
);
point_wrapper!(
    G2Elem,
    G2Projective,
    G2Affine,
    G2_BYTES,
    "g2",
    count::bump_g2_exp
);

/// Element of the pairing target group, written multiplicatively.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct GtElem(pub(crate) PairingOutput<Bls12_381>);

impl GtElem {
    pub fn one() -> Self {
        GtElem(PairingOutput::default())
    }

    pub fn is_one(&self) -> bool {
        self.0 == PairingOutput::default()
    }

    /// Counted exponentiation.
    pub fn pow(&self, e: &Scalar) -> Self {
        count::bump_gt_exp();
        GtElem(self.0 * e.0)
    }

    pub fn mul(&self, other: &Self) -> Self {
        GtElem(self.0 + other.0)
    }

    pub fn div(&self, other: &Self) -> Self {
        GtElem(self.0 - other.0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(GT_BYTES);
        self.0
            .serialize_compressed(&mut buf)
            .expect("serialize into vec");
        debug_assert_eq!(buf.len(), GT_BYTES);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        if bytes.len() != GT_BYTES {
            return Err(GroupError::BadLength {
                what: "gt",
                expected: GT_BYTES,
                got: bytes.len(),
            });
        }
        let p = PairingOutput::<Bls12_381>::deserialize_with_mode(
            bytes,
            Compress::Yes,
            Validate::Yes,
        )
        .map_err(|_| GroupError::InvalidPoint("gt"))?;
        Ok(GtElem(p))
    }
}

/// Counted pairing evaluation e: G1 x G2 -> GT.
pub fn pairing(a: &G1Elem, b: &G2Elem) -> GtElem {
    count::bump_pairing();
    GtElem(Bls12_381::pairing(a.0, b.0))
}

/// Uncounted pairing, reserved for one-time group constants.
pub(crate) fn raw_pairing(a: &G1Elem, b: &G2Elem) -> GtElem {
    GtElem(Bls12_381::pairing(a.0, b.0))
}
