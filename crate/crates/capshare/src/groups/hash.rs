//! Hash functions shared by every protocol operation.
//!
//! Three gadgets over one SHAKE256/XMD core, each under its own domain tag:
//! scalars in Z_p^* from arbitrary bytes, curve points in G1 from role-framed
//! labels (RFC 9380 style simplified SWU suite), and fixed-width masks from
//! target-group elements. Labels carry a role prefix so an attribute, an
//! identity, and the blinding slot one past the universe can never hash to the
//! same point, whatever they are named.

use ark_bls12_381::G1Projective;
use ark_ec::hashing::curve_maps::wb::WBMap;
use ark_ec::hashing::map_to_curve_hasher::MapToCurveBasedHasher;
use ark_ec::hashing::HashToCurve;
use ark_ff::field_hashers::DefaultFieldHasher;
use ark_ff::PrimeField;
use sha2::Sha256;
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;

use super::{G1Elem, G2Elem, GroupError, GtElem, NonZeroScalar, Scalar};
use crate::bits::BitString;

const DST_G1: &[u8] = b"CAPSHARE-V1-H1:BLS12381G1_XMD:SHA-256_SSWU_RO";
const DST_SCALAR: &[u8] = b"CAPSHARE-V1-H-SCALAR";
const DST_MASK: &[u8] = b"CAPSHARE-V1-H2-MASK";
const DST_DIGEST: &[u8] = b"CAPSHARE-V1-H3-DIGEST";

type G1Hasher =
    MapToCurveBasedHasher<G1Projective, DefaultFieldHasher<Sha256, 128>, WBMap<ark_bls12_381::g1::Config>>;

/// Label for an attribute name.
pub fn attr_label(name: &str) -> Vec<u8> {
    let mut v = Vec::with_capacity(5 + name.len());
    v.extend_from_slice(b"attr:");
    v.extend_from_slice(name.as_bytes());
    v
}

/// Label for a participant identity.
pub fn id_label(id: &str) -> Vec<u8> {
    let mut v = Vec::with_capacity(3 + id.len());
    v.extend_from_slice(b"id:");
    v.extend_from_slice(id.as_bytes());
    v
}

/// Label for the blinding slot one past the attribute universe, written as
/// the decimal string of universe_size + 1 under its own role tag.
pub fn sentinel_label(universe_size: usize) -> Vec<u8> {
    let mut v = Vec::new();
    v.extend_from_slice(b"slot:");
    v.extend_from_slice((universe_size + 1).to_string().as_bytes());
    v
}

/// Hash gadget handles plus the system mask width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashSuite {
    mask_bytes: usize,
}

impl HashSuite {
    /// `mask_bits` is the granule width; it must be a positive multiple of 8.
    pub fn new(mask_bits: usize) -> Result<Self, GroupError> {
        if mask_bits == 0 || mask_bits % 8 != 0 {
            return Err(GroupError::BadMaskWidth(mask_bits));
        }
        Ok(HashSuite {
            mask_bytes: mask_bits / 8,
        })
    }

    pub fn mask_bits(&self) -> usize {
        self.mask_bytes * 8
    }

    pub fn mask_bytes(&self) -> usize {
        self.mask_bytes
    }

    /// Scalar hash into Z_p^*: squeeze 64 bytes, reduce, squeeze again in the
    /// vanishing case of a zero residue.
    pub fn h_scalar(&self, msg: &[u8]) -> NonZeroScalar {
        let mut x = Shake256::default();
        x.update(DST_SCALAR);
        x.update(&(msg.len() as u64).to_be_bytes());
        x.update(msg);
        squeeze_nonzero(x)
    }

    /// Point hash into G1 from a role-framed label.
    pub fn hash_to_g1(&self, label: &[u8]) -> G1Elem {
        let hasher = G1Hasher::new(DST_G1).expect("suite parameters are valid");
        let affine = hasher.hash(label).expect("hash-to-curve cannot fail");
        G1Elem(affine.into())
    }

    /// Mask derivation from a target-group element, width `mask_bits`.
    pub fn mask_from_gt(&self, z: &GtElem) -> BitString {
        let mut x = Shake256::default();
        x.update(DST_MASK);
        x.update(&(self.mask_bits() as u64).to_be_bytes());
        x.update(&z.to_bytes());
        let mut out = vec![0u8; self.mask_bytes];
        x.finalize_xof().read(&mut out);
        BitString::from_bytes(out)
    }

    /// Binding digest over the capsule body, used for the integrity tag. Every
    /// component is length-framed so no two distinct bodies collide by
    /// concatenation tricks.
    pub fn capsule_digest(
        &self,
        dci: &G2Elem,
        c1: &G2Elem,
        c2: &BitString,
        c3: &[G2Elem],
        c4: &[G1Elem],
    ) -> NonZeroScalar {
        let mut x = Shake256::default();
        x.update(DST_DIGEST);
        x.update(&dci.to_bytes());
        x.update(&c1.to_bytes());
        x.update(&(c2.len() as u64).to_be_bytes());
        x.update(c2.as_bytes());
        x.update(&(c3.len() as u32).to_be_bytes());
        for p in c3 {
            x.update(&p.to_bytes());
        }
        x.update(&(c4.len() as u32).to_be_bytes());
        for p in c4 {
            x.update(&p.to_bytes());
        }
        squeeze_nonzero(x)
    }
}

fn squeeze_nonzero(x: Shake256) -> NonZeroScalar {
    let mut reader = x.finalize_xof();
    let mut buf = [0u8; 64];
    loop {
        reader.read(&mut buf);
        let s = Scalar(ark_bls12_381::Fr::from_be_bytes_mod_order(&buf));
        if let Some(nz) = NonZeroScalar::new(s) {
            return nz;
        }
    }
}
