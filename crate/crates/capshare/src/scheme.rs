//! The protocol operations: system setup, participant keying, capsule
//! encapsulation, task issue, access, download gating, decryption, and
//! capsule update.
//!
//! A capsule seals the XOR-fold of all granules under two masks: one derived
//! from the owner's long-term secret against the capsule's ABE component, one
//! accumulated per issued task so the capsule can be re-masked (revoked)
//! without touching the ABE material. A task opens selected granule indices to
//! one consumer identity: its shares only unblind for the key holder of that
//! identity whose attributes satisfy the policy, and its download token is a
//! single target-group value the store compares bytes against.
//!
//! Every function draws randomness only from the caller's RNG and reads no
//! clock, so a seeded run is fully reproducible.

use rand::{CryptoRng, RngCore};
use std::collections::{BTreeMap, BTreeSet};

use crate::bits::BitString;
use crate::granules::{GranuleError, GranuleIndices, GranuleSet};
use crate::groups::{
    attr_label, group_setup, id_label, pairing, sentinel_label, Curve, G1Elem, G2Elem,
    GroupError, GroupParams, GtElem, HashSuite, NonZeroScalar, Scalar,
};
use crate::policy::{recon_coefficients, satisfies, LsssPolicy, PolicyError};
use crate::policy::AttributeSet;

pub const DEFAULT_GRANULE_BITS: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum SchemeError {
    #[error("attribute universe must not be empty")]
    EmptyUniverse,
    #[error("duplicate attribute `{0}` in universe")]
    DuplicateAttribute(String),
    #[error("invalid attribute name `{0}`")]
    InvalidAttributeName(String),
    #[error("identity must not be empty")]
    EmptyIdentity,
    #[error("attribute `{0}` is not in the universe")]
    UnknownAttribute(String),
    #[error("seed point must not be the identity element")]
    DegenerateSeed,
    #[error("granule width {got} bits does not match the system width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("capsule integrity check failed")]
    TamperDetected,
    #[error("key attributes do not satisfy the capsule policy")]
    PolicyNotSatisfied,
    #[error("malformed capsule: {0}")]
    MalformedCapsule(&'static str),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Granule(#[from] GranuleError),
}

/// Public system parameters: group context, hash suite, the authority's
/// public point, and the attribute universe.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MasterPublicKey {
    group: GroupParams,
    hashes: HashSuite,
    g2_alpha: G2Elem,
    universe: Vec<String>,
    universe_set: BTreeSet<String>,
}

impl MasterPublicKey {
    pub fn group(&self) -> &GroupParams {
        &self.group
    }

    pub fn hashes(&self) -> &HashSuite {
        &self.hashes
    }

    pub fn g2_alpha(&self) -> &G2Elem {
        &self.g2_alpha
    }

    pub fn universe(&self) -> &[String] {
        &self.universe
    }

    pub fn has_attr(&self, name: &str) -> bool {
        self.universe_set.contains(name)
    }

    pub fn mask_bits(&self) -> usize {
        self.hashes.mask_bits()
    }

    /// H1 point for the blinding slot one past the universe.
    fn sentinel_point(&self) -> G1Elem {
        self.hashes.hash_to_g1(&sentinel_label(self.universe.len()))
    }

    pub(crate) fn from_parts(
        group: GroupParams,
        hashes: HashSuite,
        g2_alpha: G2Elem,
        universe: Vec<String>,
    ) -> Result<Self, SchemeError> {
        validate_universe(&universe)?;
        let universe_set = universe.iter().cloned().collect();
        Ok(MasterPublicKey {
            group,
            hashes,
            g2_alpha,
            universe,
            universe_set,
        })
    }
}

/// The authority's secret exponent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MasterSecretKey {
    alpha: NonZeroScalar,
}

impl MasterSecretKey {
    pub fn alpha(&self) -> &NonZeroScalar {
        &self.alpha
    }

    pub fn from_alpha(alpha: NonZeroScalar) -> Self {
        MasterSecretKey { alpha }
    }
}

/// Consumer key: one G1 point per granted attribute plus the identity-bound
/// components used by access and decryption.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpSecretKey {
    id: String,
    attrs: AttributeSet,
    /// H1(attr)^r per granted attribute.
    sk1: BTreeMap<String, G1Elem>,
    /// H1(id)^alpha * H1(slot)^r.
    sk2: G1Elem,
    /// g2^r.
    sk3: G2Elem,
    /// H1(id)^r.
    sk4: G1Elem,
}

impl SpSecretKey {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn attrs(&self) -> &AttributeSet {
        &self.attrs
    }

    pub fn attr_key(&self, name: &str) -> Option<&G1Elem> {
        self.sk1.get(name)
    }

    pub fn sk2(&self) -> &G1Elem {
        &self.sk2
    }

    pub fn sk3(&self) -> &G2Elem {
        &self.sk3
    }

    pub fn sk4(&self) -> &G1Elem {
        &self.sk4
    }

    pub fn from_parts(
        id: String,
        sk1: BTreeMap<String, G1Elem>,
        sk2: G1Elem,
        sk3: G2Elem,
        sk4: G1Elem,
    ) -> Self {
        let attrs = sk1.keys().cloned().collect();
        SpSecretKey {
            id,
            attrs,
            sk1,
            sk2,
            sk3,
            sk4,
        }
    }
}

/// Owner enrollment seed: the secret exponent of the seed point sent to the
/// authority.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedPair {
    pub gamma: NonZeroScalar,
    pub psi: G2Elem,
}

/// Capsule identifier: the G2 anchor the running exponent sum lives in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CapsuleId(G2Elem);

impl CapsuleId {
    pub fn elem(&self) -> &G2Elem {
        &self.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        Ok(CapsuleId(G2Elem::from_bytes(bytes)?))
    }

    pub fn from_elem(e: G2Elem) -> Self {
        CapsuleId(e)
    }

    /// Short hex prefix for logs and messages.
    pub fn short(&self) -> String {
        hex::encode(&self.to_bytes()[..6])
    }
}

/// Sealed capsule body as stored and served.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataCapsule {
    policy: LsssPolicy,
    /// g2^y, the ABE encryption anchor.
    c1: G2Elem,
    /// XOR-fold of all granules under the owner mask and the running mask.
    c2: BitString,
    /// g2^{y'_j} per attribute-reuse slot.
    c3: Vec<G2Elem>,
    /// H1(slot)^{share_i} * H1(attr_i)^{y'_occ(i)} per policy row.
    c4: Vec<G1Elem>,
    /// g1^{digest * exponent-sum}, the integrity tag.
    v: G1Elem,
}

impl DataCapsule {
    pub fn policy(&self) -> &LsssPolicy {
        &self.policy
    }

    pub fn c1(&self) -> &G2Elem {
        &self.c1
    }

    pub fn c2(&self) -> &BitString {
        &self.c2
    }

    pub fn c3(&self) -> &[G2Elem] {
        &self.c3
    }

    pub fn c4(&self) -> &[G1Elem] {
        &self.c4
    }

    pub fn v(&self) -> &G1Elem {
        &self.v
    }

    pub fn from_parts(
        policy: LsssPolicy,
        c1: G2Elem,
        c2: BitString,
        c3: Vec<G2Elem>,
        c4: Vec<G1Elem>,
        v: G1Elem,
    ) -> Result<Self, SchemeError> {
        let dc = DataCapsule {
            policy,
            c1,
            c2,
            c3,
            c4,
            v,
        };
        dc.check_shape()?;
        Ok(dc)
    }

    fn check_shape(&self) -> Result<(), SchemeError> {
        if self.c4.len() != self.policy.rows() {
            return Err(SchemeError::MalformedCapsule(
                "one c4 component per policy row required",
            ));
        }
        if self.c3.len() != self.policy.reuse_bound() {
            return Err(SchemeError::MalformedCapsule(
                "one c3 component per reuse slot required",
            ));
        }
        Ok(())
    }

    /// Flips one bit of one component, for tamper experiments. Components in
    /// G1/G2 are re-randomized by multiplying with the generator instead,
    /// since bit flips in compressed encodings mostly fail to decode.
    pub fn corrupted(&self, component: CapsuleComponent, bit: usize) -> DataCapsule {
        let mut dc = self.clone();
        match component {
            CapsuleComponent::C1 => dc.c1 = dc.c1.mul(&G2Elem::generator()),
            CapsuleComponent::C2 => {
                let n = dc.c2.bit_len();
                dc.c2.flip_bit(bit % n).unwrap();
            }
            CapsuleComponent::C3 => {
                let i = bit % dc.c3.len();
                dc.c3[i] = dc.c3[i].mul(&G2Elem::generator());
            }
            CapsuleComponent::C4 => {
                let i = bit % dc.c4.len();
                dc.c4[i] = dc.c4[i].mul(&G1Elem::generator());
            }
            CapsuleComponent::V => dc.v = dc.v.mul(&G1Elem::generator()),
        }
        dc
    }
}

/// Addressable capsule component, for tamper experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapsuleComponent {
    C1,
    C2,
    C3,
    C4,
    V,
}

impl CapsuleComponent {
    pub const ALL: [CapsuleComponent; 5] = [
        CapsuleComponent::C1,
        CapsuleComponent::C2,
        CapsuleComponent::C3,
        CapsuleComponent::C4,
        CapsuleComponent::V,
    ];
}

/// Owner-side state for one capsule: everything needed to issue the next
/// task. Advances with every issue; the store mirrors the advance when the
/// matching revocation is applied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalSecret {
    dci: CapsuleId,
    /// XOR of every mask layer issued so far.
    mask_acc: BitString,
    /// Sum of every anchor exponent issued so far.
    exp_acc: Scalar,
    /// ABE encryption secret fixed at encapsulation.
    abe_secret: NonZeroScalar,
}

impl LocalSecret {
    pub fn dci(&self) -> &CapsuleId {
        &self.dci
    }

    pub fn mask_acc(&self) -> &BitString {
        &self.mask_acc
    }

    pub fn exp_acc(&self) -> &Scalar {
        &self.exp_acc
    }

    pub fn abe_secret(&self) -> &NonZeroScalar {
        &self.abe_secret
    }

    pub fn from_parts(
        dci: CapsuleId,
        mask_acc: BitString,
        exp_acc: Scalar,
        abe_secret: NonZeroScalar,
    ) -> Self {
        LocalSecret {
            dci,
            mask_acc,
            exp_acc,
            abe_secret,
        }
    }
}

/// Per-granule share inside a task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskShare {
    /// Fold of the other granules under the running mask and a fresh blind.
    pub mask: BitString,
    /// Blinded pairing value the decryptor strips with the task parameter.
    pub blind: GtElem,
}

/// Single-use grant of selected granules to one consumer identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Task {
    sp_id: String,
    dci: CapsuleId,
    /// H1(id)^{owner secret} * H1(slot)^{exponent sum}.
    t1: G1Elem,
    /// Blinded owner component tying the task to the capsule's ABE anchor.
    t2: GtElem,
    shares: BTreeMap<usize, TaskShare>,
}

impl Task {
    pub fn sp_id(&self) -> &str {
        &self.sp_id
    }

    pub fn dci(&self) -> &CapsuleId {
        &self.dci
    }

    pub fn t1(&self) -> &G1Elem {
        &self.t1
    }

    pub fn t2(&self) -> &GtElem {
        &self.t2
    }

    pub fn shares(&self) -> &BTreeMap<usize, TaskShare> {
        &self.shares
    }

    pub fn from_parts(
        sp_id: String,
        dci: CapsuleId,
        t1: G1Elem,
        t2: GtElem,
        shares: BTreeMap<usize, TaskShare>,
    ) -> Self {
        Task {
            sp_id,
            dci,
            t1,
            t2,
            shares,
        }
    }
}

/// Store-side instruction advancing a capsule to its next state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevocationToken {
    /// g1 raised to the updated exponent sum; base of the next integrity tag.
    pub r1: G1Elem,
    /// Next capsule identifier.
    pub r2: CapsuleId,
    /// Fresh mask layer to fold into the capsule body.
    pub r3: BitString,
}

/// Download grant: the expected parameter value and an expiry instant
/// (seconds since the epoch).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DownloadToken {
    pub d1: GtElem,
    pub expires_at: u64,
}

/// Value a task holder derives to claim a download.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DownloadParameter(pub GtElem);

impl DownloadParameter {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        Ok(DownloadParameter(GtElem::from_bytes(bytes)?))
    }
}

/// Everything task_issue hands back: the task for the consumer, the paired
/// revocation and download tokens for the store, and the advanced owner state.
#[derive(Clone, Debug)]
pub struct IssuedTask {
    pub task: Task,
    pub revocation: RevocationToken,
    pub token: DownloadToken,
    pub next_secret: LocalSecret,
}

fn validate_universe(universe: &[String]) -> Result<(), SchemeError> {
    if universe.is_empty() {
        return Err(SchemeError::EmptyUniverse);
    }
    let mut seen = BTreeSet::new();
    for name in universe {
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '@' | '/' | '#'))
        {
            return Err(SchemeError::InvalidAttributeName(name.clone()));
        }
        if !seen.insert(name) {
            return Err(SchemeError::DuplicateAttribute(name.clone()));
        }
    }
    Ok(())
}

/// System setup: group context, hash suite of the given granule width, and
/// the authority key pair over the attribute universe.
pub fn setup(
    rng: &mut (impl RngCore + CryptoRng),
    lambda: u32,
    curve: Curve,
    granule_bits: usize,
    universe: Vec<String>,
) -> Result<(MasterPublicKey, MasterSecretKey), SchemeError> {
    validate_universe(&universe)?;
    let group = group_setup(lambda, curve)?;
    let hashes = HashSuite::new(granule_bits)?;
    let alpha = NonZeroScalar::random(rng);
    let g2_alpha = group.g2().pow(&alpha.scalar());
    let mpk = MasterPublicKey::from_parts(group, hashes, g2_alpha, universe)?;
    Ok((mpk, MasterSecretKey { alpha }))
}

/// Issues a consumer key for `sp_id` holding `attrs`.
pub fn keygen_sp(
    rng: &mut (impl RngCore + CryptoRng),
    mpk: &MasterPublicKey,
    msk: &MasterSecretKey,
    sp_id: &str,
    attrs: &AttributeSet,
) -> Result<SpSecretKey, SchemeError> {
    if sp_id.is_empty() {
        return Err(SchemeError::EmptyIdentity);
    }
    for a in attrs.iter() {
        if !mpk.has_attr(a) {
            return Err(SchemeError::UnknownAttribute(a.to_string()));
        }
    }
    let r = NonZeroScalar::random(rng);
    let r_s = r.scalar();
    let mut sk1 = BTreeMap::new();
    for a in attrs.iter() {
        sk1.insert(a.to_string(), mpk.hashes.hash_to_g1(&attr_label(a)).pow(&r_s));
    }
    let h_id = mpk.hashes.hash_to_g1(&id_label(sp_id));
    let sk2 = h_id
        .pow(&msk.alpha.scalar())
        .mul(&mpk.sentinel_point().pow(&r_s));
    let sk3 = mpk.group.g2().pow(&r_s);
    let sk4 = h_id.pow(&r_s);
    Ok(SpSecretKey {
        id: sp_id.to_string(),
        attrs: attrs.clone(),
        sk1,
        sk2,
        sk3,
        sk4,
    })
}

/// Owner enrollment, step one (owner side): derive the seed exponent from the
/// identity and a fresh secret, and the seed point for the authority.
pub fn gen_seed(
    rng: &mut (impl RngCore + CryptoRng),
    mpk: &MasterPublicKey,
    pdo_id: &str,
) -> Result<SeedPair, SchemeError> {
    if pdo_id.is_empty() {
        return Err(SchemeError::EmptyIdentity);
    }
    let sigma = NonZeroScalar::random(rng);
    let mut msg = Vec::with_capacity(8 + pdo_id.len() + 32);
    msg.extend_from_slice(&(pdo_id.len() as u64).to_be_bytes());
    msg.extend_from_slice(pdo_id.as_bytes());
    msg.extend_from_slice(&sigma.to_bytes());
    let gamma = mpk.hashes.h_scalar(&msg);
    let psi = mpk.group.g2().pow(&gamma.scalar());
    Ok(SeedPair { gamma, psi })
}

/// Owner enrollment, step two (authority side): blind the seed point into the
/// owner's public key and return the blinding exponent for step three.
pub fn pkeygen_pdo(
    rng: &mut (impl RngCore + CryptoRng),
    _mpk: &MasterPublicKey,
    psi: &G2Elem,
) -> Result<(G2Elem, NonZeroScalar), SchemeError> {
    if psi.is_identity() {
        return Err(SchemeError::DegenerateSeed);
    }
    let beta = NonZeroScalar::random(rng);
    let pk = psi.pow(&beta.scalar());
    Ok((pk, beta))
}

/// Owner enrollment, step three (owner side): the long-term secret.
/// pk = g2^(gamma * beta) = g2^secret holds by construction.
pub fn skeygen_pdo(gamma: &NonZeroScalar, beta: &NonZeroScalar) -> NonZeroScalar {
    gamma.mul(beta)
}

/// Seals granules into a capsule under `policy`, returning the capsule id,
/// the owner's local secret, and the capsule body.
pub fn encapsulate(
    rng: &mut (impl RngCore + CryptoRng),
    mpk: &MasterPublicKey,
    sk_pdo: &NonZeroScalar,
    granules: &GranuleSet,
    policy: &LsssPolicy,
) -> Result<(CapsuleId, LocalSecret, DataCapsule), SchemeError> {
    if granules.width_bits() != mpk.mask_bits() {
        return Err(SchemeError::WidthMismatch {
            expected: mpk.mask_bits(),
            got: granules.width_bits(),
        });
    }
    for a in policy.row_attrs() {
        if !mpk.has_attr(a) {
            return Err(SchemeError::UnknownAttribute(a.clone()));
        }
    }

    let n1 = policy.rows();
    let n2 = policy.cols();
    let tau = policy.reuse_bound();

    // first mask layer and anchor exponent
    let a1 = BitString::random(rng, mpk.hashes.mask_bytes());
    let d1 = NonZeroScalar::random(rng);
    let dci = CapsuleId(mpk.group.g2().pow(&d1.scalar()));

    // ABE component
    let y = NonZeroScalar::random(rng);
    let c1 = mpk.group.g2().pow(&y.scalar());

    // owner mask from the owner secret against the ABE anchor
    let owner_gt = pairing(&mpk.group.g1().pow(&sk_pdo.scalar()), &c1);
    let p2 = mpk.hashes.mask_from_gt(&owner_gt);

    let mut c2 = granules.xor_all();
    c2.xor_assign(&a1).expect("widths checked");
    c2.xor_assign(&p2).expect("widths checked");

    // secret sharing of y over the policy matrix
    let mut share_vec = Vec::with_capacity(n2);
    share_vec.push(y.scalar());
    for _ in 1..n2 {
        share_vec.push(Scalar::random(rng));
    }
    let y_primes: Vec<Scalar> = (0..tau).map(|_| Scalar::random(rng)).collect();

    let c3: Vec<G2Elem> = y_primes.iter().map(|yp| mpk.group.g2().pow(yp)).collect();

    let slot = mpk.sentinel_point();
    let mut c4 = Vec::with_capacity(n1);
    for i in 0..n1 {
        let share = policy.matrix()[i]
            .iter()
            .zip(&share_vec)
            .fold(Scalar::zero(), |acc, (m, s)| acc + *m * *s);
        let attr_point = mpk.hashes.hash_to_g1(&attr_label(policy.row_attr(i)));
        let occ = policy.reuse_index()[i];
        c4.push(slot.pow(&share).mul(&attr_point.pow(&y_primes[occ - 1])));
    }

    let delta = mpk.hashes.capsule_digest(&dci.0, &c1, &c2, &c3, &c4);
    let v = mpk.group.g1().pow(&(delta.scalar() * d1.scalar()));

    let capsule = DataCapsule {
        policy: policy.clone(),
        c1,
        c2,
        c3,
        c4,
        v,
    };
    let secret = LocalSecret {
        dci: dci.clone(),
        mask_acc: a1,
        exp_acc: d1.scalar(),
        abe_secret: y,
    };
    Ok((dci, secret, capsule))
}

/// Issues a task opening `shared` granule indices to `sp_id`, together with
/// the store-side revocation and download tokens, and advances the owner
/// state. `granules` must be the set the capsule was built from, and
/// `expires_at` the token's expiry instant (the caller checks it is in the
/// future; this function reads no clock).
pub fn task_issue(
    rng: &mut (impl RngCore + CryptoRng),
    mpk: &MasterPublicKey,
    sk_pdo: &NonZeroScalar,
    sp_id: &str,
    granules: &GranuleSet,
    shared: &GranuleIndices,
    secret: &LocalSecret,
    expires_at: u64,
) -> Result<IssuedTask, SchemeError> {
    if sp_id.is_empty() {
        return Err(SchemeError::EmptyIdentity);
    }
    if granules.width_bits() != mpk.mask_bits() {
        return Err(SchemeError::WidthMismatch {
            expected: mpk.mask_bits(),
            got: granules.width_bits(),
        });
    }
    for w in shared.iter() {
        if w > granules.count() {
            return Err(SchemeError::Granule(GranuleError::IndexOutOfRange {
                index: w,
                count: granules.count(),
            }));
        }
    }

    let h_id = mpk.hashes.hash_to_g1(&id_label(sp_id));
    let slot = mpk.sentinel_point();

    let t1 = h_id
        .pow(&sk_pdo.scalar())
        .mul(&slot.pow(&secret.exp_acc));

    let p_t1 = pairing(&h_id.pow(&secret.exp_acc), &mpk.g2_alpha);
    let p_t2 = pairing(&h_id.pow(&secret.abe_secret.scalar()), &mpk.g2_alpha);
    let p_t = p_t1.mul(&p_t2);

    // e(g1, g2)^(owner secret * ABE secret) via the cached target generator
    let t2 = p_t.mul(
        &mpk.group
            .gt_gen()
            .pow(&(sk_pdo.scalar() * secret.abe_secret.scalar())),
    );

    let mut shares = BTreeMap::new();
    for w in shared.iter() {
        let r_w = NonZeroScalar::random(rng);
        let p_w = pairing(&h_id.pow(&r_w.scalar()), &mpk.g2_alpha);
        let mut mask = granules.xor_except(w)?;
        mask.xor_assign(&secret.mask_acc).expect("widths checked");
        mask.xor_assign(&mpk.hashes.mask_from_gt(&p_w))
            .expect("widths checked");
        shares.insert(
            w,
            TaskShare {
                mask,
                blind: p_t.mul(&p_w),
            },
        );
    }

    // advance the owner state and derive the store-side tokens
    let a_next = BitString::random(rng, mpk.hashes.mask_bytes());
    let d_next = NonZeroScalar::random(rng);
    let next_dci = CapsuleId(secret.dci.0.mul(&mpk.group.g2().pow(&d_next.scalar())));
    let mut next_mask = secret.mask_acc.clone();
    next_mask.xor_assign(&a_next).expect("widths checked");
    let next_exp = secret.exp_acc + d_next.scalar();

    let revocation = RevocationToken {
        r1: mpk.group.g1().pow(&next_exp),
        r2: next_dci.clone(),
        r3: a_next,
    };
    let token = DownloadToken {
        d1: p_t1,
        expires_at,
    };
    let task = Task {
        sp_id: sp_id.to_string(),
        dci: secret.dci.clone(),
        t1,
        t2,
        shares,
    };
    let next_secret = LocalSecret {
        dci: next_dci,
        mask_acc: next_mask,
        exp_acc: next_exp,
        abe_secret: secret.abe_secret,
    };
    Ok(IssuedTask {
        task,
        revocation,
        token,
        next_secret,
    })
}

/// Derives the download parameter from a task and the holder's key. The value
/// matches the store's token exactly when the key identity matches the task's
/// addressee; three pairings, no exponentiations.
pub fn access_dc(
    mpk: &MasterPublicKey,
    sk: &SpSecretKey,
    task: &Task,
    pk_pdo: &G2Elem,
) -> DownloadParameter {
    let num = pairing(&sk.sk2, &task.dci.0).mul(&pairing(&sk.sk4, pk_pdo));
    let den = pairing(&task.t1, &sk.sk3);
    let _ = mpk;
    DownloadParameter(num.div(&den))
}

/// The download gate: bytewise parameter equality and expiry. Pure; the store
/// supplies the clock and single-use accounting.
pub fn download_check(token: &DownloadToken, param: &DownloadParameter, now: u64) -> bool {
    now < token.expires_at && token.d1.to_bytes() == param.to_bytes()
}

/// Opens a downloaded capsule with a task: verifies integrity, runs the ABE
/// decryption against the holder's attributes, and unblinds the shared
/// granule indices. Exactly reuse_bound + 4 pairings on every path that
/// reaches the ABE stage.
pub fn dec_dc(
    mpk: &MasterPublicKey,
    sk: &SpSecretKey,
    capsule_id: &CapsuleId,
    capsule: &DataCapsule,
    task: &Task,
    param: &DownloadParameter,
) -> Result<BTreeMap<usize, BitString>, SchemeError> {
    capsule.check_shape()?;

    // integrity: the tag must bind the body to the served capsule id
    let delta = mpk.hashes.capsule_digest(
        &capsule_id.0,
        &capsule.c1,
        &capsule.c2,
        &capsule.c3,
        &capsule.c4,
    );
    let lhs = pairing(&capsule.v, mpk.group.g2());
    let rhs = pairing(&mpk.group.g1().pow(&delta.scalar()), &capsule_id.0);
    if lhs != rhs {
        return Err(SchemeError::TamperDetected);
    }

    // ABE stage: attributes must satisfy the capsule policy
    let policy = &capsule.policy;
    if !satisfies(policy, &sk.attrs) {
        return Err(SchemeError::PolicyNotSatisfied);
    }
    let plan = recon_coefficients(policy, &sk.attrs)?;

    let mut num = pairing(&sk.sk2, &capsule.c1);
    for j in 1..=policy.reuse_bound() {
        let mut base = G1Elem::identity();
        for (row, coef) in &plan.entries {
            if policy.reuse_index()[*row] != j {
                continue;
            }
            let key = sk
                .sk1
                .get(policy.row_attr(*row))
                .expect("plan rows come from held attributes");
            let term = if *coef == Scalar::one() {
                *key
            } else {
                key.pow(coef)
            };
            base = base.mul(&term);
        }
        num = num.mul(&pairing(&base, &capsule.c3[j - 1]));
    }
    let mut den_base = G1Elem::identity();
    for (row, coef) in &plan.entries {
        let term = if *coef == Scalar::one() {
            capsule.c4[*row]
        } else {
            capsule.c4[*row].pow(coef)
        };
        den_base = den_base.mul(&term);
    }
    let den = pairing(&den_base, &sk.sk3);
    let p_t2 = num.div(&den);

    // unblind: owner mask then per-granule masks
    let p_t = param.0.mul(&p_t2);
    let p2 = mpk.hashes.mask_from_gt(&task.t2.div(&p_t));
    let mut out = BTreeMap::new();
    for (&w, share) in &task.shares {
        let p_w = share.blind.div(&p_t);
        let mut g = capsule.c2.clone();
        g.xor_assign(&share.mask)
            .map_err(|_| SchemeError::MalformedCapsule("share width"))?;
        g.xor_assign(&mpk.hashes.mask_from_gt(&p_w))
            .expect("widths agree");
        g.xor_assign(&p2).expect("widths agree");
        out.insert(w, g);
    }
    Ok(out)
}

/// Applies a revocation token: fold in the mask layer, adopt the next id,
/// retag. One exponentiation, no pairings.
pub fn update_dc(
    mpk: &MasterPublicKey,
    _current: &CapsuleId,
    capsule: &DataCapsule,
    revocation: &RevocationToken,
) -> Result<(CapsuleId, DataCapsule), SchemeError> {
    let mut c2 = capsule.c2.clone();
    c2.xor_assign(&revocation.r3)
        .map_err(|_| SchemeError::WidthMismatch {
            expected: capsule.c2.len() * 8,
            got: revocation.r3.len() * 8,
        })?;
    let next_id = revocation.r2.clone();
    let delta = mpk
        .hashes
        .capsule_digest(&next_id.0, &capsule.c1, &c2, &capsule.c3, &capsule.c4);
    let v = revocation.r1.pow(&delta.scalar());
    let updated = DataCapsule {
        policy: capsule.policy.clone(),
        c1: capsule.c1,
        c2,
        c3: capsule.c3.clone(),
        c4: capsule.c4.clone(),
        v,
    };
    Ok((next_id, updated))
}

/// Integrity check alone, as the store runs at ingest: two pairings, one
/// exponentiation.
pub fn verify_capsule(mpk: &MasterPublicKey, id: &CapsuleId, capsule: &DataCapsule) -> bool {
    if capsule.check_shape().is_err() {
        return false;
    }
    let delta = mpk.hashes.capsule_digest(
        &id.0,
        &capsule.c1,
        &capsule.c2,
        &capsule.c3,
        &capsule.c4,
    );
    pairing(&capsule.v, mpk.group.g2()) == pairing(&mpk.group.g1().pow(&delta.scalar()), &id.0)
}
