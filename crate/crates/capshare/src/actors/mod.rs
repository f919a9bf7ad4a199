//! Party state machines for the three roles, plus the shared transport
//! abstraction and a scripted scenario driver.
//!
//! The authority enrolls consumers and owners; an owner keeps its plaintext
//! granules and the per-capsule secret chain (both are inputs to task
//! issuance); a consumer holds a key and an inbox of received tasks. A
//! `World` bundles one authority with any number of owners and consumers and
//! is the only way to reach the later phases, so phase order is enforced by
//! construction: no tasks without an initialized world, no decryption
//! without a share handle.

pub mod scenario;
mod transport;

pub use transport::{CapsuleTransport, HttpTransport, InProcessTransport};

use rand::{CryptoRng, RngCore};
use std::collections::BTreeMap;

use crate::bits::BitString;
use crate::csstore::StoreError;
use crate::granules::{join_payload, split_payload, GranuleIndices, GranuleSet};
use crate::groups::{Curve, G2Elem, NonZeroScalar};
use crate::policy::{compile_lsss, parse_formula, AttributeSet, PolicyError};
use crate::scheme::{
    access_dc, dec_dc, encapsulate, gen_seed, keygen_sp, pkeygen_pdo, setup, skeygen_pdo,
    task_issue, CapsuleId, MasterPublicKey, MasterSecretKey, SchemeError, SpSecretKey, Task,
};

#[derive(Debug, thiserror::Error)]
pub enum ActorError {
    #[error("no consumer `{0}` in this world")]
    UnknownSp(String),
    #[error("no owner `{0}` in this world")]
    UnknownPdo(String),
    #[error("owner holds no capsule under this handle")]
    UnknownCapsule,
    #[error("no task at inbox slot {0}")]
    EmptyInboxSlot(usize),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
}

// ---- payload checksum convention ----

/// FNV-1a over the payload; lets scenario code tell garbage decryptions from
/// real ones without reference data. Convention of this layer, not key
/// material.
pub fn checksum(data: &[u8]) -> [u8; 4] {
    let mut h: u32 = 0x811c_9dc5;
    for &b in data {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h.to_be_bytes()
}

pub fn seal_payload(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() + 4);
    out.extend_from_slice(data);
    out.extend_from_slice(&checksum(data));
    out
}

pub fn open_payload(sealed: &[u8]) -> Option<Vec<u8>> {
    if sealed.len() < 4 {
        return None;
    }
    let (data, tag) = sealed.split_at(sealed.len() - 4);
    (checksum(data) == tag).then(|| data.to_vec())
}

// ---- authority ----

pub struct TaActor {
    mpk: MasterPublicKey,
    msk: MasterSecretKey,
    issued: BTreeMap<String, u32>,
}

impl TaActor {
    pub fn new(
        rng: &mut (impl RngCore + CryptoRng),
        lambda: u32,
        curve: Curve,
        granule_bits: usize,
        universe: Vec<String>,
    ) -> Result<TaActor, ActorError> {
        let (mpk, msk) = setup(rng, lambda, curve, granule_bits, universe)?;
        Ok(TaActor {
            mpk,
            msk,
            issued: BTreeMap::new(),
        })
    }

    pub fn mpk(&self) -> &MasterPublicKey {
        &self.mpk
    }

    pub fn issue_sp_key(
        &mut self,
        rng: &mut (impl RngCore + CryptoRng),
        sp_id: &str,
        attrs: &AttributeSet,
    ) -> Result<SpSecretKey, ActorError> {
        let key = keygen_sp(rng, &self.mpk, &self.msk, sp_id, attrs)?;
        *self.issued.entry(sp_id.to_string()).or_insert(0) += 1;
        Ok(key)
    }

    pub fn keys_issued_to(&self, sp_id: &str) -> u32 {
        self.issued.get(sp_id).copied().unwrap_or(0)
    }

    /// First leg of owner enrollment: mint the seed the owner keeps.
    pub fn begin_enrollment(
        &self,
        rng: &mut (impl RngCore + CryptoRng),
        pdo_id: &str,
    ) -> Result<EnrollingPdo, ActorError> {
        let seed = gen_seed(rng, &self.mpk, pdo_id)?;
        Ok(EnrollingPdo {
            id: pdo_id.to_string(),
            gamma: seed.gamma,
            psi: seed.psi,
        })
    }

    /// Second leg: blind the owner's commitment into the public key and the
    /// exponent the owner folds in locally.
    pub fn blind_enrollment(
        &self,
        rng: &mut (impl RngCore + CryptoRng),
        psi: &G2Elem,
    ) -> Result<(G2Elem, NonZeroScalar), ActorError> {
        Ok(pkeygen_pdo(rng, &self.mpk, psi)?)
    }
}

/// Owner mid-enrollment. The only path to a [`PdoActor`] runs through
/// [`EnrollingPdo::complete`], so the three-step handshake cannot be
/// reordered or skipped.
pub struct EnrollingPdo {
    id: String,
    gamma: NonZeroScalar,
    psi: G2Elem,
}

impl EnrollingPdo {
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Commitment the owner sends back to the authority.
    pub fn psi(&self) -> &G2Elem {
        &self.psi
    }

    pub fn complete(self, pk: G2Elem, beta: &NonZeroScalar) -> PdoActor {
        let sk = skeygen_pdo(&self.gamma, beta);
        PdoActor {
            id: self.id,
            pk,
            sk,
            next_handle: 0,
            capsules: BTreeMap::new(),
        }
    }
}

/// Owner-side record of one published capsule: the plaintext granules (task
/// issuance re-derives masks from them) and the secret chain head.
struct OwnedCapsule {
    granules: GranuleSet,
    secret: crate::scheme::LocalSecret,
}

/// Stable owner-side name for a capsule. The capsule id changes on every
/// update; the handle does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CapsuleHandle(u64);

pub struct PdoActor {
    id: String,
    pk: G2Elem,
    sk: NonZeroScalar,
    next_handle: u64,
    capsules: BTreeMap<CapsuleHandle, OwnedCapsule>,
}

impl PdoActor {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn pk(&self) -> &G2Elem {
        &self.pk
    }

    /// Checksum-wrap, split, encapsulate, and upload. The owner keeps the
    /// granules and the capsule secret under the returned handle.
    pub fn publish(
        &mut self,
        rng: &mut (impl RngCore + CryptoRng),
        mpk: &MasterPublicKey,
        transport: &dyn CapsuleTransport,
        data: &[u8],
        policy_text: &str,
    ) -> Result<CapsuleHandle, ActorError> {
        let policy = compile_lsss(&parse_formula(policy_text)?)?;
        let granules = split_payload(&seal_payload(data), mpk.mask_bits())
            .map_err(SchemeError::from)?;
        let (id, secret, capsule) = encapsulate(rng, mpk, &self.sk, &granules, &policy)?;
        transport.put_capsule(&id, &capsule)?;
        let handle = CapsuleHandle(self.next_handle);
        self.next_handle += 1;
        self.capsules.insert(handle, OwnedCapsule { granules, secret });
        Ok(handle)
    }

    /// Issue a task for `sp_id`, register its token pair at the store, and
    /// advance the secret chain. Returns the task for delivery.
    pub fn share(
        &mut self,
        rng: &mut (impl RngCore + CryptoRng),
        mpk: &MasterPublicKey,
        transport: &dyn CapsuleTransport,
        handle: CapsuleHandle,
        sp_id: &str,
        indices: &GranuleIndices,
        expires_at: u64,
    ) -> Result<Task, ActorError> {
        let owned = self
            .capsules
            .get_mut(&handle)
            .ok_or(ActorError::UnknownCapsule)?;
        let issued = task_issue(
            rng,
            mpk,
            &self.sk,
            sp_id,
            &owned.granules,
            indices,
            &owned.secret,
            expires_at,
        )?;
        transport.register_tokens(owned.secret.dci(), &issued.revocation, &issued.token)?;
        owned.secret = issued.next_secret;
        Ok(issued.task)
    }

    /// Current id in the capsule's update chain.
    pub fn current_dci(&self, handle: CapsuleHandle) -> Option<&CapsuleId> {
        self.capsules.get(&handle).map(|c| c.secret.dci())
    }

    pub fn granules(&self, handle: CapsuleHandle) -> Option<&GranuleSet> {
        self.capsules.get(&handle).map(|c| &c.granules)
    }
}

/// A task as delivered to a consumer, with the owner key needed at the gate.
pub struct TaskDelivery {
    pub pdo_id: String,
    pub pk_pdo: G2Elem,
    pub task: Task,
}

pub struct SpActor {
    id: String,
    key: SpSecretKey,
    inbox: Vec<TaskDelivery>,
}

/// Everything a consumer gets out of one task.
#[derive(Debug, PartialEq, Eq)]
pub struct Recovery {
    pub granules: BTreeMap<usize, BitString>,
    /// Unwrapped payload, present only when every granule was shared and the
    /// checksum verified.
    pub payload: Option<Vec<u8>>,
}

impl SpActor {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn key(&self) -> &SpSecretKey {
        &self.key
    }

    pub fn receive(&mut self, delivery: TaskDelivery) -> usize {
        self.inbox.push(delivery);
        self.inbox.len() - 1
    }

    pub fn inbox_len(&self) -> usize {
        self.inbox.len()
    }

    pub fn inbox_entry(&self, slot: usize) -> Option<&TaskDelivery> {
        self.inbox.get(slot)
    }

    /// Full consumer pipeline for one inbox slot: gate parameter, download,
    /// decrypt, reassemble.
    pub fn run_task(
        &self,
        mpk: &MasterPublicKey,
        transport: &dyn CapsuleTransport,
        slot: usize,
    ) -> Result<Recovery, ActorError> {
        let delivery = self
            .inbox
            .get(slot)
            .ok_or(ActorError::EmptyInboxSlot(slot))?;
        let param = access_dc(mpk, &self.key, &delivery.task, &delivery.pk_pdo);
        let (id, capsule) = transport.download(delivery.task.dci(), &param)?;
        let granules = dec_dc(mpk, &self.key, &id, &capsule, &delivery.task, &param)?;
        Ok(assemble(granules))
    }
}

/// Joins a decryption result into a [`Recovery`], unsealing the payload when
/// the granule set is complete.
pub fn assemble(granules: BTreeMap<usize, BitString>) -> Recovery {
    let n = granules.len();
    let complete = n > 0 && (1..=n).all(|w| granules.contains_key(&w));
    let payload = complete
        .then(|| {
            let set = GranuleSet::from_granules(granules.values().cloned().collect()).ok()?;
            open_payload(&join_payload(&set).ok()?)
        })
        .flatten();
    Recovery { granules, payload }
}

// ---- world ----

pub struct SpSpec {
    pub id: String,
    pub attrs: AttributeSet,
}

impl SpSpec {
    pub fn new(id: impl Into<String>, attrs: AttributeSet) -> SpSpec {
        SpSpec {
            id: id.into(),
            attrs,
        }
    }
}

/// One authority, its consumers, and its owners.
pub struct World {
    ta: TaActor,
    sps: BTreeMap<String, SpActor>,
    pdos: BTreeMap<String, PdoActor>,
}

/// Ticket from a completed share: names the consumer and the inbox slot
/// holding the task. Decryption needs one, so it cannot precede sharing.
#[derive(Debug, Clone)]
pub struct ShareHandle {
    pub pdo_id: String,
    pub sp_id: String,
    pub slot: usize,
    pub capsule: CapsuleHandle,
}

/// System initialization: authority setup, consumer key issuance, and the
/// owner enrollment handshake in its mandatory order.
pub fn run_initialization(
    rng: &mut (impl RngCore + CryptoRng),
    lambda: u32,
    curve: Curve,
    granule_bits: usize,
    universe: Vec<String>,
    sp_specs: &[SpSpec],
    pdo_ids: &[&str],
) -> Result<World, ActorError> {
    let mut ta = TaActor::new(rng, lambda, curve, granule_bits, universe)?;
    let mut sps = BTreeMap::new();
    for spec in sp_specs {
        let key = ta.issue_sp_key(rng, &spec.id, &spec.attrs)?;
        sps.insert(
            spec.id.clone(),
            SpActor {
                id: spec.id.clone(),
                key,
                inbox: Vec::new(),
            },
        );
    }
    let mut pdos = BTreeMap::new();
    for id in pdo_ids {
        let enrolling = ta.begin_enrollment(rng, id)?;
        let (pk, beta) = ta.blind_enrollment(rng, enrolling.psi())?;
        pdos.insert(id.to_string(), enrolling.complete(pk, &beta));
    }
    Ok(World { ta, sps, pdos })
}

impl World {
    pub fn mpk(&self) -> &MasterPublicKey {
        self.ta.mpk()
    }

    pub fn ta(&self) -> &TaActor {
        &self.ta
    }

    pub fn sp(&self, id: &str) -> Result<&SpActor, ActorError> {
        self.sps.get(id).ok_or_else(|| ActorError::UnknownSp(id.into()))
    }

    fn sp_mut(&mut self, id: &str) -> Result<&mut SpActor, ActorError> {
        self.sps
            .get_mut(id)
            .ok_or_else(|| ActorError::UnknownSp(id.into()))
    }

    pub fn pdo(&self, id: &str) -> Result<&PdoActor, ActorError> {
        self.pdos
            .get(id)
            .ok_or_else(|| ActorError::UnknownPdo(id.into()))
    }

    fn pdo_mut(&mut self, id: &str) -> Result<&mut PdoActor, ActorError> {
        self.pdos
            .get_mut(id)
            .ok_or_else(|| ActorError::UnknownPdo(id.into()))
    }
}

/// Granular data sharing: publish (if `handle` is `None`), issue, deliver.
#[allow(clippy::too_many_arguments)]
pub fn run_sharing(
    rng: &mut (impl RngCore + CryptoRng),
    world: &mut World,
    transport: &dyn CapsuleTransport,
    pdo_id: &str,
    handle: Option<CapsuleHandle>,
    data: &[u8],
    policy_text: &str,
    sp_id: &str,
    indices: Option<&[usize]>,
    expires_at: u64,
) -> Result<ShareHandle, ActorError> {
    if !world.sps.contains_key(sp_id) {
        return Err(ActorError::UnknownSp(sp_id.into()));
    }
    let mpk = world.ta.mpk().clone();
    let pdo = world.pdo_mut(pdo_id)?;
    let handle = match handle {
        Some(h) => h,
        None => pdo.publish(rng, &mpk, transport, data, policy_text)?,
    };
    let count = pdo
        .granules(handle)
        .ok_or(ActorError::UnknownCapsule)?
        .count();
    let indices = match indices {
        Some(list) => GranuleIndices::new(list.iter().copied(), count),
        None => GranuleIndices::all(count),
    }
    .map_err(SchemeError::from)?;
    let task = pdo.share(rng, &mpk, transport, handle, sp_id, &indices, expires_at)?;
    let delivery = TaskDelivery {
        pdo_id: pdo_id.to_string(),
        pk_pdo: *world.pdo(pdo_id)?.pk(),
        task,
    };
    let slot = world.sp_mut(sp_id)?.receive(delivery);
    Ok(ShareHandle {
        pdo_id: pdo_id.to_string(),
        sp_id: sp_id.to_string(),
        slot,
        capsule: handle,
    })
}

/// Granular data decryption: the consumer walks gate, download, decrypt.
pub fn run_decryption(
    world: &World,
    transport: &dyn CapsuleTransport,
    handle: &ShareHandle,
) -> Result<Recovery, ActorError> {
    world
        .sp(&handle.sp_id)?
        .run_task(world.mpk(), transport, handle.slot)
}
