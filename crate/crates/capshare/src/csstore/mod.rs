//! The capsule store: token-gated downloads, queued revocations, and a
//! replayable event log.
//!
//! One record per capsule, indexed by the current capsule id. Each registered
//! token pairs a download grant with the revocation that advances the capsule
//! once that grant resolves. Resolution is consumption or expiry; either way
//! the head of the pending revocation queue is applied and the record is
//! re-indexed under the new id, so the store's state sequence mirrors the
//! owner's. A download parameter matching any active grant passes the gate;
//! a holder who jumps the queue gets a capsule state their task cannot open,
//! which is the documented cost of downloading out of order.
//!
//! All mutation happens under one writer lock, which makes consume, update,
//! and re-index a single atomic step.

mod log;
pub mod http;

use parking_lot::{Mutex, RwLock};
use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::scheme::{
    update_dc, verify_capsule, CapsuleId, DataCapsule, DownloadParameter, DownloadToken,
    MasterPublicKey, RevocationToken,
};

pub use log::LOG_FORMAT;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("no capsule under this id")]
    UnknownCapsule,
    #[error("a capsule already exists under this id")]
    DuplicateCapsule,
    #[error("capsule failed the integrity check at ingest")]
    IntegrityFailure,
    #[error("download parameter matches no active token")]
    TokenMismatch,
    #[error("token already consumed")]
    TokenConsumed,
    #[error("token expired")]
    TokenExpired,
    #[error("token expiry is not in the future")]
    TokenExpiredOnArrival,
    #[error("event log: {0}")]
    Log(String),
    #[error("transport: {0}")]
    Transport(String),
}

impl StoreError {
    /// Stable machine-readable code; the first line of HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::UnknownCapsule => "unknown-capsule",
            StoreError::DuplicateCapsule => "duplicate-capsule",
            StoreError::IntegrityFailure => "integrity-failure",
            StoreError::TokenMismatch => "token-mismatch",
            StoreError::TokenConsumed => "token-consumed",
            StoreError::TokenExpired => "token-expired",
            StoreError::TokenExpiredOnArrival => "token-expired-on-arrival",
            StoreError::Log(_) => "internal",
            StoreError::Transport(_) => "transport",
        }
    }

    /// Inverse of [`StoreError::code`] for client-side error mapping.
    pub fn from_code(code: &str, message: &str) -> StoreError {
        match code {
            "unknown-capsule" => StoreError::UnknownCapsule,
            "duplicate-capsule" => StoreError::DuplicateCapsule,
            "integrity-failure" => StoreError::IntegrityFailure,
            "token-mismatch" => StoreError::TokenMismatch,
            "token-consumed" => StoreError::TokenConsumed,
            "token-expired" => StoreError::TokenExpired,
            "token-expired-on-arrival" => StoreError::TokenExpiredOnArrival,
            _ => StoreError::Transport(format!("{code}: {message}")),
        }
    }
}

/// Seconds-since-epoch clock, real or test-controlled.
#[derive(Clone, Debug)]
pub enum Clock {
    System,
    Manual(Arc<AtomicU64>),
}

impl Clock {
    pub fn system() -> Self {
        Clock::System
    }

    pub fn manual(start: u64) -> Self {
        Clock::Manual(Arc::new(AtomicU64::new(start)))
    }

    pub fn now(&self) -> u64 {
        match self {
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .expect("clock after epoch")
                .as_secs(),
            Clock::Manual(t) => t.load(Ordering::SeqCst),
        }
    }

    /// Only manual clocks move on command.
    pub fn set(&self, now: u64) -> bool {
        match self {
            Clock::System => false,
            Clock::Manual(t) => {
                t.store(now, Ordering::SeqCst);
                true
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenStatus {
    Active,
    Consumed,
    Expired,
}

impl TokenStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TokenStatus::Active => "active",
            TokenStatus::Consumed => "consumed",
            TokenStatus::Expired => "expired",
        }
    }
}

/// Token lifecycle view for inspection and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenInfo {
    pub expires_at: u64,
    pub status: TokenStatus,
}

struct Grant {
    d1_bytes: Vec<u8>,
    expires_at: u64,
    status: TokenStatus,
    revocation: RevocationToken,
}

struct CapsuleRecord {
    id: CapsuleId,
    capsule: DataCapsule,
    grants: Vec<Grant>,
    /// How many revocations have been applied; equals resolved grants.
    applied: usize,
}

impl CapsuleRecord {
    /// Capsule ids this record will pass through as pending grants resolve.
    fn pending_chain_contains(&self, dci_bytes: &[u8]) -> bool {
        self.grants[self.applied..]
            .iter()
            .any(|g| g.revocation.r2.to_bytes() == dci_bytes)
    }
}

#[derive(Default)]
struct State {
    records: HashMap<Vec<u8>, CapsuleRecord>,
    /// Superseded capsule id -> its successor. Kept so a download aimed at a
    /// past state still reaches the record and gets a precise token error
    /// instead of a generic miss.
    aliases: HashMap<Vec<u8>, Vec<u8>>,
}

/// The capsule service. Cheap to share: wrap in `Arc` for servers.
pub struct Store {
    mpk: MasterPublicKey,
    clock: Clock,
    state: RwLock<State>,
    log: Mutex<Option<log::LogFile>>,
}

impl Store {
    /// Volatile store, no persistence.
    pub fn in_memory(mpk: MasterPublicKey, clock: Clock) -> Store {
        Store {
            mpk,
            clock,
            state: RwLock::new(State::default()),
            log: Mutex::new(None),
        }
    }

    /// Store backed by an append-only event log under `dir`. An existing log
    /// is replayed; every accepted mutation is logged before it is applied.
    pub fn open(dir: &Path, mpk: MasterPublicKey, clock: Clock) -> Result<Store, StoreError> {
        let (logfile, events) = log::LogFile::open(dir)?;
        let mut state = State::default();
        for ev in events {
            apply_event(&mut state, &mpk, ev)?;
        }
        Ok(Store {
            mpk,
            clock,
            state: RwLock::new(state),
            log: Mutex::new(Some(logfile)),
        })
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn mpk(&self) -> &MasterPublicKey {
        &self.mpk
    }

    fn log_event(&self, ev: &log::LogEvent) -> Result<(), StoreError> {
        if let Some(f) = self.log.lock().as_mut() {
            f.append(ev)?;
        }
        Ok(())
    }

    /// Ingest a fresh capsule. The integrity tag is verified against the id
    /// before anything is stored.
    pub fn store_capsule(&self, id: &CapsuleId, capsule: &DataCapsule) -> Result<(), StoreError> {
        let mut state = self.state.write();
        let key = id.to_bytes();
        if state.records.contains_key(&key) {
            return Err(StoreError::DuplicateCapsule);
        }
        if !verify_capsule(&self.mpk, id, capsule) {
            return Err(StoreError::IntegrityFailure);
        }
        self.log_event(&log::LogEvent::stored(id, capsule))?;
        transition_store(&mut state, id.clone(), capsule.clone());
        Ok(())
    }

    /// Register a paired download grant and revocation. The address may be
    /// the record's current id or any id on its pending chain (tokens issued
    /// ahead of unresolved ones address a future state).
    pub fn register_tokens(
        &self,
        dci: &CapsuleId,
        revocation: &RevocationToken,
        token: &DownloadToken,
    ) -> Result<(), StoreError> {
        if token.expires_at <= self.clock.now() {
            return Err(StoreError::TokenExpiredOnArrival);
        }
        let mut state = self.state.write();
        let addr = dci.to_bytes();
        if resolve_record_key(&state, &addr).is_none() {
            return Err(StoreError::UnknownCapsule);
        }
        self.log_event(&log::LogEvent::registered(dci, revocation, token))?;
        transition_register(&mut state, &addr, revocation.clone(), token.clone())
            .expect("record resolved above");
        Ok(())
    }

    /// The download gate. Success requires a byte-exact match against an
    /// active unexpired grant; the capsule snapshot is served, the grant is
    /// consumed, and the head pending revocation is applied atomically.
    pub fn handle_download(
        &self,
        dci: &CapsuleId,
        param: &DownloadParameter,
    ) -> Result<(CapsuleId, DataCapsule), StoreError> {
        let now = self.clock.now();
        let mut state = self.state.write();
        let key = follow_aliases(&state, dci.to_bytes()).ok_or(StoreError::UnknownCapsule)?;
        let record = &state.records[&key];
        let p_bytes = param.to_bytes();

        let matched = record
            .grants
            .iter()
            .position(|g| g.d1_bytes == p_bytes)
            .ok_or(StoreError::TokenMismatch)?;
        match record.grants[matched].status {
            TokenStatus::Consumed => return Err(StoreError::TokenConsumed),
            TokenStatus::Expired => return Err(StoreError::TokenExpired),
            TokenStatus::Active => {}
        }
        if now >= record.grants[matched].expires_at {
            // lazy expiry still resolves the grant and advances the chain
            self.log_event(&log::LogEvent::expired(&key, &p_bytes))?;
            transition_resolve(&mut state, &self.mpk, &key, &p_bytes, TokenStatus::Expired)?;
            return Err(StoreError::TokenExpired);
        }

        let snapshot = (record.id.clone(), record.capsule.clone());
        self.log_event(&log::LogEvent::consumed(&key, &p_bytes))?;
        transition_resolve(&mut state, &self.mpk, &key, &p_bytes, TokenStatus::Consumed)?;
        Ok(snapshot)
    }

    /// Expire every active grant past `now` and apply their queued
    /// revocations. Returns the number of grants expired.
    pub fn expire_sweep(&self, now: u64) -> Result<u64, StoreError> {
        let mut state = self.state.write();
        let mut expired = 0u64;
        loop {
            // keys change as records re-index, so find one victim at a time
            let victim = state.records.iter().find_map(|(key, rec)| {
                rec.grants
                    .iter()
                    .find(|g| g.status == TokenStatus::Active && g.expires_at <= now)
                    .map(|g| (key.clone(), g.d1_bytes.clone()))
            });
            let Some((key, d1)) = victim else { break };
            self.log_event(&log::LogEvent::expired(&key, &d1))?;
            transition_resolve(&mut state, &self.mpk, &key, &d1, TokenStatus::Expired)?;
            expired += 1;
        }
        Ok(expired)
    }

    /// Read-only capsule fetch for inspection; not part of the gate.
    pub fn get_capsule(&self, dci: &CapsuleId) -> Option<(CapsuleId, DataCapsule)> {
        let state = self.state.read();
        state
            .records
            .get(&dci.to_bytes())
            .map(|r| (r.id.clone(), r.capsule.clone()))
    }

    /// Token lifecycle of the record currently indexed at `dci`, in
    /// registration order.
    pub fn token_info(&self, dci: &CapsuleId) -> Option<Vec<TokenInfo>> {
        let state = self.state.read();
        state.records.get(&dci.to_bytes()).map(|r| {
            r.grants
                .iter()
                .map(|g| TokenInfo {
                    expires_at: g.expires_at,
                    status: g.status,
                })
                .collect()
        })
    }

    pub fn capsule_count(&self) -> usize {
        self.state.read().records.len()
    }
}

/// Walks superseded ids forward to the key of the live record, if any.
fn follow_aliases(state: &State, mut key: Vec<u8>) -> Option<Vec<u8>> {
    let mut hops = 0usize;
    while !state.records.contains_key(&key) {
        key = state.aliases.get(&key)?.clone();
        hops += 1;
        debug_assert!(hops <= state.aliases.len(), "alias cycle");
    }
    Some(key)
}

/// Record key holding the record whose current id or pending chain covers
/// `addr`.
fn resolve_record_key(state: &State, addr: &[u8]) -> Option<Vec<u8>> {
    if state.records.contains_key(addr) {
        return Some(addr.to_vec());
    }
    state
        .records
        .iter()
        .find(|(_, rec)| rec.pending_chain_contains(addr))
        .map(|(k, _)| k.clone())
}

fn transition_store(state: &mut State, id: CapsuleId, capsule: DataCapsule) {
    let key = id.to_bytes();
    state.records.insert(
        key,
        CapsuleRecord {
            id,
            capsule,
            grants: Vec::new(),
            applied: 0,
        },
    );
}

fn transition_register(
    state: &mut State,
    addr: &[u8],
    revocation: RevocationToken,
    token: DownloadToken,
) -> Result<(), StoreError> {
    let key = resolve_record_key(state, addr).ok_or(StoreError::UnknownCapsule)?;
    let record = state.records.get_mut(&key).expect("key resolved");
    record.grants.push(Grant {
        d1_bytes: token.d1.to_bytes(),
        expires_at: token.expires_at,
        status: TokenStatus::Active,
        revocation,
    });
    Ok(())
}

/// Marks the grant matching `d1` with `status`, applies the head pending
/// revocation, and re-indexes the record under the updated id.
fn transition_resolve(
    state: &mut State,
    mpk: &MasterPublicKey,
    key: &[u8],
    d1: &[u8],
    status: TokenStatus,
) -> Result<(), StoreError> {
    let mut record = state
        .records
        .remove(key)
        .ok_or(StoreError::UnknownCapsule)?;
    let grant = record
        .grants
        .iter_mut()
        .find(|g| g.d1_bytes == d1 && g.status == TokenStatus::Active)
        .ok_or(StoreError::TokenMismatch)?;
    grant.status = status;

    let head = &record.grants[record.applied].revocation;
    let (next_id, next_capsule) =
        update_dc(mpk, &record.id, &record.capsule, head).map_err(|e| {
            StoreError::Log(format!("queued revocation failed to apply: {e}"))
        })?;
    record.applied += 1;
    record.id = next_id;
    record.capsule = next_capsule;
    let new_key = record.id.to_bytes();
    state.aliases.insert(key.to_vec(), new_key.clone());
    state.records.insert(new_key, record);
    Ok(())
}

fn apply_event(
    state: &mut State,
    mpk: &MasterPublicKey,
    ev: log::LogEvent,
) -> Result<(), StoreError> {
    match ev.decode()? {
        log::DecodedEvent::Stored { id, capsule } => {
            transition_store(state, id, capsule);
            Ok(())
        }
        log::DecodedEvent::Registered {
            addr,
            revocation,
            token,
        } => transition_register(state, &addr, revocation, token),
        log::DecodedEvent::Consumed { key, d1 } => {
            transition_resolve(state, mpk, &key, &d1, TokenStatus::Consumed)
        }
        log::DecodedEvent::Expired { key, d1 } => {
            transition_resolve(state, mpk, &key, &d1, TokenStatus::Expired)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::granules::{split_payload, GranuleIndices, GranuleSet};
    use crate::groups::{Curve, G2Elem, NonZeroScalar};
    use crate::policy::{compile_lsss, parse_formula, AttributeSet};
    use crate::scheme::{
        access_dc, dec_dc, encapsulate, gen_seed, keygen_sp, pkeygen_pdo, setup, skeygen_pdo,
        task_issue, IssuedTask, LocalSecret, SpSecretKey,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        mpk: MasterPublicKey,
        sk: SpSecretKey,
        sk_pdo: NonZeroScalar,
        pk_pdo: G2Elem,
        granules: GranuleSet,
        id: CapsuleId,
        ls: LocalSecret,
        dc: DataCapsule,
    }

    fn fixture(seed: u64) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let universe = vec!["A".to_string(), "B".to_string()];
        let (mpk, msk) = setup(&mut rng, 128, Curve::Bls12_381, 128, universe).unwrap();
        let sp = gen_seed(&mut rng, &mpk, "owner").unwrap();
        let (pk_pdo, beta) = pkeygen_pdo(&mut rng, &mpk, &sp.psi).unwrap();
        let sk_pdo = skeygen_pdo(&sp.gamma, &beta);
        let attrs: AttributeSet = ["A"].iter().copied().collect();
        let sk = keygen_sp(&mut rng, &mpk, &msk, "sp-1", &attrs).unwrap();
        let granules = split_payload(&[0x5A; 40], 128).unwrap();
        let policy = compile_lsss(&parse_formula("A").unwrap()).unwrap();
        let (id, ls, dc) = encapsulate(&mut rng, &mpk, &sk_pdo, &granules, &policy).unwrap();
        Fixture {
            mpk,
            sk,
            sk_pdo,
            pk_pdo,
            granules,
            id,
            ls,
            dc,
        }
    }

    fn issue(f: &Fixture, ls: &LocalSecret, seed: u64, expires_at: u64) -> IssuedTask {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let shared = GranuleIndices::all(f.granules.count()).unwrap();
        task_issue(
            &mut rng, &f.mpk, &f.sk_pdo, "sp-1", &f.granules, &shared, ls, expires_at,
        )
        .unwrap()
    }

    #[test]
    fn ingest_validates_and_deduplicates() {
        let f = fixture(101);
        let store = Store::in_memory(f.mpk.clone(), Clock::manual(1000));
        store.store_capsule(&f.id, &f.dc).unwrap();
        assert_eq!(
            store.store_capsule(&f.id, &f.dc),
            Err(StoreError::DuplicateCapsule)
        );
        let bad = f.dc.corrupted(crate::scheme::CapsuleComponent::C2, 3);
        let other_id = CapsuleId::from_elem(*f.dc.c1());
        assert_eq!(
            store.store_capsule(&other_id, &bad),
            Err(StoreError::IntegrityFailure)
        );
        assert!(store.get_capsule(&f.id).is_some());
        assert_eq!(store.capsule_count(), 1);
    }

    #[test]
    fn download_lifecycle_consume_then_replay() {
        let f = fixture(103);
        let store = Store::in_memory(f.mpk.clone(), Clock::manual(1000));
        store.store_capsule(&f.id, &f.dc).unwrap();
        let issued = issue(&f, &f.ls, 1, 2000);
        store
            .register_tokens(&f.id, &issued.revocation, &issued.token)
            .unwrap();

        // wrong parameter: gate rejects, nothing changes
        let wrong = DownloadParameter(*f.mpk.group().gt_gen());
        assert_eq!(
            store.handle_download(&f.id, &wrong),
            Err(StoreError::TokenMismatch)
        );
        assert_eq!(
            store.token_info(&f.id).unwrap()[0].status,
            TokenStatus::Active
        );

        // right parameter: serves the pre-update snapshot, consumes, advances
        let param = access_dc(&f.mpk, &f.sk, &issued.task, &f.pk_pdo);
        let (sid, sdc) = store.handle_download(&f.id, &param).unwrap();
        assert_eq!((&sid, &sdc), (&f.id, &f.dc));
        let opened = dec_dc(&f.mpk, &f.sk, &sid, &sdc, &issued.task, &param).unwrap();
        for (w, g) in &opened {
            assert_eq!(g, f.granules.granule(*w).unwrap());
        }

        // record re-indexed under the next id; old id is gone from fetch
        let next_id = issued.next_secret.dci();
        assert!(store.get_capsule(&f.id).is_none());
        assert!(store.get_capsule(next_id).is_some());
        // replay under either address: the superseded id forwards to the
        // live record, which reports the token spent
        assert_eq!(
            store.handle_download(&f.id, &param),
            Err(StoreError::TokenConsumed)
        );
        assert_eq!(
            store.handle_download(next_id, &param),
            Err(StoreError::TokenConsumed)
        );
        // a never-seen id is a genuine miss
        let ghost = CapsuleId::from_elem(G2Elem::generator());
        assert_eq!(
            store.handle_download(&ghost, &param),
            Err(StoreError::UnknownCapsule)
        );
    }

    #[test]
    fn expiry_gates_and_sweep_advances() {
        let f = fixture(107);
        let clock = Clock::manual(1000);
        let store = Store::in_memory(f.mpk.clone(), clock.clone());
        store.store_capsule(&f.id, &f.dc).unwrap();

        // dead on arrival
        let stale = issue(&f, &f.ls, 2, 999);
        assert_eq!(
            store.register_tokens(&f.id, &stale.revocation, &stale.token),
            Err(StoreError::TokenExpiredOnArrival)
        );

        let issued = issue(&f, &f.ls, 3, 1500);
        store
            .register_tokens(&f.id, &issued.revocation, &issued.token)
            .unwrap();
        clock.set(1500);
        let param = access_dc(&f.mpk, &f.sk, &issued.task, &f.pk_pdo);
        assert_eq!(
            store.handle_download(&f.id, &param),
            Err(StoreError::TokenExpired)
        );
        // lazy expiry applied the queued revocation
        let next_id = issued.next_secret.dci();
        assert!(store.get_capsule(next_id).is_some());
        assert_eq!(
            store.token_info(next_id).unwrap()[0].status,
            TokenStatus::Expired
        );

        // second grant, expired by sweep without any download attempt
        let issued2 = issue(&f, &issued.next_secret, 4, 1600);
        store
            .register_tokens(next_id, &issued2.revocation, &issued2.token)
            .unwrap();
        assert_eq!(store.expire_sweep(1550).unwrap(), 0);
        assert_eq!(store.expire_sweep(1600).unwrap(), 1);
        assert!(store.get_capsule(issued2.next_secret.dci()).is_some());
    }

    #[test]
    fn tokens_register_against_pending_chain() {
        let f = fixture(109);
        let store = Store::in_memory(f.mpk.clone(), Clock::manual(1000));
        store.store_capsule(&f.id, &f.dc).unwrap();

        let first = issue(&f, &f.ls, 5, 5000);
        let second = issue(&f, &first.next_secret, 6, 5000);
        store
            .register_tokens(&f.id, &first.revocation, &first.token)
            .unwrap();
        // second token addresses the not-yet-current next id
        store
            .register_tokens(
                first.next_secret.dci(),
                &second.revocation,
                &second.token,
            )
            .unwrap();
        assert_eq!(store.token_info(&f.id).unwrap().len(), 2);

        // in-order resolution walks the chain one revocation per download
        let p1 = access_dc(&f.mpk, &f.sk, &first.task, &f.pk_pdo);
        store.handle_download(&f.id, &p1).unwrap();
        let mid = first.next_secret.dci();
        let p2 = access_dc(&f.mpk, &f.sk, &second.task, &f.pk_pdo);
        let (sid, sdc) = store.handle_download(mid, &p2).unwrap();
        let opened = dec_dc(&f.mpk, &f.sk, &sid, &sdc, &second.task, &p2).unwrap();
        for (w, g) in &opened {
            assert_eq!(g, f.granules.granule(*w).unwrap());
        }
        assert!(store.get_capsule(second.next_secret.dci()).is_some());

        // a token for an unknown capsule is rejected
        let orphan = issue(&f, &second.next_secret, 7, 5000);
        let bogus = CapsuleId::from_elem(G2Elem::generator());
        assert_eq!(
            store.register_tokens(&bogus, &orphan.revocation, &orphan.token),
            Err(StoreError::UnknownCapsule)
        );
    }

    #[test]
    fn out_of_order_download_is_gate_accepted_but_yields_the_wrong_state() {
        let f = fixture(113);
        let store = Store::in_memory(f.mpk.clone(), Clock::manual(1000));
        store.store_capsule(&f.id, &f.dc).unwrap();
        let first = issue(&f, &f.ls, 8, 5000);
        let second = issue(&f, &first.next_secret, 9, 5000);
        store
            .register_tokens(&f.id, &first.revocation, &first.token)
            .unwrap();
        store
            .register_tokens(first.next_secret.dci(), &second.revocation, &second.token)
            .unwrap();

        // the second grant matches while the record still sits at the first
        // state; the gate passes and the head (first) revocation applies
        let p2 = access_dc(&f.mpk, &f.sk, &second.task, &f.pk_pdo);
        let (sid, sdc) = store.handle_download(&f.id, &p2).unwrap();
        assert_eq!(sid, f.id);
        // the served body belongs to a state the second task cannot open
        let opened = dec_dc(&f.mpk, &f.sk, &sid, &sdc, &second.task, &p2).unwrap();
        for (w, g) in &opened {
            assert_ne!(g, f.granules.granule(*w).unwrap());
        }
        assert!(store.get_capsule(first.next_secret.dci()).is_some());
    }

    #[test]
    fn persistence_replays_to_the_same_state() {
        let f = fixture(127);
        let dir = tempfile::tempdir().unwrap();
        let clock = Clock::manual(1000);

        let first = issue(&f, &f.ls, 10, 5000);
        let second = issue(&f, &first.next_secret, 11, 1200);
        let p1 = access_dc(&f.mpk, &f.sk, &first.task, &f.pk_pdo);

        {
            let store = Store::open(dir.path(), f.mpk.clone(), clock.clone()).unwrap();
            store.store_capsule(&f.id, &f.dc).unwrap();
            store
                .register_tokens(&f.id, &first.revocation, &first.token)
                .unwrap();
            store
                .register_tokens(first.next_secret.dci(), &second.revocation, &second.token)
                .unwrap();
            store.handle_download(&f.id, &p1).unwrap();
            store.expire_sweep(1200).unwrap();
        }

        // reopen: consumed first grant, expired second, chain fully applied
        let store = Store::open(dir.path(), f.mpk.clone(), clock).unwrap();
        assert_eq!(store.capsule_count(), 1);
        let final_id = second.next_secret.dci();
        assert!(store.get_capsule(final_id).is_some());
        let info = store.token_info(final_id).unwrap();
        assert_eq!(info[0].status, TokenStatus::Consumed);
        assert_eq!(info[1].status, TokenStatus::Expired);
        assert_eq!(
            store.handle_download(final_id, &p1),
            Err(StoreError::TokenConsumed)
        );

        // the log survives with its header intact
        let logged = std::fs::read_to_string(dir.path().join("store.log")).unwrap();
        assert!(logged.starts_with(&format!("{{\"format\":\"{}\"}}", LOG_FORMAT)));
        assert_eq!(logged.lines().count(), 1 + 5);
    }

    #[test]
    fn corrupt_log_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("store.log"), "{\"format\":\"wrong\"}\n").unwrap();
        let f = fixture(131);
        assert!(matches!(
            Store::open(dir.path(), f.mpk.clone(), Clock::system()),
            Err(StoreError::Log(_))
        ));
    }
}
