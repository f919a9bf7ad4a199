//! Declarative scenario runner: builds a seeded world around one policy,
//! walks the happy path, then scripts the threat-model attacks against the
//! live store. Reports are plain text and fully deterministic for a given
//! seed, so two runs over different transports can be compared line by line.
//!
//! Attack scripts call the real scheme operations; nothing is mocked. Every
//! script is expected to end in a defense: a gate rejection, a policy
//! failure, a tamper signal, or a checksum-failing garbage decryption.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{
    checksum, open_payload, run_decryption, run_initialization, run_sharing, ActorError,
    CapsuleTransport, ShareHandle, SpSpec, World,
};
use crate::bits::BitString;
use crate::csstore::StoreError;
use crate::groups::{Curve, GtElem, Scalar};
use crate::policy::{parse_formula, AttributeSet};
use crate::scheme::{
    access_dc, dec_dc, setup, CapsuleComponent, DownloadParameter, MasterPublicKey, SchemeError,
    Task, TaskShare,
};

pub const SCENARIO_EPOCH: u64 = 1_700_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Type1,
    Type2,
    Type3,
    Collusion,
    Tamper,
    EdosFlood,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::Type1,
        AttackKind::Type2,
        AttackKind::Type3,
        AttackKind::Collusion,
        AttackKind::Tamper,
        AttackKind::EdosFlood,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::Type1 => "type1",
            AttackKind::Type2 => "type2",
            AttackKind::Type3 => "type3",
            AttackKind::Collusion => "collusion",
            AttackKind::Tamper => "tamper",
            AttackKind::EdosFlood => "edos_flood",
        }
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        AttackKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown attack kind `{s}`"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Total attribute count; the policy's attributes are padded with decoys
    /// up to this size (at least one decoy is always present).
    pub universe_size: usize,
    pub granule_bits: usize,
    pub policy: String,
    pub payload_bytes: usize,
    /// Granules shared on the happy path; `None` shares all of them.
    pub indices: Option<Vec<usize>>,
    /// Token lifetime in seconds past the scenario epoch.
    pub ttl: u64,
    pub attacks: Vec<AttackKind>,
    pub flood_requests: usize,
    pub flood_threads: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 7,
            universe_size: 6,
            granule_bits: 128,
            policy: "analytics AND (clinical OR research)".into(),
            payload_bytes: 96,
            indices: None,
            ttl: 3600,
            attacks: AttackKind::ALL.to_vec(),
            flood_requests: 2000,
            flood_threads: 4,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub defended: bool,
    pub detail: String,
}

/// Everything a scenario run produced. `render()` is deterministic given the
/// seed, which is what the in-process/HTTP equivalence check compares.
#[derive(Debug, PartialEq, Eq)]
pub struct ScenarioReport {
    pub config_line: String,
    pub recovered_payload: Option<Vec<u8>>,
    pub recovered_granules: Vec<(usize, BitString)>,
    pub replay_code: String,
    pub attacks: Vec<AttackOutcome>,
}

impl ScenarioReport {
    pub fn all_defended(&self) -> bool {
        self.attacks.iter().all(|a| a.defended)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.config_line);
        out.push('\n');
        match &self.recovered_payload {
            Some(p) => out.push_str(&format!(
                "phase decryption: recovered {} bytes, checksum ok (fnv {})\n",
                p.len(),
                hex::encode(checksum(p))
            )),
            None => {
                out.push_str("phase decryption: recovered granule subset\n");
                for (w, g) in &self.recovered_granules {
                    out.push_str(&format!("  granule {w}: fnv {}\n", hex::encode(checksum(g.as_bytes()))));
                }
            }
        }
        out.push_str(&format!("phase replay: rejected ({})\n", self.replay_code));
        for a in &self.attacks {
            out.push_str(&format!(
                "attack {}: {} ({})\n",
                a.kind,
                if a.defended { "defended" } else { "BREACHED" },
                a.detail
            ));
        }
        out.push_str(if self.all_defended() {
            "verdict: all attacks defended\n"
        } else {
            "verdict: BREACH\n"
        });
        out
    }
}

/// Stable code for an actor-level failure, mirroring the store's HTTP codes.
fn failure_code(err: &ActorError) -> String {
    match err {
        ActorError::Store(e) => e.code().to_string(),
        ActorError::Scheme(SchemeError::PolicyNotSatisfied) => "policy-not-satisfied".into(),
        ActorError::Scheme(SchemeError::TamperDetected) => "tamper-detected".into(),
        other => format!("other: {other}"),
    }
}

/// The fixed cast a scenario world is built around.
struct Cast {
    /// Satisfying attributes and the happy-path task.
    main: &'static str,
    /// Satisfying attributes, never granted a task.
    rival: &'static str,
    /// Decoy attributes only.
    outsider: &'static str,
    owner: &'static str,
}

const CAST: Cast = Cast {
    main: "sp-main",
    rival: "sp-rival",
    outsider: "sp-outsider",
    owner: "owner",
};

fn scenario_universe(config: &ScenarioConfig) -> Result<Vec<String>, ActorError> {
    let formula = parse_formula(&config.policy)?;
    let leaves: BTreeSet<String> = formula.leaves().iter().map(|s| s.to_string()).collect();
    let decoy_count = config.universe_size.saturating_sub(leaves.len()).max(1);
    let decoys = (1..=decoy_count).map(|i| format!("zz-decoy-{i}"));
    Ok(leaves.into_iter().chain(decoys).collect())
}

fn build_world(rng: &mut ChaCha20Rng, config: &ScenarioConfig) -> Result<World, ActorError> {
    let universe = scenario_universe(config)?;
    let formula = parse_formula(&config.policy)?;
    let leaves: BTreeSet<&str> = formula.leaves().into_iter().collect();
    let satisfying: AttributeSet = leaves.iter().copied().collect();
    let decoy_attrs: AttributeSet = universe
        .iter()
        .filter(|a| !leaves.contains(a.as_str()))
        .cloned()
        .collect();
    run_initialization(
        rng,
        128,
        Curve::Bls12_381,
        config.granule_bits,
        universe,
        &[
            SpSpec::new(CAST.main, satisfying.clone()),
            SpSpec::new(CAST.rival, satisfying),
            SpSpec::new(CAST.outsider, decoy_attrs),
        ],
        &[CAST.owner],
    )
}

/// The public key the configured scenario will run under, derived without
/// building the full world. A store for `run_scenario` needs this up front.
pub fn scenario_public_key(config: &ScenarioConfig) -> Result<MasterPublicKey, ActorError> {
    let universe = scenario_universe(config)?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let (mpk, _) = setup(&mut rng, 128, Curve::Bls12_381, config.granule_bits, universe)?;
    Ok(mpk)
}

/// Runs the configured scenario against `transport`: initialization, one
/// sharing/decryption cycle, a replay probe, then each listed attack.
pub fn run_scenario(
    config: &ScenarioConfig,
    transport: &dyn CapsuleTransport,
) -> Result<ScenarioReport, ActorError> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    // a manual store clock pins expiry semantics; a system clock just means
    // the run is not replay-deterministic across machines
    let _ = transport.set_clock(SCENARIO_EPOCH);
    let expires_at = SCENARIO_EPOCH + config.ttl;

    let mut world = build_world(&mut rng, config)?;
    let mut payload = vec![0u8; config.payload_bytes];
    rng.fill_bytes(&mut payload);

    let share = run_sharing(
        &mut rng,
        &mut world,
        transport,
        CAST.owner,
        None,
        &payload,
        &config.policy,
        CAST.main,
        config.indices.as_deref(),
        expires_at,
    )?;
    let recovery = run_decryption(&world, transport, &share)?;
    let replay_code = match run_decryption(&world, transport, &share) {
        Ok(_) => "accepted".to_string(),
        Err(e) => failure_code(&e),
    };

    let mut attacks = Vec::new();
    for kind in &config.attacks {
        attacks.push(run_attack(
            &mut rng, &mut world, transport, *kind, config, expires_at,
        )?);
    }

    Ok(ScenarioReport {
        config_line: format!(
            "scenario seed={} universe={} policy=\"{}\" payload={}B granule_bits={}",
            config.seed, config.universe_size, config.policy, config.payload_bytes,
            config.granule_bits
        ),
        recovered_payload: recovery.payload,
        recovered_granules: recovery.granules.into_iter().collect(),
        replay_code,
        attacks,
    })
}

/// Executes one attack script on an already-initialized world. Each script
/// publishes its own capsule so attacks cannot mask one another.
pub fn run_attack(
    rng: &mut ChaCha20Rng,
    world: &mut World,
    transport: &dyn CapsuleTransport,
    kind: AttackKind,
    config: &ScenarioConfig,
    expires_at: u64,
) -> Result<AttackOutcome, ActorError> {
    let mut payload = vec![0u8; config.payload_bytes.max(8)];
    rng.fill_bytes(&mut payload);
    let outcome = match kind {
        AttackKind::Type1 => attack_type1(rng, world, transport, &payload, config, expires_at)?,
        AttackKind::Type2 => attack_type2(rng, world, transport, &payload, config, expires_at)?,
        AttackKind::Type3 => attack_type3(rng, world, transport, &payload, config, expires_at)?,
        AttackKind::Collusion => {
            attack_collusion(rng, world, transport, &payload, config, expires_at)?
        }
        AttackKind::Tamper => attack_tamper(rng, world, transport, &payload, config, expires_at)?,
        AttackKind::EdosFlood => {
            attack_edos_flood(rng, world, transport, &payload, config, expires_at)?
        }
    };
    Ok(outcome)
}

fn publish_and_share(
    rng: &mut ChaCha20Rng,
    world: &mut World,
    transport: &dyn CapsuleTransport,
    payload: &[u8],
    config: &ScenarioConfig,
    sp: &str,
    expires_at: u64,
) -> Result<ShareHandle, ActorError> {
    run_sharing(
        rng,
        world,
        transport,
        CAST.owner,
        None,
        payload,
        &config.policy,
        sp,
        None,
        expires_at,
    )
}

/// Type 1: holds a genuine task but attributes that cannot satisfy the
/// policy. The identity-bound gate admits them; the decryption must not.
fn attack_type1(
    rng: &mut ChaCha20Rng,
    world: &mut World,
    transport: &dyn CapsuleTransport,
    payload: &[u8],
    config: &ScenarioConfig,
    expires_at: u64,
) -> Result<AttackOutcome, ActorError> {
    let share = publish_and_share(rng, world, transport, payload, config, CAST.outsider, expires_at)?;
    let outcome = run_decryption(world, transport, &share);
    let (defended, detail) = match outcome {
        Err(ref e) if matches!(e, ActorError::Scheme(SchemeError::PolicyNotSatisfied)) => (
            true,
            "gate passed on identity, decryption refused: policy-not-satisfied".to_string(),
        ),
        Err(e) => (false, format!("unexpected failure: {}", failure_code(&e))),
        Ok(_) => (false, "unsatisfying key recovered granules".to_string()),
    };
    Ok(AttackOutcome {
        kind: AttackKind::Type1,
        defended,
        detail,
    })
}

/// Deterministic stream of distinct, valid target-group elements that is
/// cheap to extend: successive multiples of a random power of the generator.
struct ParamForge {
    next: GtElem,
    step: GtElem,
}

impl ParamForge {
    fn new(rng: &mut ChaCha20Rng, gen: &GtElem) -> ParamForge {
        let step = gen.pow(&Scalar::random(rng));
        ParamForge {
            next: step.mul(&step),
            step,
        }
    }

    fn forge(&mut self) -> DownloadParameter {
        let out = self.next;
        self.next = self.next.mul(&self.step);
        DownloadParameter(out)
    }
}

/// Type 2: satisfying attributes but no task. Without the task material the
/// expected download parameter cannot be formed, so every guess dies at the
/// gate.
fn attack_type2(
    rng: &mut ChaCha20Rng,
    world: &mut World,
    transport: &dyn CapsuleTransport,
    payload: &[u8],
    config: &ScenarioConfig,
    expires_at: u64,
) -> Result<AttackOutcome, ActorError> {
    // a genuine token for someone else is outstanding; the attacker still
    // has to match its parameter bytes blind
    let share = publish_and_share(rng, world, transport, payload, config, CAST.main, expires_at)?;
    let dci = world
        .sp(CAST.main)?
        .inbox_entry(share.slot)
        .expect("fresh share")
        .task
        .dci()
        .clone();

    let mut forge = ParamForge::new(rng, world.mpk().group().gt_gen());
    let attempts = 32;
    let mut mismatches = 0;
    for _ in 0..attempts {
        match transport.download(&dci, &forge.forge()) {
            Err(StoreError::TokenMismatch) => mismatches += 1,
            Err(_) => {}
            Ok(_) => {
                return Ok(AttackOutcome {
                    kind: AttackKind::Type2,
                    defended: false,
                    detail: "forged parameter passed the gate".into(),
                })
            }
        }
    }
    Ok(AttackOutcome {
        kind: AttackKind::Type2,
        defended: mismatches == attempts,
        detail: format!("{mismatches}/{attempts} forged parameters rejected, token-mismatch"),
    })
}

/// Type 3: neither a task nor satisfying attributes. The gate rejects every
/// forged parameter, and even a force-served capsule body with a fabricated
/// task fails on attributes.
fn attack_type3(
    rng: &mut ChaCha20Rng,
    world: &mut World,
    transport: &dyn CapsuleTransport,
    payload: &[u8],
    config: &ScenarioConfig,
    expires_at: u64,
) -> Result<AttackOutcome, ActorError> {
    let share = publish_and_share(rng, world, transport, payload, config, CAST.main, expires_at)?;
    let dci = world
        .sp(CAST.main)?
        .inbox_entry(share.slot)
        .expect("fresh share")
        .task
        .dci()
        .clone();

    let mut forge = ParamForge::new(rng, world.mpk().group().gt_gen());
    let attempts = 32;
    let mut mismatches = 0;
    for _ in 0..attempts {
        if matches!(
            transport.download(&dci, &forge.forge()),
            Err(StoreError::TokenMismatch)
        ) {
            mismatches += 1;
        }
    }

    // even handed the raw body (operator leak), a fabricated task gets the
    // outsider nowhere: their key fails the policy before any unmasking
    let (sid, sdc) = transport.fetch_capsule(&dci)?;
    let width = world.mpk().mask_bits() / 8;
    let fake_shares = std::iter::once((
        1usize,
        TaskShare {
            mask: BitString::random(rng, width),
            blind: *world.mpk().group().gt_gen(),
        },
    ))
    .collect();
    let fake_task = Task::from_parts(
        CAST.outsider.to_string(),
        sid.clone(),
        crate::groups::G1Elem::generator(),
        *world.mpk().group().gt_gen(),
        fake_shares,
    );
    let outsider = world.sp(CAST.outsider)?;
    let param = forge.forge();
    let dec = dec_dc(world.mpk(), outsider.key(), &sid, &sdc, &fake_task, &param);
    let dec_refused = matches!(dec, Err(SchemeError::PolicyNotSatisfied));

    Ok(AttackOutcome {
        kind: AttackKind::Type3,
        defended: mismatches == attempts && dec_refused,
        detail: format!(
            "{mismatches}/{attempts} forged parameters rejected; fabricated task refused: policy-not-satisfied"
        ),
    })
}

/// Collusion: the type-1 outsider contributes their genuine task, the
/// type-2 rival contributes a satisfying key. The gate never admits the
/// rival's parameter, and the outsider's downloaded body decrypts to
/// checksum-failing garbage under the rival's key.
fn attack_collusion(
    rng: &mut ChaCha20Rng,
    world: &mut World,
    transport: &dyn CapsuleTransport,
    payload: &[u8],
    config: &ScenarioConfig,
    expires_at: u64,
) -> Result<AttackOutcome, ActorError> {
    let share = publish_and_share(rng, world, transport, payload, config, CAST.outsider, expires_at)?;
    let truth = world
        .pdo(CAST.owner)?
        .granules(share.capsule)
        .expect("owner keeps granules")
        .clone();
    let mpk = world.mpk().clone();
    let outsider = world.sp(CAST.outsider)?;
    let rival = world.sp(CAST.rival)?;
    let pk_pdo = *world.pdo(CAST.owner)?.pk();
    let task = &outsider.inbox_entry(share.slot).expect("fresh share").task;

    // leg 1: rival computes the parameter from the outsider's task with
    // their own key; identity binding makes it miss the registered token
    let rival_param = access_dc(&mpk, rival.key(), task, &pk_pdo);
    let gate_rejected = matches!(
        transport.download(task.dci(), &rival_param),
        Err(StoreError::TokenMismatch)
    );

    // leg 2: outsider passes the gate with their own parameter and hands the
    // body to the rival, whose satisfying key runs the full decryption
    let outsider_param = access_dc(&mpk, outsider.key(), task, &pk_pdo);
    let (sid, sdc) = transport.download(task.dci(), &outsider_param)?;
    let recovered = dec_dc(&mpk, rival.key(), &sid, &sdc, task, &outsider_param)?;
    let n = recovered.len();
    let garbage = recovered
        .iter()
        .all(|(w, g)| truth.granule(*w).map(|t| t != g).unwrap_or(true));
    // garbage usually cannot even be reassembled (its length framing is
    // noise); any failure on the way to a verified payload is a defense
    let checksum_failed = crate::granules::GranuleSet::from_granules(
        recovered.into_values().collect(),
    )
    .ok()
    .and_then(|set| crate::granules::join_payload(&set).ok())
    .and_then(|bytes| open_payload(&bytes))
    .is_none();

    Ok(AttackOutcome {
        kind: AttackKind::Collusion,
        defended: gate_rejected && garbage && checksum_failed,
        detail: format!(
            "rival parameter token-mismatch; forced decryption produced {n}/{n} wrong granules, checksum failed"
        ),
    })
}

/// Tamper: the store (or the path from it) mutates C2 before delivery. The
/// integrity check inside decryption must notice.
fn attack_tamper(
    rng: &mut ChaCha20Rng,
    world: &mut World,
    transport: &dyn CapsuleTransport,
    payload: &[u8],
    config: &ScenarioConfig,
    expires_at: u64,
) -> Result<AttackOutcome, ActorError> {
    let share = publish_and_share(rng, world, transport, payload, config, CAST.main, expires_at)?;
    let mpk = world.mpk().clone();
    let main = world.sp(CAST.main)?;
    let pk_pdo = *world.pdo(CAST.owner)?.pk();
    let task = &main.inbox_entry(share.slot).expect("fresh share").task;
    let param = access_dc(&mpk, main.key(), task, &pk_pdo);
    let (sid, sdc) = transport.download(task.dci(), &param)?;

    let bit = (rng.next_u32() as usize) % sdc.c2().bit_len();
    let mutated = sdc.corrupted(CapsuleComponent::C2, bit);
    let dec = dec_dc(&mpk, main.key(), &sid, &mutated, task, &param);
    let defended = matches!(dec, Err(SchemeError::TamperDetected));
    Ok(AttackOutcome {
        kind: AttackKind::Tamper,
        defended,
        detail: if defended {
            "mutated C2 detected: tamper-detected".into()
        } else {
            "mutation went unnoticed".into()
        },
    })
}

/// EDoS flood: many concurrent wrong-parameter downloads must be turned away
/// without serving a byte, while the one legitimate request still succeeds
/// exactly once.
fn attack_edos_flood(
    rng: &mut ChaCha20Rng,
    world: &mut World,
    transport: &dyn CapsuleTransport,
    payload: &[u8],
    config: &ScenarioConfig,
    expires_at: u64,
) -> Result<AttackOutcome, ActorError> {
    let share = publish_and_share(rng, world, transport, payload, config, CAST.main, expires_at)?;
    let mpk = world.mpk().clone();
    let main = world.sp(CAST.main)?;
    let pk_pdo = *world.pdo(CAST.owner)?.pk();
    let task = &main.inbox_entry(share.slot).expect("fresh share").task;
    let dci = task.dci().clone();

    let total = config.flood_requests.max(1);
    let threads = config.flood_threads.clamp(1, 64);
    let mut forge = ParamForge::new(rng, mpk.group().gt_gen());
    let params: Vec<DownloadParameter> = (0..total).map(|_| forge.forge()).collect();

    let served_bytes = AtomicU64::new(0);
    let mismatches = AtomicU64::new(0);
    std::thread::scope(|scope| {
        for chunk in params.chunks(total.div_ceil(threads)) {
            let dci = &dci;
            let served_bytes = &served_bytes;
            let mismatches = &mismatches;
            scope.spawn(move || {
                for p in chunk {
                    match transport.download(dci, p) {
                        Err(StoreError::TokenMismatch) => {
                            mismatches.fetch_add(1, Ordering::Relaxed);
                        }
                        Ok((_, dc)) => {
                            served_bytes
                                .fetch_add(dc.c2().as_bytes().len() as u64, Ordering::Relaxed);
                        }
                        Err(_) => {}
                    }
                }
            });
        }
    });
    let served = served_bytes.load(Ordering::Relaxed);
    let rejected = mismatches.load(Ordering::Relaxed);

    // the legitimate consumer is unharmed, exactly once
    let param = access_dc(&mpk, main.key(), task, &pk_pdo);
    let legit = transport.download(&dci, &param);
    let legit_ok = legit.is_ok();
    let replay_code = match transport.download(&dci, &param) {
        Ok(_) => "accepted".to_string(),
        Err(e) => e.code().to_string(),
    };

    Ok(AttackOutcome {
        kind: AttackKind::EdosFlood,
        defended: served == 0
            && rejected == total as u64
            && legit_ok
            && replay_code == "token-consumed",
        detail: format!(
            "{rejected}/{total} rejected, {served} capsule bytes served; legitimate download ok; replay {replay_code}"
        ),
    })
}
