//! System acceptance suite: one test per headline guarantee, each printing a
//! single `acceptance k/9 <name>: pass|FAIL (<detail>)` line. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines for passing
//! tests too; the harness captures them otherwise.
//!
//! Timing-sensitive checks (a7) use interleaved repetitions and judge the
//! fastest sample per point, since scheduler stalls on shared machines are
//! one-sided additive noise.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use capshare::actors::scenario::{run_scenario, scenario_public_key, ScenarioConfig};
use capshare::actors::{
    assemble, run_decryption, run_initialization, run_sharing, seal_payload, HttpTransport,
    InProcessTransport, SpSpec, World,
};
use capshare::bits::BitString;
use capshare::csstore::{Clock, Store, StoreError};
use capshare::envelope;
use capshare::granules::{split_payload, GranuleIndices, GranuleSet};
use capshare::groups::{
    measure, Curve, G2Elem, NonZeroScalar, OpCounts, Scalar, G1_BYTES, G2_BYTES,
};
use capshare::par::run_batch;
use capshare::policy::{compile_lsss, parse_formula, AttributeSet, LsssPolicy};
use capshare::scheme::{
    access_dc, dec_dc, download_check, encapsulate, gen_seed, keygen_sp, pkeygen_pdo, setup,
    skeygen_pdo, task_issue, CapsuleComponent, CapsuleId, DataCapsule, DownloadParameter,
    IssuedTask, MasterPublicKey, SchemeError, SpSecretKey,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tempfile::TempDir;

const LAMBDA: u32 = 128;
const WIDTH: usize = 128;
const EXPIRES: u64 = 1 << 40;

fn verdict(index: usize, name: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {index}/9 {name}: {} ({detail})",
        if ok { "pass" } else { "FAIL" }
    );
    assert!(ok, "acceptance {index}/9 {name}: {detail}");
}

fn oc(g1_exp: u64, g2_exp: u64, gt_exp: u64, pairings: u64) -> OpCounts {
    OpCounts {
        g1_exp,
        g2_exp,
        gt_exp,
        pairings,
    }
}

// ---- randomized shapes ----

enum Node {
    Leaf(usize),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
}

fn random_node(rng: &mut ChaCha20Rng, leaves: usize, universe: usize) -> Node {
    if leaves == 1 {
        return Node::Leaf(rng.gen_range(0..universe));
    }
    let left = rng.gen_range(1..leaves);
    let l = Box::new(random_node(rng, left, universe));
    let r = Box::new(random_node(rng, leaves - left, universe));
    if rng.gen_bool(0.5) {
        Node::And(l, r)
    } else {
        Node::Or(l, r)
    }
}

fn node_text(node: &Node, names: &[String]) -> String {
    match node {
        Node::Leaf(i) => names[*i].clone(),
        Node::And(l, r) => format!("({} AND {})", node_text(l, names), node_text(r, names)),
        Node::Or(l, r) => format!("({} OR {})", node_text(l, names), node_text(r, names)),
    }
}

fn pick_satisfying(node: &Node, rng: &mut ChaCha20Rng, into: &mut BTreeSet<usize>) {
    match node {
        Node::Leaf(i) => {
            into.insert(*i);
        }
        Node::And(l, r) => {
            pick_satisfying(l, rng, into);
            pick_satisfying(r, rng, into);
        }
        Node::Or(l, r) => {
            if rng.gen_bool(0.5) {
                pick_satisfying(l, rng, into)
            } else {
                pick_satisfying(r, rng, into)
            }
        }
    }
}

/// A random protocol instance: universe of at most 32 attributes, a monotone
/// formula with at most 8 leaves (reuse permitted, so the bound can exceed 1),
/// a random satisfying attribute set, at most 8 granules, and a random
/// nonempty share of them.
struct Shape {
    universe: Vec<String>,
    formula: String,
    satisfying: AttributeSet,
    payload: Vec<u8>,
    n: usize,
    share: Vec<usize>,
}

impl Shape {
    fn random(rng: &mut ChaCha20Rng) -> Shape {
        let u = rng.gen_range(2..=32usize);
        let universe: Vec<String> = (0..u).map(|i| format!("attr-{i:02}")).collect();
        let leaves = rng.gen_range(1..=8usize);
        let node = random_node(rng, leaves, u);
        let formula = node_text(&node, &universe);

        let mut chosen = BTreeSet::new();
        pick_satisfying(&node, rng, &mut chosen);
        for i in 0..u {
            if !chosen.contains(&i) && rng.gen_bool(0.25) {
                chosen.insert(i);
            }
        }
        let satisfying: AttributeSet = chosen.iter().map(|&i| universe[i].clone()).collect();

        let n = rng.gen_range(1..=8usize);
        let lo = if n == 1 { 0 } else { (n - 1) * 16 - 8 + 1 };
        let mut payload = vec![0u8; rng.gen_range(lo..=n * 16 - 8)];
        rng.fill_bytes(&mut payload);

        let mut share: Vec<usize> = (1..=n).filter(|_| rng.gen_bool(0.5)).collect();
        if share.is_empty() {
            share.push(rng.gen_range(1..=n));
        }
        Shape {
            universe,
            formula,
            satisfying,
            payload,
            n,
            share,
        }
    }
}

/// Everything one shape produces when driven through the whole pipeline,
/// with the operation counts observed along the way (in pipeline order:
/// setup, keygen, encapsulate, task_issue, access, dec).
struct Driven {
    mpk: MasterPublicKey,
    sk: SpSecretKey,
    sk_pdo: NonZeroScalar,
    granules: GranuleSet,
    policy: LsssPolicy,
    id: CapsuleId,
    capsule: DataCapsule,
    issued: IssuedTask,
    param: DownloadParameter,
    dec_out: std::collections::BTreeMap<usize, BitString>,
    counts: [OpCounts; 6],
}

fn drive(shape: &Shape, rng: &mut ChaCha20Rng) -> Driven {
    let ((mpk, msk), c_setup) = measure(|| {
        setup(rng, LAMBDA, Curve::Bls12_381, WIDTH, shape.universe.clone()).expect("setup")
    });
    let (sk, c_kg) =
        measure(|| keygen_sp(rng, &mpk, &msk, "sp-shape", &shape.satisfying).expect("keygen"));
    let seed_pair = gen_seed(rng, &mpk, "owner-shape").expect("seed");
    let (pk_pdo, beta) = pkeygen_pdo(rng, &mpk, &seed_pair.psi).expect("enroll");
    let sk_pdo = skeygen_pdo(&seed_pair.gamma, &beta);

    let granules = split_payload(&shape.payload, WIDTH).expect("split");
    assert_eq!(granules.count(), shape.n, "payload sizing drives the count");
    let policy = compile_lsss(&parse_formula(&shape.formula).expect("parse")).expect("compile");

    let ((id, secret, capsule), c_enc) =
        measure(|| encapsulate(rng, &mpk, &sk_pdo, &granules, &policy).expect("encapsulate"));
    let shared = GranuleIndices::new(shape.share.iter().copied(), shape.n).expect("indices");
    let (issued, c_task) = measure(|| {
        task_issue(
            rng, &mpk, &sk_pdo, "sp-shape", &granules, &shared, &secret, EXPIRES,
        )
        .expect("task")
    });
    let (param, c_access) = measure(|| access_dc(&mpk, &sk, &issued.task, &pk_pdo));
    let (dec_out, c_dec) = measure(|| {
        dec_dc(&mpk, &sk, &id, &capsule, &issued.task, &param).expect("honest decryption")
    });
    Driven {
        mpk,
        sk,
        sk_pdo,
        granules,
        policy,
        id,
        capsule,
        issued,
        param,
        dec_out,
        counts: [c_setup, c_kg, c_enc, c_task, c_access, c_dec],
    }
}

// ---- 1: randomized end-to-end correctness ----

fn correctness_trial(seed: u64) -> bool {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let shape = Shape::random(&mut rng);
    let d = drive(&shape, &mut rng);
    d.dec_out.keys().copied().collect::<Vec<_>>() == shape.share
        && shape
            .share
            .iter()
            .all(|&i| d.dec_out[&i] == *d.granules.granule(i).unwrap())
}

#[test]
fn a1_randomized_trials_recover_exactly_the_selected_granules() {
    let started = Instant::now();
    let results = run_batch(200, |i| correctness_trial(0xAC01_0000 + i as u64));
    let elapsed = started.elapsed();
    let passed = results.iter().filter(|&&ok| ok).count();
    let ok = passed == 200 && elapsed < Duration::from_secs(60);
    verdict(
        1,
        "correctness",
        ok,
        &format!(
            "{passed}/200 randomized trials bit-exact in {:.1}s (budget 60s)",
            elapsed.as_secs_f64()
        ),
    );
}

// ---- 2: revocation by capsule update ----

#[test]
fn a2_update_starves_stale_tasks_and_admits_successors() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xAC02);
    let universe: Vec<String> = ["clinical", "billing", "audit"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (mpk, msk) = setup(&mut rng, LAMBDA, Curve::Bls12_381, WIDTH, universe).unwrap();
    let attrs: AttributeSet = ["clinical", "billing"].iter().copied().collect();
    let sk = keygen_sp(&mut rng, &mpk, &msk, "sp-main", &attrs).unwrap();
    let seed_pair = gen_seed(&mut rng, &mpk, "owner-2").unwrap();
    let (pk_pdo, beta) = pkeygen_pdo(&mut rng, &mpk, &seed_pair.psi).unwrap();
    let sk_pdo = skeygen_pdo(&seed_pair.gamma, &beta);
    let policy = compile_lsss(&parse_formula("clinical AND billing").unwrap()).unwrap();

    let mut stale_denied = 0;
    let mut successor_ok = 0;
    for t in 0..50u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(0xAC02_0100 + t);
        let mut payload = vec![0u8; 40];
        rng.fill_bytes(&mut payload);
        let granules = split_payload(&payload, WIDTH).unwrap();
        assert_eq!(granules.count(), 3);
        let all = GranuleIndices::all(3).unwrap();

        let (id0, ls0, dc0) = encapsulate(&mut rng, &mpk, &sk_pdo, &granules, &policy).unwrap();
        let store = Store::in_memory(mpk.clone(), Clock::manual(1));
        store.store_capsule(&id0, &dc0).unwrap();

        let issued1 =
            task_issue(&mut rng, &mpk, &sk_pdo, "sp-main", &granules, &all, &ls0, EXPIRES)
                .unwrap();
        store
            .register_tokens(ls0.dci(), &issued1.revocation, &issued1.token)
            .unwrap();
        let param1 = access_dc(&mpk, &sk, &issued1.task, &pk_pdo);

        // the task resolves once; resolution serves a snapshot and applies
        // the paired revocation, which is the task_issue+update cycle
        let (sid, sdc) = store.handle_download(issued1.task.dci(), &param1).unwrap();
        assert_eq!(sid, id0);
        let fresh = dec_dc(&mpk, &sk, &sid, &sdc, &issued1.task, &param1).unwrap();
        assert!((1..=3).all(|i| fresh[&i] == *granules.granule(i).unwrap()));

        // stale task: the gate refuses, and even a force-served current
        // capsule decrypts to values that match no true granule
        let gate_refused = matches!(
            store.handle_download(issued1.task.dci(), &param1),
            Err(StoreError::TokenConsumed)
        );
        let ls1 = issued1.next_secret;
        let (cid, cdc) = store.get_capsule(ls1.dci()).expect("advanced record");
        assert_ne!(cid, id0, "update must advance the capsule id");
        let stale = dec_dc(&mpk, &sk, &cid, &cdc, &issued1.task, &param1).unwrap();
        let all_garbled = (1..=3).all(|i| stale[&i] != *granules.granule(i).unwrap());
        if gate_refused && all_garbled {
            stale_denied += 1;
        }

        // a successor task from the advanced secret passes the gate and
        // recovers every granule
        let issued2 =
            task_issue(&mut rng, &mpk, &sk_pdo, "sp-main", &granules, &all, &ls1, EXPIRES)
                .unwrap();
        store
            .register_tokens(ls1.dci(), &issued2.revocation, &issued2.token)
            .unwrap();
        let param2 = access_dc(&mpk, &sk, &issued2.task, &pk_pdo);
        let (sid2, sdc2) = store.handle_download(issued2.task.dci(), &param2).unwrap();
        let next = dec_dc(&mpk, &sk, &sid2, &sdc2, &issued2.task, &param2).unwrap();
        if (1..=3).all(|i| next[&i] == *granules.granule(i).unwrap()) {
            successor_ok += 1;
        }
    }
    verdict(
        2,
        "revocation",
        stale_denied == 50 && successor_ok == 50,
        &format!(
            "{stale_denied}/50 stale tasks gate-refused and fully garbled, \
             {successor_ok}/50 successor tasks recovered"
        ),
    );
}

// ---- 3: collusion between a task holder and a key holder ----

#[test]
fn a3_collusion_between_task_and_key_holders_recovers_nothing() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xAC03);
    let universe: Vec<String> = ["pilot", "qa", "dev", "ops"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (mpk, msk) = setup(&mut rng, LAMBDA, Curve::Bls12_381, WIDTH, universe).unwrap();
    // type 1: holds the task but attributes outside the policy
    let outsider_attrs: AttributeSet = ["dev"].iter().copied().collect();
    let key_outsider = keygen_sp(&mut rng, &mpk, &msk, "sp-outsider", &outsider_attrs).unwrap();
    // type 2: satisfying attributes but no task
    let rival_attrs: AttributeSet = ["pilot", "qa"].iter().copied().collect();
    let key_rival = keygen_sp(&mut rng, &mpk, &msk, "sp-rival", &rival_attrs).unwrap();
    let seed_pair = gen_seed(&mut rng, &mpk, "owner-3").unwrap();
    let (pk_pdo, beta) = pkeygen_pdo(&mut rng, &mpk, &seed_pair.psi).unwrap();
    let sk_pdo = skeygen_pdo(&seed_pair.gamma, &beta);
    let policy = compile_lsss(&parse_formula("pilot AND qa").unwrap()).unwrap();

    let mut gates_held = 0;
    let mut verified_recoveries = 0;
    let mut exact_granules = 0;
    for t in 0..100u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(0xAC03_0100 + t);
        let mut payload = vec![0u8; 24];
        rng.fill_bytes(&mut payload);
        let granules = split_payload(&seal_payload(&payload), WIDTH).unwrap();
        let all = GranuleIndices::all(granules.count()).unwrap();
        let (id, ls, dc) = encapsulate(&mut rng, &mpk, &sk_pdo, &granules, &policy).unwrap();
        let issued = task_issue(
            &mut rng,
            &mpk,
            &sk_pdo,
            "sp-outsider",
            &granules,
            &all,
            &ls,
            EXPIRES,
        )
        .unwrap();

        // the outsider's own derivation passes the gate (it is the intended
        // recipient); the rival's derivation from a foreign task does not
        let param_outsider = access_dc(&mpk, &key_outsider, &issued.task, &pk_pdo);
        let param_rival = access_dc(&mpk, &key_rival, &issued.task, &pk_pdo);
        if download_check(&issued.token, &param_outsider, 10)
            && !download_check(&issued.token, &param_rival, 10)
        {
            gates_held += 1;
        }

        // collusion: the rival key decrypts with either parameter in hand
        for param in [&param_outsider, &param_rival] {
            let out = dec_dc(&mpk, &key_rival, &id, &dc, &issued.task, param).unwrap();
            exact_granules += out
                .iter()
                .filter(|(i, g)| *granules.granule(**i).unwrap() == **g)
                .count();
            if assemble(out).payload.is_some() {
                verified_recoveries += 1;
            }
        }
    }
    verdict(
        3,
        "collusion resistance",
        gates_held == 100 && verified_recoveries == 0 && exact_granules == 0,
        &format!(
            "{gates_held}/100 gates held, {verified_recoveries} checksum-verified recoveries, \
             {exact_granules} granules leaked across 200 colluding decryptions"
        ),
    );
}

// ---- 4: tamper evidence ----

#[test]
fn a4_every_single_element_tamper_is_detected() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xAC04);
    let universe: Vec<String> = ["alpha", "beta", "gamma"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (mpk, msk) = setup(&mut rng, LAMBDA, Curve::Bls12_381, WIDTH, universe).unwrap();
    let attrs: AttributeSet = ["alpha", "beta"].iter().copied().collect();
    let sk = keygen_sp(&mut rng, &mpk, &msk, "sp-4", &attrs).unwrap();
    let seed_pair = gen_seed(&mut rng, &mpk, "owner-4").unwrap();
    let (pk_pdo, beta) = pkeygen_pdo(&mut rng, &mpk, &seed_pair.psi).unwrap();
    let sk_pdo = skeygen_pdo(&seed_pair.gamma, &beta);
    let granules = split_payload(&[0xA5; 40], WIDTH).unwrap();
    let policy = compile_lsss(&parse_formula("alpha AND beta").unwrap()).unwrap();
    let (id, ls, capsule) = encapsulate(&mut rng, &mpk, &sk_pdo, &granules, &policy).unwrap();
    let all = GranuleIndices::all(granules.count()).unwrap();
    let issued =
        task_issue(&mut rng, &mpk, &sk_pdo, "sp-4", &granules, &all, &ls, EXPIRES).unwrap();
    let param = access_dc(&mpk, &sk, &issued.task, &pk_pdo);
    assert!(
        dec_dc(&mpk, &sk, &id, &capsule, &issued.task, &param).is_ok(),
        "untouched capsule must open"
    );

    // element-level substitutions: valid group elements and in-range bit
    // flips, the strongest tamper an attacker can hand the verifier
    let mut detected = 0;
    for t in 0..100usize {
        let bit = rng.next_u32() as usize;
        let outcome = if t % 6 == 5 {
            let forged = CapsuleId::from_elem(id.elem().mul(&G2Elem::generator()));
            dec_dc(&mpk, &sk, &forged, &capsule, &issued.task, &param)
        } else {
            let bad = capsule.corrupted(CapsuleComponent::ALL[t % 6], bit);
            dec_dc(&mpk, &sk, &id, &bad, &issued.task, &param)
        };
        if matches!(outcome, Err(SchemeError::TamperDetected)) {
            detected += 1;
        }
    }

    // byte-level flips in the serialized container are caught no later than
    // parse time; a flip that still parses must fail the integrity equation
    let text = envelope::write_capsule(&id, &capsule);
    let mut byte_flips_caught = 0;
    let payload_lines: Vec<usize> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| l.contains(" = \""))
        .map(|(i, _)| i)
        .collect();
    for _ in 0..10 {
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let li = payload_lines[rng.gen_range(0..payload_lines.len())];
        let mut bytes = lines[li].clone().into_bytes();
        let open = bytes.iter().position(|&b| b == b'"').unwrap() + 1;
        let close = bytes.len() - 1;
        let pos = rng.gen_range(open..close);
        bytes[pos] ^= 0x01; // stays ASCII, may leave the base64 alphabet
        lines[li] = String::from_utf8(bytes).unwrap();
        let mutated = lines.join("\n");
        let caught = match envelope::read_capsule(&mutated) {
            Err(_) => true,
            Ok((rid, rdc)) => matches!(
                dec_dc(&mpk, &sk, &rid, &rdc, &issued.task, &param),
                Err(SchemeError::TamperDetected)
            ),
        };
        if caught {
            byte_flips_caught += 1;
        }
    }
    verdict(
        4,
        "tamper resistance",
        detected == 100 && byte_flips_caught == 10,
        &format!(
            "{detected}/100 element substitutions detected, \
             {byte_flips_caught}/10 serialized bit flips rejected at parse or by the check"
        ),
    );
}

// ---- 5: download gate starves forged parameters ----

#[test]
fn a5_gate_serves_no_bytes_for_forged_parameters() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xAC05);
    let universe: Vec<String> = ["north", "south"].iter().map(|s| s.to_string()).collect();
    let (mpk, msk) = setup(&mut rng, LAMBDA, Curve::Bls12_381, WIDTH, universe).unwrap();
    let attrs: AttributeSet = ["north"].iter().copied().collect();
    let sk = keygen_sp(&mut rng, &mpk, &msk, "sp-5", &attrs).unwrap();
    let seed_pair = gen_seed(&mut rng, &mpk, "owner-5").unwrap();
    let (pk_pdo, beta) = pkeygen_pdo(&mut rng, &mpk, &seed_pair.psi).unwrap();
    let sk_pdo = skeygen_pdo(&seed_pair.gamma, &beta);
    let granules = split_payload(&[7u8; 56], WIDTH).unwrap();
    let policy = compile_lsss(&parse_formula("north").unwrap()).unwrap();
    let (id, ls, capsule) = encapsulate(&mut rng, &mpk, &sk_pdo, &granules, &policy).unwrap();
    let all = GranuleIndices::all(granules.count()).unwrap();
    let issued =
        task_issue(&mut rng, &mpk, &sk_pdo, "sp-5", &granules, &all, &ls, EXPIRES).unwrap();
    let param = access_dc(&mpk, &sk, &issued.task, &pk_pdo);

    let store = Arc::new(Store::in_memory(mpk.clone(), Clock::manual(1)));
    store.store_capsule(&id, &capsule).unwrap();
    store
        .register_tokens(ls.dci(), &issued.revocation, &issued.token)
        .unwrap();

    // a cheap deterministic stream of distinct valid target-group elements
    let step = mpk.group().gt_gen().pow(&Scalar::random(&mut rng));
    let mut next = step.mul(&step);
    let mut forged = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        forged.push(DownloadParameter(next.clone()));
        next = next.mul(&step);
    }
    let real = param.to_bytes();
    assert!(
        forged.iter().all(|f| f.to_bytes() != real),
        "forgeries must miss the real parameter"
    );

    let dci = issued.task.dci().clone();
    let outcomes = run_batch(forged.len(), |i| {
        match store.handle_download(&dci, &forged[i]) {
            Err(StoreError::TokenMismatch) => (0usize, true),
            Err(_) => (0, false),
            Ok((sid, sdc)) => (envelope::write_capsule(&sid, &sdc).len(), false),
        }
    });
    let bytes_served: usize = outcomes.iter().map(|(b, _)| b).sum();
    let mismatches = outcomes.iter().filter(|(_, m)| *m).count();

    let first = store.handle_download(&dci, &param);
    let served_real = matches!(&first, Ok((sid, _)) if *sid == id);
    let replay_rejected = matches!(
        store.handle_download(&dci, &param),
        Err(StoreError::TokenConsumed)
    );
    verdict(
        5,
        "download gate",
        bytes_served == 0 && mismatches == forged.len() && served_real && replay_rejected,
        &format!(
            "{mismatches}/10000 forged parameters rejected with {bytes_served} capsule bytes \
             served; genuine parameter served once, replay rejected"
        ),
    );
}

// ---- 6: exact operation counts ----

#[test]
fn a6_operation_counts_are_exact_across_random_shapes() {
    let mut mismatches: Vec<String> = Vec::new();
    for t in 0..20u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(0xAC06_0000 + t);
        let shape = Shape::random(&mut rng);
        let d = drive(&shape, &mut rng);
        let s = shape.satisfying.len() as u64;
        let n1 = d.policy.rows() as u64;
        let tau = d.policy.reuse_bound() as u64;
        let i_len = shape.share.len() as u64;
        let expected = [
            ("setup", oc(0, 1, 0, 0)),
            ("keygen_sp", oc(s + 3, 1, 0, 0)),
            ("encapsulate", oc(2 * n1 + 2, tau + 2, 0, 1)),
            ("task_issue", oc(i_len + 5, 1, 1, i_len + 2)),
            ("access_dc", oc(0, 0, 0, 3)),
            ("dec_dc", oc(1, 0, 0, tau + 4)),
        ];
        for (k, (name, want)) in expected.iter().enumerate() {
            if d.counts[k] != *want {
                mismatches.push(format!(
                    "shape {t} {name}: got {:?}, want {:?} (|S|={s}, n1={n1}, tau={tau}, |I|={i_len})",
                    d.counts[k], want
                ));
            }
        }
    }
    verdict(
        6,
        "operation counts",
        mismatches.is_empty(),
        &if mismatches.is_empty() {
            "6 operations x 20 random shapes, all exact: setup {e2:1}, keygen {e1:|S|+3,e2:1}, \
             enc {e1:2n1+2,e2:t+2,p:1}, task {e1:|I|+5,e2:1,et:1,p:|I|+2}, access {p:3}, \
             dec {e1:1,p:t+4}"
                .to_string()
        } else {
            mismatches.join("; ")
        },
    );
}

// ---- 7: cost shapes ----

fn fastest_seconds(jobs: &mut [Box<dyn FnMut()>], rounds: usize) -> Vec<f64> {
    for job in jobs.iter_mut() {
        job(); // untimed pass pages code and data in
    }
    let mut best = vec![f64::INFINITY; jobs.len()];
    for _ in 0..rounds {
        for (i, job) in jobs.iter_mut().enumerate() {
            let t = Instant::now();
            job();
            best[i] = best[i].min(t.elapsed().as_secs_f64());
        }
    }
    best
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// World sized by attribute count: key over all `s` attributes, a one-row
/// policy (tau = 1), and a single-granule capsule with an issued task.
fn attr_sized_world(s: usize, seed: u64) -> Driven {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let universe: Vec<String> = (0..s).map(|i| format!("attr-{i:03}")).collect();
    let shape = Shape {
        formula: universe[0].clone(),
        satisfying: universe.iter().map(String::as_str).collect(),
        universe,
        payload: vec![0xC3; 8],
        n: 1,
        share: vec![1],
    };
    drive(&shape, &mut rng)
}

#[test]
fn a7_dec_is_flat_enc_grows_with_rows_task_is_flat() {
    // Dec vs |S| at tau = 1: least-squares slope under 2% of the mean per step
    let sizes: Vec<usize> = (1..=10).map(|k| k * 10).collect();
    let mut jobs: Vec<Box<dyn FnMut()>> = sizes
        .iter()
        .map(|&s| {
            let d = attr_sized_world(s, 0xAC07_0000 + s as u64);
            Box::new(move || {
                std::hint::black_box(
                    dec_dc(&d.mpk, &d.sk, &d.id, &d.capsule, &d.issued.task, &d.param).unwrap(),
                );
            }) as Box<dyn FnMut()>
        })
        .collect();
    let ys = fastest_seconds(&mut jobs, 11);
    let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let dec_mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let dec_drift = ls_slope(&xs, &ys) * 10.0 / dec_mean;
    let dec_flat = dec_drift.abs() < 0.02;

    // Enc vs policy rows: increasing
    let rows = [2usize, 8, 14, 20];
    let mut rng = ChaCha20Rng::seed_from_u64(0xAC07_E000);
    let universe: Vec<String> = (0..20).map(|i| format!("attr-{i:03}")).collect();
    let (mpk, _msk) = setup(&mut rng, LAMBDA, Curve::Bls12_381, WIDTH, universe.clone()).unwrap();
    let seed_pair = gen_seed(&mut rng, &mpk, "owner-7").unwrap();
    let (_pk, beta) = pkeygen_pdo(&mut rng, &mpk, &seed_pair.psi).unwrap();
    let sk_pdo = skeygen_pdo(&seed_pair.gamma, &beta);
    let granules = split_payload(&[1u8; 56], WIDTH).unwrap();
    let mut jobs: Vec<Box<dyn FnMut()>> = rows
        .iter()
        .map(|&k| {
            let chain = universe[..k].join(" AND ");
            let policy = compile_lsss(&parse_formula(&chain).unwrap()).unwrap();
            let mpk = mpk.clone();
            let sk_pdo = sk_pdo.clone();
            let granules = granules.clone();
            let mut rng = ChaCha20Rng::seed_from_u64(0xAC07_E100 + k as u64);
            Box::new(move || {
                std::hint::black_box(
                    encapsulate(&mut rng, &mpk, &sk_pdo, &granules, &policy).unwrap(),
                );
            }) as Box<dyn FnMut()>
        })
        .collect();
    let enc = fastest_seconds(&mut jobs, 11);
    let enc_xs: Vec<f64> = rows.iter().map(|&k| k as f64).collect();
    let enc_up = ls_slope(&enc_xs, &enc) > 0.0 && enc[enc.len() - 1] > enc[0] * 1.5;

    // task_issue with one granule: flat as |S| grows
    let task_sizes = [10usize, 40, 70, 100];
    let mut jobs: Vec<Box<dyn FnMut()>> = task_sizes
        .iter()
        .map(|&s| {
            let d = attr_sized_world(s, 0xAC07_7000 + s as u64);
            let mut rng = ChaCha20Rng::seed_from_u64(0xAC07_7100 + s as u64);
            let shared = GranuleIndices::all(1).unwrap();
            Box::new(move || {
                std::hint::black_box(
                    task_issue(
                        &mut rng,
                        &d.mpk,
                        &d.sk_pdo,
                        "sp-7",
                        &d.granules,
                        &shared,
                        &d.issued.next_secret,
                        EXPIRES,
                    )
                    .unwrap(),
                );
            }) as Box<dyn FnMut()>
        })
        .collect();
    let task = fastest_seconds(&mut jobs, 11);
    let task_xs: Vec<f64> = task_sizes.iter().map(|&s| s as f64).collect();
    let task_mean = task.iter().sum::<f64>() / task.len() as f64;
    let task_drift = ls_slope(&task_xs, &task) * 30.0 / task_mean;
    let task_flat = task_drift.abs() < 0.05;

    verdict(
        7,
        "cost shapes",
        dec_flat && enc_up && task_flat,
        &format!(
            "dec drift {:.2}% of mean per 10 attributes (limit 2%); enc {:.1}ms -> {:.1}ms \
             over 2 -> 20 rows; task drift {:.2}% per 30 attributes (limit 5%); absolute \
             times are hardware-specific by design",
            dec_drift * 100.0,
            enc[0] * 1e3,
            enc[enc.len() - 1] * 1e3,
            task_drift * 100.0
        ),
    );
}

// ---- 8: serialized capsule shape ----

#[test]
fn a8_capsule_element_counts_match_the_documented_layout() {
    let mut lines: Vec<String> = Vec::new();
    let mut ok = true;
    for t in 0..20u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(0xAC08_0000 + t);
        let shape = Shape::random(&mut rng);
        let d = drive(&shape, &mut rng);
        let n1 = d.policy.rows();
        let tau = d.policy.reuse_bound();

        let g1_elems = d.capsule.c4().len() + 1; // C4 rows plus V
        let g2_body = d.capsule.c3().len() + 1; // C3 shares plus C1
        let good = d.capsule.c4().len() == n1
            && d.capsule.c3().len() == tau
            && d.capsule.c2().bit_len() == WIDTH
            && d.capsule.v().to_bytes().len() == G1_BYTES
            && d.capsule.c1().to_bytes().len() == G2_BYTES
            && d.id.to_bytes().len() == G2_BYTES
            // one element moves class against the reference cell of
            // (n1+2) G1 + (tau+1) G2, but the total count is preserved:
            // the capsule id anchor lives in G2 here (see FORMATS.md)
            && g1_elems + g2_body + 1 == (n1 + 2) + (tau + 1);
        if !good {
            ok = false;
            lines.push(format!(
                "shape {t}: n1={n1} tau={tau} c4={} c3={} c2_bits={}",
                d.capsule.c4().len(),
                d.capsule.c3().len(),
                d.capsule.c2().bit_len()
            ));
        }

        let text = envelope::write_capsule(&d.id, &d.capsule);
        let (rid, rdc) = envelope::read_capsule(&text).expect("serialized capsule parses");
        if rid != d.id || rdc != d.capsule {
            ok = false;
            lines.push(format!("shape {t}: container round trip changed the capsule"));
        }
    }
    verdict(
        8,
        "storage shape",
        ok,
        &if ok {
            "20/20 capsules serialize as (n1+1) G1 + (tau+1) G2 + a G2 id anchor \
             + 128-bit body + policy text; totals match the (n1+2)/(tau+1) split with the \
             id anchor reclassified to G2, as documented in FORMATS.md"
                .to_string()
        } else {
            lines.join("; ")
        },
    );
}

// ---- 9: service equivalence over HTTP with persistence ----

struct ServeProc {
    child: Child,
    addr: String,
}

impl ServeProc {
    fn spawn(dir: &std::path::Path, public: &std::path::Path) -> ServeProc {
        let mut child = Command::new(env!("CARGO_BIN_EXE_capshare"))
            .arg("serve")
            .arg("--public")
            .arg(public)
            .arg("--data-dir")
            .arg(dir)
            .arg("--manual-clock")
            .arg("1")
            .arg("--allow-clock")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("serve binary spawns");
        let mut line = String::new();
        BufReader::new(child.stdout.take().expect("piped stdout"))
            .read_line(&mut line)
            .expect("serve announces its address");
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected serve banner: {line:?}"))
            .to_string();
        ServeProc { child, addr }
    }

    fn transport(&self) -> HttpTransport {
        HttpTransport::new(format!("http://{}", self.addr))
    }

    fn stop(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ServeProc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn equivalence_world(rng: &mut ChaCha20Rng) -> World {
    run_initialization(
        rng,
        LAMBDA,
        Curve::Bls12_381,
        WIDTH,
        ["field-a", "field-b", "decoy"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        &[SpSpec::new(
            "sp-9",
            ["field-a", "field-b"].iter().copied().collect(),
        )],
        &["owner-9"],
    )
    .expect("initialization")
}

#[test]
fn a9_http_service_matches_in_process_results_across_a_restart() {
    // identical seeded scenario runs, direct calls vs the serve binary
    let config = ScenarioConfig::default();
    let mpk = scenario_public_key(&config).expect("scenario key");
    let store = Arc::new(Store::in_memory(mpk.clone(), Clock::manual(1)));
    let report_mem =
        run_scenario(&config, &InProcessTransport::new(store)).expect("in-process scenario");

    let dir = TempDir::new().expect("workdir");
    let public = dir.path().join("public.env");
    std::fs::write(&public, envelope::write_public_key(&mpk)).unwrap();
    let serve = ServeProc::spawn(&dir.path().join("data"), &public);
    let report_http = run_scenario(&config, &serve.transport()).expect("scenario over http");
    serve.stop();
    let reports_match = report_mem.render() == report_http.render();
    let defended = report_mem.all_defended() && report_http.all_defended();

    // the sharing phase lands on disk; decryption succeeds against a fresh
    // process on the same directory and matches the in-process run
    let payload = b"capsule rides out a service restart".to_vec();
    let mut rng_init = ChaCha20Rng::seed_from_u64(0xAC09_0001);
    let mut rng_share = ChaCha20Rng::seed_from_u64(0xAC09_0002);
    let mut world = equivalence_world(&mut rng_init);
    let dir2 = TempDir::new().expect("workdir");
    let public2 = dir2.path().join("public.env");
    std::fs::write(&public2, envelope::write_public_key(world.mpk())).unwrap();

    let serve_a = ServeProc::spawn(&dir2.path().join("data"), &public2);
    let handle = run_sharing(
        &mut rng_share,
        &mut world,
        &serve_a.transport(),
        "owner-9",
        None,
        &payload,
        "field-a AND field-b",
        "sp-9",
        None,
        EXPIRES,
    )
    .expect("sharing over http");
    serve_a.stop(); // kill between sharing and decryption

    let serve_b = ServeProc::spawn(&dir2.path().join("data"), &public2);
    let rec_http =
        run_decryption(&world, &serve_b.transport(), &handle).expect("decryption after restart");
    serve_b.stop();

    // the same seeded flow entirely in process
    let mut rng_init = ChaCha20Rng::seed_from_u64(0xAC09_0001);
    let mut rng_share = ChaCha20Rng::seed_from_u64(0xAC09_0002);
    let mut world_mem = equivalence_world(&mut rng_init);
    let store_mem = Arc::new(Store::in_memory(world_mem.mpk().clone(), Clock::manual(1)));
    let transport_mem = InProcessTransport::new(store_mem);
    let handle_mem = run_sharing(
        &mut rng_share,
        &mut world_mem,
        &transport_mem,
        "owner-9",
        None,
        &payload,
        "field-a AND field-b",
        "sp-9",
        None,
        EXPIRES,
    )
    .expect("sharing in process");
    let rec_mem =
        run_decryption(&world_mem, &transport_mem, &handle_mem).expect("decryption in process");

    let restart_ok = rec_http.payload.as_deref() == Some(payload.as_slice())
        && rec_http.payload == rec_mem.payload
        && rec_http.granules == rec_mem.granules;
    verdict(
        9,
        "service equivalence",
        reports_match && defended && restart_ok,
        &format!(
            "scenario reports byte-identical over http ({} attacks, all defended); \
             payload recovered across a kill-and-restart equals the in-process result",
            report_mem.attacks.len()
        ),
    );
}
