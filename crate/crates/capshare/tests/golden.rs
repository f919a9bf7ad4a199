//! Golden container files: byte-for-byte pins of every envelope kind, so an
//! accidental change to field order, base64 flavor, or header layout fails
//! loudly. After a deliberate format change, regenerate with
//! `CAPSHARE_BLESS=1 cargo test -p capshare --test golden` and review the
//! diff like any other code change.

use std::path::PathBuf;

use capshare::envelope;
use capshare::granules::{split_payload, GranuleIndices};
use capshare::groups::Curve;
use capshare::policy::{compile_lsss, parse_formula, AttributeSet};
use capshare::scheme::{
    access_dc, dec_dc, encapsulate, gen_seed, keygen_sp, pkeygen_pdo, setup, skeygen_pdo,
    task_issue,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// One deterministic pipeline pass producing every container kind.
fn fixtures() -> Vec<(&'static str, String)> {
    let mut rng = ChaCha20Rng::seed_from_u64(0x60_1D);
    let universe: Vec<String> = ["billing", "audit", "ops"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (mpk, msk) = setup(&mut rng, 128, Curve::Bls12_381, 128, universe).unwrap();
    let attrs: AttributeSet = ["billing", "audit"].iter().copied().collect();
    let sk = keygen_sp(&mut rng, &mpk, &msk, "sp-golden", &attrs).unwrap();
    let seed_pair = gen_seed(&mut rng, &mpk, "owner-golden").unwrap();
    let (pk_pdo, beta) = pkeygen_pdo(&mut rng, &mpk, &seed_pair.psi).unwrap();
    let sk_pdo = skeygen_pdo(&seed_pair.gamma, &beta);

    let payload: Vec<u8> = (0..40u8).collect();
    let granules = split_payload(&payload, 128).unwrap();
    let policy = compile_lsss(&parse_formula("billing AND (audit OR ops)").unwrap()).unwrap();
    let (id, secret, capsule) = encapsulate(&mut rng, &mpk, &sk_pdo, &granules, &policy).unwrap();
    let shared = GranuleIndices::new([1usize, 3], granules.count()).unwrap();
    let issued = task_issue(
        &mut rng, &mpk, &sk_pdo, "sp-golden", &granules, &shared, &secret, 4_000_000_000,
    )
    .unwrap();
    let param = access_dc(&mpk, &sk, &issued.task, &pk_pdo);
    let opened = dec_dc(&mpk, &sk, &id, &capsule, &issued.task, &param).unwrap();

    vec![
        ("public-key", envelope::write_public_key(&mpk)),
        ("master-secret", envelope::write_master_secret(&msk)),
        ("sp-key", envelope::write_sp_key(&sk)),
        ("seed", envelope::write_seed("owner-golden", &seed_pair)),
        ("owner-enroll", envelope::write_owner_enroll(&pk_pdo, &beta)),
        ("owner-pub", envelope::write_owner_pub("owner-golden", &pk_pdo)),
        (
            "owner-key",
            envelope::write_owner_key("owner-golden", &pk_pdo, &sk_pdo),
        ),
        ("capsule", envelope::write_capsule(&id, &capsule)),
        ("local-secret", envelope::write_local_secret(&secret)),
        ("task", envelope::write_task(&issued.task)),
        ("revocation", envelope::write_revocation(&issued.revocation)),
        (
            "download-token",
            envelope::write_download_token(&issued.token),
        ),
        (
            "token-pair",
            envelope::write_token_pair(&issued.revocation, &issued.token),
        ),
        (
            "download-parameter",
            envelope::write_download_parameter(&param),
        ),
        ("granules", envelope::write_granules(&opened)),
        ("granule-set", envelope::write_granule_set(&granules)),
    ]
}

#[test]
fn every_container_kind_matches_its_golden_file() {
    let dir = golden_dir();
    let bless = std::env::var_os("CAPSHARE_BLESS").is_some();
    if bless {
        std::fs::create_dir_all(&dir).unwrap();
    }
    for (name, text) in fixtures() {
        let path = dir.join(format!("{name}.env"));
        if bless {
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|e| {
            panic!("missing golden file {}: {e}; bless with CAPSHARE_BLESS=1", path.display())
        });
        assert_eq!(
            want, text,
            "container `{name}` drifted from its golden file; if the change is deliberate, \
             re-bless and review the diff"
        );
    }
}

#[test]
fn golden_files_parse_with_their_readers() {
    let dir = golden_dir();
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(format!("{name}.env")))
            .unwrap_or_else(|e| panic!("missing golden file {name}: {e}"))
    };
    let mpk = envelope::read_public_key(&read("public-key")).unwrap();
    envelope::read_master_secret(&read("master-secret")).unwrap();
    let sk = envelope::read_sp_key(&read("sp-key")).unwrap();
    assert_eq!(sk.attrs().len(), 2);
    let (seed_id, _) = envelope::read_seed(&read("seed")).unwrap();
    assert_eq!(seed_id, "owner-golden");
    envelope::read_owner_enroll(&read("owner-enroll")).unwrap();
    envelope::read_owner_pub(&read("owner-pub")).unwrap();
    envelope::read_owner_key(&read("owner-key")).unwrap();
    let (id, capsule) = envelope::read_capsule(&read("capsule")).unwrap();
    assert_eq!(capsule.c2().bit_len(), mpk.mask_bits());
    let secret = envelope::read_local_secret(&read("local-secret")).unwrap();
    assert_eq!(secret.dci(), &id);
    let task = envelope::read_task(&read("task")).unwrap();
    assert_eq!(task.sp_id(), "sp-golden");
    envelope::read_revocation(&read("revocation")).unwrap();
    envelope::read_download_token(&read("download-token")).unwrap();
    envelope::read_token_pair(&read("token-pair")).unwrap();
    envelope::read_download_parameter(&read("download-parameter")).unwrap();
    let shared = envelope::read_granules(&read("granules")).unwrap();
    assert_eq!(shared.keys().copied().collect::<Vec<_>>(), vec![1, 3]);
    let full = envelope::read_granules(&read("granule-set")).unwrap();
    assert_eq!(full.len(), 3);
}
