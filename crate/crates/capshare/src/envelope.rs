//! Canonical file containers for every artifact that crosses a trust
//! boundary: TOML with a format marker, a kind tag, and base64 payload
//! fields. Encoding is deterministic (struct field order, sorted key maps),
//! so equal objects produce byte-equal files; see FORMATS.md at the repo root
//! for the field tables.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::granules::GranuleSet;
use crate::groups::{group_setup, Curve, G1Elem, G2Elem, GroupError, GtElem, HashSuite, NonZeroScalar, Scalar};
use crate::policy::{compile_lsss, parse_formula, PolicyError};
use crate::scheme::{
    CapsuleId, DataCapsule, DownloadParameter, DownloadToken, LocalSecret, MasterPublicKey,
    MasterSecretKey, RevocationToken, SchemeError, SeedPair, SpSecretKey, Task, TaskShare,
};

pub const FORMAT: &str = "capshare.v1";

#[derive(Debug, thiserror::Error)]
pub enum EnvelopeError {
    #[error("not a {FORMAT} file (format marker `{0}`)")]
    WrongFormat(String),
    #[error("expected kind `{expected}`, found `{got}`")]
    WrongKind { expected: &'static str, got: String },
    #[error("toml: {0}")]
    Toml(String),
    #[error("field `{field}`: invalid base64")]
    Base64 { field: &'static str },
    #[error("field `{field}`: {source}")]
    BadElement {
        field: &'static str,
        source: GroupError,
    },
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("payload: {0}")]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    kind: String,
    payload: T,
}

fn encode<T: Serialize>(kind: &str, payload: &T) -> String {
    let env = Envelope {
        format: FORMAT.to_string(),
        kind: kind.to_string(),
        payload,
    };
    toml::to_string(&env).expect("envelope serialization cannot fail")
}

fn decode<T: DeserializeOwned>(expected: &'static str, text: &str) -> Result<T, EnvelopeError> {
    // check the header before interpreting the payload, so a mismatched kind
    // reports as such instead of as missing fields
    let env: Envelope<toml::Value> =
        toml::from_str(text).map_err(|e| EnvelopeError::Toml(e.to_string()))?;
    if env.format != FORMAT {
        return Err(EnvelopeError::WrongFormat(env.format));
    }
    if env.kind != expected {
        return Err(EnvelopeError::WrongKind {
            expected,
            got: env.kind,
        });
    }
    env.payload
        .try_into()
        .map_err(|e: toml::de::Error| EnvelopeError::Toml(e.to_string()))
}

pub(crate) fn b64e(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

pub(crate) fn b64d(field: &'static str, text: &str) -> Result<Vec<u8>, EnvelopeError> {
    B64.decode(text).map_err(|_| EnvelopeError::Base64 { field })
}

fn g1(field: &'static str, text: &str) -> Result<G1Elem, EnvelopeError> {
    G1Elem::from_bytes(&b64d(field, text)?)
        .map_err(|source| EnvelopeError::BadElement { field, source })
}

fn g2(field: &'static str, text: &str) -> Result<G2Elem, EnvelopeError> {
    G2Elem::from_bytes(&b64d(field, text)?)
        .map_err(|source| EnvelopeError::BadElement { field, source })
}

fn gt(field: &'static str, text: &str) -> Result<GtElem, EnvelopeError> {
    GtElem::from_bytes(&b64d(field, text)?)
        .map_err(|source| EnvelopeError::BadElement { field, source })
}

fn scalar(field: &'static str, text: &str) -> Result<Scalar, EnvelopeError> {
    Scalar::from_bytes(&b64d(field, text)?)
        .map_err(|source| EnvelopeError::BadElement { field, source })
}

fn nz_scalar(field: &'static str, text: &str) -> Result<NonZeroScalar, EnvelopeError> {
    NonZeroScalar::from_bytes(&b64d(field, text)?)
        .map_err(|source| EnvelopeError::BadElement { field, source })
}

// ---- public system key ----

#[derive(Serialize, Deserialize)]
struct PublicKeyDto {
    curve: String,
    lambda: u32,
    granule_bits: usize,
    g2_alpha: String,
    universe: Vec<String>,
}

pub fn write_public_key(mpk: &MasterPublicKey) -> String {
    encode(
        "public-key",
        &PublicKeyDto {
            curve: mpk.group().curve().name().to_string(),
            lambda: mpk.group().lambda(),
            granule_bits: mpk.mask_bits(),
            g2_alpha: b64e(&mpk.g2_alpha().to_bytes()),
            universe: mpk.universe().to_vec(),
        },
    )
}

pub fn read_public_key(text: &str) -> Result<MasterPublicKey, EnvelopeError> {
    let dto: PublicKeyDto = decode("public-key", text)?;
    let curve: Curve = dto.curve.parse()?;
    let group = group_setup(dto.lambda, curve)?;
    let hashes = HashSuite::new(dto.granule_bits)?;
    let g2_alpha = g2("g2_alpha", &dto.g2_alpha)?;
    if g2_alpha.is_identity() {
        return Err(EnvelopeError::BadElement {
            field: "g2_alpha",
            source: GroupError::InvalidPoint("g2 identity"),
        });
    }
    Ok(MasterPublicKey::from_parts(
        group, hashes, g2_alpha, dto.universe,
    )?)
}

// ---- authority secret ----

#[derive(Serialize, Deserialize)]
struct MasterSecretDto {
    alpha: String,
}

pub fn write_master_secret(msk: &MasterSecretKey) -> String {
    encode(
        "master-secret",
        &MasterSecretDto {
            alpha: b64e(&msk.alpha().to_bytes()),
        },
    )
}

pub fn read_master_secret(text: &str) -> Result<MasterSecretKey, EnvelopeError> {
    let dto: MasterSecretDto = decode("master-secret", text)?;
    Ok(MasterSecretKey::from_alpha(nz_scalar("alpha", &dto.alpha)?))
}

// ---- consumer key ----

#[derive(Serialize, Deserialize)]
struct AttrKeyDto {
    name: String,
    key: String,
}

#[derive(Serialize, Deserialize)]
struct SpKeyDto {
    id: String,
    sk2: String,
    sk3: String,
    sk4: String,
    attrs: Vec<AttrKeyDto>,
}

pub fn write_sp_key(sk: &SpSecretKey) -> String {
    let attrs = sk
        .attrs()
        .iter()
        .map(|name| AttrKeyDto {
            name: name.to_string(),
            key: b64e(&sk.attr_key(name).expect("key per attribute").to_bytes()),
        })
        .collect();
    encode(
        "sp-key",
        &SpKeyDto {
            id: sk.id().to_string(),
            sk2: b64e(&sk.sk2().to_bytes()),
            sk3: b64e(&sk.sk3().to_bytes()),
            sk4: b64e(&sk.sk4().to_bytes()),
            attrs,
        },
    )
}

pub fn read_sp_key(text: &str) -> Result<SpSecretKey, EnvelopeError> {
    let dto: SpKeyDto = decode("sp-key", text)?;
    let mut sk1 = std::collections::BTreeMap::new();
    for a in &dto.attrs {
        sk1.insert(a.name.clone(), g1("attrs.key", &a.key)?);
    }
    Ok(SpSecretKey::from_parts(
        dto.id,
        sk1,
        g1("sk2", &dto.sk2)?,
        g2("sk3", &dto.sk3)?,
        g1("sk4", &dto.sk4)?,
    ))
}

// ---- owner enrollment ----

#[derive(Serialize, Deserialize)]
struct SeedDto {
    id: String,
    gamma: String,
    psi: String,
}

pub fn write_seed(id: &str, seed: &SeedPair) -> String {
    encode(
        "seed",
        &SeedDto {
            id: id.to_string(),
            gamma: b64e(&seed.gamma.to_bytes()),
            psi: b64e(&seed.psi.to_bytes()),
        },
    )
}

pub fn read_seed(text: &str) -> Result<(String, SeedPair), EnvelopeError> {
    let dto: SeedDto = decode("seed", text)?;
    Ok((
        dto.id,
        SeedPair {
            gamma: nz_scalar("gamma", &dto.gamma)?,
            psi: g2("psi", &dto.psi)?,
        },
    ))
}

#[derive(Serialize, Deserialize)]
struct OwnerEnrollDto {
    pk: String,
    beta: String,
}

/// Authority's reply in the enrollment handshake: blinded public key plus the
/// blinding exponent the owner folds into their secret.
pub fn write_owner_enroll(pk: &G2Elem, beta: &NonZeroScalar) -> String {
    encode(
        "owner-enroll",
        &OwnerEnrollDto {
            pk: b64e(&pk.to_bytes()),
            beta: b64e(&beta.to_bytes()),
        },
    )
}

pub fn read_owner_enroll(text: &str) -> Result<(G2Elem, NonZeroScalar), EnvelopeError> {
    let dto: OwnerEnrollDto = decode("owner-enroll", text)?;
    Ok((g2("pk", &dto.pk)?, nz_scalar("beta", &dto.beta)?))
}

#[derive(Serialize, Deserialize)]
struct OwnerPubDto {
    id: String,
    pk: String,
}

/// Publishable owner identity: id and public key, nothing secret.
pub fn write_owner_pub(id: &str, pk: &G2Elem) -> String {
    encode(
        "owner-pub",
        &OwnerPubDto {
            id: id.to_string(),
            pk: b64e(&pk.to_bytes()),
        },
    )
}

pub fn read_owner_pub(text: &str) -> Result<(String, G2Elem), EnvelopeError> {
    let dto: OwnerPubDto = decode("owner-pub", text)?;
    Ok((dto.id, g2("pk", &dto.pk)?))
}

#[derive(Serialize, Deserialize)]
struct OwnerKeyDto {
    id: String,
    pk: String,
    sk: String,
}

pub fn write_owner_key(id: &str, pk: &G2Elem, sk: &NonZeroScalar) -> String {
    encode(
        "owner-key",
        &OwnerKeyDto {
            id: id.to_string(),
            pk: b64e(&pk.to_bytes()),
            sk: b64e(&sk.to_bytes()),
        },
    )
}

pub fn read_owner_key(text: &str) -> Result<(String, G2Elem, NonZeroScalar), EnvelopeError> {
    let dto: OwnerKeyDto = decode("owner-key", text)?;
    Ok((
        dto.id,
        g2("pk", &dto.pk)?,
        nz_scalar("sk", &dto.sk)?,
    ))
}

// ---- capsule ----

#[derive(Serialize, Deserialize)]
struct CapsuleDto {
    dci: String,
    policy: String,
    c1: String,
    c2: String,
    c3: Vec<String>,
    c4: Vec<String>,
    v: String,
}

pub fn write_capsule(id: &CapsuleId, dc: &DataCapsule) -> String {
    encode(
        "capsule",
        &CapsuleDto {
            dci: b64e(&id.to_bytes()),
            policy: dc.policy().source(),
            c1: b64e(&dc.c1().to_bytes()),
            c2: b64e(dc.c2().as_bytes()),
            c3: dc.c3().iter().map(|p| b64e(&p.to_bytes())).collect(),
            c4: dc.c4().iter().map(|p| b64e(&p.to_bytes())).collect(),
            v: b64e(&dc.v().to_bytes()),
        },
    )
}

pub fn read_capsule(text: &str) -> Result<(CapsuleId, DataCapsule), EnvelopeError> {
    let dto: CapsuleDto = decode("capsule", text)?;
    let policy = compile_lsss(&parse_formula(&dto.policy)?)?;
    let c3 = dto
        .c3
        .iter()
        .map(|t| g2("c3", t))
        .collect::<Result<Vec<_>, _>>()?;
    let c4 = dto
        .c4
        .iter()
        .map(|t| g1("c4", t))
        .collect::<Result<Vec<_>, _>>()?;
    let dc = DataCapsule::from_parts(
        policy,
        g2("c1", &dto.c1)?,
        BitString::from_bytes(b64d("c2", &dto.c2)?),
        c3,
        c4,
        g1("v", &dto.v)?,
    )?;
    let id = CapsuleId::from_bytes(&b64d("dci", &dto.dci)?)?;
    Ok((id, dc))
}

// ---- owner local secret ----

#[derive(Serialize, Deserialize)]
struct LocalSecretDto {
    dci: String,
    mask_acc: String,
    exp_acc: String,
    abe_secret: String,
}

pub fn write_local_secret(ls: &LocalSecret) -> String {
    encode(
        "local-secret",
        &LocalSecretDto {
            dci: b64e(&ls.dci().to_bytes()),
            mask_acc: b64e(ls.mask_acc().as_bytes()),
            exp_acc: b64e(&ls.exp_acc().to_bytes()),
            abe_secret: b64e(&ls.abe_secret().to_bytes()),
        },
    )
}

pub fn read_local_secret(text: &str) -> Result<LocalSecret, EnvelopeError> {
    let dto: LocalSecretDto = decode("local-secret", text)?;
    Ok(LocalSecret::from_parts(
        CapsuleId::from_bytes(&b64d("dci", &dto.dci)?)?,
        BitString::from_bytes(b64d("mask_acc", &dto.mask_acc)?),
        scalar("exp_acc", &dto.exp_acc)?,
        nz_scalar("abe_secret", &dto.abe_secret)?,
    ))
}

// ---- task ----

#[derive(Serialize, Deserialize)]
struct TaskShareDto {
    index: usize,
    mask: String,
    blind: String,
}

#[derive(Serialize, Deserialize)]
struct TaskDto {
    sp_id: String,
    dci: String,
    t1: String,
    t2: String,
    shares: Vec<TaskShareDto>,
}

pub fn write_task(task: &Task) -> String {
    encode(
        "task",
        &TaskDto {
            sp_id: task.sp_id().to_string(),
            dci: b64e(&task.dci().to_bytes()),
            t1: b64e(&task.t1().to_bytes()),
            t2: b64e(&task.t2().to_bytes()),
            shares: task
                .shares()
                .iter()
                .map(|(&index, s)| TaskShareDto {
                    index,
                    mask: b64e(s.mask.as_bytes()),
                    blind: b64e(&s.blind.to_bytes()),
                })
                .collect(),
        },
    )
}

pub fn read_task(text: &str) -> Result<Task, EnvelopeError> {
    let dto: TaskDto = decode("task", text)?;
    let mut shares = std::collections::BTreeMap::new();
    for s in &dto.shares {
        shares.insert(
            s.index,
            TaskShare {
                mask: BitString::from_bytes(b64d("shares.mask", &s.mask)?),
                blind: gt("shares.blind", &s.blind)?,
            },
        );
    }
    Ok(Task::from_parts(
        dto.sp_id,
        CapsuleId::from_bytes(&b64d("dci", &dto.dci)?)?,
        g1("t1", &dto.t1)?,
        gt("t2", &dto.t2)?,
        shares,
    ))
}

// ---- store-side tokens ----

#[derive(Serialize, Deserialize)]
struct RevocationDto {
    r1: String,
    r2: String,
    r3: String,
}

pub fn write_revocation(r: &RevocationToken) -> String {
    encode(
        "revocation",
        &RevocationDto {
            r1: b64e(&r.r1.to_bytes()),
            r2: b64e(&r.r2.to_bytes()),
            r3: b64e(r.r3.as_bytes()),
        },
    )
}

pub fn read_revocation(text: &str) -> Result<RevocationToken, EnvelopeError> {
    let dto: RevocationDto = decode("revocation", text)?;
    Ok(RevocationToken {
        r1: g1("r1", &dto.r1)?,
        r2: CapsuleId::from_bytes(&b64d("r2", &dto.r2)?)?,
        r3: BitString::from_bytes(b64d("r3", &dto.r3)?),
    })
}

#[derive(Serialize, Deserialize)]
struct DownloadTokenDto {
    d1: String,
    expires_at: u64,
}

pub fn write_download_token(t: &DownloadToken) -> String {
    encode(
        "download-token",
        &DownloadTokenDto {
            d1: b64e(&t.d1.to_bytes()),
            expires_at: t.expires_at,
        },
    )
}

pub fn read_download_token(text: &str) -> Result<DownloadToken, EnvelopeError> {
    let dto: DownloadTokenDto = decode("download-token", text)?;
    Ok(DownloadToken {
        d1: gt("d1", &dto.d1)?,
        expires_at: dto.expires_at,
    })
}

/// Paired store-side tokens as registered over the wire.
#[derive(Serialize, Deserialize)]
struct TokenPairDto {
    r1: String,
    r2: String,
    r3: String,
    d1: String,
    expires_at: u64,
}

pub fn write_token_pair(r: &RevocationToken, d: &DownloadToken) -> String {
    encode(
        "token-pair",
        &TokenPairDto {
            r1: b64e(&r.r1.to_bytes()),
            r2: b64e(&r.r2.to_bytes()),
            r3: b64e(r.r3.as_bytes()),
            d1: b64e(&d.d1.to_bytes()),
            expires_at: d.expires_at,
        },
    )
}

pub fn read_token_pair(text: &str) -> Result<(RevocationToken, DownloadToken), EnvelopeError> {
    let dto: TokenPairDto = decode("token-pair", text)?;
    Ok((
        RevocationToken {
            r1: g1("r1", &dto.r1)?,
            r2: CapsuleId::from_bytes(&b64d("r2", &dto.r2)?)?,
            r3: BitString::from_bytes(b64d("r3", &dto.r3)?),
        },
        DownloadToken {
            d1: gt("d1", &dto.d1)?,
            expires_at: dto.expires_at,
        },
    ))
}

// ---- download parameter ----

#[derive(Serialize, Deserialize)]
struct DownloadParameterDto {
    p: String,
}

pub fn write_download_parameter(p: &DownloadParameter) -> String {
    encode(
        "download-parameter",
        &DownloadParameterDto {
            p: b64e(&p.to_bytes()),
        },
    )
}

pub fn read_download_parameter(text: &str) -> Result<DownloadParameter, EnvelopeError> {
    let dto: DownloadParameterDto = decode("download-parameter", text)?;
    Ok(DownloadParameter::from_bytes(&b64d("p", &dto.p)?)?)
}

// ---- recovered granules ----

#[derive(Serialize, Deserialize)]
struct GranulesDto {
    width_bits: usize,
    indices: Vec<usize>,
    granules: Vec<String>,
}

/// Indexed granules, e.g. a partial decryption result.
pub fn write_granules(entries: &std::collections::BTreeMap<usize, BitString>) -> String {
    let width_bits = entries
        .values()
        .next()
        .map(|g| g.bit_len())
        .unwrap_or(0);
    encode(
        "granules",
        &GranulesDto {
            width_bits,
            indices: entries.keys().copied().collect(),
            granules: entries.values().map(|g| b64e(g.as_bytes())).collect(),
        },
    )
}

pub fn read_granules(
    text: &str,
) -> Result<std::collections::BTreeMap<usize, BitString>, EnvelopeError> {
    let dto: GranulesDto = decode("granules", text)?;
    if dto.indices.len() != dto.granules.len() {
        return Err(EnvelopeError::Toml(
            "indices and granules arrays differ in length".into(),
        ));
    }
    let mut out = std::collections::BTreeMap::new();
    for (i, g) in dto.indices.iter().zip(&dto.granules) {
        out.insert(*i, BitString::from_bytes(b64d("granules", g)?));
    }
    Ok(out)
}

/// Convenience wrapper for serializing a full [`GranuleSet`].
pub fn write_granule_set(set: &GranuleSet) -> String {
    let map = (1..=set.count())
        .map(|i| (i, set.granule(i).unwrap().clone()))
        .collect();
    write_granules(&map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::granules::{split_payload, GranuleIndices};
    use crate::policy::AttributeSet;
    use crate::scheme::{
        access_dc, encapsulate, gen_seed, keygen_sp, pkeygen_pdo, setup, skeygen_pdo, task_issue,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        mpk: MasterPublicKey,
        msk: MasterSecretKey,
        sk: SpSecretKey,
        id: CapsuleId,
        ls: LocalSecret,
        dc: DataCapsule,
        task: Task,
        revocation: RevocationToken,
        token: DownloadToken,
        param: DownloadParameter,
        seed: SeedPair,
        pk_pdo: G2Elem,
        sk_pdo: NonZeroScalar,
        beta: NonZeroScalar,
    }

    fn fixture(seed_val: u64) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(seed_val);
        let universe: Vec<String> = ["dept:radiology", "role:clinician", "region:eu"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (mpk, msk) = setup(&mut rng, 128, Curve::Bls12_381, 128, universe).unwrap();
        let seed = gen_seed(&mut rng, &mpk, "owner-7").unwrap();
        let (pk_pdo, beta) = pkeygen_pdo(&mut rng, &mpk, &seed.psi).unwrap();
        let sk_pdo = skeygen_pdo(&seed.gamma, &beta);
        let attrs: AttributeSet = ["dept:radiology", "role:clinician"]
            .iter()
            .copied()
            .collect();
        let sk = keygen_sp(&mut rng, &mpk, &msk, "sp-9", &attrs).unwrap();
        let granules = split_payload(&[0xAB; 45], 128).unwrap();
        let policy = compile_lsss(
            &parse_formula("dept:radiology AND (role:clinician OR region:eu)").unwrap(),
        )
        .unwrap();
        let (id, ls, dc) = encapsulate(&mut rng, &mpk, &sk_pdo, &granules, &policy).unwrap();
        let shared = GranuleIndices::new([1, 2], granules.count()).unwrap();
        let issued = task_issue(
            &mut rng, &mpk, &sk_pdo, "sp-9", &granules, &shared, &ls, 4102444800,
        )
        .unwrap();
        let param = access_dc(&mpk, &sk, &issued.task, &pk_pdo);
        Fixture {
            mpk,
            msk,
            sk,
            id,
            ls,
            dc,
            task: issued.task,
            revocation: issued.revocation,
            token: issued.token,
            param,
            seed,
            pk_pdo,
            sk_pdo,
            beta,
        }
    }

    #[test]
    fn every_container_round_trips() {
        let f = fixture(0xC0FFEE);

        let mpk2 = read_public_key(&write_public_key(&f.mpk)).unwrap();
        assert_eq!(mpk2, f.mpk);

        let msk2 = read_master_secret(&write_master_secret(&f.msk)).unwrap();
        assert_eq!(msk2, f.msk);

        let sk2 = read_sp_key(&write_sp_key(&f.sk)).unwrap();
        assert_eq!(sk2, f.sk);

        let (sid, seed2) = read_seed(&write_seed("owner-7", &f.seed)).unwrap();
        assert_eq!((sid.as_str(), seed2), ("owner-7", f.seed.clone()));

        let (pk2, beta2) =
            read_owner_enroll(&write_owner_enroll(&f.pk_pdo, &f.beta)).unwrap();
        assert_eq!((pk2, beta2), (f.pk_pdo, f.beta));

        let (oid, opk, osk) =
            read_owner_key(&write_owner_key("owner-7", &f.pk_pdo, &f.sk_pdo)).unwrap();
        assert_eq!((oid.as_str(), opk, osk), ("owner-7", f.pk_pdo, f.sk_pdo));

        let (pid, ppk) = read_owner_pub(&write_owner_pub("owner-7", &f.pk_pdo)).unwrap();
        assert_eq!((pid.as_str(), ppk), ("owner-7", f.pk_pdo));

        let (id2, dc2) = read_capsule(&write_capsule(&f.id, &f.dc)).unwrap();
        assert_eq!((&id2, &dc2), (&f.id, &f.dc));

        let ls2 = read_local_secret(&write_local_secret(&f.ls)).unwrap();
        assert_eq!(ls2, f.ls);

        let task2 = read_task(&write_task(&f.task)).unwrap();
        assert_eq!(task2, f.task);

        let r2 = read_revocation(&write_revocation(&f.revocation)).unwrap();
        assert_eq!(r2, f.revocation);

        let t2 = read_download_token(&write_download_token(&f.token)).unwrap();
        assert_eq!(t2, f.token);

        let (rp, tp) = read_token_pair(&write_token_pair(&f.revocation, &f.token)).unwrap();
        assert_eq!((rp, tp), (f.revocation.clone(), f.token.clone()));

        let p2 = read_download_parameter(&write_download_parameter(&f.param)).unwrap();
        assert_eq!(p2, f.param);
    }

    #[test]
    fn encoding_is_deterministic() {
        let a = fixture(7);
        let b = fixture(7);
        assert_eq!(write_capsule(&a.id, &a.dc), write_capsule(&b.id, &b.dc));
        assert_eq!(write_task(&a.task), write_task(&b.task));
        assert_eq!(write_public_key(&a.mpk), write_public_key(&b.mpk));
    }

    #[test]
    fn wrong_kind_and_format_are_rejected() {
        let f = fixture(9);
        let text = write_capsule(&f.id, &f.dc);
        assert!(matches!(
            read_task(&text),
            Err(EnvelopeError::WrongKind { .. })
        ));
        let bad_format = text.replace("capshare.v1", "capshare.v9");
        assert!(matches!(
            read_capsule(&bad_format),
            Err(EnvelopeError::WrongFormat(_))
        ));
        assert!(read_capsule("not toml at all [").is_err());
    }

    #[test]
    fn corrupt_elements_are_rejected() {
        let f = fixture(11);
        let text = write_capsule(&f.id, &f.dc);
        // damage the v point's base64 into a different, invalid encoding
        let v_b64 = b64e(&f.dc.v().to_bytes());
        let mut bytes = f.dc.v().to_bytes();
        bytes[5] ^= 0xFF;
        let corrupted = text.replace(&v_b64, &b64e(&bytes));
        assert!(matches!(
            read_capsule(&corrupted),
            Err(EnvelopeError::BadElement { field: "v", .. })
        ));
        // invalid base64 on a scalar field
        let ls_text = write_local_secret(&f.ls);
        let broken = ls_text.replace(
            &b64e(&f.ls.exp_acc().to_bytes()),
            "!!!not-base64!!!",
        );
        assert!(read_local_secret(&broken).is_err());
    }

    #[test]
    fn granule_envelope_round_trips() {
        let set = split_payload(&[1, 2, 3, 4, 5, 6], 128).unwrap();
        let text = write_granule_set(&set);
        let map = read_granules(&text).unwrap();
        assert_eq!(map.len(), set.count());
        for (i, g) in &map {
            assert_eq!(g, set.granule(*i).unwrap());
        }
    }
}
