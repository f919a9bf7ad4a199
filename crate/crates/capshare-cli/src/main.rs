//! `capshare`: command line front end for the capsule sharing library.
//!
//! One subcommand per lifecycle operation, plus `serve` (the capsule store
//! over HTTP), `scenario` (the scripted world runner), and `bench` (the
//! cost-model harness). Every artifact crossing a command boundary is a TOML
//! container; see FORMATS.md in the repository root.
//!
//! Exit codes, so scripts can branch on failure class:
//!   0 success, 2 usage, 3 file I/O, 4 malformed input, 5 policy not
//!   satisfied, 6 tamper detected, 7 other scheme error, 8 store/gate
//!   rejection, 9 scenario breach, 10 bench assertion failure.

mod bench;

use clap::{Args, Parser, Subcommand};
use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use capshare::actors::scenario::{run_scenario, scenario_public_key, ScenarioConfig};
use capshare::actors::{
    assemble, seal_payload, ActorError, CapsuleTransport, HttpTransport, InProcessTransport,
};
use capshare::csstore::http::{encode_dci, serve};
use capshare::csstore::{Clock, Store, StoreError};
use capshare::envelope::{self, EnvelopeError};
use capshare::granules::{split_payload, GranuleIndices};
use capshare::groups::Curve;
use capshare::policy::{compile_lsss, parse_formula, AttributeSet, PolicyError};
use capshare::scheme::{
    access_dc, dec_dc, download_check, encapsulate, gen_seed, keygen_sp, pkeygen_pdo, setup,
    skeygen_pdo, task_issue, update_dc, SchemeError,
};

#[derive(Parser)]
#[command(name = "capshare", version, about = "Task-driven data capsule sharing")]
struct Cli {
    /// Fixed RNG seed for reproducible outputs (tests; default is OS randomness)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create system parameters: public key and master secret
    Setup(SetupArgs),
    /// Issue an attribute key to a service provider
    KeygenSp(KeygenSpArgs),
    /// Authority side of owner enrollment: mint the owner's seed
    GenSeed(GenSeedArgs),
    /// Authority side of owner enrollment: blind the commitment into a public key
    PkeygenPdo(PkeygenPdoArgs),
    /// Owner side of enrollment: fold the blinding into the final secret key
    SkeygenPdo(SkeygenPdoArgs),
    /// Split, mask, and encrypt a payload into a capsule
    Encapsulate(EncapsulateArgs),
    /// Issue a single-use task plus its store-side token pair
    TaskIssue(TaskIssueArgs),
    /// Compute the download parameter for a received task
    Access(AccessArgs),
    /// Pass the download gate: against token files or a running store
    Download(DownloadArgs),
    /// Open a downloaded capsule with a task
    Decrypt(DecryptArgs),
    /// Apply a revocation token to a capsule
    Update(UpdateArgs),
    /// Serve a capsule store over HTTP with an on-disk event log
    Serve(ServeArgs),
    /// Run the scripted scenario suite (happy path plus attack scripts)
    Scenario(ScenarioArgs),
    /// Measure operation costs and assert the counter formulas
    Bench(bench::BenchArgs),
}

#[derive(Args)]
struct SetupArgs {
    #[arg(long, default_value_t = 128)]
    lambda: u32,
    #[arg(long, default_value = "bls12-381")]
    curve: String,
    /// Granule width in bits (multiple of 8)
    #[arg(long, default_value_t = 128)]
    granule_bits: usize,
    /// Comma-separated attribute universe
    #[arg(long, value_delimiter = ',')]
    universe: Vec<String>,
    /// File with one attribute per line (alternative to --universe)
    #[arg(long)]
    universe_file: Option<PathBuf>,
    #[arg(long)]
    out_public: PathBuf,
    #[arg(long)]
    out_master: PathBuf,
}

#[derive(Args)]
struct KeygenSpArgs {
    #[arg(long)]
    public: PathBuf,
    #[arg(long)]
    master: PathBuf,
    #[arg(long)]
    id: String,
    #[arg(long, value_delimiter = ',')]
    attrs: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenSeedArgs {
    #[arg(long)]
    public: PathBuf,
    #[arg(long)]
    id: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PkeygenPdoArgs {
    #[arg(long)]
    public: PathBuf,
    /// Seed container from gen-seed
    #[arg(long)]
    seed_file: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SkeygenPdoArgs {
    /// Seed container from gen-seed
    #[arg(long)]
    seed_file: PathBuf,
    /// Enrollment container from pkeygen-pdo
    #[arg(long)]
    enroll: PathBuf,
    /// Owner key (includes the secret)
    #[arg(long)]
    out: PathBuf,
    /// Publishable owner identity (id and public key only)
    #[arg(long)]
    out_pub: Option<PathBuf>,
}

#[derive(Args)]
struct EncapsulateArgs {
    #[arg(long)]
    public: PathBuf,
    /// Owner key file
    #[arg(long)]
    owner: PathBuf,
    /// Raw payload bytes (checksum-wrapped before splitting)
    #[arg(long)]
    data: PathBuf,
    /// Access policy formula, e.g. "billing AND (audit OR ops)"
    #[arg(long)]
    policy: String,
    #[arg(long)]
    out_capsule: PathBuf,
    /// Owner-local capsule secret (needed by task-issue)
    #[arg(long)]
    out_secret: PathBuf,
    /// Also upload the capsule to a running store
    #[arg(long)]
    store_url: Option<String>,
}

#[derive(Args)]
struct TaskIssueArgs {
    #[arg(long)]
    public: PathBuf,
    #[arg(long)]
    owner: PathBuf,
    /// Current owner-local capsule secret; advanced by this command
    #[arg(long)]
    secret: PathBuf,
    /// The same payload bytes given to encapsulate
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    sp_id: String,
    /// 1-based granule indices to share (default: all)
    #[arg(long, value_delimiter = ',')]
    indices: Option<Vec<usize>>,
    /// Token expiry, seconds since epoch
    #[arg(long)]
    expires_at: u64,
    #[arg(long)]
    out_task: PathBuf,
    /// Store-side token pair (revocation + download token)
    #[arg(long)]
    out_tokens: PathBuf,
    /// Where to write the advanced secret (default: overwrite --secret)
    #[arg(long)]
    out_next_secret: Option<PathBuf>,
    /// Also register the token pair at a running store
    #[arg(long)]
    store_url: Option<String>,
}

#[derive(Args)]
struct AccessArgs {
    #[arg(long)]
    public: PathBuf,
    #[arg(long)]
    sp_key: PathBuf,
    #[arg(long)]
    task: PathBuf,
    /// Owner identity file (owner-pub; an owner-key file also works)
    #[arg(long)]
    owner_pub: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DownloadArgs {
    /// Download parameter from access
    #[arg(long)]
    param: PathBuf,
    /// Served capsule destination
    #[arg(long)]
    out: PathBuf,
    /// Gate against a running store (requires --task or --dci)
    #[arg(long)]
    store_url: Option<String>,
    /// Task file naming the capsule to download (URL mode)
    #[arg(long)]
    task: Option<PathBuf>,
    /// Capsule id, URL-safe base64 (URL mode alternative to --task)
    #[arg(long)]
    dci: Option<String>,
    /// Capsule file (file mode: evaluate the gate locally)
    #[arg(long)]
    capsule: Option<PathBuf>,
    /// Token pair or download token file (file mode)
    #[arg(long)]
    tokens: Option<PathBuf>,
    /// Gate time, seconds since epoch (file mode; default: system clock)
    #[arg(long)]
    now: Option<u64>,
}

#[derive(Args)]
struct DecryptArgs {
    #[arg(long)]
    public: PathBuf,
    #[arg(long)]
    sp_key: PathBuf,
    #[arg(long)]
    capsule: PathBuf,
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    param: PathBuf,
    /// Raw payload on full checksum-verified recovery, granule container otherwise
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UpdateArgs {
    #[arg(long)]
    public: PathBuf,
    #[arg(long)]
    capsule: PathBuf,
    /// Revocation or token-pair file
    #[arg(long)]
    revocation: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    public: PathBuf,
    #[arg(long, default_value = "127.0.0.1:0")]
    bind: String,
    /// Event log directory; replayed on start
    #[arg(long)]
    data_dir: PathBuf,
    /// Start a test-controllable clock at this time instead of the system clock
    #[arg(long)]
    manual_clock: Option<u64>,
    /// Expose POST /admin/clock (manual clock only)
    #[arg(long)]
    allow_clock: bool,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario definition (TOML); defaults are built in
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run over HTTP against an ephemeral in-process server instead of direct calls
    #[arg(long)]
    http: bool,
    /// Print the default configuration and exit
    #[arg(long)]
    emit_config: bool,
    /// Also write the report here
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---- error and exit-code mapping ----

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io { path: String, source: std::io::Error },
    Envelope(EnvelopeError),
    Policy(PolicyError),
    Scheme(SchemeError),
    Store(StoreError),
    Gate(&'static str),
    Breach,
    Bench(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Io { path, source } => write!(f, "{path}: {source}"),
            CliError::Envelope(e) => write!(f, "malformed container: {e}"),
            CliError::Policy(e) => write!(f, "policy: {e}"),
            CliError::Scheme(e) => write!(f, "{e}"),
            CliError::Store(e) => write!(f, "store: {e} ({})", e.code()),
            CliError::Gate(code) => write!(f, "download gate refused: {code}"),
            CliError::Breach => write!(f, "scenario reported a breach"),
            CliError::Bench(m) => write!(f, "bench assertion failed: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Envelope(_) | CliError::Policy(_) => 4,
            CliError::Scheme(SchemeError::PolicyNotSatisfied) => 5,
            CliError::Scheme(SchemeError::TamperDetected) => 6,
            CliError::Scheme(_) => 7,
            CliError::Store(_) | CliError::Gate(_) => 8,
            CliError::Breach => 9,
            CliError::Bench(_) => 10,
        }
    }
}

impl From<EnvelopeError> for CliError {
    fn from(e: EnvelopeError) -> Self {
        CliError::Envelope(e)
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        CliError::Scheme(e)
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        CliError::Policy(e)
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Store(e)
    }
}

impl From<ActorError> for CliError {
    fn from(e: ActorError) -> Self {
        match e {
            ActorError::Scheme(s) => CliError::Scheme(s),
            ActorError::Policy(p) => CliError::Policy(p),
            ActorError::Store(s) => CliError::Store(s),
            other => CliError::Usage(other.to_string()),
        }
    }
}

// ---- deterministic-or-secure randomness ----

enum CliRng {
    Seeded(ChaCha20Rng),
    Os(OsRng),
}

impl CliRng {
    fn new(seed: Option<u64>) -> Self {
        match seed {
            Some(s) => CliRng::Seeded(ChaCha20Rng::seed_from_u64(s)),
            None => CliRng::Os(OsRng),
        }
    }
}

impl RngCore for CliRng {
    fn next_u32(&mut self) -> u32 {
        match self {
            CliRng::Seeded(r) => r.next_u32(),
            CliRng::Os(r) => r.next_u32(),
        }
    }
    fn next_u64(&mut self) -> u64 {
        match self {
            CliRng::Seeded(r) => r.next_u64(),
            CliRng::Os(r) => r.next_u64(),
        }
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        match self {
            CliRng::Seeded(r) => r.fill_bytes(dest),
            CliRng::Os(r) => r.fill_bytes(dest),
        }
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        match self {
            CliRng::Seeded(r) => r.try_fill_bytes(dest),
            CliRng::Os(r) => r.try_fill_bytes(dest),
        }
    }
}

// both variants are cryptographically secure generators
impl CryptoRng for CliRng {}

// ---- file helpers ----

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn load_public(path: &Path) -> Result<capshare::scheme::MasterPublicKey, CliError> {
    Ok(envelope::read_public_key(&read_text(path)?)?)
}

/// Reads `pk_PDO` from an owner-pub file, falling back to an owner-key file.
fn load_owner_pk(path: &Path) -> Result<capshare::groups::G2Elem, CliError> {
    let text = read_text(path)?;
    match envelope::read_owner_pub(&text) {
        Ok((_, pk)) => Ok(pk),
        Err(EnvelopeError::WrongKind { .. }) => {
            let (_, pk, _) = envelope::read_owner_key(&text)?;
            Ok(pk)
        }
        Err(e) => Err(e.into()),
    }
}

/// Reads a revocation token from a revocation file or a token-pair file.
fn load_revocation(path: &Path) -> Result<capshare::scheme::RevocationToken, CliError> {
    let text = read_text(path)?;
    match envelope::read_revocation(&text) {
        Ok(r) => Ok(r),
        Err(EnvelopeError::WrongKind { .. }) => Ok(envelope::read_token_pair(&text)?.0),
        Err(e) => Err(e.into()),
    }
}

fn system_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .expect("clock after epoch")
        .as_secs()
}

fn main() {
    let cli = Cli::parse();
    let mut rng = CliRng::new(cli.seed);
    if let Err(e) = run(cli.command, &mut rng) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command, rng: &mut CliRng) -> Result<(), CliError> {
    match command {
        Command::Setup(a) => cmd_setup(a, rng),
        Command::KeygenSp(a) => cmd_keygen_sp(a, rng),
        Command::GenSeed(a) => cmd_gen_seed(a, rng),
        Command::PkeygenPdo(a) => cmd_pkeygen_pdo(a, rng),
        Command::SkeygenPdo(a) => cmd_skeygen_pdo(a),
        Command::Encapsulate(a) => cmd_encapsulate(a, rng),
        Command::TaskIssue(a) => cmd_task_issue(a, rng),
        Command::Access(a) => cmd_access(a),
        Command::Download(a) => cmd_download(a),
        Command::Decrypt(a) => cmd_decrypt(a),
        Command::Update(a) => cmd_update(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Bench(a) => bench::run(a),
    }
}

fn cmd_setup(a: SetupArgs, rng: &mut CliRng) -> Result<(), CliError> {
    let universe = match (&a.universe_file, a.universe.is_empty()) {
        (Some(path), true) => read_text(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect(),
        (None, false) => a.universe.clone(),
        (Some(_), false) => {
            return Err(CliError::Usage(
                "--universe and --universe-file are mutually exclusive".into(),
            ))
        }
        (None, true) => {
            return Err(CliError::Usage(
                "provide the attribute universe via --universe or --universe-file".into(),
            ))
        }
    };
    let curve: Curve = a
        .curve
        .parse()
        .map_err(|e: capshare::groups::GroupError| CliError::Usage(e.to_string()))?;
    let (mpk, msk) = setup(rng, a.lambda, curve, a.granule_bits, universe)?;
    write_text(&a.out_public, &envelope::write_public_key(&mpk))?;
    write_text(&a.out_master, &envelope::write_master_secret(&msk))?;
    println!(
        "system ready: {} attributes, {}-bit granules",
        mpk.universe().len(),
        mpk.mask_bits()
    );
    Ok(())
}

fn cmd_keygen_sp(a: KeygenSpArgs, rng: &mut CliRng) -> Result<(), CliError> {
    let mpk = load_public(&a.public)?;
    let msk = envelope::read_master_secret(&read_text(&a.master)?)?;
    let attrs: AttributeSet = a.attrs.iter().map(String::as_str).collect();
    let key = keygen_sp(rng, &mpk, &msk, &a.id, &attrs)?;
    write_text(&a.out, &envelope::write_sp_key(&key))?;
    println!("issued key for `{}` over {} attribute(s)", a.id, attrs.len());
    Ok(())
}

fn cmd_gen_seed(a: GenSeedArgs, rng: &mut CliRng) -> Result<(), CliError> {
    let mpk = load_public(&a.public)?;
    let seed = gen_seed(rng, &mpk, &a.id)?;
    write_text(&a.out, &envelope::write_seed(&a.id, &seed))?;
    println!("seed minted for `{}`", a.id);
    Ok(())
}

fn cmd_pkeygen_pdo(a: PkeygenPdoArgs, rng: &mut CliRng) -> Result<(), CliError> {
    let mpk = load_public(&a.public)?;
    let (_, seed) = envelope::read_seed(&read_text(&a.seed_file)?)?;
    let (pk, beta) = pkeygen_pdo(rng, &mpk, &seed.psi)?;
    write_text(&a.out, &envelope::write_owner_enroll(&pk, &beta))?;
    println!("owner public key blinded");
    Ok(())
}

fn cmd_skeygen_pdo(a: SkeygenPdoArgs) -> Result<(), CliError> {
    let (id, seed) = envelope::read_seed(&read_text(&a.seed_file)?)?;
    let (pk, beta) = envelope::read_owner_enroll(&read_text(&a.enroll)?)?;
    let sk = skeygen_pdo(&seed.gamma, &beta);
    write_text(&a.out, &envelope::write_owner_key(&id, &pk, &sk))?;
    if let Some(pub_path) = &a.out_pub {
        write_text(pub_path, &envelope::write_owner_pub(&id, &pk))?;
    }
    println!("owner `{id}` enrolled");
    Ok(())
}

fn cmd_encapsulate(a: EncapsulateArgs, rng: &mut CliRng) -> Result<(), CliError> {
    let mpk = load_public(&a.public)?;
    let (_, _, sk) = envelope::read_owner_key(&read_text(&a.owner)?)?;
    let data = read_bytes(&a.data)?;
    let granules = split_payload(&seal_payload(&data), mpk.mask_bits())
        .map_err(SchemeError::from)?;
    let policy = compile_lsss(&parse_formula(&a.policy)?)?;
    let (id, secret, capsule) = encapsulate(rng, &mpk, &sk, &granules, &policy)?;
    write_text(&a.out_capsule, &envelope::write_capsule(&id, &capsule))?;
    write_text(&a.out_secret, &envelope::write_local_secret(&secret))?;
    if let Some(url) = &a.store_url {
        HttpTransport::new(url).put_capsule(&id, &capsule)?;
    }
    println!(
        "capsule {} ({} granules of {} bits)",
        encode_dci(&id),
        granules.count(),
        mpk.mask_bits()
    );
    Ok(())
}

fn cmd_task_issue(a: TaskIssueArgs, rng: &mut CliRng) -> Result<(), CliError> {
    let mpk = load_public(&a.public)?;
    let (_, _, sk) = envelope::read_owner_key(&read_text(&a.owner)?)?;
    let secret = envelope::read_local_secret(&read_text(&a.secret)?)?;
    let data = read_bytes(&a.data)?;
    let granules = split_payload(&seal_payload(&data), mpk.mask_bits())
        .map_err(SchemeError::from)?;
    let indices = match &a.indices {
        Some(list) => GranuleIndices::new(list.iter().copied(), granules.count()),
        None => GranuleIndices::all(granules.count()),
    }
    .map_err(SchemeError::from)?;
    let issued = task_issue(
        rng,
        &mpk,
        &sk,
        &a.sp_id,
        &granules,
        &indices,
        &secret,
        a.expires_at,
    )?;
    if let Some(url) = &a.store_url {
        HttpTransport::new(url).register_tokens(secret.dci(), &issued.revocation, &issued.token)?;
    }
    write_text(&a.out_task, &envelope::write_task(&issued.task))?;
    write_text(
        &a.out_tokens,
        &envelope::write_token_pair(&issued.revocation, &issued.token),
    )?;
    let next_path = a.out_next_secret.as_ref().unwrap_or(&a.secret);
    write_text(next_path, &envelope::write_local_secret(&issued.next_secret))?;
    println!(
        "task for `{}` over {} granule(s); capsule advances to {}",
        a.sp_id,
        indices.len(),
        encode_dci(issued.next_secret.dci())
    );
    Ok(())
}

fn cmd_access(a: AccessArgs) -> Result<(), CliError> {
    let mpk = load_public(&a.public)?;
    let key = envelope::read_sp_key(&read_text(&a.sp_key)?)?;
    let task = envelope::read_task(&read_text(&a.task)?)?;
    let pk_pdo = load_owner_pk(&a.owner_pub)?;
    let param = access_dc(&mpk, &key, &task, &pk_pdo);
    write_text(&a.out, &envelope::write_download_parameter(&param))?;
    println!("download parameter ready for capsule {}", encode_dci(task.dci()));
    Ok(())
}

fn cmd_download(a: DownloadArgs) -> Result<(), CliError> {
    let param = envelope::read_download_parameter(&read_text(&a.param)?)?;
    if let Some(url) = &a.store_url {
        let dci = match (&a.task, &a.dci) {
            (Some(task_path), None) => envelope::read_task(&read_text(task_path)?)?.dci().clone(),
            (None, Some(text)) => capshare::csstore::http::decode_dci(text)
                .ok_or_else(|| CliError::Usage("--dci is not a valid capsule id".into()))?,
            _ => {
                return Err(CliError::Usage(
                    "URL mode needs exactly one of --task or --dci".into(),
                ))
            }
        };
        let (id, capsule) = HttpTransport::new(url).download(&dci, &param)?;
        write_text(&a.out, &envelope::write_capsule(&id, &capsule))?;
        println!("gate passed; served capsule {}", encode_dci(&id));
        return Ok(());
    }

    let (capsule_path, tokens_path) = match (&a.capsule, &a.tokens) {
        (Some(c), Some(t)) => (c, t),
        _ => {
            return Err(CliError::Usage(
                "file mode needs --capsule and --tokens (or use --store-url)".into(),
            ))
        }
    };
    let capsule_text = read_text(capsule_path)?;
    envelope::read_capsule(&capsule_text)?;
    let token_text = read_text(tokens_path)?;
    let token = match envelope::read_download_token(&token_text) {
        Ok(t) => t,
        Err(EnvelopeError::WrongKind { .. }) => envelope::read_token_pair(&token_text)?.1,
        Err(e) => return Err(e.into()),
    };
    let now = a.now.unwrap_or_else(system_now);
    if !download_check(&token, &param, now) {
        let code = if token.d1.to_bytes() != param.to_bytes() {
            "token-mismatch"
        } else {
            "token-expired"
        };
        return Err(CliError::Gate(code));
    }
    // serve the capsule container byte-identically
    write_text(&a.out, &capsule_text)?;
    println!("gate passed; capsule copied to {}", a.out.display());
    Ok(())
}

fn cmd_decrypt(a: DecryptArgs) -> Result<(), CliError> {
    let mpk = load_public(&a.public)?;
    let key = envelope::read_sp_key(&read_text(&a.sp_key)?)?;
    let (id, capsule) = envelope::read_capsule(&read_text(&a.capsule)?)?;
    let task = envelope::read_task(&read_text(&a.task)?)?;
    let param = envelope::read_download_parameter(&read_text(&a.param)?)?;
    let granules = dec_dc(&mpk, &key, &id, &capsule, &task, &param)?;
    let recovery = assemble(granules);
    match &recovery.payload {
        Some(payload) => {
            write_bytes(&a.out, payload)?;
            println!("recovered {} bytes, checksum ok", payload.len());
        }
        None => {
            write_text(&a.out, &envelope::write_granules(&recovery.granules))?;
            println!(
                "recovered {} granule(s) as a container (partial share or no verified payload)",
                recovery.granules.len()
            );
        }
    }
    Ok(())
}

fn cmd_update(a: UpdateArgs) -> Result<(), CliError> {
    let mpk = load_public(&a.public)?;
    let (id, capsule) = envelope::read_capsule(&read_text(&a.capsule)?)?;
    let revocation = load_revocation(&a.revocation)?;
    let (next_id, next_capsule) = update_dc(&mpk, &id, &capsule, &revocation)?;
    write_text(&a.out, &envelope::write_capsule(&next_id, &next_capsule))?;
    println!("capsule advanced to {}", encode_dci(&next_id));
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<(), CliError> {
    let mpk = load_public(&a.public)?;
    let clock = match a.manual_clock {
        Some(t) => Clock::manual(t),
        None => Clock::system(),
    };
    std::fs::create_dir_all(&a.data_dir).map_err(io_err(&a.data_dir))?;
    let store = Arc::new(Store::open(&a.data_dir, mpk, clock)?);
    let bind = a
        .bind
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid bind address `{}`", a.bind)))?;
    let handle = serve(store, bind, a.allow_clock)?;
    println!("listening on {}", handle.addr());
    std::io::stdout().flush().ok();
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

fn cmd_scenario(a: ScenarioArgs) -> Result<(), CliError> {
    if a.emit_config {
        print!("{}", ScenarioConfig::default().to_toml());
        return Ok(());
    }
    let config = match &a.config {
        Some(path) => ScenarioConfig::from_toml(&read_text(path)?)
            .map_err(|e| CliError::Usage(format!("scenario config: {e}")))?,
        None => ScenarioConfig::default(),
    };
    let mpk = scenario_public_key(&config)?;
    let store = Arc::new(Store::in_memory(mpk, Clock::manual(1)));

    let report = if a.http {
        let server = serve(store, "127.0.0.1:0".parse().expect("literal addr"), true)?;
        let transport = HttpTransport::new(server.base_url());
        let report = run_scenario(&config, &transport)?;
        server.shutdown();
        report
    } else {
        let transport = InProcessTransport::new(store);
        run_scenario(&config, &transport)?
    };

    let text = report.render();
    print!("{text}");
    if let Some(path) = &a.out {
        write_text(path, &text)?;
    }
    if report.all_defended() {
        Ok(())
    } else {
        Err(CliError::Breach)
    }
}
