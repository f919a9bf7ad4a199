//! Cost-model harness behind `capshare bench`.
//!
//! Each phase sweeps one variable, times its operation over a fixed number of
//! repetitions, and checks two kinds of claims:
//!
//! * exact operation counters per point (per-group exponentiations and
//!   pairings), which never depend on wall time, and
//! * the wall-time shape (flat or increasing) of the series, judged by a
//!   least-squares slope over the sweep, never by absolute milliseconds.
//!
//! Noise handling: repetitions interleave round-robin across the sweep points
//! so load spikes hit every variable equally, and shape judgments use the
//! fastest repetition per point, since scheduler stalls only ever add time.
//! A violation of either claim prints inside the report and exits with
//! code 10.

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::fmt::Write as _;
use std::hint::black_box;
use std::path::PathBuf;
use std::time::Instant;

use capshare::granules::{split_payload, GranuleIndices, GranuleSet};
use capshare::groups::{measure, Curve, G2Elem, NonZeroScalar, OpCounts};
use capshare::policy::{compile_lsss, parse_formula, AttributeSet, LsssPolicy};
use capshare::scheme::{
    access_dc, dec_dc, encapsulate, gen_seed, keygen_sp, pkeygen_pdo, setup, skeygen_pdo,
    task_issue, update_dc, MasterPublicKey, MasterSecretKey, SchemeError,
};

use crate::CliError;

const LAMBDA: u32 = 128;
const GRANULE_BITS: usize = 128;
/// Flat series may drift per sweep step by at most this fraction of the
/// series level. Group operations dominate every phase, but bookkeeping
/// (universe validation, capsule clones) adds a small genuine slope, and
/// timing noise survives even the fastest-repetition estimator.
const FLAT_LIMIT: f64 = 0.05;

#[derive(Args)]
pub struct BenchArgs {
    /// Comma-separated phases: setup, kgdu, enc, prework, dec, revoke (default: all)
    #[arg(long, value_delimiter = ',')]
    phases: Vec<String>,
    /// Repetitions per point (minimum 5)
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Shorter sweeps for smoke runs
    #[arg(long)]
    quick: bool,
    /// Write plot data: phase, variable, mean seconds, stddev seconds
    #[arg(long)]
    csv: Option<PathBuf>,
}

const ALL_PHASES: &[&str] = &["setup", "kgdu", "enc", "prework", "dec", "revoke"];

/// How a series' wall time is expected to respond to its variable.
#[derive(Clone, Copy, PartialEq)]
enum Shape {
    Flat,
    Increasing,
}

struct Point {
    var: usize,
    mean: f64,
    stddev: f64,
    /// Fastest repetition; the shape judgment uses it because stalls are
    /// strictly additive noise.
    fastest: f64,
    counts: OpCounts,
}

struct Series {
    /// e.g. "dec"
    phase: &'static str,
    /// e.g. "key attributes"
    var_label: &'static str,
    shape: Shape,
    points: Vec<Point>,
    /// Counter-formula mismatches, one line each.
    violations: Vec<String>,
}

/// One sweep point: the operation under test with its fixtures baked in, the
/// expected counter formula, and how many back-to-back calls form one timing
/// sample (batching keeps sub-millisecond operations above timer resolution).
struct PointSpec<'a> {
    var: usize,
    inner: usize,
    expected: OpCounts,
    op: Box<dyn FnMut() + 'a>,
}

pub fn run(args: BenchArgs) -> Result<(), CliError> {
    if args.reps < 5 {
        return Err(CliError::Usage(format!(
            "--reps must be at least 5, got {}",
            args.reps
        )));
    }
    let selected: Vec<&str> = if args.phases.is_empty() {
        ALL_PHASES.to_vec()
    } else {
        let mut out = Vec::new();
        for name in &args.phases {
            match ALL_PHASES.iter().find(|p| **p == name.as_str()) {
                Some(p) => out.push(*p),
                None => {
                    return Err(CliError::Usage(format!(
                        "unknown phase `{name}`; expected one of {}",
                        ALL_PHASES.join(", ")
                    )))
                }
            }
        }
        out
    };

    warm_up()?;
    let mut series = Vec::new();
    for phase in &selected {
        match *phase {
            "setup" => series.push(bench_setup(&args)?),
            "kgdu" => series.push(bench_kgdu(&args)?),
            "enc" => series.push(bench_enc(&args)?),
            "prework" => {
                series.push(bench_prework(&args)?);
                series.push(bench_prework_single(&args)?);
            }
            "dec" => series.push(bench_dec(&args)?),
            "revoke" => series.push(bench_revoke(&args)?),
            _ => unreachable!("validated above"),
        }
    }

    let report = render_report(&args, &series);
    print!("{report}");
    if let Some(path) = &args.csv {
        let mut csv = String::from("phase,variable,mean_seconds,stddev_seconds\n");
        for s in &series {
            for p in &s.points {
                let _ = writeln!(csv, "{},{},{:.9},{:.9}", s.phase, p.var, p.mean, p.stddev);
            }
        }
        std::fs::write(path, csv).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }

    let mut failures: Vec<String> = Vec::new();
    for s in &series {
        failures.extend(s.violations.iter().cloned());
        if let Some(msg) = shape_violation(s) {
            failures.push(msg);
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Bench(failures.join("; ")))
    }
}

// ---- measurement plumbing ----

/// Runs the whole pipeline once on a toy system so one-time costs (generator
/// derivation, pairing engine tables) never land inside a timed sample.
fn warm_up() -> Result<(), CliError> {
    let mut rng = bench_rng(0);
    let (mpk, msk) = system(&mut rng, attr_names(2))?;
    let attrs: AttributeSet = attr_names(2).into_iter().collect();
    let key = keygen_sp(&mut rng, &mpk, &msk, "warmup-sp", &attrs)?;
    let owner = enroll_owner(&mut rng, &mpk)?;
    let granules = payload_granules(32, 0x11)?;
    let policy = chain_policy(&attr_names(2))?;
    let (id, secret, capsule) = encapsulate(&mut rng, &mpk, &owner.sk, &granules, &policy)?;
    let shared = GranuleIndices::all(granules.count()).map_err(SchemeError::from)?;
    let issued = task_issue(
        &mut rng, &mpk, &owner.sk, "warmup-sp", &granules, &shared, &secret, 1 << 40,
    )?;
    let param = access_dc(&mpk, &key, &issued.task, &owner.pk);
    black_box(dec_dc(&mpk, &key, &id, &capsule, &issued.task, &param)?);
    black_box(update_dc(&mpk, &id, &capsule, &issued.revocation)?);
    Ok(())
}

/// Checks each point's counter formula once (counters never vary across calls
/// with fixed inputs), then interleaves the timing rounds over all points.
/// Rounds are floored at nine so a burst of scheduler stalls cannot cover
/// every sample of a point; reported statistics use all rounds.
fn run_sweep(
    reps: usize,
    phase: &'static str,
    mut specs: Vec<PointSpec<'_>>,
    violations: &mut Vec<String>,
) -> Vec<Point> {
    let rounds = timing_rounds(reps);
    let mut counted = Vec::with_capacity(specs.len());
    for spec in &mut specs {
        let ((), c) = measure(&mut spec.op);
        if c != spec.expected {
            violations.push(format!(
                "{phase} at {}: counted {} but the formula gives {}",
                spec.var,
                counts_line(&c),
                counts_line(&spec.expected)
            ));
        }
        counted.push(c);
    }
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(rounds); specs.len()];
    for _ in 0..rounds {
        for (i, spec) in specs.iter_mut().enumerate() {
            let start = Instant::now();
            for _ in 0..spec.inner {
                (spec.op)();
            }
            samples[i].push(start.elapsed().as_secs_f64() / spec.inner as f64);
        }
    }
    specs
        .iter()
        .zip(counted)
        .zip(samples)
        .map(|((spec, counts), samples)| {
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let var_sum = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>();
            Point {
                var: spec.var,
                mean,
                stddev: (var_sum / samples.len() as f64).sqrt(),
                fastest: samples.iter().copied().fold(f64::INFINITY, f64::min),
                counts,
            }
        })
        .collect()
}

fn timing_rounds(reps: usize) -> usize {
    reps.max(9)
}

fn counts(e1: u64, e2: u64, gt: u64, p: u64) -> OpCounts {
    OpCounts {
        g1_exp: e1,
        g2_exp: e2,
        gt_exp: gt,
        pairings: p,
    }
}

fn counts_line(c: &OpCounts) -> String {
    format!(
        "e1={} e2={} gt={} p={}",
        c.g1_exp, c.g2_exp, c.gt_exp, c.pairings
    )
}

fn bench_rng(tag: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(0xBE7C_0000 ^ tag)
}

fn attr_names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("attr-{i:04}")).collect()
}

fn and_chain(attrs: &[String]) -> String {
    attrs.join(" AND ")
}

fn payload_granules(bytes: usize, fill: u8) -> Result<GranuleSet, SchemeError> {
    Ok(split_payload(&vec![fill; bytes], GRANULE_BITS)?)
}

struct Owner {
    pk: G2Elem,
    sk: NonZeroScalar,
}

fn enroll_owner(rng: &mut ChaCha20Rng, mpk: &MasterPublicKey) -> Result<Owner, SchemeError> {
    let seed = gen_seed(rng, mpk, "bench-owner")?;
    let (pk, beta) = pkeygen_pdo(rng, mpk, &seed.psi)?;
    let sk = skeygen_pdo(&seed.gamma, &beta);
    Ok(Owner { pk, sk })
}

fn system(
    rng: &mut ChaCha20Rng,
    universe: Vec<String>,
) -> Result<(MasterPublicKey, MasterSecretKey), SchemeError> {
    setup(rng, LAMBDA, Curve::Bls12_381, GRANULE_BITS, universe)
}

fn chain_policy(attrs: &[String]) -> Result<LsssPolicy, CliError> {
    Ok(compile_lsss(&parse_formula(&and_chain(attrs))?)?)
}

// ---- phases ----

/// Setup cost is one G2 exponentiation regardless of the universe size.
fn bench_setup(args: &BenchArgs) -> Result<Series, CliError> {
    let vars: &[usize] = if args.quick {
        &[50, 100, 150]
    } else {
        &[100, 250, 500, 750, 1000]
    };
    let mut specs = Vec::new();
    for &u in vars {
        let mut rng = bench_rng(0x100 + u as u64);
        let universe = attr_names(u);
        // pre-clone the universes so allocation stays out of the timed span
        let mut pool: Vec<Vec<String>> = (0..timing_rounds(args.reps) + 1)
            .map(|_| universe.clone())
            .collect();
        specs.push(PointSpec {
            var: u,
            inner: 1,
            expected: counts(0, 1, 0, 0),
            op: Box::new(move || {
                let u = pool.pop().expect("pool sized for every call");
                black_box(system(&mut rng, u).expect("setup in bench fixture"));
            }),
        });
    }
    let mut violations = Vec::new();
    let points = run_sweep(args.reps, "setup", specs, &mut violations);
    Ok(Series {
        phase: "setup",
        var_label: "universe size",
        shape: Shape::Flat,
        points,
        violations,
    })
}

/// Key issue scales in the provider's attribute count: |S| + 3 in G1, 1 in G2.
fn bench_kgdu(args: &BenchArgs) -> Result<Series, CliError> {
    let vars: &[usize] = if args.quick {
        &[10, 20, 30]
    } else {
        &[20, 40, 60, 80, 100]
    };
    let mut rng = bench_rng(2);
    let universe = attr_names(*vars.last().expect("nonempty sweep"));
    let (mpk, msk) = system(&mut rng, universe.clone())?;
    let mut specs = Vec::new();
    for &s in vars {
        let mut rng = bench_rng(0x200 + s as u64);
        let attrs: AttributeSet = universe[..s].iter().map(String::as_str).collect();
        let (mpk, msk) = (&mpk, &msk);
        specs.push(PointSpec {
            var: s,
            inner: 1,
            expected: counts(s as u64 + 3, 1, 0, 0),
            op: Box::new(move || {
                black_box(
                    keygen_sp(&mut rng, mpk, msk, "bench-sp", &attrs).expect("keygen in bench"),
                );
            }),
        });
    }
    let mut violations = Vec::new();
    let points = run_sweep(args.reps, "kgdu", specs, &mut violations);
    Ok(Series {
        phase: "kgdu",
        var_label: "key attributes",
        shape: Shape::Increasing,
        points,
        violations,
    })
}

/// Sealing scales in policy rows: 2*rows + 2 in G1, reuse + 2 in G2, 1 pairing.
/// The sweep uses AND chains, so reuse stays 1 and G2 stays constant at 3.
fn bench_enc(args: &BenchArgs) -> Result<Series, CliError> {
    let vars: &[usize] = if args.quick {
        &[2, 4, 6]
    } else {
        &[4, 8, 12, 16, 20]
    };
    let mut rng = bench_rng(3);
    let universe = attr_names(*vars.last().expect("nonempty sweep"));
    let (mpk, _) = system(&mut rng, universe.clone())?;
    let owner = enroll_owner(&mut rng, &mpk)?;
    let granules = payload_granules(64, 0xA5)?;
    let mut specs = Vec::new();
    for &k in vars {
        let mut rng = bench_rng(0x300 + k as u64);
        let policy = chain_policy(&universe[..k])?;
        let (mpk, sk, granules) = (&mpk, &owner.sk, &granules);
        specs.push(PointSpec {
            var: k,
            inner: 1,
            expected: counts(2 * k as u64 + 2, 3, 0, 1),
            op: Box::new(move || {
                black_box(
                    encapsulate(&mut rng, mpk, sk, granules, &policy)
                        .expect("encapsulate in bench"),
                );
            }),
        });
    }
    let mut violations = Vec::new();
    let points = run_sweep(args.reps, "enc", specs, &mut violations);
    Ok(Series {
        phase: "enc",
        var_label: "policy rows",
        shape: Shape::Increasing,
        points,
        violations,
    })
}

/// Task issue scales in the shared-index count: |I| + 2 pairings, |I| + 5 in
/// G1, with one G2 and one target-group exponentiation.
fn bench_prework(args: &BenchArgs) -> Result<Series, CliError> {
    let vars: &[usize] = if args.quick {
        &[1, 2, 4]
    } else {
        &[2, 4, 8, 12, 16]
    };
    let mut rng = bench_rng(4);
    let (mpk, _) = system(&mut rng, vec!["task-attr".into()])?;
    let owner = enroll_owner(&mut rng, &mpk)?;
    let granules = payload_granules(256, 0x3C)?;
    let policy = compile_lsss(&parse_formula("task-attr")?)?;
    let (_, secret, _) = encapsulate(&mut rng, &mpk, &owner.sk, &granules, &policy)?;
    let mut specs = Vec::new();
    for &i in vars {
        let mut rng = bench_rng(0x400 + i as u64);
        let shared = GranuleIndices::new(1..=i, granules.count()).map_err(SchemeError::from)?;
        let (mpk, sk, granules, secret) = (&mpk, &owner.sk, &granules, &secret);
        specs.push(PointSpec {
            var: i,
            inner: 1,
            expected: counts(i as u64 + 5, 1, 1, i as u64 + 2),
            op: Box::new(move || {
                black_box(
                    task_issue(&mut rng, mpk, sk, "bench-sp", granules, &shared, secret, 1 << 40)
                        .expect("task_issue in bench"),
                );
            }),
        });
    }
    let mut violations = Vec::new();
    let points = run_sweep(args.reps, "prework", specs, &mut violations);
    Ok(Series {
        phase: "prework",
        var_label: "shared granules",
        shape: Shape::Increasing,
        points,
        violations,
    })
}

/// With a single shared granule, task issue stays constant no matter how the
/// surrounding system grows; the sweep rebuilds larger worlds around it.
fn bench_prework_single(args: &BenchArgs) -> Result<Series, CliError> {
    let vars: &[usize] = if args.quick {
        &[10, 20, 30]
    } else {
        &[20, 40, 60, 80, 100]
    };
    let mut specs = Vec::new();
    for &s in vars {
        let mut rng = bench_rng(0x500 + s as u64);
        let universe = attr_names(s);
        let (mpk, _) = system(&mut rng, universe.clone())?;
        let owner = enroll_owner(&mut rng, &mpk)?;
        let granules = payload_granules(64, 0x5A)?;
        let policy = chain_policy(&universe)?;
        let (_, secret, _) = encapsulate(&mut rng, &mpk, &owner.sk, &granules, &policy)?;
        let shared = GranuleIndices::new([1], granules.count()).map_err(SchemeError::from)?;
        specs.push(PointSpec {
            var: s,
            inner: 1,
            expected: counts(6, 1, 1, 3),
            op: Box::new(move || {
                black_box(
                    task_issue(
                        &mut rng, &mpk, &owner.sk, "bench-sp", &granules, &shared, &secret,
                        1 << 40,
                    )
                    .expect("task_issue in bench"),
                );
            }),
        });
    }
    let mut violations = Vec::new();
    let points = run_sweep(args.reps, "prework-single", specs, &mut violations);
    Ok(Series {
        phase: "prework-single",
        var_label: "system attributes",
        shape: Shape::Flat,
        points,
        violations,
    })
}

/// Opening costs reuse + 4 pairings and one G1 exponentiation; with reuse
/// pinned at 1 it is flat no matter how many attributes the key carries.
fn bench_dec(args: &BenchArgs) -> Result<Series, CliError> {
    let vars: &[usize] = if args.quick {
        &[10, 25, 40]
    } else {
        &[10, 25, 50, 75, 100]
    };
    let mut specs = Vec::new();
    for &s in vars {
        let mut rng = bench_rng(0x600 + s as u64);
        let universe = attr_names(s);
        let (mpk, msk) = system(&mut rng, universe.clone())?;
        let attrs: AttributeSet = universe.iter().map(String::as_str).collect();
        let key = keygen_sp(&mut rng, &mpk, &msk, "bench-sp", &attrs)?;
        let owner = enroll_owner(&mut rng, &mpk)?;
        let granules = payload_granules(64, 0x81)?;
        let policy = compile_lsss(&parse_formula(&universe[0])?)?;
        let (id, secret, capsule) = encapsulate(&mut rng, &mpk, &owner.sk, &granules, &policy)?;
        let shared = GranuleIndices::all(granules.count()).map_err(SchemeError::from)?;
        let issued = task_issue(
            &mut rng, &mpk, &owner.sk, "bench-sp", &granules, &shared, &secret, 1 << 40,
        )?;
        let param = access_dc(&mpk, &key, &issued.task, &owner.pk);
        specs.push(PointSpec {
            var: s,
            inner: 1,
            expected: counts(1, 0, 0, 5),
            op: Box::new(move || {
                black_box(
                    dec_dc(&mpk, &key, &id, &capsule, &issued.task, &param)
                        .expect("dec in bench"),
                );
            }),
        });
    }
    let mut violations = Vec::new();
    let points = run_sweep(args.reps, "dec", specs, &mut violations);
    Ok(Series {
        phase: "dec",
        var_label: "key attributes",
        shape: Shape::Flat,
        points,
        violations,
    })
}

/// Revocation is one G1 exponentiation plus an XOR. The capsule it rewrites
/// keeps a fixed four-row policy while the system grows around it, so the
/// series is genuinely flat.
fn bench_revoke(args: &BenchArgs) -> Result<Series, CliError> {
    let vars: &[usize] = if args.quick {
        &[10, 20, 30]
    } else {
        &[20, 40, 60, 80, 100]
    };
    let mut specs = Vec::new();
    for &s in vars {
        let mut rng = bench_rng(0x700 + s as u64);
        let universe = attr_names(s);
        let (mpk, _) = system(&mut rng, universe.clone())?;
        let owner = enroll_owner(&mut rng, &mpk)?;
        let granules = payload_granules(64, 0x2D)?;
        let shared = GranuleIndices::all(granules.count()).map_err(SchemeError::from)?;
        let policy = chain_policy(&universe[..4])?;
        let (id, secret, capsule) = encapsulate(&mut rng, &mpk, &owner.sk, &granules, &policy)?;
        let issued = task_issue(
            &mut rng, &mpk, &owner.sk, "bench-sp", &granules, &shared, &secret, 1 << 40,
        )?;
        specs.push(PointSpec {
            var: s,
            // one exponentiation per call: batch so each sample spans milliseconds
            inner: 20,
            expected: counts(1, 0, 0, 0),
            op: Box::new(move || {
                black_box(
                    update_dc(&mpk, &id, &capsule, &issued.revocation).expect("update in bench"),
                );
            }),
        });
    }
    let mut violations = Vec::new();
    let points = run_sweep(args.reps, "revoke", specs, &mut violations);
    Ok(Series {
        phase: "revoke",
        var_label: "system attributes",
        shape: Shape::Flat,
        points,
        violations,
    })
}

// ---- shape judgment and reporting ----

/// Least-squares slope of fastest-repetition time against the sweep
/// variable, in seconds per variable unit.
fn slope(points: &[Point]) -> f64 {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.var as f64).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.fastest).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for p in points {
        let dx = p.var as f64 - mean_x;
        num += dx * (p.fastest - mean_y);
        den += dx * dx;
    }
    num / den
}

/// Average change per sweep step as a fraction of the series level.
fn per_step_drift(points: &[Point]) -> f64 {
    let first = points.first().expect("nonempty series").var as f64;
    let last = points.last().expect("nonempty series").var as f64;
    let step = (last - first) / (points.len() as f64 - 1.0);
    let level = points.iter().map(|p| p.fastest).sum::<f64>() / points.len() as f64;
    slope(points) * step / level
}

fn shape_violation(series: &Series) -> Option<String> {
    if series.points.len() < 2 {
        return None;
    }
    let drift = per_step_drift(&series.points);
    match series.shape {
        Shape::Flat if drift.abs() > FLAT_LIMIT => Some(format!(
            "{}: expected a flat series but it drifts {:.1}% per step (limit {:.1}%)",
            series.phase,
            drift * 100.0,
            FLAT_LIMIT * 100.0
        )),
        Shape::Increasing
            if drift <= FLAT_LIMIT
                || series.points.last().expect("nonempty").fastest
                    <= series.points.first().expect("nonempty").fastest =>
        {
            Some(format!(
                "{}: expected an increasing series but the drift is only {:.1}% per step",
                series.phase,
                drift * 100.0
            ))
        }
        _ => None,
    }
}

fn render_report(args: &BenchArgs, series: &[Series]) -> String {
    let mut out = String::new();
    let cpus = std::thread::available_parallelism().map_or(0, |n| n.get());
    let _ = writeln!(out, "cost model harness");
    let _ = writeln!(
        out,
        "curve bls12-381, lambda {LAMBDA}, granule bits {GRANULE_BITS}, reps {}{}",
        args.reps,
        if args.quick { ", quick sweep" } else { "" }
    );
    let _ = writeln!(
        out,
        "host: {} {}, {} cpu(s)",
        std::env::consts::OS,
        std::env::consts::ARCH,
        cpus
    );
    for s in series {
        let _ = writeln!(out);
        let _ = writeln!(out, "phase {} ({})", s.phase, s.var_label);
        for p in &s.points {
            let _ = writeln!(
                out,
                "  {:>5}  {:>10.3} ms  +/- {:>8.3} ms  fastest {:>10.3} ms  {}",
                p.var,
                p.mean * 1e3,
                p.stddev * 1e3,
                p.fastest * 1e3,
                counts_line(&p.counts)
            );
        }
        let drift = if s.points.len() < 2 {
            0.0
        } else {
            per_step_drift(&s.points)
        };
        let expected = match s.shape {
            Shape::Flat => "flat",
            Shape::Increasing => "increasing",
        };
        let verdict = if shape_violation(s).is_none() { "ok" } else { "VIOLATED" };
        let _ = writeln!(
            out,
            "  shape: expected {expected}, per-step drift {:+.2}%: {verdict}",
            drift * 100.0
        );
        let counter_verdict = if s.violations.is_empty() {
            "ok".to_string()
        } else {
            format!("{} VIOLATION(S)", s.violations.len())
        };
        let _ = writeln!(out, "  counters: {counter_verdict}");
        for v in &s.violations {
            let _ = writeln!(out, "    {v}");
        }
    }
    let all_ok = series
        .iter()
        .all(|s| s.violations.is_empty() && shape_violation(s).is_none());
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "verdict: {}",
        if all_ok {
            "all counter formulas and shapes hold"
        } else {
            "violations found"
        }
    );
    out
}
