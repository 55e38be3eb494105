//! Acceptance suite.
//!
//! Runs every acceptance criterion at its pinned tolerance and prints one
//! `PASS`/`FAIL` line per criterion on stdout. The process exits non-zero if
//! any criterion fails. Criteria run in order and a failing (or panicking)
//! criterion does not stop the others.
//!
//! Run alone with `cargo test -p barrier-cert-cli --test acceptance`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use barrier_cert::arrangement::{enumerate_regions, Region, TAU_SIGN};
use barrier_cert::certify::{certify, hull, Verdict};
use barrier_cert::crown::get_fn_bd;
use barrier_cert::hyperrect::HyperRectangle;
use barrier_cert::io::{load_problem, load_shallow, load_sublevel_problem, ProblemInstance};
use barrier_cert::lp::box_bounds;
use barrier_cert::nn::{Activation, Layer, NeuralNetwork};
use barrier_cert::partition::partition;
use barrier_cert::sublevel::{enumerate_sublevel_component, enumerate_sublevel_component_with, BackwardMode, SubLevelOptions};
use barrier_cert_cli::{run, Cli};
use clap::Parser;
use common::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// Pinned thresholds.
const REGION_ORACLE_CASES: usize = 50;
const REGION_ORACLE_SECONDS: f64 = 60.0;
const SUBLEVEL_ORACLE_CASES: usize = 50;
const MAX_NEURONS: usize = 12;
const MAX_DIM: usize = 3;
const CROWN_CASES: usize = 100;
const CROWN_SAMPLES: usize = 10_000;
const CROWN_TOL: f64 = 1e-7;
const PARTITION_SAMPLES: usize = 1_000;
const PARTITION_TOL: f64 = 1e-6;
const CASE_STUDY_SECONDS: f64 = 120.0;
const PENDULUM_REFERENCE_BOXES: f64 = 25.0;
const BICYCLE_REFERENCE_BOXES: f64 = 125.0;
const BOX_COUNT_FACTOR: f64 = 2.0;
const COVER_REL_TOL: f64 = 1e-9;
const TRAJECTORIES: usize = 1_000;
const STEPS: usize = 1_000;
const INVARIANCE_TOL: f64 = 1e-7;
const SCALING_RATIO: (f64, f64) = (2.5, 6.0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn sample(r: &mut ChaCha8Rng, b: &HyperRectangle) -> Vec<f64> {
    b.lo().iter().zip(b.hi()).map(|(l, h)| if l < h { r.gen_range(*l..*h) } else { *l }).collect()
}

fn random_box(r: &mut ChaCha8Rng, n: usize) -> HyperRectangle {
    let c: Vec<f64> = (0..n).map(|_| gauss(r)).collect();
    let w: Vec<f64> = (0..n).map(|_| r.gen_range(0.01..2.0)).collect();
    HyperRectangle::new(
        c.iter().zip(&w).map(|(c, w)| c - w).collect(),
        c.iter().zip(&w).map(|(c, w)| c + w).collect(),
    )
    .unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Region enumeration equals the exhaustive sign-pattern oracle.
fn region_oracle() -> Outcome {
    let mut r = rng(1001);
    let start = Instant::now();
    let mut mismatches = Vec::new();
    for case in 0..REGION_ORACLE_CASES {
        let n = 1 + case % MAX_DIM;
        let big_n = r.gen_range(1..=MAX_NEURONS);
        let arr = random_arrangement(&mut r, big_n, n);
        let x0: Vec<f64> = (0..n).map(|_| gauss(&mut r)).collect();
        let seed = arr.find_interior_region(&x0).unwrap();
        let got: BTreeSet<Region> = enumerate_regions(&arr, &seed).unwrap().regions().cloned().collect();
        if got != brute_force_regions(&arr) {
            mismatches.push(case);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches.is_empty() && secs < REGION_ORACLE_SECONDS,
        format!("{REGION_ORACLE_CASES} arrangements, mismatches {mismatches:?}, {secs:.2} s (limit {REGION_ORACLE_SECONDS} s)"),
    )
}

/// Sub-level component equals the brute-force connected-component oracle,
/// and the committed fold-back fixture needs the backward pass.
fn sublevel_oracle() -> Outcome {
    let mut r = rng(1002);
    let mut mismatches = Vec::new();
    let mut needed_backward = 0;
    for case in 0..SUBLEVEL_ORACLE_CASES {
        let n = 1 + case % MAX_DIM;
        let big_n = r.gen_range(2..=MAX_NEURONS);
        let (net, x0) = random_negative_seeded(&mut r, big_n, n);
        let c = enumerate_sublevel_component(&net, &x0).unwrap();
        let got: BTreeSet<Region> = c.regions.regions().cloned().collect();
        let want = brute_force_component(&net, &c.seed_region);
        if got != want {
            mismatches.push(case);
        }
        let fwd = enumerate_sublevel_component_with(&net, &x0, &SubLevelOptions { backward: BackwardMode::Disabled, ..Default::default() })
            .unwrap();
        if fwd.len() < want.len() {
            needed_backward += 1;
        }
    }

    let net = load_shallow(&fixtures().join("fig1/barrier.json")).unwrap();
    let x0 = [0.0, 0.0];
    let full = enumerate_sublevel_component(&net, &x0).unwrap();
    let fwd = enumerate_sublevel_component_with(&net, &x0, &SubLevelOptions { backward: BackwardMode::Disabled, ..Default::default() })
        .unwrap();
    let full_set: BTreeSet<Region> = full.regions.regions().cloned().collect();
    let fwd_set: BTreeSet<Region> = fwd.regions.regions().cloned().collect();
    let fixture_oracle = full_set == brute_force_component(&net, &full.seed_region);
    let missed = full_set.difference(&fwd_set).count();
    let fixture_ok = fixture_oracle && fwd_set.is_subset(&full_set) && missed >= 1;
    outcome(
        mismatches.is_empty() && fixture_ok,
        format!(
            "{SUBLEVEL_ORACLE_CASES} nets, mismatches {mismatches:?}, {needed_backward} needed backward; \
             fold-back fixture: oracle {fixture_oracle}, forward-only misses {missed} of {} regions",
            full_set.len()
        ),
    )
}

/// CROWN bounds contain sampled outputs and are exact on affine networks.
fn crown_soundness() -> Outcome {
    let mut r = rng(1003);
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for case in 0..CROWN_CASES {
        let n = 1 + case % 4;
        let mut widths = vec![n];
        for _ in 0..1 + case % 3 {
            widths.push(r.gen_range(2..=16));
        }
        widths.push(1 + case % 3);
        let net = random_network(&mut r, &widths);
        let bx = random_box(&mut r, n);
        let bounds = get_fn_bd(&net, &bx).unwrap();
        for _ in 0..CROWN_SAMPLES {
            let x = sample(&mut r, &bx);
            for (k, y) in net.evaluate(&x).unwrap().iter().enumerate() {
                let excess = (bounds.lower(k) - y).max(y - bounds.upper(k));
                worst = worst.max(excess);
                if excess > CROWN_TOL {
                    violations += 1;
                }
            }
        }
    }
    let mut affine_err = 0.0f64;
    for _ in 0..20 {
        let n = r.gen_range(1..4);
        let m = r.gen_range(1..4);
        let map = random_affine(&mut r, m, n, 1.0);
        let net = NeuralNetwork::new(vec![Layer::new(map.clone(), Activation::Linear)]).unwrap();
        let bx = random_box(&mut r, n);
        let got = get_fn_bd(&net, &bx).unwrap();
        let (lo, hi) = box_bounds(&map, &bx).unwrap();
        for k in 0..m {
            affine_err = affine_err.max((got.lower(k) - lo[k]).abs()).max((got.upper(k) - hi[k]).abs());
        }
    }
    outcome(
        violations == 0 && affine_err <= 1e-12,
        format!(
            "{CROWN_CASES} pairs x {CROWN_SAMPLES} samples, {violations} violations beyond {CROWN_TOL:e} \
             (worst excess {worst:.2e}); affine max error {affine_err:.1e}"
        ),
    )
}

/// Sampled decrease condition with the computed γ on every partition box.
fn partition_soundness() -> Outcome {
    let mut r = rng(1004);
    let mut instances: Vec<(String, ProblemInstance)> = ["pendulum", "contraction"]
        .iter()
        .map(|name| (name.to_string(), load_problem(&fixtures().join(name).join("problem.json")).unwrap()))
        .collect();
    for case in 0..10 {
        let n = 1 + case % 2;
        let (barrier, x0) = loop {
            let (b, x0) = random_negative_seeded(&mut r, 8, n);
            if x0.iter().all(|v| v.abs() < 1.0) {
                break (b, x0);
            }
        };
        instances.push((
            format!("random-{case}"),
            ProblemInstance {
                dynamics: random_network(&mut r, &[n, 8, n]),
                barrier,
                safe_set: HyperRectangle::ball(&vec![0.0; n], 2.0).unwrap(),
                eps: 0.1,
                x0,
                lipschitz: barrier_cert::io::Lipschitz::Auto,
            },
        ));
    }
    let mut boxes = 0usize;
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for (_, p) in &instances {
        let res = partition(&p.safe_set, &p.barrier, &p.dynamics, p.eps).unwrap();
        for bx in &res.boxes {
            boxes += 1;
            for _ in 0..PARTITION_SAMPLES {
                let x = sample(&mut r, bx);
                let y = p.dynamics.evaluate(&x).unwrap();
                let v = p.barrier.eval(&y) - res.gamma * p.barrier.eval(&x);
                worst = worst.max(v);
                if v > PARTITION_TOL {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        violations == 0 && boxes > 0,
        format!(
            "{} instances, {boxes} boxes x {PARTITION_SAMPLES} samples, {violations} above {PARTITION_TOL:e} (max {worst:.3e})",
            instances.len()
        ),
    )
}

struct CaseRun {
    verdict: String,
    boxes: Vec<HyperRectangle>,
    seconds: f64,
    exit_code: i32,
}

/// Run `barrier-cert certify` in-process and read back its artifact and report.
fn run_certify(problem: &Path, tag: &str) -> CaseRun {
    let dir = std::env::temp_dir().join(format!("barrier-cert-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join(format!("{tag}.certificate.json"));
    let report = dir.join(format!("{tag}.report.json"));
    let argv: Vec<String> = vec![
        "barrier-cert".into(),
        "certify".into(),
        problem.display().to_string(),
        "--out".into(),
        out.display().to_string(),
        "--report".into(),
        report.display().to_string(),
    ];
    let start = Instant::now();
    let exit_code = run(&Cli::parse_from(&argv), &argv);
    let seconds = start.elapsed().as_secs_f64();
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let cert: serde_json::Value = std::fs::read_to_string(&out)
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or(serde_json::Value::Null);
    let boxes = cert["x_partial"]
        .as_array()
        .map(|a| {
            a.iter()
                .map(|b| {
                    let v = |k: &str| b[k].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect::<Vec<_>>();
                    HyperRectangle::new(v("lo"), v("hi")).unwrap()
                })
                .collect()
        })
        .unwrap_or_default();
    CaseRun {
        verdict: rep["verdict"].as_str().unwrap_or("none").to_string(),
        boxes,
        seconds,
        exit_code,
    }
}

/// `Certified`, X∂ = X_s, box count within ×2 of the reference, under the time limit.
fn case_studies() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, reference) in [("pendulum", PENDULUM_REFERENCE_BOXES), ("bicycle", BICYCLE_REFERENCE_BOXES)] {
        let path = fixtures().join(name).join("problem.json");
        let safe = load_problem(&path).unwrap().safe_set;
        let run = run_certify(&path, name);
        // Partition boxes tile disjointly, so equal volume inside X_s means cover.
        let covered: f64 = run.boxes.iter().map(|b| b.overlap_volume(&safe)).sum::<f64>() + 0.0;
        let cover = (covered - safe.volume()).abs() <= COVER_REL_TOL * safe.volume();
        let count = run.boxes.len() as f64;
        let count_ok = count >= reference / BOX_COUNT_FACTOR && count <= reference * BOX_COUNT_FACTOR;
        let certified = run.verdict == "Certified" && run.exit_code == 0;
        let fast = run.seconds < CASE_STUDY_SECONDS;
        pass &= certified && cover && count_ok && fast;
        parts.push(format!(
            "{name}: verdict {} (exit {}), X_partial = X_s {cover} ({:.1}% of X_s), {} boxes (want {}..={}), {:.1} s",
            run.verdict,
            run.exit_code,
            100.0 * covered / safe.volume(),
            run.boxes.len(),
            reference / BOX_COUNT_FACTOR,
            reference * BOX_COUNT_FACTOR,
            run.seconds
        ));
    }
    outcome(pass, parts.join("; "))
}

/// Trajectories started in the certified component never leave it.
fn invariance_simulation() -> Outcome {
    let mut r = rng(1006);
    let mut parts = Vec::new();
    let mut pass = true;
    let mut certified_runs = 0;
    for name in ["pendulum", "bicycle", "contraction"] {
        let p = load_problem(&fixtures().join(name).join("problem.json")).unwrap();
        let cert = certify(&p).unwrap();
        if cert.verdict != Verdict::Certified {
            parts.push(format!("{name}: {:?}, not simulated", cert.verdict));
            continue;
        }
        certified_runs += 1;
        let component = cert.component.as_ref().unwrap();
        let bbox = cert.component_bbox.as_ref().unwrap();
        let inside = |x: &[f64]| p.barrier.eval(x) <= INVARIANCE_TOL && component.covers_point(x, TAU_SIGN);
        let mut exits = 0usize;
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..TRAJECTORIES {
            let mut x = loop {
                let x = sample(&mut r, bbox);
                if p.barrier.eval(&x) <= 0.0 && component.covers_point(&x, 0.0) {
                    break x;
                }
            };
            for _ in 0..STEPS {
                x = p.dynamics.evaluate(&x).unwrap();
                worst = worst.max(p.barrier.eval(&x));
                if !inside(&x) {
                    exits += 1;
                    break;
                }
            }
        }
        pass &= exits == 0;
        parts.push(format!(
            "{name}: {TRAJECTORIES} x {STEPS} steps, {exits} exits, max barrier {worst:.3e}"
        ));
    }
    pass &= certified_runs > 0;
    outcome(pass, format!("{certified_runs} certified runs; {}", parts.join("; ")))
}

/// Median component region count grows by the expected factor from N=32 to N=64.
fn scaling_shape() -> Outcome {
    let dir = fixtures().join("synthetic");
    let stats = |neurons: usize| -> (Vec<f64>, Vec<f64>) {
        (0..5)
            .map(|s| {
                let p = load_sublevel_problem(&dir.join(format!("d2_n{neurons}_s{s}.problem.json"))).unwrap();
                let opts = SubLevelOptions {
                    confinement: hull(&p.x_partial).unwrap().facet_functionals(),
                    ..Default::default()
                };
                let start = Instant::now();
                let c = enumerate_sublevel_component_with(&p.barrier, &p.x0, &opts).unwrap();
                (c.len() as f64, start.elapsed().as_secs_f64())
            })
            .unzip()
    };
    let (c32, t32) = stats(32);
    let (c64, t64) = stats(64);
    let ratio = median(c64.clone()) / median(c32.clone());
    let time_ratio = median(t64) / median(t32);
    outcome(
        ratio >= SCALING_RATIO.0 && ratio <= SCALING_RATIO.1,
        format!(
            "median regions N=32 {} / N=64 {}: ratio {ratio:.2} (want {}..={}); median runtime ratio {time_ratio:.2} (reported only)",
            median(c32),
            median(c64),
            SCALING_RATIO.0,
            SCALING_RATIO.1
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("region enumeration oracle", region_oracle),
        ("sub-level component oracle", sublevel_oracle),
        ("CROWN soundness", crown_soundness),
        ("partition soundness", partition_soundness),
        ("case studies", case_studies),
        ("invariance simulation", invariance_simulation),
        ("scaling shape", scaling_shape),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.1} s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 7 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
