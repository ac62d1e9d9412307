//! Acceptance suite: one test per release criterion, covering the worked
//! loss values, the pool construction, the regret guarantees, substitution
//! correctness, p-value calibration and signal detection on synthetic
//! cohorts, and byte-level determinism of the CLI.
//!
//! Run with `cargo test -p brier-aa-cli --test acceptance -- --nocapture`
//! to see one PASS line per criterion.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use brier_aa::aggregation::{aa_step, run_online, substitute, AggregatorState};
use brier_aa::experts::{build_pool, expert_predict, power_law_prior, CombinationExpert};
use brier_aa::game::{brier_loss, half_loss, Distribution, OutcomeSpace};
use brier_aa::stats::{pvalue, GridSpec};
use brier_aa::synth::{generate, SynthConfig};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn random_dist(rng: &mut ChaCha8Rng) -> Distribution {
    let raw: [f64; 3] = [unit(rng) + 1e-9, unit(rng) + 1e-9, unit(rng) + 1e-9];
    let total: f64 = raw.iter().sum();
    Distribution::new(raw.iter().map(|x| x / total).collect()).unwrap()
}

fn random_events(rng: &mut ChaCha8Rng, k: usize, steps: usize) -> Vec<(Vec<Distribution>, usize)> {
    (0..steps)
        .map(|_| {
            let preds: Vec<Distribution> = (0..k).map(|_| random_dist(rng)).collect();
            ((preds), (rng.next_u64() % 3) as usize)
        })
        .collect()
}

#[test]
fn criterion_01_brier_worked_example() {
    let gamma = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
    let loss = brier_loss(0, &gamma).unwrap();
    assert!((loss - 0.375).abs() <= 1e-15, "loss {loss}");
    println!("acceptance 1 PASS: brier worked example = 3/8 exactly");
}

#[test]
fn criterion_02_pool_size_and_partition() {
    let pool = build_pool(67).unwrap();
    assert_eq!(pool.len(), 537);
    let ca125_with_peak = pool
        .iter()
        .filter(|e| e.v() == 1 && e.doubled_w() != 0)
        .count();
    let peak_only = pool.iter().filter(|e| e.v() == 0).count();
    let ca125_only = pool
        .iter()
        .filter(|e| e.v() == 1 && e.doubled_w() == 0)
        .count();
    assert_eq!(
        (ca125_with_peak, peak_only, ca125_only),
        (402, 134, 1),
        "partition"
    );
    println!("acceptance 2 PASS: pool of 537 = 402 + 134 + 1");
}

#[test]
fn criterion_03_regret_bound_uniform_prior() {
    let space = OutcomeSpace::triplet();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce05);
    let mut worst_slack = f64::INFINITY;
    for _ in 0..100 {
        let k = 2 + (rng.next_u64() % 599) as usize;
        let steps = 1 + (rng.next_u64() % 300) as usize;
        let events = random_events(&mut rng, k, steps);
        let records = run_online(space, &vec![1.0; k], 1.0, &events, false).unwrap();
        let learner: f64 = records.iter().map(|r| r.learner_loss).sum();
        let mut best = f64::INFINITY;
        for expert in 0..k {
            let total: f64 = records.iter().map(|r| r.expert_losses[expert]).sum();
            best = best.min(total);
        }
        let bound = (k as f64).ln();
        assert!(
            learner - best <= bound + 1e-9,
            "K={k}, N={steps}: regret {} > ln K = {bound}",
            learner - best
        );
        worst_slack = worst_slack.min(bound - (learner - best));
    }
    println!("acceptance 3 PASS: regret <= ln K on 100 runs (min slack {worst_slack:.4})");
}

#[test]
fn criterion_04_regret_bound_power_law_prior() {
    let space = OutcomeSpace::triplet();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce06);
    let eta = 0.65;
    for _ in 0..100 {
        let num_peaks = 1 + (rng.next_u64() % 74) as u16; // pools of 9..=593
        let pool = build_pool(num_peaks).unwrap();
        let prior = power_law_prior(&pool, 1.2).unwrap();
        let total_prior: f64 = prior.iter().sum();
        let steps = 1 + (rng.next_u64() % 300) as usize;
        let events = random_events(&mut rng, pool.len(), steps);
        let records = run_online(space, &prior, eta, &events, false).unwrap();
        let learner: f64 = records.iter().map(|r| r.learner_loss).sum();
        for (expert, weight) in prior.iter().enumerate() {
            let loss_k: f64 = records.iter().map(|r| r.expert_losses[expert]).sum();
            let bound = (total_prior / weight).ln() / eta;
            assert!(
                learner - loss_k <= bound + 1e-9,
                "K={}, expert {expert}: excess {} > {bound}",
                pool.len(),
                learner - loss_k
            );
        }
    }
    println!("acceptance 4 PASS: general-prior bound holds on 100 runs (d=1.2, eta=0.65)");
}

#[test]
fn criterion_05_substitution_matches_bisection() {
    fn bisect(g: &[f64]) -> f64 {
        let spend = |s: f64| g.iter().map(|&v| (s - v).max(0.0)).sum::<f64>() - 2.0;
        let mut lo = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hi = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if spend(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xacce07);
    for _ in 0..100_000 {
        let n = 2 + (rng.next_u64() % 6) as usize;
        let g: Vec<f64> = (0..n).map(|_| (unit(&mut rng) - 0.5) * 10.0).collect();
        let (gamma, s) = substitute(&g).unwrap();
        let residual = g.iter().map(|&v| (s - v).max(0.0)).sum::<f64>() - 2.0;
        assert!(residual.abs() < 1e-9, "residual {residual} for {g:?}");
        assert!((s - bisect(&g)).abs() < 1e-9, "s {s} vs oracle for {g:?}");
        let mass: f64 = gamma.probs().iter().sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }
    println!("acceptance 5 PASS: water filling matches bisection on 100000 vectors");
}

#[test]
fn criterion_06_single_expert_recovery() {
    let space = OutcomeSpace::triplet();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce08);
    for _ in 0..100 {
        let eta = 0.05 + 0.95 * unit(&mut rng);
        let state = AggregatorState::uniform(space, 1, eta).unwrap();
        let expert = random_dist(&mut rng);
        let prediction = aa_step(&state, std::slice::from_ref(&expert)).unwrap();
        for (a, b) in prediction.probs().iter().zip(expert.probs()) {
            assert!((a - b).abs() <= 1e-9, "{prediction:?} vs {expert:?}");
        }
    }
    println!("acceptance 6 PASS: K=1 recovery within 1e-9 on 100 random forecasts");
}

#[test]
fn criterion_07_pvalue_validity_under_null() {
    // 200 independent null cohorts; each p-value from 200 trials. The
    // permutation p-value must be (super-)uniform: Prob(p <= delta) can
    // exceed delta only by Monte-Carlo noise.
    let pool = build_pool(4).unwrap();
    let grid = GridSpec::new(vec![1.1, 1.5, 2.0], vec![0.2, 0.6, 1.0]).unwrap();
    let mut pvalues = Vec::with_capacity(200);
    for rep in 0..200u64 {
        let cohort = generate(&SynthConfig {
            n_triplets: 30,
            n_peaks: 4,
            signal_strength: 0.0,
            signal_horizon: 15.0,
            informative_peaks: vec![],
            seed: 9_000 + rep,
        })
        .unwrap();
        let report = pvalue(cohort.triplets(), &grid, &pool, 200, 70_000 + rep, 0.0).unwrap();
        pvalues.push(report.p_value);
    }
    for delta in [0.05, 0.1, 0.25, 0.5] {
        let frac = pvalues.iter().filter(|&&p| p <= delta).count() as f64 / 200.0;
        assert!(
            frac <= delta + 0.06,
            "Prob(p <= {delta}) = {frac} exceeds {delta} + 0.06"
        );
        println!("acceptance 7: Prob(p <= {delta}) = {frac:.3}");
    }
    println!("acceptance 7 PASS: null p-values are valid at all checked levels");
}

#[test]
fn criterion_08_planted_signal_detection() {
    // Signal calibrated so the CA125-only rule errs on roughly 5% of the
    // earliest windows; it decays to zero at 15 months. The aggregator's
    // permutation p-values must be significant for every window start
    // t <= horizon - 6 and not significant once the window lies entirely
    // past the horizon (window starts 15 and 16).
    let horizon = 15.0;
    let cohort = generate(&SynthConfig {
        n_triplets: 179,
        n_peaks: 8,
        signal_strength: 1.8,
        signal_horizon: horizon,
        informative_peaks: vec![2, 3, 7],
        seed: 20_260_108,
    })
    .unwrap();
    let pool = build_pool(8).unwrap();

    // Calibration: CA125 error fraction over the earliest window, the
    // triplets 0..6 months before diagnosis.
    let ca125 = CombinationExpert::ca125_only();
    let window = cohort.select_window(0.0, 6.0, false);
    let errors: f64 = window
        .iter()
        .map(|triplet| {
            let pred = expert_predict(&ca125, triplet).unwrap();
            half_loss(triplet.case_position(), &pred).unwrap()
        })
        .sum();
    let fraction = errors / window.len() as f64;
    assert!(
        (0.0..=0.12).contains(&fraction),
        "CA125 error fraction at t=0..6 is {fraction}, outside the ~5% calibration band"
    );
    println!(
        "acceptance 8: CA125 error fraction on the 0-6 month window = {fraction:.3} ({} triplets)",
        window.len()
    );

    let grid = GridSpec::default_grid();
    let significant_up_to = (horizon - 6.0) as u32;
    for t in (0..=significant_up_to).chain([15, 16]) {
        let window = cohort.select_window(t as f64, 6.0, false);
        assert!(!window.is_empty(), "window t={t} is empty");
        let report = pvalue(&window, &grid, &pool, 1000, 555, t as f64).unwrap();
        let p = report.p_value;
        if t as f64 <= horizon - 6.0 {
            assert!(p < 0.05, "t={t}: p = {p} should be significant");
        } else {
            assert!(p > 0.05, "t={t}: p = {p} should not be significant");
        }
        println!(
            "acceptance 8: t={t:2} |S|={:3} p={p:.4}",
            report.window_size
        );
    }
    println!("acceptance 8 PASS: significance up to t={significant_up_to}, gone past the horizon");
}

// ---------------------------------------------------------------------------
// CLI-level criteria
// ---------------------------------------------------------------------------

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_brier-aa"))
}

fn out_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join(format!("brier_aa_acceptance_{}", std::process::id()))
        .join(name);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str]) {
    let output = bin().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

fn assert_same_bytes(a: &Path, b: &Path) {
    let left = fs::read(a).unwrap();
    let right = fs::read(b).unwrap();
    assert!(
        left == right,
        "{} and {} differ ({} vs {} bytes)",
        a.display(),
        b.display(),
        left.len(),
        right.len()
    );
}

#[test]
fn criterion_09_cli_determinism() {
    let dir = out_dir("determinism");
    let synth_a = dir.join("a.csv");
    let synth_b = dir.join("b.csv");
    for out in [&synth_a, &synth_b] {
        run_ok(&[
            "synth",
            "--seed",
            "7",
            "--triplets",
            "40",
            "--peaks",
            "4",
            "--informative-peaks",
            "2,3",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    assert_same_bytes(&synth_a, &synth_b);

    // run: same seed twice.
    let run_dirs = [dir.join("run1"), dir.join("run2")];
    for out in &run_dirs {
        run_ok(&[
            "run",
            "--input",
            synth_a.to_str().unwrap(),
            "--eta",
            "1.0",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
    }
    assert_same_bytes(
        &run_dirs[0].join("losses.csv"),
        &run_dirs[1].join("losses.csv"),
    );

    // windows and pvalues: threads 1 vs threads 8 must agree byte for byte.
    let sweep = |name: &str, command: &str, threads: &str| -> PathBuf {
        let out = dir.join(name);
        run_ok(&[
            command,
            "--input",
            synth_a.to_str().unwrap(),
            "--seed",
            "11",
            "--trials",
            "60",
            "--grid-d",
            "1.1,1.6",
            "--grid-eta",
            "0.3,0.9",
            "--t-start",
            "0",
            "--t-end",
            "8",
            "--threads",
            threads,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        out
    };
    let w1 = sweep("w1", "windows", "1");
    let w8 = sweep("w8", "windows", "8");
    assert_same_bytes(&w1.join("table.csv"), &w8.join("table.csv"));
    assert_same_bytes(
        &w1.join("error_fractions.csv"),
        &w8.join("error_fractions.csv"),
    );
    let p1 = sweep("p1", "pvalues", "1");
    let p8 = sweep("p8", "pvalues", "8");
    assert_same_bytes(&p1.join("pvalues.csv"), &p8.join("pvalues.csv"));

    println!("acceptance 9 PASS: byte-identical outputs across reruns and thread counts");
}

#[test]
fn criterion_10_table_format_fidelity() {
    let dir = out_dir("table_format");
    let cohort_csv = dir.join("cohort.csv");
    run_ok(&[
        "synth",
        "--seed",
        "3",
        "--triplets",
        "179",
        "--peaks",
        "67",
        "--out",
        cohort_csv.to_str().unwrap(),
    ]);
    run_ok(&[
        "windows",
        "--input",
        cohort_csv.to_str().unwrap(),
        "--trials",
        "2",
        "--grid-d",
        "1.2",
        "--grid-eta",
        "0.65",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(dir.join("table.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,window_size,ca125_e,ca125_p,aa_e,aa_p,min_e,min_p,c3_1_e,c3_2_e,peak3_p,c2_e,peak2_p"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 17, "one row per t = 0..16");
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.split(',').count(), 13, "row {i} field count");
        assert!(
            row.starts_with(&format!("{i},")),
            "row {i} starts with its t"
        );
    }
    println!("acceptance 10 PASS: 17 windows with the full column set");
}

#[test]
fn cli_exit_codes_follow_contract() {
    // Usage error: conflicting sources -> exit 2 (clap's usage code).
    let output = bin()
        .args(["run", "--input", "x.csv", "--synth"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let output = bin().args(["run"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    // Data error: missing file -> exit 1.
    let output = bin()
        .args(["run", "--input", "/nonexistent/cohort.csv"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));

    // Malformed data -> exit 1 with the offending triplet named.
    let dir = out_dir("exit_codes");
    let bad = dir.join("bad.csv");
    fs::write(
        &bad,
        "triplet_id,patient_id,is_case,ca125,time_to_diagnosis_months,measurement_date,peak_001\n\
         t1,a,1,10,5,2001-01-01,1\nt1,b,1,11,5,2001-01-01,2\nt1,c,0,12,5,2001-01-01,3\n",
    )
    .unwrap();
    let output = bin()
        .args(["run", "--input", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("t1"), "stderr names the triplet: {stderr}");
}
