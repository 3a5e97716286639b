//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use rafni::engine::{process_epoch, EpochSnapshot, InstanceState, ThresholdState};
use rafni::eval::{run_experiment, ExperimentSpec, Protocol, TrainSetup};
use rafni::gmm::{self, Gaussian};
use rafni::models::ClassifierKind;
use rafni::noise::{inject_asymmetric, inject_symmetric};
use rafni::{gen_synthetic, Matrix, NoiseSpec, RafniConfig};
use rand::Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

/// 5000 draws from 0.6·N(0.2, 0.05²) + 0.4·N(1.5, 0.3²); means within 5%
/// relative error and weights within 0.05 for each of 5 seeds, under 1 s.
fn gmm_recovery() -> Outcome {
    let start = Instant::now();
    let (lo, hi) = (Normal::new(0.2, 0.05).unwrap(), Normal::new(1.5, 0.3).unwrap());
    let (mut worst_mean, mut worst_weight) = (0.0f64, 0.0f64);
    for seed in 0..5 {
        let mut r = rng(seed);
        let xs: Vec<f64> =
            (0..5000).map(|_| if r.random::<f64>() < 0.6 { lo.sample(&mut r) } else { hi.sample(&mut r) }).collect();
        let fit = match gmm::fit_default(&xs, seed) {
            Ok(f) => f,
            Err(e) => return outcome(false, format!("seed {seed}: fit failed: {e}")),
        };
        worst_mean = worst_mean.max((fit.clean.mean - 0.2).abs() / 0.2).max((fit.noisy.mean - 1.5).abs() / 1.5);
        worst_weight = worst_weight.max((fit.weight_clean - 0.6).abs()).max((fit.weight_noisy - 0.4).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst_mean <= 0.05 && worst_weight <= 0.05 && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!("max mean rel err {:.4}, max weight err {:.4}, {}", worst_mean, worst_weight, secs(elapsed)),
    )
}

fn overlap_calibration() -> Outcome {
    let g = |m, s| Gaussian::new(m, s).unwrap();
    let mut identical = 0.0f64;
    for (m, s) in [(0.0, 1.0), (3.0, 0.2), (-40.0, 7.5)] {
        identical = identical.max((gmm::overlap(&g(m, s), &g(m, s)).unwrap() - 1.0).abs());
    }
    let far = gmm::overlap(&g(0.0, 1.0), &g(100.0, 1.0)).unwrap();
    let near = gmm::overlap(&g(0.0, 1.0), &g(2.0, 1.0)).unwrap();
    let oracle = overlap_oracle((0.0, 1.0), (2.0, 1.0), 1_000_000);
    let pass = identical <= 1e-6 && far < 1e-6 && (near - oracle).abs() <= 1e-4;
    outcome(
        pass,
        format!("identical |1-ov| {:.2e}, far {:.2e}, near {:.8} vs oracle {:.8}", identical, far, near, oracle),
    )
}

/// 500 random epochs over 50 instances per scenario, compared action by
/// action with the straight-line reference; under 5 s.
fn engine_oracle() -> Outcome {
    let start = Instant::now();
    let scenarios = [
        (RafniConfig::default(), 0.05),
        (RafniConfig { quantile_loss: 0.99, quantile_prob: 0.6, record_length: 3, not_change_epochs: 2, ..Default::default() }, 0.15),
        (RafniConfig { quantile_loss: 0.9, quantile_prob: 0.8, record_length: 6, not_change_epochs: 8, ..Default::default() }, 0.3),
    ];
    let mut actions = 0;
    for (i, (cfg, wander)) in scenarios.iter().enumerate() {
        let (labels, epochs) = random_epochs(50, 4, 500, *wander, 300 + i as u64);
        match compare_with_reference(cfg, &labels, &epochs) {
            Ok(n) => actions += n,
            Err(msg) => return outcome(false, format!("scenario {i}: {msg}")),
        }
    }
    let elapsed = start.elapsed();
    outcome(
        elapsed < Duration::from_secs(5) && actions > 0,
        format!("{} scenarios identical, {actions} actions, {}", scenarios.len(), secs(elapsed)),
    )
}

fn record_filter() -> Outcome {
    let mut r = rng(44);
    let thresholds = ThresholdState { loss_threshold: Some(f64::INFINITY), started: true, ..Default::default() };
    let mut decisions = 0u64;
    let mut removals = 0u64;
    for len in 2..=6 {
        let cfg = RafniConfig { record_length: len, ..Default::default() };
        for stream in 0..10_000 {
            let k = r.random_range(2..6);
            let stay = r.random::<f64>();
            let mut states = vec![InstanceState::new(0, 0, None)];
            let mut history = Vec::new();
            let mut prev = 0;
            for t in 0..30 {
                let pred = if r.random::<f64>() < stay { prev } else { r.random_range(0..k) };
                prev = pred;
                history.push(pred);
                let probs: Vec<f64> = (0..k).map(|c| if c == pred { 0.9 } else { 0.1 / (k - 1) as f64 }).collect();
                let snap = EpochSnapshot::new(t, vec![0], vec![0.1], Matrix::new(1, k, probs).unwrap()).unwrap();
                let removed = !process_epoch(&snap, &mut states, &cfg, &thresholds).unwrap().is_empty();
                let expected = record_oracle(&history, len);
                decisions += 1;
                if removed != expected {
                    return outcome(false, format!("record_length {len}, stream {stream}, step {t}: engine {removed}, oracle {expected}"));
                }
                if removed {
                    removals += 1;
                    break;
                }
            }
        }
    }
    outcome(true, format!("{decisions} decisions over 5 x 10000 streams agree, {removals} removals"))
}

fn gradient_checks() -> Outcome {
    let mut worst = 0.0f64;
    for (kind, seeds) in [(ClassifierKind::SoftmaxRegression, 0..20u64), (ClassifierKind::Mlp, 100..120u64)] {
        for seed in seeds {
            let (model, x, labels) = random_problem(kind, seed);
            let rows: Vec<usize> = (0..x.rows()).collect();
            let mut grad = vec![0.0; model.n_params()];
            model.loss_and_grad(&x, &labels, &rows, &mut grad);
            for (a, b) in grad.iter().zip(finite_difference(&model, &x, &labels, 1e-5)) {
                worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-6));
            }
        }
    }
    outcome(worst < 1e-4, format!("40 instances, worst relative error {worst:.2e}"))
}

fn noise_exactness() -> Outcome {
    let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
    for (step, rate) in (1..=7).map(|i| (i, i as f64 / 10.0)) {
        let (noisy, report) = match inject_symmetric(&labels, 10, rate, step) {
            Ok(v) => v,
            Err(e) => return outcome(false, format!("rate {rate}: {e}")),
        };
        let want = (rate * 100.0 + 1e-9).floor() as usize;
        for c in 0..10 {
            let flipped = (0..1000).filter(|&i| labels[i] == c && noisy[i] != c).count();
            if flipped != want {
                return outcome(false, format!("rate {rate}, class {c}: {flipped} corrupted, want {want}"));
            }
        }
        if report.n_corrupted != want * 10 {
            return outcome(false, format!("rate {rate}: report says {}", report.n_corrupted));
        }
    }
    let pairs = [(9, 1), (2, 0), (4, 7), (3, 5), (5, 3)];
    let (noisy, report) = inject_asymmetric(&labels, 10, 0.4, &pairs, 3).unwrap();
    let on_target = (0..1000).filter(|&i| noisy[i] != labels[i]).all(|i| pairs.contains(&(labels[i], noisy[i])));
    let pass = report.realized_rate == 0.2 && on_target;
    outcome(pass, format!("symmetric 0.1..0.7 exact per class; asymmetric realized rate {}", report.realized_rate))
}

#[derive(Default, Clone)]
struct Arm {
    rafni: Vec<f64>,
    baseline: Vec<f64>,
    good_removals: Vec<f64>,
}

impl Arm {
    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }
    fn gap(&self) -> f64 {
        Self::mean(&self.rafni) - Self::mean(&self.baseline)
    }
}

const SEEDS: u64 = 5;
const SEPARATION: f64 = 3.0;

/// Blobs with k=4, d=2, n=3000, 20% stratified hold-out, SoftmaxRegression,
/// 40 epochs, one run per seed.
fn desk_scale(rate: f64) -> Arm {
    let runs: Vec<(f64, f64, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..SEEDS)
            .map(|seed| {
                scope.spawn(move || {
                    let ds = gen_synthetic(3000, 4, 2, SEPARATION, seed).unwrap();
                    let spec = ExperimentSpec {
                        rafni: RafniConfig::default(),
                        noise: Some(NoiseSpec::symmetric(rate)),
                        setup: TrainSetup { kind: ClassifierKind::SoftmaxRegression, epochs: 40, ..Default::default() },
                        protocol: Protocol::HoldOut { fraction: 0.2, stratified: true },
                        master_seed: seed,
                        baseline: true,
                    };
                    let res = run_experiment(&ds, &spec).unwrap();
                    (res.rafni.mean, res.baseline.unwrap().mean, res.audit.unwrap().pct_good_removals)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    Arm {
        rafni: runs.iter().map(|r| r.0).collect(),
        baseline: runs.iter().map(|r| r.1).collect(),
        good_removals: runs.iter().map(|r| r.2).collect(),
    }
}

fn cli_replay() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_rafni");
    let data = dir.path().join("blobs.csv");
    let run = |args: &[&str]| Command::new(bin).args(args).status().map(|s| s.success()).unwrap_or(false);
    let p = |x: &Path| x.to_str().unwrap().to_string();
    if !run(&["gen", "--out", &p(&data), "--seed", "7", "--gen.n", "600", "--gen.k", "4", "--gen.cluster_sep", "3.0"]) {
        return outcome(false, "gen failed".into());
    }
    let cv = |out: &Path, seed: &str| {
        run(&[
            "cv",
            "--data.path",
            &p(&data),
            "--out",
            &p(out),
            "--seed",
            seed,
            "--noise.kind",
            "symmetric",
            "--noise.rate",
            "0.4",
            "--train.epochs",
            "15",
            "--protocol.repeats",
            "2",
        ])
    };
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    if !(cv(&a, "21") && cv(&b, "21") && cv(&c, "22")) {
        return outcome(false, "cv run failed".into());
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap_or_default();
    let files = ["summary.json", "epochs.csv", "actions.csv"];
    let same = files.iter().all(|f| !read(&a, f).is_empty() && read(&a, f) == read(&b, f));
    let differs = files.iter().any(|f| read(&a, f) != read(&c, f));
    outcome(same && differs, format!("summary/epochs/actions byte-identical: {same}; another seed differs: {differs}"))
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "gmm recovery", gmm_recovery()),
        (2, "overlap calibration", overlap_calibration()),
        (3, "engine oracle equivalence", engine_oracle()),
        (4, "record filter brute force", record_filter()),
        (5, "gradient checks", gradient_checks()),
        (6, "noise rate exactness", noise_exactness()),
    ];

    let start = Instant::now();
    let at40 = desk_scale(0.4);
    let at10 = desk_scale(0.1);
    let elapsed = start.elapsed();
    let (g40, g10) = (at40.gap(), at10.gap());
    results.push((
        7,
        "desk-scale gap under noise",
        outcome(
            g40 >= 0.05 && g40 > g10 && elapsed < Duration::from_secs(120),
            format!(
                "40%: rafni {:.4} vs baseline {:.4} (gap {:+.4}, need >= +0.05); 10% gap {:+.4}; {}",
                Arm::mean(&at40.rafni),
                Arm::mean(&at40.baseline),
                g40,
                g10,
                secs(elapsed)
            ),
        ),
    ));
    let good = Arm::mean(&at40.good_removals);
    results.push((8, "audit precision", outcome(good >= 0.70, format!("mean pct_good_removals {good:.4} at 40% noise"))));
    let at0 = desk_scale(0.0);
    let g0 = at0.gap();
    results.push((
        9,
        "zero-noise safety",
        outcome(
            g0.abs() <= 0.02,
            format!("rafni {:.4} vs baseline {:.4} (|diff| {:.4})", Arm::mean(&at0.rafni), Arm::mean(&at0.baseline), g0.abs()),
        ),
    ));
    results.push((10, "determinism replay", cli_replay()));

    println!();
    for (n, name, o) in &results {
        println!("criterion {n:>2} {}  {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("\nacceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
