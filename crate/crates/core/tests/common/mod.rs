//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use rafni::dataset::Matrix;
use rafni::engine::{Action, ActionLogEntry, EpochSnapshot};
use rafni::gmm;
use rafni::models::{Classifier, ClassifierKind, ClassifierSpec};
use rafni::{RafniConfig, RafniEngine};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Interpolated quantile, written out step by step.
pub fn sorted_quantile(values: &[f64], order: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * order;
    let i = h.floor() as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[i] + (h - i as f64) * (v[i + 1] - v[i])
}

pub fn first_argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for c in 1..p.len() {
        if p[c] > p[best] {
            best = c;
        }
    }
    best
}

/// The filter rule stated plainly: the last `len` predictions exist and
/// every adjacent pair among them differs.
pub fn record_oracle(history: &[usize], len: usize) -> bool {
    if history.len() < len {
        return false;
    }
    let window = &history[history.len() - len..];
    let mut changes = 0;
    for i in 1..window.len() {
        if window[i] != window[i - 1] {
            changes += 1;
        }
    }
    changes == len - 1
}

pub fn normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
}

/// Midpoint rule for the integral of min(pdf_a, pdf_b).
pub fn overlap_oracle(a: (f64, f64), b: (f64, f64), points: usize) -> f64 {
    let lo = (a.0 - 12.0 * a.1).min(b.0 - 12.0 * b.1);
    let hi = (a.0 + 12.0 * a.1).max(b.0 + 12.0 * b.1);
    let h = (hi - lo) / points as f64;
    let mut sum = 0.0;
    for i in 0..points {
        let x = lo + (i as f64 + 0.5) * h;
        sum += normal_pdf(x, a.0, a.1).min(normal_pdf(x, b.0, b.1));
    }
    sum * h
}

/// Mean cross-entropy recomputed from the flat parameter layout with no
/// shared code.
pub fn reference_loss(model: &Classifier, params: &[f64], x: &Matrix, labels: &[usize]) -> f64 {
    let spec = model.spec();
    let (d, k, h) = (spec.input_dim, spec.n_classes, spec.hidden_units);
    let mut total = 0.0;
    for i in 0..x.rows() {
        let xi = x.row(i);
        let logits: Vec<f64> = match spec.kind {
            ClassifierKind::SoftmaxRegression => (0..k)
                .map(|c| params[d * k + c] + (0..d).map(|j| xi[j] * params[j * k + c]).sum::<f64>())
                .collect(),
            ClassifierKind::Mlp => {
                let hidden: Vec<f64> = (0..h)
                    .map(|u| (params[d * h + u] + (0..d).map(|j| xi[j] * params[j * h + u]).sum::<f64>()).max(0.0))
                    .collect();
                let off = d * h + h;
                (0..k)
                    .map(|c| params[off + h * k + c] + (0..h).map(|u| hidden[u] * params[off + u * k + c]).sum::<f64>())
                    .collect()
            }
        };
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - logits[labels[i]];
    }
    total / x.rows() as f64
}

/// Random small problem with non-trivial parameters.
pub fn random_problem(kind: ClassifierKind, seed: u64) -> (Classifier, Matrix, Vec<usize>) {
    let mut r = rng(seed);
    let d = r.random_range(1..5);
    let k = r.random_range(2..5);
    let spec = match kind {
        ClassifierKind::SoftmaxRegression => ClassifierSpec::softmax(d, k),
        ClassifierKind::Mlp => ClassifierSpec::mlp(d, r.random_range(1..7), k),
    };
    let mut model = Classifier::init(spec, seed).unwrap();
    for p in model.params_mut() {
        let z: f64 = StandardNormal.sample(&mut r);
        *p = 0.7 * z;
    }
    let n = r.random_range(1..9);
    let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect();
    let labels = (0..n).map(|_| r.random_range(0..k)).collect();
    (model, Matrix::new(n, d, x).unwrap(), labels)
}

/// Central differences of [`reference_loss`].
pub fn finite_difference(model: &Classifier, x: &Matrix, labels: &[usize], eps: f64) -> Vec<f64> {
    let mut p = model.params().to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + eps;
            let up = reference_loss(model, &p, x, labels);
            p[i] = orig - eps;
            let down = reference_loss(model, &p, x, labels);
            p[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Per-instance epoch data indexed by instance id: loss and probabilities.
pub struct EpochData {
    pub losses: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
}

/// Random epochs that look like training: a noisy subset with high losses,
/// losses shrinking over time, predictions that mostly agree with a hidden
/// class and occasionally wander.
pub fn random_epochs(n: usize, k: usize, epochs: usize, wander: f64, seed: u64) -> (Vec<usize>, Vec<EpochData>) {
    let mut r = rng(seed);
    let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let noisy: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.3).collect();
    let labels: Vec<usize> = (0..n)
        .map(|i| if noisy[i] { (truth[i] + 1 + r.random_range(0..k - 1)) % k } else { truth[i] })
        .collect();
    let mut out = Vec::with_capacity(epochs);
    for m in 0..epochs {
        let scale = 1.0 / (1.0 + m as f64 / 25.0);
        // now and then an epoch with flat losses
        let flat = r.random::<f64>() < 0.05;
        let mut losses = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n);
        for i in 0..n {
            let base = if noisy[i] { 2.0 + r.random::<f64>() } else { 0.2 * r.random::<f64>() };
            losses.push(if flat { 1.0 + 0.01 * r.random::<f64>() } else { base * scale + 0.01 * r.random::<f64>() });
            let pred = if r.random::<f64>() < wander { r.random_range(0..k) } else { truth[i] };
            let conf = 0.3 + 0.7 * r.random::<f64>();
            let mut p: Vec<f64> = (0..k).map(|_| r.random::<f64>()).collect();
            let rest: f64 = (0..k).filter(|&c| c != pred).map(|c| p[c]).sum();
            for (c, pc) in p.iter_mut().enumerate() {
                *pc = if c == pred { conf } else { (1.0 - conf) * *pc / rest };
            }
            probs.push(p);
        }
        out.push(EpochData { losses, probs });
    }
    (labels, out)
}

/// Snapshot for the engine over the given active ids.
pub fn snapshot_for(epoch: usize, ids: &[usize], data: &EpochData) -> EpochSnapshot {
    let k = data.probs[0].len();
    let losses = ids.iter().map(|&i| data.losses[i]).collect();
    let flat = ids.iter().flat_map(|&i| data.probs[i].iter().copied()).collect();
    EpochSnapshot::new(epoch, ids.to_vec(), losses, Matrix::new(ids.len(), k, flat).unwrap()).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefEntry {
    pub epoch: usize,
    pub id: usize,
    pub kind: &'static str,
    pub old: usize,
    pub new: Option<usize>,
    pub trigger: f64,
}

pub fn to_ref(e: &ActionLogEntry) -> RefEntry {
    RefEntry {
        epoch: e.epoch,
        id: e.instance_id,
        kind: match e.action {
            Action::RemovedByLoss => "loss",
            Action::RemovedByRecord => "record",
            Action::Relabelled => "relabel",
        },
        old: e.old_label,
        new: e.new_label,
        trigger: e.trigger_value,
    }
}

pub struct RefOutcome {
    pub active: Vec<bool>,
    pub labels: Vec<usize>,
    pub log: Vec<RefEntry>,
}

/// Straight-line reading of the algorithm: thresholds from the previous
/// epoch's losses and misclassified max-probabilities, freeze on a small
/// mixture gap, then per instance grace -> loss filter -> relabel -> record
/// filter. Starts after the first epoch whose overlap is small or rising.
pub fn reference_engine(cfg: &RafniConfig, labels: &[usize], epochs: &[EpochData]) -> RefOutcome {
    let n = labels.len();
    let mut active = vec![true; n];
    let mut label = labels.to_vec();
    let mut record: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut grace = vec![0usize; n];
    let (mut started, mut frozen) = (false, false);
    let (mut lt, mut pt): (Option<f64>, Option<f64>) = (None, None);
    let mut prev_overlap: Option<f64> = None;
    let mut prev: Option<(Vec<usize>, f64)> = None; // ids of the previous epoch, its mixture gap
    let mut prev_epoch = 0;
    let mut log = Vec::new();

    for (m, data) in epochs.iter().enumerate() {
        let ids: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
        let losses: Vec<f64> = ids.iter().map(|&i| data.losses[i]).collect();
        let fit = if losses.len() >= 4 { gmm::fit_default(&losses, 0).ok() } else { None };

        if started && !frozen {
            let (pids, gap) = prev.as_ref().unwrap();
            if !pids.is_empty() {
                let pdata = &epochs[prev_epoch];
                let plosses: Vec<f64> = pids.iter().map(|&i| pdata.losses[i]).collect();
                lt = Some(sorted_quantile(&plosses, cfg.quantile_loss));
                let miss: Vec<f64> = pids
                    .iter()
                    .filter(|&&i| first_argmax(&pdata.probs[i]) != label[i])
                    .map(|&i| pdata.probs[i].iter().cloned().fold(0.0, f64::max))
                    .collect();
                if !miss.is_empty() {
                    pt = Some(sorted_quantile(&miss, cfg.quantile_prob));
                }
                if *gap < cfg.mean_gap_freeze {
                    frozen = true;
                }
            }
        }

        for &i in &ids {
            let p = &data.probs[i];
            let pred = first_argmax(p);
            let maxp = p[pred];
            let push = |rec: &mut Vec<usize>| {
                rec.push(pred);
                if rec.len() > cfg.record_length {
                    rec.remove(0);
                }
            };
            if !started {
                push(&mut record[i]);
                continue;
            }
            if grace[i] > 0 {
                grace[i] -= 1;
                push(&mut record[i]);
                continue;
            }
            if data.losses[i] > lt.unwrap() {
                active[i] = false;
                log.push(RefEntry { epoch: m, id: i, kind: "loss", old: label[i], new: None, trigger: data.losses[i] });
            } else if pt.is_some() && maxp > pt.unwrap() && pred != label[i] {
                log.push(RefEntry { epoch: m, id: i, kind: "relabel", old: label[i], new: Some(pred), trigger: maxp });
                label[i] = pred;
                record[i].clear();
                grace[i] = cfg.not_change_epochs;
            } else {
                push(&mut record[i]);
                if record_oracle(&record[i], cfg.record_length) {
                    active[i] = false;
                    log.push(RefEntry {
                        epoch: m,
                        id: i,
                        kind: "record",
                        old: label[i],
                        new: None,
                        trigger: (cfg.record_length - 1) as f64,
                    });
                }
            }
        }

        if !started {
            if let Some(f) = &fit {
                let ov = f.overlap();
                if ov < cfg.overlap_start_threshold || prev_overlap.is_some_and(|p| ov > p) {
                    started = true;
                }
                prev_overlap = Some(ov);
            }
        }
        prev = Some((ids, fit.as_ref().map_or(0.0, |f| f.noisy.mean - f.clean.mean)));
        prev_epoch = m;
    }
    RefOutcome { active, labels: label, log }
}

/// Drive the real engine over the same epochs.
pub fn run_engine(cfg: &RafniConfig, labels: &[usize], epochs: &[EpochData]) -> RafniEngine {
    let ids: Vec<usize> = (0..labels.len()).collect();
    let mut engine = RafniEngine::new(cfg.clone(), &ids, labels, None).unwrap();
    for (m, data) in epochs.iter().enumerate() {
        let snap = snapshot_for(m, &engine.active_ids(), data);
        engine.observe(snap).unwrap();
    }
    engine
}

/// Compare engine and reference; returns a description of the first
/// difference.
pub fn compare_with_reference(cfg: &RafniConfig, labels: &[usize], epochs: &[EpochData]) -> Result<usize, String> {
    let reference = reference_engine(cfg, labels, epochs);
    let engine = run_engine(cfg, labels, epochs);
    let log: Vec<RefEntry> = engine.action_log().iter().map(to_ref).collect();
    if log.len() != reference.log.len() {
        return Err(format!("action counts differ: engine {} vs reference {}", log.len(), reference.log.len()));
    }
    for (a, b) in log.iter().zip(&reference.log) {
        if a != b || a.trigger.to_bits() != b.trigger.to_bits() {
            return Err(format!("first differing action: engine {a:?} vs reference {b:?}"));
        }
    }
    for s in engine.states() {
        if s.active != reference.active[s.id] || s.current_label != reference.labels[s.id] {
            return Err(format!("instance {} differs in final state", s.id));
        }
    }
    Ok(log.len())
}
