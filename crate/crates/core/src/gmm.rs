//! Two-component one-dimensional Gaussian mixture fitted by EM.
//!
//! Used on per-instance losses: the low-mean component models instances the
//! classifier fits well, the high-mean component the ones it does not.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RafniError, Result};
use crate::rng::rng_from_seed;

pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Integration grid for [`overlap`].
const OVERLAP_STEPS: usize = 4096;
const OVERLAP_SPAN_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        let g = Self { mean, std };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if !(self.mean.is_finite() && self.std.is_finite() && self.std > 0.0) {
            return Err(RafniError::InvalidGaussian { mean: self.mean, std: self.std });
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        (-0.5 * z * z).exp() / (self.std * (2.0 * PI).sqrt())
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        -0.5 * z * z - self.std.ln() - 0.5 * (2.0 * PI).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    /// Component with the smaller mean.
    pub clean: Gaussian,
    /// Component with the larger mean.
    pub noisy: Gaussian,
    pub weight_clean: f64,
    pub weight_noisy: f64,
    /// Total (not averaged) log-likelihood at the returned parameters.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GmmFit {
    /// Posterior probability that `x` belongs to the noisy component.
    pub fn noisy_responsibility(&self, x: f64) -> f64 {
        let a = self.weight_clean.ln() + self.clean.ln_pdf(x);
        let b = self.weight_noisy.ln() + self.noisy.ln_pdf(x);
        let m = a.max(b);
        let eb = (b - m).exp();
        eb / ((a - m).exp() + eb)
    }

    pub fn mean_gap(&self) -> f64 {
        mean_gap(self)
    }

    pub fn overlap(&self) -> f64 {
        overlap_unchecked(&self.clean, &self.noisy)
    }
}

pub fn mean_gap(fit: &GmmFit) -> f64 {
    fit.noisy.mean - fit.clean.mean
}

/// Fit with the default iteration cap and tolerance.
pub fn fit_default(values: &[f64], seed: u64) -> Result<GmmFit> {
    fit_two_component(values, DEFAULT_MAX_ITER, DEFAULT_TOL, seed)
}

pub fn fit_two_component(values: &[f64], max_iter: usize, tol: f64, seed: u64) -> Result<GmmFit> {
    fit_two_component_traced(values, max_iter, tol, seed, |_| {})
}

/// EM fit reporting the log-likelihood after every E-step through `on_iter`.
///
/// Initialization splits the sorted values at the median and takes each
/// half's moments, weights 0.5/0.5. The seed is only consulted when the two
/// halves share the same mean (heavily tied data), to nudge them apart.
pub fn fit_two_component_traced(
    values: &[f64],
    max_iter: usize,
    tol: f64,
    seed: u64,
    mut on_iter: impl FnMut(f64),
) -> Result<GmmFit> {
    let n = values.len();
    if n < 4 {
        return Err(RafniError::InsufficientData { got: n, need: 4 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(RafniError::Shape("non-finite value in GMM input".into()));
    }
    let total_mean = values.iter().sum::<f64>() / n as f64;
    let total_var = values.iter().map(|v| (v - total_mean).powi(2)).sum::<f64>() / n as f64;
    if total_var == 0.0 || values.iter().all(|&v| v == values[0]) {
        return Err(RafniError::DegenerateData);
    }
    let var_floor = (1e-6 * total_var).max(1e-8);

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let half = n / 2;
    let moments = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / s.len() as f64;
        (m, v.max(var_floor))
    };
    let (mut mu0, mut var0) = moments(&sorted[..half]);
    let (mut mu1, mut var1) = moments(&sorted[half..]);
    if mu0 == mu1 {
        let mut rng = rng_from_seed(seed);
        let jitter = total_var.sqrt() * 1e-3;
        mu0 -= jitter * rng.random::<f64>();
        mu1 += jitter * rng.random::<f64>();
    }
    let mut w0: f64 = 0.5;
    let mut w1: f64 = 0.5;

    let mut resp = vec![0.0; n];
    let mut prev_ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut ll;
    loop {
        // E-step
        let g0 = Gaussian { mean: mu0, std: var0.sqrt() };
        let g1 = Gaussian { mean: mu1, std: var1.sqrt() };
        let (lw0, lw1) = (w0.ln(), w1.ln());
        ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(values) {
            let a = lw0 + g0.ln_pdf(x);
            let b = lw1 + g1.ln_pdf(x);
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            *r = (b - lse).exp();
            ll += lse;
        }
        on_iter(ll);

        if iterations > 0 && (ll - prev_ll).abs() <= tol * prev_ll.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        prev_ll = ll;
        iterations += 1;

        // M-step
        let n1: f64 = resp.iter().sum();
        let n0 = n as f64 - n1;
        if n0 <= 0.0 || n1 <= 0.0 {
            // one component absorbed everything: no second population
            break;
        }
        mu0 = resp.iter().zip(values).map(|(r, x)| (1.0 - r) * x).sum::<f64>() / n0;
        mu1 = resp.iter().zip(values).map(|(r, x)| r * x).sum::<f64>() / n1;
        var0 = (resp.iter().zip(values).map(|(r, x)| (1.0 - r) * (x - mu0).powi(2)).sum::<f64>() / n0)
            .max(var_floor);
        var1 = (resp.iter().zip(values).map(|(r, x)| r * (x - mu1).powi(2)).sum::<f64>() / n1)
            .max(var_floor);
        w1 = n1 / n as f64;
        w0 = 1.0 - w1;
    }

    let a = Gaussian { mean: mu0, std: var0.sqrt() };
    let b = Gaussian { mean: mu1, std: var1.sqrt() };
    let (clean, noisy, wc, wn) = if a.mean <= b.mean { (a, b, w0, w1) } else { (b, a, w1, w0) };
    clean.validate()?;
    noisy.validate()?;
    Ok(GmmFit {
        clean,
        noisy,
        weight_clean: wc,
        weight_noisy: wn,
        log_likelihood: ll,
        iterations,
        converged,
    })
}

/// Overlapping coefficient `∫ min(pdf_a, pdf_b) dx` of two unit-mass
/// densities, by the trapezoid rule on 4096 steps spanning
/// `[min(μ) - 6·max(σ), max(μ) + 6·max(σ)]`.
pub fn overlap(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(overlap_unchecked(a, b))
}

fn overlap_unchecked(a: &Gaussian, b: &Gaussian) -> f64 {
    // canonical argument order makes the result exactly symmetric
    let (a, b) = if (a.mean, a.std) <= (b.mean, b.std) { (a, b) } else { (b, a) };
    let s = a.std.max(b.std);
    let lo = a.mean.min(b.mean) - OVERLAP_SPAN_SIGMAS * s;
    let hi = a.mean.max(b.mean) + OVERLAP_SPAN_SIGMAS * s;
    let h = (hi - lo) / OVERLAP_STEPS as f64;
    let f = |x: f64| a.pdf(x).min(b.pdf(x));
    let mut acc = 0.5 * (f(lo) + f(hi));
    for i in 1..OVERLAP_STEPS {
        acc += f(lo + h * i as f64);
    }
    (acc * h).clamp(0.0, 1.0)
}
