//! Closed-form hold-time statistics of the reselection counter process.
//!
//! A reservation lasts one counter draw (TBE), and is extended by a fresh
//! draw with probability `p_k` at each expiry. The total hold time (TBC) is
//! therefore a geometric mixture of self-convolutions of the TBE pmf,
//! evaluated here in the frequency domain on a zero-padded transform.

pub mod montecarlo;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the per-draw counter distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TbeForm {
    /// Equal mass on every integer of `[n_min, n_max]`.
    #[default]
    Uniform,
    /// Mass proportional to `1/n` on `[n_min, n_max]`, renormalized.
    OneOverN,
}

/// Pmf over hold times in beacon periods; `p[n]` is the mass at `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldTimeDistribution {
    pub p: Vec<f64>,
    /// Geometric mass dropped by truncating the series.
    pub truncated_mass: f64,
}

impl HoldTimeDistribution {
    /// Largest hold time with (possibly) non-zero mass.
    pub fn n_max(&self) -> usize {
        self.p.len().saturating_sub(1)
    }

    pub fn mean(&self) -> f64 {
        self.p.iter().enumerate().map(|(n, &p)| n as f64 * p).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.p.iter().sum()
    }
}

fn check_bounds(n_min: u32, n_max: u32) -> Result<()> {
    if n_min == 0 || n_min > n_max {
        return Err(Error::config(format!("need 1 <= n_min <= n_max, got {n_min}..{n_max}")));
    }
    Ok(())
}

pub fn tbe_distribution(n_min: u32, n_max: u32) -> Result<HoldTimeDistribution> {
    tbe_distribution_with(n_min, n_max, TbeForm::Uniform)
}

pub fn tbe_distribution_with(n_min: u32, n_max: u32, form: TbeForm) -> Result<HoldTimeDistribution> {
    check_bounds(n_min, n_max)?;
    let mut p = vec![0.0; n_max as usize + 1];
    match form {
        TbeForm::Uniform => {
            let m = 1.0 / f64::from(n_max - n_min + 1);
            p[n_min as usize..].fill(m);
        }
        TbeForm::OneOverN => {
            let z: f64 = (n_min..=n_max).map(|n| 1.0 / f64::from(n)).sum();
            for n in n_min..=n_max {
                p[n as usize] = 1.0 / f64::from(n) / z;
            }
        }
    }
    Ok(HoldTimeDistribution { p, truncated_mass: 0.0 })
}

/// Number of series terms so that the dropped mass `p_k^I` is below `eps`.
pub fn series_terms(p_k: f64, eps: f64) -> usize {
    if p_k == 0.0 {
        return 1;
    }
    let mut i = ((eps.ln() / p_k.ln()).ceil() as usize).max(1);
    while p_k.powi(i as i32) >= eps {
        i += 1;
    }
    i
}

pub fn tbc_distribution(n_min: u32, n_max: u32, p_k: f64, eps: f64) -> Result<HoldTimeDistribution> {
    tbc_distribution_with(n_min, n_max, p_k, eps, TbeForm::Uniform)
}

pub fn tbc_distribution_with(n_min: u32, n_max: u32, p_k: f64, eps: f64, form: TbeForm) -> Result<HoldTimeDistribution> {
    if p_k >= 1.0 {
        return Err(Error::Divergence(format!("p_k = {p_k} gives an unbounded hold time")));
    }
    if !(0.0..1.0).contains(&p_k) {
        return Err(Error::config(format!("p_k = {p_k} outside [0, 1)")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::config(format!("eps = {eps} outside (0, 1)")));
    }
    let tbe = tbe_distribution_with(n_min, n_max, form)?;
    let terms = series_terms(p_k, eps);
    let support = terms * n_max as usize + 1;
    let len = support.next_power_of_two();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    let mut x: Vec<Complex<f64>> = (0..len)
        .map(|n| Complex::new(tbe.p.get(n).copied().unwrap_or(0.0), 0.0))
        .collect();
    fwd.process(&mut x);

    // sum_{i=1..I} (1 - p_k) p_k^{i-1} X^i
    let mut acc = vec![Complex::new(0.0, 0.0); len];
    let mut power = x.clone();
    let mut w = 1.0 - p_k;
    for i in 1..=terms {
        for (a, &pw) in acc.iter_mut().zip(&power) {
            *a += pw * w;
        }
        if i < terms {
            for (pw, &xi) in power.iter_mut().zip(&x) {
                *pw *= xi;
            }
            w *= p_k;
        }
    }
    inv.process(&mut acc);
    let scale = 1.0 / len as f64;
    let mut p: Vec<f64> = acc[..support].iter().map(|c| (c.re * scale).max(0.0)).collect();
    // round-off below this level is indistinguishable from zero mass
    for v in &mut p {
        if *v < 1e-17 {
            *v = 0.0;
        }
    }
    while p.len() > 1 && p.last() == Some(&0.0) {
        p.pop();
    }
    Ok(HoldTimeDistribution {
        p,
        truncated_mass: if p_k == 0.0 { 0.0 } else { p_k.powi(terms as i32) },
    })
}

/// Probability that a reservation observed over `n_star` periods changes
/// within them, for a window starting at a uniformly random period.
pub fn reallocation_probability(dist: &HoldTimeDistribution, n_star: u32) -> Result<f64> {
    if n_star == 0 {
        return Err(Error::config("n_star must be at least 1"));
    }
    let w = n_star as usize;
    let keep: f64 = dist
        .p
        .iter()
        .enumerate()
        .skip(w)
        .map(|(n, &p)| (n - w) as f64 / n as f64 * p)
        .sum();
    Ok((1.0 - keep).clamp(0.0, 1.0))
}

/// `c[n] = P(hold > n)` for `n = 0..=n_max`.
pub fn tbc_ccdf(dist: &HoldTimeDistribution) -> Vec<f64> {
    let mut c = vec![0.0; dist.p.len()];
    let mut tail = 0.0;
    for n in (0..dist.p.len()).rev() {
        c[n] = tail;
        tail += dist.p[n];
    }
    c
}

/// Indices where `a - b` changes sign (ignoring exact ties).
pub fn sign_changes(a: &[f64], b: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = 0.0f64;
    for n in 0..a.len().max(b.len()) {
        let d = a.get(n).copied().unwrap_or(0.0) - b.get(n).copied().unwrap_or(0.0);
        if d.abs() < 1e-12 {
            continue;
        }
        if last != 0.0 && d.signum() != last.signum() {
            out.push(n);
        }
        last = d;
    }
    out
}

/// Total-variation distance between two pmfs on the same integer grid.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    0.5 * (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}
