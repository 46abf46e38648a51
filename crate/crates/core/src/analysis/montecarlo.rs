//! Direct simulation of the reselection counter process, used to check the
//! closed forms.

use rand::Rng;

/// One hold time: counter draws chained while the keep coin says so.
pub fn sample_hold_time<R: Rng + ?Sized>(n_min: u32, n_max: u32, p_k: f64, rng: &mut R) -> u64 {
    let mut total = u64::from(rng.random_range(n_min..=n_max));
    while p_k > 0.0 && rng.random::<f64>() < p_k {
        total += u64::from(rng.random_range(n_min..=n_max));
    }
    total
}

/// Empirical pmf of `samples` hold times.
pub fn hold_time_pmf<R: Rng + ?Sized>(n_min: u32, n_max: u32, p_k: f64, samples: usize, rng: &mut R) -> Vec<f64> {
    let mut counts: Vec<u64> = Vec::new();
    for _ in 0..samples {
        let h = sample_hold_time(n_min, n_max, p_k, rng) as usize;
        if h >= counts.len() {
            counts.resize(h + 1, 0);
        }
        counts[h] += 1;
    }
    counts.into_iter().map(|c| c as f64 / samples as f64).collect()
}

/// Observes a window of `n_star` periods starting at a uniformly random
/// period of a hold and reports how often the hold ends inside it.
pub fn reallocation_probability<R: Rng + ?Sized>(n_min: u32, n_max: u32, p_k: f64, n_star: u32, samples: usize, rng: &mut R) -> f64 {
    let mut changes = 0usize;
    for _ in 0..samples {
        let l = sample_hold_time(n_min, n_max, p_k, rng);
        let start = rng.random_range(0..l);
        if l - start <= u64::from(n_star) {
            changes += 1;
        }
    }
    changes as f64 / samples as f64
}
