//! Packet reception ratio by distance, update delay, hold times and the
//! hidden-node probability, plus their CSV writers.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::channel::LinkGains;
use crate::error::{Error, Result};
use crate::mobility::{ScenarioSnapshot, VehicleId};

fn n_bins(max_m: f64, width_m: f64) -> usize {
    ((max_m / width_m) - 1e-9).ceil().max(1.0) as usize
}

fn bin_of(d: f64, width_m: f64, bins: usize) -> usize {
    ((d / width_m) as usize).min(bins - 1)
}

/// One reception attempt from a beacon's source to a neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reception {
    pub destination: VehicleId,
    pub distance_m: f64,
    pub decoded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrrBin {
    pub center_m: f64,
    pub prr: Option<f64>,
    pub samples: u64,
}

/// Decoded / attempted counts per distance bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PrrAccumulator {
    bin_width_m: f64,
    max_distance_m: f64,
    decoded: Vec<u64>,
    total: Vec<u64>,
}

impl PrrAccumulator {
    pub fn new(bin_width_m: f64, max_distance_m: f64) -> Result<Self> {
        if !(bin_width_m > 0.0 && max_distance_m > 0.0) {
            return Err(Error::config("PRR bin width and range must be positive"));
        }
        let n = n_bins(max_distance_m, bin_width_m);
        Ok(PrrAccumulator {
            bin_width_m,
            max_distance_m,
            decoded: vec![0; n],
            total: vec![0; n],
        })
    }

    /// Counts one attempt; attempts beyond the awareness range are ignored.
    pub fn add(&mut self, distance_m: f64, decoded: bool) {
        if distance_m > self.max_distance_m {
            return;
        }
        let b = bin_of(distance_m, self.bin_width_m, self.total.len());
        self.total[b] += 1;
        self.decoded[b] += u64::from(decoded);
    }

    pub fn record_beacon(&mut self, receptions: &[Reception]) {
        for r in receptions {
            self.add(r.distance_m, r.decoded);
        }
    }

    pub fn bins(&self) -> Vec<PrrBin> {
        (0..self.total.len())
            .map(|b| PrrBin {
                center_m: (b as f64 + 0.5) * self.bin_width_m,
                prr: (self.total[b] > 0).then(|| self.decoded[b] as f64 / self.total[b] as f64),
                samples: self.total[b],
            })
            .collect()
    }

    /// PRR over all attempts within range.
    pub fn pooled(&self) -> Option<f64> {
        let t: u64 = self.total.iter().sum();
        (t > 0).then(|| self.decoded.iter().sum::<u64>() as f64 / t as f64)
    }

    /// PRR over attempts up to `distance_m`.
    pub fn pooled_up_to(&self, distance_m: f64) -> Option<f64> {
        let last = bin_of(distance_m.min(self.max_distance_m), self.bin_width_m, self.total.len());
        let t: u64 = self.total[..=last].iter().sum();
        (t > 0).then(|| self.decoded[..=last].iter().sum::<u64>() as f64 / t as f64)
    }

    pub fn merge(&mut self, other: &PrrAccumulator) -> Result<()> {
        if self.total.len() != other.total.len() || self.bin_width_m != other.bin_width_m {
            return Err(Error::config("cannot merge PRR accumulators with different bins"));
        }
        for b in 0..self.total.len() {
            self.total[b] += other.total[b];
            self.decoded[b] += other.decoded[b];
        }
        Ok(())
    }
}

/// Per-link statistics kept for inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkUd {
    pub last_ms: u64,
    pub gaps: u64,
    pub max_gap_ms: u64,
}

/// Gaps between consecutive successful receptions on each directed link.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UdTracker {
    links: HashMap<(VehicleId, VehicleId), LinkUd>,
    histogram: BTreeMap<u64, u64>,
}

impl UdTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Notes a successful reception of `src`'s beacon generated at `t_ms`.
    pub fn record(&mut self, src: VehicleId, dst: VehicleId, t_ms: u64) {
        match self.links.get_mut(&(src, dst)) {
            Some(l) => {
                let gap = t_ms.saturating_sub(l.last_ms);
                if gap > 0 {
                    *self.histogram.entry(gap).or_insert(0) += 1;
                    l.gaps += 1;
                    l.max_gap_ms = l.max_gap_ms.max(gap);
                }
                l.last_ms = t_ms;
            }
            None => {
                self.links.insert(
                    (src, dst),
                    LinkUd {
                        last_ms: t_ms,
                        ..Default::default()
                    },
                );
            }
        }
    }

    pub fn gap_count(&self) -> u64 {
        self.histogram.values().sum()
    }

    pub fn link(&self, src: VehicleId, dst: VehicleId) -> Option<&LinkUd> {
        self.links.get(&(src, dst))
    }

    /// Histogram of gap length (ms) to count.
    pub fn histogram(&self) -> &BTreeMap<u64, u64> {
        &self.histogram
    }

    /// Nearest-rank percentile in seconds, `q` in (0, 1].
    pub fn ud_percentile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::config(format!("percentile {q} outside (0, 1]")));
        }
        let n = self.gap_count();
        if n == 0 {
            return Err(Error::NoData("no update-delay samples"));
        }
        let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as u64;
        let mut seen = 0;
        for (&gap, &c) in &self.histogram {
            seen += c;
            if seen >= rank {
                return Ok(gap as f64 / 1000.0);
            }
        }
        unreachable!("rank never exceeds the sample count")
    }

    /// Adds another tracker's gaps; links are assumed disjoint.
    pub fn merge(&mut self, other: &UdTracker) {
        for (&g, &c) in &other.histogram {
            *self.histogram.entry(g).or_insert(0) += c;
        }
        for (&k, &v) in &other.links {
            self.links.entry(k).or_insert(v);
        }
    }
}

// ---------------------------------------------------------------------------
// Hidden nodes

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnBin {
    pub center_m: f64,
    pub probability: Option<f64>,
    pub pairs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenNodeReport {
    pub probability: f64,
    pub pairs: u64,
    /// No (source, destination) pair had any potential interferer.
    pub zero_pair: bool,
    pub bins: Vec<HnBin>,
}

/// For every source `a` and destination `b` that `a` reaches alone, the
/// interferers `I` are those able to break the link from `b`'s side; the
/// hidden ones among them cannot be heard by `a`. The pair contributes
/// `|H| / |I|` and pairs without interferers are skipped.
pub fn hidden_node_probability(
    snapshot: &ScenarioSnapshot,
    gains: &LinkGains,
    noise_mw: f64,
    gamma_min_lin: f64,
    bin_width_m: f64,
    max_distance_m: f64,
) -> HiddenNodeReport {
    let n = snapshot.len();
    let bins = n_bins(max_distance_m, bin_width_m);
    let mut sum = vec![0.0; bins];
    let mut cnt = vec![0u64; bins];
    let (mut total, mut pairs) = (0.0, 0u64);

    let mut incoming: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for src in 0..n {
        for &(dst, p) in gains.links(src) {
            incoming[dst as usize].push((src as u32, p));
        }
    }

    for a in 0..n {
        for &(b, psi_ab) in gains.links(a) {
            if psi_ab <= gamma_min_lin * noise_mw {
                continue;
            }
            let d = snapshot.distance(a, b as usize);
            if d > max_distance_m {
                continue;
            }
            let threshold = psi_ab / gamma_min_lin - noise_mw;
            let (mut i_count, mut h_count) = (0u32, 0u32);
            for &(c, psi_cb) in &incoming[b as usize] {
                if c as usize == a || psi_cb <= threshold {
                    continue;
                }
                i_count += 1;
                if gains.rx_mw(c as usize, a) < gamma_min_lin * noise_mw {
                    h_count += 1;
                }
            }
            if i_count == 0 {
                continue;
            }
            let ratio = f64::from(h_count) / f64::from(i_count);
            total += ratio;
            pairs += 1;
            let k = bin_of(d, bin_width_m, bins);
            sum[k] += ratio;
            cnt[k] += 1;
        }
    }
    HiddenNodeReport {
        probability: if pairs == 0 { 0.0 } else { total / pairs as f64 },
        pairs,
        zero_pair: pairs == 0,
        bins: (0..bins)
            .map(|k| HnBin {
                center_m: (k as f64 + 0.5) * bin_width_m,
                probability: (cnt[k] > 0).then(|| sum[k] / cnt[k] as f64),
                pairs: cnt[k],
            })
            .collect(),
    }
}

/// Averages hidden-node reports over snapshots, pooling pairs per bin.
#[derive(Debug, Clone, Default)]
pub struct HiddenNodeAccumulator {
    sum: Vec<f64>,
    cnt: Vec<u64>,
    centers: Vec<f64>,
    snapshot_probs: Vec<f64>,
}

impl HiddenNodeAccumulator {
    pub fn add(&mut self, r: &HiddenNodeReport) {
        if self.centers.is_empty() {
            self.centers = r.bins.iter().map(|b| b.center_m).collect();
            self.sum = vec![0.0; r.bins.len()];
            self.cnt = vec![0; r.bins.len()];
        }
        for (k, b) in r.bins.iter().enumerate() {
            if let Some(p) = b.probability {
                self.sum[k] += p * b.pairs as f64;
                self.cnt[k] += b.pairs;
            }
        }
        if !r.zero_pair {
            self.snapshot_probs.push(r.probability);
        }
    }

    pub fn snapshots(&self) -> usize {
        self.snapshot_probs.len()
    }

    pub fn mean_probability(&self) -> Option<f64> {
        (!self.snapshot_probs.is_empty()).then(|| self.snapshot_probs.iter().sum::<f64>() / self.snapshot_probs.len() as f64)
    }

    pub fn bins(&self) -> Vec<HnBin> {
        (0..self.centers.len())
            .map(|k| HnBin {
                center_m: self.centers[k],
                probability: (self.cnt[k] > 0).then(|| self.sum[k] / self.cnt[k] as f64),
                pairs: self.cnt[k],
            })
            .collect()
    }
}

/// Pair-weighted average of adjacent bins so each output bin spans `width_m`.
pub fn smooth_bins(bins: &[HnBin], width_m: f64) -> Vec<HnBin> {
    if bins.len() < 2 {
        return bins.to_vec();
    }
    let step = bins[1].center_m - bins[0].center_m;
    let k = ((width_m / step).round() as usize).max(1);
    bins.chunks(k)
        .map(|c| {
            let pairs: u64 = c.iter().map(|b| b.pairs).sum();
            let s: f64 = c.iter().filter_map(|b| b.probability.map(|p| p * b.pairs as f64)).sum();
            HnBin {
                center_m: c.iter().map(|b| b.center_m).sum::<f64>() / c.len() as f64,
                probability: (pairs > 0).then(|| s / pairs as f64),
                pairs,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV output

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

pub fn write_prr_csv(path: &Path, prr: &PrrAccumulator) -> Result<()> {
    let mut s = String::from("bin_center_m,prr,samples\n");
    for b in prr.bins() {
        let _ = writeln!(s, "{:.1},{},{}", b.center_m, opt(b.prr), b.samples);
    }
    write(path, s)
}

pub const UD_QUANTILES: [f64; 5] = [0.5, 0.9, 0.99, 0.999, 0.9999];

pub fn write_ud_csv(path: &Path, ud: &UdTracker) -> Result<()> {
    let mut s = String::from("q,seconds\n");
    for q in UD_QUANTILES {
        let v = ud.ud_percentile(q).ok();
        let _ = writeln!(s, "{q},{}", opt(v));
    }
    write(path, s)
}

pub fn write_hidden_node_csv(path: &Path, bins: &[HnBin]) -> Result<()> {
    let mut s = String::from("d_bin_m,probability,pairs\n");
    for b in bins {
        let _ = writeln!(s, "{:.1},{},{}", b.center_m, opt(b.probability), b.pairs);
    }
    write(path, s)
}

/// Hold times in beacon periods, as `periods,count`.
pub fn write_hold_times_csv(path: &Path, hist: &BTreeMap<u64, u64>) -> Result<()> {
    let mut s = String::from("periods,count\n");
    for (k, v) in hist {
        let _ = writeln!(s, "{k},{v}");
    }
    write(path, s)
}
