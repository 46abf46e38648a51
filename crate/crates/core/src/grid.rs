//! Beacon-resource (BR) grid geometry.
//!
//! One beacon period of `beacon_period_ms` subframes is split in frequency
//! into `brs_per_tti` groups of subchannels, each able to carry one beacon.
//! Flat indices are time-major: `r = subframe * brs_per_tti + freq_slot`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bandwidth of one resource-block pair.
pub const RB_PAIR_HZ: f64 = 180e3;

/// Subchannels available for TBs in 10 MHz with non-adjacent SCIs.
pub const SUBCHANNELS_10MHZ: u32 = 4;

/// Resource-block pairs per subchannel.
pub const SUBCHANNEL_SIZE_RB_PAIRS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub beacon_period_ms: u32,
    pub brs_per_tti: u32,
    pub subchannels_total: u32,
    pub subchannels_per_br: u32,
    pub subchannel_size_rb_pairs: u32,
    pub mcs_index: u8,
    pub sinr_min_db: f64,
}

impl GridConfig {
    /// Grid for a 300-byte beacon in 10 MHz with four 10-RB-pair subchannels.
    ///
    /// MCS 4 and 7 carry their decoding thresholds (2.76 dB, 7.30 dB).
    /// MCS 14 has no published threshold, so `sinr_min_db` must be given.
    pub fn for_mcs(mcs: u8, beacon_period_ms: u32, sinr_min_db: Option<f64>) -> Result<Self> {
        let (brs_per_tti, default_sinr) = match mcs {
            4 => (1, Some(2.76)),
            7 => (2, Some(7.30)),
            14 => (4, None),
            other => return Err(Error::config(format!("unsupported MCS {other}; expected 4, 7 or 14"))),
        };
        let sinr_min_db = sinr_min_db
            .or(default_sinr)
            .ok_or_else(|| Error::config(format!("MCS {mcs} requires an explicit sinr_min_db")))?;
        let cfg = GridConfig {
            beacon_period_ms,
            brs_per_tti,
            subchannels_total: SUBCHANNELS_10MHZ,
            subchannels_per_br: SUBCHANNELS_10MHZ / brs_per_tti,
            subchannel_size_rb_pairs: SUBCHANNEL_SIZE_RB_PAIRS,
            mcs_index: mcs,
            sinr_min_db,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beacon_period_ms == 0 {
            return Err(Error::config("beacon_period_ms must be at least 1"));
        }
        if self.brs_per_tti == 0 || self.subchannels_per_br == 0 || self.subchannels_total == 0 {
            return Err(Error::config("grid dimensions must be positive"));
        }
        if self.brs_per_tti * self.subchannels_per_br > self.subchannels_total {
            return Err(Error::config(format!(
                "{} BRs of {} subchannels do not fit in {} subchannels",
                self.brs_per_tti, self.subchannels_per_br, self.subchannels_total
            )));
        }
        if !self.sinr_min_db.is_finite() {
            return Err(Error::config("sinr_min_db must be finite"));
        }
        Ok(())
    }

    /// Total BRs in one beacon period.
    pub fn br_count(&self) -> usize {
        self.brs_per_tti as usize * self.beacon_period_ms as usize
    }

    /// Occupied bandwidth of one beacon allocation in Hz.
    pub fn br_bandwidth_hz(&self) -> f64 {
        f64::from(self.subchannels_per_br * self.subchannel_size_rb_pairs) * RB_PAIR_HZ
    }
}

/// Position of a BR inside the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BrIndex {
    pub subframe: u32,
    pub freq_slot: u32,
}

/// Validated, immutable BR grid shared by every vehicle of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct BeaconResourceGrid {
    cfg: GridConfig,
}

impl BeaconResourceGrid {
    pub fn new(cfg: GridConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(BeaconResourceGrid { cfg })
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    pub fn br_count(&self) -> usize {
        self.cfg.br_count()
    }

    pub fn beacon_period(&self) -> u32 {
        self.cfg.beacon_period_ms
    }

    pub fn brs_per_tti(&self) -> u32 {
        self.cfg.brs_per_tti
    }

    pub fn br_from_flat(&self, r: usize) -> Result<BrIndex> {
        if r >= self.br_count() {
            return Err(Error::Range {
                index: r,
                len: self.br_count(),
            });
        }
        let per = self.cfg.brs_per_tti as usize;
        Ok(BrIndex {
            subframe: (r / per) as u32,
            freq_slot: (r % per) as u32,
        })
    }

    pub fn flat(&self, br: BrIndex) -> usize {
        debug_assert!(br.subframe < self.cfg.beacon_period_ms && br.freq_slot < self.cfg.brs_per_tti);
        br.subframe as usize * self.cfg.brs_per_tti as usize + br.freq_slot as usize
    }

    /// Subchannels occupied by a BR.
    pub fn subchannels(&self, br: BrIndex) -> Range<u32> {
        let start = br.freq_slot * self.cfg.subchannels_per_br;
        start..start + self.cfg.subchannels_per_br
    }

    /// True when two BRs share at least one subchannel in the same subframe.
    pub fn overlaps(&self, a: BrIndex, b: BrIndex) -> bool {
        if a.subframe != b.subframe {
            return false;
        }
        let (ra, rb) = (self.subchannels(a), self.subchannels(b));
        ra.start < rb.end && rb.start < ra.end
    }

    /// BRs of one subframe in frequency order.
    pub fn brs_in_subframe(&self, subframe: u32) -> impl Iterator<Item = BrIndex> {
        (0..self.cfg.brs_per_tti).map(move |freq_slot| BrIndex { subframe, freq_slot })
    }

    pub fn iter(&self) -> impl Iterator<Item = BrIndex> + '_ {
        (0..self.br_count()).map(|r| self.br_from_flat(r).expect("in range"))
    }
}
