//! Per-subframe reception: SINR with in-band emission weighting, the
//! half-duplex constraint, and the per-BR sensing measurements.
//!
//! Vehicles are addressed by their position in the current snapshot, which is
//! also the index used by [`LinkGains`]. Every vehicle transmits at the power
//! configured for the channel, so received powers come straight from the gains.

use crate::channel::{dbm_to_mw, mw_to_dbm, ChannelParams, LinkGains};
use crate::error::Result;
use crate::grid::{BrIndex, GridConfig};

/// One transmission in the current subframe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxEvent {
    pub vehicle: usize,
    pub br: BrIndex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxOutcome {
    pub source: usize,
    pub destination: usize,
    pub sinr_db: f64,
    pub decoded: bool,
    pub half_duplex_blocked: bool,
}

/// What an observer measured on one BR during one TTI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SenseSample {
    pub br: BrIndex,
    /// Received power of the strongest transmission whose SCI was decodable.
    pub rsrp_dbm: Option<f64>,
    pub s_rssi_dbm: f64,
    pub tti: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhyParams {
    pub noise_mw: f64,
    pub sinr_min_db: f64,
    /// Attenuation of a same-subframe transmission on disjoint subchannels.
    /// `f64::INFINITY` removes cross-slot interference entirely.
    pub ibe_attenuation_db: f64,
}

impl PhyParams {
    pub fn new(grid: &GridConfig, channel: &ChannelParams, ibe_attenuation_db: f64) -> Result<Self> {
        if ibe_attenuation_db.is_nan() || ibe_attenuation_db < 0.0 {
            return Err(crate::Error::config("ibe_attenuation_db must be >= 0"));
        }
        Ok(PhyParams {
            noise_mw: dbm_to_mw(channel.noise_dbm(grid.br_bandwidth_hz())),
            sinr_min_db: grid.sinr_min_db,
            ibe_attenuation_db,
        })
    }

    pub fn sinr_min_lin(&self) -> f64 {
        10f64.powf(self.sinr_min_db / 10.0)
    }

    pub fn ibe_factor(&self) -> f64 {
        if self.ibe_attenuation_db.is_infinite() {
            0.0
        } else {
            10f64.powf(-self.ibe_attenuation_db / 10.0)
        }
    }

    /// Strict decoding rule: ties fail.
    pub fn decodes(&self, sinr_lin: f64) -> bool {
        sinr_lin > self.sinr_min_lin()
    }
}

fn to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// SINR (dB) of `src` at `dst` given every transmission of the subframe.
/// `None` if `src` does not transmit or `dst` does.
pub fn sinr_db(dst: usize, src: usize, events: &[TxEvent], gains: &LinkGains, phy: &PhyParams) -> Option<f64> {
    sinr_lin(dst, src, events, gains, phy).map(to_db)
}

fn sinr_lin(dst: usize, src: usize, events: &[TxEvent], gains: &LinkGains, phy: &PhyParams) -> Option<f64> {
    let own = events.iter().find(|e| e.vehicle == src)?;
    if events.iter().any(|e| e.vehicle == dst) {
        return None;
    }
    let f = phy.ibe_factor();
    let interference: f64 = events
        .iter()
        .filter(|e| e.vehicle != src)
        .map(|e| {
            let k = if e.br.freq_slot == own.br.freq_slot { 1.0 } else { f };
            k * gains.rx_mw(e.vehicle, dst)
        })
        .sum();
    Some(gains.rx_mw(src, dst) / (phy.noise_mw + interference))
}

/// Outcomes for every ordered pair (transmitter, other vehicle).
pub fn receive_subframe(events: &[TxEvent], gains: &LinkGains, phy: &PhyParams) -> Vec<RxOutcome> {
    let mut out = Vec::new();
    for e in events {
        for dst in 0..gains.len() {
            if dst == e.vehicle {
                continue;
            }
            match sinr_lin(dst, e.vehicle, events, gains, phy) {
                Some(s) => out.push(RxOutcome {
                    source: e.vehicle,
                    destination: dst,
                    sinr_db: to_db(s),
                    decoded: phy.decodes(s),
                    half_duplex_blocked: false,
                }),
                None => out.push(RxOutcome {
                    source: e.vehicle,
                    destination: dst,
                    sinr_db: f64::NEG_INFINITY,
                    decoded: false,
                    half_duplex_blocked: true,
                }),
            }
        }
    }
    out
}

/// Measurements taken by `observer` on every BR of `subframe`. Empty when
/// the observer is transmitting (the TTI is unmonitored).
pub fn sense_subframe(
    observer: usize,
    subframe: u32,
    tti: u64,
    brs_per_tti: u32,
    events: &[TxEvent],
    gains: &LinkGains,
    phy: &PhyParams,
) -> Vec<SenseSample> {
    if events.iter().any(|e| e.vehicle == observer) {
        return Vec::new();
    }
    let f = phy.ibe_factor();
    (0..brs_per_tti)
        .map(|slot| {
            let br = BrIndex { subframe, freq_slot: slot };
            let mut rssi = phy.noise_mw;
            let mut rsrp: Option<f64> = None;
            for e in events {
                let p = gains.rx_mw(e.vehicle, observer);
                if e.br.freq_slot == slot {
                    rssi += p;
                    if sinr_lin(observer, e.vehicle, events, gains, phy).is_some_and(|s| phy.decodes(s)) {
                        rsrp = Some(rsrp.map_or(p, |r: f64| r.max(p)));
                    }
                } else {
                    rssi += f * p;
                }
            }
            SenseSample {
                br,
                rsrp_dbm: rsrp.map(mw_to_dbm),
                s_rssi_dbm: mw_to_dbm(rssi),
                tti,
            }
        })
        .collect()
}

/// Power field of one subframe with reusable buffers: the simulator's fast
/// path, equivalent to the functions above.
#[derive(Debug, Clone, Default)]
pub struct SubframeField {
    brs: usize,
    slot_power: Vec<f64>,
    total: Vec<f64>,
    rsrp: Vec<f64>,
    tx_slot: Vec<u32>,
    touched: Vec<usize>,
    outcomes: Vec<RxOutcome>,
}

const NOT_TX: u32 = u32::MAX;

impl SubframeField {
    pub fn new(brs_per_tti: u32) -> Self {
        SubframeField {
            brs: brs_per_tti as usize,
            ..Default::default()
        }
    }

    fn reset(&mut self, n: usize) {
        if self.total.len() != n {
            self.slot_power = vec![0.0; n * self.brs];
            self.rsrp = vec![0.0; n * self.brs];
            self.total = vec![0.0; n];
            self.tx_slot = vec![NOT_TX; n];
        } else {
            for &v in &self.touched {
                self.total[v] = 0.0;
                self.tx_slot[v] = NOT_TX;
                for s in 0..self.brs {
                    self.slot_power[v * self.brs + s] = 0.0;
                    self.rsrp[v * self.brs + s] = 0.0;
                }
            }
        }
        self.touched.clear();
        self.outcomes.clear();
    }

    /// Accumulates the powers of `events` and evaluates every reception.
    pub fn load(&mut self, events: &[TxEvent], gains: &LinkGains, phy: &PhyParams) {
        let n = gains.len();
        self.reset(n);
        for e in events {
            if self.tx_slot[e.vehicle] == NOT_TX && self.total[e.vehicle] == 0.0 {
                self.touched.push(e.vehicle);
            }
            self.tx_slot[e.vehicle] = e.br.freq_slot;
            for &(dst, p) in gains.links(e.vehicle) {
                let d = dst as usize;
                if self.total[d] == 0.0 && self.tx_slot[d] == NOT_TX {
                    self.touched.push(d);
                }
                self.total[d] += p;
                self.slot_power[d * self.brs + e.br.freq_slot as usize] += p;
            }
        }
        let gamma = phy.sinr_min_lin();
        let f = phy.ibe_factor();
        for e in events {
            let slot = e.br.freq_slot as usize;
            for &(dst, psi) in gains.links(e.vehicle) {
                let d = dst as usize;
                if self.tx_slot[d] != NOT_TX {
                    self.outcomes.push(RxOutcome {
                        source: e.vehicle,
                        destination: d,
                        sinr_db: f64::NEG_INFINITY,
                        decoded: false,
                        half_duplex_blocked: true,
                    });
                    continue;
                }
                let same = self.slot_power[d * self.brs + slot];
                let weighted = same + f * (self.total[d] - same);
                let interference = (weighted - psi).max(0.0);
                let sinr = psi / (phy.noise_mw + interference);
                let decoded = sinr > gamma;
                if decoded {
                    let r = &mut self.rsrp[d * self.brs + slot];
                    *r = r.max(psi);
                }
                self.outcomes.push(RxOutcome {
                    source: e.vehicle,
                    destination: d,
                    sinr_db: to_db(sinr),
                    decoded,
                    half_duplex_blocked: false,
                });
            }
        }
    }

    /// Receptions over every link in range, in event order.
    pub fn outcomes(&self) -> &[RxOutcome] {
        &self.outcomes
    }

    pub fn is_transmitting(&self, v: usize) -> bool {
        self.tx_slot.get(v).is_some_and(|&s| s != NOT_TX)
    }

    /// S-RSSI (mW) measured by `v` on frequency slot `slot`.
    pub fn rssi_mw(&self, v: usize, slot: u32, phy: &PhyParams) -> f64 {
        if self.total.is_empty() {
            return phy.noise_mw;
        }
        let same = self.slot_power[v * self.brs + slot as usize];
        phy.noise_mw + same + phy.ibe_factor() * (self.total[v] - same)
    }

    /// Strongest decodable RSRP (mW) at `v` on `slot`, 0 if none.
    pub fn rsrp_mw(&self, v: usize, slot: u32) -> f64 {
        self.rsrp.get(v * self.brs + slot as usize).copied().unwrap_or(0.0)
    }
}
