//! The TTI-level simulation loop, parameter sweeps and result files.
//!
//! Each 1 ms TTI runs in two phases. Propagation: the transmissions scheduled
//! for this TTI are received and sensed by every vehicle and metrics are
//! accumulated. Update: vehicles whose beacon is generated at this TTI run
//! their MAC and schedule the transmission. Mobility and the channel advance
//! once per beacon period.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::channel::{ChannelRealization, LinkGains, ObstacleMap};
use crate::config::{Allocation, RunConfig, ScenarioKind};
use crate::error::{Error, Result};
use crate::grid::{BeaconResourceGrid, BrIndex};
use crate::metrics::{
    hidden_node_probability, write_hidden_node_csv, write_hold_times_csv, write_prr_csv, write_ud_csv,
    HiddenNodeAccumulator, PrrAccumulator, UdTracker, UD_QUANTILES,
};
use crate::mobility::{load_trace, step_highway, HighwayConfig, HighwayState, ScenarioSnapshot, SpatialIndex, VehicleId};
use crate::mode4::{candidate_set, mac_select, on_beacon_period_end, MacAction, Mode4State, SensingMemory};
use crate::phy::{PhyParams, SubframeField, TxEvent};
use crate::rng::{SeedTree, SimRng, Stream};

/// One completed reservation: from a reselection to the next one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldRecord {
    pub vehicle: VehicleId,
    pub start_tti: u64,
    pub periods: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxLogEntry {
    pub tti: u64,
    pub source: VehicleId,
    pub destination: VehicleId,
    pub distance_m: f64,
    pub sinr_db: f64,
    pub decoded: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: RunConfig,
    pub prr: PrrAccumulator,
    pub ud: UdTracker,
    pub holds: Vec<HoldRecord>,
    /// Reservations still running when the simulation ended.
    pub censored_holds: u64,
    pub hidden: HiddenNodeAccumulator,
    pub transmissions: u64,
    pub decoded_receptions: u64,
    /// Decoded receptions at a vehicle that was itself transmitting.
    pub half_duplex_violations: u64,
    pub reselections: u64,
    pub mean_neighbors: Option<f64>,
    pub simulated_s: f64,
    pub warmup_s: f64,
    pub rx_log: Vec<RxLogEntry>,
    pub tx_log: Vec<(u64, VehicleId)>,
}

impl RunOutput {
    /// Histogram of completed hold times in beacon periods.
    pub fn hold_histogram(&self) -> BTreeMap<u64, u64> {
        let mut h = BTreeMap::new();
        for r in &self.holds {
            *h.entry(u64::from(r.periods)).or_insert(0) += 1;
        }
        h
    }
}

enum Mobility {
    Highway { cfg: HighwayConfig, state: HighwayState },
    Trace { snapshots: Vec<ScenarioSnapshot> },
}

impl Mobility {
    fn new(cfg: &RunConfig, seeds: &SeedTree) -> Result<Self> {
        Ok(match cfg.scenario {
            ScenarioKind::Highway => {
                let hw = cfg.highway();
                let state = HighwayState::spawn(&hw, &mut seeds.rng(Stream::Mobility, &[]))?;
                Mobility::Highway { cfg: hw, state }
            }
            ScenarioKind::Trace => {
                let path = cfg.trace.as_ref().expect("validated");
                Mobility::Trace {
                    snapshots: load_trace(path, cfg.beacon_period_ms)?.snapshots,
                }
            }
        })
    }

    /// Positions for beacon period `p`; `None` once a trace runs out.
    fn snapshot(&mut self, p: u64, tb_s: f64) -> Result<Option<ScenarioSnapshot>> {
        match self {
            Mobility::Highway { cfg, state } => {
                if p > 0 {
                    step_highway(cfg, state, tb_s)?;
                }
                Ok(Some(state.snapshot(cfg, p as f64 * tb_s)))
            }
            Mobility::Trace { snapshots } => Ok(snapshots.get(p as usize).cloned()),
        }
    }
}

struct Vehicle {
    phase: u32,
    rng: SimRng,
    mode4: Option<Mode4State>,
    hold_start: Option<u64>,
}

#[derive(Clone, Copy)]
struct Scheduled {
    id: VehicleId,
    slot: u32,
    gen_tti: u64,
}

fn offset_to(subframe: u32, now: u64, period: u64) -> u64 {
    let d = (u64::from(subframe) + period - now % period) % period;
    if d == 0 {
        period
    } else {
        d
    }
}

fn load_obstacles(cfg: &RunConfig) -> Result<ObstacleMap> {
    match &cfg.obstacles {
        Some(p) => ObstacleMap::load(p),
        None => Ok(ObstacleMap::default()),
    }
}

pub fn run_scenario(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let grid = BeaconResourceGrid::new(cfg.grid()?)?;
    let mut channel = ChannelRealization::new(cfg.channel())?;
    let phy = PhyParams::new(grid.config(), channel.params(), cfg.ibe_attenuation_db)?;
    let m4 = cfg.mode4();
    let seeds = SeedTree::new(cfg.seed);
    let obstacles = load_obstacles(cfg)?;
    let mut mobility = Mobility::new(cfg, &seeds)?;

    let awareness = cfg.awareness();
    if awareness > cfg.max_link_distance_m {
        return Err(Error::config("awareness_m must not exceed max_link_distance_m"));
    }
    let tb = u64::from(cfg.beacon_period_ms);
    let tb_s = tb as f64 / 1000.0;
    let total_tti = (cfg.duration() * 1000.0).round() as u64;
    let warm_tti = (cfg.warmup() * 1000.0).round() as u64;
    let hn_every = (1000 / tb).max(1);
    let mode4 = cfg.allocation == Allocation::Mode4;

    let mut out = RunOutput {
        config: cfg.clone(),
        prr: PrrAccumulator::new(cfg.prr_bin_m, awareness)?,
        ud: UdTracker::new(),
        holds: Vec::new(),
        censored_holds: 0,
        hidden: HiddenNodeAccumulator::default(),
        transmissions: 0,
        decoded_receptions: 0,
        half_duplex_violations: 0,
        reselections: 0,
        mean_neighbors: None,
        simulated_s: 0.0,
        warmup_s: cfg.warmup(),
        rx_log: Vec::new(),
        tx_log: Vec::new(),
    };

    let mut vehicles: Vec<Option<Vehicle>> = Vec::new();
    let mut by_phase: Vec<Vec<VehicleId>> = vec![Vec::new(); tb as usize];
    let mut schedule: Vec<Vec<Scheduled>> = vec![Vec::new(); 2 * tb as usize];
    let mut snapshot = ScenarioSnapshot::new(0.0, Vec::new(), None);
    let mut gains = LinkGains::with_len(0);
    let mut field = SubframeField::new(grid.brs_per_tti());
    let mut events: Vec<TxEvent> = Vec::new();
    let mut gen_at: Vec<u64> = Vec::new();
    let (mut neighbor_sum, mut neighbor_samples) = (0u64, 0u64);
    let brs = grid.brs_per_tti() as usize;
    let mut t_end = 0;

    for t in 0..total_tti {
        if t % tb == 0 {
            let p = t / tb;
            match mobility.snapshot(p, tb_s)? {
                Some(s) => snapshot = s,
                None => break,
            }
            gains = channel.update(&snapshot, &obstacles, &seeds);
            gen_at.resize(snapshot.len(), 0);
            for v in &snapshot.vehicles {
                let id = v.id as usize;
                if vehicles.len() <= id {
                    vehicles.resize_with(id + 1, || None);
                }
                if vehicles[id].is_none() {
                    let phase = seeds.rng(Stream::Phase, &[u64::from(v.id)]).random_range(0..tb) as u32;
                    by_phase[phase as usize].push(v.id);
                    vehicles[id] = Some(Vehicle {
                        phase,
                        rng: seeds.rng(Stream::Mac, &[u64::from(v.id)]),
                        mode4: mode4.then(|| Mode4State::new(SensingMemory::new(&grid, m4.t_sense_ms, phy.noise_mw))),
                        hold_start: None,
                    });
                }
            }
            if t >= warm_tti {
                let index = SpatialIndex::new(&snapshot, awareness);
                for i in 0..snapshot.len() {
                    neighbor_sum += index.within(i, awareness).len() as u64;
                }
                neighbor_samples += snapshot.len() as u64;
                if (out.hidden.snapshots() as u32) < cfg.hidden_node_snapshots && (p - warm_tti / tb).is_multiple_of(hn_every) {
                    let r = hidden_node_probability(
                        &snapshot,
                        &gains,
                        phy.noise_mw,
                        phy.sinr_min_lin(),
                        cfg.prr_bin_m,
                        cfg.hidden_node_max_m,
                    );
                    out.hidden.add(&r);
                }
            }
        }
        t_end = t + 1;
        let sf = (t % tb) as u32;

        // propagation
        events.clear();
        let due = std::mem::take(&mut schedule[(t % (2 * tb)) as usize]);
        for s in &due {
            if let Some(idx) = snapshot.index_of(s.id) {
                events.push(TxEvent {
                    vehicle: idx,
                    br: BrIndex { subframe: sf, freq_slot: s.slot },
                });
                gen_at[idx] = s.gen_tti;
                if cfg.log_receptions {
                    out.tx_log.push((t, s.id));
                }
            }
        }
        schedule[(t % (2 * tb)) as usize] = {
            let mut v = due;
            v.clear();
            v
        };
        out.transmissions += events.len() as u64;
        field.load(&events, &gains, &phy);

        if mode4 {
            let (mut rssi, mut rsrp) = ([0.0f64; 4], [0.0f64; 4]);
            for (idx, v) in snapshot.vehicles.iter().enumerate() {
                let st = vehicles[v.id as usize].as_mut().and_then(|v| v.mode4.as_mut()).expect("created");
                if field.is_transmitting(idx) {
                    st.memory.record(t, false, &[], &[]);
                } else {
                    for k in 0..brs {
                        rssi[k] = field.rssi_mw(idx, k as u32, &phy);
                        rsrp[k] = field.rsrp_mw(idx, k as u32);
                    }
                    st.memory.record(t, true, &rssi[..brs], &rsrp[..brs]);
                }
            }
        }

        for o in field.outcomes() {
            if o.decoded {
                out.decoded_receptions += 1;
                if field.is_transmitting(o.destination) {
                    out.half_duplex_violations += 1;
                }
            }
            let d2 = snapshot.distance_sq(o.source, o.destination);
            let in_range = d2 <= awareness * awareness;
            if !in_range && !cfg.log_receptions {
                continue;
            }
            let d = d2.sqrt();
            let (src, dst) = (snapshot.vehicles[o.source].id, snapshot.vehicles[o.destination].id);
            if cfg.log_receptions {
                out.rx_log.push(RxLogEntry {
                    tti: t,
                    source: src,
                    destination: dst,
                    distance_m: d,
                    sinr_db: o.sinr_db,
                    decoded: o.decoded,
                });
            }
            if t >= warm_tti && in_range {
                out.prr.add(d, o.decoded);
                if o.decoded {
                    out.ud.record(src, dst, gen_at[o.source]);
                }
            }
        }

        // MAC update at beacon generation instants
        for &id in &by_phase[sf as usize] {
            if snapshot.index_of(id).is_none() {
                continue;
            }
            let v = vehicles[id as usize].as_mut().expect("created");
            debug_assert_eq!(v.phase, sf);
            let br = match v.mode4.as_mut() {
                None => {
                    let r = v.rng.random_range(0..grid.br_count());
                    grid.br_from_flat(r)?
                }
                Some(st) => {
                    let reselect = st.reservation.is_none() || on_beacon_period_end(st, &m4, &mut v.rng) == MacAction::Reselect;
                    if reselect {
                        if let Some(start) = v.hold_start {
                            out.holds.push(HoldRecord {
                                vehicle: id,
                                start_tti: start,
                                periods: ((t - start) / tb) as u32,
                            });
                        }
                        out.reselections += 1;
                        let cands = candidate_set(st, &m4, &grid, t, &mut v.rng);
                        let (br, counter) = mac_select(&cands.brs, &m4, &mut v.rng)?;
                        st.reservation = Some(br);
                        st.counter = counter;
                        v.hold_start = Some(t);
                    }
                    st.reservation.expect("reserved")
                }
            };
            let at = t + offset_to(br.subframe, t, tb);
            schedule[(at % (2 * tb)) as usize].push(Scheduled {
                id,
                slot: br.freq_slot,
                gen_tti: t,
            });
        }
    }

    out.censored_holds = vehicles.iter().flatten().filter(|v| v.hold_start.is_some()).count() as u64;
    out.simulated_s = t_end as f64 / 1000.0;
    out.mean_neighbors = (neighbor_samples > 0).then(|| neighbor_sum as f64 / neighbor_samples as f64);
    Ok(out)
}

/// Mobility and channel only: the hidden-node metric over
/// `hidden_node_snapshots` snapshots one second apart.
pub fn run_hidden_node(cfg: &RunConfig) -> Result<HiddenNodeAccumulator> {
    cfg.validate()?;
    let grid = BeaconResourceGrid::new(cfg.grid()?)?;
    let mut channel = ChannelRealization::new(cfg.channel())?;
    let phy = PhyParams::new(grid.config(), channel.params(), cfg.ibe_attenuation_db)?;
    let seeds = SeedTree::new(cfg.seed);
    let obstacles = load_obstacles(cfg)?;
    let mut mobility = Mobility::new(cfg, &seeds)?;
    let tb = u64::from(cfg.beacon_period_ms);
    let every = (1000 / tb).max(1);
    let wanted = cfg.hidden_node_snapshots.max(1) as usize;
    let mut acc = HiddenNodeAccumulator::default();
    let mut p = 0;
    let mut taken = 0;
    while taken < wanted {
        let Some(s) = mobility.snapshot(p, tb as f64 / 1000.0)? else { break };
        let gains = channel.update(&s, &obstacles, &seeds);
        if p % every == 0 {
            acc.add(&hidden_node_probability(&s, &gains, phy.noise_mw, phy.sinr_min_lin(), cfg.prr_bin_m, cfg.hidden_node_max_m));
            taken += 1;
        }
        p += 1;
    }
    Ok(acc)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"))
}

pub fn summary_text(out: &RunOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed: {}", out.config.seed);
    let _ = writeln!(s, "allocation: {:?}", out.config.allocation);
    let _ = writeln!(s, "simulated_s: {:.3}", out.simulated_s);
    let _ = writeln!(s, "warmup_s: {:.3}", out.warmup_s);
    let _ = writeln!(s, "pooled_prr: {}", fmt_opt(out.prr.pooled()));
    for q in UD_QUANTILES {
        let _ = writeln!(s, "ud_{q}: {}", fmt_opt(out.ud.ud_percentile(q).ok()));
    }
    let _ = writeln!(s, "mean_neighbors: {}", fmt_opt(out.mean_neighbors));
    let _ = writeln!(s, "transmissions: {}", out.transmissions);
    let _ = writeln!(s, "decoded_receptions: {}", out.decoded_receptions);
    let _ = writeln!(s, "half_duplex_violations: {}", out.half_duplex_violations);
    let _ = writeln!(s, "reselections: {}", out.reselections);
    let _ = writeln!(s, "completed_holds: {}", out.holds.len());
    let _ = writeln!(s, "censored_holds: {}", out.censored_holds);
    let _ = writeln!(s, "hidden_node_snapshots: {}", out.hidden.snapshots());
    let _ = writeln!(s, "hidden_node_probability: {}", fmt_opt(out.hidden.mean_probability()));
    let table = toml::Table::try_from(&out.config).expect("config always serializes");
    for (k, v) in &table {
        let _ = writeln!(s, "config.{k}: {v}");
    }
    s
}

pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_prr_csv(&dir.join("prr_by_distance.csv"), &out.prr)?;
    write_ud_csv(&dir.join("ud_percentiles.csv"), &out.ud)?;
    write_hidden_node_csv(&dir.join("hidden_node.csv"), &out.hidden.bins())?;
    write_hold_times_csv(&dir.join("hold_times.csv"), &out.hold_histogram())?;
    let put = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    put("summary.txt", summary_text(out))?;
    put("config.toml", out.config.to_toml())?;
    if out.config.log_receptions {
        let mut rx = String::from("tti,source,destination,distance_m,sinr_db,decoded\n");
        for r in &out.rx_log {
            let _ = writeln!(rx, "{},{},{},{:.3},{:.3},{}", r.tti, r.source, r.destination, r.distance_m, r.sinr_db, u8::from(r.decoded));
        }
        put("rx_log.csv", rx)?;
        let mut tx = String::from("tti,vehicle\n");
        for (t, v) in &out.tx_log {
            let _ = writeln!(tx, "{t},{v}");
        }
        put("tx_log.csv", tx)?;
    }
    Ok(())
}

/// Runs one simulation per value of `param`, all with the same seed.
pub fn sweep(cfg: &RunConfig, param: &str, values: &[String]) -> Result<Vec<(String, RunOutput)>> {
    let cfgs = values
        .iter()
        .map(|v| cfg.with_override(param, v).map(|c| (v.clone(), c)))
        .collect::<Result<Vec<_>>>()?;
    cfgs.into_iter().map(|(v, c)| run_scenario(&c).map(|o| (v, o))).collect()
}

pub fn sweep_dir(base: &Path, param: &str, value: &str) -> PathBuf {
    base.join(format!("{param}={value}"))
}

pub fn write_sweep(results: &[(String, RunOutput)], param: &str, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut s = format!("{param},pooled_prr,ud_0.99,ud_0.999,mean_neighbors,reselections\n");
    for (v, out) in results {
        write_outputs(out, &sweep_dir(dir, param, v))?;
        let q = |q| out.ud.ud_percentile(q).ok().map_or_else(String::new, |x| format!("{x:.6}"));
        let _ = writeln!(
            s,
            "{v},{},{},{},{},{}",
            out.prr.pooled().map_or_else(String::new, |x| format!("{x:.6}")),
            q(0.99),
            q(0.999),
            out.mean_neighbors.map_or_else(String::new, |x| format!("{x:.3}")),
            out.reselections
        );
    }
    let p = dir.join("sweep.csv");
    fs::write(&p, s).map_err(|e| Error::io(p, e))
}
