//! Link budget: WINNER+ B1 pathloss, correlated log-normal shadowing and
//! building-induced LOS/NLOS state.
//!
//! Pathloss (d in m, fc in GHz, effective antenna height h' = h - 1 m):
//!
//! * LOS, d < d_BP: `22.7 log10(d) + 41.0 + 20 log10(fc/5)`
//! * LOS, d >= d_BP: `40 log10(d) + 9.45 - 17.3 log10(h'_tx) - 17.3 log10(h'_rx) + 2.7 log10(fc/5)`
//!   with `d_BP = 4 h'_tx h'_rx fc / c`
//! * NLOS (Manhattan form over the two legs d1, d2 of the link):
//!   `PL(a, b) = PL_LOS(a) + 20 - 12.5 n + 10 n log10(b) + 3 log10(fc/5)`,
//!   `n = max(2.8 - 0.0024 a, 1.84)`, taking `min(PL(d1, d2), PL(d2, d1))`
//!   and never less than the LOS value at the same distance.
//!
//! Distances and legs are clamped to `min_distance_m`.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{Point, ScenarioSnapshot, SpatialIndex, VehicleId};
use crate::rng::{SeedTree, Stream};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Thermal noise density in dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub carrier_ghz: f64,
    pub tx_power_dbm: f64,
    /// Applied at both transmitter and receiver.
    pub antenna_gain_db: f64,
    pub antenna_height_m: f64,
    pub noise_figure_db: f64,
    pub shadow_sigma_los_db: f64,
    pub shadow_sigma_nlos_db: f64,
    pub decorr_dist_m: f64,
    pub min_distance_m: f64,
    /// Links longer than this carry no power at all.
    pub max_link_distance_m: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            carrier_ghz: 5.9,
            tx_power_dbm: 23.0,
            antenna_gain_db: 3.0,
            antenna_height_m: 1.5,
            noise_figure_db: 9.0,
            shadow_sigma_los_db: 3.0,
            shadow_sigma_nlos_db: 4.0,
            decorr_dist_m: 25.0,
            min_distance_m: 3.0,
            max_link_distance_m: 1000.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_ghz > 0.0) {
            return Err(Error::config("carrier_ghz must be positive"));
        }
        if !(self.shadow_sigma_los_db >= 0.0 && self.shadow_sigma_nlos_db >= 0.0) {
            return Err(Error::config("shadowing sigmas must be non-negative"));
        }
        if !(self.decorr_dist_m > 0.0) {
            return Err(Error::config("decorr_dist_m must be positive"));
        }
        if !(self.antenna_height_m > 1.0) {
            return Err(Error::config("antenna_height_m must exceed 1 m"));
        }
        if !(self.min_distance_m > 0.0) || !(self.max_link_distance_m > self.min_distance_m) {
            return Err(Error::config("need 0 < min_distance_m < max_link_distance_m"));
        }
        for v in [self.tx_power_dbm, self.antenna_gain_db, self.noise_figure_db] {
            if !v.is_finite() {
                return Err(Error::config("link budget terms must be finite"));
            }
        }
        Ok(())
    }

    fn effective_height(&self) -> f64 {
        self.antenna_height_m - 1.0
    }

    /// LOS breakpoint distance.
    pub fn breakpoint_m(&self) -> f64 {
        let h = self.effective_height();
        4.0 * h * h * self.carrier_ghz * 1e9 / SPEED_OF_LIGHT
    }

    /// Noise power over `bandwidth_hz` including the receiver noise figure.
    pub fn noise_dbm(&self, bandwidth_hz: f64) -> f64 {
        THERMAL_NOISE_DBM_HZ + 10.0 * bandwidth_hz.log10() + self.noise_figure_db
    }
}

pub fn pathloss_los_db(params: &ChannelParams, distance_m: f64) -> f64 {
    let d = distance_m.max(params.min_distance_m);
    let fc = params.carrier_ghz;
    if d < params.breakpoint_m() {
        22.7 * d.log10() + 41.0 + 20.0 * (fc / 5.0).log10()
    } else {
        let h = params.effective_height().log10();
        40.0 * d.log10() + 9.45 - 17.3 * h - 17.3 * h + 2.7 * (fc / 5.0).log10()
    }
}

/// NLOS pathloss from the two legs of the link (along and across the street).
pub fn pathloss_nlos_db(params: &ChannelParams, d1: f64, d2: f64) -> f64 {
    let d1 = d1.abs().max(params.min_distance_m);
    let d2 = d2.abs().max(params.min_distance_m);
    let fc_term = 3.0 * (params.carrier_ghz / 5.0).log10();
    let leg = |a: f64, b: f64| {
        let n = (2.8 - 0.0024 * a).max(1.84);
        pathloss_los_db(params, a) + 20.0 - 12.5 * n + 10.0 * n * b.log10() + fc_term
    };
    let nlos = leg(d1, d2).min(leg(d2, d1));
    nlos.max(pathloss_los_db(params, d1.hypot(d2)))
}

/// Pathloss at a given distance. NLOS uses equal legs `d / sqrt(2)`.
pub fn pathloss_db(params: &ChannelParams, distance_m: f64, los: bool) -> f64 {
    if los {
        pathloss_los_db(params, distance_m)
    } else {
        let leg = distance_m / std::f64::consts::SQRT_2;
        pathloss_nlos_db(params, leg, leg)
    }
}

/// Received power; a positive shadowing value attenuates.
pub fn rx_power_dbm(params: &ChannelParams, pathloss_db: f64, shadow_db: f64) -> f64 {
    params.tx_power_dbm + 2.0 * params.antenna_gain_db - pathloss_db - shadow_db
}

/// One AR(1) step of the shadowing process after the link geometry moved by
/// `moved_m`: `s' = rho s + sqrt(1 - rho^2) g`, `rho = exp(-moved / d_corr)`.
pub fn shadow_step<R: Rng + ?Sized>(prev_db: f64, moved_m: f64, sigma_db: f64, decorr_m: f64, rng: &mut R) -> f64 {
    if moved_m <= 0.0 {
        return prev_db;
    }
    let rho = (-moved_m / decorr_m).exp();
    let g: f64 = rng.sample(StandardNormal);
    rho * prev_db + (1.0 - rho * rho).sqrt() * sigma_db * g
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    (dbm * (std::f64::consts::LN_10 / 10.0)).exp()
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

// ---------------------------------------------------------------------------
// Obstacles

/// Building footprints; a link is NLOS when its segment touches any of them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObstacleMap {
    pub polygons: Vec<Vec<Point>>,
}

impl ObstacleMap {
    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    /// One polygon per line: `x1,y1,x2,y2,...` with at least three vertices.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut polygons = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let coords = line
                .split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|_| err(format!("invalid coordinate {f:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            if coords.len() % 2 != 0 || coords.len() < 6 {
                return Err(err(format!("expected >= 3 x,y pairs, found {} numbers", coords.len())));
            }
            if coords.iter().any(|c| !c.is_finite()) {
                return Err(err("non-finite coordinate".into()));
            }
            polygons.push(coords.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect());
        }
        Ok(ObstacleMap { polygons })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

pub(crate) fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

pub(crate) fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// True iff the segment between the two points crosses no obstacle.
pub fn los_state(map: &ObstacleMap, a: Point, b: Point) -> bool {
    !map.polygons.iter().any(|poly| {
        point_in_polygon(a, poly)
            || point_in_polygon(b, poly)
            || (0..poly.len()).any(|i| segments_intersect(a, b, poly[i], poly[(i + 1) % poly.len()]))
    })
}

// ---------------------------------------------------------------------------
// Per-run channel state

/// Received power on every link of one snapshot, as outgoing adjacency lists
/// indexed by snapshot position and sorted by destination.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkGains {
    adj: Vec<Vec<(u32, f64)>>,
}

impl LinkGains {
    pub fn with_len(n: usize) -> Self {
        LinkGains { adj: vec![Vec::new(); n] }
    }

    /// From a dense matrix `rx_mw[src][dst]`; zero entries are dropped.
    pub fn from_dense(rx_mw: &[Vec<f64>]) -> Self {
        let adj = rx_mw
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|&(j, &p)| j != i && p > 0.0)
                    .map(|(j, &p)| (j as u32, p))
                    .collect()
            })
            .collect();
        LinkGains { adj }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    /// Destinations reached by `src` and the power they receive (mW).
    pub fn links(&self, src: usize) -> &[(u32, f64)] {
        &self.adj[src]
    }

    pub fn rx_mw(&self, src: usize, dst: usize) -> f64 {
        let row = &self.adj[src];
        match row.binary_search_by_key(&(dst as u32), |&(j, _)| j) {
            Ok(k) => row[k].1,
            Err(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub peer: VehicleId,
    pub pathloss_db: f64,
    pub shadow_db: f64,
    pub los: bool,
    /// Offset from the lower-id vehicle to the peer when last updated.
    rel: (f64, f64),
}

/// Shadowing memory for every reciprocal link in range, keyed by the lower
/// vehicle id of the pair.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    params: ChannelParams,
    links: Vec<Vec<LinkState>>,
    epoch: u64,
}

impl ChannelRealization {
    pub fn new(params: ChannelParams) -> Result<Self> {
        params.validate()?;
        Ok(ChannelRealization {
            params,
            links: Vec::new(),
            epoch: 0,
        })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// Link states held by `id` towards higher-id peers.
    pub fn links_of(&self, id: VehicleId) -> &[LinkState] {
        self.links.get(id as usize).map_or(&[], Vec::as_slice)
    }

    /// Moves the channel to a new snapshot: links persisting from the previous
    /// call take one AR(1) shadowing step driven by how far their relative
    /// geometry moved, new links draw a stationary sample, and links out of
    /// range are forgotten. Returns the received powers for the snapshot.
    pub fn update(&mut self, snapshot: &ScenarioSnapshot, obstacles: &ObstacleMap, seeds: &SeedTree) -> LinkGains {
        let p = self.params;
        let n = snapshot.len();
        let max_id = snapshot.vehicles.last().map_or(0, |v| v.id as usize + 1);
        if self.links.len() < max_id {
            self.links.resize_with(max_id, Vec::new);
        }
        let mut present = vec![false; self.links.len()];
        for v in &snapshot.vehicles {
            present[v.id as usize] = true;
        }
        for (id, l) in self.links.iter_mut().enumerate() {
            if !present[id] {
                l.clear();
            }
        }

        let index = SpatialIndex::new(snapshot, p.max_link_distance_m);
        let mut gains = LinkGains::with_len(n);
        let eirp_dbm = p.tx_power_dbm + 2.0 * p.antenna_gain_db;
        for i in 0..n {
            let vi = snapshot.vehicles[i];
            let old = std::mem::take(&mut self.links[vi.id as usize]);
            let mut old_iter = old.iter().peekable();
            let mut rng = seeds.rng(Stream::Shadowing, &[u64::from(vi.id), self.epoch]);
            let mut fresh = Vec::new();
            for (j, d) in index.within(i, p.max_link_distance_m) {
                if j < i {
                    continue;
                }
                let vj = snapshot.vehicles[j];
                let rel = snapshot.offset(vi.pos, vj.pos);
                let los = obstacles.is_empty() || los_state(obstacles, vi.pos, Point::new(vi.pos.x + rel.0, vi.pos.y + rel.1));
                let sigma = if los { p.shadow_sigma_los_db } else { p.shadow_sigma_nlos_db };
                while old_iter.peek().is_some_and(|l| l.peer < vj.id) {
                    old_iter.next();
                }
                let shadow_db = match old_iter.peek() {
                    Some(l) if l.peer == vj.id => {
                        let moved = ((rel.0 - l.rel.0).powi(2) + (rel.1 - l.rel.1).powi(2)).sqrt();
                        shadow_step(l.shadow_db, moved, sigma, p.decorr_dist_m, &mut rng)
                    }
                    _ => sigma * rng.sample::<f64, _>(StandardNormal),
                };
                let pathloss_db = if los {
                    pathloss_los_db(&p, d)
                } else {
                    pathloss_nlos_db(&p, rel.0, rel.1)
                };
                let mw = dbm_to_mw(eirp_dbm - pathloss_db - shadow_db);
                gains.adj[i].push((j as u32, mw));
                gains.adj[j].push((i as u32, mw));
                fresh.push(LinkState {
                    peer: vj.id,
                    pathloss_db,
                    shadow_db,
                    los,
                    rel,
                });
            }
            self.links[vi.id as usize] = fresh;
        }
        self.epoch += 1;
        gains
    }
}
