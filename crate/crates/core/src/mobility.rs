//! Vehicle positions sampled once per beacon period.
//!
//! Two sources are supported: CSV traces (`time_s,vehicle_id,x_m,y_m`) for
//! external urban datasets, and a synthetic multi-lane highway with constant
//! per-vehicle speeds and optional wrap-around.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense vehicle identifier, stable for the whole run.
pub type VehicleId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehiclePosition {
    pub id: VehicleId,
    pub pos: Point,
}

/// Positions of all vehicles present at one sampling instant, sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSnapshot {
    pub time_s: f64,
    pub vehicles: Vec<VehiclePosition>,
    /// Road length when x wraps around (periodic highway).
    pub wrap_length_m: Option<f64>,
}

impl ScenarioSnapshot {
    pub fn new(time_s: f64, mut vehicles: Vec<VehiclePosition>, wrap_length_m: Option<f64>) -> Self {
        vehicles.sort_by_key(|v| v.id);
        ScenarioSnapshot {
            time_s,
            vehicles,
            wrap_length_m,
        }
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    /// Index of a vehicle in `vehicles`.
    pub fn index_of(&self, id: VehicleId) -> Option<usize> {
        self.vehicles.binary_search_by_key(&id, |v| v.id).ok()
    }

    /// Shortest displacement vector from `a` to `b`, honoring wrap-around.
    pub fn offset(&self, a: Point, b: Point) -> (f64, f64) {
        wrapped_offset(a, b, self.wrap_length_m)
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.distance_sq(a, b).sqrt()
    }

    pub fn distance_sq(&self, a: usize, b: usize) -> f64 {
        let (dx, dy) = self.offset(self.vehicles[a].pos, self.vehicles[b].pos);
        dx * dx + dy * dy
    }
}

pub(crate) fn wrapped_offset(a: Point, b: Point, wrap: Option<f64>) -> (f64, f64) {
    let mut dx = b.x - a.x;
    if let Some(len) = wrap {
        let half = len / 2.0;
        if dx > half {
            dx -= len;
        } else if dx < -half {
            dx += len;
        }
        if dx.abs() > half {
            dx = dx.rem_euclid(len);
            if dx > half {
                dx -= len;
            }
        }
    }
    (dx, b.y - a.y)
}

/// Uniform-cell spatial hash for radius queries on one snapshot.
#[derive(Debug)]
pub struct SpatialIndex<'a> {
    snapshot: &'a ScenarioSnapshot,
    cell: f64,
    x_cells: Option<i64>,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> SpatialIndex<'a> {
    pub fn new(snapshot: &'a ScenarioSnapshot, radius: f64) -> Self {
        let mut cell = radius.max(1.0);
        let x_cells = snapshot.wrap_length_m.map(|len| {
            let n = (len / cell).floor().max(1.0);
            cell = len / n;
            n as i64
        });
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let mut index = SpatialIndex {
            snapshot,
            cell,
            x_cells,
            cells: HashMap::new(),
        };
        for (i, v) in snapshot.vehicles.iter().enumerate() {
            cells.entry(index.cell_of(v.pos)).or_default().push(i);
        }
        index.cells = cells;
        index
    }

    fn cell_of(&self, p: Point) -> (i64, i64) {
        let mut cx = (p.x / self.cell).floor() as i64;
        if let Some(n) = self.x_cells {
            cx = cx.rem_euclid(n);
        }
        (cx, (p.y / self.cell).floor() as i64)
    }

    /// Indices of all vehicles other than `idx` within `radius` (inclusive),
    /// returned in ascending index order with their distances.
    pub fn within(&self, idx: usize, radius: f64) -> Vec<(usize, f64)> {
        let p = self.snapshot.vehicles[idx].pos;
        let (cx, cy) = self.cell_of(p);
        let reach = (radius / self.cell).ceil() as i64;
        let mut xs: Vec<i64> = (cx - reach..=cx + reach)
            .map(|x| match self.x_cells {
                Some(n) => x.rem_euclid(n),
                None => x,
            })
            .collect();
        xs.sort_unstable();
        xs.dedup();
        let mut out = Vec::new();
        for &x in &xs {
            for y in cy - reach..=cy + reach {
                if let Some(members) = self.cells.get(&(x, y)) {
                    for &j in members {
                        if j == idx {
                            continue;
                        }
                        let d2 = self.snapshot.distance_sq(idx, j);
                        if d2 <= radius * radius {
                            out.push((j, d2.sqrt()));
                        }
                    }
                }
            }
        }
        out.sort_unstable_by_key(|&(j, _)| j);
        out
    }
}

/// Vehicles other than `idx` within `awareness_m` (boundary inclusive).
pub fn neighbors(snapshot: &ScenarioSnapshot, idx: usize, awareness_m: f64) -> Result<Vec<VehicleId>> {
    if !(awareness_m > 0.0) {
        return Err(Error::config("awareness_m must be positive"));
    }
    if idx >= snapshot.len() {
        return Err(Error::Range {
            index: idx,
            len: snapshot.len(),
        });
    }
    let index = SpatialIndex::new(snapshot, awareness_m);
    Ok(index
        .within(idx, awareness_m)
        .into_iter()
        .map(|(j, _)| snapshot.vehicles[j].id)
        .collect())
}

// ---------------------------------------------------------------------------
// Traces

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time_s: f64,
    pub vehicle_id: u64,
    pub x_m: f64,
    pub y_m: f64,
}

/// A trace resampled at beacon-period instants.
#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub snapshots: Vec<ScenarioSnapshot>,
    /// Original trace id of each dense [`VehicleId`].
    pub raw_ids: Vec<u64>,
}

pub fn parse_trace_records(text: &str, path: &Path) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    let mut seen_data = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        if !seen_data && fields.first().is_some_and(|f| f.parse::<f64>().is_err()) {
            // header line
            seen_data = true;
            continue;
        }
        seen_data = true;
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| err(format!("invalid {name} {:?}", fields[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(format!("non-finite {name}")))
            }
        };
        let vehicle_id: u64 = fields[1]
            .parse()
            .map_err(|_| err(format!("invalid vehicle_id {:?}", fields[1])))?;
        records.push(TraceRecord {
            time_s: num(0, "time_s")?,
            vehicle_id,
            x_m: num(2, "x_m")?,
            y_m: num(3, "y_m")?,
        });
    }
    Ok(records)
}

/// Reads a CSV trace and resamples it every `beacon_period_ms`.
pub fn load_trace(path: impl AsRef<Path>, beacon_period_ms: u32) -> Result<LoadedTrace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_trace_records(&text, path)?;
    resample_trace(&records, beacon_period_ms, path)
}

/// Linear interpolation of trace records onto `t0 + k * T_B` instants.
///
/// A vehicle is present at an instant only if two consecutive records bracket
/// it no further apart than 1.5 trace steps (the smallest positive spacing
/// between consecutive records of any vehicle); larger spacings are gaps.
pub fn resample_trace(records: &[TraceRecord], beacon_period_ms: u32, path: &Path) -> Result<LoadedTrace> {
    if records.is_empty() {
        return Err(Error::Input(format!("{}: trace has no records", path.display())));
    }
    if beacon_period_ms == 0 {
        return Err(Error::config("beacon_period_ms must be at least 1"));
    }
    let mut per_vehicle: BTreeMap<u64, Vec<(f64, Point)>> = BTreeMap::new();
    for r in records {
        let track = per_vehicle.entry(r.vehicle_id).or_default();
        if let Some(&(last, _)) = track.last() {
            if r.time_s < last {
                return Err(Error::Input(format!(
                    "{}: time goes backwards for vehicle {} ({} after {})",
                    path.display(),
                    r.vehicle_id,
                    r.time_s,
                    last
                )));
            }
        }
        track.push((r.time_s, Point::new(r.x_m, r.y_m)));
    }

    let step = per_vehicle
        .values()
        .flat_map(|t| t.windows(2).map(|w| w[1].0 - w[0].0))
        .filter(|&dt| dt > 0.0)
        .fold(f64::INFINITY, f64::min);
    let max_gap = 1.5 * step;

    let t0 = records.iter().map(|r| r.time_s).fold(f64::INFINITY, f64::min);
    let t_end = records.iter().map(|r| r.time_s).fold(f64::NEG_INFINITY, f64::max);
    let tb = f64::from(beacon_period_ms) / 1000.0;
    const EPS: f64 = 1e-9;
    let n_samples = ((t_end - t0) / tb + EPS).floor() as usize + 1;

    let mut buckets: Vec<Vec<VehiclePosition>> = vec![Vec::new(); n_samples];
    let raw_ids: Vec<u64> = per_vehicle.keys().copied().collect();
    for (dense, track) in per_vehicle.values().enumerate() {
        let id = dense as VehicleId;
        let first = track[0].0;
        let last = track[track.len() - 1].0;
        let k_start = (((first - t0) / tb) - EPS).ceil().max(0.0) as usize;
        let mut seg = 0usize;
        for (k, bucket) in buckets.iter_mut().enumerate().skip(k_start) {
            let t = t0 + k as f64 * tb;
            if t > last + EPS {
                break;
            }
            while seg + 1 < track.len() && track[seg + 1].0 < t - EPS {
                seg += 1;
            }
            let (ta, pa) = track[seg];
            let pos = if (t - ta).abs() <= EPS {
                Some(pa)
            } else if seg + 1 < track.len() {
                let (tb_, pb) = track[seg + 1];
                if (t - tb_).abs() <= EPS {
                    Some(pb)
                } else if tb_ - ta > max_gap || t < ta {
                    None
                } else {
                    let f = (t - ta) / (tb_ - ta);
                    Some(Point::new(pa.x + f * (pb.x - pa.x), pa.y + f * (pb.y - pa.y)))
                }
            } else {
                None
            };
            if let Some(pos) = pos {
                bucket.push(VehiclePosition { id, pos });
            }
        }
    }
    let snapshots = buckets
        .into_iter()
        .enumerate()
        .map(|(k, v)| ScenarioSnapshot::new(t0 + k as f64 * tb, v, None))
        .collect();
    Ok(LoadedTrace { snapshots, raw_ids })
}

// ---------------------------------------------------------------------------
// Synthetic highway

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwayConfig {
    pub length_m: f64,
    pub lanes_per_direction: u32,
    pub lane_width_m: f64,
    pub target_vehicle_count: u32,
    /// Mean lane speeds in km/h, outermost lane first.
    pub lane_speeds_kmh: Vec<f64>,
    /// Speed standard deviation as a fraction of the lane mean.
    pub speed_sigma_frac: f64,
    pub wrap_around: bool,
}

impl Default for HighwayConfig {
    fn default() -> Self {
        HighwayConfig {
            length_m: 16_000.0,
            lanes_per_direction: 3,
            lane_width_m: 4.0,
            target_vehicle_count: 2015,
            lane_speeds_kmh: vec![70.0, 90.0, 110.0],
            speed_sigma_frac: 0.1,
            wrap_around: true,
        }
    }
}

impl HighwayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_m > 0.0) || !(self.lane_width_m > 0.0) {
            return Err(Error::config("highway length and lane width must be positive"));
        }
        if self.lanes_per_direction == 0 || self.target_vehicle_count == 0 {
            return Err(Error::config("highway lanes and vehicle count must be positive"));
        }
        if self.lane_speeds_kmh.len() != self.lanes_per_direction as usize {
            return Err(Error::config(format!(
                "lane_speeds_kmh has {} entries for {} lanes per direction",
                self.lane_speeds_kmh.len(),
                self.lanes_per_direction
            )));
        }
        if self.lane_speeds_kmh.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::config("lane speeds must be positive"));
        }
        if !(0.0..1.0).contains(&self.speed_sigma_frac) {
            return Err(Error::config("speed_sigma_frac must be in [0, 1)"));
        }
        Ok(())
    }

    /// Lateral offset of a lane; lane 0 is the outermost, direction +1 lies at y > 0.
    pub fn lane_y(&self, direction: i8, lane: u32) -> f64 {
        let from_median = self.lanes_per_direction - 1 - lane;
        f64::from(direction) * (f64::from(from_median) + 0.5) * self.lane_width_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighwayVehicle {
    pub id: VehicleId,
    pub x: f64,
    pub y: f64,
    /// Signed speed along x in m/s.
    pub velocity_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighwayState {
    pub vehicles: Vec<HighwayVehicle>,
}

impl HighwayState {
    /// Places vehicles with uniform (Poisson-conditioned) spacing, spreading
    /// the count evenly over all lanes, and draws one truncated-Gaussian
    /// speed per vehicle.
    pub fn spawn<R: Rng + ?Sized>(cfg: &HighwayConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let lanes = 2 * cfg.lanes_per_direction;
        let mut vehicles = Vec::with_capacity(cfg.target_vehicle_count as usize);
        for id in 0..cfg.target_vehicle_count {
            let lane_slot = id % lanes;
            let direction: i8 = if lane_slot < cfg.lanes_per_direction { 1 } else { -1 };
            let lane = lane_slot % cfg.lanes_per_direction;
            let mean = cfg.lane_speeds_kmh[lane as usize] / 3.6;
            let sigma = mean * cfg.speed_sigma_frac;
            let speed = if sigma > 0.0 {
                let normal = Normal::new(mean, sigma).expect("finite sigma");
                loop {
                    let v = normal.sample(rng);
                    if (v - mean).abs() <= 3.0 * sigma && v > 0.0 {
                        break v;
                    }
                }
            } else {
                mean
            };
            vehicles.push(HighwayVehicle {
                id,
                x: rng.random::<f64>() * cfg.length_m,
                y: cfg.lane_y(direction, lane),
                velocity_mps: f64::from(direction) * speed,
            });
        }
        Ok(HighwayState { vehicles })
    }

    pub fn snapshot(&self, cfg: &HighwayConfig, time_s: f64) -> ScenarioSnapshot {
        ScenarioSnapshot::new(
            time_s,
            self.vehicles
                .iter()
                .map(|v| VehiclePosition {
                    id: v.id,
                    pos: Point::new(v.x, v.y),
                })
                .collect(),
            cfg.wrap_around.then_some(cfg.length_m),
        )
    }
}

/// Advances every vehicle by `velocity * dt_s`; lanes never change.
pub fn step_highway(cfg: &HighwayConfig, state: &mut HighwayState, dt_s: f64) -> Result<()> {
    if !(dt_s > 0.0) {
        return Err(Error::config("highway step must be positive"));
    }
    for v in &mut state.vehicles {
        v.x += v.velocity_mps * dt_s;
        if cfg.wrap_around {
            v.x = v.x.rem_euclid(cfg.length_m);
        }
    }
    Ok(())
}
