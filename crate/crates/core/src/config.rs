//! Run configuration: one flat TOML table whose keys default to the
//! reference settings when omitted.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::TbeForm;
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::grid::GridConfig;
use crate::mobility::HighwayConfig;
use crate::mode4::{Mode4Params, NrBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    Highway,
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    #[default]
    Mode4,
    /// Every vehicle draws a uniformly random BR each beacon period.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    /// Mobility trace (`time_s,vehicle_id,x_m,y_m`), for `scenario = "trace"`.
    pub trace: Option<PathBuf>,
    /// Obstacle polygons; without them every link is LOS.
    pub obstacles: Option<PathBuf>,

    pub vehicles: u32,
    pub length_m: f64,
    pub lanes_per_direction: u32,
    pub lane_width_m: f64,
    pub lane_speeds_kmh: Vec<f64>,
    pub speed_sigma_frac: f64,

    pub beacon_period_ms: u32,
    pub mcs: u8,
    pub bandwidth_mhz: f64,
    pub subchannel_size_rb_pairs: u32,
    pub sinr_min_db: Option<f64>,
    pub ibe_attenuation_db: f64,

    pub carrier_ghz: f64,
    pub tx_power_dbm: f64,
    pub antenna_gain_db: f64,
    pub antenna_height_m: f64,
    pub noise_figure_db: f64,
    pub shadow_sigma_los_db: f64,
    pub shadow_sigma_nlos_db: f64,
    pub decorr_dist_m: f64,
    pub min_distance_m: f64,
    pub max_link_distance_m: f64,

    pub allocation: Allocation,
    pub t_sense_ms: u32,
    pub p_th_dbm: f64,
    pub r_sel: f64,
    pub t1: u32,
    pub t2: u32,
    pub n_min: u32,
    pub n_max: u32,
    pub p_keep: f64,
    pub nonstandard: bool,
    pub nr_basis: NrBasis,
    pub tbe_form: TbeForm,

    /// Total simulated time including warm-up; warm-up + 30 s when unset.
    pub duration_s: Option<f64>,
    /// Defaults to `t_sense + n_max` beacon periods.
    pub warmup_s: Option<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Neighbor range for PRR; 200 m on the highway, 100 m for traces when unset.
    pub awareness_m: Option<f64>,
    pub prr_bin_m: f64,
    /// Snapshots (one per second after warm-up) for the hidden-node metric.
    pub hidden_node_snapshots: u32,
    pub hidden_node_max_m: f64,
    /// Writes `rx_log.csv` and `tx_log.csv`; only sensible for small runs.
    pub log_receptions: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hw = HighwayConfig::default();
        let ch = ChannelParams::default();
        let m4 = Mode4Params::default();
        RunConfig {
            scenario: ScenarioKind::Highway,
            trace: None,
            obstacles: None,
            vehicles: hw.target_vehicle_count,
            length_m: hw.length_m,
            lanes_per_direction: hw.lanes_per_direction,
            lane_width_m: hw.lane_width_m,
            lane_speeds_kmh: hw.lane_speeds_kmh,
            speed_sigma_frac: hw.speed_sigma_frac,
            beacon_period_ms: 100,
            mcs: 7,
            bandwidth_mhz: 10.0,
            subchannel_size_rb_pairs: 10,
            sinr_min_db: None,
            ibe_attenuation_db: 25.0,
            carrier_ghz: ch.carrier_ghz,
            tx_power_dbm: ch.tx_power_dbm,
            antenna_gain_db: ch.antenna_gain_db,
            antenna_height_m: ch.antenna_height_m,
            noise_figure_db: ch.noise_figure_db,
            shadow_sigma_los_db: ch.shadow_sigma_los_db,
            shadow_sigma_nlos_db: ch.shadow_sigma_nlos_db,
            decorr_dist_m: ch.decorr_dist_m,
            min_distance_m: ch.min_distance_m,
            max_link_distance_m: ch.max_link_distance_m,
            allocation: Allocation::Mode4,
            t_sense_ms: m4.t_sense_ms,
            p_th_dbm: m4.p_th_dbm,
            r_sel: m4.r_sel,
            t1: m4.t1_tti,
            t2: m4.t2_tti,
            n_min: m4.n_min,
            n_max: m4.n_max,
            p_keep: m4.p_keep,
            nonstandard: m4.nonstandard,
            nr_basis: m4.nr_basis,
            tbe_form: TbeForm::Uniform,
            duration_s: None,
            warmup_s: None,
            seed: 1,
            output_dir: PathBuf::from("results"),
            awareness_m: None,
            prr_bin_m: 10.0,
            hidden_node_snapshots: 0,
            hidden_node_max_m: 400.0,
            log_receptions: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Returns a copy with `key` set from its textual form.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut table = toml::Table::try_from(self).expect("config always serializes");
        if !table.contains_key(key) && !Self::optional_keys().contains(&key) {
            return Err(Error::Config(format!("unknown parameter `{key}`")));
        }
        let parsed = value
            .parse::<i64>()
            .map(toml::Value::Integer)
            .or_else(|_| value.parse::<f64>().map(toml::Value::Float))
            .or_else(|_| value.parse::<bool>().map(toml::Value::Boolean))
            .unwrap_or_else(|_| toml::Value::String(value.to_string()));
        // integers are accepted for float keys
        let parsed = match (table.get(key), parsed) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert(key.to_string(), parsed);
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{key} = {value}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn optional_keys() -> &'static [&'static str] {
        &["trace", "obstacles", "sinr_min_db", "duration_s", "warmup_s", "awareness_m"]
    }

    pub fn grid(&self) -> Result<GridConfig> {
        if self.bandwidth_mhz != 10.0 {
            return Err(Error::config("only bandwidth_mhz = 10 is supported"));
        }
        if self.subchannel_size_rb_pairs != 10 {
            return Err(Error::config("only subchannel_size_rb_pairs = 10 is supported"));
        }
        GridConfig::for_mcs(self.mcs, self.beacon_period_ms, self.sinr_min_db)
    }

    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            carrier_ghz: self.carrier_ghz,
            tx_power_dbm: self.tx_power_dbm,
            antenna_gain_db: self.antenna_gain_db,
            antenna_height_m: self.antenna_height_m,
            noise_figure_db: self.noise_figure_db,
            shadow_sigma_los_db: self.shadow_sigma_los_db,
            shadow_sigma_nlos_db: self.shadow_sigma_nlos_db,
            decorr_dist_m: self.decorr_dist_m,
            min_distance_m: self.min_distance_m,
            max_link_distance_m: self.max_link_distance_m,
        }
    }

    pub fn mode4(&self) -> Mode4Params {
        Mode4Params {
            t_sense_ms: self.t_sense_ms,
            p_th_dbm: self.p_th_dbm,
            r_sel: self.r_sel,
            t1_tti: self.t1,
            t2_tti: self.t2,
            n_min: self.n_min,
            n_max: self.n_max,
            p_keep: self.p_keep,
            nonstandard: self.nonstandard,
            nr_basis: self.nr_basis,
        }
    }

    pub fn highway(&self) -> HighwayConfig {
        HighwayConfig {
            length_m: self.length_m,
            lanes_per_direction: self.lanes_per_direction,
            lane_width_m: self.lane_width_m,
            target_vehicle_count: self.vehicles,
            lane_speeds_kmh: self.lane_speeds_kmh.clone(),
            speed_sigma_frac: self.speed_sigma_frac,
            wrap_around: true,
        }
    }

    pub fn awareness(&self) -> f64 {
        self.awareness_m.unwrap_or(match self.scenario {
            ScenarioKind::Highway => 200.0,
            ScenarioKind::Trace => 100.0,
        })
    }

    pub fn warmup(&self) -> f64 {
        self.warmup_s
            .unwrap_or(f64::from(self.t_sense_ms + self.n_max * self.beacon_period_ms) / 1000.0)
    }

    pub fn duration(&self) -> f64 {
        self.duration_s.unwrap_or(self.warmup() + 30.0)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.scenario, &self.trace) {
            (ScenarioKind::Trace, None) => return Err(Error::config("scenario = \"trace\" needs a `trace` path")),
            (ScenarioKind::Highway, Some(_)) => {
                return Err(Error::config("`trace` given but scenario = \"highway\"; choose one scenario source"))
            }
            (ScenarioKind::Highway, None) => self.highway().validate()?,
            (ScenarioKind::Trace, Some(_)) => {}
        }
        self.grid()?;
        self.channel().validate()?;
        self.mode4().validate()?;
        if self.ibe_attenuation_db.is_nan() || self.ibe_attenuation_db < 0.0 {
            return Err(Error::config("ibe_attenuation_db must be >= 0"));
        }
        let warm = self.warmup();
        if !(warm >= 0.0) {
            return Err(Error::config("warmup_s must be >= 0"));
        }
        if !(self.duration() > warm) {
            return Err(Error::config(format!(
                "duration_s = {} must exceed the warm-up of {warm} s",
                self.duration()
            )));
        }
        if !(self.awareness() > 0.0 && self.prr_bin_m > 0.0 && self.hidden_node_max_m > 0.0) {
            return Err(Error::config("awareness_m, prr_bin_m and hidden_node_max_m must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_settings() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.grid().unwrap().br_count(), 200);
        assert_eq!(c.awareness(), 200.0);
        assert!((c.warmup() - 2.5).abs() < 1e-12);
        assert!((c.duration() - 32.5).abs() < 1e-12);
        assert_eq!(c.mode4(), Mode4Params::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let c = RunConfig {
            p_keep: 0.8,
            allocation: Allocation::Random,
            duration_s: Some(5.0),
            ..Default::default()
        };
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("p_keep = 0.95").is_err());
        assert!(RunConfig::from_toml("p_keep = 0.95\nnonstandard = true").is_ok());
        assert!(RunConfig::from_toml("mcs = 14").is_err());
        assert!(RunConfig::from_toml("mcs = 14\nsinr_min_db = 18.0").is_ok());
        assert!(RunConfig::from_toml("scenario = \"trace\"").is_err());
        assert!(RunConfig::from_toml("duration_s = 1.0").is_err());
        assert!(RunConfig::from_toml("bandwidth_mhz = 20").is_err());
    }

    #[test]
    fn overrides() {
        let c = RunConfig::default();
        assert_eq!(c.with_override("t_sense_ms", "200").unwrap().t_sense_ms, 200);
        assert_eq!(c.with_override("p_th_dbm", "-60").unwrap().p_th_dbm, -60.0);
        assert_eq!(c.with_override("allocation", "random").unwrap().allocation, Allocation::Random);
        assert_eq!(c.with_override("duration_s", "10").unwrap().duration_s, Some(10.0));
        assert!(matches!(c.with_override("nope", "1"), Err(Error::Config(_))));
        assert!(c.with_override("t_sense_ms", "abc").is_err());
    }
}
