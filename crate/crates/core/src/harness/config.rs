//! JSON experiment configuration. Every field has a default, so `{}` is the
//! reference scene.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{noise_variance, random_pilots, DeploymentSpec, RisDeployment, SignalConfig};
use crate::codebooks::{AngleRanges, UnauthorizedStrategy};
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::geometry::{EulerAngles, Placement, Position3, SceneGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementConfig {
    pub position: [f64; 3],
    /// `[yaw, pitch, roll]`, radians.
    #[serde(default)]
    pub orientation_rad: [f64; 3],
}

impl PlacementConfig {
    pub fn at(position: [f64; 3], yaw: f64) -> Self {
        Self {
            position,
            orientation_rad: [yaw, 0.0, 0.0],
        }
    }

    pub fn placement(&self) -> Result<Placement> {
        let [yaw, pitch, roll] = self.orientation_rad;
        Ok(Placement::new(point(self.position), EulerAngles::new(yaw, pitch, roll)?))
    }
}

fn point(p: [f64; 3]) -> Position3 {
    Position3::new(p[0], p[1], p[2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub bs: [f64; 3],
    pub ue: [f64; 3],
    pub ris_legit: PlacementConfig,
    pub ris_unauth: PlacementConfig,
    pub clock_offset_m: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            bs: [0.0, 0.0, 0.0],
            ue: [1.0, 4.0, -2.0],
            ris_legit: PlacementConfig::at([-2.0, 4.0, 0.0], 0.0),
            ris_unauth: PlacementConfig::at([2.0, 5.0, 0.0], 0.0),
            clock_offset_m: 5.0,
        }
    }
}

impl SceneConfig {
    pub fn geometry(&self) -> Result<SceneGeometry> {
        let scene = SceneGeometry {
            bs: point(self.bs),
            ue: point(self.ue),
            ris_l: self.ris_legit.placement()?,
            ris_u: self.ris_unauth.placement()?,
            clock_offset_m: self.clock_offset_m,
        };
        scene.validate()?;
        Ok(scene)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSettings {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub noise_figure_db: f64,
    pub tx_power_dbm: f64,
    pub pilot_seed: u64,
    /// Overrides the thermal noise variance (W per subcarrier) when set.
    pub noise_variance_w: Option<f64>,
}

impl Default for SignalSettings {
    fn default() -> Self {
        Self {
            carrier_hz: 30e9,
            bandwidth_hz: 400e6,
            num_subcarriers: 256,
            num_symbols: 192,
            noise_figure_db: 10.0,
            tx_power_dbm: 20.0,
            pilot_seed: 1,
            noise_variance_w: None,
        }
    }
}

impl SignalSettings {
    pub fn signal_config(&self) -> Result<SignalConfig> {
        if self.num_subcarriers == 0 || !(self.bandwidth_hz > 0.0) {
            return Err(Error::Config("bandwidth and subcarrier count must be positive".into()));
        }
        let df = self.bandwidth_hz / self.num_subcarriers as f64;
        let cfg = SignalConfig {
            carrier_hz: self.carrier_hz,
            subcarrier_spacing_hz: df,
            num_subcarriers: self.num_subcarriers,
            num_symbols: self.num_symbols,
            tx_power_watts: crate::channel::dbm_to_watts(self.tx_power_dbm),
            noise_variance: self
                .noise_variance_w
                .unwrap_or_else(|| noise_variance(self.noise_figure_db, df)),
            pilots: random_pilots(self.num_subcarriers, self.pilot_seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RisSettings {
    pub legit_dims: [usize; 2],
    pub unauth_dims: [usize; 2],
    pub unauth_codebook: UnauthorizedStrategy,
    pub radc_azimuth_range_deg: f64,
    pub radc_elevation_range_deg: f64,
    pub legit_seed: u64,
    pub unauth_seed: u64,
    /// Multiplier on the unauthorized path gain; 0 removes the interferer.
    pub unauth_gain_scale: f64,
}

impl Default for RisSettings {
    fn default() -> Self {
        Self {
            legit_dims: [10, 10],
            unauth_dims: [10, 10],
            unauth_codebook: UnauthorizedStrategy::Random,
            radc_azimuth_range_deg: 10.0,
            radc_elevation_range_deg: 5.0,
            legit_seed: 2,
            unauth_seed: 3,
            unauth_gain_scale: 1.0,
        }
    }
}

impl RisSettings {
    pub fn deployment_spec(&self) -> DeploymentSpec {
        DeploymentSpec {
            legit_dims: (self.legit_dims[0], self.legit_dims[1]),
            unauth_dims: (self.unauth_dims[0], self.unauth_dims[1]),
            strategy: self.unauth_codebook,
            angle_ranges: AngleRanges {
                azimuth: self.radc_azimuth_range_deg.to_radians(),
                elevation: self.radc_elevation_range_deg.to_radians(),
            },
            legit_seed: self.legit_seed,
            unauth_seed: self.unauth_seed,
            unauth_gain_scale: self.unauth_gain_scale,
        }
    }
}

/// Rectangular grid of points in a horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub z: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 1 || self.ny < 1 {
            return Err(Error::Config("grid needs at least one point per axis".into()));
        }
        for r in [self.x_range, self.y_range] {
            if !(r[0].is_finite() && r[1].is_finite() && r[1] >= r[0]) {
                return Err(Error::Config(format!("bad grid range {r:?}")));
            }
        }
        Ok(())
    }

    fn axis(range: [f64; 2], n: usize, i: usize) -> f64 {
        if n == 1 {
            return 0.5 * (range[0] + range[1]);
        }
        range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64
    }

    /// Points in row-major order, x fastest.
    pub fn points(&self) -> Vec<Position3> {
        (0..self.ny)
            .flat_map(|j| {
                (0..self.nx).map(move |i| {
                    Position3::new(
                        Self::axis(self.x_range, self.nx, i),
                        Self::axis(self.y_range, self.ny, j),
                        self.z,
                    )
                })
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub const MIN_CDF_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub trials: usize,
    pub seed: u64,
    /// Overrides the RIS placements (UE heatmaps, sweeps) or selects the UE
    /// placement (unauthorized-RIS heatmaps).
    pub scenario: Option<u8>,
    pub powers_dbm: Vec<f64>,
    pub ue_grid: GridSpec,
    pub ris_grid: GridSpec,
    pub cdf_samples: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            trials: 50,
            seed: 1,
            scenario: None,
            powers_dbm: (0..=10).map(|i| 4.0 * i as f64).collect(),
            ue_grid: GridSpec {
                x_range: [-1.0, 9.0],
                y_range: [-1.0, 9.0],
                z: -2.0,
                nx: 21,
                ny: 21,
            },
            ris_grid: GridSpec {
                x_range: [-5.0, 5.0],
                y_range: [-3.0, 7.0],
                z: 0.0,
                nx: 21,
                ny: 21,
            },
            cdf_samples: 200,
        }
    }
}

/// Top-level configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scene: SceneConfig,
    pub signal: SignalSettings,
    pub ris: RisSettings,
    pub estimator: EstimatorConfig,
    pub experiment: ExperimentSettings,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.geometry()?;
        self.signal.signal_config()?;
        self.estimator.validate()?;
        let e = &self.experiment;
        e.ue_grid.validate()?;
        e.ris_grid.validate()?;
        if let Some(s) = e.scenario {
            if !(1..=3).contains(&s) {
                return Err(Error::Config(format!("scenario must be 1, 2 or 3, got {s}")));
            }
        }
        if e.cdf_samples < MIN_CDF_SAMPLES {
            return Err(Error::Config(format!(
                "a CDF needs at least {MIN_CDF_SAMPLES} samples, got {}",
                e.cdf_samples
            )));
        }
        if e.powers_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("transmit powers must be finite".into()));
        }
        for d in [self.ris.legit_dims, self.ris.unauth_dims] {
            if d[0] == 0 || d[1] == 0 {
                return Err(Error::Config("RIS dimensions must be positive".into()));
            }
        }
        if !(self.ris.unauth_gain_scale >= 0.0 && self.ris.unauth_gain_scale.is_finite()) {
            return Err(Error::Config("unauthorized gain scale must be non-negative".into()));
        }
        Ok(())
    }

    /// Scene with the configured scenario's RIS placements applied.
    pub fn scene_geometry(&self) -> Result<SceneGeometry> {
        let mut scene = self.scene.clone();
        if let Some(s) = self.experiment.scenario {
            let (l, u) = scenario_placements(s)?;
            scene.ris_legit = l;
            scene.ris_unauth = u;
        }
        scene.geometry()
    }

    pub fn signal_config(&self) -> Result<SignalConfig> {
        self.signal.signal_config()
    }

    pub fn deployment(&self, scene: &SceneGeometry, cfg: &SignalConfig) -> Result<RisDeployment> {
        RisDeployment::build(scene, cfg, &self.ris.deployment_spec())
    }
}

/// RIS placements of the three UE-heatmap scenarios: perpendicular plates,
/// collinear plates facing the same way, collinear plates facing each other.
pub fn scenario_placements(scenario: u8) -> Result<(PlacementConfig, PlacementConfig)> {
    let legit = PlacementConfig::at([-2.0, 4.0, 0.0], 0.0);
    match scenario {
        1 => Ok((legit, PlacementConfig::at([2.0, 5.0, 0.0], FRAC_PI_2))),
        2 => Ok((legit, PlacementConfig::at([2.0, 4.0, 0.0], 0.0))),
        3 => Ok((legit, PlacementConfig::at([2.0, 4.0, 0.0], PI))),
        s => Err(Error::Config(format!("unknown scenario {s}"))),
    }
}

/// Fixed BS, legitimate RIS and UE of the unauthorized-RIS heatmaps. All lie in
/// the z = 0 plane; the legitimate plate faces the BS.
pub fn attacker_setup(scenario: u8) -> Result<(Position3, Placement, Position3)> {
    let bs = Position3::new(0.0, 0.0, 0.0);
    let ris = Placement::new(Position3::new(4.0, 2.0, 0.0), EulerAngles::yaw_only((-2.0f64).atan2(-4.0))?);
    let ue = match scenario {
        1 => Position3::new(0.0, 5.0, 0.0),
        2 => Position3::new(2.0, 3.0, 0.0),
        3 => Position3::new(4.0, 0.0, 0.0),
        s => return Err(Error::Config(format!("unknown scenario {s}"))),
    };
    Ok((bs, ris, ue))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_is_table_defaults() {
        let c = Config::from_json("{}").unwrap();
        assert_eq!(c, Config::default());
        let cfg = c.signal_config().unwrap();
        assert!((cfg.subcarrier_spacing_hz - 1.5625e6).abs() < 1e-6);
        assert_eq!(cfg.num_symbols, 192);
        let scene = c.scene_geometry().unwrap();
        assert_eq!(scene.ue, Position3::new(1.0, 4.0, -2.0));
        assert_eq!(scene.clock_offset_m, 5.0);
    }

    #[test]
    fn round_trips_through_json() {
        let c = Config::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(Config::from_json(&text).unwrap(), c);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(Config::from_json(r#"{"signal": {"carrier": 1}}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(Config::from_json(r#"{"signal": {"num_symbols": 7}}"#).is_err());
        assert!(Config::from_json(r#"{"experiment": {"scenario": 4}}"#).is_err());
        assert!(Config::from_json(r#"{"ris": {"unauth_codebook": "nope"}}"#).is_err());
        assert!(Config::from_json(r#"{"scene": {"ue": [0, 0, 0]}}"#).is_err());
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let c = Config::from_json(r#"{"ris": {"unauth_codebook": "rpdc"}, "experiment": {"trials": 3}}"#).unwrap();
        assert_eq!(c.ris.unauth_codebook, UnauthorizedStrategy::Rpdc);
        assert_eq!(c.experiment.trials, 3);
        assert_eq!(c.ris.legit_dims, [10, 10]);
    }

    #[test]
    fn scenario_one_plates_are_perpendicular() {
        let mut c = Config::default();
        c.experiment.scenario = Some(1);
        let s = c.scene_geometry().unwrap();
        let nl = s.ris_l.rotation() * nalgebra::Vector3::x();
        let nu = s.ris_u.rotation() * nalgebra::Vector3::x();
        assert!(nl.dot(&nu).abs() < 1e-12);
        c.experiment.scenario = Some(3);
        let s = c.scene_geometry().unwrap();
        let nu = s.ris_u.rotation() * nalgebra::Vector3::x();
        assert!((nl.dot(&nu) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_points_cover_the_corners() {
        let g = ExperimentSettings::default().ue_grid;
        let p = g.points();
        assert_eq!(p.len(), 441);
        assert_eq!(p[0], Position3::new(-1.0, -1.0, -2.0));
        assert_eq!(p[440], Position3::new(9.0, 9.0, -2.0));
        assert!((p[1].x + 0.5).abs() < 1e-12);
    }

    #[test]
    fn attacker_setup_faces_the_bs() {
        let (bs, ris, _) = attacker_setup(2).unwrap();
        let t = ris.direction_to(&bs).unwrap();
        assert!((t - nalgebra::Vector3::x()).norm() < 1e-12);
    }
}
