//! Two-stage positioning: a low-complexity channel estimate with a
//! closed-form state, then mismatched-MLE refinement of channel and state.

pub mod delay;
pub mod joint;
pub mod mle;
pub mod position;

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix4, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bounds::{equivalent_fim, fim_channel, AssumedModel};
use crate::channel::{ElementLayout, RisDeployment, SignalConfig};
use crate::codebooks::Codebook;
use crate::error::{Error, Result};
use crate::geometry::SceneGeometry;
use crate::params::{ChannelParams, KnownGeometry, NuisanceFreeParams, StateVector};
use crate::rx::{los_response, orthogonal_combine, ris_response, CombinedBlocks};

pub use delay::{delay_power_spectrum, detect_ris_delay_peaks, estimate_los_delay, DelaySearch, PeakList};
pub use joint::{joint_ris_search, AngleDictionary, AngleGrid, JointEstimate};
pub use mle::{mle_refine_channel, mle_refine_state, ChannelFit, ProjectionObjective, RefineOptions};
pub use position::{closed_form_position, fit_state, StateFit};

/// Where the coarse position grid is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridCenter {
    /// The closed-form position of the low-complexity estimate.
    ClosedForm,
    /// The true UE position. Only meaningful in simulation.
    Oracle,
}

/// Cubic position grid searched on the projection objective before refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoarseGrid {
    pub enabled: bool,
    pub half_width_m: f64,
    pub step_m: f64,
    pub center: GridCenter,
}

impl Default for CoarseGrid {
    fn default() -> Self {
        Self {
            enabled: true,
            half_width_m: 1.0,
            step_m: 0.2,
            center: GridCenter::ClosedForm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub delay: DelaySearch,
    pub angle_resolution_deg: f64,
    pub coarse_grid: CoarseGrid,
    pub refine: RefineOptions,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            delay: DelaySearch::default(),
            angle_resolution_deg: 1.6,
            coarse_grid: CoarseGrid::default(),
            refine: RefineOptions::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.delay.validate()?;
        if !(self.angle_resolution_deg > 0.0 && self.angle_resolution_deg < 90.0) {
            return Err(Error::Config(format!(
                "angle resolution {} deg out of (0, 90)",
                self.angle_resolution_deg
            )));
        }
        let g = &self.coarse_grid;
        if g.enabled && !(g.step_m > 0.0 && g.half_width_m >= 0.0 && g.half_width_m / g.step_m <= 50.0) {
            return Err(Error::Config(format!(
                "coarse grid half-width {} m with step {} m is not usable",
                g.half_width_m, g.step_m
            )));
        }
        if self.refine.max_iterations == 0 {
            return Err(Error::Config("refinement needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Output of both stages for one observation.
#[derive(Debug, Clone)]
pub struct PipelineEstimate {
    pub peaks: PeakList,
    pub joint: JointEstimate,
    /// Low-complexity channel estimate `(τ̂_u, φ̂, θ̂, τ̂_rl)`.
    pub coarse_channel: NuisanceFreeParams,
    pub closed_form: Option<StateVector>,
    /// Grid-search position when the grid is enabled, otherwise the closed form.
    pub coarse_state: StateVector,
    pub fine: ChannelFit,
    pub fine_state: StateVector,
    pub efim_fallback: bool,
    pub state_converged: bool,
}

/// Precomputed estimator for one deployment of the legitimate RIS.
#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: SignalConfig,
    config: EstimatorConfig,
    known: KnownGeometry,
    layout: ElementLayout,
    weights_half: DMatrix<Complex64>,
    t_departure: Vector3<f64>,
    dictionary: Arc<AngleDictionary>,
    model: AssumedModel,
}

impl Estimator {
    pub fn new(
        cfg: &SignalConfig,
        known: KnownGeometry,
        layout: &ElementLayout,
        legit_codebook: &Codebook,
        config: EstimatorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        config.validate()?;
        let t_departure = known.ris_l.direction_to(&known.bs)?;
        let h = cfg.half_symbols();
        let weights_half = legit_codebook.weights.columns(0, h).into_owned();
        let grid = AngleGrid::front_half_space(config.angle_resolution_deg.to_radians())?;
        let dictionary = AngleDictionary::new(grid, layout, &weights_half, &t_departure, cfg.carrier_hz)?;
        let model = AssumedModel::new(cfg, layout, &legit_codebook.weights, &t_departure)?;
        Ok(Self {
            cfg: cfg.clone(),
            config,
            known,
            layout: layout.clone(),
            weights_half,
            t_departure,
            dictionary: Arc::new(dictionary),
            model,
        })
    }

    pub fn for_scene(
        scene: &SceneGeometry,
        cfg: &SignalConfig,
        deployment: &RisDeployment,
        config: EstimatorConfig,
    ) -> Result<Self> {
        let known = KnownGeometry {
            bs: scene.bs,
            ris_l: scene.ris_l,
        };
        Self::new(cfg, known, &deployment.legit_layout, &deployment.legit_codebook, config)
    }

    /// Same estimator at a different power or noise level; the angle
    /// dictionary is shared.
    pub fn with_signal(&self, cfg: &SignalConfig) -> Result<Self> {
        if cfg.num_subcarriers != self.cfg.num_subcarriers
            || cfg.num_symbols != self.cfg.num_symbols
            || cfg.carrier_hz != self.cfg.carrier_hz
        {
            return Err(Error::DimensionMismatch(
                "signal grid differs from the one the dictionary was built for".into(),
            ));
        }
        let mut out = self.clone();
        out.model = AssumedModel::new(cfg, &self.layout, &self.full_weights(), &self.t_departure)?;
        out.cfg = cfg.clone();
        Ok(out)
    }

    fn full_weights(&self) -> DMatrix<Complex64> {
        let h = self.weights_half.ncols();
        let mut w = DMatrix::zeros(self.weights_half.nrows(), 2 * h);
        w.columns_mut(0, h).copy_from(&self.weights_half);
        w.columns_mut(h, h).copy_from(&(-&self.weights_half));
        w
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn known(&self) -> &KnownGeometry {
        &self.known
    }

    pub fn objective<'a>(&'a self, blocks: &'a CombinedBlocks) -> Result<ProjectionObjective<'a>> {
        ProjectionObjective::new(
            blocks,
            &self.cfg.pilots,
            self.cfg.subcarrier_spacing_hz,
            self.cfg.carrier_hz,
            &self.layout,
            &self.weights_half,
            &self.t_departure,
        )
    }

    /// Grid point with the smallest projection objective, the clock offset of
    /// each candidate following from the LOS delay.
    pub fn coarse_grid_search(
        &self,
        objective: &ProjectionObjective,
        center: &StateVector,
        tau_u: f64,
    ) -> StateVector {
        let g = &self.config.coarse_grid;
        let n = (g.half_width_m / g.step_m).round() as i64;
        let c = crate::geometry::SPEED_OF_LIGHT;
        let mut best = (f64::INFINITY, *center);
        for i in -n..=n {
            for j in -n..=n {
                for k in -n..=n {
                    let p = center.position + Vector3::new(i as f64, j as f64, k as f64) * g.step_m;
                    let s = StateVector::new(p, c * tau_u - (p - self.known.bs).norm());
                    let Ok(eta) = self.known.nuisance_free_from_state(&s) else {
                        continue;
                    };
                    let v = objective.value(&eta);
                    if v < best.0 {
                        best = (v, s);
                    }
                }
            }
        }
        best.1
    }

    /// EFIM at a channel estimate, gains taken from the block projections.
    fn efim_at(&self, objective: &ProjectionObjective, eta: &NuisanceFreeParams) -> Matrix4<f64> {
        let g = objective.gains(eta);
        let s = self.cfg.tx_power_watts.sqrt();
        let full = ChannelParams {
            tau_u: eta.tau_u,
            rho_u: g.los.norm() / s,
            beta_u: g.los.arg(),
            phi: eta.phi,
            theta: eta.theta,
            tau_rl: eta.tau_rl,
            rho_rl: g.ris.norm() / s,
            beta_rl: g.ris.arg(),
        };
        match fim_channel(&self.model, &full) {
            Ok(fim) => equivalent_fim(&fim),
            Err(_) => Matrix4::zeros(),
        }
    }

    /// Runs both stages on a K×G observation. `oracle` is the true state and is
    /// only used by an oracle-centered coarse grid.
    pub fn estimate(&self, y: &DMatrix<Complex64>, oracle: Option<&StateVector>) -> Result<PipelineEstimate> {
        let df = self.cfg.subcarrier_spacing_hz;
        let blocks = orthogonal_combine(y)?;
        let pilots = &self.cfg.pilots;
        let tau_u = estimate_los_delay(&los_response(&blocks.y_u, pilots)?, df, &self.config.delay)?;
        let peaks = detect_ris_delay_peaks(&ris_response(&blocks.y_rl, pilots)?, df, &self.config.delay)?;
        let joint = joint_ris_search(&blocks.y_rl, pilots, &peaks, &self.dictionary, df)?;
        let coarse_channel = NuisanceFreeParams {
            tau_u,
            phi: joint.phi,
            theta: joint.theta,
            tau_rl: joint.tau_rl,
        };
        let closed_form = closed_form_position(&coarse_channel, &self.known);
        let objective = self.objective(&blocks)?;

        let grid = &self.config.coarse_grid;
        let (coarse_state, init) = if grid.enabled {
            let center = match grid.center {
                GridCenter::ClosedForm => *closed_form.as_ref().map_err(clone_err)?,
                GridCenter::Oracle => *oracle.ok_or_else(|| {
                    Error::Config("oracle-centered grid needs the true state".into())
                })?,
            };
            let s = self.coarse_grid_search(&objective, &center, tau_u);
            let eta = self.known.nuisance_free_from_state(&s)?;
            (s, eta)
        } else {
            (*closed_form.as_ref().map_err(clone_err)?, coarse_channel)
        };

        let fine = mle_refine_channel(&objective, &init, self.cfg.delay_resolution(), &self.config.refine);
        let efim = self.efim_at(&objective, &fine.eta);
        let start = closed_form_position(&fine.eta, &self.known).unwrap_or(coarse_state);
        let (state_fit, efim_fallback) = mle_refine_state(&fine.eta, &efim, &start, &self.known)?;
        Ok(PipelineEstimate {
            peaks,
            joint,
            coarse_channel,
            closed_form: closed_form.ok(),
            coarse_state,
            fine,
            fine_state: state_fit.state,
            efim_fallback,
            state_converged: state_fit.converged,
        })
    }
}

fn clone_err(e: &Error) -> Error {
    match e {
        Error::InfeasibleGeometry(m) => Error::InfeasibleGeometry(m.clone()),
        Error::IllConditionedGeometry(m) => Error::IllConditionedGeometry(m.clone()),
        other => Error::InvalidParameter(other.to_string()),
    }
}
