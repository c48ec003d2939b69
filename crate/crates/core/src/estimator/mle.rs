//! Mismatched maximum-likelihood refinement of the nuisance-free channel
//! parameters and of the state.

use nalgebra::{DMatrix, DVector, Matrix4, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::position::{fit_state, StateFit};
use crate::bounds::invert_information;
use crate::channel::{delay_vector, steering_vector, ElementLayout};
use crate::error::{Error, Result};
use crate::geometry::{direction_from_angles, SPEED_OF_LIGHT};
use crate::optim::{levenberg_marquardt, nelder_mead, FiniteDifference, LmOptions, NelderMeadOptions, ResidualProblem};
use crate::params::{KnownGeometry, NuisanceFreeParams, StateVector};
use crate::rx::CombinedBlocks;

/// Iteration budget and tolerance of the channel refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineOptions {
    pub max_iterations: usize,
    /// Relative objective change at which both stages stop.
    pub rel_tol: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            rel_tol: 1e-10,
        }
    }
}

/// Combined observation blocks with everything needed to evaluate the
/// gain-projected objective.
#[derive(Debug, Clone)]
pub struct ProjectionObjective<'a> {
    pilots: &'a DVector<Complex64>,
    subcarrier_spacing_hz: f64,
    carrier_hz: f64,
    layout: &'a ElementLayout,
    /// N×H legitimate weights seen by the combined RIS block.
    weights_t: DMatrix<Complex64>,
    a_departure: DVector<Complex64>,
    y_u: &'a DMatrix<Complex64>,
    y_rl: &'a DMatrix<Complex64>,
    y_u_rowsum: DVector<Complex64>,
    energy: f64,
}

/// Per-block least-squares gains at a parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGains {
    pub los: Complex64,
    pub ris: Complex64,
}

impl<'a> ProjectionObjective<'a> {
    pub fn new(
        blocks: &'a CombinedBlocks,
        pilots: &'a DVector<Complex64>,
        subcarrier_spacing_hz: f64,
        carrier_hz: f64,
        layout: &'a ElementLayout,
        weights_half: &DMatrix<Complex64>,
        t_departure: &Vector3<f64>,
    ) -> Result<Self> {
        let (k, h) = blocks.y_rl.shape();
        if pilots.len() != k || weights_half.ncols() != h || weights_half.nrows() != layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "blocks {k}×{h}, {} pilots, weights {}×{}",
                pilots.len(),
                weights_half.nrows(),
                weights_half.ncols()
            )));
        }
        Ok(Self {
            pilots,
            subcarrier_spacing_hz,
            carrier_hz,
            layout,
            weights_t: weights_half.transpose(),
            a_departure: steering_vector(layout, t_departure, carrier_hz),
            y_u: &blocks.y_u,
            y_rl: &blocks.y_rl,
            y_u_rowsum: blocks.y_u.column_sum(),
            energy: blocks.y_u.norm_squared() + blocks.y_rl.norm_squared(),
        })
    }

    /// Total observed energy, the objective of an all-zero model.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    fn freq(&self, tau: f64) -> DVector<Complex64> {
        self.pilots
            .component_mul(&delay_vector(tau, self.pilots.len(), self.subcarrier_spacing_hz))
    }

    fn symbols(&self, phi: f64, theta: f64) -> DVector<Complex64> {
        let a = steering_vector(self.layout, &direction_from_angles(phi, theta), self.carrier_hz);
        &self.weights_t * a.component_mul(&self.a_departure)
    }

    fn parts(&self, eta: &NuisanceFreeParams) -> (DVector<Complex64>, DVector<Complex64>, DVector<Complex64>) {
        (
            self.freq(eta.tau_u),
            self.freq(eta.tau_rl),
            self.symbols(eta.phi, eta.theta),
        )
    }

    /// LOS gain `⟨u1ᵀ, Y̊_u⟩/‖u1ᵀ‖²` and RIS gain `⟨uAᵀ, Y̊_RL⟩/‖uAᵀ‖²`.
    pub fn gains(&self, eta: &NuisanceFreeParams) -> ProjectedGains {
        let (u_los, u_ris, sym) = self.parts(eta);
        self.gains_from(&u_los, &u_ris, &sym)
    }

    fn gains_from(&self, u_los: &DVector<Complex64>, u_ris: &DVector<Complex64>, sym: &DVector<Complex64>) -> ProjectedGains {
        let h = self.y_u.ncols() as f64;
        let los_norm = u_los.norm_squared() * h;
        let los = if los_norm > 0.0 { u_los.dotc(&self.y_u_rowsum) / los_norm } else { Complex64::new(0.0, 0.0) };
        let ris_norm = u_ris.norm_squared() * sym.norm_squared();
        let ris = if ris_norm > 0.0 {
            let conj_sym = sym.map(|z| z.conj());
            u_ris.dotc(&(self.y_rl * conj_sym)) / ris_norm
        } else {
            Complex64::new(0.0, 0.0)
        };
        ProjectedGains { los, ris }
    }

    /// `‖Y̊ − P(η_N) Y̊‖²`, the energy left after projecting each block onto
    /// its gain-free model term.
    pub fn value(&self, eta: &NuisanceFreeParams) -> f64 {
        let (u_los, u_ris, sym) = self.parts(eta);
        let g = self.gains_from(&u_los, &u_ris, &sym);
        let h = self.y_u.ncols() as f64;
        let captured = g.los.norm_sqr() * u_los.norm_squared() * h
            + g.ris.norm_sqr() * u_ris.norm_squared() * sym.norm_squared();
        (self.energy - captured).max(0.0)
    }

    /// Stacked real and imaginary parts of the projection residual.
    pub fn residual(&self, eta: &NuisanceFreeParams) -> DVector<f64> {
        let (u_los, u_ris, sym) = self.parts(eta);
        let g = self.gains_from(&u_los, &u_ris, &sym);
        let (k, h) = self.y_u.shape();
        let mut out = DVector::zeros(4 * k * h);
        let mut i = 0;
        for c in 0..h {
            for r in 0..k {
                let e = self.y_u[(r, c)] - g.los * u_los[r];
                out[i] = e.re;
                out[i + 1] = e.im;
                i += 2;
            }
        }
        for c in 0..h {
            for r in 0..k {
                let e = self.y_rl[(r, c)] - g.ris * u_ris[r] * sym[c];
                out[i] = e.re;
                out[i + 1] = e.im;
                i += 2;
            }
        }
        out
    }
}

/// Search coordinates: delays in units of `scale`, angles in radians, all
/// relative to `origin`.
struct Scaled<'o, 'a> {
    objective: &'o ProjectionObjective<'a>,
    origin: NuisanceFreeParams,
    delay_scale: f64,
}

impl Scaled<'_, '_> {
    fn point(&self, x: &DVector<f64>) -> NuisanceFreeParams {
        NuisanceFreeParams {
            tau_u: self.origin.tau_u + x[0] * self.delay_scale,
            phi: self.origin.phi + x[1],
            theta: self.origin.theta + x[2],
            tau_rl: self.origin.tau_rl + x[3] * self.delay_scale,
        }
    }
}

impl ResidualProblem for Scaled<'_, '_> {
    fn residual(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let r = self.objective.residual(&self.point(x));
        r.iter().all(|v| v.is_finite()).then_some(r)
    }
}

/// Outcome of the channel refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelFit {
    pub eta: NuisanceFreeParams,
    pub objective: f64,
    pub initial_objective: f64,
    /// False when the optimiser diverged; `eta` is then the initial point.
    pub converged: bool,
}

/// Simplex descent followed by Levenberg-Marquardt on the projection
/// objective, started from `init`.
pub fn mle_refine_channel(
    objective: &ProjectionObjective,
    init: &NuisanceFreeParams,
    delay_resolution: f64,
    opts: &RefineOptions,
) -> ChannelFit {
    let initial_objective = objective.value(init);
    let failed = ChannelFit {
        eta: *init,
        objective: initial_objective,
        initial_objective,
        converged: false,
    };
    if !init.is_finite() || !initial_objective.is_finite() {
        return failed;
    }
    let scaled = Scaled {
        objective,
        origin: *init,
        delay_scale: delay_resolution,
    };
    let nm = nelder_mead(
        |x| objective.value(&scaled.point(x)),
        &DVector::zeros(4),
        &[0.05, 0.5f64.to_radians(), 0.5f64.to_radians(), 0.05],
        NelderMeadOptions {
            max_iterations: opts.max_iterations,
            rel_tol: opts.rel_tol,
            abs_tol: 0.0,
        },
    );
    let fd = FiniteDifference {
        problem: &scaled,
        steps: vec![1e-5, 1e-6, 1e-6, 1e-5],
    };
    let lm = levenberg_marquardt(
        &fd,
        &nm.x,
        LmOptions {
            max_iterations: opts.max_iterations.min(200),
            cost_tol: opts.rel_tol * 1e-5,
            step_tol: 1e-13,
            initial_lambda: 1e-3,
        },
    );
    let Some(lm) = lm else {
        log::debug!("channel refinement left the feasible region");
        return failed;
    };
    let eta = scaled.point(&lm.x);
    let value = objective.value(&eta);
    if !value.is_finite() || value > initial_objective {
        return failed;
    }
    ChannelFit {
        eta,
        objective: value,
        initial_objective,
        converged: true,
    }
}

/// Weighted state fit of the refined channel parameters. A singular EFIM is
/// replaced by `diag(c², 1, 1, c²)` so delays enter in meters.
pub fn mle_refine_state(
    eta: &NuisanceFreeParams,
    efim: &Matrix4<f64>,
    init: &StateVector,
    known: &KnownGeometry,
) -> Result<(StateFit, bool)> {
    let dm = DMatrix::from_fn(4, 4, |i, j| efim[(i, j)]);
    let finite = efim.iter().all(|v| v.is_finite());
    let singular = !finite || invert_information(&dm).1;
    let weight = if singular {
        log::warn!("singular EFIM; state refinement falls back to identity weighting");
        let c2 = SPEED_OF_LIGHT * SPEED_OF_LIGHT;
        Matrix4::from_diagonal(&nalgebra::Vector4::new(c2, 1.0, 1.0, c2))
    } else {
        *efim
    };
    Ok((fit_state(eta, &weight, known, init)?, singular))
}
