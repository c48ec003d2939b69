//! State recovery from nuisance-free channel parameters: the closed-form
//! RIS-ray intersection and a weighted least-squares fit.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{direction_from_angles, SPEED_OF_LIGHT};
use crate::optim::{levenberg_marquardt, Linearization, LmOptions, NormalProblem};
use crate::params::{KnownGeometry, NuisanceFreeParams, StateVector};

/// Denominators smaller than this (meters) make the closed form ill-conditioned.
pub const GEOMETRY_EPS_M: f64 = 1e-9;

/// Places the UE on the ray from the legitimate RIS along the estimated
/// arrival direction, at the range that reconciles the two delays. The clock
/// offset cancels in the delay difference and is recovered afterwards from
/// the LOS delay.
pub fn closed_form_position(eta: &NuisanceFreeParams, known: &KnownGeometry) -> Result<StateVector> {
    if !eta.is_finite() {
        return Err(Error::InvalidParameter("non-finite channel parameters".into()));
    }
    let c = SPEED_OF_LIGHT;
    if !(eta.tau_rl > eta.tau_u) {
        return Err(Error::InfeasibleGeometry(format!(
            "RIS delay {:.6e} s does not exceed LOS delay {:.6e} s",
            eta.tau_rl, eta.tau_u
        )));
    }
    let t = known.ris_l.rotation() * direction_from_angles(eta.phi, eta.theta);
    let d_r = known.bs_ris_distance();
    let d_delta = d_r + c * eta.tau_u - c * eta.tau_rl;
    let denom = d_delta - t.dot(&(known.ris_l.position - known.bs));
    if denom.abs() < GEOMETRY_EPS_M {
        return Err(Error::IllConditionedGeometry(format!(
            "range denominator {denom:.3e} m"
        )));
    }
    let r = (d_r * d_r - d_delta * d_delta) / (2.0 * denom);
    if !(r > 0.0) {
        return Err(Error::InfeasibleGeometry(format!("negative RIS range {r:.6} m")));
    }
    if r + d_delta < 0.0 {
        return Err(Error::InfeasibleGeometry(format!(
            "negative LOS range {:.6} m",
            r + d_delta
        )));
    }
    let position = known.ris_l.position + t * r;
    let clock_offset_m = c * eta.tau_u - (position - known.bs).norm();
    Ok(StateVector::new(position, clock_offset_m))
}

/// Result of a weighted state fit.
#[derive(Debug, Clone, Copy)]
pub struct StateFit {
    pub state: StateVector,
    pub cost: f64,
    pub initial_cost: f64,
    pub converged: bool,
}

struct WeightedState<'a> {
    target: NuisanceFreeParams,
    weight: Matrix4<f64>,
    known: &'a KnownGeometry,
}

impl WeightedState<'_> {
    fn residual(&self, s: &StateVector) -> Option<Vector4<f64>> {
        let eta = self.known.nuisance_free_from_state(s).ok()?;
        Some(self.target.difference(&eta))
    }

    fn state(x: &DVector<f64>) -> StateVector {
        StateVector::from_vector(&Vector4::new(x[0], x[1], x[2], x[3]))
    }
}

impl NormalProblem for WeightedState<'_> {
    fn cost(&self, x: &DVector<f64>) -> Option<f64> {
        let r = self.residual(&Self::state(x))?;
        Some((r.transpose() * self.weight * r)[(0, 0)].max(0.0))
    }

    fn linearize(&self, x: &DVector<f64>) -> Option<Linearization> {
        let s = Self::state(x);
        let r = self.residual(&s)?;
        let j = self.known.nuisance_free_jacobian(&s).ok()?;
        let wj = self.weight * j;
        let jtj = j.transpose() * wj;
        let jtr = -(j.transpose() * (self.weight * r));
        Some(Linearization {
            jtj: DMatrix::from_fn(4, 4, |i, k| jtj[(i, k)]),
            jtr: DVector::from_column_slice(jtr.as_slice()),
            cost: (r.transpose() * self.weight * r)[(0, 0)].max(0.0),
        })
    }
}

/// `argmin_s (η_N − η_N(s))ᵀ W (η_N − η_N(s))` by Levenberg-Marquardt from `init`.
pub fn fit_state(
    target: &NuisanceFreeParams,
    weight: &Matrix4<f64>,
    known: &KnownGeometry,
    init: &StateVector,
) -> Result<StateFit> {
    let problem = WeightedState {
        target: *target,
        weight: (weight + weight.transpose()) * 0.5,
        known,
    };
    let x0 = DVector::from_column_slice(init.to_vector().as_slice());
    let initial_cost = problem
        .cost(&x0)
        .ok_or_else(|| Error::DegenerateGeometry("initial state coincides with an anchor".into()))?;
    let opts = LmOptions {
        max_iterations: 200,
        cost_tol: 1e-15,
        step_tol: 1e-15,
        initial_lambda: 1e-3,
    };
    let res = levenberg_marquardt(&problem, &x0, opts)
        .ok_or_else(|| Error::Optimizer("state fit left the feasible region".into()))?;
    Ok(StateFit {
        state: WeightedState::state(&res.x),
        cost: res.cost,
        initial_cost,
        converged: res.converged,
    })
}
