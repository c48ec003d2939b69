//! Lower bounds on channel and state estimation.
//!
//! The CRB is computed for the interference-free model. With an unauthorized
//! RIS present the estimator is misspecified: its estimates concentrate on
//! the pseudo-true `η₀` that best explains the true mean with the assumed
//! model, and the MCRB/MLB describe the spread and bias around it. Mapping
//! `η₀` back to a state gives `s₀`, whose distance from the true state is the
//! absolute lower bound (ALB) on positioning error.

pub mod fim;
pub mod mismatch;
pub mod model;

use nalgebra::{DMatrix, Matrix4};

use crate::channel::{channel_paths, RisDeployment, SignalConfig};
use crate::error::{Error, Result};
use crate::estimator::position::{closed_form_position, fit_state};
use crate::geometry::SceneGeometry;
use crate::params::{ChannelParams, KnownGeometry, NuisanceFreeParams, StateVector, NUM_CHANNEL_PARAMS};

pub use fim::{crb_aggregate, crb_diagonal, crb_state, equivalent_fim, fim_channel, invert_information};
pub use mismatch::{mcrb_mlb_channel, pseudo_true_channel, Mismatch, MisspecifiedBounds, PseudoTrue};
pub use model::{true_channel_params, AssumedModel};

/// Pseudo-true state and the resulting absolute lower bounds.
#[derive(Debug, Clone, Copy)]
pub struct StateBias {
    pub s0: StateVector,
    pub alb_position_m: f64,
    pub alb_clock_m: f64,
    pub converged: bool,
}

/// `s₀ = argmin (η₀N − η_N(s))ᵀ EFIM (η₀N − η_N(s))`, started from the closed
/// form on `η₀N` (or from the true state when that is infeasible).
pub fn pseudo_true_state_and_alb(
    eta0: &NuisanceFreeParams,
    efim: &Matrix4<f64>,
    known: &KnownGeometry,
    s_true: &StateVector,
) -> Result<StateBias> {
    let init = closed_form_position(eta0, known).unwrap_or(*s_true);
    let fit = fit_state(eta0, efim, known, &init)?;
    let (s0, converged) = if fit.cost.is_finite() {
        (fit.state, fit.converged)
    } else {
        return Err(Error::Optimizer("pseudo-true state fit diverged".into()));
    };
    Ok(StateBias {
        s0,
        alb_position_m: (s0.position - s_true.position).norm(),
        alb_clock_m: (s0.clock_offset_m - s_true.clock_offset_m).abs(),
        converged,
    })
}

/// Every bound for one scene.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub eta_true: ChannelParams,
    pub fim: DMatrix<f64>,
    pub efim: Matrix4<f64>,
    /// `sqrt(diag(I⁻¹))`, native units.
    pub crb: [f64; NUM_CHANNEL_PARAMS],
    pub crb_aggregate: f64,
    /// State CRB covariance, `[x, y, z, B]`.
    pub crb_state: Matrix4<f64>,
    pub eta0: ChannelParams,
    pub pseudo_true_objective: f64,
    pub objective_at_truth: f64,
    /// Variances (diagonals), native units squared.
    pub mcrb: [f64; NUM_CHANNEL_PARAMS],
    pub mlb: [f64; NUM_CHANNEL_PARAMS],
    pub bias: [f64; NUM_CHANNEL_PARAMS],
    pub s0: StateVector,
    pub alb_position_m: f64,
    pub alb_clock_m: f64,
    /// Set when any inversion fell back to a pseudo-inverse or a fit did not converge.
    pub degraded: bool,
}

impl BoundReport {
    /// `sqrt(tr)` of the position block of the state CRB, meters.
    pub fn crb_position_m(&self) -> f64 {
        (0..3).map(|i| self.crb_state[(i, i)].max(0.0)).sum::<f64>().sqrt()
    }

    pub fn crb_clock_m(&self) -> f64 {
        self.crb_state[(3, 3)].max(0.0).sqrt()
    }
}

/// Computes CRB, pseudo-true parameters, MCRB/MLB and ALB for a scene.
pub fn compute_bounds(scene: &SceneGeometry, cfg: &SignalConfig, deployment: &RisDeployment) -> Result<BoundReport> {
    let model = AssumedModel::for_scene(scene, cfg, deployment)?;
    let eta_true = true_channel_params(scene, cfg)?;
    let fim = fim_channel(&model, &eta_true)?;
    let (_, fim_singular) = invert_information(&fim);
    let crb_vec = crb_diagonal(&fim);
    let crb: [f64; NUM_CHANNEL_PARAMS] = std::array::from_fn(|i| crb_vec[i]);
    let efim = equivalent_fim(&fim);

    let known = KnownGeometry {
        bs: scene.bs,
        ris_l: scene.ris_l,
    };
    let s_true = StateVector::new(scene.ue, scene.clock_offset_m);
    let jn = known.nuisance_free_jacobian(&s_true)?;
    let crb_s = crb_state(&efim, &jn);

    let paths = channel_paths(scene, cfg, deployment)?;
    let mismatch = Mismatch::new(&model, eta_true, Some(paths.unauth));
    let pt = pseudo_true_channel(&mismatch)?;
    let mb = mcrb_mlb_channel(&mismatch, &pt.eta0)?;
    let sb = pseudo_true_state_and_alb(&pt.eta0.nuisance_free(), &efim, &known, &s_true)?;

    Ok(BoundReport {
        eta_true,
        crb,
        crb_aggregate: crb_aggregate(&fim),
        crb_state: crb_s,
        fim,
        efim,
        eta0: pt.eta0,
        pseudo_true_objective: pt.objective,
        objective_at_truth: pt.objective_at_truth,
        mcrb: mb.mcrb_diag(),
        mlb: mb.mlb_diag(),
        bias: mb.bias,
        s0: sb.s0,
        alb_position_m: sb.alb_position_m,
        alb_clock_m: sb.alb_clock_m,
        degraded: fim_singular || mb.a_singular || !pt.converged || !sb.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebooks::UnauthorizedStrategy;
    use crate::geometry::{EulerAngles, Placement, Position3};
    use crate::testutil::small_setup;
    use nalgebra::Vector4;

    #[test]
    fn matched_model_has_zero_alb() {
        let (scene, cfg, mut dep) = small_setup(16, 8, UnauthorizedStrategy::Random);
        dep.unauth_gain_scale = 0.0;
        let r = compute_bounds(&scene, &cfg, &dep).unwrap();
        assert!(r.alb_position_m < 1e-9);
        assert!(r.alb_clock_m < 1e-9);
        for i in 0..8 {
            assert!((r.mcrb[i] / (r.crb[i] * r.crb[i]) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn state_jacobian_los_row() {
        let (scene, _, _) = small_setup(16, 8, UnauthorizedStrategy::Random);
        let known = KnownGeometry { bs: scene.bs, ris_l: scene.ris_l };
        let s = StateVector::new(scene.ue, scene.clock_offset_m);
        let j = known.nuisance_free_jacobian(&s).unwrap();
        let c = crate::geometry::SPEED_OF_LIGHT;
        let d = (scene.ue - scene.bs) / ((scene.ue - scene.bs).norm() * c);
        for k in 0..3 {
            assert!((j[(0, k)] - d[k]).abs() < 1e-22);
        }
        assert_eq!(j[(0, 3)], 1.0 / c);
    }

    #[test]
    fn position_crb_invariant_under_rotation() {
        let (scene, cfg, dep) = small_setup(32, 8, UnauthorizedStrategy::Random);
        let base = compute_bounds(&scene, &cfg, &dep).unwrap();
        // rotate every position and both plates by 0.7 rad about z
        let yaw = 0.7;
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), yaw);
        let turn = |p: Position3| Position3::from(rot * p.coords);
        let mut rotated = scene;
        rotated.bs = turn(scene.bs);
        rotated.ue = turn(scene.ue);
        rotated.ris_l = Placement::new(turn(scene.ris_l.position), EulerAngles::yaw_only(yaw).unwrap());
        rotated.ris_u = Placement::new(turn(scene.ris_u.position), EulerAngles::yaw_only(yaw).unwrap());
        let r = compute_bounds(&rotated, &cfg, &dep).unwrap();
        assert!((r.crb_position_m() / base.crb_position_m() - 1.0).abs() < 1e-6);
        assert!((r.crb_clock_m() / base.crb_clock_m() - 1.0).abs() < 1e-6);
    }

    /// Dense 4-D grid oracle for `s₀` at 0.05 m / 0.05 m steps over ±0.5 m.
    #[test]
    fn pseudo_true_state_grid_oracle() {
        let (scene, cfg, dep) = small_setup(16, 8, UnauthorizedStrategy::Rpdc);
        let r = compute_bounds(&scene, &cfg, &dep).unwrap();
        let known = KnownGeometry { bs: scene.bs, ris_l: scene.ris_l };
        let target = r.eta0.nuisance_free();
        let cost = |s: &StateVector| {
            let d = target.difference(&known.nuisance_free_from_state(s).unwrap());
            (d.transpose() * r.efim * d)[(0, 0)]
        };
        let step = 0.05;
        let center = closed_form_position(&target, &known).unwrap().to_vector();
        let mut best = (f64::INFINITY, Vector4::zeros());
        let offsets: Vec<f64> = (-10..=10).map(|i| i as f64 * step).collect();
        for &a in &offsets {
            for &b in &offsets {
                for &c in &offsets {
                    for &d in &offsets {
                        let v = center + Vector4::new(a, b, c, d);
                        let s = StateVector::from_vector(&v);
                        let f = cost(&s);
                        if f < best.0 {
                            best = (f, v);
                        }
                    }
                }
            }
        }
        assert!(cost(&r.s0) <= best.0 * (1.0 + 1e-9) + 1e-300);
        assert!((best.1 - r.s0.to_vector()).amax() <= step, "grid {:?} s0 {:?} center {:?}", best.1, r.s0, center);
    }
}
