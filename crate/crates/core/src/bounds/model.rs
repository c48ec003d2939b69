//! The interference-free (assumed) model mean and its analytic partials,
//! kept in rank-one form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;

use crate::channel::{
    delay_vector, path_gain, steering_vector, ElementLayout, PathLength, RisDeployment, SignalConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{angles_from_direction, direction_partials, path_geometry, SceneGeometry};
use crate::lowrank::RankOne;
use crate::params::{ChannelParams, NUM_CHANNEL_PARAMS};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Everything needed to evaluate `μ̃(η)` for any `η`.
#[derive(Debug, Clone)]
pub struct AssumedModel {
    pub cfg: SignalConfig,
    /// `√P · x`, length K.
    scaled_pilots: DVector<Complex64>,
    /// `−j2πkΔf`, length K.
    delay_slope: DVector<Complex64>,
    /// Legitimate codebook transposed, G×N.
    weights_t: DMatrix<Complex64>,
    layout: ElementLayout,
    /// `a(t_D)` of the legitimate RIS towards the BS.
    a_departure: DVector<Complex64>,
}

impl AssumedModel {
    pub fn new(
        cfg: &SignalConfig,
        layout: &ElementLayout,
        legit_weights: &DMatrix<Complex64>,
        t_departure: &Vector3<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        if legit_weights.nrows() != layout.len() || legit_weights.ncols() != cfg.num_symbols {
            return Err(Error::DimensionMismatch(format!(
                "legitimate codebook is {}×{}, expected {}×{}",
                legit_weights.nrows(),
                legit_weights.ncols(),
                layout.len(),
                cfg.num_symbols
            )));
        }
        let df = cfg.subcarrier_spacing_hz;
        Ok(Self {
            cfg: cfg.clone(),
            scaled_pilots: &cfg.pilots * Complex64::new(cfg.tx_power_watts.sqrt(), 0.0),
            delay_slope: DVector::from_iterator(
                cfg.num_subcarriers,
                (0..cfg.num_subcarriers).map(|k| -J * (2.0 * PI * k as f64 * df)),
            ),
            weights_t: legit_weights.transpose(),
            layout: layout.clone(),
            a_departure: steering_vector(layout, t_departure, cfg.carrier_hz),
        })
    }

    pub fn for_scene(scene: &SceneGeometry, cfg: &SignalConfig, deployment: &RisDeployment) -> Result<Self> {
        Self::new(
            cfg,
            &deployment.legit_layout,
            &deployment.legit_codebook.weights,
            &scene.legit_departure()?,
        )
    }

    pub fn rows(&self) -> usize {
        self.cfg.num_subcarriers
    }

    pub fn cols(&self) -> usize {
        self.cfg.num_symbols
    }

    /// `√P x ⊙ d(τ)`, gain excluded.
    fn delay_factor(&self, tau: f64) -> DVector<Complex64> {
        let d = delay_vector(tau, self.cfg.num_subcarriers, self.cfg.subcarrier_spacing_hz);
        self.scaled_pilots.component_mul(&d)
    }

    /// `a(t_D) ⊙ a(t(φ, θ))`.
    fn element_product(&self, phi: f64, theta: f64) -> DVector<Complex64> {
        let t = crate::geometry::direction_from_angles(phi, theta);
        steering_vector(&self.layout, &t, self.cfg.carrier_hz).component_mul(&self.a_departure)
    }

    /// Per-symbol RIS response for arrival angles `(φ, θ)`, length G.
    pub fn ris_symbol_factor(&self, phi: f64, theta: f64) -> DVector<Complex64> {
        &self.weights_t * self.element_product(phi, theta)
    }

    /// Gain-free LOS and RIS terms `(x⊙d(τ_u))·1ᵀ` and `(x⊙d(τ_rl))·Aᵀ`.
    pub fn unit_gain_terms(&self, tau_u: f64, phi: f64, theta: f64, tau_rl: f64) -> [RankOne; 2] {
        [
            RankOne::new(
                self.delay_factor(tau_u),
                DVector::from_element(self.cols(), Complex64::new(1.0, 0.0)),
            ),
            RankOne::new(self.delay_factor(tau_rl), self.ris_symbol_factor(phi, theta)),
        ]
    }

    /// LOS and legitimate RIS terms of `μ̃(η)`.
    pub fn terms(&self, eta: &ChannelParams) -> [RankOne; 2] {
        let [los, ris] = self.unit_gain_terms(eta.tau_u, eta.phi, eta.theta, eta.tau_rl);
        [
            los.scaled(Complex64::from_polar(eta.rho_u, eta.beta_u)),
            ris.scaled(Complex64::from_polar(eta.rho_rl, eta.beta_rl)),
        ]
    }

    pub fn mean_dense(&self, eta: &ChannelParams) -> DMatrix<Complex64> {
        let [a, b] = self.terms(eta);
        a.to_dense() + b.to_dense()
    }

    /// Analytic `∂μ̃/∂η_i`, one rank-one term per parameter, ordered as `η`.
    pub fn jacobian_terms(&self, eta: &ChannelParams) -> [RankOne; NUM_CHANNEL_PARAMS] {
        let ones = DVector::from_element(self.cols(), Complex64::new(1.0, 0.0));
        let los_unit = self.delay_factor(eta.tau_u);
        let ris_unit = self.delay_factor(eta.tau_rl);
        let e_u = Complex64::from_polar(1.0, eta.beta_u);
        let e_rl = Complex64::from_polar(1.0, eta.beta_rl);
        let los = &los_unit * (e_u * eta.rho_u);
        let ris = &ris_unit * (e_rl * eta.rho_rl);

        let prod = self.element_product(eta.phi, eta.theta);
        let sym = &self.weights_t * &prod;
        let kappa = self.cfg.wavenumber();
        let (dt_dphi, dt_dtheta) = direction_partials(eta.phi, eta.theta);
        let dsym = |dt: &Vector3<f64>| {
            let phase = self.layout.positions.tr_mul(dt);
            let v = prod.zip_map(&phase, |a, p| a * J * (kappa * p));
            &self.weights_t * v
        };

        [
            RankOne::new(los.component_mul(&self.delay_slope), ones.clone()),
            RankOne::new(&los_unit * e_u, ones.clone()),
            RankOne::new(&los * J, ones),
            RankOne::new(ris.clone(), dsym(&dt_dphi)),
            RankOne::new(ris.clone(), dsym(&dt_dtheta)),
            RankOne::new(ris.component_mul(&self.delay_slope), sym.clone()),
            RankOne::new(&ris_unit * e_rl, sym.clone()),
            RankOne::new(&ris * J, sym),
        ]
    }

    /// Dense KG×8 Jacobian with column-major vectorization of each K×G block.
    pub fn jacobian_dense(&self, eta: &ChannelParams) -> DMatrix<Complex64> {
        let terms = self.jacobian_terms(eta);
        let n = self.rows() * self.cols();
        let cols: Vec<DVector<Complex64>> = terms
            .iter()
            .map(|t| DVector::from_column_slice(t.to_dense().as_slice()))
            .collect();
        let mut out = DMatrix::zeros(n, NUM_CHANNEL_PARAMS);
        for (i, c) in cols.iter().enumerate() {
            out.set_column(i, c);
        }
        out
    }
}

/// True `η̄` of a scene under the free-space gain model.
pub fn true_channel_params(scene: &SceneGeometry, cfg: &SignalConfig) -> Result<ChannelParams> {
    let delays = path_geometry(scene)?;
    let los = path_gain(PathLength::Los((scene.bs - scene.ue).norm()), cfg.carrier_hz)?;
    let ris = path_gain(
        PathLength::Ris(
            (scene.bs - scene.ris_l.position).norm(),
            (scene.ue - scene.ris_l.position).norm(),
        ),
        cfg.carrier_hz,
    )?;
    let angles = angles_from_direction(&scene.legit_arrival()?)?.angles;
    Ok(ChannelParams {
        tau_u: delays.tau_u,
        rho_u: los.magnitude,
        beta_u: los.phase,
        phi: angles.azimuth,
        theta: angles.elevation,
        tau_rl: delays.tau_rl,
        rho_rl: ris.magnitude,
        beta_rl: ris.phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::small_setup;
    use crate::channel::channel_paths;
    use crate::codebooks::UnauthorizedStrategy;

    #[test]
    fn assumed_terms_match_synthesis() {
        let (scene, cfg, dep) = small_setup(16, 8, UnauthorizedStrategy::Random);
        let model = AssumedModel::for_scene(&scene, &cfg, &dep).unwrap();
        let eta = true_channel_params(&scene, &cfg).unwrap();
        let paths = channel_paths(&scene, &cfg, &dep).unwrap();
        let [los, ris] = model.terms(&eta);
        let scale = paths.los.to_dense().norm();
        assert!((los.to_dense() - paths.los.to_dense()).norm() < 1e-12 * scale);
        assert!((ris.to_dense() - paths.legit.to_dense()).norm() < 1e-12 * paths.legit.to_dense().norm());
    }

    #[test]
    fn phase_partial_is_j_times_mean() {
        let (scene, cfg, dep) = small_setup(16, 8, UnauthorizedStrategy::Random);
        let model = AssumedModel::for_scene(&scene, &cfg, &dep).unwrap();
        let eta = true_channel_params(&scene, &cfg).unwrap();
        let jt = model.jacobian_terms(&eta);
        let [los, ris] = model.terms(&eta);
        assert!((jt[2].to_dense() - los.to_dense() * J).norm() <= 1e-15 * los.to_dense().norm());
        assert!((jt[7].to_dense() - ris.to_dense() * J).norm() <= 1e-15 * ris.to_dense().norm());
    }

    #[test]
    fn delay_partial_at_zero_delay() {
        let (scene, cfg, dep) = small_setup(16, 8, UnauthorizedStrategy::Random);
        let model = AssumedModel::for_scene(&scene, &cfg, &dep).unwrap();
        let mut eta = true_channel_params(&scene, &cfg).unwrap();
        eta.tau_u = 0.0;
        let jt = model.jacobian_terms(&eta);
        let [los, _] = model.terms(&eta);
        let dense = los.to_dense();
        for k in 0..16 {
            let f = -J * (2.0 * PI * k as f64 * cfg.subcarrier_spacing_hz);
            for g in 0..8 {
                assert!((jt[0].to_dense()[(k, g)] - f * dense[(k, g)]).norm() < 1e-12 * dense.norm());
            }
        }
    }
}
