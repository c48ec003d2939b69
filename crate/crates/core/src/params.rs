//! Channel-parameter and state vectors, and the map between them.

use nalgebra::{Matrix4, SMatrix, SVector, Vector3, Vector4};

use crate::channel::wrap_phase;
use crate::error::{Error, Result};
use crate::geometry::{angles_from_direction, Placement, Position3, SPEED_OF_LIGHT};

/// Index of each entry inside the 8-vector `η`.
pub mod idx {
    pub const TAU_U: usize = 0;
    pub const RHO_U: usize = 1;
    pub const BETA_U: usize = 2;
    pub const PHI: usize = 3;
    pub const THETA: usize = 4;
    pub const TAU_RL: usize = 5;
    pub const RHO_RL: usize = 6;
    pub const BETA_RL: usize = 7;

    /// Positions of `[τ_u, φ, θ, τ_rl]` inside `η`.
    pub const NUISANCE_FREE: [usize; 4] = [TAU_U, PHI, THETA, TAU_RL];
    /// Positions of the gain magnitudes and phases inside `η`.
    pub const GAINS: [usize; 4] = [RHO_U, BETA_U, RHO_RL, BETA_RL];
}

pub const NUM_CHANNEL_PARAMS: usize = 8;

pub const PARAM_NAMES: [&str; NUM_CHANNEL_PARAMS] = [
    "tau_u", "rho_u", "beta_u", "phi", "theta", "tau_rl", "rho_rl", "beta_rl",
];

/// `η = [τ_u, ρ_u, β_u, φ, θ, τ_rl, ρ_rl, β_rl]` (s, linear, rad, rad, rad, s, linear, rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub tau_u: f64,
    pub rho_u: f64,
    pub beta_u: f64,
    pub phi: f64,
    pub theta: f64,
    pub tau_rl: f64,
    pub rho_rl: f64,
    pub beta_rl: f64,
}

impl ChannelParams {
    pub fn to_array(&self) -> [f64; NUM_CHANNEL_PARAMS] {
        [
            self.tau_u,
            self.rho_u,
            self.beta_u,
            self.phi,
            self.theta,
            self.tau_rl,
            self.rho_rl,
            self.beta_rl,
        ]
    }

    pub fn from_array(a: &[f64; NUM_CHANNEL_PARAMS]) -> Self {
        Self {
            tau_u: a[0],
            rho_u: a[1],
            beta_u: a[2],
            phi: a[3],
            theta: a[4],
            tau_rl: a[5],
            rho_rl: a[6],
            beta_rl: a[7],
        }
    }

    pub fn to_vector(&self) -> SVector<f64, NUM_CHANNEL_PARAMS> {
        SVector::from(self.to_array())
    }

    pub fn from_vector(v: &SVector<f64, NUM_CHANNEL_PARAMS>) -> Self {
        let mut a = [0.0; NUM_CHANNEL_PARAMS];
        a.copy_from_slice(v.as_slice());
        Self::from_array(&a)
    }

    pub fn nuisance_free(&self) -> NuisanceFreeParams {
        NuisanceFreeParams {
            tau_u: self.tau_u,
            phi: self.phi,
            theta: self.theta,
            tau_rl: self.tau_rl,
        }
    }

    /// `η − other` with phase-like entries wrapped into `(−π, π]`.
    pub fn difference(&self, other: &Self) -> SVector<f64, NUM_CHANNEL_PARAMS> {
        let mut d = self.to_vector() - other.to_vector();
        for i in [idx::BETA_U, idx::PHI, idx::BETA_RL] {
            d[i] = wrap_phase(d[i]);
        }
        d
    }

    /// Natural scale of each entry, used for step sizes and relative tolerances.
    pub fn scales(&self, delay_resolution: f64) -> [f64; NUM_CHANNEL_PARAMS] {
        [
            delay_resolution,
            self.rho_u.abs().max(f64::MIN_POSITIVE),
            1.0,
            1.0,
            1.0,
            delay_resolution,
            self.rho_rl.abs().max(f64::MIN_POSITIVE),
            1.0,
        ]
    }
}

/// `η_N = [τ_u, φ, θ, τ_rl]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuisanceFreeParams {
    pub tau_u: f64,
    pub phi: f64,
    pub theta: f64,
    pub tau_rl: f64,
}

impl NuisanceFreeParams {
    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.tau_u, self.phi, self.theta, self.tau_rl)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            tau_u: v[0],
            phi: v[1],
            theta: v[2],
            tau_rl: v[3],
        }
    }

    /// `self − other`, azimuth difference wrapped.
    pub fn difference(&self, other: &Self) -> Vector4<f64> {
        let mut d = self.to_vector() - other.to_vector();
        d[1] = wrap_phase(d[1]);
        d
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// `s = [p_U, B]`, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    pub position: Position3,
    pub clock_offset_m: f64,
}

impl StateVector {
    pub fn new(position: Position3, clock_offset_m: f64) -> Self {
        Self {
            position,
            clock_offset_m,
        }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.clock_offset_m,
        )
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(Position3::new(v[0], v[1], v[2]), v[3])
    }
}

/// Anchors the receiver knows: BS position and legitimate RIS placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownGeometry {
    pub bs: Position3,
    pub ris_l: Placement,
}

impl KnownGeometry {
    /// `d_R = ‖p_B − p_RL‖`.
    pub fn bs_ris_distance(&self) -> f64 {
        (self.bs - self.ris_l.position).norm()
    }

    /// `η_N(s)`.
    pub fn nuisance_free_from_state(&self, s: &StateVector) -> Result<NuisanceFreeParams> {
        let p = s.position;
        let d_u = (p - self.bs).norm();
        let d_r2 = (p - self.ris_l.position).norm();
        if d_u <= 1e-9 || d_r2 <= 1e-9 {
            return Err(Error::DegenerateGeometry(
                "state position coincides with an anchor".into(),
            ));
        }
        let t = self.ris_l.direction_to(&p)?;
        let angles = angles_from_direction(&t)?.angles;
        let b = s.clock_offset_m;
        Ok(NuisanceFreeParams {
            tau_u: (d_u + b) / SPEED_OF_LIGHT,
            phi: angles.azimuth,
            theta: angles.elevation,
            tau_rl: (self.bs_ris_distance() + d_r2 + b) / SPEED_OF_LIGHT,
        })
    }

    /// `∂η_N/∂s`, rows `[τ_u, φ, θ, τ_rl]`, columns `[x, y, z, B]`.
    pub fn nuisance_free_jacobian(&self, s: &StateVector) -> Result<Matrix4<f64>> {
        let p = s.position;
        let du = p - self.bs;
        let dr = p - self.ris_l.position;
        let (nu, nr) = (du.norm(), dr.norm());
        if nu <= 1e-9 || nr <= 1e-9 {
            return Err(Error::DegenerateGeometry(
                "state position coincides with an anchor".into(),
            ));
        }
        let q = self.ris_l.rotation();
        let v = q.inverse_transform_vector(&dr);
        let h2 = v.x * v.x + v.y * v.y;
        let h = h2.sqrt();
        if h <= 1e-12 {
            return Err(Error::DegenerateGeometry(
                "UE on the legitimate RIS vertical axis; azimuth undefined".into(),
            ));
        }
        let r2 = v.norm_squared();
        let dphi_dv = Vector3::new(-v.y / h2, v.x / h2, 0.0);
        let dtheta_dv = Vector3::new(-v.x * v.z / (h * r2), -v.y * v.z / (h * r2), h / r2);
        // ∂v/∂p = Qᵀ, so ∂f/∂p = Q · ∂f/∂v
        let dphi_dp = q * dphi_dv;
        let dtheta_dp = q * dtheta_dv;
        let c = SPEED_OF_LIGHT;
        let mut j = Matrix4::zeros();
        for k in 0..3 {
            j[(0, k)] = du[k] / (c * nu);
            j[(1, k)] = dphi_dp[k];
            j[(2, k)] = dtheta_dp[k];
            j[(3, k)] = dr[k] / (c * nr);
        }
        j[(0, 3)] = 1.0 / c;
        j[(3, 3)] = 1.0 / c;
        Ok(j)
    }

    /// `∂η/∂s` as a 4×8 matrix (denominator layout); gain columns are zero.
    pub fn channel_jacobian(&self, s: &StateVector) -> Result<SMatrix<f64, 4, NUM_CHANNEL_PARAMS>> {
        let jn = self.nuisance_free_jacobian(s)?;
        let mut out = SMatrix::<f64, 4, NUM_CHANNEL_PARAMS>::zeros();
        for (row, &col) in idx::NUISANCE_FREE.iter().enumerate() {
            for k in 0..4 {
                out[(k, col)] = jn[(row, k)];
            }
        }
        Ok(out)
    }
}
