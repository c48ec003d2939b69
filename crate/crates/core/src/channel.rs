//! OFDM channel model: steering vectors, per-path responses, free-space
//! gains, thermal noise and synthesis of the received K×G observation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3xX, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::codebooks::{
    legit_time_orthogonal, unauthorized_codebook, AngleRanges, Codebook, DirectionalTarget,
    UnauthorizedStrategy,
};
use crate::error::{Error, Result};
use crate::geometry::{path_geometry, SceneGeometry, SPEED_OF_LIGHT};
use crate::lowrank::RankOne;

/// Waveform and link-budget parameters shared by every path.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalConfig {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub tx_power_watts: f64,
    pub noise_variance: f64,
    /// Unit-modulus pilot symbol per subcarrier, length K.
    pub pilots: DVector<Complex64>,
}

impl SignalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_subcarriers < 2 {
            return Err(Error::InvalidParameter("need at least 2 subcarriers".into()));
        }
        if self.num_symbols == 0 || !self.num_symbols.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "number of symbols must be even and positive, got {}",
                self.num_symbols
            )));
        }
        if !(self.noise_variance > 0.0) {
            return Err(Error::InvalidParameter("noise variance must be positive".into()));
        }
        if !(self.tx_power_watts >= 0.0) || !self.tx_power_watts.is_finite() {
            return Err(Error::InvalidParameter("transmit power must be non-negative".into()));
        }
        if !(self.carrier_hz > 0.0) || !(self.subcarrier_spacing_hz > 0.0) {
            return Err(Error::InvalidParameter("frequencies must be positive".into()));
        }
        if self.pilots.len() != self.num_subcarriers {
            return Err(Error::DimensionMismatch(format!(
                "{} pilots for {} subcarriers",
                self.pilots.len(),
                self.num_subcarriers
            )));
        }
        if self.pilots.iter().any(|x| (x.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidParameter("pilots must be unit modulus".into()));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// `2π f_c / c`, rad/m.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength()
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.subcarrier_spacing_hz * self.num_subcarriers as f64
    }

    /// Width of one delay resolution cell, `1/(KΔf)`, seconds.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / self.bandwidth_hz()
    }

    pub fn half_symbols(&self) -> usize {
        self.num_symbols / 2
    }

    /// Copy with a different transmit power, in dBm.
    pub fn with_power_dbm(&self, dbm: f64) -> Self {
        Self {
            tx_power_watts: dbm_to_watts(dbm),
            ..self.clone()
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

/// Unit-modulus pilots with phases uniform on `[0, 2π)`.
pub fn random_pilots(k: usize, seed: u64) -> DVector<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_iterator(
        k,
        (0..k).map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI)),
    )
}

/// RIS element positions in the plate's local frame, one column per element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementLayout {
    pub positions: Matrix3xX<f64>,
}

impl ElementLayout {
    pub fn len(&self) -> usize {
        self.positions.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.ncols() == 0
    }
}

/// Uniform planar array in the local y-z plane, centered at the origin.
/// Elements are enumerated column-major: the row (z) index varies fastest.
pub fn upa_layout(rows: usize, cols: usize, spacing_m: f64) -> Result<ElementLayout> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter("UPA needs at least one row and column".into()));
    }
    if !(spacing_m > 0.0) {
        return Err(Error::InvalidParameter("element spacing must be positive".into()));
    }
    let mut positions = Matrix3xX::zeros(rows * cols);
    let y0 = (cols as f64 - 1.0) / 2.0;
    let z0 = (rows as f64 - 1.0) / 2.0;
    for c in 0..cols {
        for r in 0..rows {
            let idx = c * rows + r;
            positions[(1, idx)] = (c as f64 - y0) * spacing_m;
            positions[(2, idx)] = (r as f64 - z0) * spacing_m;
        }
    }
    Ok(ElementLayout { positions })
}

/// Far-field steering vector `exp(j·2πf_c/c · Zᵀt)`.
pub fn steering_vector(layout: &ElementLayout, t: &Vector3<f64>, carrier_hz: f64) -> DVector<Complex64> {
    let kappa = 2.0 * PI * carrier_hz / SPEED_OF_LIGHT;
    let proj = layout.positions.tr_mul(t);
    proj.map(|p| Complex64::from_polar(1.0, kappa * p))
}

/// `[d(τ)]_k = exp(−j2π k Δf τ)` for `k = 0..K−1`.
pub fn delay_vector(tau: f64, k: usize, subcarrier_spacing_hz: f64) -> DVector<Complex64> {
    DVector::from_iterator(
        k,
        (0..k).map(|i| Complex64::from_polar(1.0, -2.0 * PI * i as f64 * subcarrier_spacing_hz * tau)),
    )
}

/// Per-symbol RIS response `ω_gᵀ (a(t_D) ⊙ a(t_A))`, length G.
pub fn array_response(
    weights: &DMatrix<Complex64>,
    t_arrival: &Vector3<f64>,
    t_departure: &Vector3<f64>,
    layout: &ElementLayout,
    carrier_hz: f64,
) -> Result<DVector<Complex64>> {
    if weights.nrows() != layout.len() {
        return Err(Error::DimensionMismatch(format!(
            "codebook has {} rows but the RIS has {} elements",
            weights.nrows(),
            layout.len()
        )));
    }
    let a_d = steering_vector(layout, t_departure, carrier_hz);
    let a_a = steering_vector(layout, t_arrival, carrier_hz);
    let product = a_d.component_mul(&a_a);
    Ok(weights.transpose() * product)
}

/// The K×G array-weight matrix; every row equals the per-symbol response.
pub fn array_weight_matrix(
    weights: &DMatrix<Complex64>,
    t_arrival: &Vector3<f64>,
    t_departure: &Vector3<f64>,
    layout: &ElementLayout,
    carrier_hz: f64,
    num_subcarriers: usize,
) -> Result<DMatrix<Complex64>> {
    let row = array_response(weights, t_arrival, t_departure, layout, carrier_hz)?;
    Ok(DMatrix::from_fn(num_subcarriers, row.len(), |_, g| row[g]))
}

/// Complex path gain `ρ·e^{jβ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexGain {
    pub magnitude: f64,
    pub phase: f64,
}

impl ComplexGain {
    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase)
    }
}

/// Geometric path lengths entering the free-space gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathLength {
    Los(f64),
    /// Incident and reflected segment lengths of an RIS path.
    Ris(f64, f64),
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_phase(phase: f64) -> f64 {
    let mut p = phase.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Free-space gain: `λ/(4πd)` for LOS and `λ²/((4π)²d₁d₂)` for an RIS path,
/// with the carrier phase of the total length.
pub fn path_gain(path: PathLength, carrier_hz: f64) -> Result<ComplexGain> {
    let lambda = SPEED_OF_LIGHT / carrier_hz;
    let (magnitude, total) = match path {
        PathLength::Los(d) => {
            if !(d > 0.0) {
                return Err(Error::InvalidParameter("path length must be positive".into()));
            }
            (lambda / (4.0 * PI * d), d)
        }
        PathLength::Ris(d1, d2) => {
            if !(d1 > 0.0 && d2 > 0.0) {
                return Err(Error::InvalidParameter("path lengths must be positive".into()));
            }
            (lambda * lambda / ((4.0 * PI).powi(2) * d1 * d2), d1 + d2)
        }
    };
    Ok(ComplexGain {
        magnitude,
        phase: wrap_phase(-2.0 * PI * total / lambda),
    })
}

/// Thermal noise per subcarrier: −174 dBm/Hz plus noise figure, in watts.
pub fn noise_variance(noise_figure_db: f64, subcarrier_spacing_hz: f64) -> f64 {
    let dbm = -174.0 + noise_figure_db + 10.0 * subcarrier_spacing_hz.log10();
    10f64.powf(dbm / 10.0) / 1000.0
}

/// `√P · gain · (x ⊙ d(τ))`, the per-subcarrier factor of a path.
pub fn path_frequency_factor(cfg: &SignalConfig, gain: Complex64, tau: f64) -> DVector<Complex64> {
    let scale = gain * cfg.tx_power_watts.sqrt();
    let d = delay_vector(tau, cfg.num_subcarriers, cfg.subcarrier_spacing_hz);
    cfg.pilots.component_mul(&d) * scale
}

/// RIS hardware and codebooks deployed in the scene.
#[derive(Debug, Clone)]
pub struct RisDeployment {
    pub legit_layout: ElementLayout,
    pub unauth_layout: ElementLayout,
    pub legit_codebook: Codebook,
    pub unauth_codebook: Codebook,
    /// Multiplier on the unauthorized path gain; 0 removes the interferer.
    pub unauth_gain_scale: f64,
}

/// Array sizes, codebook choices and seeds from which a [`RisDeployment`] is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeploymentSpec {
    pub legit_dims: (usize, usize),
    pub unauth_dims: (usize, usize),
    pub strategy: UnauthorizedStrategy,
    pub angle_ranges: AngleRanges,
    pub legit_seed: u64,
    pub unauth_seed: u64,
    pub unauth_gain_scale: f64,
}

impl RisDeployment {
    /// λ/2-spaced UPAs; directional codebooks aim at the scene's true UE and BS.
    pub fn build(scene: &SceneGeometry, cfg: &SignalConfig, spec: &DeploymentSpec) -> Result<Self> {
        let spacing = cfg.wavelength() / 2.0;
        let legit_layout = upa_layout(spec.legit_dims.0, spec.legit_dims.1, spacing)?;
        let unauth_layout = upa_layout(spec.unauth_dims.0, spec.unauth_dims.1, spacing)?;
        let legit_codebook = legit_time_orthogonal(legit_layout.len(), cfg.num_symbols, spec.legit_seed)?;
        let target = DirectionalTarget {
            layout: &unauth_layout,
            t_arrival: scene.unauth_arrival()?,
            t_departure: scene.unauth_departure()?,
            carrier_hz: cfg.carrier_hz,
        };
        let unauth_codebook = unauthorized_codebook(
            spec.strategy,
            unauth_layout.len(),
            cfg.num_symbols,
            Some(&target),
            Some(spec.angle_ranges),
            spec.unauth_seed,
        )?;
        Ok(Self {
            legit_layout,
            unauth_layout,
            legit_codebook,
            unauth_codebook,
            unauth_gain_scale: spec.unauth_gain_scale,
        })
    }
}

/// The three paths as rank-one K×G terms.
#[derive(Debug, Clone)]
pub struct ChannelPaths {
    pub los: RankOne,
    pub legit: RankOne,
    pub unauth: RankOne,
    pub los_gain: ComplexGain,
    pub legit_gain: ComplexGain,
    pub unauth_gain: ComplexGain,
}

pub fn channel_paths(
    scene: &SceneGeometry,
    cfg: &SignalConfig,
    deployment: &RisDeployment,
) -> Result<ChannelPaths> {
    cfg.validate()?;
    let delays = path_geometry(scene)?;
    let g = cfg.num_symbols;
    for (name, cb) in [
        ("legitimate", &deployment.legit_codebook),
        ("unauthorized", &deployment.unauth_codebook),
    ] {
        if cb.weights.ncols() != g {
            return Err(Error::DimensionMismatch(format!(
                "{name} codebook has {} columns, expected {g}",
                cb.weights.ncols()
            )));
        }
    }

    let los_gain = path_gain(PathLength::Los((scene.bs - scene.ue).norm()), cfg.carrier_hz)?;
    let legit_gain = path_gain(
        PathLength::Ris(
            (scene.bs - scene.ris_l.position).norm(),
            (scene.ue - scene.ris_l.position).norm(),
        ),
        cfg.carrier_hz,
    )?;
    let mut unauth_gain = path_gain(
        PathLength::Ris(
            (scene.bs - scene.ris_u.position).norm(),
            (scene.ue - scene.ris_u.position).norm(),
        ),
        cfg.carrier_hz,
    )?;
    unauth_gain.magnitude *= deployment.unauth_gain_scale;

    let ones = DVector::from_element(g, Complex64::new(1.0, 0.0));
    let los = RankOne::new(
        path_frequency_factor(cfg, los_gain.to_complex(), delays.tau_u),
        ones,
    );
    let legit_resp = array_response(
        &deployment.legit_codebook.weights,
        &scene.legit_arrival()?,
        &scene.legit_departure()?,
        &deployment.legit_layout,
        cfg.carrier_hz,
    )?;
    let legit = RankOne::new(
        path_frequency_factor(cfg, legit_gain.to_complex(), delays.tau_rl),
        legit_resp,
    );
    let unauth_resp = array_response(
        &deployment.unauth_codebook.weights,
        &scene.unauth_arrival()?,
        &scene.unauth_departure()?,
        &deployment.unauth_layout,
        cfg.carrier_hz,
    )?;
    let unauth = RankOne::new(
        path_frequency_factor(cfg, unauth_gain.to_complex(), delays.tau_ru),
        unauth_resp,
    );
    Ok(ChannelPaths {
        los,
        legit,
        unauth,
        los_gain,
        legit_gain,
        unauth_gain,
    })
}

/// Received blocks with and without the unauthorized path.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    /// True model, LOS + legitimate + unauthorized + noise.
    pub y: DMatrix<Complex64>,
    /// Interference-free model, LOS + legitimate + noise.
    pub y_tilde: DMatrix<Complex64>,
    pub y_u: DMatrix<Complex64>,
    pub y_rl: DMatrix<Complex64>,
    pub y_ru: DMatrix<Complex64>,
    pub noise: DMatrix<Complex64>,
}

/// Circularly-symmetric complex Gaussian matrix with per-entry variance `variance`.
pub fn complex_noise(rows: usize, cols: usize, variance: f64, seed: u64) -> DMatrix<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (variance / 2.0).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    })
}

pub fn synthesize_from_paths(paths: &ChannelPaths, cfg: &SignalConfig, rng_seed: u64) -> ObservationSet {
    let y_u = paths.los.to_dense();
    let y_rl = paths.legit.to_dense();
    let y_ru = paths.unauth.to_dense();
    let noise = complex_noise(cfg.num_subcarriers, cfg.num_symbols, cfg.noise_variance, rng_seed);
    let clean = &y_u + &y_rl;
    let y_tilde = &clean + &noise;
    let y = (&clean + &y_ru) + &noise;
    ObservationSet {
        y,
        y_tilde,
        y_u,
        y_rl,
        y_ru,
        noise,
    }
}

/// Builds all three path channels and a noisy observation, deterministic in `rng_seed`.
pub fn synthesize_observation(
    scene: &SceneGeometry,
    cfg: &SignalConfig,
    deployment: &RisDeployment,
    rng_seed: u64,
) -> Result<ObservationSet> {
    let paths = channel_paths(scene, cfg, deployment)?;
    Ok(synthesize_from_paths(&paths, cfg, rng_seed))
}
