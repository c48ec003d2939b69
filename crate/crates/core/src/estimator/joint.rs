//! Joint arrival-angle and RIS-delay search over a precomputed dictionary.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;

use super::delay::PeakList;
use crate::channel::{delay_vector, steering_vector, ElementLayout};
use crate::error::{Error, Result};
use crate::geometry::direction_from_angles;

/// Front-half-space angle grid `{i · res : |i · res| < π/2}` on both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    pub azimuths: Vec<f64>,
    pub elevations: Vec<f64>,
}

impl AngleGrid {
    pub fn front_half_space(resolution_rad: f64) -> Result<Self> {
        if !(resolution_rad > 0.0 && resolution_rad < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!(
                "angle resolution {resolution_rad} rad out of range"
            )));
        }
        let half = ((std::f64::consts::FRAC_PI_2 / resolution_rad).ceil() as i64 - 1).max(0);
        let axis: Vec<f64> = (-half..=half).map(|i| i as f64 * resolution_rad).collect();
        Ok(Self {
            azimuths: axis.clone(),
            elevations: axis,
        })
    }

    pub fn len(&self) -> usize {
        self.azimuths.len() * self.elevations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(φ, θ)` of flat index `i`, azimuth fastest.
    pub fn angles(&self, i: usize) -> (f64, f64) {
        let na = self.azimuths.len();
        (self.azimuths[i % na], self.elevations[i / na])
    }
}

/// Per-symbol RIS responses `A(φ, θ) = Wᵀ(a(t_D) ⊙ a(t(φ, θ)))` for every grid
/// point, each column scaled to unit norm.
#[derive(Debug, Clone)]
pub struct AngleDictionary {
    pub grid: AngleGrid,
    /// H×|grid|, H the number of combined symbols.
    atoms: DMatrix<Complex64>,
}

impl AngleDictionary {
    /// `weights` is the N×H part of the legitimate codebook seen by the
    /// combined RIS block.
    pub fn new(
        grid: AngleGrid,
        layout: &ElementLayout,
        weights: &DMatrix<Complex64>,
        t_departure: &Vector3<f64>,
        carrier_hz: f64,
    ) -> Result<Self> {
        if weights.nrows() != layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "codebook has {} rows for {} elements",
                weights.nrows(),
                layout.len()
            )));
        }
        let a_d = steering_vector(layout, t_departure, carrier_hz);
        let mut products = DMatrix::zeros(layout.len(), grid.len());
        for i in 0..grid.len() {
            let (phi, theta) = grid.angles(i);
            let a = steering_vector(layout, &direction_from_angles(phi, theta), carrier_hz);
            products.set_column(i, &a.component_mul(&a_d));
        }
        let mut atoms = weights.transpose() * products;
        for mut col in atoms.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= Complex64::new(n, 0.0);
            }
        }
        Ok(Self { grid, atoms })
    }

    pub fn symbols(&self) -> usize {
        self.atoms.nrows()
    }

    /// `|Aᴴ w| / ‖A‖` at every grid point.
    pub fn scores(&self, w: &DVector<Complex64>) -> DVector<f64> {
        self.atoms.ad_mul(w).map(|z| z.norm())
    }
}

/// Winner of the joint search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointEstimate {
    pub phi: f64,
    pub theta: f64,
    pub tau_rl: f64,
    pub score: f64,
    /// Rank of the selected delay in the peak list.
    pub peak_index: usize,
}

/// `w_g(τ) = Σ_k conj(x_k d_k(τ)) y_{k,g}`, the delay-matched symbol vector.
pub fn delay_matched_symbols(
    y_rl: &DMatrix<Complex64>,
    pilots: &DVector<Complex64>,
    tau: f64,
    subcarrier_spacing_hz: f64,
) -> DVector<Complex64> {
    let u = pilots.component_mul(&delay_vector(tau, pilots.len(), subcarrier_spacing_hz));
    y_rl.ad_mul(&u).map(|z| z.conj())
}

/// Maximises the normalised coherent score `|⟨x⊙d(τ) A(φ,θ)ᵀ, Y̊_RL⟩| / ‖A(φ,θ)‖`
/// over the peak delays and the dictionary grid.
pub fn joint_ris_search(
    y_rl: &DMatrix<Complex64>,
    pilots: &DVector<Complex64>,
    peaks: &PeakList,
    dictionary: &AngleDictionary,
    subcarrier_spacing_hz: f64,
) -> Result<JointEstimate> {
    if peaks.is_empty() {
        return Err(Error::RisPathLost("empty peak list".into()));
    }
    if y_rl.ncols() != dictionary.symbols() || y_rl.nrows() != pilots.len() {
        return Err(Error::DimensionMismatch(format!(
            "RIS block is {}×{}, dictionary expects {}×{}",
            y_rl.nrows(),
            y_rl.ncols(),
            pilots.len(),
            dictionary.symbols()
        )));
    }
    let mut best: Option<JointEstimate> = None;
    for (p, &tau) in peaks.delays.iter().enumerate() {
        let w = delay_matched_symbols(y_rl, pilots, tau, subcarrier_spacing_hz);
        let scores = dictionary.scores(&w);
        let i = scores.imax();
        if best.is_none_or(|b| scores[i] > b.score) {
            let (phi, theta) = dictionary.grid.angles(i);
            best = Some(JointEstimate {
                phi,
                theta,
                tau_rl: tau,
                score: scores[i],
                peak_index: p,
            });
        }
    }
    best.ok_or_else(|| Error::RisPathLost("no finite joint score".into()))
}
