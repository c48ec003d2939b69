//! RIS phase codebooks.
//!
//! The legitimate RIS uses a time-orthogonal random profile: the second half
//! of the codewords negates the first half, so summing and differencing
//! symbol pairs separates the LOS path from the RIS path. The unauthorized
//! RIS uses one of four strategies, from uninformed random phases to
//! directional beams with angle or phase dithering.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ElementLayout;
use crate::error::{Error, Result};
use crate::geometry::{angles_from_direction, direction_from_angles, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodebookKind {
    LegitRandomOrthogonal,
    UnauthRandom,
    Sdc,
    Radc,
    Rpdc,
}

/// Unauthorized-RIS strategy as chosen on the command line or in a config.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum UnauthorizedStrategy {
    #[default]
    Random,
    Sdc,
    Radc,
    Rpdc,
}

impl UnauthorizedStrategy {
    pub const ALL: [UnauthorizedStrategy; 4] = [Self::Random, Self::Sdc, Self::Radc, Self::Rpdc];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Sdc => "sdc",
            Self::Radc => "radc",
            Self::Rpdc => "rpdc",
        }
    }

    pub fn kind(self) -> CodebookKind {
        match self {
            Self::Random => CodebookKind::UnauthRandom,
            Self::Sdc => CodebookKind::Sdc,
            Self::Radc => CodebookKind::Radc,
            Self::Rpdc => CodebookKind::Rpdc,
        }
    }

    pub fn is_directional(self) -> bool {
        !matches!(self, Self::Random)
    }
}

impl fmt::Display for UnauthorizedStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnauthorizedStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "sdc" => Ok(Self::Sdc),
            "radc" => Ok(Self::Radc),
            "rpdc" => Ok(Self::Rpdc),
            other => Err(Error::InvalidParameter(format!(
                "unknown codebook '{other}', expected random|sdc|radc|rpdc"
            ))),
        }
    }
}

/// Half-widths of the RADC angle dither, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleRanges {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Default for AngleRanges {
    fn default() -> Self {
        Self {
            azimuth: 10f64.to_radians(),
            elevation: 5f64.to_radians(),
        }
    }
}

/// Geometry the unauthorized agent aims its directional codebooks at.
#[derive(Debug, Clone, Copy)]
pub struct DirectionalTarget<'a> {
    pub layout: &'a ElementLayout,
    /// UE direction in the unauthorized RIS frame.
    pub t_arrival: Vector3<f64>,
    /// BS direction in the unauthorized RIS frame.
    pub t_departure: Vector3<f64>,
    pub carrier_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// N×G unit-modulus phase profile, one codeword per column.
    pub weights: DMatrix<Complex64>,
    pub kind: CodebookKind,
    pub seed: u64,
}

impl Codebook {
    pub fn num_elements(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_symbols(&self) -> usize {
        self.weights.ncols()
    }
}

fn random_phase(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI)
}

/// Random phases for the first G/2 codewords; the rest are their negatives.
pub fn legit_time_orthogonal(n: usize, g: usize, seed: u64) -> Result<Codebook> {
    if n == 0 {
        return Err(Error::InvalidParameter("codebook needs at least one element".into()));
    }
    if g == 0 || !g.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "time-orthogonal profile needs an even number of symbols, got {g}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = g / 2;
    let mut weights = DMatrix::zeros(n, g);
    for col in 0..half {
        for row in 0..n {
            let w = random_phase(&mut rng);
            weights[(row, col)] = w;
            weights[(row, col + half)] = -w;
        }
    }
    Ok(Codebook {
        weights,
        kind: CodebookKind::LegitRandomOrthogonal,
        seed,
    })
}

/// `exp(−j·2πf_c/c · Zᵀ(t_A + t_D))`, the codeword that phase-aligns the
/// arrival and departure steering vectors.
fn directional_codeword(target: &DirectionalTarget, t_arrival: &Vector3<f64>) -> DVector<Complex64> {
    let kappa = 2.0 * PI * target.carrier_hz / SPEED_OF_LIGHT;
    let sum = t_arrival + target.t_departure;
    target
        .layout
        .positions
        .tr_mul(&sum)
        .map(|p| Complex64::from_polar(1.0, -kappa * p))
}

pub fn unauthorized_codebook(
    strategy: UnauthorizedStrategy,
    n: usize,
    g: usize,
    target: Option<&DirectionalTarget>,
    ranges: Option<AngleRanges>,
    seed: u64,
) -> Result<Codebook> {
    if n == 0 || g == 0 {
        return Err(Error::InvalidParameter("codebook dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = match (strategy, target) {
        (UnauthorizedStrategy::Random, _) => None,
        (_, Some(t)) => {
            if t.layout.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "layout has {} elements, codebook {n}",
                    t.layout.len()
                )));
            }
            Some(t)
        }
        (s, None) => {
            return Err(Error::InvalidParameter(format!(
                "{s} codebook needs the arrival and departure directions"
            )))
        }
    };
    let weights = match strategy {
        UnauthorizedStrategy::Random => DMatrix::from_fn(n, g, |_, _| random_phase(&mut rng)),
        UnauthorizedStrategy::Sdc => {
            let w = directional_codeword(target.unwrap(), &target.unwrap().t_arrival);
            DMatrix::from_fn(n, g, |row, _| w[row])
        }
        UnauthorizedStrategy::Rpdc => {
            let w = directional_codeword(target.unwrap(), &target.unwrap().t_arrival);
            let mut m = DMatrix::zeros(n, g);
            for col in 0..g {
                let phase = random_phase(&mut rng);
                m.set_column(col, &(&w * phase));
            }
            m
        }
        UnauthorizedStrategy::Radc => {
            let t = target.unwrap();
            let ranges = ranges.unwrap_or_default();
            if !(ranges.azimuth >= 0.0 && ranges.elevation >= 0.0) {
                return Err(Error::InvalidParameter("angle ranges must be non-negative".into()));
            }
            let base = angles_from_direction(&t.t_arrival)?.angles;
            let mut m = DMatrix::zeros(n, g);
            for col in 0..g {
                let dphi = (rng.random::<f64>() * 2.0 - 1.0) * ranges.azimuth;
                let dtheta = (rng.random::<f64>() * 2.0 - 1.0) * ranges.elevation;
                let ta = direction_from_angles(base.azimuth + dphi, base.elevation + dtheta);
                m.set_column(col, &directional_codeword(t, &ta));
            }
            m
        }
    };
    Ok(Codebook {
        weights,
        kind: strategy.kind(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{array_response, upa_layout};
    use proptest::prelude::*;

    fn target(layout: &ElementLayout) -> DirectionalTarget<'_> {
        DirectionalTarget {
            layout,
            t_arrival: Vector3::new(-1.0, -1.0, -2.0).normalize(),
            t_departure: Vector3::new(-2.0, -5.0, 0.0).normalize(),
            carrier_hz: 30e9,
        }
    }

    /// Kolmogorov-Smirnov distance of samples in [0,1) from the uniform law.
    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn orthogonal_pairs_cancel_exactly() {
        let cb = legit_time_orthogonal(7, 12, 1).unwrap();
        for g in 0..6 {
            for n in 0..7 {
                assert_eq!(cb.weights[(n, g)] + cb.weights[(n, g + 6)], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn single_element_pair() {
        let cb = legit_time_orthogonal(1, 2, 9).unwrap();
        assert!((cb.weights[(0, 0)].norm() - 1.0).abs() < 1e-15);
        assert_eq!(cb.weights[(0, 1)], -cb.weights[(0, 0)]);
    }

    #[test]
    fn odd_symbol_count_rejected() {
        assert!(legit_time_orthogonal(4, 5, 0).is_err());
    }

    #[test]
    fn legit_phases_uniform() {
        let cb = legit_time_orthogonal(100, 2000, 17).unwrap();
        let phases: Vec<f64> = cb
            .weights
            .columns(0, 1000)
            .iter()
            .map(|z| z.arg().rem_euclid(2.0 * PI) / (2.0 * PI))
            .collect();
        assert_eq!(phases.len(), 100_000);
        assert!(ks_uniform(phases) < 0.02);
    }

    #[test]
    fn sdc_columns_identical_and_coherent() {
        let layout = upa_layout(4, 4, 0.005).unwrap();
        let t = target(&layout);
        let cb = unauthorized_codebook(UnauthorizedStrategy::Sdc, 16, 6, Some(&t), None, 3).unwrap();
        for g in 1..6 {
            assert_eq!(cb.weights.column(g), cb.weights.column(0));
        }
        let resp = array_response(&cb.weights, &t.t_arrival, &t.t_departure, &layout, 30e9).unwrap();
        assert!(resp.iter().all(|z| (z - Complex64::new(16.0, 0.0)).norm() < 1e-10));
    }

    #[test]
    fn rpdc_is_sdc_times_unit_scalar() {
        let layout = upa_layout(3, 3, 0.005).unwrap();
        let t = target(&layout);
        let sdc = unauthorized_codebook(UnauthorizedStrategy::Sdc, 9, 8, Some(&t), None, 3).unwrap();
        let rpdc = unauthorized_codebook(UnauthorizedStrategy::Rpdc, 9, 8, Some(&t), None, 3).unwrap();
        for g in 0..8 {
            let ratio = rpdc.weights[(0, g)] / sdc.weights[(0, g)];
            assert!((ratio.norm() - 1.0).abs() < 1e-12);
            for n in 0..9 {
                assert!((rpdc.weights[(n, g)] - sdc.weights[(n, g)] * ratio).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn radc_zero_range_equals_sdc() {
        let layout = upa_layout(3, 3, 0.005).unwrap();
        let t = target(&layout);
        let sdc = unauthorized_codebook(UnauthorizedStrategy::Sdc, 9, 4, Some(&t), None, 3).unwrap();
        let zero = AngleRanges { azimuth: 0.0, elevation: 0.0 };
        let radc =
            unauthorized_codebook(UnauthorizedStrategy::Radc, 9, 4, Some(&t), Some(zero), 3).unwrap();
        assert!((radc.weights - sdc.weights).norm() < 1e-10);
    }

    #[test]
    fn radc_default_ranges() {
        let r = AngleRanges::default();
        assert!((r.azimuth - PI / 18.0).abs() < 1e-15);
        assert!((r.elevation - PI / 36.0).abs() < 1e-15);
    }

    #[test]
    fn radc_columns_differ() {
        let layout = upa_layout(3, 3, 0.005).unwrap();
        let t = target(&layout);
        let radc = unauthorized_codebook(UnauthorizedStrategy::Radc, 9, 4, Some(&t), None, 5).unwrap();
        assert!((radc.weights.column(0) - radc.weights.column(1)).norm() > 1e-6);
    }

    #[test]
    fn directional_needs_target() {
        for s in [UnauthorizedStrategy::Sdc, UnauthorizedStrategy::Radc, UnauthorizedStrategy::Rpdc] {
            assert!(unauthorized_codebook(s, 4, 4, None, None, 0).is_err());
        }
        assert!(unauthorized_codebook(UnauthorizedStrategy::Random, 4, 4, None, None, 0).is_ok());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in UnauthorizedStrategy::ALL {
            assert_eq!(s.as_str().parse::<UnauthorizedStrategy>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.as_str()));
        }
        assert!("beam".parse::<UnauthorizedStrategy>().is_err());
    }

    proptest! {
        #[test]
        fn every_entry_unit_modulus(seed in 0u64..500, which in 0usize..4) {
            let layout = upa_layout(3, 4, 0.005).unwrap();
            let t = target(&layout);
            let s = UnauthorizedStrategy::ALL[which];
            let cb = unauthorized_codebook(s, 12, 6, Some(&t), None, seed).unwrap();
            prop_assert!(cb.weights.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
            let legit = legit_time_orthogonal(12, 6, seed).unwrap();
            prop_assert!(legit.weights.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }
}
