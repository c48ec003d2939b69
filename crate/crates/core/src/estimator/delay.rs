//! Delay estimation on an oversampled DFT grid.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Delay-grid settings shared by the LOS and RIS searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelaySearch {
    /// Zero-padding factor of the DFT grid.
    pub oversampling: usize,
    /// RIS peaks below this fraction of the global maximum are dropped.
    pub threshold_ratio: f64,
    /// Minimum distance between retained RIS peaks, in oversampled bins.
    pub min_separation_bins: usize,
}

impl Default for DelaySearch {
    fn default() -> Self {
        Self {
            oversampling: 64,
            threshold_ratio: 0.3,
            min_separation_bins: 2,
        }
    }
}

impl DelaySearch {
    pub fn validate(&self) -> Result<()> {
        if self.oversampling == 0 {
            return Err(Error::InvalidParameter("oversampling must be at least 1".into()));
        }
        if !(self.threshold_ratio > 0.0 && self.threshold_ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold ratio must lie in (0, 1], got {}",
                self.threshold_ratio
            )));
        }
        Ok(())
    }
}

/// Candidate RIS delays, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakList {
    pub delays: Vec<f64>,
    pub scores: Vec<f64>,
}

impl PeakList {
    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }
}

/// `|d(τ_m)ᴴ h|²` summed over the columns of `h`, on the grid
/// `τ_m = m / (L Δf)`, `L = K · oversampling`.
pub fn delay_power_spectrum(h: &DMatrix<Complex64>, oversampling: usize) -> Vec<f64> {
    let k = h.nrows();
    let len = k * oversampling.max(1);
    // d(τ)ᴴh = Σ_k h_k exp(+j2πkΔfτ) is an unnormalised inverse DFT
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(len);
    let mut power = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for col in h.column_iter() {
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (b, v) in buf.iter_mut().zip(col.iter()) {
            *b = *v;
        }
        ifft.process(&mut buf);
        for (p, z) in power.iter_mut().zip(&buf) {
            *p += z.norm_sqr();
        }
    }
    power
}

/// Vertex offset, in bins, of the parabola through three magnitude samples.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Interpolated peak position in bins around `m` on a circular magnitude grid.
fn refine_bin(mag: &[f64], m: usize) -> f64 {
    let n = mag.len();
    let left = mag[(m + n - 1) % n];
    let right = mag[(m + 1) % n];
    m as f64 + parabolic_offset(left, mag[m], right)
}

fn bin_to_delay(bin: f64, len: usize, subcarrier_spacing_hz: f64) -> f64 {
    let wrapped = bin.rem_euclid(len as f64);
    wrapped / (len as f64 * subcarrier_spacing_hz)
}

/// LOS delay: peak of the matched filter `|d(τ)ᴴ ĥ_u|` over `[0, 1/Δf)`.
pub fn estimate_los_delay(h_u: &DVector<Complex64>, subcarrier_spacing_hz: f64, search: &DelaySearch) -> Result<f64> {
    search.validate()?;
    if h_u.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::InvalidParameter("LOS response is identically zero".into()));
    }
    let h = DMatrix::from_column_slice(h_u.len(), 1, h_u.as_slice());
    let mag: Vec<f64> = delay_power_spectrum(&h, search.oversampling)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let m = argmax(&mag);
    Ok(bin_to_delay(refine_bin(&mag, m), mag.len(), subcarrier_spacing_hz))
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Prominent peaks of `‖d(τ)ᴴ Ĥ_RL‖` over the oversampled delay grid.
pub fn detect_ris_delay_peaks(
    h_rl: &DMatrix<Complex64>,
    subcarrier_spacing_hz: f64,
    search: &DelaySearch,
) -> Result<PeakList> {
    search.validate()?;
    let mag: Vec<f64> = delay_power_spectrum(h_rl, search.oversampling)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let n = mag.len();
    let global = mag.iter().cloned().fold(0.0, f64::max);
    if !(global > 0.0) {
        return Err(Error::RisPathLost("RIS response is identically zero".into()));
    }
    let floor = search.threshold_ratio * global;
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&m| {
            let left = mag[(m + n - 1) % n];
            let right = mag[(m + 1) % n];
            mag[m] >= floor && mag[m] >= left && mag[m] > right
        })
        .collect();
    candidates.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]).then(a.cmp(&b)));

    let circ = |a: usize, b: usize| {
        let d = a.abs_diff(b);
        d.min(n - d)
    };
    let mut kept: Vec<usize> = Vec::new();
    for m in candidates {
        if kept.iter().all(|&k| circ(k, m) >= search.min_separation_bins) {
            kept.push(m);
        }
    }
    if kept.is_empty() {
        return Err(Error::RisPathLost(format!(
            "no local maximum above {:.3} of the global peak",
            search.threshold_ratio
        )));
    }
    Ok(PeakList {
        delays: kept
            .iter()
            .map(|&m| bin_to_delay(refine_bin(&mag, m), n, subcarrier_spacing_hz))
            .collect(),
        scores: kept.iter().map(|&m| mag[m]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::delay_vector;

    const DF: f64 = 1.5625e6;
    const K: usize = 256;

    fn bin() -> f64 {
        1.0 / (K as f64 * DF)
    }

    #[test]
    fn on_grid_delay_is_exact() {
        let tau = 17.0 * bin();
        let h = delay_vector(tau, K, DF);
        let est = estimate_los_delay(&h, DF, &DelaySearch::default()).unwrap();
        assert!((est - tau).abs() < 1e-4 * bin());
    }

    #[test]
    fn off_grid_sweep_within_one_percent_of_a_bin() {
        let s = DelaySearch::default();
        for i in 0..40 {
            let tau = (12.0 + i as f64 / 40.0) * bin();
            let est = estimate_los_delay(&delay_vector(tau, K, DF), DF, &s).unwrap();
            assert!((est - tau).abs() < 0.01 * bin(), "offset {i}: {}", (est - tau) / bin());
        }
    }

    #[test]
    fn zero_input_rejected() {
        let h = DVector::zeros(K);
        assert!(estimate_los_delay(&h, DF, &DelaySearch::default()).is_err());
        let m = DMatrix::zeros(K, 3);
        assert!(matches!(
            detect_ris_delay_peaks(&m, DF, &DelaySearch::default()),
            Err(Error::RisPathLost(_))
        ));
    }

    #[test]
    fn single_path_gives_single_peak() {
        let tau = 20.3 * bin();
        let d = delay_vector(tau, K, DF);
        let gains = DVector::from_fn(6, |g, _| Complex64::from_polar(1.0 + g as f64, 0.3 * g as f64));
        let h = &d * gains.transpose();
        let peaks = detect_ris_delay_peaks(&h, DF, &DelaySearch::default()).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks.delays[0] - tau).abs() < bin() / 64.0);
    }

    #[test]
    fn two_paths_sorted_by_score() {
        let a = delay_vector(10.0 * bin(), K, DF);
        let b = delay_vector(30.5 * bin(), K, DF) * Complex64::new(0.0, 2.0);
        let h = DMatrix::from_columns(&[&a + &b]);
        let peaks = detect_ris_delay_peaks(&h, DF, &DelaySearch::default()).unwrap();
        assert_eq!(peaks.len(), 2);
        assert!(peaks.scores[0] >= peaks.scores[1]);
        assert!((peaks.delays[0] - 30.5 * bin()).abs() < 0.02 * bin());
        assert!((peaks.delays[1] - 10.0 * bin()).abs() < 0.02 * bin());
    }

    #[test]
    fn unit_threshold_keeps_global_maximum_only() {
        let a = delay_vector(10.0 * bin(), K, DF);
        let b = delay_vector(30.0 * bin(), K, DF) * Complex64::new(0.9, 0.0);
        let h = DMatrix::from_columns(&[&a + &b]);
        let s = DelaySearch {
            threshold_ratio: 1.0,
            ..DelaySearch::default()
        };
        let peaks = detect_ris_delay_peaks(&h, DF, &s).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks.delays[0] - 10.0 * bin()).abs() < 0.02 * bin());
    }
}
