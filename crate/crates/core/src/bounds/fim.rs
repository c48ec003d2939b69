//! Fisher information, its equivalent reduction onto `η_N`, and CRBs.

use nalgebra::{DMatrix, Matrix4};

use super::model::AssumedModel;
use crate::error::{Error, Result};
use crate::lowrank::RankOne;
use crate::params::{idx, ChannelParams, NUM_CHANNEL_PARAMS};

/// `Re⟨a_i, b_j⟩` for every pair.
pub fn real_gram(a: &[RankOne], b: &[RankOne]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| a[i].inner(&b[j]).re)
}

/// `I(η) = (2/σ²) Re{JᴴJ}` for the interference-free model.
pub fn fim_channel(model: &AssumedModel, eta: &ChannelParams) -> Result<DMatrix<f64>> {
    if !(eta.rho_u > 0.0 && eta.rho_rl > 0.0) {
        return Err(Error::InvalidParameter(
            "gain magnitudes must be positive for a regular FIM".into(),
        ));
    }
    let jt = model.jacobian_terms(eta);
    let mut fim = real_gram(&jt, &jt) * (2.0 / model.cfg.noise_variance);
    fim = (&fim + fim.transpose()) * 0.5;
    Ok(fim)
}

/// Inverse of a symmetric positive (semi)definite matrix after diagonal
/// equilibration. Falls back to a pseudo-inverse when the scaled matrix is
/// not positive definite; the flag reports whether that happened.
pub fn invert_information(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = m.nrows();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let v = m[(i, i)];
            if v > 0.0 && v.is_finite() {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] / (d[i] * d[j]));
    let unscale = |inv: DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| inv[(i, j)] / (d[i] * d[j]));

    if let Some(ch) = scaled.clone().cholesky() {
        let diag_min = (0..n).map(|i| ch.l_dirty()[(i, i)]).fold(f64::INFINITY, f64::min);
        if diag_min > 1e-7 {
            return (unscale(ch.inverse()), false);
        }
    }
    log::warn!("information matrix is singular or ill-conditioned; using a pseudo-inverse");
    let pinv = scaled
        .pseudo_inverse(1e-12)
        .unwrap_or_else(|_| DMatrix::zeros(n, n));
    (unscale(pinv), true)
}

/// `sqrt(diag(I⁻¹))`.
pub fn crb_diagonal(fim: &DMatrix<f64>) -> Vec<f64> {
    let (inv, _) = invert_information(fim);
    (0..fim.nrows()).map(|i| inv[(i, i)].max(0.0).sqrt()).collect()
}

/// Equivalent information on `η_N = [τ_u, φ, θ, τ_rl]`: the Schur complement
/// of the gain block.
pub fn equivalent_fim(fim: &DMatrix<f64>) -> Matrix4<f64> {
    assert_eq!(fim.nrows(), NUM_CHANNEL_PARAMS);
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| fim[(rows[i], cols[j])])
    };
    let nn = pick(&idx::NUISANCE_FREE, &idx::NUISANCE_FREE);
    let ng = pick(&idx::NUISANCE_FREE, &idx::GAINS);
    let gg = pick(&idx::GAINS, &idx::GAINS);
    let (gg_inv, _) = invert_information(&gg);
    let e = &nn - &ng * gg_inv * ng.transpose();
    let e = (&e + e.transpose()) * 0.5;
    Matrix4::from_fn(|i, j| e[(i, j)])
}

/// State CRB `(J_Nᵀ EFIM J_N)⁻¹` with `J_N = ∂η_N/∂s`.
pub fn crb_state(efim: &Matrix4<f64>, jn: &Matrix4<f64>) -> Matrix4<f64> {
    let info = jn.transpose() * efim * jn;
    let dm = DMatrix::from_fn(4, 4, |i, j| info[(i, j)]);
    let (inv, _) = invert_information(&dm);
    Matrix4::from_fn(|i, j| inv[(i, j)])
}

/// The units-mixed aggregate `sqrt(tr([I⁻¹]_{1:5,1:5}))`.
pub fn crb_aggregate(fim: &DMatrix<f64>) -> f64 {
    let (inv, _) = invert_information(fim);
    (0..5).map(|i| inv[(i, i)].max(0.0)).sum::<f64>().sqrt()
}
