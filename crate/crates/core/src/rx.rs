//! Sum/difference combining of symbol pairs and per-path channel responses.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// LOS and legitimate-RIS half-blocks, each K×G/2.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedBlocks {
    pub y_u: DMatrix<Complex64>,
    pub y_rl: DMatrix<Complex64>,
}

/// Pairs column `g` with `g + G/2`: the sum keeps symbol-invariant paths and
/// the difference keeps the sign-flipping legitimate RIS path.
pub fn orthogonal_combine(y: &DMatrix<Complex64>) -> Result<CombinedBlocks> {
    let g = y.ncols();
    if g == 0 || !g.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "combining needs an even number of symbols, got {g}"
        )));
    }
    let half = g / 2;
    let first = y.columns(0, half);
    let second = y.columns(half, half);
    Ok(CombinedBlocks {
        y_u: (first + second) * Complex64::new(0.5, 0.0),
        y_rl: (first - second) * Complex64::new(0.5, 0.0),
    })
}

/// `ĥ_u = Σ_g block[:, g] ⊙ x*`.
pub fn los_response(block: &DMatrix<Complex64>, pilots: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    check_rows(block, pilots)?;
    let summed = block.column_sum();
    Ok(summed.zip_map(pilots, |y, x| y * x.conj()))
}

/// `Ĥ_RL = block ⊙ (x* 1ᵀ)`.
pub fn ris_response(block: &DMatrix<Complex64>, pilots: &DVector<Complex64>) -> Result<DMatrix<Complex64>> {
    check_rows(block, pilots)?;
    let mut out = block.clone();
    for mut col in out.column_iter_mut() {
        col.zip_apply(pilots, |y, x| *y *= x.conj());
    }
    Ok(out)
}

fn check_rows(block: &DMatrix<Complex64>, pilots: &DVector<Complex64>) -> Result<()> {
    if block.nrows() != pilots.len() {
        return Err(Error::DimensionMismatch(format!(
            "block has {} rows, {} pilots",
            block.nrows(),
            pilots.len()
        )));
    }
    Ok(())
}
