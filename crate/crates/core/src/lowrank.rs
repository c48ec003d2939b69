//! Rank-one K×G terms.
//!
//! Every propagation path produces a received block of the form
//! `u · vᵀ` with `u` indexed by subcarrier and `v` indexed by OFDM symbol, and
//! so does every partial derivative of the noise-free model. Inner products
//! between such terms factorise as `(u₁ᴴu₂)(v₁ᴴv₂)`, which turns O(KG) work
//! into O(K + G).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct RankOne {
    /// Per-subcarrier factor, length K.
    pub freq: DVector<Complex64>,
    /// Per-symbol factor, length G.
    pub sym: DVector<Complex64>,
}

impl RankOne {
    pub fn new(freq: DVector<Complex64>, sym: DVector<Complex64>) -> Self {
        Self { freq, sym }
    }

    /// `⟨self, other⟩ = Σ conj(self_{k,g}) · other_{k,g}`.
    pub fn inner(&self, other: &RankOne) -> Complex64 {
        self.freq.dotc(&other.freq) * self.sym.dotc(&other.sym)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.freq.norm_squared() * self.sym.norm_squared()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            freq: &self.freq * c,
            sym: self.sym.clone(),
        }
    }

    pub fn negated(&self) -> Self {
        self.scaled(Complex64::new(-1.0, 0.0))
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        &self.freq * self.sym.transpose()
    }

    /// `⟨self, m⟩` against a dense K×G matrix.
    pub fn inner_dense(&self, m: &DMatrix<Complex64>) -> Complex64 {
        // conj(u)ᵀ M conj(v)
        let mv = m * self.sym.map(|z| z.conj());
        self.freq.dotc(&mv)
    }
}

/// `⟨Σa, Σb⟩` for two sums of rank-one terms.
pub fn inner_sum(a: &[RankOne], b: &[RankOne]) -> Complex64 {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| x.inner(y)))
        .sum()
}

/// `‖Σ terms‖²`, exploiting Hermitian symmetry of the pairwise products.
pub fn norm_sqr_sum(terms: &[RankOne]) -> f64 {
    let mut acc = 0.0;
    for (i, a) in terms.iter().enumerate() {
        acc += a.norm_sqr();
        for b in &terms[i + 1..] {
            acc += 2.0 * a.inner(b).re;
        }
    }
    acc.max(0.0)
}

pub fn to_dense(terms: &[RankOne], rows: usize, cols: usize) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(rows, cols);
    for t in terms {
        out += t.to_dense();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_term(rng: &mut ChaCha8Rng, k: usize, g: usize) -> RankOne {
        let mut c = || Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let freq = DVector::from_iterator(k, (0..k).map(|_| c()));
        let sym = DVector::from_iterator(g, (0..g).map(|_| c()));
        RankOne::new(freq, sym)
    }

    #[test]
    fn factorised_inner_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_term(&mut rng, 7, 5);
        let b = random_term(&mut rng, 7, 5);
        let da = a.to_dense();
        let db = b.to_dense();
        let dense: Complex64 = da.iter().zip(db.iter()).map(|(x, y)| x.conj() * y).sum();
        assert!((a.inner(&b) - dense).norm() < 1e-12);
        assert!((a.inner_dense(&db) - dense).norm() < 1e-12);
    }

    #[test]
    fn sum_norm_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let terms: Vec<_> = (0..4).map(|_| random_term(&mut rng, 6, 9)).collect();
        let dense = to_dense(&terms, 6, 9);
        assert!((norm_sqr_sum(&terms) - dense.norm_squared()).abs() < 1e-10);
        assert!((inner_sum(&terms, &terms).re - dense.norm_squared()).abs() < 1e-10);
    }
}
