//! Pseudo-true parameters and the misspecified bounds around them.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::fim::{invert_information, real_gram};
use super::model::AssumedModel;
use crate::error::{Error, Result};
use crate::lowrank::{inner_sum, norm_sqr_sum, RankOne};
use crate::optim::{levenberg_marquardt, Linearization, LmOptions, NormalProblem};
use crate::params::{ChannelParams, NUM_CHANNEL_PARAMS};

/// The true noise-free mean, held as the assumed-model terms at `η̄` plus
/// the unauthorized path.
#[derive(Debug, Clone)]
pub struct Mismatch<'a> {
    pub model: &'a AssumedModel,
    pub eta_true: ChannelParams,
    true_terms: [RankOne; 2],
    unauth: Option<RankOne>,
}

impl<'a> Mismatch<'a> {
    /// `unauth` is the unauthorized-path term, or `None` for a matched model.
    pub fn new(model: &'a AssumedModel, eta_true: ChannelParams, unauth: Option<RankOne>) -> Self {
        let unauth = unauth.filter(|u| u.norm_sqr() > 0.0);
        Self {
            model,
            true_terms: model.terms(&eta_true),
            eta_true,
            unauth,
        }
    }

    /// `ε(η) = μ(η̄) − μ̃(η)`, with each path differenced factor by factor
    /// so that nearly cancelling paths keep their relative precision.
    pub fn residual_terms(&self, eta: &ChannelParams) -> Vec<RankOne> {
        let [los, ris] = self.model.terms(eta);
        let [los_t, ris_t] = &self.true_terms;
        let mut out = Vec::with_capacity(4);
        // both LOS terms share the all-ones symbol factor
        out.push(RankOne::new(&los_t.freq - &los.freq, los_t.sym.clone()));
        out.push(RankOne::new(&ris_t.freq - &ris.freq, ris_t.sym.clone()));
        out.push(RankOne::new(ris.freq.clone(), &ris_t.sym - &ris.sym));
        if let Some(u) = &self.unauth {
            out.push(u.clone());
        }
        out
    }

    /// `‖μ(η̄) − μ̃(η)‖²`.
    pub fn objective(&self, eta: &ChannelParams) -> f64 {
        norm_sqr_sum(&self.residual_terms(eta))
    }

    /// Dense `μ(η̄)`, for cross-checks.
    pub fn true_mean_dense(&self) -> DMatrix<nalgebra::Complex<f64>> {
        let mut m = self.true_terms[0].to_dense() + self.true_terms[1].to_dense();
        if let Some(u) = &self.unauth {
            m += u.to_dense();
        }
        m
    }
}

/// Least-squares view of the pseudo-true fit in coordinates
/// `η = η̄ + scale ⊙ x`.
struct PseudoTrueProblem<'m, 'a> {
    mismatch: &'m Mismatch<'a>,
    scales: [f64; NUM_CHANNEL_PARAMS],
}

impl PseudoTrueProblem<'_, '_> {
    fn eta(&self, x: &DVector<f64>) -> ChannelParams {
        let mut a = self.mismatch.eta_true.to_array();
        for i in 0..NUM_CHANNEL_PARAMS {
            a[i] += self.scales[i] * x[i];
        }
        ChannelParams::from_array(&a)
    }
}

impl NormalProblem for PseudoTrueProblem<'_, '_> {
    fn cost(&self, x: &DVector<f64>) -> Option<f64> {
        let eta = self.eta(x);
        if !(eta.rho_u >= 0.0 && eta.rho_rl >= 0.0) {
            return None;
        }
        Some(self.mismatch.objective(&eta))
    }

    fn linearize(&self, x: &DVector<f64>) -> Option<Linearization> {
        let eta = self.eta(x);
        let eps = self.mismatch.residual_terms(&eta);
        let jt = self.mismatch.model.jacobian_terms(&eta);
        let s = &self.scales;
        let gram = real_gram(&jt, &jt);
        let jtj = DMatrix::from_fn(NUM_CHANNEL_PARAMS, NUM_CHANNEL_PARAMS, |i, j| {
            gram[(i, j)] * s[i] * s[j]
        });
        // r = ε, ∂r/∂η = −J
        let jtr = DVector::from_fn(NUM_CHANNEL_PARAMS, |i, _| {
            -inner_sum(std::slice::from_ref(&jt[i]), &eps).re * s[i]
        });
        Some(Linearization {
            jtj,
            jtr,
            cost: norm_sqr_sum(&eps),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PseudoTrue {
    pub eta0: ChannelParams,
    pub objective: f64,
    pub objective_at_truth: f64,
    pub converged: bool,
}

/// Parameter scales: one delay cell for delays, the true magnitude for
/// gains and one radian for angles and phases.
pub fn parameter_scales(model: &AssumedModel, eta: &ChannelParams) -> [f64; NUM_CHANNEL_PARAMS] {
    eta.scales(model.cfg.delay_resolution())
}

pub const PSEUDO_TRUE_STARTS: usize = 8;
const START_SEED: u64 = 0x5eed_0001;

/// `η₀ = argmin ‖μ(η̄) − μ̃(η)‖²` by Levenberg-Marquardt from `η̄` and seven
/// Gaussian perturbations of 1 % of each parameter scale.
pub fn pseudo_true_channel(mismatch: &Mismatch) -> Result<PseudoTrue> {
    let objective_at_truth = mismatch.objective(&mismatch.eta_true);
    if mismatch.unauth.is_none() {
        return Ok(PseudoTrue {
            eta0: mismatch.eta_true,
            objective: objective_at_truth,
            objective_at_truth,
            converged: true,
        });
    }
    let problem = PseudoTrueProblem {
        mismatch,
        scales: parameter_scales(mismatch.model, &mismatch.eta_true),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let normal = Normal::new(0.0, 0.01).expect("valid deviation");
    let opts = LmOptions {
        max_iterations: 300,
        cost_tol: 1e-15,
        step_tol: 1e-14,
        initial_lambda: 1e-4,
    };
    let mut best: Option<(DVector<f64>, f64, bool)> = None;
    for start in 0..PSEUDO_TRUE_STARTS {
        let x0 = if start == 0 {
            DVector::zeros(NUM_CHANNEL_PARAMS)
        } else {
            DVector::from_fn(NUM_CHANNEL_PARAMS, |_, _| normal.sample(&mut rng))
        };
        let Some(res) = levenberg_marquardt(&problem, &x0, opts) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| res.cost < b.1) {
            best = Some((res.x, res.cost, res.converged));
        }
    }
    let (x, objective, converged) =
        best.ok_or_else(|| Error::Optimizer("pseudo-true fit failed from every start".into()))?;
    Ok(PseudoTrue {
        eta0: problem.eta(&x),
        objective,
        objective_at_truth,
        converged,
    })
}

/// MCRB, MLB and bias at `η₀`.
#[derive(Debug, Clone)]
pub struct MisspecifiedBounds {
    pub mcrb: DMatrix<f64>,
    pub mlb: DMatrix<f64>,
    /// `η̄ − η₀`, phases wrapped.
    pub bias: [f64; NUM_CHANNEL_PARAMS],
    pub a_singular: bool,
}

impl MisspecifiedBounds {
    pub fn mcrb_diag(&self) -> [f64; NUM_CHANNEL_PARAMS] {
        std::array::from_fn(|i| self.mcrb[(i, i)])
    }

    pub fn mlb_diag(&self) -> [f64; NUM_CHANNEL_PARAMS] {
        std::array::from_fn(|i| self.mlb[(i, i)])
    }
}

/// `MCRB = A⁻¹ B A⁻¹` with
/// `A = (2/σ²) Re[εᴴ ∂²μ̃ − ∂μ̃ᴴ ∂μ̃]` and
/// `B = (4/σ⁴) Re[εᴴ∂μ̃] Re[εᴴ∂μ̃]ᵀ + (2/σ²) Re[∂μ̃ᴴ ∂μ̃]`.
/// Second derivatives are central differences of the analytic first
/// derivatives, step `1e−6` of each parameter scale.
pub fn mcrb_mlb_channel(mismatch: &Mismatch, eta0: &ChannelParams) -> Result<MisspecifiedBounds> {
    let model = mismatch.model;
    let sigma2 = model.cfg.noise_variance;
    let n = NUM_CHANNEL_PARAMS;
    let eps = mismatch.residual_terms(eta0);
    let jt = model.jacobian_terms(eta0);
    let gram = real_gram(&jt, &jt);
    let eps_j: Vec<f64> = jt
        .iter()
        .map(|j| inner_sum(&eps, std::slice::from_ref(j)).re)
        .collect();

    let mut hess = DMatrix::zeros(n, n);
    if mismatch.unauth.is_some() || eps.iter().any(|e| e.norm_sqr() > 0.0) {
        let scales = parameter_scales(model, eta0);
        for i in 0..n {
            let h = 1e-6 * scales[i];
            let mut plus = eta0.to_array();
            let mut minus = eta0.to_array();
            plus[i] += h;
            minus[i] -= h;
            let jp = model.jacobian_terms(&ChannelParams::from_array(&plus));
            let jm = model.jacobian_terms(&ChannelParams::from_array(&minus));
            for j in 0..n {
                let ep = inner_sum(&eps, std::slice::from_ref(&jp[j])).re;
                let em = inner_sum(&eps, std::slice::from_ref(&jm[j])).re;
                hess[(i, j)] = (ep - em) / (2.0 * h);
            }
        }
        hess = (&hess + hess.transpose()) * 0.5;
    }

    // −A is positive definite near a well-posed pseudo-true point
    let neg_a = (&gram - &hess) * (2.0 / sigma2);
    let b = DMatrix::from_fn(n, n, |i, j| {
        4.0 / (sigma2 * sigma2) * eps_j[i] * eps_j[j] + 2.0 / sigma2 * gram[(i, j)]
    });
    let (neg_a_inv, a_singular) = invert_information(&neg_a);
    if !neg_a_inv.iter().all(|v| v.is_finite()) {
        return Err(Error::Optimizer("non-finite MCRB".into()));
    }
    let mcrb = &neg_a_inv * b * &neg_a_inv;
    let mcrb = (&mcrb + mcrb.transpose()) * 0.5;
    let diff = mismatch.eta_true.difference(eta0);
    let bias: [f64; NUM_CHANNEL_PARAMS] = std::array::from_fn(|i| diff[i]);
    let mlb = DMatrix::from_fn(n, n, |i, j| mcrb[(i, j)] + bias[i] * bias[j]);
    Ok(MisspecifiedBounds {
        mcrb,
        mlb,
        bias,
        a_singular,
    })
}
