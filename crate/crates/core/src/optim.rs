//! Small local optimizers: Nelder-Mead simplex and Levenberg-Marquardt.
//!
//! Both work on plain `DVector<f64>` coordinates; callers are expected to
//! scale their parameters so that unit steps are meaningful.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: DVector<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop when the simplex cost spread falls below `tol · (|f_best| + abs_tol)`.
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            rel_tol: 1e-10,
            abs_tol: 1e-300,
        }
    }
}

/// Minimizes `f` starting from `x0` with an axis-aligned initial simplex of
/// edge lengths `steps`. Non-finite costs are treated as `+∞`.
pub fn nelder_mead<F>(f: F, x0: &DVector<f64>, steps: &[f64], opts: NelderMeadOptions) -> OptimResult
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x0.len();
    assert_eq!(steps.len(), n, "one initial step per coordinate");
    let eval = |x: &DVector<f64>| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), eval(x0)));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += steps[i];
        let v = eval(&x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= opts.rel_tol * (best.abs() + opts.abs_tol) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = DVector::zeros(n);
        for (x, _) in &simplex[..n] {
            centroid += x;
        }
        centroid /= n as f64;
        let worst_x = simplex[n].0.clone();

        let reflected = &centroid + (&centroid - &worst_x);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = &centroid + (&reflected - &centroid) * 2.0;
            let fe = eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < worst {
            let c = &centroid + (&reflected - &centroid) * 0.5;
            let v = eval(&c);
            (c, v)
        } else {
            let c = &centroid + (&worst_x - &centroid) * 0.5;
            let v = eval(&c);
            (c, v)
        };
        if fc < worst.min(fr) {
            simplex[n] = (contracted, fc);
            continue;
        }
        let best_x = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let x = &best_x + (&entry.0 - &best_x) * 0.5;
            let v = eval(&x);
            *entry = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, cost) = simplex.swap_remove(0);
    OptimResult {
        x,
        cost,
        iterations,
        converged,
    }
}

/// Gauss-Newton normal equations at a point: `JᵀJ`, `Jᵀr` and `‖r‖²`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub jtj: DMatrix<f64>,
    pub jtr: DVector<f64>,
    pub cost: f64,
}

/// A nonlinear least-squares problem seen through its normal equations.
/// Returning `None` marks the point as infeasible.
pub trait NormalProblem {
    fn cost(&self, x: &DVector<f64>) -> Option<f64>;
    fn linearize(&self, x: &DVector<f64>) -> Option<Linearization>;
}

/// A least-squares problem given by its residual vector only.
pub trait ResidualProblem {
    fn residual(&self, x: &DVector<f64>) -> Option<DVector<f64>>;
}

/// Central-difference Jacobian wrapper turning a residual problem into a
/// [`NormalProblem`].
pub struct FiniteDifference<'a, P: ResidualProblem> {
    pub problem: &'a P,
    pub steps: Vec<f64>,
}

impl<P: ResidualProblem> FiniteDifference<'_, P> {
    pub fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = x.len();
        let mut cols = Vec::with_capacity(n);
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += self.steps[i];
            xm[i] -= self.steps[i];
            let rp = self.problem.residual(&xp)?;
            let rm = self.problem.residual(&xm)?;
            cols.push((rp - rm) / (2.0 * self.steps[i]));
        }
        Some(DMatrix::from_columns(&cols))
    }
}

impl<P: ResidualProblem> NormalProblem for FiniteDifference<'_, P> {
    fn cost(&self, x: &DVector<f64>) -> Option<f64> {
        self.problem.residual(x).map(|r| r.norm_squared())
    }

    fn linearize(&self, x: &DVector<f64>) -> Option<Linearization> {
        let r = self.problem.residual(x)?;
        let j = self.jacobian(x)?;
        Some(Linearization {
            jtj: j.tr_mul(&j),
            jtr: j.tr_mul(&r),
            cost: r.norm_squared(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step counts as converged.
    pub cost_tol: f64,
    /// Step length, relative to `‖x‖ + 1`, below which the search stops.
    pub step_tol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tol: 1e-14,
            step_tol: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

/// Levenberg-Marquardt with Marquardt diagonal scaling. The cost never
/// increases across accepted iterations.
pub fn levenberg_marquardt<P: NormalProblem + ?Sized>(
    problem: &P,
    x0: &DVector<f64>,
    opts: LmOptions,
) -> Option<OptimResult> {
    let mut x = x0.clone();
    let mut lin = problem.linearize(&x)?;
    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;
    let mut converged = false;
    let n = x.len();

    while iterations < opts.max_iterations {
        iterations += 1;
        if lin.cost == 0.0 || lin.jtr.norm() == 0.0 {
            converged = true;
            break;
        }
        let max_diag = (0..n).map(|i| lin.jtj[(i, i)]).fold(0.0, f64::max);
        if !(max_diag > 0.0) {
            break;
        }
        let mut accepted = false;
        let mut tiny_step = false;
        for _ in 0..30 {
            let mut a = lin.jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * lin.jtj[(i, i)].max(1e-12 * max_diag);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&lin.jtr)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            if step.norm() <= opts.step_tol * (x.norm() + 1.0) {
                tiny_step = true;
                break;
            }
            let trial = &x + &step;
            match problem.cost(&trial) {
                Some(c) if c.is_finite() && c < lin.cost => {
                    let rel = (lin.cost - c) / lin.cost;
                    x = trial;
                    lambda = (lambda / 3.0).max(1e-15);
                    lin = problem.linearize(&x)?;
                    accepted = true;
                    if rel < opts.cost_tol {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 4.0,
            }
        }
        if tiny_step || converged {
            converged = true;
            break;
        }
        if !accepted {
            // no descent direction found at any damping: local minimum to precision
            converged = true;
            break;
        }
    }
    Some(OptimResult {
        x,
        cost: lin.cost,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &DVector<f64>) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    struct RosenResidual;
    impl ResidualProblem for RosenResidual {
        fn residual(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
            Some(DVector::from_vec(vec![1.0 - x[0], 10.0 * (x[1] - x[0] * x[0])]))
        }
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let opts = NelderMeadOptions {
            max_iterations: 5000,
            rel_tol: 1e-14,
            abs_tol: 1e-14,
        };
        let r = nelder_mead(rosenbrock, &DVector::from_vec(vec![-1.2, 1.0]), &[0.1, 0.1], opts);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn nelder_mead_never_worse_than_start() {
        let x0 = DVector::from_vec(vec![0.3, -0.7]);
        let r = nelder_mead(rosenbrock, &x0, &[0.5, 0.5], NelderMeadOptions { max_iterations: 3, ..Default::default() });
        assert!(r.cost <= rosenbrock(&x0));
    }

    #[test]
    fn lm_solves_rosenbrock_residual() {
        let p = FiniteDifference { problem: &RosenResidual, steps: vec![1e-7, 1e-7] };
        let r = levenberg_marquardt(&p, &DVector::from_vec(vec![-1.2, 1.0]), LmOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
        assert!(r.converged);
    }

    #[test]
    fn lm_linear_fit_exact() {
        struct Line;
        impl ResidualProblem for Line {
            fn residual(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
                Some(DVector::from_iterator(5, (0..5).map(|i| x[0] + x[1] * i as f64 - (2.0 + 3.0 * i as f64))))
            }
        }
        let p = FiniteDifference { problem: &Line, steps: vec![1e-3, 1e-3] };
        let r = levenberg_marquardt(&p, &DVector::zeros(2), LmOptions::default()).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-9 && (r.x[1] - 3.0).abs() < 1e-9);
    }
}
