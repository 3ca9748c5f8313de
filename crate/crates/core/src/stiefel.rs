//! Feasible optimization on complex Stiefel manifolds.
//!
//! Search moves along the Cayley-transform curve
//! `Y(tau) = (I + tau/2 W)^{-1} (I - tau/2 W) xi` generated by the
//! skew-Hermitian direction `W = G xi^dag - xi G^dag`. The curve stays on the
//! manifold for every `tau`, so CP and TP hold along the whole search path
//! with no projection or penalty step. `W` is kept in the factored form
//! `U V^dag` with `U = [G, xi]`, `V = [xi, -G]`, and the retraction uses the
//! Sherman-Morrison-Woodbury identity, so only `2N x 2N` systems are solved.
//!
//! Gradient convention: a Euclidean gradient `G` has
//! `F(xi + d) ~ F(xi) + Re Tr(G^dag d)`, i.e. the real and imaginary parts of
//! `G` hold the partial derivatives with respect to the real and imaginary
//! parts of the entries.

use rand::Rng;

use crate::channels::StiefelPoint;
use crate::error::Error;
use crate::linalg::{orthonormal_complement, reorthonormalize, CMatrix};
use crate::rng::{complex_normal, derived_rng};
use crate::Result;

/// Objective with values on the manifold.
pub trait Objective {
    fn value(&self, xi: &StiefelPoint) -> f64;
}

/// Objective that also provides a Euclidean gradient.
pub trait Gradient: Objective {
    fn euclidean_gradient(&self, xi: &StiefelPoint) -> CMatrix;
}

/// Tuning knobs for [`minimize`] and [`stochastic_minimize`].
#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    /// Initial line-search step.
    pub tau0: f64,
    /// Step reduction factor in (0, 1).
    pub shrink: f64,
    /// Sufficient-decrease constant.
    pub armijo_c1: f64,
    /// Curvature constant.
    pub wolfe_c2: f64,
    pub max_iters: usize,
    /// Riemannian gradient-norm stopping threshold.
    pub grad_tol: f64,
    /// Largest tolerated `||xi^dag xi - I||_F` along the path.
    pub feas_tol: f64,
    /// Multi-start count for estimation drivers.
    pub restarts: usize,
    /// Seed for stochastic search and random restarts.
    pub rng_seed: u64,
    /// Probe step of the stochastic direction search.
    pub tau_probe: f64,
    /// Consecutive failed probes that end the stochastic search.
    pub patience: usize,
    /// Backtracking budget per line search.
    pub max_backtracks: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            shrink: 0.5,
            armijo_c1: 1e-4,
            wolfe_c2: 0.9,
            max_iters: 500,
            grad_tol: 1e-8,
            feas_tol: 1e-8,
            restarts: 5,
            rng_seed: 0,
            tau_probe: 1e-3,
            patience: 50,
            max_backtracks: 48,
        }
    }
}

impl OptimizerOptions {
    fn validate(&self) -> Result<()> {
        if !(0.0 < self.armijo_c1 && self.armijo_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::InvalidArgument(
                "need 0 < armijo_c1 < wolfe_c2 < 1".into(),
            ));
        }
        if !(0.0 < self.shrink && self.shrink < 1.0) {
            return Err(Error::InvalidArgument("shrink must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Skew-Hermitian search direction `W = A B^dag` in low-rank factored form;
/// never materializes the dense `kN x kN` matrix.
#[derive(Debug, Clone)]
pub struct SearchDirection {
    left: CMatrix,
    right: CMatrix,
}

impl SearchDirection {
    /// `W = G xi^dag - xi G^dag` from a Euclidean gradient.
    pub fn from_gradient(xi: &StiefelPoint, gradient: &CMatrix) -> Self {
        Self::from_pair(xi.entries(), gradient)
    }

    /// Same construction from a tangent vector.
    pub fn from_tangent(xi: &StiefelPoint, tangent: &CMatrix) -> Self {
        Self::from_pair(xi.entries(), tangent)
    }

    fn from_pair(x: &CMatrix, g: &CMatrix) -> Self {
        let rows = x.nrows();
        let n = x.ncols();
        let mut left = CMatrix::zeros(rows, 2 * n);
        let mut right = CMatrix::zeros(rows, 2 * n);
        for j in 0..n {
            left.set_column(j, &g.column(j));
            left.set_column(n + j, &x.column(j));
            right.set_column(j, &x.column(j));
            right.set_column(n + j, &(-g.column(j)));
        }
        Self { left, right }
    }

    /// `W m`.
    pub fn apply(&self, m: &CMatrix) -> CMatrix {
        &self.left * (self.right.adjoint() * m)
    }

    /// Dense `W`, for small dimensions and tests.
    pub fn dense(&self) -> CMatrix {
        &self.left * self.right.adjoint()
    }
}

/// Cayley retraction `Y(tau)` evaluated through the low-rank identity
/// `Y = xi - tau A (I + tau/2 B^dag A)^{-1} B^dag xi`.
pub fn cayley_retract(xi: &CMatrix, w: &SearchDirection, tau: f64) -> Result<CMatrix> {
    if tau == 0.0 {
        return Ok(xi.clone());
    }
    let p = w.left.ncols();
    let core = CMatrix::identity(p, p) + (w.right.adjoint() * &w.left).scale(0.5 * tau);
    let rhs = w.right.adjoint() * xi;
    let solved = core
        .lu()
        .solve(&rhs)
        .ok_or(Error::StepTooLarge { tau })?;
    Ok(xi - (&w.left * solved).scale(tau))
}

/// Curve derivative `Y'(tau) = -(I + tau/2 W)^{-1} W (xi + Y(tau)) / 2`.
fn cayley_derivative(xi: &CMatrix, w: &SearchDirection, tau: f64, y: &CMatrix) -> Result<CMatrix> {
    let t = w.apply(&(xi + y).scale(0.5));
    if tau == 0.0 {
        return Ok(-t);
    }
    let p = w.left.ncols();
    let core = CMatrix::identity(p, p) + (w.right.adjoint() * &w.left).scale(0.5 * tau);
    let rhs = w.right.adjoint() * &t;
    let solved = core
        .lu()
        .solve(&rhs)
        .ok_or(Error::StepTooLarge { tau })?;
    Ok(-(t - (&w.left * solved).scale(0.5 * tau)))
}

fn re_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x.conj() * y).re)
        .sum()
}

/// Diagnostics of an optimization run.
#[derive(Debug, Clone)]
pub struct OptReport {
    pub final_value: f64,
    /// Accepted steps.
    pub iterations: usize,
    /// Riemannian gradient norm per visited point (gradient mode only).
    pub grad_norm_history: Vec<f64>,
    /// `||xi^dag xi - I||_F` per visited point.
    pub feasibility_history: Vec<f64>,
    pub converged: bool,
    pub line_search_failures: usize,
    /// Post-retraction QR cleanups triggered by the drift guard.
    pub reorthogonalizations: usize,
    /// Accepted Armijo steps on which the curvature condition never held.
    pub wolfe_relaxations: usize,
}

impl OptReport {
    fn new() -> Self {
        Self {
            final_value: f64::NAN,
            iterations: 0,
            grad_norm_history: Vec::new(),
            feasibility_history: Vec::new(),
            converged: false,
            line_search_failures: 0,
            reorthogonalizations: 0,
            wolfe_relaxations: 0,
        }
    }

    pub fn feasibility_max(&self) -> f64 {
        self.feasibility_history.iter().copied().fold(0.0, f64::max)
    }

    /// Compact JSON form: `iterations`, `final_value`, `converged`,
    /// `feasibility_max`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "iterations": self.iterations,
            "final_value": self.final_value,
            "converged": self.converged,
            "feasibility_max": self.feasibility_max(),
        })
    }
}

struct LineSearchOutcome {
    tau: f64,
    point: CMatrix,
    value: f64,
    wolfe_relaxed: bool,
}

/// Backtrack from `tau0` until both the Armijo and the (strong) curvature
/// condition hold on `F(Y(tau))`. The curvature test uses the strong Wolfe
/// form `|F'(tau)| <= c2 |F'(0)|`, which rejects steps that jump across the
/// valley with a sign-flipped slope. If the budget runs out with only Armijo
/// satisfied, the best-valued Armijo step is taken and flagged.
fn backtracking_search<O: Gradient + ?Sized>(
    obj: &O,
    xi: &StiefelPoint,
    w: &SearchDirection,
    f0: f64,
    fprime0: f64,
    opts: &OptimizerOptions,
) -> Result<LineSearchOutcome> {
    let x = xi.entries();
    let mut tau = opts.tau0;
    let mut armijo_best: Option<(f64, CMatrix, f64)> = None;
    for _ in 0..opts.max_backtracks {
        let y = match cayley_retract(x, w, tau) {
            Ok(y) => y,
            Err(_) => {
                tau *= opts.shrink;
                continue;
            }
        };
        let candidate = StiefelPoint::from_valid(xi.dim(), xi.kraus_rank(), y);
        let fy = obj.value(&candidate);
        if fy.is_finite() && fy <= f0 + opts.armijo_c1 * tau * fprime0 {
            let y = candidate.entries().clone();
            let better = armijo_best.as_ref().map_or(true, |(_, _, best)| fy < *best);
            if better {
                armijo_best = Some((tau, y.clone(), fy));
            }
            let yprime = cayley_derivative(x, w, tau, &y)?;
            let gy = obj.euclidean_gradient(&candidate);
            let slope = re_inner(&gy, &yprime);
            if slope.abs() <= opts.wolfe_c2 * fprime0.abs() {
                return Ok(LineSearchOutcome {
                    tau,
                    point: y,
                    value: fy,
                    wolfe_relaxed: false,
                });
            }
        }
        tau *= opts.shrink;
    }
    if let Some((tau, point, value)) = armijo_best {
        return Ok(LineSearchOutcome {
            tau,
            point,
            value,
            wolfe_relaxed: true,
        });
    }
    Err(Error::LineSearchFailure {
        backtracks: opts.max_backtracks,
    })
}

/// Armijo-Wolfe step length along the Cayley curve through `xi` in direction `w`.
pub fn line_search<O: Gradient + ?Sized>(
    obj: &O,
    xi: &StiefelPoint,
    w: &SearchDirection,
    opts: &OptimizerOptions,
) -> Result<f64> {
    opts.validate()?;
    let f0 = obj.value(xi);
    let g = obj.euclidean_gradient(xi);
    let wx = w.apply(xi.entries());
    let fprime0 = -re_inner(&g, &wx);
    if fprime0 >= 0.0 {
        return Err(Error::InvalidArgument(
            "search direction is not a descent direction".into(),
        ));
    }
    backtracking_search(obj, xi, w, f0, fprime0, opts).map(|o| o.tau)
}

/// Gradient descent along Cayley curves; every iterate is feasible.
pub fn minimize<O: Gradient + ?Sized>(
    obj: &O,
    xi0: &StiefelPoint,
    opts: &OptimizerOptions,
) -> Result<(StiefelPoint, OptReport)> {
    opts.validate()?;
    let mut report = OptReport::new();
    let mut xi = xi0.clone();
    let mut value = obj.value(&xi);
    loop {
        let g = obj.euclidean_gradient(&xi);
        let w = SearchDirection::from_gradient(&xi, &g);
        let wx = w.apply(xi.entries());
        let grad_norm = wx.norm();
        report.grad_norm_history.push(grad_norm);
        report.feasibility_history.push(xi.feasibility_residual());
        if grad_norm < opts.grad_tol {
            report.converged = true;
            break;
        }
        if report.iterations >= opts.max_iters {
            break;
        }
        let fprime0 = -re_inner(&g, &wx);
        if fprime0 >= 0.0 {
            // numerically flat; nothing left to gain along this direction
            report.converged = true;
            break;
        }
        match backtracking_search(obj, &xi, &w, value, fprime0, opts) {
            Ok(outcome) => {
                let mut y = outcome.point;
                if crate::linalg::orthonormality_residual(&y) > 1e-10 {
                    y = reorthonormalize(&y);
                    report.reorthogonalizations += 1;
                }
                if outcome.wolfe_relaxed {
                    report.wolfe_relaxations += 1;
                }
                xi = StiefelPoint::from_valid(xi.dim(), xi.kraus_rank(), y);
                value = outcome.value;
                report.iterations += 1;
            }
            Err(Error::LineSearchFailure { .. }) => {
                report.line_search_failures += 1;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    report.final_value = value;
    Ok((xi, report))
}

/// Random tangent vector `Z = xi B + xi_perp C` with `B` skew-Hermitian and
/// `C` an arbitrary Gaussian `(kN - N) x N` matrix.
pub fn random_tangent(xi: &StiefelPoint, rng: &mut impl Rng) -> Result<CMatrix> {
    let n = xi.dim();
    let rows = xi.entries().nrows();
    let r = CMatrix::from_fn(n, n, |_, _| complex_normal(rng));
    let skew = (&r - r.adjoint()).scale(0.5);
    let perp = orthonormal_complement(xi.entries())?;
    let c = CMatrix::from_fn(rows - n, n, |_, _| complex_normal(rng));
    Ok(xi.entries() * skew + perp * c)
}

/// Derivative-free search: probe random tangent directions with a small step
/// (trying the negative direction when the positive one fails), then run a
/// value-only backtracking line search along the accepted curve.
pub fn stochastic_minimize<O: Objective + ?Sized>(
    obj: &O,
    xi0: &StiefelPoint,
    opts: &OptimizerOptions,
) -> Result<(StiefelPoint, OptReport)> {
    opts.validate()?;
    let mut rng = derived_rng(opts.rng_seed, 0);
    let mut report = OptReport::new();
    let mut xi = xi0.clone();
    let mut value = obj.value(&xi);
    report.feasibility_history.push(xi.feasibility_residual());
    let mut consecutive_failures = 0usize;
    for _ in 0..opts.max_iters {
        if consecutive_failures >= opts.patience {
            report.converged = true;
            break;
        }
        let z = random_tangent(&xi, &mut rng)?;
        let w = SearchDirection::from_tangent(&xi, &z);
        let mut accepted = false;
        for sign in [1.0, -1.0] {
            let tau_probe = sign * opts.tau_probe;
            let Ok(y_probe) = cayley_retract(xi.entries(), &w, tau_probe) else {
                continue;
            };
            let probe_point = StiefelPoint::from_valid(xi.dim(), xi.kraus_rank(), y_probe);
            let f_probe = obj.value(&probe_point);
            if !(f_probe.is_finite() && f_probe < value) {
                continue;
            }
            let mut best = (probe_point, f_probe);
            let mut tau = sign * opts.tau0;
            while tau.abs() > opts.tau_probe {
                if let Ok(y) = cayley_retract(xi.entries(), &w, tau) {
                    let point = StiefelPoint::from_valid(xi.dim(), xi.kraus_rank(), y);
                    let fy = obj.value(&point);
                    if fy.is_finite() && fy < value {
                        if fy < best.1 {
                            best = (point, fy);
                        }
                        break;
                    }
                }
                tau *= opts.shrink;
            }
            let (mut point, fy) = best;
            if point.feasibility_residual() > 1e-10 {
                point = StiefelPoint::from_valid(
                    xi.dim(),
                    xi.kraus_rank(),
                    reorthonormalize(point.entries()),
                );
                report.reorthogonalizations += 1;
            }
            report.feasibility_history.push(point.feasibility_residual());
            xi = point;
            value = fy;
            report.iterations += 1;
            accepted = true;
            break;
        }
        if accepted {
            consecutive_failures = 0;
        } else {
            consecutive_failures += 1;
        }
    }
    report.final_value = value;
    Ok((xi, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bingham::sample_uniform;
    use num_complex::Complex64;
    use crate::rng::master_rng;
    use approx::assert_abs_diff_eq;

    /// `F(xi) = -Re Tr(xi^dag P xi)` with `P = x0 x0^dag`; maximized on the
    /// orbit of `x0`, gradient `G = -2 P xi`.
    struct Overlap {
        projector: CMatrix,
    }

    impl Overlap {
        fn new(x0: &StiefelPoint) -> Self {
            Self {
                projector: x0.entries() * x0.entries().adjoint(),
            }
        }
    }

    impl Objective for Overlap {
        fn value(&self, xi: &StiefelPoint) -> f64 {
            -(xi.entries().adjoint() * &self.projector * xi.entries())
                .trace()
                .re
        }
    }

    impl Gradient for Overlap {
        fn euclidean_gradient(&self, xi: &StiefelPoint) -> CMatrix {
            (&self.projector * xi.entries()).scale(-2.0)
        }
    }

    /// `F(xi) = ||xi - target||_F^2`, gradient `2 (xi - target)`.
    struct Distance {
        target: CMatrix,
    }

    impl Objective for Distance {
        fn value(&self, xi: &StiefelPoint) -> f64 {
            (xi.entries() - &self.target).norm_squared()
        }
    }

    impl Gradient for Distance {
        fn euclidean_gradient(&self, xi: &StiefelPoint) -> CMatrix {
            (xi.entries() - &self.target).scale(2.0)
        }
    }

    struct Constant;

    impl Objective for Constant {
        fn value(&self, _xi: &StiefelPoint) -> f64 {
            7.5
        }
    }

    impl Gradient for Constant {
        fn euclidean_gradient(&self, xi: &StiefelPoint) -> CMatrix {
            CMatrix::zeros(xi.entries().nrows(), xi.entries().ncols())
        }
    }

    fn dense_cayley(x: &CMatrix, w: &CMatrix, tau: f64) -> CMatrix {
        let m = w.nrows();
        let plus = CMatrix::identity(m, m) + w.scale(0.5 * tau);
        let minus = CMatrix::identity(m, m) - w.scale(0.5 * tau);
        plus.lu().solve(&(minus * x)).unwrap()
    }

    #[test]
    fn factored_direction_matches_dense_and_is_skew() {
        let mut rng = master_rng(41);
        let xi = sample_uniform(2, 4, &mut rng);
        let g = CMatrix::from_fn(8, 2, |_, _| crate::rng::complex_normal(&mut rng));
        let w = SearchDirection::from_gradient(&xi, &g);
        let dense = w.dense();
        let expected = &g * xi.entries().adjoint() - xi.entries() * g.adjoint();
        assert!((dense.clone() - expected).norm() < 1e-12);
        assert!((dense.adjoint() + &dense).norm() < 1e-12, "skew-Hermitian");

        let zero = SearchDirection::from_gradient(&xi, &CMatrix::zeros(8, 2));
        assert_eq!(zero.dense().norm(), 0.0);

        // G = xi: W acts trivially on the orthogonal complement and is skew
        let w_self = SearchDirection::from_gradient(&xi, &xi.entries().clone());
        let d = w_self.dense();
        assert!((d.adjoint() + &d).norm() < 1e-12);
        let comp = orthonormal_complement(xi.entries()).unwrap();
        assert!((&d * comp).norm() < 1e-12);
    }

    #[test]
    fn cayley_retraction_is_feasible_and_matches_dense() {
        let mut rng = master_rng(42);
        for &(n, k) in &[(2usize, 4usize), (2, 8)] {
            let xi = sample_uniform(n, k, &mut rng);
            let g = CMatrix::from_fn(k * n, n, |_, _| crate::rng::complex_normal(&mut rng));
            let w = SearchDirection::from_gradient(&xi, &g);
            let y0 = cayley_retract(xi.entries(), &w, 0.0).unwrap();
            assert_eq!(&y0, xi.entries());
            for &tau in &[1e-3, 1e-1, 1.0] {
                let y = cayley_retract(xi.entries(), &w, tau).unwrap();
                assert!(crate::linalg::orthonormality_residual(&y) < 1e-10);
                let dense = dense_cayley(xi.entries(), &w.dense(), tau);
                assert!((y - dense).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn directional_derivative_matches_finite_differences() {
        let mut rng = master_rng(43);
        for _ in 0..20 {
            let xi = sample_uniform(2, 4, &mut rng);
            let x0 = sample_uniform(2, 4, &mut rng);
            let obj = Overlap::new(&x0);
            let g = obj.euclidean_gradient(&xi);
            let w = SearchDirection::from_gradient(&xi, &g);
            let fprime0 = -re_inner(&g, &w.apply(xi.entries()));
            let h = 1e-6;
            let value_at = |tau: f64| {
                let y = cayley_retract(xi.entries(), &w, tau).unwrap();
                obj.value(&StiefelPoint::from_valid(2, 4, y))
            };
            let fd = (value_at(h) - value_at(-h)) / (2.0 * h);
            let denom = fprime0.abs().max(1e-12);
            assert!(
                (fprime0 - fd).abs() / denom < 1e-5,
                "analytic {fprime0} vs fd {fd}"
            );
        }
    }

    #[test]
    fn line_search_satisfies_armijo_and_decreases() {
        let mut rng = master_rng(44);
        let xi = sample_uniform(2, 4, &mut rng);
        let x0 = sample_uniform(2, 4, &mut rng);
        let obj = Overlap::new(&x0);
        let opts = OptimizerOptions::default();
        let g = obj.euclidean_gradient(&xi);
        let w = SearchDirection::from_gradient(&xi, &g);
        let f0 = obj.value(&xi);
        let fprime0 = -re_inner(&g, &w.apply(xi.entries()));
        let tau = line_search(&obj, &xi, &w, &opts).unwrap();
        let y = cayley_retract(xi.entries(), &w, tau).unwrap();
        let fy = obj.value(&StiefelPoint::from_valid(2, 4, y));
        assert!(fy <= f0 + opts.armijo_c1 * tau * fprime0, "Armijo holds");
        assert!(fy < f0, "descent");
    }

    #[test]
    fn minimize_reaches_known_minimizer() {
        let mut rng = master_rng(45);
        let target = sample_uniform(2, 4, &mut rng);
        let obj = Distance {
            target: target.entries().clone(),
        };
        // start near the target: small random tangent step
        let z = random_tangent(&target, &mut rng).unwrap();
        let w = SearchDirection::from_tangent(&target, &z);
        let start_entries = cayley_retract(target.entries(), &w, 0.05).unwrap();
        let start = StiefelPoint::from_valid(2, 4, start_entries);
        let (best, report) = minimize(&obj, &start, &OptimizerOptions::default()).unwrap();
        assert!(report.final_value < 1e-8, "value {}", report.final_value);
        assert!(best.feasibility_residual() < 1e-8);
        assert!(report.feasibility_max() < 1e-8);
    }

    #[test]
    fn constant_objective_exits_immediately() {
        let mut rng = master_rng(46);
        let xi = sample_uniform(2, 4, &mut rng);
        let (_, report) = minimize(&Constant, &xi, &OptimizerOptions::default()).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.converged);
    }

    #[test]
    fn random_tangent_is_tangent_and_centered() {
        let mut rng = master_rng(47);
        let xi = sample_uniform(2, 4, &mut rng);
        let mut mean = CMatrix::zeros(8, 2);
        for _ in 0..1000 {
            let z = random_tangent(&xi, &mut rng).unwrap();
            let residual = xi.entries().adjoint() * &z + z.adjoint() * xi.entries();
            assert!(residual.norm() < 1e-12, "tangency");
            mean += z;
        }
        mean /= Complex64::new(1000.0, 0.0);
        assert!(mean.norm() < 0.2, "empirical mean {}", mean.norm());

        // retraction along a random tangent stays feasible
        let z = random_tangent(&xi, &mut rng).unwrap();
        let w = SearchDirection::from_tangent(&xi, &z);
        for &tau in &[1e-2, 0.3, 1.0] {
            let y = cayley_retract(xi.entries(), &w, tau).unwrap();
            assert!(crate::linalg::orthonormality_residual(&y) < 1e-10);
        }
    }

    #[test]
    fn stochastic_search_approaches_gradient_answer() {
        let mut rng = master_rng(48);
        let x0 = sample_uniform(2, 4, &mut rng);
        let obj = Overlap::new(&x0);
        let start = sample_uniform(2, 4, &mut rng);
        let opts = OptimizerOptions {
            max_iters: 2000,
            rng_seed: 5,
            ..Default::default()
        };
        let (_, grad_report) = minimize(&obj, &start, &opts).unwrap();
        let (point, stoch_report) = stochastic_minimize(&obj, &start, &opts).unwrap();
        assert!(
            (stoch_report.final_value - grad_report.final_value).abs() < 1e-3,
            "stochastic {} vs gradient {}",
            stoch_report.final_value,
            grad_report.final_value
        );
        assert!(point.feasibility_residual() < 1e-10);
        assert!(stoch_report.feasibility_max() < 1e-10);
    }

    #[test]
    fn stochastic_search_terminates_by_patience_on_constant() {
        let mut rng = master_rng(49);
        let xi = sample_uniform(2, 4, &mut rng);
        let opts = OptimizerOptions {
            patience: 10,
            max_iters: 10_000,
            rng_seed: 6,
            ..Default::default()
        };
        let (_, report) = stochastic_minimize(&Constant, &xi, &opts).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.converged, "terminated by patience");
    }

    #[test]
    fn report_json_has_contract_fields() {
        let mut rng = master_rng(50);
        let xi = sample_uniform(2, 4, &mut rng);
        let (_, report) = minimize(&Constant, &xi, &OptimizerOptions::default()).unwrap();
        let json = report.to_json();
        for key in ["iterations", "final_value", "converged", "feasibility_max"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_abs_diff_eq!(json["final_value"].as_f64().unwrap(), 7.5);
    }
}
