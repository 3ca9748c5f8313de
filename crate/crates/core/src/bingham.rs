//! Exponential family on the Stiefel manifold with the average Choi matrix as
//! sufficient statistic.
//!
//! The unnormalized log density of a point `xi` is `Tr(Theta^dag L(xi))` for a
//! Hermitian PSD natural parameter `Theta`; the normalizer and the carrier
//! measure are never evaluated. Relative to the uniform (Haar) reference
//! measure this is the maximum-entropy distribution with a given mean Choi
//! matrix, a structured sub-model of the frame-Bingham family in which the
//! cross-column couplings are `A_ij = B_ij (x) I_k` for `N x N` blocks `B_ij`
//! of `Theta`.
//!
//! Sampling is one-column-at-a-time Gibbs: the full conditional of column `j`
//! is a Bingham-von Mises-Fisher law on the unit sphere of the orthogonal
//! complement of the remaining columns, sampled by real-stacking the complex
//! coordinates, rotating to the eigenbasis of the quadratic part, and updating
//! random coordinate pairs on their conditional circles.

use num_complex::Complex64;
use rand::Rng;

use crate::channels::{stiefel_to_choi, vectorize, ChoiMatrix, StiefelPoint};
use crate::error::Error;
use crate::linalg::{
    complex_from_real_stack, hermitian_eigen_desc, hermitian_part, hermiticity_residual,
    real_stack_hermitian, real_stack_vector, orthonormal_complement, CMatrix, CVector,
};
use crate::rng::{complex_normal, derived_rng, shuffle, Rng64};
use crate::Result;

/// Largest allowed top eigenvalue of `Theta`, per unit of dimension, before
/// the sampler refuses on conditioning grounds.
pub const MAX_CONCENTRATION_PER_DIM: f64 = 1e6;

/// Natural parameter of the family: Hermitian, positive semidefinite, with
/// minimum eigenvalue pinned to zero.
///
/// Adding a multiple of the identity changes the density by a constant
/// (`Tr L = N` is fixed on the manifold), so the pin removes a pure gauge
/// freedom; any Hermitian input is accepted and shifted.
#[derive(Debug, Clone)]
pub struct NaturalParameter {
    dim: usize,
    entries: CMatrix,
}

impl NaturalParameter {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let rows = entries.nrows();
        if entries.ncols() != rows {
            return Err(Error::NotSquare {
                rows,
                cols: entries.ncols(),
            });
        }
        let dim = (rows as f64).sqrt().round() as usize;
        if dim * dim != rows {
            return Err(Error::InvalidArgument(format!(
                "natural parameter side {rows} is not a perfect square"
            )));
        }
        let herm = hermiticity_residual(&entries);
        if herm > 1e-8 {
            return Err(Error::NotHermitian {
                residual: herm,
                tol: 1e-8,
            });
        }
        let mut entries = hermitian_part(&entries);
        let eig = hermitian_eigen_desc(&entries);
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min != 0.0 {
            for i in 0..rows {
                entries[(i, i)] -= Complex64::new(min, 0.0);
            }
        }
        Ok(Self { dim, entries })
    }

    /// The zero parameter: the uniform distribution on the manifold.
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            entries: CMatrix::zeros(dim * dim, dim * dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// Largest eigenvalue (the concentration scale).
    pub fn max_eigenvalue(&self) -> f64 {
        hermitian_eigen_desc(&self.entries)
            .values
            .first()
            .copied()
            .unwrap_or(0.0)
    }

    pub(crate) fn from_valid(dim: usize, entries: CMatrix) -> Self {
        Self { dim, entries }
    }
}

/// `Theta = theta |I>><<I|`, the depolarizing-mean parameter for which the
/// average process fidelity is the sufficient statistic.
pub fn depolarizing_parameter(theta_scalar: f64, dim: usize) -> Result<NaturalParameter> {
    if theta_scalar < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "depolarizing scale {theta_scalar} is negative"
        )));
    }
    let v = vectorize(&CMatrix::identity(dim, dim))?;
    let entries = (&v * v.adjoint()).scale(theta_scalar);
    Ok(NaturalParameter::from_valid(dim, entries))
}

/// The `N x N` grid of `N x N` coupling blocks `B_ij[a, b] = Theta[iN+a, jN+b]`,
/// with the implied frame couplings `A_ij = B_ij (x) I_k`.
#[derive(Debug, Clone)]
pub struct BlockCoupling {
    dim: usize,
    kraus_rank: usize,
    blocks: Vec<CMatrix>,
}

impl BlockCoupling {
    pub fn from_parameter(theta: &NaturalParameter, kraus_rank: usize) -> Self {
        let n = theta.dim();
        let mut blocks = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                blocks.push(theta.entries().view((i * n, j * n), (n, n)).into_owned());
            }
        }
        Self {
            dim: n,
            kraus_rank,
            blocks,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus_rank(&self) -> usize {
        self.kraus_rank
    }

    /// Block `B_ij`.
    pub fn block(&self, i: usize, j: usize) -> &CMatrix {
        &self.blocks[i * self.dim + j]
    }

    /// `(B_ij (x) I_k) v` without materializing the Kronecker product.
    pub fn apply(&self, i: usize, j: usize, v: &CVector) -> CVector {
        let (n, k) = (self.dim, self.kraus_rank);
        let b = self.block(i, j);
        let mut out = CVector::zeros(n * k);
        for ro in 0..n {
            for co in 0..n {
                let w = b[(ro, co)];
                if w != Complex64::new(0.0, 0.0) {
                    for a in 0..k {
                        out[ro * k + a] += w * v[co * k + a];
                    }
                }
            }
        }
        out
    }

    /// The quadratic form `sum_ij xi_i^dag (B_ij (x) I_k) xi_j`.
    pub fn quadratic_form(&self, xi: &StiefelPoint) -> Complex64 {
        let n = self.dim;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let col_i = xi.entries().column(i).clone_owned();
            for j in 0..n {
                let col_j = xi.entries().column(j).clone_owned();
                let coupled = self.apply(i, j, &col_j);
                acc += col_i.dotc(&coupled);
            }
        }
        acc
    }
}

/// `Tr(Theta^dag L(xi))`, the sufficient statistic of the family.
///
/// The value is real for Hermitian inputs; an imaginary residue above a
/// relative `1e-12` signals a broken invariant.
pub fn sufficient_stat(xi: &StiefelPoint, theta: &NaturalParameter) -> Result<f64> {
    if xi.dim() != theta.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta.dim(),
            got: xi.dim(),
        });
    }
    let (n, k) = (xi.dim(), xi.kraus_rank());
    let mut acc = Complex64::new(0.0, 0.0);
    let mut kvec = CVector::zeros(n * n);
    for a in 0..k {
        for c in 0..n {
            for r in 0..n {
                kvec[c * n + r] = xi.entries()[(r * k + a, c)];
            }
        }
        acc += (kvec.adjoint() * theta.entries() * &kvec)[(0, 0)];
    }
    let scale = acc.re.abs().max(1.0);
    if acc.im.abs() > 1e-12 * scale {
        return Err(Error::ImaginaryResidue {
            residue: acc.im.abs(),
        });
    }
    Ok(acc.re)
}

/// Unnormalized log density; identical to [`sufficient_stat`] since the
/// normalizer and carrier measure are suppressed.
pub fn log_density_unnormalized(xi: &StiefelPoint, theta: &NaturalParameter) -> Result<f64> {
    sufficient_stat(xi, theta)
}

/// Haar-uniform draw on the Stiefel manifold `V_N(C^{kN})`: a standard complex
/// Gaussian matrix orthonormalized by QR with the triangular factor's diagonal
/// made real positive.
pub fn sample_uniform(dim: usize, kraus_rank: usize, rng: &mut impl Rng) -> StiefelPoint {
    let g = CMatrix::from_fn(kraus_rank * dim, dim, |_, _| complex_normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let col = q.column(j) * (d / d.norm());
            q.set_column(j, &col);
        }
    }
    StiefelPoint::from_valid(dim, kraus_rank, q)
}

/// Chain settings for the Gibbs sampler.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    /// Retained samples.
    pub sample_count: usize,
    /// Discarded initial sweeps.
    pub burn_in: usize,
    /// Keep every `thinning`-th sweep after burn-in.
    pub thinning: usize,
    /// Master seed.
    pub seed: u64,
    /// Stream index for counter-based derivation; chains run concurrently by
    /// giving each its own stream.
    pub stream: u64,
    /// Pair-update sweeps inside each column conditional.
    pub pair_sweeps: usize,
    /// Starting point policy.
    pub init: ChainInit,
}

/// Starting point policy for a chain.
#[derive(Debug, Clone)]
pub enum ChainInit {
    /// Start from a uniform draw.
    Uniform,
    /// Start from a given point.
    Point(StiefelPoint),
}

impl ChainConfig {
    pub fn new(sample_count: usize, seed: u64) -> Self {
        Self {
            sample_count,
            burn_in: 500,
            thinning: 5,
            seed,
            stream: 0,
            pair_sweeps: 2,
            init: ChainInit::Uniform,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::InvalidArgument("sample_count must be >= 1".into()));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidArgument("thinning must be >= 1".into()));
        }
        if self.pair_sweeps == 0 {
            return Err(Error::InvalidArgument("pair_sweeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draw an angle from the circle density `exp(a cos 2phi + b cos phi + c sin phi)`.
///
/// Inverse-CDF sampling on an adaptive grid: a coarse scan locates the mass,
/// intervals within 45 nats of the peak are refined to resolve the sharpest
/// feature, and the draw inverts the trapezoid CDF. Exactly one uniform
/// variate is consumed per call.
pub fn sample_circle_density(a: f64, b: f64, c: f64, rng: &mut impl Rng) -> f64 {
    let tau = std::f64::consts::TAU;
    let u: f64 = rng.random();
    if a.abs() + b.abs() + c.abs() < 1e-12 {
        return tau * u;
    }
    let g = |phi: f64| a * (2.0 * phi).cos() + b * phi.cos() + c * phi.sin();

    const COARSE: usize = 256;
    let coarse_step = tau / COARSE as f64;
    let mut gvals = [0.0f64; COARSE + 1];
    let mut gmax = f64::NEG_INFINITY;
    for (i, slot) in gvals.iter_mut().enumerate() {
        *slot = g(i as f64 * coarse_step);
        gmax = gmax.max(*slot);
    }

    // resolve the sharpest possible peak: |g''| <= 4|a| + |b| + |c|
    let curvature = 4.0 * a.abs() + b.abs() + c.abs();
    let fine_step = (coarse_step).min(1.0 / (32.0 * curvature.sqrt()));
    let per_interval = (coarse_step / fine_step).ceil() as usize;
    let threshold = gmax - 45.0;

    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(COARSE + 8);
    for i in 0..COARSE {
        let phi0 = i as f64 * coarse_step;
        knots.push((phi0, gvals[i]));
        if per_interval > 1 && gvals[i].max(gvals[i + 1]) > threshold {
            for t in 1..per_interval {
                let phi = phi0 + coarse_step * t as f64 / per_interval as f64;
                knots.push((phi, g(phi)));
            }
        }
    }
    knots.push((tau, gvals[COARSE]));

    // trapezoid CDF of exp(g - gmax)
    let mut cumulative = Vec::with_capacity(knots.len());
    cumulative.push(0.0);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (x0, g0) = w[0];
        let (x1, g1) = w[1];
        let f0 = (g0 - gmax).exp();
        let f1 = (g1 - gmax).exp();
        total += 0.5 * (f0 + f1) * (x1 - x0);
        cumulative.push(total);
    }

    let target = u * total;
    let mut lo = 0;
    let mut hi = cumulative.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if cumulative[mid] <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (x0, g0) = knots[lo];
    let (x1, g1) = knots[lo + 1];
    let f0 = (g0 - gmax).exp();
    let f1 = (g1 - gmax).exp();
    let dx = x1 - x0;
    let rem = target - cumulative[lo];
    // density linear on the cell: solve 0.5*s*t^2 + f0*t = rem, s = (f1-f0)/dx
    let s = (f1 - f0) / dx;
    let t = if s.abs() < 1e-300 {
        if f0 > 0.0 {
            rem / f0
        } else {
            0.5 * dx
        }
    } else {
        let disc = (f0 * f0 + 2.0 * s * rem).max(0.0);
        (disc.sqrt() - f0) / s
    };
    (x0 + t.clamp(0.0, dx)).rem_euclid(tau)
}

/// Resample a point of the complex unit sphere from the density
/// `exp(z^dag A z + 2 Re(b^dag z))`, starting from `z0`.
///
/// The complex coordinates are stacked into real ones, rotated to the
/// eigenbasis of the quadratic form, and updated in random coordinate pairs;
/// each pair's angle is drawn from its exact conditional circle density, so
/// there is no accept/reject correction.
pub fn sample_sphere_conditional(
    a_quad: &CMatrix,
    b_lin: &CVector,
    z0: &CVector,
    pair_sweeps: usize,
    rng: &mut impl Rng,
) -> CVector {
    let d = z0.len();
    // uniform fast path: the density is constant when the quadratic part is a
    // multiple of the identity and the linear part vanishes
    let trace_over_d = a_quad.trace() / Complex64::new(d as f64, 0.0);
    let centered_norm = (a_quad - CMatrix::identity(d, d) * trace_over_d).norm();
    if centered_norm < 1e-13 && b_lin.norm() < 1e-13 {
        let mut z = CVector::from_fn(d, |_, _| complex_normal(rng));
        z /= Complex64::new(z.norm(), 0.0);
        return z;
    }

    let q = real_stack_hermitian(a_quad);
    let eig = nalgebra::SymmetricEigen::new(q);
    let basis = eig.eigenvectors;
    let lambda = eig.eigenvalues;
    let m = basis.transpose() * real_stack_vector(b_lin);
    let mut w = basis.transpose() * real_stack_vector(z0);

    let mut order: Vec<usize> = (0..2 * d).collect();
    for _ in 0..pair_sweeps {
        shuffle(&mut order, rng);
        for pair in order.chunks_exact(2) {
            let (p, q) = (pair[0], pair[1]);
            let rho = (w[p] * w[p] + w[q] * w[q]).sqrt();
            if rho < 1e-150 {
                continue;
            }
            let a = 0.5 * rho * rho * (lambda[p] - lambda[q]);
            let b = 2.0 * rho * m[p];
            let c = 2.0 * rho * m[q];
            let phi = sample_circle_density(a, b, c, rng);
            w[p] = rho * phi.cos();
            w[q] = rho * phi.sin();
        }
    }

    let mut z = complex_from_real_stack(&(basis * w));
    let norm = z.norm();
    if norm > 0.0 {
        z /= Complex64::new(norm, 0.0);
    }
    z
}

/// Resample one column of `xi` from its exact full conditional.
///
/// Writing `xi_j = N_j z` for an orthonormal basis `N_j` of the complement of
/// the other columns, the conditional is the sphere density with quadratic
/// part `N_j^dag A_jj N_j` and linear part `b = N_j^dag sum_{i != j} A_ij^dag xi_i`.
pub fn gibbs_column_update(
    xi: &StiefelPoint,
    col: usize,
    coupling: &BlockCoupling,
    pair_sweeps: usize,
    rng: &mut impl Rng,
) -> Result<StiefelPoint> {
    let (n, k) = (xi.dim(), xi.kraus_rank());
    if col >= n {
        return Err(Error::InvalidArgument(format!(
            "column {col} out of range for dimension {n}"
        )));
    }
    if coupling.dim() != n || coupling.kraus_rank() != k {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: coupling.dim(),
        });
    }
    let kn = k * n;
    let d = kn - (n - 1);

    let mut others = CMatrix::zeros(kn, n - 1);
    let mut dst = 0;
    for i in 0..n {
        if i != col {
            others.set_column(dst, &xi.entries().column(i));
            dst += 1;
        }
    }
    let basis = orthonormal_complement(&others)?;

    // quadratic part in complement coordinates
    let mut coupled = CMatrix::zeros(kn, d);
    for q in 0..d {
        let v = basis.column(q).clone_owned();
        coupled.set_column(q, &coupling.apply(col, col, &v));
    }
    let a_quad = hermitian_part(&(basis.adjoint() * coupled));

    // linear part from the fixed columns
    let mut drive = CVector::zeros(kn);
    for i in 0..n {
        if i != col {
            let v = xi.entries().column(i).clone_owned();
            drive += coupling.apply(col, i, &v);
        }
    }
    let b_lin = basis.adjoint() * drive;

    let mut z0 = basis.adjoint() * xi.entries().column(col).clone_owned();
    let norm = z0.norm();
    if norm < 1e-8 {
        return Err(Error::DegenerateFrame);
    }
    z0 /= Complex64::new(norm, 0.0);

    let z = sample_sphere_conditional(&a_quad, &b_lin, &z0, pair_sweeps, rng);
    let mut entries = xi.entries().clone();
    entries.set_column(col, &(basis * z));
    Ok(StiefelPoint::from_valid(n, k, entries))
}

/// Run a Gibbs chain and return the retained states.
///
/// Sweeps columns in order, discards `burn_in` sweeps, then keeps every
/// `thinning`-th state. Deterministic given the config.
pub fn sample_chain(
    theta: &NaturalParameter,
    dim: usize,
    kraus_rank: usize,
    cfg: &ChainConfig,
) -> Result<Vec<StiefelPoint>> {
    cfg.validate()?;
    if theta.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: theta.dim(),
        });
    }
    let max_eig = theta.max_eigenvalue();
    if max_eig >= MAX_CONCENTRATION_PER_DIM * dim as f64 {
        return Err(Error::IllConditioned {
            max_eigenvalue: max_eig,
        });
    }
    let coupling = BlockCoupling::from_parameter(theta, kraus_rank);
    let mut rng = derived_rng(cfg.seed, cfg.stream);
    let mut state = match &cfg.init {
        ChainInit::Uniform => sample_uniform(dim, kraus_rank, &mut rng),
        ChainInit::Point(p) => {
            if p.dim() != dim || p.kraus_rank() != kraus_rank {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
            p.clone()
        }
    };
    let total = cfg.burn_in + cfg.sample_count * cfg.thinning;
    let mut samples = Vec::with_capacity(cfg.sample_count);
    for sweep in 1..=total {
        for col in 0..dim {
            state = gibbs_column_update(&state, col, &coupling, cfg.pair_sweeps, &mut rng)?;
        }
        if sweep > cfg.burn_in && (sweep - cfg.burn_in) % cfg.thinning == 0 {
            samples.push(state.clone());
        }
    }
    Ok(samples)
}

/// (Weighted) arithmetic mean of the sample Choi matrices.
pub fn mean_choi(samples: &[StiefelPoint], weights: Option<&[f64]>) -> Result<ChoiMatrix> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("mean over zero samples".into()));
    }
    if let Some(w) = weights {
        if w.len() != samples.len() {
            return Err(Error::DimensionMismatch {
                expected: samples.len(),
                got: w.len(),
            });
        }
        if w.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidArgument("negative weight".into()));
        }
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
    }
    let n = samples[0].dim();
    let side = n * n;
    let mut acc = CMatrix::zeros(side, side);
    let mut wsum = 0.0;
    for (idx, xi) in samples.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[idx]);
        acc += stiefel_to_choi(xi).entries().scale(w);
        wsum += w;
    }
    Ok(ChoiMatrix::from_valid(n, acc.scale(1.0 / wsum)))
}

/// Budget and target for natural-parameter calibration.
#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    /// Per-evaluation chain settings; the same seed is reused for every
    /// candidate (common random numbers), which makes the Monte Carlo map
    /// from parameter to mean eigenvalues effectively monotone.
    pub chain: ChainConfig,
    /// Total number of chain evaluations allowed.
    pub max_evaluations: usize,
    /// Max-abs eigenvalue residual at which calibration stops.
    pub tol: f64,
}

/// Result of a calibration run.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub parameter: NaturalParameter,
    /// Achieved max-abs eigenvalue residual.
    pub residual: f64,
    /// False when the evaluation budget ran out first.
    pub converged: bool,
    /// Chain evaluations spent.
    pub evaluations: usize,
}

/// Calibrate `Theta` so the sampled mean Choi matrix matches `target_mean`.
///
/// The eigenvectors of `Theta` are fixed to those of the target (the family
/// keeps the parameter and the mean jointly diagonalizable), leaving the
/// eigenvalue vector with its minimum pinned at zero. Targets whose non-top
/// eigenvalues are degenerate (depolarizing-like, including the uniform case)
/// use monotone bisection on the single scale; general targets use a
/// coordinate-wise search, all with common random numbers.
pub fn calibrate(
    target_mean: &ChoiMatrix,
    kraus_rank: usize,
    opts: &CalibrationOptions,
) -> Result<Calibration> {
    let n = target_mean.dim();
    let eig = hermitian_eigen_desc(target_mean.entries());
    let basis = eig.vectors;
    let target = eig.values.clone();
    let side = n * n;

    let theta_of = |coeffs: &[f64]| -> NaturalParameter {
        let min = coeffs.iter().copied().fold(f64::INFINITY, f64::min);
        let mut entries = CMatrix::zeros(side, side);
        for (idx, &c) in coeffs.iter().enumerate() {
            let v = basis.column(idx);
            entries += (v * v.adjoint()).scale(c - min);
        }
        NaturalParameter::from_valid(n, hermitian_part(&entries))
    };

    let evaluations = std::cell::Cell::new(0usize);
    let evaluate = |coeffs: &[f64]| -> Result<(Vec<f64>, f64)> {
        let theta = theta_of(coeffs);
        let samples = sample_chain(&theta, n, kraus_rank, &opts.chain)?;
        let mean = mean_choi(&samples, None)?;
        let projected = basis.adjoint() * mean.entries() * &basis;
        let achieved: Vec<f64> = (0..side).map(|i| projected[(i, i)].re).collect();
        let residual = achieved
            .iter()
            .zip(target.iter())
            .map(|(a, t)| (a - t).abs())
            .fold(0.0, f64::max);
        evaluations.set(evaluations.get() + 1);
        Ok((achieved, residual))
    };

    let degenerate_tail = target
        .windows(2)
        .skip(1)
        .all(|w| (w[0] - w[1]).abs() < 1e-6 * target[0].abs().max(1.0));

    let mut best_coeffs = vec![0.0; side];
    let (_, mut best_residual) = evaluate(&best_coeffs)?;

    if degenerate_tail {
        // single-scale monotone bisection on the top coefficient
        let guard = MAX_CONCENTRATION_PER_DIM * n as f64;
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        // expand the bracket until the sampled top eigenvalue overshoots
        while best_residual > opts.tol && evaluations.get() < opts.max_evaluations && hi < guard {
            let mut coeffs = vec![0.0; side];
            coeffs[0] = hi;
            let (achieved, residual) = evaluate(&coeffs)?;
            if residual < best_residual {
                best_residual = residual;
                best_coeffs = coeffs;
            }
            if achieved[0] >= target[0] {
                break;
            }
            lo = hi;
            hi *= 4.0;
        }
        hi = hi.min(guard * 0.999);
        while best_residual > opts.tol && evaluations.get() < opts.max_evaluations && hi - lo > 1e-6 * hi
        {
            let mid = if lo == 0.0 { 0.5 * hi } else { (lo * hi).sqrt() };
            let mut coeffs = vec![0.0; side];
            coeffs[0] = mid;
            let (achieved, residual) = evaluate(&coeffs)?;
            if residual < best_residual {
                best_residual = residual;
                best_coeffs = coeffs;
            }
            if achieved[0] < target[0] {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    } else {
        // coordinate-wise search with per-coordinate adaptive steps
        let mut steps = vec![target[0].abs().max(1.0); side - 1];
        let mut coeffs = best_coeffs.clone();
        'outer: loop {
            let mut improved = false;
            for coord in 0..side - 1 {
                if best_residual <= opts.tol || evaluations.get() >= opts.max_evaluations {
                    break 'outer;
                }
                for dir in [1.0, -1.0] {
                    let mut cand = coeffs.clone();
                    cand[coord] = (cand[coord] + dir * steps[coord]).max(0.0);
                    let (_, residual) = evaluate(&cand)?;
                    if residual < best_residual {
                        best_residual = residual;
                        coeffs = cand.clone();
                        best_coeffs = cand;
                        steps[coord] *= 2.0;
                        improved = true;
                        break;
                    }
                    if evaluations.get() >= opts.max_evaluations {
                        break 'outer;
                    }
                }
                if !improved {
                    steps[coord] *= 0.5;
                }
            }
            if !improved && steps.iter().all(|&s| s < 1e-9) {
                break;
            }
        }
    }

    Ok(Calibration {
        parameter: theta_of(&best_coeffs),
        residual: best_residual,
        converged: best_residual <= opts.tol,
        evaluations: evaluations.get(),
    })
}

/// Derive the generator for an independent chain of a multi-chain run.
pub fn chain_rng(master_seed: u64, chain_index: u64) -> Rng64 {
    derived_rng(master_seed, chain_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{depolarizing_choi, process_fidelity, StiefelPoint};
    use crate::linalg::max_abs_diff;
    use crate::rng::master_rng;
    use crate::special::chi2_sf;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn random_parameter(n: usize, scale: f64, rng: &mut impl Rng) -> NaturalParameter {
        let side = n * n;
        let g = CMatrix::from_fn(side, side, |_, _| complex_normal(rng));
        NaturalParameter::new(hermitian_part(&g).scale(scale)).unwrap()
    }

    #[test]
    fn parameter_is_shifted_to_zero_min_eigenvalue() {
        let mut rng = master_rng(21);
        let theta = random_parameter(2, 3.0, &mut rng);
        let eig = hermitian_eigen_desc(theta.entries());
        assert_abs_diff_eq!(*eig.values.last().unwrap(), 0.0, epsilon = 1e-10);
        assert!(eig.values[0] >= 0.0);
    }

    #[test]
    fn sufficient_stat_examples() {
        let mut rng = master_rng(22);
        let xi = sample_uniform(2, 4, &mut rng);
        let zero = NaturalParameter::zero(2);
        assert_eq!(sufficient_stat(&xi, &zero).unwrap(), 0.0);

        let id_channel = StiefelPoint::identity_channel(2, 1);
        let theta = depolarizing_parameter(1.0, 2).unwrap();
        assert_relative_eq!(
            sufficient_stat(&id_channel, &theta).unwrap(),
            4.0,
            epsilon = 1e-12
        );
        assert_eq!(
            log_density_unnormalized(&id_channel, &theta).unwrap(),
            sufficient_stat(&id_channel, &theta).unwrap()
        );
    }

    #[test]
    fn trace_and_block_forms_agree() {
        let mut rng = master_rng(23);
        for &n in &[2usize, 3] {
            for _ in 0..10 {
                let k = n * n;
                let xi = sample_uniform(n, k, &mut rng);
                let theta = random_parameter(n, 1.5, &mut rng);
                let coupling = BlockCoupling::from_parameter(&theta, k);
                let block_form = coupling.quadratic_form(&xi);
                let trace_form = sufficient_stat(&xi, &theta).unwrap();
                assert!(
                    (block_form - Complex64::new(trace_form, 0.0)).norm() < 1e-10,
                    "block {block_form} vs trace {trace_form}"
                );
            }
        }
    }

    #[test]
    fn unitary_covariance_of_the_family() {
        let mut rng = master_rng(24);
        let n = 2;
        let k = 4;
        for _ in 0..5 {
            let xi = sample_uniform(n, k, &mut rng);
            let theta = random_parameter(n, 1.0, &mut rng);
            // Haar-ish unitaries from QR of Gaussian matrices
            let u = sample_uniform(n, 1, &mut rng).entries().clone();
            let v = sample_uniform(n, 1, &mut rng).entries().clone();
            let vbar = v.map(|z| z.conj());
            let w = u.kronecker(&vbar);
            let theta_t =
                NaturalParameter::new(&w * theta.entries() * w.adjoint()).unwrap();
            // transform each Kraus operator: K -> conj(V) K U^T
            let kraus = crate::channels::choi_to_kraus(&stiefel_to_choi(&xi), k).unwrap();
            let mapped: Vec<CMatrix> = kraus
                .operators()
                .iter()
                .map(|op| &vbar * op * u.transpose())
                .collect();
            let xi_t = crate::channels::stiefel_from_kraus(
                &crate::channels::KrausSet::new(mapped).unwrap(),
            );
            let s1 = sufficient_stat(&xi, &theta).unwrap();
            let s2 = sufficient_stat(&xi_t, &theta_t).unwrap();
            assert_abs_diff_eq!(s1, s2, epsilon = 1e-9);
        }
    }

    #[test]
    fn uniform_sampler_is_orthonormal_and_deterministic() {
        let mut rng = master_rng(25);
        for _ in 0..100 {
            let xi = sample_uniform(2, 4, &mut rng);
            assert!(xi.feasibility_residual() < 1e-12);
        }
        let a = sample_uniform(3, 9, &mut master_rng(77));
        let b = sample_uniform(3, 9, &mut master_rng(77));
        assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn depolarizing_parameter_examples() {
        let zero = depolarizing_parameter(0.0, 2).unwrap();
        assert_eq!(zero.entries().norm(), 0.0);

        let theta = depolarizing_parameter(1.0, 2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if (i == 0 || i == 3) && (j == 0 || j == 3) {
                    1.0
                } else {
                    0.0
                };
                assert_abs_diff_eq!(theta.entries()[(i, j)].re, expected, epsilon = 1e-15);
                assert_abs_diff_eq!(theta.entries()[(i, j)].im, 0.0, epsilon = 1e-15);
            }
        }
        // spectrum of the outer product: ||vec(I_2)||^2 = 2, so {2 theta, 0, 0, 0}
        let scaled = depolarizing_parameter(3.5, 2).unwrap();
        let eig = hermitian_eigen_desc(scaled.entries());
        assert_relative_eq!(eig.values[0], 7.0, epsilon = 1e-12);
        for &v in &eig.values[1..] {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
        assert!(depolarizing_parameter(-1.0, 2).is_err());
    }

    #[test]
    fn circle_sampler_matches_quadrature_moments() {
        let cases = [(2.0, 0.5, -0.3), (0.0, 3.0, 1.0), (40.0, 0.0, 0.0), (5.0, -8.0, 2.0)];
        for &(a, b, c) in &cases {
            let mut rng = master_rng(26);
            let m = 20000;
            let (mut mc1, mut ms1, mut mc2) = (0.0, 0.0, 0.0);
            for _ in 0..m {
                let phi = sample_circle_density(a, b, c, &mut rng);
                mc1 += phi.cos();
                ms1 += phi.sin();
                mc2 += (2.0 * phi).cos();
            }
            let (mc1, ms1, mc2) = (mc1 / m as f64, ms1 / m as f64, mc2 / m as f64);
            // quadrature reference
            let grid = 200_000;
            let (mut z, mut ec1, mut es1, mut ec2) = (0.0, 0.0, 0.0, 0.0);
            let gmax = (0..grid)
                .map(|i| {
                    let phi = std::f64::consts::TAU * i as f64 / grid as f64;
                    a * (2.0 * phi).cos() + b * phi.cos() + c * phi.sin()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            for i in 0..grid {
                let phi = std::f64::consts::TAU * i as f64 / grid as f64;
                let w = (a * (2.0 * phi).cos() + b * phi.cos() + c * phi.sin() - gmax).exp();
                z += w;
                ec1 += w * phi.cos();
                es1 += w * phi.sin();
                ec2 += w * (2.0 * phi).cos();
            }
            let (ec1, es1, ec2) = (ec1 / z, es1 / z, ec2 / z);
            let se = 4.0 / (m as f64).sqrt();
            assert!((mc1 - ec1).abs() < se, "cos moment: {mc1} vs {ec1} (a={a},b={b},c={c})");
            assert!((ms1 - es1).abs() < se, "sin moment: {ms1} vs {es1}");
            assert!((mc2 - ec2).abs() < se, "cos2 moment: {mc2} vs {ec2}");
        }
    }

    #[test]
    fn sphere_conditional_circle_case_matches_rejection_oracle() {
        // d = 1 complex: the sphere is the unit circle and one pair update is
        // an exact draw from the Bingham-von Mises-Fisher conditional
        let a_quad = CMatrix::from_row_slice(1, 1, &[Complex64::new(1.8, 0.0)]);
        let b_lin = CVector::from_vec(vec![Complex64::new(0.9, -0.4)]);
        let z_init = CVector::from_vec(vec![Complex64::new(1.0, 0.0)]);

        let mut rng = master_rng(31);
        let m = 4000;
        let mut gibbs_angles = Vec::with_capacity(m);
        for _ in 0..m {
            let z = sample_sphere_conditional(&a_quad, &b_lin, &z_init, 1, &mut rng);
            gibbs_angles.push(z[0].arg());
        }

        // rejection sampler from the uniform circle: the quadratic part is
        // constant on the circle here (|z| = 1), only the linear part matters
        let g = |phi: f64| 2.0 * (b_lin[0].conj() * Complex64::from_polar(1.0, phi)).re;
        let gmax = (0..4096)
            .map(|i| g(std::f64::consts::TAU * i as f64 / 4096.0))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut oracle_angles = Vec::with_capacity(m);
        while oracle_angles.len() < m {
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            if rng.random::<f64>() < (g(phi) - gmax).exp() {
                oracle_angles.push({
                    // angles in (-pi, pi] to match arg()
                    if phi > std::f64::consts::PI {
                        phi - std::f64::consts::TAU
                    } else {
                        phi
                    }
                });
            }
        }

        // two-sample chi-squared on 16 bins
        let bins = 16;
        let mut o1 = vec![0.0f64; bins];
        let mut o2 = vec![0.0f64; bins];
        let to_bin = |phi: f64| {
            let t = (phi + std::f64::consts::PI) / std::f64::consts::TAU;
            ((t * bins as f64) as usize).min(bins - 1)
        };
        for &phi in &gibbs_angles {
            o1[to_bin(phi)] += 1.0;
        }
        for &phi in &oracle_angles {
            o2[to_bin(phi)] += 1.0;
        }
        let mut stat = 0.0;
        let mut dof = 0usize;
        for i in 0..bins {
            let total = o1[i] + o2[i];
            if total > 5.0 {
                stat += (o1[i] - o2[i]).powi(2) / total;
                dof += 1;
            }
        }
        let p = chi2_sf(stat, (dof - 1) as f64);
        assert!(p > 0.01, "chi2 p-value {p} (stat {stat}, dof {dof})");
    }

    #[test]
    fn gibbs_update_under_zero_coupling_is_uniform() {
        let mut rng = master_rng(28);
        let coupling = BlockCoupling::from_parameter(&NaturalParameter::zero(2), 4);
        let xi = sample_uniform(2, 4, &mut rng);
        let basis_dim = 2 * (4 * 2 - 1); // real dimension of the conditional sphere
        let updates = 5000;
        let mut mean = CVector::zeros(7);
        for _ in 0..updates {
            let updated = gibbs_column_update(&xi, 0, &coupling, 1, &mut rng).unwrap();
            assert!(updated.feasibility_residual() < 1e-10);
            // complement coordinates of the fresh column
            let mut others = CMatrix::zeros(8, 1);
            others.set_column(0, &xi.entries().column(1));
            let basis = orthonormal_complement(&others).unwrap();
            mean += basis.adjoint() * updated.entries().column(0).clone_owned();
        }
        mean /= Complex64::new(updates as f64, 0.0);
        let se = (1.0 / (basis_dim as f64 * updates as f64)).sqrt();
        for i in 0..7 {
            assert!(mean[i].re.abs() < 5.0 * se, "re mean {} vs se {se}", mean[i].re);
            assert!(mean[i].im.abs() < 5.0 * se, "im mean {} vs se {se}", mean[i].im);
        }
    }

    #[test]
    fn chain_is_deterministic_and_feasible() {
        let theta = depolarizing_parameter(50.0, 2).unwrap();
        let mut cfg = ChainConfig::new(10, 99);
        cfg.burn_in = 20;
        cfg.thinning = 2;
        let a = sample_chain(&theta, 2, 4, &cfg).unwrap();
        let b = sample_chain(&theta, 2, 4, &cfg).unwrap();
        assert_eq!(a.len(), 10);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.entries(), y.entries());
            assert!(x.feasibility_residual() < 1e-10);
        }
    }

    #[test]
    fn chain_refuses_excessive_concentration() {
        let theta = depolarizing_parameter(1e6, 2).unwrap();
        match sample_chain(&theta, 2, 4, &ChainConfig::new(1, 0)) {
            Err(Error::IllConditioned { .. }) => {}
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }

    #[test]
    fn zero_coupling_chain_matches_uniform_sampler() {
        let mut cfg = ChainConfig::new(400, 31);
        cfg.burn_in = 50;
        cfg.thinning = 1;
        let chain = sample_chain(&NaturalParameter::zero(2), 2, 4, &cfg).unwrap();
        let mean = mean_choi(&chain, None).unwrap();
        let eye = CMatrix::identity(2, 2);
        let mut rng = master_rng(32);
        let direct: Vec<StiefelPoint> = (0..400).map(|_| sample_uniform(2, 4, &mut rng)).collect();
        let chain_fids: Vec<f64> = chain
            .iter()
            .map(|x| process_fidelity(&stiefel_to_choi(x), &eye).unwrap())
            .collect();
        let direct_fids: Vec<f64> = direct
            .iter()
            .map(|x| process_fidelity(&stiefel_to_choi(x), &eye).unwrap())
            .collect();
        let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd_of = |v: &[f64], m: f64| {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
        };
        let (m1, m2) = (mean_of(&chain_fids), mean_of(&direct_fids));
        let se = (sd_of(&chain_fids, m1).powi(2) / 400.0 + sd_of(&direct_fids, m2).powi(2) / 400.0)
            .sqrt();
        assert!((m1 - m2).abs() < 4.0 * se, "{m1} vs {m2} (se {se})");
        // coarse check of the symmetry limit E[Choi] = I/2
        let target = CMatrix::identity(4, 4).scale(0.5);
        assert!(max_abs_diff(mean.entries(), &target) < 0.1);
    }

    #[test]
    fn mean_choi_examples() {
        let mut rng = master_rng(33);
        let xi = sample_uniform(2, 4, &mut rng);
        let single = mean_choi(std::slice::from_ref(&xi), None).unwrap();
        assert!(max_abs_diff(single.entries(), stiefel_to_choi(&xi).entries()) < 1e-15);

        let samples: Vec<StiefelPoint> = (0..5).map(|_| sample_uniform(2, 4, &mut rng)).collect();
        let unweighted = mean_choi(&samples, None).unwrap();
        let weighted = mean_choi(&samples, Some(&[2.0; 5])).unwrap();
        assert!(max_abs_diff(unweighted.entries(), weighted.entries()) < 1e-15);

        assert!(mean_choi(&[], None).is_err());
        assert!(mean_choi(&samples, Some(&[1.0; 4])).is_err());
        assert!(mean_choi(&samples, Some(&[0.0; 5])).is_err());
    }

    #[test]
    fn calibrate_uniform_target_returns_zero_parameter() {
        let mut rng = master_rng(34);
        let samples: Vec<StiefelPoint> = (0..300).map(|_| sample_uniform(2, 4, &mut rng)).collect();
        let target = mean_choi(&samples, None).unwrap();
        let mut chain = ChainConfig::new(150, 35);
        chain.burn_in = 50;
        chain.thinning = 1;
        let opts = CalibrationOptions {
            chain,
            max_evaluations: 12,
            tol: 0.08,
        };
        let result = calibrate(&target, 4, &opts).unwrap();
        assert!(result.converged, "residual {}", result.residual);
        assert!(
            result.parameter.max_eigenvalue() < 0.5,
            "max eig {}",
            result.parameter.max_eigenvalue()
        );
    }
}
