//! Binomial measurement model and maximum-likelihood / maximum-a-posteriori
//! channel estimation on the Stiefel manifold.
//!
//! A tomography setting is a preparation `rho` and an effect `E`; its outcome
//! probability is the linear functional `<<rho^T (x) E | L>> = Tr(E L(rho))`.
//! Counts are binomial per setting. Estimation minimizes the negative log
//! likelihood (optionally tilted by an exponential-family prior term
//! `-Tr(Theta^dag L(xi))`) with the feasible Cayley optimizer, so every
//! estimate is CPTP by construction.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use rand::Rng;

use crate::bingham::NaturalParameter;
use crate::channels::{
    stiefel_to_choi, ChoiMatrix, DensityMatrix, StiefelPoint,
};
use crate::error::Error;
use crate::linalg::{hermitian_eigen_desc, hermiticity_residual, CMatrix, CVector, ONE, ZERO};
use crate::rng::derived_rng;
use crate::stiefel::{
    cayley_retract, minimize, random_tangent, Gradient, Objective, OptReport, OptimizerOptions,
    SearchDirection,
};
use crate::Result;

/// Probability clamp for log-domain safety at boundary probabilities.
pub const PROB_CLAMP: f64 = 1e-12;

/// One preparation / effect pair.
#[derive(Debug, Clone)]
pub struct Setting {
    pub preparation: DensityMatrix,
    pub effect: CMatrix,
}

/// A set of tomography settings with precomputed probe operators
/// `M_i = rho_i^T (x) E_i`, so that `p_i = Re Tr(M_i L)`.
#[derive(Debug, Clone)]
pub struct ExperimentDesign {
    dim: usize,
    name: Option<String>,
    settings: Vec<Setting>,
    probes: Vec<CMatrix>,
}

impl ExperimentDesign {
    pub fn new(settings: Vec<Setting>) -> Result<Self> {
        Self::with_name(settings, None)
    }

    pub fn with_name(settings: Vec<Setting>, name: Option<String>) -> Result<Self> {
        let dim = settings
            .first()
            .map(|s| s.preparation.dim())
            .ok_or_else(|| Error::EmptyInput("experiment design".into()))?;
        let mut probes = Vec::with_capacity(settings.len());
        for s in &settings {
            if s.preparation.dim() != dim || s.effect.nrows() != dim || s.effect.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.effect.nrows(),
                });
            }
            let herm = hermiticity_residual(&s.effect);
            if herm > 1e-8 {
                return Err(Error::NotHermitian {
                    residual: herm,
                    tol: 1e-8,
                });
            }
            let eig = hermitian_eigen_desc(&s.effect);
            if eig.values.iter().any(|&v| v < -1e-8 || v > 1.0 + 1e-8) {
                return Err(Error::InvalidArgument(
                    "effect is not between 0 and I".into(),
                ));
            }
            probes.push(s.preparation.entries().transpose().kronecker(&s.effect));
        }
        Ok(Self {
            dim,
            name,
            settings,
            probes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn settings(&self) -> &[Setting] {
        &self.settings
    }

    /// Probe operator `M_i`.
    pub fn probe(&self, i: usize) -> &CMatrix {
        &self.probes[i]
    }

    /// Outcome probabilities of a channel under every setting.
    pub fn probabilities(&self, choi: &ChoiMatrix) -> Result<Vec<f64>> {
        self.probes
            .iter()
            .map(|m| probe_probability(m, choi.entries()))
            .collect()
    }

    /// Rank of the design functionals over the real vector space of Hermitian
    /// matrices on the doubled system (dimension `N^4`).
    pub fn functional_rank(&self) -> usize {
        let side = self.dim * self.dim;
        let cols = side * side;
        let mut rows = nalgebra::DMatrix::<f64>::zeros(self.settings.len(), cols);
        for (i, m) in self.probes.iter().enumerate() {
            let mut col = 0;
            for d in 0..side {
                rows[(i, col)] = m[(d, d)].re;
                col += 1;
            }
            for j in 0..side {
                for k in (j + 1)..side {
                    rows[(i, col)] = 2.0 * m[(j, k)].re;
                    rows[(i, col + 1)] = 2.0 * m[(j, k)].im;
                    col += 2;
                }
            }
        }
        let svd = rows.svd(false, false);
        let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
        svd.singular_values
            .iter()
            .filter(|&&s| s > 1e-9 * max.max(1.0))
            .count()
    }

    /// True when the functionals determine the channel uniquely.
    pub fn informationally_complete(&self) -> bool {
        let side = self.dim * self.dim;
        self.functional_rank() == side * side
    }
}

fn probe_probability(probe: &CMatrix, choi: &CMatrix) -> Result<f64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..probe.nrows() {
        for k in 0..probe.ncols() {
            acc += probe[(j, k)] * choi[(k, j)];
        }
    }
    if acc.im.abs() > 1e-9 {
        return Err(Error::ImaginaryResidue {
            residue: acc.im.abs(),
        });
    }
    let p = acc.re;
    if !(-1e-8..=1.0 + 1e-8).contains(&p) {
        return Err(Error::ProbabilityRange { value: p });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Outcome probability `Tr(E L(rho))`, computed through the vectorized route.
pub fn outcome_probability(choi: &ChoiMatrix, rho: &DensityMatrix, effect: &CMatrix) -> Result<f64> {
    if rho.dim() != choi.dim() || effect.nrows() != choi.dim() {
        return Err(Error::DimensionMismatch {
            expected: choi.dim(),
            got: rho.dim(),
        });
    }
    let probe = rho.entries().transpose().kronecker(effect);
    probe_probability(&probe, choi.entries())
}

/// Binomial counts per setting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountData {
    counts: Vec<u64>,
    trials: Vec<u64>,
}

impl CountData {
    pub fn new(counts: Vec<u64>, trials: Vec<u64>) -> Result<Self> {
        if counts.len() != trials.len() {
            return Err(Error::DimensionMismatch {
                expected: trials.len(),
                got: counts.len(),
            });
        }
        for (&x, &n) in counts.iter().zip(trials.iter()) {
            if n == 0 {
                return Err(Error::InvalidArgument("zero trials in a setting".into()));
            }
            if x > n {
                return Err(Error::InvalidArgument(format!(
                    "count {x} exceeds trials {n}"
                )));
            }
        }
        Ok(Self { counts, trials })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn trials(&self) -> &[u64] {
        &self.trials
    }
}

/// Simulate binomial counts for a channel under a design.
pub fn simulate_counts(
    choi: &ChoiMatrix,
    design: &ExperimentDesign,
    n_per_setting: u64,
    rng: &mut impl Rng,
) -> Result<CountData> {
    if n_per_setting == 0 {
        return Err(Error::InvalidArgument("n_per_setting must be >= 1".into()));
    }
    let probs = design.probabilities(choi)?;
    let mut counts = Vec::with_capacity(probs.len());
    for &p in &probs {
        let mut x = 0u64;
        for _ in 0..n_per_setting {
            if rng.random::<f64>() < p {
                x += 1;
            }
        }
        counts.push(x);
    }
    CountData::new(counts, vec![n_per_setting; probs.len()])
}

/// Noise-free counts `x_i = round(n p_i)`; useful as consistency-test input.
pub fn expected_counts(
    choi: &ChoiMatrix,
    design: &ExperimentDesign,
    n_per_setting: u64,
) -> Result<CountData> {
    let probs = design.probabilities(choi)?;
    let counts = probs
        .iter()
        .map(|&p| (p * n_per_setting as f64).round() as u64)
        .collect();
    CountData::new(counts, vec![n_per_setting; probs.len()])
}

/// The four-state design of preparations and projective effects over
/// `|0>, |1>, |+>, |->` (16 settings, preparation-major order). Spans no
/// `sigma_y` component, so it is informationally incomplete.
pub fn design_pauli4() -> ExperimentDesign {
    four_or_six_state_design(false, "pauli4")
}

/// The six-state design adding `|+i>, |-i>` (36 settings); informationally
/// complete.
pub fn design_pauli6() -> ExperimentDesign {
    four_or_six_state_design(true, "pauli6")
}

fn four_or_six_state_design(six: bool, name: &str) -> ExperimentDesign {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut states = vec![
        CVector::from_vec(vec![ONE, ZERO]),
        CVector::from_vec(vec![ZERO, ONE]),
        CVector::from_vec(vec![Complex64::new(s, 0.0), Complex64::new(s, 0.0)]),
        CVector::from_vec(vec![Complex64::new(s, 0.0), Complex64::new(-s, 0.0)]),
    ];
    if six {
        states.push(CVector::from_vec(vec![
            Complex64::new(s, 0.0),
            Complex64::new(0.0, s),
        ]));
        states.push(CVector::from_vec(vec![
            Complex64::new(s, 0.0),
            Complex64::new(0.0, -s),
        ]));
    }
    let mut settings = Vec::with_capacity(states.len() * states.len());
    for prep in &states {
        for effect in &states {
            let rho = DensityMatrix::from_pure(prep).expect("unit state");
            let proj = effect * effect.adjoint();
            settings.push(Setting {
                preparation: rho,
                effect: proj,
            });
        }
    }
    ExperimentDesign::with_name(settings, Some(name.to_string())).expect("valid design")
}

/// Negative log likelihood objective, optionally tilted by a prior term.
///
/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the
/// logs; clamp activations are counted as a diagnostic, not an error.
pub struct LikelihoodObjective<'a> {
    data: &'a CountData,
    design: &'a ExperimentDesign,
    prior: Option<&'a NaturalParameter>,
    clamp_events: AtomicUsize,
}

impl<'a> LikelihoodObjective<'a> {
    pub fn new(
        data: &'a CountData,
        design: &'a ExperimentDesign,
        prior: Option<&'a NaturalParameter>,
    ) -> Result<Self> {
        if data.len() != design.len() {
            return Err(Error::DimensionMismatch {
                expected: design.len(),
                got: data.len(),
            });
        }
        if let Some(theta) = prior {
            if theta.dim() != design.dim() {
                return Err(Error::DimensionMismatch {
                    expected: design.dim(),
                    got: theta.dim(),
                });
            }
        }
        Ok(Self {
            data,
            design,
            prior,
            clamp_events: AtomicUsize::new(0),
        })
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events.load(Ordering::Relaxed)
    }

    fn clamped_probability(&self, raw: f64) -> f64 {
        if raw < PROB_CLAMP || raw > 1.0 - PROB_CLAMP {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
        }
        raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }
}

impl Objective for LikelihoodObjective<'_> {
    fn value(&self, xi: &StiefelPoint) -> f64 {
        let choi = stiefel_to_choi(xi);
        let lam = choi.entries();
        let mut nll = 0.0;
        for i in 0..self.design.len() {
            let probe = self.design.probe(i);
            let mut raw = 0.0;
            for j in 0..probe.nrows() {
                for k in 0..probe.ncols() {
                    raw += (probe[(j, k)] * lam[(k, j)]).re;
                }
            }
            let p = self.clamped_probability(raw);
            let x = self.data.counts()[i] as f64;
            let n = self.data.trials()[i] as f64;
            nll -= x * p.ln() + (n - x) * (1.0 - p).ln();
        }
        if let Some(theta) = self.prior {
            let mut tilt = 0.0;
            let th = theta.entries();
            for j in 0..th.nrows() {
                for k in 0..th.ncols() {
                    tilt += (th[(j, k)].conj() * lam[(j, k)]).re;
                }
            }
            nll -= tilt;
        }
        nll
    }
}

impl Gradient for LikelihoodObjective<'_> {
    fn euclidean_gradient(&self, xi: &StiefelPoint) -> CMatrix {
        let (n, k) = (xi.dim(), xi.kraus_rank());
        let side = n * n;
        let choi = stiefel_to_choi(xi);
        let lam = choi.entries();
        // T = sum_i w_i M_i - Theta, so that G acts as 2 T on each Kraus vector
        let mut t = CMatrix::zeros(side, side);
        for i in 0..self.design.len() {
            let probe = self.design.probe(i);
            let mut raw = 0.0;
            for j in 0..side {
                for kk in 0..side {
                    raw += (probe[(j, kk)] * lam[(kk, j)]).re;
                }
            }
            let p = raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let x = self.data.counts()[i] as f64;
            let trials = self.data.trials()[i] as f64;
            let w = (trials - x) / (1.0 - p) - x / p;
            t += probe.scale(w);
        }
        if let Some(theta) = self.prior {
            t -= theta.entries();
        }
        let mut grad = CMatrix::zeros(k * n, n);
        let mut kvec = CVector::zeros(side);
        for a in 0..k {
            for c in 0..n {
                for r in 0..n {
                    kvec[c * n + r] = xi.entries()[(r * k + a, c)];
                }
            }
            let gk = (&t * &kvec).scale(2.0);
            for c in 0..n {
                for r in 0..n {
                    grad[(r * k + a, c)] = gk[c * n + r];
                }
            }
        }
        grad
    }
}

/// Negative log likelihood of a Stiefel point (binomial-coefficient constants
/// dropped).
pub fn neg_log_likelihood(
    xi: &StiefelPoint,
    data: &CountData,
    design: &ExperimentDesign,
) -> Result<f64> {
    Ok(LikelihoodObjective::new(data, design, None)?.value(xi))
}

/// Euclidean gradient of [`neg_log_likelihood`].
pub fn nll_gradient(
    xi: &StiefelPoint,
    data: &CountData,
    design: &ExperimentDesign,
) -> Result<CMatrix> {
    Ok(LikelihoodObjective::new(data, design, None)?.euclidean_gradient(xi))
}

/// Which estimator produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    Mle,
    Map,
}

/// A channel estimate with its optimizer diagnostics.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub choi: ChoiMatrix,
    pub point: StiefelPoint,
    pub objective_value: f64,
    pub report: OptReport,
    pub mode: EstimateMode,
    /// Set when the design is informationally incomplete.
    pub incomplete_design: bool,
    /// Probability-clamp activations over all evaluations.
    pub clamp_events: usize,
}

/// Maximum-likelihood estimate by multi-start feasible optimization.
pub fn mle(
    data: &CountData,
    design: &ExperimentDesign,
    opts: &OptimizerOptions,
) -> Result<EstimationResult> {
    estimate(data, design, None, opts, EstimateMode::Mle)
}

/// Maximum-a-posteriori estimate under the exponential-family prior `theta`.
/// With `theta = 0` the result is bit-identical to [`mle`] for the same seeds.
pub fn map_estimate(
    data: &CountData,
    design: &ExperimentDesign,
    theta: &NaturalParameter,
    opts: &OptimizerOptions,
) -> Result<EstimationResult> {
    estimate(data, design, Some(theta), opts, EstimateMode::Map)
}

fn estimate(
    data: &CountData,
    design: &ExperimentDesign,
    prior: Option<&NaturalParameter>,
    opts: &OptimizerOptions,
    mode: EstimateMode,
) -> Result<EstimationResult> {
    let objective = LikelihoodObjective::new(data, design, prior)?;
    let n = design.dim();
    let k = n * n;
    let restarts = opts.restarts.max(1);
    let mut best: Option<(StiefelPoint, OptReport)> = None;
    let mut failed_starts = 0usize;
    for start_idx in 0..restarts {
        let mut rng = derived_rng(opts.rng_seed, start_idx as u64);
        let start = if start_idx == 0 {
            // identity channel nudged by a small random tangent step
            let id = StiefelPoint::identity_channel(n, k);
            let z = random_tangent(&id, &mut rng)?;
            let w = SearchDirection::from_tangent(&id, &z);
            let entries = cayley_retract(id.entries(), &w, 1e-2)?;
            StiefelPoint::new(n, k, entries)?
        } else {
            crate::bingham::sample_uniform(n, k, &mut rng)
        };
        let (point, report) = minimize(&objective, &start, opts)?;
        if report.iterations == 0 && report.line_search_failures > 0 {
            failed_starts += 1;
        }
        let better = match &best {
            None => true,
            Some((_, b)) => report.final_value < b.final_value,
        };
        if better && report.final_value.is_finite() {
            best = Some((point, report));
        }
    }
    let (point, report) = best.ok_or_else(|| {
        Error::NumericDegeneracy("no estimation start produced a finite value".into())
    })?;
    if failed_starts == restarts {
        return Err(Error::EstimationFailed {
            starts: restarts,
            best_value: report.final_value,
        });
    }
    let choi = stiefel_to_choi(&point);
    Ok(EstimationResult {
        choi,
        objective_value: report.final_value,
        incomplete_design: !design.informationally_complete(),
        clamp_events: objective.clamp_events(),
        point,
        report,
        mode,
    })
}
