//! Full Bayesian posterior for the single-parameter dephasing channel on a
//! numerical angle grid.
//!
//! The channel `rho -> A rho A^dag` with `A = diag(e^{i theta}, e^{-i theta})`
//! is identified by the doubled angle `phi = 2 theta`; process tomography in
//! the `|+>` basis measures `p = 1/2 + 1/2 cos(2 theta)` (a Ramsey setting).
//! Priors on the doubled angle are either von Mises (a fixed dephasing error
//! common to all measurements) or derived from a chi-squared law (independent
//! per-measurement errors). Everything runs in the log domain on a uniform
//! grid over `(-pi/2, pi/2]`, which avoids the underflow failures of naive
//! density evaluation when prior and likelihood barely overlap.

use crate::channels::ChoiMatrix;
use crate::error::Error;
use crate::linalg::{CMatrix, ONE};
use crate::special::{bessel_i1_over_i0, chi2_log_pdf, log_bessel_i0};
use crate::Result;

use num_complex::Complex64;

/// Default grid size.
pub const DEFAULT_GRID: usize = 4096;

/// Von Mises prior on the doubled angle `phi = 2 theta`.
#[derive(Debug, Clone)]
pub struct VonMisesPrior {
    /// Mean direction of `phi`, radians.
    pub mean_direction: f64,
    /// Concentration `kappa >= 0`.
    pub concentration: f64,
}

impl VonMisesPrior {
    pub fn new(mean_direction: f64, concentration: f64) -> Result<Self> {
        if concentration < 0.0 || !concentration.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "von Mises concentration {concentration} must be finite and >= 0"
            )));
        }
        Ok(Self {
            mean_direction,
            concentration,
        })
    }

    /// Prior centered on the identity with `E[cos 2 theta] = 2 F - 1`.
    pub fn from_prior_fidelity(fidelity: f64) -> Result<Self> {
        Ok(Self {
            mean_direction: 0.0,
            concentration: kappa_from_fidelity(fidelity)?,
        })
    }

    /// Log density of the doubled angle.
    pub fn log_density_phi(&self, phi: f64) -> f64 {
        self.concentration * (phi - self.mean_direction).cos()
            - std::f64::consts::TAU.ln()
            - log_bessel_i0(self.concentration)
    }

    /// Log density of `theta` on `(-pi/2, pi/2]` (Jacobian `d phi / d theta = 2`).
    pub fn log_density_theta(&self, theta: f64) -> f64 {
        std::f64::consts::LN_2 + self.log_density_phi(2.0 * theta)
    }
}

/// Solve `I1(kappa) / I0(kappa) = 2 F - 1` for the concentration matching a
/// prior process fidelity, by bracketing bisection on the monotone ratio.
pub fn kappa_from_fidelity(fidelity: f64) -> Result<f64> {
    if !(fidelity > 0.5 && fidelity < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "prior fidelity {fidelity} outside (1/2, 1)"
        )));
    }
    let target = 2.0 * fidelity - 1.0;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while bessel_i1_over_i0(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NumericDegeneracy(format!(
                "concentration for fidelity {fidelity} exceeds 1e12"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bessel_i1_over_i0(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Prior induced by treating the per-measurement average of `cos 2 theta` as
/// chi-squared: `2 n gamma (1 - cos 2 theta) ~ chi^2_n`, with the Jacobian
/// `|du/d theta| = 4 n gamma |sin 2 theta|`. The correction `gamma` defaults
/// to the von Mises concentration (the high-concentration regime in which the
/// chi-squared statement holds).
#[derive(Debug, Clone)]
pub struct Chi2DerivedPrior {
    pub concentration: f64,
    pub replications: usize,
    pub correction: f64,
}

impl Chi2DerivedPrior {
    pub fn new(concentration: f64, replications: usize, correction: f64) -> Result<Self> {
        if concentration <= 0.0 || correction <= 0.0 {
            return Err(Error::InvalidArgument(
                "chi-squared prior needs positive concentration and correction".into(),
            ));
        }
        if replications == 0 {
            return Err(Error::InvalidArgument(
                "chi-squared prior needs at least one replication".into(),
            ));
        }
        Ok(Self {
            concentration,
            replications,
            correction,
        })
    }

    /// `gamma = kappa`.
    pub fn with_default_correction(concentration: f64, replications: usize) -> Result<Self> {
        Self::new(concentration, replications, concentration)
    }

    /// Unnormalized log density of `theta`; symmetric in `theta`, vanishing at
    /// `theta = 0` for three or more replications.
    pub fn log_density_theta(&self, theta: f64) -> f64 {
        let n = self.replications as f64;
        let scale = 2.0 * n * self.correction;
        let u = scale * (1.0 - (2.0 * theta).cos());
        let jacobian = 2.0 * scale * (2.0 * theta).sin().abs();
        if jacobian == 0.0 {
            return f64::NEG_INFINITY;
        }
        chi2_log_pdf(u, n) + jacobian.ln()
    }
}

/// Discretized prior, likelihood and posterior over the dephasing angle.
#[derive(Debug, Clone)]
pub struct AngleGrid {
    /// Uniform grid over `(-pi/2, pi/2]`.
    pub thetas: Vec<f64>,
    /// Normalized prior density values.
    pub prior: Vec<f64>,
    /// Normalized likelihood values.
    pub likelihood: Vec<f64>,
    /// Normalized posterior values.
    pub posterior: Vec<f64>,
    /// Posterior mode (grid argmax).
    pub mode: f64,
    /// Circular mean of the doubled angle under the posterior.
    pub circular_mean_2theta: f64,
    /// Central 95% credible interval.
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Choi matrix of the dephasing channel at angle `theta`.
pub fn dephasing_choi(theta: f64) -> ChoiMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = ONE;
    m[(3, 3)] = ONE;
    m[(0, 3)] = Complex64::from_polar(1.0, 2.0 * theta);
    m[(3, 0)] = Complex64::from_polar(1.0, -2.0 * theta);
    ChoiMatrix::from_valid(2, m)
}

/// Posterior over the dephasing angle from `x` successes in `n` Ramsey trials,
/// for a caller-supplied log prior density on `theta`.
pub fn grid_posterior(
    log_prior: impl Fn(f64) -> f64,
    x: u64,
    n: u64,
    grid_size: usize,
) -> Result<AngleGrid> {
    if x > n || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "counts x={x} outside 0..={n}"
        )));
    }
    if grid_size < 512 {
        return Err(Error::InvalidArgument(format!(
            "grid size {grid_size} below the 512 minimum"
        )));
    }
    let g = grid_size;
    let step = std::f64::consts::PI / g as f64;
    let mut thetas = Vec::with_capacity(g);
    let mut log_pri = Vec::with_capacity(g);
    let mut log_lik = Vec::with_capacity(g);
    for i in 0..g {
        let theta = -std::f64::consts::FRAC_PI_2 + (i + 1) as f64 * step;
        let p = 0.5 + 0.5 * (2.0 * theta).cos();
        let mut ll = 0.0;
        if x > 0 {
            ll += x as f64 * p.max(1e-300).ln();
        }
        if n - x > 0 {
            ll += (n - x) as f64 * (1.0 - p).max(1e-300).ln();
        }
        thetas.push(theta);
        log_pri.push(log_prior(theta));
        log_lik.push(ll);
    }

    let prior = normalize_log(&log_pri, step)?;
    let likelihood = normalize_log(&log_lik, step)?;
    let log_post: Vec<f64> = log_pri
        .iter()
        .zip(log_lik.iter())
        .map(|(a, b)| a + b)
        .collect();
    let posterior = normalize_log(&log_post, step)?;

    let mode_idx = posterior
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite densities"))
        .map(|(i, _)| i)
        .expect("nonempty grid");

    let (mut sin_acc, mut cos_acc) = (0.0, 0.0);
    for (theta, w) in thetas.iter().zip(posterior.iter()) {
        sin_acc += w * (2.0 * theta).sin();
        cos_acc += w * (2.0 * theta).cos();
    }
    let circular_mean_2theta = sin_acc.atan2(cos_acc);

    let (ci_low, ci_high) = credible_interval(&thetas, &posterior, step, 0.95);

    Ok(AngleGrid {
        mode: thetas[mode_idx],
        circular_mean_2theta,
        ci_low,
        ci_high,
        thetas,
        prior,
        likelihood,
        posterior,
    })
}

/// Exponentiate after max-shift and normalize by the trapezoid rule.
fn normalize_log(log_values: &[f64], step: f64) -> Result<Vec<f64>> {
    let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NumericDegeneracy(
            "density vanished everywhere on the grid".into(),
        ));
    }
    let mut values: Vec<f64> = log_values.iter().map(|&v| (v - max).exp()).collect();
    let mass = trapezoid(&values, step);
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::NumericDegeneracy(
            "zero total mass after underflow guard".into(),
        ));
    }
    for v in &mut values {
        *v /= mass;
    }
    Ok(values)
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    step * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

fn credible_interval(thetas: &[f64], density: &[f64], step: f64, mass: f64) -> (f64, f64) {
    let tail = 0.5 * (1.0 - mass);
    let mut cumulative = vec![0.0];
    for w in density.windows(2) {
        cumulative.push(cumulative.last().unwrap() + 0.5 * (w[0] + w[1]) * step);
    }
    let total = *cumulative.last().unwrap();
    let quantile = |q: f64| -> f64 {
        let target = q * total;
        match cumulative.iter().position(|&c| c >= target) {
            Some(0) | None => thetas[0],
            Some(idx) => {
                let (c0, c1) = (cumulative[idx - 1], cumulative[idx]);
                let t = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
                thetas[idx - 1] + t * (thetas[idx] - thetas[idx - 1])
            }
        }
    };
    (quantile(tail), quantile(1.0 - tail))
}

/// Circular variance `1 - |E e^{i 2 theta}|` of a density on the angle grid.
pub fn circular_variance_2theta(density: &[f64], thetas: &[f64]) -> f64 {
    let mut sin_acc = 0.0;
    let mut cos_acc = 0.0;
    let mut total = 0.0;
    for (w, theta) in density.iter().zip(thetas.iter()) {
        sin_acc += w * (2.0 * theta).sin();
        cos_acc += w * (2.0 * theta).cos();
        total += w;
    }
    1.0 - (sin_acc * sin_acc + cos_acc * cos_acc).sqrt() / total
}
