//! Closed-form privacy and utility bookkeeping: the agreement-test threshold,
//! the minimum number of subsets, advanced composition across components,
//! and calibration of the masking radius and noise levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskConfig;
use crate::random::{tlap_bound, TLapParams};

/// Masking calibration requires `epsilon < ln(2) / 3`.
pub fn max_calibration_epsilon() -> f64 {
    std::f64::consts::LN_2 / 3.0
}

/// Failure threshold of the agreement test: `0.8 + (2/(t eps)) ln(1 + (e^eps - 1)/(2 delta))`.
///
/// Written as `0.8 + A` with `A` the truncation bound of `TLap(2/t, eps, delta)`,
/// so a passing noisy average certifies a true average of at least 0.8.
pub fn ppe_threshold(t: usize, epsilon: f64, delta: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::param("t must be at least 1"));
    }
    let p = TLapParams::new(2.0 / t as f64, epsilon, delta)?;
    Ok(0.8 + tlap_bound(&p))
}

/// Smallest `t` with `t >= (20/eps) ln(1 + (e^eps - 1)/(2 delta))`, and at least 6.
pub fn min_subsets(epsilon: f64, delta: f64) -> Result<usize> {
    TLapParams::new(1.0, epsilon, delta)?;
    let bound = 20.0 / epsilon * (epsilon.exp_m1() / (2.0 * delta)).ln_1p();
    Ok((bound.ceil() as usize).max(6))
}

/// Privacy loss of the shuffled `k`-fold component masker:
/// `sqrt(2k ln(1/delta')) eps + k eps (e^eps - 1)`, at `delta = k delta_c + delta'`.
pub fn compose_epsilon(k: usize, epsilon: f64, delta_prime: f64) -> Result<f64> {
    if k == 0 || !(epsilon > 0.0) || !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::param(format!(
            "compose_epsilon needs k >= 1, eps > 0, delta' in (0, 1); got ({k}, {epsilon}, {delta_prime})"
        )));
    }
    let k = k as f64;
    Ok((2.0 * k * (1.0 / delta_prime).ln()).sqrt() * epsilon + k * epsilon * epsilon.exp_m1())
}

/// Inputs to the masking calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInput {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub k: usize,
    pub d: usize,
    pub c2: f64,
}

impl CalibrationInput {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !(unit(self.alpha) && unit(self.beta) && unit(self.delta)) {
            return Err(Error::param(format!(
                "alpha, beta and delta must lie in (0, 1); got ({}, {}, {})",
                self.alpha, self.beta, self.delta
            )));
        }
        if !(self.epsilon > 0.0 && self.c2 > 0.0 && self.c2.is_finite()) {
            return Err(Error::param("epsilon and c2 must be positive"));
        }
        if self.k == 0 || self.d == 0 {
            return Err(Error::param("k and d must be positive"));
        }
        if self.epsilon >= max_calibration_epsilon() {
            return Err(Error::EpsilonTooLarge {
                epsilon: self.epsilon,
                limit: max_calibration_epsilon(),
            });
        }
        Ok(())
    }

    /// Per-component budget `eps / sqrt(2k ln(2/delta))`.
    pub fn component_epsilon(&self) -> f64 {
        self.epsilon / (2.0 * self.k as f64 * (2.0 / self.delta).ln()).sqrt()
    }
}

/// Largest masking radius for which the mixture masker is a masking mechanism:
/// `eps alpha / (C2 sqrt(k ln(2/delta)) sqrt(d^2 (d + ln(12k/beta))) ln(12k/delta))`.
pub fn calibrate_gamma(inp: &CalibrationInput) -> Result<f64> {
    inp.validate()?;
    let k = inp.k as f64;
    let d = inp.d as f64;
    let denom = inp.c2
        * (k * (2.0 / inp.delta).ln()).sqrt()
        * (d * d * (d + (12.0 * k / inp.beta).ln())).sqrt()
        * (12.0 * k / inp.delta).ln();
    Ok(inp.epsilon * inp.alpha / denom)
}

/// Tail radius `sqrt(2 ln(6k/beta))` shared by the three concentration bounds.
fn tail_radius(beta: f64, k: usize) -> f64 {
    (2.0 * (6.0 * k as f64 / beta).ln()).sqrt()
}

/// Largest noise levels keeping the masked mixture within `alpha` of its
/// input with probability at least `1 - beta`.
///
/// The budget `alpha / 3` is split across the weight, mean and covariance
/// terms, each holding except with probability `beta / (6k)` per component:
///
/// * `eta_w t <= (alpha/3) / (1 + 4k/3)` also absorbs the renormalization
///   of all `k` weights;
/// * `eta_mean (sqrt(d) + t) <= (alpha/3) sqrt(3)/2` covers the Mahalanobis
///   distance under either covariance;
/// * `eta_cov b <= (alpha/3) / 3` with `b = sqrt(d)(sqrt(d) + t)` covers both
///   relative covariance deviations.
///
/// All three levels are linear in `alpha`.
pub fn concentration_mask_config(alpha: f64, beta: f64, k: usize, d: usize) -> Result<MaskConfig> {
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0 && k > 0 && d > 0) {
        return Err(Error::param(format!(
            "need alpha, beta in (0, 1) and k, d >= 1; got ({alpha}, {beta}, {k}, {d})"
        )));
    }
    let t = tail_radius(beta, k);
    let third = alpha / 3.0;
    let sd = (d as f64).sqrt();
    let eta_w = third / (t * (1.0 + 4.0 * k as f64 / 3.0));
    let eta_mean = third * (3f64.sqrt() / 2.0) / (sd + t);
    let eta_cov = third / (3.0 * sd * (sd + t));
    MaskConfig::new(eta_w, eta_mean, eta_cov)
}

/// Smallest noise level each sub-masker needs to hide a shift of size
/// `gamma`: `gamma sqrt(2 ln(1.25k/delta)) / eps_c` with `eps_c` the
/// per-component budget.
pub fn privacy_noise_floor(inp: &CalibrationInput, gamma: f64) -> f64 {
    gamma * (2.0 * (1.25 * inp.k as f64 / inp.delta).ln()).sqrt() / inp.component_epsilon()
}

/// Noise levels meeting both the privacy floor at `calibrate_gamma(inp)` and
/// the concentration ceiling at `alpha`. Returns the ceiling.
pub fn calibrate_mask_config(inp: &CalibrationInput) -> Result<MaskConfig> {
    let gamma = calibrate_gamma(inp)?;
    let cfg = concentration_mask_config(inp.alpha, inp.beta, inp.k, inp.d)?;
    let floor = privacy_noise_floor(inp, gamma);
    for (name, eta) in [
        ("eta_w", cfg.eta_w),
        ("eta_mean", cfg.eta_mean),
        ("eta_cov", cfg.eta_cov),
    ] {
        if eta < floor {
            return Err(Error::Infeasible(format!(
                "{name} ceiling {eta:.6e} is below the privacy floor {floor:.6e}; increase c2 or alpha"
            )));
        }
    }
    Ok(cfg)
}

/// Privacy budget the calibrated mixture masker is audited against:
/// `(compose_epsilon(k, eps_c, delta), k delta + delta)`.
pub fn composed_budget(inp: &CalibrationInput) -> Result<(f64, f64)> {
    let eps = compose_epsilon(inp.k, inp.component_epsilon(), inp.delta)?;
    Ok((eps, (inp.k as f64 + 1.0) * inp.delta))
}
