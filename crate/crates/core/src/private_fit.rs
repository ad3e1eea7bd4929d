//! Private GMM estimation: the PPE instantiated with the EM learner, the
//! mixture distance and the shuffled component masker.

use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_gamma, calibrate_mask_config, concentration_mask_config, min_subsets, CalibrationInput,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learn::{em_fit, LearnerOptions};
use crate::masking::{mask_gmm, MaskConfig};
use crate::metrics::{dist_mixture_prepared, prepare, PreparedComponent, SemimetricParams};
use crate::model::Gmm;
use crate::ppe::{ppe_run, PpeConfig, PpeOutcome};
use crate::random::RandomStream;
use crate::scalar::Real;

/// Settings of a private fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivateFitConfig {
    pub calibration: CalibrationInput,
    pub learner: LearnerOptions,
    /// Chunk count; defaults to the smallest count with the utility guarantee.
    pub t: Option<usize>,
    /// Agreement radius. When unset, `r = min(gamma, 1)` and the masker is
    /// calibrated for privacy at `gamma`. When set, `z` follows from `r` and
    /// the masker is calibrated for concentration only.
    pub radius: Option<f64>,
}

impl PrivateFitConfig {
    pub fn new(calibration: CalibrationInput) -> Self {
        Self {
            calibration,
            learner: LearnerOptions::new(calibration.k),
            t: None,
            radius: None,
        }
    }
}

/// Parameters derived from a [`PrivateFitConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPlan {
    pub ppe: PpeConfig,
    pub mask: MaskConfig,
    /// Masking radius; absent in explicit-radius mode.
    pub gamma: Option<f64>,
    /// Whether the masker noise meets the privacy floor at `gamma`.
    pub privacy_calibrated: bool,
}

pub fn plan_fit(cfg: &PrivateFitConfig) -> Result<FitPlan> {
    let c = &cfg.calibration;
    if cfg.learner.k != c.k {
        return Err(Error::param(format!(
            "learner k = {} differs from calibration k = {}",
            cfg.learner.k, c.k
        )));
    }
    let t = match cfg.t {
        Some(t) => t,
        None => min_subsets(c.epsilon, c.delta)?,
    };
    match cfg.radius {
        None => {
            let gamma = calibrate_gamma(c)?;
            let mask = calibrate_mask_config(c)?;
            let sm = SemimetricParams::gmm();
            Ok(FitPlan {
                ppe: PpeConfig::new(c.epsilon, c.delta, gamma.min(sm.r), sm.z, t)?,
                mask,
                gamma: Some(gamma),
                privacy_calibrated: true,
            })
        }
        Some(r) => {
            let sm = SemimetricParams::for_radius(r)?;
            let mask = concentration_mask_config(c.alpha / (2.0 * sm.z), c.beta, c.k, c.d)?;
            Ok(FitPlan {
                ppe: PpeConfig::new(c.epsilon, c.delta, sm.r, sm.z, t)?,
                mask,
                gamma: None,
                privacy_calibrated: false,
            })
        }
    }
}

/// Fits a `k`-component GMM privately.
pub fn fit_gmm_private<T: Real>(
    data: &Dataset<T>,
    cfg: &PrivateFitConfig,
    stream: &RandomStream,
) -> Result<(FitPlan, PpeOutcome<Gmm<T>>)> {
    let plan = plan_fit(cfg)?;
    if data.dim() != cfg.calibration.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.calibration.d,
            found: data.dim(),
        });
    }
    let need = plan.ppe.t * cfg.learner.min_points(data.dim());
    if data.len() < need {
        return Err(Error::InsufficientData { have: data.len(), need });
    }
    type Fitted<T> = (Gmm<T>, Vec<PreparedComponent<T>>);
    let learner = |chunk: &[Vec<T>], rng: &mut RandomStream| -> Result<Fitted<T>> {
        let g = em_fit(chunk, &cfg.learner, rng)?;
        let prepared = prepare(&g)?;
        Ok((g, prepared))
    };
    let dist = |a: &Fitted<T>, b: &Fitted<T>| dist_mixture_prepared(&a.1, &b.1).map(|v| v.as_f64());
    let mask = plan.mask;
    let masker = move |y: &Fitted<T>, rng: &mut RandomStream| mask_gmm(&y.0, &mask, rng);
    let outcome = ppe_run(data.points(), learner, dist, masker, &plan.ppe, stream)?;
    Ok((plan, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input() -> CalibrationInput {
        CalibrationInput {
            alpha: 0.6,
            beta: 0.1,
            epsilon: 1.0,
            delta: 1e-6,
            k: 2,
            d: 2,
            c2: 10.0,
        }
    }

    #[test]
    fn explicit_radius_plan() {
        let mut cfg = PrivateFitConfig::new(input());
        cfg.radius = Some(2.0);
        let plan = plan_fit(&cfg).unwrap();
        assert_eq!(plan.ppe.t, 274);
        assert_eq!(plan.ppe.z, 2.0);
        assert_eq!(plan.ppe.agreement_radius(), 0.5);
        assert!(!plan.privacy_calibrated);
    }

    #[test]
    fn default_plan_needs_small_epsilon() {
        let cfg = PrivateFitConfig::new(input());
        assert!(matches!(plan_fit(&cfg), Err(Error::EpsilonTooLarge { .. })));
    }

    #[test]
    fn default_plan_uses_gamma() {
        let inp = CalibrationInput {
            epsilon: 0.2,
            k: 1,
            d: 1,
            alpha: 0.3,
            ..input()
        };
        let mut cfg = PrivateFitConfig::new(inp);
        cfg.t = Some(2000);
        let plan = plan_fit(&cfg).unwrap();
        let gamma = plan.gamma.unwrap();
        assert_eq!(plan.ppe.r, gamma.min(1.0));
        assert_eq!(plan.ppe.z, 1.5);
        assert!(plan.privacy_calibrated);
    }

    #[test]
    fn rejects_too_few_points_and_wrong_dimension() {
        let mut cfg = PrivateFitConfig::new(input());
        cfg.radius = Some(2.0);
        let ds = Dataset::new(2, vec![vec![0.0, 0.0]; 1000]).unwrap();
        let r = fit_gmm_private(&ds, &cfg, &RandomStream::from_seed(0));
        assert!(matches!(r, Err(Error::InsufficientData { .. })));
        let ds = Dataset::new(3, vec![vec![0.0; 3]; 1000]).unwrap();
        let r = fit_gmm_private(&ds, &cfg, &RandomStream::from_seed(0));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}
