//! The Private Populous Estimator: split the data into `t` chunks, learn on
//! each, privately test that most outputs agree, and release a masked
//! representative.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::ppe_threshold;
use crate::error::{Error, Result};
use crate::random::{tlap_bound, tlap_sample, RandomStream, TLapParams};

/// Parameters of one PPE invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpeConfig {
    pub epsilon: f64,
    pub delta: f64,
    /// Restriction radius of the distance's approximate triangle inequality.
    pub r: f64,
    /// Approximation factor of that inequality.
    pub z: f64,
    /// Number of chunks.
    pub t: usize,
}

impl PpeConfig {
    pub fn new(epsilon: f64, delta: f64, r: f64, z: f64, t: usize) -> Result<Self> {
        let cfg = Self {
            epsilon,
            delta,
            r,
            z,
            t,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::param(format!("r must be positive, got {}", self.r)));
        }
        if !(self.z >= 1.0 && self.z.is_finite()) {
            return Err(Error::param(format!("z must be at least 1, got {}", self.z)));
        }
        if self.t <= 5 {
            return Err(Error::param(format!("t must exceed 5, got {}", self.t)));
        }
        Ok(())
    }

    /// Agreement radius `r / 2z`.
    pub fn agreement_radius(&self) -> f64 {
        self.r / (2.0 * self.z)
    }

    pub fn threshold(&self) -> Result<f64> {
        ppe_threshold(self.t, self.epsilon, self.delta)
    }

    pub fn noise(&self) -> Result<TLapParams> {
        TLapParams::new(2.0 / self.t as f64, self.epsilon, self.delta)
    }
}

/// Why PPE returned the failure symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "message")]
pub enum BotReason {
    /// The noisy agreement score fell below the threshold.
    BelowThreshold,
    /// The masker could not produce a valid output.
    MaskFailed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict<O> {
    Released(O),
    Bot(BotReason),
}

impl<O> Verdict<O> {
    pub fn is_released(&self) -> bool {
        matches!(self, Verdict::Released(_))
    }

    pub fn released(&self) -> Option<&O> {
        match self {
            Verdict::Released(o) => Some(o),
            Verdict::Bot(_) => None,
        }
    }
}

/// Intermediate values of a run. The agreement counts are sensitive and must
/// not be published as if they were covered by the privacy guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: usize,
    pub chunk_size: usize,
    pub discarded: usize,
    /// `counts[i] = |{j : dist(Y_i, Y_j) <= r/2z}|`, so `q_i = counts[i] / t`.
    pub counts: Vec<usize>,
    pub q_values: Vec<f64>,
    pub q_mean: f64,
    pub noise: f64,
    pub q_noised: f64,
    pub threshold: f64,
    pub noise_bound: f64,
    /// 0-based index of the released chunk output.
    pub selected_index: Option<usize>,
    pub failed_chunks: Vec<usize>,
    pub failed_distances: usize,
}

impl Diagnostics {
    /// `t^2 Q` as an exact integer.
    pub fn count_total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Wall-clock seconds per phase. Not reproducible; kept apart from the
/// diagnostics for that reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub learn: f64,
    pub distances: f64,
    pub mask: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpeOutcome<O> {
    pub verdict: Verdict<O>,
    pub diagnostics: Diagnostics,
    pub timings: PhaseTimings,
}

/// Chunk outputs and their agreement counts, before any noise is added.
#[derive(Debug, Clone)]
pub struct Agreement<Y> {
    pub outputs: Vec<Option<Y>>,
    pub counts: Vec<usize>,
    pub failed_distances: usize,
    pub chunk_size: usize,
}

/// Runs the learner on `t` consecutive chunks of `s = floor(m/t)` points and
/// counts, for every chunk output, how many outputs lie within `radius`.
///
/// A failed learner yields an output at infinite distance from all others; a
/// failed distance evaluation counts as a disagreement.
pub fn agreement_counts<P, Y, L, D>(
    data: &[P],
    t: usize,
    radius: f64,
    learner: &L,
    dist: &D,
    stream: &RandomStream,
) -> Result<(Agreement<Y>, PhaseTimings)>
where
    P: Sync,
    Y: Send + Sync,
    L: Fn(&[P], &mut RandomStream) -> Result<Y> + Sync,
    D: Fn(&Y, &Y) -> Result<f64> + Sync,
{
    if t == 0 || data.len() < t {
        return Err(Error::InsufficientData {
            have: data.len(),
            need: t.max(1),
        });
    }
    let s = data.len() / t;
    let learn_stream = stream.substream(0);

    let started = Instant::now();
    let outputs: Vec<Option<Y>> = (0..t)
        .into_par_iter()
        .map(|i| {
            let mut rng = learn_stream.substream(i as u64);
            learner(&data[i * s..(i + 1) * s], &mut rng).ok()
        })
        .collect();
    let learn = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let rows: Vec<(Vec<bool>, usize)> = (0..t)
        .into_par_iter()
        .map(|i| {
            let mut close = vec![false; t];
            let mut failed = 0;
            if let Some(yi) = &outputs[i] {
                for j in (i + 1)..t {
                    if let Some(yj) = &outputs[j] {
                        match dist(yi, yj) {
                            Ok(v) if v <= radius => close[j] = true,
                            Ok(_) => {}
                            Err(_) => failed += 1,
                        }
                    }
                }
            }
            (close, failed)
        })
        .collect();
    let mut counts = vec![1usize; t];
    for (i, (close, _)) in rows.iter().enumerate() {
        for j in (i + 1)..t {
            if close[j] {
                counts[i] += 1;
                counts[j] += 1;
            }
        }
    }
    let failed_distances = rows.iter().map(|r| r.1).sum();
    let distances = started.elapsed().as_secs_f64();

    Ok((
        Agreement {
            outputs,
            counts,
            failed_distances,
            chunk_size: s,
        },
        PhaseTimings {
            learn,
            distances,
            mask: 0.0,
        },
    ))
}

/// Smallest index with `q_i > 0.6`, i.e. `5 count > 3t`.
pub fn select_index(counts: &[usize], t: usize) -> Option<usize> {
    counts.iter().position(|&c| 5 * c > 3 * t)
}

/// The Private Populous Estimator.
///
/// Learners run on `stream.substream(0).substream(i)`, the threshold noise
/// uses `substream(1)` and the masker `substream(2)`, so the outcome does not
/// depend on scheduling.
pub fn ppe_run<P, Y, O, L, D, M>(
    data: &[P],
    learner: L,
    dist: D,
    masker: M,
    cfg: &PpeConfig,
    stream: &RandomStream,
) -> Result<PpeOutcome<O>>
where
    P: Sync,
    Y: Send + Sync,
    L: Fn(&[P], &mut RandomStream) -> Result<Y> + Sync,
    D: Fn(&Y, &Y) -> Result<f64> + Sync,
    M: FnOnce(&Y, &mut RandomStream) -> Result<O>,
{
    cfg.validate()?;
    let threshold = cfg.threshold()?;
    if threshold > 1.0 {
        return Err(Error::ConfigInfeasible { threshold });
    }
    let noise_params = cfg.noise()?;
    let t = cfg.t;

    let (agreement, mut timings) = agreement_counts(data, t, cfg.agreement_radius(), &learner, &dist, stream)?;
    let counts = agreement.counts;
    let total: usize = counts.iter().sum();
    let q_mean = total as f64 / (t * t) as f64;
    let noise = tlap_sample(&mut stream.substream(1), &noise_params);
    let q_noised = q_mean + noise;

    let mut diagnostics = Diagnostics {
        t,
        chunk_size: agreement.chunk_size,
        discarded: data.len() - t * agreement.chunk_size,
        q_values: counts.iter().map(|&c| c as f64 / t as f64).collect(),
        counts,
        q_mean,
        noise,
        q_noised,
        threshold,
        noise_bound: tlap_bound(&noise_params),
        selected_index: None,
        failed_chunks: (0..t).filter(|&i| agreement.outputs[i].is_none()).collect(),
        failed_distances: agreement.failed_distances,
    };

    if q_noised < threshold {
        return Ok(PpeOutcome {
            verdict: Verdict::Bot(BotReason::BelowThreshold),
            diagnostics,
            timings,
        });
    }

    // passing certifies Q >= 0.8, so some q_i exceeds 0.6
    let j = select_index(&diagnostics.counts, t).ok_or(Error::SelectionFailed)?;
    let selected = agreement.outputs[j].as_ref().ok_or(Error::SelectionFailed)?;
    diagnostics.selected_index = Some(j);

    let started = Instant::now();
    let masked = masker(selected, &mut stream.substream(2));
    timings.mask = started.elapsed().as_secs_f64();
    let verdict = match masked {
        Ok(o) => Verdict::Released(o),
        Err(e) => {
            diagnostics.selected_index = None;
            Verdict::Bot(BotReason::MaskFailed(e.to_string()))
        }
    };
    Ok(PpeOutcome {
        verdict,
        diagnostics,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_learner(chunk: &[f64], _: &mut RandomStream) -> Result<f64> {
        Ok(chunk.iter().sum::<f64>() / chunk.len() as f64)
    }

    fn abs_dist(a: &f64, b: &f64) -> Result<f64> {
        Ok((a - b).abs())
    }

    fn identity_masker(y: &f64, _: &mut RandomStream) -> Result<f64> {
        Ok(*y)
    }

    #[test]
    fn identical_outputs_always_pass_and_select_first() {
        let data = vec![1.0; 274 * 3];
        let cfg = PpeConfig::new(1.0, 1e-6, 1.0, 1.5, 274).unwrap();
        for seed in 0..50 {
            let out = ppe_run(
                &data,
                scalar_learner,
                abs_dist,
                identity_masker,
                &cfg,
                &RandomStream::from_seed(seed),
            )
            .unwrap();
            assert_eq!(out.verdict, Verdict::Released(1.0));
            assert_eq!(out.diagnostics.selected_index, Some(0));
            assert!(out.diagnostics.counts.iter().all(|&c| c == 274));
            assert_eq!(out.diagnostics.q_mean, 1.0);
            assert!(out.diagnostics.q_noised >= 0.900_26);
        }
    }

    #[test]
    fn scattered_outputs_always_fail() {
        let data: Vec<f64> = (0..274 * 2).map(|i| (i / 2) as f64).collect();
        let cfg = PpeConfig::new(1.0, 1e-6, 1.0, 1.5, 274).unwrap();
        for seed in 0..50 {
            let out = ppe_run(
                &data,
                scalar_learner,
                abs_dist,
                identity_masker,
                &cfg,
                &RandomStream::from_seed(seed),
            )
            .unwrap();
            assert_eq!(out.verdict, Verdict::Bot(BotReason::BelowThreshold));
            assert!(out.diagnostics.counts.iter().all(|&c| c == 1));
            assert_eq!(out.diagnostics.selected_index, None);
        }
    }

    #[test]
    fn chunks_are_consecutive_and_leftovers_dropped() {
        let data: Vec<f64> = (0..20).map(f64::from).collect();
        let cfg = PpeConfig::new(1.0, 1e-6, 1e9, 1.0, 6).unwrap();
        let seen = std::sync::Mutex::new(Vec::new());
        let learner = |chunk: &[f64], _: &mut RandomStream| {
            seen.lock().unwrap().push(chunk.to_vec());
            Ok(0.0)
        };
        let r = agreement_counts(&data, cfg.t, 1.0, &learner, &abs_dist, &RandomStream::from_seed(0)).unwrap();
        let mut seen = seen.into_inner().unwrap();
        seen.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(r.0.chunk_size, 3);
        assert_eq!(seen.len(), 6);
        for (i, c) in seen.iter().enumerate() {
            let expect: Vec<f64> = (3 * i..3 * i + 3).map(|v| v as f64).collect();
            assert_eq!(c, &expect);
        }
    }

    #[test]
    fn failed_learners_count_only_themselves() {
        let data = vec![1.0; 60];
        let learner = |chunk: &[f64], _: &mut RandomStream| {
            if chunk.as_ptr() == data.as_ptr() {
                Err(Error::LearnFailed("boom".into()))
            } else {
                Ok(0.0)
            }
        };
        let (a, _) = agreement_counts(&data, 10, 0.1, &learner, &abs_dist, &RandomStream::from_seed(0)).unwrap();
        assert_eq!(a.counts[0], 1);
        assert!(a.counts[1..].iter().all(|&c| c == 9));
    }

    #[test]
    fn infeasible_and_small_inputs_are_errors() {
        let cfg = PpeConfig::new(1.0, 1e-6, 1.0, 1.5, 100).unwrap();
        let r = ppe_run(
            &[0.0; 1000],
            scalar_learner,
            abs_dist,
            identity_masker,
            &cfg,
            &RandomStream::from_seed(0),
        );
        assert!(matches!(r, Err(Error::ConfigInfeasible { threshold }) if threshold > 1.07));
        let cfg = PpeConfig::new(1.0, 1e-6, 1.0, 1.5, 274).unwrap();
        let r = ppe_run(
            &[0.0; 100],
            scalar_learner,
            abs_dist,
            identity_masker,
            &cfg,
            &RandomStream::from_seed(0),
        );
        assert!(matches!(r, Err(Error::InsufficientData { .. })));
        assert!(PpeConfig::new(1.0, 1e-6, 1.0, 1.5, 5).is_err());
        assert!(PpeConfig::new(1.0, 1e-6, 1.0, 0.5, 10).is_err());
    }

    #[test]
    fn mask_failure_is_bot() {
        let data = vec![1.0; 274];
        let cfg = PpeConfig::new(1.0, 1e-6, 1.0, 1.5, 274).unwrap();
        let masker = |_: &f64, _: &mut RandomStream| -> Result<f64> { Err(Error::DegenerateWeights { sum: 0.0 }) };
        let out = ppe_run(
            &data,
            scalar_learner,
            abs_dist,
            masker,
            &cfg,
            &RandomStream::from_seed(0),
        )
        .unwrap();
        assert!(matches!(out.verdict, Verdict::Bot(BotReason::MaskFailed(_))));
    }

    #[test]
    fn selection_uses_strict_inequality() {
        // 3t/5 exactly is not enough
        assert_eq!(select_index(&[6, 7], 10), Some(1));
        assert_eq!(select_index(&[6, 6], 10), None);
    }

    #[test]
    fn runs_are_deterministic() {
        let data: Vec<f64> = (0..600).map(|i| ((i * 37) % 11) as f64 / 100.0).collect();
        let cfg = PpeConfig::new(1.0, 1e-6, 0.3, 1.5, 100).unwrap();
        let cfg = PpeConfig { t: 274, ..cfg };
        let data = [data.clone(), data].concat();
        let a = ppe_run(
            &data,
            scalar_learner,
            abs_dist,
            identity_masker,
            &cfg,
            &RandomStream::from_seed(3),
        )
        .unwrap();
        let b = ppe_run(
            &data,
            scalar_learner,
            abs_dist,
            identity_masker,
            &cfg,
            &RandomStream::from_seed(3),
        )
        .unwrap();
        assert_eq!(a.verdict, b.verdict);
        assert_eq!(a.diagnostics, b.diagnostics);
    }
}
