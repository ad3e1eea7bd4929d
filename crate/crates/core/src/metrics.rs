//! Distances between mixture components and between whole mixtures.
//!
//! The component distance is the largest of three terms:
//!
//! * weight: `|w_a - w_b|`
//! * mean: `max(||S_a^{-1/2}(mu_a - mu_b)||, ||S_b^{-1/2}(mu_a - mu_b)||)`
//! * covariance: `max(||S_a^{-1/2} S_b S_a^{-1/2} - I||_F, ||S_b^{-1/2} S_a S_b^{-1/2} - I||_F)`
//!
//! Every term is evaluated under both orderings, so the distance is exactly
//! symmetric in floating point. The mixture distance is the bottleneck over
//! component relabelings: `min_pi max_i dist(a_i, b_pi(i))`.

use crate::error::{Error, Result};
use crate::linalg::{frob_norm, inv_sqrt, norm2, Matrix, SymMatrix};
use crate::matching::{bottleneck_matching, next_permutation};
use crate::model::{Component, Gmm};
use crate::scalar::Real;

/// Largest `k` accepted by [`dist_mixture_bruteforce`].
pub const BRUTE_FORCE_MAX_K: usize = 8;

/// Slack used by [`check_restricted_triangle`].
pub const TRIANGLE_SLACK: f64 = 1e-12;

/// A component with its inverse covariance square root cached.
#[derive(Debug, Clone)]
pub struct PreparedComponent<T> {
    pub weight: T,
    pub mean: Vec<T>,
    pub cov: SymMatrix<T>,
    pub cov_inv_sqrt: SymMatrix<T>,
}

impl<T: Real> PreparedComponent<T> {
    pub fn new(c: &Component<T>) -> Result<Self> {
        Ok(Self {
            weight: c.weight,
            mean: c.mean.clone(),
            cov: c.cov.clone(),
            cov_inv_sqrt: inv_sqrt(&c.cov)?,
        })
    }
}

pub fn prepare<T: Real>(g: &Gmm<T>) -> Result<Vec<PreparedComponent<T>>> {
    g.components().iter().map(PreparedComponent::new).collect()
}

/// The three per-term values of the component distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompTerms<T> {
    pub weight: T,
    pub mean: T,
    pub cov: T,
}

impl<T: Real> CompTerms<T> {
    pub fn max(&self) -> T {
        self.weight.max(self.mean).max(self.cov)
    }
}

fn relative_cov_deviation<T: Real>(whiten: &SymMatrix<T>, other: &SymMatrix<T>) -> T {
    let w = whiten.as_matrix();
    let m = &(w * other.as_matrix()) * w;
    frob_norm(&(&m - &Matrix::identity(m.rows())))
}

pub fn comp_terms<T: Real>(a: &PreparedComponent<T>, b: &PreparedComponent<T>) -> Result<CompTerms<T>> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: a.mean.len(),
            found: b.mean.len(),
        });
    }
    let diff: Vec<T> = a.mean.iter().zip(&b.mean).map(|(&x, &y)| x - y).collect();
    let mean_a = norm2(&a.cov_inv_sqrt.as_matrix().mul_vec(&diff));
    let mean_b = norm2(&b.cov_inv_sqrt.as_matrix().mul_vec(&diff));
    let cov = if a.cov == b.cov {
        T::zero()
    } else {
        relative_cov_deviation(&a.cov_inv_sqrt, &b.cov).max(relative_cov_deviation(&b.cov_inv_sqrt, &a.cov))
    };
    Ok(CompTerms {
        weight: (a.weight - b.weight).abs(),
        mean: mean_a.max(mean_b),
        cov,
    })
}

pub fn dist_prepared<T: Real>(a: &PreparedComponent<T>, b: &PreparedComponent<T>) -> Result<T> {
    comp_terms(a, b).map(|t| t.max())
}

/// Distance between two components.
pub fn dist_comp<T: Real>(a: &Component<T>, b: &Component<T>) -> Result<T> {
    dist_prepared(&PreparedComponent::new(a)?, &PreparedComponent::new(b)?)
}

/// `dist^k`: bottleneck distance between two equally sized tuples under an
/// element distance.
pub fn dist_k<E, T, F>(a: &[E], b: &[E], mut dist: F) -> Result<T>
where
    T: Real,
    F: FnMut(&E, &E) -> Result<T>,
{
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let k = a.len();
    let mut cost = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            cost[(i, j)] = dist(&a[i], &b[j])?;
        }
    }
    Ok(bottleneck_matching(&cost).value)
}

/// Mixture distance on prepared components.
pub fn dist_mixture_prepared<T: Real>(a: &[PreparedComponent<T>], b: &[PreparedComponent<T>]) -> Result<T> {
    dist_k(a, b, dist_prepared)
}

/// Permutation-invariant distance between mixtures of equal `k` and `d`.
pub fn dist_mixture<T: Real>(a: &Gmm<T>, b: &Gmm<T>) -> Result<T> {
    check_same_shape(a, b)?;
    dist_mixture_prepared(&prepare(a)?, &prepare(b)?)
}

fn check_same_shape<T: Real>(a: &Gmm<T>, b: &Gmm<T>) -> Result<()> {
    if a.k() != b.k() {
        return Err(Error::DimensionMismatch {
            expected: a.k(),
            found: b.k(),
        });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Mixture distance by enumerating all `k!` relabelings. Test oracle.
pub fn dist_mixture_bruteforce<T: Real>(a: &Gmm<T>, b: &Gmm<T>) -> Result<T> {
    check_same_shape(a, b)?;
    let k = a.k();
    if k > BRUTE_FORCE_MAX_K {
        return Err(Error::TooLarge {
            k,
            max: BRUTE_FORCE_MAX_K,
        });
    }
    let mut table = vec![vec![T::zero(); k]; k];
    for (i, ca) in a.components().iter().enumerate() {
        for (j, cb) in b.components().iter().enumerate() {
            table[i][j] = dist_comp(ca, cb)?;
        }
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = T::infinity();
    loop {
        let worst = (0..k).map(|i| table[i][perm[i]]).fold(T::neg_infinity(), T::max);
        best = best.min(worst);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best)
}

/// Parameters of an `r`-restricted `z`-approximate triangle inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemimetricParams {
    pub r: f64,
    pub z: f64,
}

impl SemimetricParams {
    pub fn new(r: f64, z: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite() && z >= 1.0 && z.is_finite()) {
            return Err(Error::param(format!("need r > 0 and z >= 1, got r = {r}, z = {z}")));
        }
        Ok(Self { r, z })
    }

    /// The mixture distance satisfies the 1-restricted 3/2-approximate
    /// inequality.
    pub fn gmm() -> Self {
        Self { r: 1.0, z: 1.5 }
    }

    /// Approximation factor valid for this component distance at radius `r`:
    /// `max(3/2, 1 + r/2)`.
    ///
    /// Each term of `dist(F1, F3)` is bounded by `d12 + d23 + d12 * d23`, and
    /// `d12 * d23 <= (r / 2)(d12 + d23)` once both are at most `r`.
    pub fn for_radius(r: f64) -> Result<Self> {
        Self::new(r, (1.0 + r / 2.0).max(1.5))
    }
}

/// Whether the restricted triangle implication holds for one triple:
/// `d12 > r || d23 > r || d13 <= z (d12 + d23)`.
pub fn check_restricted_triangle(d12: f64, d23: f64, d13: f64, p: &SemimetricParams) -> bool {
    d12 > p.r || d23 > p.r || d13 <= p.z * (d12 + d23) + TRIANGLE_SLACK
}
