//! Noise maskers for mixture parameters.
//!
//! A component is masked by perturbing its weight additively, its mean by
//! covariance-shaped Gaussian noise, and its covariance through
//! `S^{1/2} (I + eta G)(I + eta G)^T S^{1/2}`. A mixture is masked by
//! shuffling its components uniformly, masking each one, and renormalizing
//! the weights.

use crate::error::{Error, Result};
use crate::linalg::{frob_norm, min_eigenvalue, psd_sqrt, Matrix, SymMatrix};
use crate::model::{Component, Gmm};
use crate::random::{gaussian_matrix, gaussian_with_cov, RandomStream};
use crate::scalar::Real;

/// Noise levels for the three sub-maskers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaskConfig {
    pub eta_w: f64,
    pub eta_mean: f64,
    pub eta_cov: f64,
}

impl MaskConfig {
    pub fn new(eta_w: f64, eta_mean: f64, eta_cov: f64) -> Result<Self> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !(ok(eta_w) && ok(eta_mean) && ok(eta_cov)) {
            return Err(Error::param(format!(
                "noise levels must be finite and nonnegative, got ({eta_w}, {eta_mean}, {eta_cov})"
            )));
        }
        Ok(Self {
            eta_w,
            eta_mean,
            eta_cov,
        })
    }

    pub fn zero() -> Self {
        Self {
            eta_w: 0.0,
            eta_mean: 0.0,
            eta_cov: 0.0,
        }
    }
}

/// `max(0, w + eta_w g)` with one standard normal draw.
pub fn mask_weight<T: Real>(w: T, eta_w: T, stream: &mut RandomStream) -> T {
    let g: T = stream.normal_as();
    (w + eta_w * g).max(T::zero())
}

/// `mu + eta_mean g` with `g ~ N(0, sigma)`.
pub fn mask_mean<T: Real>(mu: &[T], sigma: &SymMatrix<T>, eta_mean: T, stream: &mut RandomStream) -> Result<Vec<T>> {
    if sigma.dim() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: sigma.dim(),
        });
    }
    let g = gaussian_with_cov(stream, sigma)?;
    Ok(mu.iter().zip(g).map(|(&m, x)| m + eta_mean * x).collect())
}

/// The covariance masker, also returning the Gaussian matrix it drew.
pub fn mask_cov_with_noise<T: Real>(
    sigma: &SymMatrix<T>,
    eta_cov: T,
    stream: &mut RandomStream,
) -> Result<(SymMatrix<T>, Matrix<T>)> {
    let d = sigma.dim();
    let root = psd_sqrt(sigma)?;
    let g = gaussian_matrix::<T>(stream, d);
    let shift = &Matrix::identity(d) + &g.scale(eta_cov);
    let m = root.as_matrix() * &shift;
    let out = SymMatrix::from_symmetric_part(&(&m * &m.transpose()))?;
    debug_assert!(
        min_eigenvalue(&out).as_f64() >= -T::tol(1e-10) * frob_norm(out.as_matrix()).as_f64().max(1.0),
        "masked covariance lost positive semidefiniteness"
    );
    Ok((out, g))
}

/// `sigma^{1/2} (I + eta_cov G)(I + eta_cov G)^T sigma^{1/2}`.
pub fn mask_cov<T: Real>(sigma: &SymMatrix<T>, eta_cov: T, stream: &mut RandomStream) -> Result<SymMatrix<T>> {
    mask_cov_with_noise(sigma, eta_cov, stream).map(|(s, _)| s)
}

/// Masks one component. The weight may leave `[0, 1]` until the mixture is
/// renormalized. Weight, mean and covariance noise come from substreams 0, 1, 2.
pub fn mask_component<T: Real>(c: &Component<T>, cfg: &MaskConfig, stream: &mut RandomStream) -> Result<Component<T>> {
    let weight = mask_weight(c.weight, T::of(cfg.eta_w), &mut stream.substream(0));
    let mean = mask_mean(&c.mean, &c.cov, T::of(cfg.eta_mean), &mut stream.substream(1))?;
    let cov = mask_cov(&c.cov, T::of(cfg.eta_cov), &mut stream.substream(2))?;
    Ok(Component { weight, mean, cov })
}

/// Uniformly random permutation of `0..k` by Fisher-Yates.
pub fn random_permutation(k: usize, stream: &mut RandomStream) -> Vec<usize> {
    let mut p: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = stream.index(i + 1);
        p.swap(i, j);
    }
    p
}

/// Lifts an element masker to tuples: draws a uniform permutation `sigma`
/// (substream 0) and returns `(B(x_sigma(0)), ..., B(x_sigma(k-1)))`, slot
/// `i` masked with substream `i + 1`.
pub fn lift_masker<E, O, F>(masker: F, items: &[E], stream: &mut RandomStream) -> Result<Vec<O>>
where
    F: Fn(&E, &mut RandomStream) -> Result<O>,
{
    let sigma = random_permutation(items.len(), &mut stream.substream(0));
    sigma
        .iter()
        .enumerate()
        .map(|(slot, &src)| masker(&items[src], &mut stream.substream(slot as u64 + 1)))
        .collect()
}

/// Masks a whole mixture: shuffle and mask each component, then renormalize.
pub fn mask_gmm<T: Real>(g: &Gmm<T>, cfg: &MaskConfig, stream: &mut RandomStream) -> Result<Gmm<T>> {
    let raw = lift_masker(|c, s| mask_component(c, cfg, s), g.components(), stream)?;
    Gmm::normalized(raw)
}
