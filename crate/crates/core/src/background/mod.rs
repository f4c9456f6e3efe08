//! Global-to-local Gaussian mixture background model.
//!
//! A mixture is first fitted on all training feature vectors regardless of
//! position ([`fit_global_gmm`]), weak components are dropped
//! ([`prune_components`]), and the surviving Gaussians are then given a
//! position-dependent weight field ([`localize`]). Means and covariances are
//! shared by every position; only the weights vary.

mod component;
mod em;
mod localize;
mod median;
mod pca;

pub use component::{cholesky, Covariance, GaussianComponent, GlobalMixture};
pub use em::{fit_global_gmm, subsample_rows, EmFit};
pub use localize::{localize, localize_with_projection, LocalizedMixtureModel};
pub use median::temporal_median_features;
pub use pca::Projection;

/// Removes components whose weight is below `w_min` and renormalizes.
///
/// The heaviest component (lowest index on ties) always survives, so the
/// result is never empty. Surviving components keep their relative order.
pub fn prune_components<T: crate::Real>(mix: &GlobalMixture<T>, w_min: f64) -> GlobalMixture<T> {
    let w_min = T::lit(w_min);
    let weights = mix.weights();
    let argmax = weights
        .iter()
        .enumerate()
        .fold(0, |best, (i, &w)| if w > weights[best] { i } else { best });
    let keep: Vec<usize> = (0..weights.len())
        .filter(|&i| i == argmax || weights[i] >= w_min)
        .collect();
    let total = keep.iter().fold(T::zero(), |acc, &i| acc + weights[i]);
    let components = keep.iter().map(|&i| mix.components()[i].clone()).collect();
    let new_weights = if total > T::zero() {
        keep.iter().map(|&i| weights[i] / total).collect()
    } else {
        vec![T::one() / T::from_usize_lossy(keep.len()); keep.len()]
    };
    GlobalMixture::new_unchecked(components, new_weights)
}
