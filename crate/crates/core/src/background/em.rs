use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::component::{GaussianComponent, GlobalMixture};
use crate::config::{CovarianceMode, RunConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::log_sum_exp_slice;

/// Result of [`fit_global_gmm`].
#[derive(Debug, Clone)]
pub struct EmFit<T> {
    pub mixture: GlobalMixture<T>,
    /// Mean per-sample objective after every E-step, starting with the
    /// initial parameters. With `lambda = 0` this is the plain training
    /// log-likelihood; otherwise each component density carries the ridge
    /// factor `exp(−ridge/2 · tr Σ⁻¹)`, which makes the ridge M-step an exact
    /// maximizer and the sequence non-decreasing.
    pub log_likelihood: Vec<T>,
    pub converged: bool,
    /// Absolute ridge `lambda · tr(S)/d` added to every covariance.
    pub ridge: T,
}

impl<T> EmFit<T> {
    /// Number of M-steps performed.
    pub fn iterations(&self) -> usize {
        self.log_likelihood.len().saturating_sub(1)
    }
}

/// Deterministic random subset of at most `max` rows (in original order).
/// `max == 0` keeps everything.
pub fn subsample_rows<T: Copy>(samples: &[T], dim: usize, max: usize, seed: u64) -> Vec<T> {
    let n = samples.len() / dim;
    if max == 0 || n <= max {
        return samples.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5u64.rotate_left(61));
    let mut idx = rand::seq::index::sample(&mut rng, n, max).into_vec();
    idx.sort_unstable();
    let mut out = Vec::with_capacity(max * dim);
    for i in idx {
        out.extend_from_slice(&samples[i * dim..(i + 1) * dim]);
    }
    out
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// k-means++ seeding. Sampling walks the cumulative D² mass and takes the
/// lowest index whose running sum exceeds the draw.
fn kmeans_pp<T: Real>(samples: &[T], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = samples.len() / dim;
    let row = |i: usize| &samples[i * dim..(i + 1) * dim];
    let first = rng.random_range(0..n);
    let mut centers = vec![first];
    let mut chosen = vec![false; n];
    chosen[first] = true;
    let mut d2: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| sq_dist(row(i), row(first)))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().map(|v| v.as_f64()).sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = None;
            let mut last_positive = 0;
            for (i, v) in d2.iter().enumerate() {
                let v = v.as_f64();
                if v > 0.0 {
                    last_positive = i;
                    cum += v;
                    if cum > r {
                        pick = Some(i);
                        break;
                    }
                }
            }
            pick.unwrap_or(last_positive)
        } else {
            // Fewer distinct points than centers: reuse the lowest unused rows.
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[next] = true;
        centers.push(next);
        let c = row(next).to_vec();
        d2.par_iter_mut().enumerate().for_each(|(i, v)| {
            let nd = sq_dist(row(i), &c);
            if nd < *v {
                *v = nd;
            }
        });
    }
    centers
}

/// Sufficient statistics of one E-step, centered on the current means.
struct Stats<T> {
    nk: Vec<T>,
    s1: Vec<T>,
    s2: Vec<T>,
    objective: T,
}

impl<T: Real> Stats<T> {
    fn zeros(k: usize, dim: usize, full: bool) -> Self {
        Stats {
            nk: vec![T::zero(); k],
            s1: vec![T::zero(); k * dim],
            s2: vec![T::zero(); if full { k * dim * dim } else { k * dim }],
            objective: T::zero(),
        }
    }

    fn add(&mut self, other: &Stats<T>) {
        for (a, &b) in self.nk.iter_mut().zip(&other.nk) {
            *a = *a + b;
        }
        for (a, &b) in self.s1.iter_mut().zip(&other.s1) {
            *a = *a + b;
        }
        for (a, &b) in self.s2.iter_mut().zip(&other.s2) {
            *a = *a + b;
        }
        self.objective = self.objective + other.objective;
    }
}

struct EmState<T> {
    components: Vec<GaussianComponent<T>>,
    weights: Vec<T>,
    /// `ln φ_k − ridge/2 · tr Σ_k⁻¹`, or `-∞` for dead components.
    log_prior: Vec<T>,
}

impl<T: Real> EmState<T> {
    fn new(components: Vec<GaussianComponent<T>>, weights: Vec<T>, ridge: T) -> Self {
        let log_prior = components
            .iter()
            .zip(&weights)
            .map(|(c, &w)| {
                if w > T::zero() {
                    w.ln() - T::lit(0.5) * ridge * c.inverse_trace()
                } else {
                    T::neg_infinity()
                }
            })
            .collect();
        EmState {
            components,
            weights,
            log_prior,
        }
    }
}

fn e_step<T: Real>(samples: &[T], dim: usize, state: &EmState<T>, full: bool) -> Stats<T> {
    let n = samples.len() / dim;
    let k = state.components.len();
    // Fixed chunking (a function of n only) keeps the reduction order, and
    // hence every bit of the result, independent of the thread count.
    let chunk_rows = n.div_ceil(32).max(1024);
    let partials: Vec<Stats<T>> = samples
        .par_chunks(chunk_rows * dim)
        .map(|chunk| {
            let mut st = Stats::zeros(k, dim, full);
            let mut lp = vec![T::neg_infinity(); k];
            let mut scratch = vec![T::zero(); dim];
            let mut diff = vec![T::zero(); dim];
            for x in chunk.chunks_exact(dim) {
                for (j, c) in state.components.iter().enumerate() {
                    lp[j] = if state.log_prior[j] == T::neg_infinity() {
                        T::neg_infinity()
                    } else {
                        state.log_prior[j]
                            + c.log_density_from_mahalanobis(c.mahalanobis_sq_with(x, &mut scratch))
                    };
                }
                let ll = log_sum_exp_slice(&lp);
                st.objective = st.objective + ll;
                for (j, c) in state.components.iter().enumerate() {
                    let g = (lp[j] - ll).exp();
                    if !(g > T::zero()) {
                        continue;
                    }
                    st.nk[j] = st.nk[j] + g;
                    let mu = c.mean();
                    for a in 0..dim {
                        diff[a] = x[a] - mu[a];
                        st.s1[j * dim + a] = st.s1[j * dim + a] + g * diff[a];
                    }
                    if full {
                        let base = j * dim * dim;
                        for a in 0..dim {
                            let ga = g * diff[a];
                            let row = &mut st.s2[base + a * dim..base + a * dim + a + 1];
                            for (b, v) in row.iter_mut().enumerate() {
                                *v = *v + ga * diff[b];
                            }
                        }
                    } else {
                        for a in 0..dim {
                            st.s2[j * dim + a] = st.s2[j * dim + a] + g * diff[a] * diff[a];
                        }
                    }
                }
            }
            st
        })
        .collect();
    let mut total = Stats::zeros(k, dim, full);
    for p in &partials {
        total.add(p);
    }
    total
}

fn m_step<T: Real>(
    state: &EmState<T>,
    stats: &Stats<T>,
    dim: usize,
    full: bool,
    ridge: T,
    iteration: usize,
) -> Result<EmState<T>> {
    let k = state.components.len();
    let mass = stats.nk.iter().fold(T::zero(), |a, &v| a + v);
    let mut components = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for j in 0..k {
        let nk = stats.nk[j];
        if !(nk > T::zero()) || !nk.is_finite() {
            components.push(state.components[j].clone());
            weights.push(T::zero());
            continue;
        }
        let old = state.components[j].mean();
        let delta: Vec<T> = (0..dim).map(|a| stats.s1[j * dim + a] / nk).collect();
        let mean: Vec<T> = old.iter().zip(&delta).map(|(&m, &d)| m + d).collect();
        let comp = if full {
            let base = j * dim * dim;
            let mut cov = vec![T::zero(); dim * dim];
            for a in 0..dim {
                for b in 0..=a {
                    let mut v = stats.s2[base + a * dim + b] / nk - delta[a] * delta[b];
                    if a == b {
                        v = v.max(T::zero()) + ridge;
                    }
                    cov[a * dim + b] = v;
                    cov[b * dim + a] = v;
                }
            }
            GaussianComponent::from_covariance(mean, &cov)
        } else {
            let var = (0..dim)
                .map(|a| (stats.s2[j * dim + a] / nk - delta[a] * delta[a]).max(T::zero()) + ridge)
                .collect();
            GaussianComponent::diagonal(mean, var)
        }
        .map_err(|e| Error::Numeric {
            iteration,
            reason: format!("component {j}: {e}"),
        })?;
        components.push(comp);
        weights.push(nk / mass);
    }
    Ok(EmState::new(components, weights, ridge))
}

/// Fits a `cfg.k_init`-component mixture to the `N × dim` row-major
/// `samples` by EM with k-means++ initialization seeded by `seed`.
///
/// Every M-step adds `cfg.lambda · tr(S)/d · I` to each covariance, where
/// `S` is the global sample covariance (unit scale when the data are
/// constant). Iteration stops when the mean objective improves by less than
/// `cfg.em_tol` or after `cfg.em_max_iters` M-steps.
pub fn fit_global_gmm<T: Real>(
    samples: &[T],
    dim: usize,
    cfg: &RunConfig,
    seed: u64,
) -> Result<EmFit<T>> {
    if dim == 0 || samples.len() % dim != 0 {
        return Err(Error::Shape(format!(
            "{} sample values do not form rows of dimension {dim}",
            samples.len()
        )));
    }
    let n = samples.len() / dim;
    let k = cfg.k_init;
    if k == 0 {
        return Err(Error::Config("k_init must be >= 1".into()));
    }
    if n < k {
        return Err(Error::InsufficientData { have: n, need: k });
    }
    if !(cfg.lambda >= 0.0) {
        return Err(Error::Config("lambda must be >= 0".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite training sample".into()));
    }
    let full = cfg.covariance_mode_for(dim) == CovarianceMode::Full;

    // Global mean and covariance, two-pass.
    let nt = T::from_usize_lossy(n);
    let mut gmean = vec![T::zero(); dim];
    for x in samples.chunks_exact(dim) {
        for a in 0..dim {
            gmean[a] = gmean[a] + x[a];
        }
    }
    gmean.iter_mut().for_each(|v| *v = *v / nt);
    let mut gcov = vec![T::zero(); if full { dim * dim } else { dim }];
    for x in samples.chunks_exact(dim) {
        for a in 0..dim {
            let da = x[a] - gmean[a];
            if full {
                for b in 0..=a {
                    gcov[a * dim + b] = gcov[a * dim + b] + da * (x[b] - gmean[b]);
                }
            } else {
                gcov[a] = gcov[a] + da * da;
            }
        }
    }
    gcov.iter_mut().for_each(|v| *v = *v / nt);
    let trace = (0..dim).fold(T::zero(), |acc, a| {
        acc + if full { gcov[a * dim + a] } else { gcov[a] }
    });
    let mean_var = trace / T::from_usize_lossy(dim);
    let scale = if mean_var > T::zero() { mean_var } else { T::one() };
    let ridge = T::lit(cfg.lambda) * scale;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(samples, dim, k, &mut rng);

    let init_component = |c: usize| -> Result<GaussianComponent<T>> {
        let mean = samples[c * dim..(c + 1) * dim].to_vec();
        if full {
            let mut cov = vec![T::zero(); dim * dim];
            for a in 0..dim {
                for b in 0..=a {
                    let mut v = gcov[a * dim + b];
                    if a == b {
                        v = v + ridge;
                    }
                    cov[a * dim + b] = v;
                    cov[b * dim + a] = v;
                }
            }
            GaussianComponent::from_covariance(mean, &cov)
        } else {
            GaussianComponent::diagonal(mean, gcov.iter().map(|&v| v + ridge).collect())
        }
        .map_err(|e| Error::Numeric {
            iteration: 0,
            reason: format!("initial covariance: {e}"),
        })
    };
    let components = centers
        .iter()
        .map(|&c| init_component(c))
        .collect::<Result<Vec<_>>>()?;
    let mut state = EmState::new(components, vec![T::one() / T::from_usize_lossy(k); k], ridge);

    let mut trace_ll = Vec::new();
    let mut converged = false;
    let mut iteration = 0usize;
    loop {
        let stats = e_step(samples, dim, &state, full);
        let ll = stats.objective / nt;
        if !ll.is_finite() {
            return Err(Error::Numeric {
                iteration,
                reason: format!("log-likelihood is {ll}"),
            });
        }
        let improved_little = trace_ll
            .last()
            .is_some_and(|&prev: &T| ll - prev < T::lit(cfg.em_tol));
        trace_ll.push(ll);
        if improved_little {
            converged = true;
            break;
        }
        if iteration >= cfg.em_max_iters {
            break;
        }
        iteration += 1;
        state = m_step(&state, &stats, dim, full, ridge, iteration)?;
    }

    let mass = state.weights.iter().fold(T::zero(), |a, &w| a + w);
    let weights = state.weights.iter().map(|&w| w / mass).collect();
    Ok(EmFit {
        mixture: GlobalMixture::new(state.components, weights)?,
        log_likelihood: trace_ll,
        converged,
        ridge,
    })
}
