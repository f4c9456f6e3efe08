use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Linear projection `y = Bᵀ (x − m)` onto the leading principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    mean: Vec<T>,
    /// `d_in × d_out`, row-major.
    basis: Vec<T>,
    out_dim: usize,
}

impl<T: Real> Projection<T> {
    pub fn new(mean: Vec<T>, basis: Vec<T>, out_dim: usize) -> Result<Self> {
        if out_dim == 0 || mean.is_empty() || basis.len() != mean.len() * out_dim {
            return Err(Error::Shape(format!(
                "projection basis of {} entries for {} -> {out_dim}",
                basis.len(),
                mean.len()
            )));
        }
        Ok(Projection {
            mean,
            basis,
            out_dim,
        })
    }

    /// Principal axes of the `N × d_in` rows in `samples`. Eigenvectors are
    /// sign-normalized so their largest-magnitude entry is positive.
    pub fn fit(samples: &[f32], in_dim: usize, out_dim: usize) -> Result<Self> {
        if out_dim == 0 || out_dim > in_dim {
            return Err(Error::Config(format!(
                "cannot project {in_dim} dimensions onto {out_dim}"
            )));
        }
        let n = samples.len() / in_dim;
        if n < 2 {
            return Err(Error::InsufficientData { have: n, need: 2 });
        }
        let mut mean = vec![0.0f64; in_dim];
        for row in samples.chunks_exact(in_dim) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = DMatrix::<f64>::zeros(in_dim, in_dim);
        let mut centered = vec![0.0f64; in_dim];
        for row in samples.chunks_exact(in_dim) {
            for a in 0..in_dim {
                centered[a] = row[a] as f64 - mean[a];
            }
            for a in 0..in_dim {
                for b in 0..=a {
                    cov[(a, b)] += centered[a] * centered[b];
                }
            }
        }
        for a in 0..in_dim {
            for b in 0..a {
                cov[(b, a)] = cov[(a, b)];
            }
        }
        cov /= (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..in_dim).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .partial_cmp(&eig.eigenvalues[i])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        let mut basis = vec![T::zero(); in_dim * out_dim];
        for (k, &col) in order.iter().take(out_dim).enumerate() {
            let v = eig.eigenvectors.column(col);
            let pivot = v
                .iter()
                .fold(0.0f64, |best, &x| if x.abs() > best.abs() { x } else { best });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            for a in 0..in_dim {
                basis[a * out_dim + k] = T::lit(sign * v[a]);
            }
        }
        Projection::new(mean.into_iter().map(T::lit).collect(), basis, out_dim)
    }

    pub fn in_dim(&self) -> usize {
        self.mean.len()
    }
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }
    pub fn mean(&self) -> &[T] {
        &self.mean
    }
    pub fn basis(&self) -> &[T] {
        &self.basis
    }

    pub fn apply_into(&self, x: &[f32], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        for (a, (&xa, &ma)) in x.iter().zip(&self.mean).enumerate() {
            let c = T::lit(xa as f64) - ma;
            let row = &self.basis[a * self.out_dim..(a + 1) * self.out_dim];
            for (o, &b) in out.iter_mut().zip(row) {
                *o = *o + c * b;
            }
        }
    }

    pub fn apply(&self, x: &[f32]) -> Vec<T> {
        let mut out = vec![T::zero(); self.out_dim];
        self.apply_into(x, &mut out);
        out
    }
}
