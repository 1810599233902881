//! Seeded random generation of test points and matrices.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic sampler; every estimator records the seed it was built from.
#[derive(Debug, Clone)]
pub struct Sampler {
    seed: u64,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn gaussian_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.gaussian())
    }

    pub fn gaussian_matrix(&mut self, m: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |_, _| self.gaussian())
    }

    pub fn unit_vector(&mut self, n: usize) -> DVector<f64> {
        loop {
            let g = self.gaussian_vector(n);
            let norm = g.norm();
            if norm > 1e-12 {
                return g / norm;
            }
        }
    }

    /// Uniform point of the ball `B(center, radius)`: Gaussian direction,
    /// magnitude `radius · u^(1/dim)`.
    pub fn in_ball(&mut self, center: &DVector<f64>, radius: f64) -> DVector<f64> {
        let n = center.len();
        let dir = self.unit_vector(n);
        let u: f64 = self.rng.random();
        center + dir * (radius * u.powf(1.0 / n as f64))
    }

    /// Random orthogonal matrix from the QR factorization of a Gaussian
    /// matrix, with column signs fixed so the distribution is Haar.
    pub fn orthogonal(&mut self, n: usize) -> DMatrix<f64> {
        let g = self.gaussian_matrix(n, n);
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        q
    }

    /// `m × n` matrix `U · diag(values) · Vᵀ` with random orthogonal `U`, `V`.
    pub fn with_singular_values(&mut self, m: usize, n: usize, values: &[f64]) -> DMatrix<f64> {
        let u = self.orthogonal(m);
        let v = self.orthogonal(n);
        let mut s = DMatrix::zeros(m, n);
        for (i, &val) in values.iter().enumerate().take(m.min(n)) {
            s[(i, i)] = val;
        }
        u * s * v.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Sampler::new(9);
        let mut b = Sampler::new(9);
        assert_eq!(a.gaussian_vector(5), b.gaussian_vector(5));
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut s = Sampler::new(1);
        let c = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        for _ in 0..500 {
            assert!((s.in_ball(&c, 0.7) - &c).norm() <= 0.7 + 1e-15);
        }
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut s = Sampler::new(3);
        let q = s.orthogonal(6);
        let err = (q.transpose() * &q - DMatrix::<f64>::identity(6, 6)).norm();
        assert!(err < 1e-12);
    }
}
