//! Reference implementations used as oracles by the integration tests.
//! Written against plain slices so they share no code with the library.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(r: &mut ChaCha8Rng, m: usize, n: usize) -> Mat {
    (0..m)
        .map(|_| (0..n).map(|_| r.sample(StandardNormal)).collect())
        .collect()
}

pub fn gaussian_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

pub fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    r.random_range(lo..hi)
}

/// Uniform point in `B(center, radius)`.
pub fn in_ball(r: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let g = gaussian_vec(r, center.len());
    let n = norm(&g);
    let u: f64 = r.random();
    let s = radius * u.powf(1.0 / center.len() as f64) / n;
    center.iter().zip(&g).map(|(c, g)| c + s * g).collect()
}

pub fn transpose(a: &Mat) -> Mat {
    let (m, n) = (a.len(), a[0].len());
    (0..n).map(|j| (0..m).map(|i| a[i][j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (m, k, n) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; n]; m];
    for i in 0..m {
        for l in 0..k {
            let ail = a[i][l];
            for j in 0..n {
                c[i][j] += ail * b[l][j];
            }
        }
    }
    c
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, x)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| alpha * x + y).collect()
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
pub fn jacobi_eigenvalues(mut a: Mat) -> Vec<f64> {
    let n = a.len();
    let frob: f64 = a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += a[p][q] * a[p][q];
                }
            }
        }
        if off.sqrt() <= 1e-17 * frob {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
            }
        }
    }
    let mut d: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    d
}

/// Smallest eigenvalue of the Gram matrix `AᵀA` above `rel · λ_max`.
pub fn smallest_positive_gram_eigenvalue(a: &Mat, rel: f64) -> f64 {
    let gram = matmul(&transpose(a), a);
    let eig = jacobi_eigenvalues(gram);
    let top = *eig.last().unwrap();
    *eig.iter().find(|&&v| v > rel * top).unwrap()
}

/// `‖A‖` by power iteration on `AᵀA`.
pub fn power_norm(a: &Mat, seed: u64) -> f64 {
    let at = transpose(a);
    let mut v = gaussian_vec(&mut rng(seed), a[0].len());
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let w = matvec(&at, &matvec(a, &v));
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw / norm(&v);
        v = w.iter().map(|x| x / nw).collect();
        if (next - lambda).abs() <= 1e-15 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.sqrt()
}

/// `d(y, {x : ⟨a, x⟩ ≤ b})`.
pub fn halfspace_distance(a: &[f64], b: f64, y: &[f64]) -> f64 {
    ((dot(a, y) - b) / norm(a)).max(0.0)
}

fn solve_dense(mut m: Mat, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = m.len();
    for col in 0..n {
        let piv =
            (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

/// Projection onto `{x : ⟨aᵢ, x⟩ ≤ bᵢ}` by enumerating active sets: the
/// projection is the nearest feasible point among the projections onto the
/// affine hulls of all faces. Exponential, so only for a handful of
/// constraints.
pub fn polyhedron_projection(normals: &[Vec<f64>], offsets: &[f64], y: &[f64]) -> Vec<f64> {
    let k = normals.len();
    assert!(k <= 16, "active-set enumeration is exponential");
    let feasible = |x: &[f64]| {
        normals
            .iter()
            .zip(offsets)
            .all(|(a, b)| dot(a, x) - b <= 1e-9 * (1.0 + b.abs()) * norm(a))
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let x = if idx.is_empty() {
            y.to_vec()
        } else {
            let gram: Mat = idx
                .iter()
                .map(|&i| idx.iter().map(|&j| dot(&normals[i], &normals[j])).collect())
                .collect();
            let resid: Vec<f64> = idx
                .iter()
                .map(|&i| dot(&normals[i], y) - offsets[i])
                .collect();
            let Some(mu) = solve_dense(gram, resid) else {
                continue;
            };
            let mut x = y.to_vec();
            for (w, &i) in mu.iter().zip(&idx) {
                x = axpy(-w, &normals[i], &x);
            }
            x
        };
        if feasible(&x) {
            let d = norm(&sub(&x, y));
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, x));
            }
        }
    }
    best.expect("polyhedron is nonempty").1
}

pub fn polyhedron_distance(normals: &[Vec<f64>], offsets: &[f64], y: &[f64]) -> f64 {
    norm(&sub(&polyhedron_projection(normals, offsets, y), y))
}
