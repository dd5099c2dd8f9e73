use super::matrix::{ComplexMatrix, HermMatrix, C64};
use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 100;

/// Eigendecomposition `a = V diag(values) V*` with values sorted descending.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigen {
    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// `V f(Λ) V*`
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> HermMatrix {
        self.reconstruct_with_index(|k| f(self.values[k]))
    }

    /// `V diag(f(0), …, f(n−1)) V*`, weights given by eigenvalue position.
    pub fn reconstruct_with_index(&self, f: impl Fn(usize) -> f64) -> HermMatrix {
        let n = self.values.len();
        let v = &self.vectors;
        let fl: Vec<f64> = (0..n).map(f).collect();
        let mut out = ComplexMatrix::zeros(n, n);
        for (k, &w) in fl.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * w;
                for j in i..n {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                out[(i, j)] = out[(j, i)].conj();
            }
        }
        HermMatrix::symmetrize(&out)
    }

    pub fn reconstruct(&self) -> HermMatrix {
        self.reconstruct_with(|l| l)
    }
}

/// Cyclic complex Jacobi on a Hermitian matrix.
pub fn eig_herm(a: &HermMatrix) -> Result<Eigen> {
    let n = a.dim();
    jacobi(a.as_matrix().clone(), ComplexMatrix::identity(n))
}

/// Jacobi started from the basis `guess` (columns orthonormal). Near-diagonal
/// `guess* a guess` converges in one or two sweeps, which matters inside
/// alternating-projection loops whose iterates move slowly.
pub fn eig_herm_warm(a: &HermMatrix, guess: &ComplexMatrix) -> Result<Eigen> {
    let rotated = a.congruence(guess).into_matrix();
    jacobi(rotated, guess.clone())
}

fn off_norm_sq(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s
}

fn jacobi(mut a: ComplexMatrix, mut v: ComplexMatrix) -> Result<Eigen> {
    let n = a.rows();
    let total = a.frob_norm();
    let target = (1e-15 * total).powi(2).max(f64::MIN_POSITIVE);

    let mut sweeps = 0;
    loop {
        let off = off_norm_sq(&a);
        if off <= target || n < 2 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps, off_norm: off.sqrt() });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    Ok(Eigen { values, vectors })
}

fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    if r <= 1e-300 {
        a[(p, q)] = C64::new(0.0, 0.0);
        a[(q, p)] = C64::new(0.0, 0.0);
        return;
    }
    let phase = apq / r;
    let tau = (aqq - app) / (2.0 * r);
    let t = if tau >= 0.0 { 1.0 / (tau + (1.0 + tau * tau).sqrt()) } else { -1.0 / (-tau + (1.0 + tau * tau).sqrt()) };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let n = a.rows();
    // G = [[c, s], [-s·conj(phase), c·conj(phase)]] on coordinates (p, q).
    let ph_c = phase.conj();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c - akq * (ph_c * s);
        a[(k, q)] = akp * s + akq * (ph_c * c);
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c - aqk * (phase * s);
        a[(q, k)] = apk * s + aqk * (phase * c);
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c - vkq * (ph_c * s);
        v[(k, q)] = vkp * s + vkq * (ph_c * c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, seeded};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_eigenvalues() {
        let e = eig_herm(&HermMatrix::identity(2)).unwrap();
        assert!(close(&e.values, &[1.0, 1.0], 1e-14));
    }

    #[test]
    fn diagonal_sorted_descending() {
        let e = eig_herm(&HermMatrix::from_real_diag(&[-1.0, 2.0])).unwrap();
        assert!(close(&e.values, &[2.0, -1.0], 1e-14));
    }

    #[test]
    fn pauli_x() {
        let mut x = ComplexMatrix::zeros(2, 2);
        x[(0, 1)] = C64::new(1.0, 0.0);
        x[(1, 0)] = C64::new(1.0, 0.0);
        let e = eig_herm(&HermMatrix::new(x).unwrap()).unwrap();
        assert!(close(&e.values, &[1.0, -1.0], 1e-14));
    }

    #[test]
    fn complex_offdiagonal() {
        // [[0, -i], [i, 0]] (Pauli-Y)
        let mut y = ComplexMatrix::zeros(2, 2);
        y[(0, 1)] = C64::new(0.0, -1.0);
        y[(1, 0)] = C64::new(0.0, 1.0);
        let h = HermMatrix::new(y).unwrap();
        let e = eig_herm(&h).unwrap();
        assert!(close(&e.values, &[1.0, -1.0], 1e-14));
        assert!(e.reconstruct().sub(&h).frob_norm() < 1e-14);
    }

    #[test]
    fn random_reconstruction_and_unitarity() {
        let mut rng = seeded(11);
        for d in 1..=16 {
            let a = random_hermitian(&mut rng, d);
            let e = eig_herm(&a).unwrap();
            let res = e.reconstruct().sub(&a).frob_norm();
            assert!(res <= 1e-8 * (1.0 + a.frob_norm()), "d={d} res={res}");
            let vv = e.vectors.adjoint().matmul(&e.vectors);
            assert!((&vv - &ComplexMatrix::identity(d)).max_abs() < 1e-8);
            let sum: f64 = e.values.iter().sum();
            assert!((sum - a.trace()).abs() < 1e-8 * d as f64);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn warm_start_matches_cold() {
        let mut rng = seeded(5);
        let a = random_hermitian(&mut rng, 8);
        let cold = eig_herm(&a).unwrap();
        let b = a.add(&random_hermitian(&mut rng, 8).scale(1e-3));
        let warm = eig_herm_warm(&b, &cold.vectors).unwrap();
        let fresh = eig_herm(&b).unwrap();
        assert!(close(&warm.values, &fresh.values, 1e-10));
        assert!(warm.reconstruct().sub(&b).frob_norm() < 1e-10);
    }
}
