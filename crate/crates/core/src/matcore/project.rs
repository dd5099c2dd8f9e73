use super::eig::{eig_herm, Eigen};
use super::matrix::{hermitian_basis, ComplexMatrix, HermMatrix};
use crate::error::{Error, Result};

/// Residual above which a least-squares solution of the constraint system
/// counts as inconsistent.
pub const AFFINE_INCONSISTENCY_TOL: f64 = 1e-7;

/// Relative residual below which Gram–Schmidt drops a vector as dependent.
pub const GRAM_SCHMIDT_DROP: f64 = 1e-10;

/// Frobenius-nearest PSD matrix: `V Λ₊ V*`.
pub fn psd_project(a: &HermMatrix) -> Result<HermMatrix> {
    Ok(eig_herm(a)?.reconstruct_with(|l| l.max(0.0)))
}

/// PSD projection from an existing eigendecomposition.
pub fn psd_part(e: &Eigen) -> HermMatrix {
    e.reconstruct_with(|l| l.max(0.0))
}

/// Largest singular value.
pub fn op_norm(a: &ComplexMatrix) -> f64 {
    if a.rows() == 0 || a.cols() == 0 {
        return 0.0;
    }
    let gram = if a.rows() < a.cols() { a.matmul(&a.adjoint()) } else { a.adjoint().matmul(a) };
    let e = eig_herm(&HermMatrix::symmetrize(&gram)).expect("Jacobi converges on a Gram matrix");
    e.max().max(0.0).sqrt()
}

/// Moore–Penrose pseudo-inverse of a real symmetric matrix via its eigendecomposition.
fn pinv_sym(g: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = g.len();
    let h = HermMatrix::symmetrize(&ComplexMatrix::from_fn(n, n, |i, j| g[i][j].into()));
    let e = eig_herm(&h)?;
    let cutoff = 1e-12 * e.max().abs().max(1.0);
    let inv = e.reconstruct_with(|l| if l.abs() > cutoff { 1.0 / l } else { 0.0 });
    Ok((0..n).map(|i| (0..n).map(|j| inv.as_matrix()[(i, j)].re).collect()).collect())
}

/// Frobenius-nearest Hermitian `x` to `a` with `⟨C_t, x⟩ = b_t` for every
/// constraint, from the normal equations on the constraint Gram matrix.
pub fn affine_project(a: &HermMatrix, constraints: &[(HermMatrix, f64)]) -> Result<HermMatrix> {
    if constraints.is_empty() {
        return Ok(a.clone());
    }
    let k = constraints.len();
    let gram: Vec<Vec<f64>> =
        (0..k).map(|s| (0..k).map(|t| constraints[s].0.inner(&constraints[t].0)).collect()).collect();
    let rhs: Vec<f64> = constraints.iter().map(|(c, b)| c.inner(a) - b).collect();
    let pinv = pinv_sym(&gram)?;
    let y: Vec<f64> = (0..k).map(|s| (0..k).map(|t| pinv[s][t] * rhs[t]).sum()).collect();
    let resid = (0..k)
        .map(|s| {
            let gy: f64 = (0..k).map(|t| gram[s][t] * y[t]).sum();
            (gy - rhs[s]).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let scale = 1.0 + rhs.iter().map(|r| r * r).sum::<f64>().sqrt();
    if resid > AFFINE_INCONSISTENCY_TOL * scale {
        return Err(Error::InfeasibleAffine(resid));
    }
    let mut x = a.clone();
    for (t, (c, _)) in constraints.iter().enumerate() {
        x.axpy(-y[t], c);
    }
    Ok(x)
}

/// Orthonormalize in the Frobenius inner product (modified Gram–Schmidt),
/// dropping vectors whose residual falls below `GRAM_SCHMIDT_DROP` relative to
/// their original norm, or whose norm is negligible next to the largest input.
/// Returns the basis and the indices that were kept.
pub fn orthonormalize(vectors: &[HermMatrix]) -> (Vec<HermMatrix>, Vec<usize>) {
    orthonormalize_with(vectors, GRAM_SCHMIDT_DROP)
}

/// [`orthonormalize`] with an explicit relative drop threshold.
pub fn orthonormalize_with(vectors: &[HermMatrix], drop: f64) -> (Vec<HermMatrix>, Vec<usize>) {
    let mut basis: Vec<HermMatrix> = Vec::new();
    let mut kept = Vec::new();
    // a vector that is rounding noise next to the others must not be normalized up
    let largest = vectors.iter().map(HermMatrix::frob_norm).fold(0.0, f64::max);
    for (idx, v) in vectors.iter().enumerate() {
        let norm0 = v.frob_norm();
        if norm0 <= drop * largest {
            continue;
        }
        let mut w = v.clone();
        for q in &basis {
            let c = q.inner(&w);
            w.axpy(-c, q);
        }
        // second pass for stability
        for q in &basis {
            let c = q.inner(&w);
            w.axpy(-c, q);
        }
        let norm = w.frob_norm();
        if norm > drop * norm0 {
            basis.push(w.scale(1.0 / norm));
            kept.push(idx);
        }
    }
    (basis, kept)
}

#[derive(Clone, Debug)]
enum AffineKind {
    /// `basis` spans the normal space; the set is `{x : ⟨q, x - base⟩ = 0 ∀q}`.
    Normal,
    /// `basis` spans the directions; the set is `base + span(basis)`.
    Span,
}

/// An affine subspace of Hermitian matrices with a cached orthonormal basis,
/// for repeated projection inside iterative solvers.
#[derive(Clone, Debug)]
pub struct AffineSpace {
    dim: usize,
    base: HermMatrix,
    basis: Vec<HermMatrix>,
    kind: AffineKind,
}

impl AffineSpace {
    /// `{x : ⟨C_t, x⟩ = b_t}`.
    pub fn from_constraints(dim: usize, constraints: &[(HermMatrix, f64)]) -> Result<Self> {
        for (c, _) in constraints {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch(format!("constraint of dim {} in a dim-{dim} problem", c.dim())));
            }
        }
        let base = affine_project(&HermMatrix::zeros(dim), constraints)?;
        let mats: Vec<HermMatrix> = constraints.iter().map(|(c, _)| c.clone()).collect();
        let (basis, _) = orthonormalize(&mats);
        Ok(Self { dim, base, basis, kind: AffineKind::Normal })
    }

    /// `base + span(directions)`.
    pub fn from_span(base: HermMatrix, directions: &[HermMatrix]) -> Result<Self> {
        let dim = base.dim();
        if directions.iter().any(|d| d.dim() != dim) {
            return Err(Error::DimensionMismatch("direction dimension differs from base".into()));
        }
        let (basis, _) = orthonormalize(directions);
        Ok(Self { dim, base, basis, kind: AffineKind::Span })
    }

    /// The whole space of Hermitian matrices.
    pub fn everything(dim: usize) -> Self {
        Self { dim, base: HermMatrix::zeros(dim), basis: Vec::new(), kind: AffineKind::Normal }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> &HermMatrix {
        &self.base
    }

    pub fn translated(&self, shift: &HermMatrix) -> Self {
        let mut out = self.clone();
        out.base = out.base.add(shift);
        out
    }

    pub fn project(&self, x: &HermMatrix) -> HermMatrix {
        let diff = x.sub(&self.base);
        match self.kind {
            AffineKind::Normal => {
                let mut out = x.clone();
                for q in &self.basis {
                    out.axpy(-q.inner(&diff), q);
                }
                out
            }
            AffineKind::Span => {
                let mut out = self.base.clone();
                for q in &self.basis {
                    out.axpy(q.inner(&diff), q);
                }
                out
            }
        }
    }

    /// Orthonormal basis of the linear part (directions along the set).
    pub fn tangent_basis(&self) -> Vec<HermMatrix> {
        match self.kind {
            AffineKind::Span => self.basis.clone(),
            AffineKind::Normal => {
                let mut all = self.basis.clone();
                let normals = all.len();
                all.extend(hermitian_basis(self.dim));
                let (ortho, kept) = orthonormalize(&all);
                ortho.into_iter().zip(kept).filter(|(_, k)| *k >= normals).map(|(q, _)| q).collect()
            }
        }
    }

    pub fn distance(&self, x: &HermMatrix) -> f64 {
        self.project(x).sub(x).frob_norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, seeded};

    #[test]
    fn psd_fixed_point_and_clipping() {
        let p = HermMatrix::from_real_diag(&[2.0, 0.5]);
        assert!(psd_project(&p).unwrap().sub(&p).frob_norm() < 1e-12);
        let c = psd_project(&HermMatrix::from_real_diag(&[1.0, -1.0])).unwrap();
        assert!(c.sub(&HermMatrix::from_real_diag(&[1.0, 0.0])).frob_norm() < 1e-12);
    }

    /// Grid oracle at dim 2: every PSD 2x2 matrix is L L* with
    /// L = [[a, 0], [c + id, b]], a, b ≥ 0. Brute-force grid over (a, b, c, d)
    /// followed by pattern-search refinement.
    fn grid_nearest_psd_distance(x: &HermMatrix) -> f64 {
        let m = x.as_matrix();
        let (p, r, q) = (m[(0, 0)].re, m[(1, 1)].re, m[(0, 1)]);
        let eval = |a: f64, b: f64, c: f64, d: f64| {
            // L L* = [[a², a(c - id)], [a(c + id), c² + d² + b²]]
            let (y00, y11) = (a * a, c * c + d * d + b * b);
            let (y01_re, y01_im) = (a * c, -a * d);
            ((y00 - p).powi(2) + (y11 - r).powi(2) + 2.0 * ((y01_re - q.re).powi(2) + (y01_im - q.im).powi(2))).sqrt()
        };
        let span = 2.0 * (p.abs() + r.abs() + q.norm()).sqrt() + 1e-3;
        let steps = 24;
        let mut best = f64::INFINITY;
        let mut pt = [0.0; 4];
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=2 * steps {
                    for l in 0..=2 * steps {
                        let a = span * i as f64 / steps as f64;
                        let b = span * j as f64 / steps as f64;
                        let c = span * (k as f64 / steps as f64 - 1.0);
                        let d = span * (l as f64 / steps as f64 - 1.0);
                        let v = eval(a, b, c, d);
                        if v < best {
                            best = v;
                            pt = [a, b, c, d];
                        }
                    }
                }
            }
        }
        let mut h = span / steps as f64;
        while h > 1e-10 {
            let mut improved = false;
            for axis in 0..4 {
                for sign in [1.0, -1.0] {
                    let mut cand = pt;
                    cand[axis] += sign * h;
                    if cand[0] < 0.0 || cand[1] < 0.0 {
                        continue;
                    }
                    let v = eval(cand[0], cand[1], cand[2], cand[3]);
                    if v < best {
                        best = v;
                        pt = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
        best
    }

    #[test]
    fn psd_projection_matches_grid_oracle_at_dim_2() {
        let mut rng = seeded(21);
        for _ in 0..10 {
            let a = random_hermitian(&mut rng, 2);
            let proj = psd_project(&a).unwrap();
            let dist = proj.sub(&a).frob_norm();
            let oracle = grid_nearest_psd_distance(&a);
            assert!((dist - oracle).abs() < 1e-5, "eig {dist} vs grid {oracle}");
        }
    }

    #[test]
    fn affine_trace_shift() {
        let x = affine_project(&HermMatrix::from_real_diag(&[1.0, 0.0]), &[(HermMatrix::identity(2), 0.0)]).unwrap();
        assert!(x.sub(&HermMatrix::from_real_diag(&[0.5, -0.5])).frob_norm() < 1e-12);
    }

    #[test]
    fn affine_fixed_point() {
        let a = HermMatrix::from_real_diag(&[0.3, 0.7]);
        let x = affine_project(&a, &[(HermMatrix::identity(2), 1.0)]).unwrap();
        assert!(x.sub(&a).frob_norm() < 1e-12);
    }

    #[test]
    fn affine_inconsistent() {
        let c = HermMatrix::identity(2);
        let err = affine_project(&HermMatrix::zeros(2), &[(c.clone(), 1.0), (c, 2.0)]).unwrap_err();
        assert!(matches!(err, Error::InfeasibleAffine(_)));
    }

    /// Dense KKT oracle: stack [I  Cᵀ; C  0] [x; y] = [a; b] over real
    /// coordinates and solve by Gauss–Jordan elimination.
    fn kkt_oracle(a: &HermMatrix, constraints: &[(HermMatrix, f64)]) -> HermMatrix {
        let n = a.dim();
        let basis = hermitian_basis(n);
        let (ortho, _) = orthonormalize(&basis);
        let m = ortho.len();
        let k = constraints.len();
        let size = m + k;
        let mut sys = vec![vec![0.0; size + 1]; size];
        for i in 0..m {
            sys[i][i] = 1.0;
            sys[i][size] = ortho[i].inner(a);
        }
        for (t, (c, b)) in constraints.iter().enumerate() {
            for i in 0..m {
                let ci = ortho[i].inner(c);
                sys[i][m + t] = ci;
                sys[m + t][i] = ci;
            }
            sys[m + t][size] = *b;
        }
        for col in 0..size {
            let piv = (col..size).max_by(|&i, &j| sys[i][col].abs().total_cmp(&sys[j][col].abs())).unwrap();
            sys.swap(col, piv);
            let p = sys[col][col];
            for v in sys[col].iter_mut() {
                *v /= p;
            }
            for r in 0..size {
                if r != col {
                    let f = sys[r][col];
                    if f != 0.0 {
                        for c in 0..=size {
                            sys[r][c] -= f * sys[col][c];
                        }
                    }
                }
            }
        }
        let mut x = HermMatrix::zeros(n);
        for i in 0..m {
            x.axpy(sys[i][size], &ortho[i]);
        }
        x
    }

    #[test]
    fn affine_matches_kkt_oracle() {
        let mut rng = seeded(8);
        for n in 2..5 {
            let a = random_hermitian(&mut rng, n);
            let constraints: Vec<(HermMatrix, f64)> =
                (0..n).map(|_| (random_hermitian(&mut rng, n), rand::Rng::gen_range(&mut rng, -1.0..1.0))).collect();
            let x = affine_project(&a, &constraints).unwrap();
            let oracle = kkt_oracle(&a, &constraints);
            assert!(x.sub(&oracle).frob_norm() < 1e-9);
            for (c, b) in &constraints {
                assert!((c.inner(&x) - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
            let space = AffineSpace::from_constraints(n, &constraints).unwrap();
            assert!(space.project(&a).sub(&oracle).frob_norm() < 1e-9);
        }
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&ComplexMatrix::identity(3)) - 1.0).abs() < 1e-12);
        assert!((op_norm(&ComplexMatrix::from_real_diag(&[3.0, -4.0])) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn op_norm_matches_power_iteration() {
        let mut rng = seeded(2);
        for _ in 0..5 {
            let a = crate::random::ginibre(&mut rng, 4, 3);
            let ata = a.adjoint().matmul(&a);
            let mut v = ComplexMatrix::from_fn(3, 1, |i, _| (1.0 + i as f64).into());
            let mut lambda = 0.0;
            for _ in 0..2000 {
                let w = ata.matmul(&v);
                lambda = w.frob_norm() / v.frob_norm();
                v = w.scale_re(1.0 / w.frob_norm());
            }
            let sigma = lambda.sqrt();
            assert!((op_norm(&a) - sigma).abs() <= 1e-8 * sigma);
        }
    }

    #[test]
    fn span_affine_projection() {
        let base = HermMatrix::from_real_diag(&[1.0, -1.0]);
        let space = AffineSpace::from_span(base, &[HermMatrix::from_real_diag(&[1.0, -1.0])]).unwrap();
        let p = space.project(&HermMatrix::from_real_diag(&[0.0, 0.0]));
        assert!(p.frob_norm() < 1e-12);
    }
}
