//! Linear maps from operator systems into matrix algebras: Choi matrices,
//! amplification, norm bounds and the nearest u.c.p. map.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{nearest_psd_in, Certificate, ConicConfig, Verdict};
use crate::error::{Error, Result};
use crate::matcore::{eig_herm, hermitian_basis, op_norm, AffineSpace, ComplexMatrix, HermMatrix, MatrixJson, C64, ONE};
use crate::opsys::{amplified_system, cone_member_with, dual_system, full_algebra, OperatorSystem, Regime, SystemElement};
use crate::random::{gaussian_c64, haar_isometry, random_hermitian};

/// A linear map `S → M_d`, stored by the images of the basis of `S`.
#[derive(Clone, Debug)]
pub struct CpMap {
    domain: Arc<OperatorSystem>,
    codomain_dim: usize,
    images: Vec<ComplexMatrix>,
}

pub fn map_from_images(domain: Arc<OperatorSystem>, codomain_dim: usize, images: Vec<ComplexMatrix>) -> Result<CpMap> {
    if images.len() != domain.dim() {
        return Err(Error::DimensionMismatch(format!("{} images for a {}-dimensional domain", images.len(), domain.dim())));
    }
    if images.iter().any(|m| m.rows() != codomain_dim || m.cols() != codomain_dim) {
        return Err(Error::DimensionMismatch(format!("images must be {codomain_dim}×{codomain_dim}")));
    }
    if images.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(CpMap { domain, codomain_dim, images })
}

impl CpMap {
    pub fn domain(&self) -> &Arc<OperatorSystem> {
        &self.domain
    }

    pub fn codomain_dim(&self) -> usize {
        self.codomain_dim
    }

    pub fn images(&self) -> &[ComplexMatrix] {
        &self.images
    }

    /// Map given on matrix units of `M_n`: `e_ij ↦ f(i, j)`.
    pub fn from_matrix_units(n: usize, d: usize, f: impl Fn(usize, usize) -> ComplexMatrix) -> Result<Self> {
        let units: Vec<Vec<ComplexMatrix>> = (0..n).map(|i| (0..n).map(|j| f(i, j)).collect()).collect();
        let images = hermitian_basis(n)
            .iter()
            .map(|b| {
                let mut out = ComplexMatrix::zeros(d, d);
                for i in 0..n {
                    for j in 0..n {
                        let c = b.as_matrix()[(i, j)];
                        if c != C64::new(0.0, 0.0) {
                            out.axpy(c, &units[i][j]);
                        }
                    }
                }
                out
            })
            .collect();
        map_from_images(Arc::new(full_algebra(n)?), d, images)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_matrix_units(n, n, |i, j| ComplexMatrix::unit(n, i, j))
    }

    pub fn transpose(n: usize) -> Result<Self> {
        Self::from_matrix_units(n, n, |i, j| ComplexMatrix::unit(n, j, i))
    }

    /// Image of an ambient matrix of the domain (any lift, for quotients).
    pub fn apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        let coords = self.domain.coords_of(x)?;
        Ok(self.apply_coords(&coords))
    }

    fn apply_coords(&self, coords: &[C64]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.codomain_dim, self.codomain_dim);
        for (c, img) in coords.iter().zip(&self.images) {
            out.axpy(*c, img);
        }
        out
    }

    /// `(id_k ⊗ φ)(x)` for `x ∈ M_k ⊗ M_m`.
    pub fn apply_level(&self, x: &ComplexMatrix, k: usize) -> Result<ComplexMatrix> {
        let m = self.domain.ambient_dim();
        if x.rows() != k * m || !x.is_square() {
            return Err(Error::DimensionMismatch(format!("level-{k} input must be {0}×{0}", k * m)));
        }
        let mut blocks = Vec::with_capacity(k * k);
        for a in 0..k {
            for b in 0..k {
                blocks.push(self.apply(&x.block(a, b, m))?);
            }
        }
        Ok(ComplexMatrix::from_blocks(k, |a, b| blocks[a * k + b].clone()))
    }

    /// `(id_k ⊗ φ)` on a level-`k` element given by coordinates.
    pub fn apply_element(&self, x: &SystemElement) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(x.level * self.codomain_dim, x.level * self.codomain_dim);
        for (c, img) in x.coords.iter().zip(&self.images) {
            out.axpy(ONE, &c.kron(img));
        }
        out
    }

    /// `φ(1)`.
    pub fn unit_image(&self) -> ComplexMatrix {
        let u: Vec<C64> = self.domain.unit_coords().iter().map(|&c| c.into()).collect();
        self.apply_coords(&u)
    }

    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        self.images.iter().all(|m| m.hermiticity_residual() <= tol)
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        let same_domain = Arc::ptr_eq(&self.domain, &other.domain)
            || (self.domain.dim() == other.domain.dim()
                && self.domain.basis().iter().zip(other.domain.basis()).all(|(a, b)| a.sub(b).frob_norm() < 1e-12));
        if !same_domain || self.codomain_dim != other.codomain_dim {
            return Err(Error::DimensionMismatch("maps have different domains or codomains".into()));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let images = self.images.iter().zip(&other.images).map(|(a, b)| a - b).collect();
        Ok(Self { domain: self.domain.clone(), codomain_dim: self.codomain_dim, images })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let images = self.images.iter().zip(&other.images).map(|(a, b)| a + b).collect();
        Ok(Self { domain: self.domain.clone(), codomain_dim: self.codomain_dim, images })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { domain: self.domain.clone(), codomain_dim: self.codomain_dim, images: self.images.iter().map(|m| m.scale_re(s)).collect() }
    }

    /// The same map precomposed with the quotient map `M_m → M_m/J` (a map on
    /// the full ambient algebra). Full-algebra maps are returned unchanged.
    pub fn lifted(&self) -> Result<Self> {
        match self.domain.regime() {
            Regime::Concrete if self.domain.is_full_algebra() => Ok(self.clone()),
            Regime::Quotient(_) => {
                let m = self.domain.ambient_dim();
                let units: Vec<ComplexMatrix> =
                    (0..m * m).map(|r| self.apply(&ComplexMatrix::unit(m, r / m, r % m))).collect::<Result<_>>()?;
                Self::from_matrix_units(m, self.codomain_dim, |i, j| units[i * m + j].clone())
            }
            _ => Err(Error::Unsupported("lifting a map whose domain is not a quotient or full algebra".into())),
        }
    }

    /// `φ(e_ij)` for a full-algebra domain.
    pub fn on_matrix_unit(&self, i: usize, j: usize) -> Result<ComplexMatrix> {
        self.require_full()?;
        self.apply(&ComplexMatrix::unit(self.domain.ambient_dim(), i, j))
    }

    fn require_full(&self) -> Result<()> {
        if self.domain.is_full_algebra() {
            Ok(())
        } else {
            Err(Error::InvalidArgument("operation needs a full matrix algebra domain".into()))
        }
    }
}

/// `Σ_ij e_ij ⊗ φ(e_ij) ∈ M_n ⊗ M_d`, possibly non-Hermitian.
pub fn choi_matrix(f: &CpMap) -> Result<ComplexMatrix> {
    f.require_full()?;
    let n = f.domain.ambient_dim();
    let mut blocks = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            blocks.push(f.on_matrix_unit(i, j)?);
        }
    }
    Ok(ComplexMatrix::from_blocks(n, |i, j| blocks[i * n + j].clone()))
}

/// Choi matrix of a self-adjoint map on a full matrix algebra.
pub fn choi_of(f: &CpMap) -> Result<HermMatrix> {
    HermMatrix::new(choi_matrix(f)?)
}

/// The map `M_n → M_d` whose Choi matrix is `c`.
pub fn map_from_choi(n: usize, d: usize, c: &ComplexMatrix) -> Result<CpMap> {
    if c.rows() != n * d || !c.is_square() {
        return Err(Error::DimensionMismatch(format!("Choi matrix of a map M_{n} → M_{d} is {0}×{0}", n * d)));
    }
    CpMap::from_matrix_units(n, d, |i, j| c.block(i, j, d))
}

/// `φ_k = id_{M_k} ⊗ φ` as a map on `M_k(S)`.
pub fn amplify(f: &CpMap, k: usize) -> Result<CpMap> {
    if k == 0 {
        return Err(Error::InvalidArgument("amplification level must be at least 1".into()));
    }
    let domain = Arc::new(amplified_system(k, &f.domain)?);
    let images = hermitian_basis(k).iter().flat_map(|h| f.images.iter().map(move |img| h.as_matrix().kron(img))).collect();
    map_from_images(domain, k * f.codomain_dim, images)
}

/// Unitality `‖φ(1) − 1‖ ≤ tol` together with complete positivity.
///
/// Complete positivity is positivity of the map's data as an element of
/// `M_d(S*)`; on full algebras and quotients that is Choi positivity, on other
/// subsystems it is the existence of a CP extension to the ambient algebra.
/// `residual_affine` carries the unitality defect.
pub fn is_ucp(f: &CpMap, tol: f64) -> Result<Certificate> {
    is_ucp_with(f, tol, &ConicConfig::default())
}

pub fn is_ucp_with(f: &CpMap, tol: f64, cfg: &ConicConfig) -> Result<Certificate> {
    let unital_defect = op_norm(&(&f.unit_image() - &ComplexMatrix::identity(f.codomain_dim)));
    let dual = Arc::new(dual_system(&f.domain)?);
    let element = SystemElement::new(dual, f.codomain_dim, f.images.clone())?;
    let mut cert = cone_member_with(&element, tol, cfg)?;
    cert.residual_affine = unital_defect;
    if unital_defect > tol {
        cert.verdict = Verdict::Infeasible;
    }
    Ok(cert)
}

/// Certified lower bound on `‖φ_k‖`: the best ratio `‖φ_k(x)‖ / ‖x‖` seen
/// over `trials` random starts. Each start takes 200 ascent steps with step
/// halving on the smooth surrogate `‖φ_k(x)‖_p / ‖x‖_p` (Schatten norms, `p`
/// raised from 4 to 256), since the operator-norm ratio itself is flat or
/// nonsmooth where top singular values coincide. Quotient-domain maps are
/// bounded through their lift, which can only decrease the norm.
pub fn knorm_lower(f: &CpMap, k: usize, trials: usize, rng: &mut impl Rng) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("level must be at least 1".into()));
    }
    let f = match f.domain.regime() {
        Regime::Quotient(_) => f.lifted()?,
        _ => f.clone(),
    };
    let basis: Vec<&ComplexMatrix> = f.domain.basis().iter().map(|b| b.as_matrix()).collect();
    let images: Vec<&ComplexMatrix> = f.images.iter().collect();
    let dim = basis.len();
    // returns (true ratio, surrogate log-ratio, its gradient)
    let objective = |coords: &[ComplexMatrix], p: f64| -> Result<(f64, f64, Vec<ComplexMatrix>)> {
        let x = level_sum(coords, &basis);
        let y = level_sum(coords, &images);
        let sx = Schatten::of(&x, p)?;
        let sy = Schatten::of(&y, p)?;
        if sx.op == 0.0 || sy.op == 0.0 {
            return Ok((0.0, f64::NEG_INFINITY, vec![ComplexMatrix::zeros(k, k); dim]));
        }
        let grad = (0..dim)
            .map(|t| {
                let gy = block_pairing(&sy.grad, images[t], k);
                let gx = block_pairing(&sx.grad, basis[t], k);
                &gy - &gx
            })
            .collect();
        Ok((sy.op / sx.op, sy.norm.ln() - sx.norm.ln(), grad))
    };

    let mut best: f64 = 0.0;
    for _ in 0..trials.max(1) {
        let mut coords: Vec<ComplexMatrix> =
            (0..dim).map(|_| ComplexMatrix::from_fn(k, k, |_, _| gaussian_c64(rng))).collect();
        for p in [4.0, 16.0, 64.0, 256.0] {
            let (ratio, mut value, mut grad) = objective(&coords, p)?;
            best = best.max(ratio);
            let mut step = 0.25;
            for _ in 0..50 {
                let gnorm = grad.iter().map(|g| g.frob_norm().powi(2)).sum::<f64>().sqrt();
                let pnorm = coords.iter().map(|c| c.frob_norm().powi(2)).sum::<f64>().sqrt();
                if gnorm == 0.0 || step < 1e-12 {
                    break;
                }
                let trial: Vec<ComplexMatrix> = coords
                    .iter()
                    .zip(&grad)
                    .map(|(c, g)| {
                        let mut out = c.clone();
                        out.axpy(C64::new(step * pnorm / gnorm, 0.0), g);
                        out
                    })
                    .collect();
                let (r, v, g) = objective(&trial, p)?;
                best = best.max(r);
                if v > value {
                    coords = trial;
                    value = v;
                    grad = g;
                    step *= 1.5;
                } else {
                    step *= 0.5;
                }
            }
        }
    }
    Ok(best)
}

fn level_sum(coords: &[ComplexMatrix], mats: &[&ComplexMatrix]) -> ComplexMatrix {
    let (k, m) = (coords[0].rows(), mats[0].rows());
    let mut out = ComplexMatrix::zeros(k * m, k * m);
    for (c, b) in coords.iter().zip(mats) {
        out.axpy(ONE, &c.kron(b));
    }
    out
}

/// Operator norm, Schatten-p norm and `∂ log‖a‖_p / ∂ conj(a)` (as a matrix).
struct Schatten {
    op: f64,
    norm: f64,
    grad: ComplexMatrix,
}

impl Schatten {
    fn of(a: &ComplexMatrix, p: f64) -> Result<Self> {
        let e = eig_herm(&HermMatrix::symmetrize(&a.adjoint().matmul(a)))?;
        let op = e.max().max(0.0).sqrt();
        if op == 0.0 {
            return Ok(Self { op, norm: 0.0, grad: ComplexMatrix::zeros(a.rows(), a.cols()) });
        }
        // r_i = s_i / s_max keeps the powers in range
        let r: Vec<f64> = e.values.iter().map(|l| (l.max(0.0).sqrt() / op).min(1.0)).collect();
        let sum: f64 = r.iter().map(|x| x.powf(p)).sum();
        let norm = op * sum.powf(1.0 / p);
        // d log‖a‖_p = Re tr(G* da) with G = a V diag(r^{p-2}) V* / (s_max² Σ r^p)
        let weights = e.reconstruct_with_index(|i| r[i].powf(p - 2.0) / (op * op * sum));
        Ok(Self { op, norm, grad: a.matmul(weights.as_matrix()) })
    }
}

/// `G[a, b] = Σ_ij conj(P_ab[i, j]) M[i, j]`, so that
/// `Re tr(P* (E ⊗ M)) = Re Σ_ab E_ab G[a, b]`; the ascent direction in `E`
/// is therefore `conj(G)`, returned directly.
fn block_pairing(pm: &ComplexMatrix, m: &ComplexMatrix, k: usize) -> ComplexMatrix {
    let (r, c) = (m.rows(), m.cols());
    ComplexMatrix::from_fn(k, k, |a, b| {
        let mut s = C64::new(0.0, 0.0);
        for i in 0..r {
            for j in 0..c {
                s += pm[(a * r + i, b * c + j)].conj() * m[(i, j)];
            }
        }
        s.conj()
    })
}

/// `Σ_ij ‖φ(e_ij)‖ ≥ ‖φ‖_cb` (every block of a contraction is a contraction).
pub fn cb_upper(f: &CpMap) -> Result<f64> {
    f.require_full()?;
    let n = f.domain.ambient_dim();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += op_norm(&f.on_matrix_unit(i, j)?);
        }
    }
    Ok(total)
}

/// Two-sided information about a map-norm distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBounds {
    /// Sampled ascent value: a certified lower bound on the level-1 norm.
    pub lower: f64,
    /// `cb_upper` of the difference (full-algebra domains only).
    pub upper: Option<f64>,
}

pub fn dist1(f: &CpMap, g: &CpMap, trials: usize, rng: &mut impl Rng) -> Result<DistanceBounds> {
    let h = f.sub(g)?;
    let lower = knorm_lower(&h, 1, trials, rng)?;
    let upper = if h.domain.is_full_algebra() { Some(cb_upper(&h)?) } else { None };
    Ok(DistanceBounds { lower, upper })
}

/// Result of [`nearest_ucp`].
#[derive(Clone, Debug)]
pub struct NearestUcp {
    pub map: CpMap,
    /// Frobenius distance between the Choi matrices.
    pub choi_distance: f64,
    /// `cb_upper(result − input)`.
    pub dist_upper: f64,
    pub certificate: Certificate,
}

/// Frobenius-nearest u.c.p. map in Choi geometry: Dykstra over
/// `{C ⪰ 0, Σ_i C_ii = I_d}` from the (Hermitian part of the) input Choi
/// matrix, then an exact repair by mixing with the completely depolarizing
/// map `x ↦ tr(x)/n · I`, whose Choi matrix is `I/n`.
pub fn nearest_ucp(f: &CpMap, cfg: &ConicConfig) -> Result<NearestUcp> {
    f.require_full()?;
    let (n, d) = (f.domain.ambient_dim(), f.codomain_dim);
    let c0 = HermMatrix::symmetrize(&choi_matrix(f)?);
    let cons: Vec<(HermMatrix, f64)> =
        hermitian_basis(d).into_iter().map(|e| (HermMatrix::identity(n).kron(&e), e.trace())).collect();
    let space = AffineSpace::from_constraints(n * d, &cons)?;
    let mut cert = nearest_psd_in(&space, &c0, cfg)?;
    let mut c = cert.witness.clone().ok_or_else(|| Error::InvalidArgument("no witness".into()))?;
    let lmin = eig_herm(&c)?.min();
    if lmin < 0.0 {
        let r = -lmin;
        let s = r / (r + 1.0 / n as f64);
        c = c.scale(1.0 - s).add(&HermMatrix::identity(n * d).scale(s / n as f64));
    }
    cert.residual_psd = (-eig_herm(&c)?.min()).max(0.0);
    cert.witness = Some(c.clone());
    if cert.verdict == Verdict::Indeterminate && cert.residual_psd == 0.0 {
        // the repaired point is exactly u.c.p. even if Dykstra did not settle
        cert.verdict = Verdict::Indeterminate;
    }
    let choi_distance = c.sub(&c0).frob_norm();
    let map = map_from_choi(n, d, c.as_matrix())?;
    let dist_upper = cb_upper(&map.sub(f)?)?;
    Ok(NearestUcp { map, choi_distance, dist_upper, certificate: cert })
}

/// A self-adjoint map `Δ: S → M_d` with `Δ(1) = 0` and `cb_upper(Δ) = eps`
/// (of its lift, for quotients): GUE images on the non-unit basis elements.
pub fn unital_perturbation(domain: &Arc<OperatorSystem>, d: usize, eps: f64, rng: &mut impl Rng) -> Result<CpMap> {
    let unit = domain.unit_coords();
    if matches!(domain.regime(), Regime::Dual(_)) || unit[0] != 1.0 || unit[1..].iter().any(|&c| c != 0.0) {
        return Err(Error::Unsupported("perturbations need a system whose first basis element is the unit".into()));
    }
    let mut images: Vec<ComplexMatrix> = (0..domain.dim()).map(|_| random_hermitian(rng, d).into_matrix()).collect();
    images[0] = ComplexMatrix::zeros(d, d);
    let raw = map_from_images(domain.clone(), d, images)?;
    let size = match domain.regime() {
        Regime::Quotient(_) => cb_upper(&raw.lifted()?)?,
        _ if domain.is_full_algebra() => cb_upper(&raw)?,
        _ => return Err(Error::Unsupported("perturbations of proper concrete subsystems".into())),
    };
    Ok(if size > 0.0 { raw.scale(eps / size) } else { raw })
}

/// Random u.c.p. map `x ↦ V*(x ⊗ I_r)V` with a Haar isometry `V: C^d → C^n ⊗ C^r`.
pub fn random_ucp(n: usize, d: usize, r: usize, rng: &mut impl Rng) -> Result<CpMap> {
    if n * r < d {
        return Err(Error::InvalidArgument(format!("Stinespring space {n}·{r} smaller than codomain {d}")));
    }
    let v = haar_isometry(rng, n * r, d);
    let id_r = ComplexMatrix::identity(r);
    CpMap::from_matrix_units(n, d, |i, j| {
        let e = ComplexMatrix::unit(n, i, j).kron(&id_r);
        v.adjoint().matmul(&e).matmul(&v)
    })
}

/// Wire format: `{"domain_dim": n, "codomain_dim": d, "choi": matrix}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MapJson {
    pub domain_dim: usize,
    pub codomain_dim: usize,
    pub choi: MatrixJson,
}

impl TryFrom<&CpMap> for MapJson {
    type Error = Error;
    fn try_from(f: &CpMap) -> Result<Self> {
        Ok(Self { domain_dim: f.domain.ambient_dim(), codomain_dim: f.codomain_dim, choi: MatrixJson::from(&choi_matrix(f)?) })
    }
}

impl TryFrom<&MapJson> for CpMap {
    type Error = Error;
    fn try_from(j: &MapJson) -> Result<Self> {
        map_from_choi(j.domain_dim, j.codomain_dim, &ComplexMatrix::try_from(&j.choi)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{ginibre, seeded};

    fn random_map(rng: &mut impl Rng, n: usize, d: usize) -> CpMap {
        let c = ginibre(rng, n * d, n * d);
        map_from_choi(n, d, &c).unwrap()
    }

    #[test]
    fn identity_and_transpose_choi() {
        let c = choi_of(&CpMap::identity(2).unwrap()).unwrap();
        let e = eig_herm(&c).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-12 && e.values[1..].iter().all(|l| l.abs() < 1e-12));
        assert!((c.trace() - 2.0).abs() < 1e-12);

        let t = choi_of(&CpMap::transpose(2).unwrap()).unwrap();
        let e = eig_herm(&t).unwrap();
        let want = [1.0, 1.0, 1.0, -1.0];
        assert!(e.values.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn choi_roundtrip_is_exact() {
        let mut rng = seeded(1);
        for (n, d) in [(1, 3), (2, 2), (3, 2), (4, 4)] {
            let f = random_map(&mut rng, n, d);
            let c = choi_matrix(&f).unwrap();
            let back = choi_matrix(&map_from_choi(n, d, &c).unwrap()).unwrap();
            assert!((&back - &c).max_abs() < 1e-12);
        }
    }

    #[test]
    fn amplification_composes() {
        let mut rng = seeded(2);
        let f = random_ucp(2, 2, 2, &mut rng).unwrap();
        let x = ginibre(&mut rng, 12, 12);
        let direct = amplify(&f, 6).unwrap().apply(&x).unwrap();
        // (φ_2) applied blockwise on M_3(M_4) = M_12
        let nested = amplify(&f, 2).unwrap().apply_level(&x, 3);
        assert!((&direct - &nested.unwrap()).max_abs() < 1e-10);
        let id = amplify(&CpMap::identity(2).unwrap(), 2).unwrap();
        let y = ginibre(&mut rng, 4, 4);
        assert!((&id.apply(&y).unwrap() - &y).max_abs() < 1e-12);
        assert!(eig_herm(&choi_of(&amplify(&f, 2).unwrap()).unwrap()).unwrap().min() > -1e-10);
    }

    #[test]
    fn ucp_checks() {
        let mut rng = seeded(3);
        assert!(is_ucp(&CpMap::identity(3).unwrap(), 1e-9).unwrap().is_feasible());
        let t = is_ucp(&CpMap::transpose(2).unwrap(), 1e-9).unwrap();
        assert!(t.residual_affine < 1e-12 && t.verdict == Verdict::Infeasible);
        for _ in 0..5 {
            assert!(is_ucp(&random_ucp(3, 2, 2, &mut rng).unwrap(), 1e-9).unwrap().is_feasible());
        }
    }

    #[test]
    fn norm_bounds() {
        let mut rng = seeded(4);
        let id = CpMap::identity(2).unwrap();
        for k in 1..=3 {
            let l = knorm_lower(&id, k, 2, &mut rng).unwrap();
            assert!((l - 1.0).abs() < 1e-9, "{l}");
        }
        let t = CpMap::transpose(2).unwrap();
        let tl = knorm_lower(&t, 2, 4, &mut rng).unwrap();
        assert!(tl >= 1.95, "{tl}");
        assert!((cb_upper(&id).unwrap() - 4.0).abs() < 1e-12);
        let f = random_map(&mut rng, 2, 3);
        let a = knorm_lower(&f, 2, 3, &mut rng).unwrap();
        let b = knorm_lower(&f.scale(-2.5), 2, 3, &mut rng).unwrap();
        assert!((b / a - 2.5).abs() < 0.05, "{a} {b}");
        assert!(cb_upper(&f).unwrap() >= a);
    }

    #[test]
    fn nearest_ucp_fixed_point_and_transpose() {
        let mut rng = seeded(5);
        let f = random_ucp(2, 2, 2, &mut rng).unwrap();
        let r = nearest_ucp(&f, &ConicConfig::default()).unwrap();
        assert!(r.choi_distance < 1e-9);
        let t = nearest_ucp(&CpMap::transpose(2).unwrap(), &ConicConfig::default()).unwrap();
        assert!(t.choi_distance > 0.1);
        assert!(is_ucp(&t.map, 1e-7).unwrap().is_feasible());
    }

    #[test]
    fn map_json_roundtrip() {
        let mut rng = seeded(6);
        let f = random_ucp(2, 3, 2, &mut rng).unwrap();
        let j = MapJson::try_from(&f).unwrap();
        let back = CpMap::try_from(&serde_json::from_str::<MapJson>(&serde_json::to_string(&j).unwrap()).unwrap()).unwrap();
        assert!((&choi_matrix(&back).unwrap() - &choi_matrix(&f).unwrap()).max_abs() < 1e-15);
    }
}
