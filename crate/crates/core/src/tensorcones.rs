//! Minimal and maximal tensor cones of two operator systems.
//!
//! Membership in the min cone is spatial (or, through a full matrix factor,
//! positivity in an amplification of the other factor). Membership in the max
//! cone is decided only through duality: `z` is max-positive iff its pairing
//! with every element of the dual min cone is nonnegative, and that dual cone
//! is parameterized by positive semidefinite Choi-type matrices.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{min_linear_with, Certificate, ConeProblem, ConicConfig, Verdict};
use crate::cpmaps::CpMap;
use crate::error::{Error, Result};
use crate::matcore::{eig_herm, hermitian_basis, ComplexMatrix, HermMatrix, MatrixJson, C64, ONE};
use crate::opsys::{cone_member_with, OperatorSystem, Regime, SystemElement, SystemJson};
use crate::random::{random_hermitian, trial_rng};

/// `Σ_st X_st ⊗ A_s ⊗ B_t ∈ M_k(left ⊗ right)`.
#[derive(Clone, Debug)]
pub struct TensorElement {
    pub left: Arc<OperatorSystem>,
    pub right: Arc<OperatorSystem>,
    pub level: usize,
    /// `k × k` blocks indexed by `s * right.dim() + t`.
    pub coords: Vec<ComplexMatrix>,
}

impl TensorElement {
    pub fn new(left: Arc<OperatorSystem>, right: Arc<OperatorSystem>, level: usize, coords: Vec<ComplexMatrix>) -> Result<Self> {
        if coords.len() != left.dim() * right.dim() || coords.iter().any(|c| c.rows() != level || c.cols() != level) {
            return Err(Error::DimensionMismatch(format!(
                "need {} coordinate blocks of size {level}×{level}",
                left.dim() * right.dim()
            )));
        }
        Ok(Self { left, right, level, coords })
    }

    pub fn unit(left: Arc<OperatorSystem>, right: Arc<OperatorSystem>, level: usize) -> Self {
        let z = Self { coords: vec![ComplexMatrix::zeros(level, level); left.dim() * right.dim()], left, right, level };
        z.add_unit(1.0)
    }

    /// Independent GUE coordinate blocks (a Hermitian element).
    pub fn random(left: Arc<OperatorSystem>, right: Arc<OperatorSystem>, level: usize, rng: &mut impl Rng) -> Self {
        let coords = (0..left.dim() * right.dim()).map(|_| random_hermitian(rng, level).into_matrix()).collect();
        Self { left, right, level, coords }
    }

    pub fn coord(&self, s: usize, t: usize) -> &ComplexMatrix {
        &self.coords[s * self.right.dim() + t]
    }

    pub fn add_unit(&self, x: f64) -> Self {
        let mut out = self.clone();
        let (ul, ur) = (self.left.unit_coords(), self.right.unit_coords());
        for (s, a) in ul.iter().enumerate() {
            for (t, b) in ur.iter().enumerate() {
                let c = &mut out.coords[s * ur.len() + t];
                for i in 0..self.level {
                    c[(i, i)] += C64::new(x * a * b, 0.0);
                }
            }
        }
        out
    }

    /// Realization in `M_k ⊗ M_m ⊗ M_p` (a lift, for quotient factors).
    pub fn ambient(&self) -> ComplexMatrix {
        let (m, p) = (self.left.ambient_dim(), self.right.ambient_dim());
        let k = self.level;
        let mut out = ComplexMatrix::zeros(k * m * p, k * m * p);
        for (s, a) in self.left.basis().iter().enumerate() {
            for (t, b) in self.right.basis().iter().enumerate() {
                out.axpy(ONE, &self.coord(s, t).kron(&a.as_matrix().kron(b.as_matrix())));
            }
        }
        out
    }

    /// Compression by the coordinate subspace `rows ⊆ {0..k}`.
    pub fn compress(&self, rows: &[usize]) -> Self {
        let l = rows.len();
        let coords = self.coords.iter().map(|c| ComplexMatrix::from_fn(l, l, |a, b| c[(rows[a], rows[b])])).collect();
        Self { left: self.left.clone(), right: self.right.clone(), level: l, coords }
    }

    /// `(φ ⊗ id)_k`, reading `φ`'s images as elements of `target`.
    pub fn push_left(&self, phi: &CpMap, target: Arc<OperatorSystem>) -> Result<Self> {
        if phi.domain().dim() != self.left.dim() || phi.codomain_dim() != target.ambient_dim() {
            return Err(Error::DimensionMismatch("map does not act on the left factor".into()));
        }
        let images: Vec<Vec<C64>> = phi.images().iter().map(|img| target.coords_of(img)).collect::<Result<_>>()?;
        let (dr, k) = (self.right.dim(), self.level);
        let mut coords = vec![ComplexMatrix::zeros(k, k); target.dim() * dr];
        for (s, img) in images.iter().enumerate() {
            for (u, c) in img.iter().enumerate() {
                for t in 0..dr {
                    coords[u * dr + t].axpy(*c, self.coord(s, t));
                }
            }
        }
        Self::new(target, self.right.clone(), k, coords)
    }

    pub fn distance_bound(&self, other: &Self) -> Result<f64> {
        if self.coords.len() != other.coords.len() || self.level != other.level {
            return Err(Error::DimensionMismatch("tensor elements differ in shape".into()));
        }
        let diff = Self {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect(),
            ..self.clone()
        };
        Ok(crate::matcore::op_norm(&diff.ambient()))
    }
}

/// A factor that is `M_n` or `M_n*`, realized as `M_n` with the given basis;
/// the unit is realized as `unit_scale · I_n`.
struct FullLike {
    basis: Vec<ComplexMatrix>,
    /// `tr(dual_s basis_t) = δ_st`.
    dual: Vec<ComplexMatrix>,
    unit_scale: f64,
}

fn full_like(s: &OperatorSystem) -> Option<FullLike> {
    match s.regime() {
        Regime::Concrete if s.is_full_algebra() => {
            Some(FullLike {
                basis: s.basis().iter().map(|b| b.as_matrix().clone()).collect(),
                dual: s.dual_basis().iter().map(|b| b.as_matrix().clone()).collect(),
                unit_scale: 1.0,
            })
        }
        // M_n* ≅ M_n completely order isomorphically via f ↦ [f(e_ij)] = Fᵀ
        Regime::Dual(inner) if inner.is_full_algebra() => Some(FullLike {
            basis: s.basis().iter().map(|f| f.transpose().into_matrix()).collect(),
            dual: s.dual_basis().iter().map(|a| a.transpose().into_matrix()).collect(),
            unit_scale: 1.0 / s.ambient_dim() as f64,
        }),
        _ => None,
    }
}

/// `z` rewritten as a level-`k·n` element of the factor that is not full-like,
/// with the factor by which `z`'s unit scales that element's unit.
struct Reshuffled {
    element: SystemElement,
    unit_scale: f64,
}

fn reshuffle(z: &TensorElement) -> Option<Reshuffled> {
    let k = z.level;
    if let Some(fr) = full_like(&z.right) {
        let n = z.right.ambient_dim();
        let coords = (0..z.left.dim())
            .map(|s| {
                let mut y = ComplexMatrix::zeros(k * n, k * n);
                for (t, b) in fr.basis.iter().enumerate() {
                    y.axpy(ONE, &z.coord(s, t).kron(b));
                }
                y
            })
            .collect();
        return Some(Reshuffled {
            element: SystemElement { system: z.left.clone(), level: k * n, coords },
            unit_scale: fr.unit_scale,
        });
    }
    let fl = full_like(&z.left)?;
    let n = z.left.ambient_dim();
    let coords = (0..z.right.dim())
        .map(|t| {
            let mut y = ComplexMatrix::zeros(k * n, k * n);
            for (s, a) in fl.basis.iter().enumerate() {
                y.axpy(ONE, &z.coord(s, t).kron(a));
            }
            y
        })
        .collect();
    Some(Reshuffled { element: SystemElement { system: z.right.clone(), level: k * n, coords }, unit_scale: fl.unit_scale })
}

impl TensorElement {
    /// Inverse of the reshuffle: `y ∈ M_{k·n}(left)` read as an element of
    /// `M_k(left ⊗ right)` for a right factor `M_n` or `M_n*`.
    pub fn from_level_element(y: &SystemElement, right: Arc<OperatorSystem>, k: usize) -> Result<Self> {
        let fr = full_like(&right).ok_or_else(|| Error::Unsupported("right factor must be M_n or M_n*".into()))?;
        let n = right.ambient_dim();
        if y.level != k * n {
            return Err(Error::DimensionMismatch(format!("level {} is not {k}·{n}", y.level)));
        }
        let mut coords = Vec::with_capacity(y.coords.len() * fr.dual.len());
        for ys in &y.coords {
            let blocks: Vec<ComplexMatrix> = (0..k * k).map(|r| ys.block(r / k, r % k, n)).collect();
            for g in &fr.dual {
                coords.push(ComplexMatrix::from_fn(k, k, |a, b| g.matmul(&blocks[a * k + b]).trace()));
            }
        }
        Self::new(y.system.clone(), right, k, coords)
    }

    /// The level-`k·n` element of the left factor (right factor `M_n` or `M_n*`).
    pub fn to_level_element(&self) -> Result<SystemElement> {
        if full_like(&self.right).is_none() {
            return Err(Error::Unsupported("right factor must be M_n or M_n*".into()));
        }
        Ok(reshuffle(self).expect("right factor is full-like").element)
    }
}

/// Margin gained per unit added in a system: 1 for concrete and quotient
/// systems, `1/m` for duals (the unit is the normalized trace).
fn unit_gain(s: &OperatorSystem) -> f64 {
    match s.regime() {
        Regime::Dual(_) => 1.0 / s.ambient_dim() as f64,
        _ => 1.0,
    }
}

fn margin_certificate(lower: f64, upper: f64, tol: f64, iterations: usize) -> Certificate {
    let verdict = if lower >= -tol {
        Verdict::Feasible
    } else if upper < -tol {
        Verdict::Infeasible
    } else {
        Verdict::Indeterminate
    };
    Certificate {
        verdict,
        witness: None,
        residual_affine: 0.0,
        residual_psd: (-lower).max(0.0),
        iterations,
        objective_value: Some(upper),
        lower_bound: Some(lower),
    }
}

/// Smallest `s ≥ 0` with `z + s·1` positive, as a certified `(lower, upper)`
/// pair read off a membership certificate whose margin is in unit multiples.
pub fn archimedean_defect(cert: &Certificate) -> (f64, f64) {
    let lo = cert.lower_bound.unwrap_or(f64::NEG_INFINITY);
    let up = cert.objective_value.unwrap_or(lo);
    ((-up).max(0.0), (-lo).max(0.0))
}

/// Min-cone membership. The certificate's margin is measured in multiples of
/// the unit of `left ⊗ right`.
pub fn min_member(z: &TensorElement, tol: f64) -> Result<Certificate> {
    min_member_with(z, tol, &ConicConfig::default())
}

pub fn min_member_with(z: &TensorElement, tol: f64, cfg: &ConicConfig) -> Result<Certificate> {
    let concrete = |s: &OperatorSystem| matches!(s.regime(), Regime::Concrete);
    if concrete(&z.left) && concrete(&z.right) {
        let l = eig_herm(&HermMatrix::symmetrize(&z.ambient()))?.min();
        return Ok(margin_certificate(l, l, tol, 0));
    }
    if is_dual_of_full(&z.left) && concrete(&z.right) {
        return min_member_dualform(z, tol);
    }
    let r = reshuffle(z).ok_or_else(|| unsupported(z))?;
    let gain = r.unit_scale * unit_gain(&r.element.system);
    let cert = cone_member_with(&r.element, tol * gain, cfg)?;
    let lo = cert.lower_bound.unwrap_or(f64::NEG_INFINITY) / gain;
    let up = cert.objective_value.unwrap_or(f64::INFINITY) / gain;
    let mut out = margin_certificate(lo, up, tol, cert.iterations);
    out.residual_affine = cert.residual_affine;
    if cert.verdict == Verdict::Infeasible && cert.lower_bound.is_none() {
        out.verdict = Verdict::Infeasible;
    }
    Ok(out)
}

fn is_dual_of_full(s: &OperatorSystem) -> bool {
    matches!(s.regime(), Regime::Dual(inner) if inner.is_full_algebra())
}

fn unsupported(z: &TensorElement) -> Error {
    Error::Unsupported(format!(
        "tensor cone of {} ⊗ {} needs a full matrix algebra (or its dual) as a factor",
        regime_name(&z.left),
        regime_name(&z.right)
    ))
}

fn regime_name(s: &OperatorSystem) -> String {
    match s.regime() {
        Regime::Concrete if s.is_full_algebra() => format!("M_{}", s.ambient_dim()),
        Regime::Concrete => format!("concrete(dim {})", s.dim()),
        Regime::Quotient(_) => format!("quotient(dim {})", s.dim()),
        Regime::Dual(inner) => format!("dual of {}", regime_name(inner)),
    }
}

/// Min positivity for `M_n* ⊗ E` with `E ⊆ M_p` concrete: the associated map
/// `M_n → M_k(M_p)`, `x ↦ Σ f_s(x) Σ_t X_st ⊗ B_t`, must be completely
/// positive. Its Choi matrix is `Σ_s F_sᵀ ⊗ Σ_t X_st ⊗ B_t`.
pub fn min_member_dualform(z: &TensorElement, tol: f64) -> Result<Certificate> {
    if !is_dual_of_full(&z.left) || !matches!(z.right.regime(), Regime::Concrete) {
        return Err(Error::InvalidArgument("dual form needs M_n* on the left and a concrete right factor".into()));
    }
    let choi = associated_choi(z);
    let n = z.left.ambient_dim() as f64;
    // the unit's Choi matrix is I/n
    let l = n * eig_herm(&HermMatrix::symmetrize(&choi))?.min();
    Ok(margin_certificate(l, l, tol, 0))
}

/// Choi matrix in `M_n ⊗ M_k ⊗ M_p` of the map associated with `z ∈ M_k(M_n* ⊗ E)`.
pub fn associated_choi(z: &TensorElement) -> ComplexMatrix {
    let (n, p, k) = (z.left.ambient_dim(), z.right.ambient_dim(), z.level);
    let mut choi = ComplexMatrix::zeros(n * k * p, n * k * p);
    for (s, f) in z.left.basis().iter().enumerate() {
        let mut y = ComplexMatrix::zeros(k * p, k * p);
        for (t, b) in z.right.basis().iter().enumerate() {
            y.axpy(ONE, &z.coord(s, t).kron(b.as_matrix()));
        }
        choi.axpy(ONE, &f.transpose().as_matrix().kron(&y));
    }
    choi
}

/// The pairing test at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPairing {
    pub level: usize,
    /// Certified bracket on `min ⟨z', w⟩` over unit-normalized dual positives
    /// `w`, minimized over the coordinate compressions `z'` of `z` to this level.
    pub lower: f64,
    pub upper: f64,
}

/// Max-cone membership with the per-level pairing record.
#[derive(Clone, Debug)]
pub struct MaxCertificate {
    /// Decided by the pairing at the query's own level; its margin is the
    /// minimal normalized pairing.
    pub certificate: Certificate,
    pub levels: Vec<LevelPairing>,
}

/// Max-cone membership by duality: `z ∈ M_k(L ⊗max R)⁺ + tol·1` iff the
/// minimum of `⟨z, w⟩` over `w ∈ M_k(L* ⊗min R*)⁺` with `⟨1, w⟩ = 1` is at
/// least `−tol`. One factor must be `M_n` or `M_n*`; the dual cone of the
/// other one is parameterized by Choi matrices (Arveson extension for concrete
/// systems, kernel-annihilating for quotients, plain PSD for duals of full
/// algebras or quotients).
pub fn max_member(z: &TensorElement, tol: f64) -> Result<MaxCertificate> {
    max_member_with(z, tol, &ConicConfig::default())
}

pub fn max_member_with(z: &TensorElement, tol: f64, cfg: &ConicConfig) -> Result<MaxCertificate> {
    let mut levels = Vec::with_capacity(z.level);
    for l in 1..z.level {
        let (mut lower, mut upper) = (f64::INFINITY, f64::INFINITY);
        for rows in subsets(z.level, l) {
            let c = min_pairing(&z.compress(&rows), cfg)?;
            let (lo, up) = bracket(&c);
            lower = lower.min(lo);
            upper = upper.min(up);
        }
        levels.push(LevelPairing { level: l, lower, upper });
    }
    let c = min_pairing(z, cfg)?;
    let (lo, up) = bracket(&c);
    levels.push(LevelPairing { level: z.level, lower: lo, upper: up });
    let mut certificate = margin_certificate(lo, up, tol, c.iterations);
    certificate.witness = c.witness;
    certificate.residual_affine = c.residual_affine;
    Ok(MaxCertificate { certificate, levels })
}

fn bracket(c: &Certificate) -> (f64, f64) {
    let lo = c.lower_bound.unwrap_or(f64::NEG_INFINITY);
    (lo, c.objective_value.unwrap_or(lo))
}

fn subsets(k: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << k) {
        if mask.count_ones() as usize == l {
            out.push((0..k).filter(|i| mask >> i & 1 == 1).collect());
        }
    }
    out
}

/// `min ⟨z, w⟩` over unit-normalized positive `w` in the dual min cone.
fn min_pairing(z: &TensorElement, cfg: &ConicConfig) -> Result<Certificate> {
    let r = reshuffle(z).ok_or_else(|| unsupported(z))?;
    let sys = r.element.system.clone();
    let kk = r.element.level;
    let unit = SystemElement::unit(sys.clone(), kk).scale(r.unit_scale);
    let (problem, norm) = match sys.regime() {
        Regime::Concrete | Regime::Quotient(_) => {
            // w ↔ completely positive Φ: M_m → M_K with Choi C; ⟨y, w⟩ = tr((Σ A_sᵀ ⊗ Y_sᵀ) C)
            let m = sys.ambient_dim();
            let pairing = |y: &SystemElement| {
                let mut obj = ComplexMatrix::zeros(m * kk, m * kk);
                for (a, c) in sys.basis().iter().zip(&y.coords) {
                    obj.axpy(ONE, &a.transpose().as_matrix().kron(&c.transpose()));
                }
                HermMatrix::symmetrize(&obj)
            };
            let mut p = ConeProblem::new(m * kk).with_objective(pairing(&r.element));
            if let Some(kernel) = sys.kernel() {
                for j in &kernel.basis {
                    for e in hermitian_basis(kk) {
                        p = p.with_constraint(j.transpose().kron(&e), 0.0);
                    }
                }
            }
            (p, pairing(&unit))
        }
        Regime::Dual(inner) if !matches!(inner.regime(), Regime::Dual(_)) && (inner.is_full_algebra() || inner.kernel().is_some()) => {
            // w ∈ M_K(inner)⁺ realized by a PSD lift Y; ⟨y, w⟩ = tr((Σ Y_sᵀ ⊗ F_s) Y)
            let m = sys.ambient_dim();
            let pairing = |y: &SystemElement| {
                let mut obj = ComplexMatrix::zeros(kk * m, kk * m);
                for (f, c) in sys.basis().iter().zip(&y.coords) {
                    obj.axpy(ONE, &c.transpose().kron(f.as_matrix()));
                }
                HermMatrix::symmetrize(&obj)
            };
            (ConeProblem::new(kk * m).with_objective(pairing(&r.element)), pairing(&unit))
        }
        _ => return Err(unsupported(z)),
    };
    min_linear_with(&problem, (norm, 1.0), cfg)
}

/// One sampled boundary element in [`minmax_samples`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub index: usize,
    /// Unit multiple that moved the raw sample onto the min-cone boundary.
    pub shift: f64,
    /// Certified upper bound on the Archimedean defect in the max cone.
    pub max_defect: f64,
    pub levels: Vec<LevelPairing>,
}

/// The sampled Archimedean defect between the two cones: the largest `s` such
/// that some min-positive boundary sample `z` needs `z + s·1` to become
/// max-positive. Zero means the cones coincide at sampled resolution.
pub fn minmax_gap(left: &Arc<OperatorSystem>, right: &Arc<OperatorSystem>, level: usize, samples: usize, seed: u64) -> Result<f64> {
    let s = minmax_samples(left, right, level, samples, seed, &ConicConfig::default())?;
    Ok(s.iter().map(|g| g.max_defect).fold(0.0, f64::max))
}

pub fn minmax_samples(
    left: &Arc<OperatorSystem>,
    right: &Arc<OperatorSystem>,
    level: usize,
    samples: usize,
    seed: u64,
    cfg: &ConicConfig,
) -> Result<Vec<GapSample>> {
    (0..samples)
        .into_par_iter()
        .map(|index| {
            let mut rng = trial_rng(seed, index as u64);
            let raw = TensorElement::random(left.clone(), right.clone(), level, &mut rng);
            let margin = min_member_with(&raw, 0.0, cfg)?.lower_bound.unwrap_or(f64::NEG_INFINITY);
            if !margin.is_finite() {
                return Err(Error::InvalidArgument("min margin is not finite".into()));
            }
            // the certified lower margin is linear in unit shifts
            let boundary = raw.add_unit(-margin);
            let max = max_member_with(&boundary, 0.0, cfg)?;
            let (_, max_defect) = archimedean_defect(&max.certificate);
            Ok(GapSample { index, shift: -margin, max_defect, levels: max.levels })
        })
        .collect()
}

/// Wire format for tensor elements.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TensorJson {
    pub left: SystemJson,
    pub right: SystemJson,
    pub level: usize,
    pub coords: Vec<MatrixJson>,
}

impl From<&TensorElement> for TensorJson {
    fn from(z: &TensorElement) -> Self {
        Self {
            left: SystemJson::from(z.left.as_ref()),
            right: SystemJson::from(z.right.as_ref()),
            level: z.level,
            coords: z.coords.iter().map(MatrixJson::from).collect(),
        }
    }
}

impl TryFrom<&TensorJson> for TensorElement {
    type Error = Error;
    fn try_from(j: &TensorJson) -> Result<Self> {
        let left = Arc::new(OperatorSystem::try_from(&j.left)?);
        let right = Arc::new(OperatorSystem::try_from(&j.right)?);
        let coords = j.coords.iter().map(ComplexMatrix::try_from).collect::<Result<_>>()?;
        Self::new(left, right, j.level, coords)
    }
}
