//! Operator systems realized inside matrix algebras, with their dual and
//! quotient structures.
//!
//! A level-`k` element of a system with basis `B_0 = I, B_1, …` is stored as
//! `k × k` coefficient blocks `X_t`, standing for `Σ_t X_t ⊗ B_t`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{max_lambda_min_in, max_lambda_min_with, Certificate, ConicConfig, Verdict};
use crate::error::{Error, Result};
use crate::matcore::{
    eig_herm, hermitian_basis, orthonormalize_with, AffineSpace, ComplexMatrix, HermMatrix, MatrixJson, C64, ONE, ZERO,
};
use crate::random::haar_unitary;

/// Residual norm (relative) below which a generator counts as dependent.
pub const BASIS_DROP: f64 = 1e-8;

/// Archimedean tolerance used for quotient positivity unless told otherwise.
pub const DEFAULT_QUOTIENT_TOL: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct KernelSpace {
    pub ambient_dim: usize,
    pub basis: Vec<HermMatrix>,
}

impl KernelSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `J_{m}`: diagonal trace-zero matrices, basis `e_ii − e_{i+1,i+1}`.
    pub fn diagonal_trace_zero(m: usize) -> Self {
        let basis = (0..m.saturating_sub(1))
            .map(|i| {
                let mut d = vec![0.0; m];
                d[i] = 1.0;
                d[i + 1] = -1.0;
                HermMatrix::from_real_diag(&d)
            })
            .collect();
        Self { ambient_dim: m, basis }
    }
}

#[derive(Clone, Debug)]
pub enum Regime {
    Concrete,
    /// Functionals on the inner system; basis matrices are Riesz representers
    /// `F_s` with `tr(F_s B_t) = δ_st`.
    Dual(Box<OperatorSystem>),
    /// `M_m / kernel`; basis matrices are lifts of a basis of the quotient.
    Quotient(KernelSpace),
}

#[derive(Clone, Debug)]
pub struct OperatorSystem {
    ambient_dim: usize,
    basis: Vec<HermMatrix>,
    regime: Regime,
    /// Generator indices dropped as linearly dependent by [`make_system`].
    dropped: Vec<usize>,
    /// Representers dual to `basis` (for quotients, also annihilating the kernel).
    dual_basis: Vec<HermMatrix>,
}

impl OperatorSystem {
    fn assemble(ambient_dim: usize, basis: Vec<HermMatrix>, regime: Regime, dropped: Vec<usize>) -> Result<Self> {
        let dual_basis = match &regime {
            Regime::Quotient(k) => {
                let mut all = basis.clone();
                all.extend(k.basis.iter().cloned());
                let mut d = dual_vectors(&all)?;
                d.truncate(basis.len());
                d
            }
            _ => dual_vectors(&basis)?,
        };
        Ok(Self { ambient_dim, basis, regime, dropped, dual_basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn basis(&self) -> &[HermMatrix] {
        &self.basis
    }

    pub fn regime(&self) -> &Regime {
        &self.regime
    }

    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    pub fn dual_basis(&self) -> &[HermMatrix] {
        &self.dual_basis
    }

    pub fn kernel(&self) -> Option<&KernelSpace> {
        match &self.regime {
            Regime::Quotient(k) => Some(k),
            _ => None,
        }
    }

    /// True for a concrete system spanning all of `M_m`.
    pub fn is_full_algebra(&self) -> bool {
        matches!(self.regime, Regime::Concrete) && self.dim() == self.ambient_dim * self.ambient_dim
    }

    /// Coordinates of the order unit. Concrete and quotient systems have
    /// `B_0 = I`; a dual system's unit is the normalized trace of the inner
    /// system (or evaluation at the unit, for a dual of a dual).
    pub fn unit_coords(&self) -> Vec<f64> {
        match &self.regime {
            Regime::Dual(inner) => {
                let m = self.ambient_dim as f64;
                let rep = match inner.regime {
                    Regime::Dual(_) => HermMatrix::identity(self.ambient_dim),
                    _ => HermMatrix::identity(self.ambient_dim).scale(1.0 / m),
                };
                inner.basis.iter().map(|b| rep.inner(b)).collect()
            }
            _ => {
                let mut c = vec![0.0; self.dim()];
                c[0] = 1.0;
                c
            }
        }
    }

    /// Ambient matrix of the order unit.
    pub fn unit_matrix(&self) -> HermMatrix {
        let mut out = HermMatrix::zeros(self.ambient_dim);
        for (c, b) in self.unit_coords().iter().zip(&self.basis) {
            out.axpy(*c, b);
        }
        out
    }

    /// Coordinates of an ambient `m × m` matrix. Concrete and dual systems
    /// require it to lie in the span; quotients accept any lift.
    pub fn coords_of(&self, a: &ComplexMatrix) -> Result<Vec<C64>> {
        let coords: Vec<C64> = self.dual_basis.iter().map(|f| f.as_matrix().matmul(a).trace()).collect();
        if !matches!(self.regime, Regime::Quotient(_)) {
            let mut back = ComplexMatrix::zeros(self.ambient_dim, self.ambient_dim);
            for (c, b) in coords.iter().zip(&self.basis) {
                back.axpy(*c, b.as_matrix());
            }
            let res = (&back - a).max_abs();
            if res > 1e-9 * (1.0 + a.max_abs()) {
                return Err(Error::InvalidArgument(format!("matrix is not in the system (residual {res:.2e})")));
            }
        }
        Ok(coords)
    }
}

/// Matrices `F_s ∈ span(vectors)` with `⟨F_s, v_t⟩ = δ_st`.
fn dual_vectors(vectors: &[HermMatrix]) -> Result<Vec<HermMatrix>> {
    let d = vectors.len();
    let gram = HermMatrix::symmetrize(&ComplexMatrix::from_fn(d, d, |s, t| vectors[s].inner(&vectors[t]).into()));
    let e = eig_herm(&gram)?;
    if e.min() <= 1e-10 * e.max().max(1.0) {
        return Err(Error::InvalidArgument("basis is numerically dependent".into()));
    }
    let inv = e.reconstruct_with(|l| 1.0 / l);
    Ok((0..d)
        .map(|s| {
            let mut f = HermMatrix::zeros(vectors[0].dim());
            for (u, v) in vectors.iter().enumerate() {
                f.axpy(inv.as_matrix()[(s, u)].re, v);
            }
            f
        })
        .collect())
}

/// Concrete system spanned by `I` and the generators. Dependent generators are
/// dropped and their indices reported through [`OperatorSystem::dropped`].
pub fn make_system(ambient_dim: usize, generators: &[HermMatrix]) -> Result<OperatorSystem> {
    if ambient_dim == 0 {
        return Err(Error::InvalidArgument("ambient dimension must be positive".into()));
    }
    if let Some(g) = generators.iter().find(|g| g.dim() != ambient_dim) {
        return Err(Error::DimensionMismatch(format!("generator of dim {} in M_{ambient_dim}", g.dim())));
    }
    let mut all = vec![HermMatrix::identity(ambient_dim)];
    all.extend(generators.iter().cloned());
    let (_, kept) = orthonormalize_with(&all, BASIS_DROP);
    let basis: Vec<HermMatrix> = kept.iter().map(|&i| all[i].clone()).collect();
    let dropped = (1..all.len()).filter(|i| !kept.contains(i)).map(|i| i - 1).collect();
    OperatorSystem::assemble(ambient_dim, basis, Regime::Concrete, dropped)
}

/// `M_m` as a concrete system with the standard Hermitian basis.
pub fn full_algebra(m: usize) -> Result<OperatorSystem> {
    if m == 0 {
        return Err(Error::InvalidArgument("ambient dimension must be positive".into()));
    }
    OperatorSystem::assemble(m, hermitian_basis(m), Regime::Concrete, Vec::new())
}

/// `M_m / kernel`. The kernel must not contain the identity.
pub fn quotient_system(kernel: KernelSpace) -> Result<OperatorSystem> {
    let m = kernel.ambient_dim;
    let mut all = kernel.basis.clone();
    let k = all.len();
    all.extend(hermitian_basis(m));
    let (_, kept) = orthonormalize_with(&all, BASIS_DROP);
    if kept.iter().filter(|&&i| i < k).count() != k {
        return Err(Error::InvalidArgument("kernel generators are dependent".into()));
    }
    if !kept.contains(&k) {
        return Err(Error::InvalidArgument("kernel contains the identity".into()));
    }
    let basis: Vec<HermMatrix> = kept.iter().filter(|&&i| i >= k).map(|&i| all[i].clone()).collect();
    OperatorSystem::assemble(m, basis, Regime::Quotient(kernel), Vec::new())
}

/// `M_k(S)` as a system in `M_{km}`: basis `h ⊗ B_t` over the Hermitian basis
/// `h` of `M_k`, kernel `h ⊗ J_r` for quotients.
pub fn amplified_system(k: usize, s: &OperatorSystem) -> Result<OperatorSystem> {
    let hk = hermitian_basis(k);
    let tensor = |v: &[HermMatrix]| hk.iter().flat_map(|h| v.iter().map(move |b| h.kron(b))).collect::<Vec<_>>();
    let regime = match &s.regime {
        Regime::Concrete => Regime::Concrete,
        Regime::Quotient(kernel) => {
            Regime::Quotient(KernelSpace { ambient_dim: k * s.ambient_dim, basis: tensor(&kernel.basis) })
        }
        Regime::Dual(_) => return Err(Error::Unsupported("amplifying a dual system".into())),
    };
    OperatorSystem::assemble(k * s.ambient_dim, tensor(&s.basis), regime, Vec::new())
}

/// `M_{n+1} / J_{n+1}`, the model of `W_n`: basis `I` plus the off-diagonal
/// Hermitian matrix units, dimension `(n+1)² − n`.
pub fn wn_quotient_system(n: usize) -> Result<(OperatorSystem, KernelSpace)> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let kernel = KernelSpace::diagonal_trace_zero(n + 1);
    Ok((quotient_system(kernel.clone())?, kernel))
}

/// A concrete representation of `W_n` on `C^d`: unitaries `u_1..u_n` with
/// `u_{n+1} = I`, and the system spanned by the Hermitian parts of `u_i* u_j`.
#[derive(Clone, Debug)]
pub struct WnRepresentation {
    pub n: usize,
    pub d: usize,
    /// `n + 1` unitaries, the last one the identity.
    pub unitaries: Vec<ComplexMatrix>,
    pub system: OperatorSystem,
    /// Number of Hermitian generators before reduction, `(n+1)²`.
    pub generator_count: usize,
}

impl WnRepresentation {
    pub fn from_unitaries(n: usize, mut unitaries: Vec<ComplexMatrix>) -> Result<Self> {
        if unitaries.len() != n {
            return Err(Error::InvalidArgument(format!("expected {n} unitaries, got {}", unitaries.len())));
        }
        let d = unitaries.first().map(|u| u.rows()).ok_or_else(|| Error::InvalidArgument("n ≥ 1".into()))?;
        unitaries.push(ComplexMatrix::identity(d));
        let mut gens = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            for j in 0..=n {
                let w = unitaries[i.min(j)].adjoint().matmul(&unitaries[i.max(j)]);
                let h = if i == j {
                    HermMatrix::symmetrize(&w)
                } else if i < j {
                    HermMatrix::symmetrize(&(&w + &w.adjoint()).scale_re(0.5))
                } else {
                    HermMatrix::symmetrize(&(&w - &w.adjoint()).scale(C64::new(0.0, -0.5)))
                };
                gens.push(h);
            }
        }
        let generator_count = gens.len();
        let system = make_system(d, &gens)?;
        Ok(Self { n, d, unitaries, system, generator_count })
    }

    /// `u_i* u_j`.
    pub fn word(&self, i: usize, j: usize) -> ComplexMatrix {
        self.unitaries[i].adjoint().matmul(&self.unitaries[j])
    }

    /// `(id_k ⊗ γ_n)(lift)` for a lift in `M_k ⊗ M_{n+1}`, with
    /// `γ_n(e_ij) = u_i* u_j / (n+1)`.
    pub fn image(&self, lift: &ComplexMatrix, k: usize) -> ComplexMatrix {
        let m = self.n + 1;
        let words: Vec<Vec<ComplexMatrix>> = (0..m).map(|i| (0..m).map(|j| self.word(i, j)).collect()).collect();
        let scale = 1.0 / m as f64;
        ComplexMatrix::from_blocks(k, |a, b| {
            let mut blk = ComplexMatrix::zeros(self.d, self.d);
            for i in 0..m {
                for j in 0..m {
                    let c = lift[(a * m + i, b * m + j)];
                    if c != ZERO {
                        blk.axpy(c * scale, &words[i][j]);
                    }
                }
            }
            blk
        })
    }
}

/// Haar-random representation of `W_n` on `C^d`.
pub fn wn_concrete_rep(n: usize, d: usize, rng: &mut impl Rng) -> Result<WnRepresentation> {
    if d < 2 {
        return Err(Error::InvalidArgument("representation dimension must be at least 2".into()));
    }
    let us = (0..n).map(|_| haar_unitary(rng, d)).collect();
    WnRepresentation::from_unitaries(n, us)
}

/// The dual system `E*`. Its basis is the dual basis of `E`'s basis, realized by
/// representers in `span(E)`; its unit is the normalized trace.
pub fn dual_system(e: &OperatorSystem) -> Result<OperatorSystem> {
    let basis = e.dual_basis.clone();
    let dual_basis = match e.regime {
        // for quotients the representers live in the kernel's complement
        Regime::Quotient(_) => dual_vectors(&basis)?,
        _ => e.basis.clone(),
    };
    Ok(OperatorSystem {
        ambient_dim: e.ambient_dim,
        basis,
        regime: Regime::Dual(Box::new(e.clone())),
        dropped: Vec::new(),
        dual_basis,
    })
}

/// An element of `M_k(S)`.
#[derive(Clone, Debug)]
pub struct SystemElement {
    pub system: Arc<OperatorSystem>,
    pub level: usize,
    /// One `k × k` block per basis element.
    pub coords: Vec<ComplexMatrix>,
}

impl SystemElement {
    pub fn new(system: Arc<OperatorSystem>, level: usize, coords: Vec<ComplexMatrix>) -> Result<Self> {
        if coords.len() != system.dim() || coords.iter().any(|c| c.rows() != level || c.cols() != level) {
            return Err(Error::DimensionMismatch(format!(
                "need {} coordinate blocks of size {level}×{level}",
                system.dim()
            )));
        }
        Ok(Self { system, level, coords })
    }

    /// `unit ⊗ I_k`.
    pub fn unit(system: Arc<OperatorSystem>, level: usize) -> Self {
        let coords =
            system.unit_coords().iter().map(|&c| ComplexMatrix::identity(level).scale_re(c)).collect::<Vec<_>>();
        Self { system, level, coords }
    }

    /// Read coordinates off an ambient `km × km` matrix.
    pub fn from_ambient(system: Arc<OperatorSystem>, level: usize, ambient: &ComplexMatrix) -> Result<Self> {
        let m = system.ambient_dim();
        if ambient.rows() != level * m || !ambient.is_square() {
            return Err(Error::DimensionMismatch(format!("ambient must be {0}×{0}", level * m)));
        }
        let mut coords = vec![ComplexMatrix::zeros(level, level); system.dim()];
        for a in 0..level {
            for b in 0..level {
                let c = system.coords_of(&ambient.block(a, b, m))?;
                for (t, v) in c.into_iter().enumerate() {
                    coords[t][(a, b)] = v;
                }
            }
        }
        Ok(Self { system, level, coords })
    }

    /// `Σ_t X_t ⊗ B_t` (a lift, for quotient systems).
    pub fn ambient(&self) -> ComplexMatrix {
        let m = self.system.ambient_dim();
        let mut out = ComplexMatrix::zeros(self.level * m, self.level * m);
        for (x, b) in self.coords.iter().zip(self.system.basis()) {
            out.axpy(ONE, &x.kron(b.as_matrix()));
        }
        out
    }

    pub fn ambient_herm(&self) -> Result<HermMatrix> {
        HermMatrix::new(self.ambient())
    }

    pub fn add_unit(&self, s: f64) -> Self {
        let mut out = self.clone();
        for (x, u) in out.coords.iter_mut().zip(self.system.unit_coords()) {
            for i in 0..self.level {
                x[(i, i)] += C64::new(s * u, 0.0);
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for x in &mut out.coords {
            *x = x.scale_re(s);
        }
        out
    }
}

/// Verdict from a certified bracket `[lower, upper]` on the positivity margin.
fn margin_certificate(lower: f64, upper: f64, tol: f64, witness: Option<HermMatrix>, iterations: usize) -> Certificate {
    let verdict = if lower >= -tol {
        Verdict::Feasible
    } else if upper < -tol {
        Verdict::Infeasible
    } else {
        Verdict::Indeterminate
    };
    Certificate {
        verdict,
        witness,
        residual_affine: 0.0,
        residual_psd: (-lower).max(0.0),
        iterations,
        objective_value: Some(upper),
        lower_bound: Some(lower),
    }
}

/// Level-`k` positivity of `x`, dispatched on the regime of its system.
///
/// * concrete: `λ_min` of the ambient realization;
/// * quotient: `sup_D λ_min(lift + D)` over `D ∈ M_k(kernel)`;
/// * dual: `sup λ_min(C)` over Choi matrices `C` of maps on the inner ambient
///   algebra extending the functional block data (Arveson extension).
///
/// Positive iff the certified margin is at least `−tol`; negative iff its
/// certified upper bound is below `−tol`; otherwise indeterminate.
pub fn cone_member(x: &SystemElement, tol: f64) -> Result<Certificate> {
    cone_member_with(x, tol, &ConicConfig::default())
}

pub fn cone_member_with(x: &SystemElement, tol: f64, cfg: &ConicConfig) -> Result<Certificate> {
    let sys = &x.system;
    let k = x.level;
    let ambient = x.ambient_herm()?;
    match sys.regime() {
        Regime::Concrete => {
            let l = eig_herm(&ambient)?.min();
            Ok(margin_certificate(l, l, tol, None, 0))
        }
        Regime::Quotient(kernel) => {
            let dirs: Vec<HermMatrix> =
                hermitian_basis(k).iter().flat_map(|h| kernel.basis.iter().map(move |j| h.kron(j))).collect();
            let lm = max_lambda_min_with(&ambient, &dirs, cfg)?;
            let mut d = HermMatrix::zeros(ambient.dim());
            for (c, dir) in lm.coeffs.iter().zip(&dirs) {
                d.axpy(*c, dir);
            }
            Ok(margin_certificate(lm.value, lm.upper, tol, Some(d), lm.iterations))
        }
        Regime::Dual(inner) => {
            let m = sys.ambient_dim();
            match inner.regime() {
                Regime::Quotient(_) => {}
                Regime::Concrete if inner.is_full_algebra() => {}
                Regime::Concrete => return arveson_member(x, inner, tol, cfg),
                Regime::Dual(_) => {
                    return Err(Error::Unsupported("positivity in a dual of a dual system".into()));
                }
            }
            // The functional's map on M_m is x ↦ [tr(F_ij x)]; its Choi matrix is
            // the blockwise transpose of the representer, up to a factor swap.
            let choi = HermMatrix::symmetrize(&ambient.as_matrix().partial_transpose(m).swap_factors(k, m));
            let l = eig_herm(&choi)?.min();
            Ok(margin_certificate(l, l, tol, Some(choi), 0))
        }
    }
}

/// Dual positivity for a concrete inner system `E ⊆ M_m`: a Choi matrix
/// `C ∈ M_m ⊗ M_k` with `Φ(B_t) = X_t`, using `tr(E_c Φ(B)) = tr((Bᵀ ⊗ E_c) C)`.
fn arveson_member(x: &SystemElement, inner: &OperatorSystem, tol: f64, cfg: &ConicConfig) -> Result<Certificate> {
    let k = x.level;
    let m = inner.ambient_dim();
    let hk = hermitian_basis(k);
    let mut cons = Vec::with_capacity(inner.dim() * hk.len());
    for (b, target) in inner.basis().iter().zip(&x.coords) {
        let target = HermMatrix::new(target.clone())?;
        let bt = b.transpose();
        for e in &hk {
            cons.push((bt.kron(e), e.inner(&target)));
        }
    }
    let space = match AffineSpace::from_constraints(m * k, &cons) {
        Ok(s) => s,
        Err(Error::InfeasibleAffine(r)) => {
            return Ok(Certificate {
                verdict: Verdict::Infeasible,
                witness: None,
                residual_affine: r,
                residual_psd: 0.0,
                iterations: 0,
                objective_value: None,
                lower_bound: None,
            })
        }
        Err(e) => return Err(e),
    };
    let lm = max_lambda_min_in(&space, cfg)?;
    let choi = {
        let mut c = space.base().clone();
        let tangent = space.tangent_basis();
        let lifted = lm.coeffs.iter().zip(&tangent);
        for (ct, d) in lifted {
            c.axpy(*ct, d);
        }
        c
    };
    Ok(margin_certificate(lm.value, lm.upper, tol, Some(choi), lm.iterations))
}

/// Wire format for systems.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SystemJson {
    pub ambient_dim: usize,
    /// `"concrete"`, `"dual"` or `"quotient"`.
    pub regime: String,
    pub basis: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<MatrixJson>>,
    /// The predual system, for the dual regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<SystemJson>>,
}

impl From<&OperatorSystem> for SystemJson {
    fn from(s: &OperatorSystem) -> Self {
        let basis = s.basis.iter().map(MatrixJson::from).collect();
        let (regime, kernel, inner) = match &s.regime {
            Regime::Concrete => ("concrete", None, None),
            Regime::Quotient(k) => ("quotient", Some(k.basis.iter().map(MatrixJson::from).collect()), None),
            Regime::Dual(i) => ("dual", None, Some(Box::new(SystemJson::from(i.as_ref())))),
        };
        Self { ambient_dim: s.ambient_dim, regime: regime.into(), basis, kernel, inner }
    }
}

impl TryFrom<&SystemJson> for OperatorSystem {
    type Error = Error;
    fn try_from(j: &SystemJson) -> Result<Self> {
        let mats = |v: &[MatrixJson]| v.iter().map(HermMatrix::try_from).collect::<Result<Vec<_>>>();
        match j.regime.as_str() {
            "concrete" => {
                let basis = mats(&j.basis)?;
                let gens = if basis.first().is_some_and(|b| b.sub(&HermMatrix::identity(j.ambient_dim)).frob_norm() < 1e-12) {
                    &basis[1..]
                } else {
                    &basis[..]
                };
                make_system(j.ambient_dim, gens)
            }
            "quotient" => {
                let kernel = mats(j.kernel.as_deref().ok_or_else(|| Error::Config("quotient needs a kernel".into()))?)?;
                quotient_system(KernelSpace { ambient_dim: j.ambient_dim, basis: kernel })
            }
            "dual" => {
                let inner = j.inner.as_deref().ok_or_else(|| Error::Config("dual needs its inner system".into()))?;
                dual_system(&OperatorSystem::try_from(inner)?)
            }
            other => Err(Error::Config(format!("unknown regime {other:?}"))),
        }
    }
}
