//! `W_n` constructions: the covering map `γ_n`, the correction of almost
//! u.c.p. maps to u.c.p. maps, and the quotient/concrete comparison.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{ConicConfig, Verdict};
use crate::cpmaps::{cb_upper, is_ucp_with, knorm_lower, map_from_images, nearest_ucp, CpMap, DistanceBounds};
use crate::error::{Error, Result};
use crate::matcore::{eig_herm, op_norm, ComplexMatrix, HermMatrix};
use crate::opsys::{cone_member_with, wn_concrete_rep, wn_quotient_system, KernelSpace, OperatorSystem, SystemElement, WnRepresentation};
use crate::random::trial_rng;

/// A fixed `n` with the quotient model and sampled concrete representations.
#[derive(Clone, Debug)]
pub struct WnContext {
    pub n: usize,
    pub quotient: Arc<OperatorSystem>,
    pub kernel: KernelSpace,
    pub reps: Vec<WnRepresentation>,
    pub seed: u64,
}

/// Wire format: enough to rebuild the context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextJson {
    pub n: usize,
    pub seed: u64,
    pub rep_dims: Vec<usize>,
}

impl WnContext {
    /// Representation `r` has dimension `rep_dims[r]` and is drawn from
    /// `trial_rng(seed, r)`.
    pub fn new(n: usize, rep_dims: &[usize], seed: u64) -> Result<Self> {
        let (quotient, kernel) = wn_quotient_system(n)?;
        let reps = rep_dims
            .iter()
            .enumerate()
            .map(|(r, &d)| wn_concrete_rep(n, d, &mut trial_rng(seed, r as u64)))
            .collect::<Result<_>>()?;
        Ok(Self { n, quotient: Arc::new(quotient), kernel, reps, seed })
    }

    pub fn from_json(j: &ContextJson) -> Result<Self> {
        Self::new(j.n, &j.rep_dims, j.seed)
    }

    pub fn to_json(&self) -> ContextJson {
        ContextJson { n: self.n, seed: self.seed, rep_dims: self.reps.iter().map(|r| r.d).collect() }
    }

    pub fn size(&self) -> usize {
        self.n + 1
    }
}

/// `γ_n: e_ij ↦ u_i* u_j / (n+1)` into representation `rep`, or with
/// `None` the quotient map `M_{n+1} → M_{n+1}/J_{n+1}` written on lifts
/// (quotient coordinates of `γ_n(x)` are the class of `x`).
pub fn gamma_n(ctx: &WnContext, rep: Option<usize>) -> Result<CpMap> {
    let m = ctx.size();
    match rep {
        None => CpMap::identity(m),
        Some(r) => {
            let rep = ctx.reps.get(r).ok_or_else(|| Error::InvalidArgument(format!("no representation {r}")))?;
            let scale = 1.0 / m as f64;
            CpMap::from_matrix_units(m, rep.d, |i, j| rep.word(i, j).scale_re(scale))
        }
    }
}

/// Every intermediate quantity of [`correct_to_ucp`]. Distances are bounds on
/// the norm of the difference of the two maps on `M_{n+1}`: `*_upper` is
/// `Σ_ij ‖Δ(e_ij)‖ ≥ ‖Δ‖_cb`, `*_lower` a sampled lower bound on `‖Δ‖`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTrace {
    pub n: usize,
    pub codomain_dim: usize,
    pub delta: f64,
    /// `‖φ(1) − 1‖` of the input.
    pub input_unital_defect: f64,
    /// `‖φ'‖_{n+1}` lower bound for `φ' = φ ∘ γ_n`.
    pub input_knorm_lower: f64,
    /// Frobenius distance of Choi matrices of `ψ'` and `φ'`.
    pub step2_choi_distance: f64,
    pub step2_upper: f64,
    pub step2_lower: f64,
    /// `λ_min(b_i)` for `b_i = ψ'(e_ii)`.
    pub b_min_eigs: Vec<f64>,
    pub step4_upper: f64,
    pub step4_lower: f64,
    /// `max_i ‖ψ''(e_ii) − 1/(n+1)‖`.
    pub diagonal_defect: f64,
    pub unital_defect: f64,
    /// `max_r ‖ψ''(J_r)‖` over the kernel basis.
    pub kernel_defect: f64,
    /// `max_ij ‖ψ(u_i* u_j) − φ(u_i* u_j)‖`.
    pub word_distance: f64,
    pub final_upper: f64,
    pub final_lower: f64,
    /// `final_lower / word_distance`: the realized constant of the
    /// perturbation step (0 when the word distance vanishes).
    pub realized_constant: f64,
    /// `δ/16n⁴`, `δ/4n²`, `δ/2n²`.
    pub thresholds: [f64; 3],
    /// `step4_lower ≤ 4n² · step2_upper`.
    pub chain_holds: bool,
    pub output_ucp: bool,
    pub output_verdict: Verdict,
}

/// Tuning for [`correct_to_ucp`].
#[derive(Clone, Debug)]
pub struct CorrectionConfig {
    pub tol: f64,
    /// Random starts for each sampled norm lower bound.
    pub norm_trials: usize,
    pub conic: ConicConfig,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self { tol: 1e-7, norm_trials: 2, conic: ConicConfig::default() }
    }
}

/// Correct a unital map on `W_n` (domain the quotient model) to a u.c.p. map:
///
/// 1. `φ' = φ ∘ γ_n` on `M_{n+1}`;
/// 2. `ψ'` = Frobenius-nearest u.c.p. map in Choi geometry;
/// 3. `b_i = ψ'(e_ii)`, which must be uniformly invertible;
/// 4. `Ψ'' = B Ψ' B` with `B = diag(((n+1) b_i)^{-1/2})`, so that
///    `ψ''(e_ii) = 1/(n+1)` and `ψ''` vanishes on `J_{n+1}`;
/// 5. `ψ = ψ'' ∘ γ_n⁻¹`, read off on the quotient basis.
pub fn correct_to_ucp(phi: &CpMap, ctx: &WnContext, delta: f64, rng: &mut impl Rng) -> Result<(CpMap, CorrectionTrace)> {
    correct_to_ucp_with(phi, ctx, delta, &CorrectionConfig::default(), rng)
}

pub fn correct_to_ucp_with(
    phi: &CpMap,
    ctx: &WnContext,
    delta: f64,
    cfg: &CorrectionConfig,
    rng: &mut impl Rng,
) -> Result<(CpMap, CorrectionTrace)> {
    let (n, m, d) = (ctx.n, ctx.size(), phi.codomain_dim());
    if phi.domain().dim() != ctx.quotient.dim() || phi.domain().kernel().is_none() || phi.domain().ambient_dim() != m {
        return Err(Error::InvalidArgument(format!("input must be defined on the quotient model of W_{n}")));
    }
    let identity = ComplexMatrix::identity(d);
    let input_unital_defect = op_norm(&(&phi.unit_image() - &identity));

    let phi1 = phi.lifted()?;
    let input_knorm_lower = knorm_lower(&phi1, m, cfg.norm_trials, rng)?;

    let near = nearest_ucp(&phi1, &cfg.conic)?;
    let psi1 = near.map;
    let step2 = psi1.sub(&phi1)?;
    let step2_lower = knorm_lower(&step2, 1, cfg.norm_trials, rng)?;

    let threshold = cfg.tol * m as f64;
    let mut b_min_eigs = Vec::with_capacity(m);
    let mut b_scale = Vec::with_capacity(m);
    for i in 0..m {
        let b = HermMatrix::symmetrize(&psi1.on_matrix_unit(i, i)?);
        let e = eig_herm(&b)?;
        b_min_eigs.push(e.min());
        if e.min() <= threshold {
            return Err(Error::CorrectionFailure { index: i, min_eig: e.min(), threshold });
        }
        b_scale.push(e.reconstruct_with(|l| 1.0 / (m as f64 * l).sqrt()).into_matrix());
    }
    let psi2 = CpMap::from_matrix_units(m, d, |i, j| {
        b_scale[i].matmul(&psi1.on_matrix_unit(i, j).expect("full domain")).matmul(&b_scale[j])
    })?;
    let step4 = psi2.sub(&psi1)?;
    let step4_lower = knorm_lower(&step4, 1, cfg.norm_trials, rng)?;

    let target = identity.scale_re(1.0 / m as f64);
    let mut diagonal_defect: f64 = 0.0;
    for i in 0..m {
        diagonal_defect = diagonal_defect.max(op_norm(&(&psi2.on_matrix_unit(i, i)? - &target)));
    }
    let unital_defect = op_norm(&(&psi2.unit_image() - &identity));
    let mut kernel_defect: f64 = 0.0;
    for j in &ctx.kernel.basis {
        kernel_defect = kernel_defect.max(op_norm(&psi2.apply(j.as_matrix())?));
    }
    if kernel_defect > cfg.tol || unital_defect > cfg.tol {
        return Err(Error::InvalidArgument(format!(
            "corrected map is not unital on the quotient (kernel {kernel_defect:.2e}, unit {unital_defect:.2e})"
        )));
    }

    let images = phi.domain().basis().iter().map(|b| psi2.apply(b.as_matrix())).collect::<Result<_>>()?;
    let psi = map_from_images(phi.domain().clone(), d, images)?;

    let mut word_distance: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let diff = &psi2.on_matrix_unit(i, j)? - &phi1.on_matrix_unit(i, j)?;
            word_distance = word_distance.max(m as f64 * op_norm(&diff));
        }
    }
    let final_diff = psi.sub(phi)?;
    let final_lower = knorm_lower(&final_diff, 1, cfg.norm_trials, rng)?;
    let final_upper = cb_upper(&final_diff.lifted()?)?;
    let step2_upper = cb_upper(&step2)?;
    let step4_upper = cb_upper(&step4)?;
    let nf = n as f64;
    let output_verdict = is_ucp_with(&psi, cfg.tol, &cfg.conic)?.verdict;
    let output_ucp = output_verdict == Verdict::Feasible;
    let trace = CorrectionTrace {
        n,
        codomain_dim: d,
        delta,
        input_unital_defect,
        input_knorm_lower,
        step2_choi_distance: near.choi_distance,
        step2_upper,
        step2_lower,
        b_min_eigs,
        step4_upper,
        step4_lower,
        diagonal_defect,
        unital_defect,
        kernel_defect,
        word_distance,
        final_upper,
        final_lower,
        realized_constant: if word_distance > 0.0 { final_lower / word_distance } else { 0.0 },
        thresholds: [delta / (16.0 * nf.powi(4)), delta / (4.0 * nf * nf), delta / (2.0 * nf * nf)],
        chain_holds: step4_lower <= 4.0 * nf * nf * step2_upper + cfg.tol,
        output_ucp,
        output_verdict,
    };
    Ok((psi, trace))
}

/// The u.c.p. map `W_n → M_d` of representation `rep`, on the quotient model.
pub fn rep_map(ctx: &WnContext, rep: usize) -> Result<CpMap> {
    let gamma = gamma_n(ctx, Some(rep))?;
    let images = ctx.quotient.basis().iter().map(|b| gamma.apply(b.as_matrix())).collect::<Result<_>>()?;
    map_from_images(ctx.quotient.clone(), gamma.codomain_dim(), images)
}

/// A unital self-adjoint perturbation `Δ` on `W_n` (so `Δ(1) = 0`) with
/// `cb_upper(Δ ∘ γ_n) = eps`.
pub fn unital_perturbation(ctx: &WnContext, d: usize, eps: f64, rng: &mut impl Rng) -> Result<CpMap> {
    crate::cpmaps::unital_perturbation(&ctx.quotient, d, eps, rng)
}

/// Comparison of the quotient cone with its concrete images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientComparison {
    pub level: usize,
    pub quotient_verdict: Verdict,
    /// Certified margin bracket in the quotient.
    pub quotient_lower: f64,
    pub quotient_upper: f64,
    /// `λ_min` of the image in each sampled representation.
    pub concrete_margins: Vec<f64>,
    pub concrete_all_positive: bool,
    /// Quotient-positive but negative in some representation (must not happen).
    pub necessary_violation: bool,
    /// Positive in every sampled representation but quotient-negative.
    pub converse_exception: bool,
    /// `n = 1`, level 1: `p + r ≥ 2|q|` for the lift `[[p, q], [q̄, r]]`.
    pub circle_oracle: Option<bool>,
}

/// The exact `n = 1` predicate: `(p + r)/2 − |q| ≥ −tol`.
pub fn circle_oracle(lift: &ComplexMatrix, tol: f64) -> bool {
    let (p, q, r) = (lift[(0, 0)].re, lift[(0, 1)], lift[(1, 1)].re);
    (p + r) / 2.0 - q.norm() >= -tol
}

pub fn quotient_vs_concrete(ctx: &WnContext, x: &SystemElement, tol: f64) -> Result<QuotientComparison> {
    quotient_vs_concrete_with(ctx, x, tol, &ConicConfig::default())
}

pub fn quotient_vs_concrete_with(ctx: &WnContext, x: &SystemElement, tol: f64, cfg: &ConicConfig) -> Result<QuotientComparison> {
    if x.system.kernel().is_none() || x.system.ambient_dim() != ctx.size() {
        return Err(Error::InvalidArgument("element must be in quotient coordinates".into()));
    }
    let cert = cone_member_with(x, tol, cfg)?;
    let lift = x.ambient();
    let concrete_margins = ctx
        .reps
        .iter()
        .map(|rep| Ok(eig_herm(&HermMatrix::symmetrize(&rep.image(&lift, x.level)))?.min()))
        .collect::<Result<Vec<_>>>()?;
    let concrete_all_positive = concrete_margins.iter().all(|&l| l >= -tol);
    let positive = cert.verdict == Verdict::Feasible;
    let negative = cert.verdict == Verdict::Infeasible;
    Ok(QuotientComparison {
        level: x.level,
        quotient_verdict: cert.verdict,
        quotient_lower: cert.lower_bound.unwrap_or(f64::NEG_INFINITY),
        quotient_upper: cert.objective_value.unwrap_or(f64::INFINITY),
        necessary_violation: positive && !concrete_all_positive,
        converse_exception: negative && concrete_all_positive,
        concrete_margins,
        concrete_all_positive,
        circle_oracle: (ctx.n == 1 && x.level == 1).then(|| circle_oracle(&lift, tol)),
    })
}

/// Distance pair between two maps on the same domain, for reports.
pub fn distance_pair(f: &CpMap, g: &CpMap, trials: usize, rng: &mut impl Rng) -> Result<DistanceBounds> {
    let diff = f.sub(g)?;
    let lower = knorm_lower(&diff, 1, trials, rng)?;
    let upper = match diff.domain().kernel() {
        Some(_) => Some(cb_upper(&diff.lifted()?)?),
        None if diff.domain().is_full_algebra() => Some(cb_upper(&diff)?),
        None => None,
    };
    Ok(DistanceBounds { lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpmaps::{choi_of, is_ucp};
    use crate::matcore::{C64, ONE};
    use crate::random::seeded;

    #[test]
    fn gamma_one_trivial_rep() {
        let rep = WnRepresentation::from_unitaries(1, vec![ComplexMatrix::identity(1)]).unwrap();
        let ctx = WnContext { reps: vec![rep], ..WnContext::new(1, &[], 0).unwrap() };
        let g = gamma_n(&ctx, Some(0)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((g.on_matrix_unit(i, j).unwrap()[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-15);
            }
        }
        let c = choi_of(&g).unwrap();
        let e = eig_herm(&c).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12 && e.values[1].abs() < 1e-12);
    }

    #[test]
    fn gamma_identities() {
        for n in 1..=3 {
            let ctx = WnContext::new(n, &[2, 3, 4], 11).unwrap();
            for r in 0..3 {
                let g = gamma_n(&ctx, Some(r)).unwrap();
                let id = ComplexMatrix::identity(ctx.reps[r].d);
                assert!((&g.unit_image() - &id).max_abs() < 1e-12);
                for j in &ctx.kernel.basis {
                    assert!(g.apply(j.as_matrix()).unwrap().max_abs() < 1e-12);
                }
                assert!(is_ucp(&g, 1e-9).unwrap().is_feasible());
                assert!(is_ucp(&rep_map(&ctx, r).unwrap(), 1e-9).unwrap().is_feasible());
            }
        }
    }

    #[test]
    fn correction_fixed_point() {
        let mut rng = seeded(3);
        let ctx = WnContext::new(2, &[3], 5).unwrap();
        let phi = rep_map(&ctx, 0).unwrap();
        let (psi, trace) = correct_to_ucp(&phi, &ctx, 0.1, &mut rng).unwrap();
        assert!(trace.output_ucp);
        assert!(trace.final_upper < 1e-8, "{trace:?}");
        assert!(trace.step2_upper < 1e-8 && trace.step4_upper < 1e-8);
        for (a, b) in psi.images().iter().zip(phi.images()) {
            assert!((a - b).max_abs() < 1e-8);
        }
    }

    #[test]
    fn correction_of_perturbed_maps() {
        let mut rng = seeded(4);
        for n in 1..=2 {
            let ctx = WnContext::new(n, &[2], 6).unwrap();
            let base = rep_map(&ctx, 0).unwrap();
            let mut last = f64::INFINITY;
            for eps in [0.2, 0.05, 0.01] {
                let phi = base.add(&unital_perturbation(&ctx, 2, eps, &mut rng).unwrap()).unwrap();
                let (psi, trace) = correct_to_ucp(&phi, &ctx, 0.1, &mut rng).unwrap();
                assert!(trace.output_ucp && is_ucp(&psi, 1e-7).unwrap().is_feasible());
                assert!(trace.input_unital_defect < 1e-12);
                assert!(trace.input_knorm_lower <= 1.0 + eps + 1e-9);
                assert!(trace.kernel_defect < 1e-10 && trace.diagonal_defect < 1e-10);
                assert!(trace.chain_holds);
                assert!(trace.final_upper < last);
                last = trace.final_upper;
                let json = serde_json::to_string(&trace).unwrap();
                assert_eq!(serde_json::from_str::<CorrectionTrace>(&json).unwrap(), trace);
            }
        }
    }

    #[test]
    fn far_inputs_correct_or_name_the_index() {
        let mut rng = seeded(5);
        let ctx = WnContext::new(1, &[2], 7).unwrap();
        let mut images: Vec<ComplexMatrix> = ctx.quotient.basis().iter().map(|_| ComplexMatrix::zeros(2, 2)).collect();
        images[0] = ComplexMatrix::identity(2);
        let zero_map = map_from_images(ctx.quotient.clone(), 2, images).unwrap();
        let big = unital_perturbation(&ctx, 2, 1e6, &mut rng).unwrap();
        let phi = zero_map.add(&big).unwrap();
        match correct_to_ucp(&phi, &ctx, 0.1, &mut rng) {
            Err(Error::CorrectionFailure { index, .. }) => assert!(index < 2),
            Ok((psi, t)) => assert!(t.output_ucp && is_ucp(&psi, 1e-7).unwrap().is_feasible()),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn circle_oracle_boundary_and_comparison() {
        let ctx = WnContext::new(1, &[2, 3, 4], 8).unwrap();
        let lift = ComplexMatrix::from_fn(2, 2, |_, _| ONE);
        let x = SystemElement::from_ambient(ctx.quotient.clone(), 1, &lift).unwrap();
        let c = quotient_vs_concrete(&ctx, &x, 1e-6).unwrap();
        assert_eq!(c.quotient_verdict, Verdict::Feasible);
        assert_eq!(c.circle_oracle, Some(true));
        assert!(c.concrete_all_positive && !c.necessary_violation && !c.converse_exception);

        let lift = ComplexMatrix::from_fn(2, 2, |i, j| if i == j { ONE } else { C64::new(0.0, 1.1) * if i < j { 1.0 } else { -1.0 } });
        let x = SystemElement::from_ambient(ctx.quotient.clone(), 1, &lift).unwrap();
        let c = quotient_vs_concrete(&ctx, &x, 1e-6).unwrap();
        assert_eq!(c.quotient_verdict, Verdict::Infeasible);
        assert_eq!(c.circle_oracle, Some(false));
        assert!((c.quotient_lower + 0.1).abs() < 1e-8);
    }

    #[test]
    fn context_json_rebuilds_the_same_reps() {
        let ctx = WnContext::new(2, &[2, 3], 9).unwrap();
        let back = WnContext::from_json(&serde_json::from_str(&serde_json::to_string(&ctx.to_json()).unwrap()).unwrap()).unwrap();
        for (a, b) in ctx.reps.iter().zip(&back.reps) {
            assert_eq!(a.unitaries, b.unitaries);
        }
    }
}
