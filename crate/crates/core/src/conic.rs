//! Feasibility and linear optimization over the PSD cone intersected with an
//! affine subspace, by Dykstra's alternating projections.
//!
//! Infeasibility is detected heuristically: the distance between the two
//! iterates stops shrinking while staying well above tolerance. Certificates
//! therefore carry three verdicts and never fold `Indeterminate` into either
//! of the others.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{eig_herm, eig_herm_warm, op_norm, orthonormalize, psd_part, AffineSpace, ComplexMatrix, Eigen, HermMatrix};

/// Every numerical knob of the engine.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConicConfig {
    /// Feasibility tolerance on both residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations of non-shrinking gap (above `10·tol`) that count as infeasible.
    pub stall_window: usize,
    /// Relative decrease over `stall_window` below which the gap counts as stalled.
    pub stall_ratio: f64,
    /// Newton steps per smoothing level in `max_lambda_min`.
    pub newton_max_iter: usize,
    /// Relative primal-dual gap at which `max_lambda_min` stops.
    pub gap_target: f64,
}

impl Default for ConicConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 20_000,
            stall_window: 500,
            stall_ratio: 1e-3,
            newton_max_iter: 60,
            gap_target: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Feasible,
    Infeasible,
    Indeterminate,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub verdict: Verdict,
    pub witness: Option<HermMatrix>,
    /// Distance between the last PSD iterate and the affine set.
    pub residual_affine: f64,
    /// `max(0, -λ_min(witness + shift))`.
    pub residual_psd: f64,
    pub iterations: usize,
    /// Objective at the witness (an upper bound on the minimum). Cone
    /// membership queries store the upper bound on their margin here.
    pub objective_value: Option<f64>,
    /// Certified lower bound on the minimum (or on the margin).
    pub lower_bound: Option<f64>,
}

impl Certificate {
    pub fn is_feasible(&self) -> bool {
        self.verdict == Verdict::Feasible
    }
}

/// Find `y` in the affine set with `y + psd_shift ⪰ 0`; optionally minimize
/// `⟨objective, y⟩`.
#[derive(Clone, Debug)]
pub struct ConeProblem {
    pub dim: usize,
    pub affine: Vec<(HermMatrix, f64)>,
    pub psd_shift: HermMatrix,
    pub objective: Option<HermMatrix>,
}

impl ConeProblem {
    pub fn new(dim: usize) -> Self {
        Self { dim, affine: Vec::new(), psd_shift: HermMatrix::zeros(dim), objective: None }
    }

    pub fn with_constraint(mut self, c: HermMatrix, b: f64) -> Self {
        self.affine.push((c, b));
        self
    }

    pub fn with_shift(mut self, shift: HermMatrix) -> Self {
        self.psd_shift = shift;
        self
    }

    pub fn with_objective(mut self, obj: HermMatrix) -> Self {
        self.objective = Some(obj);
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = self.affine.iter().any(|(c, _)| c.dim() != self.dim)
            || self.psd_shift.dim() != self.dim
            || self.objective.as_ref().is_some_and(|o| o.dim() != self.dim);
        if bad {
            return Err(Error::DimensionMismatch("cone problem matrices must share one dimension".into()));
        }
        Ok(())
    }
}

/// Result of one Dykstra run in the shifted coordinates `x = y + shift`.
#[derive(Clone, Debug)]
struct DykstraRun {
    verdict: Verdict,
    /// Its projection onto the affine set.
    affine_point: HermMatrix,
    gap: f64,
    min_eig: f64,
    iterations: usize,
}

/// Dykstra between `space` and the PSD cone, from `start`. For an affine set
/// only the cone step needs a correction term, so the iteration is
/// `y = P_A(x)`, `x' = P_K(y + q)`, `q' = y + q - x'`; its limit is the
/// projection of `start` onto the intersection.
fn dykstra(space: &AffineSpace, start: &HermMatrix, tol: f64, max_iter: usize, cfg: &ConicConfig) -> Result<DykstraRun> {
    let dim = space.dim();
    let mut x = start.clone();
    let mut q = HermMatrix::zeros(dim);
    let mut basis: ComplexMatrix = ComplexMatrix::identity(dim);
    let mut history: Vec<f64> = Vec::with_capacity(max_iter.min(1 << 16));
    let mut iterations = 0;

    let finish = |verdict, y: HermMatrix, gap, iterations| -> Result<DykstraRun> {
        let min_eig = eig_herm(&y)?.min();
        Ok(DykstraRun { verdict, affine_point: y, gap, min_eig, iterations })
    };

    loop {
        let y = space.project(&x);
        let gap = y.sub(&x).frob_norm();
        if iterations > 0 && gap <= tol {
            let e = eig_herm_warm(&y, &basis)?;
            if e.min() >= -tol {
                return finish(Verdict::Feasible, y, gap, iterations);
            }
        }
        if iterations == 0 && gap <= tol {
            let e = eig_herm(&y)?;
            if e.min() >= -tol {
                return finish(Verdict::Feasible, y, gap, iterations);
            }
        }
        history.push(gap);
        if iterations >= cfg.stall_window && gap > 10.0 * tol {
            let old = history[iterations - cfg.stall_window];
            if old - gap < cfg.stall_ratio * gap {
                return finish(Verdict::Infeasible, y, gap, iterations);
            }
        }
        if iterations >= max_iter {
            return finish(Verdict::Indeterminate, y, gap, iterations);
        }
        let z = y.add(&q);
        let e = eig_herm_warm(&z, &basis)?;
        basis = e.vectors.clone();
        let xn = psd_part(&e);
        q = z.sub(&xn);
        x = xn;
        iterations += 1;
    }
}

fn affine_space(p: &ConeProblem) -> Result<AffineSpace> {
    if p.affine.is_empty() {
        Ok(AffineSpace::everything(p.dim))
    } else {
        AffineSpace::from_constraints(p.dim, &p.affine)
    }
}

fn certificate_from(run: DykstraRun, shift: &HermMatrix, objective: Option<&HermMatrix>) -> Certificate {
    let witness = run.affine_point.sub(shift);
    let objective_value = objective.map(|o| o.inner(&witness));
    Certificate {
        verdict: run.verdict,
        residual_affine: run.gap,
        residual_psd: (-run.min_eig).max(0.0),
        iterations: run.iterations,
        witness: Some(witness),
        objective_value,
        lower_bound: None,
    }
}

/// Feasibility of `{y ∈ affine : y + shift ⪰ 0}`.
pub fn dykstra_feasible(p: &ConeProblem, tol: f64, max_iter: usize) -> Result<Certificate> {
    dykstra_feasible_with(p, tol, max_iter, &ConicConfig::default())
}

pub fn dykstra_feasible_with(p: &ConeProblem, tol: f64, max_iter: usize, cfg: &ConicConfig) -> Result<Certificate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    p.validate()?;
    let space = affine_space(p)?.translated(&p.psd_shift);
    let start = space.project(&HermMatrix::zeros(p.dim));
    let run = dykstra(&space, &start, tol, max_iter, cfg)?;
    Ok(certificate_from(run, &p.psd_shift, p.objective.as_ref()))
}

/// Frobenius-nearest point to `target` in `{x ∈ space : x ⪰ 0}`.
pub fn nearest_psd_in(space: &AffineSpace, target: &HermMatrix, cfg: &ConicConfig) -> Result<Certificate> {
    let run = dykstra(space, target, cfg.tol, cfg.max_iter, cfg)?;
    Ok(certificate_from(run, &HermMatrix::zeros(space.dim()), None))
}

/// Minimize `⟨objective, y⟩` over `{y ∈ affine : ⟨N, y⟩ = β, y + shift ⪰ 0}`.
///
/// The slice must be compact, i.e. `N ≻ 0`. The problem is solved through its
/// dual: with `X = y + shift` and `W = N^{-1/2}`, the optimum equals
/// `β'·sup_c λ_min(W A W + Σ c_t D_t) − ⟨A, shift⟩` for
/// `D_t = W (C_t − (b'_t/β') N) W`, computed by [`max_lambda_min`].
/// `lower_bound` is the dual value at the achieved coefficients and
/// `objective_value`/`witness` come from its primal density; both are exact up
/// to rounding, so the true minimum lies between them.
pub fn min_linear(p: &ConeProblem, normalization: (HermMatrix, f64)) -> Result<Certificate> {
    min_linear_with(p, normalization, &ConicConfig::default())
}

pub fn min_linear_with(p: &ConeProblem, normalization: (HermMatrix, f64), cfg: &ConicConfig) -> Result<Certificate> {
    p.validate()?;
    let objective =
        p.objective.clone().ok_or_else(|| Error::InvalidArgument("min_linear needs an objective".into()))?;
    let (norm_mat, beta) = normalization;
    if norm_mat.dim() != p.dim {
        return Err(Error::DimensionMismatch("normalization matrix dimension".into()));
    }
    let shift = &p.psd_shift;
    let beta_s = beta + norm_mat.inner(shift);
    let empty = |residual: f64| Certificate {
        verdict: Verdict::Infeasible,
        witness: None,
        residual_affine: residual,
        residual_psd: 0.0,
        iterations: 0,
        objective_value: None,
        lower_bound: None,
    };
    if beta_s <= 0.0 {
        return Ok(empty(-beta_s));
    }
    let ne = eig_herm(&norm_mat)?;
    if ne.min() <= 0.0 {
        return Err(Error::InvalidArgument("normalization must be positive definite (compact slice)".into()));
    }
    let whiten = ne.reconstruct_with(|l| 1.0 / l.sqrt()).into_matrix();
    let x0 = objective.congruence(&whiten);
    let directions: Vec<HermMatrix> = p
        .affine
        .iter()
        .map(|(c, b)| {
            let b_s = b + c.inner(shift);
            let mut d = c.clone();
            d.axpy(-b_s / beta_s, &norm_mat);
            d.congruence(&whiten)
        })
        .collect();
    let lm = max_lambda_min_with(&x0, &directions, cfg)?;
    if lm.unbounded {
        // dual unbounded: the primal slice is empty
        return Ok(empty(f64::INFINITY));
    }
    let offset = objective.inner(shift);
    let lower = beta_s * lm.value - offset;
    let mut cert = Certificate {
        verdict: Verdict::Indeterminate,
        witness: None,
        residual_affine: f64::NAN,
        residual_psd: f64::NAN,
        iterations: lm.iterations,
        objective_value: None,
        lower_bound: Some(lower),
    };
    if let Some(primal) = &lm.primal {
        let x = primal.congruence(&whiten).scale(beta_s);
        let y = x.sub(shift);
        let affine_res = p
            .affine
            .iter()
            .chain(std::iter::once(&(norm_mat.clone(), beta)))
            .map(|(c, b)| (c.inner(&y) - b).abs())
            .fold(0.0, f64::max);
        cert.residual_affine = affine_res;
        cert.residual_psd = (-eig_herm(&x)?.min()).max(0.0);
        cert.objective_value = Some(objective.inner(&y));
        cert.witness = Some(y);
        cert.verdict = Verdict::Feasible;
    }
    Ok(cert)
}

/// Outcome of [`max_lambda_min`].
#[derive(Clone, Debug)]
pub struct LambdaMax {
    /// `λ_min` at `coeffs`, computed exactly: a certified lower bound on the supremum.
    pub value: f64,
    /// `⟨x0, primal⟩`, a certified upper bound (infinite when no primal point was found).
    pub upper: f64,
    pub coeffs: Vec<f64>,
    pub unbounded: bool,
    /// Density matrix `X ⪰ 0`, `tr X = 1`, `X ⊥ D_t`.
    pub primal: Option<HermMatrix>,
    /// Newton steps taken.
    pub iterations: usize,
}

impl LambdaMax {
    pub fn gap(&self) -> f64 {
        self.upper - self.value
    }
}

/// `sup_c λ_min(x0 + Σ c_t D_t)`.
///
/// The concave objective is replaced by its log-sum-exp smoothing
/// `f_μ = −μ log tr exp(−M/μ)`, which is maximized by damped Newton steps while
/// `μ` is driven towards zero. The softmax spectral weights at the end give a
/// primal density; projecting it onto `{tr X = 1, X ⊥ D_t}` and mixing with a
/// strictly positive slice point makes it exactly feasible.
pub fn max_lambda_min(x0: &HermMatrix, directions: &[HermMatrix]) -> Result<LambdaMax> {
    max_lambda_min_with(x0, directions, &ConicConfig::default())
}

pub fn max_lambda_min_with(x0: &HermMatrix, directions: &[HermMatrix], cfg: &ConicConfig) -> Result<LambdaMax> {
    let dim = x0.dim();
    if directions.iter().any(|d| d.dim() != dim) {
        return Err(Error::DimensionMismatch("direction dimension differs from x0".into()));
    }
    let base = eig_herm(x0)?;
    let (basis, _) = orthonormalize(directions);
    if basis.is_empty() {
        let v = ComplexMatrix::from_fn(dim, 1, |i, _| base.vectors[(i, dim - 1)]);
        let primal = HermMatrix::symmetrize(&v.matmul(&v.adjoint()));
        return Ok(LambdaMax {
            value: base.min(),
            upper: x0.inner(&primal),
            coeffs: vec![0.0; directions.len()],
            unbounded: false,
            primal: Some(primal),
            iterations: 0,
        });
    }

    // Primal slice. Without a PSD point in it some Σ c_t D_t is positive definite.
    let mut slice_cons: Vec<(HermMatrix, f64)> = basis.iter().map(|d| (d.clone(), 0.0)).collect();
    slice_cons.push((HermMatrix::identity(dim), 1.0));
    let unbounded = |iterations| LambdaMax {
        value: f64::INFINITY,
        upper: f64::INFINITY,
        coeffs: Vec::new(),
        unbounded: true,
        primal: None,
        iterations,
    };
    let slice = match AffineSpace::from_constraints(dim, &slice_cons) {
        Ok(s) => s,
        Err(Error::InfeasibleAffine(_)) => return Ok(unbounded(0)),
        Err(e) => return Err(e),
    };
    let mut center = slice.project(&HermMatrix::identity(dim).scale(1.0 / dim as f64));
    let mut center_min = eig_herm(&center)?.min();
    if center_min < 0.0 {
        let cert = nearest_psd_in(&slice, &center, cfg)?;
        match (cert.verdict, cert.witness) {
            (Verdict::Feasible, Some(w)) => {
                center = w;
                center_min = eig_herm(&center)?.min();
            }
            _ => return Ok(unbounded(cert.iterations)),
        }
    }

    let scale = 1.0 + op_norm(x0.as_matrix());
    let mut c = vec![0.0; basis.len()];
    let point = |c: &[f64]| {
        let mut m = x0.clone();
        for (ct, d) in c.iter().zip(&basis) {
            m.axpy(*ct, d);
        }
        m
    };
    let mut iterations = 0;
    let mut best_primal: Option<(HermMatrix, f64)> = None;
    let mut mu = 0.1 * scale;
    let mu_floor = 1e-11 * scale;
    let mut state = Smoothed::at(&point(&c), &basis, mu, None)?;
    loop {
        for _ in 0..cfg.newton_max_iter {
            let step = state.newton_step();
            let decrement: f64 = step.iter().zip(&state.grad).map(|(a, b)| a * b).sum();
            if !(decrement > 1e-15 * scale) {
                break;
            }
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-12 {
                let trial: Vec<f64> = c.iter().zip(&step).map(|(a, b)| a + t * b).collect();
                let (eigen, value) = Smoothed::value(&point(&trial), mu, Some(&state.eigen.vectors))?;
                if value >= state.value + 0.25 * t * decrement {
                    accepted = Some((trial, Smoothed::derive(eigen, value, &basis, mu)));
                    break;
                }
                t *= 0.5;
            }
            iterations += 1;
            match accepted {
                Some((trial, next)) => {
                    c = trial;
                    state = next;
                }
                None => break,
            }
            if c.iter().any(|x| x.abs() > 1e8 * scale) {
                return Ok(unbounded(iterations));
            }
        }
        if let Some((x, v)) = primal_from(&state, &slice, &center, center_min, x0, cfg)? {
            if best_primal.as_ref().map_or(true, |(_, u)| v < *u) {
                best_primal = Some((x, v));
            }
        }
        let lower = state.eigen.min();
        if best_primal.as_ref().map_or(false, |(_, u)| u - lower <= cfg.gap_target * scale) || mu <= mu_floor {
            break;
        }
        mu = (mu * 0.1).max(mu_floor);
        state = Smoothed::at(&point(&c), &basis, mu, Some(&state.eigen.vectors))?;
    }

    let best = point(&c);
    let coeffs = least_squares_coeffs(&best.sub(x0), directions);
    // certify the point the caller can rebuild, not the internal one
    let mut rebuilt = x0.clone();
    for (ct, d) in coeffs.iter().zip(directions) {
        rebuilt.axpy(*ct, d);
    }
    let value = eig_herm(&rebuilt)?.min();
    let (primal, upper) = match best_primal {
        Some((x, u)) => (Some(x), u),
        None => (None, f64::INFINITY),
    };

    Ok(LambdaMax {
        value,
        upper: upper.max(value),
        coeffs,
        unbounded: false,
        primal,
        iterations,
    })
}

/// Softmax spectral weights turned into an exactly feasible primal density.
fn primal_from(
    state: &Smoothed,
    slice: &AffineSpace,
    center: &HermMatrix,
    center_min: f64,
    x0: &HermMatrix,
    cfg: &ConicConfig,
) -> Result<Option<(HermMatrix, f64)>> {
    let weights = state.weights();
    let x = slice.project(&state.eigen.reconstruct_with_index(|i| weights[i]));
    let r = (-eig_herm(&x)?.min()).max(0.0);
    let x = if r > 0.0 && center_min > 0.0 {
        let t = r / (r + center_min);
        x.scale(1.0 - t).add(&center.scale(t))
    } else {
        x
    };
    if eig_herm(&x)?.min() < -cfg.tol {
        return Ok(None);
    }
    let v = x0.inner(&x);
    Ok(Some((x, v)))
}

/// Value, gradient and Hessian of the smoothed `λ_min` in the coordinates of
/// an orthonormal direction basis.
struct Smoothed {
    eigen: Eigen,
    mu: f64,
    value: f64,
    grad: Vec<f64>,
    hess: Vec<Vec<f64>>,
}

impl Smoothed {
    fn at(m: &HermMatrix, basis: &[HermMatrix], mu: f64, guess: Option<&ComplexMatrix>) -> Result<Self> {
        let (eigen, value) = Self::value(m, mu, guess)?;
        Ok(Self::derive(eigen, value, basis, mu))
    }

    /// Spectrum and smoothed value only, for line-search trials.
    fn value(m: &HermMatrix, mu: f64, guess: Option<&ComplexMatrix>) -> Result<(Eigen, f64)> {
        let eigen = match guess {
            Some(g) => eig_herm_warm(m, g)?,
            None => eig_herm(m)?,
        };
        let lmin = eigen.min();
        let z: f64 = eigen.values.iter().map(|l| (-(l - lmin) / mu).exp()).sum();
        let value = lmin - mu * z.ln();
        Ok((eigen, value))
    }

    fn derive(eigen: Eigen, value: f64, basis: &[HermMatrix], mu: f64) -> Self {
        let lmin = eigen.min();
        let n = eigen.values.len();
        let exps: Vec<f64> = eigen.values.iter().map(|l| (-(l - lmin) / mu).exp()).collect();
        let z: f64 = exps.iter().sum();
        let w: Vec<f64> = exps.iter().map(|e| e / z).collect();

        let v = &eigen.vectors;
        let vh = v.adjoint();
        let lam = &eigen.values;
        // Γ_ij = (w_i − w_j)/(λ_i − λ_j), with the diagonal limit −w_i/μ
        let mut gamma = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let dl = lam[i] - lam[j];
                gamma[i * n + j] = if dl.abs() > 1e-9 * mu { (w[i] - w[j]) / dl } else { -w[i] / mu };
            }
        }
        // rotated directions as interleaved (re, im) rows, plain and Γ-weighted
        let mut grad = Vec::with_capacity(basis.len());
        let mut plain: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
        let mut weighted: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
        for d in basis {
            let r = vh.matmul(&d.as_matrix().matmul(v));
            grad.push((0..n).map(|i| w[i] * r[(i, i)].re).sum::<f64>());
            let flat: Vec<f64> = r.data().iter().flat_map(|z| [z.re, z.im]).collect();
            weighted.push(flat.iter().enumerate().map(|(t, x)| x * gamma[t / 2]).collect());
            plain.push(flat);
        }
        // H_st = Re⟨Γ∘A_s, A_t⟩ + g_s g_t / μ
        let k = basis.len();
        let mut hess = vec![vec![0.0; k]; k];
        for s in 0..k {
            for t in s..k {
                let dot: f64 = weighted[s].iter().zip(&plain[t]).map(|(x, y)| x * y).sum();
                let h = dot + grad[s] * grad[t] / mu;
                hess[s][t] = h;
                hess[t][s] = h;
            }
        }
        Smoothed { eigen, mu, value, grad, hess }
    }

    fn weights(&self) -> Vec<f64> {
        let lmin = self.eigen.min();
        let e: Vec<f64> = self.eigen.values.iter().map(|l| (-(l - lmin) / self.mu).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|x| x / z).collect()
    }

    /// Solves `(−H) Δ = g` by Cholesky, regularizing the (semidefinite)
    /// negated Hessian until the factorization succeeds.
    fn newton_step(&self) -> Vec<f64> {
        let k = self.grad.len();
        let scale = (0..k).map(|s| -self.hess[s][s]).fold(0.0, f64::max).max(1e-300);
        let mut shift = 1e-12 * scale;
        loop {
            if let Some(l) = cholesky(&self.hess, shift) {
                return cholesky_solve(&l, &self.grad);
            }
            shift *= 100.0;
        }
    }
}

/// Lower factor of `−h + shift·I`, or `None` if it is not positive definite.
fn cholesky(h: &[Vec<f64>], shift: f64) -> Option<Vec<Vec<f64>>> {
    let k = h.len();
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = -h[i][j] + if i == j { shift } else { 0.0 };
            for t in 0..j {
                sum -= l[i][t] * l[j][t];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut y = vec![0.0; k];
    for i in 0..k {
        let s: f64 = (0..i).map(|t| l[i][t] * y[t]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|t| l[t][i] * x[t]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

/// `sup { λ_min(x) : x ∈ space }`.
pub fn max_lambda_min_in(space: &AffineSpace, cfg: &ConicConfig) -> Result<LambdaMax> {
    max_lambda_min_with(space.base(), &space.tangent_basis(), cfg)
}

/// Coefficients `c` minimizing `‖target − Σ c_t D_t‖_F`.
pub fn least_squares_coeffs(target: &HermMatrix, directions: &[HermMatrix]) -> Vec<f64> {
    let k = directions.len();
    if k == 0 {
        return Vec::new();
    }
    let gram = HermMatrix::symmetrize(&ComplexMatrix::from_fn(k, k, |s, t| directions[s].inner(&directions[t]).into()));
    let rhs: Vec<f64> = directions.iter().map(|d| d.inner(target)).collect();
    let e = eig_herm(&gram).expect("Gram matrix eigendecomposition");
    let cutoff = 1e-12 * e.max().abs().max(1e-300);
    let pinv = e.reconstruct_with(|l| if l.abs() > cutoff { 1.0 / l } else { 0.0 });
    (0..k).map(|s| (0..k).map(|t| pinv.as_matrix()[(s, t)].re * rhs[t]).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density, random_hermitian, seeded};

    #[test]
    fn trace_one_is_feasible() {
        let p = ConeProblem::new(2).with_constraint(HermMatrix::identity(2), 1.0);
        let c = dykstra_feasible(&p, 1e-9, 20_000).unwrap();
        assert_eq!(c.verdict, Verdict::Feasible);
        let w = c.witness.unwrap();
        assert!((w.trace() - 1.0).abs() < 2e-9);
        assert!(eig_herm(&w).unwrap().min() >= -2e-9);
    }

    #[test]
    fn negative_trace_is_infeasible() {
        let p = ConeProblem::new(2).with_constraint(HermMatrix::identity(2), -1.0);
        let c = dykstra_feasible(&p, 1e-9, 20_000).unwrap();
        assert_eq!(c.verdict, Verdict::Infeasible);
    }

    #[test]
    fn planted_solutions_are_recovered() {
        let mut rng = seeded(17);
        for d in 2..=5 {
            let planted = random_density(&mut rng, d);
            let mut p = ConeProblem::new(d);
            for _ in 0..d {
                let c = random_hermitian(&mut rng, d);
                let b = c.inner(&planted);
                p = p.with_constraint(c, b);
            }
            let cert = dykstra_feasible(&p, 1e-8, 20_000).unwrap();
            assert_eq!(cert.verdict, Verdict::Feasible, "d={d}");
            let w = cert.witness.unwrap();
            for (c, b) in &p.affine {
                assert!((c.inner(&w) - b).abs() <= 2e-8 * (1.0 + b.abs()));
            }
            assert!(eig_herm(&w).unwrap().min() >= -2e-8);
        }
    }

    #[test]
    fn max_lambda_min_one_dimensional() {
        let x0 = HermMatrix::from_real_diag(&[1.0, -1.0]);
        let r = max_lambda_min(&x0, &[HermMatrix::from_real_diag(&[1.0, -1.0])]).unwrap();
        assert!(r.value.abs() < 1e-6, "{r:?}");
        assert!((r.coeffs[0] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn max_lambda_min_without_directions() {
        let x0 = HermMatrix::from_real_diag(&[3.0, 0.5]);
        let r = max_lambda_min(&x0, &[]).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noise_direction_is_not_a_direction() {
        // a rounding-level direction must not let the optimizer escape the true span
        let x0 = HermMatrix::from_real_diag(&[1.0, -1.0, 0.5]);
        let noise = HermMatrix::from_real_diag(&[1e-17, -3e-17, 2e-17]);
        let real = HermMatrix::from_real_diag(&[0.0, 0.0, 1.0]);
        let r = max_lambda_min(&x0, &[noise, real]).unwrap();
        assert!((r.value + 1.0).abs() < 1e-6, "{r:?}");
        let mut m = x0.clone();
        for (c, d) in r.coeffs.iter().zip([&HermMatrix::zeros(3), &HermMatrix::from_real_diag(&[0.0, 0.0, 1.0])]) {
            m.axpy(*c, d);
        }
        assert!((eig_herm(&m).unwrap().min() - r.value).abs() < 1e-9);
    }

    #[test]
    fn max_lambda_min_unbounded() {
        let x0 = HermMatrix::from_real_diag(&[1.0, 0.0]);
        let r = max_lambda_min(&x0, &[HermMatrix::identity(2)]).unwrap();
        assert!(r.unbounded);
    }

    #[test]
    fn min_linear_identity_and_extreme_point() {
        let slice = (HermMatrix::identity(2), 1.0);
        let p = ConeProblem::new(2).with_objective(HermMatrix::identity(2));
        let c = min_linear(&p, slice.clone()).unwrap();
        assert!((c.objective_value.unwrap() - 1.0).abs() < 1e-5);

        let p = ConeProblem::new(2).with_objective(HermMatrix::from_real_diag(&[1.0, -1.0]));
        let c = min_linear(&p, slice).unwrap();
        assert!((c.objective_value.unwrap() + 1.0).abs() < 1e-5, "{c:?}");
        let w = c.witness.unwrap();
        assert!((w.as_matrix()[(1, 1)].re - 1.0).abs() < 1e-3);
    }

    #[test]
    fn min_linear_matches_eigen_oracle() {
        let mut rng = seeded(99);
        for d in 2..=6 {
            let a = random_hermitian(&mut rng, d);
            let exact = eig_herm(&a).unwrap().min();
            let p = ConeProblem::new(d).with_objective(a);
            let c = min_linear(&p, (HermMatrix::identity(d), 1.0)).unwrap();
            let v = c.objective_value.unwrap();
            assert!((v - exact).abs() < 1e-4, "d={d}: {v} vs {exact}");
            assert!(c.lower_bound.unwrap() <= exact + 1e-4);
        }
    }

    fn quotient_directions(m: usize, k: usize) -> Vec<HermMatrix> {
        let mut dirs = Vec::new();
        for a in crate::matcore::hermitian_basis(k) {
            for r in 0..m - 1 {
                let mut d = vec![0.0; m];
                d[r] = 1.0;
                d[r + 1] = -1.0;
                dirs.push(a.kron(&HermMatrix::from_real_diag(&d)));
            }
        }
        dirs
    }

    #[test]
    fn lambda_max_two_by_two_closed_form() {
        let mut rng = seeded(7);
        let dirs = quotient_directions(2, 1);
        for _ in 0..20 {
            let x = random_hermitian(&mut rng, 2);
            let m = x.as_matrix();
            let exact = 0.5 * (m[(0, 0)].re + m[(1, 1)].re) - m[(0, 1)].norm();
            let r = max_lambda_min(&x, &dirs).unwrap();
            assert!((r.value - exact).abs() < 1e-9 && r.gap() < 1e-9, "{} vs {exact}", r.value);
        }
    }

    // plain subgradient-free ascent along the bottom eigenvector's gradient
    fn ascent_oracle(x0: &HermMatrix, dirs: &[HermMatrix]) -> f64 {
        let at = |c: &[f64]| {
            let mut x = x0.clone();
            for (t, d) in dirs.iter().enumerate() {
                x.axpy(c[t], d);
            }
            eig_herm(&x).unwrap()
        };
        let mut c = vec![0.0; dirs.len()];
        let mut step = 0.1;
        let mut cur = at(&c);
        for _ in 0..3000 {
            let n = cur.values.len();
            let v = ComplexMatrix::from_fn(n, 1, |i, _| cur.vectors[(i, n - 1)]);
            let trial: Vec<f64> = dirs.iter().zip(&c).map(|(d, ct)| ct + step * d.congruence(&v).trace()).collect();
            let next = at(&trial);
            if next.min() > cur.min() {
                c = trial;
                cur = next;
                step *= 1.2;
            } else {
                step *= 0.5;
            }
        }
        cur.min()
    }

    #[test]
    fn lambda_max_dominates_ascent_and_certifies_gap() {
        let mut rng = seeded(8);
        for (m, k) in [(2, 2), (3, 2), (2, 3)] {
            let dirs = quotient_directions(m, k);
            for _ in 0..3 {
                let x0 = random_hermitian(&mut rng, m * k);
                let r = max_lambda_min(&x0, &dirs).unwrap();
                let oracle = ascent_oracle(&x0, &dirs);
                assert!(r.value >= oracle - 1e-9, "m={m} k={k}: {} < {oracle}", r.value);
                assert!(r.gap() < 1e-6, "gap {}", r.gap());
                let p = r.primal.unwrap();
                assert!((p.trace() - 1.0).abs() < 1e-9);
                assert!(dirs.iter().all(|d| d.inner(&p).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn min_linear_with_constraints_and_shift() {
        let mut rng = seeded(9);
        let d = 4;
        let a = random_hermitian(&mut rng, d);
        let c1 = random_hermitian(&mut rng, d);
        let shift = random_density(&mut rng, d).scale(0.3);
        // planted: y = ρ - shift is feasible for b1 = ⟨c1, y⟩
        let rho = random_density(&mut rng, d);
        let y = rho.sub(&shift);
        let b1 = c1.inner(&y);
        let beta = y.trace();
        let p = ConeProblem::new(d).with_objective(a.clone()).with_constraint(c1.clone(), b1).with_shift(shift.clone());
        let cert = min_linear(&p, (HermMatrix::identity(d), beta)).unwrap();
        let w = cert.witness.unwrap();
        let (lo, hi) = (cert.lower_bound.unwrap(), cert.objective_value.unwrap());
        assert!(hi - lo < 1e-6 && lo <= hi + 1e-12, "{lo} {hi}");
        assert!(hi <= a.inner(&y) + 1e-9);
        assert!((c1.inner(&w) - b1).abs() < 1e-8 && (w.trace() - beta).abs() < 1e-8);
        assert!(eig_herm(&w.add(&shift)).unwrap().min() > -1e-8);
    }
}
