use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conic::{min_linear_with, ConeProblem, ConicConfig, Verdict};
use crate::cpmaps::{map_from_images, random_ucp, CpMap};
use crate::error::{Error, Result};
use crate::matcore::{eig_herm, hermitian_basis, AffineSpace, ComplexMatrix, HermMatrix, C64};
use crate::opsys::{dual_system, full_algebra, make_system, wn_quotient_system, OperatorSystem, SystemElement};
use crate::random::{ginibre, random_hermitian, trial_rng};
use crate::tensorcones::{archimedean_defect, max_member_with, min_member_with, LevelPairing, TensorElement};

use super::{median, nonincreasing, Builder, ExperimentConfig, ExperimentReport};

/// A u.c.p. map `φ: M_N* → E` of the form `f ↦ N·Θ(Fᵀ)`, where `F` represents
/// `f` and `Θ: M_N → M_m` is u.c.p. with `E` a full algebra `M_m` or a quotient
/// of it.
#[derive(Clone, Debug)]
pub struct CoverMap {
    pub size: usize,
    pub target: Arc<OperatorSystem>,
    pub theta: CpMap,
    pub phi: CpMap,
}

/// An approximate preimage `x̂` of `x` under `(φ ⊗ id)_k`.
#[derive(Clone, Debug)]
pub struct CoverResult {
    pub preimage: TensorElement,
    /// `(φ ⊗ id)_k(x̂)`.
    pub image: TensorElement,
    /// Operator norm of the lift difference `x − (φ ⊗ id)_k(x̂)`.
    pub defect: f64,
    /// `λ_min` of the affine preimage before the unit repair.
    pub lambda_min: f64,
    pub residual_affine: f64,
    pub iterations: usize,
}

impl CoverMap {
    pub fn new(theta: CpMap, target: Arc<OperatorSystem>) -> Result<Self> {
        if !(target.is_full_algebra() || target.kernel().is_some()) {
            return Err(Error::Unsupported("cover target must be a full matrix algebra or a quotient of one".into()));
        }
        if !theta.domain().is_full_algebra() || theta.codomain_dim() != target.ambient_dim() {
            return Err(Error::DimensionMismatch("Θ must map a full algebra into the target's ambient algebra".into()));
        }
        let size = theta.domain().ambient_dim();
        let domain = Arc::new(dual_system(theta.domain())?);
        let images = domain
            .basis()
            .iter()
            .map(|f| Ok(theta.apply(&f.transpose().into_matrix())?.scale_re(size as f64)))
            .collect::<Result<_>>()?;
        let phi = map_from_images(domain, target.ambient_dim(), images)?;
        Ok(Self { size, target, theta, phi })
    }

    /// `Θ` drawn by [`random_ucp`] with the given Kraus rank.
    pub fn random(size: usize, target: Arc<OperatorSystem>, kraus_rank: usize, rng: &mut impl Rng) -> Result<Self> {
        let theta = random_ucp(size, target.ambient_dim(), kraus_rank, rng)?;
        Self::new(theta, target)
    }

    /// `N·(id ⊗ Θ)(R)` for `R ∈ M_l ⊗ M_N`, as an element of `M_l(E)`.
    pub fn push(&self, r: &ComplexMatrix, level: usize) -> Result<SystemElement> {
        let lift = self.theta.apply_level(r, level)?.scale_re(self.size as f64);
        SystemElement::from_ambient(self.target.clone(), level, &lift)
    }

    /// `R ∈ M_l ⊗ M_N` read as an element of `M_l(M_N*)`.
    fn as_dual_element(&self, r: &ComplexMatrix, level: usize) -> Result<SystemElement> {
        let n = self.size;
        let domain = self.phi.domain().clone();
        let coords = domain
            .dual_basis()
            .iter()
            .map(|a| {
                let at = a.transpose().into_matrix();
                ComplexMatrix::from_fn(level, level, |i, j| at.matmul(&r.block(i, j, n)).trace())
            })
            .collect();
        SystemElement::new(domain, level, coords)
    }

    /// Constraints `⟨C_i, R⟩ = b_i` on `R ∈ M_l ⊗ M_N` saying
    /// `N·(id ⊗ Θ)(R) = y` in `M_l(E)`, one per pair (Hermitian basis element of
    /// `M_l`, dual basis element of `E`).
    fn constraints(&self, y: &SystemElement) -> Result<Vec<(HermMatrix, f64)>> {
        let (l, n) = (y.level, self.size);
        let lift = y.ambient();
        let mut out = Vec::new();
        let adjoints: Vec<HermMatrix> = self.target.dual_basis().iter().map(|g| self.adjoint(g.as_matrix())).collect::<Result<_>>()?;
        for h in hermitian_basis(l) {
            for (g, adj) in self.target.dual_basis().iter().zip(&adjoints) {
                let value = h.kron(g).as_matrix().matmul(&lift).trace().re;
                out.push((h.kron(adj).scale(n as f64), value));
            }
        }
        Ok(out)
    }

    /// `Θ*(g)`, with `tr(Θ*(g) X) = tr(g Θ(X))`.
    fn adjoint(&self, g: &ComplexMatrix) -> Result<HermMatrix> {
        let n = self.size;
        let mut out = ComplexMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                // Θ*(g)[a, b] = tr(g Θ(e_ba))
                out[(a, b)] = g.matmul(&self.theta.apply(&ComplexMatrix::unit(n, b, a))?).trace();
            }
        }
        Ok(HermMatrix::symmetrize(&out))
    }

    /// Preimage search for `x ∈ M_k(E ⊗ M_p)`, reshuffled to `y ∈ M_l(E)`
    /// with `l = k·p`. Every `R` solving `N·(id ⊗ Θ)(R) = y` can be repaired to
    /// `R − λ_min(R)·I`, which moves the image by `−N·λ_min(R)` units, so the
    /// search maximizes `λ_min` over the solution set.
    ///
    /// With `ψ = N·I_l ⊗ Θ*(I/m) ≻ 0` (whose pairing with every solution is
    /// the fixed `β`) and `Z = R − tI`, this is `min ⟨ψ, Z⟩` over `Z ⪰ 0`
    /// with the constraints shifted by multiples of `ψ`; homogenizing with a
    /// scalar `τ = 1/⟨ψ, Z⟩` turns it into a normalized minimization with one
    /// direction per constraint.
    pub fn preimage(&self, x: &TensorElement, cfg: &ConicConfig) -> Result<CoverResult> {
        if x.left.dim() != self.target.dim() || x.left.ambient_dim() != self.target.ambient_dim() {
            return Err(Error::DimensionMismatch("element does not live on the cover target".into()));
        }
        let y = x.to_level_element()?;
        let (l, n, m) = (y.level, self.size, self.target.ambient_dim());
        let dim = l * n;
        let constraints = self.constraints(&y)?;
        let rho = ComplexMatrix::identity(m).scale_re(1.0 / m as f64);
        let psi = HermMatrix::identity(l).kron(&self.adjoint(&rho)?).scale(n as f64);
        let beta = ComplexMatrix::identity(l).kron(&rho).matmul(&y.ambient()).trace().re;
        let kappa = psi.trace();

        let embed = |z: &HermMatrix, s: f64| {
            let mut out = ComplexMatrix::zeros(dim + 1, dim + 1);
            for i in 0..dim {
                for j in 0..dim {
                    out[(i, j)] = z.as_matrix()[(i, j)];
                }
            }
            out[(dim, dim)] = C64::new(s, 0.0);
            HermMatrix::symmetrize(&out)
        };
        let mut problem = ConeProblem::new(dim + 1).with_objective(embed(&HermMatrix::zeros(dim), -1.0));
        for (c, b) in &constraints {
            let a = c.trace();
            let mut shifted = c.clone();
            shifted.axpy(-a / kappa, &psi);
            problem = problem.with_constraint(embed(&shifted, -(b - a * beta / kappa)), 0.0);
        }
        let cert = min_linear_with(&problem, (embed(&psi, 1.0), 1.0), cfg)?;
        let space = AffineSpace::from_constraints(dim, &constraints)?;
        let r = match cert.witness {
            Some(w) if w.as_matrix()[(dim, dim)].re > 1e-12 => {
                let tau = w.as_matrix()[(dim, dim)].re;
                let z = HermMatrix::symmetrize(&ComplexMatrix::from_fn(dim, dim, |i, j| w.as_matrix()[(i, j)])).scale(1.0 / tau);
                let t = (beta - psi.inner(&z)) / kappa;
                space.project(&z.shift(t))
            }
            _ => space.project(&HermMatrix::zeros(dim)),
        };
        let lambda_min = eig_herm(&r)?.min();
        let repaired = r.shift((-lambda_min).max(0.0));
        let preimage = TensorElement::from_level_element(&self.as_dual_element(repaired.as_matrix(), l)?, x.right.clone(), x.level)?;
        let image = preimage.push_left(&self.phi, self.target.clone())?;
        let defect = x.distance_bound(&image)?;
        Ok(CoverResult { preimage, image, defect, lambda_min, residual_affine: space.distance(&r), iterations: cert.iterations })
    }

    /// `x = (φ ⊗ id)_k(x̂)` for a random positive `x̂` (a Wishart `R`).
    pub fn planted(&self, right: Arc<OperatorSystem>, level: usize, rng: &mut impl Rng) -> Result<TensorElement> {
        let l = level * right.ambient_dim();
        let g = ginibre(rng, l * self.size, l * self.size);
        let r = g.matmul(&g.adjoint()).scale_re(1.0 / (l * self.size) as f64);
        TensorElement::from_level_element(&self.push(&r, l)?, right, level)
    }
}

/// A random self-adjoint element shifted onto the min-cone boundary.
fn min_boundary(left: &Arc<OperatorSystem>, right: &Arc<OperatorSystem>, level: usize, rng: &mut impl Rng, cfg: &ConicConfig) -> Result<(TensorElement, f64)> {
    let raw = TensorElement::random(left.clone(), right.clone(), level, rng);
    let margin = min_member_with(&raw, 0.0, cfg)?.lower_bound.unwrap_or(f64::NEG_INFINITY);
    if !margin.is_finite() {
        return Err(Error::InvalidArgument("min margin is not finite".into()));
    }
    Ok((raw.add_unit(-margin), -margin))
}

/// A random three-dimensional operator subsystem of `M_2`.
fn random_subsystem(rng: &mut impl Rng) -> Result<OperatorSystem> {
    let gens = [HermMatrix::identity(2), random_hermitian(rng, 2), random_hermitian(rng, 2)];
    make_system(2, &gens)
}

fn full(n: usize) -> Result<Arc<OperatorSystem>> {
    Ok(Arc::new(full_algebra(n)?))
}

fn dual_full(n: usize) -> Result<Arc<OperatorSystem>> {
    Ok(Arc::new(dual_system(&full_algebra(n)?)?))
}

#[derive(Clone, Debug, Serialize)]
struct CoincidenceSample {
    pair: String,
    level: usize,
    trial: usize,
    shift: f64,
    max_defect: f64,
    max_verdict: Verdict,
    levels: Vec<LevelPairing>,
}

pub fn exp_hope(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    // (label, left, right); `None` for the right factor means a fresh random subsystem per trial
    let mut pairs: Vec<(String, Arc<OperatorSystem>, Option<Arc<OperatorSystem>>)> = Vec::new();
    for &n in &cfg.n {
        for &p in &cfg.p {
            pairs.push((format!("M{n}*⊗M{p}"), dual_full(n)?, Some(full(p)?)));
        }
        pairs.push((format!("M{n}*⊗E(3⊂M2)"), dual_full(n)?, None));
    }
    pairs.push(("M2⊗M2 (control)".into(), full(2)?, Some(full(2)?)));

    let mut tasks = Vec::new();
    for pair in 0..pairs.len() {
        for &level in &cfg.k {
            for trial in 0..cfg.trials {
                tasks.push((pair, level, trial));
            }
        }
    }
    let conic = ConicConfig::default();
    let samples: Vec<CoincidenceSample> = tasks
        .par_iter()
        .enumerate()
        .map(|(index, &(pair, level, trial))| {
            let mut rng = trial_rng(cfg.seed, index as u64);
            let (label, left, right) = &pairs[pair];
            let right = match right {
                Some(r) => r.clone(),
                None => Arc::new(random_subsystem(&mut rng)?),
            };
            let (z, shift) = min_boundary(left, &right, level, &mut rng, &conic)?;
            let max = max_member_with(&z, cfg.gap_tol, &conic)?;
            let (_, max_defect) = archimedean_defect(&max.certificate);
            Ok(CoincidenceSample {
                pair: label.clone(),
                level,
                trial,
                shift,
                max_defect,
                max_verdict: max.certificate.verdict,
                levels: max.levels,
            })
        })
        .collect::<Result<_>>()?;

    let mut b = Builder::new(cfg);
    for (label, _, _) in &pairs {
        let mut worst_pair = 0.0_f64;
        for &level in &cfg.k {
            let group: Vec<&CoincidenceSample> = samples.iter().filter(|s| &s.pair == label && s.level == level).collect();
            let worst = group.iter().map(|s| s.max_defect).fold(0.0, f64::max);
            let name = format!("{label} level={level}");
            b.stat(&name, "max_archimedean_defect", worst);
            b.stat(&name, "median_archimedean_defect", median(&group.iter().map(|s| s.max_defect).collect::<Vec<_>>()));
            worst_pair = worst_pair.max(worst);
        }
        b.check(
            format!("min_equals_max {label}"),
            worst_pair <= cfg.gap_tol,
            format!("max defect over {} boundary samples per level: {worst_pair:.3e}", cfg.trials),
        );
    }
    b.certificates(samples.len(), samples.iter().filter(|s| s.max_verdict == Verdict::Indeterminate).count());
    for s in &samples {
        b.record(s);
    }
    Ok(b.finish())
}

/// The cover targets: `W_n` as a quotient for each `n`, and `M_{n+1}` as a control.
fn cover_targets(cfg: &ExperimentConfig) -> Result<Vec<(String, Arc<OperatorSystem>, bool)>> {
    let mut out = Vec::new();
    for &n in &cfg.n {
        out.push((format!("W{n}"), Arc::new(wn_quotient_system(n)?.0), false));
        out.push((format!("M{} (control)", n + 1), full(n + 1)?, true));
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
struct CoverSample {
    target: String,
    control: bool,
    size: usize,
    p: usize,
    level: usize,
    trial: usize,
    planted_defect: f64,
    /// Best defect over the candidate maps, for a min-boundary target.
    defect: f64,
    lambda_min: f64,
}

pub fn exp_cover(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let targets = cover_targets(cfg)?;
    let mut tasks = Vec::new();
    for t in 0..targets.len() {
        for &size in &cfg.cover_dims {
            for &p in &cfg.p {
                for &level in &cfg.k {
                    for trial in 0..cfg.trials {
                        tasks.push((t, size, p, level, trial));
                    }
                }
            }
        }
    }
    let conic = ConicConfig::default();
    let samples: Vec<CoverSample> = tasks
        .par_iter()
        .enumerate()
        .map(|(index, &(t, size, p, level, trial))| {
            let mut rng = trial_rng(cfg.seed, index as u64);
            let (label, target, control) = &targets[t];
            let right = full(p)?;
            let maps = (0..cfg.maps).map(|_| CoverMap::random(size, target.clone(), cfg.kraus_rank, &mut rng)).collect::<Result<Vec<_>>>()?;
            let planted = maps[0].planted(right.clone(), level, &mut rng)?;
            let planted_defect = maps[0].preimage(&planted, &conic)?.defect;
            let (x, _) = min_boundary(target, &right, level, &mut rng, &conic)?;
            let mut best: Option<CoverResult> = None;
            for m in &maps {
                let r = m.preimage(&x, &conic)?;
                if best.as_ref().map_or(true, |b| r.defect < b.defect) {
                    best = Some(r);
                }
            }
            let best = best.expect("at least one map");
            Ok(CoverSample {
                target: label.clone(),
                control: *control,
                size,
                p,
                level,
                trial,
                planted_defect,
                defect: best.defect,
                lambda_min: best.lambda_min,
            })
        })
        .collect::<Result<_>>()?;

    let mut b = Builder::new(cfg);
    let mut stream = 0;
    let planted_worst = samples.iter().map(|s| s.planted_defect).fold(0.0, f64::max);
    b.check("planted_defect_zero", planted_worst <= cfg.tol, format!("max planted defect {planted_worst:.3e}"));
    for (label, _, control) in &targets {
        for &p in &cfg.p {
            for &level in &cfg.k {
                let mut curve = Vec::new();
                for &size in &cfg.cover_dims {
                    let d: Vec<f64> = samples
                        .iter()
                        .filter(|s| &s.target == label && s.p == p && s.level == level && s.size == size)
                        .map(|s| s.defect)
                        .collect();
                    curve.push(b.median(format!("{label} p={p} level={level} N={size}"), "cover_defect", &d, stream));
                    stream += 1;
                }
                let name = format!("{label} p={p} level={level}");
                b.check(format!("defect_nonincreasing_in_N {name}"), nonincreasing(&curve, cfg.tol), format!("median defects {curve:?}"));
                if *control {
                    let last = *curve.last().expect("nonempty sizes");
                    b.check(format!("control_small {name}"), last <= cfg.delta, format!("median defect at largest N {last:.3e}"));
                }
            }
        }
    }
    for s in &samples {
        b.record(s);
    }
    Ok(b.finish())
}

#[derive(Clone, Debug, Serialize)]
struct InclusionTrial {
    target: String,
    control: bool,
    p: usize,
    level: usize,
    trial: usize,
    size: usize,
    /// Covering defect of the chosen preimage.
    eps_cover: f64,
    /// Archimedean defects in the max cone: of `x̂`, of `(φ ⊗ id)(x̂)`, of `z`.
    preimage_max_defect: f64,
    image_max_defect: f64,
    inclusion_defect: f64,
    inclusion_lower: f64,
    verdict: Verdict,
    within: bool,
}

pub fn exp_kirchberg(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let targets = cover_targets(cfg)?;
    let mut tasks = Vec::new();
    for t in 0..targets.len() {
        for &p in &cfg.p {
            for &level in &cfg.k {
                for trial in 0..cfg.trials {
                    tasks.push((t, p, level, trial));
                }
            }
        }
    }
    let conic = ConicConfig::default();
    let trials: Vec<InclusionTrial> = tasks
        .par_iter()
        .enumerate()
        .map(|(index, &(t, p, level, trial))| {
            let mut rng = trial_rng(cfg.seed, index as u64);
            let (label, target, control) = &targets[t];
            let right = full(p)?;
            let (z, _) = min_boundary(target, &right, level, &mut rng, &conic)?;
            let mut best: Option<(usize, CoverResult)> = None;
            for &size in &cfg.cover_dims {
                for _ in 0..cfg.maps {
                    let map = CoverMap::random(size, target.clone(), cfg.kraus_rank, &mut rng)?;
                    let r = map.preimage(&z, &conic)?;
                    if best.as_ref().map_or(true, |b| r.defect < b.1.defect) {
                        best = Some((size, r));
                    }
                }
            }
            let (size, cover) = best.expect("at least one map");
            let pre = max_member_with(&cover.preimage, cfg.gap_tol, &conic)?;
            let img = max_member_with(&cover.image, cfg.gap_tol, &conic)?;
            let zc = max_member_with(&z, cfg.gap_tol, &conic)?;
            let (inclusion_lower, inclusion_defect) = archimedean_defect(&zc.certificate);
            Ok(InclusionTrial {
                target: label.clone(),
                control: *control,
                p,
                level,
                trial,
                size,
                eps_cover: cover.defect,
                preimage_max_defect: archimedean_defect(&pre.certificate).1,
                image_max_defect: archimedean_defect(&img.certificate).1,
                inclusion_defect,
                inclusion_lower,
                verdict: zc.certificate.verdict,
                within: inclusion_defect <= cover.defect + cfg.gap_tol,
            })
        })
        .collect::<Result<_>>()?;

    let mut b = Builder::new(cfg);
    for (label, _, control) in &targets {
        for &p in &cfg.p {
            for &level in &cfg.k {
                let group: Vec<&InclusionTrial> =
                    trials.iter().filter(|t| &t.target == label && t.p == p && t.level == level).collect();
                let name = format!("{label} p={p} level={level}");
                let fold = |f: fn(&InclusionTrial) -> f64| group.iter().map(|t| f(t)).fold(0.0, f64::max);
                b.stat(&name, "max_inclusion_defect", fold(|t| t.inclusion_defect));
                b.stat(&name, "max_eps_cover", fold(|t| t.eps_cover));
                b.stat(&name, "median_eps_cover", median(&group.iter().map(|t| t.eps_cover).collect::<Vec<_>>()));
                b.stat(&name, "max_preimage_max_defect", fold(|t| t.preimage_max_defect));
                b.stat(&name, "max_image_max_defect", fold(|t| t.image_max_defect));
                if *control {
                    let worst = fold(|t| t.inclusion_defect);
                    b.check(format!("control {name}"), worst <= cfg.gap_tol, format!("max inclusion defect {worst:.3e}"));
                }
            }
        }
    }
    let outside = trials.iter().filter(|t| !t.within).count();
    b.check("inclusion_within_cover", outside == 0, format!("{outside} trials exceed eps_cover + gap_tol"));
    let pre_bad = trials.iter().filter(|t| t.preimage_max_defect > cfg.gap_tol).count();
    b.check("preimage_max_positive", pre_bad == 0, format!("{pre_bad} preimages not max-positive within gap_tol"));
    let img_bad = trials.iter().filter(|t| t.image_max_defect > cfg.gap_tol).count();
    b.check("image_max_positive", img_bad == 0, format!("{img_bad} pushed preimages not max-positive within gap_tol"));
    b.certificates(trials.len(), trials.iter().filter(|t| t.verdict == Verdict::Indeterminate).count());
    for t in &trials {
        b.record(t);
    }
    Ok(b.finish())
}
