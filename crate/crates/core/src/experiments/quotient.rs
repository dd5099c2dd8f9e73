use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::conic::{ConicConfig, Verdict};
use crate::error::Result;
use crate::matcore::{ComplexMatrix, C64};
use crate::opsys::{cone_member_with, SystemElement};
use crate::random::{random_hermitian, trial_rng};
use crate::wn::{circle_oracle, quotient_vs_concrete_with, WnContext};

use super::{Builder, ExperimentConfig, ExperimentReport};

/// Centres `(p + r)/2`, half-differences `(p − r)/2` and moduli `|q|` of the
/// `n = 1` grid. No centre equals a modulus, so every grid point sits at least
/// 0.01 away from the boundary.
const CENTRES: [f64; 10] = [-0.5, -0.1, 0.13, 0.37, 0.61, 0.89, 1.07, 1.33, 1.71, 2.03];
const SPREADS: [f64; 5] = [-1.5, -0.4, 0.0, 0.25, 0.9];
const MODULI: [f64; 5] = [0.0, 0.3, 0.7, 1.1, 1.6];
const PHASES: usize = 4;

/// Unit offsets from the quotient boundary for the sampled elements.
const OFFSETS: [f64; 2] = [1e-3, -1e-3];

#[derive(Clone, Debug, Serialize)]
struct GridPoint {
    p: f64,
    q_re: f64,
    q_im: f64,
    r: f64,
    oracle: bool,
    verdict: Verdict,
    lower: f64,
    upper: f64,
}

#[derive(Clone, Debug, Serialize)]
struct Sample {
    n: usize,
    d: usize,
    level: usize,
    trial: usize,
    offset: f64,
    verdict: Verdict,
    quotient_lower: f64,
    quotient_upper: f64,
    min_concrete_margin: f64,
    necessary_violation: bool,
    converse_exception: bool,
    circle_oracle: Option<bool>,
}

/// The `n = 1` grid of lifts `[[p, q], [q̄, r]]`.
fn grid() -> Vec<(f64, C64, f64)> {
    let mut out = Vec::new();
    for c in CENTRES {
        for s in SPREADS {
            for m in MODULI {
                for j in 0..PHASES {
                    let q = C64::from_polar(m, 2.0 * PI * j as f64 / PHASES as f64 + 0.3);
                    out.push((c + s, q, c - s));
                }
            }
        }
    }
    out
}

pub fn exp_quotient_iso(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let conic = ConicConfig::default();
    let mut b = Builder::new(cfg);

    let w1 = WnContext::new(1, &[], cfg.seed)?;
    let points: Vec<GridPoint> = grid()
        .par_iter()
        .map(|&(p, q, r)| {
            let lift = ComplexMatrix::from_vec(2, 2, vec![C64::new(p, 0.0), q, q.conj(), C64::new(r, 0.0)])?;
            let x = SystemElement::from_ambient(w1.quotient.clone(), 1, &lift)?;
            let cert = cone_member_with(&x, cfg.tol, &conic)?;
            Ok(GridPoint {
                p,
                q_re: q.re,
                q_im: q.im,
                r,
                oracle: circle_oracle(&lift, cfg.tol),
                verdict: cert.verdict,
                lower: cert.lower_bound.unwrap_or(f64::NEG_INFINITY),
                upper: cert.objective_value.unwrap_or(f64::INFINITY),
            })
        })
        .collect::<Result<_>>()?;
    let agree = points.iter().filter(|g| (g.verdict == Verdict::Feasible) == g.oracle && g.verdict != Verdict::Indeterminate).count();
    let rate = agree as f64 / points.len() as f64;
    b.stat("n=1 grid", "points", points.len() as f64);
    b.stat("n=1 grid", "agreement_rate", rate);
    let worst = points.iter().map(|g| (g.lower - ((g.p + g.r) / 2.0 - C64::new(g.q_re, g.q_im).norm())).abs()).fold(0.0, f64::max);
    b.stat("n=1 grid", "max_margin_error", worst);
    b.check("circle_grid_agreement", agree == points.len(), format!("{agree}/{} grid points agree with p + r ≥ 2|q|", points.len()));

    let mut tasks = Vec::new();
    for &n in &cfg.n {
        for &d in &cfg.d {
            for &level in &cfg.k {
                for trial in 0..cfg.trials {
                    tasks.push((n, d, level, trial));
                }
            }
        }
    }
    let mut contexts = Vec::new();
    for &n in &cfg.n {
        for &d in &cfg.d {
            let seed = cfg.seed ^ ((n as u64) << 32 | d as u64);
            contexts.push(((n, d), Arc::new(WnContext::new(n, &vec![d.max(2); cfg.reps], seed)?)));
        }
    }
    let samples: Vec<Sample> = tasks
        .par_iter()
        .enumerate()
        .map(|(index, &(n, d, level, trial))| {
            let ctx = &contexts.iter().find(|c| c.0 == (n, d)).expect("context built").1;
            let mut rng = trial_rng(cfg.seed, index as u64);
            let m = ctx.size();
            let lift = random_hermitian(&mut rng, level * m).into_matrix();
            let raw = SystemElement::from_ambient(ctx.quotient.clone(), level, &lift)?;
            let cert = cone_member_with(&raw, 0.0, &conic)?;
            let lo = cert.lower_bound.unwrap_or(0.0);
            let up = cert.objective_value.unwrap_or(lo);
            let offset = OFFSETS[trial % OFFSETS.len()];
            // the quotient margin moves by one per unit added
            let x = raw.add_unit(offset - 0.5 * (lo + up));
            let c = quotient_vs_concrete_with(ctx, &x, cfg.tol, &conic)?;
            Ok(Sample {
                n,
                d,
                level,
                trial,
                offset,
                verdict: c.quotient_verdict,
                quotient_lower: c.quotient_lower,
                quotient_upper: c.quotient_upper,
                min_concrete_margin: c.concrete_margins.iter().copied().fold(f64::INFINITY, f64::min),
                necessary_violation: c.necessary_violation,
                converse_exception: c.converse_exception,
                circle_oracle: c.circle_oracle,
            })
        })
        .collect::<Result<_>>()?;

    for &n in &cfg.n {
        for &level in &cfg.k {
            let group: Vec<&Sample> = samples.iter().filter(|s| s.n == n && s.level == level).collect();
            let name = format!("n={n} level={level}");
            let total = group.len().max(1) as f64;
            let determinate: Vec<&&Sample> = group.iter().filter(|s| s.verdict != Verdict::Indeterminate).collect();
            let expected = determinate.iter().filter(|s| (s.verdict == Verdict::Feasible) == (s.offset > 0.0)).count();
            b.stat(&name, "samples", group.len() as f64);
            b.stat(&name, "verdict_matches_offset", expected as f64 / determinate.len().max(1) as f64);
            b.stat(&name, "necessary_violations", group.iter().filter(|s| s.necessary_violation).count() as f64);
            b.stat(&name, "converse_exceptions", group.iter().filter(|s| s.converse_exception).count() as f64);
            b.stat(&name, "converse_exception_rate", group.iter().filter(|s| s.converse_exception).count() as f64 / total);
            let with_oracle: Vec<&&Sample> = group.iter().filter(|s| s.circle_oracle.is_some()).collect();
            if !with_oracle.is_empty() {
                let ok = with_oracle
                    .iter()
                    .filter(|s| s.verdict != Verdict::Indeterminate && s.circle_oracle == Some(s.verdict == Verdict::Feasible))
                    .count();
                b.stat(&name, "circle_oracle_agreement", ok as f64 / with_oracle.len() as f64);
            }
        }
    }
    let violations = samples.iter().filter(|s| s.necessary_violation).count();
    b.check("necessary_direction", violations == 0, format!("{violations} quotient-positive samples negative in a representation"));
    let exceptions = samples.iter().filter(|s| s.converse_exception).count();
    b.stat("all", "converse_exceptions", exceptions as f64);

    let indeterminate = points.iter().filter(|g| g.verdict == Verdict::Indeterminate).count()
        + samples.iter().filter(|s| s.verdict == Verdict::Indeterminate).count();
    b.certificates(points.len() + samples.len(), indeterminate);
    for g in &points {
        b.record(g);
    }
    for s in &samples {
        b.record(s);
    }
    Ok(b.finish())
}
