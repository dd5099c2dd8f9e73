use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::conic::{ConicConfig, Verdict};
use crate::cpmaps::{is_ucp, knorm_lower, nearest_ucp, random_ucp, unital_perturbation, CpMap};
use crate::error::{Error, Result};
use crate::opsys::full_algebra;
use crate::random::trial_rng;
use crate::wn::{correct_to_ucp_with, rep_map, CorrectionConfig, CorrectionTrace, WnContext};

use super::{nonincreasing, strictly_decreasing, Builder, ExperimentConfig, ExperimentReport};

#[derive(Clone, Debug, Serialize)]
struct MatrixTrial {
    k: usize,
    d: usize,
    eps: f64,
    trial: usize,
    knorm_lower: f64,
    dist_lower: f64,
    dist_upper: f64,
    choi_distance: f64,
    ucp_verdict: Verdict,
}

/// Positive grid values in decreasing order.
fn descending(grid: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = grid.iter().copied().filter(|&e| e > 0.0).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup();
    v
}

pub fn exp_matrix_stability(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.k.iter().any(|&k| k < 2) {
        return Err(Error::Config("exp_matrix_stability needs k ≥ 2".into()));
    }
    let mut tasks = Vec::new();
    for &k in &cfg.k {
        for &d in &cfg.d {
            for &eps in &cfg.eps_grid {
                for trial in 0..cfg.trials {
                    tasks.push((k, d, eps, trial));
                }
            }
        }
    }
    let conic = ConicConfig::default();
    let records: Vec<MatrixTrial> = tasks
        .par_iter()
        .enumerate()
        .map(|(index, &(k, d, eps, trial))| {
            let mut rng = trial_rng(cfg.seed, index as u64);
            let domain = Arc::new(full_algebra(k)?);
            let base = random_ucp(k, d, cfg.kraus_rank, &mut rng)?;
            let phi = base.add(&unital_perturbation(&domain, d, eps, &mut rng)?)?;
            let knorm = knorm_lower(&phi, k, cfg.norm_trials, &mut rng)?;
            let near = nearest_ucp(&phi, &conic)?;
            let dist_lower = knorm_lower(&near.map.sub(&phi)?, 1, cfg.norm_trials, &mut rng)?;
            let ucp = is_ucp(&near.map, cfg.tol)?;
            Ok(MatrixTrial {
                k,
                d,
                eps,
                trial,
                knorm_lower: knorm,
                dist_lower,
                dist_upper: near.dist_upper,
                choi_distance: near.choi_distance,
                ucp_verdict: ucp.verdict,
            })
        })
        .collect::<Result<_>>()?;

    let mut b = Builder::new(cfg);
    let mut stream = 0;
    for &k in &cfg.k {
        for &d in &cfg.d {
            let group = |eps: f64| records.iter().filter(move |r| r.k == k && r.d == d && r.eps == eps);
            let mut curve = Vec::new();
            for eps in descending(&cfg.eps_grid) {
                let lower: Vec<f64> = group(eps).map(|r| r.dist_lower).collect();
                let upper: Vec<f64> = group(eps).map(|r| r.dist_upper).collect();
                let name = format!("k={k} d={d} eps={eps}");
                curve.push(b.median(&name, "delta_hat", &lower, stream));
                b.median(&name, "dist_upper", &upper, stream + 1);
                stream += 2;
                let knorm = group(eps).map(|r| r.knorm_lower).fold(0.0, f64::max);
                b.stat(&name, "max_knorm_lower", knorm);
            }
            b.check(
                format!("modulus_nonincreasing k={k} d={d}"),
                nonincreasing(&curve, 0.0),
                format!("median delta_hat along decreasing eps: {curve:?}"),
            );
            if cfg.eps_grid.contains(&0.0) {
                let worst = group(0.0).map(|r| r.dist_upper).fold(0.0, f64::max);
                b.check(format!("fixed_point k={k} d={d}"), worst <= 1e-7, format!("max distance at eps = 0: {worst:.3e}"));
            }
        }
    }
    let not_ucp = records.iter().filter(|r| r.ucp_verdict != Verdict::Feasible).count();
    b.check("outputs_ucp", not_ucp == 0, format!("{not_ucp} outputs failed the u.c.p. test"));
    let premise = records.iter().filter(|r| r.knorm_lower > 1.0 + r.eps + 1e-9).count();
    b.check("premise_knorm", premise == 0, format!("{premise} inputs exceed 1 + eps in sampled k-norm"));
    b.certificates(records.len(), records.iter().filter(|r| r.ucp_verdict == Verdict::Indeterminate).count());
    for r in &records {
        b.record(r);
    }
    Ok(b.finish())
}

#[derive(Clone, Debug, Serialize)]
struct WnTrial {
    n: usize,
    d: usize,
    eps: f64,
    trial: usize,
    /// `None` on success, else the failure message.
    failure: Option<String>,
    trace: Option<CorrectionTrace>,
    /// `final_lower < δ`.
    within_delta: bool,
}

pub fn exp_wn_stability(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.n.iter().any(|&n| !(1..=3).contains(&n)) {
        return Err(Error::Config("exp_wn_stability needs n in 1..=3".into()));
    }
    let mut tasks = Vec::new();
    for &n in &cfg.n {
        for &d in &cfg.d {
            for &eps in &cfg.eps_grid {
                for trial in 0..cfg.trials {
                    tasks.push((n, d, eps, trial));
                }
            }
        }
    }
    let ccfg = CorrectionConfig { tol: cfg.tol, norm_trials: cfg.norm_trials, conic: ConicConfig::default() };
    let records: Vec<WnTrial> = tasks
        .par_iter()
        .enumerate()
        .map(|(index, &(n, d, eps, trial))| {
            let seed = cfg.seed.wrapping_add(index as u64);
            let mut rng = trial_rng(cfg.seed, index as u64);
            let ctx = WnContext::new(n, &[d.max(2)], seed)?;
            let base = rep_map(&ctx, 0)?;
            let phi: CpMap = base.add(&crate::wn::unital_perturbation(&ctx, base.codomain_dim(), eps, &mut rng)?)?;
            Ok(match correct_to_ucp_with(&phi, &ctx, cfg.delta, &ccfg, &mut rng) {
                Ok((_, trace)) => {
                    let within_delta = trace.final_lower < cfg.delta;
                    WnTrial { n, d, eps, trial, failure: None, trace: Some(trace), within_delta }
                }
                Err(e @ Error::CorrectionFailure { .. }) => {
                    WnTrial { n, d, eps, trial, failure: Some(e.to_string()), trace: None, within_delta: false }
                }
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut b = Builder::new(cfg);
    let mut stream = 0;
    for &n in &cfg.n {
        let group = |eps: f64| records.iter().filter(move |r| r.n == n && r.eps == eps);
        let mut curve = Vec::new();
        let mut achieving = None;
        for eps in descending(&cfg.eps_grid) {
            let traces: Vec<&CorrectionTrace> = group(eps).filter_map(|r| r.trace.as_ref()).collect();
            let name = format!("n={n} eps={eps}");
            let dist: Vec<f64> = traces.iter().map(|t| t.final_lower).collect();
            curve.push(b.median(&name, "dist1", &dist, stream));
            let upper: Vec<f64> = traces.iter().map(|t| t.final_upper).collect();
            b.median(&name, "dist_upper", &upper, stream + 1);
            stream += 2;
            let total = group(eps).count();
            let rate = group(eps).filter(|r| r.within_delta).count() as f64 / total.max(1) as f64;
            b.stat(&name, "pass_rate_delta", rate);
            if rate >= 0.95 && achieving.is_none() {
                achieving = Some(eps);
            }
            let step2: Vec<f64> = traces.iter().map(|t| t.step2_upper).collect();
            b.stat(&name, "max_step2_upper", step2.iter().copied().fold(0.0, f64::max));
            let below = traces.iter().filter(|t| t.step2_upper < t.thresholds[0]).count();
            b.stat(&name, "frac_step2_below_delta_16n4", below as f64 / traces.len().max(1) as f64);
            let ratio: Vec<f64> = traces.iter().filter(|t| t.step2_upper > 0.0).map(|t| t.step4_lower / t.step2_upper).collect();
            b.stat(&name, "max_step4_over_step2", ratio.iter().copied().fold(0.0, f64::max));
            let consts: Vec<f64> = traces.iter().map(|t| t.realized_constant).collect();
            b.stat(&name, "max_realized_constant", consts.iter().copied().fold(0.0, f64::max));
            b.stat(&name, "failures", group(eps).filter(|r| r.failure.is_some()).count() as f64);
        }
        b.check(
            format!("dist_strictly_decreasing n={n}"),
            strictly_decreasing(&curve),
            format!("median dist1 along decreasing eps: {curve:?}"),
        );
        b.stat(format!("n={n}"), "largest_eps_with_95pct_within_delta", achieving.unwrap_or(f64::NAN));
        b.check(
            format!("eps_achieving_delta n={n}"),
            achieving.is_some(),
            format!("largest grid eps with ≥95% of trials within delta = {}: {achieving:?}", cfg.delta),
        );
        if cfg.eps_grid.contains(&0.0) {
            let worst = group(0.0).filter_map(|r| r.trace.as_ref()).map(|t| t.final_upper.max(t.step2_upper)).fold(0.0, f64::max);
            let ok = group(0.0).all(|r| r.trace.is_some()) && worst <= 1e-7;
            b.check(format!("fixed_point n={n}"), ok, format!("max distance at eps = 0: {worst:.3e}"));
        }
    }
    let bad = records.iter().filter(|r| !r.trace.as_ref().is_some_and(|t| t.output_ucp)).count();
    b.check("outputs_ucp", bad == 0, format!("{bad} trials without a u.c.p. output"));
    let broken = records.iter().filter_map(|r| r.trace.as_ref()).filter(|t| !t.chain_holds).count();
    b.check("chain_4n2", broken == 0, format!("{broken} trials violate step4 ≤ 4n²·step2"));
    let indeterminate =
        records.iter().filter_map(|r| r.trace.as_ref()).filter(|t| t.output_verdict == Verdict::Indeterminate).count();
    b.certificates(records.len(), indeterminate);
    for r in &records {
        b.record(r);
    }
    Ok(b.finish())
}
