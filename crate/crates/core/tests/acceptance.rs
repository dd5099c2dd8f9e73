//! The eight acceptance criteria, one printed line each. Runs without the
//! libtest harness so the lines always reach the output.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::Rng;

use opsys_core::conic::{dykstra_feasible, min_linear, ConeProblem, Verdict};
use opsys_core::cpmaps::{amplify, choi_matrix, is_ucp, map_from_choi, CpMap};
use opsys_core::experiments::{run, ExperimentConfig, ExperimentReport};
use opsys_core::matcore::{eig_herm, ComplexMatrix, HermMatrix, C64};
use opsys_core::opsys::{cone_member, SystemElement};
use opsys_core::random::{ginibre, random_density, random_hermitian, seeded};
use opsys_core::wn::{circle_oracle, gamma_n, WnContext};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn within(elapsed: Duration, budget_s: u64) -> bool {
    elapsed <= Duration::from_secs(budget_s)
}

fn failed_checks(r: &ExperimentReport) -> Vec<String> {
    r.checks.iter().filter(|c| !c.passed).map(|c| format!("{} ({})", c.name, c.detail)).collect()
}

/// Random map with Choi matrix `G G*` (completely positive) or `G G* − s·I`
/// with `s` above the smallest Choi eigenvalue (not completely positive).
fn random_map(rng: &mut impl Rng, n: usize, d: usize, cp: bool) -> CpMap {
    let g = ginibre(rng, n * d, n * d);
    let mut c = HermMatrix::symmetrize(&g.matmul(&g.adjoint()));
    if !cp {
        let lo = eig_herm(&c).unwrap().min();
        c = c.shift(-(lo + rng.gen_range(0.1..1.0)));
    }
    map_from_choi(n, d, c.as_matrix()).unwrap()
}

/// The map `x ↦ Σ K x K*` built from the eigenvectors of a PSD Choi matrix.
fn kraus_apply(choi: &HermMatrix, n: usize, d: usize, x: &ComplexMatrix) -> ComplexMatrix {
    let e = eig_herm(choi).unwrap();
    let mut out = ComplexMatrix::zeros(d, d);
    for (t, &l) in e.values.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        let k = ComplexMatrix::from_fn(d, n, |a, i| e.vectors[(i * d + a, t)] * l.sqrt());
        out = &out + &k.matmul(x).matmul(&k.adjoint());
    }
    out
}

fn choi_calculus() -> Outcome {
    let mut rng = seeded(101);
    let (mut worst_roundtrip, mut failures) = (0.0f64, 0);
    for t in 0..1000 {
        let (n, d) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let cp = t % 2 == 0;
        let f = random_map(&mut rng, n, d, cp);
        let c = choi_matrix(&f).unwrap();
        let back = map_from_choi(n, d, &c).unwrap();
        for (a, b) in f.images().iter().zip(back.images()) {
            worst_roundtrip = worst_roundtrip.max((a - b).max_abs());
        }
        let choi = HermMatrix::new(c).unwrap();
        let choi_psd = eig_herm(&choi).unwrap().min() >= -1e-10;
        // Choi PSD ⇒ CP: a Kraus form reproduces the map
        // not PSD ⇒ not CP: id_n ⊗ φ sends the PSD matrix Σ e_ij ⊗ e_ij to a non-PSD one
        let cp_witnessed = if choi_psd {
            let x = random_hermitian(&mut rng, n).into_matrix();
            (&f.apply(&x).unwrap() - &kraus_apply(&choi, n, d, &x)).max_abs() < 1e-9
        } else {
            let omega = ComplexMatrix::from_fn(n * n, n * n, |r, s| {
                if r % (n + 1) == 0 && s % (n + 1) == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
            });
            let image = amplify(&f, n).unwrap().apply(&omega).unwrap();
            eig_herm(&HermMatrix::symmetrize(&image)).unwrap().min() >= -1e-10
        };
        if choi_psd != cp || cp_witnessed != cp {
            failures += 1;
        }
    }
    outcome(
        worst_roundtrip <= 1e-12 && failures == 0,
        format!("1000 maps: max roundtrip error {worst_roundtrip:.1e}, {failures} CP/Choi disagreements"),
    )
}

fn conic_oracle() -> Outcome {
    let mut rng = seeded(202);
    let mut worst = 0.0f64;
    for t in 0..200 {
        let dim = 2 + t % 5;
        let a = random_hermitian(&mut rng, dim);
        let p = ConeProblem::new(dim).with_objective(a.clone());
        let c = min_linear(&p, (HermMatrix::identity(dim), 1.0)).unwrap();
        let exact = eig_herm(&a).unwrap().min();
        let err = (c.objective_value.unwrap_or(f64::INFINITY) - exact).abs().max((c.lower_bound.unwrap() - exact).abs());
        worst = worst.max(err);
    }
    let mut recovered = 0;
    let planted_total = 100;
    for t in 0..planted_total {
        let dim = 2 + t % 5;
        let x = random_density(&mut rng, dim);
        let mut p = ConeProblem::new(dim);
        for _ in 0..dim {
            let c = random_hermitian(&mut rng, dim);
            let b = c.inner(&x);
            p = p.with_constraint(c, b);
        }
        if dykstra_feasible(&p, 1e-7, 20_000).unwrap().verdict == Verdict::Feasible {
            recovered += 1;
        }
    }
    outcome(
        worst <= 1e-4 && recovered == planted_total,
        format!("200 objectives: max |min − λ_min| {worst:.1e}; planted feasible {recovered}/{planted_total}"),
    )
}

fn quotient_oracle() -> Outcome {
    let w1 = WnContext::new(1, &[], 0).unwrap();
    let (mut total, mut agree) = (0, 0);
    // p + r and |q| stay at least 0.005 from the boundary p + r = 2|q|
    for i in 0..10 {
        for j in 0..10 {
            for m in 0..10 {
                let (centre, spread, modulus) = (-0.995 + 0.3 * i as f64, -1.0 + 0.2 * j as f64, 0.17 * m as f64);
                let q = C64::from_polar(modulus, 2.0 * PI * (i + j + m) as f64 / 7.0);
                let lift = ComplexMatrix::from_vec(
                    2,
                    2,
                    vec![C64::new(centre + spread, 0.0), q, q.conj(), C64::new(centre - spread, 0.0)],
                )
                .unwrap();
                let x = SystemElement::from_ambient(w1.quotient.clone(), 1, &lift).unwrap();
                let cert = cone_member(&x, 1e-6).unwrap();
                total += 1;
                if cert.verdict != Verdict::Indeterminate && cert.is_feasible() == circle_oracle(&lift, 1e-6) {
                    agree += 1;
                }
            }
        }
    }
    outcome(agree == total, format!("{agree}/{total} grid points agree with p + r ≥ 2|q|"))
}

fn gamma_identities() -> Outcome {
    let mut problems = Vec::new();
    for n in 1..=3 {
        let dims: Vec<usize> = (0..50).map(|r| 2 + r % 4).collect();
        let ctx = WnContext::new(n, &dims, 303 + n as u64).unwrap();
        for r in 0..dims.len() {
            let g = gamma_n(&ctx, Some(r)).unwrap();
            let unit = (&g.unit_image() - &ComplexMatrix::identity(dims[r])).max_abs();
            if unit > 1e-14 {
                problems.push(format!("n={n} rep {r}: unit error {unit:.1e}"));
            }
            let kernel = ctx.kernel.basis.iter().map(|j| g.apply(j.as_matrix()).unwrap().max_abs()).fold(0.0, f64::max);
            if kernel > 1e-12 {
                problems.push(format!("n={n} rep {r}: kernel image {kernel:.1e}"));
            }
            if !is_ucp(&g, 1e-9).unwrap().is_feasible() {
                problems.push(format!("n={n} rep {r}: not u.c.p."));
            }
        }
    }
    outcome(problems.is_empty(), format!("150 representations, n = 1..3: {}", if problems.is_empty() { "all identities hold".into() } else { problems.join("; ") }))
}

fn correction_pipeline() -> Outcome {
    let mut cfg = ExperimentConfig::defaults("exp_wn_stability").unwrap();
    cfg.n = vec![1, 2];
    cfg.eps_grid = vec![0.0, 0.2, 0.1, 0.05, 0.02, 0.01];
    cfg.trials = 200;
    let r = run(&cfg).unwrap();
    let wanted = ["dist_strictly_decreasing", "fixed_point", "outputs_ucp"];
    let bad: Vec<String> = failed_checks(&r).into_iter().filter(|c| wanted.iter().any(|w| c.starts_with(w))).collect();
    outcome(bad.is_empty(), format!("{} trials: {}", r.records.len(), if bad.is_empty() { "u.c.p. outputs, strictly decreasing medians, exact fixed points".into() } else { bad.join("; ") }))
}

fn min_max_coincidence() -> Outcome {
    let cfg = ExperimentConfig::defaults("exp_hope").unwrap();
    let r = run(&cfg).unwrap();
    let bad = failed_checks(&r);
    let worst = r.summary.iter().filter(|s| s.metric == "max_archimedean_defect").map(|s| s.value).fold(0.0, f64::max);
    outcome(
        bad.is_empty() && worst <= 1e-5 && cfg.trials >= 200,
        format!("{} samples over M2*⊗M2, M2*⊗M3, M2*⊗E and M2⊗M2, max defect {worst:.1e}", r.records.len()),
    )
}

fn inclusion_pipeline() -> Outcome {
    let cfg = ExperimentConfig::defaults("exp_kirchberg").unwrap();
    let r = run(&cfg).unwrap();
    let w1 = r.records.iter().filter(|t| t["control"] == false).count();
    let bad = failed_checks(&r);
    let worst = r.records.iter().filter_map(|t| t["inclusion_defect"].as_f64()).fold(0.0, f64::max);
    outcome(
        bad.is_empty() && w1 >= 100,
        format!("{w1} W1 trials (p = 2,3; k = 1,2) plus controls, max inclusion defect {worst:.1e}{}", if bad.is_empty() { String::new() } else { format!("; failed {}", bad.join("; ")) }),
    )
}

fn determinism() -> Outcome {
    let mut diffs = Vec::new();
    for name in ["exp_matrix_stability", "exp_wn_stability", "exp_quotient_iso", "exp_hope", "exp_cover", "exp_kirchberg"] {
        let mut cfg = ExperimentConfig::defaults(name).unwrap();
        cfg.seed = 8;
        cfg.trials = 2;
        cfg.reps = cfg.reps.min(4);
        cfg.bootstrap = 50;
        if name == "exp_cover" {
            cfg.cover_dims = vec![2, 3];
            cfg.p = vec![2];
        }
        let a = run(&cfg).unwrap().reproducible_part();
        let b = run(&cfg).unwrap().reproducible_part();
        if a != b {
            diffs.push(name);
        }
    }
    outcome(diffs.is_empty(), format!("six experiments rerun: {}", if diffs.is_empty() { "identical records and verdicts".into() } else { format!("differences in {}", diffs.join(", ")) }))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 8] = [
        ("choi calculus", 10, choi_calculus),
        ("conic engine oracle", 60, conic_oracle),
        ("quotient circle oracle", 30, quotient_oracle),
        ("gamma identities", 600, gamma_identities),
        ("correction pipeline", 600, correction_pipeline),
        ("min=max coincidence", 300, min_max_coincidence),
        ("finite inclusion pipeline", 600, inclusion_pipeline),
        ("determinism", 600, determinism),
    ];
    let mut failures = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let timely = within(elapsed, *budget);
        let passed = o.passed && timely;
        if !passed {
            failures += 1;
        }
        let late = if timely { String::new() } else { format!(" [over the {budget}s budget]") };
        println!(
            "criterion {} {name}: {} ({:.1}s) {}{late}",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {}/8 passed", 8 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
