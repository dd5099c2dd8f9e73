//! Named, seeded experiments that emit versioned reports.
//!
//! Trials run in parallel, each with its own generator derived from the run
//! seed and the trial index; records are assembled in index order, so a
//! report depends only on its configuration.

mod quotient;
mod stability;
mod tensor;

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::trial_rng;

pub use quotient::exp_quotient_iso;
pub use stability::{exp_matrix_stability, exp_wn_stability};
pub use tensor::{exp_cover, exp_hope, exp_kirchberg, CoverMap, CoverResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Registered experiments with one-line descriptions.
pub const EXPERIMENTS: [(&str, &str); 6] = [
    ("exp_matrix_stability", "almost u.c.p. maps on M_k are close to u.c.p. maps: empirical modulus curve"),
    ("exp_wn_stability", "correction of almost u.c.p. maps on W_n with the full constant chain"),
    ("exp_quotient_iso", "M_{n+1}/J_{n+1} versus concrete unitary models of W_n, with the circle oracle at n = 1"),
    ("exp_hope", "min and max tensor cones of M_n* with matrix algebras and small subsystems coincide"),
    ("exp_cover", "u.c.p. maps M_N* → E whose tensor amplifications almost cover the min cone"),
    ("exp_kirchberg", "min-positive elements of E ⊗ M_p are max-positive up to the covering defect"),
];

/// Every knob of every experiment; each experiment reads the fields it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// `W_n` indices.
    pub n: Vec<usize>,
    /// Matrix levels (and the domain size `k` of the matrix stability run).
    pub k: Vec<usize>,
    /// Codomain or representation dimensions.
    pub d: Vec<usize>,
    /// Sizes of the matrix factor `M_p`.
    pub p: Vec<usize>,
    /// Sizes `N` of the covering algebra `M_N*`.
    pub cover_dims: Vec<usize>,
    /// Perturbation sizes, in the order the modulus curve is reported.
    pub eps_grid: Vec<f64>,
    pub delta: f64,
    pub tol: f64,
    /// Acceptance threshold for cone defects.
    pub gap_tol: f64,
    pub trials: usize,
    /// Concrete representations per context.
    pub reps: usize,
    /// Candidate covering maps per trial.
    pub maps: usize,
    /// Kraus rank of sampled u.c.p. maps.
    pub kraus_rank: usize,
    /// Random starts per sampled norm lower bound.
    pub norm_trials: usize,
    pub bootstrap: usize,
}

impl ExperimentConfig {
    /// Defaults sized so the whole suite runs in minutes on one core.
    pub fn defaults(name: &str) -> Result<Self> {
        let base = Self {
            name: name.to_string(),
            seed: 0,
            n: vec![1, 2],
            k: vec![1, 2],
            d: vec![2],
            p: vec![2, 3],
            cover_dims: vec![2, 3, 4],
            eps_grid: vec![0.0, 0.2, 0.1, 0.05, 0.02, 0.01],
            delta: 0.1,
            tol: 1e-6,
            gap_tol: 1e-5,
            trials: 200,
            reps: 20,
            maps: 2,
            kraus_rank: 2,
            norm_trials: 2,
            bootstrap: 1000,
        };
        let cfg = match name {
            "exp_matrix_stability" => Self { k: vec![2], ..base },
            "exp_wn_stability" => Self { tol: 1e-7, ..base },
            "exp_quotient_iso" => Self { d: vec![2, 3, 4], reps: 200, ..base },
            "exp_hope" => Self { n: vec![2], ..base },
            "exp_cover" => Self { n: vec![1], trials: 10, ..base },
            "exp_kirchberg" => Self { n: vec![1], cover_dims: vec![4], trials: 25, maps: 1, ..base },
            _ => return Err(unknown(name)),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let lists: [(&str, &[usize]); 5] =
            [("n", &self.n), ("k", &self.k), ("d", &self.d), ("p", &self.p), ("cover_dims", &self.cover_dims)];
        for (key, v) in lists {
            if v.is_empty() {
                return Err(Error::Config(format!("`{key}` must not be empty")));
            }
            if v.contains(&0) {
                return Err(Error::Config(format!("`{key}` entries must be positive")));
            }
        }
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Config("`eps_grid` must be a nonempty list of nonnegative numbers".into()));
        }
        for (key, v) in [("tol", self.tol), ("gap_tol", self.gap_tol), ("delta", self.delta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("`{key}` must be positive")));
            }
        }
        for (key, v) in [("trials", self.trials), ("reps", self.reps), ("maps", self.maps), ("kraus_rank", self.kraus_rank)] {
            if v == 0 {
                return Err(Error::Config(format!("`{key}` must be positive")));
            }
        }
        Ok(())
    }
}

fn unknown(name: &str) -> Error {
    let names: Vec<&str> = EXPERIMENTS.iter().map(|e| e.0).collect();
    Error::Config(format!("unknown experiment `{name}` (known: {})", names.join(", ")))
}

/// One row of a summary table: a statistic of a group of trials, with an
/// optional bootstrap band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: String,
    pub metric: String,
    pub value: f64,
    pub band: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub config: ExperimentConfig,
    pub records: Vec<serde_json::Value>,
    pub summary: Vec<SummaryRow>,
    pub checks: Vec<Check>,
    /// Membership certificates issued, and how many were indeterminate.
    pub certificates: usize,
    pub indeterminate: usize,
    pub wall_time_s: f64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn indeterminate_fraction(&self) -> f64 {
        if self.certificates == 0 {
            0.0
        } else {
            self.indeterminate as f64 / self.certificates as f64
        }
    }

    /// Everything except the timing, for reproducibility comparisons.
    pub fn reproducible_part(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut().expect("object").remove("wall_time_s");
        v
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Summary and checks as one CSV table.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
        w.write_record(["kind", "group", "metric", "value", "band_lo", "band_hi"]).map_err(io)?;
        for r in &self.summary {
            let (lo, hi) = r.band.map(|[a, b]| (a.to_string(), b.to_string())).unwrap_or_default();
            w.write_record(["summary", &r.group, &r.metric, &r.value.to_string(), &lo, &hi]).map_err(io)?;
        }
        for c in &self.checks {
            let v = if c.passed { "1" } else { "0" };
            w.write_record(["check", &c.name, &c.detail, v, "", ""]).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv: {e}")))
    }
}

/// Run an experiment by name.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = match cfg.name.as_str() {
        "exp_matrix_stability" => exp_matrix_stability(cfg),
        "exp_wn_stability" => exp_wn_stability(cfg),
        "exp_quotient_iso" => exp_quotient_iso(cfg),
        "exp_hope" => exp_hope(cfg),
        "exp_cover" => exp_cover(cfg),
        "exp_kirchberg" => exp_kirchberg(cfg),
        other => Err(unknown(other)),
    }?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Report skeleton filled by each experiment.
pub(crate) struct Builder {
    cfg: ExperimentConfig,
    records: Vec<serde_json::Value>,
    summary: Vec<SummaryRow>,
    checks: Vec<Check>,
    certificates: usize,
    indeterminate: usize,
}

impl Builder {
    pub(crate) fn new(cfg: &ExperimentConfig) -> Self {
        Self { cfg: cfg.clone(), records: Vec::new(), summary: Vec::new(), checks: Vec::new(), certificates: 0, indeterminate: 0 }
    }

    pub(crate) fn record(&mut self, r: &impl Serialize) {
        self.records.push(serde_json::to_value(r).expect("records serialize"));
    }

    pub(crate) fn stat(&mut self, group: impl Into<String>, metric: impl Into<String>, value: f64) {
        self.summary.push(SummaryRow { group: group.into(), metric: metric.into(), value, band: None });
    }

    /// Median with a bootstrap 90% band; `stream` keeps resampling independent
    /// across groups.
    pub(crate) fn median(&mut self, group: impl Into<String>, metric: impl Into<String>, values: &[f64], stream: u64) -> f64 {
        let (m, band) = median_band(values, self.cfg.bootstrap, self.cfg.seed, stream);
        self.summary.push(SummaryRow { group: group.into(), metric: metric.into(), value: m, band });
        m
    }

    pub(crate) fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub(crate) fn certificates(&mut self, issued: usize, indeterminate: usize) {
        self.certificates += issued;
        self.indeterminate += indeterminate;
    }

    pub(crate) fn finish(self) -> ExperimentReport {
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            experiment: self.cfg.name.clone(),
            config: self.cfg,
            records: self.records,
            summary: self.summary,
            checks: self.checks,
            certificates: self.certificates,
            indeterminate: self.indeterminate,
            wall_time_s: 0.0,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

/// Median and the 5%/95% percentiles of bootstrap medians.
pub fn median_band(values: &[f64], resamples: usize, seed: u64, stream: u64) -> (f64, Option<[f64; 2]>) {
    let m = median(values);
    if values.len() < 2 || resamples == 0 {
        return (m, None);
    }
    let mut rng = trial_rng(seed ^ 0xB007_5742_u64, stream);
    let mut meds: Vec<f64> = (0..resamples)
        .map(|_| {
            let sample: Vec<f64> = (0..values.len()).map(|_| *values.choose(&mut rng).expect("nonempty")).collect();
            median(&sample)
        })
        .collect();
    meds.sort_by(f64::total_cmp);
    let at = |q: f64| meds[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (m, Some([at(0.05), at(0.95)]))
}

/// True if the sequence strictly decreases.
pub(crate) fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// True if the sequence never increases by more than `slack`.
pub(crate) fn nonincreasing(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + slack)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_exist_and_validate() {
        for (name, _) in EXPERIMENTS {
            let c = ExperimentConfig::defaults(name).unwrap();
            c.validate().unwrap();
            assert_eq!(c.name, name);
        }
        assert!(ExperimentConfig::defaults("exp_nothing").is_err());
    }

    #[test]
    fn validation_rejects_empty_ranges() {
        let mut c = ExperimentConfig::defaults("exp_hope").unwrap();
        c.p.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::defaults("exp_hope").unwrap();
        c.tol = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn bootstrap_band_brackets_the_median() {
        let v: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let (m, band) = median_band(&v, 500, 1, 0);
        let [lo, hi] = band.unwrap();
        assert_eq!(m, 50.0);
        assert!(lo <= m && m <= hi && lo > 30.0 && hi < 70.0);
        assert_eq!(median_band(&v, 500, 1, 0), (m, band));
        assert_eq!(median(&[3.0, 1.0]), 2.0);
    }
}
