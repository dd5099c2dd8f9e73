//! Config files: an optional top-level `seed`, an `[all]` section applied to
//! every experiment, and one section per experiment name. Later layers win.
//!
//! ```toml
//! seed = 7
//!
//! [all]
//! trials = 50
//!
//! [exp_hope]
//! p = [2, 3]
//! ```

use serde::Deserialize;

use opsys_core::ExperimentConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overlay {
    seed: Option<u64>,
    n: Option<Vec<usize>>,
    k: Option<Vec<usize>>,
    d: Option<Vec<usize>>,
    p: Option<Vec<usize>>,
    cover_dims: Option<Vec<usize>>,
    eps_grid: Option<Vec<f64>>,
    delta: Option<f64>,
    tol: Option<f64>,
    gap_tol: Option<f64>,
    trials: Option<usize>,
    reps: Option<usize>,
    maps: Option<usize>,
    kraus_rank: Option<usize>,
    norm_trials: Option<usize>,
    bootstrap: Option<usize>,
}

macro_rules! overlay {
    ($o:expr, $cfg:expr, $($field:ident),*) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
    };
}

impl Overlay {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        overlay!(
            self, cfg, seed, n, k, d, p, cover_dims, eps_grid, delta, tol, gap_tol, trials, reps, maps, kraus_rank,
            norm_trials, bootstrap
        );
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    seed: Option<u64>,
    all: Option<Overlay>,
    exp_matrix_stability: Option<Overlay>,
    exp_wn_stability: Option<Overlay>,
    exp_quotient_iso: Option<Overlay>,
    exp_hope: Option<Overlay>,
    exp_cover: Option<Overlay>,
    exp_kirchberg: Option<Overlay>,
}

impl ConfigFile {
    /// Parse errors carry the line and column of the offending text.
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    fn section(&self, name: &str) -> Option<&Overlay> {
        match name {
            "exp_matrix_stability" => self.exp_matrix_stability.as_ref(),
            "exp_wn_stability" => self.exp_wn_stability.as_ref(),
            "exp_quotient_iso" => self.exp_quotient_iso.as_ref(),
            "exp_hope" => self.exp_hope.as_ref(),
            "exp_cover" => self.exp_cover.as_ref(),
            "exp_kirchberg" => self.exp_kirchberg.as_ref(),
            _ => None,
        }
    }

    /// Defaults, then the top-level seed, then `[all]`, then the experiment's section.
    pub fn resolve(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(all) = &self.all {
            all.apply(cfg);
        }
        if let Some(own) = self.section(&cfg.name) {
            own.apply(cfg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_apply_in_order() {
        let f = ConfigFile::parse("seed = 3\n[all]\ntrials = 5\n[exp_hope]\ntrials = 7\np = [2]\n").unwrap();
        let mut coincide = ExperimentConfig::defaults("exp_hope").unwrap();
        f.resolve(&mut coincide);
        assert_eq!((coincide.seed, coincide.trials, coincide.p.clone()), (3, 7, vec![2]));
        let mut cover = ExperimentConfig::defaults("exp_cover").unwrap();
        f.resolve(&mut cover);
        assert_eq!(cover.trials, 5);
    }

    #[test]
    fn errors_name_the_position() {
        let e = ConfigFile::parse("[exp_hope]\ntrials = \"many\"\n").unwrap_err();
        assert!(e.contains("line 2"), "{e}");
        let e = ConfigFile::parse("[exp_hope]\ntrails = 3\n").unwrap_err();
        assert!(e.contains("line 2"), "{e}");
    }
}
