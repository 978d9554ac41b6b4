//! Run configuration: JSON config file merged under command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Keys accepted in a config file. Every key can also be given as a flag,
/// and flags win.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub map: Option<PathBuf>,
    pub family: Option<String>,
    pub jacobian: Option<f64>,
    pub params: Option<[f64; 2]>,
    pub word: Option<PathBuf>,
    pub depth: Option<usize>,
    pub level: Option<usize>,
    pub bmax: Option<usize>,
    pub eps: Option<f64>,
    pub lambda: Option<f64>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    pub grid: Option<usize>,
    pub certify: Option<bool>,
    pub eta: Option<f64>,
    pub chi: Option<usize>,
    pub scan: Option<usize>,
    pub tol: Option<f64>,
    pub horizon: Option<usize>,
    pub seeds: Option<usize>,
    pub transient: Option<usize>,
    pub eps0: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub d: Option<f64>,
    /// Quadratic parameter whose 1D renormalization orbit is the reference.
    pub reference: Option<f64>,
    pub probe_t: Option<f64>,
    pub probe_samples: Option<usize>,
    pub precision: Option<String>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config: cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--config: {e}")))
    }

    /// `self` with every key set in `flags` replaced.
    pub fn merged(mut self, flags: &RunConfig) -> RunConfig {
        overlay!(
            self, flags, command, map, family, jacobian, params, word, depth, level, bmax, eps, lambda, l, grid,
            certify, eta, chi, scan, tol, horizon, seeds, transient, eps0, c, k, d, reference, probe_t, probe_samples,
            precision, out, csv, seed, workers
        );
        self
    }

    /// Reject knobs outside their documented ranges, naming the flag.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |flag: &str, why: &str| Err(CliError::Usage(format!("--{flag}: {why}")));
        let open_unit = |v: Option<f64>| v.is_some_and(|v| !(v > 0.0 && v < 1.0));
        if open_unit(self.eps) {
            return bad("eps", "must lie in (0, 1)");
        }
        if open_unit(self.lambda) {
            return bad("lambda", "must lie in (0, 1)");
        }
        if open_unit(self.eps0) {
            return bad("eps0", "must lie in (0, 1)");
        }
        if self.l.is_some_and(|v| !(v >= 1.0 && v.is_finite())) {
            return bad("L", "must be at least 1");
        }
        if self.depth.is_some_and(|v| !(1..=16).contains(&v)) {
            return bad("depth", "must lie in 1..=16");
        }
        if self.bmax.is_some_and(|v| !(2..=64).contains(&v)) {
            return bad("bmax", "must lie in 2..=64");
        }
        if self.grid.is_some_and(|v| !(2..=512).contains(&v)) {
            return bad("grid", "must lie in 2..=512");
        }
        if self.scan.is_some_and(|v| v < 3) {
            return bad("scan", "must be at least 3");
        }
        if self.tol.is_some_and(|v| !(v > 0.0)) {
            return bad("tol", "must be positive");
        }
        if self.eta.is_some_and(|v| !(v >= 0.0)) {
            return bad("eta", "must be non-negative");
        }
        if self.jacobian.is_some_and(|v| !(0.0..1.0).contains(&v)) {
            return bad("jacobian", "must lie in [0, 1)");
        }
        if self.horizon == Some(0) {
            return bad("horizon", "must be positive");
        }
        if self.seeds == Some(0) {
            return bad("seeds", "must be positive");
        }
        if self.workers == Some(0) {
            return bad("workers", "must be positive");
        }
        if let Some(p) = &self.precision {
            if p != "double" {
                return bad("precision", "only \"double\" is available");
            }
        }
        if let Some(f) = &self.family {
            if f != "henon" {
                return bad("family", "only \"henon\" is available");
            }
        }
        if let Some([lo, hi]) = self.params {
            if !(lo < hi) {
                return bad("params", "needs lo < hi");
            }
        }
        Ok(())
    }
}
