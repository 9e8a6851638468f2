//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain_model::{Kernel, Observable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    FiniteOrder { order: usize, table: Vec<Vec<f64>> },
    GeometricMixture { theta: f64, table: Vec<Vec<f64>> },
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        let kernel = match self {
            KernelSpec::FiniteOrder { order, table } => Kernel::finite_order(*order, table),
            KernelSpec::GeometricMixture { theta, table } => Kernel::geometric_mixture(*theta, table),
        };
        kernel.map_err(|e| Error::Config(format!("kernel: {e}")))
    }
}

/// Which chain the regeneration blocks are cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// The chain of infinite order itself.
    #[default]
    InfiniteOrder,
    /// Its canonical order-k Markov approximation.
    Markov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    /// Longest trajectory generated while searching for `m` returns.
    #[serde(default = "default_max_trajectory")]
    pub max_trajectory: usize,
    /// Length of the trajectory used to estimate canonical approximations of
    /// infinite-order kernels.
    #[serde(default = "default_approx_trajectory")]
    pub approx_trajectory: usize,
}

fn default_max_trajectory() -> usize {
    1 << 31
}

fn default_approx_trajectory() -> usize {
    10_000_000
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            max_trajectory: default_max_trajectory(),
            approx_trajectory: default_approx_trajectory(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_max_moment")]
    pub max_moment: u32,
    #[serde(default = "default_bound_replicates")]
    pub replicates: usize,
    #[serde(default = "default_m_grid")]
    pub m_grid: Vec<usize>,
    #[serde(default = "default_scaling_replicates")]
    pub scaling_replicates: usize,
}

fn default_t_grid() -> Vec<f64> {
    (1..=10).map(f64::from).collect()
}

fn default_max_moment() -> u32 {
    4
}

fn default_bound_replicates() -> usize {
    100_000
}

fn default_m_grid() -> Vec<usize> {
    vec![100, 400, 1600]
}

fn default_scaling_replicates() -> usize {
    400
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            t_grid: default_t_grid(),
            max_moment: default_max_moment(),
            replicates: default_bound_replicates(),
            m_grid: default_m_grid(),
            scaling_replicates: default_scaling_replicates(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_coupling_replicates")]
    pub replicates: usize,
}

fn default_k_grid() -> Vec<usize> {
    vec![2, 4, 6]
}

fn default_horizon() -> usize {
    10
}

fn default_coupling_replicates() -> usize {
    100_000
}

impl Default for CouplingSpec {
    fn default() -> Self {
        Self {
            k_grid: default_k_grid(),
            horizon: default_horizon(),
            replicates: default_coupling_replicates(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    /// One value per symbol.
    pub observable: Vec<f64>,
    #[serde(default)]
    pub mode: Mode,
    pub k: usize,
    /// Schedule exponent; exactly one of `alpha` and `m` must be given.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub m: Option<usize>,
    /// Bootstrap replicates per outer replicate.
    #[serde(rename = "B", default = "default_bootstrap_replicates")]
    pub bootstrap_replicates: usize,
    /// Independent trajectories (outer Monte Carlo replicates).
    #[serde(default = "default_outer_replicates")]
    pub replicates: usize,
    pub seed: u64,
    /// Burn-in override; the default is `max(ceil(40 / c), 1000)`.
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Lag window of the long-run variance estimate.
    #[serde(default = "default_lag_window")]
    pub lag_window: usize,
    /// KS acceptance threshold for `clt-check`.
    #[serde(default = "default_ks_threshold")]
    pub ks_threshold: f64,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub coupling: CouplingSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_bootstrap_replicates() -> usize {
    2000
}

fn default_outer_replicates() -> usize {
    1
}

fn default_lag_window() -> usize {
    50
}

fn default_ks_threshold() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let kernel = self.kernel.build()?;
        self.observable()?;
        if self.observable.len() != kernel.alphabet().size() {
            return Err(Error::Config(format!(
                "observable has {} values for an alphabet of {} symbols",
                self.observable.len(),
                kernel.alphabet().size()
            )));
        }
        let counts = [
            ("k", self.k),
            ("B", self.bootstrap_replicates),
            ("replicates", self.replicates),
            ("caps.max_trajectory", self.caps.max_trajectory),
            ("caps.approx_trajectory", self.caps.approx_trajectory),
            ("bounds.replicates", self.bounds.replicates),
            ("bounds.scaling_replicates", self.bounds.scaling_replicates),
            ("coupling.horizon", self.coupling.horizon),
            ("coupling.replicates", self.coupling.replicates),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        match (self.alpha, self.m) {
            (Some(_), Some(_)) => return Err(Error::Config("give either alpha or m, not both".into())),
            (None, None) => return Err(Error::Config("one of alpha or m is required".into())),
            (Some(a), None) if !(a > 0.0 && a.is_finite()) => {
                return Err(Error::Config(format!("alpha must be positive, got {a}")))
            }
            (None, Some(0)) => return Err(Error::Config("m must be at least 1".into())),
            _ => {}
        }
        if !(self.ks_threshold > 0.0) {
            return Err(Error::Config("ks_threshold must be positive".into()));
        }
        if !(1..=4).contains(&self.bounds.max_moment) {
            return Err(Error::Config("bounds.max_moment must be in 1..=4".into()));
        }
        if self.bounds.t_grid.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("bounds.t_grid entries must be positive".into()));
        }
        if self.bounds.m_grid.contains(&0) || self.coupling.k_grid.contains(&0) {
            return Err(Error::Config("m_grid and k_grid entries must be at least 1".into()));
        }
        Ok(())
    }

    pub fn observable(&self) -> Result<Observable> {
        Observable::new(self.observable.clone()).map_err(|e| Error::Config(format!("observable: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "kernel": {"variant": "finite_order", "order": 1, "table": [[0.7, 0.3], [0.3, 0.7]]},
        "observable": [0, 1],
        "k": 3,
        "m": 100,
        "seed": 1
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.bootstrap_replicates, 2000);
        assert_eq!(c.mode, Mode::InfiniteOrder);
        assert_eq!(c.caps.max_trajectory, 1 << 31);
        assert_eq!(c.coupling.k_grid, vec![2, 4, 6]);
    }

    #[test]
    fn rejects_bad_configs() {
        let both = MINIMAL.replace("\"m\": 100", "\"m\": 100, \"alpha\": 1.0");
        assert!(matches!(ExperimentConfig::from_json(&both), Err(Error::Config(_))));
        let typo = MINIMAL.replace("\"seed\"", "\"sede\"");
        assert!(ExperimentConfig::from_json(&typo).is_err());
        let bad_obs = MINIMAL.replace("[0, 1]", "[0, 1, 2]");
        assert!(ExperimentConfig::from_json(&bad_obs).is_err());
        let bad_row = MINIMAL.replace("[0.7, 0.3]", "[0.7, 0.4]");
        assert!(ExperimentConfig::from_json(&bad_row).is_err());
        assert!(ExperimentConfig::from_json("{").is_err());
    }

    #[test]
    fn mixture_variant_parses() {
        let text = MINIMAL.replace(
            r#"{"variant": "finite_order", "order": 1,"#,
            r#"{"variant": "geometric_mixture", "theta": 0.2,"#,
        );
        let c = ExperimentConfig::from_json(&text).unwrap();
        assert!(matches!(c.kernel.build().unwrap(), Kernel::GeometricMixture(_)));
    }
}
