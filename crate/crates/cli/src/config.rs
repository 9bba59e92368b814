use anyhow::{bail, Result};
use biortho_core::construction::ConstructionConfig;
use biortho_core::weights::{AdmissiblePair, CheckMode, Exponents, FreudWeight, Growth, InnerWeight, NodeSource};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreudSpec {
    pub beta: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    /// Nodes come from the construction stage.
    Constructed,
    Power,
    Geometric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerSpec {
    pub nodes: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    pub m: f64,
    pub mu: f64,
    pub d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSpec {
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub freud: FreudSpec,
    pub inner: InnerSpec,
    pub g: GrowthSpec,
    pub gamma: f64,
    pub n0: usize,
    /// Number of constructed nodes.
    pub nodes: usize,
    /// Number of dual functions solved for and verified.
    pub duals: usize,
    pub tolerance: f64,
    /// First node.
    pub seed: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// Highest basis degree; derived from the growth when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_degree: Option<usize>,
    /// Points per unit length of the dual-norm grid.
    #[serde(default = "default_grid_density")]
    pub grid_density: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_mode")]
    pub mode: CheckMode,
    /// Marks exponents chosen for desk-scale runs rather than the admissible
    /// regime; an inadmissible pair is then reported but does not fail.
    #[serde(default)]
    pub toy_scale: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_floor() -> f64 {
    1e-12
}

fn default_grid_density() -> usize {
    4
}

fn default_horizon() -> f64 {
    1e6
}

fn default_mode() -> CheckMode {
    CheckMode::Strict
}

impl ExperimentConfig {
    /// Hermite weight, `g(k) = k^3`, ten nodes from `x_1 = 1`.
    pub fn toy() -> Self {
        Self {
            freud: FreudSpec { beta: 2.0, scale: 0.5 },
            inner: InnerSpec {
                nodes: NodeKind::Constructed,
                nu: None,
                ratio: None,
                m: 0.5,
                mu: 0.25,
                d: 0.01,
            },
            g: GrowthSpec { alpha: 3.0 },
            gamma: 0.2,
            n0: 2,
            nodes: 10,
            duals: 6,
            tolerance: 1e-6,
            seed: 1.0,
            floor: default_floor(),
            basis_degree: None,
            grid_density: default_grid_density(),
            horizon: default_horizon(),
            mode: CheckMode::Strict,
            toy_scale: true,
            output: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.nodes == 0 {
            bail!("node count must be positive");
        }
        if self.duals == 0 {
            bail!("dual count must be positive");
        }
        if !(self.tolerance > 0.0) {
            bail!("solver tolerance must be positive");
        }
        if !(self.g.alpha > 1.0) {
            bail!("growth exponent alpha must exceed 1");
        }
        if !(self.gamma > 0.0) {
            bail!("gamma must be positive");
        }
        if self.grid_density == 0 {
            bail!("grid density must be positive");
        }
        Ok(())
    }

    pub fn weight(&self) -> Result<FreudWeight<f64>> {
        Ok(FreudWeight::power_scaled(self.freud.beta, self.freud.scale)?)
    }

    pub fn pair(&self) -> AdmissiblePair<f64> {
        AdmissiblePair::power(self.g.alpha, self.gamma, self.n0)
    }

    pub fn growth(&self) -> Growth<f64> {
        Growth::Power { alpha: self.g.alpha }
    }

    pub fn construction(&self) -> ConstructionConfig {
        ConstructionConfig {
            seed: self.seed,
            n0: self.n0,
            floor: self.floor,
        }
    }

    /// Degree large enough for every candidate window of the construction.
    pub fn degree(&self) -> usize {
        self.basis_degree.unwrap_or_else(|| {
            let k = self.nodes;
            self.growth().index(k + self.n0) + k * (2 * k + 2) + 16
        })
    }

    /// Inner weight on the given nodes, or on the configured node family.
    pub fn inner_weight(&self, constructed: Option<&[f64]>) -> Result<InnerWeight<f64>> {
        let source = match (&self.inner.nodes, constructed) {
            (_, Some(xs)) => NodeSource::Explicit(xs.to_vec()),
            (NodeKind::Power, None) => NodeSource::Power {
                nu: self.inner.nu.ok_or_else(|| anyhow::anyhow!("power nodes need nu"))?,
            },
            (NodeKind::Geometric, None) => NodeSource::Geometric {
                ratio: self.inner.ratio.ok_or_else(|| anyhow::anyhow!("geometric nodes need ratio"))?,
            },
            (NodeKind::Constructed, None) => bail!("constructed nodes are not available yet"),
        };
        Ok(InnerWeight::new(source, Exponents::Constant(self.inner.m), self.inner.mu, self.inner.d)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_round_trips() {
        let cfg = ExperimentConfig::toy();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
        cfg.check().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = ExperimentConfig::toy();
        cfg.g.alpha = 1.0;
        assert!(cfg.check().is_err());
        let mut cfg = ExperimentConfig::toy();
        cfg.tolerance = 0.0;
        assert!(cfg.check().is_err());
    }

    #[test]
    fn node_sources() {
        let cfg = ExperimentConfig::toy();
        assert!(cfg.inner_weight(None).is_err());
        assert!(cfg.inner_weight(Some(&[1.0, 4.0])).is_ok());
        let mut cfg = cfg;
        cfg.inner.nodes = NodeKind::Power;
        assert!(cfg.inner_weight(None).is_err());
        cfg.inner.nu = Some(2.0);
        assert!(cfg.inner_weight(None).is_ok());
    }

    #[test]
    fn degree_covers_the_last_window() {
        let cfg = ExperimentConfig::toy();
        assert!(cfg.degree() >= cfg.growth().index(cfg.nodes + cfg.n0));
    }
}
