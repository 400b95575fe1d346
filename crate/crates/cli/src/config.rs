//! Experiment configuration, read from TOML. Every field has a default, so
//! an empty file is a valid configuration.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use codnet::dist_opt::{Recovery, StepSchedule};
use codnet::dynmulti::Policy;
use codnet::netmodel::AlohaParams;
use codnet::simulator::ExponentConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out: PathBuf,
    pub parallel: bool,
    pub wucast: Wucast,
    pub wmcast: Wmcast,
    pub wenergy: Wenergy,
    pub finmem: Finmem,
    pub aloha: Aloha,
    pub dynmulti: Dynmulti,
    pub exponent: ExponentConfig,
    pub dist: Dist,
    pub sim: Sim,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            out: PathBuf::from("out"),
            parallel: false,
            wucast: Wucast::default(),
            wmcast: Wmcast::default(),
            wenergy: Wenergy::default(),
            finmem: Finmem::default(),
            aloha: Aloha::default(),
            dynmulti: Dynmulti::default(),
            exponent: ExponentConfig::default(),
            dist: Dist::default(),
            sim: Sim::default(),
        }
    }
}

/// Unicast over a fading geometric network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Wucast {
    pub nodes: Vec<usize>,
    pub instances: usize,
}

impl Default for Wucast {
    fn default() -> Self {
        Wucast { nodes: vec![9], instances: 200 }
    }
}

/// Wireline multicast: coded cost against the Steiner-tree heuristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Wmcast {
    /// Topology in the weights format; synthetic graphs when absent.
    pub topology: Option<PathBuf>,
    pub nodes: usize,
    pub extra_degree: f64,
    pub sinks: Vec<usize>,
    /// Instances per sink count.
    pub instances: usize,
    /// Depth of the recursive greedy tree heuristic.
    pub level: usize,
}

impl Default for Wmcast {
    fn default() -> Self {
        Wmcast { topology: None, nodes: 30, extra_degree: 2.0, sinks: vec![2, 4, 8], instances: 34, level: 2 }
    }
}

/// Wireless multicast energy: coded against the multicast incremental power
/// tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Wenergy {
    pub sizes: Vec<usize>,
    pub sinks: Vec<usize>,
    /// Instances per (size, sink count) cell.
    pub instances: usize,
}

impl Default for Wenergy {
    fn default() -> Self {
        Wenergy { sizes: vec![20, 30, 40, 50], sinks: vec![2, 4, 8, 16], instances: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Finmem {
    pub r: Vec<f64>,
    pub eps: f64,
    pub delta: f64,
    pub m_max: usize,
    /// Field sizes as powers of two.
    pub q_bits: Vec<u32>,
    pub epochs: u64,
}

impl Default for Finmem {
    fn default() -> Self {
        Finmem { r: vec![0.6, 0.8], eps: 0.1, delta: 0.2, m_max: 10, q_bits: vec![1, 8, 16], epochs: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Aloha {
    pub rates: Vec<f64>,
    pub params: AlohaParams,
}

impl Default for Aloha {
    fn default() -> Self {
        Aloha { rates: vec![0.125], params: AlohaParams::reference() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dynmulti {
    pub nodes: usize,
    pub instances: usize,
    pub episodes: usize,
    pub horizon: usize,
    pub birth: f64,
    pub death: f64,
    pub policies: Vec<Policy>,
}

impl Default for Dynmulti {
    fn default() -> Self {
        Dynmulti {
            nodes: 6,
            instances: 5,
            episodes: 50,
            horizon: 40,
            birth: 0.4,
            death: 0.3,
            policies: vec![Policy::Myopic, Policy::Greedy, Policy::Broadcast],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Subgradient,
    PrimalDual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dist {
    pub method: Method,
    pub nodes: usize,
    pub sinks: usize,
    pub instances: usize,
    pub iterations: usize,
    pub schedule: StepSchedule,
    /// Smoothing exponent for the primal-dual method.
    pub smoothing: f64,
}

impl Default for Dist {
    fn default() -> Self {
        Dist {
            method: Method::Subgradient,
            nodes: 30,
            sinks: 4,
            instances: 20,
            iterations: 100,
            schedule: StepSchedule::default(),
            smoothing: 4.0,
        }
    }
}

/// Single coding session on a hypergraph file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sim {
    pub k: usize,
    pub q_bits: u32,
    pub lambda: usize,
    pub sample_every: f64,
    /// Rate used for arcs without `z=`.
    pub default_z: f64,
}

impl Default for Sim {
    fn default() -> Self {
        Sim { k: 64, q_bits: 8, lambda: 4, sample_every: 1.0, default_z: 1.0 }
    }
}

impl Config {
    pub fn load(path: Option<&std::path::Path>) -> Result<Config> {
        let cfg: Config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Config::default(),
        };
        Ok(cfg)
    }

    /// Rejects parameter values outside the domains of the called modules.
    pub fn validate(&self) -> Result<()> {
        if self.wucast.nodes.iter().any(|&n| n < 2) {
            bail!("wucast.nodes: need at least two nodes");
        }
        if self.wmcast.nodes < 3 || self.wmcast.extra_degree < 0.0 || self.wmcast.sinks.contains(&0) {
            bail!("wmcast: need nodes >= 3, extra_degree >= 0 and positive sink counts");
        }
        if self.wmcast.topology.is_none() && self.wmcast.sinks.iter().any(|&k| k >= self.wmcast.nodes) {
            bail!("wmcast.sinks must be smaller than wmcast.nodes");
        }
        for &n in &self.wenergy.sizes {
            if self.wenergy.sinks.iter().any(|&k| k == 0 || k >= n) {
                bail!("wenergy: sink counts must lie in 1..{n}");
            }
        }
        let f = &self.finmem;
        if !(0.0..1.0).contains(&f.eps) || f.r.iter().any(|&r| !(r > 0.0 && r < 1.0 - f.eps)) {
            bail!("finmem: need 0 <= eps < 1 and 0 < r < 1 - eps");
        }
        if !(f.delta > 0.0 && f.delta < 1.0 - f.eps) {
            bail!("finmem.delta must lie in (0, 1 - eps)");
        }
        if f.q_bits.iter().any(|&b| b == 0 || b > 16) {
            bail!("finmem.q_bits must lie in 1..=16");
        }
        let d = &self.dynmulti;
        if d.nodes < 2 || !(0.0..=1.0).contains(&d.birth) || !(0.0..=1.0).contains(&d.death) {
            bail!("dynmulti: need nodes >= 2 and probabilities in [0, 1]");
        }
        if self.dist.sinks == 0 || self.dist.sinks >= self.dist.nodes {
            bail!("dist.sinks must lie in 1..nodes");
        }
        if self.dist.smoothing < 1.0 {
            bail!("dist.smoothing must be at least 1");
        }
        self.dist.schedule.validate().map_err(|e| anyhow::anyhow!("dist.schedule: {e}"))?;
        if !(1..=16).contains(&self.sim.q_bits) || self.sim.k == 0 {
            bail!("sim: need k >= 1 and q_bits in 1..=16");
        }
        if !(1..=16).contains(&self.exponent.m) {
            bail!("exponent.m must lie in 1..=16");
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration, excluding the output path
    /// and the parallel flag, neither of which changes results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.parallel = false;
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Seed of instance `i` of a study run with base seed `base`.
pub fn instance_seed(base: u64, i: usize) -> u64 {
    base.wrapping_mul(1_000_003).wrapping_add((i as u64) << 16)
}

pub(crate) fn recovery_name(r: Recovery) -> &'static str {
    match r {
        Recovery::Original => "original",
        Recovery::Modified => "modified",
    }
}
