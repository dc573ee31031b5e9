use serde::Deserialize;

use pmean_fair::{Error, Result};

const EMBEDDED: &str = include_str!("../manifest.toml");

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub random: Random,
    pub oracle: Oracle,
    pub discretize: Discretize,
    pub welfarist: Welfarist,
    pub lemmas: Lemmas,
    pub numerics: Numerics,
    pub search: Search,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Random {
    pub instances: usize,
    pub max_agents: usize,
    pub max_items_divisible: usize,
    pub max_items_rounding: usize,
    pub two_agent_instances: usize,
    pub two_agent_max_items: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Oracle {
    pub resolution: usize,
    pub tie_grid: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Discretize {
    pub goods_z: usize,
    pub chores_z: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Welfarist {
    pub beta: u32,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Lemmas {
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Numerics {
    pub gradient_points: usize,
    pub mean_vectors: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Search {
    pub goods_3x7_eps: Vec<f64>,
    pub goods_3x7_p: Vec<f64>,
}

impl Manifest {
    pub fn embedded() -> Self {
        Self::parse(EMBEDDED).expect("embedded manifest is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Param(format!("manifest: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
