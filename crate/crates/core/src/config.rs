//! Declarative environment definitions (TOML or JSON).
//!
//! ```toml
//! [env]
//! kind = "gridworld"
//! width = 8
//! height = 8
//! slip = 0.0
//! horizon = 16
//! start = [0, 0]
//! [[env.channels]]
//! name = "gold"
//! cells = [[7, 0], [7, 1]]
//! ```
//!
//! or an explicit table with `kind = "explicit"`, `transition` as nested
//! `[s][a][s']` arrays, `initial`, `horizon` and per-state `features`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::GridWorld;
use crate::mdp::{FeatureMap, Mdp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvSpec {
    Gridworld(GridWorld),
    Explicit(ExplicitEnv),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplicitEnv {
    pub transition: Vec<Vec<Vec<f64>>>,
    pub initial: Vec<f64>,
    pub horizon: usize,
    pub features: Vec<Vec<f64>>,
}

impl EnvSpec {
    /// Builds and validates the MDP and feature map.
    pub fn build(&self) -> Result<(Mdp, FeatureMap)> {
        let (mdp, fmap) = match self {
            EnvSpec::Gridworld(g) => (g.build_mdp()?, g.build_features()?),
            EnvSpec::Explicit(e) => (
                Mdp::from_nested(&e.transition, e.initial.clone(), e.horizon)?.validated()?,
                FeatureMap::new(e.features.clone())?,
            ),
        };
        fmap.check_mdp(&mdp)?;
        Ok((mdp, fmap))
    }

    pub fn gridworld(&self) -> Option<&GridWorld> {
        match self {
            EnvSpec::Gridworld(g) => Some(g),
            EnvSpec::Explicit(_) => None,
        }
    }
}

/// Parses TOML, or JSON when the path ends in `.json`.
pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_str(&text)?)
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Deserialize)]
    struct Wrapper {
        env: EnvSpec,
    }

    #[test]
    fn gridworld_from_toml() {
        let text = r#"
            [env]
            kind = "gridworld"
            width = 3
            height = 2
            horizon = 4
            start = [0, 0]
            [[env.channels]]
            name = "goal"
            cells = [[2, 1]]
        "#;
        let w: Wrapper = toml::from_str(text).unwrap();
        let (mdp, fmap) = w.env.build().unwrap();
        assert_eq!(mdp.num_states(), 6);
        assert_eq!(fmap.dim(), 1);
        assert_eq!(fmap.get(5), &[1.0]);
    }

    #[test]
    fn explicit_probabilities_are_validated() {
        let text = r#"
            [env]
            kind = "explicit"
            transition = [[[1.0, 0.0]], [[0.3, 0.6]]]
            initial = [1.0, 0.0]
            horizon = 2
            features = [[1.0], [0.0]]
        "#;
        let w: Wrapper = toml::from_str(text).unwrap();
        let err = w.env.build().unwrap_err();
        assert!(err.to_string().contains("s=1"), "{err}");
    }
}
