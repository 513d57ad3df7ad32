use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use bond3::dmrg;

/// Everything that determines a run: together with the library version and
/// fixed seed it reproduces the outputs bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub command: String,
    pub version: String,
    #[serde(rename = "L")]
    pub orbitals: Option<usize>,
    #[serde(rename = "N")]
    pub particles: Option<usize>,
    pub seed: u64,
    pub trials: Option<usize>,
    /// As given on the command line: a comma list or `theorem1`.
    pub bond_dims: Option<String>,
    pub tolerances: BTreeMap<String, f64>,
    pub inputs: BTreeMap<String, String>,
    pub output: Option<String>,
}

impl ExperimentSpec {
    pub fn new(command: &str, seed: u64) -> Self {
        ExperimentSpec {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            orbitals: None,
            particles: None,
            seed,
            trials: None,
            bond_dims: None,
            tolerances: BTreeMap::new(),
            inputs: BTreeMap::new(),
            output: None,
        }
    }

    pub fn tol(mut self, name: &str, value: f64) -> Self {
        self.tolerances.insert(name.to_string(), value);
        self
    }

    pub fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.to_string(), path.display().to_string());
        self
    }
}

/// Resolves `theorem1` or a comma-separated list against `L` orbitals.
pub fn parse_bond_dims(text: &str, orbitals: usize) -> Result<Vec<usize>> {
    if text.trim().eq_ignore_ascii_case("theorem1") {
        if orbitals < 2 {
            bail!("theorem1 bond dimensions need at least 2 orbitals");
        }
        return Ok(dmrg::theorem1_bond_dims(orbitals));
    }
    let dims = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .with_context(|| format!("bad bond dimension {t:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    match dims.as_slice() {
        [d] => Ok(dmrg::uniform_bond_dims(orbitals, *d)),
        _ if dims.len() + 1 == orbitals => Ok(dims),
        _ => bail!(
            "{} bond dimensions given for {orbitals} orbitals (need {} or a single value)",
            dims.len(),
            orbitals.saturating_sub(1)
        ),
    }
}

/// Comma-separated unsigned integers.
pub fn parse_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .with_context(|| format!("bad list entry {t:?}"))
        })
        .collect()
}
