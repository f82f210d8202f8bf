//! Model bundles: a directory holding `W.csv`, `beta.csv` and
//! `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{InitSnapshot, MlpParams, TrainMode};
use crate::error::{RepairError, Result};
use crate::io::{read_matrix, read_vector, write_matrix, write_vector};
use crate::linmod::Activation;
use crate::randgen::{CorruptionModel, RngSeed};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub n: usize,
    pub d: usize,
    pub p: usize,
    pub activation: Activation,
    pub mode: TrainMode,
    pub t_max: usize,
    pub gamma: f64,
    pub normalized: bool,
    /// Regenerates `W(0)` and `beta(0)`.
    pub init_seed: RngSeed,
    /// Other seeds that produced the bundle (data, corruption, ...).
    #[serde(default)]
    pub seeds: BTreeMap<String, RngSeed>,
    /// Set for corrupted copies.
    #[serde(default)]
    pub corruption: Option<CorruptionModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<F> {
    pub hidden: Array2<F>,
    pub output: Array1<F>,
    pub manifest: BundleManifest,
}

impl<F: Real> ModelBundle<F> {
    /// Rebuilds parameters, regenerating the initialization from its seed.
    pub fn params(&self) -> Result<MlpParams<F>> {
        let m = &self.manifest;
        let init = InitSnapshot::generate(m.p, m.d, m.init_seed)?;
        Ok(MlpParams {
            hidden: self.hidden.clone(),
            output: self.output.clone(),
            activation: m.activation,
            init,
            normalized: m.normalized,
        })
    }
}

pub fn write_bundle<F: Real>(dir: impl AsRef<Path>, bundle: &ModelBundle<F>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_matrix(dir.join("W.csv"), bundle.hidden.view(), None)?;
    write_vector(dir.join("beta.csv"), bundle.output.view(), None)?;
    let json = serde_json::to_string_pretty(&bundle.manifest)?;
    fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}

pub fn read_bundle<F: Real>(dir: impl AsRef<Path>) -> Result<ModelBundle<F>> {
    let dir = dir.as_ref();
    let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let hidden = read_matrix::<F>(dir.join("W.csv"))?;
    let output = read_vector::<F>(dir.join("beta.csv"))?;
    if hidden.dim() != (manifest.d, manifest.p) || output.len() != manifest.p {
        return Err(RepairError::Parse(format!(
            "bundle shapes W {:?}, beta {} disagree with manifest d={}, p={}",
            hidden.dim(),
            output.len(),
            manifest.d,
            manifest.p
        )));
    }
    Ok(ModelBundle { hidden, output, manifest })
}
