//! Run manifests: one JSON file per produced artifact, recording the
//! configuration, seeds and the content hashes of every input and output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use voxel_outlier::config::{hex_sha256, PipelineConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub encoding_hash: String,
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    /// sha256 of each input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// sha256 of each output file, keyed by role.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        let config = cfg
            .render()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let seeds = BTreeMap::from([
            ("pretrain".to_string(), cfg.pretrain_sgd().seed),
            ("pairs".to_string(), cfg.pair_seed()),
            ("finetune".to_string(), cfg.finetune_sgd().seed),
        ]);
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            encoding_hash: cfg.encoding_hash(),
            config,
            seeds,
            ..Self::default()
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(role.to_string(), file_sha256(path)?);
        Ok(())
    }

    pub fn output(&mut self, role: &str, path: &Path) -> Result<()> {
        self.outputs.insert(role.to_string(), file_sha256(path)?);
        Ok(())
    }

    /// Writes the manifest next to `artifact` as `<artifact>.manifest.json`.
    pub fn save_for(&self, artifact: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        let path = manifest_path(artifact);
        voxel_outlier::write_atomic(&path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn load_for(artifact: &Path) -> Result<Self> {
        let path = manifest_path(artifact);
        let text = std::fs::read_to_string(&path).with_context(|| {
            format!(
                "reading run manifest {} (lineage cannot be checked without it)",
                path.display()
            )
        })?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex_sha256(&bytes))
}

/// Refuses to combine a bank with a model or configuration other than the
/// ones it was built from.
pub fn check_bank_lineage(bank: &Path, model: &Path, cfg: &PipelineConfig) -> Result<()> {
    let m = Manifest::load_for(bank)?;
    let recorded = m
        .inputs
        .get("model")
        .with_context(|| format!("bank manifest for {} records no model", bank.display()))?;
    let actual = file_sha256(model)?;
    if *recorded != actual {
        bail!(
            "model hash mismatch: bank {} was built with model {recorded}, but {} has hash {actual}",
            bank.display(),
            model.display()
        );
    }
    if m.encoding_hash != cfg.encoding_hash() {
        bail!(
            "config mismatch: bank {} was built with patch_size = {}, score_stride = {}; current config has {}, {}",
            bank.display(),
            m.config.get("patch_size").map_or("?", String::as_str),
            m.config.get("score_stride").map_or("?", String::as_str),
            cfg.patch_size,
            cfg.score_stride
        );
    }
    Ok(())
}
