//! Flat `key = value` pipeline configuration.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `parse(render(c)) == c` holds exactly and the rendered text (and therefore
//! its hash) depends only on the values.

use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::SgdConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub patch_size: usize,
    /// Grid step for training patches.
    pub stride: usize,
    /// Grid step for bank centers and scoring.
    pub score_stride: usize,
    pub widths: Vec<usize>,
    pub corruption_pretrain: Vec<f64>,
    pub corruption_finetune: f64,
    pub alpha: f64,
    pub nu: f64,
    /// gamma = 1 / (gamma_scale * median_distance^2).
    pub gamma_scale: f64,
    pub p_value: f64,
    pub min_cluster_size: usize,
    pub pretrain_learning_rate: f64,
    pub pretrain_batch_size: usize,
    pub pretrain_epochs: usize,
    pub finetune_learning_rate: f64,
    pub finetune_batch_size: usize,
    pub finetune_epochs: usize,
    /// Number of similar pairs; 0 means one per training patch.
    pub finetune_pairs: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let pre = SgdConfig::pretrain_default();
        let fine = SgdConfig::finetune_default();
        Self {
            patch_size: 9,
            stride: 5,
            score_stride: 1,
            widths: vec![64, 32],
            corruption_pretrain: vec![0.3, 0.1],
            corruption_finetune: 0.1,
            alpha: 0.66,
            nu: 0.03,
            gamma_scale: 2.0,
            p_value: 0.003,
            min_cluster_size: 82,
            pretrain_learning_rate: pre.learning_rate,
            pretrain_batch_size: pre.batch_size,
            pretrain_epochs: pre.epochs,
            finetune_learning_rate: fine.learning_rate,
            finetune_batch_size: fine.batch_size,
            finetune_epochs: fine.epochs,
            finetune_pairs: 0,
            seed: 0,
        }
    }
}

fn list<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn many<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| one(key, v.trim())).collect()
}

impl PipelineConfig {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("patch_size", self.patch_size.to_string()),
            ("stride", self.stride.to_string()),
            ("score_stride", self.score_stride.to_string()),
            ("widths", list(&self.widths)),
            ("corruption_pretrain", list(&self.corruption_pretrain)),
            ("corruption_finetune", self.corruption_finetune.to_string()),
            ("alpha", self.alpha.to_string()),
            ("nu", self.nu.to_string()),
            ("gamma_scale", self.gamma_scale.to_string()),
            ("p_value", self.p_value.to_string()),
            ("min_cluster_size", self.min_cluster_size.to_string()),
            (
                "pretrain_learning_rate",
                self.pretrain_learning_rate.to_string(),
            ),
            ("pretrain_batch_size", self.pretrain_batch_size.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            (
                "finetune_learning_rate",
                self.finetune_learning_rate.to_string(),
            ),
            ("finetune_batch_size", self.finetune_batch_size.to_string()),
            ("finetune_epochs", self.finetune_epochs.to_string()),
            ("finetune_pairs", self.finetune_pairs.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "patch_size" => self.patch_size = one(key, v)?,
            "stride" => self.stride = one(key, v)?,
            "score_stride" => self.score_stride = one(key, v)?,
            "widths" => self.widths = many(key, v)?,
            "corruption_pretrain" => self.corruption_pretrain = many(key, v)?,
            "corruption_finetune" => self.corruption_finetune = one(key, v)?,
            "alpha" => self.alpha = one(key, v)?,
            "nu" => self.nu = one(key, v)?,
            "gamma_scale" => self.gamma_scale = one(key, v)?,
            "p_value" => self.p_value = one(key, v)?,
            "min_cluster_size" => self.min_cluster_size = one(key, v)?,
            "pretrain_learning_rate" => self.pretrain_learning_rate = one(key, v)?,
            "pretrain_batch_size" => self.pretrain_batch_size = one(key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = one(key, v)?,
            "finetune_learning_rate" => self.finetune_learning_rate = one(key, v)?,
            "finetune_batch_size" => self.finetune_batch_size = one(key, v)?,
            "finetune_epochs" => self.finetune_epochs = one(key, v)?,
            "finetune_pairs" => self.finetune_pairs = one(key, v)?,
            "seed" => self.seed = one(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a config file; keys not present keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.merge(text)?;
        Ok(c)
    }

    /// Applies the keys present in `text` on top of `self`.
    pub fn merge(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.patch_size == 0 || self.patch_size.is_multiple_of(2) {
            return bad(format!("patch_size {} must be odd", self.patch_size));
        }
        if self.stride == 0 || self.score_stride == 0 {
            return bad("strides must be positive".into());
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths must be a non-empty list of positive sizes".into());
        }
        if self.corruption_pretrain.len() != self.widths.len() {
            return bad(format!(
                "{} corruption rates for {} layers",
                self.corruption_pretrain.len(),
                self.widths.len()
            ));
        }
        if !self.corruption_pretrain.iter().all(|&r| unit(r)) || !unit(self.corruption_finetune) {
            return bad("corruption rates must lie in [0, 1]".into());
        }
        if !unit(self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return bad(format!("nu {} outside (0, 1]", self.nu));
        }
        if !(self.gamma_scale > 0.0 && self.gamma_scale.is_finite()) {
            return bad(format!("gamma_scale {} must be positive", self.gamma_scale));
        }
        if !(self.p_value > 0.0 && self.p_value < 1.0) {
            return bad(format!("p_value {} outside (0, 1)", self.p_value));
        }
        for lr in [self.pretrain_learning_rate, self.finetune_learning_rate] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!(
                    "learning rate {lr} must be finite and non-negative"
                ));
            }
        }
        if self.pretrain_batch_size == 0 || self.finetune_batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the rendered configuration, hex encoded.
    pub fn hash(&self) -> String {
        hex_sha256(self.render().as_bytes())
    }

    /// Hash of the settings that decide which representation is computed at
    /// which voxel. A bank and the subjects scored against it must agree on it.
    pub fn encoding_hash(&self) -> String {
        let e = self.entries();
        let subset: String = e
            .iter()
            .filter(|(k, _)| matches!(*k, "patch_size" | "score_stride"))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        hex_sha256(subset.as_bytes())
    }

    pub fn pretrain_sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.pretrain_learning_rate,
            batch_size: self.pretrain_batch_size,
            epochs: self.pretrain_epochs,
            seed: self.seed,
        }
    }

    pub fn finetune_sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.finetune_learning_rate,
            batch_size: self.finetune_batch_size,
            epochs: self.finetune_epochs,
            seed: derive_seed(self.seed, 2),
        }
    }

    pub fn pair_seed(&self) -> u64 {
        derive_seed(self.seed, 1)
    }
}

/// Independent stream seed for pipeline stage `stage`.
pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed ^ stage.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
