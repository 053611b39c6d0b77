//! Pipeline stages wired to a [`PipelineConfig`]. Each stage is a pure
//! function of its inputs and the configuration.

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::detector::{
    build_bank, connected_components_26, filter_clusters, score_subject, threshold_map, BankReport,
    ClassifierBank, ClusterMap, DistanceMap, SubjectCodes,
};
use crate::error::{Error, Result};
use crate::network::{finetune, pretrain_stack, EpochRecord, Pretrained, SiameseModel};
use crate::ocsvm::MedianHeuristic;
use crate::volume::{extract_patches, sample_pairs, Patch, Volume};

/// Rescales each volume to [0, 1] over its mask.
pub fn prepare(volumes: &[Volume]) -> Result<Vec<Volume>> {
    volumes.iter().map(Volume::rescale_unit).collect()
}

/// Patches on the training grid (`stride`), one set per subject.
pub fn training_patches(cfg: &PipelineConfig, volumes: &[Volume]) -> Result<Vec<Vec<Patch>>> {
    volumes
        .par_iter()
        .map(|v| extract_patches(v, cfg.patch_size, cfg.stride))
        .collect()
}

pub fn pretrain(cfg: &PipelineConfig, patches: &[Vec<Patch>]) -> Result<Pretrained> {
    let inputs: Vec<Vec<f64>> = patches.iter().flatten().map(|p| p.values.clone()).collect();
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("no training patches".into()));
    }
    pretrain_stack(
        &inputs,
        &cfg.widths,
        &cfg.corruption_pretrain,
        cfg.pretrain_sgd(),
    )
}

/// Fine-tunes on similar pairs; by default as many pairs as training patches.
pub fn finetune_model(
    cfg: &PipelineConfig,
    model: &SiameseModel,
    patches: &[Vec<Patch>],
) -> Result<(SiameseModel, Vec<EpochRecord>)> {
    let n_pairs = match cfg.finetune_pairs {
        0 => patches.iter().map(Vec::len).sum(),
        n => n,
    };
    let pairs = sample_pairs(patches, n_pairs, cfg.pair_seed())?;
    finetune(
        model,
        &pairs,
        cfg.alpha,
        cfg.corruption_finetune,
        cfg.finetune_sgd(),
    )
}

/// Representations of every patch on the scoring grid (`score_stride`).
pub fn encode_subject(
    cfg: &PipelineConfig,
    model: &SiameseModel,
    v: &Volume,
) -> Result<SubjectCodes> {
    extract_patches(v, cfg.patch_size, cfg.score_stride)?
        .into_par_iter()
        .map(|p| Ok((p.center, model.encode(&p.values)?)))
        .collect()
}

pub fn build(
    cfg: &PipelineConfig,
    model: &SiameseModel,
    healthy: &[Volume],
) -> Result<(ClassifierBank, BankReport)> {
    let codes = healthy
        .iter()
        .map(|v| encode_subject(cfg, model, v))
        .collect::<Result<Vec<_>>>()?;
    build_bank(
        &codes,
        cfg.nu,
        MedianHeuristic {
            scale: cfg.gamma_scale,
        },
    )
}

pub fn score(
    cfg: &PipelineConfig,
    bank: &ClassifierBank,
    model: &SiameseModel,
    subject: &Volume,
) -> Result<DistanceMap> {
    score_subject(bank, &encode_subject(cfg, model, subject)?, subject.dims())
}

/// Threshold at the subject's own `p_value` quantile, label 26-connected
/// components and drop those below `min_cluster_size`.
pub fn clusters(cfg: &PipelineConfig, map: &DistanceMap) -> Result<ClusterMap> {
    let kept = threshold_map(map, cfg.p_value)?;
    filter_clusters(&connected_components_26(&kept), cfg.min_cluster_size).with_scores(map)
}

/// Everything a full in-memory run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub pretrained: Pretrained,
    pub model: SiameseModel,
    pub finetune_history: Vec<EpochRecord>,
    pub bank: ClassifierBank,
    pub bank_report: BankReport,
    pub map: DistanceMap,
    pub clusters: ClusterMap,
}

/// Runs every stage on raw (unscaled) volumes.
pub fn run(cfg: &PipelineConfig, healthy: &[Volume], test: &Volume) -> Result<RunOutput> {
    cfg.validate()?;
    let healthy = prepare(healthy)?;
    let test = test.rescale_unit()?;
    let patches = training_patches(cfg, &healthy)?;
    let pretrained = pretrain(cfg, &patches)?;
    let (model, finetune_history) = finetune_model(cfg, &pretrained.model, &patches)?;
    let (bank, bank_report) = build(cfg, &model, &healthy)?;
    let map = score(cfg, &bank, &model, &test)?;
    let clusters = clusters(cfg, &map)?;
    Ok(RunOutput {
        pretrained,
        model,
        finetune_history,
        bank,
        bank_report,
        map,
        clusters,
    })
}
