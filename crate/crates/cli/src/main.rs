mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use voxel_outlier::config::PipelineConfig;
use voxel_outlier::detector::{self, load_bank, save_bank, ClusterMap, DistanceMap, VoxelMask};
use voxel_outlier::network::{load_model, save_model};
use voxel_outlier::pipeline;
use voxel_outlier::synthetic::{generate, Lesion, SyntheticCohortSpec};
use voxel_outlier::volume::{
    load_labels, load_volume, save_labels, save_volume, Dims, Volume, Voxel,
};

use manifest::{check_bank_lineage, Manifest};

#[derive(Parser)]
#[command(
    name = "voxel-outlier",
    version,
    about = "Voxel-level outlier detection pipeline"
)]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

/// Pipeline settings. `--config` replaces the defaults; each flag then
/// overrides the file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    patch_size: Option<String>,
    #[arg(long, global = true)]
    stride: Option<String>,
    #[arg(long, global = true)]
    score_stride: Option<String>,
    /// Comma-separated layer widths.
    #[arg(long, global = true)]
    widths: Option<String>,
    /// Comma-separated per-layer corruption rates.
    #[arg(long, global = true)]
    corruption_pretrain: Option<String>,
    #[arg(long, global = true)]
    corruption_finetune: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    nu: Option<String>,
    #[arg(long, global = true)]
    gamma_scale: Option<String>,
    #[arg(long, global = true)]
    p_value: Option<String>,
    #[arg(long, global = true)]
    min_cluster_size: Option<String>,
    #[arg(long, global = true)]
    pretrain_learning_rate: Option<String>,
    #[arg(long, global = true)]
    pretrain_batch_size: Option<String>,
    #[arg(long, global = true)]
    pretrain_epochs: Option<String>,
    #[arg(long, global = true)]
    finetune_learning_rate: Option<String>,
    #[arg(long, global = true)]
    finetune_batch_size: Option<String>,
    #[arg(long, global = true)]
    finetune_epochs: Option<String>,
    #[arg(long, global = true)]
    finetune_pairs: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                PipelineConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        let flags = [
            ("patch_size", &self.patch_size),
            ("stride", &self.stride),
            ("score_stride", &self.score_stride),
            ("widths", &self.widths),
            ("corruption_pretrain", &self.corruption_pretrain),
            ("corruption_finetune", &self.corruption_finetune),
            ("alpha", &self.alpha),
            ("nu", &self.nu),
            ("gamma_scale", &self.gamma_scale),
            ("p_value", &self.p_value),
            ("min_cluster_size", &self.min_cluster_size),
            ("pretrain_learning_rate", &self.pretrain_learning_rate),
            ("pretrain_batch_size", &self.pretrain_batch_size),
            ("pretrain_epochs", &self.pretrain_epochs),
            ("finetune_learning_rate", &self.finetune_learning_rate),
            ("finetune_batch_size", &self.finetune_batch_size),
            ("finetune_epochs", &self.finetune_epochs),
            ("finetune_pairs", &self.finetune_pairs),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)
                    .with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort: healthy subjects, one lesioned test subject
    /// and its ground-truth grid.
    Generate(GenerateArgs),
    /// Greedy layer-wise pretraining on the cohort's healthy subjects.
    Pretrain {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Siamese fine-tuning on similar pairs from the healthy subjects.
    Finetune {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one one-class SVM per voxel on the healthy subjects' codes.
    BuildBank {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a subject against a bank, writing its distance map.
    Score {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        subject: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold a distance map and keep large 26-connected clusters.
    Clusters {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Compare a cluster map with a ground-truth grid.
    Evaluate {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Side length of the cubic volume.
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 20)]
    subjects: usize,
    #[arg(long, default_value_t = 3)]
    smoothness: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f32,
    #[arg(long, default_value_t = 0)]
    noise_smoothness: usize,
    /// Lesion center as x,y,z; defaults to the volume center.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    lesion_center: Option<Vec<usize>>,
    #[arg(long, default_value_t = 4.0)]
    lesion_radius: f64,
    #[arg(long, default_value_t = 0.4)]
    lesion_shift: f32,
    #[arg(long, default_value_t = 1.0)]
    rim: f32,
    #[arg(long, default_value_t = 0)]
    cohort_seed: u64,
}

const TEST_FILE: &str = "test.vxw";
const TRUTH_FILE: &str = "truth.vxwc";

fn healthy_file(i: usize) -> String {
    format!("healthy_{i:03}.vxw")
}

/// Healthy subject volumes of a cohort directory, in file-name order.
fn healthy_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading cohort directory {}", dir.display()))?
        .map(|e| Ok(e?.path()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("healthy_") && n.ends_with(".vxw"))
        })
        .collect();
    paths.sort();
    if paths.len() < 2 {
        bail!(
            "cohort {} needs at least two healthy_*.vxw subjects",
            dir.display()
        );
    }
    Ok(paths)
}

fn load_cohort(dir: &Path, m: &mut Manifest) -> Result<Vec<Volume>> {
    let paths = healthy_paths(dir)?;
    let mut volumes = Vec::with_capacity(paths.len());
    for p in &paths {
        let name = p.file_name().unwrap().to_string_lossy();
        m.input(&name, p)?;
        volumes.push(load_volume(p).with_context(|| format!("loading {}", p.display()))?);
    }
    pipeline::prepare(&volumes).context("rescaling cohort")
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let center = match &a.lesion_center {
        Some(c) => Voxel::new(c[0], c[1], c[2]),
        None => Voxel::new(a.size / 2, a.size / 2, a.size / 2),
    };
    let spec = SyntheticCohortSpec {
        dims: Dims::cube(a.size),
        subjects: a.subjects,
        smoothness: a.smoothness,
        noise: a.noise,
        noise_smoothness: a.noise_smoothness,
        lesion: Lesion {
            center,
            radius: a.lesion_radius,
            shift: a.lesion_shift,
        },
        rim: a.rim,
        seed: a.cohort_seed,
    };
    let cohort = generate(&spec)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut m = Manifest {
        command: "generate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        ..Manifest::default()
    };
    m.seeds.insert("cohort".into(), a.cohort_seed);
    for (i, v) in cohort.healthy.iter().enumerate() {
        let p = a.out.join(healthy_file(i));
        save_volume(v, &p)?;
        m.output(&healthy_file(i), &p)?;
    }
    let test = a.out.join(TEST_FILE);
    save_volume(&cohort.test, &test)?;
    m.output(TEST_FILE, &test)?;
    let truth = a.out.join(TRUTH_FILE);
    save_labels(spec.dims, &cohort.truth.to_labels(), &truth)?;
    m.output(TRUTH_FILE, &truth)?;
    m.save_for(&a.out.join("cohort"))?;
    println!(
        "subjects={} dims={}x{}x{} lesion_voxels={}",
        a.subjects,
        a.size,
        a.size,
        a.size,
        cohort.truth.count()
    );
    Ok(())
}

fn cmd_pretrain(cfg: &PipelineConfig, cohort: &Path, out: &Path) -> Result<()> {
    let mut m = Manifest::new("pretrain", cfg);
    let volumes = load_cohort(cohort, &mut m)?;
    let patches = pipeline::training_patches(cfg, &volumes)?;
    let pre = pipeline::pretrain(cfg, &patches)?;
    for (k, curve) in pre.history.iter().enumerate() {
        for r in curve {
            println!("layer={} {r}", k + 1);
        }
    }
    save_model(&pre.model, out)?;
    m.output("model", out)?;
    m.save_for(out)
}

fn cmd_finetune(cfg: &PipelineConfig, cohort: &Path, model: &Path, out: &Path) -> Result<()> {
    let mut m = Manifest::new("finetune", cfg);
    let volumes = load_cohort(cohort, &mut m)?;
    m.input("model", model)?;
    let start = load_model(model).with_context(|| format!("loading {}", model.display()))?;
    let patches = pipeline::training_patches(cfg, &volumes)?;
    let (tuned, history) = pipeline::finetune_model(cfg, &start, &patches)?;
    for r in &history {
        println!("{r}");
    }
    save_model(&tuned, out)?;
    m.output("model", out)?;
    m.save_for(out)
}

fn cmd_build_bank(cfg: &PipelineConfig, cohort: &Path, model: &Path, out: &Path) -> Result<()> {
    let mut m = Manifest::new("build-bank", cfg);
    let volumes = load_cohort(cohort, &mut m)?;
    m.input("model", model)?;
    let net = load_model(model).with_context(|| format!("loading {}", model.display()))?;
    let (bank, report) = pipeline::build(cfg, &net, &volumes)?;
    println!(
        "trained={} skipped={} unconverged={}",
        report.trained,
        report.skipped.len(),
        report.unconverged.len()
    );
    save_bank(&bank, out)?;
    m.output("bank", out)?;
    m.save_for(out)
}

fn cmd_score(
    cfg: &PipelineConfig,
    bank: &Path,
    model: &Path,
    subject: &Path,
    out: &Path,
) -> Result<()> {
    check_bank_lineage(bank, model, cfg)?;
    let mut m = Manifest::new("score", cfg);
    m.input("bank", bank)?;
    m.input("model", model)?;
    m.input("subject", subject)?;
    let b = load_bank(bank).with_context(|| format!("loading {}", bank.display()))?;
    let net = load_model(model).with_context(|| format!("loading {}", model.display()))?;
    let v = load_volume(subject).with_context(|| format!("loading {}", subject.display()))?;
    let map = pipeline::score(cfg, &b, &net, &v.rescale_unit()?)?;
    let (lo, hi) = map
        .valid_scores()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s), hi.max(s))
        });
    println!("valid={} min_score={lo} max_score={hi}", map.valid_count());
    save_volume(&map.to_volume(), out)?;
    m.output("map", out)?;
    m.save_for(out)
}

fn cluster_report(cfg: &PipelineConfig, map: &DistanceMap, c: &ClusterMap) -> Result<String> {
    let threshold = detector::quantile_threshold(map, cfg.p_value)?;
    let kept = detector::threshold_map(map, cfg.p_value)?.count();
    let mut s = String::new();
    writeln!(s, "p_value={}", cfg.p_value)?;
    writeln!(s, "threshold={threshold}")?;
    writeln!(s, "valid_voxels={}", map.valid_count())?;
    writeln!(s, "kept_voxels={kept}")?;
    writeln!(s, "min_cluster_size={}", cfg.min_cluster_size)?;
    writeln!(s, "clusters={}", c.len())?;
    for k in &c.clusters {
        let [x, y, z] = k.centroid;
        let min = k.min_score.map_or("-".to_string(), |v| v.to_string());
        writeln!(
            s,
            "cluster label={} size={} centroid=({x:.3}, {y:.3}, {z:.3}) min_score={min}",
            k.label, k.size
        )?;
    }
    Ok(s)
}

fn cmd_clusters(cfg: &PipelineConfig, map: &Path, out: &Path, report: &Path) -> Result<()> {
    let mut m = Manifest::new("clusters", cfg);
    m.input("map", map)?;
    let v = load_volume(map).with_context(|| format!("loading {}", map.display()))?;
    let d = DistanceMap::from_volume(&v);
    let c = pipeline::clusters(cfg, &d)?;
    let text = cluster_report(cfg, &d, &c)?;
    save_labels(c.dims, &c.to_labels(), out)?;
    voxel_outlier::write_atomic(report, text.as_bytes())?;
    print!("{text}");
    m.output("clusters", out)?;
    m.output("report", report)?;
    m.save_for(out)
}

fn cmd_evaluate(clusters: &Path, truth: &Path, out: Option<&Path>) -> Result<()> {
    let (dims, labels) =
        load_labels(clusters).with_context(|| format!("loading {}", clusters.display()))?;
    let c = ClusterMap::from_labels(dims, &labels)?;
    let (tdims, tlabels) =
        load_labels(truth).with_context(|| format!("loading {}", truth.display()))?;
    let t = VoxelMask::from_labels(tdims, &tlabels)?;
    let report = detector::evaluate(&c, &t)?.to_string();
    print!("{report}");
    if let Some(path) = out {
        voxel_outlier::write_atomic(path, report.as_bytes())?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Evaluate {
            clusters,
            truth,
            out,
        } => cmd_evaluate(clusters, truth, out.as_deref()),
        other => {
            let cfg = cli.config.resolve()?;
            match other {
                Command::Pretrain { cohort, out } => cmd_pretrain(&cfg, cohort, out),
                Command::Finetune { cohort, model, out } => cmd_finetune(&cfg, cohort, model, out),
                Command::BuildBank { cohort, model, out } => {
                    cmd_build_bank(&cfg, cohort, model, out)
                }
                Command::Score {
                    bank,
                    model,
                    subject,
                    out,
                } => cmd_score(&cfg, bank, model, subject, out),
                Command::Clusters { map, out, report } => cmd_clusters(&cfg, map, out, report),
                Command::Generate(_) | Command::Evaluate { .. } => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
