//! `depthforge` command-line entry point.
//!
//! Every subcommand reads its settings from flags, falling back to the
//! matching section of an optional JSON `--config` file. Exit status is 0 on
//! success, 2 for configuration errors and 1 for runtime failures.

mod config;
mod data;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use depthforge::acw::{self, AcwTrainConfig, TrainModality};
use depthforge::datagen::{self, GenConfig, VerifyOptions};
use depthforge::evalkit::{self, FusionMode, Protocol, ToyConfig};
use depthforge::model3d;
use depthforge::render::HemisphereRig;

use config::{
    ConfigFile, EvaluateArgs, GenerateArgs, ToyDataArgs, ToyModelArgs, TrainArgs, VerifyArgs,
};

#[derive(Parser, Debug)]
#[command(name = "depthforge", version, about = "Virtual depth faces and confidence-weighted fusion")]
struct Cli {
    /// JSON file with a section per subcommand; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (falls back to the config file, then DEPTHFORGE_THREADS, then 1).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the procedural toy morphable model and write it as MDL1.
    ToyModel(ToyModelArgs),
    /// Render a depth + normal dataset from a model.
    Generate(GenerateArgs),
    /// Check a generated dataset, optionally against a second copy.
    Verify(VerifyArgs),
    /// Write the synthetic two-modality embedding protocol as EMB1 files.
    ToyData(ToyDataArgs),
    /// Train one confidence head per modality.
    TrainAcw(TrainArgs),
    /// Rank-1 identification with ACW, fixed-weight or single-modality fusion.
    Evaluate(EvaluateArgs),
}

/// Failure classes that map to distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn resolve_threads(flag: Option<usize>, file: Option<usize>) -> CliResult<usize> {
    let threads = match flag.or(file) {
        Some(n) => n,
        None => match std::env::var("DEPTHFORGE_THREADS") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("DEPTHFORGE_THREADS={v:?} is not a count")))?,
            Err(_) => 1,
        },
    };
    if threads == 0 {
        return config_err("thread count must be at least 1");
    }
    Ok(threads)
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let threads = resolve_threads(cli.threads, file.threads)?;
    eprintln!("threads: {threads}");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(anyhow!(e)))?;
    pool.install(|| match cli.command {
        Command::ToyModel(a) => cmd_toy_model(a.merge(file.toy_model)),
        Command::Generate(a) => cmd_generate(a.merge(file.generate)),
        Command::Verify(a) => cmd_verify(a.merge(file.verify)),
        Command::ToyData(a) => cmd_toy_data(a.merge(file.toy_data)),
        Command::TrainAcw(a) => cmd_train_acw(a.merge(file.train_acw)),
        Command::Evaluate(a) => cmd_evaluate(a.merge(file.evaluate), threads),
    })
}

fn require<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| {
        CliError::Config(format!(
            "--{flag} is required (or set \"{}\" in the config file)",
            flag.replace('-', "_")
        ))
    })
}

fn cmd_toy_model(a: ToyModelArgs) -> CliResult<()> {
    let seed = require(a.seed, "seed")?;
    let out = require(a.out, "out")?;
    let v_rings = a.v_rings.unwrap_or(32);
    if v_rings < 4 {
        return config_err(format!(
            "--v-rings must be at least 4, got {v_rings} (e.g. --v-rings 32)"
        ));
    }
    let model = model3d::make_toy_model(seed, v_rings, a.k_id.unwrap_or(20), a.k_exp.unwrap_or(10))
        .map_err(|e| CliError::Config(e.to_string()))?;
    model3d::save_model(&model, &out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "wrote {}: V={} K_id={} K_exp={} triangles={}",
        out.display(),
        model.vertex_count(),
        model.id_dim(),
        model.exp_dim(),
        model.triangles().len()
    );
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> CliResult<()> {
    let seed = require(a.seed, "seed")?;
    let model_path = require(a.model, "model")?;
    let out = require(a.out, "out")?;
    let defaults = HemisphereRig::default();
    let cameras = HemisphereRig {
        radius: a.radius.unwrap_or(defaults.radius),
        focal: a.focal.unwrap_or(defaults.focal),
        resolution: a.resolution.unwrap_or(defaults.resolution),
        ..defaults
    };
    let trunc = a.trunc.unwrap_or(3.0);
    if !(trunc > 0.0) {
        return config_err(format!("--trunc must be positive, got {trunc}"));
    }
    let config = GenConfig {
        n_identities: a.identities.unwrap_or(10),
        n_random_expressions: a.expressions.unwrap_or(40),
        cameras,
        seed,
        out_dir: out.clone(),
        trunc,
    };
    let model = model3d::load_model(&model_path)
        .with_context(|| format!("loading model {}", model_path.display()))?;
    let start = Instant::now();
    let manifest = match datagen::generate_dataset(&model, &config) {
        Ok(m) => m,
        Err(datagen::DatagenError::Config(msg)) => return config_err(msg),
        Err(datagen::DatagenError::Camera(e)) => return config_err(e.to_string()),
        Err(e) => return Err(anyhow!(e).into()),
    };
    let secs = start.elapsed().as_secs_f64();
    println!(
        "generated {} images ({} depth + {} normal files) in {:.2} s, {:.0} images/s",
        manifest.total_count,
        manifest.total_count,
        manifest.total_count,
        secs,
        manifest.total_count as f64 / secs.max(1e-9)
    );
    println!("manifest: {}", out.join(datagen::MANIFEST_FILE).display());
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> CliResult<()> {
    let dir = require(a.data, "data")?;
    let load = |d: &Path| {
        datagen::read_manifest(d.join(datagen::MANIFEST_FILE))
            .with_context(|| format!("reading manifest in {}", d.display()))
    };
    let manifest = load(&dir)?;
    let options = VerifyOptions {
        normal_sample_stride: a.sample_stride.unwrap_or(1),
        ..VerifyOptions::default()
    };
    let report = datagen::verify_dataset(&manifest, &dir, &options);
    println!(
        "checked {} files: {} passed, {} failed",
        report.checked_files, report.passed_files, report.failed_files
    );
    for v in report.violations.iter().take(20) {
        println!("  {}: {:?}", v.path, v.kind);
    }
    let mut ok = report.is_clean();
    if let Some(other) = a.against {
        let other_manifest = load(&other)?;
        let diffs = datagen::diff_datasets(&manifest, &dir, &other_manifest, &other);
        println!("diffs against {}: {}", other.display(), diffs.len());
        for d in diffs.iter().take(20) {
            println!("  {d}");
        }
        ok &= diffs.is_empty() && manifest.entries == other_manifest.entries;
    }
    if ok {
        Ok(())
    } else {
        Err(anyhow!("dataset verification failed").into())
    }
}

fn cmd_toy_data(a: ToyDataArgs) -> CliResult<()> {
    let out = require(a.out, "out")?;
    let d = ToyConfig::default();
    let cfg = ToyConfig {
        n_classes: a.classes.unwrap_or(d.n_classes),
        dim: a.dim.unwrap_or(d.dim),
        samples_per_class: a.samples_per_class.unwrap_or(d.samples_per_class),
        sigma_clean: a.sigma_clean.unwrap_or(d.sigma_clean),
        sigma_corrupt: a.sigma_corrupt.unwrap_or(d.sigma_corrupt),
        corrupt_fraction: a.corrupt_fraction.unwrap_or(d.corrupt_fraction),
        seed: require(a.seed, "seed")?,
        corrupt_drift: a.corrupt_drift.unwrap_or(d.corrupt_drift),
    };
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let toy = evalkit::synth_toy_embeddings(&cfg).map_err(|e| anyhow!(e))?;
    let files = data::write_toy(&out, &cfg, &toy)?;
    println!(
        "wrote {} files to {}: {} classes, {} probes, {} training samples per modality",
        files,
        out.display(),
        cfg.n_classes,
        toy.protocol.probes.len(),
        toy.train[0].len()
    );
    Ok(())
}

fn parse_modalities(list: Option<String>) -> CliResult<Vec<String>> {
    let list = list.unwrap_or_else(|| format!("{},{}", evalkit::MODALITY_A, evalkit::MODALITY_B));
    let mods: Vec<String> = list
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if mods.is_empty() {
        return config_err("--modalities must name at least one modality");
    }
    Ok(mods)
}

fn cmd_train_acw(a: TrainArgs) -> CliResult<()> {
    let seed = require(a.seed, "seed")?;
    let dir = require(a.data_dir, "data-dir")?;
    let out = a.out.unwrap_or_else(|| dir.clone());
    let d = AcwTrainConfig::default();
    let cfg = AcwTrainConfig {
        lambda: a.lambda.unwrap_or(d.lambda),
        lr: a.lr.unwrap_or(d.lr),
        batch: a.batch.unwrap_or(d.batch),
        epochs: a.epochs.unwrap_or(d.epochs),
        temperature: a.temperature.unwrap_or(d.temperature),
        budget: a.budget.or(d.budget),
        hidden: a.hidden.unwrap_or(d.hidden),
        train_prototypes: a.train_prototypes.unwrap_or(d.train_prototypes),
    };
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let modalities = parse_modalities(a.modalities)?;

    let mut sets = Vec::new();
    let mut protos = Vec::new();
    for m in &modalities {
        sets.push(data::load_modality(&dir, "train", m)?);
        let gallery = data::load_modality(&dir, "gallery", m)?;
        protos.push(data::prototypes_from_gallery(&gallery)?);
    }
    let inputs: Vec<TrainModality<'_>> = sets
        .iter()
        .zip(&protos)
        .map(|(e, p)| TrainModality { embeddings: e, prototypes: p })
        .collect();
    let outcome = acw::train(&inputs, &cfg, seed).map_err(|e| anyhow!(e))?;

    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for (m, head) in outcome.modalities.iter().zip(&outcome.heads) {
        let path = out.join(format!("head_{m}.acw"));
        acw::io::save_head(head, &path).with_context(|| format!("writing {}", path.display()))?;
    }
    data::write_loss_csv(&out.join("loss.csv"), &outcome.history)?;
    let echo = serde_json::json!({ "seed": seed, "modalities": modalities, "data_dir": dir, "train": cfg });
    let echo_path = out.join("train_config.json");
    std::fs::write(&echo_path, serde_json::to_string_pretty(&echo).map_err(|e| anyhow!(e))?)
        .with_context(|| format!("writing {}", echo_path.display()))?;
    for e in &outcome.history {
        println!(
            "epoch {:>3}  loss {:.6}  task {:.6}  conf {:.6}  lambda {:.4}",
            e.epoch, e.mean_loss, e.mean_task_loss, e.mean_confidence_loss, e.lambda
        );
    }
    println!("wrote {} heads and loss.csv to {}", outcome.heads.len(), out.display());
    Ok(())
}

fn parse_weights(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|w| {
            w.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad weight {w:?} in --weights")))
        })
        .collect()
}

fn cmd_evaluate(a: EvaluateArgs, threads: usize) -> CliResult<()> {
    let dir = require(a.data_dir, "data-dir")?;
    let out = a.out.clone().unwrap_or_else(|| dir.clone());
    let mode_name = a.mode.clone().unwrap_or_else(|| "acw".to_string());
    let all = parse_modalities(a.modalities.clone())?;
    let (mode, modalities) = match mode_name.as_str() {
        "acw" => (FusionMode::Acw, all),
        "fixed" => {
            let w = match &a.weights {
                Some(w) => parse_weights(w)?,
                None => vec![1.0; all.len()],
            };
            if w.len() != all.len() {
                return config_err(format!(
                    "--weights has {} values for {} modalities",
                    w.len(),
                    all.len()
                ));
            }
            if w.iter().any(|v| !(*v >= 0.0)) || w.iter().all(|&v| v == 0.0) {
                return config_err("--weights must be non-negative and not all zero");
            }
            (FusionMode::Fixed(w), all)
        }
        "single" => {
            let m = a
                .modality
                .clone()
                .ok_or_else(|| CliError::Config("--mode single needs --modality".into()))?;
            (FusionMode::Single(m.clone()), vec![m])
        }
        other => return config_err(format!("unknown --mode {other:?} (acw, fixed, single)")),
    };

    let mut gallery = Vec::new();
    let mut probes = Vec::new();
    for m in &modalities {
        gallery.push(data::load_modality(&dir, "gallery", m)?);
        probes.push(data::load_modality(&dir, "probe", m)?);
    }
    let tags = data::read_tags(&dir.join("probe_tags.csv"), &probes[0])?;
    let protocol = Protocol::from_sets(gallery, probes, tags).map_err(|e| anyhow!(e))?;

    let heads = if mode == FusionMode::Acw {
        let hdir = a.heads.clone().unwrap_or_else(|| dir.clone());
        let mut heads = BTreeMap::new();
        for m in &modalities {
            let path = hdir.join(format!("head_{m}.acw"));
            if !path.exists() {
                return Err(anyhow!("modality '{m}' has no confidence head: {} not found", path.display()).into());
            }
            let head = acw::io::load_head(&path).with_context(|| format!("reading {}", path.display()))?;
            heads.insert(m.clone(), head);
        }
        Some(heads)
    } else {
        None
    };

    let mut report = evalkit::evaluate(&protocol, heads.as_ref(), &mode).map_err(|e| anyhow!(e))?;
    report.config = serde_json::json!({
        "mode": mode.to_string(),
        "modalities": modalities,
        "data_dir": dir,
        "heads": a.heads,
        "threads": threads,
    });
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let stem = a.name.clone().unwrap_or_else(|| format!("report_{mode_name}"));
    let json_path = out.join(format!("{stem}.json"));
    let text_path = out.join(format!("{stem}.txt"));
    let table = report.to_table();
    std::fs::write(&json_path, serde_json::to_string_pretty(&report).map_err(|e| anyhow!(e))?)
        .with_context(|| format!("writing {}", json_path.display()))?;
    std::fs::write(&text_path, format!("mode: {mode}\n{table}"))
        .with_context(|| format!("writing {}", text_path.display()))?;
    println!("mode: {mode}");
    print!("{table}");
    println!("report: {}", json_path.display());
    Ok(())
}
