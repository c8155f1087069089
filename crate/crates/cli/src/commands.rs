use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use serde_json::json;

use nnpm_core::data::{self, LabeledCorpus, Manifest, ManifestEntry, SyntheticSpec, UnlabeledCorpus};
use nnpm_core::dsp::{read_wav, write_features, FeatureConfig, FeatureExtractor};
use nnpm_core::model::{SnsaConfig, SnsaWeights};
use nnpm_core::train::{self, EvalReport, JsonLines, SweepParam, TrainConfig, Variant};

use crate::{
    AdaptArgs, AdaptFlags, Command, EvaluateArgs, ExtractArgs, FeatureArgs, GenArgs, ModelArgs, ModelPreset, OptimArgs,
    PretrainArgs, SweepArgs,
};

pub(crate) fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Extract(a) => extract(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Adapt(a) => adapt(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Resolved configuration written beside every output.
fn write_echo(out: &Path, echo: serde_json::Value) -> Result<()> {
    let path = out.join("config.json");
    let text = serde_json::to_string_pretty(&echo)? + "\n";
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn feature_config(args: &FeatureArgs) -> Result<FeatureConfig> {
    let cfg = FeatureConfig {
        mel_bins: args.mel_bins,
        ..FeatureConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn model_config(args: &ModelArgs, features: &FeatureConfig) -> Result<SnsaConfig> {
    let cfg = match &args.model_config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg: SnsaConfig =
                serde_json::from_str(&text).with_context(|| format!("parsing model config {}", path.display()))?;
            if cfg.mel_bins != features.mel_bins || cfg.frames != features.frame_count() {
                bail!(
                    "model config expects {}×{} features but extraction yields {}×{}",
                    cfg.frames,
                    cfg.mel_bins,
                    features.frame_count(),
                    features.mel_bins
                );
            }
            cfg
        }
        None => {
            let base = match args.model_preset {
                ModelPreset::Default => SnsaConfig::default(),
                ModelPreset::Desk => SnsaConfig::desk(),
            };
            SnsaConfig {
                frames: features.frame_count(),
                mel_bins: features.mel_bins,
                ..base
            }
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(optim: &OptimArgs, adapt: Option<&AdaptFlags>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig {
        epochs: optim.epochs,
        batch_size: optim.batch,
        lr: optim.lr,
        weight_decay: optim.weight_decay,
        dropout: optim.dropout,
        seed: optim.seed,
        ..TrainConfig::default()
    };
    if let Some(a) = adapt {
        cfg.variant = a.variant.parse::<Variant>()?;
        cfg.gamma = a.gamma;
        cfg.beta_max = a.beta_max;
        cfg.lambda = a.lambda;
        cfg.freeze_first_n_conv = a.freeze;
        cfg.memory_updates = !a.static_memory;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_labeled(path: &Path, extractor: &FeatureExtractor) -> Result<LabeledCorpus> {
    let m = Manifest::load(path).with_context(|| format!("loading manifest {}", path.display()))?;
    let c = LabeledCorpus::load(&m, extractor).with_context(|| format!("featurizing {}", path.display()))?;
    info!("{}: {} labeled utterances", path.display(), c.len());
    Ok(c)
}

fn load_unlabeled(path: &Path, extractor: &FeatureExtractor) -> Result<UnlabeledCorpus> {
    let m = Manifest::load(path).with_context(|| format!("loading manifest {}", path.display()))?;
    let c = UnlabeledCorpus::load(&m, extractor).with_context(|| format!("featurizing {}", path.display()))?;
    info!("{}: {} unlabeled utterances", path.display(), c.len());
    Ok(c)
}

fn metrics_log(out: &Path) -> Result<JsonLines<BufWriter<File>>> {
    let path = out.join("metrics.jsonl");
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(JsonLines(BufWriter::new(file)))
}

fn save_model(out: &Path, model: &SnsaConfig) -> Result<()> {
    let path = out.join("model.json");
    fs::write(&path, serde_json::to_string_pretty(model)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_report(label: &str, r: &EvalReport) {
    println!("{label}: UA {:.4}  WA {:.4}", r.ua, r.wa);
    println!("  confusion (rows = truth: angry happy sad neutral)");
    for row in &r.confusion {
        println!("  {:>5} {:>5} {:>5} {:>5}", row[0], row[1], row[2], row[3]);
    }
}

fn gen_synthetic(a: GenArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing generator spec {}", p.display()))?
        }
        None => SyntheticSpec::default(),
    };
    spec.seed = a.seed;
    if let Some(n) = a.per_class {
        spec.per_class = n;
    }
    create_dir(&a.out)?;
    let corpus = data::generate_synthetic(&spec, &a.out)?;
    let (s_train, s_test) = data::split(&corpus.source, a.train_fraction, a.seed)?;
    let (t_train, t_test) = data::split(&corpus.target, a.train_fraction, a.seed.wrapping_add(1))?;
    s_train.save(&a.out.join("source_train.json"))?;
    s_test.save(&a.out.join("source_test.json"))?;
    t_train.without_labels().save(&a.out.join("target_train.json"))?;
    t_test.save(&a.out.join("target_test.json"))?;
    write_echo(
        &a.out,
        json!({
            "command": "gen-synthetic",
            "spec": spec,
            "train_fraction": a.train_fraction,
        }),
    )?;
    println!(
        "wrote {} source and {} target utterances to {}",
        corpus.source.len(),
        corpus.target.len(),
        a.out.display()
    );
    println!(
        "splits: source {}/{}, target {}/{} (train/test)",
        s_train.len(),
        s_test.len(),
        t_train.len(),
        t_test.len()
    );
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let fcfg = feature_config(&a.features)?;
    let extractor = FeatureExtractor::new(fcfg.clone())?;
    let manifest = Manifest::load(&a.manifest).with_context(|| format!("loading {}", a.manifest.display()))?;
    let dir = a.out.join("features");
    create_dir(&dir)?;
    let mut entries = Vec::with_capacity(manifest.len());
    for e in &manifest.entries {
        let wave = read_wav(&e.path).with_context(|| format!("entry `{}`", e.id))?;
        let spec = extractor.extract(&wave)?;
        let path = dir.join(format!("{}.feat", e.id));
        write_features(&path, &spec)?;
        entries.push(ManifestEntry {
            path,
            ..e.clone()
        });
    }
    let out_manifest = Manifest { entries };
    out_manifest.save(&a.out.join("manifest.json"))?;
    write_echo(
        &a.out,
        json!({
            "command": "extract",
            "manifest": a.manifest,
            "features": fcfg,
        }),
    )?;
    println!(
        "extracted {} utterances ({} frames × {} mel bins) to {}",
        out_manifest.len(),
        fcfg.frame_count(),
        fcfg.mel_bins,
        a.out.display()
    );
    Ok(())
}

fn pretrain(a: PretrainArgs) -> Result<()> {
    let fcfg = feature_config(&a.features)?;
    let model = model_config(&a.model, &fcfg)?;
    let cfg = train_config(&a.optim, None)?;
    let extractor = FeatureExtractor::new(fcfg.clone())?;
    let source = load_labeled(&a.manifest_source, &extractor)?;
    let eval = a.manifest_eval.as_deref().map(|p| load_labeled(p, &extractor)).transpose()?;
    create_dir(&a.out)?;
    write_echo(
        &a.out,
        json!({
            "command": "pretrain",
            "manifest_source": a.manifest_source,
            "manifest_eval": a.manifest_eval,
            "features": fcfg,
            "model": model,
            "train": cfg,
        }),
    )?;
    save_model(&a.out, &model)?;
    let mut log = metrics_log(&a.out)?;
    let trained = train::pretrain_source(&model, &source, &cfg, eval.as_ref(), &mut log)?;
    log.0.flush()?;
    trained.weights.save(&model, &a.out.join("weights.ckpt"))?;
    println!(
        "pretrained {} parameters for {} epochs on {} utterances",
        trained.weights.parameter_count(),
        cfg.epochs,
        source.len()
    );
    if let Some((epoch, weights, report)) = &trained.best {
        weights.save(&model, &a.out.join("best.ckpt"))?;
        print_report(&format!("best validation (epoch {epoch})"), report);
    }
    Ok(())
}

fn adapt(a: AdaptArgs) -> Result<()> {
    let fcfg = feature_config(&a.features)?;
    let model = model_config(&a.model, &fcfg)?;
    let cfg = train_config(&a.optim, Some(&a.adapt))?;
    let weights = SnsaWeights::load(&model, &a.checkpoint)?;
    let extractor = FeatureExtractor::new(fcfg.clone())?;
    let source = load_labeled(&a.manifest_source, &extractor)?;
    let target = load_unlabeled(&a.manifest_target, &extractor)?;
    let eval = a.manifest_eval.as_deref().map(|p| load_labeled(p, &extractor)).transpose()?;
    create_dir(&a.out)?;
    write_echo(
        &a.out,
        json!({
            "command": "adapt",
            "checkpoint": a.checkpoint,
            "manifest_source": a.manifest_source,
            "manifest_target": a.manifest_target,
            "manifest_eval": a.manifest_eval,
            "features": fcfg,
            "model": model,
            "train": cfg,
        }),
    )?;
    save_model(&a.out, &model)?;
    let mut log = metrics_log(&a.out)?;
    let adapted = train::adapt(&weights, &model, &source, &target, &cfg, eval.as_ref(), &mut log)?;
    log.0.flush()?;
    adapted.weights.save(&model, &a.out.join("weights.ckpt"))?;
    adapted.memory.save(&model.hash(), &a.out.join("memory.ckpt"))?;
    println!(
        "adapted ({}) for {} epochs: {} source slots, {} target utterances",
        cfg.variant,
        cfg.epochs,
        adapted.memory.len(),
        target.len()
    );
    if let Some(eval) = &eval {
        print_report("final", &train::evaluate(&adapted.weights, &model, eval)?);
    }
    if let Some((epoch, weights, report)) = &adapted.best {
        weights.save(&model, &a.out.join("best.ckpt"))?;
        print_report(&format!("best validation (epoch {epoch})"), report);
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let fcfg = feature_config(&a.features)?;
    let model = model_config(&a.model, &fcfg)?;
    let weights = SnsaWeights::load(&model, &a.checkpoint)?;
    let extractor = FeatureExtractor::new(fcfg.clone())?;
    let corpus = load_labeled(&a.manifest_eval, &extractor)?;
    let report = train::evaluate(&weights, &model, &corpus)?;
    print_report(&a.manifest_eval.display().to_string(), &report);
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_echo(
            out,
            json!({
                "command": "evaluate",
                "checkpoint": a.checkpoint,
                "manifest_eval": a.manifest_eval,
                "features": fcfg,
                "model": model,
            }),
        )?;
        let path = out.join("report.json");
        fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let param: SweepParam = a.param.parse()?;
    let values = crate::parse_values(&a.values).with_context(|| format!("--values `{}`", a.values))?;
    let fcfg = feature_config(&a.features)?;
    let model = model_config(&a.model, &fcfg)?;
    let cfg = train_config(&a.optim, Some(&a.adapt))?;
    for &v in &values {
        train::with_sweep_value(&cfg, param, v)?;
    }
    let weights = SnsaWeights::load(&model, &a.checkpoint)?;
    let extractor = FeatureExtractor::new(fcfg.clone())?;
    let source = load_labeled(&a.manifest_source, &extractor)?;
    let target = load_unlabeled(&a.manifest_target, &extractor)?;
    let eval = load_labeled(&a.manifest_eval, &extractor)?;
    create_dir(&a.out)?;
    write_echo(
        &a.out,
        json!({
            "command": "sweep",
            "param": param,
            "values": values,
            "checkpoint": a.checkpoint,
            "manifest_source": a.manifest_source,
            "manifest_target": a.manifest_target,
            "manifest_eval": a.manifest_eval,
            "features": fcfg,
            "model": model,
            "train": cfg,
        }),
    )?;
    let rows = train::sweep(&weights, &model, &source, &target, &eval, &cfg, param, &values)?;
    let csv = train::sweep_csv(&rows);
    let path: PathBuf = a.out.join("sweep.csv");
    fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
    print!("{csv}");
    Ok(())
}
