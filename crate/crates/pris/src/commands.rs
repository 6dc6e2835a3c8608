//! The subcommands, callable without going through argument parsing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::RgbImage;
use pris_core::bitpack::{self, WideContainer};
use pris_core::distortion::DistortionSpec;
use pris_core::eval::{evaluate, EvalReport, Level, ModelSet};
use pris_core::exec::Eager;
use pris_core::inn::sample_latent;
use pris_core::metrics::{psnr, quantize};
use pris_core::model::{PrisModel, DEFAULT_SET};
use pris_core::training::{train_full, TrainData};
use pris_core::Tensor;

use crate::checkpoint::{self, per_attack_path, sha256_hex};
use crate::config::{parse_labels, Config, Seeds, SEED_ENV};
use crate::error::{CliError, CliResult};
use crate::imageio::{self, DatasetHandle, Split};
use crate::report::{write_report, JsonlLog};
use crate::widefile;

pub const MODEL_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.jsonl";

/// Files written by [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Shared model, absent when only per-attack models were trained.
    pub model: Option<PathBuf>,
    /// `(attack label, checkpoint)` for per-attack models.
    pub per_attack: Vec<(String, PathBuf)>,
    pub metrics: PathBuf,
    pub report: Option<EvalReport>,
}

fn step_path(dir: &Path, stem: &str, step: u8) -> PathBuf {
    dir.join(format!("{stem}.step{step}.ckpt"))
}

pub fn train(cfg: &Config) -> CliResult<TrainOutcome> {
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let images = DatasetHandle {
        dir: cfg.data.train_dir.clone(),
        split: Split::Train,
        crop: Some(cfg.data.crop),
    }
    .load()?;
    log::info!("{} training images from {}", images.len(), cfg.data.train_dir.display());
    let data = TrainData::new(images)?;
    let attacks = cfg.train_attacks()?;
    let metrics = dir.join(METRICS_FILE);

    if cfg.train.per_attack_models {
        let mut per_attack = Vec::new();
        for attack in attacks {
            let label = attack.label();
            log::info!("training the {label} model");
            let mut model = PrisModel::new(cfg.model, cfg.seeds.init)?;
            let plan = cfg.plan_for(vec![attack])?;
            let mut log = JsonlLog::create(&dir.join(format!("metrics.{label}.jsonl")))?;
            let stem = format!("model.{label}");
            train_full(&mut model, &plan, &data, &mut log, |m, step| {
                save_step(&step_path(dir, &stem, step), m)
            })?;
            let path = per_attack_path(&dir.join(MODEL_FILE), &label);
            checkpoint::save(&path, &model)?;
            per_attack.push((label, path));
        }
        let report = eval_after_training(cfg, Level::One, dir)?;
        return Ok(TrainOutcome {
            model: None,
            per_attack,
            metrics: dir.join(format!("metrics.{}.jsonl", cfg.train_attacks()?[0].label())),
            report,
        });
    }

    let mut model = PrisModel::new(cfg.model, cfg.seeds.init)?;
    let plan = cfg.plan_for(attacks.clone())?;
    let mut log = JsonlLog::create(&metrics)?;
    train_full(&mut model, &plan, &data, &mut log, |m, step| {
        save_step(&step_path(dir, "model", step), m)
    })?;

    let mut level = Level::Four;
    if cfg.train.per_attack_enhancers {
        level = Level::Three;
        for attack in attacks {
            let label = attack.label();
            if model.enhancers(&label).is_some() {
                continue;
            }
            log::info!("fine-tuning the {label} enhancers");
            model.add_enhancer_set(&label, Some(DEFAULT_SET))?;
            let plan = cfg.finetune_plan(attack)?;
            let mut log = JsonlLog::create(&dir.join(format!("metrics.enhance.{label}.jsonl")))?;
            train_full(&mut model, &plan, &data, &mut log, |_, _| Ok(()))?;
        }
    }
    let path = dir.join(MODEL_FILE);
    let hash = checkpoint::save(&path, &model)?;
    log::info!("saved {} (sha256 {hash})", path.display());
    let report = eval_after_training(cfg, level, dir)?;
    Ok(TrainOutcome {
        model: Some(path),
        per_attack: Vec::new(),
        metrics,
        report,
    })
}

fn save_step(path: &Path, model: &PrisModel) -> pris_core::Result<()> {
    checkpoint::save(path, model).map_err(|e| pris_core::Error::Data(e.to_string()))?;
    log::info!("step {} checkpoint: {}", model.step_reached, path.display());
    Ok(())
}

fn eval_after_training(cfg: &Config, level: Level, dir: &Path) -> CliResult<Option<EvalReport>> {
    let Some(test_dir) = &cfg.data.test_dir else {
        return Ok(None);
    };
    let labels: Vec<String> = match level {
        Level::One | Level::Three => cfg.train_attacks()?.iter().map(DistortionSpec::label).collect(),
        _ => cfg.attacks.eval.clone(),
    };
    let r = eval(&dir.join(MODEL_FILE), test_dir, level.number(), &labels, &dir.join("report"), cfg.seeds.eval)?;
    Ok(Some(r))
}

/// Load and crop both inputs, rejecting size mismatches.
fn load_pair(host: &Path, secret: &Path) -> CliResult<(Tensor, Tensor)> {
    let h = imageio::crop_to_multiple(&imageio::load_rgb(host)?, &host.display().to_string())?;
    let s = imageio::crop_to_multiple(&imageio::load_rgb(secret)?, &secret.display().to_string())?;
    if h.shape() != s.shape() {
        return Err(CliError::Data(format!(
            "host is {}x{} but secret is {}x{}",
            h.shape().h,
            h.shape().w,
            s.shape().h,
            s.shape().w
        )));
    }
    Ok((h, s))
}

fn check_label(label: &str) -> CliResult<String> {
    Ok(DistortionSpec::from_label(label)?.label())
}

/// Model used for embedding: the per-attack checkpoint when an attack is named.
pub fn embed_model(model: &Path, attack: Option<&str>) -> CliResult<(PrisModel, String)> {
    match attack {
        None => checkpoint::load(model),
        Some(a) => {
            let path = per_attack_path(model, &check_label(a)?);
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "--attack {a} selects the per-attack model {}, which does not exist",
                    path.display()
                )));
            }
            checkpoint::load(&path)
        }
    }
}

/// Model and enhancer set used for extraction. A named attack picks its
/// per-attack checkpoint when one exists, otherwise that enhancer set of
/// the shared model.
pub fn extract_model(model: &Path, attack: Option<&str>) -> CliResult<(PrisModel, String, String)> {
    if let Some(a) = attack {
        let label = check_label(a)?;
        let path = per_attack_path(model, &label);
        if path.exists() {
            let (m, hash) = checkpoint::load(&path)?;
            return Ok((m, hash, DEFAULT_SET.to_string()));
        }
        let (m, hash) = checkpoint::load(model)?;
        m.require_enhancers(&label)?;
        return Ok((m, hash, label));
    }
    let (m, hash) = checkpoint::load(model)?;
    Ok((m, hash, DEFAULT_SET.to_string()))
}

#[derive(Clone, Debug)]
pub struct EmbedOutcome {
    pub psnr_c: f64,
    pub width: usize,
    pub height: usize,
}

pub fn embed(model: &Path, host: &Path, secret: &Path, out: &Path, attack: Option<&str>) -> CliResult<EmbedOutcome> {
    let (m, _) = embed_model(model, attack)?;
    let (h, s) = load_pair(host, secret)?;
    let mut ex = Eager::new(m.params());
    let (c, _) = m.embed(&mut ex, &h, &s)?;
    if !c.is_finite() {
        return Err(CliError::Numeric("container has non-finite values".into()));
    }
    imageio::save_png(out, &c)?;
    let psnr_c = psnr(&quantize(&h), &quantize(&c))?;
    log::info!("container {} (PSNR-C {psnr_c:.2} dB)", out.display());
    Ok(EmbedOutcome {
        psnr_c,
        width: h.shape().w,
        height: h.shape().h,
    })
}

pub fn extract(model: &Path, container: &Path, out: &Path, attack: Option<&str>, z_seed: u64) -> CliResult<()> {
    let (m, _, set) = extract_model(model, attack)?;
    let c = imageio::crop_to_multiple(&imageio::load_rgb(container)?, &container.display().to_string())?;
    let mut ex = Eager::new(m.params());
    let z = sample_latent(c.shape(), z_seed)?;
    let (_, s) = m.extract(&mut ex, &c, &z, Some(m.require_enhancers(&set)?))?;
    if !s.is_finite() {
        return Err(CliError::Numeric("extracted image has non-finite values".into()));
    }
    imageio::save_png(out, &s)?;
    log::info!("extracted secret {} (enhancers {set:?}, z seed {z_seed})", out.display());
    Ok(())
}

/// Seed for evaluation latents and noise when no config is involved.
pub fn eval_seed_from_env() -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(Seeds::default().eval),
    }
}

pub fn eval(model: &Path, data: &Path, level: u8, labels: &[String], out: &Path, seed: u64) -> CliResult<EvalReport> {
    let attacks = parse_labels(labels)?;
    let level = Level::from_number(level)?;
    let canonical: Vec<String> = attacks.iter().map(DistortionSpec::label).collect();

    let mut owned: Vec<(String, PrisModel)> = Vec::new();
    let hash;
    if level.per_attack_models() {
        let mut lines = String::new();
        for label in &canonical {
            if owned.iter().any(|(l, _)| l == label) {
                continue;
            }
            let path = per_attack_path(model, label);
            let (m, h) = checkpoint::load(&path)
                .map_err(|e| CliError::Config(format!("level {} needs {}: {e}", level.number(), path.display())))?;
            lines += &format!("{label} {h}\n");
            owned.push((label.clone(), m));
        }
        hash = sha256_hex(lines.as_bytes());
    } else {
        let (m, h) = checkpoint::load(model)?;
        hash = h;
        owned.push((String::new(), m));
    }
    if level == Level::Three {
        for label in &canonical {
            owned[0].1.require_enhancers(label)?;
        }
    }

    let images = DatasetHandle {
        dir: data.to_path_buf(),
        split: Split::Test,
        crop: None,
    }
    .load()?;
    let set = if level.per_attack_models() {
        ModelSet::PerAttack(owned.iter().map(|(l, m)| (l.clone(), m)).collect::<BTreeMap<_, _>>())
    } else {
        ModelSet::Shared(&owned[0].1)
    };
    let report = evaluate(&set, level, &attacks, &images, seed, &hash)?;
    let (json, txt) = write_report(out, &report)?;
    log::info!("report written to {} and {}", json.display(), txt.display());
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct BitpackOutcome {
    pub container: PathBuf,
    pub recovered: PathBuf,
    /// PSNR of this container against the shifted host.
    pub psnr: f64,
    /// Lowest PSNR any secret can produce.
    pub floor: f64,
    pub exact: bool,
}

fn load_rgb8(path: &Path) -> CliResult<RgbImage> {
    Ok(image::open(path).map_err(|e| CliError::io(path, e))?.to_rgb8())
}

pub fn bitpack_demo(host: &Path, secret: &Path, out_dir: &Path) -> CliResult<BitpackOutcome> {
    let (h, s) = (load_rgb8(host)?, load_rgb8(secret)?);
    if h.dimensions() != s.dimensions() {
        return Err(CliError::Data(format!(
            "host is {:?} but secret is {:?}",
            h.dimensions(),
            s.dimensions()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let words = bitpack::pack(h.as_raw(), s.as_raw())?;
    let wide = WideContainer::new(h.width(), h.height(), 3, words)?;
    let container = out_dir.join("container.prw");
    widefile::save(&container, &wide)?;

    let back = widefile::load(&container)?;
    let bytes = bitpack::unpack(&back.words);
    let exact = bytes == *s.as_raw();
    let recovered = out_dir.join("recovered.png");
    let img = RgbImage::from_raw(back.width, back.height, bytes)
        .ok_or_else(|| CliError::Data("recovered image has the wrong size".into()))?;
    img.save_with_format(&recovered, image::ImageFormat::Png)
        .map_err(|e| CliError::io(&recovered, e))?;
    Ok(BitpackOutcome {
        container,
        recovered,
        psnr: bitpack::bound_check(h.as_raw(), s.as_raw())?,
        floor: bitpack::worst_case_psnr(),
        exact,
    })
}
