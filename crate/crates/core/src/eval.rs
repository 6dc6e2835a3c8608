//! Robustness evaluation under the four attack-information levels.
//!
//! Level 1 and 2 use one full model per attack. Level 3 shares the backbone
//! and picks the enhancer set matching the attack at extraction. Level 4
//! uses one model with no attack information at all.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::distortion::{self, DistortionSpec};
use crate::error::{Error, Result};
use crate::exec::Eager;
use crate::inn::sample_latent;
use crate::metrics::{dequantize, mean_db, psnr, quantize};
use crate::model::{PrisModel, DEFAULT_SET};
use crate::rng::derive;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    /// One model per attack.
    One,
    /// One model per attack, chosen before embedding.
    Two,
    /// Shared backbone, enhancers chosen per attack.
    Three,
    /// Shared model, attack unknown.
    Four,
}

impl Level {
    pub fn from_number(n: u8) -> Result<Self> {
        Ok(match n {
            1 => Level::One,
            2 => Level::Two,
            3 => Level::Three,
            4 => Level::Four,
            _ => return Err(Error::Config(format!("level must be 1..=4, got {n}"))),
        })
    }

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn per_attack_models(self) -> bool {
        matches!(self, Level::One | Level::Two)
    }
}

/// Models available to an evaluation.
pub enum ModelSet<'a> {
    Shared(&'a PrisModel),
    /// Keyed by attack label.
    PerAttack(BTreeMap<String, &'a PrisModel>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub attack: String,
    pub psnr_c: f64,
    pub psnr_s: f64,
    pub n_images: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub level: u8,
    pub model_hash: String,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, attack: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.attack == attack)
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut out = format!("level {}  model {}\n", self.level, self.model_hash);
        out += &format!("{:<10} {:>9} {:>9} {:>8}\n", "attack", "PSNR-C", "PSNR-S", "images");
        for r in &self.rows {
            out += &format!(
                "{:<10} {:>9} {:>9} {:>8}\n",
                r.attack,
                fmt_db(r.psnr_c),
                fmt_db(r.psnr_s),
                r.n_images
            );
        }
        out
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.2}")
    }
}

fn label_salt(label: &str) -> u64 {
    // FNV-1a, so noise does not depend on the order attacks are listed in
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

struct Embedded {
    container: Tensor,
    psnr_c: f64,
}

fn embed_one(model: &PrisModel, host: &Tensor, secret: &Tensor) -> Result<Embedded> {
    let mut ex = Eager::new(model.params());
    let (c, _) = model.embed(&mut ex, host, secret)?;
    let bytes = quantize(&c);
    let psnr_c = psnr(&quantize(host), &bytes)?;
    Ok(Embedded {
        container: dequantize(c.shape(), &bytes)?,
        psnr_c,
    })
}

fn extract_one(
    model: &PrisModel,
    enhancer_set: &str,
    container: &Tensor,
    secret: &Tensor,
    attack: &DistortionSpec,
    z_seed: u64,
    noise_seed: u64,
) -> Result<f64> {
    let mut ex = Eager::new(model.params());
    let attacked = distortion::apply(&mut ex, attack, container, noise_seed, false)?;
    let z = sample_latent(attacked.shape(), z_seed)?;
    let enh = model.require_enhancers(enhancer_set)?;
    let (_, s) = model.extract(&mut ex, &attacked, &z, Some(enh))?;
    if !s.is_finite() {
        return Err(Error::Numeric(format!("non-finite extraction under {attack}")));
    }
    psnr(&quantize(secret), &quantize(&s))
}

/// Evaluate each attack on host/secret pairs `(images[i], images[i+1])`,
/// wrapping around, so every image serves once as host.
pub fn evaluate(
    models: &ModelSet<'_>,
    level: Level,
    attacks: &[DistortionSpec],
    images: &[Tensor],
    seed: u64,
    model_hash: &str,
) -> Result<EvalReport> {
    if attacks.is_empty() {
        return Err(Error::Config("no attacks to evaluate".into()));
    }
    if images.len() < 2 {
        return Err(Error::Data(format!("evaluation needs at least two images, got {}", images.len())));
    }
    for a in attacks {
        a.validate().map_err(|e| Error::Config(format!("attack {a}: {e}")))?;
    }
    let labels: Vec<String> = attacks.iter().map(DistortionSpec::label).collect();

    // resolve every model/enhancer choice before computing anything
    let mut chosen: Vec<(&PrisModel, String)> = Vec::with_capacity(attacks.len());
    for label in &labels {
        let pick = match (level, models) {
            (l, ModelSet::PerAttack(map)) if l.per_attack_models() => {
                let m = map.get(label.as_str()).ok_or_else(|| {
                    Error::Config(format!("level {} needs a model for attack {label:?}", l.number()))
                })?;
                (*m, DEFAULT_SET.to_string())
            }
            (Level::Three, ModelSet::Shared(m)) => {
                m.require_enhancers(label)?;
                (*m, label.clone())
            }
            (Level::Four, ModelSet::Shared(m)) => (*m, DEFAULT_SET.to_string()),
            (l, _) => {
                return Err(Error::Config(format!(
                    "level {} needs {}",
                    l.number(),
                    if l.per_attack_models() { "per-attack models" } else { "a single shared model" }
                )))
            }
        };
        chosen.push(pick);
    }

    let n = images.len();
    let mut psnr_c = alloc::vec![Vec::with_capacity(n); attacks.len()];
    let mut psnr_s = alloc::vec![Vec::with_capacity(n); attacks.len()];
    for i in 0..n {
        let (host, secret) = (&images[i], &images[(i + 1) % n]);
        let z_seed = derive(seed, i as u64);
        // containers only depend on the model, so shared models embed once
        let mut cache: Vec<(*const PrisModel, Embedded)> = Vec::new();
        for (k, (model, set)) in chosen.iter().enumerate() {
            let key = *model as *const PrisModel;
            let idx = match cache.iter().position(|(p, _)| *p == key) {
                Some(j) => j,
                None => {
                    cache.push((key, embed_one(model, host, secret)?));
                    cache.len() - 1
                }
            };
            let emb = &cache[idx].1;
            let noise_seed = derive(z_seed, label_salt(&labels[k]));
            psnr_c[k].push(emb.psnr_c);
            psnr_s[k].push(extract_one(model, set, &emb.container, secret, &attacks[k], z_seed, noise_seed)?);
        }
    }

    let rows = labels
        .into_iter()
        .enumerate()
        .map(|(k, attack)| EvalRow {
            attack,
            psnr_c: mean_db(&psnr_c[k]),
            psnr_s: mean_db(&psnr_s[k]),
            n_images: n,
        })
        .collect();
    Ok(EvalReport {
        level: level.number(),
        model_hash: model_hash.to_string(),
        rows,
    })
}
