//! Complete hiding model: invertible stack plus labelled enhancer sets.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::enhance::{Domain, EnhanceNet, EnhancerPair};
use crate::error::{dim_err, Error, Result};
use crate::exec::Exec;
use crate::inn::{DenseConfig, Inn};
use crate::params::{Group, ParamStore};
use crate::rng::{derive, seeded, stream};
use crate::wavelet::BANDS;

/// Enhancer set used when no attack information is available.
pub const DEFAULT_SET: &str = "default";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ModelConfig {
    pub image_channels: usize,
    pub blocks: usize,
    pub subnet: DenseConfig,
    pub enhancer: DenseConfig,
    pub pre_enhance: bool,
    pub post_enhance: bool,
    pub domain: Domain,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_channels: 3,
            blocks: 8,
            subnet: DenseConfig::default(),
            enhancer: DenseConfig::default(),
            pre_enhance: true,
            post_enhance: true,
            domain: Domain::Spatial,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(Error::Config("model.blocks must be at least 1".into()));
        }
        if self.image_channels == 0 {
            return Err(Error::Config("model.image_channels must be at least 1".into()));
        }
        for (name, d) in [("subnet", self.subnet), ("enhancer", self.enhancer)] {
            if d.growth == 0 {
                return Err(Error::Config(format!("model.{name}.growth must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn has_enhancers(&self) -> bool {
        self.pre_enhance || self.post_enhance
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrisModel {
    config: ModelConfig,
    params: ParamStore,
    inn: Inn,
    /// Enhancer sets in creation order.
    enhancers: Vec<(String, EnhancerPair)>,
    init_seed: u64,
    /// Last completed training step (0 when untrained).
    pub step_reached: u8,
}

impl PrisModel {
    /// Fresh model with a single [`DEFAULT_SET`] of enhancers.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = seeded(seed, stream::INIT);
        let inn = Inn::new(
            &mut params,
            &mut rng,
            config.blocks,
            config.image_channels * BANDS,
            config.subnet,
        )?;
        let mut model = Self {
            config,
            params,
            inn,
            enhancers: Vec::new(),
            init_seed: seed,
            step_reached: 0,
        };
        model.add_enhancer_set(DEFAULT_SET, None)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn inn(&self) -> &Inn {
        &self.inn
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Register enhancers for `label`, optionally starting from the current
    /// weights of another set.
    pub fn add_enhancer_set(&mut self, label: &str, copy_from: Option<&str>) -> Result<()> {
        if self.enhancers(label).is_some() {
            return Err(Error::Config(format!("enhancer set {label:?} already exists")));
        }
        if label.is_empty() || label.contains('.') {
            return Err(Error::Config(format!("invalid enhancer set label {label:?}")));
        }
        let mut rng = seeded(derive(self.init_seed, self.enhancers.len() as u64 + 1), stream::INIT);
        let cfg = self.config;
        let mut make = |which: &str, group: Group, on: bool| {
            on.then(|| {
                EnhanceNet::new(
                    &mut self.params,
                    &mut rng,
                    &format!("enhance.{label}.{which}"),
                    group,
                    cfg.image_channels,
                    cfg.domain,
                    cfg.enhancer,
                )
            })
        };
        let pair = EnhancerPair {
            pre: make("pre", Group::PreEnhance, cfg.pre_enhance),
            post: make("post", Group::PostEnhance, cfg.post_enhance),
        };
        if let Some(src) = copy_from {
            let src_pair = self
                .enhancers(src)
                .ok_or_else(|| Error::Config(format!("no enhancer set named {src:?}")))?;
            let copies: Vec<_> = [(&src_pair.pre, &pair.pre), (&src_pair.post, &pair.post)]
                .into_iter()
                .filter_map(|(a, b)| Some((a.as_ref()?, b.as_ref()?)))
                .flat_map(|(a, b)| a.param_ids().zip(b.param_ids()).collect::<Vec<_>>())
                .collect();
            for (from, to) in copies {
                let v = self.params.value(from).clone();
                *self.params.value_mut(to) = v;
            }
        }
        self.enhancers.push((label.to_string(), pair));
        Ok(())
    }

    /// Labels in creation order.
    pub fn enhancer_labels(&self) -> impl Iterator<Item = &str> {
        self.enhancers.iter().map(|(l, _)| l.as_str())
    }

    pub fn enhancers(&self, label: &str) -> Option<&EnhancerPair> {
        self.enhancers.iter().find(|(l, _)| l == label).map(|(_, p)| p)
    }

    /// Enhancers for `label`, or a configuration error naming the options.
    pub fn require_enhancers(&self, label: &str) -> Result<&EnhancerPair> {
        self.enhancers(label).ok_or_else(|| {
            let known: Vec<&str> = self.enhancer_labels().collect();
            Error::Config(format!(
                "no enhancer set for attack {label:?}; available: {}",
                known.join(", ")
            ))
        })
    }

    /// Container image and wavelet-domain latent.
    pub fn embed<E: Exec>(&self, ex: &mut E, host: &E::T, secret: &E::T) -> Result<(E::T, E::T)> {
        let c = ex.value(host).shape().c;
        if c != self.config.image_channels {
            return Err(dim_err!(
                "model expects {} image channels, got {}",
                self.config.image_channels,
                c
            ));
        }
        self.inn.embed(ex, host, secret)
    }

    /// `(revealed host, extracted secret)`; enhancers run only when a pair is
    /// supplied.
    pub fn extract<E: Exec>(
        &self,
        ex: &mut E,
        container: &E::T,
        z: &E::T,
        enhancers: Option<&EnhancerPair>,
    ) -> Result<(E::T, E::T)> {
        let pre = enhancers.and_then(|p| p.pre.as_ref());
        let post = enhancers.and_then(|p| p.post.as_ref());
        match self.config.domain {
            Domain::Spatial => {
                let xd = match pre {
                    Some(net) => net.forward(ex, container)?,
                    None => container.clone(),
                };
                let (h, s) = self.inn.extract(ex, &xd, z)?;
                let s = match post {
                    Some(net) => net.forward(ex, &s)?,
                    None => s,
                };
                Ok((h, s))
            }
            Domain::Frequency => {
                let fd = ex.dwt(container)?;
                let fd = match pre {
                    Some(net) => net.forward(ex, &fd)?,
                    None => fd,
                };
                let (sd, sz) = (ex.value(&fd).shape(), ex.value(z).shape());
                if sd != sz {
                    return Err(dim_err!("latent {:?} does not match container bands {:?}", sz, sd));
                }
                let (h, s) = self.inn.inverse(ex, &fd, z)?;
                let s = match post {
                    Some(net) => net.forward(ex, &s)?,
                    None => s,
                };
                Ok((ex.iwt(&h)?, ex.iwt(&s)?))
            }
        }
    }
}
