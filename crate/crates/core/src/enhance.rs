//! Residual correction networks wrapped around the extraction pass.
//!
//! The pre-enhancer cleans the attacked container before it is inverted, the
//! post-enhancer refines the extracted secret. Both compute
//! `x + dense(x)` with a zero-initialised last layer, so a fresh enhancer is
//! the identity.

use rand::Rng;

use crate::error::Result;
use crate::exec::Exec;
use crate::inn::{DenseConfig, SubNet};
use crate::params::{Group, ParamId, ParamStore};

/// Where the enhancers operate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Domain {
    /// On images: pre before the wavelet transform, post after the inverse.
    #[default]
    Spatial,
    /// On wavelet bands: pre after the transform, post before the inverse.
    Frequency,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Spatial => "spatial",
            Domain::Frequency => "frequency",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnhanceNet {
    net: SubNet,
    domain: Domain,
}

impl EnhanceNet {
    /// `image_channels` is the colour channel count; the network width is
    /// four times that in the frequency domain.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        group: Group,
        image_channels: usize,
        domain: Domain,
        cfg: DenseConfig,
    ) -> Self {
        let channels = match domain {
            Domain::Spatial => image_channels,
            Domain::Frequency => image_channels * crate::wavelet::BANDS,
        };
        Self {
            net: SubNet::new(store, rng, prefix, group, channels, cfg),
            domain,
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.net.param_ids()
    }

    pub fn forward<E: Exec>(&self, ex: &mut E, x: &E::T) -> Result<E::T> {
        let correction = self.net.forward(ex, x)?;
        ex.add(x, &correction)
    }
}

/// Pre- and post-enhancer selected together at extraction time.
#[derive(Clone, Debug, PartialEq)]
pub struct EnhancerPair {
    pub pre: Option<EnhanceNet>,
    pub post: Option<EnhanceNet>,
}

impl EnhancerPair {
    pub fn is_empty(&self) -> bool {
        self.pre.is_none() && self.post.is_none()
    }
}
