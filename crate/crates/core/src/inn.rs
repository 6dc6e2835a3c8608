//! Affine coupling blocks and the invertible embedding stack.
//!
//! One block maps `(xh, xs)` to
//!
//! ```text
//! xh' = xh + f(xs)
//! xs' = xs * exp(sigmoid(g(xh'))) + h(xh')
//! ```
//!
//! and is undone by
//!
//! ```text
//! xs = (xs' - h(xh')) * exp(-sigmoid(g(xh')))
//! xh = xh' - f(xs)
//! ```
//!
//! The multiplicative factor is always in `(1, e)`, so the forward pass
//! amplifies the secret branch and the inverse shrinks it.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::exec::Exec;
use crate::params::{conv_layer, Group, ParamId, ParamStore};
use crate::rng::{normal_tensor, seeded, stream};
use crate::tensor::{Shape, Tensor};

/// Hyperparameters shared by the coupling subnets and the enhancers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct DenseConfig {
    /// Feature maps added by each hidden layer.
    pub growth: usize,
    /// Hidden layers before the zero-initialised output layer.
    pub hidden_layers: usize,
}

impl Default for DenseConfig {
    fn default() -> Self {
        Self {
            growth: 32,
            hidden_layers: 4,
        }
    }
}

pub const LEAKY_SLOPE: f32 = 0.2;

/// Densely connected conv stack: every hidden 3x3 layer sees the input and
/// all previous feature maps; the final layer maps back to the input width
/// and starts at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SubNet {
    hidden: Vec<(ParamId, ParamId)>,
    output: (ParamId, ParamId),
    channels: usize,
}

impl SubNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        group: Group,
        channels: usize,
        cfg: DenseConfig,
    ) -> Self {
        let mut width = channels;
        let mut hidden = Vec::with_capacity(cfg.hidden_layers);
        for i in 0..cfg.hidden_layers {
            hidden.push(conv_layer(store, rng, &format!("{prefix}.conv{i}"), group, width, cfg.growth, false));
            width += cfg.growth;
        }
        let output = conv_layer(
            store,
            rng,
            &format!("{prefix}.conv{}", cfg.hidden_layers),
            group,
            width,
            channels,
            true,
        );
        Self {
            hidden,
            output,
            channels,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.hidden
            .iter()
            .chain(core::iter::once(&self.output))
            .flat_map(|&(w, b)| [w, b])
    }

    pub fn forward<E: Exec>(&self, ex: &mut E, x: &E::T) -> Result<E::T> {
        let c = ex.value(x).shape().c;
        if c != self.channels {
            return Err(dim_err!("subnet expects {} channels, got {}", self.channels, c));
        }
        let mut feats = x.clone();
        for &(w, b) in &self.hidden {
            let y = ex.conv3x3(&feats, w, b)?;
            let y = ex.leaky_relu(&y, LEAKY_SLOPE);
            feats = ex.concat(&[&feats, &y])?;
        }
        ex.conv3x3(&feats, self.output.0, self.output.1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingBlock {
    pub f: SubNet,
    pub g: SubNet,
    pub h: SubNet,
}

impl CouplingBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        channels: usize,
        cfg: DenseConfig,
    ) -> Self {
        Self {
            f: SubNet::new(store, rng, &format!("{prefix}.f"), Group::Inn, channels, cfg),
            g: SubNet::new(store, rng, &format!("{prefix}.g"), Group::Inn, channels, cfg),
            h: SubNet::new(store, rng, &format!("{prefix}.h"), Group::Inn, channels, cfg),
        }
    }

    fn check<E: Exec>(ex: &E, a: &E::T, b: &E::T) -> Result<()> {
        let (sa, sb) = (ex.value(a).shape(), ex.value(b).shape());
        if sa != sb {
            return Err(dim_err!("coupling branches differ: {:?} vs {:?}", sa, sb));
        }
        Ok(())
    }

    pub fn forward<E: Exec>(&self, ex: &mut E, xh: &E::T, xs: &E::T) -> Result<(E::T, E::T)> {
        Self::check(ex, xh, xs)?;
        let fx = self.f.forward(ex, xs)?;
        let xh1 = ex.add(xh, &fx)?;
        let gx = self.g.forward(ex, &xh1)?;
        let s = ex.sigmoid(&gx);
        let scale = ex.exp(&s);
        let hx = self.h.forward(ex, &xh1)?;
        let scaled = ex.mul(xs, &scale)?;
        let xs1 = ex.add(&scaled, &hx)?;
        Ok((xh1, xs1))
    }

    pub fn inverse<E: Exec>(&self, ex: &mut E, xh1: &E::T, xs1: &E::T) -> Result<(E::T, E::T)> {
        Self::check(ex, xh1, xs1)?;
        let gx = self.g.forward(ex, xh1)?;
        let s = ex.sigmoid(&gx);
        let neg = ex.affine(&s, -1.0, 0.0);
        let shrink = ex.exp(&neg);
        let hx = self.h.forward(ex, xh1)?;
        let diff = ex.sub(xs1, &hx)?;
        let xs = ex.mul(&diff, &shrink)?;
        let fx = self.f.forward(ex, &xs)?;
        let xh = ex.sub(xh1, &fx)?;
        Ok((xh, xs))
    }
}

/// Stack of coupling blocks operating on wavelet bands.
#[derive(Clone, Debug, PartialEq)]
pub struct Inn {
    blocks: Vec<CouplingBlock>,
    channels: usize,
}

impl Inn {
    /// `channels` counts wavelet bands, i.e. four times the image channels.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        n_blocks: usize,
        channels: usize,
        cfg: DenseConfig,
    ) -> Result<Self> {
        if n_blocks == 0 {
            return Err(Error::Config("the invertible stack needs at least one block".into()));
        }
        let blocks = (0..n_blocks)
            .map(|i| CouplingBlock::new(store, rng, &format!("inn.block{i}"), channels, cfg))
            .collect();
        Ok(Self { blocks, channels })
    }

    pub fn blocks(&self) -> &[CouplingBlock] {
        &self.blocks
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Both branches through every block in order.
    pub fn forward<E: Exec>(&self, ex: &mut E, xh: &E::T, xs: &E::T) -> Result<(E::T, E::T)> {
        let (mut a, mut b) = (xh.clone(), xs.clone());
        for blk in &self.blocks {
            (a, b) = blk.forward(ex, &a, &b)?;
        }
        Ok((a, b))
    }

    /// Both branches through every block's inverse, last block first.
    pub fn inverse<E: Exec>(&self, ex: &mut E, xc: &E::T, z: &E::T) -> Result<(E::T, E::T)> {
        let (mut a, mut b) = (xc.clone(), z.clone());
        for blk in self.blocks.iter().rev() {
            (a, b) = blk.inverse(ex, &a, &b)?;
        }
        Ok((a, b))
    }

    /// Hide `xs` in `xh`. Returns the container image and the discarded
    /// latent (wavelet domain).
    pub fn embed<E: Exec>(&self, ex: &mut E, xh: &E::T, xs: &E::T) -> Result<(E::T, E::T)> {
        let (sh, ss) = (ex.value(xh).shape(), ex.value(xs).shape());
        if sh != ss {
            return Err(dim_err!("host {:?} and secret {:?} differ", sh, ss));
        }
        let fh = ex.dwt(xh)?;
        let fs = ex.dwt(xs)?;
        let (c, z) = self.forward(ex, &fh, &fs)?;
        Ok((ex.iwt(&c)?, z))
    }

    /// Recover `(revealed host, extracted secret)` from a container image and
    /// a wavelet-domain latent.
    pub fn extract<E: Exec>(&self, ex: &mut E, xd: &E::T, z: &E::T) -> Result<(E::T, E::T)> {
        let fd = ex.dwt(xd)?;
        let (sd, sz) = (ex.value(&fd).shape(), ex.value(z).shape());
        if sd != sz {
            return Err(dim_err!("latent {:?} does not match container bands {:?}", sz, sd));
        }
        let (h, s) = self.inverse(ex, &fd, z)?;
        Ok((ex.iwt(&h)?, ex.iwt(&s)?))
    }
}

/// Standard normal latent shaped like the wavelet bands of `image`.
pub fn sample_latent(image: Shape, seed: u64) -> Result<Tensor> {
    let fs = crate::wavelet::freq_shape(image)?;
    Ok(normal_tensor(&mut seeded(seed, stream::LATENT), fs, 1.0))
}
