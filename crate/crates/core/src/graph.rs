//! Reverse-mode tape.
//!
//! Ops are appended in execution order, so the node list is already a
//! topological order and backpropagation is a single reverse sweep. Only
//! nodes that depend on a trainable parameter or a differentiable leaf carry
//! gradients; everything else is skipped during the sweep.

use alloc::vec;
use alloc::vec::Vec;

use crate::conv;
use crate::distortion::gaf::gaf_derivative_f32;
use crate::distortion::GradMode;
use crate::error::{Error, Result};
use crate::exec::{self, accumulate, same_shape, sigmoid, split_channels, Exec};
use crate::params::{GroupSet, ParamId, ParamStore};
use crate::tensor::{Shape, Tensor};
use crate::wavelet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv { x: Var, w: ParamId, b: ParamId },
    LeakyRelu { x: Var, slope: f32 },
    Concat(Vec<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Exp(Var),
    Affine { x: Var, scale: f32 },
    Clamp { x: Var, lo: f32, hi: f32 },
    Dwt(Var),
    Iwt(Var),
    Round { x: Var, steps: f32, mode: GradMode },
    Color { x: Var, matrix: [[f32; 3]; 3] },
    BlockDct { x: Var, inverse: bool },
    MulBlocks { x: Var, table: Vec<[f32; 64]> },
    PadEdge { x: Var, orig: Shape },
    Crop { x: Var, orig: Shape },
    SqErr(Var, Var),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    trainable: GroupSet,
    nodes: Vec<Node>,
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    params: Vec<Option<Tensor>>,
    kept: Vec<(Var, Tensor)>,
}

impl Gradients {
    /// Gradient of a parameter, `None` if it is frozen or unreached.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    pub fn into_params(self) -> Vec<Option<Tensor>> {
        self.params
    }

    /// Gradient of a node listed in `keep`; `None` if nothing reached it.
    pub fn node(&self, v: Var) -> Option<&Tensor> {
        self.kept.iter().find(|(k, _)| *k == v).map(|(_, t)| t)
    }
}

impl<'p> Graph<'p> {
    /// `trainable` selects which parameter groups receive gradients.
    pub fn new(params: &'p ParamStore, trainable: GroupSet) -> Self {
        Self {
            params,
            trainable,
            nodes: Vec::new(),
        }
    }

    /// Leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, true)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    #[inline]
    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    #[inline]
    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn param_trainable(&self, id: ParamId) -> bool {
        self.trainable.contains(self.params.entry(id).group)
    }

    pub fn scalar(&self, v: Var) -> f32 {
        self.val(v).data()[0]
    }

    /// Backpropagate from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.backward_keep(loss, &[])
    }

    /// Like [`Graph::backward`], additionally returning gradients of `keep`.
    pub fn backward_keep(&self, loss: Var, keep: &[Var]) -> Result<Gradients> {
        if self.val(loss).len() != 1 {
            return Err(Error::Dimension(alloc::format!(
                "backward needs a scalar loss, got {:?}",
                self.val(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        let mut pgrads: Vec<Option<Tensor>> = vec![None; self.params.len()];
        let mut kept = Vec::new();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if keep.contains(&Var(i)) {
                kept.push((Var(i), g.clone()));
            }
            if !node.needs_grad {
                continue;
            }
            let send = |v: Var, t: Tensor, grads: &mut Vec<Option<Tensor>>| {
                if self.ng(v) {
                    accumulate(&mut grads[v.0], t);
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Conv { x, w, b } => {
                    let want_params = self.param_trainable(*w);
                    let cg = conv::conv3x3_backward(
                        self.val(*x),
                        self.params.value(*w),
                        &g,
                        self.ng(*x),
                        want_params,
                    )?;
                    if let Some(gx) = cg.input {
                        send(*x, gx, &mut grads);
                    }
                    if let (Some(gw), Some(gb)) = (cg.weight, cg.bias) {
                        accumulate(&mut pgrads[w.0], gw);
                        let gb = Tensor::from_vec(self.params.value(*b).shape(), gb.into_vec())?;
                        accumulate(&mut pgrads[b.0], gb);
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let gx = g.zip_map(self.val(*x), |g, v| if v >= 0.0 { g } else { g * slope })?;
                    send(*x, gx, &mut grads);
                }
                Op::Concat(parts) => {
                    let sizes: Vec<usize> = parts.iter().map(|p| self.val(*p).shape().c).collect();
                    for (p, gp) in parts.iter().zip(split_channels(&g, &sizes)) {
                        send(*p, gp, &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone(), &mut grads);
                    send(*b, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    send(*b, g.map(|v| -v), &mut grads);
                    send(*a, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        send(*a, g.zip_map(self.val(*b), |g, v| g * v)?, &mut grads);
                    }
                    if self.ng(*b) {
                        send(*b, g.zip_map(self.val(*a), |g, v| g * v)?, &mut grads);
                    }
                }
                Op::Sigmoid(x) => {
                    let gx = g.zip_map(&node.value, |g, y| g * y * (1.0 - y))?;
                    send(*x, gx, &mut grads);
                }
                Op::Exp(x) => {
                    let gx = g.zip_map(&node.value, |g, y| g * y)?;
                    send(*x, gx, &mut grads);
                }
                Op::Affine { x, scale } => {
                    send(*x, g.map(|v| v * scale), &mut grads);
                }
                Op::Clamp { x, lo, hi } => {
                    let gx = g.zip_map(self.val(*x), |g, v| if v >= *lo && v <= *hi { g } else { 0.0 })?;
                    send(*x, gx, &mut grads);
                }
                Op::Dwt(x) => send(*x, wavelet::iwt(&g)?, &mut grads),
                Op::Iwt(x) => send(*x, wavelet::dwt(&g)?, &mut grads),
                Op::Round { x, steps, mode } => match mode {
                    GradMode::Zero => {}
                    GradMode::One => send(*x, g, &mut grads),
                    GradMode::Gaf => {
                        let gx = g.zip_map(self.val(*x), |g, v| g * gaf_derivative_f32(v * steps))?;
                        send(*x, gx, &mut grads);
                    }
                },
                Op::Color { x, matrix } => send(*x, exec::color_adjoint(&g, matrix), &mut grads),
                Op::BlockDct { x, inverse } => {
                    send(*x, exec::block_dct_fwd(&g, !inverse)?, &mut grads)
                }
                Op::MulBlocks { x, table } => send(*x, exec::mul_blocks_fwd(&g, table)?, &mut grads),
                Op::PadEdge { x, orig } => send(*x, exec::pad_edge_adjoint(&g, *orig), &mut grads),
                Op::Crop { x, orig } => send(*x, exec::crop_adjoint(&g, *orig), &mut grads),
                Op::SqErr(a, b) => {
                    let scale = 2.0 * g.data()[0] / self.val(*a).shape().n.max(1) as f32;
                    let diff = self.val(*a).zip_map(self.val(*b), |p, q| scale * (p - q))?;
                    if self.ng(*b) {
                        send(*b, diff.map(|v| -v), &mut grads);
                    }
                    send(*a, diff, &mut grads);
                }
            }
        }
        Ok(Gradients {
            params: pgrads,
            kept,
        })
    }
}

impl Exec for Graph<'_> {
    type T = Var;

    fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    fn value<'a>(&'a self, t: &'a Var) -> &'a Tensor {
        self.val(*t)
    }

    fn conv3x3(&mut self, x: &Var, weight: ParamId, bias: ParamId) -> Result<Var> {
        let v = conv::conv3x3_forward(self.val(*x), self.params.value(weight), self.params.value(bias))?;
        let ng = self.ng(*x) || self.param_trainable(weight) || self.param_trainable(bias);
        Ok(self.push(
            Op::Conv {
                x: *x,
                w: weight,
                b: bias,
            },
            v,
            ng,
        ))
    }

    fn leaky_relu(&mut self, x: &Var, slope: f32) -> Var {
        let v = self.val(*x).map(|v| if v >= 0.0 { v } else { slope * v });
        let ng = self.ng(*x);
        self.push(Op::LeakyRelu { x: *x, slope }, v, ng)
    }

    fn concat(&mut self, parts: &[&Var]) -> Result<Var> {
        let vals: Vec<&Tensor> = parts.iter().map(|p| self.val(**p)).collect();
        let v = Tensor::cat_channels(&vals)?;
        let ng = parts.iter().any(|p| self.ng(**p));
        Ok(self.push(Op::Concat(parts.iter().map(|p| **p).collect()), v, ng))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = self.val(*a).zip_map(self.val(*b), |p, q| p + q)?;
        let ng = self.ng(*a) || self.ng(*b);
        Ok(self.push(Op::Add(*a, *b), v, ng))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = self.val(*a).zip_map(self.val(*b), |p, q| p - q)?;
        let ng = self.ng(*a) || self.ng(*b);
        Ok(self.push(Op::Sub(*a, *b), v, ng))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = self.val(*a).zip_map(self.val(*b), |p, q| p * q)?;
        let ng = self.ng(*a) || self.ng(*b);
        Ok(self.push(Op::Mul(*a, *b), v, ng))
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        let v = self.val(*x).map(sigmoid);
        let ng = self.ng(*x);
        self.push(Op::Sigmoid(*x), v, ng)
    }

    fn exp(&mut self, x: &Var) -> Var {
        let v = self.val(*x).map(libm::expf);
        let ng = self.ng(*x);
        self.push(Op::Exp(*x), v, ng)
    }

    fn affine(&mut self, x: &Var, scale: f32, shift: f32) -> Var {
        let v = self.val(*x).map(|v| scale * v + shift);
        let ng = self.ng(*x);
        self.push(Op::Affine { x: *x, scale }, v, ng)
    }

    fn clamp(&mut self, x: &Var, lo: f32, hi: f32) -> Var {
        let v = self.val(*x).map(|v| v.clamp(lo, hi));
        let ng = self.ng(*x);
        self.push(Op::Clamp { x: *x, lo, hi }, v, ng)
    }

    fn dwt(&mut self, x: &Var) -> Result<Var> {
        let v = wavelet::dwt(self.val(*x))?;
        let ng = self.ng(*x);
        Ok(self.push(Op::Dwt(*x), v, ng))
    }

    fn iwt(&mut self, x: &Var) -> Result<Var> {
        let v = wavelet::iwt(self.val(*x))?;
        let ng = self.ng(*x);
        Ok(self.push(Op::Iwt(*x), v, ng))
    }

    fn round(&mut self, x: &Var, steps: f32, mode: GradMode) -> Var {
        let v = exec::round_fwd(self.val(*x), steps);
        // Zero-gradient rounding cuts the tape entirely.
        let ng = self.ng(*x) && mode != GradMode::Zero;
        self.push(Op::Round { x: *x, steps, mode }, v, ng)
    }

    fn color(&mut self, x: &Var, matrix: &[[f32; 3]; 3], offset: &[f32; 3]) -> Result<Var> {
        let v = exec::color_fwd(self.val(*x), matrix, offset)?;
        let ng = self.ng(*x);
        Ok(self.push(
            Op::Color {
                x: *x,
                matrix: *matrix,
            },
            v,
            ng,
        ))
    }

    fn block_dct(&mut self, x: &Var, inverse: bool) -> Result<Var> {
        let v = exec::block_dct_fwd(self.val(*x), inverse)?;
        let ng = self.ng(*x);
        Ok(self.push(Op::BlockDct { x: *x, inverse }, v, ng))
    }

    fn mul_blocks(&mut self, x: &Var, table: &[[f32; 64]]) -> Result<Var> {
        let v = exec::mul_blocks_fwd(self.val(*x), table)?;
        let ng = self.ng(*x);
        Ok(self.push(
            Op::MulBlocks {
                x: *x,
                table: table.to_vec(),
            },
            v,
            ng,
        ))
    }

    fn pad_edge(&mut self, x: &Var, h: usize, w: usize) -> Result<Var> {
        let orig = self.val(*x).shape();
        let v = exec::pad_edge_fwd(self.val(*x), h, w)?;
        let ng = self.ng(*x);
        Ok(self.push(Op::PadEdge { x: *x, orig }, v, ng))
    }

    fn crop(&mut self, x: &Var, h: usize, w: usize) -> Result<Var> {
        let orig = self.val(*x).shape();
        let v = self.val(*x).crop(0, 0, h, w)?;
        let ng = self.ng(*x);
        Ok(self.push(Op::Crop { x: *x, orig }, v, ng))
    }

    fn sq_err_per_item(&mut self, a: &Var, b: &Var) -> Result<Var> {
        same_shape(self.val(*a), self.val(*b))?;
        let v = exec::sq_err_fwd(self.val(*a), self.val(*b))?;
        let ng = self.ng(*a) || self.ng(*b);
        Ok(self.push(Op::SqErr(*a, *b), v, ng))
    }

    fn detach(&mut self, x: &Var) -> Var {
        let v = self.val(*x).clone();
        self.push(Op::Leaf, v, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Group;
    use crate::rng::{normal_tensor, seeded, uniform_tensor};

    /// Central-difference check of d(loss)/d(leaf) for a scalar-valued
    /// builder `f`.
    fn check_leaf_grad(
        shape: Shape,
        seed: u64,
        h: f32,
        tol: f32,
        f: impl Fn(&mut Graph<'_>, Var) -> Var,
    ) {
        let store = ParamStore::new();
        let mut rng = seeded(seed, 0);
        let x0 = uniform_tensor(&mut rng, shape, 0.05, 0.95);
        let mut g = Graph::new(&store, GroupSet::NONE);
        let x = g.variable(x0.clone());
        let loss = f(&mut g, x);
        let grads = g.backward_keep(loss, &[x]).unwrap();
        let analytic = grads.node(x).cloned().unwrap_or_else(|| Tensor::zeros(shape));

        let eval = |t: Tensor| -> f64 {
            let mut g = Graph::new(&store, GroupSet::NONE);
            let x = g.variable(t);
            let l = f(&mut g, x);
            g.scalar(l) as f64
        };
        for i in (0..x0.len()).step_by(1 + x0.len() / 17) {
            let mut p = x0.clone();
            p.data_mut()[i] += h;
            let mut m = x0.clone();
            m.data_mut()[i] -= h;
            let fd = ((eval(p) - eval(m)) / (2.0 * h as f64)) as f32;
            let a = analytic.data()[i];
            assert!(
                (fd - a).abs() <= tol * (1.0 + fd.abs().max(a.abs())),
                "element {i}: fd {fd} vs analytic {a}"
            );
        }
    }

    fn probe(shape: Shape, seed: u64) -> Tensor {
        normal_tensor(&mut seeded(seed, 9), shape, 1.0)
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        let s = Shape::new(2, 4, 4, 4);
        let target = probe(s, 1);
        check_leaf_grad(s, 3, 1e-3, 2e-2, |g, x| {
            let t = g.input(target.clone());
            let a = g.sigmoid(&x);
            let b = g.exp(&a);
            let c = g.mul(&b, &x).unwrap();
            let d = g.leaky_relu(&c, 0.2);
            let e = g.affine(&d, 1.7, -0.3);
            let f = g.sub(&e, &x).unwrap();
            g.sq_err_per_item(&f, &t).unwrap()
        });
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        let s = Shape::new(1, 3, 10, 6);
        let target = probe(Shape::new(1, 24, 8, 4), 2);
        // the loss is quadratic in x, so a wide step is exact up to rounding
        check_leaf_grad(s, 4, 0.05, 1e-3, |g, x| {
            let p = g.pad_edge(&x, 16, 8).unwrap();
            let q = g.color(&p, &[[0.3, 0.5, 0.2], [-0.1, 0.4, 0.7], [0.9, -0.2, 0.1]], &[0.1, 0.0, -0.1]).unwrap();
            let dct = g.block_dct(&q, false).unwrap();
            let m = g.mul_blocks(&dct, &[[0.5; 64], [2.0; 64]]).unwrap();
            let back = g.block_dct(&m, true).unwrap();
            let d = g.dwt(&back).unwrap();
            let sl = g.concat(&[&d, &d]).unwrap();
            let i = g.iwt(&sl).unwrap();
            let c = g.crop(&i, 14, 8).unwrap();
            let c = g.pad_edge(&c, 16, 8).unwrap();
            let z = g.dwt(&c).unwrap();
            let z = g.crop(&z, 8, 4).unwrap();
            let t = g.input(target.clone());
            g.sq_err_per_item(&z, &t).unwrap()
        });
    }

    #[test]
    fn conv_params_get_gradients_only_when_trainable() {
        let mut store = ParamStore::new();
        let mut rng = seeded(5, 0);
        let (w, b) = crate::params::conv_layer(&mut store, &mut rng, "c", Group::Inn, 2, 3, false);
        let x0 = uniform_tensor(&mut rng, Shape::new(2, 2, 4, 4), 0.0, 1.0);
        let t0 = uniform_tensor(&mut rng, Shape::new(2, 3, 4, 4), 0.0, 1.0);

        let run = |groups: GroupSet| {
            let mut g = Graph::new(&store, groups);
            let x = g.input(x0.clone());
            let t = g.input(t0.clone());
            let y = g.conv3x3(&x, w, b).unwrap();
            let l = g.sq_err_per_item(&y, &t).unwrap();
            (g.scalar(l), g.backward(l).unwrap())
        };
        let (_, frozen) = run(GroupSet::only(Group::PreEnhance));
        assert!(frozen.param(w).is_none());
        let (l0, live) = run(GroupSet::ALL);
        let gw = live.param(w).unwrap().clone();

        // finite differences on a few weights
        for i in [0usize, 7, 20, 53] {
            let h = 1e-3;
            let mut sp = store.clone();
            sp.value_mut(w).data_mut()[i] += h;
            let mut g = Graph::new(&sp, GroupSet::NONE);
            let x = g.input(x0.clone());
            let t = g.input(t0.clone());
            let y = g.conv3x3(&x, w, b).unwrap();
            let l = g.sq_err_per_item(&y, &t).unwrap();
            let fd = (g.scalar(l) - l0) / h;
            assert!((fd - gw.data()[i]).abs() < 2e-2 * (1.0 + fd.abs()), "{fd} vs {}", gw.data()[i]);
        }
    }

    #[test]
    fn zero_mode_round_blocks_everything_upstream() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store, GroupSet::NONE);
        let x = g.variable(Tensor::full(Shape::new(1, 1, 2, 2), 0.3));
        let r = g.round(&x, 255.0, GradMode::Zero);
        let t = g.input(Tensor::zeros(Shape::new(1, 1, 2, 2)));
        let l = g.sq_err_per_item(&r, &t).unwrap();
        let grads = g.backward_keep(l, &[x]).unwrap();
        assert!(grads.node(x).is_none());
    }
}
