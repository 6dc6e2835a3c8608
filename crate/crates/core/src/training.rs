//! Losses, the three-step schedule and the training loop.
//!
//! Step 1 trains the invertible stack alone with the enhancers switched off.
//! Step 2 freezes the stack and trains the enhancers. Step 3 fine-tunes
//! everything together. A joint plan collapses all three into one step that
//! trains every group from the start.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::distortion::{self, DistortionSpec};
use crate::enhance::EnhancerPair;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::{Graph, Var};
use crate::inn::sample_latent;
use crate::metrics::{batch_psnr, mean_db};
use crate::model::{PrisModel, DEFAULT_SET};
use crate::optim::{Adam, AdamConfig};
use crate::params::{Group, GroupSet};
use crate::rng::{derive, seeded, stream};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct LossWeights {
    pub lambda_c: f32,
    pub lambda_s: f32,
    /// Optional penalty on the discarded latent; off by default.
    pub lambda_z: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_c: 1.0,
            lambda_s: 1.0,
            lambda_z: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_c, self.lambda_s, self.lambda_z];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be finite and >= 0, got {all:?}")));
        }
        if self.lambda_c + self.lambda_s <= 0.0 {
            return Err(Error::Config("lambda_c + lambda_s must be positive".into()));
        }
        Ok(())
    }
}

/// Container fidelity: summed squared error per batch item.
pub fn loss_c(container: &Tensor, host: &Tensor) -> Result<f64> {
    sq_err(container, host)
}

/// Secret fidelity: summed squared error per batch item.
pub fn loss_s(secret: &Tensor, extracted: &Tensor) -> Result<f64> {
    sq_err(secret, extracted)
}

fn sq_err(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.expect_shape(b.shape())?;
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| {
            let d = (*p - *q) as f64;
            d * d
        })
        .sum();
    Ok(sse / a.shape().n.max(1) as f64)
}

pub fn total_loss(w: &LossWeights, lc: f64, ls: f64, lz: f64) -> f64 {
    w.lambda_c as f64 * lc + w.lambda_s as f64 * ls + w.lambda_z as f64 * lz
}

/// One stage of a [`TrainPlan`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepPlan {
    pub step: u8,
    pub epochs: usize,
    pub lr: f32,
    /// Epochs between learning-rate halvings.
    pub lr_half_period: usize,
    pub trainable: GroupSet,
    /// Whether the enhancers take part in the forward pass.
    pub enhance: bool,
}

impl StepPlan {
    pub fn lr_at(&self, epoch: usize) -> f32 {
        let halvings = epoch / self.lr_half_period.max(1);
        self.lr * libm::powf(0.5, halvings as f32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainPlan {
    pub steps: Vec<StepPlan>,
    /// Attacks drawn per batch.
    pub attacks: Vec<DistortionSpec>,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Square training crop.
    pub crop: usize,
    pub seed: u64,
    /// Enhancer set that is trained and used.
    pub enhancer_set: String,
}

/// Learning rates and epoch counts of a schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub epochs: [usize; 3],
    pub lr: [f32; 3],
    pub lr_half_period: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            epochs: [50, 50, 50],
            lr: [libm::powf(10.0, -4.5), libm::powf(10.0, -4.5), libm::powf(10.0, -5.5)],
            lr_half_period: 200,
        }
    }
}

impl TrainPlan {
    fn base(attacks: Vec<DistortionSpec>, steps: Vec<StepPlan>) -> Self {
        Self {
            steps,
            attacks,
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            batch_size: 4,
            crop: 64,
            seed: 0,
            enhancer_set: DEFAULT_SET.to_string(),
        }
    }

    /// Pre-train the stack, pre-train the enhancers, fine-tune everything.
    pub fn three_step(schedule: Schedule, attacks: Vec<DistortionSpec>) -> Self {
        let enh = GroupSet::of(&[Group::PreEnhance, Group::PostEnhance]);
        let steps = [
            (GroupSet::only(Group::Inn), false),
            (enh, true),
            (GroupSet::ALL, true),
        ]
        .into_iter()
        .enumerate()
        .map(|(i, (trainable, enhance))| StepPlan {
            step: i as u8 + 1,
            epochs: schedule.epochs[i],
            lr: schedule.lr[i],
            lr_half_period: schedule.lr_half_period,
            trainable,
            enhance,
        })
        .collect();
        Self::base(attacks, steps)
    }

    /// Everything trained together for the combined epoch budget at the
    /// first step's learning rate.
    pub fn joint(schedule: Schedule, attacks: Vec<DistortionSpec>) -> Self {
        let step = StepPlan {
            step: 1,
            epochs: schedule.epochs.iter().sum(),
            lr: schedule.lr[0],
            lr_half_period: schedule.lr_half_period,
            trainable: GroupSet::ALL,
            enhance: true,
        };
        Self::base(attacks, alloc::vec![step])
    }

    /// Only the enhancer stage, for per-attack enhancer sets.
    pub fn enhancers_only(schedule: Schedule, attack: DistortionSpec, set: &str) -> Self {
        let mut plan = Self::three_step(schedule, alloc::vec![attack]);
        plan.steps.retain(|s| s.step == 2);
        plan.enhancer_set = set.to_string();
        plan
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Config("training plan has no steps".into()));
        }
        if self.attacks.is_empty() {
            return Err(Error::Config("training plan needs at least one attack".into()));
        }
        for a in &self.attacks {
            a.validate().map_err(|e| Error::Config(format!("attack {a}: {e}")))?;
        }
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.crop == 0 || !self.crop.is_multiple_of(2) {
            return Err(Error::Config(format!("crop must be a positive even size, got {}", self.crop)));
        }
        for s in &self.steps {
            if !(s.lr.is_finite() && s.lr > 0.0) {
                return Err(Error::Config(format!("step {}: learning rate must be positive", s.step)));
            }
            if s.step == 1 && s.enhance && s.trainable == GroupSet::only(Group::Inn) {
                return Err(Error::Config("step 1 must run without enhancers".into()));
            }
        }
        Ok(())
    }
}

/// Per-epoch training metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub step: u8,
    pub epoch: usize,
    pub lr: f32,
    pub loss: f64,
    pub loss_c: f64,
    pub loss_s: f64,
    pub psnr_c: f64,
    pub psnr_s: f64,
}

pub trait MetricsSink {
    fn record(&mut self, rec: &EpochRecord) -> Result<()>;
}

impl MetricsSink for Vec<EpochRecord> {
    fn record(&mut self, rec: &EpochRecord) -> Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// In-memory training images, each `[1, c, h, w]` with `h, w >= crop`.
#[derive(Clone, Debug)]
pub struct TrainData {
    images: Vec<Tensor>,
}

impl TrainData {
    pub fn new(images: Vec<Tensor>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        if images.len() < 2 {
            return Err(Error::Data("training needs at least two images to form a host/secret pair".into()));
        }
        for (i, t) in images.iter().enumerate() {
            if t.shape().n != 1 {
                return Err(Error::Data(format!("image {i} is a batch of {}", t.shape().n)));
            }
        }
        Ok(Self { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    fn random_crop<R: Rng>(&self, i: usize, crop: usize, rng: &mut R) -> Result<Tensor> {
        let t = &self.images[i];
        let s = t.shape();
        if s.h < crop || s.w < crop {
            return Err(Error::Data(format!("image {i} ({}x{}) is smaller than the crop {crop}", s.h, s.w)));
        }
        let y = rng.gen_range(0..=s.h - crop);
        let x = rng.gen_range(0..=s.w - crop);
        t.crop(y, x, crop, crop)
    }
}

/// Handles into the tape for one batch.
pub struct BatchVars {
    pub container: Var,
    pub attacked: Var,
    pub extracted: Var,
    pub latent: Var,
    pub loss: Var,
    pub loss_c: Var,
    pub loss_s: Var,
}

/// Record embed -> attack -> extract -> losses for one batch.
#[allow(clippy::too_many_arguments)]
pub fn forward_batch(
    g: &mut Graph<'_>,
    model: &PrisModel,
    hosts: &Tensor,
    secrets: &Tensor,
    attack: &DistortionSpec,
    z: &Tensor,
    noise_seed: u64,
    enhancers: Option<&EnhancerPair>,
    weights: &LossWeights,
) -> Result<BatchVars> {
    let xh = g.input(hosts.clone());
    let xs = g.input(secrets.clone());
    let (container, latent) = model.embed(g, &xh, &xs)?;
    let loss_c = g.sq_err_per_item(&container, &xh)?;
    let attacked = distortion::apply(g, attack, &container, noise_seed, true)?;
    let zv = g.input(z.clone());
    let (_, extracted) = model.extract(g, &attacked, &zv, enhancers)?;
    let loss_s = g.sq_err_per_item(&extracted, &xs)?;

    let wc = g.affine(&loss_c, weights.lambda_c, 0.0);
    let ws = g.affine(&loss_s, weights.lambda_s, 0.0);
    let mut loss = g.add(&wc, &ws)?;
    if weights.lambda_z > 0.0 {
        let zero = g.input(Tensor::zeros(g.value(&latent).shape()));
        let lz = g.sq_err_per_item(&latent, &zero)?;
        let wz = g.affine(&lz, weights.lambda_z, 0.0);
        loss = g.add(&loss, &wz)?;
    }
    Ok(BatchVars {
        container,
        attacked,
        extracted,
        latent,
        loss,
        loss_c,
        loss_s,
    })
}

/// Uniform draw per batch without long-run drift: a fresh shuffle of the
/// active attacks is dealt out one per batch.
struct AttackDeck {
    order: Vec<usize>,
    pos: usize,
    n: usize,
}

impl AttackDeck {
    fn new(n: usize) -> Self {
        Self {
            order: Vec::new(),
            pos: 0,
            n,
        }
    }

    fn next<R: Rng>(&mut self, rng: &mut R) -> usize {
        if self.pos == self.order.len() {
            self.order = (0..self.n).collect();
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Attack indices the loop would draw for `batches` consecutive batches.
pub fn attack_schedule(n_attacks: usize, batches: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded(seed, stream::ATTACK_PICK);
    let mut deck = AttackDeck::new(n_attacks);
    (0..batches).map(|_| deck.next(&mut rng)).collect()
}

fn batch_salt(step: u8, epoch: usize, batch: usize) -> u64 {
    ((step as u64) << 48) ^ ((epoch as u64) << 20) ^ batch as u64
}

/// Train one step of `plan` in place.
pub fn run_step(
    model: &mut PrisModel,
    plan: &TrainPlan,
    index: usize,
    data: &TrainData,
    sink: &mut dyn MetricsSink,
) -> Result<()> {
    plan.validate()?;
    let sp = plan
        .steps
        .get(index)
        .ok_or_else(|| Error::Config(format!("plan has no step index {index}")))?
        .clone();
    model.require_enhancers(&plan.enhancer_set)?;
    let cfg = *model.config();
    let mut trainable = sp.trainable;
    if !cfg.pre_enhance || !sp.enhance {
        trainable = trainable.without(Group::PreEnhance);
    }
    if !cfg.post_enhance || !sp.enhance {
        trainable = trainable.without(Group::PostEnhance);
    }
    if trainable.is_empty() {
        // nothing to train, e.g. the enhancer step of a model without enhancers
        return Ok(());
    }

    let mut adam = Adam::new(plan.adam, trainable, model.params().len());
    let mut pick_rng = seeded(derive(plan.seed, sp.step as u64), stream::ATTACK_PICK);
    let mut deck = AttackDeck::new(plan.attacks.len());

    for epoch in 0..sp.epochs {
        let lr = sp.lr_at(epoch);
        let mut rng = seeded(derive(plan.seed, batch_salt(sp.step, epoch, 0)), stream::DATA);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let pairs: Vec<(usize, usize)> = order.chunks_exact(2).map(|p| (p[0], p[1])).collect();

        let (mut sum_l, mut sum_c, mut sum_s) = (0.0f64, 0.0f64, 0.0f64);
        let (mut psnr_c, mut psnr_s) = (Vec::new(), Vec::new());
        let mut batches = 0usize;

        for (b, chunk) in pairs.chunks(plan.batch_size).enumerate() {
            let mut hs = Vec::with_capacity(chunk.len());
            let mut ss = Vec::with_capacity(chunk.len());
            for &(h, s) in chunk {
                hs.push(data.random_crop(h, plan.crop, &mut rng)?);
                ss.push(data.random_crop(s, plan.crop, &mut rng)?);
            }
            let hosts = Tensor::stack(&hs.iter().collect::<Vec<_>>())?;
            let secrets = Tensor::stack(&ss.iter().collect::<Vec<_>>())?;
            let attack = plan.attacks[deck.next(&mut pick_rng)];
            let salt = derive(plan.seed, batch_salt(sp.step, epoch, b + 1));
            let z = sample_latent(hosts.shape(), salt)?;

            let grads = {
                let enh = sp.enhance.then(|| model.enhancers(&plan.enhancer_set)).flatten();
                let mut g = Graph::new(model.params(), trainable);
                let vars = forward_batch(&mut g, model, &hosts, &secrets, &attack, &z, salt, enh, &plan.weights)?;
                let (l, lc, ls) = (
                    g.scalar(vars.loss) as f64,
                    g.scalar(vars.loss_c) as f64,
                    g.scalar(vars.loss_s) as f64,
                );
                if !(l.is_finite() && lc.is_finite() && ls.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "non-finite loss in step {} epoch {epoch} batch {b} (attack {attack}): L={l} L_c={lc} L_s={ls}",
                        sp.step
                    )));
                }
                sum_l += l;
                sum_c += lc;
                sum_s += ls;
                psnr_c.extend(batch_psnr(g.value(&vars.container), &hosts)?);
                psnr_s.extend(batch_psnr(g.value(&vars.extracted), &secrets)?);
                g.backward(vars.loss)?.into_params()
            };
            adam.step(model.params_mut(), &grads, lr);
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::Data("no complete host/secret pair in the training set".into()));
        }
        let n = batches as f64;
        sink.record(&EpochRecord {
            step: sp.step,
            epoch,
            lr,
            loss: sum_l / n,
            loss_c: sum_c / n,
            loss_s: sum_s / n,
            psnr_c: mean_db(&psnr_c),
            psnr_s: mean_db(&psnr_s),
        })?;
    }
    model.step_reached = sp.step;
    Ok(())
}

/// Run every step of `plan`, calling `after_step` (e.g. to checkpoint) once
/// each step finishes.
pub fn train_full(
    model: &mut PrisModel,
    plan: &TrainPlan,
    data: &TrainData,
    sink: &mut dyn MetricsSink,
    mut after_step: impl FnMut(&PrisModel, u8) -> Result<()>,
) -> Result<()> {
    plan.validate()?;
    for i in 0..plan.steps.len() {
        run_step(model, plan, i, data, sink)?;
        after_step(model, plan.steps[i].step)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inn::DenseConfig;
    use crate::model::ModelConfig;
    use crate::rng::uniform_tensor;
    use crate::tensor::Shape;

    fn tiny_model(enhance: bool) -> PrisModel {
        PrisModel::new(
            ModelConfig {
                blocks: 1,
                subnet: DenseConfig { growth: 4, hidden_layers: 1 },
                enhancer: DenseConfig { growth: 4, hidden_layers: 1 },
                pre_enhance: enhance,
                post_enhance: enhance,
                ..ModelConfig::default()
            },
            1,
        )
        .unwrap()
    }

    fn tiny_data(n: usize) -> TrainData {
        let mut rng = seeded(5, 0);
        TrainData::new((0..n).map(|_| uniform_tensor(&mut rng, Shape::new(1, 3, 12, 12), 0.0, 1.0)).collect()).unwrap()
    }

    fn tiny_plan(epochs: [usize; 3]) -> TrainPlan {
        let mut plan = TrainPlan::three_step(
            Schedule {
                epochs,
                lr: [1e-3, 1e-3, 1e-4],
                lr_half_period: 2,
            },
            alloc::vec![DistortionSpec::identity(), DistortionSpec::round()],
        );
        plan.batch_size = 2;
        plan.crop = 8;
        plan
    }

    #[test]
    fn loss_definitions() {
        let a = Tensor::full(Shape::new(2, 1, 2, 2), 0.5);
        assert_eq!(loss_c(&a, &a).unwrap(), 0.0);
        let mut b = Tensor::full(Shape::new(1, 1, 2, 2), 0.5);
        b.data_mut()[3] = 0.75;
        let one = Tensor::full(Shape::new(1, 1, 2, 2), 0.5);
        assert!((loss_s(&one, &b).unwrap() - 0.0625).abs() < 1e-12);
        // duplicated batch leaves the per-item loss unchanged
        let bb = Tensor::stack(&[&b, &b]).unwrap();
        let oo = Tensor::stack(&[&one, &one]).unwrap();
        assert_eq!(loss_c(&bb, &oo).unwrap(), loss_c(&b, &one).unwrap());
        assert!(loss_c(&a, &b).is_err());

        let w = LossWeights::default();
        assert_eq!(total_loss(&w, 2.0, 3.0, 100.0), 5.0);
        let w0 = LossWeights { lambda_c: 0.0, ..w };
        assert_eq!(total_loss(&w0, 2.0, 3.0, 0.0), total_loss(&w0, 40.0, 3.0, 0.0));
    }

    #[test]
    fn loss_weight_validation() {
        assert!(LossWeights { lambda_c: 0.0, lambda_s: 0.0, lambda_z: 1.0 }.validate().is_err());
        assert!(LossWeights { lambda_c: -1.0, ..LossWeights::default() }.validate().is_err());
        assert!(LossWeights::default().validate().is_ok());
    }

    #[test]
    fn learning_rate_halves_per_period() {
        let sp = &TrainPlan::three_step(Schedule::default(), alloc::vec![DistortionSpec::identity()]).steps[0];
        assert_eq!(sp.lr_at(0), sp.lr);
        assert_eq!(sp.lr_at(199), sp.lr);
        assert_eq!(sp.lr_at(200), sp.lr / 2.0);
        assert_eq!(sp.lr_at(400), sp.lr / 4.0);
        let expect = libm::powf(10.0, -4.5);
        assert!((sp.lr - expect).abs() < 1e-12);
    }

    #[test]
    fn plan_shapes() {
        let p = TrainPlan::three_step(Schedule::default(), alloc::vec![DistortionSpec::identity()]);
        assert_eq!(p.steps.len(), 3);
        assert_eq!(p.steps[0].trainable, GroupSet::only(Group::Inn));
        assert!(!p.steps[0].enhance);
        assert!(!p.steps[1].trainable.contains(Group::Inn));
        assert_eq!(p.steps[2].trainable, GroupSet::ALL);
        let j = TrainPlan::joint(Schedule::default(), alloc::vec![DistortionSpec::identity()]);
        assert_eq!(j.steps.len(), 1);
        assert_eq!(j.steps[0].epochs, 150);
        let e = TrainPlan::enhancers_only(Schedule::default(), DistortionSpec::gaussian(10.0), "gauss10");
        assert_eq!(e.steps.len(), 1);
        assert_eq!(e.steps[0].step, 2);
    }

    #[test]
    fn attack_deck_is_uniform() {
        let picks = attack_schedule(4, 1000, 9);
        for a in 0..4 {
            let n = picks.iter().filter(|&&p| p == a).count();
            assert!((n as i64 - 250).abs() <= 25, "attack {a}: {n}");
        }
        assert_ne!(picks[..8], attack_schedule(4, 8, 10)[..]);
    }

    #[test]
    fn empty_or_single_image_dataset_rejected() {
        assert!(matches!(TrainData::new(Vec::new()), Err(Error::Data(_))));
        assert!(matches!(TrainData::new(alloc::vec![Tensor::zeros(Shape::new(1, 3, 8, 8))]), Err(Error::Data(_))));
    }

    #[test]
    fn steps_respect_the_freeze_contract() {
        let mut m = tiny_model(true);
        let data = tiny_data(4);
        let plan = tiny_plan([2, 2, 2]);
        let snapshot = |m: &PrisModel, g: Group| -> Vec<Tensor> {
            m.params().ids_in(GroupSet::only(g)).map(|id| m.params().value(id).clone()).collect()
        };
        let mut log = Vec::new();

        let enh0 = (snapshot(&m, Group::PreEnhance), snapshot(&m, Group::PostEnhance));
        let inn0 = snapshot(&m, Group::Inn);
        run_step(&mut m, &plan, 0, &data, &mut log).unwrap();
        assert_eq!((snapshot(&m, Group::PreEnhance), snapshot(&m, Group::PostEnhance)), enh0);
        assert_ne!(snapshot(&m, Group::Inn), inn0);

        let inn1 = snapshot(&m, Group::Inn);
        run_step(&mut m, &plan, 1, &data, &mut log).unwrap();
        assert_eq!(snapshot(&m, Group::Inn), inn1);
        assert_ne!(snapshot(&m, Group::PostEnhance), enh0.1);
        assert_eq!(m.step_reached, 2);
        assert_eq!(log.len(), 4);
        assert!(log.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_data(4);
        let plan = tiny_plan([2, 1, 1]);
        let run = || {
            let mut m = tiny_model(true);
            let mut log = Vec::new();
            train_full(&mut m, &plan, &data, &mut log, |_, _| Ok(())).unwrap();
            (m, log)
        };
        let (m1, l1) = run();
        let (m2, l2) = run();
        assert_eq!(l1, l2);
        assert_eq!(m1.params(), m2.params());
    }

    #[test]
    fn resume_from_step_one_reproduces_step_two() {
        let data = tiny_data(4);
        let plan = tiny_plan([2, 2, 0]);
        let mut full = tiny_model(true);
        let mut log_full = Vec::new();
        let mut after_one = None;
        train_full(&mut full, &plan, &data, &mut log_full, |m, s| {
            if s == 1 {
                after_one = Some(m.clone());
            }
            Ok(())
        })
        .unwrap();
        let mut resumed = after_one.unwrap();
        let mut log_resumed = Vec::new();
        run_step(&mut resumed, &plan, 1, &data, &mut log_resumed).unwrap();
        assert_eq!(resumed.params(), full.params());
        assert_eq!(&log_resumed[..], &log_full[2..4]);
    }

    #[test]
    fn enhancer_step_is_skipped_without_enhancers() {
        let mut m = tiny_model(false);
        let before = m.clone();
        let mut log = Vec::new();
        run_step(&mut m, &tiny_plan([1, 3, 1]), 1, &tiny_data(4), &mut log).unwrap();
        assert!(log.is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn nan_input_aborts_with_numeric_error() {
        let mut m = tiny_model(false);
        let mut imgs: Vec<Tensor> = tiny_data(2).images().to_vec();
        imgs[0].data_mut().fill(f32::NAN);
        let data = TrainData::new(imgs).unwrap();
        let err = run_step(&mut m, &tiny_plan([1, 0, 0]), 0, &data, &mut Vec::new()).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err:?}");
    }
}
