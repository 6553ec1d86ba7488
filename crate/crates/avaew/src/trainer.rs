//! Training pipeline: pretrain the backbone on old items, train the warm-up
//! generator against a frozen backbone, then feed warm-a/b/c in order and
//! evaluate on the test partition after each phase.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{debug, info};
use rand::{Rng, RngCore};

use avaew_core::avaew::{
    discriminator_loss, generate_warmup_embeddings, tags, warmup_loss, Bindings, Discriminator, LossBreakdown,
    LossWeights, Sampling, StepInputs, WarmupModel,
};
use avaew_core::backbones::{BackboneKind, BackboneParams};
use avaew_core::features::{batches, item_side_info, Batch, Example, Phase, PhaseDataset};
use avaew_core::metrics::eval_auc;
use avaew_core::ndcore::{AdamConfig, AdamState, Graph, NoiseKey, Tensor};

use crate::config::{ExperimentConfig, Regenerate, SamplingMode};
use crate::{Error, Result};

/// Seed-stream tags for batch shuffling, disjoint from the noise tags.
mod stage {
    pub const PRETRAIN: u64 = 100;
    pub const WARMUP: u64 = 101;
    pub const PHASE: u64 = 110;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Base,
    Avaew,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Base, Method::Avaew];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Avaew => "avaew",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// Partition an example slice came from. Training refuses `Test`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    Old,
    Warm(Phase),
    Test,
}

fn ensure_trainable(part: Partition) -> Result<()> {
    if part == Partition::Test {
        Err(Error::Data("refusing to train on the test partition".into()))
    } else {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseReport {
    pub method: Method,
    pub phase: Phase,
    pub auc: f64,
    /// Mean loss components over the phase's training steps.
    pub losses: LossBreakdown,
    pub seconds: f64,
}

/// One warm-up training iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub losses: LossBreakdown,
    pub disc_loss: f64,
    /// Accuracy of the discriminator on the step's real and fake rows.
    pub disc_accuracy: f64,
}

/// Item bookkeeping shared by all stages (item-ID vocabulary indices).
#[derive(Clone, Debug)]
pub struct ItemIndex {
    pub old: Vec<u32>,
    pub new: Vec<u32>,
    pub is_old: Vec<bool>,
    pub side: BTreeMap<u32, Vec<Vec<u32>>>,
    /// Vocabulary index → item id as it appears in the raw files.
    pub raw: BTreeMap<u32, u32>,
}

impl ItemIndex {
    pub fn new(data: &PhaseDataset) -> Self {
        let f = data.schema.item_field();
        let vocab = data.schema.field(f).vocab_size;
        let collect = |parts: &[&[Example]]| {
            let mut v: Vec<u32> = parts.iter().flat_map(|p| p.iter().map(|e| e.field(f)[0])).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let old = collect(&[&data.old]);
        let new = collect(&[&data.warm_a, &data.warm_b, &data.warm_c]);
        let mut is_old = vec![false; vocab];
        for &i in &old {
            is_old[i as usize] = true;
        }
        // side information is item metadata; labels never enter here
        let mut side = item_side_info(&data.schema, &data.old);
        for part in [&data.warm_a, &data.warm_b, &data.warm_c] {
            for (k, v) in item_side_info(&data.schema, part) {
                side.entry(k).or_insert(v);
            }
        }
        let raw = [&data.old, &data.warm_a, &data.warm_b, &data.warm_c, &data.test]
            .into_iter()
            .flat_map(|p| p.iter().map(|e| (e.field(f)[0], e.item_id)))
            .collect();
        Self {
            old,
            new,
            is_old,
            side,
            raw,
        }
    }
}

fn epoch_seed(seed: u64, stage: u64, epoch: u64) -> u64 {
    NoiseKey::new(seed, stage, epoch).rng().next_u64()
}

fn adam(cfg: &ExperimentConfig) -> AdamConfig {
    AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    }
}

fn check_finite(b: &LossBreakdown, step: u64) -> Result<()> {
    for (name, v) in LossBreakdown::COMPONENTS.iter().zip(b.components()) {
        if !v.is_finite() {
            return Err(avaew_core::Error::NonFiniteLoss { component: name, step }.into());
        }
    }
    if !b.total.is_finite() {
        return Err(avaew_core::Error::NonFiniteLoss {
            component: "total",
            step,
        }
        .into());
    }
    Ok(())
}

fn finite_scalar(v: f32, component: &'static str, step: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(f64::from(v))
    } else {
        Err(avaew_core::Error::NonFiniteLoss { component, step }.into())
    }
}

/// Rows `indices` of `table`.
pub fn gather_rows(table: &Tensor<f32>, indices: &[u32]) -> Tensor<f32> {
    let cols = table.cols();
    let mut data = Vec::with_capacity(indices.len() * cols);
    for &i in indices {
        data.extend_from_slice(table.row(i as usize));
    }
    Tensor::matrix(indices.len(), cols, data).expect("non-empty gather")
}

fn sample_old(items: &ItemIndex, n: usize, key: NoiseKey) -> Vec<u32> {
    let mut rng = key.rng();
    (0..n).map(|_| items.old[rng.random_range(0..items.old.len())]).collect()
}

/// Stateful driver for one experiment: owns the global step counter that
/// keys every noise draw.
pub struct Trainer<'a> {
    pub cfg: &'a ExperimentConfig,
    pub data: &'a PhaseDataset,
    pub items: ItemIndex,
    step: u64,
}

pub struct WarmupResult {
    pub warmup: WarmupModel<f32>,
    pub disc: Discriminator<f32>,
    pub trace: Vec<StepLog>,
}

#[derive(Clone, Copy, Debug, Default)]
struct Mean {
    sum: LossBreakdown,
    n: usize,
}

impl Mean {
    fn add(&mut self, b: &LossBreakdown) {
        let s = &mut self.sum;
        s.ctr += b.ctr;
        s.recon += b.recon;
        s.wd += b.wd;
        s.gd += b.gd;
        s.gd_pair += b.gd_pair;
        s.total += b.total;
        self.n += 1;
    }

    fn get(&self) -> LossBreakdown {
        if self.n == 0 {
            return LossBreakdown::default();
        }
        let k = self.n as f64;
        let s = &self.sum;
        LossBreakdown {
            ctr: s.ctr / k,
            recon: s.recon / k,
            wd: s.wd / k,
            gd: s.gd / k,
            gd_pair: s.gd_pair / k,
            total: s.total / k,
        }
    }
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a ExperimentConfig, data: &'a PhaseDataset) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            data,
            items: ItemIndex::new(data),
            step: 0,
        })
    }

    fn next_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }

    fn key(&self, tag: u64, step: u64) -> NoiseKey {
        NoiseKey::new(self.cfg.seed, tag, step)
    }

    pub fn new_backbone(&self, kind: BackboneKind) -> BackboneParams<f32> {
        BackboneParams::new(
            kind,
            self.data.schema.clone(),
            self.cfg.embedding_dim,
            self.cfg.hidden_units,
            self.cfg.seed,
        )
    }

    /// One pass of BCE training over `examples` per epoch; returns the mean
    /// loss of each epoch.
    fn fit_backbone(
        &mut self,
        bb: &mut BackboneParams<f32>,
        opt: &mut AdamState<f32>,
        part: Partition,
        examples: &[Example],
        epochs: usize,
        stage: u64,
    ) -> Result<Vec<f64>> {
        ensure_trainable(part)?;
        let nf = self.data.schema.len();
        let mut out = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let mut total = 0.0;
            let mut count = 0usize;
            for idx in batches(examples.len(), self.cfg.batch_size, epoch_seed(self.cfg.seed, stage, epoch as u64), true) {
                let batch = Batch::select(nf, examples, &idx);
                let step = self.next_step();
                let loss = self.backbone_step(bb, opt, &batch, step)?;
                total += loss * batch.len() as f64;
                count += batch.len();
            }
            out.push(if count == 0 { 0.0 } else { total / count as f64 });
        }
        Ok(out)
    }

    fn backbone_step(
        &mut self,
        bb: &mut BackboneParams<f32>,
        opt: &mut AdamState<f32>,
        batch: &Batch,
        step: u64,
    ) -> Result<f64> {
        let mut g = Graph::new();
        let bound = bb.bind(&mut g, true);
        let loss = bb.ctr_loss(&mut g, &bound, batch, None)?;
        let value = finite_scalar(g.value(loss).item(), "ctr", step)?;
        let grads = g.backward(loss)?;
        let pg = bb.store.gradients(&bound, &grads);
        opt.step(&mut bb.store, &pg)?;
        Ok(value)
    }

    /// Trains a fresh backbone on the old-item partition.
    pub fn pretrain_backbone(&mut self, kind: BackboneKind) -> Result<(BackboneParams<f32>, Vec<f64>)> {
        if self.data.old.is_empty() {
            return Err(Error::Data("old-item partition is empty; nothing to pretrain on".into()));
        }
        let mut bb = self.new_backbone(kind);
        let mut opt = AdamState::new(adam(self.cfg), &bb.store);
        let data = self.data;
        let losses = self.fit_backbone(
            &mut bb,
            &mut opt,
            Partition::Old,
            &data.old,
            self.cfg.pretrain_epochs,
            stage::PRETRAIN,
        )?;
        for (e, l) in losses.iter().enumerate() {
            info!("pretrain {kind} epoch {}: bce {l:.5}", e + 1);
        }
        Ok((bb, losses))
    }

    /// Real rows paired with each batch example: the example's own item when
    /// it is old, otherwise a uniformly sampled old item.
    fn paired_items(&self, batch: &Batch, key: NoiseKey) -> Vec<u32> {
        let f = self.data.schema.item_field();
        let mut rng = key.rng();
        batch.fields[f]
            .iter()
            .map(|b| {
                let i = b[0];
                if self.items.is_old[i as usize] {
                    i
                } else {
                    self.items.old[rng.random_range(0..self.items.old.len())]
                }
            })
            .collect()
    }

    fn generator_step(
        &mut self,
        bb: &BackboneParams<f32>,
        wm: &mut WarmupModel<f32>,
        disc: &Discriminator<f32>,
        opt: &mut AdamState<f32>,
        batch: &Batch,
        weights: &LossWeights,
    ) -> Result<(LossBreakdown, u64)> {
        let step = self.next_step();
        let table = bb.item_table();
        let paired = gather_rows(table, &self.paired_items(batch, self.key(tags::REAL_SAMPLE, 2 * step)));
        let group = gather_rows(table, &sample_old(&self.items, batch.len(), self.key(tags::REAL_SAMPLE, 2 * step + 1)));

        let mut g = Graph::new();
        let bv = bb.bind(&mut g, false);
        let wv = wm.bind(&mut g, true);
        let dv = disc.bind(&mut g, false);
        let inputs = StepInputs {
            paired_real: g.constant(paired),
            group_real: g.constant(group),
            id_noise: self.key(tags::ID_LATENT, step),
            prior_noise: self.key(tags::PRIOR_LATENT, step),
        };
        let m = Bindings {
            backbone: bb,
            backbone_vars: &bv,
            warmup: wm,
            warmup_vars: &wv,
            disc,
            disc_vars: &dv,
        };
        let loss = warmup_loss(&mut g, &m, batch, &inputs, weights)?;
        let b = loss.breakdown(&g);
        check_finite(&b, step)?;
        let grads = g.backward(loss.total)?;
        let pg = wm.store.gradients(&wv, &grads);
        opt.step(&mut wm.store, &pg)?;
        Ok((b, step))
    }

    fn discriminator_step(
        &mut self,
        bb: &BackboneParams<f32>,
        wm: &WarmupModel<f32>,
        disc: &mut Discriminator<f32>,
        opt: &mut AdamState<f32>,
        batch: &Batch,
    ) -> Result<(f64, f64)> {
        let step = self.next_step();
        let side = {
            let mut g = Graph::new();
            let bv = bb.bind(&mut g, false);
            let s = bb.batch_side_embeddings(&mut g, &bv, batch)?;
            g.value(s).clone()
        };
        // generated rows enter as constants: no gradient reaches the generator
        let fake = wm.generate(&side, Sampling::Sample(self.key(tags::GENERATE, step)))?;
        let real = gather_rows(bb.item_table(), &sample_old(&self.items, batch.len(), self.key(tags::REAL_SAMPLE, 2 * step)));

        let mut g = Graph::new();
        let dv = disc.bind(&mut g, true);
        let real = g.constant(real);
        let fake = g.constant(fake);
        let loss = discriminator_loss(&mut g, disc, &dv, real, fake)?;
        let value = finite_scalar(g.value(loss).item(), "disc", step)?;

        let pr = disc.prob_node(&mut g, &dv, real)?;
        let pf = disc.prob_node(&mut g, &dv, fake)?;
        let correct = g.value(pr).data().iter().filter(|&&p| p > 0.5).count()
            + g.value(pf).data().iter().filter(|&&p| p < 0.5).count();
        let acc = correct as f64 / (2 * batch.len()) as f64;

        let grads = g.backward(loss)?;
        let pg = disc.store.gradients(&dv, &grads);
        opt.step(&mut disc.store, &pg)?;
        Ok((value, acc))
    }

    /// Alternating generator / discriminator training on old-item data with
    /// the backbone frozen.
    pub fn train_warmup(&mut self, bb: &BackboneParams<f32>) -> Result<WarmupResult> {
        self.train_warmup_with(bb, &self.cfg.weights.clone())
    }

    pub fn train_warmup_with(&mut self, bb: &BackboneParams<f32>, weights: &LossWeights) -> Result<WarmupResult> {
        if self.items.old.is_empty() {
            return Err(Error::Data("no old items to learn the embedding distribution from".into()));
        }
        let cfg = self.cfg;
        let mut wm = WarmupModel::for_backbone(bb, cfg.hidden_units, cfg.latent_dim, cfg.seed.wrapping_add(1))?;
        let mut disc = Discriminator::new(bb.dim, cfg.hidden_units, cfg.seed.wrapping_add(2));
        let mut opt_g = AdamState::new(adam(cfg), &wm.store);
        let mut opt_d = AdamState::new(adam(cfg), &disc.store);
        let nf = self.data.schema.len();
        let data = self.data;
        let mut trace = Vec::new();
        for epoch in 0..cfg.warmup_epochs {
            let seed = epoch_seed(cfg.seed, stage::WARMUP, epoch as u64);
            for idx in batches(data.old.len(), cfg.batch_size, seed, true) {
                let batch = Batch::select(nf, &data.old, &idx);
                let (losses, step) = self.generator_step(bb, &mut wm, &disc, &mut opt_g, &batch, weights)?;
                let (mut dl, mut da) = (0.0, 0.0);
                for _ in 0..cfg.disc_steps {
                    (dl, da) = self.discriminator_step(bb, &wm, &mut disc, &mut opt_d, &batch)?;
                }
                debug!(
                    "warmup step {step}: ctr {:.4} recon {:.4} wd {:.4} gd {:.4} gd' {:.4} disc {dl:.4} acc {da:.3}",
                    losses.ctr, losses.recon, losses.wd, losses.gd, losses.gd_pair
                );
                trace.push(StepLog {
                    step,
                    losses,
                    disc_loss: dl,
                    disc_accuracy: da,
                });
            }
            if let Some(last) = trace.last() {
                info!(
                    "warm-up epoch {}: total {:.5} (ctr {:.5}), disc acc {:.3}",
                    epoch + 1,
                    last.losses.total,
                    last.losses.ctr,
                    last.disc_accuracy
                );
            }
        }
        Ok(WarmupResult { warmup: wm, disc, trace })
    }

    pub fn evaluate(&self, bb: &BackboneParams<f32>) -> Result<f64> {
        let preds = bb.predict_examples(&self.data.test, self.cfg.eval_batch_size)?;
        let labels: Vec<u8> = self.data.test.iter().map(|e| e.label).collect();
        Ok(eval_auc(&preds, &labels)?)
    }

    /// Writes warm-up embeddings for every new item into the item table.
    pub fn install_warmup(&mut self, bb: &mut BackboneParams<f32>, wm: &WarmupModel<f32>) -> Result<()> {
        if self.items.new.is_empty() {
            return Ok(());
        }
        let sampling = match self.cfg.sampling {
            SamplingMode::Mean => Sampling::Mean,
            SamplingMode::Sample => {
                let step = self.next_step();
                Sampling::Sample(self.key(tags::GENERATE, step))
            }
        };
        let rows = generate_warmup_embeddings(bb, wm, &self.items.side, &self.items.new, sampling)?;
        for (r, &item) in self.items.new.iter().enumerate() {
            bb.set_item_row(item, rows.row(r))?;
        }
        Ok(())
    }

    /// Feeds warm-a, warm-b and warm-c in order, evaluating on the test
    /// partition after each. `warm` must be given for [`Method::Avaew`].
    pub fn run_warm_phases(
        &mut self,
        method: Method,
        pretrained: &BackboneParams<f32>,
        warm: Option<&WarmupResult>,
    ) -> Result<Vec<PhaseReport>> {
        let cfg = self.cfg;
        let mut bb = pretrained.clone();
        let mut opt = AdamState::new(adam(cfg), &bb.store);
        let mut gen = match (method, warm) {
            (Method::Avaew, Some(w)) => {
                let (wm, disc) = (w.warmup.clone(), w.disc.clone());
                let (og, od) = (AdamState::new(adam(cfg), &wm.store), AdamState::new(adam(cfg), &disc.store));
                Some((wm, disc, og, od))
            }
            (Method::Avaew, None) => return Err(Error::Data("avaew method needs a trained warm-up module".into())),
            (Method::Base, _) => None,
        };
        let mut cursor = PhaseCursor::default();
        let nf = self.data.schema.len();
        let data = self.data;
        let mut reports = Vec::with_capacity(3);
        for phase in Phase::ALL {
            cursor.advance(phase)?;
            let t0 = Instant::now();
            if let Some((wm, ..)) = &gen {
                if phase == Phase::WarmA || cfg.regenerate == Regenerate::Every {
                    self.install_warmup(&mut bb, wm)?;
                }
            }
            let part = Partition::Warm(phase);
            ensure_trainable(part)?;
            let examples = data.phase(phase);
            let mut mean = Mean::default();
            let stage = stage::PHASE + phase as u64;
            for epoch in 0..cfg.phase_epochs {
                let seed = epoch_seed(cfg.seed, stage, epoch as u64);
                for idx in batches(examples.len(), cfg.batch_size, seed, true) {
                    let batch = Batch::select(nf, examples, &idx);
                    let step = self.next_step();
                    let ctr = self.backbone_step(&mut bb, &mut opt, &batch, step)?;
                    let mut b = LossBreakdown {
                        ctr,
                        total: ctr,
                        ..LossBreakdown::default()
                    };
                    if let Some((wm, disc, og, od)) = &mut gen {
                        if cfg.finetune_generator {
                            let (gl, _) = self.generator_step(&bb, wm, disc, og, &batch, &cfg.weights)?;
                            b = LossBreakdown { ctr, ..gl };
                            b.total = b.weighted_sum(&cfg.weights);
                        }
                        if cfg.finetune_discriminator {
                            for _ in 0..cfg.disc_steps {
                                self.discriminator_step(&bb, wm, disc, od, &batch)?;
                            }
                        }
                    }
                    mean.add(&b);
                }
            }
            let auc = self.evaluate(&bb)?;
            let seconds = t0.elapsed().as_secs_f64();
            info!("{} {} {}: auc {auc:.4}", bb.kind, method.as_str(), phase.as_str());
            reports.push(PhaseReport {
                method,
                phase,
                auc,
                losses: mean.get(),
                seconds,
            });
        }
        Ok(reports)
    }
}

/// Enforces warm-a → warm-b → warm-c.
#[derive(Clone, Copy, Debug, Default)]
pub struct PhaseCursor {
    next: usize,
}

impl PhaseCursor {
    pub fn advance(&mut self, phase: Phase) -> Result<()> {
        let want = Phase::ALL.get(self.next).copied();
        if want != Some(phase) {
            return Err(Error::Data(format!(
                "phase {} applied out of order (expected {})",
                phase.as_str(),
                want.map_or("none", Phase::as_str)
            )));
        }
        self.next += 1;
        Ok(())
    }
}

/// Everything a `train` invocation produces.
pub struct TrainOutput {
    pub pretrained: BackboneParams<f32>,
    pub pretrain_losses: Vec<f64>,
    pub warm: Option<WarmupResult>,
    pub reports: Vec<PhaseReport>,
}

/// Pretrain → (warm-up training) → warm phases for each requested method.
pub fn run_training(cfg: &ExperimentConfig, data: &PhaseDataset, methods: &[Method]) -> Result<TrainOutput> {
    let mut t = Trainer::new(cfg, data)?;
    let (pretrained, pretrain_losses) = t.pretrain_backbone(cfg.backbone)?;
    let warm = if methods.contains(&Method::Avaew) {
        Some(t.train_warmup(&pretrained)?)
    } else {
        None
    };
    let mut reports = Vec::new();
    for &m in methods {
        reports.extend(t.run_warm_phases(m, &pretrained, warm.as_ref())?);
    }
    Ok(TrainOutput {
        pretrained,
        pretrain_losses,
        warm,
        reports,
    })
}

/// The four single-term ablations.
pub const ABLATIONS: [&str; 4] = ["recon", "wd", "gd", "gd_pair"];

pub fn ablated(weights: &LossWeights, term: &str) -> LossWeights {
    let mut w = *weights;
    match term {
        "recon" => w.reconstruction = false,
        "wd" => w.wasserstein = false,
        "gd" => w.group_matching = false,
        "gd_pair" => w.pair_matching = false,
        _ => unreachable!("unknown ablation term {term}"),
    }
    w
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub backbone: BackboneKind,
    /// Disabled term.
    pub term: &'static str,
    pub full_auc: f64,
    pub ablated_auc: f64,
}

impl AblationRow {
    /// `(c - b) / b` on warm-c.
    pub fn delta(&self) -> f64 {
        (self.ablated_auc - self.full_auc) / self.full_auc
    }
}

/// Full AVAEW versus each single-term ablation, warm-c AUC, for every
/// configured ablation backbone.
pub fn run_ablation(cfg: &ExperimentConfig, data: &PhaseDataset) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &kind in &cfg.ablation_backbones {
        let warm_c = |weights: &LossWeights| -> Result<f64> {
            let mut c = cfg.clone();
            c.backbone = kind;
            c.weights = *weights;
            let mut t = Trainer::new(&c, data)?;
            let (bb, _) = t.pretrain_backbone(kind)?;
            let w = t.train_warmup(&bb)?;
            let r = t.run_warm_phases(Method::Avaew, &bb, Some(&w))?;
            Ok(r.last().expect("three phases").auc)
        };
        let full = warm_c(&cfg.weights)?;
        for term in ABLATIONS {
            let auc = warm_c(&ablated(&cfg.weights, term))?;
            let row = AblationRow {
                backbone: kind,
                term,
                full_auc: full,
                ablated_auc: auc,
            };
            info!("ablation {kind} w/o {term}: {:+.2}%", 100.0 * row.delta());
            rows.push(row);
        }
    }
    Ok(rows)
}
