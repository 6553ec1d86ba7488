//! Adversarial variational warm-up of cold item embeddings.
//!
//! Two encoders map an item into a diagonal Gaussian latent: `E_I` from its
//! (trained) ID embedding and `E_P` from its side-information embeddings.
//! A shared decoder turns latents back into the embedding space. At serving
//! time a new item's embedding is `D(z_p)` with `z_p ~ E_P(side)`. A small
//! discriminator pushes generated embeddings toward the distribution of
//! real old-item embeddings.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbones::BackboneParams;
use crate::features::Batch;
use crate::ndcore::{Bags, Bound, Dense, Graph, Mlp, NoiseKey, ParamStore, Real, Tensor, Var};
use crate::{Error, Result};

pub const LATENT_DIM: usize = 16;
/// Added to the softplus of the raw scale head so that `sigma > 0`.
pub const STD_FLOOR: f64 = 1e-6;
/// Std the encoders emit at initialization.
pub const INITIAL_STD: f64 = 0.01;

fn inverse_softplus(y: f64) -> f64 {
    Float::ln(Float::exp_m1(y - STD_FLOOR))
}

/// Noise-stream tags, so that the different sampling sites never share a
/// stream for the same step.
pub mod tags {
    pub const ID_LATENT: u64 = 1;
    pub const PRIOR_LATENT: u64 = 2;
    pub const GENERATE: u64 = 3;
    pub const REAL_SAMPLE: u64 = 4;
}

/// Mean and standard deviation nodes of a diagonal Gaussian, each `[n, l]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GaussianVars {
    pub mean: Var,
    pub std: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Decode the latent mean.
    Mean,
    /// Decode `mu + sigma * eps` with `eps` drawn from the key.
    Sample(NoiseKey),
}

/// Encoders and decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct WarmupModel<T> {
    pub dim: usize,
    pub latent: usize,
    /// Width of the prior encoder input: side fields times `dim`.
    pub side_width: usize,
    pub store: ParamStore<T>,
    id_encoder: Mlp,
    prior_encoder: Mlp,
    decoder: Mlp,
}

fn eval<T: Real, R>(store: &ParamStore<T>, f: impl FnOnce(&mut Graph<T>, &Bound) -> Result<R>) -> Result<R> {
    let mut g = Graph::new();
    let bound = store.attach(&mut g, false);
    f(&mut g, &bound)
}

fn check_width(op: &'static str, want: usize, got: usize) -> Result<()> {
    if want == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            op,
            left: vec![want],
            right: vec![got],
        })
    }
}

impl<T: Real> WarmupModel<T> {
    pub fn new(dim: usize, side_fields: usize, hidden: usize, latent: usize, seed: u64) -> Result<Self> {
        if side_fields == 0 {
            return Err(Error::Schema("warm-up needs at least one item side field".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let side_width = side_fields * dim;
        let id_encoder = Mlp::new(&mut store, "warmup.id_encoder", &[dim, hidden, 2 * latent], false, &mut rng);
        let prior_encoder = Mlp::new(
            &mut store,
            "warmup.prior_encoder",
            &[side_width, hidden, 2 * latent],
            false,
            &mut rng,
        );
        let decoder = Mlp::new(&mut store, "warmup.decoder", &[latent, hidden, dim], false, &mut rng);
        // Start both Gaussians near-deterministic at the embedding scale:
        // with softplus(0) ≈ 0.69 the latent noise would swamp embeddings
        // whose entries are O(0.01..0.1) and the decoder learns to ignore z.
        let raw = T::lit(inverse_softplus(INITIAL_STD));
        for head in [id_encoder.layers[1], prior_encoder.layers[1]] {
            store.get_mut(head.bias).data_mut()[latent..].fill(raw);
        }
        Ok(Self {
            dim,
            latent,
            side_width,
            store,
            id_encoder,
            prior_encoder,
            decoder,
        })
    }

    pub fn for_backbone(backbone: &BackboneParams<T>, hidden: usize, latent: usize, seed: u64) -> Result<Self> {
        Self::new(backbone.dim, backbone.schema.side_fields().len(), hidden, latent, seed)
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        self.store.attach(g, trainable)
    }

    /// Names of the parameters belonging to each sub-network, for routing
    /// checks.
    pub fn id_encoder(&self) -> &Mlp {
        &self.id_encoder
    }

    pub fn prior_encoder(&self) -> &Mlp {
        &self.prior_encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    fn heads(&self, g: &mut Graph<T>, h: Var) -> Result<GaussianVars> {
        let l = self.latent;
        let mean = g.slice_cols(h, 0, l)?;
        let raw = g.slice_cols(h, l, 2 * l)?;
        let sp = g.softplus(raw);
        let std = g.add_scalar(sp, T::lit(STD_FLOOR));
        Ok(GaussianVars { mean, std })
    }

    pub fn encode_id_node(&self, g: &mut Graph<T>, bound: &Bound, v: Var) -> Result<GaussianVars> {
        check_width("encode_id", self.dim, g.value(v).cols())?;
        let h = self.id_encoder.forward(g, bound, v)?;
        self.heads(g, h)
    }

    pub fn encode_prior_node(&self, g: &mut Graph<T>, bound: &Bound, side: Var) -> Result<GaussianVars> {
        check_width("encode_prior", self.side_width, g.value(side).cols())?;
        let h = self.prior_encoder.forward(g, bound, side)?;
        self.heads(g, h)
    }

    pub fn decode_node(&self, g: &mut Graph<T>, bound: &Bound, z: Var) -> Result<Var> {
        check_width("decode", self.latent, g.value(z).cols())?;
        self.decoder.forward(g, bound, z)
    }

    /// `mu + sigma * eps`, or `mu` for [`Sampling::Mean`].
    pub fn sample_node(&self, g: &mut Graph<T>, dist: GaussianVars, sampling: Sampling) -> Result<Var> {
        match sampling {
            Sampling::Mean => Ok(dist.mean),
            Sampling::Sample(key) => {
                let (n, l) = {
                    let m = g.value(dist.mean);
                    (m.rows(), m.cols())
                };
                let eps = g.gaussian_noise(n, l, key);
                let s = g.mul(dist.std, eps)?;
                g.add(dist.mean, s)
            }
        }
    }

    pub fn encode_id(&self, v: &[T]) -> Result<DiagGaussian<T>> {
        eval(&self.store, |g, b| {
            let x = g.constant(row(v)?);
            let d = self.encode_id_node(g, b, x)?;
            Ok(to_dist(g, d))
        })
    }

    pub fn encode_prior(&self, side: &[T]) -> Result<DiagGaussian<T>> {
        eval(&self.store, |g, b| {
            let x = g.constant(row(side)?);
            let d = self.encode_prior_node(g, b, x)?;
            Ok(to_dist(g, d))
        })
    }

    pub fn decode(&self, z: &[T]) -> Result<Vec<T>> {
        eval(&self.store, |g, b| {
            let x = g.constant(row(z)?);
            let v = self.decode_node(g, b, x)?;
            Ok(g.value(v).data().to_vec())
        })
    }

    /// Warm-up embeddings `[n, d]` for a batch of side inputs `[n, s * d]`.
    pub fn generate(&self, side: &Tensor<T>, sampling: Sampling) -> Result<Tensor<T>> {
        eval(&self.store, |g, b| {
            let x = g.constant(side.clone());
            let d = self.encode_prior_node(g, b, x)?;
            let z = self.sample_node(g, d, sampling)?;
            let v = self.decode_node(g, b, z)?;
            Ok(g.value(v).clone())
        })
    }
}

/// `mu + sigma * eps`.
pub fn reparameterize<T: Real>(dist: &DiagGaussian<T>, eps: &[T]) -> Result<Vec<T>> {
    check_width("reparameterize", dist.mean.len(), eps.len())?;
    Ok(dist
        .mean
        .iter()
        .zip(&dist.std)
        .zip(eps)
        .map(|((&m, &s), &e)| m + s * e)
        .collect())
}

fn row<T: Real>(v: &[T]) -> Result<Tensor<T>> {
    Tensor::row_vector(v)
}

fn to_dist<T: Real>(g: &Graph<T>, d: GaussianVars) -> DiagGaussian<T> {
    DiagGaussian {
        mean: g.value(d.mean).data().to_vec(),
        std: g.value(d.std).data().to_vec(),
    }
}

/// Embedding discriminator: `d -> h ReLU -> h ReLU` feature trunk `f_G`,
/// then a sigmoid head.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    pub dim: usize,
    pub store: ParamStore<T>,
    trunk: Mlp,
    head: Dense,
}

impl<T: Real> Discriminator<T> {
    pub fn new(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let trunk = Mlp::new(&mut store, "disc.trunk", &[dim, hidden, hidden], true, &mut rng);
        let head = Dense::new(&mut store, "disc.head", hidden, 1, &mut rng);
        Self {
            dim,
            store,
            trunk,
            head,
        }
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        self.store.attach(g, trainable)
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }

    pub fn features_node(&self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Result<Var> {
        check_width("discriminator", self.dim, g.value(x).cols())?;
        self.trunk.forward(g, bound, x)
    }

    /// Probability that each row is a real embedding, `[n, 1]`.
    pub fn prob_node(&self, g: &mut Graph<T>, bound: &Bound, x: Var) -> Result<Var> {
        let f = self.features_node(g, bound, x)?;
        let logit = self.head.forward(g, bound, f)?;
        Ok(g.sigmoid(logit))
    }

    pub fn probability(&self, v: &[T]) -> Result<T> {
        eval(&self.store, |g, b| {
            let x = g.constant(row(v)?);
            let p = self.prob_node(g, b, x)?;
            Ok(g.value(p).item())
        })
    }

    pub fn features(&self, v: &[T]) -> Result<Vec<T>> {
        eval(&self.store, |g, b| {
            let x = g.constant(row(v)?);
            let f = self.features_node(g, b, x)?;
            Ok(g.value(f).data().to_vec())
        })
    }
}

fn batch_mean<T: Real>(g: &mut Graph<T>, total: Var, rows: usize) -> Var {
    g.scale(total, T::lit(1.0 / rows as f64))
}

/// `mean_i ||v_i - v_hat_i||^2`.
pub fn reconstruction_loss<T: Real>(g: &mut Graph<T>, v: Var, v_hat: Var) -> Result<Var> {
    let n = g.value(v).rows();
    let d = g.sub(v, v_hat)?;
    let s = g.sum_sq(d);
    Ok(batch_mean(g, s, n))
}

/// Squared 2-Wasserstein distance between diagonal Gaussians,
/// `||mu_a - mu_b||^2 + ||sigma_a - sigma_b||^2`, averaged over rows.
pub fn wasserstein_loss<T: Real>(g: &mut Graph<T>, a: GaussianVars, b: GaussianVars) -> Result<Var> {
    let n = g.value(a.mean).rows();
    let dm = g.sub(a.mean, b.mean)?;
    let ds = g.sub(a.std, b.std)?;
    let m = g.sum_sq(dm);
    let s = g.sum_sq(ds);
    let t = g.add(m, s)?;
    Ok(batch_mean(g, t, n))
}

/// `-E log G(real) - E log(1 - G(fake))`.
pub fn discriminator_loss<T: Real>(
    g: &mut Graph<T>,
    disc: &Discriminator<T>,
    bound: &Bound,
    real: Var,
    fake: Var,
) -> Result<Var> {
    let pr = disc.prob_node(g, bound, real)?;
    let pf = disc.prob_node(g, bound, fake)?;
    let ones = vec![T::one(); g.value(pr).rows()];
    let zeros = vec![T::zero(); g.value(pf).rows()];
    let lr = g.bce(pr, &ones)?;
    let lf = g.bce(pf, &zeros)?;
    g.add(lr, lf)
}

/// Group feature matching: `||mean f_G(real) - mean f_G(fake)||^2`.
pub fn group_feature_matching<T: Real>(
    g: &mut Graph<T>,
    disc: &Discriminator<T>,
    bound: &Bound,
    real: Var,
    fake: Var,
) -> Result<Var> {
    let fr = disc.features_node(g, bound, real)?;
    let ff = disc.features_node(g, bound, fake)?;
    let mr = g.mean_rows(fr);
    let mf = g.mean_rows(ff);
    let d = g.sub(mr, mf)?;
    Ok(g.sum_sq(d))
}

/// Pairwise feature matching: `mean_i ||f_G(real_i) - f_G(fake_i)||^2`.
pub fn pairwise_feature_matching<T: Real>(
    g: &mut Graph<T>,
    disc: &Discriminator<T>,
    bound: &Bound,
    real: Var,
    fake: Var,
) -> Result<Var> {
    let fr = disc.features_node(g, bound, real)?;
    let ff = disc.features_node(g, bound, fake)?;
    let n = g.value(fr).rows();
    let d = g.sub(fr, ff)?;
    let s = g.sum_sq(d);
    Ok(batch_mean(g, s, n))
}

/// Weights of the warm-up objective. A disabled term is equivalent to a
/// zero weight: it is neither computed nor reported.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
    pub xi_pair: f64,
    pub reconstruction: bool,
    pub wasserstein: bool,
    pub group_matching: bool,
    pub pair_matching: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            xi: 0.1,
            xi_pair: 0.1,
            reconstruction: true,
            wasserstein: true,
            group_matching: true,
            pair_matching: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("xi", self.xi),
            ("xi_pair", self.xi_pair),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!("loss weight {name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }

    /// Weights after applying the enable flags, in the order
    /// reconstruction, Wasserstein, group matching, pair matching.
    pub fn effective(&self) -> [f64; 4] {
        let on = |flag: bool, w: f64| if flag { w } else { 0.0 };
        [
            on(self.reconstruction, self.alpha),
            on(self.wasserstein, self.beta),
            on(self.group_matching, self.xi),
            on(self.pair_matching, self.xi_pair),
        ]
    }
}

/// Per-component values of one warm-up step; disabled terms read 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub ctr: f64,
    pub recon: f64,
    pub wd: f64,
    pub gd: f64,
    pub gd_pair: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const COMPONENTS: [&'static str; 5] = ["ctr", "recon", "wd", "gd", "gd_pair"];

    pub fn components(&self) -> [f64; 5] {
        [self.ctr, self.recon, self.wd, self.gd, self.gd_pair]
    }

    /// `ctr + sum_k w_k * term_k`.
    pub fn weighted_sum(&self, w: &LossWeights) -> f64 {
        let [a, b, x, xp] = w.effective();
        self.ctr + a * self.recon + b * self.wd + x * self.gd + xp * self.gd_pair
    }
}

/// Graph nodes of one warm-up objective.
#[derive(Clone, Copy, Debug)]
pub struct WarmupLoss {
    pub total: Var,
    pub ctr: Var,
    pub recon: Option<Var>,
    pub wd: Option<Var>,
    pub gd: Option<Var>,
    pub gd_pair: Option<Var>,
    /// Generated item embeddings `D(z_p)`, one row per example.
    pub fake: Var,
}

impl WarmupLoss {
    pub fn breakdown<T: Real>(&self, g: &Graph<T>) -> LossBreakdown {
        let v = |x: Option<Var>| x.map_or(0.0, |x| g.value(x).item().as_f64());
        LossBreakdown {
            ctr: g.value(self.ctr).item().as_f64(),
            recon: v(self.recon),
            wd: v(self.wd),
            gd: v(self.gd),
            gd_pair: v(self.gd_pair),
            total: g.value(self.total).item().as_f64(),
        }
    }
}

/// All models bound into one graph.
#[derive(Clone, Copy, Debug)]
pub struct Bindings<'a, T> {
    pub backbone: &'a BackboneParams<T>,
    pub backbone_vars: &'a Bound,
    pub warmup: &'a WarmupModel<T>,
    pub warmup_vars: &'a Bound,
    pub disc: &'a Discriminator<T>,
    pub disc_vars: &'a Bound,
}

/// Inputs of one generator step beyond the batch itself.
#[derive(Clone, Copy, Debug)]
pub struct StepInputs {
    /// Real embeddings `[n, d]` paired row-by-row with the batch.
    pub paired_real: Var,
    /// Real embeddings for the group statistics; any row count.
    pub group_real: Var,
    pub id_noise: NoiseKey,
    pub prior_noise: NoiseKey,
}

/// `L_CTR + alpha L_R + beta L_WD + xi L_GD + xi' L'_GD`.
///
/// `L_CTR` scores the batch with the item embedding replaced by the
/// generated `D(z_p)`. Whatever is bound as constant (normally the backbone
/// and the discriminator) receives no gradient.
pub fn warmup_loss<T: Real>(
    g: &mut Graph<T>,
    m: &Bindings<'_, T>,
    batch: &Batch,
    inputs: &StepInputs,
    weights: &LossWeights,
) -> Result<WarmupLoss> {
    weights.validate()?;
    let [w_r, w_wd, w_gd, w_pair] = weights.effective();
    let bb = m.backbone;
    let item_field = bb.schema.item_field();
    let v_id = g.gather_mean(m.backbone_vars.var(bb.embedding_index(item_field)), &batch.fields[item_field])?;
    let side = bb.batch_side_embeddings(g, m.backbone_vars, batch)?;

    let prior = m.warmup.encode_prior_node(g, m.warmup_vars, side)?;
    let z_p = m.warmup.sample_node(g, prior, Sampling::Sample(inputs.prior_noise))?;
    let fake = m.warmup.decode_node(g, m.warmup_vars, z_p)?;

    let ctr = bb.ctr_loss(g, m.backbone_vars, batch, Some(fake))?;
    let mut total = ctr;
    let mut term = |g: &mut Graph<T>, w: f64, v: Var| -> Result<()> {
        let s = g.scale(v, T::lit(w));
        total = g.add(total, s)?;
        Ok(())
    };

    let (mut recon, mut wd) = (None, None);
    if w_r > 0.0 || w_wd > 0.0 {
        let post = m.warmup.encode_id_node(g, m.warmup_vars, v_id)?;
        if w_r > 0.0 {
            let z = m.warmup.sample_node(g, post, Sampling::Sample(inputs.id_noise))?;
            let v_hat = m.warmup.decode_node(g, m.warmup_vars, z)?;
            let l = reconstruction_loss(g, v_id, v_hat)?;
            term(g, w_r, l)?;
            recon = Some(l);
        }
        if w_wd > 0.0 {
            let l = wasserstein_loss(g, post, prior)?;
            term(g, w_wd, l)?;
            wd = Some(l);
        }
    }
    let gd = if w_gd > 0.0 {
        let l = group_feature_matching(g, m.disc, m.disc_vars, inputs.group_real, fake)?;
        term(g, w_gd, l)?;
        Some(l)
    } else {
        None
    };
    let gd_pair = if w_pair > 0.0 {
        let l = pairwise_feature_matching(g, m.disc, m.disc_vars, inputs.paired_real, fake)?;
        term(g, w_pair, l)?;
        Some(l)
    } else {
        None
    };
    Ok(WarmupLoss {
        total,
        ctr,
        recon,
        wd,
        gd,
        gd_pair,
        fake,
    })
}

/// Side bags for `items` (item-ID vocabulary indices), one [`Bags`] per
/// side field, from a table built by [`crate::features::item_side_info`].
pub fn item_side_bags(info: &BTreeMap<u32, Vec<Vec<u32>>>, items: &[u32]) -> Result<Vec<Bags>> {
    let mut out: Vec<Bags> = Vec::new();
    for &item in items {
        let side = info
            .get(&item)
            .ok_or_else(|| Error::Invalid(format!("no side information for item index {item}")))?;
        if out.is_empty() {
            out = vec![Bags::new(); side.len()];
        }
        for (bags, values) in out.iter_mut().zip(side) {
            bags.push(values);
        }
    }
    Ok(out)
}

/// Side-input matrix `[n, s * d]` for `items`, read from the backbone
/// tables.
pub fn item_side_input<T: Real>(
    backbone: &BackboneParams<T>,
    info: &BTreeMap<u32, Vec<Vec<u32>>>,
    items: &[u32],
) -> Result<Tensor<T>> {
    let bags = item_side_bags(info, items)?;
    eval(&backbone.store, |g, b| {
        let v = backbone.side_embeddings(g, b, &bags)?;
        Ok(g.value(v).clone())
    })
}

/// Warm-up embeddings for `items`, one row each.
pub fn generate_warmup_embeddings<T: Real>(
    backbone: &BackboneParams<T>,
    warmup: &WarmupModel<T>,
    info: &BTreeMap<u32, Vec<Vec<u32>>>,
    items: &[u32],
    sampling: Sampling,
) -> Result<Tensor<T>> {
    if items.is_empty() {
        return Err(Error::Invalid("no items to generate embeddings for".into()));
    }
    let side = item_side_input(backbone, info, items)?;
    warmup.generate(&side, sampling)
}
