//! Embedding-based CTR scorers: FM, DeepFM and IPNN.
//!
//! Every schema field owns a `vocab x d` embedding table; multi-valued
//! fields are mean-pooled. FM and DeepFM also carry one scalar first-order
//! weight per feature value and a global bias. The deep parts are two ReLU
//! layers of 16 units followed by a single linear output unit.

use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::{Batch, Example, FeatureSchema};
use crate::ndcore::{normal_table, Bags, Bound, Graph, Mlp, ParamStore, Real, Tensor, Var, PROB_EPS};
use crate::{Error, Result};

pub const EMBEDDING_DIM: usize = 16;
pub const HIDDEN_UNITS: usize = 16;
/// Standard deviation of the embedding initialization.
pub const EMBEDDING_INIT_STD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackboneKind {
    Fm,
    DeepFm,
    Ipnn,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 3] = [BackboneKind::Fm, BackboneKind::DeepFm, BackboneKind::Ipnn];

    pub fn as_str(self) -> &'static str {
        match self {
            BackboneKind::Fm => "fm",
            BackboneKind::DeepFm => "deepfm",
            BackboneKind::Ipnn => "ipnn",
        }
    }

    fn has_fm_part(self) -> bool {
        matches!(self, BackboneKind::Fm | BackboneKind::DeepFm)
    }
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown backbone `{s}` (expected fm, deepfm or ipnn)")))
    }
}

impl core::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Output of a single prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction<T> {
    pub logit: T,
    /// Clamped sigmoid of the logit.
    pub y: T,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    embeddings: Vec<usize>,
    first_order: Vec<usize>,
    bias: Option<usize>,
    mlp: Option<Mlp>,
}

/// Trainable parameters of one backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneParams<T> {
    pub kind: BackboneKind,
    pub schema: FeatureSchema,
    pub dim: usize,
    pub store: ParamStore<T>,
    layout: Layout,
}

/// Number of field pairs, `m (m - 1) / 2`.
pub fn pair_count(fields: usize) -> usize {
    fields * fields.saturating_sub(1) / 2
}

impl<T: Real> BackboneParams<T> {
    pub fn new(kind: BackboneKind, schema: FeatureSchema, dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let embeddings = schema
            .fields()
            .iter()
            .map(|f| {
                let t = normal_table(f.vocab_size, dim, EMBEDDING_INIT_STD, &mut rng);
                store.push(format!("backbone.emb.{}", f.name), t)
            })
            .collect();
        let (first_order, bias) = if kind.has_fm_part() {
            let w = schema
                .fields()
                .iter()
                .map(|f| store.push(format!("backbone.linear.{}", f.name), Tensor::zeros(f.vocab_size, 1)))
                .collect();
            let b = store.push("backbone.bias", Tensor::zeros(1, 1));
            (w, Some(b))
        } else {
            (Vec::new(), None)
        };
        let m = schema.len();
        let mlp = match kind {
            BackboneKind::Fm => None,
            BackboneKind::DeepFm => Some(Mlp::new(
                &mut store,
                "backbone.deep",
                &[m * dim, hidden, hidden, 1],
                false,
                &mut rng,
            )),
            BackboneKind::Ipnn => Some(Mlp::new(
                &mut store,
                "backbone.deep",
                &[m * dim + pair_count(m), hidden, hidden, 1],
                false,
                &mut rng,
            )),
        };
        Self {
            kind,
            schema,
            dim,
            store,
            layout: Layout {
                embeddings,
                first_order,
                bias,
                mlp,
            },
        }
    }

    /// Store index of the embedding table of `field`.
    pub fn embedding_index(&self, field: usize) -> usize {
        self.layout.embeddings[field]
    }

    pub fn item_table_index(&self) -> usize {
        self.layout.embeddings[self.schema.item_field()]
    }

    pub fn item_table(&self) -> &Tensor<T> {
        self.store.get(self.item_table_index())
    }

    pub fn item_row(&self, item_index: u32) -> &[T] {
        self.item_table().row(item_index as usize)
    }

    pub fn set_item_row(&mut self, item_index: u32, row: &[T]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::ShapeMismatch {
                op: "set_item_row",
                left: alloc::vec![self.dim],
                right: alloc::vec![row.len()],
            });
        }
        let ix = self.item_table_index();
        self.store.get_mut(ix).row_mut(item_index as usize).copy_from_slice(row);
        Ok(())
    }

    pub fn mlp(&self) -> Option<&Mlp> {
        self.layout.mlp.as_ref()
    }

    pub fn first_order_index(&self, field: usize) -> Option<usize> {
        self.layout.first_order.get(field).copied()
    }

    pub fn bias_index(&self) -> Option<usize> {
        self.layout.bias
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        self.store.attach(g, trainable)
    }

    /// One `[n, d]` embedding per field.
    pub fn field_embeddings(&self, g: &mut Graph<T>, bound: &Bound, fields: &[Bags]) -> Result<Vec<Var>> {
        self.check_fields(fields)?;
        self.layout
            .embeddings
            .iter()
            .zip(fields)
            .map(|(&t, bags)| g.gather_mean(bound.var(t), bags))
            .collect()
    }

    /// Concatenated side-information embeddings, `[n, s * d]`. `side_bags`
    /// follows the order of [`FeatureSchema::side_fields`].
    pub fn side_embeddings(&self, g: &mut Graph<T>, bound: &Bound, side_bags: &[Bags]) -> Result<Var> {
        let side = self.schema.side_fields();
        if side.len() != side_bags.len() {
            return Err(Error::Invalid(format!(
                "expected {} side fields, got {}",
                side.len(),
                side_bags.len()
            )));
        }
        let parts = side
            .iter()
            .zip(side_bags)
            .map(|(&f, bags)| g.gather_mean(bound.var(self.layout.embeddings[f]), bags))
            .collect::<Result<Vec<_>>>()?;
        g.concat(&parts)
    }

    pub fn batch_side_embeddings(&self, g: &mut Graph<T>, bound: &Bound, batch: &Batch) -> Result<Var> {
        let bags: Vec<Bags> = self
            .schema
            .side_fields()
            .into_iter()
            .map(|f| batch.fields[f].clone())
            .collect();
        self.side_embeddings(g, bound, &bags)
    }

    fn check_fields(&self, fields: &[Bags]) -> Result<()> {
        if fields.len() != self.schema.len() {
            return Err(Error::Invalid(format!(
                "batch has {} fields, schema has {}",
                fields.len(),
                self.schema.len()
            )));
        }
        for (f, bags) in self.schema.fields().iter().zip(fields) {
            for bag in bags.iter() {
                if let Some(&bad) = bag.iter().find(|&&ix| ix as usize >= f.vocab_size) {
                    return Err(Error::IndexOutOfRange {
                        field: f.name.clone(),
                        index: bad,
                        vocab: f.vocab_size,
                    });
                }
            }
        }
        Ok(())
    }

    /// Logits `[n, 1]` from precomputed field embeddings. The first-order
    /// terms still read the raw field indices.
    pub fn score(&self, g: &mut Graph<T>, bound: &Bound, fields: &[Bags], embeds: &[Var]) -> Result<Var> {
        let pairs = pairwise_inner_products(g, embeds)?;
        let mut logit: Option<Var> = None;

        if self.kind.has_fm_part() {
            let mut linear = Vec::with_capacity(fields.len());
            for (&w, bags) in self.layout.first_order.iter().zip(fields) {
                linear.push(g.gather_mean(bound.var(w), bags)?);
            }
            let linear = g.concat(&linear)?;
            let mut fm = g.sum_rows(linear);
            if let Some(p) = pairs {
                let s = g.sum_rows(p);
                fm = g.add(fm, s)?;
            }
            let b = self.layout.bias.expect("fm part has a bias");
            fm = g.add(fm, bound.var(b))?;
            logit = Some(fm);
        }

        if let Some(mlp) = &self.layout.mlp {
            let mut parts = embeds.to_vec();
            if self.kind == BackboneKind::Ipnn {
                if let Some(p) = pairs {
                    parts.push(p);
                }
            }
            let x = g.concat(&parts)?;
            let deep = mlp.forward(g, bound, x)?;
            logit = Some(match logit {
                Some(l) => g.add(l, deep)?,
                None => deep,
            });
        }
        Ok(logit.expect("every backbone has an fm or deep part"))
    }

    /// Logits for a batch; `id_override` (`[n, d]`) replaces the item-ID
    /// field embedding.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        fields: &[Bags],
        id_override: Option<Var>,
    ) -> Result<Var> {
        let mut embeds = self.field_embeddings(g, bound, fields)?;
        if let Some(v) = id_override {
            let e = &mut embeds[self.schema.item_field()];
            let (want, got) = (g.value(*e), g.value(v));
            if want.rows() != got.rows() || want.cols() != got.cols() {
                return Err(Error::ShapeMismatch {
                    op: "id_override",
                    left: alloc::vec![want.rows(), want.cols()],
                    right: alloc::vec![got.rows(), got.cols()],
                });
            }
            *e = v;
        }
        self.score(g, bound, fields, &embeds)
    }

    /// Mean BCE of the clamped sigmoid of [`Self::forward`] against the
    /// batch labels.
    pub fn ctr_loss(&self, g: &mut Graph<T>, bound: &Bound, batch: &Batch, id_override: Option<Var>) -> Result<Var> {
        let logits = self.forward(g, bound, &batch.fields, id_override)?;
        let y = g.sigmoid(logits);
        let labels: Vec<T> = batch.labels.iter().map(|&l| T::lit(l as f64)).collect();
        g.bce(y, &labels)
    }

    /// Per-field embedding vectors of one example.
    pub fn embed(&self, example: &Example) -> Result<Vec<Vec<T>>> {
        example.validate(&self.schema)?;
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let batch = Batch::from_examples(self.schema.len(), [example]);
        let embeds = self.field_embeddings(&mut g, &bound, &batch.fields)?;
        Ok(embeds.iter().map(|&v| g.value(v).data().to_vec()).collect())
    }

    /// Prediction for one example, optionally with the item-ID embedding
    /// substituted by `id_override`.
    pub fn predict_ctr(&self, example: &Example, id_override: Option<&[T]>) -> Result<Prediction<T>> {
        if let Some(v) = id_override {
            if v.len() != self.dim {
                return Err(Error::ShapeMismatch {
                    op: "id_override",
                    left: alloc::vec![self.dim],
                    right: alloc::vec![v.len()],
                });
            }
        }
        example.validate(&self.schema)?;
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let batch = Batch::from_examples(self.schema.len(), [example]);
        let ov = id_override.map(|v| g.constant(Tensor::row_vector(v).expect("non-empty")));
        let logit = self.forward(&mut g, &bound, &batch.fields, ov)?;
        let logit = g.value(logit).item();
        Ok(Prediction {
            logit,
            y: clamp_prob(crate::ndcore::sigmoid(logit)),
        })
    }

    /// Clamped probabilities for every example, scored in chunks of
    /// `batch_size`.
    pub fn predict_examples(&self, examples: &[Example], batch_size: usize) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(batch_size.max(1)) {
            let mut g = Graph::new();
            let bound = self.bind(&mut g, false);
            let batch = Batch::from_examples(self.schema.len(), chunk);
            let logits = self.forward(&mut g, &bound, &batch.fields, None)?;
            out.extend(
                g.value(logits)
                    .data()
                    .iter()
                    .map(|&l| clamp_prob(crate::ndcore::sigmoid(l))),
            );
        }
        Ok(out)
    }
}

pub fn clamp_prob<T: Real>(p: T) -> T {
    let eps = T::lit(PROB_EPS);
    p.max(eps).min(T::one() - eps)
}

/// `[n, m (m - 1) / 2]` matrix of `<e_i, e_j>` for `i < j`, or `None` for
/// fewer than two fields.
pub fn pairwise_inner_products<T: Real>(g: &mut Graph<T>, embeds: &[Var]) -> Result<Option<Var>> {
    let m = embeds.len();
    if m < 2 {
        return Ok(None);
    }
    let mut cols = Vec::with_capacity(pair_count(m));
    for i in 0..m {
        for j in i + 1..m {
            let p = g.mul(embeds[i], embeds[j])?;
            cols.push(g.sum_rows(p));
        }
    }
    Ok(Some(g.concat(&cols)?))
}
