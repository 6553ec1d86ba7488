//! Feature schema, interaction examples, and the old/new plus
//! warm-a/b/c/test partition used to simulate items warming up.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::ndcore::Bags;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldKind {
    ItemId,
    ItemSide,
    User,
    Context,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::ItemId => "item_id",
            FieldKind::ItemSide => "item_side",
            FieldKind::User => "user",
            FieldKind::Context => "context",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "item_id" => FieldKind::ItemId,
            "item_side" => FieldKind::ItemSide,
            "user" => FieldKind::User,
            "context" => FieldKind::Context,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureField {
    pub name: String,
    pub kind: FieldKind,
    pub vocab_size: usize,
    pub multi_valued: bool,
}

impl FeatureField {
    pub fn new(name: impl Into<String>, kind: FieldKind, vocab_size: usize) -> Self {
        Self {
            name: name.into(),
            kind,
            vocab_size,
            multi_valued: false,
        }
    }

    pub fn multi(mut self) -> Self {
        self.multi_valued = true;
        self
    }
}

/// Ordered list of categorical fields. Exactly one field is the item ID.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSchema {
    fields: Vec<FeatureField>,
    item_field: usize,
}

impl FeatureSchema {
    pub fn new(fields: Vec<FeatureField>) -> Result<Self> {
        let ids: Vec<usize> = fields
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == FieldKind::ItemId)
            .map(|(i, _)| i)
            .collect();
        if ids.len() != 1 {
            return Err(Error::Schema(format!(
                "expected exactly one item_id field, found {}",
                ids.len()
            )));
        }
        for (i, f) in fields.iter().enumerate() {
            if f.vocab_size == 0 {
                return Err(Error::Schema(format!("field `{}` has empty vocabulary", f.name)));
            }
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Schema(format!("duplicate field name `{}`", f.name)));
            }
        }
        if fields.len() > u16::MAX as usize {
            return Err(Error::Schema("too many fields".into()));
        }
        Ok(Self {
            item_field: ids[0],
            fields,
        })
    }

    pub fn fields(&self) -> &[FeatureField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, i: usize) -> &FeatureField {
        &self.fields[i]
    }

    /// Index of the item-ID field.
    pub fn item_field(&self) -> usize {
        self.item_field
    }

    /// Indices of the item side-information fields, in schema order.
    pub fn side_fields(&self) -> Vec<usize> {
        self.fields
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == FieldKind::ItemSide)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }
}

/// One labelled user-item interaction. Field values are indices into the
/// field vocabularies; multi-valued fields carry several indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    values: SmallVec<[u32; 12]>,
    ends: SmallVec<[u16; 10]>,
    pub label: u8,
    pub timestamp: i64,
    /// Raw item identifier from the source data (not the vocabulary index).
    pub item_id: u32,
}

impl Example {
    pub fn new<'a, I>(fields: I, label: u8, timestamp: i64, item_id: u32) -> Self
    where
        I: IntoIterator<Item = &'a [u32]>,
    {
        let mut values = SmallVec::new();
        let mut ends = SmallVec::new();
        for f in fields {
            values.extend_from_slice(f);
            ends.push(values.len() as u16);
        }
        Self {
            values,
            ends,
            label,
            timestamp,
            item_id,
        }
    }

    pub fn num_fields(&self) -> usize {
        self.ends.len()
    }

    pub fn field(&self, i: usize) -> &[u32] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] as usize };
        &self.values[start..self.ends[i] as usize]
    }

    /// Checks field count, bag sizes and vocabulary bounds against `schema`.
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        if self.num_fields() != schema.len() {
            return Err(Error::Schema(format!(
                "example has {} fields, schema has {}",
                self.num_fields(),
                schema.len()
            )));
        }
        for (i, f) in schema.fields().iter().enumerate() {
            let bag = self.field(i);
            if bag.is_empty() || (!f.multi_valued && bag.len() != 1) {
                return Err(Error::Schema(format!(
                    "field `{}` has {} values",
                    f.name,
                    bag.len()
                )));
            }
            if let Some(&bad) = bag.iter().find(|&&ix| ix as usize >= f.vocab_size) {
                return Err(Error::IndexOutOfRange {
                    field: f.name.clone(),
                    index: bad,
                    vocab: f.vocab_size,
                });
            }
        }
        if self.label > 1 {
            return Err(Error::Invalid(format!("label {} is not 0/1", self.label)));
        }
        Ok(())
    }
}

/// Rating to click label: 1 iff the rating is above 3.
pub fn binarize_label(rating: i64) -> Result<u8> {
    if !(1..=5).contains(&rating) {
        return Err(Error::RatingOutOfRange(rating));
    }
    Ok(u8::from(rating > 3))
}

/// Items with more than `n` examples are old; every example of an old item
/// goes to the first list, all others to the second. Input order is kept.
pub fn split_old_new(examples: Vec<Example>, n: usize) -> (Vec<Example>, Vec<Example>) {
    let counts = item_counts(&examples);
    examples
        .into_iter()
        .partition(|e| counts.get(&e.item_id).copied().unwrap_or(0) > n)
}

pub fn item_counts(examples: &[Example]) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for e in examples {
        *counts.entry(e.item_id).or_insert(0) += 1;
    }
    counts
}

/// Per-item chronological split of new-item examples.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WarmSplit {
    pub warm_a: Vec<Example>,
    pub warm_b: Vec<Example>,
    pub warm_c: Vec<Example>,
    pub test: Vec<Example>,
    /// Examples of items with fewer than `3k` interactions.
    pub discarded: usize,
    pub discarded_items: usize,
}

/// For each item (ascending raw ID), sorts its examples by timestamp with
/// ties kept in input order; the first `k` go to warm-a, the next `k` to
/// warm-b, the next `k` to warm-c and the rest to test. Items with fewer
/// than `3k` examples are dropped.
pub fn split_warm_phases(new_items: Vec<Example>, k: usize) -> WarmSplit {
    let mut by_item: BTreeMap<u32, Vec<Example>> = BTreeMap::new();
    for e in new_items {
        by_item.entry(e.item_id).or_default().push(e);
    }
    let mut out = WarmSplit::default();
    for (_, mut list) in by_item {
        if list.len() < 3 * k {
            out.discarded += list.len();
            out.discarded_items += 1;
            continue;
        }
        list.sort_by_key(|e| e.timestamp);
        let mut it = list.into_iter();
        out.warm_a.extend(it.by_ref().take(k));
        out.warm_b.extend(it.by_ref().take(k));
        out.warm_c.extend(it.by_ref().take(k));
        out.test.extend(it);
    }
    out
}

/// The old / warm-a / warm-b / warm-c / test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseDataset {
    pub schema: FeatureSchema,
    pub old: Vec<Example>,
    pub warm_a: Vec<Example>,
    pub warm_b: Vec<Example>,
    pub warm_c: Vec<Example>,
    pub test: Vec<Example>,
    pub n: usize,
    pub k: usize,
    pub discarded: usize,
    pub discarded_items: usize,
}

/// Partition sizes and item counts of a [`PhaseDataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct SplitStats {
    pub old_items: usize,
    /// Items with at most `n` interactions, before the `3k` filter.
    pub new_items: usize,
    /// New items that survived the `3k` filter.
    pub kept_new_items: usize,
    pub old: usize,
    pub warm_a: usize,
    pub warm_b: usize,
    pub warm_c: usize,
    pub test: usize,
    pub discarded: usize,
}

impl SplitStats {
    /// Fraction of items that are new, `new / (new + old)`.
    pub fn new_item_fraction(&self) -> f64 {
        let total = self.new_items + self.old_items;
        if total == 0 {
            0.0
        } else {
            self.new_items as f64 / total as f64
        }
    }

    /// `warm_b / warm_a`, `warm_c / warm_a`, `test / warm_a`.
    pub fn phase_ratios(&self) -> [f64; 3] {
        let a = self.warm_a.max(1) as f64;
        [
            self.warm_b as f64 / a,
            self.warm_c as f64 / a,
            self.test as f64 / a,
        ]
    }
}

impl PhaseDataset {
    pub fn build(schema: FeatureSchema, examples: Vec<Example>, n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::Config(format!("N and K must be >= 1 (got N={n}, K={k})")));
        }
        for e in &examples {
            e.validate(&schema)?;
        }
        let (old, new_items) = split_old_new(examples, n);
        let split = split_warm_phases(new_items, k);
        Ok(Self {
            schema,
            old,
            warm_a: split.warm_a,
            warm_b: split.warm_b,
            warm_c: split.warm_c,
            test: split.test,
            n,
            k,
            discarded: split.discarded,
            discarded_items: split.discarded_items,
        })
    }

    pub fn phase(&self, phase: Phase) -> &[Example] {
        match phase {
            Phase::WarmA => &self.warm_a,
            Phase::WarmB => &self.warm_b,
            Phase::WarmC => &self.warm_c,
        }
    }

    /// Raw IDs of the new items that survived the split, ascending.
    pub fn new_item_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.warm_a.iter().map(|e| e.item_id).collect();
        ids.dedup();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn old_item_ids(&self) -> Vec<u32> {
        item_counts(&self.old).into_keys().collect()
    }

    pub fn stats(&self) -> SplitStats {
        let old_items = item_counts(&self.old).len();
        let kept_new_items = self.new_item_ids().len();
        SplitStats {
            old_items,
            new_items: kept_new_items + self.discarded_items,
            kept_new_items,
            old: self.old.len(),
            warm_a: self.warm_a.len(),
            warm_b: self.warm_b.len(),
            warm_c: self.warm_c.len(),
            test: self.test.len(),
            discarded: self.discarded,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    WarmA,
    WarmB,
    WarmC,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::WarmA, Phase::WarmB, Phase::WarmC];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::WarmA => "warm-a",
            Phase::WarmB => "warm-b",
            Phase::WarmC => "warm-c",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

/// Index batches covering `0..len` once per epoch. With `shuffle` the order
/// is a seed-determined permutation; the last batch may be short.
pub fn batches(len: usize, batch_size: usize, seed: u64, shuffle: bool) -> Batches {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    Batches {
        order,
        batch_size,
        pos: 0,
    }
}

#[derive(Clone, Debug)]
pub struct Batches {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let b = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(b)
    }
}

/// Column-major view of a set of examples, ready for graph construction:
/// one [`Bags`] per field plus labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub fields: Vec<Bags>,
    pub labels: Vec<u8>,
    pub item_ids: Vec<u32>,
}

impl Batch {
    pub fn from_examples<'a, I>(num_fields: usize, examples: I) -> Self
    where
        I: IntoIterator<Item = &'a Example>,
    {
        let mut fields = vec![Bags::new(); num_fields];
        let mut labels = Vec::new();
        let mut item_ids = Vec::new();
        for e in examples {
            for (i, bags) in fields.iter_mut().enumerate() {
                bags.push(e.field(i));
            }
            labels.push(e.label);
            item_ids.push(e.item_id);
        }
        Self {
            fields,
            labels,
            item_ids,
        }
    }

    pub fn select(num_fields: usize, examples: &[Example], indices: &[usize]) -> Self {
        Self::from_examples(num_fields, indices.iter().map(|&i| &examples[i]))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Side-information bags per item, keyed by item-ID vocabulary index, taken
/// from the first example seen for each item.
pub fn item_side_info(schema: &FeatureSchema, examples: &[Example]) -> BTreeMap<u32, Vec<Vec<u32>>> {
    let item_field = schema.item_field();
    let side = schema.side_fields();
    let mut out = BTreeMap::new();
    for e in examples {
        let ix = e.field(item_field)[0];
        out.entry(ix)
            .or_insert_with(|| side.iter().map(|&f| e.field(f).to_vec()).collect());
    }
    out
}
