//! Item embedding export for distribution plots: old items' learned rows
//! (`warm`), new items' rows as the pretrained table holds them
//! (`cold_raw`), and the generator's mean embeddings for the same new items
//! (`cold_warmup`).

use std::fmt::Write as _;

use avaew_core::avaew::{generate_warmup_embeddings, Sampling, WarmupModel};
use avaew_core::backbones::BackboneParams;
use avaew_core::pca::project_2d;

use crate::trainer::ItemIndex;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    Warm,
    ColdRaw,
    ColdWarmup,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Warm => "warm",
            Group::ColdRaw => "cold_raw",
            Group::ColdWarmup => "cold_warmup",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExportRow {
    pub item_id: u32,
    pub group: Group,
    pub embedding: Vec<f32>,
    pub pca: Option<[f64; 2]>,
}

pub fn embedding_rows(
    bb: &BackboneParams<f32>,
    warmup: &WarmupModel<f32>,
    items: &ItemIndex,
) -> Result<Vec<ExportRow>> {
    if items.old.is_empty() {
        return Err(Error::Data("export group `warm` is empty".into()));
    }
    if items.new.is_empty() {
        return Err(Error::Data("export groups `cold_raw` and `cold_warmup` are empty".into()));
    }
    let raw = |i: &u32| items.raw.get(i).copied().unwrap_or(*i);
    let mut rows = Vec::with_capacity(items.old.len() + 2 * items.new.len());
    for (group, list) in [(Group::Warm, &items.old), (Group::ColdRaw, &items.new)] {
        rows.extend(list.iter().map(|i| ExportRow {
            item_id: raw(i),
            group,
            embedding: bb.item_row(*i).to_vec(),
            pca: None,
        }));
    }
    let generated = generate_warmup_embeddings(bb, warmup, &items.side, &items.new, Sampling::Mean)?;
    rows.extend(items.new.iter().enumerate().map(|(r, i)| ExportRow {
        item_id: raw(i),
        group: Group::ColdWarmup,
        embedding: generated.row(r).to_vec(),
        pca: None,
    }));
    Ok(rows)
}

/// Fills `pca` with the projection of all rows onto their top-2 principal
/// components.
pub fn add_pca2(rows: &mut [ExportRow]) {
    let pooled: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.embedding.iter().map(|&x| f64::from(x)).collect())
        .collect();
    for (r, p) in rows.iter_mut().zip(project_2d(&pooled)) {
        r.pca = Some(p);
    }
}

pub fn rows_tsv(rows: &[ExportRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = write!(out, "{}\t{}", r.item_id, r.group.as_str());
        for x in &r.embedding {
            let _ = write!(out, "\t{x}");
        }
        if let Some([a, b]) = r.pca {
            let _ = write!(out, "\t{a}\t{b}");
        }
        out.push('\n');
    }
    out
}
