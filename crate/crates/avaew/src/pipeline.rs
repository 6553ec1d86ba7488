//! One function per CLI command. Each reads its inputs from the config,
//! writes its artifacts, and returns what it wrote so callers (the binary,
//! tests) can report on it.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

use avaew_core::avaew::WarmupModel;
use avaew_core::backbones::{BackboneKind, BackboneParams};
use avaew_core::features::PhaseDataset;

use crate::cache::{self, CacheHeader};
use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::export::{add_pca2, embedding_rows, ExportRow};
use crate::report;
use crate::trainer::{run_ablation, ItemIndex, Method, Trainer};
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.tsv";
pub const TIMINGS_FILE: &str = "timings.tsv";
pub const TRACE_FILE: &str = "warmup_trace.tsv";
pub const CHECKPOINT_FILE: &str = "model.params";
pub const ABLATION_FILE: &str = "ablation.tsv";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    Ok(&cfg.out_dir)
}

pub struct Prepared {
    pub header: CacheHeader,
    pub report: String,
    pub warnings: Vec<String>,
}

/// Loads the raw dataset, splits it and writes the cache plus
/// `<cache>.stats.txt`.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let previous = cfg.cache.is_file().then(|| cache::read_cache(&cfg.cache)).transpose();
    let (header, data, skipped) = cache::prepare(cfg.format, &cfg.data_dir, cfg.n, cfg.k, cfg.seed)?;
    match previous {
        Ok(Some((old, _))) if old.checksums != header.checksums => {
            warnings.push(format!("input files changed since {} was written; rebuilding", cfg.cache.display()));
        }
        Err(e) => warnings.push(format!("ignoring unreadable cache {}: {e}", cfg.cache.display())),
        _ => {}
    }
    if data.old.is_empty() {
        warnings.push(format!("N = {} exceeds every item's interaction count: all items are new", cfg.n));
    }
    if skipped.total() > 0 {
        warnings.push(format!("skipped records: {skipped}"));
    }
    if let Some(parent) = cfg.cache.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    cache::write_cache(&cfg.cache, &header, &data)?;
    let report = cache::stats_report(&data, Some(&skipped));
    write(&stats_path(&cfg.cache), &report)?;
    for w in &warnings {
        warn!("{w}");
    }
    Ok(Prepared {
        header,
        report,
        warnings,
    })
}

pub fn stats_path(cache: &Path) -> PathBuf {
    let mut s = cache.as_os_str().to_owned();
    s.push(".stats.txt");
    PathBuf::from(s)
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<PhaseDataset> {
    let (header, data) = cache::read_cache(&cfg.cache)?;
    if header.format != cfg.format || header.n != cfg.n || header.k != cfg.k {
        return Err(Error::Config(format!(
            "cache {} was prepared for {} N={} K={}, config asks for {} N={} K={}; rerun prepare-data",
            cfg.cache.display(),
            header.format.as_str(),
            header.n,
            header.k,
            cfg.format.as_str(),
            cfg.n,
            cfg.k
        )));
    }
    Ok(data)
}

pub struct TrainArtifacts {
    pub metrics: PathBuf,
    pub timings: PathBuf,
    pub checkpoint: PathBuf,
    pub trace: Option<PathBuf>,
    pub reports: Vec<crate::trainer::PhaseReport>,
}

/// Pretrain → warm-up training (if `avaew` is among `methods`) → warm
/// phases per method. Writes metrics, timings, the warm-up trace and a
/// checkpoint of the pretrained backbone and warm-up networks.
pub fn train(cfg: &ExperimentConfig, data: &PhaseDataset, methods: &[Method]) -> Result<TrainArtifacts> {
    let dir = out_dir(cfg)?.to_path_buf();
    let mut t = Trainer::new(cfg, data)?;
    let mut timings = Vec::new();

    let t0 = Instant::now();
    let (bb, _) = t.pretrain_backbone(cfg.backbone)?;
    timings.push(("pretrain".to_string(), t0.elapsed().as_secs_f64()));

    let warm = if methods.contains(&Method::Avaew) {
        let t0 = Instant::now();
        let w = t.train_warmup(&bb)?;
        timings.push(("warmup".to_string(), t0.elapsed().as_secs_f64()));
        Some(w)
    } else {
        None
    };

    let mut ckpt = model_checkpoint(cfg, &bb);
    let mut trace = None;
    if let Some(w) = &warm {
        ckpt.add_store(&w.warmup.store, true);
        ckpt.add_store(&w.disc.store, false);
        let p = dir.join(TRACE_FILE);
        write(&p, &report::trace_tsv(&w.trace))?;
        trace = Some(p);
    }
    let checkpoint = dir.join(CHECKPOINT_FILE);
    ckpt.write(&checkpoint)?;

    let mut reports = Vec::new();
    for &m in methods {
        let r = t.run_warm_phases(m, &bb, warm.as_ref())?;
        timings.extend(r.iter().map(|p| (format!("{}/{}", m.as_str(), p.phase.as_str()), p.seconds)));
        reports.extend(r);
    }
    let metrics = dir.join(METRICS_FILE);
    write(&metrics, &report::metrics_tsv(cfg, &reports))?;
    let timings_path = dir.join(TIMINGS_FILE);
    write(&timings_path, &report::timings_tsv(&timings))?;
    info!("wrote {}", metrics.display());
    Ok(TrainArtifacts {
        metrics,
        timings: timings_path,
        checkpoint,
        trace,
        reports,
    })
}

fn model_checkpoint(cfg: &ExperimentConfig, bb: &BackboneParams<f32>) -> Checkpoint {
    let mut c = Checkpoint::new();
    c.set_meta("backbone", bb.kind);
    c.set_meta("embedding_dim", cfg.embedding_dim);
    c.set_meta("hidden_units", cfg.hidden_units);
    c.set_meta("latent_dim", cfg.latent_dim);
    c.set_meta("seed", cfg.seed);
    c.add_store(&bb.store, true);
    c
}

fn meta<T: std::str::FromStr>(c: &Checkpoint, key: &str) -> Result<T> {
    c.meta(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Data(format!("checkpoint lacks a valid `{key}` entry")))
}

/// Rebuilds the backbone (and the warm-up generator when present) stored by
/// [`train`].
pub fn load_models(
    path: &Path,
    data: &PhaseDataset,
) -> Result<(BackboneParams<f32>, Option<WarmupModel<f32>>)> {
    let c = Checkpoint::read(path)?;
    let kind: BackboneKind = c
        .meta("backbone")
        .ok_or_else(|| Error::Data("checkpoint lacks `backbone`".into()))?
        .parse()?;
    let (dim, hidden, latent, seed) = (
        meta(&c, "embedding_dim")?,
        meta(&c, "hidden_units")?,
        meta(&c, "latent_dim")?,
        meta::<u64>(&c, "seed")?,
    );
    let mut bb = BackboneParams::new(kind, data.schema.clone(), dim, hidden, seed);
    c.restore(&mut bb.store)?;
    let wm = if c.entries.iter().any(|e| e.name.starts_with("warmup.")) {
        let mut wm = WarmupModel::for_backbone(&bb, hidden, latent, seed)?;
        c.restore(&mut wm.store)?;
        Some(wm)
    } else {
        None
    };
    Ok((bb, wm))
}

pub fn ablate(cfg: &ExperimentConfig, data: &PhaseDataset) -> Result<PathBuf> {
    let dir = out_dir(cfg)?;
    let rows = run_ablation(cfg, data)?;
    let p = dir.join(ABLATION_FILE);
    write(&p, &report::ablation_tsv(cfg, &rows))?;
    Ok(p)
}

pub fn export_embeddings(data: &PhaseDataset, checkpoint: &Path, pca2: bool) -> Result<Vec<ExportRow>> {
    let (bb, wm) = load_models(checkpoint, data)?;
    let wm = wm.ok_or_else(|| Error::Data("checkpoint has no warm-up module (trained with --method base?)".into()))?;
    let mut rows = embedding_rows(&bb, &wm, &ItemIndex::new(data))?;
    if pca2 {
        add_pca2(&mut rows);
    }
    Ok(rows)
}

/// Test AUC of the checkpointed backbone before any warm data: with the
/// new items' raw rows, and with warm-up embeddings installed.
pub fn eval(cfg: &ExperimentConfig, data: &PhaseDataset, checkpoint: &Path) -> Result<Vec<(Method, f64)>> {
    let (mut bb, wm) = load_models(checkpoint, data)?;
    let mut t = Trainer::new(cfg, data)?;
    let mut out = vec![(Method::Base, t.evaluate(&bb)?)];
    if let Some(wm) = wm {
        t.install_warmup(&mut bb, &wm)?;
        out.push((Method::Avaew, t.evaluate(&bb)?));
    }
    Ok(out)
}
