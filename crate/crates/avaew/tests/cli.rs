//! The `avaew` binary end to end on a small synthetic ML-1M directory.

mod common;

use std::collections::BTreeMap;

use avaew::pipeline::{self, CHECKPOINT_FILE, METRICS_FILE, TRACE_FILE};
use avaew::trainer::ItemIndex;
use common::{metric_records, read, Fixture};

#[test]
fn prepare_data_is_byte_stable_and_reports_stats() {
    let fx = Fixture::new();
    let report = fx.ok("prepare-data", &[]);
    for key in ["new_old_item_ratio", "phase_ratio", "warm_a", "test", "discarded"] {
        assert!(report.lines().any(|l| l.starts_with(key)), "no `{key}` in\n{report}");
    }
    assert_eq!(std::fs::read_to_string(pipeline::stats_path(&fx.cfg.cache)).unwrap(), report);
    let first = read(&fx.cfg.cache);
    fx.ok("prepare-data", &[]);
    assert_eq!(read(&fx.cfg.cache), first);
}

#[test]
fn oversized_n_warns_that_every_item_is_new() {
    let fx = Fixture::new();
    let out = fx.run("prepare-data", &["--set", "dataset.n=1000000"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn train_then_export_and_eval() {
    let fx = Fixture::new();
    fx.ok("prepare-data", &[]);

    // base only: three records, no warm-up artifacts
    let base_dir = fx.path("base");
    let out = format!("output.dir={}", base_dir.display());
    fx.ok("train", &["--method", "base", "--set", &out]);
    let metrics = std::fs::read_to_string(base_dir.join(METRICS_FILE)).unwrap();
    let recs = metric_records(&metrics);
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r.split('\t').nth(3) == Some("base")));
    assert!(!base_dir.join(TRACE_FILE).exists());
    let ckpt = base_dir.join(CHECKPOINT_FILE);
    assert_ne!(fx.run("export-embeddings", &["--checkpoint", ckpt.to_str().unwrap()]).status.code(), Some(0));

    // both methods, same seed twice into the same directory
    let out = format!("output.dir={}", fx.path("a").display());
    let mut runs = Vec::new();
    for _ in 0..2 {
        fx.ok("train", &["--seed", "7", "--set", &out]);
        runs.push((
            std::fs::read_to_string(fx.path("a").join(METRICS_FILE)).unwrap(),
            read(&fx.path("a").join(CHECKPOINT_FILE)),
        ));
        assert!(fx.path("a").join(TRACE_FILE).exists());
    }
    assert_eq!(runs[0].0, runs[1].0);
    assert!(runs[0].1 == runs[1].1, "checkpoints differ");
    assert_eq!(metric_records(&runs[0].0).len(), 6);

    // export
    let ckpt = fx.path("a").join(CHECKPOINT_FILE);
    let tsv_path = fx.path("emb.tsv");
    fx.ok(
        "export-embeddings",
        &["--checkpoint", ckpt.to_str().unwrap(), "--out", tsv_path.to_str().unwrap(), "--pca2"],
    );
    let tsv = std::fs::read_to_string(&tsv_path).unwrap();
    let data = pipeline::load_dataset(&fx.cfg).unwrap();
    let items = ItemIndex::new(&data);
    let mut groups = BTreeMap::<&str, usize>::new();
    for line in tsv.lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 2 + fx.cfg.embedding_dim + 2);
        *groups.entry(cols[1]).or_default() += 1;
    }
    assert_eq!(groups["warm"], items.old.len());
    assert_eq!(groups["cold_raw"], items.new.len());
    assert_eq!(groups["cold_warmup"], data.stats().kept_new_items);

    let (bb, _) = pipeline::load_models(&ckpt, &data).unwrap();
    let internal: BTreeMap<u32, u32> = items.raw.iter().map(|(&i, &r)| (r, i)).collect();
    for line in tsv.lines().filter(|l| l.split('\t').nth(1) == Some("warm")) {
        let cols: Vec<&str> = line.split('\t').collect();
        let raw: u32 = cols[0].parse().unwrap();
        let row: Vec<f32> = cols[2..2 + fx.cfg.embedding_dim].iter().map(|s| s.parse().unwrap()).collect();
        let expect = bb.item_row(internal.get(&raw).copied().unwrap_or(raw));
        assert!(row.iter().zip(expect).all(|(a, b)| a.to_bits() == b.to_bits()), "item {raw}");
    }

    // eval
    let eval = fx.ok("eval", &["--checkpoint", ckpt.to_str().unwrap()]);
    let methods: Vec<&str> = eval.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(methods, ["base", "avaew"]);
}

#[test]
fn seeds_flag_repeats_into_subdirectories() {
    let fx = Fixture::new();
    fx.ok("prepare-data", &[]);
    fx.ok("train", &["--method", "base", "--seeds", "1,2"]);
    for s in [1, 2] {
        assert!(fx.cfg.out_dir.join(format!("seed-{s}")).join(METRICS_FILE).exists());
    }
}

#[test]
fn exit_codes() {
    let fx = Fixture::new();
    assert_eq!(fx.run("prepare-data", &["--set", "dataset.k=zero"]).status.code(), Some(2));
    assert_eq!(fx.run("prepare-data", &["--set", "no.such.key=1"]).status.code(), Some(2));
    std::fs::write(fx.config_path(), "model.backbone = transformer\n").unwrap();
    assert_eq!(fx.run("prepare-data", &[]).status.code(), Some(2));

    let fx = Fixture::new();
    let missing = format!("dataset.path={}", fx.path("nowhere").display());
    let out = fx.run("prepare-data", &["--set", &missing]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
    // training before the cache exists
    assert_eq!(fx.run("train", &[]).status.code(), Some(3));
}
