#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use avaew::config::ExperimentConfig;
use avaew::synth::{write_ml1m, SynthSpec};
use tempfile::TempDir;

pub const SPEC: SynthSpec = SynthSpec {
    users: 300,
    items: 250,
    ratings: 20_000,
    skew: 1.0,
    item_noise: 0.3,
    seed: 5,
};

/// A synthetic ML-1M directory plus a small, fast config pointing at it.
pub struct Fixture {
    pub dir: TempDir,
    pub cfg: ExperimentConfig,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("ml-1m");
        write_ml1m(&data, &SPEC).unwrap();
        let mut cfg = ExperimentConfig::default();
        for (k, v) in [
            ("dataset.n", "80"),
            ("dataset.k", "8"),
            ("train.batch_size", "256"),
            ("train.pretrain_epochs", "2"),
            ("train.warmup_epochs", "1"),
        ] {
            cfg.set(k, v).unwrap();
        }
        cfg.data_dir = data;
        cfg.cache = dir.path().join("ml-1m.cache");
        cfg.out_dir = dir.path().join("run");
        let fx = Fixture { dir, cfg };
        std::fs::write(fx.config_path(), fx.cfg.to_text()).unwrap();
        fx
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn config_path(&self) -> PathBuf {
        self.path("experiment.cfg")
    }

    /// Runs the binary with `--config` inserted after the subcommand.
    pub fn run(&self, sub: &str, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_avaew"))
            .arg(sub)
            .arg("--config")
            .arg(self.config_path())
            .args(args)
            .env("AVAEW_LOG", "warn")
            .output()
            .unwrap()
    }

    pub fn ok(&self, sub: &str, args: &[&str]) -> String {
        let out = self.run(sub, args);
        assert!(
            out.status.success(),
            "`avaew {sub} {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

pub fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Data lines of a metrics file (header comments and the column line removed).
pub fn metric_records(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}
