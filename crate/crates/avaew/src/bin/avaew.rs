use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use avaew::config::ExperimentConfig;
use avaew::export::rows_tsv;
use avaew::pipeline;
use avaew::trainer::Method;

#[derive(Parser)]
#[command(name = "avaew", version, about = "Cold-start item embedding warm-up for CTR models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; defaults apply for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.lr=0.002`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set train.seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.overrides {
            cfg.apply_override(kv)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw files, split them into old / warm-a/b/c / test and write
    /// the dataset cache.
    PrepareData {
        #[command(flatten)]
        common: Common,
    },
    /// Pretrain, train the warm-up module and run the warm phases.
    Train {
        #[command(flatten)]
        common: Common,
        /// Run one method only.
        #[arg(long, value_parser = ["base", "avaew"])]
        method: Option<String>,
        /// Repeat the run once per seed, each into `<output.dir>/seed-<N>`.
        #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
        seeds: Vec<u64>,
    },
    /// Full model versus each single-loss-term ablation (warm-c AUC).
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Write warm / cold_raw / cold_warmup item embeddings as TSV.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Append a 2-D PCA projection of the pooled rows.
        #[arg(long)]
        pca2: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test AUC of a checkpoint before any warm data.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn write_or_print(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::PrepareData { common } => {
            let cfg = common.load()?;
            let p = pipeline::prepare_data(&cfg)?;
            for w in &p.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", p.report);
            eprintln!("wrote {}", cfg.cache.display());
        }
        Command::Train { common, method, seeds } => {
            let cfg = common.load()?;
            let methods = match method.as_deref() {
                Some(m) => vec![Method::parse(m).expect("clap restricts values")],
                None => Method::ALL.to_vec(),
            };
            let data = pipeline::load_dataset(&cfg)?;
            let runs: Vec<ExperimentConfig> = if seeds.is_empty() {
                vec![cfg]
            } else {
                seeds
                    .iter()
                    .map(|&s| ExperimentConfig {
                        seed: s,
                        out_dir: cfg.out_dir.join(format!("seed-{s}")),
                        ..cfg.clone()
                    })
                    .collect()
            };
            for c in &runs {
                let a = pipeline::train(c, &data, &methods)?;
                for r in &a.reports {
                    println!("{}\t{}\t{}\t{:.4}", c.seed, r.method.as_str(), r.phase.as_str(), r.auc);
                }
                eprintln!("wrote {} and {}", a.metrics.display(), a.checkpoint.display());
            }
        }
        Command::Ablate { common } => {
            let cfg = common.load()?;
            if cfg.ablation_backbones.is_empty() {
                bail!(avaew::Error::Config("ablation.backbones is empty".into()));
            }
            let data = pipeline::load_dataset(&cfg)?;
            let p = pipeline::ablate(&cfg, &data)?;
            print!("{}", std::fs::read_to_string(&p)?);
        }
        Command::ExportEmbeddings {
            common,
            checkpoint,
            pca2,
            out,
        } => {
            let cfg = common.load()?;
            let data = pipeline::load_dataset(&cfg)?;
            let rows = pipeline::export_embeddings(&data, &checkpoint, pca2)?;
            write_or_print(out.as_deref(), &rows_tsv(&rows))?;
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.load()?;
            let data = pipeline::load_dataset(&cfg)?;
            for (m, auc) in pipeline::eval(&cfg, &data, &checkpoint)? {
                println!("{}\t{auc:.6}", m.as_str());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AVAEW_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<avaew::Error>().map_or(3, avaew::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
