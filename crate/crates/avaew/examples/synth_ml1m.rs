//! Writes a synthetic ML-1M-format dataset:
//! `cargo run --release -p avaew --example synth_ml1m -- <dir> [users items ratings seed]`

use anyhow::Context;
use avaew::synth::{write_ml1m, SynthSpec};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = args.first().context("usage: synth_ml1m <dir> [users items ratings seed]")?;
    let mut spec = SynthSpec::default();
    let num = |i: usize| args.get(i).map(|s| s.parse::<u64>()).transpose();
    if let Some(v) = num(1)? {
        spec.users = v as usize;
    }
    if let Some(v) = num(2)? {
        spec.items = v as usize;
    }
    if let Some(v) = num(3)? {
        spec.ratings = v as usize;
    }
    if let Some(v) = num(4)? {
        spec.seed = v;
    }
    write_ml1m(dir.as_ref(), &spec)?;
    println!("wrote {dir}: {spec:?}");
    Ok(())
}
