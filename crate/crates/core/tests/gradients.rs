//! Backprop versus central finite differences (f64, h = 1e-5), 100 seeds.

mod support;

use support::suites::{loss_component_gradients, model_gradients, op_gradients};
use support::FD_TOLERANCE;

fn assert_all_within(label: &str, run: impl Fn(u64) -> Vec<(String, f64)>) {
    let mut failures = Vec::new();
    for seed in 0..100 {
        for (check, err) in run(seed) {
            if err.is_nan() || err >= FD_TOLERANCE {
                failures.push(format!("seed {seed} {check}: {err:.3e}"));
            }
        }
    }
    assert!(failures.is_empty(), "{label}:\n{}", failures.join("\n"));
}

#[test]
fn every_graph_op() {
    assert_all_within("ops", op_gradients);
}

#[test]
fn mlp_and_backbones() {
    assert_all_within("models", model_gradients);
}

#[test]
fn warmup_loss_components_and_discriminator() {
    assert_all_within("losses", loss_component_gradients);
}

/// The checker must notice a gradient that disagrees with the function:
/// `detach` hides a dependence from backprop that finite differences see.
#[test]
fn checker_flags_a_hidden_dependence() {
    use avaew_core::ndcore::{ParamStore, Tensor};
    let mut store = ParamStore::new();
    store.push("x", Tensor::matrix(1, 3, vec![0.3, -1.2, 2.0]).unwrap());
    let errs = support::fd_check(&store, |s| s, |s, g| {
        let b = s.attach(g, true);
        let d = g.detach(b.var(0));
        let y = g.mul(b.var(0), d)?;
        Ok((b, g.mean(y)))
    });
    assert!(errs[0].1 > 0.1, "{errs:?}");
}
