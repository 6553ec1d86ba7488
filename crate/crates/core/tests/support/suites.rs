//! Check suites parameterized by seed. Each returns `(check, measurement)`
//! pairs; the callers decide tolerances and how to report.

use avaew_core::avaew::{
    discriminator_loss, group_feature_matching, pairwise_feature_matching, reconstruction_loss, tags,
    wasserstein_loss, warmup_loss, Bindings, Discriminator, GaussianVars, LossWeights, Sampling, StepInputs,
    WarmupModel,
};
use avaew_core::backbones::{BackboneKind, BackboneParams};
use avaew_core::features::{Batch, Example, FeatureField, FeatureSchema, FieldKind};
use avaew_core::metrics::eval_auc;
use avaew_core::ndcore::{AdamConfig, AdamState, Bags, Graph, Mlp, NoiseKey, ParamStore, Tensor, PROB_EPS};
use rand::Rng;

use super::*;

fn store_of(tensors: Vec<Tensor<f64>>) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    for (i, t) in tensors.into_iter().enumerate() {
        s.push(format!("x{i}"), t);
    }
    s
}

/// Scalar head `mean(y ⊙ C)` with a random constant `C`, so that every
/// output element gets a distinct, non-trivial upstream gradient.
fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let (r, c) = (g.value(y).rows(), g.value(y).cols());
    let w = g.constant(randn(&mut rng(seed ^ 0xC0FFEE), r, c, 1.0));
    let p = g.mul(y, w)?;
    Ok(g.mean(p))
}

type OpFn = fn(&mut Graph<f64>, &[Var], &OpCtx) -> Result<Var>;

struct OpCtx {
    bags: Bags,
    labels: Vec<f64>,
    noise: NoiseKey,
    c: f64,
}

/// Every differentiable graph op, each on random inputs of random shape.
pub fn op_gradients(seed: u64) -> Vec<(String, f64)> {
    let mut r = rng(seed);
    let (n, k, m) = (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5));
    let mut bags = Bags::new();
    for _ in 0..n {
        let len = r.random_range(1..4);
        let bag: Vec<u32> = (0..len).map(|_| r.random_range(0..6)).collect();
        bags.push(&bag);
    }
    let ctx = OpCtx {
        bags,
        labels: (0..n).map(|_| f64::from(r.random_range(0..2u8))).collect(),
        noise: NoiseKey::new(seed, 9, 0),
        c: normal(&mut r),
    };
    let mut cases: Vec<(&str, Vec<Tensor<f64>>, OpFn)> = vec![
        ("matmul", vec![randn(&mut r, n, k, 1.0), randn(&mut r, k, m, 1.0)], |g, v, _| g.matmul(v[0], v[1])),
        ("add", vec![randn(&mut r, n, m, 1.0), randn(&mut r, n, m, 1.0)], |g, v, _| g.add(v[0], v[1])),
        ("add_row_broadcast", vec![randn(&mut r, n, m, 1.0), randn(&mut r, 1, m, 1.0)], |g, v, _| g.add(v[0], v[1])),
        ("sub", vec![randn(&mut r, n, m, 1.0), randn(&mut r, n, m, 1.0)], |g, v, _| g.sub(v[0], v[1])),
        ("mul", vec![randn(&mut r, n, m, 1.0), randn(&mut r, n, m, 1.0)], |g, v, _| g.mul(v[0], v[1])),
        ("scale", vec![randn(&mut r, n, m, 1.0)], |g, v, c| Ok(g.scale(v[0], c.c))),
        ("add_scalar", vec![randn(&mut r, n, m, 1.0)], |g, v, c| Ok(g.add_scalar(v[0], c.c))),
        ("relu", vec![randn(&mut r, n, m, 1.0)], |g, v, _| Ok(g.relu(v[0]))),
        ("sigmoid", vec![randn(&mut r, n, m, 2.0)], |g, v, _| Ok(g.sigmoid(v[0]))),
        ("softplus", vec![randn(&mut r, n, m, 2.0)], |g, v, _| Ok(g.softplus(v[0]))),
        ("mean", vec![randn(&mut r, n, m, 1.0)], |g, v, _| Ok(g.mean(v[0]))),
        ("mean_rows", vec![randn(&mut r, n, m, 1.0)], |g, v, _| Ok(g.mean_rows(v[0]))),
        ("sum_rows", vec![randn(&mut r, n, m, 1.0)], |g, v, _| Ok(g.sum_rows(v[0]))),
        ("sum_sq", vec![randn(&mut r, n, m, 1.0)], |g, v, _| Ok(g.sum_sq(v[0]))),
        (
            "concat",
            vec![randn(&mut r, n, k, 1.0), randn(&mut r, n, m, 1.0), randn(&mut r, n, 1, 1.0)],
            |g, v, _| g.concat(v),
        ),
        ("slice_cols", vec![randn(&mut r, n, k + m, 1.0)], |g, v, _| {
            let cols = g.value(v[0]).cols();
            g.slice_cols(v[0], 1.min(cols - 1), cols)
        }),
        ("gather_mean", vec![randn(&mut r, 6, m, 1.0)], |g, v, c| g.gather_mean(v[0], &c.bags)),
        ("bce", vec![randn(&mut r, n, 1, 1.5)], |g, v, c| {
            let p = g.sigmoid(v[0]);
            g.bce(p, &c.labels)
        }),
        (
            "reparameterize",
            vec![randn(&mut r, n, m, 1.0), randn(&mut r, n, m, 1.0)],
            |g, v, c| {
                let std = g.softplus(v[1]);
                let (rows, cols) = (g.value(std).rows(), g.value(std).cols());
                let eps = g.gaussian_noise(rows, cols, c.noise);
                let s = g.mul(std, eps)?;
                g.add(v[0], s)
            },
        ),
    ];
    cases
        .drain(..)
        .map(|(name, inputs, op)| {
            let store = store_of(inputs);
            let errs = fd_check(
                &store,
                |s| s,
                |s, g| {
                    let b = s.attach(g, true);
                    let vars: Vec<Var> = (0..s.len()).map(|i| b.var(i)).collect();
                    let y = op(g, &vars, &ctx)?;
                    let l = if g.value(y).len() == 1 { y } else { project(g, y, seed)? };
                    Ok((b, l))
                },
            );
            (name.to_string(), worst(&errs).1)
        })
        .collect()
}

/// `user, item | genre (multi), year`.
pub fn tiny_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        FeatureField::new("user", FieldKind::User, 4),
        FeatureField::new("item", FieldKind::ItemId, 5),
        FeatureField::new("genre", FieldKind::ItemSide, 3).multi(),
        FeatureField::new("year", FieldKind::ItemSide, 3),
    ])
    .unwrap()
}

pub fn tiny_batch(r: &mut ChaCha8Rng, n: usize) -> Batch {
    let examples: Vec<Example> = (0..n)
        .map(|_| {
            let item = r.random_range(0..5u32);
            let genres: Vec<u32> = if r.random_bool(0.5) { vec![item % 3] } else { vec![0, 2] };
            Example::new(
                [&[r.random_range(0..4u32)][..], &[item][..], &genres[..], &[item % 3][..]],
                r.random_range(0..2u8),
                0,
                item,
            )
        })
        .collect();
    Batch::from_examples(4, &examples)
}

/// Replaces every parameter with `N(0, scale²)` so gradients are O(1)
/// rather than shrunk by the small embedding initialization.
pub fn randomize(store: &mut ParamStore<f64>, r: &mut ChaCha8Rng, scale: f64) {
    for i in 0..store.len() {
        for x in store.get_mut(i).data_mut() {
            *x = scale * normal(r);
        }
    }
}

/// Dense MLP and all three backbones' CTR loss, with and without an item
/// override.
pub fn model_gradients(seed: u64) -> Vec<(String, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();

    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", &[3, 4, 2], false, &mut r);
    let x = randn(&mut r, 5, 3, 1.0);
    let errs = fd_check(&store, |s| s, |s, g| {
        let b = s.attach(g, true);
        let xv = g.constant(x.clone());
        let y = mlp.forward(g, &b, xv)?;
        Ok((b, project(g, y, seed)?))
    });
    out.push(("mlp".to_string(), worst(&errs).1));

    for kind in BackboneKind::ALL {
        let mut bb = BackboneParams::<f64>::new(kind, tiny_schema(), 3, 4, seed);
        randomize(&mut bb.store, &mut r, 0.5);
        let batch = tiny_batch(&mut r, 6);
        let errs = fd_check(&bb, |m| &mut m.store, |m, g| {
            let b = m.bind(g, true);
            let l = m.ctr_loss(g, &b, &batch, None)?;
            Ok((b, l))
        });
        out.push((format!("{kind}.ctr_loss"), worst(&errs).1));

        let over = store_of(vec![randn(&mut r, 6, 3, 0.5)]);
        let pair = (bb.clone(), over);
        let errs = fd_check(&pair, |p| &mut p.1, |p, g| {
            let bv = p.0.bind(g, false);
            let ov = p.1.attach(g, true);
            let l = p.0.ctr_loss(g, &bv, &batch, Some(ov.var(0)))?;
            Ok((ov, l))
        });
        out.push((format!("{kind}.id_override"), worst(&errs).1));
    }
    out
}

#[derive(Clone)]
pub struct Trio {
    pub bb: BackboneParams<f64>,
    pub wm: WarmupModel<f64>,
    pub disc: Discriminator<f64>,
}

pub fn trio(seed: u64, kind: BackboneKind) -> Trio {
    let mut r = rng(seed ^ 0x7710);
    let mut bb = BackboneParams::<f64>::new(kind, tiny_schema(), 3, 4, seed);
    randomize(&mut bb.store, &mut r, 0.5);
    let mut wm = WarmupModel::<f64>::new(3, 2, 4, 3, seed).unwrap();
    randomize(&mut wm.store, &mut r, 0.5);
    let mut disc = Discriminator::<f64>::new(3, 4, seed);
    randomize(&mut disc.store, &mut r, 0.7);
    Trio { bb, wm, disc }
}

/// The five warm-up loss components and their weighted total, each
/// differentiated w.r.t. the generator parameters, plus the discriminator
/// loss w.r.t. the discriminator.
pub fn loss_component_gradients(seed: u64) -> Vec<(String, f64)> {
    let kind = BackboneKind::ALL[(seed % 3) as usize];
    let t = trio(seed, kind);
    let mut r = rng(seed ^ 0xBA7C);
    let batch = tiny_batch(&mut r, 5);
    let paired = randn(&mut r, 5, 3, 0.5);
    let group = randn(&mut r, 7, 3, 0.5);
    let weights = LossWeights::default();

    let mut out = Vec::new();
    for name in ["ctr", "recon", "wd", "gd", "gd_pair", "total"] {
        let errs = fd_check(&t, |m| &mut m.wm.store, |m, g| {
            let bv = m.bb.bind(g, false);
            let wv = m.wm.bind(g, true);
            let dv = m.disc.bind(g, false);
            let inputs = StepInputs {
                paired_real: g.constant(paired.clone()),
                group_real: g.constant(group.clone()),
                id_noise: NoiseKey::new(seed, tags::ID_LATENT, 1),
                prior_noise: NoiseKey::new(seed, tags::PRIOR_LATENT, 1),
            };
            let bind = Bindings {
                backbone: &m.bb,
                backbone_vars: &bv,
                warmup: &m.wm,
                warmup_vars: &wv,
                disc: &m.disc,
                disc_vars: &dv,
            };
            let l = warmup_loss(g, &bind, &batch, &inputs, &weights)?;
            let v = match name {
                "ctr" => l.ctr,
                "recon" => l.recon.unwrap(),
                "wd" => l.wd.unwrap(),
                "gd" => l.gd.unwrap(),
                "gd_pair" => l.gd_pair.unwrap(),
                _ => l.total,
            };
            Ok((wv, v))
        });
        out.push((format!("{kind}.{name}"), worst(&errs).1));
    }

    let fake = randn(&mut r, 5, 3, 0.8);
    let errs = fd_check(&t, |m| &mut m.disc.store, |m, g| {
        let dv = m.disc.bind(g, true);
        let real = g.constant(paired.clone());
        let f = g.constant(fake.clone());
        let l = discriminator_loss(g, &m.disc, &dv, real, f)?;
        Ok((dv, l))
    });
    out.push(("disc_loss".to_string(), worst(&errs).1));
    out
}

/// Graph losses versus the scalar-loop oracles on one random instance;
/// returns absolute differences.
pub fn closed_form_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let (n, d) = (r.random_range(1..9), r.random_range(1..7));
    let mut g = Graph::<f64>::new();
    let mut out = Vec::new();

    // BCE
    let p: Vec<f64> = (0..n)
        .map(|i| match i % 5 {
            0 => 0.0,
            1 => 1.0,
            _ => r.random::<f64>(),
        })
        .collect();
    let y: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..2u8))).collect();
    let pv = g.constant(Tensor::matrix(n, 1, p.clone()).unwrap());
    let l = g.bce(pv, &y).unwrap();
    out.push(("bce", (g.value(l).item() - oracle_bce(&p, &y, PROB_EPS)).abs()));

    // reconstruction
    let (v, vh) = (randn(&mut r, n, d, 1.0), randn(&mut r, n, d, 1.0));
    let (a, b) = (g.constant(v.clone()), g.constant(vh.clone()));
    let l = reconstruction_loss(&mut g, a, b).unwrap();
    out.push(("recon", (g.value(l).item() - oracle_recon(&rows_of(&v), &rows_of(&vh))).abs()));

    // W2
    let pos = |t: Tensor<f64>| t.map(|x| x.abs() + 1e-3);
    let (ma, mb) = (randn(&mut r, n, d, 1.0), randn(&mut r, n, d, 1.0));
    let (sa, sb) = (pos(randn(&mut r, n, d, 1.0)), pos(randn(&mut r, n, d, 1.0)));
    let ga = GaussianVars {
        mean: g.constant(ma.clone()),
        std: g.constant(sa.clone()),
    };
    let gb = GaussianVars {
        mean: g.constant(mb.clone()),
        std: g.constant(sb.clone()),
    };
    let l = wasserstein_loss(&mut g, ga, gb).unwrap();
    let want = oracle_w2(&rows_of(&ma), &rows_of(&sa), &rows_of(&mb), &rows_of(&sb));
    out.push(("w2", (g.value(l).item() - want).abs()));

    // feature matching
    let mut disc = Discriminator::<f64>::new(d, 5, seed);
    randomize(&mut disc.store, &mut r, 0.7);
    let (real, fake) = (randn(&mut r, n, d, 1.0), randn(&mut r, n, d, 1.0));
    let dv = disc.bind(&mut g, false);
    let (rv, fv) = (g.constant(real.clone()), g.constant(fake.clone()));
    let l = group_feature_matching(&mut g, &disc, &dv, rv, fv).unwrap();
    out.push((
        "group_fm",
        (g.value(l).item() - oracle_group_fm(&disc, &rows_of(&real), &rows_of(&fake))).abs(),
    ));
    let l = pairwise_feature_matching(&mut g, &disc, &dv, rv, fv).unwrap();
    out.push((
        "pair_fm",
        (g.value(l).item() - oracle_pair_fm(&disc, &rows_of(&real), &rows_of(&fake))).abs(),
    ));
    out
}

/// Random predictions with deliberate ties; `(fast, oracle)` AUC.
pub fn auc_pair(seed: u64, n: usize) -> Option<(f64, f64)> {
    let mut r = rng(seed);
    let levels = r.random_range(2..50);
    let pred: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..levels)) / levels as f64).collect();
    let labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
    let fast = eval_auc(&pred, &labels).ok()?;
    Some((fast, oracle_auc(&pred, &labels)))
}

/// Frozen generator (two separated Gaussian clouds); trains a fresh
/// discriminator with Adam and returns held-out accuracy after each step.
pub fn discriminator_accuracy_trace(seed: u64, steps: usize) -> Vec<f64> {
    let d = 16;
    let mut r = rng(seed);
    let cloud = |r: &mut ChaCha8Rng, n: usize, shift: f64| randn(r, n, d, 1.0).map(|x| x + shift);
    let mut disc = Discriminator::<f64>::new(d, 16, seed);
    let mut opt = AdamState::new(AdamConfig::default(), &disc.store);
    let (test_real, test_fake) = (cloud(&mut r, 256, 1.0), cloud(&mut r, 256, -1.0));
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (real, fake) = (cloud(&mut r, 64, 1.0), cloud(&mut r, 64, -1.0));
        let mut g = Graph::new();
        let dv = disc.bind(&mut g, true);
        let (rv, fv) = (g.constant(real), g.constant(fake));
        let l = discriminator_loss(&mut g, &disc, &dv, rv, fv).unwrap();
        let grads = g.backward(l).unwrap();
        let pg = disc.store.gradients(&dv, &grads);
        opt.step(&mut disc.store, &pg).unwrap();

        let mut correct = 0;
        for i in 0..256 {
            correct += usize::from(disc.probability(test_real.row(i)).unwrap() > 0.5);
            correct += usize::from(disc.probability(test_fake.row(i)).unwrap() < 0.5);
        }
        trace.push(correct as f64 / 512.0);
    }
    trace
}

/// Randomly initialized, frozen discriminator; the generator (prior
/// encoder + decoder on fixed side inputs) minimizes group feature
/// matching alone. Returns the loss before each step and after the last.
pub fn feature_matching_trace(seed: u64, steps: usize) -> Vec<f64> {
    let d = 16;
    let mut r = rng(seed);
    let disc = Discriminator::<f64>::new(d, 16, seed);
    let mut wm = WarmupModel::<f64>::new(d, 2, 16, 16, seed).unwrap();
    let side = randn(&mut r, 64, 2 * d, 0.3);
    // "real" population: a shifted, rescaled Gaussian cloud
    let real = randn(&mut r, 64, d, 0.5).map(|x| x + 0.8);
    let mut opt = AdamState::new(AdamConfig::default(), &wm.store);
    let mut trace = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let mut g = Graph::new();
        let wv = wm.bind(&mut g, true);
        let dv = disc.bind(&mut g, false);
        let s = g.constant(side.clone());
        let prior = wm.encode_prior_node(&mut g, &wv, s).unwrap();
        let z = wm
            .sample_node(&mut g, prior, Sampling::Sample(NoiseKey::new(seed, tags::PRIOR_LATENT, step as u64)))
            .unwrap();
        let fake = wm.decode_node(&mut g, &wv, z).unwrap();
        let rv = g.constant(real.clone());
        let l = group_feature_matching(&mut g, &disc, &dv, rv, fake).unwrap();
        trace.push(g.value(l).item());
        if step == steps {
            break;
        }
        let grads = g.backward(l).unwrap();
        let pg = wm.store.gradients(&wv, &grads);
        opt.step(&mut wm.store, &pg).unwrap();
    }
    trace
}
