#![allow(dead_code)]

use ifnas_core::autodiff::{forward_mixed, ParamKind, ParamStore};
use ifnas_core::interleave::{extract_subsupernet, warmup_mask};
use ifnas_core::search::RegularizerWeights;
use ifnas_core::space::{build_supernet, Pruned};
use ifnas_core::{Dataset, OperatorKind, StageSpec, SupernetSpec};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step used by every gradient check.
pub const FD_STEP: f64 = 1e-5;
/// Largest accepted relative error between analytic and numeric gradients.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor so vanishing gradients are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

/// Two small stages joined by a reduction unit.
pub fn tiny_spec(ops: Vec<OperatorKind>) -> SupernetSpec {
    SupernetSpec {
        max_len: 2,
        stages: vec![
            StageSpec {
                node_count: 3,
                channels: 2,
                spatial_size: 4,
                reduction_after: true,
            },
            StageSpec {
                node_count: 2,
                channels: 4,
                spatial_size: 2,
                reduction_after: false,
            },
        ],
        operator_set: ops,
        num_classes: 3,
    }
}

#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    /// Parameters whose one-sided differences disagree, i.e. a ReLU kink
    /// lies inside the stencil and the function is not differentiable there.
    pub kinks: usize,
    pub max_rel: f64,
    pub worst: String,
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)
}

/// Compares analytic gradients of cross-entropy plus regularizer with
/// central differences on a randomly configured tiny supernet.
pub fn gradient_check(seed: u64, per_kind: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = match seed % 3 {
        0 => vec![OperatorKind::SepConv3x3, OperatorKind::Skip],
        1 => vec![OperatorKind::ToyLinear, OperatorKind::Skip],
        _ => vec![OperatorKind::SepConv3x3, OperatorKind::ToyLinear, OperatorKind::Skip],
    };
    let spec = tiny_spec(ops);
    let supernet = build_supernet(&spec).unwrap();
    let mut store = ParamStore::new(&supernet, &Default::default(), seed).unwrap();
    for &c in supernet.connections() {
        store.set_beta(c, rng.random_range(-2.0..2.0));
        for &o in &spec.operator_set {
            store.set_alpha(c, o, rng.random_range(-2.0..2.0));
        }
    }
    let mask = if seed % 2 == 0 {
        warmup_mask(&supernet)
    } else {
        extract_subsupernet(&supernet, 1).unwrap()
    };
    let pruned = Pruned::default();
    let data = Dataset::synthetic([2, 4, 4], 3, 6, 2, seed);
    let batch = data.gather(&(0..6).collect::<Vec<_>>());
    let reg = Some(RegularizerWeights {
        mu1: rng.random_range(0.1..1.0),
        mu2: rng.random_range(0.1..1.0),
    });

    let pass = forward_mixed(&store, &mask, &pruned, &batch, reg).unwrap();
    pass.backward(&mut store).unwrap();
    let analytic = store.grads().to_vec();
    let participating: Vec<usize> = (0..store.len()).filter(|&i| store.participating()[i]).collect();

    let loss_at = |store: &mut ParamStore, i: usize, v: f64| {
        store.values_mut()[i] = v;
        forward_mixed(store, &mask, &pruned, &batch, reg).unwrap().loss()
    };
    let mut out = GradCheck::default();
    for kind in [ParamKind::Weight, ParamKind::Alpha, ParamKind::Beta] {
        let pool: Vec<usize> = participating.iter().copied().filter(|&i| store.kind_of(i) == kind).collect();
        for &i in pool.choose_multiple(&mut rng, per_kind) {
            let x = store.values()[i];
            let f0 = loss_at(&mut store, i, x);
            let fp = loss_at(&mut store, i, x + FD_STEP);
            let fm = loss_at(&mut store, i, x - FD_STEP);
            loss_at(&mut store, i, x);
            let (fwd, bwd) = ((fp - f0) / FD_STEP, (f0 - fm) / FD_STEP);
            if rel_err(fwd, bwd) > 1e-2 {
                out.kinks += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * FD_STEP);
            let r = rel_err(analytic[i], numeric);
            out.checked += 1;
            if r > out.max_rel {
                out.max_rel = r;
                out.worst = format!("seed {seed}, {kind:?} offset {i}: analytic {} numeric {numeric}", analytic[i]);
            }
        }
    }
    out
}
