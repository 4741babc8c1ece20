//! Finite-difference gradient checking shared by the gradient tests and the
//! acceptance suite.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use relpred_core::autodiff::{gru_cell, ColumnMap, GruCellVars, Matrix, ParamStore, Tape, Var};
use relpred_core::graph::{Graph, Triplet};
use relpred_core::model::{forward, ModelConfig, ModelParams, Phase};
use relpred_core::subgraph::extract_directed;
use relpred_core::trainer::margin_loss;

pub const FD_EPS: f64 = 1e-5;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1.0f64.max(a.abs()).max(n.abs())
}

/// Random matrix with entries kept away from activation kinks.
pub fn smooth_random(rng: &mut StdRng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let v: f64 = rng.gen_range(-1.5..1.5);
            if v.abs() < 0.02 {
                0.02 * v.signum().max(0.5)
            } else {
                v
            }
        })
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Checks every parameter of `store` against central finite differences of
/// the scalar produced by `build`. Returns the number of scalar entries
/// checked.
pub fn grad_check(
    store: &mut ParamStore,
    build: &dyn Fn(&mut Tape, &[Var]) -> Var,
    tol: f64,
    label: &str,
) -> usize {
    let run = |store: &ParamStore| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = store
            .ids()
            .map(|id| tape.param(id, store.value(id)).unwrap())
            .collect();
        let loss = build(&mut tape, &vars);
        tape.scalar(loss)
    };

    store.clear_grads();
    {
        let mut tape = Tape::new();
        let vars: Vec<Var> = store
            .ids()
            .map(|id| tape.param(id, store.value(id)).unwrap())
            .collect();
        let loss = build(&mut tape, &vars);
        tape.backward(loss, store).unwrap();
    }
    let analytic: Vec<Matrix> = store
        .ids()
        .map(|id| store.grad(id).unwrap().clone())
        .collect();
    store.clear_grads();

    let mut checked = 0usize;
    for (pi, id) in store.ids().enumerate().collect::<Vec<_>>() {
        for i in 0..store.value(id).len() {
            let original = store.value(id).as_slice()[i];
            store.value_mut(id).as_mut_slice()[i] = original + FD_EPS;
            let plus = run(store);
            store.value_mut(id).as_mut_slice()[i] = original - FD_EPS;
            let minus = run(store);
            store.value_mut(id).as_mut_slice()[i] = original;
            let numeric = (plus - minus) / (2.0 * FD_EPS);
            let a = analytic[pi].as_slice()[i];
            assert!(
                rel_err(a, numeric) <= tol,
                "{label}: param {pi} entry {i}: analytic {a} vs numeric {numeric}"
            );
            checked += 1;
        }
    }
    checked
}

/// Weighted-sum readout so every output entry gets a distinct gradient.
pub fn weighted_sum(tape: &mut Tape, out: Var, weights: &Matrix) -> Var {
    let w = tape.constant(weights.clone()).unwrap();
    let prod = tape.mul(out, w).unwrap();
    tape.sum_all(prod).unwrap()
}

/// Finite-difference checks for every tape primitive. Returns the number of
/// scalar gradient entries verified.
pub fn primitive_battery(tol: f64) -> usize {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut total = 0usize;

    {
        let mut store = ParamStore::new();
        store.add("a", smooth_random(&mut rng, 3, 4));
        store.add("b", smooth_random(&mut rng, 4, 2));
        let w = smooth_random(&mut rng, 3, 2);
        total += grad_check(
            &mut store,
            &move |tape, vars| {
                let out = tape.matmul(vars[0], vars[1]).unwrap();
                weighted_sum(tape, out, &w)
            },
            tol,
            "matmul",
        );
    }
    {
        let mut store = ParamStore::new();
        store.add("a", smooth_random(&mut rng, 3, 3));
        store.add("b", smooth_random(&mut rng, 3, 3));
        let w = smooth_random(&mut rng, 3, 3);
        total += grad_check(
            &mut store,
            &move |tape, vars| {
                let s = tape.add(vars[0], vars[1]).unwrap();
                let d = tape.sub(s, vars[1]).unwrap();
                let m = tape.mul(d, vars[1]).unwrap();
                weighted_sum(tape, m, &w)
            },
            tol,
            "add/sub/mul",
        );
    }
    {
        let mut store = ParamStore::new();
        store.add("a", smooth_random(&mut rng, 2, 3));
        store.add("b", smooth_random(&mut rng, 2, 2));
        let w = smooth_random(&mut rng, 4, 5);
        total += grad_check(
            &mut store,
            &move |tape, vars| {
                let top = tape.concat_cols(&[vars[0], vars[1]]).unwrap();
                let bottom = tape.concat_cols(&[vars[1], vars[0]]).unwrap();
                let stacked = tape.concat_rows(&[top, bottom]).unwrap();
                weighted_sum(tape, stacked, &w)
            },
            tol,
            "concat",
        );
    }
    {
        let mut store = ParamStore::new();
        store.add("x", smooth_random(&mut rng, 4, 3));
        store.add("s", smooth_random(&mut rng, 4, 1));
        let w = smooth_random(&mut rng, 4, 3);
        total += grad_check(
            &mut store,
            &move |tape, vars| {
                let scaled = tape.scale_rows(vars[0], vars[1]).unwrap();
                let c = tape.scale(scaled, -0.75).unwrap();
                let shifted = tape.add_scalar(c, 0.3).unwrap();
                weighted_sum(tape, shifted, &w)
            },
            tol,
            "scale_rows/scale/add_scalar",
        );
    }
    {
        let mut store = ParamStore::new();
        store.add("x", smooth_random(&mut rng, 3, 5));
        let w = smooth_random(&mut rng, 3, 5);
        total += grad_check(
            &mut store,
            &move |tape, vars| {
                let r = tape.relu(vars[0]).unwrap();
                let t = tape.tanh(r).unwrap();
                let s = tape.sigmoid(t).unwrap();
                weighted_sum(tape, s, &w)
            },
            tol,
            "relu/tanh/sigmoid",
        );
    }
    {
        let mut store = ParamStore::new();
        store.add("x", smooth_random(&mut rng, 4, 4));
        let w = smooth_random(&mut rng, 4, 4);
        total += grad_check(
            &mut store,
            &move |tape, vars| {
                let mut mask_rng = StdRng::seed_from_u64(5150);
                let d = tape.dropout(vars[0], 0.4, true, &mut mask_rng).unwrap();
                weighted_sum(tape, d, &w)
            },
            tol,
            "dropout",
        );
    }
    {
        let mut store = ParamStore::new();
        store.add("x", smooth_random(&mut rng, 3, 4));
        store.add("row", smooth_random(&mut rng, 1, 4));
        let w = smooth_random(&mut rng, 5, 4);
        total += grad_check(
            &mut store,
            &move |tape, vars| {
                let picked = tape.row_select(vars[0], &[2, 0, 2]).unwrap();
                let tiled = tape.tile_rows(vars[1], 2).unwrap();
                let stacked = tape.concat_rows(&[picked, tiled]).unwrap();
                weighted_sum(tape, stacked, &w)
            },
            tol,
            "row_select/tile_rows",
        );
    }
    {
        let map = ColumnMap::new(3, vec![2, 0, 2, 1, 0]).unwrap();
        let mut store = ParamStore::new();
        store.add("edges", smooth_random(&mut rng, 5, 3));
        store.add("nodes", smooth_random(&mut rng, 3, 3));
        let w1 = smooth_random(&mut rng, 3, 3);
        let w2 = smooth_random(&mut rng, 5, 3);
        let map2 = map.clone();
        total += grad_check(
            &mut store,
            &move |tape, vars| {
                let pooled = tape.sparse_matmul(&map, vars[0]).unwrap();
                let a = weighted_sum(tape, pooled, &w1);
                let gathered = tape.sparse_matmul_t(&map2, vars[1]).unwrap();
                let b = weighted_sum(tape, gathered, &w2);
                tape.add(a, b).unwrap()
            },
            tol,
            "sparse_matmul",
        );
    }
    {
        let d = 4;
        let mut store = ParamStore::new();
        for name in ["x", "h", "w_xr", "w_hr", "w_xz", "w_hz", "w_xn", "w_hn"] {
            let rows = if name == "x" || name == "h" { 1 } else { d };
            store.add(name, smooth_random(&mut rng, rows, d));
        }
        for name in ["b_r", "b_z", "b_n"] {
            store.add(name, smooth_random(&mut rng, 1, d));
        }
        let w = smooth_random(&mut rng, 1, d);
        total += grad_check(
            &mut store,
            &move |tape, vars| {
                let cell = GruCellVars {
                    w_xr: vars[2],
                    w_hr: vars[3],
                    w_xz: vars[4],
                    w_hz: vars[5],
                    w_xn: vars[6],
                    w_hn: vars[7],
                    b_r: vars[8],
                    b_z: vars[9],
                    b_n: vars[10],
                };
                let out = gru_cell(tape, vars[0], vars[1], &cell).unwrap();
                weighted_sum(tape, out, &w)
            },
            tol,
            "gru_cell",
        );
    }
    total
}

/// Five-node subgraphs extracted from a small graph so labels and incidence
/// come from the real pipeline.
pub fn five_node_pair() -> (relpred_core::Subgraph, relpred_core::Subgraph) {
    // three parallel two-step paths head -> {2, 3, 4} -> tail plus context
    // nodes outside the neighborhood intersection
    let g = Graph::from_ids(
        7,
        3,
        &[
            (0, 1, 2),
            (2, 1, 1),
            (0, 2, 3),
            (3, 0, 1),
            (0, 0, 4),
            (4, 2, 1),
            (3, 1, 2),
            (5, 0, 0),
            (1, 2, 6),
            (0, 0, 1),
        ],
    );
    let pos = extract_directed(&g, Triplet::new(0, 0, 1), 2, 100)
        .unwrap()
        .expect("positive subgraph");
    assert_eq!(pos.num_nodes(), 5);
    let neg = extract_directed(&g, Triplet::new(0, 2, 1), 2, 100)
        .unwrap()
        .expect("negative subgraph");
    assert_eq!(neg.num_nodes(), 5);
    (pos, neg)
}

/// End-to-end check: the margin loss of a train-mode forward pass over two
/// five-node subgraphs, every parameter perturbed. Returns the number of
/// scalar entries verified.
pub fn end_to_end_battery(tol: f64) -> usize {
    let (pos_sub, neg_sub) = five_node_pair();
    let config = ModelConfig {
        hop: 2,
        iters: 3,
        dim: 6,
        score_hidden: 4,
        edge_dropout: 0.3,
        ..ModelConfig::default()
    };
    let mut init_rng = StdRng::seed_from_u64(77);
    let mut params = ModelParams::init(config, 3, &mut init_rng).unwrap();

    let loss = |params: &ModelParams| -> f64 {
        let mut dropout_rng = StdRng::seed_from_u64(4242);
        let mut tape = Tape::new();
        let mut phase = Phase::Train {
            rng: &mut dropout_rng,
        };
        let p = forward(&mut tape, &pos_sub, params, &mut phase).unwrap();
        let n = forward(&mut tape, &neg_sub, params, &mut phase).unwrap();
        let l = margin_loss(&mut tape, p, &[n], 10.0).unwrap();
        tape.scalar(l)
    };

    params.store_mut().clear_grads();
    {
        let mut dropout_rng = StdRng::seed_from_u64(4242);
        let mut tape = Tape::new();
        let mut phase = Phase::Train {
            rng: &mut dropout_rng,
        };
        let p = forward(&mut tape, &pos_sub, &params, &mut phase).unwrap();
        let n = forward(&mut tape, &neg_sub, &params, &mut phase).unwrap();
        let l = margin_loss(&mut tape, p, &[n], 10.0).unwrap();
        tape.backward(l, params.store_mut()).unwrap();
    }
    let ids: Vec<_> = params.store().ids().collect();
    let analytic: Vec<Matrix> = ids
        .iter()
        .map(|&id| params.store().grad(id).unwrap().clone())
        .collect();
    params.store_mut().clear_grads();

    let mut checked = 0usize;
    for (pi, &id) in ids.iter().enumerate() {
        let name = params.store().name(id).to_string();
        for i in 0..params.store().value(id).len() {
            let original = params.store().value(id).as_slice()[i];
            params.store_mut().value_mut(id).as_mut_slice()[i] = original + FD_EPS;
            let plus = loss(&params);
            params.store_mut().value_mut(id).as_mut_slice()[i] = original - FD_EPS;
            let minus = loss(&params);
            params.store_mut().value_mut(id).as_mut_slice()[i] = original;
            let numeric = (plus - minus) / (2.0 * FD_EPS);
            let a = analytic[pi].as_slice()[i];
            assert!(
                rel_err(a, numeric) <= tol,
                "{name}[{i}]: analytic {a} vs numeric {numeric} (rel {})",
                rel_err(a, numeric)
            );
            checked += 1;
        }
    }
    checked
}
