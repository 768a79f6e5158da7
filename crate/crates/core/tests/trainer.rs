use ndarray::{Array2, ArrayView2};
use nlunmix_core::aecmodel::{build_network, AecParams, Variant};
use nlunmix_core::diffcore::{grad_check, Tensor};
use nlunmix_core::metrics::align_columns;
use nlunmix_core::simdata::{
    lmm_mix, sample_dirichlet_abundances, synth_endmembers, EndmemberMatrix, HsiCube, Provenance,
};
use nlunmix_core::trainer::{grid_search, loss, loss_and_grads, train, train_from, Grid, TrainConfig};
use nlunmix_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-line reference for the objective: explicit loops, no tape, no
/// shared forward code with the model.
#[allow(clippy::needless_range_loop)]
fn reference_loss(y: ArrayView2<'_, f64>, p: &AecParams, cfg: &TrainConfig) -> f64 {
    let (l, k) = (p.bands(), p.endmembers());
    let m = p.m().values();
    let m0 = p.m0().values();
    let leaky = |x: f64| if x >= 0.0 { x } else { 0.01 * x };
    let mlp = |layers: &[nlunmix_core::aecmodel::Dense], x: Vec<f64>| -> Vec<f64> {
        let mut h = x;
        for (i, layer) in layers.iter().enumerate() {
            let w = layer.weight().values();
            let mut out = vec![0.0; w.ncols()];
            for (j, o) in out.iter_mut().enumerate() {
                for (r, hv) in h.iter().enumerate() {
                    *o += hv * w[[r, j]];
                }
                if let Some(b) = layer.bias() {
                    *o += b.values()[[0, j]];
                }
            }
            if i + 1 < layers.len() {
                out.iter_mut().for_each(|v| *v = leaky(*v));
            }
            h = out;
        }
        h
    };
    let mut data = 0.0;
    for row in y.rows() {
        let yv = row.to_vec();
        let mut pre = mlp(p.encoder().layers(), yv.clone());
        if let (Some(q), Some(alpha)) = (p.q(), p.alpha_raw()) {
            for i in 0..k {
                let mut s = 0.0;
                for j in 0..l {
                    s += q.values()[[i, j]] * yv[j];
                }
                pre[i] += alpha.values()[[0, i]].abs() * s;
            }
        }
        let total: f64 = pre.iter().map(|v| v.abs()).sum();
        let a: Vec<f64> = pre.iter().map(|v| v.abs() / total).collect();
        let mut input = a.clone();
        for c in 0..k {
            for r in 0..l {
                input.push(m[[r, c]]);
            }
        }
        let mut out = mlp(p.decoder().layers(), input);
        if p.variant() != Variant::Mfaec {
            for r in 0..l {
                for c in 0..k {
                    out[r] += m[[r, c]] * a[c];
                }
            }
        }
        for r in 0..l {
            let d = yv[r] - out[r].max(0.0);
            data += d * d;
        }
    }
    data /= y.nrows() as f64;

    let mut w = 0.0;
    for layer in p.encoder().layers().iter().chain(p.decoder().layers()) {
        w += layer.weight().values().iter().map(|v| v * v).sum::<f64>();
        if let Some(b) = layer.bias() {
            w += b.values().iter().map(|v| v * v).sum::<f64>();
        }
    }
    let mut rm = 0.0;
    for c in 0..k {
        let (mut dot, mut n1, mut n0) = (0.0, 0.0, 0.0);
        for r in 0..l {
            dot += m[[r, c]] * m0[[r, c]];
            n1 += m[[r, c]] * m[[r, c]];
            n0 += m0[[r, c]] * m0[[r, c]];
        }
        let cos = dot / (n1.sqrt() * n0.sqrt());
        rm += if cfg.literal_cosine { cos } else { 1.0 - cos };
    }
    let mut lq = 0.0;
    if let Some(q) = p.q() {
        let q = q.values();
        for c in 0..k {
            for j in 0..l {
                let mut v = -m[[j, c]];
                for a in 0..k {
                    let mut mtm = 0.0;
                    for r in 0..l {
                        mtm += m[[r, c]] * m[[r, a]];
                    }
                    v += mtm * q[[a, j]];
                }
                lq += v * v;
            }
        }
    }
    data + cfg.lambda_w * w + cfg.lambda_m * rm + cfg.lambda_q * lq
}

fn perturbed(variant: Variant, l: usize, p: usize, seed: u64) -> AecParams {
    let m = synth_endmembers(l, p, seed).unwrap();
    let mut params = build_network(&m, variant, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    params.m_mut().mapv_inplace(|v| v + rng.random_range(-0.05..0.05));
    if let Some(mut q) = params.q_mut() {
        q.mapv_inplace(|v| v + rng.random_range(-0.1..0.1));
    }
    if let Some(mut a) = params.alpha_raw_mut() {
        a.mapv_inplace(|_| rng.random_range(0.5..1.5));
    }
    for decoder in [false, true] {
        let mlp = if decoder {
            params.decoder_mut()
        } else {
            params.encoder_mut()
        };
        for layer in mlp.layers_mut() {
            if let Some(mut b) = layer.bias_mut() {
                b.mapv_inplace(|_| rng.random_range(-0.1..0.1));
            }
        }
    }
    params
}

fn pixels(n: usize, l: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, l), || rng.random_range(0.05..0.9))
}

fn cfg_all_terms() -> TrainConfig {
    TrainConfig {
        lambda_q: 0.7,
        lambda_w: 0.03,
        lambda_m: 0.4,
        ..TrainConfig::default()
    }
}

#[test]
fn loss_matches_straight_line_reference() {
    for variant in Variant::ALL {
        let p = perturbed(variant, 12, 3, 5);
        let y = pixels(8, 12, 6);
        for literal in [false, true] {
            let cfg = TrainConfig {
                literal_cosine: literal,
                ..cfg_all_terms()
            };
            let got = loss(y.view(), &p, &cfg).unwrap();
            let want = reference_loss(y.view(), &p, &cfg);
            assert!(
                (got.total - want).abs() <= 1e-10 * want.abs().max(1.0),
                "{variant}: {} vs {want}",
                got.total
            );
            let sum = got.data + got.rw + got.rm + got.lq;
            assert!((sum - got.total).abs() < 1e-9);
        }
    }
}

#[test]
fn loss_terms_nonnegative() {
    for variant in Variant::ALL {
        let t = loss(pixels(8, 12, 1).view(), &perturbed(variant, 12, 3, 2), &cfg_all_terms()).unwrap();
        assert!(t.data >= 0.0 && t.rw >= 0.0 && t.rm >= 0.0 && t.lq >= 0.0, "{t:?}");
    }
}

#[test]
fn perfect_linear_model_has_zero_loss() {
    let m = synth_endmembers(12, 3, 3).unwrap();
    let a = sample_dirichlet_abundances(16, 3, 1.0, 1).unwrap();
    let y = lmm_mix(m.view(), a.view(), None).unwrap();
    let mut p = build_network(&m, Variant::Macu, 0).unwrap();
    p.zero_nonlinear();
    let t = loss(y.view(), &p, &cfg_all_terms()).unwrap();
    assert!(t.total.abs() < 1e-20, "{t:?}");
}

#[test]
fn orthonormal_endmembers_zero_pinv_penalty() {
    let mut data = Array2::zeros((6, 2));
    data[[0, 0]] = 0.6;
    data[[1, 0]] = 0.8;
    data[[2, 1]] = 1.0;
    let m = EndmemberMatrix::new(data, Provenance::Loaded).unwrap();
    let p = build_network(&m, Variant::Macu, 0).unwrap();
    let t = loss(pixels(4, 6, 1).view(), &p, &cfg_all_terms()).unwrap();
    assert!(t.lq < 1e-28, "{}", t.lq);
}

/// Gradients of every trainable tensor for every variant against central
/// differences.
#[test]
fn full_objective_gradients_match_finite_differences() {
    let y = pixels(8, 12, 11);
    for variant in Variant::ALL {
        let base = perturbed(variant, 12, 3, 21);
        let cfg = cfg_all_terms();
        let start: Vec<Tensor> = base.trainables().into_iter().cloned().collect();
        let err = grad_check(
            |ts| {
                let mut p = base.clone();
                p.set_trainables(ts.to_vec()).unwrap();
                let (t, g) = loss_and_grads(y.clone(), &p, &cfg).unwrap();
                Ok((t.total, g))
            },
            &start,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{variant}: {err}");
    }
}

fn lmm_cube(l: usize, p: usize, n: usize, seed: u64) -> (EndmemberMatrix, Array2<f64>, HsiCube) {
    let m = synth_endmembers(l, p, seed).unwrap();
    let a = sample_dirichlet_abundances(n, p, 1.0, seed + 1).unwrap();
    let y = lmm_mix(m.view(), a.view(), None).unwrap();
    (m, a.into_data(), y)
}

#[test]
fn training_recovers_noiseless_lmm_abundances() {
    let (m, a, y) = lmm_cube(50, 3, 1000, 4);
    let cfg = TrainConfig {
        lambda_w: 1.0,
        learning_rate: 1e-3,
        stop_threshold: 1e-3,
        seed: 3,
        ..TrainConfig::default()
    };
    let (p, h) = train(&y, &m, Variant::Macu, &cfg).unwrap();
    let est = p.encode(y.view()).unwrap();
    let r = align_columns(est.view(), a.view()).unwrap().rmse;
    assert!(r < 0.05, "rmse {r} after {} epochs", h.len());
}

#[test]
fn stopping_never_before_second_epoch() {
    let (m, _, y) = lmm_cube(20, 3, 64, 1);
    let cfg = TrainConfig {
        batch_size: 32,
        stop_threshold: 1e6,
        ..TrainConfig::default()
    };
    let (_, h) = train(&y, &m, Variant::Nfaec, &cfg).unwrap();
    assert_eq!(h.len(), 2);
}

#[test]
fn max_epochs_caps_training() {
    let (m, _, y) = lmm_cube(20, 3, 64, 1);
    let cfg = TrainConfig {
        batch_size: 30,
        stop_threshold: 1e-300,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let (_, h) = train(&y, &m, Variant::Macu, &cfg).unwrap();
    assert_eq!(h.len(), 3);
    let csv = h.to_csv();
    assert!(csv.starts_with("epoch,total,data,rw,rm,lq,seconds\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn training_is_deterministic() {
    let (m, _, y) = lmm_cube(20, 3, 100, 2);
    let cfg = TrainConfig {
        batch_size: 16,
        max_epochs: 4,
        ..TrainConfig::default()
    };
    let (p1, h1) = train(&y, &m, Variant::Macu, &cfg).unwrap();
    let (p2, h2) = train(&y, &m, Variant::Macu, &cfg).unwrap();
    assert_eq!(h1.losses(), h2.losses());
    assert_eq!(p1, p2);
}

#[test]
fn too_few_pixels_rejected() {
    let (m, _, y) = lmm_cube(20, 3, 10, 2);
    assert!(matches!(
        train(&y, &m, Variant::Macu, &TrainConfig::default()),
        Err(Error::Invalid(_))
    ));
}

#[test]
fn divergence_reports_history() {
    let (m, _, y) = lmm_cube(20, 3, 64, 2);
    let cfg = TrainConfig {
        batch_size: 16,
        learning_rate: 1e200,
        max_epochs: 5,
        ..TrainConfig::default()
    };
    match train(&y, &m, Variant::Macu, &cfg) {
        Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.1)),
    }
}

#[test]
fn pinv_penalty_pulls_random_q_back() {
    let (m, _, y) = lmm_cube(20, 3, 256, 7);
    let mut p = build_network(&m, Variant::Macu, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    p.q_mut().unwrap().mapv_inplace(|_| rng.random_range(-1.0..1.0));
    let start = p.pinv_residual().unwrap();
    let cfg = TrainConfig {
        lambda_q: 1.0,
        learning_rate: 1e-3,
        batch_size: 32,
        max_epochs: 30,
        stop_threshold: 1e-9,
        ..TrainConfig::default()
    };
    let (trained, _) = train_from(p, &y, &cfg).unwrap();
    let end = trained.pinv_residual().unwrap();
    assert!(end < start, "{end} >= {start}");
}

#[test]
fn heavier_weight_decay_gives_smaller_weights() {
    let (m, _, y) = lmm_cube(20, 3, 128, 3);
    let run = |lambda_w| {
        let cfg = TrainConfig {
            lambda_w,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 10,
            stop_threshold: 1e-9,
            ..TrainConfig::default()
        };
        train(&y, &m, Variant::Macu, &cfg).unwrap().0.mlp_norm_sq()
    };
    assert!(run(1.0) <= run(1e-6));
}

#[test]
fn grid_sizes() {
    assert_eq!(Grid::default().len(), 54);
    assert_eq!(Grid::default().configs(&TrainConfig::default()).len(), 54);
    assert_eq!(Grid::reduced().len(), 8);
}

#[test]
fn single_cell_grid_returns_that_cell() {
    let (m, a, y) = lmm_cube(20, 3, 64, 2);
    let cfg = TrainConfig {
        batch_size: 32,
        max_epochs: 2,
        lambda_q: 0.5,
        ..TrainConfig::default()
    };
    let truth = nlunmix_core::simdata::AbundanceMatrix::new(a, None).unwrap();
    let g = grid_search(&y, &m, Variant::Macu, &Grid::single(&cfg), &cfg, Some(&truth)).unwrap();
    assert_eq!(g.cells.len(), 1);
    assert_eq!(g.best, 0);
    assert_eq!(g.best_config(), &cfg);
}

#[test]
fn grid_selects_minimum_abundance_error() {
    let (m, a, y) = lmm_cube(20, 3, 64, 2);
    let truth = nlunmix_core::simdata::AbundanceMatrix::new(a, None).unwrap();
    let base = TrainConfig {
        batch_size: 32,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let grid = Grid {
        lambda_q: vec![1e-2, 1.0],
        lambda_w: vec![1e-2],
        lambda_m: vec![1e-2],
        learning_rate: vec![1e-4, 1e-2],
    };
    let g = grid_search(&y, &m, Variant::Macu, &grid, &base, Some(&truth)).unwrap();
    assert_eq!(g.cells.len(), 4);
    let best = g.best_scores().rmse_a.unwrap();
    for c in &g.cells {
        assert!(best <= c.scores().unwrap().rmse_a.unwrap());
    }
    // without truth the reconstruction error decides
    let g = grid_search(&y, &m, Variant::Macu, &grid, &base, None).unwrap();
    let best = g.best_scores().rmse_y;
    assert!(g.cells.iter().all(|c| best <= c.scores().unwrap().rmse_y));
}

#[test]
fn all_cells_diverging_is_an_error() {
    let (m, _, y) = lmm_cube(20, 3, 64, 2);
    let base = TrainConfig {
        batch_size: 16,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let grid = Grid {
        learning_rate: vec![1e200],
        ..Grid::single(&base)
    };
    assert!(matches!(
        grid_search(&y, &m, Variant::Macu, &grid, &base, None),
        Err(Error::AllCellsDiverged)
    ));
}

#[test]
fn lambda_q_cells_share_one_run_without_q() {
    let (m, a, y) = lmm_cube(20, 3, 64, 4);
    let truth = nlunmix_core::simdata::AbundanceMatrix::new(a, None).unwrap();
    let base = TrainConfig {
        batch_size: 32,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let grid = Grid {
        lambda_q: vec![1e-2, 1.0],
        lambda_w: vec![1e-2],
        lambda_m: vec![1e-2, 1.0],
        learning_rate: vec![1e-4],
    };
    for variant in [Variant::Nfaec, Variant::Mfaec] {
        let g = grid_search(&y, &m, variant, &grid, &base, Some(&truth)).unwrap();
        assert_eq!(g.cells.len(), 4);
        for (i, cell) in g.cells.iter().enumerate() {
            // each cell agrees with a standalone run of its own config
            let (params, history) = train(&y, &m, variant, &cell.config).unwrap();
            let s = cell.scores().unwrap();
            assert_eq!(s.epochs, history.len());
            assert_eq!(s.final_loss, history.last().unwrap().terms.total);
            let est = params.encode(y.view()).unwrap();
            assert_eq!(
                s.rmse_a,
                Some(align_columns(est.view(), truth.view()).unwrap().rmse),
                "cell {i}"
            );
        }
        // the λ_Q = 1 duplicates never win over their earlier twins
        assert!(g.cells[g.best].config.lambda_q == 1e-2);
    }
    // with Q the weight matters
    let g = grid_search(&y, &m, Variant::Macu, &grid, &base, Some(&truth)).unwrap();
    assert_ne!(
        g.cells[0].scores().unwrap().final_loss,
        g.cells[2].scores().unwrap().final_loss
    );
}
