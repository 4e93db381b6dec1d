mod common;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use silvar::baselines::FixedLink;
use silvar::evaluation::{
    embed, grid_search, rmse, split_indices, support_metrics, synthesize, FitKind, GridSpec, SplitSpec,
    SyntheticLink, SyntheticSpec,
};
use silvar::model::{Dataset, ModelLink, SilvarModel, Standardization};
use silvar::prox::{rank, RegularizerConfig, SparseStructure};
use silvar::solver::{fit, SolverConfig};

use common::gaussian;

fn reg() -> RegularizerConfig {
    RegularizerConfig {
        lambda_sparse: 0.0,
        lambda_lowrank: 0.0,
        sparse_structure: SparseStructure::ElementwiseL1,
        lag_count: 1,
    }
}

#[test]
fn rmse_matches_naive_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (r, c) = (rng.random_range(1..6), rng.random_range(1..6));
        let a = gaussian(r, c, &mut rng);
        let b = gaussian(r, c, &mut rng);
        let mut acc = 0.0;
        for i in 0..r {
            for j in 0..c {
                acc += (a[(i, j)] - b[(i, j)]).powi(2);
            }
        }
        let want = (acc / (r * c) as f64).sqrt();
        assert!((rmse(&a, &b).unwrap() - want).abs() < 1e-14);
    }
}

#[test]
fn support_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let t = gaussian(4, 5, &mut rng).map(|v| if v.abs() < 0.8 { 0.0 } else { v });
        let h = gaussian(4, 5, &mut rng).map(|v| if v.abs() < 0.8 { 0.0 } else { v });
        let thr = rng.random_range(0.0..0.5);
        let truth: Vec<bool> = t.iter().map(|v| v.abs() > thr).collect();
        let pred: Vec<bool> = h.iter().map(|v| v.abs() > thr).collect();
        let tp = truth.iter().zip(&pred).filter(|(a, b)| **a && **b).count() as f64;
        let npred = pred.iter().filter(|v| **v).count() as f64;
        let ntrue = truth.iter().filter(|v| **v).count() as f64;
        let s = support_metrics(&h, &t, thr).unwrap();
        if npred > 0.0 {
            assert_eq!(s.precision, tp / npred);
        }
        if ntrue > 0.0 {
            assert_eq!(s.recall, tp / ntrue);
        }
        if npred > 0.0 && ntrue > 0.0 && tp > 0.0 {
            assert!((s.f1 - 2.0 * tp / (npred + ntrue)).abs() < 1e-14);
        }
    }
}

#[test]
fn splits_partition_without_overlap() {
    let split = SplitSpec {
        train_count: 30,
        validation_count: 20,
        test_count: 10,
        shuffle_seed: 4,
    };
    for temporal in [false, true] {
        let (a, b, c) = split_indices(&split, 70, temporal).unwrap();
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        assert_eq!(all.len(), 60);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 60);
        if temporal {
            assert_eq!(a, (0..30).collect::<Vec<_>>());
            assert_eq!(c, (50..60).collect::<Vec<_>>());
        }
    }
    assert!(split_indices(&split, 59, false).is_err());
}

#[test]
fn one_cell_grid_matches_direct_fit() {
    let data = synthesize(&SyntheticSpec {
        m: 5,
        p: 6,
        n: 150,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .dataset;
    let split = SplitSpec {
        train_count: 80,
        validation_count: 40,
        test_count: 30,
        shuffle_seed: 9,
    };
    let grid = GridSpec { exponents: vec![-4] };
    let solver = SolverConfig::default();
    let res = grid_search(&data, &split, &grid, &reg(), &solver, FitKind::Silvar, 2).unwrap();
    assert_eq!(res.table.len(), 1);

    let (tr, va, te) = split_indices(&split, data.n(), false).unwrap();
    let train = data.select(&tr).unwrap();
    let lam = 10f64.powf(-1.0);
    let direct_reg = RegularizerConfig {
        lambda_sparse: lam,
        lambda_lowrank: lam,
        ..reg()
    };
    let (model, _) = fit(&train, &direct_reg, &solver).unwrap();
    assert_eq!(res.best_model, model);
    let val = data.select(&va).unwrap();
    let test = data.select(&te).unwrap();
    assert_eq!(res.table[0].val_rmse, rmse(&model.predict(val.x()).unwrap(), val.y()).unwrap());
    assert_eq!(res.test_rmse(), rmse(&model.predict(test.x()).unwrap(), test.y()).unwrap());
}

#[test]
fn noise_only_data_selects_empty_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = Dataset::new(gaussian(10, 120, &mut rng), gaussian(4, 120, &mut rng)).unwrap();
    let split = SplitSpec {
        train_count: 40,
        validation_count: 40,
        test_count: 40,
        shuffle_seed: 0,
    };
    let grid = GridSpec {
        exponents: vec![-8, -4, 0, 4, 8, 12],
    };
    for kind in [FitKind::Silvar, FitKind::Glm(FixedLink::Identity)] {
        let res = grid_search(&data, &split, &grid, &reg(), &SolverConfig::default(), kind, 1).unwrap();
        assert!(res.best_model.a.iter().all(|v| *v == 0.0), "{kind:?}");
        assert!(res.best_model.l.iter().all(|v| *v == 0.0), "{kind:?}");
        // every all-zero cell ties, so the largest penalties win
        assert_eq!(res.best_pair(), (1000.0, 1000.0));
        let filled = res.table.iter().filter(|r| r.test_rmse.is_some()).count();
        assert_eq!(filled, 1);
    }
}

fn model_with_l(l: DMatrix<f64>) -> SilvarModel {
    let (m, p) = l.shape();
    SilvarModel::new(
        ModelLink::Fixed(FixedLink::Identity),
        DMatrix::zeros(m, p),
        l,
        1,
        Standardization::identity(p),
    )
    .unwrap()
}

#[test]
fn embedding_ignores_left_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let l = gaussian(5, 2, &mut rng) * gaussian(2, 7, &mut rng);
        let q = gaussian(5, 5, &mut rng).qr().q();
        let x = gaussian(7, 12, &mut rng);
        let e1 = embed(&model_with_l(l.clone()), &x, 2).unwrap();
        let e2 = embed(&model_with_l(&q * &l), &x, 2).unwrap();
        for k in 0..2 {
            let same = (e1.row(k) - e2.row(k)).norm();
            let flipped = (e1.row(k) + e2.row(k)).norm();
            assert!(same.min(flipped) < 1e-9 * e1.row(k).norm().max(1.0));
        }
    }
}

#[test]
fn embedding_rejects_bad_rank_and_handles_zero() {
    let m = model_with_l(DMatrix::zeros(3, 4));
    assert!(embed(&m, &DMatrix::zeros(4, 2), 0).is_err());
    assert!(embed(&m, &DMatrix::zeros(4, 2), 4).is_err());
    assert_eq!(embed(&m, &DMatrix::from_element(4, 2, 1.0), 2).unwrap(), DMatrix::zeros(2, 2));
}

#[test]
fn synthetic_ground_truth_invariants() {
    for seed in 0..5 {
        for rank_target in [0, 1, 3] {
            let spec = SyntheticSpec {
                m: 8,
                p: 6,
                n: 40,
                sparsity: 0.15,
                rank: rank_target,
                link_kind: SyntheticLink::ScaledSoftplus,
                noise_std: 0.0,
                seed,
            };
            let s = synthesize(&spec).unwrap();
            let nz: Vec<f64> = s.a_true.iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), spec.nonzero_count());
            assert_eq!(spec.nonzero_count(), 8);
            assert!(nz.iter().all(|v| (0.25..=1.0).contains(&v.abs())));
            assert_eq!(rank(&s.l_true).unwrap(), rank_target);
            if rank_target > 0 {
                assert!((s.l_true.norm() - 0.5 * s.a_true.norm()).abs() < 1e-10);
            }
            let theta = (&s.a_true + &s.l_true) * s.dataset.x();
            let expect = theta.map(|t| SyntheticLink::ScaledSoftplus.evaluate(t));
            assert!((expect - s.dataset.y()).abs().max() < 1e-12);
            assert_eq!(synthesize(&spec).unwrap().dataset, s.dataset);
        }
    }
    let bad = SyntheticSpec {
        rank: 30,
        ..SyntheticSpec::default()
    };
    assert!(synthesize(&bad).is_err());
}
