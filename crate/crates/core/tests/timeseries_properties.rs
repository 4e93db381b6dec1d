mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use silvar::link::LinkFunction;
use silvar::model::{ModelLink, SilvarModel, Standardization};
use silvar::timeseries::{build_ar_dataset, group_norms, to_graph, TimeSeries};

use common::gaussian;

fn lagged_model(a: DMatrix<f64>, lags: usize) -> SilvarModel {
    let cols = a.ncols();
    let rows = a.nrows();
    SilvarModel::new(
        ModelLink::Learned(LinkFunction::constant(0.0).unwrap()),
        a,
        DMatrix::zeros(rows, cols),
        lags,
        Standardization::identity(cols),
    )
    .unwrap()
}

proptest! {
    /// Every sample's inputs are the preceding observations, newest lag first.
    #[test]
    fn ar_rows_reconstruct_the_series(seed in any::<u64>(), m in 1usize..5, lags in 1usize..4, extra in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = lags + extra;
        let ts = TimeSeries::new(gaussian(m, t, &mut rng)).unwrap();
        let d = build_ar_dataset(&ts, lags).unwrap();
        prop_assert_eq!(d.n(), t - lags);
        prop_assert_eq!(d.p(), m * lags);
        for s in 0..d.n() {
            for i in 0..m {
                prop_assert_eq!(d.y()[(i, s)], ts.values()[(i, s + lags)]);
                for lag in 1..=lags {
                    prop_assert_eq!(d.x()[((lag - 1) * m + i, s)], ts.values()[(i, s + lags - lag)]);
                }
            }
        }
    }

    /// Relabelling the nodes permutes the edge list accordingly.
    #[test]
    fn graph_is_permutation_equivariant(seed in any::<u64>(), density in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..7);
        let lags = rng.random_range(1..3);
        // distinct magnitudes so the ranking is unambiguous
        let a = DMatrix::from_fn(m, m * lags, |_, _| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0.1..2.0) });
        let mut perm: Vec<usize> = (0..m).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let permuted = DMatrix::from_fn(m, m * lags, |i, c| {
            let (lag, j) = (c / m, c % m);
            a[(perm[i], lag * m + perm[j])]
        });
        let g1 = to_graph(&lagged_model(a, lags), density).unwrap();
        let g2 = to_graph(&lagged_model(permuted, lags), density).unwrap();
        prop_assert_eq!(g1.edges.len(), g2.edges.len());
        let mut mapped: Vec<(usize, usize, u64)> = g2
            .edges
            .iter()
            .map(|e| (perm[e.source], perm[e.target], e.weight.to_bits()))
            .collect();
        let mut orig: Vec<(usize, usize, u64)> = g1.edges.iter().map(|e| (e.source, e.target, e.weight.to_bits())).collect();
        mapped.sort();
        orig.sort();
        prop_assert_eq!(mapped, orig);
    }

    /// Kept edges number `min(ceil(density * m^2), nonzeros)` and outweigh every dropped one.
    #[test]
    fn edge_budget_and_ranking(seed in any::<u64>(), density in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(1..9);
        let a = gaussian(m, 2 * m, &mut rng).map(|v| if v.abs() < 0.5 { 0.0 } else { v });
        let model = lagged_model(a, 2);
        let norms = group_norms(&model).unwrap();
        let nonzero = norms.iter().filter(|v| **v > 0.0).count();
        let g = to_graph(&model, density).unwrap();
        let budget = (density * (m * m) as f64 - 1e-9).ceil() as usize;
        prop_assert_eq!(g.edges.len(), budget.min(nonzero));
        prop_assert!((g.density - g.edges.len() as f64 / (m * m) as f64).abs() < 1e-15);
        let weakest = g.edges.iter().map(|e| e.weight).fold(f64::INFINITY, f64::min);
        let kept: std::collections::HashSet<(usize, usize)> = g.edges.iter().map(|e| (e.source, e.target)).collect();
        for i in 0..m {
            for j in 0..m {
                if !kept.contains(&(i, j)) {
                    prop_assert!(norms[(i, j)] <= weakest);
                } else {
                    prop_assert!(norms[(i, j)] > 0.0);
                }
            }
        }
    }
}

#[test]
fn density_bounds_are_checked() {
    let model = lagged_model(DMatrix::identity(2, 2), 1);
    assert!(to_graph(&model, 0.0).is_err());
    assert!(to_graph(&model, 1.5).is_err());
    assert!(to_graph(&model, f64::NAN).is_err());
    assert_eq!(to_graph(&model, 1.0).unwrap().edges.len(), 2);
}
