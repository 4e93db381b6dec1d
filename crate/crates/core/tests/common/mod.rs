//! Independent reference solvers and random instance generators shared by the
//! integration tests.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use silvar::baselines::FixedLink;
use silvar::link::LinkFunction;
use silvar::model::{ModelLink, SilvarModel, Standardization};

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Least squares under `0 <= f[i+1] - f[i] <= x[i+1] - x[i]` for `x` sorted ascending,
/// solved by accelerated projected gradient on `(f[0], increments)`.
///
/// Works straight from the sorted samples: tied abscissae simply get a zero-width box.
pub fn box_qp_oracle(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return y.to_vec();
    }
    let gaps: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    // f = f0 + cumsum(d); for fixed d the optimal f0 is the mean residual, so
    // optimize over d alone with f0 eliminated.
    let values = |d: &[f64]| -> Vec<f64> {
        let mut f = vec![0.0; n];
        for i in 1..n {
            f[i] = f[i - 1] + d[i - 1];
        }
        let shift = y.iter().zip(&f).map(|(a, b)| a - b).sum::<f64>() / n as f64;
        f.iter().map(|v| v + shift).collect()
    };
    let grad = |d: &[f64]| -> Vec<f64> {
        let f = values(d);
        // d f_i / d d_k = 1[i > k] - (n - 1 - k) / n; the constant part cancels
        // because the residual has zero mean.
        let r: Vec<f64> = f.iter().zip(y).map(|(a, b)| a - b).collect();
        let mut g = vec![0.0; n - 1];
        let mut tail = 0.0;
        for k in (0..n - 1).rev() {
            tail += r[k + 1];
            g[k] = 2.0 * tail;
        }
        g
    };
    let project = |d: &mut [f64]| {
        for (v, g) in d.iter_mut().zip(&gaps) {
            *v = v.clamp(0.0, *g);
        }
    };
    let objective = |d: &[f64]| -> f64 { values(d).iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum() };
    // Lipschitz bound: 2 * ||C||_2^2 <= 2 * n^2 for the cumulative-sum map.
    let step = 1.0 / (2.0 * (n * n) as f64);
    let mut d = vec![0.0; n - 1];
    let mut z = d.clone();
    let mut t = 1.0f64;
    let mut prev_obj = objective(&d);
    for _ in 0..200_000 {
        let g = grad(&z);
        let mut next: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        project(&mut next);
        let obj = objective(&next);
        if obj > prev_obj {
            // restart momentum
            t = 1.0;
            z = d.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        z = next.iter().zip(&d).map(|(a, b)| a + beta * (a - b)).collect();
        d = next;
        t = t_next;
        prev_obj = obj;
        // stationarity: a plain projected step from d must not move it
        let gd = grad(&d);
        let mut plain: Vec<f64> = d.iter().zip(&gd).map(|(a, b)| a - step * b).collect();
        project(&mut plain);
        let residual: f64 = plain.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual < 1e-15 {
            break;
        }
    }
    values(&d)
}

/// `argmin_a (1/(2n)) ||y - X^T a||^2 + lambda ||a||_1` by cyclic coordinate descent,
/// one row of `y` at a time. `x` is `p x n`, `y` is `m x n`.
pub fn lasso_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let (p, n) = x.shape();
    let m = y.nrows();
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..p).map(|j| x.row(j).norm_squared() / nf).collect();
    let mut out = DMatrix::zeros(m, p);
    for i in 0..m {
        let mut a = vec![0.0; p];
        let mut resid: Vec<f64> = y.row(i).iter().copied().collect();
        for _sweep in 0..100_000 {
            let mut delta: f64 = 0.0;
            for j in 0..p {
                if col_sq[j] == 0.0 {
                    continue;
                }
                let rho: f64 = (0..n).map(|s| x[(j, s)] * resid[s]).sum::<f64>() / nf + col_sq[j] * a[j];
                let new = rho.signum() * (rho.abs() - lambda).max(0.0) / col_sq[j];
                let change = new - a[j];
                if change != 0.0 {
                    for s in 0..n {
                        resid[s] -= change * x[(j, s)];
                    }
                    a[j] = new;
                    delta = delta.max(change.abs());
                }
            }
            if delta < 1e-14 {
                break;
            }
        }
        for j in 0..p {
            out[(i, j)] = a[j];
        }
    }
    out
}

/// Random valid link: increasing knots with increments in `[0, gap]` and boundary
/// slopes in `[0, 1]`.
pub fn random_link(rng: &mut ChaCha8Rng) -> LinkFunction {
    let k = rng.random_range(1..8);
    let mut knots = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    let mut x = rng.random_range(-3.0..0.0);
    let mut v = rng.random_range(-1.0..1.0);
    for i in 0..k {
        if i > 0 {
            let gap = rng.random_range(0.05..1.5);
            x += gap;
            v += gap * rng.random_range(0.0..=1.0);
        }
        knots.push(x);
        values.push(v);
    }
    LinkFunction::new(knots, values, rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)).unwrap()
}

pub fn random_model_link(rng: &mut ChaCha8Rng) -> ModelLink {
    match rng.random_range(0..4) {
        0 => ModelLink::Fixed(FixedLink::Identity),
        1 => ModelLink::Fixed(FixedLink::Softplus),
        _ => ModelLink::Learned(random_link(rng)),
    }
}

/// Random model with `m` responses, `p` inputs per lag and `lags` lag blocks.
pub fn random_model(m: usize, p: usize, lags: usize, rng: &mut ChaCha8Rng) -> SilvarModel {
    let cols = p * lags;
    let a = gaussian(m, cols, rng).map(|v| if v.abs() < 0.7 { 0.0 } else { v * 0.5 });
    let l = gaussian(m, 1, rng) * gaussian(1, cols, rng) * 0.3;
    let standardization = if rng.random_bool(0.5) {
        Standardization::identity(cols)
    } else {
        Standardization {
            mean: (0..cols).map(|_| rng.random_range(-2.0..2.0)).collect(),
            scale: (0..cols).map(|_| rng.random_range(0.5..3.0)).collect(),
        }
    };
    SilvarModel::new(random_model_link(rng), a, l, lags, standardization).unwrap()
}
