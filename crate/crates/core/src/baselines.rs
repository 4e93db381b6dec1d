//! Comparison models: a fixed-link sparse plus low-rank GLM and a sparse SIM without `L`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Dataset, SilvarModel};
use crate::prox::RegularizerConfig;
use crate::solver::{fit_with_policy, FitReport, LinkPolicy, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedLink {
    Identity,
    /// `log(1 + e^x)`
    Softplus,
}

impl FixedLink {
    #[inline]
    pub fn evaluate(self, theta: f64) -> f64 {
        match self {
            FixedLink::Identity => theta,
            FixedLink::Softplus => softplus(theta),
        }
    }

    /// Integral of the link from 0 to `theta`.
    pub fn antiderivative(self, theta: f64) -> f64 {
        match self {
            FixedLink::Identity => 0.5 * theta * theta,
            FixedLink::Softplus => softplus_integral(theta),
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

// 8-point Gauss-Legendre rule on [-1, 1].
const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Beyond this the tail `log1p(e^-t)` integrates to less than 5e-18.
const TAIL_CUTOFF: usize = 40;

fn tail_integrand(t: f64) -> f64 {
    (-t).exp().ln_1p()
}

fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        acc += w * (f(mid - half * x) + f(mid + half * x));
    }
    acc * half
}

/// `I(k) = integral_0^k log1p(e^-t) dt` for integer `k`, built from unit panels.
fn tail_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = vec![0.0; TAIL_CUTOFF + 1];
        for k in 1..=TAIL_CUTOFF {
            table[k] = table[k - 1] + gauss_legendre((k - 1) as f64, k as f64, tail_integrand);
        }
        table
    })
}

fn tail_integral(a: f64) -> f64 {
    let table = tail_table();
    if a >= TAIL_CUTOFF as f64 {
        return table[TAIL_CUTOFF];
    }
    let k = a.floor() as usize;
    let partial = if a > k as f64 {
        gauss_legendre(k as f64, a, tail_integrand)
    } else {
        0.0
    };
    table[k] + partial
}

/// `integral_0^theta log(1 + e^t) dt`, via `softplus(t) = max(t, 0) + log1p(e^-|t|)`.
pub fn softplus_integral(theta: f64) -> f64 {
    let i = tail_integral(theta.abs());
    if theta >= 0.0 {
        0.5 * theta * theta + i
    } else {
        -i
    }
}

/// Sparse plus low-rank model with the link frozen to `link`.
pub fn fit_glm(
    data: &Dataset,
    link: FixedLink,
    reg: &RegularizerConfig,
    solver: &SolverConfig,
) -> Result<(SilvarModel, FitReport)> {
    fit_with_policy(data, reg, solver, LinkPolicy::Fixed(link))
}

/// Learned-link fit with the low-rank component clamped to zero.
pub fn fit_sparse_sim(
    data: &Dataset,
    reg: &RegularizerConfig,
    solver: &SolverConfig,
) -> Result<(SilvarModel, FitReport)> {
    let clamped = RegularizerConfig {
        lambda_lowrank: f64::INFINITY,
        ..*reg
    };
    fit_with_policy(data, &clamped, solver, LinkPolicy::Learned)
}
