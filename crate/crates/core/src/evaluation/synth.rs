use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::softplus;
use crate::error::{Result, SilvarError};
use crate::model::Dataset;

/// Generating links for synthetic data; all are monotone and 1-Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticLink {
    Identity,
    /// `max(x, 0)`
    ClippedLinear,
    /// `softplus(2x) / 2`
    ScaledSoftplus,
}

impl SyntheticLink {
    pub fn evaluate(self, theta: f64) -> f64 {
        match self {
            SyntheticLink::Identity => theta,
            SyntheticLink::ClippedLinear => theta.max(0.0),
            SyntheticLink::ScaledSoftplus => 0.5 * softplus(2.0 * theta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub m: usize,
    pub p: usize,
    pub n: usize,
    pub sparsity: f64,
    pub rank: usize,
    pub link_kind: SyntheticLink,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            m: 20,
            p: 20,
            n: 2000,
            sparsity: 0.1,
            rank: 2,
            link_kind: SyntheticLink::ClippedLinear,
            noise_std: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.p == 0 || self.n == 0 {
            return Err(SilvarError::invalid("synthetic dimensions must be positive"));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(SilvarError::invalid(format!(
                "sparsity must lie in (0, 1], got {}",
                self.sparsity
            )));
        }
        if self.rank > self.m.min(self.p) {
            return Err(SilvarError::invalid(format!(
                "rank {} exceeds min({}, {})",
                self.rank, self.m, self.p
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(SilvarError::invalid("noise_std must be finite and non-negative"));
        }
        Ok(())
    }

    /// Number of nonzeros placed in `A0`.
    pub fn nonzero_count(&self) -> usize {
        let cells = (self.m * self.p) as f64;
        ((self.sparsity * cells - 1e-9).ceil() as usize).clamp(1, self.m * self.p)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub a_true: DMatrix<f64>,
    pub l_true: DMatrix<f64>,
    pub link: SyntheticLink,
}

fn orthonormal_columns(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    g.qr().q().columns(0, cols).into_owned()
}

pub fn synthesize(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let SyntheticSpec { m, p, n, rank, .. } = *spec;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut a = DMatrix::zeros(m, p);
    for idx in sample(&mut rng, m * p, spec.nonzero_count()).into_vec() {
        let magnitude: f64 = rng.random_range(0.25..=1.0);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        a[(idx / p, idx % p)] = sign * magnitude;
    }

    let l = if rank == 0 {
        DMatrix::zeros(m, p)
    } else {
        let u = orthonormal_columns(m, rank, &mut rng);
        let v = orthonormal_columns(p, rank, &mut rng);
        let c = 0.5 * a.norm();
        (u * v.transpose()) * (c / (rank as f64).sqrt())
    };

    let x = DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
    let theta = (&a + &l) * &x;
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| SilvarError::invalid(e.to_string()))?;
    let y = theta.map(|t| spec.link_kind.evaluate(t) + noise.sample(&mut rng));

    Ok(SyntheticData {
        dataset: Dataset::new(x, y)?,
        a_true: a,
        l_true: l,
        link: spec.link_kind,
    })
}
