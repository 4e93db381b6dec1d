//! Joint estimation of the link, the sparse matrix and the low-rank matrix.
//!
//! The data term is the pseudo-likelihood surrogate
//!
//! ```text
//! F(A, L) = (1/n) sum_i [ sum_j G(theta_ji) - y_i^T theta_i ],   theta_i = (A + L) x_i
//! ```
//!
//! where `G` is the antiderivative of the current link (the conjugate terms
//! `G*(y)` are constant in `(A, L)` and are dropped). Each outer iteration
//! refits the link by LMR on the vectorized `(Theta, Y)` pairs and then takes
//! one accelerated proximal-gradient step on `(A, L)` at that fixed link. The
//! gradient with respect to `A` and to `L` is the same matrix
//! `(1/n) (g(Theta) - Y) X^T`.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::FixedLink;
use crate::error::{Result, SilvarError};
use crate::link::lmr_pairs;
use crate::model::{Dataset, ModelLink, SilvarModel, Standardization};
use crate::prox::{penalty_value, RegularizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `t = n / sigma_max(X X^T)` every step.
    FixedSpectral,
    /// Start from the spectral step and shrink until the quadratic upper bound holds.
    #[default]
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub acceleration: bool,
    pub step_rule: StepRule,
    pub backtracking_shrink: f64,
    pub standardize_inputs: bool,
    pub link_update_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            rel_tol: 1e-6,
            acceleration: true,
            step_rule: StepRule::Backtracking,
            backtracking_shrink: 0.5,
            standardize_inputs: true,
            link_update_every: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(SilvarError::invalid("max_iters must be positive"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(SilvarError::invalid("rel_tol must be positive"));
        }
        if !(self.backtracking_shrink > 0.0 && self.backtracking_shrink < 1.0) {
            return Err(SilvarError::invalid("backtracking_shrink must lie in (0, 1)"));
        }
        if self.link_update_every == 0 {
            return Err(SilvarError::invalid("link_update_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Surrogate objective at the start and after every iteration's prox step.
    pub surrogate_objective_trace: Vec<f64>,
    /// Objective of the iterate entering each prox step, evaluated with the link used by
    /// that step. `surrogate_objective_trace[k + 1] <= prox_entry_objective[k]` always.
    pub prox_entry_objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_step_size: f64,
    pub link_updates: usize,
    pub wall_time_secs: f64,
}

/// How the link is handled by the fitting loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum LinkPolicy {
    Learned,
    Fixed(FixedLink),
}

/// Standardized inputs and responses, the quantities the loop works with.
struct Problem<'a> {
    x: DMatrix<f64>,
    x_t: DMatrix<f64>,
    y: &'a DMatrix<f64>,
    inv_n: f64,
}

impl<'a> Problem<'a> {
    fn new(x: DMatrix<f64>, y: &'a DMatrix<f64>) -> Self {
        let x_t = x.transpose();
        let inv_n = 1.0 / x.ncols() as f64;
        Problem { x, x_t, y, inv_n }
    }

    fn theta(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        b * &self.x
    }

    fn data_term(&self, link: &ModelLink, theta: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for (t, y) in theta.iter().zip(self.y.iter()) {
            total += link.antiderivative(*t) - y * t;
        }
        total * self.inv_n
    }

    fn gradient(&self, link: &ModelLink, theta: &DMatrix<f64>) -> DMatrix<f64> {
        let mut resid = theta.map(|t| link.evaluate(t));
        resid -= self.y;
        (resid * &self.x_t) * self.inv_n
    }
}

fn check_compatible(model: &SilvarModel, data: &Dataset) -> Result<()> {
    if model.input_dim() != data.p() || model.m() != data.m() {
        return Err(SilvarError::invalid(format!(
            "model maps {} inputs to {} responses, data has {} inputs and {} responses",
            model.input_dim(),
            model.m(),
            data.p(),
            data.m()
        )));
    }
    Ok(())
}

/// `Theta = (A + L) X` for inputs in the model's standardized units.
pub fn linear_response(model: &SilvarModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.linear_response(x)
}

/// Penalized surrogate objective of `model` on `data` (inputs standardized by the model).
pub fn surrogate_objective(model: &SilvarModel, data: &Dataset, config: &RegularizerConfig) -> Result<f64> {
    check_compatible(model, data)?;
    let problem = Problem::new(model.standardization.apply(data.x())?, data.y());
    let theta = problem.theta(&model.combined());
    Ok(problem.data_term(&model.link, &theta) + penalty_value(&model.a, &model.l, config)?)
}

/// `(1/n) sum_i (g(theta_i) - y_i) x_i^T`, shared by `A` and `L`.
pub fn gradient(model: &SilvarModel, data: &Dataset) -> Result<DMatrix<f64>> {
    check_compatible(model, data)?;
    let problem = Problem::new(model.standardization.apply(data.x())?, data.y());
    let theta = problem.theta(&model.combined());
    Ok(problem.gradient(&model.link, &theta))
}

/// Learns link, sparse and low-rank components jointly.
pub fn fit(data: &Dataset, reg: &RegularizerConfig, solver: &SolverConfig) -> Result<(SilvarModel, FitReport)> {
    fit_with_policy(data, reg, solver, LinkPolicy::Learned)
}

fn learned_link(theta: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<ModelLink> {
    Ok(ModelLink::Learned(lmr_pairs(theta.as_slice(), y.as_slice())?))
}

/// Largest eigenvalue of `X X^T / n`, the Lipschitz constant of the data-term gradient in `A + L`.
fn smoothness(x: &DMatrix<f64>) -> f64 {
    let gram = x * x.transpose();
    let top = gram.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max);
    top / x.ncols() as f64
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| u * v).sum()
}

pub(crate) fn fit_with_policy(
    data: &Dataset,
    reg: &RegularizerConfig,
    solver: &SolverConfig,
    policy: LinkPolicy,
) -> Result<(SilvarModel, FitReport)> {
    let started = Instant::now();
    reg.validate()?;
    solver.validate()?;
    if !data.p().is_multiple_of(reg.lag_count) {
        return Err(SilvarError::invalid(format!(
            "{} input rows cannot be split into {} lag blocks",
            data.p(),
            reg.lag_count
        )));
    }

    let standardization = if solver.standardize_inputs {
        Standardization::fit(data.x())
    } else {
        Standardization::identity(data.p())
    };
    let problem = Problem::new(standardization.apply(data.x())?, data.y());
    let (m, cols) = (data.m(), data.p());

    let lipschitz = smoothness(&problem.x);
    let spectral_step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let mut step = spectral_step;

    let mut a = DMatrix::zeros(m, cols);
    let mut l = DMatrix::zeros(m, cols);
    let mut a_prev = a.clone();
    let mut l_prev = l.clone();
    let mut momentum = 1.0f64;

    let mut theta = DMatrix::zeros(m, data.n());
    let mut link = match policy {
        LinkPolicy::Learned => learned_link(&theta, data.y())?,
        LinkPolicy::Fixed(f) => ModelLink::Fixed(f),
    };
    let mut link_updates = usize::from(policy == LinkPolicy::Learned);

    let objective = |link: &ModelLink, a: &DMatrix<f64>, l: &DMatrix<f64>, theta: &DMatrix<f64>| -> Result<f64> {
        Ok(problem.data_term(link, theta) + penalty_value(a, l, reg)?)
    };

    let mut current = objective(&link, &a, &l, &theta)?;
    if !current.is_finite() {
        return Err(SilvarError::Numerical("objective is non-finite at initialization".into()));
    }
    let mut trace = vec![current];
    let mut entry = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=solver.max_iters {
        iterations = it;
        if policy == LinkPolicy::Learned && it > 1 && (it - 1) % solver.link_update_every == 0 {
            link = learned_link(&theta, data.y())?;
            link_updates += 1;
            current = objective(&link, &a, &l, &theta)?;
        }
        let before = current;

        let mut candidate = None;
        if solver.acceleration && momentum > 1.0 {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            let ya = &a + (&a - &a_prev) * beta;
            let yl = &l + (&l - &l_prev) * beta;
            let (na, nl, t, s) = prox_step(&problem, &link, reg, solver, &ya, &yl, step, spectral_step)?;
            step = s;
            let obj = objective(&link, &na, &nl, &t)?;
            if obj <= before {
                momentum = next;
                candidate = Some((na, nl, t, obj));
            }
        }
        let (na, nl, nt, obj) = match candidate {
            Some(c) => c,
            None => {
                // plain step from the current iterate; momentum restarts
                momentum = 1.0;
                let (na, nl, t, s) = prox_step(&problem, &link, reg, solver, &a, &l, step, spectral_step)?;
                step = s;
                let obj = objective(&link, &na, &nl, &t)?;
                if solver.acceleration {
                    momentum = 0.5 * (1.0 + 5f64.sqrt());
                }
                (na, nl, t, obj)
            }
        };
        if !obj.is_finite() {
            return Err(SilvarError::Numerical(format!("objective became non-finite at iteration {it}")));
        }

        entry.push(before);
        if obj <= before {
            a_prev = std::mem::replace(&mut a, na);
            l_prev = std::mem::replace(&mut l, nl);
            theta = nt;
            current = obj;
        } else {
            // rounding-level increase on a plain step: stay put
            a_prev = a.clone();
            l_prev = l.clone();
            momentum = 1.0;
        }
        let previous = *trace.last().unwrap();
        trace.push(current);

        let change = (current - previous).abs();
        if change <= solver.rel_tol * previous.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    if policy == LinkPolicy::Learned {
        link = learned_link(&theta, data.y())?;
        link_updates += 1;
    }

    let model = SilvarModel::new(link, a, l, reg.lag_count, standardization)?;
    let report = FitReport {
        surrogate_objective_trace: trace,
        prox_entry_objective: entry,
        iterations,
        converged,
        final_step_size: step,
        link_updates,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// One proximal-gradient step from `(ya, yl)`. Returns the new pair, its linear
/// response and the step size that was accepted.
#[allow(clippy::too_many_arguments)]
fn prox_step(
    problem: &Problem,
    link: &ModelLink,
    reg: &RegularizerConfig,
    solver: &SolverConfig,
    ya: &DMatrix<f64>,
    yl: &DMatrix<f64>,
    mut step: f64,
    spectral_step: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64)> {
    let b = ya + yl;
    let theta_y = problem.theta(&b);
    let f_y = problem.data_term(link, &theta_y);
    let grad = problem.gradient(link, &theta_y);
    if solver.step_rule == StepRule::FixedSpectral {
        step = spectral_step;
    }
    loop {
        let na = reg.prox_sparse(&(ya - &grad * step), step)?;
        let nl = reg.prox_lowrank(&(yl - &grad * step), step)?;
        let theta = problem.theta(&(&na + &nl));
        if solver.step_rule == StepRule::FixedSpectral {
            return Ok((na, nl, theta, step));
        }
        let da = &na - ya;
        let dl = &nl - yl;
        let sq = da.norm_squared() + dl.norm_squared();
        if sq == 0.0 {
            return Ok((na, nl, theta, step));
        }
        let f_new = problem.data_term(link, &theta);
        let bound = f_y + frob_dot(&grad, &da) + frob_dot(&grad, &dl) + sq / (2.0 * step);
        if f_new <= bound + 1e-13 * f_y.abs().max(1.0) {
            return Ok((na, nl, theta, step));
        }
        step *= solver.backtracking_shrink;
        if step < 1e-14 * spectral_step {
            return Err(SilvarError::Numerical(format!(
                "backtracking step collapsed below {step:e}"
            )));
        }
    }
}
