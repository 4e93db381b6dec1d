//! Lipschitz monotonic regression (LMR).
//!
//! Solves
//!
//! ```text
//! minimize   sum_i (g(x_i) - y_i)^2
//! subject to 0 <= g(x_[j+1]) - g(x_[j]) <= x_[j+1] - x_[j]
//! ```
//!
//! over fitted values at the sorted unique abscissae. Tied abscissae are
//! collapsed to their weighted mean first (the chain forces equal values there).
//!
//! The solver is an exact forward dynamic program over the value function
//! `f_k(g) = min cost of the first k points given g_k = g`. Its derivative is
//! continuous, piecewise linear and strictly increasing. The transition
//!
//! ```text
//! f_{k+1}(g) = w_{k+1} (g - y_{k+1})^2 / 2 + min_{g - D_k <= g' <= g} f_k(g')
//! ```
//!
//! splices a flat zero segment of width `D_k` into the derivative at the
//! minimizer of `f_k` and shifts everything right of it by `D_k`. Knots of the
//! derivative live in a treap with lazy (position, value) shifts so that each
//! step is `O(log K)`. Backtracking clamps each stage minimizer into the window
//! allowed by its successor.
//!
//! The result is then checked against the KKT conditions of the equivalent
//! box-constrained problem in `(g_1, d_j = g_{j+1} - g_j)`. If the residual is
//! above [`KKT_TOL`], cyclic coordinate descent with exact clipped updates
//! polishes it.

use crate::error::{Result, SilvarError};

use super::{LinkFunction, RegressionSample};

/// Target max-norm KKT residual.
pub const KKT_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmrDiagnostics {
    /// Max-norm projected-gradient residual of the box-constrained QP.
    pub kkt_residual: f64,
    /// Coordinate-descent sweeps spent polishing the dynamic-programming solution.
    pub polish_sweeps: usize,
    /// Number of unique abscissae (knots).
    pub knots: usize,
}

/// Fits the Lipschitz monotone link to `samples`.
pub fn lmr(samples: &[RegressionSample]) -> Result<LinkFunction> {
    let (x, y): (Vec<f64>, Vec<f64>) = samples.iter().map(|s| (s.abscissa, s.ordinate)).unzip();
    lmr_with_diagnostics(&x, &y).map(|(l, _)| l)
}

/// Same as [`lmr`] on parallel abscissa / ordinate slices.
pub fn lmr_pairs(x: &[f64], y: &[f64]) -> Result<LinkFunction> {
    lmr_with_diagnostics(x, y).map(|(l, _)| l)
}

pub fn lmr_with_diagnostics(x: &[f64], y: &[f64]) -> Result<(LinkFunction, LmrDiagnostics)> {
    if x.len() != y.len() {
        return Err(SilvarError::invalid(format!(
            "lmr: {} abscissae but {} ordinates",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(SilvarError::invalid("lmr: no samples"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(SilvarError::invalid("lmr: non-finite sample"));
    }

    let problem = Collapsed::new(x, y);
    let mut fitted = solve_dp(&problem);
    project_chain(&mut fitted, &problem.gaps);

    let mut sweeps = 0;
    let mut residual = kkt_residual(&problem, &fitted);
    if residual > KKT_TOL {
        sweeps = polish(&problem, &mut fitted);
        project_chain(&mut fitted, &problem.gaps);
        residual = kkt_residual(&problem, &fitted);
    }

    let knots = problem.x.len();
    let link = LinkFunction::with_boundary_extension(problem.x, fitted)?;
    Ok((
        link,
        LmrDiagnostics {
            kkt_residual: residual,
            polish_sweeps: sweeps,
            knots,
        },
    ))
}

/// Sorted unique abscissae with multiplicity weights and mean ordinates.
struct Collapsed {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    /// `gaps[j] = x[j+1] - x[j]`
    gaps: Vec<f64>,
}

impl Collapsed {
    fn new(x: &[f64], y: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));

        let mut ux: Vec<f64> = Vec::new();
        let mut uy: Vec<f64> = Vec::new();
        let mut uw: Vec<f64> = Vec::new();
        for &i in &order {
            match ux.last() {
                Some(&last) if last == x[i] => {
                    let k = uy.len() - 1;
                    uy[k] += y[i];
                    uw[k] += 1.0;
                }
                _ => {
                    ux.push(x[i]);
                    uy.push(y[i]);
                    uw.push(1.0);
                }
            }
        }
        for (s, w) in uy.iter_mut().zip(&uw) {
            *s /= w;
        }
        let gaps = ux.windows(2).map(|p| p[1] - p[0]).collect();
        Collapsed {
            x: ux,
            y: uy,
            w: uw,
            gaps,
        }
    }
}

/// Forces `0 <= g[j+1] - g[j] <= gaps[j]` exactly, sweeping left to right.
fn project_chain(g: &mut [f64], gaps: &[f64]) {
    for j in 0..gaps.len() {
        let lo = g[j];
        let hi = g[j] + gaps[j];
        g[j + 1] = g[j + 1].clamp(lo, hi);
    }
}

/// Projected-gradient residual of `1/2 sum w (g - y)^2` in the `(g_1, d)` coordinates.
fn kkt_residual(p: &Collapsed, g: &[f64]) -> f64 {
    let k = g.len();
    let mut suffix = 0.0;
    let mut worst: f64 = 0.0;
    for j in (1..k).rev() {
        suffix += p.w[j] * (g[j] - p.y[j]);
        let d = g[j] - g[j - 1];
        let moved = (d - suffix).clamp(0.0, p.gaps[j - 1]);
        worst = worst.max((d - moved).abs());
    }
    suffix += p.w[0] * (g[0] - p.y[0]);
    worst.max(suffix.abs())
}

/// Cyclic coordinate descent on `(g_1, d)`; returns the number of sweeps run.
fn polish(p: &Collapsed, g: &mut [f64]) -> usize {
    let k = g.len();
    if k == 1 {
        g[0] = p.y[0];
        return 1;
    }
    let mut d: Vec<f64> = (0..k - 1).map(|j| g[j + 1] - g[j]).collect();
    let mut g1 = g[0];
    let mut r: Vec<f64> = g.iter().zip(&p.y).map(|(a, b)| a - b).collect();
    let total_w: f64 = p.w.iter().sum();

    for sweep in 1..=MAX_SWEEPS {
        // d_j moves every residual after j, so walk j downwards keeping
        // t = sum_{i>j} w_i r_i current without touching r.
        let mut t = p.w[k - 1] * r[k - 1];
        let mut wsum = p.w[k - 1];
        for j in (0..k - 1).rev() {
            let new = (d[j] - t / wsum).clamp(0.0, p.gaps[j]);
            let delta = new - d[j];
            d[j] = new;
            t += delta * wsum;
            t += p.w[j] * r[j];
            wsum += p.w[j];
        }
        g1 -= t / total_w;

        let mut acc = g1;
        g[0] = acc;
        for j in 1..k {
            acc += d[j - 1];
            g[j] = acc;
        }
        for j in 0..k {
            r[j] = g[j] - p.y[j];
        }
        if kkt_residual(p, g) <= KKT_TOL {
            return sweep;
        }
    }
    MAX_SWEEPS
}

const NIL: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    pos: f64,
    /// Derivative value minus the global affine part `slope * pos + offset`.
    val: f64,
    lazy_pos: f64,
    lazy_val: f64,
    prio: u64,
    left: u32,
    right: u32,
}

/// Breakpoints of the value-function derivative.
struct Derivative {
    nodes: Vec<Node>,
    root: u32,
    rng: u64,
    /// Global affine term: derivative(g) = node interpolation + slope*g + offset.
    /// `slope` is also the extrapolation slope beyond the outermost knots.
    slope: f64,
    offset: f64,
}

impl Derivative {
    fn with_capacity(n: usize) -> Self {
        Derivative {
            nodes: Vec::with_capacity(n),
            root: NIL,
            rng: 0x9E37_79B9_7F4A_7C15,
            slope: 0.0,
            offset: 0.0,
        }
    }

    fn next_prio(&mut self) -> u64 {
        // xorshift64*
        self.rng ^= self.rng >> 12;
        self.rng ^= self.rng << 25;
        self.rng ^= self.rng >> 27;
        self.rng.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    fn add_affine(&mut self, w: f64, y: f64) {
        self.slope += w;
        self.offset -= w * y;
    }

    fn actual(&self, i: u32) -> f64 {
        let n = &self.nodes[i as usize];
        n.val + self.slope * n.pos + self.offset
    }

    fn tag(&mut self, i: u32, dpos: f64, dval: f64) {
        if i == NIL {
            return;
        }
        let n = &mut self.nodes[i as usize];
        n.pos += dpos;
        n.val += dval;
        n.lazy_pos += dpos;
        n.lazy_val += dval;
    }

    fn push(&mut self, i: u32) {
        let n = self.nodes[i as usize];
        if n.lazy_pos != 0.0 || n.lazy_val != 0.0 {
            self.tag(n.left, n.lazy_pos, n.lazy_val);
            self.tag(n.right, n.lazy_pos, n.lazy_val);
            let n = &mut self.nodes[i as usize];
            n.lazy_pos = 0.0;
            n.lazy_val = 0.0;
        }
    }

    /// Splits into (pos <= key, pos > key).
    fn split(&mut self, t: u32, key: f64) -> (u32, u32) {
        if t == NIL {
            return (NIL, NIL);
        }
        self.push(t);
        if self.nodes[t as usize].pos <= key {
            let (a, b) = self.split(self.nodes[t as usize].right, key);
            self.nodes[t as usize].right = a;
            (t, b)
        } else {
            let (a, b) = self.split(self.nodes[t as usize].left, key);
            self.nodes[t as usize].left = b;
            (a, t)
        }
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].prio > self.nodes[b as usize].prio {
            self.push(a);
            let r = self.merge(self.nodes[a as usize].right, b);
            self.nodes[a as usize].right = r;
            a
        } else {
            self.push(b);
            let l = self.merge(a, self.nodes[b as usize].left);
            self.nodes[b as usize].left = l;
            b
        }
    }

    fn new_node(&mut self, pos: f64, actual: f64) -> u32 {
        let prio = self.next_prio();
        let val = actual - self.slope * pos - self.offset;
        self.nodes.push(Node {
            pos,
            val,
            lazy_pos: 0.0,
            lazy_val: 0.0,
            prio,
            left: NIL,
            right: NIL,
        });
        (self.nodes.len() - 1) as u32
    }

    /// The unique zero of the (strictly increasing) derivative.
    fn zero(&mut self) -> f64 {
        let mut below: Option<(f64, f64)> = None;
        let mut above: Option<(f64, f64)> = None;
        let mut t = self.root;
        while t != NIL {
            self.push(t);
            let v = self.actual(t);
            let pos = self.nodes[t as usize].pos;
            if v <= 0.0 {
                below = Some((pos, v));
                t = self.nodes[t as usize].right;
            } else {
                above = Some((pos, v));
                t = self.nodes[t as usize].left;
            }
        }
        match (below, above) {
            (None, None) => -self.offset / self.slope,
            (None, Some((p, v))) | (Some((p, v)), None) => p - v / self.slope,
            (Some((p0, v0)), Some((p1, v1))) => {
                if p1 <= p0 || v1 <= v0 {
                    p0
                } else {
                    p0 - v0 * (p1 - p0) / (v1 - v0)
                }
            }
        }
    }

    /// Replaces f by `g -> min_{g - gap <= g' <= g} f(g')`, given its minimizer.
    fn window_min(&mut self, argmin: f64, gap: f64) {
        let (left, right) = self.split(self.root, argmin);
        let shift_val = -self.slope * gap;
        self.tag(right, gap, shift_val);
        let a = self.new_node(argmin, 0.0);
        let b = self.new_node(argmin + gap, 0.0);
        let mid = self.merge(a, b);
        let lm = self.merge(left, mid);
        self.root = self.merge(lm, right);
    }
}

fn solve_dp(p: &Collapsed) -> Vec<f64> {
    let k = p.x.len();
    let mut deriv = Derivative::with_capacity(2 * k);
    let mut stage_argmin = Vec::with_capacity(k);

    deriv.add_affine(p.w[0], p.y[0]);
    for j in 0..k - 1 {
        let z = deriv.zero();
        stage_argmin.push(z);
        deriv.window_min(z, p.gaps[j]);
        deriv.add_affine(p.w[j + 1], p.y[j + 1]);
    }
    stage_argmin.push(deriv.zero());

    let mut g = vec![0.0; k];
    g[k - 1] = stage_argmin[k - 1];
    for j in (0..k - 1).rev() {
        g[j] = stage_argmin[j].clamp(g[j + 1] - p.gaps[j], g[j + 1]);
    }
    g
}
