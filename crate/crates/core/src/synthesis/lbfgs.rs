//! Limited-memory BFGS with an Armijo backtracking line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub max_iterations: usize,
    /// Stop when `(f_prev - f) / max(|f_prev|, tiny) < tol`.
    pub rel_tol: f64,
    pub history: usize,
    /// Largest per-coordinate change of the first (steepest-descent) step.
    pub first_step_max: f64,
    pub armijo_c1: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            rel_tol: 1e-5,
            history: 10,
            first_step_max: 0.05,
            armijo_c1: 1e-4,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Loss or gradient exactly zero.
    Stationary,
    Converged,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    /// Loss at the start and after each accepted step.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: StopReason,
}

impl LbfgsReport {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("history has the initial loss")
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns the value and gradient at a point.
pub fn minimize<F>(x0: Vec<f64>, mut f: F, opts: &LbfgsOptions) -> LbfgsReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let mut history = vec![fx];
    let done = |x: Vec<f64>, history: Vec<f64>, iterations, evaluations, reason| LbfgsReport {
        x,
        loss_history: history,
        iterations,
        evaluations,
        reason,
    };
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return done(x, history, 0, evaluations, StopReason::NonFinite);
    }
    if fx == 0.0 || g.iter().all(|&v| v == 0.0) {
        return done(x, history, 0, evaluations, StopReason::Stationary);
    }

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.history);
    for iter in 1..=opts.max_iterations {
        let mut d = direction(&g, &pairs);
        let mut gd = dot(&g, &d);
        if pairs.is_empty() || !(gd < 0.0) {
            pairs.clear();
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = opts.first_step_max / gmax;
            d = g.iter().map(|v| -v * scale).collect();
            gd = dot(&g, &d);
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let (fn_, gn) = f(&xn);
            evaluations += 1;
            if fn_.is_finite() && fn_ <= fx + opts.armijo_c1 * alpha * gd {
                if gn.iter().any(|v| !v.is_finite()) {
                    return done(x, history, iter - 1, evaluations, StopReason::NonFinite);
                }
                accepted = Some((xn, fn_, gn));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            return done(x, history, iter - 1, evaluations, StopReason::LineSearchFailed);
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if pairs.len() == opts.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - fn_) / fx.abs().max(1e-300);
        x = xn;
        fx = fn_;
        g = gn;
        history.push(fx);
        if fx == 0.0 {
            return done(x, history, iter, evaluations, StopReason::Stationary);
        }
        if rel < opts.rel_tol {
            return done(x, history, iter, evaluations, StopReason::Converged);
        }
    }
    let iters = history.len() - 1;
    done(x, history, iters, evaluations, StopReason::MaxIterations)
}

/// Two-loop recursion: `-H g`.
fn direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    for v in &mut q {
        *v = -*v;
    }
    q
}
