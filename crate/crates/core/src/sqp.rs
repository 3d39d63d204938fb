//! Dense SQP for smooth maximization with one nonlinear equality
//! constraint and lower bounds.
//!
//! Scope is deliberately small: problem dimension around ten, dense
//! factorizations everywhere. Each iteration builds a quadratic model of
//! the Lagrangian with a damped BFGS approximation (Powell damping,
//! curvature threshold 0.2), solves the resulting QP with a primal
//! active-set method, and globalizes with an l1 merit function and
//! backtracking line search.

use nalgebra::{DMatrix, DVector};

/// A smooth map returning (value, gradient).
pub type ValueGrad<'a> = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + Sync + 'a>;

/// Smooth maximization problem: both maps return (value, gradient).
pub struct NlpProblem<'a> {
    pub dim: usize,
    /// Objective to maximize.
    pub objective: ValueGrad<'a>,
    /// Equality constraint, feasible when zero.
    pub eq_constraint: ValueGrad<'a>,
    pub lower_bounds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    Stalled,
    MaxIter,
}

/// Outcome of one solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub constraint_residual: f64,
    pub status: SolveStatus,
    /// Objective value (maximization sense) at the returned point.
    pub objective_value: f64,
}

#[derive(Debug, Clone)]
pub struct SqpOpts {
    /// First-order tolerance, scaled by (1 + |f|).
    pub kkt_tol: f64,
    /// Absolute tolerance on the equality residual.
    pub ctol: f64,
    pub max_iter: usize,
    /// Consecutive merit non-improvements before giving up.
    pub stall_limit: usize,
}

impl Default for SqpOpts {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-7,
            ctol: 1e-8,
            max_iter: 200,
            stall_limit: 10,
        }
    }
}

/// Worst componentwise relative error between the analytic gradient and a
/// central finite difference at step 1e-6 * (1 + |x_i|).
pub fn check_gradient<F>(f: F, x: &[f64]) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, grad) = f(x);
    let mut worst = 0.0_f64;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let up = f(&xp).0;
        xp[i] = x[i] - h;
        let dn = f(&xp).0;
        xp[i] = x[i];
        let fd = (up - dn) / (2.0 * h);
        let err = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
        worst = worst.max(err);
    }
    worst
}

/// Maximizes `p.objective` subject to `p.eq_constraint == 0` and
/// `x >= p.lower_bounds`, starting from `x0` (projected into bounds).
///
/// Variables are scaled internally by their start-point magnitudes so the
/// initial unit Hessian approximation is reasonable across mixed scales;
/// the reported KKT residual lives in that scaled space. Deterministic:
/// identical (problem, x0, opts) produce the identical iterate sequence.
/// Panics if the supplied gradients disagree with central finite
/// differences at the start point by more than 1e-4.
pub fn solve(p: &NlpProblem, x0: &[f64], opts: &SqpOpts) -> (Vec<f64>, SolveReport) {
    let n = p.dim;
    assert_eq!(x0.len(), n, "start point has wrong dimension");
    assert_eq!(p.lower_bounds.len(), n, "bounds have wrong dimension");

    let x_start: Vec<f64> = x0
        .iter()
        .zip(&p.lower_bounds)
        .map(|(&v, &lb)| v.max(lb))
        .collect();

    let obj_err = check_gradient(|v| (p.objective)(v), &x_start);
    let con_err = check_gradient(|v| (p.eq_constraint)(v), &x_start);
    assert!(
        obj_err < 1e-4 && con_err < 1e-4,
        "analytic gradients disagree with finite differences at the start \
         point (objective {obj_err:.2e}, constraint {con_err:.2e})"
    );

    let x_max = x_start.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let scale: Vec<f64> = x_start
        .iter()
        .map(|&v| v.abs().max(1e-2 * x_max).max(1e-8))
        .collect();

    // Work in minimization form on the scaled variables z = x / scale.
    let unscale =
        |z: &[f64]| -> Vec<f64> { z.iter().zip(&scale).map(|(&zi, &si)| zi * si).collect() };
    let eval = |z: &[f64]| {
        let xs = unscale(z);
        let (fv, fg) = (p.objective)(&xs);
        let fg: Vec<f64> = fg.iter().zip(&scale).map(|(&g, &s)| -g * s).collect();
        let (cv, cg) = (p.eq_constraint)(&xs);
        let cg: Vec<f64> = cg.iter().zip(&scale).map(|(&g, &s)| g * s).collect();
        (-fv, fg, cv, cg)
    };

    let mut x: Vec<f64> = x_start.iter().zip(&scale).map(|(&v, &s)| v / s).collect();
    let lower: Vec<f64> = p
        .lower_bounds
        .iter()
        .zip(&scale)
        .map(|(&lb, &s)| lb / s)
        .collect();

    let (mut fv, mut fg, mut cv, mut cg) = eval(&x);
    let mut hess = DMatrix::<f64>::identity(n, n);
    let mut penalty = 1.0_f64;
    let mut stall = 0usize;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0usize;
    let mut kkt = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let lower_rel: Vec<f64> = x.iter().zip(&lower).map(|(&xi, &lb)| lb - xi).collect();
        let (d, mu) = qp_solve(&hess, &fg, &cg, -cv, &lower_rel);

        // First-order residual with the fresh multiplier estimate.
        kkt = kkt_residual(&x, &fg, &cg, mu, &lower);
        if kkt <= opts.kkt_tol * (1.0 + fv.abs()) && cv.abs() <= opts.ctol {
            status = SolveStatus::Converged;
            break;
        }

        // Keep the l1 penalty above the multiplier scale.
        penalty = penalty.max(1.5 * mu.abs() + 1e-6);
        let slope = dot(&fg, &d) - penalty * cv.abs();
        let merit0 = fv + penalty * cv.abs();

        let mut alpha = 1.0_f64;
        let mut accepted = false;
        while alpha >= 1e-12 {
            let plain: Vec<f64> = x
                .iter()
                .zip(&d)
                .zip(&lower)
                .map(|((&xi, &di), &lb)| (xi + alpha * di).max(lb))
                .collect();
            let (mut xt, mut ft, mut fgt, mut ct, mut cgt) = {
                let (f, g, c, a) = eval(&plain);
                (plain, f, g, c, a)
            };
            let mut merit_t = ft + penalty * ct.abs();
            // Second-order correction: walk back onto the constraint
            // surface along its gradient, a few Newton steps on the ray
            // parameter. Without it the constraint curvature blocks long
            // steps (Maratos effect).
            if ct.abs() > opts.ctol {
                let ray = cg.clone();
                let mut xs = xt.clone();
                let mut state: Option<(f64, Vec<f64>, f64, Vec<f64>)> = None;
                for _ in 0..4 {
                    let (cs, cgs) = match &state {
                        Some((_, _, c, a)) => (*c, a.clone()),
                        None => (ct, cgt.clone()),
                    };
                    let dc = dot(&cgs, &ray);
                    if dc.abs() < 1e-14 || cs.abs() <= opts.ctol {
                        break;
                    }
                    let t = -cs / dc;
                    for ((xi, &ai), &lb) in xs.iter_mut().zip(&ray).zip(&lower) {
                        *xi = (*xi + t * ai).max(lb);
                    }
                    let (fs, fgs, cs2, cgs2) = eval(&xs);
                    state = Some((fs, fgs, cs2, cgs2));
                }
                if let Some((fs, fgs, cs, cgs)) = state {
                    let merit_s = fs + penalty * cs.abs();
                    if merit_s < merit_t {
                        xt = xs;
                        ft = fs;
                        fgt = fgs;
                        ct = cs;
                        cgt = cgs;
                        merit_t = merit_s;
                    }
                }
            }
            if merit_t <= merit0 + 1e-4 * alpha * slope.min(0.0) {
                // Damped BFGS on the Lagrangian gradient change.
                let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
                let gl_old: Vec<f64> = fg.iter().zip(&cg).map(|(g, a)| g + mu * a).collect();
                let gl_new: Vec<f64> = fgt.iter().zip(&cgt).map(|(g, a)| g + mu * a).collect();
                let y: Vec<f64> = gl_new.iter().zip(&gl_old).map(|(a, b)| a - b).collect();
                bfgs_update(&mut hess, &s, &y);

                if (merit0 - merit_t).abs() <= 1e-14 * (1.0 + merit0.abs()) {
                    stall += 1;
                } else {
                    stall = 0;
                }
                x = xt;
                fv = ft;
                fg = fgt;
                cv = ct;
                cg = cgt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            stall += 1;
        }
        if stall >= opts.stall_limit {
            status = SolveStatus::Stalled;
            break;
        }
    }

    let report = SolveReport {
        iterations,
        kkt_residual: kkt,
        constraint_residual: cv.abs(),
        status,
        objective_value: -fv,
    };
    (unscale(&x), report)
}

// Residual of: grad_f + mu * grad_c - eta = 0, eta >= 0 active only
// (minimization form).
fn kkt_residual(x: &[f64], fg: &[f64], cg: &[f64], mu: f64, lb: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let gl = fg[i] + mu * cg[i];
        let active = x[i] - lb[i] <= 1e-6 * (1.0 + lb[i].abs());
        let r = if active { (-gl).max(0.0) } else { gl.abs() };
        worst = worst.max(r);
    }
    worst
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Powell-damped BFGS update keeping the approximation positive definite.
fn bfgs_update(hess: &mut DMatrix<f64>, s: &[f64], y: &[f64]) {
    let n = s.len();
    let sv = DVector::from_column_slice(s);
    let bs = &*hess * &sv;
    let s_bs = sv.dot(&bs);
    if s_bs <= 1e-14 {
        return;
    }
    let yv = DVector::from_column_slice(y);
    let sy = sv.dot(&yv);
    let y_used = if sy < 0.2 * s_bs {
        let theta = 0.8 * s_bs / (s_bs - sy);
        yv.scale(theta) + bs.scale(1.0 - theta)
    } else {
        yv
    };
    let s_yu = sv.dot(&y_used);
    if s_yu <= 1e-14 {
        return;
    }
    for i in 0..n {
        for j in 0..n {
            hess[(i, j)] += -bs[i] * bs[j] / s_bs + y_used[i] * y_used[j] / s_yu;
        }
    }
}

// Primal active-set solver for
//   min 1/2 d^T B d + g^T d   s.t.  a^T d = b_eq,  d >= l  (l <= 0).
// Returns the step and the equality multiplier.
fn qp_solve(b: &DMatrix<f64>, g: &[f64], a: &[f64], b_eq: f64, l: &[f64]) -> (Vec<f64>, f64) {
    let n = g.len();
    const TOL: f64 = 1e-12;

    // Feasible start: min-norm equality solution, with violated bounds
    // clamped and the residual re-spread over the free components.
    let mut d = vec![0.0; n];
    let mut active = vec![false; n];
    for _ in 0..=n {
        let rhs = b_eq
            - (0..n)
                .filter(|&i| active[i])
                .map(|i| a[i] * l[i])
                .sum::<f64>();
        let free_norm2: f64 = (0..n).filter(|&i| !active[i]).map(|i| a[i] * a[i]).sum();
        for i in 0..n {
            d[i] = if active[i] {
                l[i]
            } else if free_norm2 > TOL {
                a[i] * rhs / free_norm2
            } else {
                0.0
            };
        }
        let mut violated = false;
        for i in 0..n {
            if !active[i] && d[i] < l[i] - TOL {
                active[i] = true;
                violated = true;
            }
        }
        if !violated {
            break;
        }
    }
    for i in 0..n {
        if d[i] < l[i] {
            d[i] = l[i];
        }
    }

    let mut mu = 0.0;
    for _ in 0..(5 * n + 20) {
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        if free.is_empty() {
            // All variables pinned: check whether releasing one helps.
            let eta = bound_multipliers(b, g, a, mu, &d);
            match most_negative(&eta, &active) {
                Some(i) => {
                    active[i] = false;
                    continue;
                }
                None => break,
            }
        }

        // Equality-constrained subproblem on the free set.
        let nf = free.len();
        let mut kkt = DMatrix::<f64>::zeros(nf + 1, nf + 1);
        let mut rhs = DVector::<f64>::zeros(nf + 1);
        for (fi, &i) in free.iter().enumerate() {
            for (fj, &j) in free.iter().enumerate() {
                kkt[(fi, fj)] = b[(i, j)];
            }
            kkt[(fi, nf)] = a[i];
            kkt[(nf, fi)] = a[i];
            let fixed: f64 = (0..n)
                .filter(|&j| active[j])
                .map(|j| b[(i, j)] * l[j])
                .sum();
            rhs[fi] = -g[i] - fixed;
        }
        rhs[nf] = b_eq
            - (0..n)
                .filter(|&j| active[j])
                .map(|j| a[j] * l[j])
                .sum::<f64>();

        let sol = match kkt.clone().lu().solve(&rhs) {
            Some(s) => s,
            None => break,
        };
        mu = sol[nf];

        // Move toward the subproblem optimum, stopping at the first bound.
        let mut alpha = 1.0_f64;
        let mut blocking = None;
        for (fi, &i) in free.iter().enumerate() {
            let target = sol[fi];
            let step = target - d[i];
            if step < -TOL {
                let room = (l[i] - d[i]) / step;
                if room < alpha {
                    alpha = room;
                    blocking = Some(i);
                }
            }
        }
        for (fi, &i) in free.iter().enumerate() {
            d[i] += alpha * (sol[fi] - d[i]);
        }
        if let Some(i) = blocking {
            d[i] = l[i];
            active[i] = true;
            continue;
        }

        // At the subproblem optimum: release the worst bound or finish.
        let eta = bound_multipliers(b, g, a, mu, &d);
        match most_negative(&eta, &active) {
            Some(i) => active[i] = false,
            None => break,
        }
    }
    (d, mu)
}

fn bound_multipliers(b: &DMatrix<f64>, g: &[f64], a: &[f64], mu: f64, d: &[f64]) -> Vec<f64> {
    let n = g.len();
    let dv = DVector::from_column_slice(d);
    let bd = b * dv;
    (0..n).map(|i| bd[i] + g[i] + mu * a[i]).collect()
}

fn most_negative(eta: &[f64], active: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..eta.len() {
        if active[i] && eta[i] < -1e-10 && best.is_none_or(|(_, v)| eta[i] < v) {
            best = Some((i, eta[i]));
        }
    }
    best.map(|(i, _)| i)
}
