//! Alternative MAT with statistical precoding.
//!
//! Stage I superposes two symbols per user through M x 2 precoders W, Q;
//! stage II retransmits the overheard interference from delayed CSIT, one
//! slot per user. An MMSE-SIC receiver then sees a 2 x 2 effective channel
//! per user and the scheme reaches a sum DoF of 4/3.
//!
//! The per-user ergodic rate is approximated by
//! `(2/3) log2(1 + rho * sqrt(e^a * Theta))` with `a = e Ei(-1) - 2 gamma`
//! and the precoder-dependent scalar
//!
//! ```text
//! Theta = Tr(W^H R_A W) Tr(W^H R_B W) - Tr(W^H R_A W W^H R_B W),
//! ```
//!
//! which the alternating optimizer below maximizes one column at a time,
//! either by one closed-form dominant-eigenvector step (Max-Eig) or by
//! backtracking gradient ascent on the sphere (GradAct). For M = 2 every
//! unitary W is optimal and Theta collapses to
//! `Tr(R_A) Tr(R_B) - Tr(R_A R_B)`.

use num_complex::Complex64;

use crate::channel::{sample_cn01, sample_triple, SeedSpec};
use crate::error::{Error, Result};
use crate::estimate::{monte_carlo, RateEstimate};
use crate::linalg::{
    eig_hermitian, generalized_eig, hermitian_sqrt, CMatrix, CVector, CorrelationMatrix,
};
use crate::EULER_GAMMA;

/// Unit-column M x 2 precoders for both users.
#[derive(Debug, Clone)]
pub struct AmatPrecoders {
    pub w: CMatrix,
    pub q: CMatrix,
}

impl AmatPrecoders {
    pub fn new(w: CMatrix, q: CMatrix) -> Result<Self> {
        for (name, m) in [("W", &w), ("Q", &q)] {
            if m.ncols() != 2 {
                return Err(Error::DimMismatch(format!(
                    "{name} must have 2 columns, got {}",
                    m.ncols()
                )));
            }
            for j in 0..2 {
                let n = m.column(j).norm();
                if (n - 1.0).abs() > 1e-12 {
                    return Err(Error::DimMismatch(format!(
                        "{name} column {j} is not unit norm (|.| = {n})"
                    )));
                }
            }
        }
        if w.nrows() != q.nrows() {
            return Err(Error::DimMismatch(format!(
                "precoder heights differ: {} vs {}",
                w.nrows(),
                q.nrows()
            )));
        }
        Ok(Self { w, q })
    }

    /// Original AMAT: transmit on the first two antennas only.
    pub fn org(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::BadDim(m));
        }
        let mut w = CMatrix::zeros(m, 2);
        w[(0, 0)] = Complex64::new(1.0, 0.0);
        w[(1, 1)] = Complex64::new(1.0, 0.0);
        Self::new(w.clone(), w)
    }

    /// Covariance eigenvector precoders: W = [u_max(R_B) u_min(R_B)],
    /// Q = [u_max(R_A) u_min(R_A)] (orthonormal columns).
    pub fn we(r_a: &CorrelationMatrix, r_b: &CorrelationMatrix) -> Result<Self> {
        let eb = eig_hermitian(r_b.entries())?;
        let ea = eig_hermitian(r_a.entries())?;
        let w = CMatrix::from_columns(&[eb.max_vector(), eb.min_vector()]);
        let q = CMatrix::from_columns(&[ea.max_vector(), ea.min_vector()]);
        Self::new(w, q)
    }

    /// Pencil eigenvector precoders: extreme generalized eigenvectors of
    /// R_B^{-1} R_A for W and of R_A^{-1} R_B for Q. Unit columns, but not
    /// orthogonal, so for M = 2 these are deliberately sub-optimal.
    pub fn ge(r_a: &CorrelationMatrix, r_b: &CorrelationMatrix) -> Result<Self> {
        let pa = generalized_eig(r_a, r_b)?;
        let pb = generalized_eig(r_b, r_a)?;
        let w = CMatrix::from_columns(&[pa.max_vector(), pa.min_vector()]);
        let q = CMatrix::from_columns(&[pb.max_vector(), pb.min_vector()]);
        Self::new(w, q)
    }
}

/// Per-iteration objective values of the alternating optimizer.
#[derive(Debug, Clone)]
pub struct ConvergenceTrace {
    /// Theta after each full iteration (both column updates).
    pub theta_values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_iter_exceeded: bool,
}

/// Subproblem update rule of the alternating optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMethod {
    GradAct,
    MaxEig,
}

/// Backtracking options for the gradient-ascent update.
#[derive(Debug, Clone)]
pub struct StepOpts {
    pub initial_step: f64,
    pub backtrack: f64,
    pub armijo: f64,
    /// Accepted ascent steps per call.
    pub max_steps: usize,
    /// Stop when the squared Riemannian gradient norm falls below this
    /// fraction of max(theta^2, 1).
    pub grad_tol: f64,
}

impl Default for StepOpts {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            max_steps: 500,
            grad_tol: 1e-26,
        }
    }
}

/// The quadratic-form value Theta for an M x 2 precoder.
pub fn theta(w: &CMatrix, r_a: &CorrelationMatrix, r_b: &CorrelationMatrix) -> Result<f64> {
    if w.nrows() != r_a.dim() || r_a.dim() != r_b.dim() {
        return Err(Error::DimMismatch(format!(
            "precoder rows {} vs covariance dims {}/{}",
            w.nrows(),
            r_a.dim(),
            r_b.dim()
        )));
    }
    if w.ncols() != 2 {
        return Err(Error::DimMismatch(format!(
            "Theta is defined for 2-column precoders, got {}",
            w.ncols()
        )));
    }
    let x = w.adjoint() * r_a.entries() * w;
    let y = w.adjoint() * r_b.entries() * w;
    let tr = |m: &CMatrix| (0..m.nrows()).map(|i| m[(i, i)].re).sum::<f64>();
    let xy = &x * &y;
    Ok(tr(&x) * tr(&y) - tr(&xy))
}

/// Ei(-1), by the alternating series of E1(1): accurate to ~1e-16.
pub fn exp_integral_ei_minus1() -> f64 {
    // E1(1) = -gamma + sum_{k>=1} (-1)^{k+1} / (k * k!), Ei(-1) = -E1(1).
    let mut sum = 0.0;
    let mut factorial = 1.0;
    for k in 1..=30u64 {
        factorial *= k as f64;
        let term = 1.0 / (k as f64 * factorial);
        if k % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    -(-EULER_GAMMA + sum)
}

/// The constant a = e * Ei(-1) - 2 gamma of the rate approximation.
pub fn rate_constant_a() -> f64 {
    std::f64::consts::E * exp_integral_ei_minus1() - 2.0 * EULER_GAMMA
}

/// Per-user per-slot ergodic rate approximation
/// `(2/3) log2(1 + rho sqrt(e^a Theta))`, bits/s/Hz.
pub fn rate_approx_amat(rho: f64, theta_val: f64) -> f64 {
    let a = rate_constant_a();
    (2.0 / 3.0) * (1.0 + rho * (a.exp() * theta_val).sqrt()).log2()
}

// M(w2) = (w2^H R_B w2) R_A + (w2^H R_A w2) R_B
//         - R_A w2 w2^H R_B - R_B w2 w2^H R_A,
// Hermitian by construction; symmetrized to kill round-off asymmetry.
fn subproblem_matrix(
    w_fixed: &CVector,
    r_a: &CorrelationMatrix,
    r_b: &CorrelationMatrix,
) -> CMatrix {
    let ra = r_a.entries();
    let rb = r_b.entries();
    let lam_b = r_b.quad_form(w_fixed);
    let lam_a = r_a.quad_form(w_fixed);
    let raw = ra * w_fixed;
    let rbw = rb * w_fixed;
    let cross = &raw * rbw.adjoint();
    let m = ra.scale(lam_b) + rb.scale(lam_a) - &cross - cross.adjoint();
    (&m + m.adjoint()).scale(0.5)
}

/// Closed-form subproblem solution: dominant eigenvector of M(w_fixed).
pub fn max_eig_update(
    w_fixed: &CVector,
    r_a: &CorrelationMatrix,
    r_b: &CorrelationMatrix,
) -> Result<CVector> {
    let m = subproblem_matrix(w_fixed, r_a, r_b);
    Ok(eig_hermitian(&m)?.max_vector())
}

/// Gradient-ascent subproblem solution: up to `max_steps` accepted steps of
/// `w <- normalize(w + mu * M(w_fixed) w)` with Armijo backtracking on mu,
/// so the quadratic form never decreases. A zero step is a fixpoint.
pub fn grad_ascent_update(
    w_current: &CVector,
    w_fixed: &CVector,
    r_a: &CorrelationMatrix,
    r_b: &CorrelationMatrix,
    opts: &StepOpts,
) -> CVector {
    let m = subproblem_matrix(w_fixed, r_a, r_b);
    let mut w = w_current.clone();
    let mut mu = opts.initial_step;
    let value = |v: &CVector| (v.adjoint() * &m * v)[(0, 0)].re;
    for _ in 0..opts.max_steps {
        let g = &m * &w;
        let th = (w.adjoint() * &g)[(0, 0)].re;
        // Squared norm of the ascent slope along the retracted curve.
        let slope = g.norm_squared() - th * th;
        if slope <= opts.grad_tol * th.mul_add(th, 1.0) {
            break;
        }
        let mut accepted = false;
        let mut step = mu;
        while step > 1e-16 {
            let mut cand = &w + g.scale(step);
            let n = cand.norm();
            cand.unscale_mut(n);
            if value(&cand) >= th + opts.armijo * step * 2.0 * slope {
                w = cand;
                // First-try acceptance earns a larger trial step next time.
                mu = if step == mu { mu * 2.0 } else { step };
                accepted = true;
                break;
            }
            step *= opts.backtrack;
        }
        if !accepted {
            break;
        }
    }
    w
}

/// Runs the alternating precoder optimization from a seeded random start.
///
/// Returns the best of three restarts (each restart's trace is monotone
/// because the subproblems are solved to a non-decreasing objective, but
/// the joint problem may have local optima). The returned matrix
/// maximizes Theta for one user; the two users' objectives share the same
/// functional form, so callers run this once per user with distinct seeds.
pub fn optimize_precoders(
    r_a: &CorrelationMatrix,
    r_b: &CorrelationMatrix,
    method: UpdateMethod,
    eps: f64,
    max_iter: usize,
    seed: u64,
) -> Result<(CMatrix, ConvergenceTrace)> {
    const RESTARTS: u64 = 3;
    let m = r_a.dim();
    if r_b.dim() != m {
        return Err(Error::DimMismatch(format!(
            "covariance dims differ: {} vs {}",
            m,
            r_b.dim()
        )));
    }
    let mut best: Option<(f64, CMatrix, ConvergenceTrace)> = None;
    for restart in 0..RESTARTS {
        let mut w1 = random_unit(m, SeedSpec::new(seed, restart), 6);
        let mut w2 = random_unit(m, SeedSpec::new(seed, restart), 7);
        let mut trace = Vec::with_capacity(max_iter.min(64));
        let mut prev = theta_pair(&w1, &w2, r_a, r_b);
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..max_iter {
            iterations += 1;
            w1 = single_update(method, &w1, &w2, r_a, r_b)?;
            w2 = single_update(method, &w2, &w1, r_a, r_b)?;
            let cur = theta_pair(&w1, &w2, r_a, r_b);
            trace.push(cur);
            if (cur - prev).abs() <= eps {
                converged = true;
                break;
            }
            prev = cur;
        }
        let theta_final = *trace.last().unwrap_or(&prev);
        let w = CMatrix::from_columns(&[w1, w2]);
        let t = ConvergenceTrace {
            theta_values: trace,
            iterations,
            converged,
            max_iter_exceeded: !converged,
        };
        if best.as_ref().is_none_or(|(b, _, _)| theta_final > *b) {
            best = Some((theta_final, w, t));
        }
    }
    let (_, w, t) = best.expect("at least one restart");
    Ok((w, t))
}

fn single_update(
    method: UpdateMethod,
    w_var: &CVector,
    w_fixed: &CVector,
    r_a: &CorrelationMatrix,
    r_b: &CorrelationMatrix,
) -> Result<CVector> {
    match method {
        UpdateMethod::MaxEig => max_eig_update(w_fixed, r_a, r_b),
        UpdateMethod::GradAct => Ok(grad_ascent_update(
            w_var,
            w_fixed,
            r_a,
            r_b,
            &StepOpts::default(),
        )),
    }
}

fn theta_pair(w1: &CVector, w2: &CVector, r_a: &CorrelationMatrix, r_b: &CorrelationMatrix) -> f64 {
    let w = CMatrix::from_columns(&[w1.clone(), w2.clone()]);
    theta(&w, r_a, r_b).expect("validated dimensions")
}

fn random_unit(m: usize, seed: SeedSpec, stream: u64) -> CVector {
    let mut v = sample_cn01(m, seed, stream);
    let n = v.norm();
    v.unscale_mut(n);
    v
}

/// Equal power allocation rho = 3P/(4 + 2M), meeting the long-term
/// constraint with equality for M = 2 orthonormal precoders.
pub fn equal_power(p: f64, m: usize) -> f64 {
    3.0 * p / (4.0 + 2.0 * m as f64)
}

/// Monte Carlo ergodic sum-rate per slot of AMAT under equal power rho,
/// with the two-observation MMSE-SIC receiver per user.
pub fn mc_rate_amat(
    r_a: &CorrelationMatrix,
    r_b: &CorrelationMatrix,
    pre: &AmatPrecoders,
    rho: f64,
    trials: u64,
    master_seed: u64,
) -> Result<RateEstimate> {
    if pre.w.nrows() != r_a.dim() || r_a.dim() != r_b.dim() {
        return Err(Error::DimMismatch(format!(
            "precoder rows {} vs covariance dims {}/{}",
            pre.w.nrows(),
            r_a.dim(),
            r_b.dim()
        )));
    }
    let sqrt_a = hermitian_sqrt(r_a)?;
    let sqrt_b = hermitian_sqrt(r_b)?;
    let w = pre.w.clone();
    let q = pre.q.clone();
    Ok(monte_carlo(trials, master_seed, move |trial| {
        let t = sample_triple(&sqrt_a, &sqrt_b, SeedSpec::new(master_seed, trial))
            .expect("validated dimensions");
        // User A: rows h21* h1^H W (noise 1+|h21|^2) and h31* g1^H W (noise 1).
        let u = w.adjoint() * &t.h[0];
        let v = w.adjoint() * &t.g[0];
        let alpha = t.h[1][0].norm_sqr() / (1.0 + t.h[1][0].norm_sqr());
        let beta = t.h[2][0].norm_sqr();
        let rate_a = logdet2_rank2(rho, alpha, &u, beta, &v);
        // User B: rows g31* g1^H Q (noise 1+|g31|^2) and g21* h1^H Q (noise 1).
        let ub = q.adjoint() * &t.g[0];
        let vb = q.adjoint() * &t.h[0];
        let alpha_b = t.g[2][0].norm_sqr() / (1.0 + t.g[2][0].norm_sqr());
        let beta_b = t.g[1][0].norm_sqr();
        let rate_b = logdet2_rank2(rho, alpha_b, &ub, beta_b, &vb);
        (rate_a + rate_b) / 3.0
    }))
}

// log2 det(I_2 + rho (alpha u u^H + beta v v^H)) for 2-vectors u, v.
fn logdet2_rank2(rho: f64, alpha: f64, u: &CVector, beta: f64, v: &CVector) -> f64 {
    let nu = u.norm_squared();
    let nv = v.norm_squared();
    let cross = u.dotc(v).norm_sqr();
    let det = 1.0 + rho * (alpha * nu + beta * nv) + rho * rho * alpha * beta * (nu * nv - cross);
    det.log2()
}
