//! The SAMAT scheme: AMAT retransmission with statistically precoded
//! extra symbols superposed in stage II, under a ten-way power split.
//!
//! Slot 1 carries four private symbols (powers P1, P2 for user A through
//! W = [w1 w2]; P3, P4 for user B through Q = [q1 q2]). Slots 2 and 3
//! retransmit the overheard interference scaled by sqrt(P5) and sqrt(P8)
//! on the first antenna and add one extra symbol per user through w3, q3
//! with powers P6, P7 (slot 2) and P9, P10 (slot 3).
//!
//! The long-term average power constraint couples the retransmission
//! scales to the slot-1 powers:
//!
//! ```text
//! Pc = P1+P2+P3+P4+P6+P7+P9+P10
//!      + P5 (lamA1 P3 + lamA2 P4) + P8 (lamB1 P1 + lamB2 P2) <= 3P.
//! ```
//!
//! `rate_approx_samat` evaluates the closed-form sum-rate approximation
//! driven by the twelve quadratic-form coefficients and the two Theta
//! scalars; `optimize_power` maximizes it over the constraint surface
//! with the SQP solver; `mc_rate_samat` is the exact Monte Carlo
//! counterpart with the three-observation MMSE-SIC receiver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::amat::theta;
use crate::channel::{sample_triple, SeedSpec};
use crate::error::{Error, Result};
use crate::estimate::{monte_carlo, RateEstimate};
use crate::linalg::{
    eig_hermitian, generalized_eig, hermitian_sqrt, CMatrix, CVector, CorrelationMatrix,
};
use crate::sqp::{self, NlpProblem, SolveReport, SqpOpts};

const LN2: f64 = std::f64::consts::LN_2;

/// The ten nonnegative symbol powers P1..P10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAllocation {
    pub p: [f64; 10],
}

impl PowerAllocation {
    /// Validates nonnegativity; values in [-1e-12, 0) are clamped to zero.
    pub fn new(mut p: [f64; 10]) -> Result<Self> {
        for (i, v) in p.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -1e-12 {
                    return Err(Error::DimMismatch(format!(
                        "power P{} is negative: {}",
                        i + 1,
                        *v
                    )));
                }
                *v = 0.0;
            }
        }
        Ok(Self { p })
    }

    pub fn zero() -> Self {
        Self { p: [0.0; 10] }
    }

    /// AMAT operating point: P1..P4 = rho, P5 = P8 = 1, extras off.
    pub fn amat_preset(rho: f64) -> Self {
        Self {
            p: [rho, rho, rho, rho, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        }
    }

    /// SBF operating point: one statistically precoded symbol per user per
    /// slot at power P/2 (P2, P4 in slot 1; P6, P7 and P9, P10 after).
    /// Meets the power constraint with equality for any coefficients.
    pub fn sbf_preset(budget: f64) -> Self {
        let half = budget / 2.0;
        Self {
            p: [0.0, half, 0.0, half, 0.0, half, half, 0.0, half, half],
        }
    }
}

/// Unit-norm precoders of the three slots: W, Q for slot 1 and the
/// extra-symbol vectors w3, q3 for slots 2 and 3.
#[derive(Debug, Clone)]
pub struct SamatPrecoders {
    pub w: CMatrix,
    pub q: CMatrix,
    pub w3: CVector,
    pub q3: CVector,
}

impl SamatPrecoders {
    pub fn new(w: CMatrix, q: CMatrix, w3: CVector, q3: CVector) -> Result<Self> {
        let m = w.nrows();
        if q.nrows() != m || w3.len() != m || q3.len() != m {
            return Err(Error::DimMismatch("precoder heights disagree".to_string()));
        }
        if w.ncols() != 2 || q.ncols() != 2 {
            return Err(Error::DimMismatch(
                "W and Q must have two columns".to_string(),
            ));
        }
        for j in 0..2 {
            for (name, mat) in [("W", &w), ("Q", &q)] {
                let n = mat.column(j).norm();
                if (n - 1.0).abs() > 1e-12 {
                    return Err(Error::DimMismatch(format!(
                        "{name} column {j} is not unit norm (|.| = {n})"
                    )));
                }
            }
        }
        for (name, v) in [("w3", &w3), ("q3", &q3)] {
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::DimMismatch(format!(
                    "{name} is not unit norm (|.| = {})",
                    v.norm()
                )));
            }
        }
        Ok(Self { w, q, w3, q3 })
    }
}

/// Predefined precoder families bridging SBF and AMAT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    /// Covariance eigenvectors: w1 = u_max(R_B), w2 = w3 = u_min(R_B),
    /// q1 = u_max(R_A), q2 = q3 = u_min(R_A).
    Case1,
    /// Pencil eigenvectors: w1 = u_min(R_B^-1 R_A),
    /// w2 = w3 = u_max(R_B^-1 R_A), and the mirrored choice for q.
    Case2,
}

/// Builds the case-1 or case-2 precoder preset.
pub fn case_precoders(
    kind: CaseKind,
    r_a: &CorrelationMatrix,
    r_b: &CorrelationMatrix,
) -> Result<SamatPrecoders> {
    let (w1, w2, q1, q2) = match kind {
        CaseKind::Case1 => {
            let eb = eig_hermitian(r_b.entries())?;
            let ea = eig_hermitian(r_a.entries())?;
            (
                eb.max_vector(),
                eb.min_vector(),
                ea.max_vector(),
                ea.min_vector(),
            )
        }
        CaseKind::Case2 => {
            let pa = generalized_eig(r_a, r_b)?;
            let pb = generalized_eig(r_b, r_a)?;
            (
                pa.min_vector(),
                pa.max_vector(),
                pb.min_vector(),
                pb.max_vector(),
            )
        }
    };
    let w = CMatrix::from_columns(&[w1, w2.clone()]);
    let q = CMatrix::from_columns(&[q1, q2.clone()]);
    SamatPrecoders::new(w, q, w2, q2)
}

/// The twelve quadratic-form coefficients and the two Theta scalars that
/// drive the closed-form rate expressions.
#[derive(Debug, Clone, Copy)]
pub struct RateCoefficients {
    pub lam_a1: f64,
    pub lam_a2: f64,
    pub lam_a3: f64,
    pub lam_b1: f64,
    pub lam_b2: f64,
    pub lam_b3: f64,
    pub tau_a1: f64,
    pub tau_a2: f64,
    pub tau_a3: f64,
    pub tau_b1: f64,
    pub tau_b2: f64,
    pub tau_b3: f64,
    pub theta_a: f64,
    pub theta_b: f64,
}

/// Evaluates all coefficient quadratic forms for a precoder set:
/// lam's are leakage forms (q against R_A, w against R_B) and tau's are
/// signal forms (w against R_A, q against R_B).
pub fn coefficients(
    pre: &SamatPrecoders,
    r_a: &CorrelationMatrix,
    r_b: &CorrelationMatrix,
) -> Result<RateCoefficients> {
    if pre.w.nrows() != r_a.dim() || r_a.dim() != r_b.dim() {
        return Err(Error::DimMismatch(format!(
            "precoder rows {} vs covariance dims {}/{}",
            pre.w.nrows(),
            r_a.dim(),
            r_b.dim()
        )));
    }
    let col = |m: &CMatrix, j: usize| m.column(j).into_owned();
    let w1 = col(&pre.w, 0);
    let w2 = col(&pre.w, 1);
    let q1 = col(&pre.q, 0);
    let q2 = col(&pre.q, 1);
    Ok(RateCoefficients {
        lam_a1: r_a.quad_form(&q1),
        lam_a2: r_a.quad_form(&q2),
        lam_a3: r_a.quad_form(&pre.q3),
        lam_b1: r_b.quad_form(&w1),
        lam_b2: r_b.quad_form(&w2),
        lam_b3: r_b.quad_form(&pre.w3),
        tau_a1: r_a.quad_form(&w1),
        tau_a2: r_a.quad_form(&w2),
        tau_a3: r_a.quad_form(&pre.w3),
        tau_b1: r_b.quad_form(&q1),
        tau_b2: r_b.quad_form(&q2),
        tau_b3: r_b.quad_form(&pre.q3),
        theta_a: theta(&pre.w, r_a, r_b)?,
        theta_b: theta(&pre.q, r_a, r_b)?,
    })
}

/// Long-term average power consumption of an allocation.
pub fn power_constraint(p: &PowerAllocation, c: &RateCoefficients) -> f64 {
    let [p1, p2, p3, p4, p5, p6, p7, p8, p9, p10] = p.p;
    p1 + p2
        + p3
        + p4
        + p6
        + p7
        + p9
        + p10
        + p5 * (c.lam_a1 * p3 + c.lam_a2 * p4)
        + p8 * (c.lam_b1 * p1 + c.lam_b2 * p2)
}

/// Gradient of [`power_constraint`] in P1..P10.
pub fn power_constraint_gradient(p: &PowerAllocation, c: &RateCoefficients) -> [f64; 10] {
    let [p1, p2, p3, p4, p5, _, _, p8, _, _] = p.p;
    [
        1.0 + p8 * c.lam_b1,
        1.0 + p8 * c.lam_b2,
        1.0 + p5 * c.lam_a1,
        1.0 + p5 * c.lam_a2,
        c.lam_a1 * p3 + c.lam_a2 * p4,
        1.0,
        1.0,
        c.lam_b1 * p1 + c.lam_b2 * p2,
        1.0,
        1.0,
    ]
}

/// The effective-SNR weights of the slot-1 rate terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaTerms {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

/// delta_A1, delta_A2, delta_B1, delta_B2 for an allocation.
pub fn delta_terms(p: &PowerAllocation, c: &RateCoefficients) -> DeltaTerms {
    let [p1, p2, p3, p4, p5, p6, p7, p8, p9, p10] = p.p;
    DeltaTerms {
        a1: 1.0 / (1.0 + c.lam_a1 * p3 + c.lam_a2 * p4)
            + p5 / (1.0 + p5 + c.tau_a3 * p6 + c.lam_a3 * p7),
        a2: p8 / (1.0 + c.tau_a3 * p9 + c.lam_a3 * p10),
        b1: 1.0 / (1.0 + c.lam_b1 * p1 + c.lam_b2 * p2)
            + p8 / (1.0 + p8 + c.lam_b3 * p9 + c.tau_b3 * p10),
        b2: p5 / (1.0 + c.lam_b3 * p6 + c.tau_b3 * p7),
    }
}

/// Closed-form rate approximation, broken down by decoding stage.
#[derive(Debug, Clone, Copy)]
pub struct RateApprox {
    /// Per-slot sum rate (all four terms over three slots).
    pub sum: f64,
    /// Slot-1 private symbols of user A.
    pub s_a: f64,
    /// Extra symbols of user A.
    pub sp_a: f64,
    pub s_b: f64,
    pub sp_b: f64,
}

/// Evaluates the sum-rate approximation at an allocation.
pub fn rate_approx_samat(p: &PowerAllocation, c: &RateCoefficients) -> RateApprox {
    let [p1, p2, p3, p4, p5, p6, p7, p8, p9, p10] = p.p;
    let d = delta_terms(p, c);
    let s_a = (1.0
        + d.a1 * (c.tau_a1 * p1 + c.tau_a2 * p2)
        + d.a2 * (c.lam_b1 * p1 + c.lam_b2 * p2)
        + d.a1 * d.a2 * c.theta_a * p1 * p2)
        .log2();
    let sp_a = (1.0 + c.tau_a3 * p6 / (1.0 + p5 + c.lam_a3 * p7)).log2()
        + (1.0 + c.tau_a3 * p9 / (1.0 + c.lam_a3 * p10)).log2();
    let s_b = (1.0
        + d.b1 * (c.tau_b1 * p3 + c.tau_b2 * p4)
        + d.b2 * (c.lam_a1 * p3 + c.lam_a2 * p4)
        + d.b1 * d.b2 * c.theta_b * p3 * p4)
        .log2();
    let sp_b = (1.0 + c.tau_b3 * p7 / (1.0 + c.lam_b3 * p6)).log2()
        + (1.0 + c.tau_b3 * p10 / (1.0 + p8 + c.lam_b3 * p9)).log2();
    RateApprox {
        sum: (s_a + sp_a + s_b + sp_b) / 3.0,
        s_a,
        sp_a,
        s_b,
        sp_b,
    }
}

/// Sum-rate approximation together with its analytic gradient in P1..P10.
pub fn rate_approx_sum_gradient(p: &PowerAllocation, c: &RateCoefficients) -> (f64, [f64; 10]) {
    let [p1, p2, p3, p4, p5, p6, p7, p8, p9, p10] = p.p;
    let mut grad = [0.0_f64; 10];

    // --- user A, slot-1 term ---
    let e1 = 1.0 + c.lam_a1 * p3 + c.lam_a2 * p4;
    let e2 = 1.0 + p5 + c.tau_a3 * p6 + c.lam_a3 * p7;
    let e3 = 1.0 + c.tau_a3 * p9 + c.lam_a3 * p10;
    let da1 = 1.0 / e1 + p5 / e2;
    let da2 = p8 / e3;
    let ta = c.tau_a1 * p1 + c.tau_a2 * p2;
    let lb = c.lam_b1 * p1 + c.lam_b2 * p2;
    let s_a = 1.0 + da1 * ta + da2 * lb + da1 * da2 * c.theta_a * p1 * p2;
    // dS/d(da1), dS/d(da2)
    let s_by_da1 = ta + da2 * c.theta_a * p1 * p2;
    let s_by_da2 = lb + da1 * c.theta_a * p1 * p2;
    let da1_d = {
        let mut d = [0.0_f64; 10];
        d[2] = -c.lam_a1 / (e1 * e1);
        d[3] = -c.lam_a2 / (e1 * e1);
        d[4] = (e2 - p5) / (e2 * e2);
        d[5] = -p5 * c.tau_a3 / (e2 * e2);
        d[6] = -p5 * c.lam_a3 / (e2 * e2);
        d
    };
    let da2_d = {
        let mut d = [0.0_f64; 10];
        d[7] = 1.0 / e3;
        d[8] = -p8 * c.tau_a3 / (e3 * e3);
        d[9] = -p8 * c.lam_a3 / (e3 * e3);
        d
    };
    let mut s_a_grad = [0.0_f64; 10];
    s_a_grad[0] = da1 * c.tau_a1 + da2 * c.lam_b1 + da1 * da2 * c.theta_a * p2;
    s_a_grad[1] = da1 * c.tau_a2 + da2 * c.lam_b2 + da1 * da2 * c.theta_a * p1;
    for i in 2..10 {
        s_a_grad[i] = da1_d[i] * s_by_da1 + da2_d[i] * s_by_da2;
    }
    for i in 0..10 {
        grad[i] += s_a_grad[i] / (s_a * LN2);
    }

    // --- user A, extra-symbol terms ---
    let f1 = 1.0 + p5 + c.lam_a3 * p7;
    let t1 = 1.0 + c.tau_a3 * p6 / f1;
    grad[5] += c.tau_a3 / f1 / (t1 * LN2);
    grad[4] += -c.tau_a3 * p6 / (f1 * f1) / (t1 * LN2);
    grad[6] += -c.tau_a3 * p6 * c.lam_a3 / (f1 * f1) / (t1 * LN2);
    let f2 = 1.0 + c.lam_a3 * p10;
    let t2 = 1.0 + c.tau_a3 * p9 / f2;
    grad[8] += c.tau_a3 / f2 / (t2 * LN2);
    grad[9] += -c.tau_a3 * p9 * c.lam_a3 / (f2 * f2) / (t2 * LN2);

    // --- user B, slot-1 term ---
    let e1b = 1.0 + c.lam_b1 * p1 + c.lam_b2 * p2;
    let e2b = 1.0 + p8 + c.lam_b3 * p9 + c.tau_b3 * p10;
    let e3b = 1.0 + c.lam_b3 * p6 + c.tau_b3 * p7;
    let db1 = 1.0 / e1b + p8 / e2b;
    let db2 = p5 / e3b;
    let tb = c.tau_b1 * p3 + c.tau_b2 * p4;
    let la = c.lam_a1 * p3 + c.lam_a2 * p4;
    let s_b = 1.0 + db1 * tb + db2 * la + db1 * db2 * c.theta_b * p3 * p4;
    let s_by_db1 = tb + db2 * c.theta_b * p3 * p4;
    let s_by_db2 = la + db1 * c.theta_b * p3 * p4;
    let db1_d = {
        let mut d = [0.0_f64; 10];
        d[0] = -c.lam_b1 / (e1b * e1b);
        d[1] = -c.lam_b2 / (e1b * e1b);
        d[7] = (e2b - p8) / (e2b * e2b);
        d[8] = -p8 * c.lam_b3 / (e2b * e2b);
        d[9] = -p8 * c.tau_b3 / (e2b * e2b);
        d
    };
    let db2_d = {
        let mut d = [0.0_f64; 10];
        d[4] = 1.0 / e3b;
        d[5] = -p5 * c.lam_b3 / (e3b * e3b);
        d[6] = -p5 * c.tau_b3 / (e3b * e3b);
        d
    };
    let mut s_b_grad = [0.0_f64; 10];
    s_b_grad[2] = db1 * c.tau_b1 + db2 * c.lam_a1 + db1 * db2 * c.theta_b * p4;
    s_b_grad[3] = db1 * c.tau_b2 + db2 * c.lam_a2 + db1 * db2 * c.theta_b * p3;
    for i in 0..10 {
        if i != 2 && i != 3 {
            s_b_grad[i] = db1_d[i] * s_by_db1 + db2_d[i] * s_by_db2;
        }
    }
    for i in 0..10 {
        grad[i] += s_b_grad[i] / (s_b * LN2);
    }

    // --- user B, extra-symbol terms ---
    let g1 = 1.0 + c.lam_b3 * p6;
    let u1 = 1.0 + c.tau_b3 * p7 / g1;
    grad[6] += c.tau_b3 / g1 / (u1 * LN2);
    grad[5] += -c.tau_b3 * p7 * c.lam_b3 / (g1 * g1) / (u1 * LN2);
    let g2 = 1.0 + p8 + c.lam_b3 * p9;
    let u2 = 1.0 + c.tau_b3 * p10 / g2;
    grad[9] += c.tau_b3 / g2 / (u2 * LN2);
    grad[7] += -c.tau_b3 * p10 / (g2 * g2) / (u2 * LN2);
    grad[8] += -c.tau_b3 * p10 * c.lam_b3 / (g2 * g2) / (u2 * LN2);

    let sp_a = t1.log2() + t2.log2();
    let sp_b = u1.log2() + u2.log2();
    let sum = (s_a.log2() + sp_a + s_b.log2() + sp_b) / 3.0;
    for g in &mut grad {
        *g /= 3.0;
    }
    (sum, grad)
}

/// Relative residuals of the optimality conditions
/// P1/P2 = (1 + lamB2 P8)/(1 + lamB1 P8) and
/// P3/P4 = (1 + lamA2 P5)/(1 + lamA1 P5).
pub fn kkt_ratio_residual(p: &PowerAllocation, c: &RateCoefficients) -> Result<(f64, f64)> {
    let [p1, p2, p3, p4, p5, _, _, p8, _, _] = p.p;
    for (name, v) in [("P1", p1), ("P2", p2), ("P3", p3), ("P4", p4)] {
        if v <= 0.0 {
            return Err(Error::DivisionByZero(format!(
                "{name} is zero; the ratio conditions need P1..P4 > 0"
            )));
        }
    }
    let ratio1 = p1 / p2;
    let target1 = (1.0 + c.lam_b2 * p8) / (1.0 + c.lam_b1 * p8);
    let ratio2 = p3 / p4;
    let target2 = (1.0 + c.lam_a2 * p5) / (1.0 + c.lam_a1 * p5);
    Ok((
        (ratio1 - target1).abs() / ratio1,
        (ratio2 - target2).abs() / ratio2,
    ))
}

/// Multi-start options for the power search.
#[derive(Debug, Clone)]
pub struct PowerOpts {
    pub seed: u64,
    pub random_starts: usize,
    pub sqp: SqpOpts,
}

impl Default for PowerOpts {
    fn default() -> Self {
        Self {
            seed: 0,
            random_starts: 5,
            sqp: SqpOpts::default(),
        }
    }
}

/// Outcome of the multi-start power search.
#[derive(Debug, Clone)]
pub struct PowerReport {
    /// Approximation value at the returned allocation.
    pub objective: f64,
    pub feasible: bool,
    pub constraint_residual: f64,
    pub starts: usize,
    /// Solver report of the winning start.
    pub best: SolveReport,
}

/// Maximizes [`rate_approx_samat`] over the surface Pc = 3 * budget with
/// P >= 0, taking the best of eight starts (AMAT-like, SBF-like, uniform,
/// plus seeded random directions), each rescaled onto the constraint
/// surface by bisection on a global scale factor.
pub fn optimize_power(
    c: &RateCoefficients,
    budget: f64,
    opts: &PowerOpts,
) -> (PowerAllocation, PowerReport) {
    assert!(budget > 0.0, "power budget must be positive");
    let target = 3.0 * budget;
    let ctol = 1e-6 * target;

    let mut directions: Vec<[f64; 10]> = vec![
        [budget, budget, budget, budget, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0],
        [1.0; 10],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_starts {
        let mut d = [0.0; 10];
        for v in &mut d {
            *v = rng.gen_range(0.05..1.0);
        }
        directions.push(d);
    }

    let sqp_opts = SqpOpts {
        ctol,
        ..opts.sqp.clone()
    };
    let problem = NlpProblem {
        dim: 10,
        objective: Box::new(move |x: &[f64]| {
            let p = PowerAllocation {
                p: x.try_into().expect("dimension 10"),
            };
            let (v, g) = rate_approx_sum_gradient(&p, c);
            (v, g.to_vec())
        }),
        eq_constraint: Box::new(move |x: &[f64]| {
            let p = PowerAllocation {
                p: x.try_into().expect("dimension 10"),
            };
            let v = power_constraint(&p, c) - target;
            let g = power_constraint_gradient(&p, c);
            (v, g.to_vec())
        }),
        lower_bounds: vec![0.0; 10],
    };

    let starts = directions.len();
    // Starts are independent solves; winner selection stays in start
    // order so the result is thread-count invariant.
    let outcomes: Vec<_> = directions
        .into_par_iter()
        .map(|dir| {
            let x0 = scale_to_constraint(&dir, c, target)?;
            let (x, report) = sqp::solve(&problem, &x0.p, &sqp_opts);
            let alloc = PowerAllocation::new(x.try_into().expect("dimension 10"))
                .expect("bounds keep powers nonnegative");
            let objective = rate_approx_samat(&alloc, c).sum;
            let residual = (power_constraint(&alloc, c) - target).abs();
            Some((objective, alloc, report, residual <= ctol, residual))
        })
        .collect();
    let mut best: Option<(f64, PowerAllocation, SolveReport, bool, f64)> = None;
    for outcome in outcomes.into_iter().flatten() {
        // Feasible solutions strictly dominate infeasible ones.
        let better = best
            .as_ref()
            .is_none_or(|(bo, _, _, bf, _)| (outcome.3, outcome.0) > (*bf, *bo));
        if better {
            best = Some(outcome);
        }
    }
    let (objective, alloc, report, feasible, residual) =
        best.expect("at least the preset starts are scalable");
    (
        alloc,
        PowerReport {
            objective,
            feasible,
            constraint_residual: residual,
            starts,
            best: report,
        },
    )
}

/// Scales a nonnegative direction onto the constraint surface
/// Pc(s * dir) = target by bisection on s (Pc is increasing in s).
pub fn scale_to_constraint(
    dir: &[f64; 10],
    c: &RateCoefficients,
    target: f64,
) -> Option<PowerAllocation> {
    let eval = |s: f64| {
        let p = PowerAllocation {
            p: std::array::from_fn(|i| s * dir[i]),
        };
        power_constraint(&p, c)
    };
    if dir.iter().all(|&v| v <= 0.0) {
        return None;
    }
    let mut hi = 1.0;
    let mut grow = 0;
    while eval(hi) < target {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    Some(PowerAllocation {
        p: std::array::from_fn(|i| s * dir[i]),
    })
}

/// Monte Carlo ergodic sum-rate per slot of SAMAT with the
/// three-observation MMSE-SIC receiver at each user.
pub fn mc_rate_samat(
    r_a: &CorrelationMatrix,
    r_b: &CorrelationMatrix,
    pre: &SamatPrecoders,
    p: &PowerAllocation,
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
    let pre = pre.clone();
    let [p1, p2, p3, p4, p5, p6, p7, p8, p9, p10] = p.p;
    Ok(monte_carlo(trials, master_seed, move |trial| {
        let t = sample_triple(&sqrt_a, &sqrt_b, SeedSpec::new(master_seed, trial))
            .expect("validated dimensions");
        let (h1, h2, h3) = (&t.h[0], &t.h[1], &t.h[2]);
        let (g1, g2, g3) = (&t.g[0], &t.g[1], &t.g[2]);
        let h21 = h2[0].norm_sqr();
        let h31 = h3[0].norm_sqr();
        let g21 = g2[0].norm_sqr();
        let g31 = g3[0].norm_sqr();

        // User A. Rows of the aligned observation of s_A: h1^H W,
        // -sqrt(P5) h21* h1^H W, sqrt(P8) h31* g1^H W.
        let u = pre.w.adjoint() * h1;
        let v = pre.w.adjoint() * g1;
        let qh1 = pre.q.adjoint() * h1;
        let h2w3 = h2.dotc(&pre.w3).norm_sqr();
        let h2q3 = h2.dotc(&pre.q3).norm_sqr();
        let h3w3 = h3.dotc(&pre.w3).norm_sqr();
        let h3q3 = h3.dotc(&pre.q3).norm_sqr();
        // Interference-plus-noise power of the three rows.
        let k1 = 1.0 + p3 * qh1[0].norm_sqr() + p4 * qh1[1].norm_sqr();
        let k2 = 1.0 + p5 * h21 + p6 * h2w3 + p7 * h2q3;
        let k3 = 1.0 + p9 * h3w3 + p10 * h3q3;
        let gamma11 = 1.0 / k1 + p5 * h21 / k2;
        let gamma22 = p8 * h31 / k3;
        let rs_a = logdet2(gamma11, &u, gamma22, &v, p1, p2);
        // After SIC, rows 2-3 carry only the extra symbols; noise in row 2
        // is enhanced by the slot-2 alignment.
        let rsp_a = (1.0 + p6 * h2w3 / (1.0 + p5 * h21 + p7 * h2q3)).log2()
            + (1.0 + p9 * h3w3 / (1.0 + p10 * h3q3)).log2();

        // User B mirror. Rows: g1^H Q, sqrt(P5) g21* h1^H Q,
        // -sqrt(P8) g31* g1^H Q; alignment happens in slot 3, so the
        // noise enhancement P8 |g31|^2 lands in k3.
        let ub = pre.q.adjoint() * g1;
        let vb = pre.q.adjoint() * h1;
        let g2w3 = g2.dotc(&pre.w3).norm_sqr();
        let g2q3 = g2.dotc(&pre.q3).norm_sqr();
        let g3w3 = g3.dotc(&pre.w3).norm_sqr();
        let g3q3 = g3.dotc(&pre.q3).norm_sqr();
        let k1b = 1.0 + p1 * v[0].norm_sqr() + p2 * v[1].norm_sqr();
        let k2b = 1.0 + p6 * g2w3 + p7 * g2q3;
        let k3b = 1.0 + p8 * g31 + p9 * g3w3 + p10 * g3q3;
        let gamma11b = 1.0 / k1b + p8 * g31 / k3b;
        let gamma22b = p5 * g21 / k2b;
        let rs_b = logdet2(gamma11b, &ub, gamma22b, &vb, p3, p4);
        let rsp_b = (1.0 + p7 * g2q3 / (1.0 + p6 * g2w3)).log2()
            + (1.0 + p10 * g3q3 / (1.0 + p8 * g31 + p9 * g3w3)).log2();

        (rs_a + rsp_a + rs_b + rsp_b) / 3.0
    }))
}

// log2 det(I + X diag(pa, pb)) with X = alpha u u^H + beta v v^H.
fn logdet2(alpha: f64, u: &CVector, beta: f64, v: &CVector, pa: f64, pb: f64) -> f64 {
    let x11 = alpha * u[0].norm_sqr() + beta * v[0].norm_sqr();
    let x22 = alpha * u[1].norm_sqr() + beta * v[1].norm_sqr();
    let x12 = alpha * u[0] * u[1].conj() + beta * v[0] * v[1].conj();
    ((1.0 + pa * x11) * (1.0 + pb * x22) - pa * pb * x12.norm_sqr()).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amat::equal_power;
    use crate::linalg::exp_correlation;
    use approx::assert_relative_eq;

    fn exp_pair(
        ta: f64,
        pa: f64,
        tb: f64,
        pb: f64,
        m: usize,
    ) -> (CorrelationMatrix, CorrelationMatrix) {
        (
            exp_correlation(ta, pa, m).unwrap(),
            exp_correlation(tb, pb, m).unwrap(),
        )
    }

    fn identity_setup() -> (CorrelationMatrix, CorrelationMatrix, SamatPrecoders) {
        let r = CorrelationMatrix::identity(2).unwrap();
        let pre = case_precoders(CaseKind::Case1, &r, &r).unwrap();
        (r.clone(), r, pre)
    }

    #[test]
    fn coefficients_identity_are_all_one() {
        let (ra, rb, pre) = identity_setup();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        for v in [
            c.lam_a1, c.lam_a2, c.lam_a3, c.lam_b1, c.lam_b2, c.lam_b3, c.tau_a1, c.tau_a2,
            c.tau_a3, c.tau_b1, c.tau_b2, c.tau_b3,
        ] {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn case1_coefficients_hit_extreme_eigenvalues() {
        let (ra, rb) = exp_pair(0.95, 0.4, 0.9, 2.3, 3);
        let pre = case_precoders(CaseKind::Case1, &ra, &rb).unwrap();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        let eb = eig_hermitian(rb.entries()).unwrap();
        assert_relative_eq!(c.lam_b1, eb.max_value(), epsilon = 1e-10);
        assert_relative_eq!(c.lam_b2, eb.min_value(), epsilon = 1e-10);
    }

    #[test]
    fn case2_w2_maximizes_generalized_quotient() {
        let (ra, rb) = exp_pair(0.9, 0.2, 0.85, 2.0, 3);
        let pre = case_precoders(CaseKind::Case2, &ra, &rb).unwrap();
        let w2 = pre.w.column(1).into_owned();
        let quot = |x: &CVector| ra.quad_form(x) / rb.quad_form(x);
        let best = quot(&w2);
        for k in 0..1000u64 {
            let mut z = crate::channel::sample_cn01(3, SeedSpec::new(91, k), 0);
            let n = z.norm();
            z.unscale_mut(n);
            assert!(quot(&z) <= best + 1e-9);
        }
    }

    #[test]
    fn power_constraint_trivial_and_presets() {
        let (ra, rb, pre) = identity_setup();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        assert_eq!(power_constraint(&PowerAllocation::zero(), &c), 0.0);

        // AMAT preset with M=2 orthonormal precoders consumes exactly 3P.
        let p_budget = 5.0;
        let rho = equal_power(p_budget, 2);
        let amat = PowerAllocation::amat_preset(rho);
        assert_relative_eq!(power_constraint(&amat, &c), 3.0 * p_budget, epsilon = 1e-10);

        // SBF preset has no bilinear part: linear sum only.
        let sbf = PowerAllocation::sbf_preset(p_budget);
        assert_relative_eq!(power_constraint(&sbf, &c), 3.0 * p_budget, epsilon = 1e-12);
    }

    #[test]
    fn amat_preset_feasible_for_correlated_m2_pair() {
        // Orthonormal precoders keep Tr(Q^H R_A Q) = Tr(R_A) = 2 at M = 2,
        // so the preset still consumes exactly 8 rho.
        let (ra, rb) = exp_pair(0.9, 0.3, 0.7, 2.1, 2);
        let pre = case_precoders(CaseKind::Case1, &ra, &rb).unwrap();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        let p_budget = 2.0;
        let amat = PowerAllocation::amat_preset(equal_power(p_budget, 2));
        assert_relative_eq!(power_constraint(&amat, &c), 3.0 * p_budget, epsilon = 1e-10);
    }

    #[test]
    fn delta_terms_trivial_values() {
        let (ra, rb, pre) = identity_setup();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        let d0 = delta_terms(&PowerAllocation::zero(), &c);
        assert_eq!((d0.a1, d0.a2, d0.b1, d0.b2), (1.0, 0.0, 1.0, 0.0));

        let mut p = PowerAllocation::zero();
        p.p[4] = 1.0; // P5
        p.p[7] = 1.0; // P8
        let d = delta_terms(&p, &c);
        assert_relative_eq!(d.a1, 1.5, epsilon = 1e-15);
        assert_relative_eq!(d.a2, 1.0, epsilon = 1e-15);
        assert_relative_eq!(d.b1, 1.5, epsilon = 1e-15);
        assert_relative_eq!(d.b2, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rate_approx_zero_power_is_zero() {
        let (ra, rb, pre) = identity_setup();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        let r = rate_approx_samat(&PowerAllocation::zero(), &c);
        assert_eq!(r.sum, 0.0);
    }

    #[test]
    fn extra_symbol_only_preset_is_four_log_terms() {
        let (ra, rb) = exp_pair(0.8, 0.5, 0.7, 2.0, 2);
        let pre = case_precoders(CaseKind::Case1, &ra, &rb).unwrap();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        let mut p = PowerAllocation::zero();
        p.p[5] = 2.0; // P6
        p.p[6] = 3.0; // P7
        p.p[8] = 1.0; // P9
        p.p[9] = 4.0; // P10
        let r = rate_approx_samat(&p, &c);
        assert_eq!(r.s_a, 0.0);
        assert_eq!(r.s_b, 0.0);
        let want_sp_a = (1.0 + c.tau_a3 * 2.0 / (1.0 + c.lam_a3 * 3.0)).log2()
            + (1.0 + c.tau_a3 * 1.0 / (1.0 + c.lam_a3 * 4.0)).log2();
        assert_relative_eq!(r.sp_a, want_sp_a, epsilon = 1e-12);
    }

    #[test]
    fn doubling_slot1_powers_quadruples_bilinear_term() {
        let (ra, rb) = exp_pair(0.9, 0.4, 0.85, 2.2, 2);
        let pre = case_precoders(CaseKind::Case1, &ra, &rb).unwrap();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        let p = PowerAllocation::new([3.0, 5.0, 2.0, 4.0, 1.2, 0.3, 0.2, 0.8, 0.1, 0.4]).unwrap();
        let d = delta_terms(&p, &c);
        let bilinear = |p1: f64, p2: f64| d.a1 * d.a2 * c.theta_a * p1 * p2;
        assert_relative_eq!(
            bilinear(2.0 * p.p[0], 2.0 * p.p[1]),
            4.0 * bilinear(p.p[0], p.p[1]),
            max_relative = 1e-15
        );
    }

    #[test]
    fn amat_preset_rate_is_bilinear_dominated_at_high_power() {
        // At large rho the slot-1 terms are carried by the products
        // dA1*dA2*thetaA*P1*P2 (and the B-side mirror).
        let (ra, rb) = exp_pair(0.9, 0.4, 0.85, 2.2, 2);
        let pre = case_precoders(CaseKind::Case1, &ra, &rb).unwrap();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        let rho = 1e6;
        let p = PowerAllocation::amat_preset(rho);
        let d = delta_terms(&p, &c);
        let full = rate_approx_samat(&p, &c).sum;
        let dominant = ((d.a1 * d.a2 * c.theta_a * rho * rho).log2()
            + (d.b1 * d.b2 * c.theta_b * rho * rho).log2())
            / 3.0;
        assert!(
            (full - dominant).abs() / full < 1e-3,
            "full {full} vs dominant part {dominant}"
        );
    }

    #[test]
    fn kkt_residual_trivial_cases() {
        let (ra, rb, pre) = identity_setup();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        let mut p =
            PowerAllocation::new([2.0, 2.0, 2.0, 2.0, 0.7, 0.0, 0.0, 1.3, 0.0, 0.0]).unwrap();
        let (r1, r2) = kkt_ratio_residual(&p, &c).unwrap();
        assert!(r1 < 1e-14 && r2 < 1e-14);

        // P8 = 0 reduces the first condition to P1 = P2.
        p.p[7] = 0.0;
        p.p[0] = 3.0;
        let (r1, _) = kkt_ratio_residual(&p, &c).unwrap();
        assert_relative_eq!(r1, (3.0 / 2.0 - 1.0) / 1.5, epsilon = 1e-12);

        p.p[1] = 0.0;
        assert!(matches!(
            kkt_ratio_residual(&p, &c),
            Err(Error::DivisionByZero(_))
        ));
    }

    #[test]
    fn scaling_lands_on_constraint_surface() {
        let (ra, rb) = exp_pair(0.9, 0.1, 0.8, 1.9, 2);
        let pre = case_precoders(CaseKind::Case1, &ra, &rb).unwrap();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        let dir = [0.3, 1.0, 0.2, 0.9, 0.5, 0.4, 0.3, 0.6, 0.2, 0.1];
        let p = scale_to_constraint(&dir, &c, 30.0).unwrap();
        assert_relative_eq!(power_constraint(&p, &c), 30.0, max_relative = 1e-10);
    }

    #[test]
    fn mc_rate_zero_power_is_zero() {
        let (ra, rb, pre) = identity_setup();
        let est = mc_rate_samat(&ra, &rb, &pre, &PowerAllocation::zero(), 200, 3).unwrap();
        assert_eq!(est.mean_bits, 0.0);
    }
}
