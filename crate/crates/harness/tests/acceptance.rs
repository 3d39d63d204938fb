//! Acceptance suite: each test covers one numbered criterion at its
//! stated tolerance and prints one `[criterion NN] PASS ...` line
//! (visible with `cargo test -- --nocapture`).

use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use samat_core::amat::{
    equal_power, mc_rate_amat, optimize_precoders, rate_approx_amat, theta, AmatPrecoders,
    UpdateMethod,
};
use samat_core::channel::{sample_cn01, SeedSpec};
use samat_core::linalg::{
    eig_hermitian, exp_correlation, generalized_condition_number, CMatrix, CorrelationMatrix,
};
use samat_core::samat::{
    case_precoders, coefficients, kkt_ratio_residual, optimize_power, power_constraint,
    power_constraint_gradient, rate_approx_samat, rate_approx_sum_gradient, CaseKind,
    PowerAllocation, PowerOpts,
};
use samat_core::sbf::{ge_precoders, sum_rate_lower_bound};
use samat_core::sqp::{check_gradient, solve, NlpProblem, SolveStatus, SqpOpts};
use samat_harness::emit::to_csv;
use samat_harness::oracles::log_form_oracle;
use samat_harness::scenario::{mix, run_scenario, PhasePolicy, ResultTable, Scenario, Scheme};

const MASTER_SEED: u64 = 20_240_817;

fn pass(criterion: u32, detail: &str) {
    println!("[criterion {criterion:02}] PASS {detail}");
}

/// Random PD covariance (trace-normalized) from a Gram matrix.
fn random_covariance(m: usize, seed: u64) -> CorrelationMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = CMatrix::from_fn(m, m, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    CorrelationMatrix::new(&x * x.adjoint() + CMatrix::identity(m, m).scale(0.1)).unwrap()
}

fn random_unit(m: usize, seed: u64) -> DVector<Complex64> {
    let mut v = sample_cn01(m, SeedSpec::new(seed, 0), 0);
    let n = v.norm();
    v.unscale_mut(n);
    v
}

/// The reference operating point |t| = (0.95, 0.9) with a seeded
/// min-gap phase draw.
fn operating_point(m: usize, salt: u64) -> (CorrelationMatrix, CorrelationMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(MASTER_SEED, salt));
    let (a, b) = loop {
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        let b = rng.gen_range(0.0..std::f64::consts::TAU);
        let d = (a - b).abs();
        if d.min(std::f64::consts::TAU - d) >= std::f64::consts::FRAC_PI_2 {
            break (a, b);
        }
    };
    (
        exp_correlation(0.95, a, m).unwrap(),
        exp_correlation(0.9, b, m).unwrap(),
    )
}

#[test]
fn criterion_01_log_form_oracle() {
    let start = Instant::now();
    let trials = 1_000_000;
    let mut worst = 0.0_f64;
    for (i, &m) in [2usize, 2, 2, 2, 2, 4, 4, 4, 4, 4].iter().enumerate() {
        let r = random_covariance(m, mix(MASTER_SEED, 100 + i as u64));
        let w = random_unit(m, mix(MASTER_SEED, 200 + i as u64));
        let out = log_form_oracle(&r, &w, trials, mix(MASTER_SEED, 300 + i as u64)).unwrap();
        worst = worst.max(out.gap);
    }
    let elapsed = start.elapsed();
    assert!(worst < 0.01, "worst gap {worst}");
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(
        1,
        &format!("worst gap {worst:.5} over 10 cases, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_ge_bound_identity() {
    let mut worst_bound = 0.0_f64;
    let mut worst_sym = 0.0_f64;
    for i in 0..100u64 {
        let a = random_covariance(3, mix(MASTER_SEED, 400 + i));
        let b = random_covariance(3, mix(MASTER_SEED, 500 + i));
        let pre = ge_precoders(&a, &b).unwrap();
        let bound = sum_rate_lower_bound(&a, &b, &pre);
        let chi_ab = generalized_condition_number(&a, &b).unwrap();
        let chi_ba = generalized_condition_number(&b, &a).unwrap();
        worst_bound = worst_bound.max((bound - chi_ab.log2()).abs());
        worst_sym = worst_sym.max((chi_ab - chi_ba).abs() / chi_ab);
    }
    assert!(
        worst_bound < 1e-9,
        "bound identity off by {worst_bound:.2e}"
    );
    assert!(worst_sym < 1e-9, "chi asymmetry {worst_sym:.2e}");
    pass(
        2,
        &format!("bound identity {worst_bound:.2e}, chi asymmetry {worst_sym:.2e} over 100 pairs"),
    );
}

#[test]
fn criterion_03_unitary_precoders_m2() {
    let (ra, rb) = operating_point(2, 600);
    let closed = {
        let p = ra.entries() * rb.entries();
        ra.trace() * rb.trace() - (0..2).map(|i| p[(i, i)].re).sum::<f64>()
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..100u64 {
        let z = sample_cn01(4, SeedSpec::new(mix(MASTER_SEED, 700), k), 0);
        let h = CMatrix::from_fn(2, 2, |i, j| z[2 * i + j]);
        let unitary = eig_hermitian(&(h.clone() + h.adjoint())).unwrap().vectors;
        let th = theta(&unitary, &ra, &rb).unwrap();
        lo = lo.min(th);
        hi = hi.max(th);
        assert!((th - closed).abs() < 1e-10, "Theta {th} vs closed {closed}");
    }
    assert!(hi - lo < 1e-9, "Theta spread {}", hi - lo);

    // Identity vs random-unitary precoders give the same Monte Carlo rate.
    let rho = equal_power(100.0, 2);
    let seed = mix(MASTER_SEED, 710);
    let org = AmatPrecoders::org(2).unwrap();
    let rnd = AmatPrecoders::we(&ra, &rb).unwrap();
    let a = mc_rate_amat(&ra, &rb, &org, rho, 10_000, seed).unwrap();
    let b = mc_rate_amat(&ra, &rb, &rnd, rho, 10_000, seed).unwrap();
    let gap = (a.mean_bits - b.mean_bits).abs();
    let tol = 2.0 * (a.stderr + b.stderr);
    assert!(gap <= tol, "MC gap {gap} > {tol}");
    pass(
        3,
        &format!(
            "Theta spread {:.1e}, closed-form match, MC gap {gap:.4} <= {tol:.4}",
            hi - lo
        ),
    );
}

#[test]
fn criterion_04_theta_closed_form_grid() {
    let mut worst = 0.0_f64;
    for &t in &[0.0, 0.3, 0.5, 0.7, 0.9] {
        for k in 0..5 {
            let dphi = k as f64 * std::f64::consts::PI / 4.0;
            let ra = exp_correlation(t, 0.2, 2).unwrap();
            let rb = exp_correlation(t, 0.2 + dphi, 2).unwrap();
            let w = AmatPrecoders::org(2).unwrap().w;
            let got = theta(&w, &ra, &rb).unwrap();
            let want = 2.0 * (1.0 - t * t * dphi.cos());
            worst = worst.max((got - want).abs());
        }
    }
    assert!(worst < 1e-10, "worst deviation {worst:.2e}");
    pass(4, &format!("worst deviation {worst:.2e} on the 5x5 grid"));
}

#[test]
fn criterion_05_optimizer_convergence() {
    let mut worst_iters = 0usize;
    for &m in &[4usize, 8] {
        for k in 0..10u64 {
            let ra = random_covariance(m, mix(MASTER_SEED, 800 + k + m as u64 * 64));
            let rb = random_covariance(m, mix(MASTER_SEED, 900 + k + m as u64 * 64));
            for method in [UpdateMethod::MaxEig, UpdateMethod::GradAct] {
                let (w, trace) =
                    optimize_precoders(&ra, &rb, method, 1e-8, 200, mix(MASTER_SEED, 950 + k))
                        .unwrap();
                assert!(
                    trace.converged && trace.iterations <= 30,
                    "m={m} k={k} {method:?}: {} iterations",
                    trace.iterations
                );
                for pair in trace.theta_values.windows(2) {
                    assert!(pair[1] >= pair[0] - 1e-12, "non-monotone trace {pair:?}");
                }
                worst_iters = worst_iters.max(trace.iterations);
                let opt = theta(&w, &ra, &rb).unwrap();
                let we = theta(&AmatPrecoders::we(&ra, &rb).unwrap().w, &ra, &rb).unwrap();
                let org = theta(&AmatPrecoders::org(m).unwrap().w, &ra, &rb).unwrap();
                assert!(opt >= we - 1e-8 && opt >= org - 1e-8);
            }
        }
    }
    pass(
        5,
        &format!("20 instances x 2 methods, monotone, worst {worst_iters} iterations"),
    );
}

#[test]
fn criterion_06_equal_power_rule() {
    assert_eq!(equal_power(8.0, 2), 3.0);
    assert_eq!(equal_power(1.0, 2), 3.0 / 8.0);
    let (ra, rb) = operating_point(2, 1000);
    let pre = case_precoders(CaseKind::Case1, &ra, &rb).unwrap();
    let c = coefficients(&pre, &ra, &rb).unwrap();
    let budget = 5.0;
    let alloc = PowerAllocation::amat_preset(equal_power(budget, 2));
    let resid = (power_constraint(&alloc, &c) - 3.0 * budget).abs();
    assert!(resid < 1e-10, "constraint residual {resid:.2e}");
    pass(
        6,
        &format!("rho = 3P/8 exact, AMAT preset residual {resid:.2e}"),
    );
}

#[test]
fn criterion_07_amat_prelog_slope() {
    let start = Instant::now();
    let (ra, rb) = operating_point(2, 1100);
    let pre = AmatPrecoders::org(2).unwrap();
    let seed = mix(MASTER_SEED, 1101);
    let lo = mc_rate_amat(&ra, &rb, &pre, 1e3, 10_000, seed).unwrap();
    let hi = mc_rate_amat(&ra, &rb, &pre, 1e4, 10_000, seed).unwrap();
    let slope = (hi.mean_bits - lo.mean_bits) / 10f64.log2();
    let elapsed = start.elapsed();
    assert!(
        (1.25..=1.42).contains(&slope),
        "pre-log slope {slope} outside [1.25, 1.42]"
    );
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    pass(
        7,
        &format!("slope {slope:.3} in [1.25, 1.42], {elapsed:.2?}"),
    );
}

#[test]
fn criterion_08_power_ratio_conditions() {
    // The ratio conditions describe interior optima (P1..P4 > 0), i.e.
    // the regime where the retransmission mode carries the rate at high
    // SNR. The per-M correlation levels keep the pencil moderately
    // conditioned so 30 dB is inside that regime for both cases; under
    // extreme pencil conditioning (chi in the thousands) the optimizer
    // rightly parks P3 at zero (SBF-like) and the conditions are vacuous.
    let budget = 1000.0;
    let mut worst = 0.0_f64;
    for (m, t_a, t_b) in [(2usize, 0.95, 0.9), (4, 0.8, 0.7)] {
        let ra = exp_correlation(t_a, 0.9, m).unwrap();
        let rb = exp_correlation(t_b, 2.8, m).unwrap();
        for kind in [CaseKind::Case1, CaseKind::Case2] {
            let pre = case_precoders(kind, &ra, &rb).unwrap();
            let c = coefficients(&pre, &ra, &rb).unwrap();
            let opts = PowerOpts {
                seed: mix(MASTER_SEED, 1300 + m as u64),
                ..PowerOpts::default()
            };
            let (alloc, report) = optimize_power(&c, budget, &opts);
            assert!(report.feasible, "m={m} {kind:?}: infeasible output");
            let (r1, r2) = kkt_ratio_residual(&alloc, &c).unwrap();
            assert!(
                r1 <= 0.10 && r2 <= 0.10,
                "m={m} {kind:?}: residuals {r1:.4} {r2:.4}"
            );
            worst = worst.max(r1).max(r2);
        }
    }

    // Uncorrelated channels: equal slot-1 powers and near-zero residuals.
    let r = CorrelationMatrix::identity(2).unwrap();
    let pre = case_precoders(CaseKind::Case1, &r, &r).unwrap();
    let c = coefficients(&pre, &r, &r).unwrap();
    let (alloc, report) = optimize_power(&c, budget, &PowerOpts::default());
    assert!(report.feasible);
    let mean = alloc.p[..4].iter().sum::<f64>() / 4.0;
    for &v in &alloc.p[..4] {
        assert!(
            (v - mean).abs() / mean < 0.05,
            "slot-1 spread: {:?}",
            alloc.p
        );
    }
    let (r1, r2) = kkt_ratio_residual(&alloc, &c).unwrap();
    assert!(r1 <= 0.01 && r2 <= 0.01, "identity residuals {r1} {r2}");
    pass(
        8,
        &format!(
            "worst residual {worst:.4} (cases 1-2, M = 2 and 4); identity case {r1:.2e}/{r2:.2e}"
        ),
    );
}

fn dominance_scenario() -> Scenario {
    Scenario {
        m: 2,
        t_mag_a: 1.0,
        t_mag_b: 1.0,
        phase_policy: PhasePolicy::RandomMinGap(std::f64::consts::FRAC_PI_2),
        snr_grid_db: vec![0.0, 10.0, 20.0, 30.0],
        t_grid: vec![0.0, 0.5, 0.9, 0.99],
        schemes: vec![Scheme::SbfWe, Scheme::AmatOrg, Scheme::SamatCase1],
        trials: 10_000,
        master_seed: MASTER_SEED,
    }
}

fn dominance_table() -> &'static ResultTable {
    static TABLE: OnceLock<ResultTable> = OnceLock::new();
    TABLE.get_or_init(|| run_scenario(&dominance_scenario()).unwrap())
}

#[test]
fn criterion_09_samat_dominance_sweep() {
    let start = Instant::now();
    let table = dominance_table();
    let mut worst_margin = f64::INFINITY;
    let cells = table.rows.chunks(3);
    let mut checked = 0;
    for cell in cells {
        let find = |s: Scheme| {
            cell.iter()
                .find(|r| r.scheme == s)
                .and_then(|r| r.estimate.as_ref())
                .unwrap_or_else(|| panic!("missing estimate for {}", s.name()))
        };
        let sbf = find(Scheme::SbfWe);
        let amat = find(Scheme::AmatOrg);
        let samat = find(Scheme::SamatCase1);
        let base = if sbf.mean_bits >= amat.mean_bits {
            sbf
        } else {
            amat
        };
        let tol = 2.0 * (samat.stderr * samat.stderr + base.stderr * base.stderr).sqrt();
        let margin = samat.mean_bits - base.mean_bits;
        worst_margin = worst_margin.min(margin + tol);
        assert!(
            margin >= -tol,
            "t={} snr={}: SAMAT {:.4} below max(SBF {:.4}, AMAT {:.4}) - {tol:.4}",
            cell[0].t_mag_a,
            cell[0].snr_db,
            samat.mean_bits,
            sbf.mean_bits,
            amat.mean_bits
        );
        checked += 1;
    }
    let elapsed = start.elapsed();
    assert_eq!(checked, 16);
    assert!(elapsed.as_secs_f64() < 900.0, "took {elapsed:?}");
    pass(
        9,
        &format!("16 grid cells dominated (tightest slack {worst_margin:.4}), {elapsed:.2?}"),
    );
}

#[test]
fn criterion_10_approximation_fidelity() {
    let table = dominance_table();
    let mut worst_p1 = 0.0_f64;
    let mut worst_p3 = 0.0_f64;
    for cell in table.rows.chunks(3) {
        if cell[0].snr_db < 10.0 {
            continue;
        }
        let ra = exp_correlation(cell[0].t_mag_a.min(1.0 - 1e-6), cell[0].phase_a, 2).unwrap();
        let rb = exp_correlation(cell[0].t_mag_b.min(1.0 - 1e-6), cell[0].phase_b, 2).unwrap();
        let budget = 10f64.powf(cell[0].snr_db / 10.0);

        // Closed-form AMAT rate at equal power vs the measured AMAT row.
        let amat_row = cell.iter().find(|r| r.scheme == Scheme::AmatOrg).unwrap();
        let mc = amat_row.estimate.as_ref().unwrap().mean_bits;
        let rho = equal_power(budget, 2);
        let th = theta(&AmatPrecoders::org(2).unwrap().w, &ra, &rb).unwrap();
        let approx = 2.0 * rate_approx_amat(rho, th);
        let gap1 = (approx - mc).abs() / mc;
        worst_p1 = worst_p1.max(gap1);
        assert!(
            gap1 <= 0.20,
            "AMAT approximation gap {gap1:.3} at t={} snr={}",
            cell[0].t_mag_a,
            cell[0].snr_db
        );

        // Closed-form SAMAT rate at the reported allocation vs its row.
        let samat_row = cell
            .iter()
            .find(|r| r.scheme == Scheme::SamatCase1)
            .unwrap();
        let alloc = samat_row.power.as_ref().unwrap();
        let pre = case_precoders(CaseKind::Case1, &ra, &rb).unwrap();
        let c = coefficients(&pre, &ra, &rb).unwrap();
        let approx = rate_approx_samat(alloc, &c).sum;
        let mc = samat_row.estimate.as_ref().unwrap().mean_bits;
        let gap3 = (approx - mc).abs() / mc;
        worst_p3 = worst_p3.max(gap3);
        assert!(
            gap3 <= 0.25,
            "SAMAT approximation gap {gap3:.3} at t={} snr={}",
            cell[0].t_mag_a,
            cell[0].snr_db
        );
    }
    pass(
        10,
        &format!(
            "worst relative gaps: AMAT {worst_p1:.3} (<= 0.20), SAMAT {worst_p3:.3} (<= 0.25)"
        ),
    );
}

#[test]
fn criterion_11_solver_units() {
    // Simplex projection against the sort-and-threshold oracle.
    let target = vec![0.9, 0.8, -0.5, 0.2, 0.05];
    let oracle = {
        let mut sorted = target.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut cum = 0.0;
        let mut thr = 0.0;
        for (k, &v) in sorted.iter().enumerate() {
            cum += v;
            let t = (cum - 1.0) / (k + 1) as f64;
            if v > t {
                thr = t;
            }
        }
        target
            .iter()
            .map(|&v| (v - thr).max(0.0))
            .collect::<Vec<_>>()
    };
    let c = target.clone();
    let p = NlpProblem {
        dim: 5,
        objective: Box::new(move |x: &[f64]| {
            let v = -x
                .iter()
                .zip(&c)
                .map(|(xi, ci)| (xi - ci) * (xi - ci))
                .sum::<f64>();
            (
                v,
                x.iter().zip(&c).map(|(xi, ci)| -2.0 * (xi - ci)).collect(),
            )
        }),
        eq_constraint: Box::new(|x: &[f64]| (x.iter().sum::<f64>() - 1.0, vec![1.0; x.len()])),
        lower_bounds: vec![0.0; 5],
    };
    let (x, report) = solve(&p, &[0.2; 5], &SqpOpts::default());
    assert_eq!(report.status, SolveStatus::Converged);
    for (a, b) in x.iter().zip(&oracle) {
        assert!(
            (a - b).abs() < 1e-6,
            "projection {x:?} vs oracle {oracle:?}"
        );
    }

    // Symmetric waterfilling splits the budget evenly.
    let p = NlpProblem {
        dim: 4,
        objective: Box::new(|x: &[f64]| {
            (
                x.iter().map(|&v| (1.0 + v).ln()).sum::<f64>(),
                x.iter().map(|&v| 1.0 / (1.0 + v)).collect(),
            )
        }),
        eq_constraint: Box::new(|x: &[f64]| (x.iter().sum::<f64>() - 2.0, vec![1.0; x.len()])),
        lower_bounds: vec![0.0; 4],
    };
    let (x, report) = solve(&p, &[1.4, 0.2, 0.2, 0.2], &SqpOpts::default());
    assert_eq!(report.status, SolveStatus::Converged);
    for &v in &x {
        assert!((v - 0.5).abs() < 1e-6, "waterfilling {x:?}");
    }

    // Analytic gradients of the power-optimization objective and
    // constraint agree with central finite differences.
    let (ra, rb) = operating_point(2, 1400);
    let pre = case_precoders(CaseKind::Case1, &ra, &rb).unwrap();
    let coef = coefficients(&pre, &ra, &rb).unwrap();
    let point = [2.0, 7.0, 1.5, 4.0, 0.8, 0.3, 0.6, 1.1, 0.2, 0.9];
    let rate_err = check_gradient(
        |v: &[f64]| {
            let p = PowerAllocation {
                p: v.try_into().unwrap(),
            };
            let (val, g) = rate_approx_sum_gradient(&p, &coef);
            (val, g.to_vec())
        },
        &point,
    );
    let con_err = check_gradient(
        |v: &[f64]| {
            let p = PowerAllocation {
                p: v.try_into().unwrap(),
            };
            (
                power_constraint(&p, &coef),
                power_constraint_gradient(&p, &coef).to_vec(),
            )
        },
        &point,
    );
    assert!(rate_err < 1e-5, "rate gradient error {rate_err:.2e}");
    assert!(con_err < 1e-5, "constraint gradient error {con_err:.2e}");
    pass(
        11,
        &format!(
            "projection + waterfilling to 1e-6; gradient errors {rate_err:.1e} / {con_err:.1e}"
        ),
    );
}

#[test]
fn criterion_12_deterministic_sweeps() {
    let mut scenario = dominance_scenario();
    // Desk-scale rerun: determinism does not depend on the trial count.
    scenario.trials = 500;
    scenario.schemes = vec![Scheme::SbfGe, Scheme::AmatOpt, Scheme::SamatCase2];
    let a = to_csv(&run_scenario(&scenario).unwrap());
    let b = to_csv(&run_scenario(&scenario).unwrap());
    assert_eq!(a, b, "rerun produced different CSV bytes");
    pass(12, &format!("byte-identical rerun ({} bytes)", a.len()));
}
