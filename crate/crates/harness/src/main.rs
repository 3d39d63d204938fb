//! Command-line front end: `validate`, `sweep-t`, `sweep-snr`, `converge`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use samat_core::amat::{equal_power, optimize_precoders, theta, UpdateMethod};
use samat_core::linalg::{exp_correlation, generalized_condition_number, CorrelationMatrix};
use samat_core::samat::{
    case_precoders, coefficients, power_constraint, CaseKind, PowerAllocation,
};
use samat_core::sbf::{ge_precoders, sum_rate_lower_bound};
use samat_harness::emit::{emit, plot_script, to_csv, EmitFormat};
use samat_harness::oracles::{
    basis_vector, log_form_oracle, ratio_oracle, scaled_outer, RatioSpec,
};
use samat_harness::scenario::{mix, run_scenario, Scenario};

#[derive(Parser)]
#[command(
    name = "samat",
    about = "Two-user MISO broadcast channel simulator: statistical beamforming, \
             AMAT retransmission, and SAMAT power optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed-form validation oracles and property checks
    Validate(CommonArgs),
    /// Sweep the correlation grid at the first SNR entry
    SweepT(CommonArgs),
    /// Sweep the SNR grid at the first correlation entry
    SweepSnr(CommonArgs),
    /// Emit precoder-optimizer convergence traces
    Converge(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config file (flat `key = value`; see README). Defaults
    /// apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV / plot / report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario's Monte Carlo trial count.
    #[arg(long)]
    trials: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(args) => validate(args),
        Command::SweepT(args) => sweep(args, SweepAxis::Correlation),
        Command::SweepSnr(args) => sweep(args, SweepAxis::Snr),
        Command::Converge(args) => converge(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_scenario(args: &CommonArgs) -> Result<Scenario, Box<dyn std::error::Error>> {
    let mut s = match &args.config {
        Some(path) => Scenario::parse(&std::fs::read_to_string(path)?)?,
        None => Scenario::parse("")?,
    };
    if let Some(seed) = args.seed {
        s.master_seed = seed;
    }
    if let Some(trials) = args.trials {
        s.trials = trials;
    }
    Ok(s)
}

enum SweepAxis {
    Correlation,
    Snr,
}

fn sweep(args: &CommonArgs, axis: SweepAxis) -> Result<bool, Box<dyn std::error::Error>> {
    let mut s = load_scenario(args)?;
    let (stem, x_column) = match axis {
        SweepAxis::Correlation => {
            s.snr_grid_db.truncate(1);
            ("sweep_t", "t_mag_A")
        }
        SweepAxis::Snr => {
            s.t_grid.truncate(1);
            ("sweep_snr", "snr_db")
        }
    };
    let table = run_scenario(&s)?;
    for row in &table.rows {
        if row.status != "ok" {
            eprintln!(
                "cell failed: {} t=({}, {}) snr={} dB: {}",
                row.scheme.name(),
                row.t_mag_a,
                row.t_mag_b,
                row.snr_db,
                row.status
            );
        }
    }
    let csv_path = emit(&table, EmitFormat::Csv, &args.out, stem)?;
    let script = plot_script(&format!("{stem}.csv"), x_column);
    let script_path = args.out.join(format!("{stem}.py"));
    std::fs::write(&script_path, script)?;
    println!("{}", csv_path.display());
    println!("{}", script_path.display());
    Ok(true)
}

fn converge(args: &CommonArgs) -> Result<bool, Box<dyn std::error::Error>> {
    let s = load_scenario(args)?;
    std::fs::create_dir_all(&args.out)?;
    let instances = 20u64;
    let mut csv = String::from("method,M,instance,iteration,theta\n");
    let mut ok = true;
    for &method in &[UpdateMethod::MaxEig, UpdateMethod::GradAct] {
        for inst in 0..instances {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(s.master_seed, 0xc0_0000 + inst));
            let (ra, rb) = random_pair(s.m, &mut rng)?;
            let (_, trace) =
                optimize_precoders(&ra, &rb, method, 1e-8, 200, mix(s.master_seed, inst))?;
            for (i, th) in trace.theta_values.iter().enumerate() {
                csv.push_str(&format!("{:?},{},{},{},{}\n", method, s.m, inst, i + 1, th));
            }
            if !trace.converged {
                ok = false;
                eprintln!("instance {inst} ({method:?}) did not converge");
            }
        }
    }
    let path = args.out.join("converge.csv");
    std::fs::write(&path, csv)?;
    println!("{}", path.display());
    Ok(ok)
}

fn random_pair(
    m: usize,
    rng: &mut ChaCha8Rng,
) -> samat_core::Result<(CorrelationMatrix, CorrelationMatrix)> {
    let tau = std::f64::consts::TAU;
    Ok((
        exp_correlation(rng.gen_range(0.0..0.99), rng.gen_range(0.0..tau), m)?,
        exp_correlation(rng.gen_range(0.0..0.99), rng.gen_range(0.0..tau), m)?,
    ))
}

fn validate(args: &CommonArgs) -> Result<bool, Box<dyn std::error::Error>> {
    let s = load_scenario(args)?;
    let trials = if args.trials.is_some() {
        s.trials
    } else {
        1_000_000
    };
    let seed = s.master_seed;
    let mut report = Vec::new();
    let mut all_ok = true;
    let mut check = |name: &str, pass: bool, detail: String| {
        let line = format!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        report.push(line);
        all_ok &= pass;
    };

    // Log quadratic-form identity, ten (R, w) pairs across M in {2, 4}.
    let mut worst = 0.0f64;
    for (i, &m) in [2usize, 2, 2, 2, 2, 4, 4, 4, 4, 4].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x1e_0000 + i as u64));
        let (r, _) = random_pair(m, &mut rng)?;
        let mut w = samat_core::channel::sample_cn01(
            m,
            samat_core::channel::SeedSpec::new(mix(seed, i as u64), 0),
            3,
        );
        let n = w.norm();
        w.unscale_mut(n);
        let out = log_form_oracle(&r, &w, trials, mix(seed, 0x11_0000 + i as u64))?;
        worst = worst.max(out.gap);
    }
    check(
        "log-form identity",
        worst < 0.01,
        format!("worst |MC - closed| = {worst:.5} over 10 cases at {trials} trials"),
    );

    // Ratio-of-forms oracle: exactness, lower bound, and the dependent
    // retransmission instance (reported).
    let exact = ratio_oracle(&RatioSpec::Constants { x: 2.0, y: 5.0 }, 10, 1);
    check(
        "ratio oracle constants",
        exact.gap == 0.0,
        format!("gap = {}", exact.gap),
    );
    let r09 = exp_correlation(0.9, 0.8, 2)?;
    let sq = samat_core::linalg::hermitian_sqrt(&r09)?;
    let pre = case_precoders(CaseKind::Case1, &r09, &exp_correlation(0.9, 2.6, 2)?)?;
    let (p5, p6, p7) = (1.0, 0.8, 0.6);
    let e1 = basis_vector(2, 0);
    let a = scaled_outer(&sq, &e1, p5);
    let b = scaled_outer(&sq, &e1, p5)
        + scaled_outer(&sq, &pre.w3, p6)
        + scaled_outer(&sq, &pre.q3, p7);
    let dep = ratio_oracle(
        &RatioSpec::SharedForms { a, b },
        trials.min(200_000),
        mix(seed, 0x22),
    );
    check(
        "ratio oracle retransmission term",
        dep.first_order > 0.0,
        format!(
            "MC {:.5} vs first-order {:.5} (bias {:+.5})",
            dep.mc_ratio_mean,
            dep.first_order,
            dep.mc_ratio_mean - dep.first_order
        ),
    );

    // High-SNR bound at the GE precoders equals the pencil condition
    // number on both orderings.
    let mut worst_bound = 0.0f64;
    let mut worst_sym = 0.0f64;
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x33_0000 + i));
        let (ra, rb) = random_pair(3, &mut rng)?;
        let pre = ge_precoders(&ra, &rb)?;
        let bound = sum_rate_lower_bound(&ra, &rb, &pre);
        let chi_ab = generalized_condition_number(&ra, &rb)?;
        let chi_ba = generalized_condition_number(&rb, &ra)?;
        worst_bound = worst_bound.max((bound - chi_ab.log2()).abs());
        worst_sym = worst_sym.max((chi_ab - chi_ba).abs() / chi_ab);
    }
    check(
        "GE bound identity",
        worst_bound < 1e-9 && worst_sym < 1e-9,
        format!(
            "worst |bound - log2 chi| = {worst_bound:.2e}, worst chi asymmetry = {worst_sym:.2e}"
        ),
    );

    // Closed-form Theta on the exponential model at M = 2.
    let mut worst_theta = 0.0f64;
    for &t in &[0.0, 0.3, 0.5, 0.7, 0.9] {
        for k in 0..5 {
            let dphi = k as f64 * std::f64::consts::PI / 4.0;
            let ra = exp_correlation(t, 0.2, 2)?;
            let rb = exp_correlation(t, 0.2 + dphi, 2)?;
            let w = samat_core::amat::AmatPrecoders::org(2)?.w;
            let got = theta(&w, &ra, &rb)?;
            let want = 2.0 * (1.0 - t * t * dphi.cos());
            worst_theta = worst_theta.max((got - want).abs());
        }
    }
    check(
        "Theta closed form",
        worst_theta < 1e-10,
        format!("worst deviation = {worst_theta:.2e} over the 5x5 grid"),
    );

    // Equal power rule and the AMAT preset budget identity at M = 2.
    let rho = equal_power(8.0, 2);
    let ra = exp_correlation(0.9, 0.3, 2)?;
    let rb = exp_correlation(0.7, 2.1, 2)?;
    let pre1 = case_precoders(CaseKind::Case1, &ra, &rb)?;
    let c = coefficients(&pre1, &ra, &rb)?;
    let consumed = power_constraint(&PowerAllocation::amat_preset(equal_power(5.0, 2)), &c);
    check(
        "equal power rule",
        rho == 3.0 && (consumed - 15.0).abs() < 1e-10,
        format!("rho(8, 2) = {rho}, AMAT preset consumes {consumed} of 15"),
    );

    // Determinism: a small sweep reruns byte-identically.
    let mut tiny = Scenario::parse("trials = 200\nsnr_grid_db = 10\nt_grid = 0.5, 0.9")?;
    tiny.master_seed = seed;
    let csv1 = to_csv(&run_scenario(&tiny)?);
    let csv2 = to_csv(&run_scenario(&tiny)?);
    check(
        "sweep determinism",
        csv1 == csv2,
        format!("{} bytes reproduced", csv1.len()),
    );

    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("validate_report.txt");
    std::fs::write(&path, report.join("\n") + "\n")?;
    println!("{}", path.display());
    Ok(all_ok)
}
