use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;

use wfstein::experiments::{
    build_test_family, interpolator_checks, rate_study, run_verification_suite, write_rate_csv, write_rate_summary,
    CheckRecord, ExperimentConfig, VerificationReport,
};
use wfstein::interp::{interpolation_error, standard_kernel, AnalyticFn};
use wfstein::lattice::{ModelParams, SimplexLattice};
use wfstein::moments::{central_moment_exact, diffusion, drift, third_moment_diagonal};
use wfstein::stein::{ancestry_coupling_sim, factor_bound, solve_stein, STEIN_RESIDUAL_TOL};
use wfstein::{stationary_distribution, Error, TransitionKernel};

#[derive(Parser)]
#[command(name = "wfstein", version, about = "Wright-Fisher chain vs Dirichlet limit: solvers and studies")]
struct Cli {
    /// JSON experiment config
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output_path)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for both the test family and Monte Carlo (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stationary law for each N
    Stationary,
    /// Solve the Stein equation for the test family at each N
    SteinSolve,
    /// Interpolator identities and convergence order
    InterpVerify,
    /// Closed-form moments against enumeration
    MomentsVerify,
    /// Ancestry coupling simulation
    CouplingSim {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        tagged: usize,
        #[arg(long, default_value_t = 20)]
        t_max: usize,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
    },
    /// Rate of E_π h(U) − E h(Z) over N
    RateStudy,
    /// Every invariant check
    VerifyAll,
}

enum Failure {
    Config(Error),
    Run(Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e),
            e => Failure::Run(e),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output_path = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.family_seed = s;
        cfg.mc_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_file(cfg: &ExperimentConfig, name: &str) -> Result<PathBuf, Error> {
    fs::create_dir_all(&cfg.output_path)?;
    Ok(cfg.output_path.join(name))
}

fn write_records(path: &Path, records: &[CheckRecord]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn report(records: &[CheckRecord]) -> bool {
    for r in records {
        println!(
            "{} {} value={:.6e} bound={:.6e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.value,
            r.bound
        );
    }
    records.iter().all(|r| r.passed)
}

#[derive(Serialize)]
struct StationaryRow {
    #[serde(rename = "N")]
    n: usize,
    index: usize,
    counts: String,
    pi: f64,
}

fn stationary(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let path = out_file(cfg, "stationary.csv")?;
    let mut w = csv::Writer::from_path(&path)?;
    let mut ok = true;
    for &n in &cfg.n_list {
        let lattice = Arc::new(SimplexLattice::new(cfg.params(n)?).map_err(|e| e.at_n(n))?);
        let kernel = TransitionKernel::new(lattice.clone());
        let pi = stationary_distribution(&kernel).map_err(|e| e.at_n(n))?;
        println!("N={n} states={} residual={:.3e}", lattice.len(), pi.residual());
        ok &= pi.residual() <= wfstein::kernel::STATIONARY_RESIDUAL_TOL;
        for (i, (s, p)) in lattice.states().iter().zip(pi.pi()).enumerate() {
            let counts = s.counts().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";");
            w.serialize(StationaryRow { n, index: i, counts, pi: *p })?;
        }
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(ok)
}

#[derive(Serialize)]
struct SteinRow {
    #[serde(rename = "N")]
    n: usize,
    h_id: String,
    c: f64,
    residual: f64,
    pi_f: f64,
    b1: f64,
    b2: f64,
    b3: f64,
    b4: f64,
    bound1: f64,
    bound2: f64,
    bound3: f64,
    bound4: f64,
}

fn stein_solve(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let path = out_file(cfg, "stein.csv")?;
    let mut w = csv::Writer::from_path(&path)?;
    let mut ok = true;
    for &n in &cfg.n_list {
        let params = cfg.params(n)?;
        let lattice = Arc::new(SimplexLattice::new(params.clone()).map_err(|e| e.at_n(n))?);
        let kernel = TransitionKernel::new(lattice.clone());
        let pi = stationary_distribution(&kernel).map_err(|e| e.at_n(n))?;
        for t in build_test_family(&lattice, cfg.family_seed) {
            let sol = solve_stein(&kernel, &pi, t.h()).map_err(|e| e.at_n(n))?;
            let b: [f64; 4] = [1, 2, 3, 4].map(|i| factor_bound(t.c(), &params, i));
            let good = sol.residual <= STEIN_RESIDUAL_TOL
                && sol.pi_f.abs() <= STEIN_RESIDUAL_TOL
                && sol.factors.iter().zip(&b).all(|(f, b)| *f <= b * (1.0 + 1e-9));
            if !good {
                println!("FAIL N={n} h={}", t.id());
            }
            ok &= good;
            w.serialize(SteinRow {
                n,
                h_id: t.id().to_string(),
                c: t.c(),
                residual: sol.residual,
                pi_f: sol.pi_f,
                b1: sol.factors[0],
                b2: sol.factors[1],
                b3: sol.factors[2],
                b4: sol.factors[3],
                bound1: b[0],
                bound2: b[1],
                bound3: b[2],
                bound4: b[3],
            })?;
        }
        println!("N={n} solved");
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(ok)
}

struct Bump;

impl AnalyticFn for Bump {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        (x[0] - 0.5 * x[1]).exp()
    }
    fn partial(&self, x: &[f64], a: &[usize]) -> f64 {
        (-0.5f64).powi(a[1] as i32) * self.value(x)
    }
}

fn interp_verify(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let mut records = interpolator_checks(standard_kernel());
    let rep = interpolation_error(&Bump, &[0.25, 0.25], &[0.75, 0.75], 1.0 / 8.0, 4)?;
    records.push(CheckRecord::new("interp.order_deviation_from_4 (2-D)", (rep.fitted_order - 4.0).abs(), 0.3));
    write_records(&out_file(cfg, "interp_verify.csv")?, &records)?;
    Ok(report(&records))
}

fn moments_verify(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let mut records = Vec::new();
    for (n, beta) in [(4usize, vec![1.0, 1.0]), (6, vec![0.5, 2.0]), (5, vec![0.5, 1.0, 0.8])] {
        let params = ModelParams::new(n, beta)?;
        let lattice = SimplexLattice::new(params.clone())?;
        let (mut e1, mut e2, mut e3) = (0.0f64, 0.0f64, 0.0f64);
        for u in lattice.states() {
            for i in 0..params.dim() {
                e1 = e1.max((central_moment_exact(&lattice, u, &[i])? - drift(&params, u, i)).abs());
                e3 = e3.max((central_moment_exact(&lattice, u, &[i, i, i])? - third_moment_diagonal(&params, u, i)).abs());
                for j in 0..params.dim() {
                    e2 = e2.max((central_moment_exact(&lattice, u, &[i, j])? - diffusion(&params, u, i, j)).abs());
                }
            }
        }
        let tag = format!("N={n} K={}", params.k());
        records.push(CheckRecord::new(format!("moments.drift {tag}"), e1, 1e-12));
        records.push(CheckRecord::new(format!("moments.diffusion {tag}"), e2, 1e-12));
        records.push(CheckRecord::new(format!("moments.third_diagonal {tag}"), e3, 1e-12));
    }
    write_records(&out_file(cfg, "moments_verify.csv")?, &records)?;
    Ok(report(&records))
}

#[derive(Serialize)]
struct CouplingRow {
    t: usize,
    mean_v1: f64,
    se_v1: f64,
    theory_v1: f64,
    joint_mean: Option<f64>,
    joint_se: Option<f64>,
    joint_stated: Option<f64>,
    joint_exact: Option<f64>,
}

fn coupling_sim(cfg: &ExperimentConfig, n: usize, tagged: usize, t_max: usize, reps: usize) -> Result<bool, Error> {
    let params = ModelParams::new(n, cfg.beta.clone())?;
    let pts = ancestry_coupling_sim(&params, tagged, t_max, reps, cfg.mc_seed)?;
    let path = out_file(cfg, "coupling.csv")?;
    let mut w = csv::Writer::from_path(&path)?;
    let mut ok = true;
    for p in &pts {
        ok &= (p.mean_v1 - p.theory_v1).abs() <= 4.0 * p.se_v1;
        if let Some(j) = &p.joint {
            ok &= (j.mean - j.exact).abs() <= 4.0 * j.se;
        }
        w.serialize(CouplingRow {
            t: p.t,
            mean_v1: p.mean_v1,
            se_v1: p.se_v1,
            theory_v1: p.theory_v1,
            joint_mean: p.joint.as_ref().map(|j| j.mean),
            joint_se: p.joint.as_ref().map(|j| j.se),
            joint_stated: p.joint.as_ref().map(|j| j.stated),
            joint_exact: p.joint.as_ref().map(|j| j.exact),
        })?;
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(ok)
}

fn rate(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let rep = rate_study(cfg)?;
    write_rate_csv(&rep, &out_file(cfg, "rate_study.csv")?)?;
    write_rate_summary(&rep, &out_file(cfg, "rate_summary.json")?)?;
    for p in &rep.points {
        println!("N={:<5} e={:.6e} e*N={:.4} worst={}", p.n, p.e, p.e_times_n, p.worst_h);
    }
    println!("slope={:.4} bounded={} quadrature_ok={}", rep.slope, rep.bounded, rep.quadrature_ok);
    Ok(rep.slope.is_finite() && (-1.3..=-0.7).contains(&rep.slope) && rep.bounded && rep.quadrature_ok)
}

fn verify_all(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let rep: VerificationReport = run_verification_suite(cfg, standard_kernel());
    fs::write(out_file(cfg, "verification.json")?, serde_json::to_string_pretty(&rep)?)?;
    Ok(report(&rep.records))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let ok = match &cli.cmd {
        Cmd::Stationary => stationary(&cfg)?,
        Cmd::SteinSolve => stein_solve(&cfg)?,
        Cmd::InterpVerify => interp_verify(&cfg)?,
        Cmd::MomentsVerify => moments_verify(&cfg)?,
        Cmd::CouplingSim { n, tagged, t_max, reps } => coupling_sim(&cfg, *n, *tagged, *t_max, *reps)?,
        Cmd::RateStudy => rate(&cfg)?,
        Cmd::VerifyAll => verify_all(&cfg)?,
    };
    if ok {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
