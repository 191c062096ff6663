//! Command-line front end: verification suites, density/kernel/hyper tables,
//! path sampling, moment reports, and fermionic tables.
//!
//! Exit-code contract: 0 success, 1 verification failure, 2 usage or config
//! error.  Every command is deterministic given its full flag set (seeds
//! included), and every CSV artifact carries a versioned schema comment.

use crate::processes::{
    builtin_covariance, embed, is_markov, is_martingale, lambdas, CovKind, CovarianceSpec,
    GridCovariance,
};
use crate::qcore::{inversions, permutations, q_binomial, q_factorial, QParam};
use crate::qhermite::{
    gauss_quadrature, hermite, mehler_eval, mehler_product, nu_density, nu_integral_theta,
    orthogonality_residual, support_halfwidth, Polynomial,
};
use crate::sampler::{classical_version_report, sample_paths};
use crate::kernels::{
    alpha, chapman_kolmogorov_residual, fermionic_kernel, free_bm_kernel, free_bridge_kernel,
    free_ou_generator, free_ou_kernel, TransitionKernel,
};
use crate::fock::{
    moment, q_relation_residual_with, unit_vector, FockBasis, QGeometry,
};
use crate::wick::{wick_from_splittings, wick_power, wick_recursive};
use crate::{QgError, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Deserialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "qgauss",
    version,
    about = "q-Gaussian processes: Fock-space operators, q-Hermite analytics, transition kernels, and classical-version sampling"
)]
pub struct Cli {
    /// Optional TOML file with default values for the common flags
    /// (explicit flags always win).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// Deformation parameter in (-1, 1).
    #[arg(long)]
    pub q: Option<f64>,
    /// Builtin covariance kind: bm, bridge, or ou.
    #[arg(long)]
    pub kind: Option<String>,
    /// CSV file of covariance samples (rows: t_i,t_j,c).
    #[arg(long)]
    pub cov_grid: Option<PathBuf>,
    /// Comma-separated time grid.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// One-particle dimension cutoff.
    #[arg(long)]
    pub d: Option<usize>,
    /// Tensor-degree cutoff.
    #[arg(long = "N")]
    pub n_cutoff: Option<usize>,
    /// Quadrature point count.
    #[arg(long)]
    pub quad_points: Option<usize>,
    /// Number of Monte Carlo paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Master RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tolerance override for checks that take one.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the invariant suites and print a pass/fail table.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Fail (exit 1) unless the provided covariance is Markov.
        #[arg(long)]
        expect_markov: bool,
    },
    /// Dump (x, density) samples of the orthogonality measure nu_q.
    Density {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of sample points.
        #[arg(long, default_value_t = 513)]
        points: usize,
    },
    /// Dump a transition-kernel density table (x, y, density).
    Kernel {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        t: f64,
        /// Grid resolution per axis.
        #[arg(long, default_value_t = 48)]
        grid: usize,
    },
    /// Dump (t, alpha, alpha^{1/2}) and report the small-t log-log slope.
    Hyper {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1e-3)]
        tmin: f64,
        #[arg(long, default_value_t = 1e-1)]
        tmax: f64,
        #[arg(long, default_value_t = 9)]
        steps: usize,
        /// Grid density of the kernel-supremum search.
        #[arg(long, default_value_t = 48)]
        grid_density: usize,
    },
    /// Sample classical-version paths and emit them as CSV.
    Paths {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Three-way moment cross-validation report (JSON).
    Moments {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated monomial exponents, one per time.
        #[arg(long, value_delimiter = ',')]
        exponents: Vec<usize>,
    },
    /// Fermionic (q = -1) two-state transition table.
    Fermionic {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        t: f64,
        /// Optional intermediate time for an exact composition check.
        #[arg(long)]
        u: Option<f64>,
    },
}

/// Defaults read from the optional TOML config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub q: Option<f64>,
    pub kind: Option<String>,
    pub cov_grid: Option<String>,
    pub times: Option<Vec<f64>>,
    pub d: Option<usize>,
    #[serde(rename = "N")]
    pub n_cutoff: Option<usize>,
    pub quad_points: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub tol: Option<f64>,
}

/// Fully resolved run configuration (flags over config file over defaults).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub q: f64,
    pub kind: Option<String>,
    pub cov_grid: Option<PathBuf>,
    pub times: Vec<f64>,
    pub d: usize,
    pub n_cutoff: usize,
    pub quad_points: usize,
    pub paths: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
}

impl RunConfig {
    fn resolve(common: &CommonArgs, file: &FileConfig) -> Result<Self> {
        let q = common.q.or(file.q).unwrap_or(0.5);
        let cfg = RunConfig {
            q,
            kind: common.kind.clone().or_else(|| file.kind.clone()),
            cov_grid: common
                .cov_grid
                .clone()
                .or_else(|| file.cov_grid.as_ref().map(PathBuf::from)),
            times: common
                .times
                .clone()
                .or_else(|| file.times.clone())
                .unwrap_or_else(|| vec![0.5, 1.0, 2.0]),
            d: common.d.or(file.d).unwrap_or(2),
            n_cutoff: common.n_cutoff.or(file.n_cutoff).unwrap_or(6),
            quad_points: common.quad_points.or(file.quad_points).unwrap_or(200),
            paths: common.paths.or(file.paths).unwrap_or(10_000),
            seed: common.seed.or(file.seed).unwrap_or(1),
            out: common
                .out
                .clone()
                .or_else(|| file.out.as_ref().map(PathBuf::from)),
            tol: common.tol.or(file.tol),
        };
        Ok(cfg)
    }

    fn qparam(&self) -> Result<QParam> {
        QParam::new(self.q)
    }

    /// The covariance named by the config: grid file wins over builtin kind.
    fn covariance(&self) -> Result<(CovarianceSpec, String)> {
        if let Some(path) = &self.cov_grid {
            let grid = load_grid_covariance(path)?;
            return Ok((
                CovarianceSpec::Grid(std::sync::Arc::new(grid)),
                format!("grid:{}", path.display()),
            ));
        }
        let kind_name = self.kind.clone().unwrap_or_else(|| "bm".to_string());
        let kind = CovKind::parse(&kind_name)?;
        Ok((CovarianceSpec::builtin(kind), kind_name))
    }
}

/// Parses a covariance grid CSV of (t_i, t_j, c) rows; `#` lines are comments.
pub fn load_grid_covariance(path: &Path) -> Result<GridCovariance> {
    let text = fs::read_to_string(path)
        .map_err(|e| QgError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut triples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(QgError::Config(format!(
                "{}:{}: expected 't_i,t_j,c', got '{line}'",
                path.display(),
                lineno + 1
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| {
                QgError::Config(format!(
                    "{}:{}: '{s}' is not a number",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        triples.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
    }
    GridCovariance::from_triples(&triples)
}

fn open_output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match out {
        Some(path) => Ok(Box::new(fs::File::create(path)?)),
        None => Ok(Box::new(std::io::stdout())),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    dispatch(cli)
}

/// Entry point for tests: parse the given argument list.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(cli),
        Err(e) => {
            let _ = e.print();
            2
        }
    }
}

fn dispatch(cli: Cli) -> i32 {
    let file_config = match &cli.config {
        Some(path) => match fs::read_to_string(path) {
            Ok(text) => match toml::from_str::<FileConfig>(&text) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: bad config {}: {e}", path.display());
                    return 2;
                }
            },
            Err(e) => {
                eprintln!("error: cannot read config {}: {e}", path.display());
                return 2;
            }
        },
        None => FileConfig::default(),
    };
    let outcome = match cli.command {
        Command::Verify {
            ref common,
            expect_markov,
        } => return cmd_verify(common, &file_config, expect_markov),
        Command::Density { ref common, points } => cmd_density(common, &file_config, points),
        Command::Kernel {
            ref common,
            s,
            t,
            grid,
        } => cmd_kernel(common, &file_config, s, t, grid),
        Command::Hyper {
            ref common,
            tmin,
            tmax,
            steps,
            grid_density,
        } => cmd_hyper(common, &file_config, tmin, tmax, steps, grid_density),
        Command::Paths { ref common } => cmd_paths(common, &file_config),
        Command::Moments {
            ref common,
            ref exponents,
        } => cmd_moments(common, &file_config, exponents),
        Command::Fermionic {
            ref common,
            s,
            t,
            u,
        } => cmd_fermionic(common, &file_config, s, t, u),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn cmd_density(common: &CommonArgs, file: &FileConfig, points: usize) -> Result<()> {
    let cfg = RunConfig::resolve(common, file)?;
    let q = cfg.qparam()?;
    let half = support_halfwidth(q);
    let mut out = open_output(&cfg.out)?;
    writeln!(out, "# qgauss density v1: q={}", cfg.q)?;
    writeln!(out, "x,density")?;
    let n = points.max(2) - 1;
    for i in 0..=n {
        let x = -half + 2.0 * half * i as f64 / n as f64;
        writeln!(out, "{x},{}", nu_density(q, x)?)?;
    }
    Ok(())
}

fn cmd_kernel(common: &CommonArgs, file: &FileConfig, s: f64, t: f64, grid: usize) -> Result<()> {
    let cfg = RunConfig::resolve(common, file)?;
    let q = cfg.qparam()?;
    let (cov, kind_name) = cfg.covariance()?;
    let kernel = TransitionKernel::new(q, &cov, s, t, cfg.quad_points)?;
    if kernel.is_degenerate() {
        return Err(QgError::Degenerate(format!(
            "kernel at ({s}, {t}) is deterministic; no density table to emit"
        )));
    }
    let mut out = open_output(&cfg.out)?;
    writeln!(
        out,
        "# qgauss kernel v1: kind={kind_name} q={} s={s} t={t}",
        cfg.q
    )?;
    writeln!(out, "x,y,density")?;
    let (x_lo, x_hi) = kernel.source_support();
    let (y_lo, y_hi) = kernel.target_support();
    let n = grid.max(2) - 1;
    for i in 0..=n {
        let x = x_lo + (x_hi - x_lo) * i as f64 / n as f64;
        for j in 0..=n {
            let y = y_lo + (y_hi - y_lo) * j as f64 / n as f64;
            writeln!(out, "{x},{y},{}", kernel.density(x, y)?)?;
        }
    }
    Ok(())
}

fn cmd_hyper(
    common: &CommonArgs,
    file: &FileConfig,
    tmin: f64,
    tmax: f64,
    steps: usize,
    grid_density: usize,
) -> Result<()> {
    let cfg = RunConfig::resolve(common, file)?;
    let q = cfg.qparam()?;
    if !(tmin > 0.0 && tmax > tmin) {
        return Err(QgError::Config(format!(
            "need 0 < tmin < tmax, got ({tmin}, {tmax})"
        )));
    }
    let mut out = open_output(&cfg.out)?;
    writeln!(out, "# qgauss hyper v1: q={}", cfg.q)?;
    writeln!(out, "t,alpha,alpha_sqrt")?;
    let n = steps.max(2);
    let mut logs = Vec::with_capacity(n);
    for i in 0..n {
        let t = tmin * (tmax / tmin).powf(i as f64 / (n - 1) as f64);
        let a = alpha(t, q, grid_density)?;
        writeln!(out, "{t},{a},{}", a.sqrt())?;
        logs.push((t.ln(), a.sqrt().ln()));
    }
    // least-squares slope of log alpha^{1/2} against log t
    let mean_x: f64 = logs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let mean_y: f64 = logs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let slope: f64 = logs
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum::<f64>()
        / logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum::<f64>();
    writeln!(out, "# fitted_slope={slope}")?;
    Ok(())
}

fn cmd_paths(common: &CommonArgs, file: &FileConfig) -> Result<()> {
    let cfg = RunConfig::resolve(common, file)?;
    let q = cfg.qparam()?;
    let (cov, _) = cfg.covariance()?;
    let ensemble = sample_paths(&cov, q, &cfg.times, cfg.paths, cfg.seed, cfg.quad_points)?;
    let mut out = open_output(&cfg.out)?;
    ensemble.write_csv(&mut out)?;
    Ok(())
}

fn cmd_moments(common: &CommonArgs, file: &FileConfig, exponents: &[usize]) -> Result<()> {
    let cfg = RunConfig::resolve(common, file)?;
    let q = cfg.qparam()?;
    let (cov, kind_name) = cfg.covariance()?;
    if exponents.is_empty() {
        return Err(QgError::Config(
            "moments needs --exponents, one per time".into(),
        ));
    }
    let report = classical_version_report(
        &cov,
        &kind_name,
        q,
        &cfg.times,
        exponents,
        cfg.paths,
        cfg.seed,
        cfg.quad_points,
    )?;
    let mut out = open_output(&cfg.out)?;
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&report)
            .map_err(|e| QgError::Config(format!("report serialization failed: {e}")))?
    )?;
    Ok(())
}

fn cmd_fermionic(
    common: &CommonArgs,
    file: &FileConfig,
    s: f64,
    t: f64,
    u: Option<f64>,
) -> Result<()> {
    let cfg = RunConfig::resolve(common, file)?;
    let (cov, kind_name) = cfg.covariance()?;
    let kernel = fermionic_kernel(&cov, s, t)?;
    let mut out = open_output(&cfg.out)?;
    writeln!(out, "# qgauss fermionic v1: kind={kind_name} s={s} t={t}")?;
    writeln!(out, "from,to,prob")?;
    for i in 0..2 {
        for j in 0..2 {
            writeln!(
                out,
                "{},{},{}",
                kernel.source_states[i], kernel.target_states[j], kernel.probs[i][j]
            )?;
        }
    }
    if let Some(u) = u {
        let left = fermionic_kernel(&cov, s, u)?;
        let right = fermionic_kernel(&cov, u, t)?;
        let composed = left.compose(&right)?;
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((composed.probs[i][j] - kernel.probs[i][j]).abs());
            }
        }
        writeln!(out, "# composition_defect_via_u={u}: {worst}")?;
    }
    Ok(())
}

// --- verification suites -------------------------------------------------

struct Check {
    group: &'static str,
    name: String,
    passed: bool,
    detail: String,
}

fn check(group: &'static str, name: impl Into<String>, passed: bool, detail: String) -> Check {
    Check {
        group,
        name: name.into(),
        passed,
        detail,
    }
}

const VERIFY_Q_GRID: [f64; 5] = [-0.9, -0.5, 0.0, 0.5, 0.9];

fn cmd_verify(common: &CommonArgs, file: &FileConfig, expect_markov: bool) -> i32 {
    let cfg = match RunConfig::resolve(common, file) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let mut checks = Vec::new();
    let run = || -> Result<Vec<Check>> {
        let mut all = Vec::new();
        all.extend(verify_qcore()?);
        all.extend(verify_gram_positivity()?);
        all.extend(verify_relations_and_moments()?);
        all.extend(verify_orthogonality_and_mehler()?);
        all.extend(verify_wick()?);
        all.extend(verify_processes()?);
        all.extend(verify_kernels()?);
        Ok(all)
    };
    match run() {
        Ok(mut all) => checks.append(&mut all),
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    }
    // custom covariance checks
    if let Some(path) = &cfg.cov_grid {
        match load_grid_covariance(path) {
            Ok(grid) => {
                let times = grid.times.clone();
                let cov = CovarianceSpec::Grid(std::sync::Arc::new(grid));
                let tol = cfg.tol.unwrap_or(1e-9);
                let psd = embed(&cov, &times);
                checks.push(check(
                    "custom",
                    "grid covariance embeds (positive semidefinite)",
                    psd.is_ok(),
                    match &psd {
                        Ok(_) => "ok".into(),
                        Err(e) => format!("{e}"),
                    },
                ));
                if expect_markov {
                    match is_markov(&cov, &times, tol) {
                        Ok(report) => checks.push(check(
                            "custom",
                            "grid covariance is Markov",
                            report.holds,
                            format!(
                                "max violation {:.3e} at {:?}",
                                report.max_violation, report.worst_triple
                            ),
                        )),
                        Err(e) => {
                            eprintln!("error: {e}");
                            return 2;
                        }
                    }
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        }
    } else if expect_markov {
        eprintln!("error: --expect-markov needs --cov-grid");
        return 2;
    }
    // print the table
    let mut failed = 0;
    let mut group = "";
    for c in &checks {
        if c.group != group {
            group = c.group;
            println!("[{group}]");
        }
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("  {status}  {} ({})", c.name, c.detail);
        if !c.passed {
            failed += 1;
        }
    }
    println!(
        "{} checks, {} failed",
        checks.len(),
        failed
    );
    if failed > 0 {
        1
    } else {
        0
    }
}

fn verify_qcore() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut worst_pascal: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    for &q in &VERIFY_Q_GRID {
        let qq = QParam::new(q)?;
        for n in 0..8usize {
            for k in 0..n {
                let lhs = q_binomial(n, k, qq)? + q.powi(k as i32 + 1) * q_binomial(n, k + 1, qq)?;
                let rhs = q_binomial(n + 1, k + 1, qq)?;
                worst_pascal = worst_pascal.max((lhs - rhs).abs() / rhs.abs().max(1.0));
            }
            for k in 0..=n {
                let a = q_binomial(n, k, qq)?;
                let b = q_binomial(n, n - k, qq)?;
                worst_sym = worst_sym.max((a - b).abs() / a.abs().max(1.0));
            }
        }
    }
    out.push(check(
        "qcore",
        "Pascal identity of q-binomials",
        worst_pascal <= 1e-12,
        format!("max rel dev {worst_pascal:.3e}"),
    ));
    out.push(check(
        "qcore",
        "q-binomial symmetry",
        worst_sym <= 1e-12,
        format!("max rel dev {worst_sym:.3e}"),
    ));
    let mut worst_inv: f64 = 0.0;
    for n in 0..=6usize {
        for &q in &VERIFY_Q_GRID {
            let qq = QParam::new(q)?;
            let total: f64 = permutations(n)?
                .map(|p| q.powi(inversions(&p) as i32))
                .sum();
            let expected = q_factorial(n, qq);
            worst_inv = worst_inv.max((total - expected).abs() / expected.abs().max(1.0));
        }
    }
    out.push(check(
        "qcore",
        "inversion generating function equals q-factorial",
        worst_inv <= 1e-12,
        format!("max rel dev {worst_inv:.3e}"),
    ));
    Ok(out)
}

fn verify_gram_positivity() -> Result<Vec<Check>> {
    let mut min_eig = f64::INFINITY;
    for d in 1..=3usize {
        for n in 1..=5usize {
            if d == 3 && n == 5 {
                // largest block (243x243) per q
            }
            for &q in &VERIFY_Q_GRID {
                let basis = FockBasis::new(d, n)?;
                let geometry = QGeometry::new(&basis, QParam::new(q)?)?;
                min_eig = min_eig.min(geometry.min_eigenvalue);
            }
        }
    }
    Ok(vec![check(
        "fock",
        "Gram matrices strictly positive definite (d<=3, N<=5)",
        min_eig > 0.0,
        format!("min eigenvalue {min_eig:.3e}"),
    )])
}

fn verify_relations_and_moments() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let basis = FockBasis::new(2, 4)?;
    let f = DVector::from_vec(vec![0.3, 1.1]);
    let g = DVector::from_vec(vec![-0.5, 0.7]);
    let mut worst: f64 = 0.0;
    for &q in &VERIFY_Q_GRID {
        let qq = QParam::new(q)?;
        let geometry = QGeometry::new(&basis, qq)?;
        worst = worst.max(q_relation_residual_with(&f, &g, &basis, qq, &geometry)?);
    }
    out.push(check(
        "fock",
        "q-relations below top degree",
        worst <= 1e-12,
        format!("max residual {worst:.3e}"),
    ));
    let basis = FockBasis::new(1, 10)?;
    let e1 = unit_vector(1, 0);
    let mut worst: f64 = 0.0;
    for &q in &VERIFY_Q_GRID {
        let qq = QParam::new(q)?;
        let rule = gauss_quadrature(qq, 16)?;
        for n in 0..=10usize {
            let fock_side = moment(&vec![e1.clone(); n], &basis, qq)?;
            let measure_side = rule.integrate(|x| x.powi(n as i32));
            worst = worst.max((fock_side - measure_side).abs());
        }
    }
    out.push(check(
        "fock",
        "vacuum moments equal nu_q moments (n<=10)",
        worst <= 1e-8,
        format!("max deviation {worst:.3e}"),
    ));
    Ok(out)
}

fn verify_orthogonality_and_mehler() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut worst_orth: f64 = 0.0;
    for &q in &VERIFY_Q_GRID {
        let qq = QParam::new(q)?;
        let rule = gauss_quadrature(qq, 32)?;
        for n in 0..=10usize {
            for m in 0..=10usize {
                worst_orth = worst_orth.max(orthogonality_residual(n, m, qq, &rule)?);
            }
        }
    }
    out.push(check(
        "qhermite",
        "q-Hermite orthogonality (n,m<=10)",
        worst_orth <= 1e-8,
        format!("max residual {worst_orth:.3e}"),
    ));
    let mut worst_norm: f64 = 0.0;
    for &q in &VERIFY_Q_GRID {
        let qq = QParam::new(q)?;
        worst_norm = worst_norm.max((nu_integral_theta(qq, |_| 1.0, 2048) - 1.0).abs());
    }
    out.push(check(
        "qhermite",
        "nu_q integrates to 1",
        worst_norm <= 1e-10,
        format!("max deviation {worst_norm:.3e}"),
    ));
    let mut worst_mehler: f64 = 0.0;
    for &q in &VERIFY_Q_GRID {
        let qq = QParam::new(q)?;
        let half = support_halfwidth(qq);
        for &r in &[-0.6, 0.3, 0.8] {
            for i in 0..8 {
                for j in 0..8 {
                    let x = -0.9 * half + 1.8 * half * i as f64 / 7.0;
                    let y = -0.9 * half + 1.8 * half * j as f64 / 7.0;
                    let eval = mehler_eval(qq, r, x, y, 1e-14)?;
                    if !eval.within(1e-10) {
                        worst_mehler = worst_mehler.max(eval.discrepancy());
                    }
                }
            }
        }
    }
    out.push(check(
        "qhermite",
        "Mehler series agrees with product form",
        worst_mehler <= 1e-10,
        format!("max discrepancy {worst_mehler:.3e}"),
    ));
    // q = 0 closed form
    let q0 = QParam::new(0.0)?;
    let mut worst_closed: f64 = 0.0;
    for &r in &[-0.7f64, 0.4, 0.9] {
        for i in 0..8 {
            for j in 0..8 {
                let x = -1.8 + 3.6 * i as f64 / 7.0;
                let y = -1.8 + 3.6 * j as f64 / 7.0;
                let expected = (1.0 - r * r)
                    / ((1.0 - r * r).powi(2) - r * (1.0 + r * r) * x * y + r * r * (x * x + y * y));
                worst_closed =
                    worst_closed.max((mehler_product(q0, r, x, y, 1e-300)? - expected).abs());
            }
        }
    }
    out.push(check(
        "qhermite",
        "free Mehler kernel closed form",
        worst_closed <= 1e-12,
        format!("max deviation {worst_closed:.3e}"),
    ));
    Ok(out)
}

fn verify_wick() -> Result<Vec<Check>> {
    let basis = FockBasis::new(2, 4)?;
    let mut worst: f64 = 0.0;
    for &q in &VERIFY_Q_GRID {
        let qq = QParam::new(q)?;
        for idx in 0..basis.dim() {
            let word: Vec<DVector<f64>> = basis
                .word_at(idx)
                .iter()
                .map(|&l| unit_vector(2, l))
                .collect();
            let a = wick_from_splittings(&word, &basis, qq)?;
            let b = wick_recursive(&word, &basis, qq)?;
            worst = worst.max((&a.matrix - &b.matrix).norm());
            if !word.is_empty() && word.iter().all(|w| w[0] == word[0][0] && w[1] == word[0][1]) {
                let c = wick_power(&word[0], word.len(), &basis, qq)?;
                worst = worst.max((&a.matrix - &c.matrix).norm());
            }
        }
    }
    Ok(vec![check(
        "wick",
        "splitting sum = recursion = q-binomial power (words of degree <= 4)",
        worst <= 1e-10,
        format!("max matrix deviation {worst:.3e}"),
    )])
}

fn verify_processes() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let grids: [(CovKind, Vec<f64>); 3] = [
        (CovKind::Bm, vec![0.4, 0.8, 1.3, 2.1, 3.0, 4.2]),
        (CovKind::Bridge, vec![0.1, 0.25, 0.4, 0.55, 0.7, 0.9]),
        (CovKind::Ou, vec![-1.2, -0.4, 0.1, 0.8, 1.5, 2.3]),
    ];
    let mut all_markov = true;
    let mut detail = String::new();
    for (kind, grid) in &grids {
        let report = is_markov(&CovarianceSpec::builtin(*kind), grid, 1e-12)?;
        all_markov &= report.holds;
        detail.push_str(&format!("{}: {:.2e}  ", kind.name(), report.max_violation));
    }
    out.push(check(
        "processes",
        "builtins satisfy the Markov criterion",
        all_markov,
        detail.trim_end().to_string(),
    ));
    let frac = CovarianceSpec::custom("fractional", |s, t| {
        0.5 * (s.powf(1.5) + t.powf(1.5) - (t - s).abs().powf(1.5))
    });
    let report = is_markov(&frac, &[1.0, 2.0, 3.0], 1e-12)?;
    out.push(check(
        "processes",
        "fractional covariance fails the Markov criterion",
        !report.holds && report.max_violation > 1e-2,
        format!("violation {:.3e}", report.max_violation),
    ));
    let bm = CovarianceSpec::builtin(CovKind::Bm);
    let mart_bm = is_martingale(&bm, &[0.5, 1.0, 2.0], 1e-12)?;
    let mart_ou = is_martingale(&CovarianceSpec::builtin(CovKind::Ou), &[0.0, 1.0, 2.0], 1e-12)?;
    out.push(check(
        "processes",
        "martingale criterion (bm yes, ou no)",
        mart_bm && !mart_ou,
        format!("bm={mart_bm} ou={mart_ou}"),
    ));
    // sanity values of builtin covariances and lambdas
    let lam = lambdas(&bm, 1.0, 4.0)?;
    let ok = (builtin_covariance(CovKind::Bm, 1.0, 2.0)? - 1.0).abs() < 1e-15
        && (lam.lambda_t - 2.0).abs() < 1e-15
        && (lam.lambda_st - 0.5).abs() < 1e-15;
    out.push(check(
        "processes",
        "lambda quantities",
        ok,
        format!(
            "bm(1,4): ({}, {}, {})",
            lam.lambda_s, lam.lambda_t, lam.lambda_st
        ),
    ));
    Ok(out)
}

fn verify_kernels() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let cases: [(CovKind, f64, f64); 3] = [
        (CovKind::Bm, 1.0, 2.0),
        (CovKind::Ou, 0.0, 1.0),
        (CovKind::Bridge, 0.25, 0.75),
    ];
    let mut worst_norm: f64 = 0.0;
    let mut worst_eigen: f64 = 0.0;
    for &q in &[-0.5, 0.0, 0.5] {
        let qq = QParam::new(q)?;
        for (kind, s, t) in cases {
            let cov = CovarianceSpec::builtin(kind);
            let kernel = TransitionKernel::new(qq, &cov, s, t, 140)?;
            let lam = kernel.lambdas();
            let (lo, hi) = kernel.source_support();
            for &frac in &[-0.6, 0.0, 0.7] {
                let x = 0.5 * (lo + hi) + 0.5 * frac * (hi - lo);
                worst_norm = worst_norm.max(kernel.normalization_residual(x, 1200)?);
                for n in 0..=4usize {
                    let lhs = kernel.apply(|y| hermite(n, qq, y / lam.lambda_t), x)?;
                    let rhs = lam.lambda_st.powi(n as i32) * hermite(n, qq, x / lam.lambda_s);
                    worst_eigen = worst_eigen.max((lhs - rhs).abs());
                }
            }
        }
    }
    out.push(check(
        "kernels",
        "kernel normalization (integral = 1)",
        worst_norm <= 1e-9,
        format!("max residual {worst_norm:.3e}"),
    ));
    out.push(check(
        "kernels",
        "Hermite eigen-identity of transition operators",
        worst_eigen <= 1e-7,
        format!("max residual {worst_eigen:.3e}"),
    ));
    // free closed forms against the q = 0 pipeline
    let q0 = QParam::new(0.0)?;
    let mut worst_free: f64 = 0.0;
    {
        let k = TransitionKernel::new(q0, &CovarianceSpec::builtin(CovKind::Bm), 1.0, 2.0, 64)?;
        for i in 0..10 {
            for j in 0..10 {
                let x = -1.8 + 3.6 * i as f64 / 9.0;
                let y = -2.6 + 5.2 * j as f64 / 9.0;
                worst_free =
                    worst_free.max((free_bm_kernel(1.0, 2.0, x, y)? - k.density(x, y)?).abs());
            }
        }
        let k = TransitionKernel::new(q0, &CovarianceSpec::builtin(CovKind::Ou), 0.0, 0.9, 64)?;
        for i in 0..10 {
            for j in 0..10 {
                let x = -1.9 + 3.8 * i as f64 / 9.0;
                let y = -1.9 + 3.8 * j as f64 / 9.0;
                worst_free =
                    worst_free.max((free_ou_kernel(0.9, x, y)? - k.density(x, y)?).abs());
            }
        }
        let k =
            TransitionKernel::new(q0, &CovarianceSpec::builtin(CovKind::Bridge), 0.2, 0.6, 64)?;
        let xs = 2.0 * (0.2f64 * 0.8).sqrt();
        let ys = 2.0 * (0.6f64 * 0.4).sqrt();
        for i in 0..10 {
            for j in 0..10 {
                let x = -0.95 * xs + 1.9 * xs * i as f64 / 9.0;
                let y = -0.95 * ys + 1.9 * ys * j as f64 / 9.0;
                worst_free =
                    worst_free.max((free_bridge_kernel(0.2, 0.6, x, y)? - k.density(x, y)?).abs());
            }
        }
    }
    out.push(check(
        "kernels",
        "free closed forms match the q=0 pipeline",
        worst_free <= 1e-10,
        format!("max deviation {worst_free:.3e}"),
    ));
    // Chapman-Kolmogorov on one builtin
    let ck = chapman_kolmogorov_residual(
        QParam::new(0.5)?,
        &CovarianceSpec::builtin(CovKind::Bm),
        1.0,
        2.0,
        4.0,
        0.0,
        200,
    )?;
    out.push(check(
        "kernels",
        "Chapman-Kolmogorov composition (bm)",
        ck <= 1e-6,
        format!("residual {ck:.3e}"),
    ));
    // fermionic tables
    let bm = CovarianceSpec::builtin(CovKind::Bm);
    let k = fermionic_kernel(&bm, 1.0, 4.0)?;
    let table_ok = (k.probs[0][0] - 0.75).abs() < 1e-15
        && k.probs.iter().all(|row| row[0] + row[1] == 1.0);
    let ou = CovarianceSpec::builtin(CovKind::Ou);
    let composed = fermionic_kernel(&ou, 0.0, 0.7)?.compose(&fermionic_kernel(&ou, 0.7, 1.8)?)?;
    let direct = fermionic_kernel(&ou, 0.0, 1.8)?;
    let mut comp_defect: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            comp_defect = comp_defect.max((composed.probs[i][j] - direct.probs[i][j]).abs());
        }
    }
    out.push(check(
        "kernels",
        "fermionic tables and exact composition",
        table_ok && comp_defect <= 1e-15,
        format!("composition defect {comp_defect:.1e}"),
    ));
    // free OU generator eigenvalues
    let mut worst_gen: f64 = 0.0;
    for n in 0..=4usize {
        let h = Polynomial::hermite(n, q0);
        for &x in &[-1.5, 0.0, 1.2] {
            worst_gen =
                worst_gen.max((free_ou_generator(&h, x, 64)? - n as f64 * h.eval(x)).abs());
        }
    }
    out.push(check(
        "kernels",
        "free OU generator (N H_n = n H_n)",
        worst_gen <= 1e-6,
        format!("max deviation {worst_gen:.3e}"),
    ));
    Ok(out)
}
