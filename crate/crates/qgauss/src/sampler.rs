//! Classical versions of q-Gaussian Markov processes: marginal and
//! transition sampling by inverse CDF, Markov-chain path generation, and the
//! three-way cross-validation of time-ordered moments (exact Fock matrices
//! vs transition-kernel quadrature vs Monte Carlo).
//!
//! Reproducibility contract: every sampler draws from a ChaCha stream seeded
//! per path index from the master seed (splitmix64 mixing), so ensembles are
//! bit-identical for a given seed regardless of scheduling.

use crate::fock::{moment, FockBasis};
use crate::kernels::{moment_via_kernels, TransitionKernel};
use crate::processes::{embed, is_markov, CovarianceSpec};
use crate::qcore::QParam;
use crate::qhermite::{nu_density_clamped, support_halfwidth, Polynomial};
use crate::{QgError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Number of support points in an inverse-CDF table.
pub const TABLE_POINTS: usize = 2049;

/// Source-grid resolution of the per-step conditional samplers used in path
/// generation (tables are interpolated in the conditioning point).
pub const STEP_GRID_POINTS: usize = 129;

/// splitmix64 finalizer.
fn mix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-path seed derived from the master seed.
pub fn path_seed(master: u64, path_index: u64) -> u64 {
    mix64(master ^ mix64(path_index.wrapping_add(1)))
}

/// Tabulated inverse CDF of a density on a symmetric interval [-Y, Y].
///
/// Support points follow the theta grid y = -Y cos(u), which clusters them
/// at the square-root endpoints of the q-Gaussian densities; the cumulative
/// is accumulated by per-interval Simpson steps and normalized.  Quantile and
/// CDF lookups use Fritsch-Carlson monotone cubic interpolation.
#[derive(Debug, Clone)]
pub struct InverseCdfTable {
    ys: Vec<f64>,
    cdf: Vec<f64>,
    /// dF/dy knot slopes for CDF interpolation.
    slopes_c: Vec<f64>,
    /// Strictly increasing (F, y) knots for quantile interpolation; ties in
    /// F (zero-mass stretches of sharply peaked conditionals) are collapsed.
    q_f: Vec<f64>,
    q_y: Vec<f64>,
    q_slopes: Vec<f64>,
}

/// Monotone (Fritsch-Carlson limited) knot slopes for data (xs, ys).
fn monotone_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let secant = |j: usize| (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]);
    let mut m = vec![0.0; n];
    m[0] = secant(0);
    m[n - 1] = secant(n - 2);
    for j in 1..n - 1 {
        let d0 = secant(j - 1);
        let d1 = secant(j);
        if d0 * d1 <= 0.0 {
            m[j] = 0.0;
        } else {
            m[j] = (0.5 * (d0 + d1)).min(3.0 * d0.abs().min(d1.abs())) * d0.signum();
        }
    }
    m
}

fn hermite_interp(x: f64, x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> f64 {
    let h = x1 - x0;
    let t = ((x - x0) / h).clamp(0.0, 1.0);
    let t2 = t * t;
    let t3 = t2 * t;
    y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
        + m0 * h * (t3 - 2.0 * t2 + t)
        + y1 * (-2.0 * t3 + 3.0 * t2)
        + m1 * h * (t3 - t2)
}

impl InverseCdfTable {
    /// Tabulates the (not necessarily normalized) density on [-y_max, y_max].
    pub fn from_density<F: Fn(f64) -> f64>(y_max: f64, density: F) -> Result<Self> {
        let intervals = TABLE_POINTS - 1;
        let du = std::f64::consts::PI / intervals as f64;
        let y_of = |u: f64| -y_max * u.cos();
        let integrand = |u: f64| density(y_of(u)) * y_max * u.sin();
        let mut ys = Vec::with_capacity(TABLE_POINTS);
        let mut cdf = Vec::with_capacity(TABLE_POINTS);
        let mut acc = 0.0;
        ys.push(-y_max);
        cdf.push(0.0);
        let mut g_left = integrand(0.0);
        for j in 0..intervals {
            let u_mid = (j as f64 + 0.5) * du;
            let u_right = (j + 1) as f64 * du;
            let g_right = integrand(u_right);
            acc += du / 6.0 * (g_left + 4.0 * integrand(u_mid) + g_right);
            ys.push(y_of(u_right));
            cdf.push(acc);
            g_left = g_right;
        }
        let total = acc;
        if !(total > 0.0) || !total.is_finite() {
            return Err(QgError::Domain(format!(
                "density integrates to {total}; cannot build an inverse CDF"
            )));
        }
        for v in cdf.iter_mut() {
            *v /= total;
        }
        // quantile knots: first occurrence of each strictly larger F value
        let mut q_f = vec![cdf[0]];
        let mut q_y = vec![ys[0]];
        for j in 1..cdf.len() {
            if cdf[j] > *q_f.last().unwrap() {
                q_f.push(cdf[j]);
                q_y.push(ys[j]);
            }
        }
        if q_f.len() < 2 {
            return Err(QgError::Domain(
                "cumulative values are constant; cannot invert".into(),
            ));
        }
        let q_slopes = monotone_slopes(&q_f, &q_y);
        let slopes_c = monotone_slopes(&ys, &cdf);
        Ok(InverseCdfTable {
            ys,
            cdf,
            slopes_c,
            q_f,
            q_y,
            q_slopes,
        })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.ys[0], *self.ys.last().unwrap())
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cdf
    }

    /// Quantile function; u is clamped into [0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let j = match self.q_f.partition_point(|&c| c <= u) {
            0 => 0,
            k if k >= self.q_f.len() => self.q_f.len() - 2,
            k => k - 1,
        };
        hermite_interp(
            u,
            self.q_f[j],
            self.q_f[j + 1],
            self.q_y[j],
            self.q_y[j + 1],
            self.q_slopes[j],
            self.q_slopes[j + 1],
        )
    }

    /// CDF at y (0 below the support, 1 above).
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= self.ys[0] {
            return 0.0;
        }
        if y >= *self.ys.last().unwrap() {
            return 1.0;
        }
        let j = self.ys.partition_point(|&v| v <= y) - 1;
        hermite_interp(
            y,
            self.ys[j],
            self.ys[j + 1],
            self.cdf[j],
            self.cdf[j + 1],
            self.slopes_c[j],
            self.slopes_c[j + 1],
        )
    }
}

/// Sampler for the scaled marginal law nu_q(dx/lambda).
pub struct MarginalSampler {
    pub q: QParam,
    pub lambda: f64,
    table: InverseCdfTable,
}

impl MarginalSampler {
    pub fn new(q: QParam, lambda: f64) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(QgError::Degenerate(format!(
                "marginal scale must be positive, got {lambda}"
            )));
        }
        let y_max = lambda * support_halfwidth(q);
        let table = InverseCdfTable::from_density(y_max, |y| {
            nu_density_clamped(q, y / lambda) / lambda
        })?;
        Ok(MarginalSampler { q, lambda, table })
    }

    pub fn table(&self) -> &InverseCdfTable {
        &self.table
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        self.table.quantile(rng.gen::<f64>())
    }
}

/// i.i.d. draws from the scaled marginal.
pub fn sample_marginal(q: QParam, lambda: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let sampler = MarginalSampler::new(q, lambda)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(path_seed(seed, i as u64));
        out.push(sampler.draw(&mut rng));
    }
    Ok(out)
}

/// Conditional draws from a transition kernel at a fixed source point
/// (one inverse-CDF table per conditioning slice).
pub fn sample_transition(x: f64, kernel: &TransitionKernel, n: usize, seed: u64) -> Result<Vec<f64>> {
    if kernel.is_degenerate() {
        let lam = kernel.lambdas();
        let image = lam.lambda_st.signum() * x * lam.lambda_t / lam.lambda_s;
        return Ok(vec![image; n]);
    }
    let (_, y_max) = kernel.target_support();
    let table = InverseCdfTable::from_density(y_max, |y| kernel.density(x, y).unwrap_or(0.0))?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(path_seed(seed, i as u64));
        out.push(table.quantile(rng.gen::<f64>()));
    }
    Ok(out)
}

/// Conditional sampler for one chain step: inverse-CDF tables on a grid of
/// conditioning points, interpolated linearly in the quantile between
/// neighboring tables.  A per-path exact table would cost a fresh 2049-point
/// tabulation per draw; the grid keeps the quantile error far below Monte
/// Carlo resolution while preserving determinism.
struct StepSampler {
    /// Deterministic branch: y = factor * x.
    deterministic: Option<f64>,
    x_lo: f64,
    x_step: f64,
    tables: Vec<InverseCdfTable>,
}

impl StepSampler {
    fn new(kernel: &TransitionKernel, grid_points: usize) -> Result<Self> {
        let lam = kernel.lambdas();
        if kernel.is_degenerate() {
            return Ok(StepSampler {
                deterministic: Some(lam.lambda_st.signum() * lam.lambda_t / lam.lambda_s),
                x_lo: 0.0,
                x_step: 1.0,
                tables: Vec::new(),
            });
        }
        let (x_lo, x_hi) = kernel.source_support();
        let (_, y_max) = kernel.target_support();
        let g = grid_points.max(3);
        let x_step = (x_hi - x_lo) / (g - 1) as f64;
        let mut tables = Vec::with_capacity(g);
        for i in 0..g {
            let x = x_lo + i as f64 * x_step;
            tables.push(InverseCdfTable::from_density(y_max, |y| {
                kernel.density(x, y).unwrap_or(0.0)
            })?);
        }
        Ok(StepSampler {
            deterministic: None,
            x_lo,
            x_step,
            tables,
        })
    }

    fn draw(&self, x: f64, u: f64) -> f64 {
        if let Some(factor) = self.deterministic {
            return factor * x;
        }
        let pos = (x - self.x_lo) / self.x_step;
        let j = (pos.floor() as isize).clamp(0, self.tables.len() as isize - 2) as usize;
        let frac = (pos - j as f64).clamp(0.0, 1.0);
        let a = self.tables[j].quantile(u);
        let b = self.tables[j + 1].quantile(u);
        a + frac * (b - a)
    }
}

/// What was sampled, carried along with the ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct ProcessDescriptor {
    pub kind: String,
    pub q: f64,
}

/// Sampled classical-version trajectories.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    /// n_paths rows, one value per time.
    pub paths: Vec<Vec<f64>>,
    pub seed: u64,
    pub descriptor: ProcessDescriptor,
}

/// Empirical moment estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[j]).collect()
    }

    /// Mean and standard error of prod_j X_{t_j}^{k_j} over the ensemble.
    pub fn empirical_moment(&self, exponents: &[usize]) -> Result<MomentEstimate> {
        if exponents.len() != self.times.len() {
            return Err(QgError::Domain(
                "one exponent per sampled time is required".into(),
            ));
        }
        let n = self.paths.len();
        if n == 0 {
            return Err(QgError::Domain("empty ensemble".into()));
        }
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for path in &self.paths {
            let mut v = 1.0;
            for (x, &k) in path.iter().zip(exponents) {
                v *= x.powi(k as i32);
            }
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        Ok(MomentEstimate {
            mean,
            std_error: (var / n as f64).sqrt(),
        })
    }

    /// CSV dump: version comment, a header row of the times, one row per path.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "# qgauss paths v1: kind={} q={} seed={}",
            self.descriptor.kind, self.descriptor.q, self.seed
        )?;
        let header: Vec<String> = self.times.iter().map(|t| format!("t_{t}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for path in &self.paths {
            let row: Vec<String> = path.iter().map(|x| format!("{x}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Samples classical-version paths of a q-Gaussian Markov process by chain
/// sampling: the marginal at the first positive-variance time, then
/// successive transition kernels.
///
/// Leading times with vanishing variance (the Brownian origin) are emitted
/// as exact zeros.  Non-Markov covariances are refused: their kernel chain
/// does not reproduce the process (moments can still be compared through
/// `moment_via_kernels`).
pub fn sample_paths(
    cov: &CovarianceSpec,
    q: QParam,
    times: &[f64],
    n_paths: usize,
    seed: u64,
    quad_points: usize,
) -> Result<PathEnsemble> {
    if times.is_empty() {
        return Err(QgError::Domain("need at least one time".into()));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(QgError::Domain("times must be strictly increasing".into()));
    }
    if times.len() >= 3 {
        let report = is_markov(cov, times, 1e-9)?;
        if !report.holds {
            return Err(QgError::NotMarkov {
                violation: report.max_violation,
                triple: report.worst_triple,
            });
        }
    }
    // leading zero-variance times become exact zeros
    let mut first_live = 0;
    while first_live < times.len() {
        let c = cov.c(times[first_live], times[first_live])?;
        if c > 0.0 {
            break;
        }
        first_live += 1;
    }
    for &t in &times[first_live..] {
        if cov.c(t, t)? <= 0.0 {
            return Err(QgError::Degenerate(format!(
                "vanishing marginal variance at interior time {t}"
            )));
        }
    }
    let descriptor = ProcessDescriptor {
        kind: format!("{cov:?}"),
        q: q.get(),
    };
    if n_paths == 0 {
        return Ok(PathEnsemble {
            times: times.to_vec(),
            paths: Vec::new(),
            seed,
            descriptor,
        });
    }
    let marginal = if first_live < times.len() {
        Some(MarginalSampler::new(
            q,
            cov.c(times[first_live], times[first_live])?.sqrt(),
        )?)
    } else {
        None
    };
    let mut steps = Vec::new();
    for w in times[first_live..].windows(2) {
        let kernel = TransitionKernel::new(q, cov, w[0], w[1], quad_points)?;
        steps.push(StepSampler::new(&kernel, STEP_GRID_POINTS)?);
    }
    let mut paths = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(path_seed(seed, p as u64));
        let mut row = vec![0.0; times.len()];
        if let Some(marginal) = &marginal {
            let mut x = marginal.draw(&mut rng);
            row[first_live] = x;
            for (k, step) in steps.iter().enumerate() {
                x = step.draw(x, rng.gen::<f64>());
                row[first_live + 1 + k] = x;
            }
        }
        paths.push(row);
    }
    Ok(PathEnsemble {
        times: times.to_vec(),
        paths,
        seed,
        descriptor,
    })
}

/// Three-way comparison of one time-ordered moment
/// E[X_{t_1}^{k_1} ... X_{t_n}^{k_n}].
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub kind: String,
    pub q: f64,
    pub times: Vec<f64>,
    pub exponents: Vec<usize>,
    /// Exact value from the truncated Fock matrices.
    pub fock: f64,
    /// Transition-kernel quadrature value.
    pub quadrature: f64,
    /// Monte Carlo estimate.
    pub mc: f64,
    pub mc_stderr: f64,
    pub fock_minus_quadrature: f64,
    pub fock_minus_mc: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Computes one moment three ways: exact Fock evaluation on the embedded
/// covariance, kernel-telescoped quadrature, and a sampled path ensemble.
pub fn classical_version_report(
    cov: &CovarianceSpec,
    kind_label: &str,
    q: QParam,
    times: &[f64],
    exponents: &[usize],
    n_paths: usize,
    seed: u64,
    quad_points: usize,
) -> Result<MomentReport> {
    if times.len() != exponents.len() {
        return Err(QgError::Domain(
            "one exponent per time is required".into(),
        ));
    }
    let total_degree: usize = exponents.iter().sum();
    // (a) exact Fock moment
    let fs = embed(cov, times)?;
    let basis = FockBasis::new(times.len().max(1), total_degree.max(1))?;
    let mut word = Vec::with_capacity(total_degree);
    for (f, &k) in fs.iter().zip(exponents) {
        for _ in 0..k {
            word.push(f.clone());
        }
    }
    let fock = moment(&word, &basis, q)?;
    // (b) kernel quadrature
    let hs: Vec<Polynomial> = exponents.iter().map(|&k| Polynomial::monomial(k)).collect();
    let quadrature = moment_via_kernels(q, cov, times, &hs, quad_points)?;
    // (c) Monte Carlo
    let ensemble = sample_paths(cov, q, times, n_paths, seed, quad_points)?;
    let est = ensemble.empirical_moment(exponents)?;
    Ok(MomentReport {
        kind: kind_label.to_string(),
        q: q.get(),
        times: times.to_vec(),
        exponents: exponents.to_vec(),
        fock,
        quadrature,
        mc: est.mean,
        mc_stderr: est.std_error,
        fock_minus_quadrature: fock - quadrature,
        fock_minus_mc: fock - est.mean,
        n_paths,
        seed,
    })
}

/// Two-sided Kolmogorov-Smirnov statistic of samples against a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::CovKind;
    use approx::assert_abs_diff_eq;

    fn qp(q: f64) -> QParam {
        QParam::new(q).unwrap()
    }

    fn bm() -> CovarianceSpec {
        CovarianceSpec::builtin(CovKind::Bm)
    }
    fn ou() -> CovarianceSpec {
        CovarianceSpec::builtin(CovKind::Ou)
    }

    #[test]
    fn table_is_monotone_and_inverts() {
        let q = qp(0.5);
        let table = InverseCdfTable::from_density(support_halfwidth(q), |y| {
            nu_density_clamped(q, y)
        })
        .unwrap();
        let cdf = table.cumulative();
        assert_eq!(cdf.len(), TABLE_POINTS);
        assert!(cdf.windows(2).all(|w| w[1] > w[0]));
        assert_abs_diff_eq!(cdf[0], 0.0);
        assert_abs_diff_eq!(cdf[TABLE_POINTS - 1], 1.0, epsilon = 1e-12);
        // quantile and CDF are inverse to each other
        for &u in &[0.01, 0.2, 0.5, 0.77, 0.99] {
            let y = table.quantile(u);
            assert_abs_diff_eq!(table.cdf(y), u, epsilon = 1e-6);
        }
        // symmetric density: median at 0
        assert_abs_diff_eq!(table.quantile(0.5), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn marginal_moments_within_four_standard_errors() {
        let q = qp(0.5);
        let lambda = 1.0;
        let n = 100_000;
        let draws = sample_marginal(q, lambda, n, 42).unwrap();
        let half = support_halfwidth(q) * lambda;
        assert!(draws.iter().all(|&x| x.abs() <= half + 1e-9));
        let mean: f64 = draws.iter().sum::<f64>() / n as f64;
        let m2: f64 = draws.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let m4: f64 = draws.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
        let se = |p: i32| {
            let mp: f64 = draws.iter().map(|x| x.powi(p)).sum::<f64>() / n as f64;
            let m2p: f64 = draws.iter().map(|x| x.powi(2 * p)).sum::<f64>() / n as f64;
            ((m2p - mp * mp).max(0.0) / n as f64).sqrt()
        };
        assert!(mean.abs() <= 4.0 * se(1), "mean {mean}");
        assert!((m2 - 1.0).abs() <= 4.0 * se(2), "second moment {m2}");
        assert!((m4 - 2.5).abs() <= 4.0 * se(4), "fourth moment {m4}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let e1 = sample_paths(&bm(), qp(0.3), &[0.5, 1.0, 2.0], 200, 7, 48).unwrap();
        let e2 = sample_paths(&bm(), qp(0.3), &[0.5, 1.0, 2.0], 200, 7, 48).unwrap();
        assert_eq!(e1.paths, e2.paths);
        let e3 = sample_paths(&bm(), qp(0.3), &[0.5, 1.0, 2.0], 200, 8, 48).unwrap();
        assert_ne!(e1.paths, e3.paths);
    }

    #[test]
    fn degenerate_transition_is_deterministic_map() {
        let kernel = TransitionKernel::new(qp(0.5), &bm(), 1.5, 1.5, 16).unwrap();
        let draws = sample_transition(0.42, &kernel, 50, 3).unwrap();
        assert!(draws.iter().all(|&y| y == 0.42));
    }

    #[test]
    fn conditional_means_track_the_eigenrelation() {
        let n = 30_000;
        // Brownian motion: E[X_t | X_s = x] = x
        let kernel = TransitionKernel::new(qp(0.5), &bm(), 1.0, 2.0, 64).unwrap();
        let x = 0.9;
        let draws = sample_transition(x, &kernel, n, 5).unwrap();
        let mean: f64 = draws.iter().sum::<f64>() / n as f64;
        let sd: f64 = {
            let var =
                draws.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
            (var / n as f64).sqrt()
        };
        assert!((mean - x).abs() <= 4.0 * sd, "bm mean {mean} vs {x}");
        // OU from x: E = x e^{-(t-s)}
        let kernel = TransitionKernel::new(qp(0.5), &ou(), 0.0, 1.0, 64).unwrap();
        let draws = sample_transition(x, &kernel, n, 6).unwrap();
        let mean: f64 = draws.iter().sum::<f64>() / n as f64;
        let sd: f64 = {
            let var =
                draws.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
            (var / n as f64).sqrt()
        };
        let expected = x * (-1.0f64).exp();
        assert!(
            (mean - expected).abs() <= 4.0 * sd,
            "ou mean {mean} vs {expected}"
        );
    }

    #[test]
    fn empty_ensemble_and_origin_zeros() {
        let empty = sample_paths(&bm(), qp(0.2), &[1.0, 2.0], 0, 1, 32).unwrap();
        assert_eq!(empty.n_paths(), 0);
        // t = 0 start is emitted as exact zeros
        let e = sample_paths(&bm(), qp(0.2), &[0.0, 1.0, 2.0], 50, 1, 32).unwrap();
        assert!(e.column(0).iter().all(|&x| x == 0.0));
        assert!(e.column(1).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn bm_marginal_variance_grows_linearly() {
        let times = [0.5, 1.0, 2.0];
        let e = sample_paths(&bm(), qp(0.5), &times, 60_000, 11, 64).unwrap();
        for (j, &t) in times.iter().enumerate() {
            let col = e.column(j);
            let n = col.len() as f64;
            let m2: f64 = col.iter().map(|x| x * x).sum::<f64>() / n;
            let m4: f64 = col.iter().map(|x| x.powi(4)).sum::<f64>() / n;
            let se = ((m4 - m2 * m2).max(0.0) / n).sqrt();
            assert!((m2 - t).abs() <= 4.0 * se, "Var(X_{t}) = {m2}");
        }
    }

    #[test]
    fn chained_marginal_passes_ks_against_direct_law() {
        // law of X_2 reached through two kernel steps vs the direct marginal
        let q = qp(0.5);
        let e = sample_paths(&bm(), q, &[0.5, 1.0, 2.0], 50_000, 23, 64).unwrap();
        let lambda = 2.0f64.sqrt();
        let marginal = MarginalSampler::new(q, lambda).unwrap();
        let ks = ks_statistic(&e.column(2), |y| marginal.table().cdf(y));
        // 1% critical value of the two-sided KS statistic
        let critical = 1.628 / (e.n_paths() as f64).sqrt();
        assert!(ks < critical, "KS {ks} >= {critical}");
    }

    #[test]
    fn non_markov_covariance_is_refused() {
        let frac = CovarianceSpec::custom("fractional", |s, t| {
            0.5 * (s.powf(1.5) + t.powf(1.5) - (t - s).abs().powf(1.5))
        });
        let err = sample_paths(&frac, qp(0.3), &[1.0, 2.0, 3.0], 10, 1, 32);
        assert!(matches!(err, Err(QgError::NotMarkov { .. })));
    }

    #[test]
    fn three_way_report_consistency() {
        let report = classical_version_report(
            &bm(),
            "bm",
            qp(0.5),
            &[0.5, 1.0, 2.0],
            &[1, 2, 1],
            40_000,
            9,
            128,
        )
        .unwrap();
        assert!(
            report.fock_minus_quadrature.abs() <= 1e-6,
            "fock {} vs quadrature {}",
            report.fock,
            report.quadrature
        );
        assert!(
            report.fock_minus_mc.abs() <= 4.0 * report.mc_stderr,
            "fock {} vs mc {} (se {})",
            report.fock,
            report.mc,
            report.mc_stderr
        );
        // single-time second moment: all three are c(t,t)
        let single = classical_version_report(
            &bm(),
            "bm",
            qp(-0.4),
            &[1.5],
            &[2],
            40_000,
            10,
            96,
        )
        .unwrap();
        assert_abs_diff_eq!(single.fock, 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(single.quadrature, 1.5, epsilon = 1e-8);
        assert!((single.mc - 1.5).abs() <= 4.0 * single.mc_stderr);
    }

    #[test]
    fn q_bm_increments_are_not_independent() {
        // The classical version of q-Brownian motion is Markov but its
        // increments are not independent: E[(X_2 - X_1)^4 X_1^2] differs
        // from E[(X_2 - X_1)^4] E[X_1^2].  (In the quadratic-quadratic
        // moment E[(X_2-X_1)^2 X_1^2] the crossing terms cancel for every q,
        // so the fourth power of the increment is the right probe; the gap
        // shrinks toward the classical limit q -> 1.)
        let q = qp(0.5);
        let times = [1.0, 2.0];
        let fs = embed(&bm(), &times).unwrap();
        let basis = FockBasis::new(2, 6).unwrap();
        let m = |word: &[usize]| {
            let w: Vec<_> = word.iter().map(|&i| fs[i].clone()).collect();
            moment(&w, &basis, q).unwrap()
        };
        // E[X_1^k (X_2 - X_1)^4] expanded in time-ordered monomial moments
        let inc4 = |lead_x1: usize| {
            let coeffs = [1.0, -4.0, 6.0, -4.0, 1.0];
            let mut total = 0.0;
            for (j, &c) in coeffs.iter().enumerate() {
                let mut word = vec![0usize; lead_x1 + j];
                word.extend(std::iter::repeat(1).take(4 - j));
                total += c * m(&word);
            }
            total
        };
        let exact = inc4(2);
        let product = inc4(0) * m(&[0, 0]);
        assert_abs_diff_eq!(exact - product, 0.375, epsilon = 1e-12);
        // quadratic-quadratic cancellation, exact at every q
        let qq22 = m(&[1, 1, 0, 0]) - 2.0 * m(&[0, 1, 0, 0]) + m(&[0, 0, 0, 0]);
        let pp22 = (m(&[1, 1]) - 2.0 * m(&[0, 1]) + m(&[0, 0])) * m(&[0, 0]);
        assert_abs_diff_eq!(qq22, pp22, epsilon = 1e-12);
        // the sampler sees the dependence
        let e = sample_paths(&bm(), q, &times, 100_000, 31, 64).unwrap();
        let n = e.n_paths() as f64;
        let vals: Vec<f64> = e
            .paths
            .iter()
            .map(|p| (p[1] - p[0]).powi(4) * p[0].powi(2))
            .collect();
        let mc: f64 = vals.iter().sum::<f64>() / n;
        let se = {
            let m2 = vals.iter().map(|v| v * v).sum::<f64>() / n;
            ((m2 - mc * mc).max(0.0) / n).sqrt()
        };
        assert!((mc - exact).abs() <= 4.0 * se, "mc {mc} vs exact {exact}");
        assert!(
            (mc - product).abs() > 4.0 * se,
            "mc {mc} (se {se}) should be far from the independent product {product}"
        );
    }

    #[test]
    fn path_csv_schema() {
        let e = sample_paths(&bm(), qp(0.1), &[1.0, 2.0], 3, 77, 32).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# qgauss paths v1"));
        assert_eq!(lines.next().unwrap(), "t_1,t_2");
        assert_eq!(text.lines().count(), 2 + 3);
    }
}
