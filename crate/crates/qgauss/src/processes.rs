//! Covariance functions and the process-level criteria that reduce to them:
//! Markovianity, the martingale property, Hilbert-space embeddings, and the
//! lambda quantities entering transition kernels.
//!
//! A process is determined by a covariance c(s, t) realized as <f_s, f_t>;
//! it is Markov iff c(t,s) c(u,u) = c(t,u) c(u,s) for all s <= u <= t, and a
//! martingale iff c(s,t) = c(s,s) for s <= t.

use crate::qcore::QParam;
use crate::{QgError, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Built-in covariance kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    /// c(s,t) = min(s,t) on [0, inf)
    Bm,
    /// c(s,t) = s(1-t) for s <= t on [0, 1]
    Bridge,
    /// c(s,t) = exp(-|t-s|) on R
    Ou,
}

impl CovKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "bm" => Ok(CovKind::Bm),
            "bridge" => Ok(CovKind::Bridge),
            "ou" => Ok(CovKind::Ou),
            other => Err(QgError::Config(format!(
                "unknown process kind '{other}' (expected bm, bridge, or ou)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CovKind::Bm => "bm",
            CovKind::Bridge => "bridge",
            CovKind::Ou => "ou",
        }
    }

    fn check_time(self, t: f64) -> Result<()> {
        let ok = match self {
            CovKind::Bm => t >= 0.0,
            CovKind::Bridge => (0.0..=1.0).contains(&t),
            CovKind::Ou => t.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(QgError::Domain(format!(
                "time {t} outside the domain of the {} covariance",
                self.name()
            )))
        }
    }
}

/// Built-in covariance evaluation with domain checks.
pub fn builtin_covariance(kind: CovKind, s: f64, t: f64) -> Result<f64> {
    kind.check_time(s)?;
    kind.check_time(t)?;
    Ok(match kind {
        CovKind::Bm => s.min(t),
        CovKind::Bridge => s.min(t) * (1.0 - s.max(t)),
        CovKind::Ou => (-(t - s).abs()).exp(),
    })
}

/// Covariance sampled on a finite time grid (ingested from CSV triples).
#[derive(Debug, Clone)]
pub struct GridCovariance {
    pub times: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl GridCovariance {
    /// Builds from (t_i, t_j, c) triples; missing symmetric partners are
    /// filled in, genuinely missing entries are an error.
    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        if triples.is_empty() {
            return Err(QgError::Config("covariance grid is empty".into()));
        }
        let mut times: Vec<f64> = triples
            .iter()
            .flat_map(|&(s, t, _)| [s, t])
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
        let n = times.len();
        let index = |t: f64| -> Result<usize> {
            times
                .iter()
                .position(|&u| (u - t).abs() <= 1e-12 * u.abs().max(1.0))
                .ok_or_else(|| QgError::Config(format!("time {t} not on the grid")))
        };
        let mut values = DMatrix::from_element(n, n, f64::NAN);
        for &(s, t, c) in triples {
            let i = index(s)?;
            let j = index(t)?;
            values[(i, j)] = c;
            if values[(j, i)].is_nan() {
                values[(j, i)] = c;
            }
        }
        for i in 0..n {
            for j in 0..n {
                if values[(i, j)].is_nan() {
                    return Err(QgError::Config(format!(
                        "covariance grid missing entry at ({}, {})",
                        times[i], times[j]
                    )));
                }
                if (values[(i, j)] - values[(j, i)]).abs()
                    > 1e-9 * values[(i, j)].abs().max(1.0)
                {
                    return Err(QgError::Config(format!(
                        "covariance grid not symmetric at ({}, {})",
                        times[i], times[j]
                    )));
                }
            }
        }
        Ok(GridCovariance { times, values })
    }

    fn lookup(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&u| (u - t).abs() <= 1e-9 * u.abs().max(1.0))
            .ok_or_else(|| {
                QgError::Domain(format!("time {t} not among the sampled grid times"))
            })
    }
}

/// A symmetric positive-definite covariance function.
#[derive(Clone)]
pub enum CovarianceSpec {
    Builtin(CovKind),
    Grid(Arc<GridCovariance>),
    Custom {
        name: String,
        eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for CovarianceSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CovarianceSpec::Builtin(k) => write!(f, "CovarianceSpec::Builtin({})", k.name()),
            CovarianceSpec::Grid(g) => {
                write!(f, "CovarianceSpec::Grid({} times)", g.times.len())
            }
            CovarianceSpec::Custom { name, .. } => write!(f, "CovarianceSpec::Custom({name})"),
        }
    }
}

impl CovarianceSpec {
    pub fn builtin(kind: CovKind) -> Self {
        CovarianceSpec::Builtin(kind)
    }

    pub fn custom<F>(name: &str, eval: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        CovarianceSpec::Custom {
            name: name.to_string(),
            eval: Arc::new(eval),
        }
    }

    pub fn kind(&self) -> Option<CovKind> {
        match self {
            CovarianceSpec::Builtin(k) => Some(*k),
            _ => None,
        }
    }

    /// Evaluates c(s, t).
    pub fn c(&self, s: f64, t: f64) -> Result<f64> {
        match self {
            CovarianceSpec::Builtin(kind) => builtin_covariance(*kind, s, t),
            CovarianceSpec::Grid(grid) => {
                let i = grid.lookup(s)?;
                let j = grid.lookup(t)?;
                Ok(grid.values[(i, j)])
            }
            CovarianceSpec::Custom { eval, .. } => Ok(eval(s, t)),
        }
    }
}

/// Result of the Markov-criterion sweep over a time grid.
#[derive(Debug, Clone)]
pub struct MarkovReport {
    pub holds: bool,
    pub max_violation: f64,
    pub worst_triple: (f64, f64, f64),
}

fn require_sorted(grid: &[f64]) -> Result<()> {
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(QgError::Domain("time grid must be sorted".into()));
    }
    Ok(())
}

/// Checks c(t,s) c(u,u) = c(t,u) c(u,s) on every triple s <= u <= t of the
/// grid; reports the largest relative violation and the triple attaining it.
pub fn is_markov(cov: &CovarianceSpec, grid: &[f64], tol: f64) -> Result<MarkovReport> {
    require_sorted(grid)?;
    if grid.len() < 3 {
        return Err(QgError::Domain(
            "Markov check needs at least three grid times".into(),
        ));
    }
    let mut max_violation: f64 = 0.0;
    let mut worst = (grid[0], grid[0], grid[0]);
    for (i, &s) in grid.iter().enumerate() {
        for (j, &u) in grid.iter().enumerate().skip(i) {
            for &t in grid.iter().skip(j) {
                let lhs = cov.c(t, s)? * cov.c(u, u)?;
                let rhs = cov.c(t, u)? * cov.c(u, s)?;
                let violation = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0);
                if violation > max_violation {
                    max_violation = violation;
                    worst = (s, u, t);
                }
            }
        }
    }
    Ok(MarkovReport {
        holds: max_violation <= tol,
        max_violation,
        worst_triple: worst,
    })
}

/// Checks the martingale criterion c(s,t) = c(s,s) on every pair s <= t.
pub fn is_martingale(cov: &CovarianceSpec, grid: &[f64], tol: f64) -> Result<bool> {
    require_sorted(grid)?;
    for (i, &s) in grid.iter().enumerate() {
        let css = cov.c(s, s)?;
        for &t in grid.iter().skip(i) {
            if (cov.c(s, t)? - css).abs() > tol * css.abs().max(1.0) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Marginal scales and correlation of a pair of times:
/// lambda_t = sqrt(c(t,t)), lambda_{s,t} = c(t,s)/(lambda_s lambda_t).
#[derive(Debug, Clone, Copy)]
pub struct LambdaTriple {
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub lambda_st: f64,
}

impl LambdaTriple {
    /// |lambda_{s,t}| = 1 collapses the transition kernel to a point map.
    pub fn is_degenerate(&self) -> bool {
        self.lambda_st.abs() >= 1.0
    }
}

/// Computes the lambda quantities, clamping |lambda_{s,t}| into [-1, 1] when
/// within 1e-12 of the boundary.  Vanishing marginal variances are rejected
/// (the kernel divides by them).
pub fn lambdas(cov: &CovarianceSpec, s: f64, t: f64) -> Result<LambdaTriple> {
    let css = cov.c(s, s)?;
    let ctt = cov.c(t, t)?;
    if css <= 0.0 || ctt <= 0.0 {
        return Err(QgError::Degenerate(format!(
            "marginal variance vanishes (c({s},{s}) = {css}, c({t},{t}) = {ctt})"
        )));
    }
    let lambda_s = css.sqrt();
    let lambda_t = ctt.sqrt();
    let mut lambda_st = cov.c(t, s)? / (lambda_s * lambda_t);
    if lambda_st.abs() > 1.0 {
        if lambda_st.abs() <= 1.0 + 1e-12 {
            lambda_st = lambda_st.signum();
        } else {
            return Err(QgError::Domain(format!(
                "|lambda_st| = {} > 1: not a covariance at ({s}, {t})",
                lambda_st.abs()
            )));
        }
    }
    Ok(LambdaTriple {
        lambda_s,
        lambda_t,
        lambda_st,
    })
}

/// Embeds a covariance on a time grid as vectors f_t with <f_s, f_t> = c(s,t),
/// via the symmetric eigendecomposition of the grid Gram matrix.
///
/// Eigenvalues of the scaled Gram in (-1e-10, 0) are clipped to 0 (rounding
/// slack for semidefinite grids); anything below fails as not a covariance.
pub fn embed(cov: &CovarianceSpec, times: &[f64]) -> Result<Vec<DVector<f64>>> {
    let n = times.len();
    let mut g = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = cov.c(times[i], times[j])?;
        }
    }
    let scale = (0..n).map(|i| g[(i, i)].abs()).fold(0.0_f64, f64::max).max(1e-300);
    let eig = (g.clone() / scale).symmetric_eigen();
    let mut roots = Vec::with_capacity(n);
    for k in 0..n {
        let ev = eig.eigenvalues[k];
        if ev < -1e-10 {
            return Err(QgError::NotPositiveDefinite {
                eigenvalue: ev * scale,
            });
        }
        roots.push((ev.max(0.0) * scale).sqrt());
    }
    let vectors: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            DVector::from_iterator(n, (0..n).map(|k| eig.eigenvectors[(i, k)] * roots[k]))
        })
        .collect();
    // reconstruction audit
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            err = err.max((vectors[i].dot(&vectors[j]) - g[(i, j)]).abs());
        }
    }
    if err > 1e-10 * scale.max(1.0) {
        return Err(QgError::Domain(format!(
            "embedding reconstruction error {err} exceeds tolerance"
        )));
    }
    Ok(vectors)
}

/// Factorization c(s,t) = g(s) f(t) for s <= t of a builtin covariance.
pub struct CovFactorization {
    pub g: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

/// The standard factorizations: bm (s, 1), ou (e^s, e^-t), bridge (s, 1-t).
pub fn factorize(kind: CovKind) -> CovFactorization {
    match kind {
        CovKind::Bm => CovFactorization {
            g: Box::new(|s| s),
            f: Box::new(|_| 1.0),
        },
        CovKind::Ou => CovFactorization {
            g: Box::new(|s| s.exp()),
            f: Box::new(|t| (-t).exp()),
        },
        CovKind::Bridge => CovFactorization {
            g: Box::new(|s| s),
            f: Box::new(|t| 1.0 - t),
        },
    }
}

/// Sup over source-support quadrature nodes x of
/// |E[H_n(X_t / lambda_t) | X_s = x] - lambda_st^n H_n(x / lambda_s)|,
/// the conditional-expectation identity behind the martingale families.
pub fn martingale_family_residual(
    kind: CovKind,
    q: QParam,
    n: usize,
    s: f64,
    t: f64,
    quad_points: usize,
) -> Result<f64> {
    let cov = CovarianceSpec::builtin(kind);
    let kernel = crate::kernels::TransitionKernel::new(q, &cov, s, t, quad_points)?;
    let lam = kernel.lambdas();
    let rule = crate::qhermite::gauss_quadrature(q, quad_points)?;
    if 2 * n > rule.exact_degree() {
        return Err(QgError::InsufficientQuadrature {
            points: quad_points,
            degree: 2 * n,
        });
    }
    let mut worst: f64 = 0.0;
    for &node in &rule.nodes {
        let x = node * lam.lambda_s;
        let lhs = kernel.apply(|y| crate::qhermite::hermite(n, q, y / lam.lambda_t), x)?;
        let rhs = lam.lambda_st.powi(n as i32) * crate::qhermite::hermite(n, q, x / lam.lambda_s);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{moment, FockBasis};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn qp(q: f64) -> QParam {
        QParam::new(q).unwrap()
    }

    /// Fractional-type covariance (Hurst 0.75): positive definite but not
    /// Markov; the standard negative control.
    pub fn fractional() -> CovarianceSpec {
        CovarianceSpec::custom("fractional", |s, t| {
            0.5 * (s.powf(1.5) + t.powf(1.5) - (t - s).abs().powf(1.5))
        })
    }

    #[test]
    fn builtin_values_and_domains() {
        assert_abs_diff_eq!(builtin_covariance(CovKind::Bm, 1.0, 2.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            builtin_covariance(CovKind::Bridge, 0.25, 0.5).unwrap(),
            0.125
        );
        assert_abs_diff_eq!(builtin_covariance(CovKind::Ou, 3.7, 3.7).unwrap(), 1.0);
        // symmetry of evaluation order
        assert_abs_diff_eq!(
            builtin_covariance(CovKind::Bridge, 0.5, 0.25).unwrap(),
            0.125
        );
        assert!(builtin_covariance(CovKind::Bm, -0.1, 1.0).is_err());
        assert!(builtin_covariance(CovKind::Bridge, 0.2, 1.3).is_err());
        assert!(builtin_covariance(CovKind::Ou, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn builtins_are_markov() {
        let grid_bm = [0.5, 1.0, 1.7, 2.4, 3.0, 4.5];
        let grid_bridge = [0.1, 0.25, 0.4, 0.6, 0.75, 0.9];
        let grid_ou = [-1.0, -0.3, 0.2, 0.9, 1.5, 2.2];
        for (kind, grid) in [
            (CovKind::Bm, &grid_bm[..]),
            (CovKind::Bridge, &grid_bridge[..]),
            (CovKind::Ou, &grid_ou[..]),
        ] {
            let report = is_markov(&CovarianceSpec::builtin(kind), grid, 1e-12).unwrap();
            assert!(report.holds, "{}: {report:?}", kind.name());
        }
        // constant covariance is trivially Markov
        let constant = CovarianceSpec::custom("const", |_, _| 1.0);
        assert!(is_markov(&constant, &grid_bm, 1e-12).unwrap().holds);
    }

    #[test]
    fn fractional_covariance_fails_markov() {
        let report = is_markov(&fractional(), &[1.0, 2.0, 3.0], 1e-12).unwrap();
        assert!(!report.holds);
        assert!(report.max_violation > 1e-2);
        // the documented arithmetic at the triple (1, 2, 3)
        let c = fractional();
        let lhs = c.c(3.0, 1.0).unwrap() * c.c(2.0, 2.0).unwrap();
        let rhs = c.c(3.0, 2.0).unwrap() * c.c(2.0, 1.0).unwrap();
        assert_relative_eq!(lhs, 4.7627, max_relative = 1e-3);
        assert_relative_eq!(rhs, 4.9671, max_relative = 1e-3);
    }

    #[test]
    fn martingale_criterion() {
        let grid = [0.2, 0.5, 0.8];
        assert!(is_martingale(&CovarianceSpec::builtin(CovKind::Bm), &grid, 1e-12).unwrap());
        assert!(!is_martingale(&CovarianceSpec::builtin(CovKind::Ou), &grid, 1e-12).unwrap());
        assert!(
            !is_martingale(&CovarianceSpec::builtin(CovKind::Bridge), &grid, 1e-12).unwrap()
        );
    }

    #[test]
    fn lambda_values() {
        let bm = CovarianceSpec::builtin(CovKind::Bm);
        let lam = lambdas(&bm, 1.0, 4.0).unwrap();
        assert_abs_diff_eq!(lam.lambda_s, 1.0);
        assert_abs_diff_eq!(lam.lambda_t, 2.0);
        assert_abs_diff_eq!(lam.lambda_st, 0.5);

        let ou = CovarianceSpec::builtin(CovKind::Ou);
        let lam = lambdas(&ou, 0.3, 1.8).unwrap();
        assert_abs_diff_eq!(lam.lambda_s, 1.0);
        assert_abs_diff_eq!(lam.lambda_t, 1.0);
        assert_relative_eq!(lam.lambda_st, (-1.5f64).exp(), max_relative = 1e-14);

        let bridge = CovarianceSpec::builtin(CovKind::Bridge);
        let lam = lambdas(&bridge, 0.25, 0.75).unwrap();
        assert_relative_eq!(lam.lambda_s, 0.1875f64.sqrt());
        assert_relative_eq!(lam.lambda_t, 0.1875f64.sqrt());
        assert_relative_eq!(lam.lambda_st, 1.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn lambda_rejects_degenerate_marginals() {
        let bm = CovarianceSpec::builtin(CovKind::Bm);
        assert!(matches!(
            lambdas(&bm, 0.0, 1.0),
            Err(QgError::Degenerate(_))
        ));
        let bridge = CovarianceSpec::builtin(CovKind::Bridge);
        assert!(lambdas(&bridge, 0.5, 1.0).is_err());
    }

    #[test]
    fn lambda_cocycle_under_markov() {
        // lambda_{s,u} lambda_{u,t} = lambda_{s,t} for Markov covariances
        for kind in [CovKind::Bm, CovKind::Bridge, CovKind::Ou] {
            let cov = CovarianceSpec::builtin(kind);
            let (s, u, t) = match kind {
                CovKind::Bridge => (0.2, 0.45, 0.7),
                _ => (0.5, 1.25, 2.0),
            };
            let su = lambdas(&cov, s, u).unwrap().lambda_st;
            let ut = lambdas(&cov, u, t).unwrap().lambda_st;
            let st = lambdas(&cov, s, t).unwrap().lambda_st;
            assert_relative_eq!(su * ut, st, max_relative = 1e-12);
        }
    }

    #[test]
    fn embedding_reproduces_gram() {
        let bm = CovarianceSpec::builtin(CovKind::Bm);
        let times = [1.0, 2.0, 3.0];
        let fs = embed(&bm, &times).unwrap();
        let expected = [[1.0, 1.0, 1.0], [1.0, 2.0, 2.0], [1.0, 2.0, 3.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(fs[i].dot(&fs[j]), expected[i][j], epsilon = 1e-12);
            }
        }
        // single time embeds with norm sqrt(c(t,t))
        let single = embed(&bm, &[2.25]).unwrap();
        assert_abs_diff_eq!(single[0].norm(), 1.5, epsilon = 1e-14);
    }

    #[test]
    fn embedding_tolerates_semidefinite_and_rejects_indefinite() {
        // bm at t = 0 contributes a zero row: semidefinite, embeds fine
        let bm = CovarianceSpec::builtin(CovKind::Bm);
        let fs = embed(&bm, &[0.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(fs[0].norm(), 0.0, epsilon = 1e-12);
        // [[1, 2], [2, 1]] has eigenvalue -1
        let bad = CovarianceSpec::custom("bad", |s, t| if s == t { 1.0 } else { 2.0 });
        assert!(matches!(
            embed(&bad, &[0.0, 1.0]),
            Err(QgError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn embedding_feeds_fock_moments() {
        // E[omega(f_s) omega(f_t)] = c(s, t)
        let q = qp(0.4);
        for kind in [CovKind::Bm, CovKind::Bridge, CovKind::Ou] {
            let cov = CovarianceSpec::builtin(kind);
            let times = match kind {
                CovKind::Bridge => vec![0.2, 0.5, 0.8],
                _ => vec![0.5, 1.5, 2.5],
            };
            let fs = embed(&cov, &times).unwrap();
            let basis = FockBasis::new(times.len(), 2).unwrap();
            for i in 0..times.len() {
                for j in 0..times.len() {
                    let m = moment(&[fs[i].clone(), fs[j].clone()], &basis, q).unwrap();
                    assert_abs_diff_eq!(
                        m,
                        cov.c(times[i], times[j]).unwrap(),
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn factorizations_recover_covariance() {
        for kind in [CovKind::Bm, CovKind::Bridge, CovKind::Ou] {
            let fac = factorize(kind);
            let cov = CovarianceSpec::builtin(kind);
            let grid = match kind {
                CovKind::Bridge => vec![0.1, 0.25, 0.5, 0.75, 0.9],
                _ => vec![0.25, 0.5, 1.0, 2.0, 3.0],
            };
            for (i, &s) in grid.iter().enumerate() {
                for &t in grid.iter().skip(i) {
                    let expected = cov.c(s, t).unwrap();
                    let got = (fac.g)(s) * (fac.f)(t);
                    assert_relative_eq!(got, expected, max_relative = 1e-12);
                }
            }
        }
        // spot values
        let bm = factorize(CovKind::Bm);
        assert_abs_diff_eq!((bm.g)(2.0) * (bm.f)(3.0), 2.0);
        let ou = factorize(CovKind::Ou);
        assert_relative_eq!((ou.g)(2.0) * (ou.f)(3.0), (-1.0f64).exp());
        let bridge = factorize(CovKind::Bridge);
        assert_abs_diff_eq!((bridge.g)(0.25) * (bridge.f)(0.5), 0.125);
    }

    #[test]
    fn factorization_reproduces_lambda_ratio() {
        // lambda_st = sqrt((g(s)/f(s)) / (g(t)/f(t)))
        for kind in [CovKind::Bm, CovKind::Bridge, CovKind::Ou] {
            let fac = factorize(kind);
            let cov = CovarianceSpec::builtin(kind);
            let (s, t) = if kind == CovKind::Bridge {
                (0.3, 0.6)
            } else {
                (0.7, 1.9)
            };
            let lam = lambdas(&cov, s, t).unwrap();
            let ratio = ((fac.g)(s) / (fac.f)(s)) / ((fac.g)(t) / (fac.f)(t));
            assert_relative_eq!(lam.lambda_st, ratio.sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn ou_correlation_is_stationary() {
        let cov = CovarianceSpec::builtin(CovKind::Ou);
        let pairs = [(-1.0, -0.25), (0.0, 0.75), (2.0, 2.75)];
        let reference = lambdas(&cov, 0.0, 0.75).unwrap().lambda_st;
        for &(s, t) in &pairs {
            let lam = lambdas(&cov, s, t).unwrap();
            assert_relative_eq!(lam.lambda_st, reference, max_relative = 1e-13);
        }
    }

    #[test]
    fn grid_covariance_roundtrip_and_errors() {
        let triples = vec![
            (0.0, 0.0, 1.0),
            (0.0, 1.0, 0.5),
            (1.0, 1.0, 2.0),
        ];
        let grid = GridCovariance::from_triples(&triples).unwrap();
        let spec = CovarianceSpec::Grid(Arc::new(grid));
        assert_abs_diff_eq!(spec.c(0.0, 1.0).unwrap(), 0.5);
        assert_abs_diff_eq!(spec.c(1.0, 0.0).unwrap(), 0.5);
        assert!(spec.c(0.5, 1.0).is_err());
        // missing entry
        let incomplete = vec![(0.0, 0.0, 1.0), (1.0, 1.0, 1.0), (2.0, 2.0, 1.0), (0.0, 1.0, 0.3)];
        assert!(GridCovariance::from_triples(&incomplete).is_err());
    }

    #[test]
    fn martingale_family_identity_small() {
        // n = 0 (normalization) and n = 1 for Brownian motion
        let res0 =
            martingale_family_residual(CovKind::Bm, qp(0.5), 0, 0.5, 1.5, 80).unwrap();
        assert!(res0 <= 1e-10, "n=0 residual {res0}");
        let res1 =
            martingale_family_residual(CovKind::Bm, qp(0.5), 1, 0.5, 1.5, 80).unwrap();
        assert!(res1 <= 1e-9, "n=1 residual {res1}");
        let res3 = martingale_family_residual(CovKind::Ou, qp(0.5), 3, 0.0, 1.0, 80).unwrap();
        assert!(res3 <= 1e-7, "n=3 residual {res3}");
    }
}
