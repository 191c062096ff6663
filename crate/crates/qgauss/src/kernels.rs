//! Transition kernels of q-Gaussian Markov processes and everything built on
//! them: Feller-kernel application, Chapman-Kolmogorov composition checks,
//! telescoped time-ordered moments, the free Ornstein-Uhlenbeck generator,
//! the fermionic (q = -1) two-state closed forms, and the ultracontractivity
//! constant alpha(t, q).
//!
//! For |lambda_{s,t}| < 1 the kernel has Lebesgue density
//! p_{lambda_st}(x/lambda_s, y/lambda_t) nu_q(y/lambda_t)/lambda_t: the Mehler
//! kernel against the pushforward of nu_q under y -> lambda_t y.  At
//! |lambda_st| = 1 it degenerates to the point map y = +-x lambda_t/lambda_s.

use crate::processes::{lambdas, CovarianceSpec, LambdaTriple};
use crate::qcore::QParam;
use crate::qhermite::{
    gauss_quadrature, mehler_product, nu_density_clamped, support_halfwidth, Polynomial,
    QuadratureRule,
};
use crate::{QgError, Result};

/// Truncation tolerance for Mehler-product factors inside kernels.
const KERNEL_PRODUCT_TOL: f64 = 1e-16;

/// Transition kernel of a q-Gaussian Markov process between two times.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    q: QParam,
    lam: LambdaTriple,
    /// Closed source/target supports [-2 lambda/sqrt(1-q), 2 lambda/sqrt(1-q)].
    source_support: (f64, f64),
    target_support: (f64, f64),
    /// Gauss rule for the standardized target marginal.
    rule: QuadratureRule,
}

impl TransitionKernel {
    pub fn new(
        q: QParam,
        cov: &CovarianceSpec,
        s: f64,
        t: f64,
        quad_points: usize,
    ) -> Result<Self> {
        let lam = lambdas(cov, s, t)?;
        let half = support_halfwidth(q);
        let rule = gauss_quadrature(q, quad_points)?;
        Ok(TransitionKernel {
            q,
            lam,
            source_support: (-half * lam.lambda_s, half * lam.lambda_s),
            target_support: (-half * lam.lambda_t, half * lam.lambda_t),
            rule,
        })
    }

    pub fn lambdas(&self) -> LambdaTriple {
        self.lam
    }

    pub fn q(&self) -> QParam {
        self.q
    }

    pub fn source_support(&self) -> (f64, f64) {
        self.source_support
    }

    pub fn target_support(&self) -> (f64, f64) {
        self.target_support
    }

    pub fn is_degenerate(&self) -> bool {
        self.lam.is_degenerate()
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// Lebesgue density at (x, y); zero outside the support rectangle.
    /// Errors in the degenerate case, which has no density.
    pub fn density(&self, x: f64, y: f64) -> Result<f64> {
        if self.is_degenerate() {
            return Err(QgError::Degenerate(format!(
                "lambda_st = {}: kernel is the deterministic map",
                self.lam.lambda_st
            )));
        }
        if x < self.source_support.0 || x > self.source_support.1 {
            return Ok(0.0);
        }
        let u = y / self.lam.lambda_t;
        let p = mehler_product(
            self.q,
            self.lam.lambda_st,
            x / self.lam.lambda_s,
            u,
            KERNEL_PRODUCT_TOL,
        )?;
        Ok(p * nu_density_clamped(self.q, u) / self.lam.lambda_t)
    }

    /// Transition operator (K h)(x) = integral h(y) k(x, dy).
    ///
    /// The non-degenerate branch integrates by the Gauss rule of the target
    /// marginal; the degenerate branch evaluates h(+-x lambda_t/lambda_s).
    pub fn apply<F: Fn(f64) -> f64>(&self, h: F, x: f64) -> Result<f64> {
        if self.is_degenerate() {
            let image = self.lam.lambda_st.signum() * x * self.lam.lambda_t / self.lam.lambda_s;
            return Ok(h(image));
        }
        let xs = x / self.lam.lambda_s;
        let mut acc = 0.0;
        for (&node, &weight) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let p = mehler_product(self.q, self.lam.lambda_st, xs, node, KERNEL_PRODUCT_TOL)?;
            acc += weight * h(node * self.lam.lambda_t) * p;
        }
        Ok(acc)
    }

    /// |integral k(x, dy) - 1| with the y-integral done by the
    /// theta-substituted trapezoid rule on the Lebesgue density, which
    /// exercises the full density path (Mehler factor, nu_q, and the
    /// 1/lambda_t pushforward scaling) independently of the Gauss rule.
    pub fn normalization_residual(&self, x: f64, theta_points: usize) -> Result<f64> {
        let qv = self.q.get();
        let lt = self.lam.lambda_t;
        let n = theta_points.max(64);
        let h = std::f64::consts::PI / n as f64;
        let mut acc = 0.0;
        for j in 1..n {
            let theta = j as f64 * h;
            let y = lt * 2.0 * theta.cos() / (1.0 - qv).sqrt();
            let dy_dtheta = lt * 2.0 * theta.sin() / (1.0 - qv).sqrt();
            acc += self.density(x, y)? * dy_dtheta;
        }
        Ok((acc * h - 1.0).abs())
    }
}

/// Density of the transition kernel between times s and t at (x, y).
pub fn kernel_density(
    q: QParam,
    cov: &CovarianceSpec,
    s: f64,
    t: f64,
    x: f64,
    y: f64,
) -> Result<f64> {
    TransitionKernel::new(q, cov, s, t, 1)?.density(x, y)
}

fn check_interval(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v < lo - 1e-12 || v > hi + 1e-12 {
        return Err(QgError::Domain(format!(
            "{name} = {v} outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Free (q = 0) Brownian-motion transition density for 0 < s < t:
/// (t-s) / ((t-s)^2 - (t+s) x y + x^2 t + y^2 s) * sqrt(4t - y^2)/(2 pi).
pub fn free_bm_kernel(s: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    if !(0.0 < s && s < t) {
        return Err(QgError::Domain(format!(
            "free BM kernel needs 0 < s < t, got ({s}, {t})"
        )));
    }
    check_interval("x", x, -2.0 * s.sqrt(), 2.0 * s.sqrt())?;
    check_interval("y", y, -2.0 * t.sqrt(), 2.0 * t.sqrt())?;
    let num = t - s;
    let den = (t - s).powi(2) - (t + s) * x * y + x * x * t + y * y * s;
    Ok(num / den * (4.0 * t - y * y).max(0.0).sqrt() / (2.0 * std::f64::consts::PI))
}

/// Free Ornstein-Uhlenbeck transition density from time 0 to t (the process
/// is stationary, so a single time difference suffices):
/// (e^{2t}-1) / (4 sinh^2 t - 2 x y cosh t + x^2 + y^2) * sqrt(4-y^2)/(2 pi).
pub fn free_ou_kernel(t: f64, x: f64, y: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(QgError::Domain(format!("free OU kernel needs t > 0, got {t}")));
    }
    check_interval("x", x, -2.0, 2.0)?;
    check_interval("y", y, -2.0, 2.0)?;
    let num = (2.0 * t).exp() - 1.0;
    let den = 4.0 * t.sinh().powi(2) - 2.0 * x * y * t.cosh() + x * x + y * y;
    Ok(num / den * (4.0 - y * y).max(0.0).sqrt() / (2.0 * std::f64::consts::PI))
}

/// Free Brownian-bridge transition density for 0 < s < t < 1:
/// (1-s)/(1-t) * (t-s) / ((t-s)^2 - (s+t-2st) x y + t(1-t) x^2 + s(1-s) y^2)
/// * sqrt(4t(1-t) - y^2)/(2 pi).
pub fn free_bridge_kernel(s: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    if !(0.0 < s && s < t && t < 1.0) {
        return Err(QgError::Domain(format!(
            "free bridge kernel needs 0 < s < t < 1, got ({s}, {t})"
        )));
    }
    let xs = 2.0 * (s * (1.0 - s)).sqrt();
    let ys = 2.0 * (t * (1.0 - t)).sqrt();
    check_interval("x", x, -xs, xs)?;
    check_interval("y", y, -ys, ys)?;
    let num = (1.0 - s) / (1.0 - t) * (t - s);
    let den = (t - s).powi(2) - (s + t - 2.0 * s * t) * x * y
        + t * (1.0 - t) * x * x
        + s * (1.0 - s) * y * y;
    Ok(num / den * (4.0 * t * (1.0 - t) - y * y).max(0.0).sqrt()
        / (2.0 * std::f64::consts::PI))
}

/// Two-state transition kernel of a fermionic (q = -1) Gaussian process:
/// states +-sqrt(c(t,t)) with
/// P(x -> y) = (1 + c(s,t) x y / (c(s,s) c(t,t))) / 2.
#[derive(Debug, Clone)]
pub struct FermionicKernel {
    /// Source states [+sqrt(c(s,s)), -sqrt(c(s,s))].
    pub source_states: [f64; 2],
    /// Target states [+sqrt(c(t,t)), -sqrt(c(t,t))].
    pub target_states: [f64; 2],
    /// Row-stochastic matrix, rows indexed by source state.
    pub probs: [[f64; 2]; 2],
}

impl FermionicKernel {
    /// Chapman-Kolmogorov composition (exact 2x2 algebra).
    pub fn compose(&self, later: &FermionicKernel) -> Result<FermionicKernel> {
        for i in 0..2 {
            if (self.target_states[i] - later.source_states[i]).abs() > 1e-12 {
                return Err(QgError::Domain(
                    "fermionic composition needs matching intermediate states".into(),
                ));
            }
        }
        let mut probs = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                probs[i][j] = (0..2)
                    .map(|k| self.probs[i][k] * later.probs[k][j])
                    .sum();
            }
        }
        Ok(FermionicKernel {
            source_states: self.source_states,
            target_states: later.target_states,
            probs,
        })
    }
}

/// Builds the fermionic two-state kernel for a covariance at s <= t.
pub fn fermionic_kernel(cov: &CovarianceSpec, s: f64, t: f64) -> Result<FermionicKernel> {
    if s > t {
        return Err(QgError::Domain(format!(
            "fermionic kernel needs s <= t, got ({s}, {t})"
        )));
    }
    let css = cov.c(s, s)?;
    let ctt = cov.c(t, t)?;
    if css <= 0.0 || ctt <= 0.0 {
        return Err(QgError::Degenerate(
            "fermionic kernel needs positive marginal variances".into(),
        ));
    }
    let correlation = cov.c(s, t)? / (css * ctt).sqrt();
    if correlation.abs() > 1.0 + 1e-12 {
        return Err(QgError::Domain(format!(
            "invalid covariance for q = -1 at ({s}, {t}): correlation {correlation}"
        )));
    }
    let correlation = correlation.clamp(-1.0, 1.0);
    let same = 0.5 * (1.0 + correlation);
    let flip = 0.5 * (1.0 - correlation);
    Ok(FermionicKernel {
        source_states: [css.sqrt(), -css.sqrt()],
        target_states: [ctt.sqrt(), -ctt.sqrt()],
        probs: [[same, flip], [flip, same]],
    })
}

/// Sup over the target node grid of the composition defect
/// |integral k_{s,u}(x, dz) k_{u,t}(z, y) - k_{s,t}(x, y)|.
pub fn chapman_kolmogorov_residual(
    q: QParam,
    cov: &CovarianceSpec,
    s: f64,
    u: f64,
    t: f64,
    x: f64,
    quad_points: usize,
) -> Result<f64> {
    if !(s <= u && u <= t) {
        return Err(QgError::Domain(format!(
            "need s <= u <= t, got ({s}, {u}, {t})"
        )));
    }
    let k_su = TransitionKernel::new(q, cov, s, u, quad_points)?;
    let k_ut = TransitionKernel::new(q, cov, u, t, quad_points)?;
    let k_st = TransitionKernel::new(q, cov, s, t, quad_points)?;
    if k_ut.is_degenerate() || k_st.is_degenerate() {
        return Err(QgError::Degenerate(
            "Chapman-Kolmogorov density comparison needs |lambda| < 1 on (u,t) and (s,t)".into(),
        ));
    }
    let lam_t = k_st.lambdas().lambda_t;
    let mut worst: f64 = 0.0;
    for &node in &k_st.rule().nodes {
        let y = node * lam_t;
        // the (s,u) leg handles its own degenerate branch through apply
        let composite = k_su.apply(|z| k_ut.density(z, y).unwrap_or(0.0), x)?;
        let direct = k_st.density(x, y)?;
        worst = worst.max((composite - direct).abs());
    }
    Ok(worst)
}

/// Time-ordered moment E[h_1(X_{t_1}) ... h_n(X_{t_n})] by telescoping
/// through the transition operators,
/// E[(h_1 K_{t_1,t_2}(h_2 K_{t_2,t_3}(h_3 ...)))(X_{t_1})],
/// evaluated innermost-out on the scaled Gauss nodes of each marginal.
///
/// Equals the process moment when the covariance is Markov.
pub fn moment_via_kernels(
    q: QParam,
    cov: &CovarianceSpec,
    times: &[f64],
    hs: &[Polynomial],
    quad_points: usize,
) -> Result<f64> {
    if times.is_empty() || times.len() != hs.len() {
        return Err(QgError::Domain(
            "moment_via_kernels needs one polynomial per time".into(),
        ));
    }
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(QgError::Domain("times must be sorted".into()));
    }
    let rule = gauss_quadrature(q, quad_points)?;
    let m = rule.len();
    let n = times.len();
    let scales: Vec<f64> = times
        .iter()
        .map(|&t| {
            let c = cov.c(t, t)?;
            if c <= 0.0 {
                return Err(QgError::Degenerate(format!(
                    "vanishing marginal variance at time {t}"
                )));
            }
            Ok(c.sqrt())
        })
        .collect::<Result<_>>()?;
    // g_k evaluated at the lambda_k-scaled nodes
    let mut g: Vec<f64> = (0..m).map(|i| hs[n - 1].eval(scales[n - 1] * rule.nodes[i])).collect();
    for k in (0..n - 1).rev() {
        let lam = lambdas(cov, times[k], times[k + 1])?;
        let mut next = vec![0.0; m];
        if lam.is_degenerate() {
            // (K g)(lambda_k y_i) = g(+- lambda_{k+1} y_i); nodes are
            // symmetric, so the sign flip is the index reversal
            for i in 0..m {
                let j = if lam.lambda_st > 0.0 { i } else { m - 1 - i };
                next[i] = hs[k].eval(scales[k] * rule.nodes[i]) * g[j];
            }
        } else {
            for i in 0..m {
                let mut acc = 0.0;
                for j in 0..m {
                    let p = mehler_product(
                        q,
                        lam.lambda_st,
                        rule.nodes[i],
                        rule.nodes[j],
                        KERNEL_PRODUCT_TOL,
                    )?;
                    acc += rule.weights[j] * g[j] * p;
                }
                next[i] = hs[k].eval(scales[k] * rule.nodes[i]) * acc;
            }
        }
        g = next;
    }
    Ok((0..m).map(|i| rule.weights[i] * g[i]).sum())
}

/// Generator of the free (q = 0) Ornstein-Uhlenbeck semigroup on a
/// polynomial h at an interior point x:
/// (N h)(x) = x h'(x) - 2 integral (h(y) - h(x) - h'(x)(y-x)) / (y-x)^2 nu_0(dy).
///
/// The subtracted integrand is itself a polynomial in y (two synthetic
/// divisions by (y - x)), so the quadrature is exact and free of
/// cancellation near y = x.  Satisfies N H_n = n H_n.
pub fn free_ou_generator(h: &Polynomial, x: f64, quad_points: usize) -> Result<f64> {
    if x.abs() >= 2.0 {
        return Err(QgError::Domain(format!(
            "generator evaluated at x = {x}, needs |x| < 2"
        )));
    }
    let q0 = QParam::new(0.0)?;
    let degree = h.degree();
    let needed = degree / 2 + 1;
    let rule = gauss_quadrature(q0, quad_points.max(needed))?;
    let first = h.divided_difference(x);
    let second = first.divided_difference(x);
    let integral = rule.integrate(|y| second.eval(y));
    Ok(x * h.derivative().eval(x) - 2.0 * integral)
}

/// Ultracontractivity constant alpha(t, q): the supremum of the Mehler
/// kernel p_{e^{-t}} over the support square, located by three rounds of
/// grid refinement (factor-4 window shrink around the running maximizer).
pub fn alpha(t: f64, q: QParam, grid_density: usize) -> Result<f64> {
    if t <= 0.0 {
        return Err(QgError::Domain(format!("alpha needs t > 0, got {t}")));
    }
    let r = (-t).exp();
    let half = support_halfwidth(q);
    let n = grid_density.max(16);
    let mut window = (-half, half, -half, half);
    let mut best = f64::NEG_INFINITY;
    let mut best_at = (0.0, 0.0);
    for _round in 0..3 {
        let (x_lo, x_hi, y_lo, y_hi) = window;
        let dx = (x_hi - x_lo) / n as f64;
        let dy = (y_hi - y_lo) / n as f64;
        for i in 0..=n {
            let x = x_lo + i as f64 * dx;
            for j in 0..=n {
                let y = y_lo + j as f64 * dy;
                let p = mehler_product(q, r, x, y, KERNEL_PRODUCT_TOL)?;
                if p > best {
                    best = p;
                    best_at = (x, y);
                }
            }
        }
        let half_x = (x_hi - x_lo) / 8.0;
        let half_y = (y_hi - y_lo) / 8.0;
        window = (
            (best_at.0 - half_x).max(-half),
            (best_at.0 + half_x).min(half),
            (best_at.1 - half_y).max(-half),
            (best_at.1 + half_y).min(half),
        );
    }
    Ok(best)
}

/// Sup norm over the support of the q-OU semigroup applied to h at time t,
/// max_x |integral h(y) p_{e^{-t}}(x, y) nu_q(dy)|, with h normalized to
/// quadrature L2 norm 1.  Bounded by alpha(t, q)^{1/2}.
pub fn ou_semigroup_sup_norm(
    q: QParam,
    t: f64,
    h: &Polynomial,
    quad_points: usize,
    x_grid: usize,
) -> Result<f64> {
    let rule = gauss_quadrature(q, quad_points)?;
    let norm2 = rule.integrate(|y| h.eval(y).powi(2)).sqrt();
    if norm2 == 0.0 {
        return Ok(0.0);
    }
    let r = (-t).exp();
    let half = support_halfwidth(q);
    let mut sup: f64 = 0.0;
    for i in 0..=x_grid {
        let x = -half + 2.0 * half * i as f64 / x_grid as f64;
        let mut acc = 0.0;
        for (&node, &weight) in rule.nodes.iter().zip(&rule.weights) {
            acc += weight * h.eval(node) * mehler_product(q, r, x, node, KERNEL_PRODUCT_TOL)?;
        }
        sup = sup.max((acc / norm2).abs());
    }
    Ok(sup)
}
