//! q-Hermite polynomials, their orthogonality measure `nu_q`, Gauss-type
//! quadrature built from the three-term recurrence, and the Mehler kernel
//! in series and product form.
//!
//! The polynomials are determined by H_0 = 1, H_1 = x and
//! x H_n = H_{n+1} + [n]_q H_{n-1}.  They are orthogonal with respect to the
//! probability measure nu_q supported on [-2/sqrt(1-q), 2/sqrt(1-q)], with
//! integral H_n H_m d(nu_q) = delta_{nm} [n]_q!.

use crate::qcore::{pochhammer, q_factorial, q_int, PochhammerOrder, QParam};
use crate::{QgError, Result};
use nalgebra::DMatrix;

/// Relative cutoff for infinite-product truncation in density/kernel code.
const PRODUCT_TOL: f64 = 1e-16;

/// Half-width of the support of nu_q.
pub fn support_halfwidth(q: QParam) -> f64 {
    2.0 / (1.0 - q.get()).sqrt()
}

/// Angle theta in [0, pi] with x = 2 cos(theta) / sqrt(1-q).
///
/// The arccos argument is clamped to [-1, 1] to absorb endpoint rounding.
pub fn theta_of(q: QParam, x: f64) -> f64 {
    let u = x * (1.0 - q.get()).sqrt() / 2.0;
    u.clamp(-1.0, 1.0).acos()
}

/// Evaluates H_n^{(q)}(x) by the forward recurrence.
pub fn hermite(n: usize, q: QParam, x: f64) -> f64 {
    let mut prev = 1.0; // H_0
    if n == 0 {
        return prev;
    }
    let mut cur = x; // H_1
    for k in 1..n {
        let next = x * cur - q_int(k, q) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Monomial coefficients of H_n^{(q)}, lowest degree first.
pub fn hermite_coeffs(n: usize, q: QParam) -> Vec<f64> {
    let mut prev = vec![1.0];
    if n == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    for k in 1..n {
        // H_{k+1} = x H_k - [k]_q H_{k-1}
        let mut next = vec![0.0; k + 2];
        for (d, &c) in cur.iter().enumerate() {
            next[d + 1] += c;
        }
        let qi = q_int(k, q);
        for (d, &c) in prev.iter().enumerate() {
            next[d] -= qi * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// A real polynomial in monomial coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    /// The monomial x^k.
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        Polynomial { coeffs }
    }

    /// The q-Hermite polynomial H_n^{(q)}.
    pub fn hermite(n: usize, q: QParam) -> Self {
        Polynomial {
            coeffs: hermite_coeffs(n, q),
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial { coeffs: vec![0.0] };
        }
        Polynomial {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Polynomial {
        Polynomial {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Quotient of (p(y) - p(x)) / (y - x) as a polynomial in y
    /// (synthetic division; exact, no cancellation at y near x).
    pub fn divided_difference(&self, x: f64) -> Polynomial {
        let n = self.coeffs.len();
        if n <= 1 {
            return Polynomial { coeffs: vec![0.0] };
        }
        let mut out = vec![0.0; n - 1];
        let mut carry = self.coeffs[n - 1];
        for k in (0..n - 1).rev() {
            out[k] = carry;
            carry = self.coeffs[k] + x * carry;
        }
        Polynomial { coeffs: out }
    }
}

/// Lebesgue density of nu_q at x inside the closed support.
///
/// In the substitution x = 2 cos(theta)/sqrt(1-q) the density reads
/// (1/pi) sqrt(1-q) sin(theta) prod_{n>=1} (1-q^n)(1-2q^n cos(2 theta)+q^{2n});
/// the product is truncated once |q|^n falls below 1e-16.  Returns 0 at the
/// endpoints and an error outside the support.
pub fn nu_density(q: QParam, x: f64) -> Result<f64> {
    let half = support_halfwidth(q);
    if x.abs() > half * (1.0 + 1e-12) {
        return Err(QgError::Domain(format!(
            "x = {x} outside the support [-{half}, {half}] of nu_q"
        )));
    }
    Ok(nu_density_clamped(q, x))
}

/// Density extended by 0 outside the support (quadrature convenience).
pub fn nu_density_clamped(q: QParam, x: f64) -> f64 {
    let half = support_halfwidth(q);
    if x.abs() > half {
        return 0.0;
    }
    let theta = theta_of(q, x);
    nu_density_theta(q, theta)
}

/// Density value expressed through theta; used by the theta-substituted
/// integrators where x = 2 cos(theta)/sqrt(1-q).
fn nu_density_theta(q: QParam, theta: f64) -> f64 {
    let qv = q.get();
    let sin_t = theta.sin();
    let cos2t = (2.0 * theta).cos();
    let mut prod = 1.0;
    let mut qn = qv;
    while qn.abs() >= PRODUCT_TOL {
        prod *= (1.0 - qn) * (1.0 - 2.0 * qn * cos2t + qn * qn);
        qn *= qv;
    }
    (1.0 - qv).sqrt() / std::f64::consts::PI * sin_t * prod
}

/// Integrates f against nu_q by the theta substitution:
/// integral f d(nu_q) = (2/pi) int_0^pi f(x(theta)) sin^2(theta) P(theta) dtheta.
///
/// The integrand extends to a smooth periodic function, so the uniform
/// trapezoid rule converges spectrally.  This route is independent of the
/// Gauss rule below and serves as its cross-check.
pub fn nu_integral_theta<F: Fn(f64) -> f64>(q: QParam, f: F, n_points: usize) -> f64 {
    let qv = q.get();
    let n = n_points.max(16);
    let h = std::f64::consts::PI / n as f64;
    let mut acc = 0.0;
    // sin^2 vanishes at both endpoints, so the trapezoid rule reduces to a sum
    // over interior points.
    for j in 1..n {
        let theta = j as f64 * h;
        let x = 2.0 * theta.cos() / (1.0 - qv).sqrt();
        let sin_t = theta.sin();
        let cos2t = (2.0 * theta).cos();
        let mut prod = 1.0;
        let mut qn = qv;
        while qn.abs() >= PRODUCT_TOL {
            prod *= (1.0 - qn) * (1.0 - 2.0 * qn * cos2t + qn * qn);
            qn *= qv;
        }
        acc += f(x) * sin_t * sin_t * prod;
    }
    acc * h * 2.0 / std::f64::consts::PI
}

/// Gauss rule for nu_q: nodes and weights integrating polynomials of degree
/// up to 2m - 1 exactly.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub q: QParam,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.nodes.len() - 1
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Orthonormal polynomial p_m(x) = H_m(x)/sqrt([m]_q!) and its derivative,
/// by the normalized recurrence b_{k+1} p_{k+1} = x p_k - b_k p_{k-1} with
/// b_k = sqrt([k]_q).
fn orthonormal_with_derivative(m: usize, q: QParam, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut d_prev = 0.0;
    if m == 0 {
        return (p_prev, d_prev);
    }
    let mut b_cur = q_int(1, q).sqrt();
    let mut p = x / b_cur;
    let mut d = 1.0 / b_cur;
    for k in 1..m {
        let b_next = q_int(k + 1, q).sqrt();
        let p_next = (x * p - b_cur * p_prev) / b_next;
        let d_next = (p + x * d - b_cur * d_prev) / b_next;
        p_prev = p;
        d_prev = d;
        p = p_next;
        d = d_next;
        b_cur = b_next;
    }
    (p, d)
}

/// Builds the m-point Gauss rule for nu_q from the Jacobi matrix of the
/// three-term recurrence (Golub-Welsch): zero diagonal, off-diagonal entries
/// sqrt([n]_q).  Eigenvalue nodes are polished by Newton steps on the
/// orthonormal polynomial p_m (the raw eigensolver accuracy is the limiting
/// factor for high-degree orthogonality residuals), and weights come from the
/// Christoffel formula w_i = 1 / sum_{k<m} p_k(x_i)^2.
pub fn gauss_quadrature(q: QParam, m: usize) -> Result<QuadratureRule> {
    if m == 0 {
        return Err(QgError::Domain("quadrature needs at least 1 point".into()));
    }
    let mut jacobi = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let b = q_int(k, q).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let mut weights = Vec::with_capacity(m);
    for node in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, d) = orthonormal_with_derivative(m, q, *node);
            if d != 0.0 {
                *node -= p / d;
            }
        }
        let mut christoffel = 1.0;
        let mut p_prev = 1.0;
        let mut b_cur = q_int(1, q).sqrt();
        let mut p = *node / b_cur;
        for k in 1..m {
            christoffel += p * p;
            let b_next = q_int(k + 1, q).sqrt();
            let p_next = (*node * p - b_cur * p_prev) / b_next;
            p_prev = p;
            p = p_next;
            b_cur = b_next;
        }
        weights.push(1.0 / christoffel);
    }
    Ok(QuadratureRule { q, nodes, weights })
}

/// |integral H_n H_m d(nu_q) - delta_{nm} [n]_q!| computed with `rule`.
pub fn orthogonality_residual(n: usize, m: usize, q: QParam, rule: &QuadratureRule) -> Result<f64> {
    if n + m > rule.exact_degree() {
        return Err(QgError::InsufficientQuadrature {
            points: rule.len(),
            degree: n + m,
        });
    }
    let integral = rule.integrate(|x| hermite(n, q, x) * hermite(m, q, x));
    let expected = if n == m { q_factorial(n, q) } else { 0.0 };
    Ok((integral - expected).abs())
}

/// Mehler kernel by its Hermite series, summing the first `k_terms` terms
/// of sum_n r^n / [n]_q! H_n(x) H_n(y).
pub fn mehler_series(q: QParam, r: f64, x: f64, y: f64, k_terms: usize) -> Result<f64> {
    if r.abs() >= 1.0 {
        return Err(QgError::Domain(format!("Mehler kernel needs |r| < 1, got {r}")));
    }
    let mut sum = 0.0;
    let mut hx_prev = 1.0;
    let mut hy_prev = 1.0;
    let mut hx = x;
    let mut hy = y;
    let mut rn = 1.0;
    let mut fact = 1.0;
    for n in 0..k_terms {
        let (hxn, hyn) = if n == 0 { (1.0, 1.0) } else { (hx, hy) };
        let scale = rn / fact;
        if scale == 0.0 {
            // every remaining term underflows; stopping avoids 0 * inf once
            // the raw Hermite values overflow
            break;
        }
        sum += scale * hxn * hyn;
        // advance recurrences to degree n+1 state
        if n >= 1 {
            let qi = q_int(n, q);
            let hx_next = x * hx - qi * hx_prev;
            let hy_next = y * hy - qi * hy_prev;
            hx_prev = hx;
            hy_prev = hy;
            hx = hx_next;
            hy = hy_next;
        }
        rn *= r;
        fact *= q_int(n + 1, q);
    }
    Ok(sum)
}

/// Mehler kernel by its infinite-product form,
/// (r^2; q)_inf / (prod_j (1 - 2 r q^j cos(phi+psi) + r^2 q^{2j})
///                 prod_j (1 - 2 r q^j cos(phi-psi) + r^2 q^{2j})),
/// with x = 2 cos(phi)/sqrt(1-q), y = 2 cos(psi)/sqrt(1-q).  Each factor is
/// the squared modulus of (1 - r q^j e^{i(phi+-psi)}); the products are
/// truncated once |r q^j| < tol.  Strictly positive for |r| < 1.
pub fn mehler_product(q: QParam, r: f64, x: f64, y: f64, tol: f64) -> Result<f64> {
    if r.abs() >= 1.0 {
        return Err(QgError::Domain(format!("Mehler kernel needs |r| < 1, got {r}")));
    }
    let qv = q.get();
    let phi = theta_of(q, x);
    let psi = theta_of(q, y);
    let cp = (phi + psi).cos();
    let cm = (phi - psi).cos();
    let numerator = pochhammer(r * r, q, PochhammerOrder::Infinite, tol);
    let mut denominator = 1.0;
    let mut rq = r;
    while rq.abs() >= tol {
        denominator *= (1.0 - 2.0 * rq * cp + rq * rq) * (1.0 - 2.0 * rq * cm + rq * rq);
        rq *= qv;
    }
    Ok(numerator / denominator)
}

/// Paired evaluation of the Mehler kernel by both formulas.
#[derive(Debug, Clone)]
pub struct MehlerEval {
    pub r: f64,
    pub series: f64,
    pub product: f64,
    /// Series terms used before the adaptive cutoff.
    pub terms: usize,
    /// Sum of |term| over the series: the cancellation scale.  At antipodal
    /// points near the support corners (large |q|) the alternating series
    /// cancels through many orders of magnitude, and eps times this sum is
    /// the smallest absolute difference f64 summation can resolve.
    pub term_magnitude_sum: f64,
}

impl MehlerEval {
    /// |series - product| scaled by max(1, |product|): absolute agreement for
    /// kernel values of order one, relative agreement where the kernel blows
    /// up (near the support corners at large |q| the value exceeds 1e7 and an
    /// absolute f64 comparison would be meaningless).
    pub fn discrepancy(&self) -> f64 {
        (self.series - self.product).abs() / self.product.abs().max(1.0)
    }

    /// Agreement check with the summation noise floor:
    /// |series - product| <= tol * max(1, |product|) + 16 eps * sum|term|.
    pub fn within(&self, tol: f64) -> bool {
        (self.series - self.product).abs()
            <= tol * self.product.abs().max(1.0)
                + 16.0 * f64::EPSILON * self.term_magnitude_sum
    }
}

/// Evaluates the kernel by both routes; the series is truncated adaptively
/// once three consecutive terms fall below tol relative to the running sum
/// (the tail decays geometrically in r).
pub fn mehler_eval(q: QParam, r: f64, x: f64, y: f64, tol: f64) -> Result<MehlerEval> {
    if r.abs() >= 1.0 {
        return Err(QgError::Domain(format!("Mehler kernel needs |r| < 1, got {r}")));
    }
    let mut sum = 0.0;
    let mut hx_prev = 1.0;
    let mut hy_prev = 1.0;
    let mut hx = x;
    let mut hy = y;
    let mut rn = 1.0;
    let mut fact = 1.0;
    let mut small_streak = 0;
    let mut terms = 0;
    let mut magnitude = 0.0;
    let cap = 4000;
    for n in 0..cap {
        let (hxn, hyn) = if n == 0 { (1.0, 1.0) } else { (hx, hy) };
        let scale = rn / fact;
        if scale == 0.0 {
            break;
        }
        let term = scale * hxn * hyn;
        sum += term;
        magnitude += term.abs();
        terms = n + 1;
        if term.abs() <= tol * sum.abs().max(1.0) {
            small_streak += 1;
            if small_streak >= 3 && n >= 4 {
                break;
            }
        } else {
            small_streak = 0;
        }
        if n >= 1 {
            let qi = q_int(n, q);
            let hx_next = x * hx - qi * hx_prev;
            let hy_next = y * hy - qi * hy_prev;
            hx_prev = hx;
            hy_prev = hy;
            hx = hx_next;
            hy = hy_next;
        }
        rn *= r;
        fact *= q_int(n + 1, q);
    }
    let product = mehler_product(q, r, x, y, PRODUCT_TOL)?;
    Ok(MehlerEval {
        r,
        series: sum,
        product,
        terms,
        term_magnitude_sum: magnitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn qp(q: f64) -> QParam {
        QParam::new(q).unwrap()
    }

    const Q_GRID: [f64; 5] = [-0.9, -0.5, 0.0, 0.5, 0.9];

    #[test]
    fn low_degree_hermite() {
        for &q in &Q_GRID {
            for &x in &[-1.3, 0.0, 0.4, 2.1] {
                assert_relative_eq!(hermite(2, qp(q), x), x * x - 1.0, max_relative = 1e-14);
                assert_abs_diff_eq!(
                    hermite(3, qp(q), x),
                    x.powi(3) - (2.0 + q) * x,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn hermite_parity() {
        for &q in &Q_GRID {
            for n in 0..=8 {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                for &x in &[0.3, 0.9, 1.7] {
                    assert_abs_diff_eq!(
                        hermite(n, qp(q), -x),
                        sign * hermite(n, qp(q), x),
                        epsilon = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn coeffs_match_recurrence_eval() {
        for &q in &Q_GRID {
            for n in 0..=9 {
                let p = Polynomial::hermite(n, qp(q));
                for &x in &[-1.1, 0.2, 1.9] {
                    assert_abs_diff_eq!(p.eval(x), hermite(n, qp(q), x), epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn divided_difference_is_exact() {
        let p = Polynomial::hermite(5, qp(0.4));
        let x = 0.731;
        let g = p.divided_difference(x);
        for &y in &[-1.8, -0.2, 0.7309999, 1.4] {
            let direct = (p.eval(y) - p.eval(x)) / (y - x);
            assert_relative_eq!(g.eval(y), direct, max_relative = 1e-6);
        }
        // First divided difference at y = x equals the derivative.
        assert_relative_eq!(g.eval(x), p.derivative().eval(x), max_relative = 1e-12);
    }

    #[test]
    fn semicircle_density_at_q_zero() {
        let q = qp(0.0);
        for &x in &[-1.9f64, -0.7, 0.0, 1.2, 1.999] {
            let expected = (4.0 - x * x).sqrt() / (2.0 * std::f64::consts::PI);
            assert_abs_diff_eq!(nu_density(q, x).unwrap(), expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn density_vanishes_at_endpoints_and_rejects_outside() {
        for &q in &Q_GRID {
            let half = support_halfwidth(qp(q));
            assert_abs_diff_eq!(nu_density(qp(q), half).unwrap(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(nu_density(qp(q), -half).unwrap(), 0.0, epsilon = 1e-12);
            assert!(nu_density(qp(q), half * 1.01).is_err());
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for &q in &Q_GRID {
            let total = nu_integral_theta(qp(q), |_| 1.0, 2048);
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_point_rule_is_dirac_at_zero() {
        let rule = gauss_quadrature(qp(0.3), 1).unwrap();
        assert_abs_diff_eq!(rule.nodes[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rule.weights[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rule_nodes_inside_support_weights_positive_sum_one() {
        for &q in &Q_GRID {
            let rule = gauss_quadrature(qp(q), 40).unwrap();
            let half = support_halfwidth(qp(q));
            for &x in &rule.nodes {
                assert!(x.abs() < half, "node {x} outside open support at q={q}");
            }
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            let total: f64 = rule.weights.iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            // symmetry of nodes about 0
            let m = rule.len();
            for i in 0..m {
                assert_abs_diff_eq!(rule.nodes[i], -rule.nodes[m - 1 - i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn fourth_moment_is_two_plus_q() {
        for &q in &Q_GRID {
            let rule = gauss_quadrature(qp(q), 24).unwrap();
            let m4 = rule.integrate(|x| x.powi(4));
            assert_abs_diff_eq!(m4, 2.0 + q, epsilon = 1e-12);
            // independent route through the density
            let m4_theta = nu_integral_theta(qp(q), |x| x.powi(4), 2048);
            assert_abs_diff_eq!(m4_theta, 2.0 + q, epsilon = 1e-9);
        }
    }

    #[test]
    fn rule_matches_density_moments() {
        for &q in &Q_GRID {
            let rule = gauss_quadrature(qp(q), 32).unwrap();
            for n in 0..=10 {
                let via_rule = rule.integrate(|x| x.powi(n));
                let via_theta = nu_integral_theta(qp(q), |x| x.powi(n), 4096);
                assert_abs_diff_eq!(via_rule, via_theta, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn orthogonality_against_q_factorial() {
        for &q in &Q_GRID {
            let rule = gauss_quadrature(qp(q), 32).unwrap();
            for n in 0..=10usize {
                for m in 0..=10usize {
                    let res = orthogonality_residual(n, m, qp(q), &rule).unwrap();
                    assert!(res <= 1e-8, "residual {res} at n={n}, m={m}, q={q}");
                }
            }
        }
        let rule = gauss_quadrature(qp(0.5), 32).unwrap();
        let diag = rule.integrate(|x| hermite(3, qp(0.5), x).powi(2));
        assert_abs_diff_eq!(diag, 2.625, epsilon = 1e-10);
    }

    #[test]
    fn orthogonality_rejects_insufficient_rule() {
        let rule = gauss_quadrature(qp(0.2), 3).unwrap();
        assert!(orthogonality_residual(3, 3, qp(0.2), &rule).is_err());
    }

    #[test]
    fn mehler_series_edge_cases() {
        assert_relative_eq!(mehler_series(qp(0.4), 0.0, 1.0, -0.5, 10).unwrap(), 1.0);
        assert!(mehler_series(qp(0.4), 1.0, 0.0, 0.0, 10).is_err());
        // at x = y = 0 odd terms vanish: partial sums with K=1 and K=2 agree
        let one = mehler_series(qp(0.3), 0.6, 0.0, 0.0, 1).unwrap();
        let two = mehler_series(qp(0.3), 0.6, 0.0, 0.0, 2).unwrap();
        assert_relative_eq!(one, two);
    }

    #[test]
    fn mehler_product_closed_form_at_q_zero() {
        let q = qp(0.0);
        for &r in &[-0.7f64, -0.2, 0.3, 0.8] {
            for &x in &[-1.5f64, 0.0, 0.9] {
                for &y in &[-1.9, 0.4, 1.8] {
                    let expected = (1.0 - r * r)
                        / ((1.0 - r * r).powi(2) - r * (1.0 + r * r) * x * y
                            + r * r * (x * x + y * y));
                    let got = mehler_product(q, r, x, y, 1e-300).unwrap();
                    assert_relative_eq!(got, expected, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn mehler_series_matches_product() {
        for &q in &Q_GRID {
            for &r in &[-0.5, 0.2, 0.6] {
                let half = support_halfwidth(qp(q));
                for i in 0..5 {
                    for j in 0..5 {
                        let x = -0.9 * half + 1.8 * half * i as f64 / 4.0;
                        let y = -0.9 * half + 1.8 * half * j as f64 / 4.0;
                        let eval = mehler_eval(qp(q), r, x, y, 1e-14).unwrap();
                        assert!(
                            eval.within(1e-10),
                            "q={q} r={r} x={x} y={y}: {}",
                            eval.discrepancy()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn mehler_reproduces_hermite_eigenfunctions() {
        // integral H_n(y) p_r(x, y) d(nu_q)(y) = r^n H_n(x)
        for &q in &[-0.8, 0.0, 0.6] {
            let rule = gauss_quadrature(qp(q), 80).unwrap();
            let half = support_halfwidth(qp(q));
            for &r in &[0.35, -0.6] {
                for n in 0..=6usize {
                    for &x in &[-0.8 * half, 0.1 * half, 0.7 * half] {
                        let lhs = rule.integrate(|y| {
                            hermite(n, qp(q), y)
                                * mehler_product(qp(q), r, x, y, PRODUCT_TOL).unwrap()
                        });
                        let rhs = r.powi(n as i32) * hermite(n, qp(q), x);
                        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-8);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn mehler_product_symmetric_and_positive(
            q in -0.9f64..0.9,
            r in -0.9f64..0.9,
            a in -0.99f64..0.99,
            b in -0.99f64..0.99,
        ) {
            let qq = qp(q);
            let half = support_halfwidth(qq);
            let (x, y) = (a * half, b * half);
            let pxy = mehler_product(qq, r, x, y, 1e-16).unwrap();
            let pyx = mehler_product(qq, r, y, x, 1e-16).unwrap();
            prop_assert!(pxy > 0.0);
            prop_assert!((pxy - pyx).abs() <= 1e-11 * pxy.abs().max(1.0));
        }
    }
}
