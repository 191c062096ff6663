//! q-combinatorics primitives: q-integers, q-factorials, q-binomial
//! coefficients, q-Pochhammer symbols, and permutation inversion counts.
//!
//! Everything is evaluated in floating point; all downstream consumers are
//! numeric.

use crate::{QgError, Result};

/// Cap for permutation enumeration (8! = 40320 keeps exhaustive sums cheap).
pub const PERMUTATION_CAP: usize = 8;

/// Deformation parameter q, restricted to the open interval (-1, 1).
///
/// The fermionic endpoint q = -1 is handled by closed forms in
/// [`crate::kernels`] and never passes through this type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QParam(f64);

impl QParam {
    pub fn new(q: f64) -> Result<Self> {
        if q.is_finite() && -1.0 < q && q < 1.0 {
            Ok(QParam(q))
        } else {
            Err(QgError::Domain(format!("q must lie in (-1, 1), got {q}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for QParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// q-integer [n]_q = 1 + q + ... + q^(n-1), with [0]_q = 0.
pub fn q_int(n: usize, q: QParam) -> f64 {
    let q = q.get();
    if q == 0.0 {
        return if n == 0 { 0.0 } else { 1.0 };
    }
    // Summed directly: n stays small (truncation degrees), and the sum form
    // is exact at q = 0 and has no cancellation for q in (-1, 1).
    let mut acc = 0.0;
    let mut pow = 1.0;
    for _ in 0..n {
        acc += pow;
        pow *= q;
    }
    acc
}

/// q-factorial [n]_q! = [1]_q [2]_q ... [n]_q, with [0]_q! = 1.
pub fn q_factorial(n: usize, q: QParam) -> f64 {
    (1..=n).map(|k| q_int(k, q)).product()
}

/// Gaussian binomial coefficient [n choose k]_q.
pub fn q_binomial(n: usize, k: usize, q: QParam) -> Result<f64> {
    if k > n {
        return Err(QgError::Domain(format!(
            "q_binomial requires k <= n, got n={n}, k={k}"
        )));
    }
    // Product form prod_{i=1..n-k} (1-q^(k+i))/(1-q^i); each factor is
    // [k+i]_q/[i]_q, evaluated via q-integers to stay exact at q = 0.
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 1..=k {
        acc *= q_int(n - k + i, q) / q_int(i, q);
    }
    Ok(acc)
}

/// Order of a q-Pochhammer product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PochhammerOrder {
    Finite(usize),
    Infinite,
}

/// q-Pochhammer symbol (a; q)_n = prod_{j=0..n-1} (1 - a q^j).
///
/// The infinite product is truncated once |a q^j| < tol.  The discarded tail
/// satisfies |log prod_{j>=J} (1 - a q^j)| <= |a q^J| / (1 - |q|), so the
/// relative truncation error is below tol / (1 - |q|).
pub fn pochhammer(a: f64, q: QParam, n: PochhammerOrder, tol: f64) -> f64 {
    let qv = q.get();
    match n {
        PochhammerOrder::Finite(n) => {
            let mut acc = 1.0;
            let mut aq = a;
            for _ in 0..n {
                acc *= 1.0 - aq;
                aq *= qv;
            }
            acc
        }
        PochhammerOrder::Infinite => {
            let mut acc = 1.0;
            let mut aq = a;
            while aq.abs() >= tol {
                acc *= 1.0 - aq;
                aq *= qv;
            }
            acc
        }
    }
}

/// A permutation of {1, ..., n} in one-line notation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from its one-line notation (images of 1..n).
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &v in &images {
            if v == 0 || v > n || seen[v - 1] {
                return Err(QgError::Domain(format!(
                    "not a permutation of 1..{n}: {images:?}"
                )));
            }
            seen[v - 1] = true;
        }
        Ok(Permutation { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Image of i (1-based).
    #[inline]
    pub fn image(&self, i: usize) -> usize {
        self.images[i - 1]
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }
}

/// Number of inversions #{(i, j) : i < j, p(i) > p(j)}.
pub fn inversions(p: &Permutation) -> usize {
    let im = p.images();
    let n = im.len();
    let mut count = 0;
    for i in 0..n {
        for j in i + 1..n {
            if im[i] > im[j] {
                count += 1;
            }
        }
    }
    count
}

/// Enumerates S_n in lexicographic order of one-line notation.
///
/// Rejects n above [`PERMUTATION_CAP`] (factorial blowup).
pub fn permutations(n: usize) -> Result<impl Iterator<Item = Permutation>> {
    if n > PERMUTATION_CAP {
        return Err(QgError::Domain(format!(
            "permutation enumeration capped at n <= {PERMUTATION_CAP}, got {n}"
        )));
    }
    Ok(PermutationIter::new(n))
}

struct PermutationIter {
    current: Option<Vec<usize>>,
}

impl PermutationIter {
    fn new(n: usize) -> Self {
        PermutationIter {
            current: Some((1..=n).collect()),
        }
    }
}

impl Iterator for PermutationIter {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        let cur = self.current.take()?;
        let out = Permutation {
            images: cur.clone(),
        };
        // Standard next-lexicographic-permutation step.
        let mut next = cur;
        let n = next.len();
        if n >= 2 {
            let mut i = n - 1;
            while i > 0 && next[i - 1] >= next[i] {
                i -= 1;
            }
            if i > 0 {
                let mut j = n - 1;
                while next[j] <= next[i - 1] {
                    j -= 1;
                }
                next.swap(i - 1, j);
                next[i..].reverse();
                self.current = Some(next);
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn qp(q: f64) -> QParam {
        QParam::new(q).unwrap()
    }

    const Q_GRID: [f64; 5] = [-0.9, -0.5, 0.0, 0.5, 0.9];

    #[test]
    fn q_int_values() {
        assert_eq!(q_int(0, qp(0.7)), 0.0);
        assert_relative_eq!(q_int(3, qp(0.5)), 1.75);
        assert_relative_eq!(q_int(4, qp(0.0)), 1.0);
    }

    #[test]
    fn q_factorial_values() {
        assert_eq!(q_factorial(0, qp(-0.3)), 1.0);
        assert_relative_eq!(q_factorial(3, qp(0.5)), 2.625);
        for n in 0..6 {
            assert_relative_eq!(q_factorial(n, qp(0.0)), 1.0);
        }
    }

    #[test]
    fn q_binomial_values() {
        for &q in &Q_GRID {
            assert_relative_eq!(q_binomial(2, 1, qp(q)).unwrap(), 1.0 + q);
            assert_relative_eq!(q_binomial(5, 0, qp(q)).unwrap(), 1.0);
        }
        // Gaussian binomial [4 choose 2]_q = 1 + q + 2q^2 + q^3 + q^4.
        let gauss = |q: f64| 1.0 + q + 2.0 * q * q + q.powi(3) + q.powi(4);
        assert_relative_eq!(q_binomial(4, 2, qp(0.5)).unwrap(), 2.1875);
        for &q in &Q_GRID {
            assert_relative_eq!(
                q_binomial(4, 2, qp(q)).unwrap(),
                gauss(q),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn q_binomial_rejects_k_above_n() {
        assert!(q_binomial(3, 4, qp(0.5)).is_err());
    }

    #[test]
    fn pochhammer_empty_and_zero() {
        assert_eq!(
            pochhammer(0.7, qp(0.5), PochhammerOrder::Finite(0), 1e-14),
            1.0
        );
        assert_eq!(
            pochhammer(0.0, qp(0.5), PochhammerOrder::Infinite, 1e-14),
            1.0
        );
    }

    #[test]
    fn pochhammer_infinite_matches_long_product() {
        // Brute-force product to j = 200 as the independent oracle.
        let (a, q) = (0.25f64, 0.5f64);
        let mut oracle = 1.0;
        for j in 0..200 {
            oracle *= 1.0 - a * q.powi(j);
        }
        let val = pochhammer(a, qp(q), PochhammerOrder::Infinite, 1e-14);
        assert_relative_eq!(val, oracle, max_relative = 1e-13);
    }

    #[test]
    fn inversion_counts() {
        let id = Permutation::new(vec![1, 2, 3, 4, 5]).unwrap();
        assert_eq!(inversions(&id), 0);
        let rev = Permutation::new(vec![5, 4, 3, 2, 1]).unwrap();
        assert_eq!(inversions(&rev), 10);
        let p = Permutation::new(vec![2, 3, 1]).unwrap();
        assert_eq!(inversions(&p), 2);
    }

    #[test]
    fn permutation_rejects_non_bijection() {
        assert!(Permutation::new(vec![1, 1, 3]).is_err());
        assert!(Permutation::new(vec![0, 1]).is_err());
        assert!(Permutation::new(vec![2, 4, 3]).is_err());
    }

    #[test]
    fn enumeration_counts_and_cap() {
        assert_eq!(permutations(0).unwrap().count(), 1);
        assert_eq!(permutations(3).unwrap().count(), 6);
        assert_eq!(permutations(5).unwrap().count(), 120);
        assert!(permutations(PERMUTATION_CAP + 1).is_err());
    }

    #[test]
    fn inversion_generating_function_is_q_factorial() {
        // sum over S_n of q^inversions = [n]_q!
        for n in 0..=6 {
            for &q in &Q_GRID {
                let sum: f64 = permutations(n)
                    .unwrap()
                    .map(|p| q.powi(inversions(&p) as i32))
                    .sum();
                assert_relative_eq!(sum, q_factorial(n, qp(q)), max_relative = 1e-12);
            }
        }
        assert_relative_eq!(
            permutations(3)
                .unwrap()
                .map(|p| 0.5f64.powi(inversions(&p) as i32))
                .sum::<f64>(),
            2.625
        );
    }

    /// x = diag(q^j) and y = subdiagonal shift satisfy xy = q yx exactly,
    /// so they give an independent matrix oracle for the q-binomial theorem
    /// (x+y)^n = sum_k [n choose k]_q y^k x^(n-k).
    #[test]
    fn q_binomial_theorem_on_q_commuting_matrices() {
        use nalgebra::DMatrix;
        for &q in &Q_GRID {
            for n in 1..=5usize {
                let m = n + 1;
                let x = DMatrix::<f64>::from_fn(m, m, |i, j| {
                    if i == j {
                        q.powi(i as i32)
                    } else {
                        0.0
                    }
                });
                let y = DMatrix::<f64>::from_fn(m, m, |i, j| {
                    if i == j + 1 {
                        1.0
                    } else {
                        0.0
                    }
                });
                let mut lhs = DMatrix::<f64>::identity(m, m);
                for _ in 0..n {
                    lhs = &lhs * (&x + &y);
                }
                let mut rhs = DMatrix::<f64>::zeros(m, m);
                for k in 0..=n {
                    let coeff = q_binomial(n, k, qp(q)).unwrap();
                    let mut term = DMatrix::<f64>::identity(m, m);
                    for _ in 0..k {
                        term = &term * &y;
                    }
                    for _ in 0..(n - k) {
                        term = &term * &x;
                    }
                    rhs += coeff * term;
                }
                assert!((lhs - rhs).norm() < 1e-12, "q={q}, n={n}");
            }
        }
    }

    proptest! {
        /// Pascal-type identity [n k]_q + q^(k+1) [n k+1]_q = [n+1 k+1]_q.
        #[test]
        fn pascal_identity(n in 0usize..10, k in 0usize..10, q in -0.95f64..0.95) {
            prop_assume!(k < n);
            let qq = qp(q);
            let lhs = q_binomial(n, k, qq).unwrap()
                + q.powi(k as i32 + 1) * q_binomial(n, k + 1, qq).unwrap();
            let rhs = q_binomial(n + 1, k + 1, qq).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }

        /// Symmetry [n k]_q = [n n-k]_q.
        #[test]
        fn binomial_symmetry(n in 0usize..12, k in 0usize..12, q in -0.95f64..0.95) {
            prop_assume!(k <= n);
            let qq = qp(q);
            let a = q_binomial(n, k, qq).unwrap();
            let b = q_binomial(n, n - k, qq).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn finite_pochhammer_recursion(a in -2.0f64..2.0, q in -0.95f64..0.95, n in 0usize..20) {
            let qq = qp(q);
            let pn = pochhammer(a, qq, PochhammerOrder::Finite(n), 1e-14);
            let pn1 = pochhammer(a, qq, PochhammerOrder::Finite(n + 1), 1e-14);
            let factor = 1.0 - a * q.powi(n as i32);
            prop_assert!((pn1 - pn * factor).abs() <= 1e-12 * pn1.abs().max(1.0));
        }
    }
}
