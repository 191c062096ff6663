//! Wick products Psi(xi): the unique operators with Psi(xi) Omega = xi.
//!
//! Three equivalent constructions are provided: the normal-ordered splitting
//! sum, the deletion recursion, and (for tensor powers of a single vector)
//! the q-binomial form.  For unit vectors the tensor-power Wick product is
//! the q-Hermite polynomial of the field operator, which
//! [`hermite_identity_residual`] checks at operator level.

use crate::fock::{annihilation, creation, omega, FockBasis, FockOperator, FockVector};
use crate::qcore::{q_binomial, q_int, QParam};
use crate::{QgError, Result};
use nalgebra::{DMatrix, DVector};

/// One normal-ordered splitting of positions 1..n into a creation block and
/// an annihilation block, with the crossing exponent
/// i(I1, I2) = #{(p, r) in I1 x I2 : p > r}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splitting {
    /// Creation positions (0-based, increasing).
    pub creators: Vec<usize>,
    /// Annihilation positions (0-based, increasing).
    pub annihilators: Vec<usize>,
    /// Crossing exponent of q.
    pub exponent: usize,
}

/// Enumerates all 2^n splittings of a length-n word.
pub fn splittings(n: usize) -> Vec<Splitting> {
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0u64..(1u64 << n) {
        let mut creators = Vec::new();
        let mut annihilators = Vec::new();
        for pos in 0..n {
            if mask & (1 << pos) != 0 {
                creators.push(pos);
            } else {
                annihilators.push(pos);
            }
        }
        let exponent = creators
            .iter()
            .map(|&p| annihilators.iter().filter(|&&r| p > r).count())
            .sum();
        out.push(Splitting {
            creators,
            annihilators,
            exponent,
        });
    }
    out
}

fn check_word(word: &[DVector<f64>], basis: &FockBasis) -> Result<()> {
    if word.len() > basis.n_max() {
        return Err(QgError::Domain(format!(
            "Wick word of length {} exceeds degree cap {}",
            word.len(),
            basis.n_max()
        )));
    }
    for f in word {
        if f.len() != basis.d() {
            return Err(QgError::Domain(format!(
                "word letter has dimension {}, basis expects {}",
                f.len(),
                basis.d()
            )));
        }
    }
    Ok(())
}

/// Wick product by the normal-ordered splitting sum
/// `sum over splittings of a*(f_{i(1)})..a*(f_{i(k)}) a(f_{j(1)})..a(f_{j(l)}) q^i(I1,I2)`.
///
/// Normal ordering commutes with the degree cutoff (annihilators never raise
/// the degree, creator chains raise it monotonically), so this matrix is
/// exactly the compression of the untruncated Wick product to the basis.
pub fn wick_from_splittings(
    word: &[DVector<f64>],
    basis: &FockBasis,
    q: QParam,
) -> Result<FockOperator> {
    check_word(word, basis)?;
    let dim = basis.dim();
    let qv = q.get();
    let creations: Vec<_> = word
        .iter()
        .map(|f| creation(f, basis, q).map(|op| op.matrix))
        .collect::<Result<_>>()?;
    let annihilations: Vec<_> = word
        .iter()
        .map(|f| annihilation(f, basis, q).map(|op| op.matrix))
        .collect::<Result<_>>()?;
    let mut total = DMatrix::<f64>::zeros(dim, dim);
    for split in splittings(word.len()) {
        let mut term = DMatrix::<f64>::identity(dim, dim);
        for &p in split.creators.iter().rev() {
            term = &creations[p] * term;
        }
        for &r in &split.annihilators {
            term = term * &annihilations[r];
        }
        total += term * qv.powi(split.exponent as i32);
    }
    Ok(FockOperator::new(total, basis, q))
}

/// Wick product by the deletion recursion
/// `Psi(f (x) w) = omega(f) Psi(w) - sum_i q^(i-1) <f, w_i> Psi(w with w_i removed)`.
///
/// Agrees with [`wick_from_splittings`] on inputs of degree <= N - n; on
/// higher degrees the intermediate products of truncated field operators
/// leave a boundary defect that the normal-ordered form does not have.
pub fn wick_recursive(word: &[DVector<f64>], basis: &FockBasis, q: QParam) -> Result<FockOperator> {
    check_word(word, basis)?;
    Ok(FockOperator::new(
        wick_recursive_inner(word, basis, q)?,
        basis,
        q,
    ))
}

fn wick_recursive_inner(
    word: &[DVector<f64>],
    basis: &FockBasis,
    q: QParam,
) -> Result<DMatrix<f64>> {
    let dim = basis.dim();
    if word.is_empty() {
        return Ok(DMatrix::identity(dim, dim));
    }
    let head = &word[0];
    let rest = &word[1..];
    let mut acc = omega(head, basis, q)?.matrix * wick_recursive_inner(rest, basis, q)?;
    let mut weight = 1.0;
    for i in 0..rest.len() {
        let coeff = weight * head.dot(&rest[i]);
        if coeff != 0.0 {
            let mut reduced = rest.to_vec();
            reduced.remove(i);
            acc -= wick_recursive_inner(&reduced, basis, q)? * coeff;
        }
        weight *= q.get();
    }
    Ok(acc)
}

/// Wick product of a tensor power, `sum_k [n choose k]_q a*(f)^k a(f)^(n-k)`.
pub fn wick_power(f: &DVector<f64>, n: usize, basis: &FockBasis, q: QParam) -> Result<FockOperator> {
    if n > basis.n_max() {
        return Err(QgError::Domain(format!(
            "Wick power {n} exceeds degree cap {}",
            basis.n_max()
        )));
    }
    let dim = basis.dim();
    let a = annihilation(f, basis, q)?.matrix;
    let c = creation(f, basis, q)?.matrix;
    let mut a_powers = Vec::with_capacity(n + 1);
    let mut c_powers = Vec::with_capacity(n + 1);
    a_powers.push(DMatrix::<f64>::identity(dim, dim));
    c_powers.push(DMatrix::<f64>::identity(dim, dim));
    for k in 1..=n {
        a_powers.push(&a_powers[k - 1] * &a);
        c_powers.push(&c * &c_powers[k - 1]);
    }
    let mut total = DMatrix::<f64>::zeros(dim, dim);
    for k in 0..=n {
        total += (&c_powers[k] * &a_powers[n - k]) * q_binomial(n, k, q)?;
    }
    Ok(FockOperator::new(total, basis, q))
}

/// Norm of Psi(f^(x)n) - H_n^{(q)}(omega(f)) on inputs of degree <= N - n,
/// where neither side is affected by truncation.  Requires ||f|| = 1.
pub fn hermite_identity_residual(
    f: &DVector<f64>,
    n: usize,
    basis: &FockBasis,
    q: QParam,
) -> Result<f64> {
    if (f.norm() - 1.0).abs() > 1e-12 {
        return Err(QgError::Domain(format!(
            "Hermite identification needs a unit vector, got norm {}",
            f.norm()
        )));
    }
    if n > basis.n_max() {
        return Err(QgError::Domain(format!(
            "degree {n} exceeds cap {}",
            basis.n_max()
        )));
    }
    let word = vec![f.clone(); n];
    let lhs = wick_recursive(&word, basis, q)?.matrix;
    // H_n(omega(f)) by the matrix three-term recurrence
    let dim = basis.dim();
    let om = omega(f, basis, q)?.matrix;
    let mut prev = DMatrix::<f64>::identity(dim, dim);
    let rhs = if n == 0 {
        prev
    } else {
        let mut cur = om.clone();
        for k in 1..n {
            let next = &om * &cur - &prev * q_int(k, q);
            prev = cur;
            cur = next;
        }
        cur
    };
    let diff = lhs - rhs;
    let cols = basis.degree_start(basis.n_max() - n + 1);
    Ok(diff.view((0, 0), (dim, cols)).norm())
}

/// Psi(xi) for an arbitrary coefficient vector, assembled word by word from
/// the splitting sums; linearity makes this the exact compression of the
/// untruncated operator.  Costs one splitting expansion per populated word.
pub fn wick_image(xi: &FockVector, basis: &FockBasis, q: QParam) -> Result<FockOperator> {
    let dim = basis.dim();
    let mut total = DMatrix::<f64>::zeros(dim, dim);
    for idx in 0..dim.min(xi.len()) {
        if xi[idx] != 0.0 {
            let word: Vec<DVector<f64>> = basis
                .word_at(idx)
                .iter()
                .map(|&l| {
                    let mut e = DVector::zeros(basis.d());
                    e[l] = 1.0;
                    e
                })
                .collect();
            total += wick_from_splittings(&word, basis, q)?.matrix * xi[idx];
        }
    }
    Ok(FockOperator::new(total, basis, q))
}

/// Precomputed Wick operators for every basis word up to a degree cap;
/// the engine behind second quantization on arbitrary Wick images.
pub struct WickTable {
    q: f64,
    max_degree: usize,
    ops: Vec<DMatrix<f64>>,
    degree_end: usize,
    d: usize,
    n_max: usize,
}

impl WickTable {
    /// Builds Psi(w) for all words w of degree <= `max_degree` by the
    /// deletion recursion, sharing lower-degree results (one matrix product
    /// per word).
    pub fn new(basis: &FockBasis, q: QParam, max_degree: usize) -> Result<Self> {
        if max_degree > basis.n_max() {
            return Err(QgError::Domain(format!(
                "Wick table degree {max_degree} exceeds cap {}",
                basis.n_max()
            )));
        }
        let dim = basis.dim();
        let qv = q.get();
        let omegas: Vec<DMatrix<f64>> = (0..basis.d())
            .map(|j| {
                let mut e = DVector::zeros(basis.d());
                e[j] = 1.0;
                omega(&e, basis, q).map(|op| op.matrix)
            })
            .collect::<Result<_>>()?;
        let degree_end = basis.degree_start(max_degree + 1);
        let mut ops = Vec::with_capacity(degree_end);
        ops.push(DMatrix::identity(dim, dim));
        for n in 1..=max_degree {
            let layer_prev = basis.degree_dim(n - 1);
            let prev_start = basis.degree_start(n - 1);
            for local in 0..basis.degree_dim(n) {
                let head = local / layer_prev;
                let rest_local = local % layer_prev;
                let rest_idx = prev_start + rest_local;
                let rest_word = basis.word_at(rest_idx);
                let mut op = &omegas[head] * &ops[rest_idx];
                let mut weight = 1.0;
                for (i, &letter) in rest_word.iter().enumerate() {
                    if letter == head {
                        let mut reduced = rest_word.clone();
                        reduced.remove(i);
                        op -= &ops[basis.word_index(&reduced)] * weight;
                    }
                    weight *= qv;
                }
                ops.push(op);
            }
        }
        Ok(WickTable {
            q: qv,
            max_degree,
            ops,
            degree_end,
            d: basis.d(),
            n_max: basis.n_max(),
        })
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Psi of the basis word at `index`.
    pub fn operator_for_word(&self, index: usize) -> &DMatrix<f64> {
        &self.ops[index]
    }

    /// Psi(xi) for an arbitrary coefficient vector supported on degrees
    /// covered by the table (higher coefficients must vanish).
    pub fn operator_for_vector(&self, xi: &FockVector) -> FockOperator {
        let dim = self.ops[0].nrows();
        let mut total = DMatrix::<f64>::zeros(dim, dim);
        for idx in 0..xi.len() {
            let c = xi[idx];
            if c != 0.0 {
                assert!(
                    idx < self.degree_end,
                    "vector has support at degree above the Wick table cap {}",
                    self.max_degree
                );
                total += &self.ops[idx] * c;
            }
        }
        FockOperator {
            matrix: total,
            d: self.d,
            n_max: self.n_max,
            q: self.q,
        }
    }
}
