//! Truncated q-Fock space over a finite-dimensional one-particle space.
//!
//! The basis consists of all letter words of length 0..=N over d letters
//! (the length-0 word is the vacuum), ordered by degree and then
//! lexicographically, so all matrices are reproducible bit-for-bit given
//! (d, N).  The q-deformed inner product is carried by the Gram matrix
//! (the matrix of P_q in the 0-orthonormal word basis); creation operators
//! annihilate top-degree words, which is the usual finite-section compromise.
//! Vacuum moments of field operators are nevertheless exact as long as the
//! number of factors stays within the degree cap.

use crate::qcore::{inversions, permutations, QParam};
use crate::wick::WickTable;
use crate::{QgError, Result};
use nalgebra::{DMatrix, DVector};

/// Guardrail on the number of basis words (vector operations).
pub const BASIS_CAP: usize = 2_000_000;

/// Guardrail on the dimension of dense operator matrices.
pub const MATRIX_DIM_CAP: usize = 4096;

/// Coefficient vector over the word basis of a [`FockBasis`].
pub type FockVector = DVector<f64>;

/// Indexed word basis of the truncated q-Fock space.
#[derive(Debug, Clone)]
pub struct FockBasis {
    d: usize,
    n_max: usize,
    /// offsets[n] = index of the first degree-n word; offsets[n_max + 1] = dim.
    offsets: Vec<usize>,
}

impl FockBasis {
    pub fn new(d: usize, n_max: usize) -> Result<Self> {
        if d == 0 {
            return Err(QgError::Domain("one-particle dimension d must be >= 1".into()));
        }
        let mut offsets = Vec::with_capacity(n_max + 2);
        let mut total: usize = 0;
        let mut layer: usize = 1;
        for _ in 0..=n_max {
            offsets.push(total);
            total = total
                .checked_add(layer)
                .filter(|&t| t <= BASIS_CAP)
                .ok_or(QgError::TooLarge {
                    size: usize::MAX,
                    cap: BASIS_CAP,
                })?;
            layer = layer.checked_mul(d).unwrap_or(usize::MAX);
        }
        offsets.push(total);
        Ok(FockBasis { d, n_max, offsets })
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Total number of basis words, sum over n of d^n.
    #[inline]
    pub fn dim(&self) -> usize {
        self.offsets[self.n_max + 1]
    }

    #[inline]
    pub fn degree_start(&self, n: usize) -> usize {
        self.offsets[n]
    }

    #[inline]
    pub fn degree_dim(&self, n: usize) -> usize {
        self.offsets[n + 1] - self.offsets[n]
    }

    /// Degree of the word at a global index.
    pub fn degree_of(&self, index: usize) -> usize {
        debug_assert!(index < self.dim());
        // n_max stays tiny; a linear scan beats binary search here.
        let mut n = 0;
        while self.offsets[n + 1] <= index {
            n += 1;
        }
        n
    }

    /// Global index of a word given as letters in 0..d.
    pub fn word_index(&self, word: &[usize]) -> usize {
        let n = word.len();
        debug_assert!(n <= self.n_max);
        let local = word.iter().fold(0usize, |acc, &l| {
            debug_assert!(l < self.d);
            acc * self.d + l
        });
        self.offsets[n] + local
    }

    /// Letters of the word at a global index.
    pub fn word_at(&self, index: usize) -> Vec<usize> {
        let n = self.degree_of(index);
        let mut local = index - self.offsets[n];
        let mut word = vec![0usize; n];
        for k in (0..n).rev() {
            word[k] = local % self.d;
            local /= self.d;
        }
        word
    }

    /// Human-readable label, `O` for the vacuum and `e1*e2*...` otherwise.
    pub fn word_label(&self, index: usize) -> String {
        let word = self.word_at(index);
        if word.is_empty() {
            "O".to_string()
        } else {
            word.iter()
                .map(|l| format!("e{}", l + 1))
                .collect::<Vec<_>>()
                .join("*")
        }
    }

    /// The vacuum basis vector.
    pub fn vacuum(&self) -> FockVector {
        let mut v = DVector::zeros(self.dim());
        v[0] = 1.0;
        v
    }

    /// Coefficient vector of the elementary tensor f^(x)n.
    pub fn tensor_power(&self, f: &DVector<f64>, n: usize) -> Result<FockVector> {
        self.check_one_particle(f)?;
        if n > self.n_max {
            return Err(QgError::Domain(format!(
                "tensor power degree {n} exceeds truncation {}",
                self.n_max
            )));
        }
        let mut v = DVector::zeros(self.dim());
        let start = self.offsets[n];
        for local in 0..self.degree_dim(n) {
            let mut coeff = 1.0;
            let mut rest = local;
            for _ in 0..n {
                coeff *= f[rest % self.d];
                rest /= self.d;
            }
            v[start + local] = coeff;
        }
        Ok(v)
    }

    fn check_one_particle(&self, f: &DVector<f64>) -> Result<()> {
        if f.len() != self.d {
            return Err(QgError::Domain(format!(
                "one-particle vector has dimension {}, basis expects {}",
                f.len(),
                self.d
            )));
        }
        Ok(())
    }

    fn check_matrix_cap(&self) -> Result<()> {
        if self.dim() > MATRIX_DIM_CAP {
            return Err(QgError::TooLarge {
                size: self.dim(),
                cap: MATRIX_DIM_CAP,
            });
        }
        Ok(())
    }
}

/// Standard basis vector e_j of the one-particle space.
pub fn unit_vector(d: usize, j: usize) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    v[j] = 1.0;
    v
}

/// A dense operator over the word basis, tagged with the (d, N, q) it was
/// built for.
#[derive(Debug, Clone)]
pub struct FockOperator {
    pub matrix: DMatrix<f64>,
    pub d: usize,
    pub n_max: usize,
    pub q: f64,
}

impl FockOperator {
    pub fn new(matrix: DMatrix<f64>, basis: &FockBasis, q: QParam) -> Self {
        debug_assert_eq!(matrix.nrows(), basis.dim());
        debug_assert_eq!(matrix.ncols(), basis.dim());
        FockOperator {
            matrix,
            d: basis.d(),
            n_max: basis.n_max(),
            q: q.get(),
        }
    }

    pub fn identity(basis: &FockBasis, q: QParam) -> Self {
        FockOperator::new(DMatrix::identity(basis.dim(), basis.dim()), basis, q)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Gram matrix of the q-inner product on the word basis: block diagonal by
/// degree, symmetric, strictly positive definite.
///
/// Built by the recursive expansion
/// `<w, v> = sum_i q^(i-1) delta(w_1, v_i) <w', v with v_i removed>`,
/// which is the adjointness relation between creation and annihilation.
pub fn gram(basis: &FockBasis, q: QParam) -> Result<FockOperator> {
    basis.check_matrix_cap()?;
    let dim = basis.dim();
    let qv = q.get();
    let mut g = DMatrix::<f64>::zeros(dim, dim);
    g[(0, 0)] = 1.0;
    for n in 1..=basis.n_max() {
        let start = basis.degree_start(n);
        let count = basis.degree_dim(n);
        for a in 0..count {
            let wa = basis.word_at(start + a);
            let head = wa[0];
            let rest_index = basis.word_index(&wa[1..]);
            for b in 0..count {
                let wb = basis.word_at(start + b);
                let mut acc = 0.0;
                let mut weight = 1.0;
                for (i, &letter) in wb.iter().enumerate() {
                    if letter == head {
                        let mut reduced = wb.clone();
                        reduced.remove(i);
                        acc += weight * g[(rest_index, basis.word_index(&reduced))];
                    }
                    weight *= qv;
                }
                g[(start + a, start + b)] = acc;
            }
        }
    }
    Ok(FockOperator::new(g, basis, q))
}

/// Gram matrix by the direct permutation sum
/// `sum over pi in S_n of q^inversions(pi) prod_k delta(w_k, v_pi(k))`.
///
/// Exponential in the degree; retained as the independent oracle for the
/// recursive construction (degrees up to the permutation cap).
pub fn permutation_sum_gram(basis: &FockBasis, q: QParam) -> Result<FockOperator> {
    basis.check_matrix_cap()?;
    let dim = basis.dim();
    let qv = q.get();
    let mut g = DMatrix::<f64>::zeros(dim, dim);
    g[(0, 0)] = 1.0;
    for n in 1..=basis.n_max() {
        let perms: Vec<_> = permutations(n)?.collect();
        let start = basis.degree_start(n);
        let count = basis.degree_dim(n);
        for a in 0..count {
            let wa = basis.word_at(start + a);
            for b in 0..count {
                let wb = basis.word_at(start + b);
                let mut acc = 0.0;
                'next_perm: for p in &perms {
                    for k in 0..n {
                        if wa[k] != wb[p.image(k + 1) - 1] {
                            continue 'next_perm;
                        }
                    }
                    acc += qv.powi(inversions(p) as i32);
                }
                g[(start + a, start + b)] = acc;
            }
        }
    }
    Ok(FockOperator::new(g, basis, q))
}

/// Creation operator a*(f): prepends f, mapping degree n to n+1; words of
/// top degree are sent to 0 (truncation).
pub fn creation(f: &DVector<f64>, basis: &FockBasis, q: QParam) -> Result<FockOperator> {
    basis.check_one_particle(f)?;
    basis.check_matrix_cap()?;
    let dim = basis.dim();
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for n in 0..basis.n_max() {
        let start = basis.degree_start(n);
        let next_start = basis.degree_start(n + 1);
        let layer = basis.degree_dim(n);
        for local in 0..layer {
            for j in 0..basis.d() {
                if f[j] != 0.0 {
                    m[(next_start + j * layer + local, start + local)] = f[j];
                }
            }
        }
    }
    Ok(FockOperator::new(m, basis, q))
}

/// Annihilation operator a(f): deletes one letter with weight q^(i-1) at
/// 1-based position i, a(f) Omega = 0.
pub fn annihilation(f: &DVector<f64>, basis: &FockBasis, q: QParam) -> Result<FockOperator> {
    basis.check_one_particle(f)?;
    basis.check_matrix_cap()?;
    let dim = basis.dim();
    let qv = q.get();
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for n in 1..=basis.n_max() {
        let start = basis.degree_start(n);
        for local in 0..basis.degree_dim(n) {
            let word = basis.word_at(start + local);
            let mut weight = 1.0;
            for i in 0..n {
                let coeff = weight * f[word[i]];
                if coeff != 0.0 {
                    let mut reduced = word.clone();
                    reduced.remove(i);
                    m[(basis.word_index(&reduced), start + local)] += coeff;
                }
                weight *= qv;
            }
        }
    }
    Ok(FockOperator::new(m, basis, q))
}

/// Field operator omega(f) = a(f) + a*(f).
pub fn omega(f: &DVector<f64>, basis: &FockBasis, q: QParam) -> Result<FockOperator> {
    let mut op = annihilation(f, basis, q)?;
    op.matrix += creation(f, basis, q)?.matrix;
    Ok(op)
}

/// Applies omega(f) to a coefficient vector without materializing the matrix.
pub fn apply_omega(f: &DVector<f64>, basis: &FockBasis, q: QParam, v: &FockVector) -> FockVector {
    let qv = q.get();
    let mut out = DVector::zeros(basis.dim());
    for idx in 0..basis.dim() {
        let c = v[idx];
        if c == 0.0 {
            continue;
        }
        let n = basis.degree_of(idx);
        let start = basis.degree_start(n);
        let local = idx - start;
        // creation part
        if n < basis.n_max() {
            let next_start = basis.degree_start(n + 1);
            let layer = basis.degree_dim(n);
            for j in 0..basis.d() {
                if f[j] != 0.0 {
                    out[next_start + j * layer + local] += f[j] * c;
                }
            }
        }
        // annihilation part
        if n > 0 {
            let word = basis.word_at(idx);
            let mut weight = 1.0;
            for i in 0..n {
                let coeff = weight * f[word[i]];
                if coeff != 0.0 {
                    let mut reduced = word.clone();
                    reduced.remove(i);
                    out[basis.word_index(&reduced)] += coeff * c;
                }
                weight *= qv;
            }
        }
    }
    out
}

/// Vacuum expectation <Omega, X Omega>_q. The vacuum has q-norm 1 and is
/// q-orthogonal to every higher degree, so this is the (Omega, Omega) entry.
pub fn vacuum_expectation(x: &FockOperator) -> f64 {
    x.matrix[(0, 0)]
}

/// Vacuum moment E[omega(f_1) ... omega(f_n)].
///
/// Computed by successive application to the vacuum, which keeps every
/// intermediate vector within degree n <= N; the value is therefore exact
/// (truncation-independent).  Rejects n > N, where truncation would bite.
pub fn moment(fs: &[DVector<f64>], basis: &FockBasis, q: QParam) -> Result<f64> {
    if fs.len() > basis.n_max() {
        return Err(QgError::Domain(format!(
            "moment of {} factors needs degree cap N >= {}, basis has N = {}",
            fs.len(),
            fs.len(),
            basis.n_max()
        )));
    }
    for f in fs {
        basis.check_one_particle(f)?;
    }
    let mut v = basis.vacuum();
    for f in fs.iter().rev() {
        v = apply_omega(f, basis, q, &v);
    }
    Ok(v[0])
}

/// Cached q-geometry of a truncated Fock space: the Gram matrix of the
/// q-inner product together with its square root and inverse square root
/// (computed blockwise per degree).
pub struct QGeometry {
    pub basis_d: usize,
    pub basis_n_max: usize,
    pub q: f64,
    pub gram: FockOperator,
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
    /// Smallest eigenvalue over all degree blocks (positivity of P_q).
    pub min_eigenvalue: f64,
}

impl QGeometry {
    pub fn new(basis: &FockBasis, q: QParam) -> Result<Self> {
        let g = gram(basis, q)?;
        let dim = basis.dim();
        let mut sqrt = DMatrix::<f64>::zeros(dim, dim);
        let mut inv_sqrt = DMatrix::<f64>::zeros(dim, dim);
        let mut min_eigenvalue = f64::INFINITY;
        for n in 0..=basis.n_max() {
            let start = basis.degree_start(n);
            let len = basis.degree_dim(n);
            let block = g.matrix.view((start, start), (len, len)).into_owned();
            let eig = block.symmetric_eigen();
            for &ev in eig.eigenvalues.iter() {
                min_eigenvalue = min_eigenvalue.min(ev);
                if ev <= 0.0 {
                    return Err(QgError::NotPositiveDefinite { eigenvalue: ev });
                }
            }
            let v = &eig.eigenvectors;
            let mut s = DMatrix::<f64>::zeros(len, len);
            let mut si = DMatrix::<f64>::zeros(len, len);
            for k in 0..len {
                let root = eig.eigenvalues[k].sqrt();
                let col = v.column(k);
                for i in 0..len {
                    for j in 0..len {
                        s[(i, j)] += root * col[i] * col[j];
                        si[(i, j)] += col[i] * col[j] / root;
                    }
                }
            }
            sqrt.view_mut((start, start), (len, len)).copy_from(&s);
            inv_sqrt.view_mut((start, start), (len, len)).copy_from(&si);
        }
        Ok(QGeometry {
            basis_d: basis.d(),
            basis_n_max: basis.n_max(),
            q: q.get(),
            gram: g,
            sqrt,
            inv_sqrt,
            min_eigenvalue,
        })
    }

    /// q-inner product of two coefficient vectors.
    pub fn q_inner(&self, a: &FockVector, b: &FockVector) -> f64 {
        (a.transpose() * &self.gram.matrix * b)[(0, 0)]
    }

    pub fn q_norm_vec(&self, a: &FockVector) -> f64 {
        self.q_inner(a, a).max(0.0).sqrt()
    }

    /// Adjoint with respect to the q-inner product, G^{-1} X^T G.
    pub fn q_adjoint(&self, x: &FockOperator) -> FockOperator {
        let m = &self.inv_sqrt
            * (&self.inv_sqrt * (x.matrix.transpose() * &self.sqrt) * &self.sqrt);
        FockOperator {
            matrix: m,
            d: x.d,
            n_max: x.n_max,
            q: x.q,
        }
    }

    /// Operator norm with respect to the q-inner product.
    pub fn operator_q_norm(&self, x: &DMatrix<f64>) -> f64 {
        let m = &self.sqrt * x * &self.inv_sqrt;
        m.svd(false, false).singular_values.max()
    }

    /// Operator q-norm of X restricted to inputs of degree <= `max_degree`
    /// (the degree subspaces are q-orthogonal, so restriction is columnwise).
    pub fn operator_q_norm_on_degrees(
        &self,
        x: &DMatrix<f64>,
        basis: &FockBasis,
        max_degree: usize,
    ) -> f64 {
        let cols = basis.degree_start(max_degree + 1);
        let m = &self.sqrt * x * &self.inv_sqrt;
        let sub = m.view((0, 0), (m.nrows(), cols)).into_owned();
        sub.svd(false, false).singular_values.max()
    }

    /// Smallest eigenvalue of the q-symmetrization of X; for q-self-adjoint X
    /// this is the bottom of its spectrum with respect to the q-inner product.
    pub fn smallest_q_eigenvalue(&self, x: &DMatrix<f64>) -> f64 {
        let m = &self.sqrt * x * &self.inv_sqrt;
        let sym = (&m + m.transpose()) * 0.5;
        sym.symmetric_eigen().eigenvalues.min()
    }
}

/// Operator norm of
/// `a(f) a*(g) - q a*(g) a(f) - <f,g> id` on inputs of degree <= N-1.
///
/// The q-relations hold exactly below the top degree; on the top degree the
/// truncated creation operator leaves a documented boundary defect.
pub fn q_relation_residual(
    f: &DVector<f64>,
    g: &DVector<f64>,
    basis: &FockBasis,
    q: QParam,
) -> Result<f64> {
    let geometry = QGeometry::new(basis, q)?;
    q_relation_residual_with(f, g, basis, q, &geometry)
}

/// As [`q_relation_residual`], reusing a precomputed geometry.
pub fn q_relation_residual_with(
    f: &DVector<f64>,
    g: &DVector<f64>,
    basis: &FockBasis,
    q: QParam,
    geometry: &QGeometry,
) -> Result<f64> {
    let af = annihilation(f, basis, q)?;
    let cg = creation(g, basis, q)?;
    let inner = f.dot(g);
    let dim = basis.dim();
    let residual = &af.matrix * &cg.matrix
        - (&cg.matrix * &af.matrix) * q.get()
        - DMatrix::<f64>::identity(dim, dim) * inner;
    Ok(geometry.operator_q_norm_on_degrees(&residual, basis, basis.n_max() - 1))
}

/// Convergence report for the truncated operator norm of a(f) against the
/// closed-form bound (||f||/sqrt(1-q) for q >= 0, ||f|| for q <= 0).
#[derive(Debug, Clone)]
pub struct NormBoundReport {
    pub bound: f64,
    /// (truncation degree, q-operator norm of a(f) compressed to it)
    pub norms: Vec<(usize, f64)>,
    pub within_bound: bool,
    pub nondecreasing: bool,
}

/// Computes the q-operator norm of a(f) compressed to degrees <= N' for every
/// N' up to the basis cap.  Compressions never exceed the closed-form norm
/// and grow toward it with N'.
pub fn operator_norm_bound_check(
    f: &DVector<f64>,
    basis: &FockBasis,
    q: QParam,
) -> Result<NormBoundReport> {
    let geometry = QGeometry::new(basis, q)?;
    let af = annihilation(f, basis, q)?;
    let qv = q.get();
    let bound = if qv >= 0.0 {
        f.norm() / (1.0 - qv).sqrt()
    } else {
        f.norm()
    };
    let mut norms = Vec::new();
    for cap in 1..=basis.n_max() {
        let dim = basis.degree_start(cap + 1);
        let m = &geometry.sqrt * &af.matrix * &geometry.inv_sqrt;
        let sub = m.view((0, 0), (dim, dim)).into_owned();
        let norm = sub.svd(false, false).singular_values.max();
        norms.push((cap, norm));
    }
    let within_bound = norms.iter().all(|&(_, n)| n <= bound * (1.0 + 1e-10));
    let nondecreasing = norms.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-10);
    Ok(NormBoundReport {
        bound,
        norms,
        within_bound,
        nondecreasing,
    })
}

/// Functor matrix F(T): acts as T^(x)n on each degree block, fixes the vacuum.
///
/// `t` maps the one-particle space of `from` into the one-particle space of
/// `to` (rows indexed by `to`).  Rejects non-contractions.
pub fn fock_map(t: &DMatrix<f64>, from: &FockBasis, to: &FockBasis) -> Result<DMatrix<f64>> {
    if t.nrows() != to.d() || t.ncols() != from.d() {
        return Err(QgError::Domain(format!(
            "contraction shape {}x{} does not match bases ({} <- {})",
            t.nrows(),
            t.ncols(),
            to.d(),
            from.d()
        )));
    }
    if from.n_max() != to.n_max() {
        return Err(QgError::Domain(
            "fock_map requires equal degree caps on both bases".into(),
        ));
    }
    from.check_matrix_cap()?;
    to.check_matrix_cap()?;
    let norm = t.clone().svd(false, false).singular_values.max();
    if norm > 1.0 + 1e-12 {
        return Err(QgError::NotContraction { norm });
    }
    let mut m = DMatrix::<f64>::zeros(to.dim(), from.dim());
    m[(0, 0)] = 1.0;
    // degree n block: previous block extended by one letter,
    // T^(x)(n) = T^(x)(n-1) (x) T, filled in place.
    for n in 1..=from.n_max() {
        let fs = from.degree_start(n);
        let ts = to.degree_start(n);
        let f_prev = from.degree_start(n - 1);
        let t_prev = to.degree_start(n - 1);
        let f_layer_prev = from.degree_dim(n - 1);
        let t_layer_prev = to.degree_dim(n - 1);
        for col in 0..from.degree_dim(n) {
            let head_from = col / f_layer_prev;
            let rest_from = col % f_layer_prev;
            for row in 0..to.degree_dim(n) {
                let head_to = row / t_layer_prev;
                let rest_to = row % t_layer_prev;
                let base = m[(t_prev + rest_to, f_prev + rest_from)];
                if base != 0.0 {
                    m[(ts + row, fs + col)] = t[(head_to, head_from)] * base;
                }
            }
        }
    }
    Ok(m)
}

/// Second quantization of a contraction T on a Wick image: returns the
/// operator Psi(F(T) xi), the unique extension with
/// (Gamma_q(T) X) Omega = F(T)(X Omega).
///
/// Trace preserving by construction (the vacuum coefficient is fixed by
/// F(T)); for orthogonal projections it acts as the conditional expectation
/// onto the corresponding subalgebra.
pub fn second_quantization(
    t: &DMatrix<f64>,
    from: &FockBasis,
    to: &FockBasis,
    q: QParam,
    xi: &FockVector,
) -> Result<FockOperator> {
    let map = fock_map(t, from, to)?;
    let eta = &map * xi;
    // highest degree actually populated bounds the Wick table size
    let mut max_degree = 0;
    for idx in 0..to.dim() {
        if eta[idx].abs() > 0.0 {
            max_degree = max_degree.max(to.degree_of(idx));
        }
    }
    let table = WickTable::new(to, q, max_degree)?;
    Ok(table.operator_for_vector(&eta))
}

/// Writes an operator matrix as CSV: one row per basis word, first column the
/// word label, entries in the documented graded-lexicographic word order.
pub fn write_operator_csv<W: std::io::Write>(
    op: &FockOperator,
    basis: &FockBasis,
    out: &mut W,
) -> Result<()> {
    writeln!(out, "# qgauss fock-operator v1: d={} N={} q={}", op.d, op.n_max, op.q)?;
    write!(out, "word")?;
    for j in 0..basis.dim() {
        write!(out, ",{}", basis.word_label(j))?;
    }
    writeln!(out)?;
    for i in 0..basis.dim() {
        write!(out, "{}", basis.word_label(i))?;
        for j in 0..basis.dim() {
            write!(out, ",{}", op.matrix[(i, j)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}
