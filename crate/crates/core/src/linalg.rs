//! Dense complex vectors and matrices at small runtime dimensions.
//!
//! Everything the models need fits in 12x12, so storage is a flat row-major
//! `Vec` and every product is the textbook triple loop. Tensor products are
//! first-factor-major: `(u ⊗ v)[i * v.dim() + j] = u[i] * v[j]`.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

/// Scalar type for every vector and matrix entry.
pub type ComplexScalar = Complex64;

/// Default tolerance for structural predicates (Hermiticity, idempotence).
pub const STRUCTURAL_TOL: f64 = 1e-10;
/// Default tolerance for unit-norm checks.
pub const NORM_TOL: f64 = 1e-12;

pub const ZERO: ComplexScalar = Complex64::new(0.0, 0.0);
pub const ONE: ComplexScalar = Complex64::new(1.0, 0.0);
pub const I: ComplexScalar = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op} requires a square matrix, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("expected {expected} entries, got {got}")]
    EntryCount { expected: usize, got: usize },
    #[error("non-finite entry at position {0}")]
    NonFinite(usize),
    #[error("dimensions must be positive")]
    EmptyDimension,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Builds a scalar, rejecting NaN and infinities.
pub fn scalar(re: f64, im: f64) -> Result<ComplexScalar> {
    if re.is_finite() && im.is_finite() {
        Ok(Complex64::new(re, im))
    } else {
        Err(LinalgError::NonFinite(0))
    }
}

fn check_finite(entries: &[ComplexScalar]) -> Result<()> {
    match entries.iter().position(|z| !z.is_finite()) {
        Some(idx) => Err(LinalgError::NonFinite(idx)),
        None => Ok(()),
    }
}

/// A column vector in `C^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector {
    entries: Vec<ComplexScalar>,
}

impl ComplexVector {
    pub fn new(entries: Vec<ComplexScalar>) -> Result<Self> {
        if entries.is_empty() {
            return Err(LinalgError::EmptyDimension);
        }
        check_finite(&entries)?;
        Ok(Self { entries })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![ZERO; dim])
    }

    /// The `index`-th standard basis vector (zero-based).
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(LinalgError::DimensionMismatch {
                op: "basis",
                left: (dim, 1),
                right: (index, 1),
            });
        }
        let mut entries = vec![ZERO; dim];
        entries[index] = ONE;
        Self::new(entries)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[ComplexScalar] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> ComplexScalar {
        self.entries[index]
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<ComplexScalar> {
        if self.dim() != other.dim() {
            return Err(LinalgError::DimensionMismatch {
                op: "inner",
                left: (self.dim(), 1),
                right: (other.dim(), 1),
            });
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Squared Euclidean norm.
    pub fn norm2(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&self, factor: ComplexScalar) -> Self {
        Self {
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn kron(&self, other: &Self) -> Self {
        let mut entries = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.entries {
            for b in &other.entries {
                entries.push(a * b);
            }
        }
        Self { entries }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(LinalgError::DimensionMismatch {
                op: "max_abs_diff",
                left: (self.dim(), 1),
                right: (other.dim(), 1),
            });
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

impl fmt::Display for ComplexVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, z) in self.entries.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{z}")?;
        }
        write!(f, "]")
    }
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<ComplexScalar>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<ComplexScalar>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyDimension);
        }
        if entries.len() != rows * cols {
            return Err(LinalgError::EntryCount {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        check_finite(&entries)?;
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> ComplexScalar,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self::new(rows, cols, entries)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![ZERO; rows * cols])
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_fn(dim, dim, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn diag_real(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(values[i], 0.0)
            } else {
                ZERO
            }
        })
    }

    /// `|u><v|`.
    pub fn outer(u: &ComplexVector, v: &ComplexVector) -> Result<Self> {
        Self::from_fn(u.dim(), v.dim(), |i, j| u.get(i) * v.get(j).conj())
    }

    /// Places square blocks along the diagonal.
    pub fn block_diag(blocks: &[ComplexMatrix]) -> Result<Self> {
        let dim: usize = blocks.iter().map(|b| b.rows).sum();
        let mut out = Self::zeros(dim, dim)?;
        let mut offset = 0;
        for b in blocks {
            if !b.is_square() {
                return Err(LinalgError::NotSquare {
                    op: "block_diag",
                    rows: b.rows,
                    cols: b.cols,
                });
            }
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out.entries[(offset + i) * dim + offset + j] = b.get(i, j);
                }
            }
            offset += b.rows;
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> ComplexScalar {
        self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[ComplexScalar] {
        &self.entries
    }

    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut entries = vec![ZERO; rows * cols];
        for i1 in 0..self.rows {
            for j1 in 0..self.cols {
                let a = self.get(i1, j1);
                for i2 in 0..other.rows {
                    for j2 in 0..other.cols {
                        let r = i1 * other.rows + i2;
                        let c = j1 * other.cols + j2;
                        entries[r * cols + c] = a * other.get(i2, j2);
                    }
                }
            }
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    /// Matrix product `self * other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "compose",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut entries = vec![ZERO; self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    entries[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            entries,
        })
    }

    pub fn apply(&self, v: &ComplexVector) -> Result<ComplexVector> {
        if self.cols != v.dim() {
            return Err(LinalgError::DimensionMismatch {
                op: "apply",
                left: self.shape(),
                right: (v.dim(), 1),
            });
        }
        let entries = (0..self.rows)
            .map(|i| {
                let row = &self.entries[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(v.entries()).map(|(a, b)| a * b).sum()
            })
            .collect();
        Ok(ComplexVector { entries })
    }

    pub fn adjoint(&self) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                entries.push(self.get(i, j).conj());
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    pub fn trace(&self) -> Result<ComplexScalar> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                op: "trace",
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok((0..self.rows).map(|i| self.get(i, i)).sum())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, factor: ComplexScalar) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    /// `I - self`.
    pub fn complement(&self) -> Result<Self> {
        Self::identity(self.rows)?.sub(self)
    }

    /// Largest entry magnitude of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let diff = self.sub(other)?;
        Ok(diff.max_abs())
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Hermitian and idempotent within `tol` (max-entry norm).
    pub fn is_projector(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let hermitian = self.max_abs_diff(&self.adjoint()).is_ok_and(|d| d <= tol);
        hermitian
            && self
                .compose(self)
                .and_then(|sq| sq.max_abs_diff(self))
                .is_ok_and(|d| d <= tol)
    }

    /// Max-entry magnitude of `self * other - other * self`.
    pub fn commutator_norm(&self, other: &Self) -> Result<f64> {
        if !self.is_square() || self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch {
                op: "commutator_norm",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let pq = self.compose(other)?;
        let qp = other.compose(self)?;
        pq.max_abs_diff(&qp)
    }

    fn zip_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(ComplexScalar, ComplexScalar) -> ComplexScalar,
    ) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

impl fmt::Display for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| format!("{}", self.get(i, j)))
                .collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> ComplexScalar {
        Complex64::new(re, im)
    }

    fn a2() -> ComplexMatrix {
        ComplexMatrix::diag_real(&[1.0, 0.0]).unwrap()
    }

    fn b3() -> ComplexMatrix {
        ComplexMatrix::diag_real(&[1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn kron_of_conditioning_projectors() {
        let i2 = ComplexMatrix::identity(2).unwrap();
        let i3 = ComplexMatrix::identity(3).unwrap();
        let a = a2().kron(&i3);
        let b = i2.kron(&b3());
        assert_eq!(
            a,
            ComplexMatrix::diag_real(&[1., 1., 1., 0., 0., 0.]).unwrap()
        );
        assert_eq!(
            b,
            ComplexMatrix::diag_real(&[1., 1., 0., 1., 1., 0.]).unwrap()
        );
        let ab = a.compose(&b).unwrap();
        assert_eq!(
            ab,
            ComplexMatrix::diag_real(&[1., 1., 0., 0., 0., 0.]).unwrap()
        );
        assert_eq!(ab, a2().kron(&b3()));
    }

    #[test]
    fn vector_kron_is_first_factor_major() {
        let u = ComplexVector::from_real(&[1.0, 2.0]).unwrap();
        let v = ComplexVector::from_real(&[3.0, 4.0, 5.0]).unwrap();
        let expected = ComplexVector::from_real(&[3.0, 4.0, 5.0, 6.0, 8.0, 10.0]).unwrap();
        assert_eq!(u.kron(&v), expected);
    }

    #[test]
    fn identity_is_neutral_and_mismatch_errors() {
        let m = ComplexMatrix::from_fn(6, 6, |i, j| c(i as f64, j as f64 - 1.0)).unwrap();
        let id = ComplexMatrix::identity(6).unwrap();
        assert_eq!(id.compose(&m).unwrap(), m);
        let bad = ComplexMatrix::identity(3).unwrap();
        assert!(matches!(
            m.compose(&bad),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        let v = ComplexVector::zeros(3).unwrap();
        assert!(m.apply(&v).is_err());
    }

    #[test]
    fn trace_and_non_square() {
        assert_eq!(
            ComplexMatrix::identity(6).unwrap().trace().unwrap(),
            c(6.0, 0.0)
        );
        let rect = ComplexMatrix::zeros(2, 3).unwrap();
        assert!(matches!(rect.trace(), Err(LinalgError::NotSquare { .. })));
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(scalar(f64::NAN, 0.0).is_err());
        assert!(scalar(0.0, f64::INFINITY).is_err());
        assert!(matches!(
            ComplexMatrix::new(2, 2, vec![ONE; 3]),
            Err(LinalgError::EntryCount {
                expected: 4,
                got: 3
            })
        ));
        assert!(matches!(
            ComplexVector::new(vec![ONE, c(f64::NAN, 0.0)]),
            Err(LinalgError::NonFinite(1))
        ));
        assert!(ComplexVector::new(vec![]).is_err());
    }

    #[test]
    fn projector_predicate() {
        assert!(a2()
            .kron(&ComplexMatrix::identity(3).unwrap())
            .is_projector(STRUCTURAL_TOL));
        let nilpotent = ComplexMatrix::new(2, 2, vec![ZERO, ONE, ZERO, ZERO]).unwrap();
        assert!(!nilpotent.is_projector(STRUCTURAL_TOL));
        // Hermitian but not idempotent.
        let two = ComplexMatrix::diag_real(&[2.0, 0.0]).unwrap();
        assert!(!two.is_projector(STRUCTURAL_TOL));
        let rect = ComplexMatrix::zeros(2, 3).unwrap();
        assert!(!rect.is_projector(STRUCTURAL_TOL));
    }

    #[test]
    fn inner_is_conjugate_linear_in_first_argument() {
        let u = ComplexVector::new(vec![I, ZERO]).unwrap();
        let v = ComplexVector::new(vec![ONE, ZERO]).unwrap();
        assert_eq!(u.inner(&v).unwrap(), c(0.0, -1.0));
        assert_eq!(v.inner(&u).unwrap(), c(0.0, 1.0));
        assert_eq!(u.norm2(), 1.0);
    }

    #[test]
    fn commutator_of_commuting_diagonals_is_zero() {
        let i2 = ComplexMatrix::identity(2).unwrap();
        let i3 = ComplexMatrix::identity(3).unwrap();
        let a = a2().kron(&i3);
        let b = i2.kron(&b3());
        assert_eq!(a.commutator_norm(&b).unwrap(), 0.0);
        assert!(a.commutator_norm(&i2).is_err());
    }

    #[test]
    fn block_diag_places_blocks() {
        let m = ComplexMatrix::block_diag(&[a2(), b3()]).unwrap();
        assert_eq!(m, ComplexMatrix::diag_real(&[1., 0., 1., 1., 0.]).unwrap());
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = ComplexMatrix> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols).prop_map(move |v| {
            ComplexMatrix::new(rows, cols, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
        })
    }

    fn arb_vector(dim: usize) -> impl Strategy<Value = ComplexVector> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim).prop_map(|v| {
            ComplexVector::new(v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn kron_mixed_product(
            m1 in arb_matrix(2, 2), m2 in arb_matrix(3, 3),
            v1 in arb_vector(2), v2 in arb_vector(3),
        ) {
            let lhs = m1.kron(&m2).apply(&v1.kron(&v2)).unwrap();
            let rhs = m1.apply(&v1).unwrap().kron(&m2.apply(&v2).unwrap());
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);
        }

        #[test]
        fn kron_is_associative(a in arb_matrix(2, 2), b in arb_matrix(3, 3), c in arb_matrix(2, 2)) {
            let left = a.kron(&b).kron(&c);
            let right = a.kron(&b.kron(&c));
            prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-12);
        }

        #[test]
        fn adjoint_reverses_products(m in arb_matrix(4, 3), n in arb_matrix(3, 5)) {
            let lhs = m.compose(&n).unwrap().adjoint();
            let rhs = n.adjoint().compose(&m.adjoint()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);
        }

        #[test]
        fn projectors_have_integer_trace_and_contract(
            u in arb_vector(4), w in arb_vector(4), probe in arb_vector(4),
        ) {
            // rank-2 projector from two Gram-Schmidt vectors
            prop_assume!(u.norm2() > 1e-3);
            let e1 = u.scale(c(1.0 / u.norm2().sqrt(), 0.0));
            let w_perp = {
                let overlap = e1.inner(&w).unwrap();
                let proj = e1.scale(overlap);
                ComplexVector::new(
                    w.entries().iter().zip(proj.entries()).map(|(a, b)| a - b).collect(),
                ).unwrap()
            };
            prop_assume!(w_perp.norm2() > 1e-3);
            let e2 = w_perp.scale(c(1.0 / w_perp.norm2().sqrt(), 0.0));
            let p = ComplexMatrix::outer(&e1, &e1).unwrap()
                .add(&ComplexMatrix::outer(&e2, &e2).unwrap()).unwrap();
            prop_assert!(p.is_projector(1e-10));
            let tr = p.trace().unwrap();
            prop_assert!(tr.im.abs() <= 1e-8);
            prop_assert!((tr.re - tr.re.round()).abs() <= 1e-8);
            prop_assert!(p.apply(&probe).unwrap().norm2() <= probe.norm2() + 1e-12);
        }
    }
}
