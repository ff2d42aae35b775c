//! Dense f64 primitives, the seeded random stream, and the finite-difference
//! gradient oracle.
//!
//! Every reduction here sums strictly left to right so results are bit-stable
//! for a given platform.

mod gradcheck;
mod rng;

pub use gradcheck::finite_diff_gradient;
pub use rng::RandomStream;

use crate::error::{check_dims, Error, Result};

/// Owned vector of finite f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("vector must have positive dimension".into()));
        }
        ensure_finite("DenseVector", &values)?;
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "vector must have positive dimension");
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        dot(self, other)
    }
}

impl std::ops::Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Row-major matrix of finite f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix shape {rows}x{cols} must be positive"
            )));
        }
        check_dims("DenseMatrix values", rows * cols, values.len())?;
        ensure_finite("DenseMatrix", &values)?;
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_dims("DenseMatrix row", cols, row.len())?;
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0);
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// Inner product of two equal-length vectors.
pub fn dot(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    check_dims("dot", a.dim(), b.dim())?;
    Ok(dot_slices(a, b))
}

/// Matrix-vector product `m * x`.
pub fn matvec(m: &DenseMatrix, x: &DenseVector) -> Result<DenseVector> {
    check_dims("matvec", m.cols, x.dim())?;
    let mut out = vec![0.0; m.rows];
    matvec_into(&m.values, m.cols, x, &mut out);
    Ok(DenseVector { values: out })
}

pub(crate) fn ensure_finite(context: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(index) => Err(Error::NonFinite { context, index }),
    }
}

/// Left-to-right dot product. Callers guarantee equal lengths.
#[inline]
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `out = weight * x` with `weight` row-major `out.len() x cols`.
#[inline]
pub(crate) fn matvec_into(weight: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(weight.len(), cols * out.len());
    for (o, row) in out.iter_mut().zip(weight.chunks_exact(cols)) {
        *o = dot_slices(row, x);
    }
}

/// `y += alpha * x`.
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn squared_norm(x: &[f64]) -> f64 {
    dot_slices(x, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> DenseVector {
        DenseVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(dot(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap(), 5.0);
    }

    #[test]
    fn dot_matches_scalar_loop_on_random_pair() {
        let mut rng = RandomStream::new(11);
        let a: Vec<f64> = (0..64).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let mut oracle = 0.0f64;
        let mut i = 0;
        while i < 64 {
            oracle += a[i] * b[i];
            i += 1;
        }
        let got = dot(&v(&a), &v(&b)).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300));
    }

    #[test]
    fn dot_rejects_mismatched_dims() {
        let err = dot(&v(&[1.0]), &v(&[1.0, 2.0])).unwrap_err();
        assert!(err.to_string().contains("1 vs 2"), "{err}");
    }

    #[test]
    fn matvec_examples() {
        let x = v(&[1.0, 2.0, 3.0]);
        assert_eq!(matvec(&DenseMatrix::identity(3), &x).unwrap(), x);
        assert_eq!(
            matvec(&DenseMatrix::zeros(2, 3), &x).unwrap().as_slice(),
            &[0.0, 0.0]
        );
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&m, &v(&[1.0, 1.0])).unwrap().as_slice(), &[3.0, 7.0]);
        assert!(matvec(&m, &x).is_err());
    }

    #[test]
    fn constructors_reject_non_finite() {
        assert!(DenseVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![f64::INFINITY, 0.0]).is_err());
        assert!(DenseMatrix::new(2, 2, vec![0.0; 3]).is_err());
    }

    fn finite_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1e3f64..1e3, n)
    }

    proptest! {
        #[test]
        fn dot_is_symmetric(a in finite_vec(17), b in finite_vec(17)) {
            prop_assert_eq!(dot(&v(&a), &v(&b)).unwrap(), dot(&v(&b), &v(&a)).unwrap());
        }

        #[test]
        fn matvec_is_linear(
            m in finite_vec(12),
            x in finite_vec(4),
            y in finite_vec(4),
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
        ) {
            let m = DenseMatrix::new(3, 4, m).unwrap();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
            let lhs = matvec(&m, &v(&combo)).unwrap();
            let mx = matvec(&m, &v(&x)).unwrap();
            let my = matvec(&m, &v(&y)).unwrap();
            for i in 0..3 {
                let rhs = a * mx[i] + b * my[i];
                // Relative to the magnitude of the terms being cancelled.
                let scale = (a * mx[i]).abs() + (b * my[i]).abs() + lhs[i].abs();
                let terms: f64 = (0..4)
                    .map(|j| m.row(i)[j].abs() * (a * x[j]).abs().max((b * y[j]).abs()))
                    .sum();
                prop_assert!((lhs[i] - rhs).abs() <= 1e-10 * (scale + terms).max(1.0));
            }
        }
    }
}
