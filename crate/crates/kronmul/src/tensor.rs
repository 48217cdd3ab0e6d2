//! Dense row-major matrices, Kronecker factor chains, and the naive
//! Kronecker-product oracle every other algorithm is checked against.

use crate::error::{Error, Result};

/// Maximum number of elements the naive oracle will materialize.
/// The oracle exists for desk-scale verification, not production runs.
pub const KRON_ELEMENT_CAP: u128 = 1 << 26;

/// Scalar element type. Implemented for `f32` and `f64`.
pub trait Scalar:
    Copy
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + num_traits::Float
    + num_traits::FromPrimitive
    + 'static
{
    const BYTES: usize;
    const DTYPE: &'static str;
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const DTYPE: &'static str = "f32";
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const DTYPE: &'static str = "f64";
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!(
                "matrix dimensions must be >= 1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "Matrix::from_vec data length".into(),
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1);
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Build from nested rows; handy in tests.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::Config("matrix needs at least one row".into()));
        }
        let c = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Dimension {
                    context: format!("Matrix::from_rows row {i}"),
                    expected: c,
                    got: row.len(),
                });
            }
        }
        let data = rows.iter().flatten().copied().collect();
        Self::from_vec(r, c, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn scale(&self, alpha: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * alpha).collect(),
        }
    }

    /// Max absolute difference and its flat index, or None if shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> Option<(T, usize)> {
        if self.rows != other.rows || self.cols != other.cols {
            return None;
        }
        let mut worst = T::zero();
        let mut idx = 0;
        for (i, (&a, &b)) in self.data.iter().zip(&other.data).enumerate() {
            let d = (a - b).abs();
            if d > worst {
                worst = d;
                idx = i;
            }
        }
        Some((worst, idx))
    }
}

/// Ordered list of Kronecker factors F^1..F^N.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorChain<T> {
    factors: Vec<Matrix<T>>,
}

impl<T: Scalar> FactorChain<T> {
    pub fn new(factors: Vec<Matrix<T>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Config("factor chain must contain at least one factor".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[Matrix<T>] {
        &self.factors
    }

    pub fn n(&self) -> usize {
        self.factors.len()
    }

    /// K = product of factor row counts.
    pub fn k(&self) -> usize {
        self.factors.iter().map(|f| f.rows()).product()
    }

    /// L = product of factor column counts.
    pub fn l(&self) -> usize {
        self.factors.iter().map(|f| f.cols()).product()
    }

    /// All factors share one P x Q shape?
    pub fn uniform_shape(&self) -> Option<(usize, usize)> {
        let (p, q) = (self.factors[0].rows(), self.factors[0].cols());
        if self.factors.iter().all(|f| f.rows() == p && f.cols() == q) {
            Some((p, q))
        } else {
            None
        }
    }

    /// Widest intermediate produced while multiplying factors last to
    /// first: factors in [split, n) are already applied and contribute
    /// their Q, the rest still contribute their P.
    pub fn max_interm(&self) -> usize {
        let n = self.n();
        let mut best = 0;
        for split in 0..=n {
            let w: usize = self.factors[..split].iter().map(|f| f.rows()).product::<usize>()
                * self.factors[split..].iter().map(|f| f.cols()).product::<usize>();
            best = best.max(w);
        }
        best
    }
}

/// A Kron-Matmul problem: X is m x k, the result is m x l.
#[derive(Debug, Clone)]
pub struct Problem<T> {
    pub m: usize,
    pub chain: FactorChain<T>,
}

impl<T: Scalar> Problem<T> {
    pub fn new(m: usize, chain: FactorChain<T>) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        Ok(Self { m, chain })
    }

    pub fn k(&self) -> usize {
        self.chain.k()
    }

    pub fn l(&self) -> usize {
        self.chain.l()
    }

    pub fn max_interm(&self) -> usize {
        self.chain.max_interm()
    }
}

/// Standard dense row-major product.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.rows() {
        return Err(Error::Dimension {
            context: "matmul inner dimension".into(),
            expected: a.cols(),
            got: b.rows(),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Matrix::zeros(m, n);
    for i in 0..m {
        let arow = a.row(i);
        for kk in 0..k {
            let av = arow[kk];
            if av == T::zero() {
                continue;
            }
            let brow = b.row(kk);
            let orow = &mut out.data[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + av * brow[j];
            }
        }
    }
    Ok(out)
}

/// Materialize the Kronecker product of the chain. Desk-scale only:
/// refuses results beyond [`KRON_ELEMENT_CAP`] elements.
pub fn kron_product<T: Scalar>(chain: &FactorChain<T>) -> Result<Matrix<T>> {
    let rows: u128 = chain.factors().iter().map(|f| f.rows() as u128).product();
    let cols: u128 = chain.factors().iter().map(|f| f.cols() as u128).product();
    let elements = rows * cols;
    if elements > KRON_ELEMENT_CAP {
        return Err(Error::Capacity {
            elements,
            cap: KRON_ELEMENT_CAP,
        });
    }
    let mut acc = chain.factors()[0].clone();
    for f in &chain.factors()[1..] {
        acc = kron_pair(&acc, f);
    }
    Ok(acc)
}

/// kron(a, b): block (i, j) of the result is a[i][j] * b.
fn kron_pair<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    Matrix::from_fn(ar * br, ac * bc, |i, j| {
        a.get(i / br, j / bc) * b.get(i % br, j % bc)
    })
}

/// Ground-truth oracle: X times the materialized Kronecker matrix.
pub fn naive_kronmatmul<T: Scalar>(x: &Matrix<T>, chain: &FactorChain<T>) -> Result<Matrix<T>> {
    let k = chain.k();
    if x.cols() != k {
        return Err(Error::Dimension {
            context: "naive_kronmatmul input columns".into(),
            expected: k,
            got: x.cols(),
        });
    }
    let g = kron_product(chain)?;
    matmul(x, &g)
}
