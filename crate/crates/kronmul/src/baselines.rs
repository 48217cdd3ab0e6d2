//! Prior Kron-Matmul algorithms, kept as comparison baselines and as
//! secondary oracles: the shuffle algorithm (reshape / matmul / explicit
//! transpose) and the fused tensor-matrix multiply transpose (FTMMT).

use crate::error::{Error, Result};
use crate::sliced::OpCounters;
use crate::tensor::{FactorChain, Matrix, Scalar};

/// Shuffle algorithm. Per factor, last to first: reshape the M x K input to
/// (M*K/P) x P, matmul with the factor, then an explicit transpose pass
/// swaps the last two dims of the M x (K/P) x Q view and flattens. The
/// transpose is a separate pass whose reads and writes land in the main
/// counters; that pass is the overhead this baseline is measured by.
pub fn shuffle_kronmatmul<T: Scalar>(
    x: &Matrix<T>,
    chain: &FactorChain<T>,
    counters: &mut OpCounters,
) -> Result<Matrix<T>> {
    let k = chain.k();
    if x.cols() != k {
        return Err(Error::Dimension {
            context: "shuffle_kronmatmul input columns".into(),
            expected: k,
            got: x.cols(),
        });
    }
    let m = x.rows();
    let stride = chain.max_interm();
    let mut a = vec![T::zero(); m * stride];
    let mut b = vec![T::zero(); m * stride];
    // transient matmul result before the transpose pass
    let mut tmp = vec![T::zero(); m * stride];
    for i in 0..m {
        a[i * stride..i * stride + k].copy_from_slice(x.row(i));
    }
    let mut kcur = k;
    for (rev_idx, f) in chain.factors().iter().rev().enumerate() {
        let factor_index = chain.n() - rev_idx;
        let (p, q) = (f.rows(), f.cols());
        if kcur % p != 0 {
            return Err(Error::Dimension {
                context: format!("shuffle_kronmatmul at factor {factor_index}"),
                expected: p,
                got: kcur,
            });
        }
        let s = kcur / p;
        let l = s * q;
        // (a) reshape to (M*S) x P and matmul with the factor into tmp,
        // viewed as M x S x Q. Each input element is charged once, as if
        // staged; this matches the discipline of the other algorithms.
        for i in 0..m {
            let row = &a[i * stride..i * stride + kcur];
            let trow = &mut tmp[i * stride..i * stride + l];
            for sl in 0..s {
                for qq in 0..q {
                    let mut acc = T::zero();
                    for pp in 0..p {
                        acc = acc + row[sl * p + pp] * f.get(pp, qq);
                    }
                    trow[sl * q + qq] = acc;
                }
            }
        }
        counters.macs += (m * l * p) as u64;
        counters.main_loads += (m * kcur) as u64;
        counters.main_stores += (m * l) as u64;
        // (b)+(c) separate transpose pass: M x S x Q -> M x Q x S, flattened
        for i in 0..m {
            let trow = &tmp[i * stride..i * stride + l];
            let brow = &mut b[i * stride..i * stride + l];
            for sl in 0..s {
                for qq in 0..q {
                    brow[qq * s + sl] = trow[sl * q + qq];
                }
            }
        }
        counters.main_loads += (m * l) as u64;
        counters.main_stores += (m * l) as u64;
        kcur = l;
        std::mem::swap(&mut a, &mut b);
    }
    let mut out = Matrix::zeros(m, kcur);
    for i in 0..m {
        for j in 0..kcur {
            out.set(i, j, a[i * stride + j]);
        }
    }
    Ok(out)
}

/// FTMMT: view the input as an M x (K/P) x P tensor, contract the last
/// dimension with the factor, and fuse the transpose into the write. No
/// separate shuffle pass.
pub fn ftmmt_kronmatmul<T: Scalar>(
    x: &Matrix<T>,
    chain: &FactorChain<T>,
    counters: &mut OpCounters,
) -> Result<Matrix<T>> {
    let k = chain.k();
    if x.cols() != k {
        return Err(Error::Dimension {
            context: "ftmmt_kronmatmul input columns".into(),
            expected: k,
            got: x.cols(),
        });
    }
    let m = x.rows();
    let stride = chain.max_interm();
    let mut a = vec![T::zero(); m * stride];
    let mut b = vec![T::zero(); m * stride];
    for i in 0..m {
        a[i * stride..i * stride + k].copy_from_slice(x.row(i));
    }
    let mut kcur = k;
    for (rev_idx, f) in chain.factors().iter().rev().enumerate() {
        let factor_index = chain.n() - rev_idx;
        let (p, q) = (f.rows(), f.cols());
        if kcur % p != 0 {
            return Err(Error::Dimension {
                context: format!("ftmmt_kronmatmul at factor {factor_index}"),
                expected: p,
                got: kcur,
            });
        }
        let s = kcur / p;
        for i in 0..m {
            let row = &a[i * stride..i * stride + kcur];
            let brow = &mut b[i * stride..i * stride + s * q];
            for sl in 0..s {
                for qq in 0..q {
                    let mut acc = T::zero();
                    for pp in 0..p {
                        acc = acc + row[sl * p + pp] * f.get(pp, qq);
                    }
                    // transposed write: (slice, col) lands at col*S + slice
                    brow[qq * s + sl] = acc;
                }
            }
        }
        counters.macs += (m * s * q * p) as u64;
        counters.main_loads += (m * kcur) as u64;
        counters.main_stores += (m * s * q) as u64;
        kcur = s * q;
        std::mem::swap(&mut a, &mut b);
    }
    let mut out = Matrix::zeros(m, kcur);
    for i in 0..m {
        for j in 0..kcur {
            out.set(i, j, a[i * stride + j]);
        }
    }
    Ok(out)
}
