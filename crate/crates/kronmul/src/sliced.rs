//! Transpose-free sliced Kron-Matmul: the untiled reference pass, the
//! cache-blocked execution engine, and the shift-caching index permutation
//! used when staging slices into scratch.
//!
//! One pass multiplies Y (M x K) with a factor F (P x Q). Each row splits
//! into S = K/P slices of P contiguous elements; output column j is the dot
//! product of slice (j mod S) with factor column (j div S). Consecutive
//! output elements come from consecutive slices and the same column, so the
//! pass writes every element at its final index and no transpose is needed.

use crate::error::{Error, Result};
use crate::tensor::{FactorChain, Matrix, Scalar};

/// Default per-block scratch budget in bytes (shared-memory analog).
pub const DEFAULT_SCRATCH_BYTES: usize = 48 * 1024;

/// Operation counters. `main_*` count traffic to the large input/output
/// buffers; `scratch_*` count traffic to the per-block staging buffers.
/// Each main-buffer input element is charged once per staging pass; factor
/// elements are not charged to main traffic (they are O(PQ) and identical
/// across algorithms).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub macs: u64,
    pub scratch_loads: u64,
    pub scratch_stores: u64,
    pub main_loads: u64,
    pub main_stores: u64,
}

impl OpCounters {
    pub fn main_accesses(&self) -> u64 {
        self.main_loads + self.main_stores
    }

    pub fn scratch_accesses(&self) -> u64 {
        self.scratch_loads + self.scratch_stores
    }
}

/// Blocking parameters for the tiled engine.
///
/// A block covers `tile_m` rows, `tile_k/P` slices, and `tile_q` factor
/// columns. The inner loop stages `tile_p` elements of every slice and
/// column into scratch, and micro-tiles of `reg_k` slices x `reg_q` columns
/// accumulate `reg_p` products at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    pub tile_m: usize,
    pub tile_k: usize,
    pub tile_p: usize,
    pub tile_q: usize,
    pub reg_k: usize,
    pub reg_p: usize,
    pub reg_q: usize,
}

impl TileConfig {
    /// Scratch footprint in scalars: the slice buffer plus the factor buffer.
    pub fn scratch_scalars(&self, p: usize) -> usize {
        self.tile_m * (self.tile_k / p) * self.tile_p + self.tile_p * self.tile_q
    }

    /// Check every invariant against a factor shape and a scratch budget.
    /// Reports the first violated invariant.
    pub fn validate(&self, p: usize, q: usize, scratch_budget_scalars: usize) -> Result<()> {
        let c = |cond: bool, msg: String| {
            if cond {
                Ok(())
            } else {
                Err(Error::Config(msg))
            }
        };
        c(
            self.tile_m >= 1 && self.tile_k >= 1 && self.tile_p >= 1 && self.tile_q >= 1,
            format!("tile extents must be >= 1: {self:?}"),
        )?;
        c(
            self.reg_k >= 1 && self.reg_p >= 1 && self.reg_q >= 1,
            format!("register extents must be >= 1: {self:?}"),
        )?;
        c(
            self.tile_k % p == 0,
            format!("tile_k={} must be a multiple of P={}", self.tile_k, p),
        )?;
        c(
            p % self.tile_p == 0,
            format!("tile_p={} must divide P={}", self.tile_p, p),
        )?;
        c(
            q % self.tile_q == 0,
            format!("tile_q={} must divide Q={}", self.tile_q, q),
        )?;
        c(
            self.tile_p % self.reg_p == 0,
            format!("reg_p={} must divide tile_p={}", self.reg_p, self.tile_p),
        )?;
        c(
            self.tile_q % self.reg_q == 0,
            format!("reg_q={} must divide tile_q={}", self.reg_q, self.tile_q),
        )?;
        c(
            (self.tile_k / p) % self.reg_k == 0,
            format!(
                "reg_k={} must divide tile_k/P={}",
                self.reg_k,
                self.tile_k / p
            ),
        )?;
        c(
            self.scratch_scalars(p) <= scratch_budget_scalars,
            format!(
                "scratch footprint {} scalars exceeds budget {}",
                self.scratch_scalars(p),
                scratch_budget_scalars
            ),
        )?;
        Ok(())
    }
}

/// Scratch position for element `k` of the slice-major staging buffer.
/// Each slice's elements rotate forward by (slice / reg_k) within its
/// tile_p-wide scratch row segment.
#[inline]
pub fn shift_store_index(k: usize, tile_p: usize, reg_k: usize) -> usize {
    let elem = k % tile_p;
    let slice = k / tile_p;
    let shift = slice / reg_k;
    slice * tile_p + (elem + shift) % tile_p
}

/// Inverse lookup: scratch position holding element `p` of `slice`.
#[inline]
pub fn shift_load_index(slice: usize, p: usize, tile_p: usize, reg_k: usize) -> usize {
    slice * tile_p + (p + slice / reg_k) % tile_p
}

/// One untiled sliced-multiply pass over strided row buffers.
pub(crate) fn sliced_multiply_strided<T: Scalar>(
    input: &[T],
    in_stride: usize,
    m: usize,
    k: usize,
    f: &Matrix<T>,
    out: &mut [T],
    out_stride: usize,
    counters: &mut OpCounters,
) {
    let p = f.rows();
    let q = f.cols();
    let s = k / p;
    debug_assert_eq!(s * p, k);
    for i in 0..m {
        let row = &input[i * in_stride..i * in_stride + k];
        let orow = &mut out[i * out_stride..i * out_stride + s * q];
        for j in 0..s * q {
            let slice = j % s;
            let col = j / s;
            let mut acc = T::zero();
            for kk in 0..p {
                acc = acc + row[slice * p + kk] * f.get(kk, col);
            }
            orow[j] = acc;
        }
    }
    counters.macs += (m * s * q * p) as u64;
    counters.main_loads += (m * k) as u64;
    counters.main_stores += (m * s * q) as u64;
}

/// Sliced-multiply Y (M x K) with F (P x Q) into a fresh M x (K/P)Q matrix.
pub fn sliced_multiply<T: Scalar>(
    y_in: &Matrix<T>,
    f: &Matrix<T>,
    counters: &mut OpCounters,
) -> Result<Matrix<T>> {
    let (k, p, q) = (y_in.cols(), f.rows(), f.cols());
    if k % p != 0 {
        return Err(Error::Dimension {
            context: "sliced_multiply: K must be divisible by P".into(),
            expected: p,
            got: k,
        });
    }
    let (m, l) = (y_in.rows(), k / p * q);
    let mut data = vec![T::zero(); m * l];
    sliced_multiply_strided(y_in.as_slice(), k, m, k, f, &mut data, l, counters);
    Matrix::from_vec(m, l, data)
}

struct TiledScratch<T> {
    xs: Vec<T>,
    fs: Vec<T>,
    acc: Vec<T>,
}

/// Tiled sliced-multiply over strided row buffers. Bit-identical to the
/// untiled pass: every output element accumulates its P products in
/// ascending element order regardless of the blocking.
#[allow(clippy::too_many_arguments)]
pub(crate) fn tiled_sliced_multiply_strided<T: Scalar>(
    input: &[T],
    in_stride: usize,
    m: usize,
    k: usize,
    f: &Matrix<T>,
    cfg: &TileConfig,
    out: &mut [T],
    out_stride: usize,
    counters: &mut OpCounters,
) -> Result<()> {
    let p = f.rows();
    let q = f.cols();
    if k % p != 0 {
        return Err(Error::Dimension {
            context: "tiled_sliced_multiply: K must be divisible by P".into(),
            expected: p,
            got: k,
        });
    }
    cfg.validate(p, q, usize::MAX)?;
    let s = k / p;
    let spt = cfg.tile_k / p; // slices per block
    let ks_row = spt * cfg.tile_p; // scratch row width
    let num_bm = m.div_ceil(cfg.tile_m);
    let num_bk = s.div_ceil(spt);
    let num_bq = q.div_ceil(cfg.tile_q);

    let mut scr = TiledScratch {
        xs: vec![T::zero(); cfg.tile_m * ks_row],
        fs: vec![T::zero(); cfg.tile_p * cfg.tile_q],
        acc: vec![T::zero(); cfg.tile_m * spt * cfg.tile_q],
    };

    for bm in 0..num_bm {
        let r0 = bm * cfg.tile_m;
        let rn = cfg.tile_m.min(m - r0);
        for bk in 0..num_bk {
            let s0 = bk * spt;
            let sn = spt.min(s - s0);
            for bq in 0..num_bq {
                let q0 = bq * cfg.tile_q;
                let qn = cfg.tile_q.min(q - q0);
                tiled_block(
                    input, in_stride, f, cfg, out, out_stride, counters, &mut scr, p, s, r0, rn,
                    s0, sn, q0, qn,
                );
            }
        }
    }
    Ok(())
}

/// One block of the tiled engine: stage, micro-multiply, store.
#[allow(clippy::too_many_arguments)]
fn tiled_block<T: Scalar>(
    input: &[T],
    in_stride: usize,
    f: &Matrix<T>,
    cfg: &TileConfig,
    out: &mut [T],
    out_stride: usize,
    counters: &mut OpCounters,
    scr: &mut TiledScratch<T>,
    p: usize,
    s: usize,
    r0: usize,
    rn: usize,
    s0: usize,
    sn: usize,
    q0: usize,
    qn: usize,
) {
    let spt = cfg.tile_k / p;
    let ks_row = spt * cfg.tile_p;
    for v in scr.acc.iter_mut() {
        *v = T::zero();
    }
    let mut xr = vec![T::zero(); cfg.reg_k * cfg.reg_p];
    let mut fr = vec![T::zero(); cfg.reg_p * cfg.reg_q];

    let mut tp = 0;
    while tp < p {
        // stage slices into Xs with the shift permutation
        for r in 0..rn {
            let irow = &input[(r0 + r) * in_stride..];
            let xrow = &mut scr.xs[r * ks_row..(r + 1) * ks_row];
            for sl in 0..sn {
                for e in 0..cfg.tile_p {
                    let pos = shift_store_index(sl * cfg.tile_p + e, cfg.tile_p, cfg.reg_k);
                    xrow[pos] = irow[(s0 + sl) * p + tp + e];
                }
            }
        }
        counters.main_loads += (rn * sn * cfg.tile_p) as u64;
        counters.scratch_stores += (rn * sn * cfg.tile_p) as u64;
        // stage factor columns into Fs directly
        for e in 0..cfg.tile_p {
            for qq in 0..qn {
                scr.fs[e * cfg.tile_q + qq] = f.get(tp + e, q0 + qq);
            }
        }
        counters.scratch_stores += (cfg.tile_p * qn) as u64;

        let mut rp = 0;
        while rp < cfg.tile_p {
            let rpn = cfg.reg_p.min(cfg.tile_p - rp);
            let mut sg = 0;
            while sg < sn {
                let sgn = cfg.reg_k.min(sn - sg);
                let mut qg = 0;
                while qg < qn {
                    let qgn = cfg.reg_q.min(qn - qg);
                    // load the factor micro-tile once per (rp, sg, qg)
                    for pp in 0..rpn {
                        for qq in 0..qgn {
                            fr[pp * cfg.reg_q + qq] = scr.fs[(rp + pp) * cfg.tile_q + qg + qq];
                        }
                    }
                    counters.scratch_loads += (rpn * qgn) as u64;
                    for r in 0..rn {
                        let xrow = &scr.xs[r * ks_row..(r + 1) * ks_row];
                        for kk in 0..sgn {
                            let sl = sg + kk;
                            for pp in 0..rpn {
                                xr[kk * cfg.reg_p + pp] =
                                    xrow[shift_load_index(sl, rp + pp, cfg.tile_p, cfg.reg_k)];
                            }
                        }
                        counters.scratch_loads += (sgn * rpn) as u64;
                        let arow =
                            &mut scr.acc[r * spt * cfg.tile_q..(r + 1) * spt * cfg.tile_q];
                        for kk in 0..sgn {
                            for qq in 0..qgn {
                                let mut acc = arow[(sg + kk) * cfg.tile_q + qg + qq];
                                for pp in 0..rpn {
                                    acc = acc
                                        + xr[kk * cfg.reg_p + pp] * fr[pp * cfg.reg_q + qq];
                                }
                                arow[(sg + kk) * cfg.tile_q + qg + qq] = acc;
                            }
                        }
                        counters.macs += (sgn * qgn * rpn) as u64;
                    }
                    qg += cfg.reg_q;
                }
                sg += cfg.reg_k;
            }
            rp += cfg.reg_p;
        }
        tp += cfg.tile_p;
    }

    // store: output column = (global factor column) * S + global slice
    for r in 0..rn {
        let orow = &mut out[(r0 + r) * out_stride..];
        let arow = &scr.acc[r * spt * cfg.tile_q..(r + 1) * spt * cfg.tile_q];
        for qq in 0..qn {
            for sl in 0..sn {
                orow[(q0 + qq) * s + s0 + sl] = arow[sl * cfg.tile_q + qq];
            }
        }
    }
    counters.main_stores += (rn * qn * sn) as u64;
}

/// Tiled sliced-multiply of a matrix with one factor.
pub fn tiled_sliced_multiply<T: Scalar>(
    y_in: &Matrix<T>,
    f: &Matrix<T>,
    cfg: &TileConfig,
    counters: &mut OpCounters,
) -> Result<Matrix<T>> {
    let (m, k, p, q) = (y_in.rows(), y_in.cols(), f.rows(), f.cols());
    if k % p != 0 {
        return Err(Error::Dimension {
            context: "tiled_sliced_multiply: K must be divisible by P".into(),
            expected: p,
            got: k,
        });
    }
    let l = k / p * q;
    let mut data = vec![T::zero(); m * l];
    tiled_sliced_multiply_strided(y_in.as_slice(), k, m, k, f, cfg, &mut data, l, counters)?;
    Matrix::from_vec(m, l, data)
}

/// Full Kron-Matmul by repeated sliced multiplies, factors last to first,
/// over two ping-pong buffers of width max_interm. `cfg = None` runs the
/// untiled pass; `Some(cfg)` runs the tiled engine every pass.
pub fn sliced_kronmatmul<T: Scalar>(
    x: &Matrix<T>,
    chain: &FactorChain<T>,
    cfg: Option<&TileConfig>,
    counters: &mut OpCounters,
) -> Result<Matrix<T>> {
    let k = chain.k();
    if x.cols() != k {
        return Err(Error::Dimension {
            context: "sliced_kronmatmul input columns".into(),
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
        let factor_index = chain.n() - rev_idx; // 1-based, rightmost applied first
        if kcur % f.rows() != 0 {
            return Err(Error::Dimension {
                context: format!("sliced_kronmatmul at factor {factor_index}"),
                expected: f.rows(),
                got: kcur,
            });
        }
        match cfg {
            Some(cfg) => {
                cfg.validate(f.rows(), f.cols(), usize::MAX)?;
                tiled_sliced_multiply_strided(
                    &a, stride, m, kcur, f, cfg, &mut b, stride, counters,
                )?;
            }
            None => sliced_multiply_strided(&a, stride, m, kcur, f, &mut b, stride, counters),
        }
        kcur = kcur / f.rows() * f.cols();
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

/// Exact MAC count of `sliced_kronmatmul`: each output element of each pass
/// costs P multiply-adds. For square P x P factors this is N*M*P*K.
pub fn expected_macs<T: Scalar>(m: usize, chain: &FactorChain<T>) -> u64 {
    let mut kcur = chain.k();
    let mut total = 0u64;
    for f in chain.factors().iter().rev() {
        let l = kcur / f.rows() * f.cols();
        total += (m * l * f.rows()) as u64;
        kcur = l;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::naive_kronmatmul;

    fn mat(rows: &[Vec<f64>]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn output_columns_source_from_expected_slices() {
        // K=4, P=Q=2, S=2: j=0 -> slice 0 col 0; j=1 -> slice 1 col 0;
        // j=2 -> slice 0 col 1
        let x = mat(&[vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]]);
        let f = mat(&[vec![1.0, 10.0], vec![100.0, 1000.0]]);
        let y = sliced_multiply(&x, &f, &mut OpCounters::default()).unwrap();
        for i in 0..2 {
            let r = x.row(i);
            assert_eq!(y.get(i, 0), r[0] * f.get(0, 0) + r[1] * f.get(1, 0));
            assert_eq!(y.get(i, 1), r[2] * f.get(0, 0) + r[3] * f.get(1, 0));
            assert_eq!(y.get(i, 2), r[0] * f.get(0, 1) + r[1] * f.get(1, 1));
            assert_eq!(y.get(i, 3), r[2] * f.get(0, 1) + r[3] * f.get(1, 1));
        }
    }

    #[test]
    fn identity_factor_permutes_columns() {
        // f = I_P: output column j holds input element (j mod S)*P + j div S
        let k = 8;
        let p = 2;
        let s = k / p;
        let x = Matrix::from_fn(1, k, |_, j| j as f64);
        let y = sliced_multiply(&x, &Matrix::identity(p), &mut OpCounters::default()).unwrap();
        for j in 0..k {
            assert_eq!(y.get(0, j), ((j % s) * p + j / s) as f64);
        }
        // single slice (P == K): identity output
        let y = sliced_multiply(&x, &Matrix::identity(k), &mut OpCounters::default()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn hand_evaluated_single_factor() {
        let x = mat(&[vec![1.0, 2.0, 3.0, 4.0]]);
        let f = mat(&[vec![1.0, 10.0], vec![100.0, 1000.0]]);
        let y = sliced_multiply(&x, &f, &mut OpCounters::default()).unwrap();
        assert_eq!(y, mat(&[vec![201.0, 403.0, 2010.0, 4030.0]]));
    }

    #[test]
    fn indivisible_k_is_rejected() {
        let x = Matrix::<f64>::zeros(1, 5);
        let f = Matrix::<f64>::zeros(2, 2);
        assert!(matches!(
            sliced_multiply(&x, &f, &mut OpCounters::default()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn shift_store_fixture() {
        // tile_p=4, reg_k=2: slice 2 shifts forward by 1
        assert_eq!(shift_store_index(8, 4, 2), 9);
        assert_eq!(shift_store_index(9, 4, 2), 10);
        assert_eq!(shift_store_index(10, 4, 2), 11);
        assert_eq!(shift_store_index(11, 4, 2), 8);
        // slice 4 (shift 2), element 0 rotates to position 18
        assert_eq!(shift_store_index(16, 4, 2), 18);
        // shift 0: identity placement
        for k in 0..8 {
            assert_eq!(shift_store_index(k, 4, 2), k);
        }
    }

    #[test]
    fn shift_load_fixture() {
        assert_eq!(shift_load_index(2, 0, 4, 2), 9);
        assert_eq!(shift_load_index(4, 0, 4, 2), 18);
    }

    #[test]
    fn shift_maps_are_inverse_bijections() {
        for tile_p in [2usize, 4, 8, 16] {
            for reg_k in 1..=4 {
                let slices = 4 * reg_k;
                let ks = slices * tile_p;
                let mut seen = vec![false; ks];
                for k in 0..ks {
                    let pos = shift_store_index(k, tile_p, reg_k);
                    assert!(!seen[pos], "collision at tile_p={tile_p} reg_k={reg_k}");
                    seen[pos] = true;
                    let (slice, elem) = (k / tile_p, k % tile_p);
                    assert_eq!(shift_load_index(slice, elem, tile_p, reg_k), pos);
                }
            }
        }
    }

    #[test]
    fn tiled_block_layout_matches_hand_trace() {
        // M=2, K=512, P=Q=8 with the worked tiling example: 64 slices/row,
        // block (bm=0, bk=0, bq=0) produces 128 elements of row 0, and the
        // reg_k=2 elements for column 1 start at output index 0 while the
        // elements for column 2 start at 1 * (512/8) = 64.
        let cfg = TileConfig {
            tile_m: 1,
            tile_k: 512,
            tile_q: 2,
            tile_p: 4,
            reg_p: 2,
            reg_q: 2,
            reg_k: 2,
        };
        cfg.validate(8, 8, usize::MAX).unwrap();
        let x = Matrix::from_fn(2, 512, |i, j| ((i * 512 + j) % 17) as f64 - 8.0);
        let f = Matrix::from_fn(8, 8, |i, j| ((3 * i + j) % 7) as f64 - 3.0);
        let mut c = OpCounters::default();
        let tiled = tiled_sliced_multiply(&x, &f, &cfg, &mut c).unwrap();
        let plain = sliced_multiply(&x, &f, &mut OpCounters::default()).unwrap();
        assert_eq!(tiled, plain);
        // column c's elements start at output index c * (K/P)
        for col in 0..8 {
            let mut acc = 0.0;
            for kk in 0..8 {
                acc += x.get(0, kk) * f.get(kk, col);
            }
            assert_eq!(tiled.get(0, col * 64), acc);
        }
    }

    #[test]
    fn untiled_limit_is_identical() {
        let cfg = TileConfig {
            tile_m: 1,
            tile_k: 16,
            tile_p: 4,
            tile_q: 4,
            reg_k: 1,
            reg_p: 1,
            reg_q: 1,
        };
        let x = Matrix::from_fn(3, 16, |i, j| ((i * 16 + j) % 11) as f64 - 5.0);
        let f = Matrix::from_fn(4, 4, |i, j| ((i + 2 * j) % 5) as f64 - 2.0);
        let tiled = tiled_sliced_multiply(&x, &f, &cfg, &mut OpCounters::default()).unwrap();
        let plain = sliced_multiply(&x, &f, &mut OpCounters::default()).unwrap();
        assert_eq!(tiled, plain);
    }

    #[test]
    fn remainder_rows_are_processed() {
        // M=5 with tile_m=2: last block covers the single remainder row
        let cfg = TileConfig {
            tile_m: 2,
            tile_k: 4,
            tile_p: 2,
            tile_q: 1,
            reg_k: 2,
            reg_p: 2,
            reg_q: 1,
        };
        let x = Matrix::from_fn(5, 8, |i, j| ((i * 8 + j) % 13) as f64 - 6.0);
        let f = Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64 - 2.0);
        let tiled = tiled_sliced_multiply(&x, &f, &cfg, &mut OpCounters::default()).unwrap();
        let plain = sliced_multiply(&x, &f, &mut OpCounters::default()).unwrap();
        assert_eq!(tiled, plain);
    }

    #[test]
    fn kronmatmul_identity_chain() {
        let x = Matrix::from_fn(2, 8, |i, j| (i * 8 + j) as f64);
        let chain =
            FactorChain::new(vec![Matrix::identity(2), Matrix::identity(2), Matrix::identity(2)])
                .unwrap();
        let y = sliced_kronmatmul(&x, &chain, None, &mut OpCounters::default()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn kronmatmul_matches_oracle_mixed_shapes() {
        let f1 = Matrix::from_fn(3, 5, |i, j| ((i * 5 + j) % 7) as f64 - 3.0);
        let f2 = Matrix::from_fn(2, 7, |i, j| ((i * 7 + j) % 5) as f64 - 2.0);
        let f3 = Matrix::from_fn(4, 2, |i, j| ((i * 2 + j) % 3) as f64 - 1.0);
        let chain = FactorChain::new(vec![f1, f2, f3]).unwrap();
        let x = Matrix::from_fn(3, chain.k(), |i, j| ((i + j) % 9) as f64 - 4.0);
        let y = sliced_kronmatmul(&x, &chain, None, &mut OpCounters::default()).unwrap();
        assert_eq!(y, naive_kronmatmul(&x, &chain).unwrap());
        assert_eq!(y.cols(), chain.l());
    }

    #[test]
    fn mac_count_is_exact() {
        let f = Matrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let chain = FactorChain::new(vec![f.clone(), f.clone(), f]).unwrap();
        let x = Matrix::from_fn(5, chain.k(), |i, j| ((i + j) % 3) as f64);
        let mut c = OpCounters::default();
        sliced_kronmatmul(&x, &chain, None, &mut c).unwrap();
        assert_eq!(c.macs, expected_macs(5, &chain));
        // square factors: N*M*P*K
        assert_eq!(c.macs, (3 * 5 * 4 * 64) as u64);
    }

    #[test]
    fn invalid_config_reports_violation() {
        let cfg = TileConfig {
            tile_m: 1,
            tile_k: 6, // not a multiple of P=4
            tile_p: 4,
            tile_q: 4,
            reg_k: 1,
            reg_p: 1,
            reg_q: 1,
        };
        let err = cfg.validate(4, 4, usize::MAX).unwrap_err();
        assert!(err.to_string().contains("multiple of P"));
    }
}
