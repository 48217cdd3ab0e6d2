//! Multi-factor fusion: run several consecutive sliced multiplies on a
//! scratch-resident column block, then remap the block back to the global
//! intermediate in one store pass. Main-buffer traffic drops from one
//! round trip per factor to one per fused group.

use crate::error::{Error, Result};
use crate::sliced::{
    tiled_sliced_multiply_strided, OpCounters, TileConfig,
};
use crate::tensor::{FactorChain, Matrix, Scalar};

/// Soft validity guard from the scratch-capacity regime fusion was
/// designed for; override with [`FuseConfig::allow_large_factors`].
pub const FUSE_FACTOR_LIMIT: usize = 32;

/// Largest number of consecutive sliced multiplies a tile_k-wide scratch
/// block can absorb: floor(log_p tile_k).
pub fn max_fused(p: usize, tile_k: usize) -> usize {
    if p < 2 {
        return 1;
    }
    let mut f = 0;
    let mut pow = 1usize;
    while pow <= tile_k / p {
        pow *= p;
        f += 1;
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuseConfig {
    pub fused: usize,
    pub base: TileConfig,
    pub allow_large_factors: bool,
}

impl FuseConfig {
    pub fn new(fused: usize, base: TileConfig) -> Self {
        Self {
            fused,
            base,
            allow_large_factors: false,
        }
    }

    /// Validate against a factor shape. Fusing more than one factor
    /// requires the whole slice in scratch (tile_p == P), square factors,
    /// and power-of-P alignment between tile_k and the factor.
    pub fn validate(&self, p: usize, q: usize) -> Result<()> {
        if self.fused < 1 {
            return Err(Error::Config("fused must be >= 1".into()));
        }
        if self.fused == 1 {
            return Ok(());
        }
        if self.base.tile_p != p {
            return Err(Error::Config(format!(
                "fusion requires tile_p == P (got tile_p={}, P={})",
                self.base.tile_p, p
            )));
        }
        if p != q {
            return Err(Error::Config(format!(
                "fusion requires square factors, got {p}x{q}"
            )));
        }
        let bound = max_fused(p, self.base.tile_k);
        if self.fused > bound {
            return Err(Error::Config(format!(
                "fused={} exceeds floor(log_{} {}) = {}",
                self.fused, p, self.base.tile_k, bound
            )));
        }
        if !self.allow_large_factors && (p > FUSE_FACTOR_LIMIT || q > FUSE_FACTOR_LIMIT) {
            return Err(Error::Config(format!(
                "fusion limited to P,Q <= {FUSE_FACTOR_LIMIT} by default (got {p}x{q})"
            )));
        }
        if p.pow(self.fused as u32) > self.base.tile_k
            || self.base.tile_k % p.pow(self.fused as u32) != 0
        {
            return Err(Error::Config(format!(
                "tile_k={} must be divisible by P^fused={}",
                self.base.tile_k,
                p.pow(self.fused as u32)
            )));
        }
        Ok(())
    }
}

/// Global column for scratch column `c` of block `block_idx` after `fused`
/// in-scratch sliced multiplies on a tile_k-wide block of a K-wide
/// intermediate. Sum of the scaled slice index, the scaled fused-slice
/// index, and the element offset within the fused slice.
pub fn fused_store_index(
    c: usize,
    block_idx: usize,
    k: usize,
    p: usize,
    tile_k: usize,
    fused: usize,
) -> usize {
    let xg_slices = k / p;
    let xs_slices = tile_k / p;
    let p_f = p.pow(fused as u32);
    let xg_fuse_slices = k / p_f;
    let xs_fuse_slices = tile_k / p_f;
    let slice_part = (c / xs_slices) * xg_slices;
    let fused_part = ((c % xs_slices) / xs_fuse_slices) * xg_fuse_slices;
    let elem = block_idx * xs_fuse_slices + c % xs_fuse_slices;
    slice_part + fused_part + elem
}

/// Split the chain (processed last to first) into fused groups. A group
/// takes up to `fused` consecutive same-shape square factors that satisfy
/// the scratch alignment at the current width; anything else falls back to
/// a group of one.
pub(crate) fn plan_groups<T: Scalar>(chain: &FactorChain<T>, fcfg: &FuseConfig) -> Vec<usize> {
    let factors = chain.factors();
    let n = factors.len();
    let tile_k = fcfg.base.tile_k;
    let mut kcur = chain.k();
    let mut groups = Vec::new();
    let mut idx = n; // factors [idx-g, idx) form the next group, processed right to left
    while idx > 0 {
        let p = factors[idx - 1].rows();
        let q = factors[idx - 1].cols();
        let mut g = 1;
        if fcfg.fused > 1
            && p == q
            && p >= 2
            && fcfg.base.tile_p == p
            && tile_k % p == 0
            && kcur % tile_k == 0
            && (fcfg.allow_large_factors || p <= FUSE_FACTOR_LIMIT)
        {
            while g < fcfg.fused
                && idx > g
                && factors[idx - g - 1].rows() == p
                && factors[idx - g - 1].cols() == q
                && p.pow((g + 1) as u32) <= tile_k
                && tile_k % p.pow((g + 1) as u32) == 0
            {
                g += 1;
            }
        }
        for i in 0..g {
            let f = &factors[idx - 1 - i];
            kcur = kcur / f.rows() * f.cols();
        }
        groups.push(g);
        idx -= g;
    }
    groups
}

/// Kron-Matmul with fused groups of sliced multiplies. Groups of one run
/// the plain tiled engine; larger groups keep intermediates in scratch and
/// store once per group via [`fused_store_index`].
pub fn fused_kronmatmul<T: Scalar>(
    x: &Matrix<T>,
    chain: &FactorChain<T>,
    fcfg: &FuseConfig,
    counters: &mut OpCounters,
) -> Result<Matrix<T>> {
    let k = chain.k();
    if x.cols() != k {
        return Err(Error::Dimension {
            context: "fused_kronmatmul input columns".into(),
            expected: k,
            got: x.cols(),
        });
    }
    if fcfg.fused < 1 {
        return Err(Error::Config("fused must be >= 1".into()));
    }
    let uniform = chain.uniform_shape().is_some();
    if fcfg.fused > 1 {
        if let Some((p, q)) = chain.uniform_shape() {
            // uniform chains validate up front so config errors surface
            // before any work happens
            fcfg.validate(p, q)?;
        }
    }

    let m = x.rows();
    let stride = chain.max_interm();
    let mut a = vec![T::zero(); m * stride];
    let mut b = vec![T::zero(); m * stride];
    for i in 0..m {
        a[i * stride..i * stride + k].copy_from_slice(x.row(i));
    }
    let mut kcur = k;
    let groups = plan_groups(chain, fcfg);
    let mut idx = chain.n();
    for &g in &groups {
        let group = &chain.factors()[idx - g..idx];
        if g == 1 {
            let f = &group[0];
            if kcur % f.rows() != 0 {
                return Err(Error::Dimension {
                    context: format!("fused_kronmatmul at factor {idx}"),
                    expected: f.rows(),
                    got: kcur,
                });
            }
            if uniform {
                fcfg.base.validate(f.rows(), f.cols(), usize::MAX)?;
            }
            if fcfg.base.validate(f.rows(), f.cols(), usize::MAX).is_ok()
                && kcur % f.rows() == 0
            {
                tiled_sliced_multiply_strided(
                    &a, stride, m, kcur, f, &fcfg.base, &mut b, stride, counters,
                )?;
            } else {
                // mismatched boundary of a mixed-shape chain: the base
                // config does not fit this factor, run it untiled
                crate::sliced::sliced_multiply_strided(
                    &a, stride, m, kcur, f, &mut b, stride, counters,
                );
            }
            kcur = kcur / f.rows() * f.cols();
        } else {
            fused_group_pass(&a, &mut b, stride, m, kcur, group, fcfg, counters)?;
            // square factors: width unchanged
        }
        std::mem::swap(&mut a, &mut b);
        idx -= g;
    }
    let mut out = Matrix::zeros(m, kcur);
    for i in 0..m {
        for j in 0..kcur {
            out.set(i, j, a[i * stride + j]);
        }
    }
    Ok(out)
}

/// One fused pass: per (row block, column block), load tile_k columns into
/// scratch, run the group's sliced multiplies in scratch (last factor
/// first), and store through the fused index map.
#[allow(clippy::too_many_arguments)]
fn fused_group_pass<T: Scalar>(
    a: &[T],
    b: &mut [T],
    stride: usize,
    m: usize,
    kcur: usize,
    group: &[Matrix<T>],
    fcfg: &FuseConfig,
    counters: &mut OpCounters,
) -> Result<()> {
    let g = group.len();
    let p = group[0].rows();
    let tile_k = fcfg.base.tile_k;
    let tile_m = fcfg.base.tile_m;
    let num_bk = kcur / tile_k;
    let st = tile_k / p;
    let mut s1 = vec![T::zero(); tile_m * tile_k];
    let mut s2 = vec![T::zero(); tile_m * tile_k];
    let num_bm = m.div_ceil(tile_m);
    for bm in 0..num_bm {
        let r0 = bm * tile_m;
        let rn = tile_m.min(m - r0);
        for bk in 0..num_bk {
            for r in 0..rn {
                s1[r * tile_k..(r + 1) * tile_k]
                    .copy_from_slice(&a[(r0 + r) * stride + bk * tile_k..][..tile_k]);
            }
            counters.main_loads += (rn * tile_k) as u64;
            counters.scratch_stores += (rn * tile_k) as u64;
            for f in group.iter().rev() {
                for r in 0..rn {
                    let row = &s1[r * tile_k..(r + 1) * tile_k];
                    let orow = &mut s2[r * tile_k..(r + 1) * tile_k];
                    for j in 0..tile_k {
                        let slice = j % st;
                        let col = j / st;
                        let mut acc = T::zero();
                        for pp in 0..p {
                            acc = acc + row[slice * p + pp] * f.get(pp, col);
                        }
                        orow[j] = acc;
                    }
                }
                counters.macs += (rn * tile_k * p) as u64;
                counters.scratch_loads += (rn * tile_k * p) as u64;
                counters.scratch_stores += (rn * tile_k) as u64;
                std::mem::swap(&mut s1, &mut s2);
            }
            for r in 0..rn {
                let row = &s1[r * tile_k..(r + 1) * tile_k];
                let orow = &mut b[(r0 + r) * stride..(r0 + r) * stride + kcur];
                for (c, &v) in row.iter().enumerate() {
                    orow[fused_store_index(c, bk, kcur, p, tile_k, g)] = v;
                }
            }
            counters.scratch_loads += (rn * tile_k) as u64;
            counters.main_stores += (rn * tile_k) as u64;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sliced::{sliced_kronmatmul, sliced_multiply};
    use crate::tensor::naive_kronmatmul;

    fn int_matrix(rows: usize, cols: usize, seed: usize) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |i, j| {
            ((seed * 13 + i * 5 + j * 3) % 15) as f64 - 7.0
        })
    }

    fn base_cfg(tile_k: usize, p: usize, q: usize) -> TileConfig {
        TileConfig {
            tile_m: 1,
            tile_k,
            tile_p: p,
            tile_q: q,
            reg_k: 1,
            reg_p: 1,
            reg_q: 1,
        }
    }

    #[test]
    fn store_index_hand_fixture() {
        // K=256, P=4, tile_k=128, fused=2, block 0, c=41 -> 64 + 16 + 1
        assert_eq!(fused_store_index(41, 0, 256, 4, 128, 2), 81);
    }

    #[test]
    fn store_index_identity_without_fusion() {
        // fused=1, tile_k=K, single block: identity map
        for c in 0..64 {
            assert_eq!(fused_store_index(c, 0, 64, 4, 64, 1), c);
        }
    }

    #[test]
    fn store_index_blocks_partition_range() {
        // both blocks of the worked 256-wide example tile [0, 256) exactly
        let mut seen = vec![false; 256];
        for block in 0..2 {
            for c in 0..128 {
                let g = fused_store_index(c, block, 256, 4, 128, 2);
                assert!(!seen[g], "duplicate target {g}");
                seen[g] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn store_index_matches_two_unfused_passes() {
        // scratch result of two in-block multiplies, remapped through the
        // index map, must equal the composition of two full-width passes
        let p = 4;
        let tile_k = 128;
        let factors: Vec<_> = (0..4).map(|i| int_matrix(p, p, 40 + i)).collect();
        let x = int_matrix(1, 256, 42);
        let mut c = OpCounters::default();
        let mut unfused = x.clone();
        for f in factors.iter().rev() {
            unfused = sliced_multiply(&unfused, f, &mut c).unwrap();
        }
        let chain = FactorChain::new(factors).unwrap();
        let mut fcfg = FuseConfig::new(2, base_cfg(tile_k, p, p));
        fcfg.allow_large_factors = false;
        let fused = fused_kronmatmul(&x, &chain, &fcfg, &mut OpCounters::default()).unwrap();
        assert_eq!(fused, unfused);
    }

    #[test]
    fn fused_square_chain_matches_oracle() {
        // X 1x256, four 4x4 factors, tile_k=128, fused=2
        let factors: Vec<_> = (0..4).map(|i| int_matrix(4, 4, 50 + i)).collect();
        let chain = FactorChain::new(factors).unwrap();
        let x = int_matrix(1, 256, 54);
        let fcfg = FuseConfig::new(2, base_cfg(128, 4, 4));
        let y = fused_kronmatmul(&x, &chain, &fcfg, &mut OpCounters::default()).unwrap();
        assert_eq!(y, naive_kronmatmul(&x, &chain).unwrap());
    }

    #[test]
    fn fused_one_equals_tiled_path() {
        let factors: Vec<_> = (0..3).map(|i| int_matrix(4, 4, 60 + i)).collect();
        let chain = FactorChain::new(factors).unwrap();
        let x = int_matrix(2, 64, 63);
        let cfg = base_cfg(64, 4, 4);
        let mut c_fused = OpCounters::default();
        let mut c_tiled = OpCounters::default();
        let a = fused_kronmatmul(&x, &chain, &FuseConfig::new(1, cfg), &mut c_fused).unwrap();
        let b = sliced_kronmatmul(&x, &chain, Some(&cfg), &mut c_tiled).unwrap();
        assert_eq!(a, b);
        assert_eq!(c_fused, c_tiled);
    }

    #[test]
    fn traffic_decreases_with_fused() {
        let factors: Vec<_> = (0..5).map(|i| int_matrix(8, 8, 70 + i)).collect();
        let chain = FactorChain::new(factors).unwrap();
        let x = int_matrix(16, chain.k(), 75);
        // the Kron operand is too wide for the dense oracle here; the
        // untiled pass is itself oracle-checked on smaller shapes
        let want = sliced_kronmatmul(&x, &chain, None, &mut OpCounters::default()).unwrap();
        let mut traffic = Vec::new();
        for fused in 1..=3 {
            let mut c = OpCounters::default();
            let fcfg = FuseConfig::new(fused, base_cfg(512, 8, 8));
            let y = fused_kronmatmul(&x, &chain, &fcfg, &mut c).unwrap();
            assert_eq!(y, want, "fused={fused}");
            traffic.push(c.main_loads + c.main_stores);
        }
        assert!(traffic[0] > traffic[1] && traffic[1] > traffic[2], "{traffic:?}");
    }

    #[test]
    fn bound_violations_are_config_errors() {
        // P=4, tile_k=128: max fused is 3
        assert_eq!(max_fused(4, 128), 3);
        let fcfg = FuseConfig::new(4, base_cfg(128, 4, 4));
        assert!(matches!(fcfg.validate(4, 4), Err(Error::Config(_))));
        // tile_p != P with fused > 1
        let mut bad = base_cfg(128, 4, 4);
        bad.tile_p = 2;
        let fcfg = FuseConfig::new(2, bad);
        assert!(matches!(fcfg.validate(4, 4), Err(Error::Config(_))));
        // max itself is fine
        let fcfg = FuseConfig::new(3, base_cfg(128, 4, 4));
        fcfg.validate(4, 4).unwrap();
    }

    #[test]
    fn mixed_shape_boundary_falls_back() {
        // three 5x5 factors then a 2x2: fused groups form only where the
        // shape run and the power alignment allow, result still exact
        let mut factors: Vec<_> = (0..3).map(|i| int_matrix(5, 5, 80 + i)).collect();
        factors.push(int_matrix(2, 2, 83));
        let chain = FactorChain::new(factors).unwrap();
        let x = int_matrix(2, chain.k(), 84);
        let cfg = TileConfig {
            tile_m: 1,
            tile_k: 250,
            tile_p: 5,
            tile_q: 5,
            reg_k: 1,
            reg_p: 1,
            reg_q: 1,
        };
        let fcfg = FuseConfig::new(2, cfg);
        let y = fused_kronmatmul(&x, &chain, &fcfg, &mut OpCounters::default()).unwrap();
        assert_eq!(y, naive_kronmatmul(&x, &chain).unwrap());
    }
}
