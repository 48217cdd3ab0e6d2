//! Seeded input generation. Default data is small integers whose range is
//! chosen so every partial sum stays an exactly representable integer for
//! the element type — oracle comparisons are then bitwise exact. `--real`
//! switches to uniform reals compared under a relative tolerance.

use kronmul::{FactorChain, Matrix, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spec::ProblemSpec;

/// Largest integer range `[-r, r]` such that the worst-case output
/// magnitude `K * r^(n+1)` (a sum of K products of n+1 entries) fits in
/// the type's exact-integer window. Deep or wide chains get a smaller
/// range; shallow ones get the full +/-8.
fn int_range<T: Scalar>(spec: &ProblemSpec) -> i64 {
    let window: u128 = if T::BYTES == 4 { 1 << 24 } else { 1 << 53 };
    for r in (2..=8i64).rev() {
        let mut bound = spec.k() as u128;
        let mut fits = true;
        for _ in 0..=spec.shapes.len() {
            match bound.checked_mul(r as u128) {
                Some(b) if b <= window => bound = b,
                _ => {
                    fits = false;
                    break;
                }
            }
        }
        if fits {
            return r;
        }
    }
    1
}

pub fn gen_matrix<T: Scalar>(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
    range: Option<i64>,
) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| match range {
        None => T::from_f64(rng.gen_range(-1.0..1.0)).unwrap(),
        Some(r) => T::from_i64(rng.gen_range(-r..=r)).unwrap(),
    })
}

/// Deterministic problem instance: factors first, then X, all from one
/// seeded stream.
pub fn gen_problem<T: Scalar>(
    spec: &ProblemSpec,
    seed: u64,
    real: bool,
) -> (Matrix<T>, FactorChain<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = if real { None } else { Some(int_range::<T>(spec)) };
    let factors = spec
        .shapes
        .iter()
        .map(|&(p, q)| gen_matrix(p, q, &mut rng, range))
        .collect();
    let chain = FactorChain::new(factors).expect("spec has at least one factor");
    let x = gen_matrix(spec.m, chain.k(), &mut rng, range);
    (x, chain)
}
