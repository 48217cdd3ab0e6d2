//! Property tests: the structural invariants of the engine hold over
//! randomly drawn shapes and configurations, with the dense matmul against
//! the materialized Kronecker operand as the independent oracle.

use proptest::prelude::*;

use kronmul::{
    dist_kronmatmul, ftmmt_kronmatmul, fused_kronmatmul, naive_kronmatmul, shift_load_index,
    shift_store_index, shuffle_kronmatmul, sliced_kronmatmul, DistPlan, FactorChain, FuseConfig,
    Matrix, OpCounters, ProcGrid, TileConfig,
};

fn int_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    Matrix::from_fn(rows, cols, |_, _| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 33) % 17) as f64 - 8.0
    })
}

fn chain_of(shapes: &[(usize, usize)], seed: u64) -> FactorChain<f64> {
    FactorChain::new(
        shapes
            .iter()
            .enumerate()
            .map(|(i, &(p, q))| int_matrix(p, q, seed + i as u64))
            .collect(),
    )
    .unwrap()
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n % d == 0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_maps_are_inverse_bijections(
        tile_p in prop::sample::select(vec![1usize, 2, 3, 4, 6, 8, 16]),
        reg_k in 1usize..=5,
        slices_mult in 1usize..=4,
    ) {
        let slices = reg_k * slices_mult;
        let ks = slices * tile_p;
        let mut seen = vec![false; ks];
        for k in 0..ks {
            let pos = shift_store_index(k, tile_p, reg_k);
            prop_assert!(pos < ks);
            prop_assert!(!seen[pos]);
            seen[pos] = true;
            prop_assert_eq!(shift_load_index(k / tile_p, k % tile_p, tile_p, reg_k), pos);
        }
    }

    #[test]
    fn sliced_matches_dense_oracle(
        shapes in prop::collection::vec((1usize..=4, 1usize..=4), 1..=4),
        m in 1usize..=5,
        seed in 0u64..1000,
    ) {
        let chain = chain_of(&shapes, seed);
        let x = int_matrix(m, chain.k(), seed + 99);
        let want = naive_kronmatmul(&x, &chain).unwrap();
        let got = sliced_kronmatmul(&x, &chain, None, &mut OpCounters::default()).unwrap();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn baselines_match_dense_oracle(
        shapes in prop::collection::vec((1usize..=4, 1usize..=4), 1..=4),
        m in 1usize..=4,
        seed in 0u64..1000,
    ) {
        let chain = chain_of(&shapes, seed);
        let x = int_matrix(m, chain.k(), seed + 7);
        let want = naive_kronmatmul(&x, &chain).unwrap();
        prop_assert_eq!(
            shuffle_kronmatmul(&x, &chain, &mut OpCounters::default()).unwrap(),
            want.clone()
        );
        prop_assert_eq!(
            ftmmt_kronmatmul(&x, &chain, &mut OpCounters::default()).unwrap(),
            want
        );
    }

    #[test]
    fn tiling_is_bitwise_transparent(
        p_idx in 0usize..3,
        n in 1usize..=3,
        m in 1usize..=6,
        seed in 0u64..1000,
        pick in prop::array::uniform4(0usize..100),
    ) {
        // random valid tiling for a uniform square chain
        let p = [2usize, 4, 8][p_idx];
        let shapes = vec![(p, p); n];
        let chain = chain_of(&shapes, seed);
        let k = chain.k();
        let tile_k_opts: Vec<usize> =
            (1..=k / p).map(|i| i * p).filter(|t| k % t == 0).collect();
        let tile_k = tile_k_opts[pick[0] % tile_k_opts.len()];
        let tile_ps = divisors(p);
        let tile_p = tile_ps[pick[1] % tile_ps.len()];
        let reg_ps = divisors(tile_p);
        let reg_p = reg_ps[pick[2] % reg_ps.len()];
        let reg_ks = divisors(tile_k / p);
        let reg_k = reg_ks[pick[3] % reg_ks.len()];
        let cfg = TileConfig {
            tile_m: 1 + pick[0] % 3,
            tile_k,
            tile_p,
            tile_q: tile_ps[pick[2] % tile_ps.len()],
            reg_k,
            reg_p,
            reg_q: 1,
        };
        let x = int_matrix(m, k, seed + 3);
        let untiled = sliced_kronmatmul(&x, &chain, None, &mut OpCounters::default()).unwrap();
        let tiled =
            sliced_kronmatmul(&x, &chain, Some(&cfg), &mut OpCounters::default()).unwrap();
        prop_assert_eq!(tiled, untiled);
    }

    #[test]
    fn fusion_is_bitwise_transparent(
        p_idx in 0usize..2,
        n in 2usize..=4,
        m in 1usize..=4,
        fused in 2usize..=3,
        seed in 0u64..1000,
    ) {
        let p = [2usize, 4][p_idx];
        let chain = chain_of(&vec![(p, p); n], seed);
        let k = chain.k();
        let cfg = TileConfig {
            tile_m: 1,
            tile_k: k,
            tile_p: p,
            tile_q: p,
            reg_k: 1,
            reg_p: 1,
            reg_q: 1,
        };
        let fcfg = FuseConfig::new(fused.min(n), cfg);
        prop_assume!(fcfg.validate(p, p).is_ok());
        let x = int_matrix(m, k, seed + 5);
        let untiled = sliced_kronmatmul(&x, &chain, None, &mut OpCounters::default()).unwrap();
        let fused_y = fused_kronmatmul(&x, &chain, &fcfg, &mut OpCounters::default()).unwrap();
        prop_assert_eq!(fused_y, untiled);
    }

    #[test]
    fn mac_to_load_ratio_is_p_for_square_chains(
        p in 2usize..=6,
        n in 1usize..=3,
        m in 1usize..=4,
        seed in 0u64..1000,
    ) {
        let chain = chain_of(&vec![(p, p); n], seed);
        let x = int_matrix(m, chain.k(), seed + 11);
        let mut c = OpCounters::default();
        sliced_kronmatmul(&x, &chain, None, &mut c).unwrap();
        prop_assert_eq!(c.macs, p as u64 * c.main_loads);
        prop_assert_eq!(c.macs, kronmul::expected_macs(m, &chain));
    }

    #[test]
    fn kron_product_mixed_product_property(
        p1 in 1usize..=3, q1 in 1usize..=3,
        p2 in 1usize..=3, q2 in 1usize..=3,
        seed in 0u64..1000,
    ) {
        // (A kron B)(C kron D) == AC kron BD for compatible shapes
        let a = int_matrix(p1, q1, seed);
        let b = int_matrix(p2, q2, seed + 1);
        let c = int_matrix(q1, p1, seed + 2);
        let d = int_matrix(q2, p2, seed + 3);
        let ab = kronmul::kron_product(&FactorChain::new(vec![a.clone(), b.clone()]).unwrap())
            .unwrap();
        let cd = kronmul::kron_product(&FactorChain::new(vec![c.clone(), d.clone()]).unwrap())
            .unwrap();
        let lhs = kronmul::matmul(&ab, &cd).unwrap();
        let rhs = kronmul::kron_product(
            &FactorChain::new(vec![
                kronmul::matmul(&a, &c).unwrap(),
                kronmul::matmul(&b, &d).unwrap(),
            ])
            .unwrap(),
        )
        .unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn dist_simulation_matches_oracle(
        p_idx in 0usize..2,
        n in 2usize..=5,
        gm in prop::sample::select(vec![1usize, 2]),
        gk_pow in 0u32..=2,
        local in 1usize..=3,
        seed in 0u64..1000,
    ) {
        let p = [2usize, 4][p_idx];
        let chain = chain_of(&vec![(p, p); n], seed);
        let gk = 1usize << gk_pow;
        let m = gm * 2;
        let plan = DistPlan::new(m, &chain, ProcGrid { gm, gk }, local);
        prop_assume!(plan.is_ok());
        let plan = plan.unwrap();
        let x = int_matrix(m, chain.k(), seed + 21);
        let (y, ledger) = dist_kronmatmul(&x, &chain, &plan).unwrap();
        let want = sliced_kronmatmul(&x, &chain, None, &mut OpCounters::default()).unwrap();
        prop_assert_eq!(y, want);
        prop_assert_eq!(ledger.total_scalars(), plan.comm_volume(chain.k()));
        for e in &ledger.events {
            prop_assert_eq!(e.src.0, e.dst.0);
        }
    }
}
