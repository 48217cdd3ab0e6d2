//! Transpose-free Kronecker matrix-matrix multiplication.
//!
//! Computes X (A_1 kron ... kron A_n) as a chain of sliced multiplies,
//! one per factor, each writing its output at final positions so no
//! transpose or shuffle pass is ever needed. On top of the core pass sit a
//! cache-blocked engine with a shift-cached scratch layout, multi-factor
//! fusion that keeps short chains of intermediates in scratch, a tile
//! autotuner, and a deterministic simulator for multi-worker execution.

pub mod autotune;
pub mod baselines;
pub mod distsim;
pub mod error;
pub mod fusion;
pub mod sliced;
pub mod tensor;

pub use autotune::{
    autotune, cache_append, cache_lookup, enumerate_configs, enumerate_configs_capped,
    estimate_counters, CacheRecord, Candidate, CostMode, TuneResult, TuneSpace,
};
pub use baselines::{ftmmt_kronmatmul, shuffle_kronmatmul};
pub use distsim::{
    dist_kronmatmul, select_grid, CommEvent, CommLedger, DistPlan, ProcGrid, Scenario,
};
pub use error::{Error, Result};
pub use fusion::{fused_kronmatmul, fused_store_index, max_fused, FuseConfig};
pub use sliced::{
    expected_macs, shift_load_index, shift_store_index, sliced_kronmatmul, sliced_multiply,
    tiled_sliced_multiply, OpCounters, TileConfig, DEFAULT_SCRATCH_BYTES,
};
pub use tensor::{
    kron_product, matmul, naive_kronmatmul, FactorChain, Matrix, Problem, Scalar,
    KRON_ELEMENT_CAP,
};
