//! Python bindings for the kronmul engine.
//!
//! Matrices cross the boundary as nested lists of floats (row-major,
//! float64). The module exposes the dense Kronecker product, the
//! multiplication engine with an algorithm selector, grid selection, and
//! the multi-worker simulator.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use kronmul::{
    dist_kronmatmul as dist_impl, ftmmt_kronmatmul, fused_kronmatmul, kron_product as kron_impl,
    naive_kronmatmul, select_grid as select_grid_impl, shuffle_kronmatmul, sliced_kronmatmul,
    DistPlan, Error, FactorChain, FuseConfig, Matrix, OpCounters, ProcGrid, TileConfig,
};

fn to_py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Matrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err("matrix must be non-empty"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have unequal lengths"));
    }
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    Matrix::from_vec(data.len() / cols, cols, data).map_err(to_py_err)
}

fn matrix_to_rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn chain_from_rows(factors: Vec<Vec<Vec<f64>>>) -> PyResult<FactorChain<f64>> {
    let mats = factors
        .into_iter()
        .map(matrix_from_rows)
        .collect::<PyResult<Vec<_>>>()?;
    FactorChain::new(mats).map_err(to_py_err)
}

/// Dense Kronecker product of a list of matrices.
#[pyfunction]
fn kron_product(factors: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
    let chain = chain_from_rows(factors)?;
    kron_impl(&chain).map(|m| matrix_to_rows(&m)).map_err(to_py_err)
}

/// Compute X (A_1 kron ... kron A_n).
///
/// `algo` is one of "naive", "shuffle", "ftmmt", "sliced", "fused";
/// `fused` sets the factors-per-pass for the fused algorithm. Returns the
/// M x L result as nested lists.
#[pyfunction]
#[pyo3(signature = (x, factors, algo = "sliced", fused = 2))]
fn kronmatmul(
    x: Vec<Vec<f64>>,
    factors: Vec<Vec<Vec<f64>>>,
    algo: &str,
    fused: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let x = matrix_from_rows(x)?;
    let chain = chain_from_rows(factors)?;
    let mut counters = OpCounters::default();
    let y = match algo {
        "naive" => naive_kronmatmul(&x, &chain),
        "shuffle" => shuffle_kronmatmul(&x, &chain, &mut counters),
        "ftmmt" => ftmmt_kronmatmul(&x, &chain, &mut counters),
        "sliced" => sliced_kronmatmul(&x, &chain, None, &mut counters),
        "fused" => {
            let (p, q) = chain.uniform_shape().unwrap_or((1, 1));
            let base = TileConfig {
                tile_m: 1,
                tile_k: chain.k(),
                tile_p: p,
                tile_q: q,
                reg_k: 1,
                reg_p: 1,
                reg_q: 1,
            };
            fused_kronmatmul(&x, &chain, &FuseConfig::new(fused, base), &mut counters)
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown algorithm {other:?}"
            )))
        }
    }
    .map_err(to_py_err)?;
    Ok(matrix_to_rows(&y))
}

/// Pick a (gm, gk) worker grid for `workers` workers.
#[pyfunction]
fn select_grid(workers: usize) -> PyResult<(usize, usize)> {
    select_grid_impl(workers)
        .map(|g| (g.gm, g.gk))
        .map_err(to_py_err)
}

/// Simulate multi-worker execution on a (gm, gk) grid applying `local`
/// factors per communication round. Returns (result, comm_total_scalars).
#[pyfunction]
#[pyo3(signature = (x, factors, gm, gk, local = 1))]
fn dist_kronmatmul(
    x: Vec<Vec<f64>>,
    factors: Vec<Vec<Vec<f64>>>,
    gm: usize,
    gk: usize,
    local: usize,
) -> PyResult<(Vec<Vec<f64>>, u64)> {
    let x = matrix_from_rows(x)?;
    let chain = chain_from_rows(factors)?;
    let plan = DistPlan::new(x.rows(), &chain, ProcGrid { gm, gk }, local).map_err(to_py_err)?;
    let (y, ledger) = dist_impl(&x, &chain, &plan).map_err(to_py_err)?;
    Ok((matrix_to_rows(&y), ledger.total_scalars()))
}

#[pymodule]
fn kronmul_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(kron_product, m)?)?;
    m.add_function(wrap_pyfunction!(kronmatmul, m)?)?;
    m.add_function(wrap_pyfunction!(select_grid, m)?)?;
    m.add_function(wrap_pyfunction!(dist_kronmatmul, m)?)?;
    Ok(())
}
