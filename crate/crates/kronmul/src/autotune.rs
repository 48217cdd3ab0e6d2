//! Tile-parameter search: enumerate the candidate space for a problem
//! shape, score candidates by wall clock or by a deterministic counter
//! model, and pick the fastest configuration that passes verification.

use std::io::{BufRead, Write};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::{fused_kronmatmul, max_fused, FuseConfig};
use crate::sliced::{sliced_kronmatmul, OpCounters, TileConfig};
use crate::tensor::{FactorChain, Matrix, Problem, Scalar};

pub const DEFAULT_MAX_CANDIDATES: usize = 10_000;

/// Counter-model weights: macs + ALPHA * main accesses + BETA * scratch.
pub const COST_ALPHA: u64 = 4;
pub const COST_BETA: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub tile: TileConfig,
    pub fused: usize,
}

#[derive(Debug, Clone)]
pub struct TuneSpace {
    pub candidates: Vec<Candidate>,
    pub budget_bytes: usize,
    pub max_candidates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMode {
    Wall,
    Counter,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best: Candidate,
    /// (candidate, median cost) per evaluated candidate; cost is seconds in
    /// wall mode and the weighted counter sum in counter mode.
    pub timings: Vec<(Candidate, f64)>,
    pub verified: bool,
    /// Candidates rejected because their output did not match the oracle.
    pub disqualified: Vec<Candidate>,
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n % d == 0).collect()
}

/// Enumerate valid candidates for one factor shape: tile_k over multiples
/// of P up to K (largest first), tile_p/tile_q over divisors, tile_m over
/// powers of two, register tiles over divisors, all filtered by the
/// scratch budget. Deterministic order; capped at `max_candidates`.
pub fn enumerate_configs(
    m: usize,
    p: usize,
    q: usize,
    k: usize,
    budget_bytes: usize,
    elem_bytes: usize,
) -> Result<TuneSpace> {
    enumerate_configs_capped(m, p, q, k, budget_bytes, elem_bytes, DEFAULT_MAX_CANDIDATES)
}

pub fn enumerate_configs_capped(
    m: usize,
    p: usize,
    q: usize,
    k: usize,
    budget_bytes: usize,
    elem_bytes: usize,
    max_candidates: usize,
) -> Result<TuneSpace> {
    if k % p != 0 {
        return Err(Error::Config(format!("K={k} must be a multiple of P={p}")));
    }
    let budget_scalars = budget_bytes / elem_bytes;
    let mut candidates = Vec::new();
    let tile_ps = divisors(p);
    let tile_qs = divisors(q);
    // largest tile_k first: when the cap bites, the large-tile candidates
    // survive
    let mut tile_k = k - (k % p);
    'outer: while tile_k >= p {
        for &tile_p in &tile_ps {
            for &tile_q in &tile_qs {
                let mut tile_m = 1;
                while tile_m <= m {
                    let cfg_probe = TileConfig {
                        tile_m,
                        tile_k,
                        tile_p,
                        tile_q,
                        reg_k: 1,
                        reg_p: 1,
                        reg_q: 1,
                    };
                    if cfg_probe.scratch_scalars(p) > budget_scalars {
                        break;
                    }
                    for &reg_p in &divisors(tile_p) {
                        for &reg_q in &divisors(tile_q) {
                            for &reg_k in &divisors(tile_k / p) {
                                let tile = TileConfig {
                                    tile_m,
                                    tile_k,
                                    tile_p,
                                    tile_q,
                                    reg_k,
                                    reg_p,
                                    reg_q,
                                };
                                if tile.validate(p, q, budget_scalars).is_err() {
                                    continue;
                                }
                                let fmax = if tile_p == p && p == q && p >= 2 {
                                    let mut f = max_fused(p, tile_k);
                                    while f > 1
                                        && (tile_k % p.pow(f as u32) != 0 || k % tile_k != 0)
                                    {
                                        f -= 1;
                                    }
                                    f
                                } else {
                                    1
                                };
                                for fused in 1..=fmax {
                                    candidates.push(Candidate { tile, fused });
                                    if candidates.len() >= max_candidates {
                                        break 'outer;
                                    }
                                }
                            }
                        }
                    }
                    tile_m *= 2;
                }
            }
        }
        if tile_k < 2 * p {
            break;
        }
        tile_k -= p;
    }
    if candidates.is_empty() {
        return Err(Error::Config(format!(
            "no valid tile configuration fits a scratch budget of {budget_bytes} bytes"
        )));
    }
    Ok(TuneSpace {
        candidates,
        budget_bytes,
        max_candidates,
    })
}

/// Deterministic counter-model counters for running `cand` on the problem,
/// computed from block geometry without touching data. Matches the real
/// execution counters exactly.
pub fn estimate_counters<T: Scalar>(problem: &Problem<T>, cand: &Candidate) -> OpCounters {
    let m = problem.m;
    let mut c = OpCounters::default();
    let mut kcur = problem.k();
    let chain = &problem.chain;
    let groups = fused_group_sizes(chain, cand);
    let mut idx = chain.n();
    for g in groups {
        if g == 1 {
            let f = &chain.factors()[idx - 1];
            let (p, q) = (f.rows(), f.cols());
            if cand.tile.validate(p, q, usize::MAX).is_ok() && kcur % p == 0 {
                estimate_tiled_pass(m, kcur, p, q, &cand.tile, &mut c);
            } else {
                let s = kcur / p;
                c.macs += (m * s * q * p) as u64;
                c.main_loads += (m * kcur) as u64;
                c.main_stores += (m * s * q) as u64;
            }
            kcur = kcur / f.rows() * f.cols();
        } else {
            let p = chain.factors()[idx - 1].rows();
            let tile_k = cand.tile.tile_k;
            let num_bk = kcur / tile_k;
            let num_bm = m.div_ceil(cand.tile.tile_m);
            let mut rows_total = 0usize;
            for bm in 0..num_bm {
                let r0 = bm * cand.tile.tile_m;
                rows_total += cand.tile.tile_m.min(m - r0);
            }
            debug_assert_eq!(rows_total, m);
            let per_block_rows = m; // sum of rn over row blocks
            c.main_loads += (per_block_rows * tile_k * num_bk) as u64;
            c.scratch_stores += (per_block_rows * tile_k * num_bk) as u64;
            c.macs += (g * per_block_rows * tile_k * p * num_bk) as u64;
            c.scratch_loads += (g * per_block_rows * tile_k * p * num_bk) as u64;
            c.scratch_stores += (g * per_block_rows * tile_k * num_bk) as u64;
            c.scratch_loads += (per_block_rows * tile_k * num_bk) as u64;
            c.main_stores += (per_block_rows * tile_k * num_bk) as u64;
        }
        idx -= g;
    }
    c
}

fn fused_group_sizes<T: Scalar>(chain: &FactorChain<T>, cand: &Candidate) -> Vec<usize> {
    let fcfg = FuseConfig::new(cand.fused, cand.tile);
    crate::fusion::plan_groups(chain, &fcfg)
}

/// Closed-form replay of one tiled pass; increments match the real pass.
/// Block extents are constant except for one remainder block per axis, so
/// the totals reduce to at most eight (rn, sn, qn) block shapes, each with
/// a multiplicity.
fn estimate_tiled_pass(
    m: usize,
    k: usize,
    p: usize,
    q: usize,
    cfg: &TileConfig,
    c: &mut OpCounters,
) {
    let s = k / p;
    let spt = cfg.tile_k / p;
    let tp_steps = (p / cfg.tile_p) as u64;
    let rp_steps = (cfg.tile_p / cfg.reg_p) as u64;
    let rpn = cfg.reg_p as u64;
    // (extent, count) per axis: full blocks plus an optional remainder
    let axis = |total: usize, tile: usize| -> Vec<(usize, usize)> {
        let mut v = vec![(tile, total / tile)];
        if total % tile != 0 {
            v.push((total % tile, 1));
        }
        v.retain(|&(_, cnt)| cnt > 0);
        v
    };
    for &(rn, rc) in &axis(m, cfg.tile_m) {
        for &(sn, sc) in &axis(s, spt) {
            for &(qn, qc) in &axis(q, cfg.tile_q) {
                let mult = (rc * sc * qc) as u64;
                let (rn, sn, qn) = (rn as u64, sn as u64, qn as u64);
                let sg_groups = sn.div_ceil(cfg.reg_k as u64);
                let qg_groups = qn.div_ceil(cfg.reg_q as u64);
                c.main_loads += mult * tp_steps * rn * sn * cfg.tile_p as u64;
                c.scratch_stores +=
                    mult * tp_steps * (rn * sn + qn) * cfg.tile_p as u64;
                c.main_stores += mult * rn * qn * sn;
                c.scratch_loads += mult
                    * tp_steps
                    * rp_steps
                    * (sg_groups * rpn * qn + rn * sn * rpn * qg_groups);
                c.macs += mult * p as u64 * rn * sn * qn;
            }
        }
    }
}

fn weighted_cost(c: &OpCounters) -> u64 {
    c.macs + COST_ALPHA * c.main_accesses() + COST_BETA * c.scratch_accesses()
}

/// Run a candidate once, returning output and counters.
fn run_candidate<T: Scalar>(
    x: &Matrix<T>,
    chain: &FactorChain<T>,
    cand: &Candidate,
) -> Result<(Matrix<T>, OpCounters)> {
    let mut c = OpCounters::default();
    let out = if cand.fused > 1 {
        fused_kronmatmul(x, chain, &FuseConfig::new(cand.fused, cand.tile), &mut c)?
    } else {
        sliced_kronmatmul(x, chain, Some(&cand.tile), &mut c)?
    };
    Ok((out, c))
}

/// Search the space for the fastest verified candidate.
///
/// Wall mode runs each candidate `trials` times after one warmup and takes
/// the median; every candidate output is checked against the untiled
/// reference and mismatches are disqualified. Counter mode scores the
/// deterministic cost model and verifies winners until one passes, so the
/// selection is reproducible bit for bit.
pub fn autotune<T: Scalar>(
    x: &Matrix<T>,
    chain: &FactorChain<T>,
    space: &TuneSpace,
    trials: usize,
    mode: CostMode,
) -> Result<TuneResult> {
    if space.candidates.is_empty() {
        return Err(Error::Config("empty tuning space".into()));
    }
    let problem = Problem::new(x.rows(), chain.clone())?;
    let reference = sliced_kronmatmul(x, chain, None, &mut OpCounters::default())?;

    match mode {
        CostMode::Counter => {
            let mut scored: Vec<(usize, u64)> = space
                .candidates
                .iter()
                .enumerate()
                .map(|(i, cand)| (i, weighted_cost(&estimate_counters(&problem, cand))))
                .collect();
            // stable order: cost, then enumeration index
            scored.sort_by_key(|&(i, cost)| (cost, i));
            let timings = scored
                .iter()
                .map(|&(i, cost)| (space.candidates[i], cost as f64))
                .collect();
            let mut disqualified = Vec::new();
            for &(i, _) in &scored {
                let cand = space.candidates[i];
                match run_candidate(x, chain, &cand) {
                    Ok((out, _)) if out == reference => {
                        return Ok(TuneResult {
                            best: cand,
                            timings,
                            verified: true,
                            disqualified,
                        });
                    }
                    _ => disqualified.push(cand),
                }
            }
            Err(Error::Verify(
                "every candidate was disqualified against the oracle".into(),
            ))
        }
        CostMode::Wall => {
            let trials = trials.max(1);
            let evals: Vec<(usize, Option<f64>)> = space
                .candidates
                .par_iter()
                .enumerate()
                .map(|(i, cand)| {
                    let first = match run_candidate(x, chain, cand) {
                        Ok((out, _)) if out == reference => out,
                        _ => return (i, None), // disqualified
                    };
                    drop(first);
                    let mut times: Vec<f64> = (0..trials)
                        .map(|_| {
                            let t0 = Instant::now();
                            let _ = run_candidate(x, chain, cand);
                            t0.elapsed().as_secs_f64()
                        })
                        .collect();
                    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    (i, Some(times[times.len() / 2]))
                })
                .collect();
            let mut timings = Vec::new();
            let mut disqualified = Vec::new();
            let mut best: Option<(f64, usize)> = None;
            for (i, t) in evals {
                match t {
                    Some(t) => {
                        timings.push((space.candidates[i], t));
                        if best.map_or(true, |(bt, bi)| t < bt || (t == bt && i < bi)) {
                            best = Some((t, i));
                        }
                    }
                    None => disqualified.push(space.candidates[i]),
                }
            }
            let (_, bi) = best.ok_or_else(|| {
                Error::Verify("every candidate was disqualified against the oracle".into())
            })?;
            Ok(TuneResult {
                best: space.candidates[bi],
                timings,
                verified: true,
                disqualified,
            })
        }
    }
}

/// One tuning-cache record: problem key plus chosen configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheRecord {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub dtype: String,
    pub candidate: Candidate,
}

impl CacheRecord {
    pub fn to_line(&self) -> String {
        let t = &self.candidate.tile;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.m,
            self.p,
            self.q,
            self.n,
            self.dtype,
            t.tile_m,
            t.tile_k,
            t.tile_p,
            t.tile_q,
            t.reg_k,
            t.reg_p,
            t.reg_q,
            self.candidate.fused
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != 13 {
            return Err(Error::Parse {
                pos: 0,
                msg: format!("cache line needs 13 fields, got {}", parts.len()),
            });
        }
        let num = |i: usize| -> Result<usize> {
            parts[i].parse().map_err(|_| Error::Parse {
                pos: i,
                msg: format!("invalid number {:?}", parts[i]),
            })
        };
        Ok(CacheRecord {
            m: num(0)?,
            p: num(1)?,
            q: num(2)?,
            n: num(3)?,
            dtype: parts[4].to_string(),
            candidate: Candidate {
                tile: TileConfig {
                    tile_m: num(5)?,
                    tile_k: num(6)?,
                    tile_p: num(7)?,
                    tile_q: num(8)?,
                    reg_k: num(9)?,
                    reg_p: num(10)?,
                    reg_q: num(11)?,
                },
                fused: num(12)?,
            },
        })
    }
}

/// Append one record to the line-oriented cache file.
pub fn cache_append(path: &std::path::Path, record: &CacheRecord) -> std::io::Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    writeln!(f, "{}", record.to_line())
}

/// Look up the latest record matching (m, p, q, n, dtype).
pub fn cache_lookup(
    path: &std::path::Path,
    m: usize,
    p: usize,
    q: usize,
    n: usize,
    dtype: &str,
) -> Result<Option<CacheRecord>> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(_) => return Ok(None),
    };
    let mut found = None;
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::Parse {
            pos: 0,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = CacheRecord::parse_line(&line)?;
        if rec.m == m && rec.p == p && rec.q == q && rec.n == n && rec.dtype == dtype {
            found = Some(rec);
        }
    }
    Ok(found)
}
