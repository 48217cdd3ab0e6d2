//! Deterministic simulator for distributed Kron-Matmul over a 2D grid of
//! workers. Rows of X are split across GM worker rows and columns of the
//! intermediate across GK worker columns. Each round every worker applies
//! up to `local` factors to its column block without communicating, then
//! relocates the block as GK contiguous parts, each of which lands whole on
//! one destination worker in the same grid row.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fusion::fused_store_index;
use crate::sliced::{sliced_kronmatmul, OpCounters};
use crate::tensor::{FactorChain, Matrix, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProcGrid {
    pub gm: usize,
    pub gk: usize,
}

impl ProcGrid {
    pub fn workers(&self) -> usize {
        self.gm * self.gk
    }
}

/// Pick a grid for `g` workers: a square grid when g is a perfect square,
/// otherwise the nearest power-of-two split around sqrt(g). Worker counts
/// with no such factorization are rejected.
pub fn select_grid(g: usize) -> Result<ProcGrid> {
    if g == 0 {
        return Err(Error::Config("worker count must be >= 1".into()));
    }
    let root = (g as f64).sqrt().round() as usize;
    if root * root == g {
        return Ok(ProcGrid { gm: root, gk: root });
    }
    let half = (g as f64).sqrt().log2();
    let gm = 1usize << (half.ceil() as u32);
    let gk = 1usize << (half.floor() as u32);
    if gm * gk == g {
        Ok(ProcGrid { gm, gk })
    } else {
        Err(Error::Config(format!(
            "no supported grid factorization for {g} workers"
        )))
    }
}

/// Static execution plan: rounds of local factor counts, all divisibility
/// and relocation preconditions checked up front.
#[derive(Debug, Clone)]
pub struct DistPlan {
    pub grid: ProcGrid,
    pub g_tile_m: usize,
    pub g_tile_k: usize,
    pub rounds: Vec<usize>,
    pub p: usize,
    pub n: usize,
}

impl DistPlan {
    pub fn new<T: Scalar>(
        m: usize,
        chain: &FactorChain<T>,
        grid: ProcGrid,
        local: usize,
    ) -> Result<Self> {
        let k = chain.k();
        let n = chain.n();
        if grid.gm == 0 || grid.gk == 0 {
            return Err(Error::Config("grid extents must be >= 1".into()));
        }
        if m % grid.gm != 0 {
            return Err(Error::Config(format!(
                "M={m} must be a multiple of GM={}",
                grid.gm
            )));
        }
        let g_tile_m = m / grid.gm;
        if grid.gk == 1 {
            // row split only: no relocation, any chain shape works
            return Ok(DistPlan {
                grid,
                g_tile_m,
                g_tile_k: k,
                rounds: vec![n],
                p: 0,
                n,
            });
        }
        let (p, q) = chain.uniform_shape().ok_or_else(|| {
            Error::Config("column-split grids need a uniform factor chain".into())
        })?;
        if p != q || p < 2 {
            return Err(Error::Config(format!(
                "column-split grids need square factors with P >= 2, got {p}x{q}"
            )));
        }
        if k % grid.gk != 0 {
            return Err(Error::Config(format!(
                "K={k} must be a multiple of GK={}",
                grid.gk
            )));
        }
        let g_tile_k = k / grid.gk;
        if local == 0 {
            return Err(Error::Config("local factor count must be >= 1".into()));
        }
        let mut rounds = Vec::new();
        let mut remaining = n;
        while remaining > 0 {
            let lr = local.min(remaining);
            let pf = p
                .checked_pow(lr as u32)
                .ok_or_else(|| Error::Config(format!("P^{lr} overflows")))?;
            if g_tile_k % pf != 0 {
                return Err(Error::Config(format!(
                    "round of {lr} local factors needs P^{lr}={pf} to divide gTileK={g_tile_k}"
                )));
            }
            if pf % grid.gk != 0 {
                return Err(Error::Config(format!(
                    "round of {lr} local factors needs GK={} to divide P^{lr}={pf} \
                     for whole-part relocation",
                    grid.gk
                )));
            }
            rounds.push(lr);
            remaining -= lr;
        }
        Ok(DistPlan {
            grid,
            g_tile_m,
            g_tile_k,
            rounds,
            p,
            n,
        })
    }

    /// Scalars crossing worker boundaries over the whole run. Every round
    /// each grid row holds gTileM x K and keeps only the part that stays
    /// home, so a round moves GM * gTileM * (K - gTileK).
    pub fn comm_volume(&self, k: usize) -> u64 {
        if self.grid.gk == 1 {
            return 0;
        }
        self.rounds.len() as u64
            * self.grid.gm as u64
            * self.g_tile_m as u64
            * (k - self.g_tile_k) as u64
    }
}

/// One relocation message, aggregated per (source, destination) per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommEvent {
    pub round: usize,
    pub src: (usize, usize),
    pub dst: (usize, usize),
    pub scalars: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CommLedger {
    pub events: Vec<CommEvent>,
}

impl CommLedger {
    pub fn total_scalars(&self) -> u64 {
        self.events.iter().map(|e| e.scalars).sum()
    }

    pub fn write_trace<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "round,src_gm,src_gk,dst_gm,dst_gk,scalars")?;
        for e in &self.events {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.round, e.src.0, e.src.1, e.dst.0, e.dst.1, e.scalars
            )?;
        }
        Ok(())
    }
}

struct Worker<T> {
    block: Vec<T>, // g_tile_m x g_tile_k, row major
    inbox: Vec<(usize, Vec<T>)>, // (local column, column values)
}

/// Destination of local column `c` on worker column `src_gk` after a round
/// of `lr` local factors: the global column index, split into a worker and
/// an offset.
pub fn relocation_target(
    c: usize,
    src_gk: usize,
    k: usize,
    p: usize,
    g_tile_k: usize,
    lr: usize,
) -> (usize, usize) {
    let gcol = fused_store_index(c, src_gk, k, p, g_tile_k, lr);
    (gcol / g_tile_k, gcol % g_tile_k)
}

/// Run the plan on concrete data and return the gathered result plus the
/// communication ledger. Workers are simulated round-robin in grid order;
/// the result is bit-identical to the single-machine reference.
pub fn dist_kronmatmul<T: Scalar>(
    x: &Matrix<T>,
    chain: &FactorChain<T>,
    plan: &DistPlan,
) -> Result<(Matrix<T>, CommLedger)> {
    let k = chain.k();
    if x.cols() != k {
        return Err(Error::Dimension {
            context: "dist_kronmatmul input columns".into(),
            expected: k,
            got: x.cols(),
        });
    }
    if x.rows() != plan.grid.gm * plan.g_tile_m {
        return Err(Error::Dimension {
            context: "dist_kronmatmul input rows".into(),
            expected: plan.grid.gm * plan.g_tile_m,
            got: x.rows(),
        });
    }
    let mut ledger = CommLedger::default();

    if plan.grid.gk == 1 {
        // pure row split: every worker runs the whole chain on its rows
        let l = chain.l();
        let mut out = Matrix::zeros(x.rows(), l);
        for gm in 0..plan.grid.gm {
            let r0 = gm * plan.g_tile_m;
            let sub = Matrix::from_fn(plan.g_tile_m, k, |i, j| x.get(r0 + i, j));
            let part = sliced_kronmatmul(&sub, chain, None, &mut OpCounters::default())?;
            for i in 0..plan.g_tile_m {
                for j in 0..l {
                    out.set(r0 + i, j, part.get(i, j));
                }
            }
        }
        return Ok((out, ledger));
    }

    let (gm_n, gk_n) = (plan.grid.gm, plan.grid.gk);
    let (tm, tk) = (plan.g_tile_m, plan.g_tile_k);
    let p = plan.p;
    let part_w = tk / gk_n;

    let mut workers: Vec<Worker<T>> = (0..gm_n * gk_n)
        .map(|w| {
            let (gm, gk) = (w / gk_n, w % gk_n);
            let mut block = vec![T::zero(); tm * tk];
            for i in 0..tm {
                for j in 0..tk {
                    block[i * tk + j] = x.get(gm * tm + i, gk * tk + j);
                }
            }
            Worker {
                block,
                inbox: Vec::new(),
            }
        })
        .collect();

    let mut next_factor = chain.n(); // factors are applied last to first
    for (round, &lr) in plan.rounds.iter().enumerate() {
        let group = &chain.factors()[next_factor - lr..next_factor];
        // compute phase
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(workers.len());
        for w in workers.iter() {
            outputs.push(local_chain(&w.block, tm, tk, group)?);
        }
        // relocation phase: split each block into gk_n contiguous parts
        for (wi, z) in outputs.iter().enumerate() {
            let (src_gm, src_gk) = (wi / gk_n, wi % gk_n);
            let mut sent = vec![0u64; gk_n];
            for part in 0..gk_n {
                let c0 = part * part_w;
                let (part_dst, _) = relocation_target(c0, src_gk, k, p, tk, lr);
                for c in c0..c0 + part_w {
                    let (dst_gk, dst_off) = relocation_target(c, src_gk, k, p, tk, lr);
                    if dst_gk != part_dst {
                        return Err(Error::Protocol {
                            src: (src_gm, src_gk),
                            dst: (src_gm, dst_gk),
                            msg: format!(
                                "part {part} splits across workers at column {c}"
                            ),
                        });
                    }
                    let col: Vec<T> = (0..tm).map(|i| z[i * tk + c]).collect();
                    workers[src_gm * gk_n + dst_gk].inbox.push((dst_off, col));
                }
                if part_dst != src_gk {
                    sent[part_dst] += (tm * part_w) as u64;
                }
            }
            for (dst_gk, &scalars) in sent.iter().enumerate() {
                if scalars > 0 {
                    ledger.events.push(CommEvent {
                        round,
                        src: (src_gm, src_gk),
                        dst: (src_gm, dst_gk),
                        scalars,
                    });
                }
            }
        }
        // delivery phase
        for w in workers.iter_mut() {
            for (off, col) in w.inbox.drain(..) {
                for (i, v) in col.into_iter().enumerate() {
                    w.block[i * tk + off] = v;
                }
            }
        }
        next_factor -= lr;
    }

    let mut out = Matrix::zeros(x.rows(), k);
    for (wi, w) in workers.iter().enumerate() {
        let (gm, gk) = (wi / gk_n, wi % gk_n);
        for i in 0..tm {
            for j in 0..tk {
                out.set(gm * tm + i, gk * tk + j, w.block[i * tk + j]);
            }
        }
    }
    Ok((out, ledger))
}

/// Apply a group of square factors (last first) to a local block in place
/// order: the same slice arithmetic as the in-scratch fused pass.
fn local_chain<T: Scalar>(
    block: &[T],
    tm: usize,
    tk: usize,
    group: &[Matrix<T>],
) -> Result<Vec<T>> {
    let mut a = block.to_vec();
    let mut b = vec![T::zero(); tm * tk];
    for f in group.iter().rev() {
        let p = f.rows();
        let st = tk / p;
        for r in 0..tm {
            let row = &a[r * tk..(r + 1) * tk];
            let orow = &mut b[r * tk..(r + 1) * tk];
            for j in 0..tk {
                let slice = j % st;
                let col = j / st;
                let mut acc = T::zero();
                for pp in 0..p {
                    acc = acc + row[slice * p + pp] * f.get(pp, col);
                }
                orow[j] = acc;
            }
        }
        std::mem::swap(&mut a, &mut b);
    }
    Ok(a)
}

/// One line of a scenario file: `m,p,q,n,gm,gk,local,dtype,seed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub gm: usize,
    pub gk: usize,
    pub local: usize,
    pub dtype: String,
    pub seed: u64,
}

impl Scenario {
    pub fn parse_line(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != 9 {
            return Err(Error::Parse {
                pos: 0,
                msg: format!("scenario line needs 9 fields, got {}", parts.len()),
            });
        }
        let num = |i: usize| -> Result<usize> {
            parts[i].parse().map_err(|_| Error::Parse {
                pos: i,
                msg: format!("invalid number {:?}", parts[i]),
            })
        };
        let dtype = parts[7].to_string();
        if dtype != "f32" && dtype != "f64" {
            return Err(Error::Parse {
                pos: 7,
                msg: format!("dtype must be f32 or f64, got {dtype:?}"),
            });
        }
        Ok(Scenario {
            m: num(0)?,
            p: num(1)?,
            q: num(2)?,
            n: num(3)?,
            gm: num(4)?,
            gk: num(5)?,
            local: num(6)?,
            dtype,
            seed: parts[8].parse().map_err(|_| Error::Parse {
                pos: 8,
                msg: format!("invalid seed {:?}", parts[8]),
            })?,
        })
    }

    pub fn parse_file(text: &str) -> Result<Vec<Self>> {
        text.lines()
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(Self::parse_line)
            .collect()
    }
}
