//! Problem specification: `-m INT -f PxQ[,PxQ...]` with the repetition
//! shorthands `P^N` (N square P x P factors) and `PxQ^N`. Parsed specs
//! round-trip through their canonical string form.

use kronmul::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemSpec {
    pub m: usize,
    pub shapes: Vec<(usize, usize)>,
}

impl ProblemSpec {
    pub fn k(&self) -> usize {
        self.shapes.iter().map(|&(p, _)| p).product()
    }

    #[allow(dead_code)]
    pub fn l(&self) -> usize {
        self.shapes.iter().map(|&(_, q)| q).product()
    }

    /// Canonical form: runs of an identical shape collapse to `P^N` or
    /// `PxQ^N`, square singletons to `P`, the rest to `PxQ`.
    pub fn canonical(&self) -> String {
        let mut parts = Vec::new();
        let mut i = 0;
        while i < self.shapes.len() {
            let (p, q) = self.shapes[i];
            let mut n = 1;
            while i + n < self.shapes.len() && self.shapes[i + n] == (p, q) {
                n += 1;
            }
            let base = if p == q {
                format!("{p}")
            } else {
                format!("{p}x{q}")
            };
            parts.push(if n > 1 { format!("{base}^{n}") } else { base });
            i += n;
        }
        format!("-m {} -f {}", self.m, parts.join(","))
    }
}

fn parse_count(text: &str, pos: usize, what: &str) -> Result<usize, Error> {
    let v: usize = text.parse().map_err(|_| Error::Parse {
        pos,
        msg: format!("invalid {what} {text:?}"),
    })?;
    if v == 0 {
        return Err(Error::Parse {
            pos,
            msg: format!("{what} must be >= 1"),
        });
    }
    Ok(v)
}

/// Parse one factor token (`P`, `PxQ`, `P^N`, `PxQ^N`) at byte offset
/// `pos` of the factor list.
fn parse_token(token: &str, pos: usize) -> Result<Vec<(usize, usize)>, Error> {
    if token.is_empty() {
        return Err(Error::Parse {
            pos,
            msg: "empty factor token".into(),
        });
    }
    let (shape, reps) = match token.split_once('^') {
        Some((s, r)) => (s, parse_count(r, pos + s.len() + 1, "repetition count")?),
        None => (token, 1),
    };
    let (p, q) = match shape.split_once('x') {
        Some((p, q)) => (
            parse_count(p, pos, "factor rows")?,
            parse_count(q, pos + p.len() + 1, "factor columns")?,
        ),
        None => {
            let p = parse_count(shape, pos, "factor size")?;
            (p, p)
        }
    };
    Ok(vec![(p, q); reps])
}

/// Parse the factor list of `-f`.
pub fn parse_factors(text: &str) -> Result<Vec<(usize, usize)>, Error> {
    let mut shapes = Vec::new();
    let mut pos = 0;
    for token in text.split(',') {
        shapes.extend(parse_token(token.trim(), pos)?);
        pos += token.len() + 1;
    }
    Ok(shapes)
}

/// Parse a full spec string `-m INT -f FACTORS`.
pub fn parse_spec(text: &str) -> Result<ProblemSpec, Error> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut m = None;
    let mut shapes = None;
    let mut i = 0;
    while i < tokens.len() {
        match tokens[i] {
            "-m" => {
                let v = tokens.get(i + 1).ok_or(Error::Parse {
                    pos: i,
                    msg: "-m needs a value".into(),
                })?;
                m = Some(parse_count(v, i + 1, "m")?);
                i += 2;
            }
            "-f" => {
                let v = tokens.get(i + 1).ok_or(Error::Parse {
                    pos: i,
                    msg: "-f needs a value".into(),
                })?;
                shapes = Some(parse_factors(v)?);
                i += 2;
            }
            other => {
                return Err(Error::Parse {
                    pos: i,
                    msg: format!("unexpected token {other:?}"),
                });
            }
        }
    }
    Ok(ProblemSpec {
        m: m.ok_or(Error::Parse {
            pos: 0,
            msg: "missing -m".into(),
        })?,
        shapes: shapes.ok_or(Error::Parse {
            pos: 0,
            msg: "missing -f".into(),
        })?,
    })
}
