//! Plain-text problem dump for debugging.
//!
//! ```text
//! qp <n> <m_eq> <m_ineq>
//! offset <value>
//! quad            (n rows of n values, row-major)
//! lin             (one row of n values)
//! eq              (m_eq rows: n coefficients then rhs)
//! ineq            (m_ineq rows: lo, n coefficients, hi)
//! ```
//!
//! Values are whitespace separated; infinite bounds are written `inf`/`-inf`.

use std::fmt::Write as _;

use super::{QpError, QpProblem, SparseMatrix};

pub fn write_problem(p: &QpProblem) -> String {
    let n = p.n;
    let mut out = String::new();
    let _ = writeln!(out, "qp {} {} {}", n, p.n_eq(), p.n_ineq());
    let _ = writeln!(out, "offset {}", p.offset);
    out.push_str("quad\n");
    let dense = p.quad.to_dense();
    for row in dense.chunks(n.max(1)).take(n) {
        push_values(&mut out, row.iter().copied());
    }
    out.push_str("lin\n");
    push_values(&mut out, p.lin.iter().copied());
    out.push_str("eq\n");
    let a = p.eq.a.to_dense();
    for i in 0..p.n_eq() {
        push_values(&mut out, a[i * n..(i + 1) * n].iter().copied().chain([p.eq.b[i]]));
    }
    out.push_str("ineq\n");
    let c = p.ineq.c.to_dense();
    for i in 0..p.n_ineq() {
        push_values(
            &mut out,
            [p.ineq.lo[i]]
                .into_iter()
                .chain(c[i * n..(i + 1) * n].iter().copied())
                .chain([p.ineq.hi[i]]),
        );
    }
    out
}

fn push_values(out: &mut String, vals: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in vals {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

pub fn read_problem(text: &str) -> Result<QpProblem, QpError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, msg: &str| QpError::Parse {
        line,
        msg: msg.to_string(),
    };
    let mut next = |expect: &str| -> Result<(usize, &str), QpError> {
        lines
            .next()
            .ok_or_else(|| err(0, &format!("unexpected end, wanted {expect}")))
    };

    let (ln, header) = next("header")?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "qp" {
        return Err(err(ln, "expected `qp <n> <m_eq> <m_ineq>`"));
    }
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| err(ln, "bad dimension"));
    let (n, m_eq, m_in) = (parse_usize(parts[1])?, parse_usize(parts[2])?, parse_usize(parts[3])?);

    let (ln, off) = next("offset")?;
    let offset = off
        .strip_prefix("offset")
        .and_then(|s| s.trim().parse::<f64>().ok())
        .ok_or_else(|| err(ln, "expected `offset <value>`"))?;

    let mut section = |name: &str, rows: usize, width: usize| -> Result<Vec<Vec<f64>>, QpError> {
        let (ln, tag) = next(name)?;
        if tag != name {
            return Err(err(ln, &format!("expected section `{name}`")));
        }
        (0..rows)
            .map(|_| {
                let (ln, l) = next(name)?;
                let vals: Result<Vec<f64>, _> = l.split_whitespace().map(str::parse::<f64>).collect();
                let vals = vals.map_err(|_| err(ln, "bad number"))?;
                if vals.len() != width {
                    return Err(err(ln, &format!("expected {width} values, got {}", vals.len())));
                }
                Ok(vals)
            })
            .collect()
    };

    let quad = section("quad", n, n)?;
    let lin = section("lin", 1, n)?.remove(0);
    let eq = section("eq", m_eq, n + 1)?;
    let ineq = section("ineq", m_in, n + 2)?;

    let mut p = QpProblem::new(n);
    p.offset = offset;
    p.quad = SparseMatrix::from_dense(n, n, &quad.concat());
    p.lin = lin;
    for row in eq {
        let entries = sparse_row(&row[..n]);
        p.add_eq(entries, row[n]);
    }
    for row in ineq {
        let entries = sparse_row(&row[1..=n]);
        p.add_ineq(entries, row[0], row[n + 1]);
    }
    Ok(p)
}

fn sparse_row(vals: &[f64]) -> Vec<(usize, f64)> {
    vals.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, v)| (j, *v))
        .collect()
}
