//! Crossover designs, their incidence matrices, named constructions and
//! class checks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matlib::{kron, identity, Matrix};

/// A p×n array of treatment labels (rows = periods, columns = subjects).
///
/// Labels are stored 0-based; the text format and [`Design::label`] are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Design {
    t: usize,
    n: usize,
    p: usize,
    cells: Vec<u16>,
}

/// Class membership flags reported by [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignClassFlags {
    pub binary: bool,
    pub uniform_on_periods: bool,
    pub uniform_on_subjects: bool,
    pub uniform: bool,
    pub balanced_uniform: bool,
    pub oa_type1_strength2_lambda: Option<usize>,
}

impl Design {
    /// Build from 0-based rows (one row per period).
    pub fn from_rows(t: usize, rows: &[Vec<usize>]) -> Result<Self> {
        let p = rows.len();
        if t == 0 || p == 0 {
            return Err(Error::invalid("design needs t >= 1 and p >= 1"));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(Error::invalid("design needs at least one subject"));
        }
        if t > u16::MAX as usize {
            return Err(Error::invalid("too many treatments"));
        }
        let mut cells = Vec::with_capacity(p * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::dims(format!("period {} has {} subjects, expected {n}", i + 1, row.len())));
            }
            for &x in row {
                if x >= t {
                    return Err(Error::invalid(format!("label {} outside 1..{t}", x + 1)));
                }
                cells.push(x as u16);
            }
        }
        Ok(Design { t, n, p, cells })
    }

    /// Build from 1-based labels as printed in displays and files.
    pub fn from_labels(t: usize, rows: &[&[usize]]) -> Result<Self> {
        let mut zero = Vec::with_capacity(rows.len());
        for row in rows {
            let mut r = Vec::with_capacity(row.len());
            for &x in row.iter() {
                if x == 0 || x > t {
                    return Err(Error::invalid(format!("label {x} outside 1..{t}")));
                }
                r.push(x - 1);
            }
            zero.push(r);
        }
        Design::from_rows(t, &zero)
    }

    /// Build from subject sequences (0-based), one per column.
    pub fn from_columns(t: usize, cols: &[Vec<usize>]) -> Result<Self> {
        let n = cols.len();
        if n == 0 {
            return Err(Error::invalid("design needs at least one subject"));
        }
        let p = cols[0].len();
        if cols.iter().any(|c| c.len() != p) {
            return Err(Error::dims("subject sequences differ in length"));
        }
        let rows: Vec<Vec<usize>> = (0..p).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        Design::from_rows(t, &rows)
    }

    pub fn t(&self) -> usize {
        self.t
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }

    /// 0-based treatment in period `i`, subject `j` (both 0-based).
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> usize {
        self.cells[i * self.n + j] as usize
    }

    /// 1-based label in period `i`, subject `j`.
    pub fn label(&self, i: usize, j: usize) -> usize {
        self.at(i, j) + 1
    }

    pub fn column(&self, j: usize) -> Vec<usize> {
        (0..self.p).map(|i| self.at(i, j)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<usize>> {
        (0..self.p).map(|i| (0..self.n).map(|j| self.at(i, j)).collect()).collect()
    }

    /// Concatenate the columns of `self` `times` times.
    /// Number of cells receiving each treatment.
    pub fn replications(&self) -> Vec<usize> {
        let mut r = vec![0; self.t];
        for &c in &self.cells {
            r[c as usize] += 1;
        }
        r
    }

    pub fn replicate(&self, times: usize) -> Result<Design> {
        if times == 0 {
            return Err(Error::invalid("replication count must be >= 1"));
        }
        let rows: Vec<Vec<usize>> = self
            .rows()
            .into_iter()
            .map(|r| r.iter().copied().cycle().take(r.len() * times).collect())
            .collect();
        Design::from_rows(self.t, &rows)
    }

    /// Swap the entries of two periods within one subject.
    pub fn swap_in_column(&self, j: usize, i1: usize, i2: usize) -> Design {
        let mut d = self.clone();
        d.cells.swap(i1 * self.n + j, i2 * self.n + j);
        d
    }

    /// Text form: "t n p" followed by p rows of 1-based labels.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.t, self.n, self.p);
        for i in 0..self.p {
            let row: Vec<String> = (0..self.n).map(|j| self.label(i, j).to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// Parse the text format; `#` starts a comment, blank lines are ignored.
    pub fn parse(text: &str) -> Result<Design> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse { line: None, msg: "empty design file".into() })?;
        let dims = parse_ints(header, hline)?;
        if dims.len() != 3 {
            return Err(Error::Parse { line: Some(hline), msg: "header must be \"t n p\"".into() });
        }
        let (t, n, p) = (dims[0], dims[1], dims[2]);
        if t == 0 || n == 0 || p == 0 {
            return Err(Error::Parse { line: Some(hline), msg: "t, n and p must be positive".into() });
        }
        let mut rows = Vec::with_capacity(p);
        for (ln, line) in lines {
            if rows.len() == p {
                return Err(Error::Parse { line: Some(ln), msg: format!("more than {p} period rows") });
            }
            let vals = parse_ints(line, ln)?;
            if vals.len() != n {
                return Err(Error::Parse { line: Some(ln), msg: format!("expected {n} labels, found {}", vals.len()) });
            }
            let mut row = Vec::with_capacity(n);
            for v in vals {
                if v == 0 || v > t {
                    return Err(Error::Parse { line: Some(ln), msg: format!("label {v} outside 1..{t}") });
                }
                row.push(v - 1);
            }
            rows.push(row);
        }
        if rows.len() != p {
            return Err(Error::Parse { line: None, msg: format!("expected {p} period rows, found {}", rows.len()) });
        }
        Design::from_rows(t, &rows)
    }
}

fn parse_ints(line: &str, ln: usize) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| Error::Parse { line: Some(ln), msg: format!("not a non-negative integer: {tok:?}") })
        })
        .collect()
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// ψ: p×p matrix with ones on the sub-diagonal.
pub fn shift_matrix(p: usize) -> Result<Matrix> {
    if p == 0 {
        return Err(Error::invalid("shift matrix needs p >= 1"));
    }
    Ok(Matrix::from_fn(p, p, |i, j| if i == j + 1 { 1.0 } else { 0.0 }))
}

/// T_d: np×t incidence; row j·p + i marks the treatment of subject j in period i.
pub fn treatment_matrix(d: &Design) -> Matrix {
    let mut m = Matrix::zeros(d.n * d.p, d.t);
    for j in 0..d.n {
        for i in 0..d.p {
            m[(j * d.p + i, d.at(i, j))] = 1.0;
        }
    }
    m
}

/// F_d = (I_n ⊗ ψ) T_d: incidence of the previous period's treatment.
pub fn carryover_matrix(d: &Design) -> Matrix {
    let mut m = Matrix::zeros(d.n * d.p, d.t);
    for j in 0..d.n {
        for i in 1..d.p {
            m[(j * d.p + i, d.at(i - 1, j))] = 1.0;
        }
    }
    m
}

/// Reference form of F_d through the Kronecker product, used by tests.
pub fn carryover_matrix_kron(d: &Design) -> Matrix {
    let psi = shift_matrix(d.p).expect("p >= 1");
    kron(&identity(d.n), &psi) * treatment_matrix(d)
}

pub fn is_binary(d: &Design) -> bool {
    (0..d.n).all(|j| {
        let mut seen = vec![false; d.t];
        (0..d.p).all(|i| !std::mem::replace(&mut seen[d.at(i, j)], true))
    })
}

fn uniform_on_periods(d: &Design) -> bool {
    if !d.n.is_multiple_of(d.t) {
        return false;
    }
    let want = d.n / d.t;
    (0..d.p).all(|i| {
        let mut c = vec![0usize; d.t];
        (0..d.n).for_each(|j| c[d.at(i, j)] += 1);
        c.iter().all(|&x| x == want)
    })
}

fn uniform_on_subjects(d: &Design) -> bool {
    if !d.p.is_multiple_of(d.t) {
        return false;
    }
    let want = d.p / d.t;
    (0..d.n).all(|j| {
        let mut c = vec![0usize; d.t];
        (0..d.p).for_each(|i| c[d.at(i, j)] += 1);
        c.iter().all(|&x| x == want)
    })
}

/// Counts of ordered (previous, current) pairs of distinct treatments in consecutive periods.
pub fn consecutive_pair_counts(d: &Design) -> Vec<Vec<usize>> {
    let mut c = vec![vec![0usize; d.t]; d.t];
    for j in 0..d.n {
        for i in 1..d.p {
            c[d.at(i - 1, j)][d.at(i, j)] += 1;
        }
    }
    c
}

fn pairs_balanced(d: &Design) -> bool {
    let c = consecutive_pair_counts(d);
    let mut target = None;
    for a in 0..d.t {
        for b in 0..d.t {
            if a == b {
                continue;
            }
            match target {
                None => target = Some(c[a][b]),
                Some(v) if v != c[a][b] => return false,
                _ => {}
            }
        }
    }
    target.is_some_and(|v| v > 0)
}

pub fn classify(d: &Design) -> DesignClassFlags {
    let up = uniform_on_periods(d);
    let us = uniform_on_subjects(d);
    let uniform = up && us;
    DesignClassFlags {
        binary: is_binary(d),
        uniform_on_periods: up,
        uniform_on_subjects: us,
        uniform,
        balanced_uniform: uniform && pairs_balanced(d),
        oa_type1_strength2_lambda: verify_oa_type1_strength2(d),
    }
}

/// λ if `d` is an orthogonal array of Type I and strength 2, otherwise `None`.
pub fn verify_oa_type1_strength2(d: &Design) -> Option<usize> {
    if !is_binary(d) || d.p < 2 || d.t < 2 {
        return None;
    }
    let mut lambda = None;
    let mut counts = vec![0usize; d.t * d.t];
    for r1 in 0..d.p {
        for r2 in 0..d.p {
            if r1 == r2 {
                continue;
            }
            counts.iter_mut().for_each(|c| *c = 0);
            for j in 0..d.n {
                counts[d.at(r1, j) * d.t + d.at(r2, j)] += 1;
            }
            for a in 0..d.t {
                for b in 0..d.t {
                    if a == b {
                        continue;
                    }
                    let c = counts[a * d.t + b];
                    match lambda {
                        None => lambda = Some(c),
                        Some(l) if l != c => return None,
                        _ => {}
                    }
                }
            }
        }
    }
    lambda.filter(|&l| l > 0)
}

/// Cyclic Latin square columns: subject j receives (j + i) mod t in period i.
pub fn make_uniform(t: usize, reps: usize) -> Result<Design> {
    if t < 2 || reps == 0 {
        return Err(Error::invalid("make_uniform needs t >= 2 and reps >= 1"));
    }
    let n = t * reps;
    let cols: Vec<Vec<usize>> = (0..n).map(|j| (0..t).map(|i| (i + j) % t).collect()).collect();
    Design::from_columns(t, &cols)
}

/// Williams square for even t, columns repeated cyclically.
///
/// The base sequence is 1, t, 2, t−1, …; subject j adds j (mod t).
pub fn make_balanced_uniform(t: usize, reps: usize) -> Result<Design> {
    if !t.is_multiple_of(2) {
        return Err(Error::Unsupported(format!("balanced uniform construction needs even t, got {t}")));
    }
    if t < 4 || reps == 0 {
        return Err(Error::invalid("make_balanced_uniform needs t >= 4 and reps >= 1"));
    }
    let base: Vec<usize> = (0..t).map(|k| if k % 2 == 0 { k / 2 } else { t - k.div_ceil(2) }).collect();
    let cols: Vec<Vec<usize>> = (0..t * reps).map(|j| base.iter().map(|&b| (b + j) % t).collect()).collect();
    Design::from_columns(t, &cols)
}

/// OA_I(λt(t−1), t, t, 2) for t ∈ {3, 4}, by replicating the λ = 1 arrays.
pub fn make_oa(t: usize, lambda: usize) -> Result<Design> {
    if lambda == 0 {
        return Err(Error::invalid("lambda must be >= 1"));
    }
    let base = match t {
        3 => crate::fixtures::dstar_t3(),
        4 => crate::fixtures::dstar_t4(),
        _ => {
            return Err(Error::Unsupported(format!(
                "no built-in orthogonal array for t = {t}; supply a design and check it with verify_oa_type1_strength2"
            )))
        }
    };
    base.replicate(lambda)
}
