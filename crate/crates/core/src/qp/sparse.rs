use serde::{Deserialize, Serialize};

/// Row-compressed sparse matrix. Each row keeps its entries sorted by column
/// with duplicates already summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            rows: vec![Vec::new(); nrows],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut m = Self::zeros(nrows, ncols);
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            m.rows[i].push((j, v));
        }
        for row in &mut m.rows {
            normalize_row(row);
        }
        m
    }

    pub fn from_dense(nrows: usize, ncols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), nrows * ncols);
        let rows = data
            .chunks(ncols.max(1))
            .take(nrows)
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self { nrows, ncols, rows }
    }

    /// Appends a row; returns its index.
    pub fn push_row(&mut self, mut entries: Vec<(usize, f64)>) -> usize {
        debug_assert!(entries.iter().all(|(j, _)| *j < self.ncols));
        normalize_row(&mut entries);
        self.rows.push(entries);
        self.nrows += 1;
        self.nrows - 1
    }

    /// Adds `v` at `(i, j)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |(c, _)| *c) {
            Ok(k) => row[k].1 += v,
            Err(k) => row.insert(k, (j, v)),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |(c, _)| *c)
            .map(|k| row[k].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |(j, v)| (i, *j, *v)))
    }

    /// `out = self * x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|(j, v)| v * x[*j]).sum();
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.mul_vec(x, &mut out);
        out
    }

    /// `out += selfᵀ * y`
    pub fn mul_t_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.nrows);
        for (row, yi) in self.rows.iter().zip(y) {
            if *yi == 0.0 {
                continue;
            }
            for (j, v) in row {
                out[*j] += v * yi;
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows * self.ncols];
        for (i, j, v) in self.iter() {
            d[i * self.ncols + j] = v;
        }
        d
    }

    /// Vertical concatenation.
    pub fn vstack(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, other.ncols);
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        SparseMatrix {
            nrows: self.nrows + other.nrows,
            ncols: self.ncols,
            rows,
        }
    }

    pub fn scale_entries(&mut self, mut f: impl FnMut(usize, usize, f64) -> f64) {
        for (i, row) in self.rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut() {
                *v = f(i, *j, *v);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, (_, _, v)| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && self
                .iter()
                .all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol * (1.0 + v.abs()))
    }
}

fn normalize_row(row: &mut Vec<(usize, f64)>) {
    row.sort_by_key(|(j, _)| *j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for &(j, v) in row.iter() {
        match out.last_mut() {
            Some((lj, lv)) if *lj == j => *lv += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|(_, v)| *v != 0.0);
    *row = out;
}
