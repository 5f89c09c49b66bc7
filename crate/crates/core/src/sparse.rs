//! Row-compressed sparse matrices assembled from triplets.

use std::io::Write;

use crate::error::{Error, Result};

/// Accumulates `(row, col, value)` contributions. Duplicates are summed in
/// insertion order, so the resulting values do not depend on sort internals.
#[derive(Clone, Debug)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(u64, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        assert!(nrows < (1 << 32) && ncols < (1 << 32));
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        let mut b = Self::new(nrows, ncols);
        b.entries.reserve(cap);
        b
    }

    /// Adds `v` at `(r, c)`; exact zeros are dropped.
    pub fn push(&mut self, r: usize, c: usize, v: f64) -> Result<()> {
        if r >= self.nrows || c >= self.ncols {
            return Err(Error::Structural(format!(
                "entry ({r}, {c}) outside a {}x{} matrix",
                self.nrows, self.ncols
            )));
        }
        if v != 0.0 {
            self.entries.push((((r as u64) << 32) | c as u64, v));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|e| e.0);
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last = u64::MAX;
        for (key, v) in self.entries {
            if key == last {
                *values.last_mut().expect("previous entry") += v;
            } else {
                let r = (key >> 32) as usize;
                indptr[r + 1] += 1;
                indices.push((key & 0xffff_ffff) as usize);
                values.push(v);
                last = key;
            }
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|i| vals[i]).unwrap_or(0.0)
    }

    /// `(row, col, value)` for every stored entry in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for (r, c, v) in self.iter() {
            b.push(c, r, v).expect("in range");
        }
        b.build()
    }

    /// `P A P^T` for the permutation sending index `i` to `perm[i]`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> CsrMatrix {
        assert_eq!(self.nrows, self.ncols);
        assert_eq!(perm.len(), self.nrows);
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz());
        for (r, c, v) in self.iter() {
            b.push(perm[r], perm[c], v).expect("in range");
        }
        b.build()
    }

    /// Rows whose stored values are all zero (or that store nothing).
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.nrows)
            .filter(|&r| self.row(r).1.iter().all(|&v| v == 0.0))
            .collect()
    }

    pub fn empty_cols(&self) -> Vec<usize> {
        let mut touched = vec![false; self.ncols];
        for (_, c, v) in self.iter() {
            if v != 0.0 {
                touched[c] = true;
            }
        }
        (0..self.ncols).filter(|&c| !touched[c]).collect()
    }

    /// Coordinate text dump, one `row col value` line per stored entry.
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<()> {
        for (r, c, v) in self.iter() {
            writeln!(out, "{r} {c} {v:e}")?;
        }
        Ok(())
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_summed_and_sorted() {
        let mut b = TripletBuilder::new(3, 3);
        b.push(2, 1, 1.0).unwrap();
        b.push(0, 2, 4.0).unwrap();
        b.push(2, 1, 2.5).unwrap();
        b.push(0, 0, 1.0).unwrap();
        b.push(1, 1, 0.0).unwrap();
        let m = b.build();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(2, 1), 3.5);
        assert_eq!(m.row(0).0, &[0, 2]);
        assert_eq!(m.empty_rows(), vec![1]);
        assert!(m.empty_cols().is_empty());
    }

    #[test]
    fn out_of_range_is_structural_error() {
        let mut b = TripletBuilder::new(2, 2);
        assert!(matches!(b.push(2, 0, 1.0), Err(Error::Structural(_))));
    }

    #[test]
    fn matvec_and_transpose() {
        let mut b = TripletBuilder::new(2, 3);
        b.push(0, 0, 1.0).unwrap();
        b.push(0, 2, 2.0).unwrap();
        b.push(1, 1, -1.0).unwrap();
        let m = b.build();
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]), vec![7.0, -2.0]);
        let t = m.transpose();
        assert_eq!(t.matvec(&[1.0, 1.0]), vec![1.0, -1.0, 2.0]);
    }

    #[test]
    fn coo_dump() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(1, 0, 0.5).unwrap();
        let mut out = Vec::new();
        b.build().write_coo(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1 0 5e-1\n");
    }
}
