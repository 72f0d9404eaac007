//! Compressed sparse row storage shared by feature, interaction and
//! proximity matrices.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Csr<T> {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<T>,
}

/// Borrowed view of a single CSR row.
#[derive(Clone, Copy, Debug)]
pub struct Row<'a, T> {
    pub indices: &'a [u32],
    pub values: &'a [T],
}

impl<'a, T: Copy> Row<'a, T> {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, T)> + 'a {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Column lookup; requires sorted indices.
    pub fn get(&self, col: u32) -> Option<T> {
        self.indices
            .binary_search(&col)
            .ok()
            .map(|pos| self.values[pos])
    }

    pub fn contains(&self, col: u32) -> bool {
        self.indices.binary_search(&col).is_ok()
    }
}

impl<T: Copy> Csr<T> {
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Csr {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Build from per-row `(col, value)` lists. Each row is sorted by column;
    /// duplicate columns within a row are rejected.
    pub fn from_rows<I>(n_cols: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<(u32, T)>>,
    {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Contract(format!(
                        "duplicate column {} in row {}",
                        w[0].0,
                        indptr.len() - 1
                    )));
                }
            }
            for (c, v) in row {
                if c as usize >= n_cols {
                    return Err(Error::OutOfRange {
                        what: "matrix columns",
                        index: c as usize,
                        size: n_cols,
                    });
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Csr {
            n_rows: indptr.len() - 1,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> Row<'_, T> {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        Row {
            indices: &self.indices[lo..hi],
            values: &self.values[lo..hi],
        }
    }

    /// All stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, u32, T)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).iter().map(move |(c, v)| (r, c, v)))
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

}

impl<T: Copy + Default> Csr<T> {
    /// Transpose, keeping columns sorted within each output row.
    pub fn transpose(&self) -> Csr<T> {
        let mut indptr = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            indptr[c as usize + 1] += 1;
        }
        for i in 0..self.n_cols {
            indptr[i + 1] += indptr[i];
        }
        let mut next = indptr.clone();
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![T::default(); self.nnz()];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r).iter() {
                let dst = next[c as usize];
                indices[dst] = r as u32;
                values[dst] = v;
                next[c as usize] += 1;
            }
        }
        Csr {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_sorted_and_transposed() {
        let m = Csr::from_rows(3, vec![vec![(2, 1.0), (0, 2.0)], vec![], vec![(1, 3.0)]]).unwrap();
        assert_eq!(m.row(0).indices, &[0, 2]);
        assert_eq!(m.row(0).get(2), Some(1.0));
        assert_eq!(m.row(1).nnz(), 0);
        let t = m.transpose();
        assert_eq!(t.row(0).iter().collect::<Vec<_>>(), vec![(0, 2.0)]);
        assert_eq!(t.row(1).iter().collect::<Vec<_>>(), vec![(2, 3.0)]);
        assert_eq!(t.row(2).iter().collect::<Vec<_>>(), vec![(0, 1.0)]);
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        assert!(Csr::from_rows(3, vec![vec![(1, 1.0), (1, 2.0)]]).is_err());
        assert!(Csr::from_rows(3, vec![vec![(3, 1.0)]]).is_err());
    }
}
