use crate::error::{Error, Result};
use crate::model::Matrix;

/// Compressed row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CrsMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CrsMatrix {
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        CrsMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// Check the structural invariants, e.g. after decoding from disk.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Shape(m));
        if self.row_ptr.len() != self.n_rows + 1 {
            return bad(format!("row_ptr has {} entries for {} rows", self.row_ptr.len(), self.n_rows));
        }
        if self.row_ptr[0] != 0 || self.row_ptr[self.n_rows] != self.values.len() {
            return bad("row_ptr must start at 0 and end at nnz".into());
        }
        if self.col_idx.len() != self.values.len() {
            return bad("col_idx and values differ in length".into());
        }
        for r in 0..self.n_rows {
            if self.row_ptr[r] > self.row_ptr[r + 1] {
                return bad(format!("row_ptr decreases at row {r}"));
            }
            let (cols, _) = self.row(r);
            for (j, &c) in cols.iter().enumerate() {
                if c as usize >= self.n_cols {
                    return bad(format!("column {c} out of range in row {r}"));
                }
                if j > 0 && cols[j - 1] >= c {
                    return bad(format!("columns not strictly increasing in row {r}"));
                }
            }
        }
        Ok(())
    }

    /// `y = M x` without a shape check.
    #[inline]
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.n_rows) {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = 0.0;
            for (&c, &v) in self.col_idx[a..b].iter().zip(&self.values[a..b]) {
                acc += v * x[c as usize];
            }
            *out = acc;
        }
    }
}

pub fn to_crs(m: &Matrix) -> CrsMatrix {
    let mut out = CrsMatrix::empty(m.rows, m.cols);
    for r in 0..m.rows {
        for (c, &v) in m.row(r).iter().enumerate() {
            if v != 0.0 {
                out.col_idx.push(c as u32);
                out.values.push(v);
            }
        }
        out.row_ptr[r + 1] = out.values.len();
    }
    out
}

pub fn from_crs(m: &CrsMatrix) -> Matrix {
    let mut out = Matrix::zeros(m.n_rows, m.n_cols);
    for r in 0..m.n_rows {
        let (cols, vals) = m.row(r);
        let row = out.row_mut(r);
        for (&c, &v) in cols.iter().zip(vals) {
            row[c as usize] = v;
        }
    }
    out
}

pub fn crs_matvec(m: &CrsMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != m.n_cols {
        return Err(Error::Shape(format!(
            "vector of length {} for a matrix with {} columns",
            x.len(),
            m.n_cols
        )));
    }
    let mut y = vec![0.0; m.n_rows];
    m.matvec_into(x, &mut y);
    Ok(y)
}
