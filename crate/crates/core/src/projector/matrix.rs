use serde::{Deserialize, Serialize};

use super::ProjectorError;

/// Dense row-major matrix; rows are tokens when it holds a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TokenMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ProjectorError> {
        let m = Self { rows, cols, data };
        m.validate()?;
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Checks the shape/length invariant and that every entry is finite.
    pub fn validate(&self) -> Result<(), ProjectorError> {
        if self.rows * self.cols != self.data.len() {
            return Err(ProjectorError::ShapeMismatch(format!(
                "{}x{} matrix with {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(ProjectorError::NonFinite);
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · other`.
    pub fn matmul(&self, other: &TokenMatrix) -> TokenMatrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimensions");
        let mut out = TokenMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let a = self.row(r);
            let o = out.row_mut(r);
            for (k, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                for (ov, &bv) in o.iter_mut().zip(other.row(k)) {
                    *ov += av * bv;
                }
            }
        }
        out
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &TokenMatrix) -> TokenMatrix {
        assert_eq!(self.rows, other.rows, "t_matmul row counts");
        let mut out = TokenMatrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            for (i, &av) in self.row(r).iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                for (ov, &bv) in out.row_mut(i).iter_mut().zip(other.row(r)) {
                    *ov += av * bv;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &TokenMatrix) -> TokenMatrix {
        assert_eq!(self.cols, other.cols, "matmul_t column counts");
        TokenMatrix::from_fn(self.rows, other.rows, |r, c| {
            self.row(r).iter().zip(other.row(c)).map(|(a, b)| a * b).sum()
        })
    }

    pub fn add_row_vector(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.cols);
        for r in 0..self.rows {
            for (x, b) in self.row_mut(r).iter_mut().zip(v) {
                *x += b;
            }
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, x) in out.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TokenMatrix {
        TokenMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| f(*v)).collect() }
    }

    pub fn zip_map(&self, other: &TokenMatrix, f: impl Fn(f64, f64) -> f64) -> TokenMatrix {
        assert_eq!(self.shape(), other.shape());
        TokenMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &TokenMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &TokenMatrix) -> Result<TokenMatrix, ProjectorError> {
        if self.cols != other.cols {
            return Err(ProjectorError::WidthMismatch { left: self.cols, right: other.cols });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(TokenMatrix { rows: self.rows + other.rows, cols: self.cols, data })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ProjectorError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProjectorError::Checkpoint(format!("{}: {e}", path.display())))?;
        let m: TokenMatrix =
            serde_json::from_str(&text).map_err(|e| ProjectorError::Checkpoint(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }
}
