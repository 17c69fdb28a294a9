//! Dense symmetric factorization used by the interior-point solver.
//!
//! Matrices are row-major `n * n` slices; only the lower triangle is read.

/// In-place Cholesky `M = L L^T`, overwriting the lower triangle with `L`.
///
/// Pivots below `floor` are replaced by `floor` (static regularization of
/// near-singular normal equations); returns how many pivots were bumped.
pub(crate) fn cholesky_in_place(m: &mut [f64], n: usize, floor: f64) -> usize {
    debug_assert_eq!(m.len(), n * n);
    let mut bumped = 0;
    for j in 0..n {
        let (head, tail) = m.split_at_mut(j * n);
        let row_j = &mut tail[..n];
        // row_j[k] for k < j already holds L[j][k] after the update below.
        for k in 0..j {
            let row_k = &head[k * n..k * n + k + 1];
            let mut s = row_j[k];
            for p in 0..k {
                s -= row_j[p] * row_k[p];
            }
            row_j[k] = s / row_k[k];
        }
        let mut d = row_j[j];
        for p in 0..j {
            d -= row_j[p] * row_j[p];
        }
        if !(d > floor) {
            d = floor;
            bumped += 1;
        }
        row_j[j] = d.sqrt();
    }
    bumped
}

/// Solves `L L^T x = b` in place given the factor from [`cholesky_in_place`].
pub(crate) fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let mut s = b[i];
        for (lij, bj) in row.iter().zip(&b[..i]) {
            s -= lij * bj;
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let s = b[i] / l[i * n + i];
        b[i] = s;
        for j in 0..i {
            b[j] -= l[i * n + j] * s;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-abs norm; NaN entries propagate.
pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m: f64, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

/// Compressed sparse rows.
#[derive(Debug, Clone, Default)]
pub(crate) struct SparseRows {
    pub ncols: usize,
    pub ptr: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRows {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            ptr: vec![0],
            idx: Vec::new(),
            val: Vec::new(),
        }
    }

    /// Appends a row, merging duplicate column indices.
    pub fn push_row(&mut self, terms: &[(usize, f64)]) {
        let start = self.idx.len();
        for &(j, v) in terms {
            if let Some(p) = self.idx[start..].iter().position(|&k| k == j) {
                self.val[start + p] += v;
            } else {
                self.idx.push(j);
                self.val.push(v);
            }
        }
        self.ptr.push(self.idx.len());
    }

    pub fn nrows(&self) -> usize {
        self.ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.ptr[i]..self.ptr[i + 1];
        (&self.idx[r.clone()], &self.val[r])
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, v)| v * x[j]).sum()
    }

    /// `y = M x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.row_dot(i, x)).collect()
    }

    /// `y += M^T v`.
    pub fn mul_t_add(&self, v: &[f64], y: &mut [f64]) {
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let (idx, val) = self.row(i);
            for (&j, a) in idx.iter().zip(val) {
                y[j] += a * vi;
            }
        }
    }

    pub fn mul_t(&self, v: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.mul_t_add(v, &mut y);
        y
    }
}
