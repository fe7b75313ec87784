//! Minimal dense row-major matrix used throughout the crate.
//!
//! Training at desk scale does not need a linear-algebra dependency; the
//! three products that dominate the workload (`x W^T`, `g W`, `g^T x`) are
//! written out here against contiguous rows so that the compiler can
//! vectorize them, and so that summation order is fixed for reproducibility.

/// Dense row-major `rows x cols` matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "Mat::from_rows needs at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Mat { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the listed rows of `self` into a new matrix, in order.
    pub fn gather_rows(&self, indices: &[usize]) -> Mat {
        let mut out = Mat::zeros(indices.len(), self.cols);
        for (dst, &src) in indices.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    /// `self (B x I) * w^T (I x O)` where `w` is stored `O x I`.
    /// This is the forward-pass product: each output entry is a dot of two
    /// contiguous rows.
    pub fn matmul_nt(&self, w: &Mat) -> Mat {
        assert_eq!(self.cols, w.cols, "inner dimension mismatch");
        let mut out = Mat::zeros(self.rows, w.rows);
        for b in 0..self.rows {
            let x = self.row(b);
            let o_row = out.row_mut(b);
            for (o, out_v) in o_row.iter_mut().enumerate() {
                *out_v = dot(x, w.row(o));
            }
        }
        out
    }

    /// `self (B x O) * w (O x I)` with `w` stored `O x I`.
    /// Used for input gradients; accumulates scaled rows of `w`.
    pub fn matmul_nn(&self, w: &Mat) -> Mat {
        assert_eq!(self.cols, w.rows, "inner dimension mismatch");
        let mut out = Mat::zeros(self.rows, w.cols);
        for b in 0..self.rows {
            let g = self.row(b);
            let o_row = out.row_mut(b);
            for (o, &gv) in g.iter().enumerate() {
                if gv != 0.0 {
                    axpy(o_row, gv, w.row(o));
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

/// Dot product with four accumulators; the fixed reassociation both breaks
/// the serial dependency chain and pins the summation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        acc[0] += xa[0] * xb[0];
        acc[1] += xa[1] * xb[1];
        acc[2] += xa[2] * xb[2];
        acc[3] += xa[3] * xb[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out += a * xs`, element-wise.
#[inline]
pub fn axpy(out: &mut [f64], a: f64, xs: &[f64]) {
    debug_assert_eq!(out.len(), xs.len());
    for (o, x) in out.iter_mut().zip(xs) {
        *o += a * x;
    }
}

/// Euclidean norm of a slice.
#[inline]
pub fn norm(xs: &[f64]) -> f64 {
    dot(xs, xs).sqrt()
}

/// Squared Euclidean distance between two slices.
#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}
