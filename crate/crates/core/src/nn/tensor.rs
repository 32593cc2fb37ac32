//! Dense row-major `f64` matrices.
//!
//! All matrix products accumulate each output element over the inner
//! dimension in ascending index order, starting from `0.0`. The outer
//! loops may run in parallel across output rows, but the per-element
//! summation order never changes, so results are bit-reproducible
//! regardless of thread count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(not(target_arch = "wasm32"))]
use rayon::prelude::*;

/// Below this many multiply-adds a product runs on the calling thread.
#[cfg(not(target_arch = "wasm32"))]
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "from_rows",
                    left: (i, r.len()),
                    right: (0, cols),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copies the given rows, in order, into a new tensor.
    pub fn gather_rows(&self, idx: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Tensor {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, ctx: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(ctx.to_string()))
        }
    }

    fn check_same(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check_same(other, "zip_map")?;
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Sum of all elements in storage order.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// 1×cols tensor of per-column sums, accumulated down the rows.
    pub fn col_sums(&self) -> Tensor {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        Tensor {
            rows: 1,
            cols: self.cols,
            data: out,
        }
    }

    /// Adds a 1×cols row vector to every row.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::Shape {
                op: "add_row",
                left: self.shape(),
                right: row.shape(),
            });
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (o, &b) in out.row_mut(r).iter_mut().zip(&row.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Tensor {
        const TILE: usize = 32;
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r0 in (0..self.rows).step_by(TILE) {
            for c0 in (0..self.cols).step_by(TILE) {
                for r in r0..(r0 + TILE).min(self.rows) {
                    for c in c0..(c0 + TILE).min(self.cols) {
                        out.data[c * self.rows + r] = self.data[r * self.cols + c];
                    }
                }
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (k, n) = (self.cols, other.cols);
        Ok(gemm(self.rows, k, n, |i, p| self.data[i * k + p], |p, j| other.data[p * n + j]))
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rows != other.rows {
            return Err(Error::Shape {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, n) = (self.cols, other.cols);
        Ok(gemm(m, self.rows, n, |i, p| self.data[p * m + i], |p, j| other.data[p * n + j]))
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let k = self.cols;
        Ok(gemm(self.rows, k, other.rows, |i, p| self.data[i * k + p], |p, j| other.data[j * k + p]))
    }
}

/// Register tile: `MR × NR` accumulators live across the whole inner sum.
const MR: usize = 4;
const NR: usize = 8;

/// `out[i][j] = Σ_p a(i, p) · b[p][j]`, each element summed from `0.0` in
/// ascending `p`, so tiling and threading never change a bit of the result.
fn gemm<A, B>(m: usize, k: usize, n: usize, a: A, b: B) -> Tensor
where
    A: Fn(usize, usize) -> f64 + Sync + Send,
    B: Fn(usize, usize) -> f64 + Sync + Send,
{
    let mut out = Tensor::zeros(m, n);
    if n == 0 {
        return out;
    }
    // Column strips of `b`, each stored as k contiguous NR-wide rows.
    let strips = n / NR;
    let mut packed = vec![0.0; strips * k * NR];
    for st in 0..strips {
        for p in 0..k {
            for c in 0..NR {
                packed[(st * k + p) * NR + c] = b(p, st * NR + c);
            }
        }
    }
    let packed = &packed;
    let kernel = |block: usize, rows: &mut [f64]| {
        let i0 = block * MR;
        let nrows = rows.len() / n;
        let mut j0 = 0;
        if nrows == MR {
            for st in 0..strips {
                let strip = &packed[st * k * NR..(st + 1) * k * NR];
                let mut acc = [[0.0f64; NR]; MR];
                for (p, bv) in strip.chunks_exact(NR).enumerate() {
                    let bv: &[f64; NR] = bv.try_into().expect("NR wide");
                    for (r, accr) in acc.iter_mut().enumerate() {
                        let av = a(i0 + r, p);
                        for c in 0..NR {
                            accr[c] += av * bv[c];
                        }
                    }
                }
                for (r, accr) in acc.iter().enumerate() {
                    rows[r * n + j0..r * n + j0 + NR].copy_from_slice(accr);
                }
                j0 += NR;
            }
        }
        for r in 0..nrows {
            let start = if nrows == MR { j0 } else { 0 };
            for j in start..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a(i0 + r, p) * b(p, j);
                }
                rows[r * n + j] = s;
            }
        }
    };
    for_each_block(&mut out.data, n * MR, m * k * n, kernel);
    out
}

#[cfg(not(target_arch = "wasm32"))]
fn for_each_block<F>(out: &mut [f64], chunk: usize, work: usize, kernel: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if work >= PAR_THRESHOLD {
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, rows)| kernel(i, rows));
    } else {
        out.chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, rows)| kernel(i, rows));
    }
}

#[cfg(target_arch = "wasm32")]
fn for_each_block<F>(out: &mut [f64], chunk: usize, _work: usize, kernel: F)
where
    F: Fn(usize, &mut [f64]),
{
    out.chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, rows)| kernel(i, rows));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rng::SeededRng;

    fn random(rows: usize, cols: usize, rng: &mut SeededRng) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Tensor::from_vec(rows, cols, data).unwrap()
    }

    fn triple_loop(a: &Tensor, b: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn identity_product() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let i2 = Tensor::identity(2);
        assert_eq!(i2.matmul(&x).unwrap(), x);
        assert_eq!(x.matmul(&i2).unwrap(), x);
    }

    #[test]
    fn dot_product() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = SeededRng::new(11);
        let a = random(5, 7, &mut rng);
        let b = random(7, 3, &mut rng);
        let got = a.matmul(&b).unwrap();
        let want = triple_loop(&a, &b);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_products_agree() {
        let mut rng = SeededRng::new(5);
        let a = random(6, 4, &mut rng);
        let b = random(6, 3, &mut rng);
        let c = random(5, 4, &mut rng);
        let tn = a.t_matmul(&b).unwrap();
        let tn_ref = triple_loop(&a.transpose(), &b);
        let nt = a.matmul_t(&c).unwrap();
        let nt_ref = triple_loop(&a, &c.transpose());
        for (g, w) in tn.data().iter().zip(tn_ref.data()) {
            assert!((g - w).abs() < 1e-12);
        }
        for (g, w) in nt.data().iter().zip(nt_ref.data()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_path_is_bit_identical_to_loop() {
        // Large enough to take the parallel branch.
        let mut rng = SeededRng::new(9);
        let a = random(64, 64, &mut rng);
        let b = random(64, 64, &mut rng);
        let got = a.matmul(&b).unwrap();
        let want = triple_loop(&a, &b);
        assert_eq!(got, want);
    }

    #[test]
    fn blocking_edges_are_bit_identical_to_loop() {
        let mut rng = SeededRng::new(3);
        let a = random(19, 300, &mut rng);
        let b = random(300, 517, &mut rng);
        assert_eq!(a.matmul(&b).unwrap(), triple_loop(&a, &b));
        let at = a.transpose();
        assert_eq!(at.t_matmul(&b).unwrap(), triple_loop(&a, &b));
        let bt = b.transpose();
        assert_eq!(a.matmul_t(&bt).unwrap(), triple_loop(&a, &b));
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
    }
}
