//! Dense row-major `f32` matrices and the handful of kernels the
//! autoencoders need.
//!
//! Storage is single precision. Every reduction (matrix products, row norms,
//! column sums) accumulates in `f64` per output element and rounds once.

mod rng;

pub use rng::{mix_seed, splitmix64, splitmix64_next, Rng};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Param(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Param(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
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

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f32) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f32]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            let src = self.row(i);
            for (j, &v) in src.iter().enumerate() {
                out.data[j * self.rows + i] = v;
            }
        }
        out
    }

    /// `self` stacked on top of `other`. Either side may have zero rows.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows == 0 {
            return Ok(other.clone());
        }
        if other.rows == 0 {
            return Ok(self.clone());
        }
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "vstack",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Gathers the listed rows, in the listed order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Contiguous block of rows `start..end`.
    pub fn row_range(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sum of each column, accumulated in `f64` from row 0 downwards.
    pub fn column_sums(&self) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.cols];
        for r in self.row_iter() {
            for (a, &v) in acc.iter_mut().zip(r) {
                *a += v as f64;
            }
        }
        acc.into_iter().map(|v| v as f32).collect()
    }
}

/// Matrix product `a * b`.
///
/// Each output cell is accumulated in `f64`, sequentially over the inner
/// index `k = 0, 1, ..`, and rounded to `f32` once. Terms whose left factor
/// is exactly zero are skipped; for finite operands this leaves every cell
/// bit-identical to the full sum, since the accumulator starts at `+0.0`
/// and adding a signed zero to it is the identity. Rows of `a` are
/// independent, so any row partition preserves the result.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    let mut acc = vec![0.0f64; b.cols];
    for i in 0..a.rows {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let aik = aik as f64;
            for (c, &bkj) in acc.iter_mut().zip(b.row(k)) {
                *c += aik * bkj as f64;
            }
        }
        for (o, &c) in out.row_mut(i).iter_mut().zip(&acc) {
            *o = c as f32;
        }
    }
    Ok(out)
}

/// `rows x cols` matrix of i.i.d. draws, uniform on `[lo, hi)`, filled in
/// row-major order.
pub fn uniform_matrix(rng: &mut Rng, rows: usize, cols: usize, lo: f32, hi: f32) -> Result<Matrix> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::Param(format!("uniform bounds need lo < hi, got [{lo}, {hi})")));
    }
    let span = hi - lo;
    let below_hi = next_down(hi);
    let data = (0..rows * cols)
        .map(|_| {
            // lo + span * u can round up onto hi
            let v = lo + span * rng.next_f32();
            if v >= hi {
                below_hi
            } else {
                v
            }
        })
        .collect();
    Ok(Matrix { rows, cols, data })
}

fn next_down(x: f32) -> f32 {
    if x > 0.0 {
        f32::from_bits(x.to_bits() - 1)
    } else if x == 0.0 {
        -f32::from_bits(1)
    } else {
        f32::from_bits(x.to_bits() + 1)
    }
}

/// Euclidean distance between corresponding rows of `a` and `b`.
pub fn rowwise_l2(a: &Matrix, b: &Matrix) -> Result<Vec<f32>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op: "rowwise_l2",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(a.row_iter()
        .zip(b.row_iter())
        .map(|(x, y)| {
            let ss: f64 = x
                .iter()
                .zip(y)
                .map(|(&p, &q)| {
                    let d = p as f64 - q as f64;
                    d * d
                })
                .sum();
            ss.sqrt() as f32
        })
        .collect())
}
