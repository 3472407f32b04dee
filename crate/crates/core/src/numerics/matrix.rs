use super::{NumericsError, Real};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

// Column and depth tile sizes for the product kernel. Tiling only changes
// which products are computed together; every output entry still sums its
// terms in ascending inner index.
const COL_TILE: usize = 256;
const DEPTH_TILE: usize = 128;

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        const B: usize = 32;
        for rb in (0..self.rows).step_by(B) {
            for cb in (0..self.cols).step_by(B) {
                for r in rb..(rb + B).min(self.rows) {
                    for c in cb..(cb + B).min(self.cols) {
                        out.data[c * self.rows + r] = self.data[r * self.cols + c];
                    }
                }
            }
        }
        out
    }

    /// `self · other`. Each output entry accumulates `a[i][k] * b[k][j]` for
    /// ascending `k`, starting from zero, so the result equals
    /// [`naive_matmul`] bit for bit.
    pub fn matmul(&self, other: &Self) -> Result<Self, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(m, n);
        let a = &self.data;
        let b = &other.data;
        let c = &mut out.data;
        for jb in (0..n).step_by(COL_TILE) {
            let je = (jb + COL_TILE).min(n);
            for kb in (0..k).step_by(DEPTH_TILE) {
                let ke = (kb + DEPTH_TILE).min(k);
                let mut i = 0;
                // Four output rows share each streamed row of `b`.
                while i + 4 <= m {
                    let (c0, rest) = c[i * n..].split_at_mut(n);
                    let (c1, rest) = rest.split_at_mut(n);
                    let (c2, rest) = rest.split_at_mut(n);
                    let c3 = &mut rest[..n];
                    let (c0, c1, c2, c3) = (
                        &mut c0[jb..je],
                        &mut c1[jb..je],
                        &mut c2[jb..je],
                        &mut c3[jb..je],
                    );
                    for kk in kb..ke {
                        let a0 = a[i * k + kk];
                        let a1 = a[(i + 1) * k + kk];
                        let a2 = a[(i + 2) * k + kk];
                        let a3 = a[(i + 3) * k + kk];
                        let brow = &b[kk * n + jb..kk * n + je];
                        for j in 0..brow.len() {
                            let bv = brow[j];
                            c0[j] = c0[j] + a0 * bv;
                            c1[j] = c1[j] + a1 * bv;
                            c2[j] = c2[j] + a2 * bv;
                            c3[j] = c3[j] + a3 * bv;
                        }
                    }
                    i += 4;
                }
                while i < m {
                    let crow = &mut c[i * n + jb..i * n + je];
                    for kk in kb..ke {
                        let av = a[i * k + kk];
                        let brow = &b[kk * n + jb..kk * n + je];
                        for (cv, &bv) in crow.iter_mut().zip(brow) {
                            *cv = *cv + av * bv;
                        }
                    }
                    i += 1;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Self) -> Result<Self, NumericsError> {
        if self.cols != other.cols {
            return Err(NumericsError::DimensionMismatch {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        self.matmul(&other.transpose())
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Self) -> Result<Self, NumericsError> {
        if self.rows != other.rows {
            return Err(NumericsError::DimensionMismatch {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        self.transpose().matmul(other)
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[T]) -> Result<(), NumericsError> {
        if bias.len() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                op: "add_row_vector",
                left: self.shape(),
                right: (1, bias.len()),
            });
        }
        for r in 0..self.rows {
            for (v, &b) in self.row_mut(r).iter_mut().zip(bias) {
                *v = *v + b;
            }
        }
        Ok(())
    }

    /// Column sums, accumulated top to bottom.
    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(r)) {
                *o = *o + v;
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: T, other: &Self) -> Result<(), NumericsError> {
        if self.shape() != other.shape() {
            return Err(NumericsError::DimensionMismatch {
                op: "axpy",
                left: self.shape(),
                right: other.shape(),
            });
        }
        for (v, &o) in self.data.iter_mut().zip(&other.data) {
            *v = *v + s * o;
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, NumericsError> {
        let mut out = self.clone();
        out.axpy(T::one(), other)?;
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Reference triple-loop product, kept as the oracle for [`Matrix::matmul`].
pub fn naive_matmul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>, NumericsError> {
    if a.cols() != b.rows() {
        return Err(NumericsError::DimensionMismatch {
            op: "naive_matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        let mut acc = T::zero();
        for k in 0..a.cols() {
            acc = acc + a.get(i, k) * b.get(k, j);
        }
        acc
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{split_rng, Stream};

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = split_rng(seed, Stream::Init);
        Matrix::from_fn(rows, cols, |_, _| rng.uniform_in(-1.0, 1.0))
    }

    #[test]
    fn identity_is_left_neutral() {
        let a = random(3, 4, 1);
        assert_eq!(Matrix::identity(3).matmul(&a).unwrap(), a);
    }

    #[test]
    fn zero_annihilates() {
        let a = random(4, 3, 2);
        let z = Matrix::zeros(3, 5);
        assert_eq!(a.matmul(&z).unwrap(), Matrix::zeros(4, 5));
    }

    #[test]
    fn matches_triple_loop_exactly() {
        let a = random(5, 7, 3);
        let b = random(7, 3, 4);
        let fast = a.matmul(&b).unwrap();
        let slow = naive_matmul(&a, &b).unwrap();
        for (x, y) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn matches_triple_loop_across_tiles() {
        // Spans several column and depth tiles plus a ragged row remainder.
        let a = random(11, 300, 5);
        let b = random(300, 517, 6);
        let fast = a.matmul(&b).unwrap();
        let slow = naive_matmul(&a, &b).unwrap();
        assert!(fast
            .as_slice()
            .iter()
            .zip(slow.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn f32_matches_triple_loop_exactly() {
        let a = random(9, 33, 7).cast::<f32>();
        let b = random(33, 6, 8).cast::<f32>();
        assert_eq!(a.matmul(&b).unwrap(), naive_matmul(&a, &b).unwrap());
    }

    #[test]
    fn dimension_mismatch_names_both_shapes() {
        let err = random(2, 3, 1).matmul(&random(4, 2, 1)).unwrap_err();
        assert_eq!(
            err,
            NumericsError::DimensionMismatch {
                op: "matmul",
                left: (2, 3),
                right: (4, 2)
            }
        );
        assert!(err.to_string().contains("(2, 3)"));
        assert!(err.to_string().contains("(4, 2)"));
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = random(4, 6, 9);
        let b = random(5, 6, 10);
        assert_eq!(a.matmul_t(&b).unwrap(), a.matmul(&b.transpose()).unwrap());
        let c = random(4, 3, 11);
        assert_eq!(a.t_matmul(&c).unwrap(), a.transpose().matmul(&c).unwrap());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Matrix::<f64>::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
