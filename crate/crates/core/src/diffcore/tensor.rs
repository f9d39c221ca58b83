use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
///
/// A rank-0 tensor (empty shape) holds exactly one value. All other dimensions
/// must be positive, so `data.len()` always equals the product of `shape`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::dim(format!("zero-sized dimension in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Builds an `n x m` matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * m);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != m {
                return Err(Error::dim(format!("row {i} has {} columns, expected {m}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Tensor::new(vec![n, m], data)
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Result<Self> {
        let numel = shape.iter().product();
        Tensor::new(shape, vec![value; numel])
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Tensor::full(shape, 0.0)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Tensor::zeros(vec![n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    /// Same shape, zero-filled. Never fails since the shape is already valid.
    pub fn zeros_like(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// The single value of a scalar (or any one-element) tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    /// Row `i` of a matrix (or the whole vector for rank 1).
    pub fn row(&self, i: usize) -> &[f64] {
        if self.rank() < 2 {
            assert_eq!(i, 0, "row index out of range");
            return &self.data;
        }
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    /// Gathers rows by index into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::dim("select_rows needs a matrix"));
        }
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= self.rows() {
                return Err(Error::dim(format!("row {i} out of range for {} rows", self.rows())));
            }
            data.extend_from_slice(self.row(i));
        }
        Tensor::new(vec![idx.len(), c], data)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::dim("transpose needs a matrix"));
        }
        let (n, m) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Ok(Tensor::from_parts(vec![m, n], out))
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub(crate) fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.shape, other.shape);
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

/// Plain matrix product, no tape.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::dim(format!(
            "matmul needs matrices, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (n, k) = (a.shape[0], a.shape[1]);
    let (k2, m) = (b.shape[0], b.shape[1]);
    if k != k2 {
        return Err(Error::dim(format!(
            "matmul inner dimensions differ: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, m], out))
}

/// `out[i][j] = sum_d (q[i][d] - p[j][d])^2`, no tape.
pub fn pairwise_sq_dist(q: &Tensor, p: &Tensor) -> Result<Tensor> {
    if q.rank() != 2 || p.rank() != 2 {
        return Err(Error::dim("pairwise distance needs matrices"));
    }
    let m = q.cols();
    if p.cols() != m {
        return Err(Error::dim(format!(
            "pairwise distance trailing dimensions differ: {} vs {}",
            m,
            p.cols()
        )));
    }
    let (n, k) = (q.rows(), p.rows());
    let mut out = Vec::with_capacity(n * k);
    for i in 0..n {
        let qi = q.row(i);
        for j in 0..k {
            out.push(
                qi.iter()
                    .zip(p.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum(),
            );
        }
    }
    Ok(Tensor::from_parts(vec![n, k], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
        assert!(Tensor::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn matmul_identity_and_selection() {
        let m = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let i2 = Tensor::identity(2).unwrap();
        assert_eq!(matmul(&i2, &m).unwrap(), m);
        let a = Tensor::from_rows(&[[1.0, 0.0]]).unwrap();
        let b = Tensor::from_rows(&[[5.0], [7.0]]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[5.0]);
        assert!(matches!(matmul(&a, &a), Err(Error::Dimension(_))));
    }

    #[test]
    fn distance_three_four_five() {
        let q = Tensor::from_rows(&[[0.0, 0.0]]).unwrap();
        let p = Tensor::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(pairwise_sq_dist(&q, &p).unwrap().data(), &[25.0]);
        assert_eq!(pairwise_sq_dist(&p, &p).unwrap().data(), &[0.0]);
    }

    #[test]
    fn transpose_round_trip() {
        let m = Tensor::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let t = m.transpose().unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.get(2, 1), 6.0);
        assert_eq!(t.transpose().unwrap(), m);
    }
}
