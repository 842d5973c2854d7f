use crate::error::{dim_err, Error, Result};

/// Dense row-major array of `f64` with up to four axes.
///
/// Feature maps are `H×W×C`, heat maps `H×W`. A rank-2 tensor is treated as
/// a single-channel map wherever an `H×W×C` view is requested.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(
            (1..=4).contains(&shape.len()),
            "tensor rank must be 1..=4, got {}",
            shape.len()
        );
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return dim_err(format!("tensor rank must be 1..=4, got {}", shape.len()));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return dim_err(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Builds a tensor by evaluating `f` at every flat index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(f).collect();
        Self::from_vec(shape, data).expect("shape checked")
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self { shape: vec![n], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.is_empty() || shape.len() > 4 {
            return dim_err(format!("cannot reshape {:?} into {:?}", self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// `(H, W, C)` view; rank-2 tensors report `C = 1`.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [h, w] => Ok((h, w, 1)),
            [h, w, c] => Ok((h, w, c)),
            _ => dim_err(format!("expected an H×W or H×W×C tensor, got {:?}", self.shape)),
        }
    }

    /// `(H, W)` of a rank-2 map.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match *self.shape.as_slice() {
            [h, w] => Ok((h, w)),
            _ => dim_err(format!("expected an H×W map, got {:?}", self.shape)),
        }
    }

    #[inline]
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn at3(&self, r: usize, c: usize, ch: usize) -> f64 {
        let w = self.shape[1];
        let cs = self.shape.get(2).copied().unwrap_or(1);
        self.data[(r * w + c) * cs + ch]
    }

    #[inline]
    pub fn set3(&mut self, r: usize, c: usize, ch: usize, v: f64) {
        let w = self.shape[1];
        let cs = self.shape.get(2).copied().unwrap_or(1);
        self.data[(r * w + c) * cs + ch] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    pub fn ensure_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return dim_err(format!("shape {:?} != {:?}", self.shape, other.shape));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("non-finite value in {what}")))
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.len() != other.len() {
            return dim_err(format!("dot of {} and {} values", self.len(), other.len()));
        }
        Ok(dot(&self.data, &other.data))
    }

    /// Channel `ch` of an `H×W×C` tensor as an `H×W` map.
    pub fn channel(&self, ch: usize) -> Result<Tensor> {
        let (h, w, c) = self.dims3()?;
        if ch >= c {
            return dim_err(format!("channel {ch} out of range for {c} channels"));
        }
        Ok(Tensor {
            shape: vec![h, w],
            data: self.data.iter().skip(ch).step_by(c).copied().collect(),
        })
    }

    /// Index of the maximum; ties go to the lowest flat index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += k * x`
#[inline]
pub(crate) fn axpy(k: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += k * xi;
    }
}
