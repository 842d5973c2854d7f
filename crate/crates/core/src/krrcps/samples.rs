use super::geometry::KrrGeometry;
use crate::error::{dim_err, Result};
use crate::numerics::{axpy, dot, Tensor};

/// The `d×N` training matrix `D`. Columns (samples) are stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    dim: usize,
    count: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn zeros(dim: usize, count: usize) -> Self {
        Self {
            dim,
            count,
            data: vec![0.0; dim * count],
        }
    }

    /// Builds from a `d×N` row-major tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [d, n] = *t.shape() else {
            return dim_err(format!("sample matrix must be d×N, got {:?}", t.shape()));
        };
        let mut out = Self::zeros(d, n);
        for r in 0..d {
            for c in 0..n {
                out.data[c * d + r] = t.data()[r * n + c];
            }
        }
        Ok(out)
    }

    pub fn from_columns(dim: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let count = columns.len();
        let mut data = Vec::with_capacity(dim * count);
        for col in columns {
            if col.len() != dim {
                return dim_err(format!("column of length {} in a {dim}-row matrix", col.len()));
            }
            data.extend(col);
        }
        Ok(Self { dim, count, data })
    }

    /// Row-major `d×N` tensor view.
    pub fn to_tensor(&self) -> Tensor {
        let (d, n) = (self.dim, self.count);
        Tensor::from_fn(&[d, n], |i| self.data[(i % n) * d + i / n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `D·α`
    pub fn combine(&self, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() != self.count {
            return dim_err(format!(
                "{} weights for {} samples",
                weights.len(),
                self.count
            ));
        }
        let mut z = vec![0.0; self.dim];
        for (i, &a) in weights.iter().enumerate() {
            if a != 0.0 {
                axpy(a, self.column(i), &mut z);
            }
        }
        Ok(z)
    }

    /// `Dᵀ·v`
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return dim_err(format!("vector of length {} against dim {}", v.len(), self.dim));
        }
        Ok((0..self.count).map(|i| dot(self.column(i), v)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Densely crops every `h×w×C` window of `x` into the columns of `D`.
/// Column order is row-major over window top-left positions.
pub fn extract_dense_samples(x: &Tensor, geo: &KrrGeometry) -> Result<SampleMatrix> {
    geo.check_input(x)?;
    let (w, c) = (geo.width, geo.channels);
    let span = geo.target_w * c;
    let mut data = Vec::with_capacity(geo.sample_dim() * geo.sample_count());
    for top in 0..geo.response_h() {
        for left in 0..geo.response_w() {
            for r in 0..geo.target_h {
                let start = ((top + r) * w + left) * c;
                data.extend_from_slice(&x.data()[start..start + span]);
            }
        }
    }
    Ok(SampleMatrix {
        dim: geo.sample_dim(),
        count: geo.sample_count(),
        data,
    })
}
