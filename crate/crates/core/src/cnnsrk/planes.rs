use crate::error::{dim_err, Result};
use crate::numerics::Tensor;

/// Channel-major `C×H×W` buffer; the CNN works on whole planes.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Planes {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Planes {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w, c) = t.dims3()?;
        if h == 0 || w == 0 || c == 0 {
            return dim_err("empty feature map");
        }
        let mut p = Self::zeros(c, h, w);
        for (i, &v) in t.data().iter().enumerate() {
            let ch = i % c;
            let pix = i / c;
            p.data[ch * h * w + pix] = v;
        }
        Ok(p)
    }

    pub fn to_tensor(&self) -> Tensor {
        let (c, hw) = (self.c, self.h * self.w);
        Tensor::from_fn(&[self.h, self.w, self.c], |i| self.data[(i % c) * hw + i / c])
    }

    pub fn plane(&self, ch: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn plane_mut(&mut self, ch: usize) -> &mut [f64] {
        let n = self.h * self.w;
        &mut self.data[ch * n..(ch + 1) * n]
    }

    /// Zero-padded copy.
    pub fn padded(&self, ph: usize, pw: usize) -> Self {
        let (h2, w2) = (self.h + 2 * ph, self.w + 2 * pw);
        let mut out = Self::zeros(self.c, h2, w2);
        for ch in 0..self.c {
            let src = self.plane(ch);
            let dst = out.plane_mut(ch);
            for r in 0..self.h {
                let d0 = (r + ph) * w2 + pw;
                dst[d0..d0 + self.w].copy_from_slice(&src[r * self.w..(r + 1) * self.w]);
            }
        }
        out
    }
}
