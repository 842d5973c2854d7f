use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Layout of the dense-sample problem on a search-region feature map.
///
/// The search region is `height×width×channels`; every `target_h×target_w`
/// window is one sample, split into a `grid×grid` arrangement of patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KrrGeometry {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub target_h: usize,
    pub target_w: usize,
    pub grid: usize,
}

impl KrrGeometry {
    /// `patch_count` is `M`, which must be a perfect square.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        target_h: usize,
        target_w: usize,
        patch_count: usize,
    ) -> Result<Self> {
        let grid = perfect_sqrt(patch_count).ok_or_else(|| {
            Error::Geometry(format!("patch count M={patch_count} is not a perfect square"))
        })?;
        let geo = Self {
            height,
            width,
            channels,
            target_h,
            target_w,
            grid,
        };
        geo.validate()?;
        Ok(geo)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid;
        if g == 0 || self.channels == 0 || self.target_h == 0 || self.target_w == 0 {
            return Err(Error::Geometry(format!("degenerate geometry {self:?}")));
        }
        if self.target_h % g != 0 || self.target_w % g != 0 {
            return Err(Error::Geometry(format!(
                "target {}×{} not divisible into a {g}×{g} patch grid",
                self.target_h, self.target_w
            )));
        }
        if self.target_h > self.height || self.target_w > self.width {
            return Err(Error::Geometry(format!(
                "target {}×{} must fit inside the search region {}×{}",
                self.target_h, self.target_w, self.height, self.width
            )));
        }
        Ok(())
    }

    /// Largest multiple of `grid` not exceeding `extent`.
    pub fn round_down_to_grid(extent: usize, grid: usize) -> usize {
        extent - extent % grid
    }

    pub fn patch_count(&self) -> usize {
        self.grid * self.grid
    }

    pub fn patch_h(&self) -> usize {
        self.target_h / self.grid
    }

    pub fn patch_w(&self) -> usize {
        self.target_w / self.grid
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_h() * self.patch_w() * self.channels
    }

    pub fn response_h(&self) -> usize {
        self.height - self.target_h + 1
    }

    pub fn response_w(&self) -> usize {
        self.width - self.target_w + 1
    }

    /// `N`
    pub fn sample_count(&self) -> usize {
        self.response_h() * self.response_w()
    }

    /// `d = h·w·C`
    pub fn sample_dim(&self) -> usize {
        self.target_h * self.target_w * self.channels
    }

    /// Top-left offset of patch `m` inside a sample window.
    pub fn patch_origin(&self, m: usize) -> (usize, usize) {
        ((m / self.grid) * self.patch_h(), (m % self.grid) * self.patch_w())
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let (h, w, c) = x.dims3()?;
        if (h, w, c) != (self.height, self.width, self.channels) {
            return Err(Error::Geometry(format!(
                "feature map {h}×{w}×{c} does not match geometry {}×{}×{}",
                self.height, self.width, self.channels
            )));
        }
        Ok(())
    }

    /// Copies patch `m` of a vectorized `h×w×C` sample.
    pub fn patch_of(&self, sample: &[f64], m: usize) -> Vec<f64> {
        let (r0, c0) = self.patch_origin(m);
        let c = self.channels;
        let span = self.patch_w() * c;
        let mut out = Vec::with_capacity(self.patch_dim());
        for r in 0..self.patch_h() {
            let start = ((r0 + r) * self.target_w + c0) * c;
            out.extend_from_slice(&sample[start..start + span]);
        }
        out
    }

    pub fn split_patches(&self, sample: &[f64]) -> Vec<Vec<f64>> {
        (0..self.patch_count())
            .map(|m| self.patch_of(sample, m))
            .collect()
    }

    /// Inverse of [`split_patches`](Self::split_patches): adds each patch
    /// vector into its place in a vectorized sample.
    pub fn scatter_patches(&self, patches: &[Vec<f64>]) -> Vec<f64> {
        let c = self.channels;
        let span = self.patch_w() * c;
        let mut out = vec![0.0; self.sample_dim()];
        for (m, patch) in patches.iter().enumerate() {
            let (r0, c0) = self.patch_origin(m);
            for r in 0..self.patch_h() {
                let start = ((r0 + r) * self.target_w + c0) * c;
                out[start..start + span].copy_from_slice(&patch[r * span..(r + 1) * span]);
            }
        }
        out
    }
}

pub(crate) fn perfect_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_sizes() {
        let g = KrrGeometry::new(12, 12, 3, 6, 6, 4).unwrap();
        assert_eq!(g.grid, 2);
        assert_eq!((g.patch_h(), g.patch_w(), g.patch_dim()), (3, 3, 27));
        assert_eq!(g.sample_count(), 49);
        assert_eq!(g.sample_dim(), 108);
        assert_eq!(g.patch_origin(3), (3, 3));
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(KrrGeometry::new(12, 12, 3, 6, 6, 8).is_err());
        assert!(KrrGeometry::new(12, 12, 3, 7, 6, 4).is_err());
        assert!(KrrGeometry::new(5, 12, 3, 6, 6, 4).is_err());
        assert_eq!(KrrGeometry::round_down_to_grid(14, 3), 12);
    }

    #[test]
    fn patches_round_trip() {
        let g = KrrGeometry::new(10, 10, 2, 6, 4, 4).unwrap();
        let s: Vec<f64> = (0..g.sample_dim()).map(|i| i as f64).collect();
        assert_eq!(g.scatter_patches(&g.split_patches(&s)), s);
    }
}
