//! Image tensors and patch extraction.
//!
//! An [`ImageTensor`] is a dense `(channels, height, width)` array. A
//! [`PatchGrid`] holds every `q x q` window of an image as one flattened row,
//! ordered row-major over window positions; all kernel and gradient code works
//! on these grids.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense image in `(channels, height, width)` layout, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image extents must be positive, got {channels}x{height}x{width}"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "image buffer length",
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
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

    /// One channel as a `height x width` view.
    pub fn channel(&self, c: usize) -> ArrayView2<'_, T> {
        let plane = self.height * self.width;
        ArrayView2::from_shape(
            (self.height, self.width),
            &self.data[c * plane..(c + 1) * plane],
        )
        .expect("channel plane is contiguous")
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "image contains non-finite values".into(),
            ))
        }
    }
}

/// Patch geometry: window side `patch_size`, step `stride`, symmetric
/// zero `padding` on every image border.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub patch_size: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PatchSpec {
    pub fn new(patch_size: usize, stride: usize, padding: usize) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::InvalidArgument("patch size must be positive".into()));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        Ok(Self {
            patch_size,
            stride,
            padding,
        })
    }

    /// Window side `q` with same-padding `(q - 1) / 2` and stride 1: the grid
    /// of an odd-sized window then matches the image extents.
    pub fn same(patch_size: usize) -> Result<Self> {
        Self::new(patch_size, 1, patch_size.saturating_sub(1) / 2)
    }

    /// Grid extents over a `height x width` image:
    /// `floor((extent + 2 padding - q) / stride) + 1` per axis.
    pub fn grid_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let q = self.patch_size;
        let gh = Self::axis_count(height + 2 * self.padding, q, self.stride)?;
        let gw = Self::axis_count(width + 2 * self.padding, q, self.stride)?;
        Ok((gh, gw))
    }

    fn axis_count(padded: usize, q: usize, stride: usize) -> Result<usize> {
        if q > padded {
            return Err(Error::ShapeMismatch(format!(
                "patch size {q} exceeds padded extent {padded}"
            )));
        }
        Ok((padded - q) / stride + 1)
    }
}

/// All patches of one image: row `gy * grid_width + gx` holds the window whose
/// top-left corner sits at `(gy * stride - padding, gx * stride - padding)`,
/// flattened channel-major (`c * q * q + wy * q + wx`).
#[derive(Debug, Clone)]
pub struct PatchGrid<T> {
    channels: usize,
    patch_size: usize,
    grid_height: usize,
    grid_width: usize,
    rows: Array2<T>,
}

impl<T: Scalar> PatchGrid<T> {
    pub fn new(
        channels: usize,
        patch_size: usize,
        grid_height: usize,
        grid_width: usize,
        rows: Array2<T>,
    ) -> Result<Self> {
        let positions = grid_height * grid_width;
        let dim = channels * patch_size * patch_size;
        if rows.nrows() != positions {
            return Err(Error::DimensionMismatch {
                context: "patch grid rows",
                expected: positions,
                got: rows.nrows(),
            });
        }
        if rows.ncols() != dim {
            return Err(Error::DimensionMismatch {
                context: "patch grid columns",
                expected: dim,
                got: rows.ncols(),
            });
        }
        Ok(Self {
            channels,
            patch_size,
            grid_height,
            grid_width,
            rows,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn grid_height(&self) -> usize {
        self.grid_height
    }

    pub fn grid_width(&self) -> usize {
        self.grid_width
    }

    pub fn n_positions(&self) -> usize {
        self.grid_height * self.grid_width
    }

    /// Flattened patch length `c * q * q`.
    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    pub fn rows(&self) -> &Array2<T> {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut Array2<T> {
        &mut self.rows
    }

    pub fn row(&self, position: usize) -> ArrayView1<'_, T> {
        self.rows.row(position)
    }

    pub fn into_rows(self) -> Array2<T> {
        self.rows
    }
}

/// Extracts every window of `x` under `spec` into a [`PatchGrid`].
/// Out-of-image entries read as zero.
pub fn extract_patches<T: Scalar>(x: &ImageTensor<T>, spec: &PatchSpec) -> Result<PatchGrid<T>> {
    let (gh, gw) = spec.grid_dims(x.height(), x.width())?;
    let q = spec.patch_size;
    let dim = x.channels() * q * q;
    let mut rows = Array2::<T>::zeros((gh * gw, dim));
    let (h, w) = (x.height() as i64, x.width() as i64);
    for gy in 0..gh {
        let top = (gy * spec.stride) as i64 - spec.padding as i64;
        for gx in 0..gw {
            let left = (gx * spec.stride) as i64 - spec.padding as i64;
            let mut row = rows.row_mut(gy * gw + gx);
            let mut k = 0;
            for c in 0..x.channels() {
                for wy in 0..q {
                    let y = top + wy as i64;
                    for wx in 0..q {
                        let xc = left + wx as i64;
                        if y >= 0 && y < h && xc >= 0 && xc < w {
                            row[k] = x.get(c, y as usize, xc as usize);
                        }
                        k += 1;
                    }
                }
            }
        }
    }
    PatchGrid::new(x.channels(), q, gh, gw, rows)
}

/// Adjoint of [`extract_patches`]: accumulates every patch row back into
/// image coordinates under the same stride/padding geometry. Overlapping
/// windows add; padded (out-of-image) entries are dropped. Satisfies
/// `<extract(x), G> == <x, scatter(G)>` for all `x` and `G`.
pub fn scatter_patches<T: Scalar>(
    grid: &PatchGrid<T>,
    spec: &PatchSpec,
    height: usize,
    width: usize,
) -> Result<ImageTensor<T>> {
    if spec.patch_size != grid.patch_size() {
        return Err(Error::DimensionMismatch {
            context: "scatter patch size",
            expected: grid.patch_size(),
            got: spec.patch_size,
        });
    }
    let (gh, gw) = spec.grid_dims(height, width)?;
    if gh != grid.grid_height() || gw != grid.grid_width() {
        return Err(Error::ShapeMismatch(format!(
            "scatter target {height}x{width} yields a {gh}x{gw} grid, but the patch grid is {}x{}",
            grid.grid_height(),
            grid.grid_width()
        )));
    }
    let q = spec.patch_size;
    let channels = grid.channels();
    let mut out = ImageTensor::zeros(channels, height, width);
    let (h, w) = (height as i64, width as i64);
    for gy in 0..gh {
        let top = (gy * spec.stride) as i64 - spec.padding as i64;
        for gx in 0..gw {
            let left = (gx * spec.stride) as i64 - spec.padding as i64;
            let row = grid.row(gy * gw + gx);
            let mut k = 0;
            for c in 0..channels {
                for wy in 0..q {
                    let y = top + wy as i64;
                    for wx in 0..q {
                        let xc = left + wx as i64;
                        if y >= 0 && y < h && xc >= 0 && xc < w {
                            let (yu, xu) = (y as usize, xc as usize);
                            let v = out.get(c, yu, xu) + row[k];
                            out.set(c, yu, xu, v);
                        }
                        k += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Applies a square transform `B` to every patch: row `p` becomes `(B p)^T`.
pub fn apply_patch_transform<T: Scalar>(
    grid: &PatchGrid<T>,
    b: &ArrayView2<'_, T>,
) -> Result<PatchGrid<T>> {
    let dim = grid.patch_dim();
    if b.nrows() != dim || b.ncols() != dim {
        return Err(Error::ShapeMismatch(format!(
            "patch transform must be {dim}x{dim}, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    let rows = grid.rows().dot(&b.t());
    PatchGrid::new(
        grid.channels(),
        grid.patch_size(),
        grid.grid_height(),
        grid.grid_width(),
        rows,
    )
}

/// Lays the patches of `grid` out as disjoint `q x q` tiles, producing a
/// `(channels_out, grid_height * q, grid_width * q)` image. Inverse of
/// [`extract_patches`] when `stride == patch_size` and `padding == 0`.
pub fn fold_to_image<T: Scalar>(grid: &PatchGrid<T>, channels_out: usize) -> Result<ImageTensor<T>> {
    let q = grid.patch_size();
    if channels_out * q * q != grid.patch_dim() {
        return Err(Error::ShapeMismatch(format!(
            "cannot fold patch dim {} into {channels_out} channel(s) of {q}x{q} tiles",
            grid.patch_dim()
        )));
    }
    let (gh, gw) = (grid.grid_height(), grid.grid_width());
    let mut out = ImageTensor::zeros(channels_out, gh * q, gw * q);
    for gy in 0..gh {
        for gx in 0..gw {
            let row = grid.row(gy * gw + gx);
            let mut k = 0;
            for c in 0..channels_out {
                for wy in 0..q {
                    for wx in 0..q {
                        out.set(c, gy * q + wy, gx * q + wx, row[k]);
                        k += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn seq_image(c: usize, h: usize, w: usize) -> ImageTensor<f64> {
        let data: Vec<f64> = (0..c * h * w).map(|v| v as f64).collect();
        ImageTensor::new(c, h, w, data).unwrap()
    }

    #[test]
    fn single_patch_covers_whole_image() {
        let x = seq_image(1, 3, 3);
        let spec = PatchSpec::new(3, 1, 0).unwrap();
        let g = extract_patches(&x, &spec).unwrap();
        assert_eq!((g.grid_height(), g.grid_width()), (1, 1));
        let row: Vec<f64> = g.row(0).to_vec();
        assert_eq!(row, (0..9).map(|v| v as f64).collect::<Vec<_>>());
    }

    #[test]
    fn four_by_four_with_three_window_yields_four_patches() {
        let x = seq_image(1, 4, 4);
        let spec = PatchSpec::new(3, 1, 0).unwrap();
        let g = extract_patches(&x, &spec).unwrap();
        assert_eq!((g.grid_height(), g.grid_width()), (2, 2));
        // Top-left window of the row-major 4x4 ramp.
        assert_eq!(
            g.row(0).to_vec(),
            vec![0.0, 1.0, 2.0, 4.0, 5.0, 6.0, 8.0, 9.0, 10.0]
        );
        // Bottom-right window starts at (1, 1).
        assert_eq!(
            g.row(3).to_vec(),
            vec![5.0, 6.0, 7.0, 9.0, 10.0, 11.0, 13.0, 14.0, 15.0]
        );
    }

    #[test]
    fn unit_patches_enumerate_pixels() {
        let x = seq_image(1, 2, 3);
        let spec = PatchSpec::new(1, 1, 0).unwrap();
        let g = extract_patches(&x, &spec).unwrap();
        assert_eq!(g.n_positions(), 6);
        for p in 0..6 {
            assert_eq!(g.row(p)[0], p as f64);
        }
    }

    #[test]
    fn channel_major_flattening_order() {
        let x = seq_image(2, 2, 2);
        let spec = PatchSpec::new(2, 1, 0).unwrap();
        let g = extract_patches(&x, &spec).unwrap();
        // Channel 0 pixels first, then channel 1.
        assert_eq!(
            g.row(0).to_vec(),
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]
        );
    }

    #[test]
    fn same_padding_preserves_grid_extent_and_zero_fills() {
        let x = seq_image(1, 5, 5);
        let spec = PatchSpec::same(3).unwrap();
        let g = extract_patches(&x, &spec).unwrap();
        assert_eq!((g.grid_height(), g.grid_width()), (5, 5));
        // Corner window: the out-of-image band reads as zero.
        assert_eq!(
            g.row(0).to_vec(),
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 5.0, 6.0]
        );
    }

    #[test]
    fn grid_dims_match_sliding_count() {
        for h in 1..8usize {
            for q in 1..=h {
                for s in 1..4usize {
                    for pad in 0..3usize {
                        let spec = PatchSpec::new(q, s, pad).unwrap();
                        let brute = (0..)
                            .take_while(|i| i * s + q <= h + 2 * pad)
                            .count();
                        let (gh, _) = spec.grid_dims(h, h).unwrap();
                        assert_eq!(gh, brute, "h={h} q={q} s={s} pad={pad}");
                    }
                }
            }
        }
    }

    #[test]
    fn oversized_patch_is_rejected() {
        let x = seq_image(1, 3, 3);
        let spec = PatchSpec::new(5, 1, 0).unwrap();
        assert!(extract_patches(&x, &spec).is_err());
    }

    #[test]
    fn fold_inverts_non_overlapping_extraction() {
        let x = seq_image(2, 6, 4);
        let spec = PatchSpec::new(2, 2, 0).unwrap();
        let g = extract_patches(&x, &spec).unwrap();
        let back = fold_to_image(&g, 2).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn scatter_is_the_adjoint_of_extract() {
        // Defining property: <extract(x), G> == <x, scatter(G)> for any G,
        // including overlapping windows and padding.
        use crate::seeds::rng_for;
        use crate::Scalar;
        for (q, stride, padding) in [(3usize, 1usize, 1usize), (2, 2, 0), (3, 2, 1)] {
            let mut rng = rng_for(900 + q as u64, "scatter-adjoint");
            let x = ImageTensor::from_fn(2, 5, 4, |_, _, _| f64::standard_normal(&mut rng));
            let spec = PatchSpec::new(q, stride, padding).unwrap();
            let ex = extract_patches(&x, &spec).unwrap();
            let g = PatchGrid::new(
                2,
                q,
                ex.grid_height(),
                ex.grid_width(),
                Array2::from_shape_fn(ex.rows().dim(), |_| f64::standard_normal(&mut rng)),
            )
            .unwrap();
            let lhs: f64 = ex
                .rows()
                .iter()
                .zip(g.rows().iter())
                .map(|(a, b)| a * b)
                .sum();
            let back = scatter_patches(&g, &spec, 5, 4).unwrap();
            let rhs: f64 = x
                .as_slice()
                .iter()
                .zip(back.as_slice().iter())
                .map(|(a, b)| a * b)
                .sum();
            assert!(
                (lhs - rhs).abs() < 1e-10,
                "adjoint identity broken for q={q} s={stride} p={padding}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn scatter_rejects_mismatched_geometry() {
        let x = seq_image(1, 4, 4);
        let spec = PatchSpec::new(2, 1, 0).unwrap();
        let g = extract_patches(&x, &spec).unwrap();
        assert!(scatter_patches(&g, &spec, 5, 5).is_err());
        let other = PatchSpec::new(3, 1, 0).unwrap();
        assert!(scatter_patches(&g, &other, 4, 4).is_err());
    }

    #[test]
    fn fold_rejects_inconsistent_channel_count() {
        let x = seq_image(2, 4, 4);
        let spec = PatchSpec::new(2, 2, 0).unwrap();
        let g = extract_patches(&x, &spec).unwrap();
        assert!(fold_to_image(&g, 3).is_err());
    }

    #[test]
    fn identity_transform_is_a_no_op() {
        let x = seq_image(1, 4, 4);
        let g = extract_patches(&x, &PatchSpec::new(3, 1, 0).unwrap()).unwrap();
        let eye = Array2::<f64>::eye(g.patch_dim());
        let t = apply_patch_transform(&g, &eye.view()).unwrap();
        assert_eq!(t.rows(), g.rows());
    }

    proptest! {
        #[test]
        fn patch_transform_is_linear(seed in 0u64..1000) {
            use crate::seeds::rng_for;
            use crate::scalar::Scalar;
            let mut rng = rng_for(seed, "transform-linearity");
            let x = ImageTensor::from_fn(1, 4, 4, |_, _, _| f64::standard_normal(&mut rng));
            let zdat = ImageTensor::from_fn(1, 4, 4, |_, _, _| f64::standard_normal(&mut rng));
            let spec = PatchSpec::new(2, 1, 0).unwrap();
            let gx = extract_patches(&x, &spec).unwrap();
            let gz = extract_patches(&zdat, &spec).unwrap();
            let d = gx.patch_dim();
            let b = Array2::from_shape_fn((d, d), |_| f64::standard_normal(&mut rng));
            let sum_rows = gx.rows() + gz.rows();
            let gsum = PatchGrid::new(1, 2, gx.grid_height(), gx.grid_width(), sum_rows).unwrap();
            let lhs = apply_patch_transform(&gsum, &b.view()).unwrap();
            let rhs = apply_patch_transform(&gx, &b.view()).unwrap().into_rows()
                + apply_patch_transform(&gz, &b.view()).unwrap().into_rows();
            let max_err = (lhs.rows() - &rhs)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(max_err < 1e-9, "linearity violated by {max_err}");
        }
    }
}
