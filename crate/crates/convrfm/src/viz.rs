//! Feature-map visualization: per-position operator-norm heatmaps,
//! eigenvector tiles, and grayscale/color image output.

use ndarray::Axis;
use rayon::prelude::*;
use std::path::Path;

use crate::agop::{matrix_power, AgopExponent};
use crate::error::{Error, Result};
use crate::feature::FeatureMatrix;
use crate::linalg::sym_eigen;
use crate::scalar::Scalar;
use crate::tensor::{extract_patches, ImageTensor, PatchSpec};

/// Supported raster outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Binary PGM (P5); single channel only.
    Pgm,
    /// 8-bit PNG; one (gray) or three (color) channels.
    Png,
}

/// Heatmap of `‖M^exponent · x[i, j]‖₂` over the patch grid of `x`: one
/// single-channel image at grid resolution, one value per patch position.
pub fn patch_operator_map<T: Scalar>(
    x: &ImageTensor<T>,
    m: &FeatureMatrix<T>,
    exponent: AgopExponent,
    spec: &PatchSpec,
) -> Result<ImageTensor<T>> {
    let grid = extract_patches(x, spec)?;
    if m.dim() != grid.patch_dim() {
        return Err(Error::DimensionMismatch {
            context: "operator vs patch dimension",
            expected: grid.patch_dim(),
            got: m.dim(),
        });
    }
    let op = matrix_power(m, exponent)?;
    // The operator is symmetric, so row p of `rows · M` is `(M p)ᵀ`.
    let transformed = grid.rows().dot(op.entries());
    let norms: Vec<T> = (0..grid.n_positions())
        .into_par_iter()
        .map(|i| {
            let row = transformed.index_axis(Axis(0), i);
            row.iter().map(|v| *v * *v).fold(T::zero(), |a, b| a + b).sqrt()
        })
        .collect();
    ImageTensor::new(1, grid.grid_height(), grid.grid_width(), norms)
}

/// One eigenvector of a feature matrix, prepared for display.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenTile<T> {
    /// The eigenvalue; tiles come ordered by nonincreasing eigenvalue.
    pub value: T,
    /// The unit eigenvector in canonical flattening order, sign-fixed so its
    /// largest-magnitude entry is positive.
    pub vector: Vec<T>,
    /// The eigenvector reshaped to `channels x q x q` and min-max scaled to
    /// [0, 1] (mid-level 0.5 when the entries are all equal).
    pub tile: ImageTensor<T>,
}

/// The `top_k` eigenvectors of `m` by eigenvalue, reshaped as square patches.
pub fn eigenvector_tiles<T: Scalar>(
    m: &FeatureMatrix<T>,
    channels: usize,
    top_k: usize,
) -> Result<Vec<EigenTile<T>>> {
    let dim = m.dim();
    if top_k > dim {
        return Err(Error::InvalidArgument(format!(
            "requested {top_k} eigenvectors from a dimension-{dim} operator"
        )));
    }
    if channels == 0 || dim % channels != 0 {
        return Err(Error::InvalidArgument(format!(
            "operator dimension {dim} is not divisible into {channels} channels"
        )));
    }
    let per = dim / channels;
    let q = (T::from_usize(per).sqrt().to_f64_lossy().round()) as usize;
    if q * q != per {
        return Err(Error::InvalidArgument(format!(
            "per-channel dimension {per} is not a square patch"
        )));
    }
    let eig = sym_eigen(&m.view())?;
    let mut tiles = Vec::with_capacity(top_k);
    for k in 0..top_k {
        let mut vector: Vec<T> = eig.vectors.column(k).to_vec();
        // Fix the sign ambiguity: the entry of largest magnitude (first on
        // ties) is made positive.
        let lead = vector
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.abs().partial_cmp(&b.abs()).expect("finite eigenvector")
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        if vector[lead] < T::zero() {
            for v in &mut vector {
                *v = -*v;
            }
        }
        let lo = vector.iter().copied().fold(T::infinity(), T::min);
        let hi = vector.iter().copied().fold(T::neg_infinity(), T::max);
        let range = hi - lo;
        let scaled: Vec<T> = if range > T::zero() {
            vector.iter().map(|v| (*v - lo) / range).collect()
        } else {
            vec![T::from_f64(0.5); dim]
        };
        tiles.push(EigenTile {
            value: eig.values[k],
            tile: ImageTensor::new(channels, q, q, scaled)?,
            vector,
        });
    }
    Ok(tiles)
}

/// Scores how cleanly a flattened `q x q` patch splits into two opposite-sign
/// halves along an axis-aligned line. Every horizontal and vertical boundary
/// is tried; for each, the score is the smaller of the two halves'
/// opposite-dominant-sign fractions, and the best boundary's score comes
/// back. 1.0 means a perfect two-sided sign split; zero entries never count
/// as agreeing.
pub fn edge_split_agreement<T: Scalar>(vector: &[T], q: usize) -> Result<f64> {
    if q < 2 {
        return Err(Error::InvalidArgument(
            "sign-split analysis needs a patch side of at least 2".into(),
        ));
    }
    if vector.len() != q * q {
        return Err(Error::DimensionMismatch {
            context: "patch vector length",
            expected: q * q,
            got: vector.len(),
        });
    }
    let mut best = 0.0f64;
    for boundary in 1..q {
        for split_rows in [true, false] {
            let mut pos = [0usize; 2];
            let mut neg = [0usize; 2];
            let mut total = [0usize; 2];
            for (i, v) in vector.iter().enumerate() {
                let coord = if split_rows { i / q } else { i % q };
                let half = usize::from(coord >= boundary);
                total[half] += 1;
                if *v > T::zero() {
                    pos[half] += 1;
                } else if *v < T::zero() {
                    neg[half] += 1;
                }
            }
            // Positive-then-negative and the mirrored assignment.
            let a = (pos[0] as f64 / total[0] as f64).min(neg[1] as f64 / total[1] as f64);
            let b = (neg[0] as f64 / total[0] as f64).min(pos[1] as f64 / total[1] as f64);
            best = best.max(a).max(b);
        }
    }
    Ok(best)
}

fn quantize<T: Scalar>(tensor: &ImageTensor<T>) -> Result<Vec<u8>> {
    tensor.ensure_finite()?;
    let lo = tensor.as_slice().iter().copied().fold(T::infinity(), T::min);
    let hi = tensor
        .as_slice()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let range = (hi - lo).to_f64_lossy();
    Ok(tensor
        .as_slice()
        .iter()
        .map(|v| {
            if range > 0.0 {
                ((v.to_f64_lossy() - lo.to_f64_lossy()) / range * 255.0).round() as u8
            } else {
                128
            }
        })
        .collect())
}

/// Writes `tensor` as an 8-bit raster, min-max normalized to [0, 255]
/// (mid-gray 128 when all values are equal). PGM accepts one channel; PNG
/// accepts one or three.
pub fn write_image<T: Scalar>(
    tensor: &ImageTensor<T>,
    path: &Path,
    format: ImageFormat,
) -> Result<()> {
    let bytes = quantize(tensor)?;
    let (c, h, w) = tensor.shape();
    match format {
        ImageFormat::Pgm => {
            if c != 1 {
                return Err(Error::InvalidArgument(format!(
                    "PGM output is grayscale; got {c} channels"
                )));
            }
            let mut blob = format!("P5\n{w} {h}\n255\n").into_bytes();
            blob.extend_from_slice(&bytes);
            std::fs::write(path, &blob).map_err(|e| Error::io(path.display().to_string(), e))
        }
        ImageFormat::Png => {
            let buffer = match c {
                1 => image::DynamicImage::ImageLuma8(
                    image::GrayImage::from_raw(w as u32, h as u32, bytes)
                        .expect("buffer sized from the tensor"),
                ),
                3 => {
                    // Planes to interleaved RGB.
                    let per = h * w;
                    let mut rgb = Vec::with_capacity(3 * per);
                    for p in 0..per {
                        rgb.push(bytes[p]);
                        rgb.push(bytes[per + p]);
                        rgb.push(bytes[2 * per + p]);
                    }
                    image::DynamicImage::ImageRgb8(
                        image::RgbImage::from_raw(w as u32, h as u32, rgb)
                            .expect("buffer sized from the tensor"),
                    )
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "PNG output needs 1 or 3 channels; got {other}"
                    )))
                }
            };
            buffer
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))
        }
    }
}

/// Reads back a binary PGM written by [`write_image`]: `(width, height,
/// row-major bytes)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let fail = |offset: usize, message: &str| {
        Error::format(path.display().to_string(), offset as u64, message)
    };
    if bytes.len() < 3 || &bytes[..3] != b"P5\n" {
        return Err(fail(0, "not a binary PGM (missing P5 header)"));
    }
    let dims_end = 3 + bytes[3..]
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| fail(3, "unterminated dimensions line"))?;
    let dims = std::str::from_utf8(&bytes[3..dims_end])
        .map_err(|_| fail(3, "dimensions line is not ASCII"))?;
    let mut parts = dims.split_whitespace();
    let parse = |s: Option<&str>| -> Result<usize> {
        s.and_then(|v| v.parse().ok())
            .ok_or_else(|| fail(3, "dimensions line must hold width and height"))
    };
    let width = parse(parts.next())?;
    let height = parse(parts.next())?;
    if parts.next().is_some() {
        return Err(fail(3, "dimensions line must hold width and height"));
    }
    let max_line = b"255\n";
    let pixel_start = dims_end + 1 + max_line.len();
    if bytes.len() < pixel_start || &bytes[dims_end + 1..pixel_start] != max_line {
        return Err(fail(dims_end + 1, "expected a 255 maximum-value line"));
    }
    let pixels = &bytes[pixel_start..];
    if pixels.len() != width * height {
        return Err(fail(
            pixel_start,
            &format!(
                "{} pixel bytes for a {width}x{height} image",
                pixels.len()
            ),
        ));
    }
    Ok((width, height, pixels.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_for;
    use ndarray::{arr2, Array2};
    use tempfile::tempdir;

    fn identity_heatmap(x: &ImageTensor<f64>, spec: &PatchSpec) -> ImageTensor<f64> {
        let m = FeatureMatrix::identity(spec.patch_size * spec.patch_size);
        patch_operator_map(x, &m, AgopExponent::Half, spec).unwrap()
    }

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> ImageTensor<f64> {
        let mut rng = rng_for(seed, "viz-test-image");
        ImageTensor::from_fn(c, h, w, |_, _, _| f64::standard_normal(&mut rng))
    }

    #[test]
    fn identity_operator_with_half_exponent_gives_patch_norms() {
        let x = random_image(1, 5, 6, 1);
        let spec = PatchSpec::new(2, 1, 0).unwrap();
        let map = patch_operator_map(&x, &FeatureMatrix::identity(4), AgopExponent::Half, &spec)
            .unwrap();
        let grid = extract_patches(&x, &spec).unwrap();
        assert_eq!(map.shape(), (1, 4, 5));
        for (i, v) in map.as_slice().iter().enumerate() {
            let norm = grid.row(i).iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((v - norm).abs() < 1e-12, "position {i}: {v} vs {norm}");
        }
    }

    #[test]
    fn zero_operator_gives_a_zero_heatmap() {
        let x = random_image(1, 4, 4, 2);
        let spec = PatchSpec::new(3, 1, 0).unwrap();
        let map =
            patch_operator_map(&x, &FeatureMatrix::zeros(9), AgopExponent::One, &spec).unwrap();
        assert!(map.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn difference_filter_fires_exactly_on_the_step_edge() {
        // d = +1 on the left patch column, -1 on the right.
        let d = [1.0, -1.0, 1.0, -1.0];
        let mut m = Array2::<f64>::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                m[[i, j]] = d[i] * d[j];
            }
        }
        let m = FeatureMatrix::new(m).unwrap();
        // Vertical step edge: columns 0..3 hold 0, columns 3..6 hold 1.
        let x = ImageTensor::from_fn(1, 6, 6, |_, _, col| if col < 3 { 0.0 } else { 1.0 });
        let spec = PatchSpec::new(2, 1, 0).unwrap();
        let map = patch_operator_map(&x, &m, AgopExponent::One, &spec).unwrap();
        assert_eq!(map.shape(), (1, 5, 5));
        for gy in 0..5 {
            for gx in 0..5 {
                let v = map.get(0, gy, gx);
                if gx == 2 {
                    // dᵀp = 2(0-1); ‖d (dᵀp)‖ = 2·‖d‖ = 4.
                    assert!((v - 4.0).abs() < 1e-12, "edge column: {v}");
                } else {
                    assert_eq!(v, 0.0, "flat region at ({gy}, {gx})");
                }
            }
        }
        // The filter annihilates constants, so a global shift changes nothing.
        let shifted = x.map(|v| v + 7.25);
        let map2 = patch_operator_map(&shifted, &m, AgopExponent::One, &spec).unwrap();
        for (a, b) in map.as_slice().iter().zip(map2.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_identity_scales_the_heatmap_by_the_declared_power() {
        let x = random_image(1, 6, 6, 3);
        let spec = PatchSpec::new(3, 1, 0).unwrap();
        let base = identity_heatmap(&x, &spec);
        let c = 3.0;
        let m = FeatureMatrix::new(Array2::<f64>::eye(9) * (c * c)).unwrap();
        let half = patch_operator_map(&x, &m, AgopExponent::Half, &spec).unwrap();
        let one = patch_operator_map(&x, &m, AgopExponent::One, &spec).unwrap();
        for i in 0..base.len() {
            let b = base.as_slice()[i];
            assert!((half.as_slice()[i] - c * b).abs() < 1e-10, "half power");
            assert!((one.as_slice()[i] - c * c * b).abs() < 1e-10, "full power");
        }
    }

    #[test]
    fn operator_dimension_must_match_the_patch() {
        let x = random_image(1, 4, 4, 4);
        let spec = PatchSpec::new(2, 1, 0).unwrap();
        let err = patch_operator_map(&x, &FeatureMatrix::identity(5), AgopExponent::One, &spec);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn diagonal_operator_tiles_are_basis_patches_in_order() {
        let m = FeatureMatrix::new(Array2::from_diag(&ndarray::arr1(&[4.0, 3.0, 2.0, 1.0])))
            .unwrap();
        let tiles = eigenvector_tiles(&m, 1, 4).unwrap();
        assert_eq!(tiles.len(), 4);
        for (k, tile) in tiles.iter().enumerate() {
            assert!((tile.value - (4.0 - k as f64)).abs() < 1e-12);
            assert_eq!(tile.tile.shape(), (1, 2, 2));
            for (i, v) in tile.tile.as_slice().iter().enumerate() {
                let expect = if i == k { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-12, "tile {k} entry {i}: {v}");
            }
        }
    }

    #[test]
    fn rank_one_operator_recovers_its_generating_direction() {
        let w = {
            let raw = [0.5, -1.0, 2.0, 0.25];
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            raw.map(|v| v / norm)
        };
        let mut m = Array2::<f64>::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                m[[i, j]] = w[i] * w[j];
            }
        }
        let tiles = eigenvector_tiles(&FeatureMatrix::new(m).unwrap(), 1, 4).unwrap();
        let dot: f64 = tiles[0]
            .vector
            .iter()
            .zip(&w)
            .map(|(a, b)| a * b)
            .sum();
        assert!((dot.abs() - 1.0).abs() < 1e-10, "top tile aligns with w");
        assert!((tiles[0].value - 1.0).abs() < 1e-10);
        for tile in &tiles[1..] {
            assert!(tile.value.abs() < 1e-10, "residual eigenvalue {}", tile.value);
        }
    }

    #[test]
    fn eigenvalues_come_out_nonincreasing_and_tiles_are_unit_scaled() {
        let mut rng = rng_for(5, "viz-psd");
        let g = Array2::<f64>::from_shape_fn((9, 9), |_| f64::standard_normal(&mut rng));
        let m = FeatureMatrix::new(g.dot(&g.t())).unwrap();
        let tiles = eigenvector_tiles(&m, 1, 9).unwrap();
        for pair in tiles.windows(2) {
            assert!(pair[0].value >= pair[1].value, "ordering violated");
        }
        for tile in &tiles {
            let lo = tile.tile.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = tile
                .tile
                .as_slice()
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
            let norm: f64 = tile.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-10, "eigenvector stays unit length");
        }
    }

    #[test]
    fn multichannel_tiles_use_the_channel_major_layout() {
        let m = FeatureMatrix::<f64>::identity(12);
        let tiles = eigenvector_tiles(&m, 3, 5).unwrap();
        assert_eq!(tiles.len(), 5);
        assert_eq!(tiles[0].tile.shape(), (3, 2, 2));
    }

    #[test]
    fn tile_requests_beyond_the_dimension_fail() {
        let m = FeatureMatrix::<f64>::identity(4);
        assert!(matches!(
            eigenvector_tiles(&m, 1, 5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(eigenvector_tiles(&m, 3, 2).is_err(), "non-divisible channels");
    }

    #[test]
    fn sign_split_scoring_recognizes_clean_and_broken_edges() {
        // Perfect vertical split: two positive columns then two negative.
        let clean: Vec<f64> = (0..16)
            .map(|i| if i % 4 < 2 { 0.5 } else { -0.25 })
            .collect();
        assert_eq!(edge_split_agreement(&clean, 4).unwrap(), 1.0);
        // One flipped entry in the negative half.
        let mut dented = clean.clone();
        dented[3] = 0.1;
        assert!((edge_split_agreement(&dented, 4).unwrap() - 7.0 / 8.0).abs() < 1e-12);
        // A same-sign patch has no opposite halves at all.
        let flat = vec![1.0f64; 9];
        assert_eq!(edge_split_agreement(&flat, 3).unwrap(), 0.0);
        // Horizontal splits are tried too, asymmetric boundary included.
        let rows: Vec<f64> = (0..9).map(|i| if i / 3 < 1 { -1.0 } else { 2.0 }).collect();
        assert_eq!(edge_split_agreement(&rows, 3).unwrap(), 1.0);
        // Zeros never count as agreement.
        let zeroed = vec![0.0f64; 9];
        assert_eq!(edge_split_agreement(&zeroed, 3).unwrap(), 0.0);
        assert!(edge_split_agreement(&clean, 5).is_err());
        assert!(edge_split_agreement(&clean, 1).is_err());
    }

    #[test]
    fn checkerboard_pgm_hits_the_quantization_endpoints() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("check.pgm");
        let x = ImageTensor::new(1, 2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        write_image(&x, &path, ImageFormat::Pgm).unwrap();
        let blob = std::fs::read(&path).unwrap();
        assert_eq!(blob, b"P5\n2 2\n255\n\x00\xff\xff\x00");
    }

    #[test]
    fn constant_tensor_renders_mid_gray() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("flat.pgm");
        let x = ImageTensor::new(1, 2, 3, vec![4.5; 6]).unwrap();
        write_image(&x, &path, ImageFormat::Pgm).unwrap();
        let (w, h, bytes) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (3, 2));
        assert!(bytes.iter().all(|b| *b == 128));
    }

    #[test]
    fn pgm_round_trip_reproduces_the_quantized_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rt.pgm");
        let x = random_image(1, 5, 7, 6);
        write_image(&x, &path, ImageFormat::Pgm).unwrap();
        let (w, h, bytes) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (7, 5));
        let lo = x.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (v, b) in x.as_slice().iter().zip(&bytes) {
            let expect = ((v - lo) / (hi - lo) * 255.0).round() as u8;
            assert_eq!(*b, expect);
        }
    }

    #[test]
    fn png_output_round_trips_and_is_deterministic() {
        let dir = tempdir().unwrap();
        let gray_path = dir.path().join("g.png");
        let gray = random_image(1, 4, 6, 7);
        write_image(&gray, &gray_path, ImageFormat::Png).unwrap();
        let first = std::fs::read(&gray_path).unwrap();
        write_image(&gray, &gray_path, ImageFormat::Png).unwrap();
        assert_eq!(first, std::fs::read(&gray_path).unwrap(), "deterministic bytes");
        let decoded = image::open(&gray_path).unwrap().to_luma8();
        assert_eq!(decoded.dimensions(), (6, 4));
        let lo = gray.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = gray
            .as_slice()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        for (v, b) in gray.as_slice().iter().zip(decoded.as_raw()) {
            assert_eq!(*b, ((v - lo) / (hi - lo) * 255.0).round() as u8);
        }

        let rgb_path = dir.path().join("c.png");
        let color = random_image(3, 3, 3, 8);
        write_image(&color, &rgb_path, ImageFormat::Png).unwrap();
        let decoded = image::open(&rgb_path).unwrap().to_rgb8();
        // Spot-check the plane interleave: pixel (0,0) takes one byte per plane.
        let lo = color.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = color
            .as_slice()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let q = |v: f64| ((v - lo) / (hi - lo) * 255.0).round() as u8;
        let px = decoded.get_pixel(0, 0);
        assert_eq!(px.0[0], q(color.get(0, 0, 0)));
        assert_eq!(px.0[1], q(color.get(1, 0, 0)));
        assert_eq!(px.0[2], q(color.get(2, 0, 0)));
    }

    #[test]
    fn unsupported_channel_counts_are_rejected() {
        let dir = tempdir().unwrap();
        let rgb = random_image(3, 2, 2, 9);
        assert!(matches!(
            write_image(&rgb, &dir.path().join("x.pgm"), ImageFormat::Pgm),
            Err(Error::InvalidArgument(_))
        ));
        let two = random_image(2, 2, 2, 10);
        assert!(matches!(
            write_image(&two, &dir.path().join("x.png"), ImageFormat::Png),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn non_finite_values_are_rejected_before_writing() {
        let dir = tempdir().unwrap();
        let x = ImageTensor::new(1, 1, 2, vec![0.0, f64::NAN]).unwrap();
        assert!(write_image(&x, &dir.path().join("nan.pgm"), ImageFormat::Pgm).is_err());
    }

    #[test]
    fn malformed_pgm_headers_are_format_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P6\n2 2\n255\n\x00\x01\x02\x03").unwrap();
        assert!(matches!(read_pgm(&path), Err(Error::Format { .. })));
        std::fs::write(&path, b"P5\n2 2\n255\n\x00\x01").unwrap();
        assert!(matches!(read_pgm(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn heatmap_respects_stride_and_padding_geometry() {
        let x = random_image(1, 6, 6, 11);
        let spec = PatchSpec::new(3, 2, 1).unwrap();
        let map = identity_heatmap(&x, &spec);
        let grid = extract_patches(&x, &spec).unwrap();
        assert_eq!(
            map.shape(),
            (1, grid.grid_height(), grid.grid_width()),
            "heatmap sits at grid resolution"
        );
    }

    #[test]
    fn constant_eigenvector_tile_maps_to_mid_level() {
        let m = FeatureMatrix::<f64>::new(arr2(&[
            [0.25, 0.25, 0.25, 0.25],
            [0.25, 0.25, 0.25, 0.25],
            [0.25, 0.25, 0.25, 0.25],
            [0.25, 0.25, 0.25, 0.25],
        ]))
        .unwrap();
        let tiles = eigenvector_tiles(&m, 1, 1).unwrap();
        assert!((tiles[0].value - 1.0).abs() < 1e-10);
        assert!(tiles[0]
            .tile
            .as_slice()
            .iter()
            .all(|v| (v - 0.5).abs() < 1e-12));
    }
}
