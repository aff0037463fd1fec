//! Synthetic local-signal tasks, an IDX reader, and dataset serialization.
//!
//! Two generators probe whether a learner can find a small signal in a large
//! noisy field: grayscale bars of value ±1 dropped at a random position into
//! Gaussian noise (the sign of the bar is the class), and 28x28 digits
//! embedded at a random offset in a larger noise canvas (the digit is the
//! class). Both are deterministic under a master seed with per-sample
//! derived streams, so samples can be generated in parallel.

use rand::Rng;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

use crate::container::{ContainerReader, ContainerWriter};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeds::rng_for;
use crate::tensor::ImageTensor;

const DSET_MAGIC: [u8; 4] = *b"DSET";
const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const DIGIT_SIDE: usize = 28;

/// File names expected inside a digit-source directory.
pub const IDX_IMAGES_FILE: &str = "train-images-idx3-ubyte";
pub const IDX_LABELS_FILE: &str = "train-labels-idx1-ubyte";

/// Per-channel scaling constants for three-channel inputs: means
/// (125.3, 123.0, 113.9)/255 and standard deviations (63.0, 62.1, 66.7)/255.
pub const RGB_MEAN: [f64; 3] = [125.3 / 255.0, 123.0 / 255.0, 113.9 / 255.0];
pub const RGB_STD: [f64; 3] = [63.0 / 255.0, 62.1 / 255.0, 66.7 / 255.0];

/// Per-channel location/scale statistics used for standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> ChannelStats<T> {
    /// The fixed three-channel constants.
    pub fn rgb() -> Self {
        Self {
            mean: RGB_MEAN.iter().map(|v| T::from_f64(*v)).collect(),
            std: RGB_STD.iter().map(|v| T::from_f64(*v)).collect(),
        }
    }

    /// Empirical per-channel mean and standard deviation over every pixel of
    /// every image. Channels with zero spread get scale 1 so standardization
    /// stays defined.
    pub fn from_images(images: &[ImageTensor<T>]) -> Result<Self> {
        let first = images.first().ok_or(Error::EmptyInput("channel stats"))?;
        let channels = first.channels();
        let mut sum = vec![T::zero(); channels];
        let mut sumsq = vec![T::zero(); channels];
        let mut count = vec![0usize; channels];
        for img in images {
            if img.channels() != channels {
                return Err(Error::DimensionMismatch {
                    context: "channel count across images",
                    expected: channels,
                    got: img.channels(),
                });
            }
            let per = img.height() * img.width();
            for c in 0..channels {
                let slice = &img.as_slice()[c * per..(c + 1) * per];
                for v in slice {
                    sum[c] += *v;
                    sumsq[c] += *v * *v;
                }
                count[c] += per;
            }
        }
        let mut mean = Vec::with_capacity(channels);
        let mut std = Vec::with_capacity(channels);
        for c in 0..channels {
            let n = T::from_usize(count[c]);
            let m = sum[c] / n;
            let var = (sumsq[c] / n - m * m).max(T::zero());
            let s = var.sqrt();
            mean.push(m);
            std.push(if s > T::zero() { s } else { T::one() });
        }
        Ok(Self { mean, std })
    }
}

/// A generated or loaded classification set.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    pub images: Vec<ImageTensor<T>>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Standardization applied to the images, when any.
    pub stats: Option<ChannelStats<T>>,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Applies `(x - mean) / std` per channel and records the stats.
    pub fn apply_stats(&mut self, stats: &ChannelStats<T>) -> Result<()> {
        let channels = self
            .images
            .first()
            .map(|i| i.channels())
            .unwrap_or(stats.mean.len());
        if stats.mean.len() != channels || stats.std.len() != channels {
            return Err(Error::DimensionMismatch {
                context: "standardization stats channels",
                expected: channels,
                got: stats.mean.len(),
            });
        }
        if stats.std.iter().any(|s| !(*s > T::zero())) {
            return Err(Error::InvalidArgument(
                "standardization scale must be positive".into(),
            ));
        }
        for img in &mut self.images {
            let per = img.height() * img.width();
            let data = img.as_mut_slice();
            for c in 0..channels {
                let (m, s) = (stats.mean[c], stats.std[c]);
                for v in &mut data[c * per..(c + 1) * per] {
                    *v = (*v - m) / s;
                }
            }
        }
        self.stats = Some(stats.clone());
        Ok(())
    }

    /// Standardizes in place from this set's own statistics (the fixed RGB
    /// constants for three-channel data, empirical mean/std otherwise) and
    /// returns the stats so they can be reused on a held-out set.
    pub fn standardize(&mut self) -> Result<ChannelStats<T>> {
        let channels = self
            .images
            .first()
            .ok_or(Error::EmptyInput("standardize"))?
            .channels();
        let stats = if channels == 3 {
            ChannelStats::rgb()
        } else {
            ChannelStats::from_images(&self.images)?
        };
        self.apply_stats(&stats)?;
        Ok(stats)
    }
}

/// Grayscale bars-in-noise task: `N(0, sigma^2)` background with one
/// horizontal `1 x bar_len` bar whose written value is +1 (class 1) or -1
/// (class 0), replacing the noise at a uniformly random position. Classes
/// alternate, so counts differ by at most one.
pub fn gen_bars<T: Scalar>(
    n: usize,
    image_side: usize,
    bar_len: usize,
    sigma: f64,
    seed: u64,
) -> Result<LabeledSet<T>> {
    if n == 0 {
        return Err(Error::EmptyInput("bars sample count"));
    }
    if bar_len == 0 || image_side == 0 {
        return Err(Error::InvalidArgument(
            "bar length and image side must be positive".into(),
        ));
    }
    if bar_len > image_side {
        return Err(Error::InvalidArgument(format!(
            "bar length {bar_len} exceeds image side {image_side}"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(
            "noise sigma must be finite and non-negative".into(),
        ));
    }
    let sig = T::from_f64(sigma);
    let images: Vec<ImageTensor<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, &format!("bars-sample-{i}"));
            let mut img = ImageTensor::from_fn(1, image_side, image_side, |_, _, _| {
                sig * T::standard_normal(&mut rng)
            });
            let bar_row = rng.random_range(0..image_side);
            let bar_col = rng.random_range(0..=image_side - bar_len);
            let value = if i % 2 == 1 { T::one() } else { -T::one() };
            for k in 0..bar_len {
                img.set(0, bar_row, bar_col + k, value);
            }
            img
        })
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    Ok(LabeledSet {
        images,
        labels,
        classes: 2,
        noise_sigma: sigma,
        seed,
        stats: None,
    })
}

/// Raw contents of an IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    Images {
        count: usize,
        height: usize,
        width: usize,
        /// Row-major, one image after another.
        pixels: Vec<u8>,
    },
    Labels(Vec<u8>),
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if end > bytes.len() {
        return Err(Error::format(
            path.display().to_string(),
            bytes.len() as u64,
            format!("truncated: wanted 4 bytes at offset {offset}"),
        ));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses a big-endian IDX file: magic 0x00000803 for u8 image stacks (three
/// dimensions follow) or 0x00000801 for u8 label vectors.
pub fn load_idx(path: &Path) -> Result<IdxData> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let magic = be_u32(&bytes, 0, path)?;
    match magic {
        IDX_IMAGES_MAGIC => {
            let count = be_u32(&bytes, 4, path)? as usize;
            let height = be_u32(&bytes, 8, path)? as usize;
            let width = be_u32(&bytes, 12, path)? as usize;
            let want = count
                .checked_mul(height)
                .and_then(|v| v.checked_mul(width))
                .ok_or_else(|| {
                    Error::format(path.display().to_string(), 4, "dimension overflow")
                })?;
            let payload = &bytes[16.min(bytes.len())..];
            if payload.len() != want {
                return Err(Error::format(
                    path.display().to_string(),
                    bytes.len() as u64,
                    format!(
                        "payload holds {} pixel bytes but the header promises {want}",
                        payload.len()
                    ),
                ));
            }
            Ok(IdxData::Images {
                count,
                height,
                width,
                pixels: payload.to_vec(),
            })
        }
        IDX_LABELS_MAGIC => {
            let count = be_u32(&bytes, 4, path)? as usize;
            let payload = &bytes[8.min(bytes.len())..];
            if payload.len() != count {
                return Err(Error::format(
                    path.display().to_string(),
                    bytes.len() as u64,
                    format!(
                        "payload holds {} label bytes but the header promises {count}",
                        payload.len()
                    ),
                ));
            }
            Ok(IdxData::Labels(payload.to_vec()))
        }
        other => Err(Error::format(
            path.display().to_string(),
            0,
            format!("unsupported IDX magic 0x{other:08x}"),
        )),
    }
}

/// A digit source loaded from a directory holding the IDX pair.
struct DigitSource {
    images: Vec<Vec<u8>>,
    labels: Vec<u8>,
}

fn load_digit_source(dir: &Path) -> Result<DigitSource> {
    let images_path = dir.join(IDX_IMAGES_FILE);
    let labels_path = dir.join(IDX_LABELS_FILE);
    let (count, height, width, pixels) = match load_idx(&images_path)? {
        IdxData::Images {
            count,
            height,
            width,
            pixels,
        } => (count, height, width, pixels),
        IdxData::Labels(_) => {
            return Err(Error::format(
                images_path.display().to_string(),
                0,
                "expected an image IDX file, found labels",
            ))
        }
    };
    if height != DIGIT_SIDE || width != DIGIT_SIDE {
        return Err(Error::format(
            images_path.display().to_string(),
            8,
            format!("digits must be {DIGIT_SIDE}x{DIGIT_SIDE}, got {height}x{width}"),
        ));
    }
    let labels = match load_idx(&labels_path)? {
        IdxData::Labels(l) => l,
        IdxData::Images { .. } => {
            return Err(Error::format(
                labels_path.display().to_string(),
                0,
                "expected a label IDX file, found images",
            ))
        }
    };
    if labels.len() != count {
        return Err(Error::format(
            labels_path.display().to_string(),
            4,
            format!("{} labels for {count} images", labels.len()),
        ));
    }
    if count == 0 {
        return Err(Error::EmptyInput("digit source"));
    }
    let per = height * width;
    let images = (0..count)
        .map(|i| pixels[i * per..(i + 1) * per].to_vec())
        .collect();
    Ok(DigitSource { images, labels })
}

/// Digits-in-noise task: a uniformly chosen source digit, its pixels scaled
/// to [0, 1], replaces a 28x28 block at a uniformly random offset of a
/// `canvas_side^2` field of `N(0, sigma^2)` noise. The label is the digit.
pub fn gen_digit_in_noise<T: Scalar>(
    source_dir: &Path,
    n: usize,
    canvas_side: usize,
    sigma: f64,
    seed: u64,
) -> Result<LabeledSet<T>> {
    if n == 0 {
        return Err(Error::EmptyInput("digit sample count"));
    }
    if canvas_side < DIGIT_SIDE {
        return Err(Error::InvalidArgument(format!(
            "canvas side {canvas_side} cannot hold a {DIGIT_SIDE}x{DIGIT_SIDE} digit"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(
            "noise sigma must be finite and non-negative".into(),
        ));
    }
    let source = load_digit_source(source_dir)?;
    let sig = T::from_f64(sigma);
    let scale = T::from_f64(1.0 / 255.0);
    let max_offset = canvas_side - DIGIT_SIDE;
    let samples: Vec<(ImageTensor<T>, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, &format!("digit-sample-{i}"));
            let pick = rng.random_range(0..source.images.len());
            let oy = rng.random_range(0..=max_offset);
            let ox = rng.random_range(0..=max_offset);
            let mut img = ImageTensor::from_fn(1, canvas_side, canvas_side, |_, _, _| {
                sig * T::standard_normal(&mut rng)
            });
            let digit = &source.images[pick];
            for dy in 0..DIGIT_SIDE {
                for dx in 0..DIGIT_SIDE {
                    let v = T::from_f64(f64::from(digit[dy * DIGIT_SIDE + dx])) * scale;
                    img.set(0, oy + dy, ox + dx, v);
                }
            }
            (img, source.labels[pick] as usize)
        })
        .collect();
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (img, label) in samples {
        images.push(img);
        labels.push(label);
    }
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Ok(LabeledSet {
        images,
        labels,
        classes: classes.max(10),
        noise_sigma: sigma,
        seed,
        stats: None,
    })
}

// ---------------------------------------------------------------------------
// Synthetic digit source
// ---------------------------------------------------------------------------

/// 5x7 digit bitmaps; `#` marks lit pixels.
const DIGIT_FONT: [[&str; 7]; 10] = [
    [" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "],
    ["  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "],
    [" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"],
    [" ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### "],
    ["   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "],
    ["#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "],
    [" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "],
    ["#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "],
    [" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "],
    [" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "],
];

/// Renders one 28x28 glyph: the 5x7 bitmap scaled by 3, jittered by up to
/// ±2 pixels, at an intensity in [200, 255].
fn render_glyph(digit: usize, jitter_y: i32, jitter_x: i32, intensity: u8) -> Vec<u8> {
    let mut img = vec![0u8; DIGIT_SIDE * DIGIT_SIDE];
    let bitmap = &DIGIT_FONT[digit];
    // 15x21 scaled glyph centered: rows start at 3, cols at 6.
    let (base_y, base_x) = (3i32 + jitter_y, 6i32 + jitter_x);
    for (ry, row) in bitmap.iter().enumerate() {
        for (rx, ch) in row.chars().enumerate() {
            if ch != '#' {
                continue;
            }
            for sy in 0..3 {
                for sx in 0..3 {
                    let y = base_y + (ry * 3 + sy) as i32;
                    let x = base_x + (rx * 3 + sx) as i32;
                    if (0..DIGIT_SIDE as i32).contains(&y) && (0..DIGIT_SIDE as i32).contains(&x)
                    {
                        img[y as usize * DIGIT_SIDE + x as usize] = intensity;
                    }
                }
            }
        }
    }
    img
}

/// Writes a deterministic synthetic digit source (`per_class` glyph variants
/// of each digit 0–9) as a standard IDX pair into `dir`. The files are read
/// back through the ordinary [`load_idx`] path.
pub fn write_synthetic_digit_idx(dir: &Path, per_class: usize, seed: u64) -> Result<PathBuf> {
    if per_class == 0 {
        return Err(Error::EmptyInput("synthetic digits per class"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let n = per_class * 10;
    let mut pixels = Vec::with_capacity(n * DIGIT_SIDE * DIGIT_SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let digit = i % 10;
        let mut rng = rng_for(seed, &format!("glyph-{i}"));
        let jy = rng.random_range(-2i32..=2);
        let jx = rng.random_range(-2i32..=2);
        let intensity = rng.random_range(200u16..=255) as u8;
        pixels.extend_from_slice(&render_glyph(digit, jy, jx, intensity));
        labels.push(digit as u8);
    }
    let images_path = dir.join(IDX_IMAGES_FILE);
    let mut blob = Vec::with_capacity(16 + pixels.len());
    blob.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    blob.extend_from_slice(&(n as u32).to_be_bytes());
    blob.extend_from_slice(&(DIGIT_SIDE as u32).to_be_bytes());
    blob.extend_from_slice(&(DIGIT_SIDE as u32).to_be_bytes());
    blob.extend_from_slice(&pixels);
    std::fs::write(&images_path, &blob)
        .map_err(|e| Error::io(images_path.display().to_string(), e))?;
    let labels_path = dir.join(IDX_LABELS_FILE);
    let mut blob = Vec::with_capacity(8 + labels.len());
    blob.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    blob.extend_from_slice(&(n as u32).to_be_bytes());
    blob.extend_from_slice(&labels);
    std::fs::write(&labels_path, &blob)
        .map_err(|e| Error::io(labels_path.display().to_string(), e))?;
    Ok(dir.to_path_buf())
}

// ---------------------------------------------------------------------------
// Container serialization
// ---------------------------------------------------------------------------

/// Writes a set to the dataset container.
pub fn write_labeled_set<T: Scalar>(path: &Path, set: &LabeledSet<T>) -> Result<()> {
    if set.images.len() != set.labels.len() {
        return Err(Error::DimensionMismatch {
            context: "labeled set images vs labels",
            expected: set.images.len(),
            got: set.labels.len(),
        });
    }
    let (c, h, w) = set
        .images
        .first()
        .map(|i| i.shape())
        .ok_or(Error::EmptyInput("labeled set"))?;
    let mut out = ContainerWriter::create(path)?;
    out.write_header(DSET_MAGIC, set.images.len() as u32, set.classes as u32)?;
    out.write_u32(c as u32)?;
    out.write_u32(h as u32)?;
    out.write_u32(w as u32)?;
    out.write_f64(set.noise_sigma)?;
    out.write_u64(set.seed)?;
    for label in &set.labels {
        out.write_u32(*label as u32)?;
    }
    for img in &set.images {
        if img.shape() != (c, h, w) {
            return Err(Error::ShapeMismatch(
                "all images in a set must share one shape".into(),
            ));
        }
        out.write_f64_iter(img.as_slice().iter().copied())?;
    }
    match &set.stats {
        None => out.write_u32(0)?,
        Some(stats) => {
            out.write_u32(1)?;
            out.write_f64_iter(stats.mean.iter().copied())?;
            out.write_f64_iter(stats.std.iter().copied())?;
        }
    }
    out.finish()
}

/// Reads a set back from the dataset container.
pub fn read_labeled_set<T: Scalar>(path: &Path) -> Result<LabeledSet<T>> {
    let mut r = ContainerReader::open(path)?;
    let (count, classes) = r.read_header(DSET_MAGIC)?;
    let n = r.check_extent("sample count", u64::from(count))? as usize;
    let raw_c = r.read_u32()?;
    let c = r.check_extent("channels", u64::from(raw_c))? as usize;
    let raw_h = r.read_u32()?;
    let h = r.check_extent("height", u64::from(raw_h))? as usize;
    let raw_w = r.read_u32()?;
    let w = r.check_extent("width", u64::from(raw_w))? as usize;
    let noise_sigma = r.read_f64()?;
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(r.fail(format!("invalid noise sigma {noise_sigma}")));
    }
    let seed = r.read_u64()?;
    let labels_u32 = r.read_u32_vec(n)?;
    let mut labels = Vec::with_capacity(n);
    for l in labels_u32 {
        let l = l as usize;
        if l >= classes as usize {
            return Err(r.fail(format!("label {l} outside {classes} classes")));
        }
        labels.push(l);
    }
    let per = c * h * w;
    let mut images = Vec::with_capacity(n);
    for _ in 0..n {
        let data = r.read_f64_vec::<T>(per)?;
        let img = ImageTensor::new(c, h, w, data).map_err(|e| r.fail(e.to_string()))?;
        images.push(img);
    }
    let stats = match r.read_u32()? {
        0 => None,
        1 => {
            let mean = r.read_f64_vec::<T>(c)?;
            let std = r.read_f64_vec::<T>(c)?;
            Some(ChannelStats { mean, std })
        }
        other => return Err(r.fail(format!("invalid stats flag {other}"))),
    };
    r.expect_eof()?;
    Ok(LabeledSet {
        images,
        labels,
        classes: classes as usize,
        noise_sigma,
        seed,
        stats,
    })
}
