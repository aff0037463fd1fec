//! `visualize`: renders eigenvector tiles of a stored feature matrix and,
//! given an image source, the patch-operator heatmap over one image.

use std::path::{Path, PathBuf};

use clap::Args;
use convrfm::{
    edge_split_agreement, eigenvector_tiles, patch_operator_map, read_feature_matrix, write_image,
    ImageFormat, PatchSpec,
};

use crate::error::{CliError, CliResult};
use crate::settings::{apply_threads, ensure_out_dir, write_manifest, write_text, Settings};
use crate::CommonArgs;

use super::{load_standardized, parse_exponent};

pub const EIGS_CSV: &str = "eigenvectors.csv";
pub const HEATMAP_STEM: &str = "heatmap";

#[derive(Args)]
pub struct VizArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Stored feature matrix (.cnfm)
    #[arg(long)]
    feature_matrix: Option<String>,
    /// Channel count the patch dimension factors into
    #[arg(long)]
    channels: Option<usize>,
    /// Leading eigenvectors to render
    #[arg(long)]
    top_k: Option<usize>,
    /// Power of the operator in the heatmap: 1 | 0.5
    #[arg(long)]
    exponent: Option<String>,
    /// Image format: pgm | png
    #[arg(long)]
    format: Option<String>,
    /// Dataset container supplying the heatmap image
    #[arg(long)]
    image: Option<String>,
    /// Index of the image within the dataset
    #[arg(long)]
    index: Option<usize>,
    /// Patch stride for the heatmap
    #[arg(long)]
    stride: Option<usize>,
    /// Zero padding for the heatmap
    #[arg(long)]
    padding: Option<usize>,
}

fn parse_format(raw: &str) -> CliResult<(ImageFormat, &'static str)> {
    match raw {
        "pgm" => Ok((ImageFormat::Pgm, "pgm")),
        "png" => Ok((ImageFormat::Png, "png")),
        other => Err(CliError::usage(format!(
            "key 'format': expected pgm or png, got '{other}'"
        ))),
    }
}

pub fn run(args: VizArgs) -> CliResult<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let feature_matrix = s.require("feature-matrix", args.feature_matrix)?;
    let channels = s.value("channels", args.channels, 1)?;
    let top_k = s.value("top-k", args.top_k, 8)?;
    let exponent = parse_exponent(&s.value("exponent", args.exponent, "1".to_string())?)?;
    let format_raw = s.value("format", args.format, "pgm".to_string())?;
    let image = s.optional("image", args.image)?;
    let index = s.value("index", args.index, 0)?;
    let stride = s.value("stride", args.stride, 1)?;
    let padding = s.value("padding", args.padding, 0)?;
    let out = s.value("out", args.common.out, "runs/visualize".to_string())?;
    let threads = s.value("threads", args.common.threads, 0)?;
    s.finish()?;
    apply_threads(threads);

    let (format, ext) = parse_format(&format_raw)?;
    let out = ensure_out_dir(&out)?;
    let m = read_feature_matrix::<f64>(Path::new(&feature_matrix))?;
    let top_k = top_k.min(m.dim());
    let tiles = eigenvector_tiles(&m, channels, top_k)?;

    let mut artifacts: Vec<PathBuf> = Vec::new();
    let mut csv = String::from("rank,eigenvalue,edge_split_agreement\n");
    for (i, tile) in tiles.iter().enumerate() {
        let rank = i + 1;
        let path = out.join(format!("eig-{rank}.{ext}"));
        write_image(&tile.tile, &path, format)?;
        artifacts.push(path);
        let q = tile.tile.height();
        let agreement = edge_split_agreement(&tile.vector, q)?;
        csv.push_str(&format!("{rank},{},{agreement}\n", tile.value));
    }
    let csv_path = out.join(EIGS_CSV);
    write_text(&csv_path, &csv)?;
    artifacts.push(csv_path);
    println!(
        "wrote {} eigenvector tiles (leading eigenvalue {})",
        tiles.len(),
        tiles.first().map(|t| t.value).unwrap_or(0.0)
    );

    if let Some(image_path) = image {
        let (set, _) = load_standardized(&image_path)?;
        let img = set.images.get(index).ok_or_else(|| {
            CliError::usage(format!(
                "key 'index': {index} out of range for {} images",
                set.images.len()
            ))
        })?;
        let q = tiles
            .first()
            .map(|t| t.tile.height())
            .ok_or_else(|| CliError::usage("feature matrix has no eigenvectors".to_string()))?;
        let spec = PatchSpec::new(q, stride, padding)?;
        let map = patch_operator_map(img, &m, exponent, &spec)?;
        let path = out.join(format!("{HEATMAP_STEM}-{index}.{ext}"));
        write_image(&map, &path, format)?;
        artifacts.push(path);
        println!("wrote patch-operator heatmap for image {index}");
    }

    write_manifest(&out, "visualize", &s, &artifacts)?;
    Ok(())
}
