//! Dataset ingestion and the deterministic synthetic-lesion generator.
//!
//! Interchange format is 8-bit grayscale PNG pairs `<id>_img.png` /
//! `<id>_mask.png`. The generator draws one bright ellipse per image on a
//! smooth low-frequency background and writes the exact ellipse mask.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{io_err, Error, Result};
use crate::grid_env::{AgentPos, EnvOpts, GridEnv, GridSpec};

/// One image/mask pair. Image values in [0,1]; mask entries 0/1.
#[derive(Clone, Debug)]
pub struct CaseItem {
    pub case_id: String,
    pub image: Vec<f32>,
    pub mask: Vec<u8>,
}

impl CaseItem {
    pub fn to_env(&self, spec: GridSpec, opts: EnvOpts) -> Result<GridEnv> {
        GridEnv::new(self.image.clone(), &self.mask, spec, opts)
    }
}

/// An ordered set of cases sharing one grid geometry.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub items: Vec<CaseItem>,
    pub spec: GridSpec,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Synthetic generator parameters. Defaults give 240x240 images on a 60px
/// grid with one bright elliptical lesion placed away from the start block.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub block_size: usize,
    /// Ellipse semi-axis range in pixels (uniform).
    pub semi_axis: (f64, f64),
    /// Lesion intensity band (uniform per image).
    pub intensity: (f64, f64),
    /// Additive Gaussian pixel noise sigma.
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 60,
            seed: 7,
            height: 240,
            width: 240,
            block_size: 60,
            semi_axis: (12.0, 40.0),
            intensity: (0.75, 0.95),
            noise_sigma: 0.03,
        }
    }
}

/// Lesion geometry recorded in the manifest.
#[derive(Clone, Debug)]
pub struct LesionMeta {
    pub case_id: String,
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
}

/// Load `<id>_img.png` / `<id>_mask.png` pairs from a directory, sorted by
/// case id. Any malformed pair aborts the load with per-file diagnostics.
pub fn load_dataset(dir: &Path, spec: GridSpec) -> Result<Dataset> {
    let entries = std::fs::read_dir(dir).map_err(io_err(dir))?;
    let mut imgs: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut masks: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(io_err(dir))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name.strip_suffix("_img.png") {
            imgs.insert(id.to_string(), path.clone());
        } else if let Some(id) = name.strip_suffix("_mask.png") {
            masks.insert(id.to_string(), path.clone());
        }
    }

    let mut problems = Vec::new();
    for id in imgs.keys() {
        if !masks.contains_key(id) {
            problems.push(format!("case `{id}`: missing mask"));
        }
    }
    for id in masks.keys() {
        if !imgs.contains_key(id) {
            problems.push(format!("case `{id}`: missing image"));
        }
    }

    let mut items = Vec::new();
    for (id, img_path) in &imgs {
        let Some(mask_path) = masks.get(id) else {
            continue;
        };
        match load_pair(id, img_path, mask_path, &spec) {
            Ok(item) => items.push(item),
            Err(msg) => problems.push(msg),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Data(format!(
            "dataset {} failed to load:\n  {}",
            dir.display(),
            problems.join("\n  ")
        )));
    }
    if items.is_empty() {
        return Err(Error::Data(format!(
            "dataset {} contains no image/mask pairs",
            dir.display()
        )));
    }
    Ok(Dataset { items, spec })
}

fn load_pair(
    id: &str,
    img_path: &Path,
    mask_path: &Path,
    spec: &GridSpec,
) -> std::result::Result<CaseItem, String> {
    let image = load_gray(img_path, spec)?;
    let mask_bytes = load_gray_raw(mask_path, spec)?;
    // binarize at > 0: any nonzero byte is lesion
    let mask: Vec<u8> = mask_bytes.iter().map(|&b| u8::from(b > 0)).collect();
    if mask.iter().all(|&m| m == 0) {
        return Err(format!("case `{id}`: mask is empty"));
    }
    Ok(CaseItem {
        case_id: id.to_string(),
        image,
        mask,
    })
}

fn load_gray_raw(path: &Path, spec: &GridSpec) -> std::result::Result<Vec<u8>, String> {
    let img = image::open(path).map_err(|e| format!("{}: unreadable ({e})", path.display()))?;
    let gray = img.to_luma8();
    if gray.height() as usize != spec.image_height || gray.width() as usize != spec.image_width {
        return Err(format!(
            "{}: dimension mismatch {}x{}, expected {}x{}",
            path.display(),
            gray.height(),
            gray.width(),
            spec.image_height,
            spec.image_width
        ));
    }
    Ok(gray.into_raw())
}

fn load_gray(path: &Path, spec: &GridSpec) -> std::result::Result<Vec<f32>, String> {
    Ok(load_gray_raw(path, spec)?
        .into_iter()
        .map(|b| b as f32 / 255.0)
        .collect())
}

/// Write a dataset as PNG pairs into `dir` (created if missing).
pub fn write_dataset(items: &[CaseItem], spec: &GridSpec, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (h, w) = (spec.image_height as u32, spec.image_width as u32);
    for item in items {
        let img_bytes: Vec<u8> = item
            .image
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let mask_bytes: Vec<u8> = item.mask.iter().map(|&m| if m != 0 { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(w, h, img_bytes).unwrap();
        let mask = image::GrayImage::from_raw(w, h, mask_bytes).unwrap();
        let img_path = dir.join(format!("{}_img.png", item.case_id));
        let mask_path = dir.join(format!("{}_mask.png", item.case_id));
        img.save(&img_path)
            .map_err(|e| Error::Data(format!("{}: {e}", img_path.display())))?;
        mask.save(&mask_path)
            .map_err(|e| Error::Data(format!("{}: {e}", mask_path.display())))?;
    }
    Ok(())
}

/// Generate `cfg.count` synthetic cases in memory. Deterministic per seed.
pub fn generate_cases(cfg: &SynthConfig) -> Result<(Vec<CaseItem>, Vec<LesionMeta>, GridSpec)> {
    let spec = GridSpec::new(cfg.height, cfg.width, cfg.block_size)?;
    if cfg.count == 0 {
        return Err(Error::Config("synthetic count must be >= 1".into()));
    }
    if spec.rows() * spec.cols() < 2 {
        return Err(Error::Config(
            "grid must have at least two blocks to place lesions off the start".into(),
        ));
    }
    // placement below needs every center interval non-empty: one block of
    // slack past the start block and room to keep the ellipse on the image
    let max_axis = cfg.semi_axis.1;
    if cfg.semi_axis.0 <= 0.0
        || cfg.semi_axis.0 > max_axis
        || max_axis > cfg.block_size as f64 - 1.0
        || 2.0 * max_axis > cfg.height.min(cfg.width) as f64 - 2.0
    {
        return Err(Error::Config(format!(
            "semi-axis range {:?} is infeasible for block size {} on {}x{}",
            cfg.semi_axis, cfg.block_size, cfg.height, cfg.width
        )));
    }
    let digits = (cfg.count as f64).log10().floor() as usize + 1;
    let mut items = Vec::with_capacity(cfg.count);
    let mut metas = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(i as u64 + 1)));
        let case_id = format!("case{:0width$}", i, width = digits.max(4));
        let (item, meta) = generate_one(cfg, &spec, &case_id, &mut rng);
        items.push(item);
        metas.push(meta);
    }
    Ok((items, metas, spec))
}

fn generate_one(
    cfg: &SynthConfig,
    spec: &GridSpec,
    case_id: &str,
    rng: &mut ChaCha8Rng,
) -> (CaseItem, LesionMeta) {
    let (h, w) = (cfg.height, cfg.width);
    let bs = cfg.block_size as f64;

    // lesion geometry: block chosen uniformly among non-start blocks, then a
    // center inside it constrained so the ellipse stays on the image and
    // never spills into the start block
    let blocks = spec.rows() * spec.cols();
    let block_idx = 1 + rng.gen_range(0..blocks - 1); // skip (0,0)
    let block = AgentPos {
        row: block_idx / spec.cols(),
        col: block_idx % spec.cols(),
    };
    let a = rng.gen_range(cfg.semi_axis.0..=cfg.semi_axis.1); // col semi-axis
    let b = rng.gen_range(cfg.semi_axis.0..=cfg.semi_axis.1); // row semi-axis

    let (row_lo, row_hi, col_lo, col_hi) = {
        let mut row_lo = (block.row as f64 * bs).max(b);
        let row_hi = ((block.row + 1) as f64 * bs - 1.0).min(h as f64 - 1.0 - b);
        let mut col_lo = (block.col as f64 * bs).max(a);
        let col_hi = ((block.col + 1) as f64 * bs - 1.0).min(w as f64 - 1.0 - a);
        // keep the ellipse clear of the start block
        if block.row == 0 {
            col_lo = col_lo.max(bs + a);
        } else if block.col == 0 {
            row_lo = row_lo.max(bs + b);
        } else if block.row == 1 && block.col == 1 {
            row_lo = row_lo.max(bs + b);
        }
        (row_lo, row_hi, col_lo, col_hi)
    };
    let cy = rng.gen_range(row_lo..=row_hi);
    let cx = rng.gen_range(col_lo..=col_hi);
    let intensity = rng.gen_range(cfg.intensity.0..=cfg.intensity.1) as f32;

    // low-frequency background: bilinear interpolation of a coarse grid
    let coarse_n = 5usize;
    let coarse: Vec<f32> = (0..coarse_n * coarse_n)
        .map(|_| rng.gen_range(0.08..0.45) as f32)
        .collect();
    let mut image = vec![0.0f32; h * w];
    for r in 0..h {
        let fy = r as f32 / (h - 1) as f32 * (coarse_n - 1) as f32;
        let y0 = (fy as usize).min(coarse_n - 2);
        let ty = fy - y0 as f32;
        for c in 0..w {
            let fx = c as f32 / (w - 1) as f32 * (coarse_n - 1) as f32;
            let x0 = (fx as usize).min(coarse_n - 2);
            let tx = fx - x0 as f32;
            let v00 = coarse[y0 * coarse_n + x0];
            let v01 = coarse[y0 * coarse_n + x0 + 1];
            let v10 = coarse[(y0 + 1) * coarse_n + x0];
            let v11 = coarse[(y0 + 1) * coarse_n + x0 + 1];
            image[r * w + c] =
                v00 * (1.0 - ty) * (1.0 - tx) + v01 * (1.0 - ty) * tx + v10 * ty * (1.0 - tx) + v11 * ty * tx;
        }
    }

    // ellipse pixels define the mask exactly (pixel-center membership)
    let mut mask = vec![0u8; h * w];
    let (r_min, r_max) = ((cy - b).floor().max(0.0) as usize, ((cy + b).ceil() as usize).min(h - 1));
    let (c_min, c_max) = ((cx - a).floor().max(0.0) as usize, ((cx + a).ceil() as usize).min(w - 1));
    for r in r_min..=r_max {
        for c in c_min..=c_max {
            let dy = (r as f64 - cy) / b;
            let dx = (c as f64 - cx) / a;
            if dy * dy + dx * dx <= 1.0 {
                mask[r * w + c] = 1;
                image[r * w + c] = intensity;
            }
        }
    }

    // pixel noise, then quantize to the 8-bit interchange format so the
    // in-memory dataset equals its PNG round trip exactly
    let normal = Normal::new(0.0, cfg.noise_sigma).unwrap();
    for v in &mut image {
        let noisy = *v + normal.sample(rng) as f32;
        let q = (noisy.clamp(0.0, 1.0) * 255.0).round();
        *v = q / 255.0;
    }

    (
        CaseItem {
            case_id: case_id.to_string(),
            image,
            mask,
        },
        LesionMeta {
            case_id: case_id.to_string(),
            center: (cy, cx),
            semi_axes: (b, a),
        },
    )
}

/// Generate and write a synthetic dataset (flat layout plus `manifest.txt`),
/// returning the in-memory dataset.
pub fn gen_synthetic(cfg: &SynthConfig, out_dir: &Path) -> Result<Dataset> {
    let (items, metas, spec) = generate_cases(cfg)?;
    write_dataset(&items, &spec, out_dir)?;
    write_manifest(&metas, cfg.seed, &out_dir.join("manifest.txt"))?;
    Ok(Dataset { items, spec })
}

/// Manifest: one line per case with id, lesion center (row,col px),
/// semi-axes (row,col px) and the generator seed.
pub fn write_manifest(metas: &[LesionMeta], seed: u64, path: &Path) -> Result<()> {
    let mut text = String::from("case_id,center_row_px,center_col_px,semi_axis_row_px,semi_axis_col_px,seed\n");
    for m in metas {
        writeln!(
            text,
            "{},{:.3},{:.3},{:.3},{:.3},{}",
            m.case_id, m.center.0, m.center.1, m.semi_axes.0, m.semi_axes.1, seed
        )
        .unwrap();
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// Seeded shuffle then prefix/suffix split into disjoint, exhaustive parts.
pub fn split(ds: Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_train >= ds.items.len() {
        return Err(Error::Config(format!(
            "split needs 0 < n_train < {}, got {n_train}",
            ds.items.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = ds.items;
    // Fisher-Yates
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
    let test_items = items.split_off(n_train);
    Ok((
        Dataset {
            items,
            spec: ds.spec,
        },
        Dataset {
            items: test_items,
            spec: ds.spec,
        },
    ))
}
