//! Tetromino benchmark scenarios (LIN, MULT, RIGID, XOR) over white,
//! correlated and natural-image backgrounds.
//!
//! Additive samples are `alpha * s + (1 - alpha) * b` with `s` the smoothed,
//! placed tetromino signal and `b` the background, both scaled to unit
//! Frobenius norm. Multiplicative samples are `(1 - alpha * s) * b` with the
//! background left unnormalized. The whole dataset is finally divided by its
//! largest absolute value.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Split, SplitFractions};
use crate::error::{Error, Result};
use crate::foundation::{
    draw_standard_normals, frobenius_normalize, gaussian_smooth, global_scale, Border, GaussianKernelSpec, Grid, Mask,
    Rng,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scenario {
    Lin,
    Mult,
    Rigid,
    Xor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BackgroundKind {
    White,
    Corr,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    T,
    L,
}

impl Shape {
    /// Block coordinates `(row, col)` in the unrotated orientation.
    fn blocks(self) -> [(usize, usize); 4] {
        match self {
            // ###
            //  #
            Shape::T => [(0, 0), (0, 1), (0, 2), (1, 1)],
            // #
            // #
            // ##
            Shape::L => [(0, 0), (1, 0), (2, 0), (2, 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TetrominoPattern {
    pub shape: Shape,
    pub block_px: usize,
    /// Pixel position of the bounding box's top-left corner.
    pub row: usize,
    pub col: usize,
    /// Clockwise quarter turns, `0..4`.
    pub rotation: u8,
}

impl TetrominoPattern {
    /// Rotated block coordinates, shifted so the bounding box starts at 0.
    pub fn rotated_blocks(&self) -> [(usize, usize); 4] {
        let mut blocks = self.shape.blocks();
        for _ in 0..self.rotation % 4 {
            let h = blocks.iter().map(|b| b.0).max().unwrap() + 1;
            for b in &mut blocks {
                // clockwise: (r, c) -> (c, h - 1 - r)
                *b = (b.1, h - 1 - b.0);
            }
        }
        blocks
    }

    /// Bounding box `(height, width)` in pixels.
    pub fn extent(&self) -> (usize, usize) {
        let blocks = self.rotated_blocks();
        let h = blocks.iter().map(|b| b.0).max().unwrap() + 1;
        let w = blocks.iter().map(|b| b.1).max().unwrap() + 1;
        (h * self.block_px, w * self.block_px)
    }
}

pub fn render_tetromino(pattern: &TetrominoPattern, image_px: usize) -> Result<Grid> {
    if pattern.block_px == 0 {
        return Err(Error::Placement("block size must be positive".into()));
    }
    let (h, w) = pattern.extent();
    if pattern.row + h > image_px || pattern.col + w > image_px {
        return Err(Error::Placement(format!(
            "{h}x{w} tetromino at ({}, {}) leaves the {image_px}px image",
            pattern.row, pattern.col
        )));
    }
    let mut grid = Grid::zeros(image_px, image_px);
    let b = pattern.block_px;
    for (br, bc) in pattern.rotated_blocks() {
        for r in 0..b {
            for c in 0..b {
                grid.set(pattern.row + br * b + r, pattern.col + bc * b + c, 1.0);
            }
        }
    }
    Ok(grid)
}

/// Uniform rotation in quarter turns, then a uniform translation among all
/// placements that keep the tetromino inside the image.
pub fn sample_rigid_transform(rng: &mut Rng, shape: Shape, block_px: usize, image_px: usize) -> Result<TetrominoPattern> {
    let rotation = rng.below(4) as u8;
    let mut pattern = TetrominoPattern { shape, block_px, row: 0, col: 0, rotation };
    let (h, w) = pattern.extent();
    if block_px == 0 || h > image_px || w > image_px {
        return Err(Error::Placement(format!("no valid placement for a {h}x{w} tetromino in {image_px}px")));
    }
    pattern.row = rng.below_usize(image_px - h + 1);
    pattern.col = rng.below_usize(image_px - w + 1);
    Ok(pattern)
}

/// Natural-image background source.
#[derive(Debug, Clone)]
pub struct ImageCorpus {
    files: Vec<PathBuf>,
}

impl ImageCorpus {
    pub fn open(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::Corpus(format!("{}: {e}", dir.display())))?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|x| x.to_str())
                    .is_some_and(|x| matches!(x.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Corpus(format!("no png/jpeg images in {}", dir.display())));
        }
        Ok(ImageCorpus { files })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Luminance, center crop to a square, resize to `image_px`, standardize.
    pub fn load(&self, index: usize, image_px: usize) -> Result<Grid> {
        let path = &self.files[index];
        let img = image::open(path).map_err(|e| Error::Corpus(format!("{}: {e}", path.display())))?.to_rgb32f();
        let (w, h) = img.dimensions();
        let side = w.min(h);
        let (x0, y0) = ((w - side) / 2, (h - side) / 2);
        let luma = image::ImageBuffer::from_fn(side, side, |x, y| {
            let p = img.get_pixel(x0 + x, y0 + y).0;
            image::Luma([0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]])
        });
        let px = image_px as u32;
        let resized: image::ImageBuffer<image::Luma<f32>, Vec<f32>> =
            image::imageops::resize(&luma, px, px, image::imageops::FilterType::Triangle);
        let values: Vec<f64> = resized.pixels().map(|p| f64::from(p.0[0])).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if sd == 0.0 {
            return Err(Error::Corpus(format!("{} is constant", path.display())));
        }
        Grid::new(image_px, image_px, values.into_iter().map(|v| (v - mean) / sd).collect())
    }
}

pub fn make_background(
    kind: BackgroundKind,
    rng: &mut Rng,
    sigma_g: f64,
    image_px: usize,
    corpus: Option<&ImageCorpus>,
) -> Result<Grid> {
    match kind {
        BackgroundKind::White => Grid::new(image_px, image_px, draw_standard_normals(rng, image_px * image_px)),
        BackgroundKind::Corr => {
            let white = Grid::new(image_px, image_px, draw_standard_normals(rng, image_px * image_px))?;
            gaussian_smooth(&white, GaussianKernelSpec::new(sigma_g), Border::Reflect)
        }
        BackgroundKind::Image => {
            let corpus = corpus.ok_or_else(|| Error::Corpus("IMAGE background needs a corpus directory".into()))?;
            let pick = rng.below_usize(corpus.len());
            corpus.load(pick, image_px)
        }
    }
}

/// `alpha * s / |s| + (1 - alpha) * b / |b|`.
pub fn compose_additive(signal: &Grid, background: &Grid, alpha: f64) -> Result<Grid> {
    check_alpha(alpha)?;
    let s = frobenius_normalize(signal)?;
    let b = frobenius_normalize(background)?;
    s.zip_with(&b, |s, b| alpha * s + (1.0 - alpha) * b)
}

/// `(1 - alpha * s / |s|) * b`. An all-zero signal leaves `b` unchanged.
pub fn compose_multiplicative(signal: &Grid, background: &Grid, alpha: f64) -> Result<Grid> {
    check_alpha(alpha)?;
    signal.ensure_same_dims(background)?;
    if signal.frobenius_norm() == 0.0 {
        return Ok(background.clone());
    }
    let s = frobenius_normalize(signal)?;
    s.zip_with(background, |s, b| (1.0 - alpha * s) * b)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum XorCase {
    #[serde(rename = "++")]
    PlusPlus,
    #[serde(rename = "--")]
    MinusMinus,
    #[serde(rename = "+-")]
    PlusMinus,
    #[serde(rename = "-+")]
    MinusPlus,
}

impl XorCase {
    pub const ALL: [XorCase; 4] = [XorCase::PlusPlus, XorCase::MinusMinus, XorCase::PlusMinus, XorCase::MinusPlus];

    pub fn signs(self) -> (f64, f64) {
        match self {
            XorCase::PlusPlus => (1.0, 1.0),
            XorCase::MinusMinus => (-1.0, -1.0),
            XorCase::PlusMinus => (1.0, -1.0),
            XorCase::MinusPlus => (-1.0, 1.0),
        }
    }

    /// Equal signs are class 0, mixed signs class 1.
    pub fn label(self) -> u8 {
        let (t, l) = self.signs();
        u8::from(t != l)
    }
}

pub fn make_xor_signal(a_t: &Grid, a_l: &Grid, case: XorCase) -> Result<Grid> {
    if a_t.support().intersects(&a_l.support()) {
        return Err(Error::Placement("XOR tetrominoes overlap".into()));
    }
    let (st, sl) = case.signs();
    a_t.zip_with(a_l, |t, l| st * t + sl * l)
}

/// Nonzero pixels of the transformed, smoothed signal.
pub fn ground_truth_mask(transformed_smoothed_signal: &Grid) -> Mask {
    transformed_smoothed_signal.support()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrisConfig {
    pub scenario: Scenario,
    pub background: BackgroundKind,
    #[serde(default = "default_image_px")]
    pub image_px: usize,
    #[serde(default)]
    pub block_px: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub sigma_h: Option<f64>,
    #[serde(default)]
    pub sigma_g: Option<f64>,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
}

fn default_image_px() -> usize {
    64
}

fn default_n_samples() -> usize {
    1000
}

/// Signal-to-noise weight per problem, calibrated so the reference models
/// clear 90% validation accuracy, with one grid step of headroom. MULT and
/// 64 px RIGID never reached the target and IMAGE backgrounds were not
/// calibrated; those carry hand-picked values.
pub fn default_alpha(scenario: Scenario, background: BackgroundKind, image_px: usize) -> f64 {
    use BackgroundKind::*;
    use Scenario::*;
    let small = image_px <= 16;
    match (scenario, background, small) {
        (Lin, White, true) => 0.3,
        (Lin, Corr, true) => 0.1,
        (Lin, Image, true) => 0.4,
        (Mult, _, true) => 0.9,
        (Rigid, White, true) => 0.8,
        (Rigid, _, true) => 0.8,
        (Xor, White, true) => 0.4,
        (Xor, _, true) => 0.2,
        (Lin, White, false) => 0.1,
        (Lin, Corr, false) => 0.2,
        (Lin, Image, false) => 0.2,
        (Mult, _, false) => 0.9,
        (Rigid, White, false) => 0.3,
        (Rigid, _, false) => 0.4,
        (Xor, White, false) => 0.3,
        (Xor, _, false) => 0.3,
    }
}

impl TrisConfig {
    pub fn new(scenario: Scenario, background: BackgroundKind, image_px: usize) -> Self {
        TrisConfig {
            scenario,
            background,
            image_px,
            block_px: None,
            alpha: None,
            sigma_h: None,
            sigma_g: None,
            n_samples: default_n_samples(),
            split: SplitFractions::default(),
            seed: 0,
            corpus_dir: None,
        }
    }

    pub fn block_px(&self) -> usize {
        self.block_px.unwrap_or_else(|| {
            let base = if self.scenario == Scenario::Rigid { 4 } else { 8 };
            (base * self.image_px / 64).max(1)
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(|| default_alpha(self.scenario, self.background, self.image_px))
    }

    pub fn sigma_h(&self) -> f64 {
        self.sigma_h.unwrap_or(if self.image_px <= 16 { 0.0 } else { 1.5 })
    }

    pub fn sigma_g(&self) -> f64 {
        self.sigma_g.unwrap_or(if self.image_px <= 16 { 1.5 } else { 10.0 })
    }

    /// Offset of the fixed T (from the top-left) and L (from the bottom-right).
    pub fn corner_offset(&self) -> usize {
        (4 * self.image_px / 64).max(1)
    }

    /// Same config with every default made explicit.
    pub fn resolved(&self) -> TrisConfig {
        TrisConfig {
            block_px: Some(self.block_px()),
            alpha: Some(self.alpha()),
            sigma_h: Some(self.sigma_h()),
            sigma_g: Some(self.sigma_g()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha())?;
        self.split.validate()?;
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        for (name, s) in [("sigma_h", self.sigma_h()), ("sigma_g", self.sigma_g())] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0")));
            }
        }
        if self.background == BackgroundKind::Image && self.corpus_dir.is_none() {
            return Err(Error::Config("IMAGE background requires corpus_dir".into()));
        }
        let (t, l) = self.fixed_patterns();
        let need = t.extent().0.max(t.extent().1) + self.corner_offset();
        if need > self.image_px || l.row + l.extent().0 > self.image_px {
            return Err(Error::Config(format!("{}px image is too small for {}px blocks", self.image_px, self.block_px())));
        }
        Ok(())
    }

    /// T near the top-left and L near the bottom-right.
    pub fn fixed_patterns(&self) -> (TetrominoPattern, TetrominoPattern) {
        let b = self.block_px();
        let off = self.corner_offset();
        let t = TetrominoPattern { shape: Shape::T, block_px: b, row: off, col: off, rotation: 0 };
        let mut l = TetrominoPattern { shape: Shape::L, block_px: b, row: 0, col: 0, rotation: 0 };
        let (h, w) = l.extent();
        l.row = self.image_px.saturating_sub(off + h);
        l.col = self.image_px.saturating_sub(off + w);
        (t, l)
    }
}

struct RawSample {
    x: Grid,
    mask: Mask,
    label: u8,
    meta: serde_json::Value,
}

pub fn generate_tris_dataset(config: &TrisConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let cfg = config.resolved();
    let px = cfg.image_px;
    let smoothing = GaussianKernelSpec::new(cfg.sigma_h());
    let corpus = match (&cfg.background, &cfg.corpus_dir) {
        (BackgroundKind::Image, Some(dir)) => Some(ImageCorpus::open(dir)?),
        _ => None,
    };
    let (t_pat, l_pat) = cfg.fixed_patterns();
    let a_t = render_tetromino(&t_pat, px)?;
    let a_l = render_tetromino(&l_pat, px)?;
    let union = a_t.zip_with(&a_l, |t, l| t + l)?;
    let fixed_mask = ground_truth_mask(&gaussian_smooth(&union, smoothing, Border::Reflect)?);

    let make = |i: usize| -> Result<RawSample> {
        let (signal, label, meta) = match cfg.scenario {
            Scenario::Lin | Scenario::Mult => {
                let label = (i % 2) as u8;
                let a = if label == 0 { a_t.clone() } else { a_l.clone() };
                (a, label, serde_json::Value::Null)
            }
            Scenario::Rigid => {
                let label = (i % 2) as u8;
                let shape = if label == 0 { Shape::T } else { Shape::L };
                let mut rng = Rng::for_purpose(cfg.seed, "tris/rigid", i as u64);
                let pattern = sample_rigid_transform(&mut rng, shape, cfg.block_px(), px)?;
                let meta = serde_json::to_value(pattern).unwrap();
                (render_tetromino(&pattern, px)?, label, meta)
            }
            Scenario::Xor => {
                let case = XorCase::ALL[i % 4];
                (make_xor_signal(&a_t, &a_l, case)?, case.label(), serde_json::json!({ "xor": case }))
            }
        };
        let smoothed = gaussian_smooth(&signal, smoothing, Border::Reflect)?;
        let mut rng = Rng::for_purpose(cfg.seed, "tris/background", i as u64);
        let background = make_background(cfg.background, &mut rng, cfg.sigma_g(), px, corpus.as_ref())?;
        let x = match cfg.scenario {
            Scenario::Mult => compose_multiplicative(&smoothed, &background, cfg.alpha())?,
            _ => compose_additive(&smoothed, &background, cfg.alpha())?,
        };
        let mask = match cfg.scenario {
            Scenario::Rigid => ground_truth_mask(&smoothed),
            _ => fixed_mask.clone(),
        };
        Ok(RawSample { x, mask, label, meta })
    };
    let raw: Vec<RawSample> = (0..cfg.n_samples).into_par_iter().map(make).collect::<Result<_>>()?;

    let xs: Vec<Grid> = raw.iter().map(|r| r.x.clone()).collect();
    let samples = global_scale(&xs)?;
    let split = Split::assign(cfg.n_samples, cfg.split, cfg.seed)?;
    let provenance = serde_json::json!({ "generator": "tris", "config": cfg });
    let has_meta = raw.iter().any(|r| !r.meta.is_null());
    let (labels, masks, meta): (Vec<u8>, Vec<Mask>, Vec<serde_json::Value>) =
        raw.into_iter().fold((Vec::new(), Vec::new(), Vec::new()), |(mut l, mut m, mut t), r| {
            l.push(r.label);
            m.push(r.mask);
            t.push(r.meta);
            (l, m, t)
        });
    LabeledDataset::new(samples, labels, masks, split, provenance, if has_meta { meta } else { Vec::new() })
}
