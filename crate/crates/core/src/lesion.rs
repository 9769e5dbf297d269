//! Regular-versus-irregular lesion benchmark: candidate shapes come from
//! thresholded smoothed noise, are sorted by compactness, and 3-5 shapes of
//! one class are imprinted as hyperintensities on a background.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Split, SplitFractions};
use crate::error::{Error, Result};
use crate::foundation::{gaussian_smooth, Border, GaussianKernelSpec, Grid, Mask, Rng};

const HIST_BINS: usize = 256;

/// Otsu threshold over a 256-bin histogram spanning the value range. The
/// result is the lower edge of the first bin assigned to the upper class.
pub fn otsu_threshold(grid: &Grid) -> Result<f64> {
    let (lo, hi) = grid.min_max();
    if lo == hi {
        return Err(Error::DegenerateHistogram(format!("all {} values equal {lo}", grid.len())));
    }
    let hist = histogram(grid, lo, hi);
    let width = (hi - lo) / HIST_BINS as f64;
    let centers: Vec<f64> = (0..HIST_BINS).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let total = grid.len() as f64;
    let sum_all: f64 = hist.iter().zip(&centers).map(|(&n, c)| n as f64 * c).sum();
    let (mut n0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 1);
    for t in 1..HIST_BINS {
        n0 += hist[t - 1] as f64;
        sum0 += hist[t - 1] as f64 * centers[t - 1];
        let n1 = total - n0;
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        let diff = sum0 / n0 - (sum_all - sum0) / n1;
        let between = n0 * n1 * diff * diff / (total * total);
        if between > best.0 {
            best = (between, t);
        }
    }
    Ok(lo + best.1 as f64 * width)
}

fn bin_of(v: f64, lo: f64, hi: f64) -> usize {
    (((v - lo) / (hi - lo) * HIST_BINS as f64) as usize).min(HIST_BINS - 1)
}

fn histogram(grid: &Grid, lo: f64, hi: f64) -> Vec<u64> {
    let mut hist = vec![0u64; HIST_BINS];
    for &v in grid.values() {
        hist[bin_of(v, lo, hi)] += 1;
    }
    hist
}

/// Pixels at or above the Otsu threshold.
pub fn otsu_binarize(grid: &Grid) -> Result<Mask> {
    let (lo, hi) = grid.min_max();
    let t = otsu_threshold(grid)?;
    let edge = bin_of(t, lo, hi);
    Ok(Mask::from_fn(grid.height(), grid.width(), |r, c| bin_of(grid.get(r, c), lo, hi) >= edge))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructuringElement {
    #[default]
    Cross,
    Square,
}

impl StructuringElement {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            StructuringElement::Cross => &[(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)],
            StructuringElement::Square => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Erode,
    Dilate,
    Open,
}

/// Binary morphology. Erosion treats pixels outside the image as background;
/// dilation ignores them.
pub fn morphology(mask: &Mask, op: MorphOp, se: StructuringElement) -> Mask {
    let (h, w) = mask.dims();
    let probe = |r: usize, c: usize, dr: isize, dc: isize| -> Option<bool> {
        let (rr, cc) = (r as isize + dr, c as isize + dc);
        (rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w).then(|| mask.get(rr as usize, cc as usize))
    };
    match op {
        MorphOp::Erode => {
            Mask::from_fn(h, w, |r, c| se.offsets().iter().all(|&(dr, dc)| probe(r, c, dr, dc).unwrap_or(false)))
        }
        MorphOp::Dilate => {
            Mask::from_fn(h, w, |r, c| se.offsets().iter().any(|&(dr, dc)| probe(r, c, dr, dc).unwrap_or(false)))
        }
        MorphOp::Open => morphology(&morphology(mask, MorphOp::Erode, se), MorphOp::Dilate, se),
    }
}

/// 4-connected components in order of their first pixel (row-major).
pub fn connected_components(mask: &Mask) -> Vec<Mask> {
    let (h, w) = mask.dims();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for start in mask.indices() {
        if seen[start] {
            continue;
        }
        let mut comp = Mask::empty(h, w);
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            comp.set(r, c, true);
            let mut visit = |rr: usize, cc: usize| {
                let j = rr * w + cc;
                if mask.bits()[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(r - 1, c);
            }
            if r + 1 < h {
                visit(r + 1, c);
            }
            if c > 0 {
                visit(r, c - 1);
            }
            if c + 1 < w {
                visit(r, c + 1);
            }
        }
        out.push(comp);
    }
    out
}

/// Number of pixel edges between the shape and the background (crack length).
pub fn perimeter(mask: &Mask) -> usize {
    let (h, w) = mask.dims();
    let on = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && mask.get(r as usize, c as usize);
    mask.indices()
        .map(|i| {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().filter(|&&(dr, dc)| !on(r + dr, c + dc)).count()
        })
        .sum()
}

/// `4πA / p²` for a single 4-connected shape.
pub fn compactness(mask: &Mask) -> Result<f64> {
    let area = mask.count();
    if area == 0 {
        return Err(Error::Shape("compactness of an empty mask".into()));
    }
    if connected_components(mask).len() != 1 {
        return Err(Error::Shape("compactness needs a single 4-connected component".into()));
    }
    let p = perimeter(mask) as f64;
    Ok(4.0 * std::f64::consts::PI * area as f64 / (p * p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LesionCandidate {
    /// Cropped to the tight bounding box.
    #[serde(skip)]
    pub mask: Mask,
    pub area: usize,
    pub perimeter: usize,
    pub compactness: f64,
}

impl LesionCandidate {
    pub fn from_component(component: &Mask) -> Result<Self> {
        let w = component.width();
        let idx: Vec<usize> = component.indices().collect();
        let (r0, r1) = (idx.iter().map(|i| i / w).min().unwrap_or(0), idx.iter().map(|i| i / w).max().unwrap_or(0));
        let (c0, c1) = (idx.iter().map(|i| i % w).min().unwrap_or(0), idx.iter().map(|i| i % w).max().unwrap_or(0));
        let mask = Mask::from_fn(r1 - r0 + 1, c1 - c0 + 1, |r, c| component.get(r0 + r, c0 + c));
        let compactness = compactness(&mask)?;
        Ok(LesionCandidate { area: mask.count(), perimeter: perimeter(&mask), compactness, mask })
    }
}

pub const CANDIDATE_NOISE_PX: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    /// Gaussian "radius 2" filter: sigma 2/3 truncated at 3 sigma.
    pub smoothing: GaussianKernelSpec,
    pub min_area: usize,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig { smoothing: GaussianKernelSpec::with_truncate(2.0 / 3.0, 3.0), min_area: 16 }
    }
}

/// Noise -> smooth -> Otsu -> open -> erode -> erode -> components. Shapes
/// touching the border or below `min_area` are dropped.
pub fn generate_lesion_candidates(rng: &mut Rng, config: &CandidateConfig) -> Result<Vec<LesionCandidate>> {
    let n = CANDIDATE_NOISE_PX;
    let noise = Grid::from_fn(n, n, |_, _| rng.uniform());
    let smooth = gaussian_smooth(&noise, config.smoothing, Border::Reflect)?;
    let opened = morphology(&otsu_binarize(&smooth)?, MorphOp::Open, StructuringElement::Cross);
    let eroded = morphology(&morphology(&opened, MorphOp::Erode, StructuringElement::Cross), MorphOp::Erode, StructuringElement::Cross);
    connected_components(&eroded)
        .iter()
        .filter(|c| !c.touches_border() && c.count() >= config.min_area)
        .map(LesionCandidate::from_component)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesionClass {
    Regular,
    Irregular,
}

impl LesionClass {
    pub fn label(self) -> u8 {
        match self {
            LesionClass::Regular => 0,
            LesionClass::Irregular => 1,
        }
    }
}

/// Compactness bands: regular at or above `theta + gap/2`, irregular below
/// `theta - gap/2`, anything between is rejected.
pub fn classify(compactness: f64, theta: f64, gap: f64) -> Option<LesionClass> {
    if compactness >= theta + gap / 2.0 {
        Some(LesionClass::Regular)
    } else if compactness < theta - gap / 2.0 {
        Some(LesionClass::Irregular)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedLesion {
    /// Index into the class's candidate pool.
    pub candidate: usize,
    /// Top-left corner of the candidate's bounding box.
    pub row: usize,
    pub col: usize,
    pub area: usize,
    pub compactness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementConfig {
    pub w: f64,
    pub count_min: usize,
    pub count_max: usize,
    /// Attempts per lesion before giving up on a sample.
    pub retries: usize,
    /// Smoothing of the lesion mask that shapes the intensity profile.
    pub profile_sigma: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig { w: 0.5, count_min: 3, count_max: 5, retries: 2000, profile_sigma: 1.0 }
    }
}

/// Imprints `count_min..=count_max` disjoint lesions drawn from `candidates`
/// inside `foreground`. Returns the sample, its ground truth and the
/// placements.
pub fn place_lesions(
    background: &Grid,
    foreground: &Mask,
    candidates: &[&LesionCandidate],
    rng: &mut Rng,
    config: &PlacementConfig,
) -> Result<(Grid, Mask, Vec<PlacedLesion>)> {
    background.ensure_same_dims(&foreground.to_grid())?;
    if candidates.is_empty() {
        return Err(Error::Placement("no candidates of the requested class".into()));
    }
    let (h, w) = background.dims();
    let count = config.count_min + rng.below_usize(config.count_max - config.count_min + 1);
    let mut gt = Mask::empty(h, w);
    let mut placed = Vec::with_capacity(count);
    let mut attempts = 0;
    while placed.len() < count {
        attempts += 1;
        if attempts > config.retries * count {
            return Err(Error::Placement(format!("placed {} of {count} lesions within the retry budget", placed.len())));
        }
        let pick = rng.below_usize(candidates.len());
        let cand = candidates[pick];
        let (ch, cw) = cand.mask.dims();
        if ch + 2 > h || cw + 2 > w {
            continue;
        }
        let row = 1 + rng.below_usize(h - ch - 1);
        let col = 1 + rng.below_usize(w - cw - 1);
        let fits = cand.mask.indices().all(|i| {
            let (r, c) = (row + i / cw, col + i % cw);
            foreground.get(r, c) && !gt.get(r, c)
        });
        if !fits {
            continue;
        }
        for i in cand.mask.indices() {
            gt.set(row + i / cw, col + i % cw, true);
        }
        placed.push(PlacedLesion { candidate: pick, row, col, area: cand.area, compactness: cand.compactness });
    }
    let sample = imprint(background, &gt, config.w, config.profile_sigma)?;
    Ok((sample, gt, placed))
}

/// `b (1 - M) + clip(b (1 + L)) M` with `L = w * smooth(M) / max smooth(M)`.
pub fn imprint(background: &Grid, lesions: &Mask, w: f64, profile_sigma: f64) -> Result<Grid> {
    let smooth = gaussian_smooth(&lesions.to_grid(), GaussianKernelSpec::new(profile_sigma), Border::ZeroPad)?;
    let peak = smooth.max_abs();
    let mut out = background.clone();
    if peak == 0.0 {
        return Ok(out);
    }
    for i in lesions.indices() {
        let (r, c) = (i / out.width(), i % out.width());
        let l = w * smooth.get(r, c) / peak;
        out.set(r, c, (background.get(r, c) * (1.0 + l)).clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Procedural brain-like slice: a textured ellipse in roughly [0.25, 0.75]
/// with an intensity gradient, black outside.
pub fn synthetic_brain(rng: &mut Rng, image_px: usize) -> Result<(Grid, Mask)> {
    let n = image_px as f64;
    let (cy, cx) = (n / 2.0 + (rng.uniform() - 0.5) * 0.04 * n, n / 2.0 + (rng.uniform() - 0.5) * 0.04 * n);
    let ry = n * (0.40 + 0.04 * rng.uniform());
    let rx = n * (0.33 + 0.04 * rng.uniform());
    let texture = Grid::from_fn(image_px, image_px, |_, _| rng.standard_normal());
    let texture = gaussian_smooth(&texture, GaussianKernelSpec::new(n / 60.0), Border::Reflect)?;
    let sd = (texture.values().iter().map(|v| v * v).sum::<f64>() / texture.len() as f64).sqrt().max(1e-12);
    let tilt = rng.uniform() * std::f64::consts::TAU;
    let inside = |r: usize, c: usize| {
        let (dy, dx) = ((r as f64 + 0.5 - cy) / ry, (c as f64 + 0.5 - cx) / rx);
        dy * dy + dx * dx <= 1.0
    };
    let fg = Mask::from_fn(image_px, image_px, inside);
    let bg = Grid::from_fn(image_px, image_px, |r, c| {
        if !inside(r, c) {
            return 0.0;
        }
        let (dy, dx) = ((r as f64 + 0.5 - cy) / ry, (c as f64 + 0.5 - cx) / rx);
        let gradient = 0.08 * (dy * tilt.cos() + dx * tilt.sin());
        let rim = -0.06 * (dy * dy + dx * dx);
        (0.5 + gradient + rim + 0.07 * texture.get(r, c) / sd).clamp(0.25, 0.75)
    });
    Ok((bg, fg))
}

/// Grayscale slices from a directory, zero-padded or center-cropped to the
/// image size. Slices with more than 55% black pixels are skipped.
#[derive(Debug, Clone)]
pub struct SliceCorpus {
    slices: Vec<(Grid, Mask)>,
}

pub const MAX_BLACK_FRACTION: f64 = 0.55;

impl SliceCorpus {
    pub fn open(dir: &Path, image_px: usize) -> Result<Self> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::Corpus(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut slices = Vec::new();
        for path in files {
            let Ok(img) = image::open(&path) else { continue };
            let gray = img.to_luma32f();
            let (w, h) = gray.dimensions();
            let (w, h) = (w as usize, h as usize);
            let grid = Grid::from_fn(image_px, image_px, |r, c| {
                let (sr, sc) = (r as isize + (h as isize - image_px as isize) / 2, c as isize + (w as isize - image_px as isize) / 2);
                if sr < 0 || sc < 0 || sr as usize >= h || sc as usize >= w {
                    0.0
                } else {
                    f64::from(gray.get_pixel(sc as u32, sr as u32).0[0]).clamp(0.0, 1.0)
                }
            });
            let fg = grid.support();
            if 1.0 - fg.count() as f64 / grid.len() as f64 > MAX_BLACK_FRACTION {
                continue;
            }
            slices.push((grid, fg));
        }
        if slices.is_empty() {
            return Err(Error::Corpus(format!("no usable grayscale slices in {}", dir.display())));
        }
        Ok(SliceCorpus { slices })
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LesionBackground {
    Synthetic,
    Directory { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionConfig {
    #[serde(default = "synthetic")]
    pub background: LesionBackground,
    #[serde(default = "default_image_px")]
    pub image_px: usize,
    #[serde(default)]
    pub placement: PlacementConfig,
    #[serde(default)]
    pub candidates: CandidateConfig,
    #[serde(default = "default_theta")]
    pub theta_c: f64,
    #[serde(default = "default_gap")]
    pub gap: f64,
    /// Candidates of each class to collect before assembling samples.
    #[serde(default = "default_pool")]
    pub pool_per_class: usize,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub seed: u64,
}

fn synthetic() -> LesionBackground {
    LesionBackground::Synthetic
}

fn default_image_px() -> usize {
    270
}

fn default_theta() -> f64 {
    0.34
}

fn default_gap() -> f64 {
    0.05
}

fn default_pool() -> usize {
    64
}

fn default_n_samples() -> usize {
    1000
}

impl Default for LesionConfig {
    fn default() -> Self {
        LesionConfig {
            background: synthetic(),
            image_px: default_image_px(),
            placement: PlacementConfig::default(),
            candidates: CandidateConfig::default(),
            theta_c: default_theta(),
            gap: default_gap(),
            pool_per_class: default_pool(),
            n_samples: default_n_samples(),
            split: SplitFractions::default(),
            seed: 0,
        }
    }
}

impl LesionConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.placement;
        if !(p.w > 0.0 && p.w.is_finite()) {
            return Err(Error::Config("lesion intensity w must be positive".into()));
        }
        if p.count_min < 1 || p.count_max > 10 || p.count_min > p.count_max {
            return Err(Error::Config(format!("lesion count range [{}, {}] must lie within [1, 10]", p.count_min, p.count_max)));
        }
        if !(self.theta_c > 0.0 && self.theta_c < 1.0) || !(self.gap >= 0.0) {
            return Err(Error::Config("theta_c must lie in (0, 1) and gap must be >= 0".into()));
        }
        if self.n_samples == 0 || self.pool_per_class == 0 || self.image_px < 16 {
            return Err(Error::Config("n_samples and pool_per_class must be positive and image_px >= 16".into()));
        }
        self.split.validate()
    }
}

/// Candidate pools for both classes, filled from successive noise images.
pub fn candidate_pools(config: &LesionConfig) -> Result<[Vec<LesionCandidate>; 2]> {
    let mut pools: [Vec<LesionCandidate>; 2] = [Vec::new(), Vec::new()];
    for round in 0..10_000u64 {
        if pools.iter().all(|p| p.len() >= config.pool_per_class) {
            return Ok(pools);
        }
        let mut rng = Rng::for_purpose(config.seed, "lesion/candidates", round);
        for cand in generate_lesion_candidates(&mut rng, &config.candidates)? {
            if let Some(class) = classify(cand.compactness, config.theta_c, config.gap) {
                let pool = &mut pools[class.label() as usize];
                if pool.len() < config.pool_per_class {
                    pool.push(cand);
                }
            }
        }
    }
    Err(Error::Placement(format!(
        "could not collect {} candidates per class (got {} regular, {} irregular)",
        config.pool_per_class,
        pools[0].len(),
        pools[1].len()
    )))
}

pub fn generate_lesion_dataset(config: &LesionConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let pools = candidate_pools(config)?;
    let corpus = match &config.background {
        LesionBackground::Synthetic => None,
        LesionBackground::Directory { path } => Some(SliceCorpus::open(path, config.image_px)?),
    };
    let make = |i: usize| -> Result<(Grid, Mask, u8, serde_json::Value)> {
        let class = if i % 2 == 0 { LesionClass::Regular } else { LesionClass::Irregular };
        let mut bg_rng = Rng::for_purpose(config.seed, "lesion/background", i as u64);
        let (bg, fg) = match &corpus {
            None => synthetic_brain(&mut bg_rng, config.image_px)?,
            Some(c) => c.slices[bg_rng.below_usize(c.len())].clone(),
        };
        let pool: Vec<&LesionCandidate> = pools[class.label() as usize].iter().collect();
        let mut rng = Rng::for_purpose(config.seed, "lesion/placement", i as u64);
        let (x, gt, placed) = place_lesions(&bg, &fg, &pool, &mut rng, &config.placement)?;
        let meta = serde_json::json!({ "class": class, "lesions": placed });
        Ok((x, gt, class.label(), meta))
    };
    let rows: Vec<_> = (0..config.n_samples).into_par_iter().map(make).collect::<Result<_>>()?;
    let split = Split::assign(config.n_samples, config.split, config.seed)?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut masks = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut meta = Vec::with_capacity(rows.len());
    for (x, m, y, t) in rows {
        samples.push(x);
        masks.push(m);
        labels.push(y);
        meta.push(t);
    }
    let provenance = serde_json::json!({ "generator": "lesion", "config": config });
    LabeledDataset::new(samples, labels, masks, split, provenance, meta)
}
