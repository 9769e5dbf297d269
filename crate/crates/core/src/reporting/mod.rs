//! Leaderboard tables and image panels built from a challenge store.
//! Rendering only reads the store.

mod font;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::dataset::attribution_file_name;
use crate::error::{Error, Result};
use crate::foundation::png::{gray_pixel, save_gray, to_gray8_with_range};
use crate::foundation::{read_grid_file, Grid};
use crate::harness::{read_leaderboard, Challenge, Leaderboard, ScoreReport};
use crate::metrics::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderboardFormat {
    Table,
    Json,
    Csv,
}

impl std::str::FromStr for LeaderboardFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(LeaderboardFormat::Table),
            "json" => Ok(LeaderboardFormat::Json),
            "csv" => Ok(LeaderboardFormat::Csv),
            other => Err(Error::Config(format!("unknown leaderboard format `{other}`"))),
        }
    }
}

pub const LEADERBOARD_COLUMNS: [&str; 7] = ["rank", "method", "emd", "ima", "precision", "accuracy", "runs"];

fn cell4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Columns are always rank, method, emd, ima, precision, accuracy, runs.
/// JSON is the serialized [`Leaderboard`]; CSV cells hold full precision and
/// leave missing values empty.
pub fn render_leaderboard(board: &Leaderboard, format: LeaderboardFormat) -> String {
    match format {
        LeaderboardFormat::Json => serde_json::to_string_pretty(board).expect("leaderboard serializes") + "\n",
        LeaderboardFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(LEADERBOARD_COLUMNS).expect("in-memory write");
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for e in &board.entries {
                w.write_record([
                    e.rank.to_string(),
                    e.method.clone(),
                    opt(e.emd),
                    opt(e.ima),
                    opt(e.precision),
                    opt(e.accuracy),
                    e.runs.to_string(),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
        }
        LeaderboardFormat::Table => {
            let rows: Vec<[String; 7]> = board
                .entries
                .iter()
                .map(|e| {
                    [
                        e.rank.to_string(),
                        e.method.clone(),
                        cell4(e.emd),
                        cell4(e.ima),
                        cell4(e.precision),
                        cell4(e.accuracy),
                        e.runs.to_string(),
                    ]
                })
                .collect();
            let mut widths = LEADERBOARD_COLUMNS.map(str::len);
            for r in &rows {
                for (w, c) in widths.iter_mut().zip(r) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let line = |cells: [&str; 7]| {
                let mut s = String::new();
                for (i, c) in cells.iter().enumerate() {
                    if i > 0 {
                        s.push_str("  ");
                    }
                    if i == 1 {
                        let _ = write!(s, "{c:<w$}", w = widths[i]);
                    } else {
                        let _ = write!(s, "{c:>w$}", w = widths[i]);
                    }
                }
                s.trim_end().to_string() + "\n"
            };
            let mut out = format!(
                "challenge {} (ranked by {} mean)\n",
                board.challenge_id,
                board.primary_metric.name()
            );
            out += &line(LEADERBOARD_COLUMNS);
            for r in &rows {
                out += &line(std::array::from_fn(|i| r[i].as_str()));
            }
            out
        }
    }
}

/// Mean, median and standard deviation per metric for one run.
pub fn render_report_summary(report: &ScoreReport) -> String {
    let mut out = format!(
        "run {} method {} on {}: {} samples, model accuracy {:.4}\n",
        report.run_id,
        report.method,
        report.challenge_id,
        report.rows.len(),
        report.model_accuracy
    );
    let _ = writeln!(out, "{:<10}{:>10}{:>10}{:>10}", "metric", "mean", "median", "std");
    for m in Metric::ALL {
        if let Some(a) = report.aggregates.get(m.name()) {
            let _ = writeln!(out, "{:<10}{:>10.4}{:>10.4}{:>10.4}", m.name(), a.mean, a.median, a.std);
        }
    }
    let flagged = report.rows.iter().filter(|r| !r.flags.is_empty()).count();
    if flagged > 0 {
        let _ = writeln!(out, "{flagged} samples carry flags");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    /// Positions within the test split.
    pub samples: Vec<usize>,
    /// Run ids, or method names resolved to their best leaderboard run.
    pub methods: Vec<String>,
    pub output: PathBuf,
    /// Normalize each method column over all its rows instead of per cell.
    #[serde(default)]
    pub shared_scale: bool,
}

const GAP: usize = 2;
const CAPTION_H: usize = font::GLYPH_H + 2;
const BACKGROUND: u8 = 24;
const INK: u8 = 255;

/// Upscaling factor so small grids stay legible.
pub fn panel_scale(side: usize) -> usize {
    (64 / side.max(1)).max(1)
}

/// Pixel size `(width, height)` of a panel.
pub fn panel_size(rows: usize, columns: usize, height: usize, width: usize) -> (usize, usize) {
    let s = panel_scale(height.max(width));
    (columns * width * s + (columns + 1) * GAP, CAPTION_H + rows * height * s + (rows + 1) * GAP)
}

fn resolve_run(ch: &Challenge, board: &Leaderboard, name: &str) -> Result<String> {
    if ch.layout.run(name).join("run.json").is_file() {
        return Ok(name.to_string());
    }
    board
        .entries
        .iter()
        .find(|e| e.method == name)
        .map(|e| e.best_run.clone())
        .ok_or_else(|| Error::Store(format!("no run or ranked method named `{name}`")))
}

fn draw_text(img: &mut GrayImage, x0: usize, y0: usize, max_w: usize, text: &str) {
    let fit = max_w / font::ADVANCE;
    for (k, ch) in text.chars().take(fit).enumerate() {
        let g = font::glyph(ch);
        for (dy, row) in g.iter().enumerate() {
            for dx in 0..font::GLYPH_W {
                if row >> (font::GLYPH_W - 1 - dx) & 1 == 1 {
                    img.put_pixel((x0 + k * font::ADVANCE + dx) as u32, (y0 + dy) as u32, gray_pixel(INK));
                }
            }
        }
    }
}

fn blit(img: &mut GrayImage, x0: usize, y0: usize, scale: usize, grid: &Grid, range: (f64, f64)) {
    let px = to_gray8_with_range(grid, range.0, range.1);
    let w = grid.width();
    for (i, &v) in px.iter().enumerate() {
        let (r, c) = (i / w, i % w);
        for dy in 0..scale {
            for dx in 0..scale {
                img.put_pixel((x0 + c * scale + dx) as u32, (y0 + r * scale + dy) as u32, gray_pixel(v));
            }
        }
    }
}

/// Rows are samples; columns are input, ground truth and one column per
/// method, each min-max normalized.
pub fn render_panel(dir: &Path, spec: &PanelSpec) -> Result<PathBuf> {
    let ch = Challenge::open(dir)?;
    let board = read_leaderboard(dir)?;
    let test = ch.test_set()?;
    if spec.samples.is_empty() {
        return Err(Error::Config("panel needs at least one sample".into()));
    }
    if let Some(&bad) = spec.samples.iter().find(|&&i| i >= test.len()) {
        return Err(Error::Store(format!("test split has no sample {bad}")));
    }
    let runs: Vec<String> = spec.methods.iter().map(|m| resolve_run(&ch, &board, m)).collect::<Result<_>>()?;
    let mut columns: Vec<(String, Vec<Grid>)> = vec![
        ("input".into(), spec.samples.iter().map(|&i| test.samples[i].clone()).collect()),
        ("truth".into(), spec.samples.iter().map(|&i| test.masks[i].to_grid()).collect()),
    ];
    for (name, run) in spec.methods.iter().zip(&runs) {
        let cells = spec
            .samples
            .iter()
            .map(|&i| read_grid_file(ch.layout.run(run).join("attributions").join(attribution_file_name(i))))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Store(format!("run {run}: {e}")))?;
        columns.push((name.clone(), cells));
    }

    let (h, w) = test.dims();
    let scale = panel_scale(h.max(w));
    let (pw, ph) = panel_size(spec.samples.len(), columns.len(), h, w);
    let mut img = GrayImage::from_pixel(pw as u32, ph as u32, gray_pixel(BACKGROUND));
    for (col, (caption, cells)) in columns.iter().enumerate() {
        let x0 = GAP + col * (w * scale + GAP);
        draw_text(&mut img, x0, 1, w * scale, caption);
        let shared = (spec.shared_scale && col >= 2).then(|| {
            cells.iter().map(Grid::min_max).fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)))
        });
        for (row, g) in cells.iter().enumerate() {
            let y0 = CAPTION_H + GAP + row * (h * scale + GAP);
            blit(&mut img, x0, y0, scale, g, shared.unwrap_or_else(|| g.min_max()));
        }
    }
    if let Some(parent) = spec.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    save_gray(&img, &spec.output)?;
    Ok(spec.output.clone())
}

#[cfg(test)]
mod tests;
