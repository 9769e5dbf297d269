//! Explanation performance metrics against a binary ground-truth mask.
//!
//! All three metrics read attributions through their absolute value.

mod ot;

pub use ot::{solve_ot, solve_transport, DiscreteMeasurePair, PlanEntry, TransportPlan, WeightedPoint, SPARSITY_CUTOFF};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foundation::{Grid, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Precision,
    Emd,
    Ima,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Precision, Metric::Emd, Metric::Ima];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Emd => "emd",
            Metric::Ima => "ima",
        }
    }
}

/// Set when the attribution map has no mass at all.
pub const FLAG_ZERO_ATTRIBUTION: &str = "zero_attribution";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub precision: Option<f64>,
    pub emd: Option<f64>,
    pub ima: Option<f64>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl MetricResult {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Precision => self.precision,
            Metric::Emd => self.emd,
            Metric::Ima => self.ima,
        }
    }
}

fn check(attr: &Grid, mask: &Mask) -> Result<usize> {
    if attr.dims() != mask.dims() {
        return Err(Error::Shape(format!("attribution is {:?} but mask is {:?}", attr.dims(), mask.dims())));
    }
    let k = mask.count();
    if k == 0 {
        return Err(Error::Shape("ground-truth mask is empty".into()));
    }
    Ok(k)
}

/// Row-major indices of the `k` largest `|attr|`, ties broken by index.
pub fn top_k(attr: &Grid, k: usize) -> Vec<usize> {
    let v = attr.values();
    let mut order: Vec<usize> = (0..v.len()).collect();
    let key = |&i: &usize| std::cmp::Reverse(OrdF64(v[i].abs()));
    if k < order.len() {
        order.select_nth_unstable_by(k, |a, b| key(a).cmp(&key(b)).then(a.cmp(b)));
        order.truncate(k);
    }
    order.sort_by(|a, b| key(a).cmp(&key(b)).then(a.cmp(b)));
    order
}

#[derive(PartialEq, PartialOrd, Clone, Copy)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

pub fn precision_at_k(attr: &Grid, mask: &Mask) -> Result<f64> {
    let k = check(attr, mask)?;
    let hits = top_k(attr, k).into_iter().filter(|&i| mask.bits()[i]).count();
    Ok(hits as f64 / k as f64)
}

/// `Σ_{F+} |attr| / Σ |attr|`; `None` for an all-zero map.
pub fn ima(attr: &Grid, mask: &Mask) -> Result<Option<f64>> {
    check(attr, mask)?;
    let (mut inside, mut total) = (0.0, 0.0);
    for (v, &m) in attr.values().iter().zip(mask.bits()) {
        total += v.abs();
        if m {
            inside += v.abs();
        }
    }
    Ok((total > 0.0).then(|| (inside / total).clamp(0.0, 1.0)))
}

/// Source measure from `|attr|`, sink uniform over the mask.
pub fn measure_pair(attr: &Grid, mask: &Mask) -> Result<Option<DiscreteMeasurePair>> {
    let k = check(attr, mask)?;
    let w = attr.width();
    let total: f64 = attr.values().iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return Ok(None);
    }
    let at = |i: usize, weight: f64| WeightedPoint { row: (i / w) as f64, col: (i % w) as f64, weight };
    let source = attr.values().iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| at(i, v.abs() / total)).collect();
    let sink = mask.indices().map(|i| at(i, 1.0 / k as f64)).collect();
    Ok(Some(DiscreteMeasurePair { source, sink }))
}

/// Largest Euclidean distance between two pixels of an `h x w` image.
pub fn delta_max(height: usize, width: usize) -> f64 {
    ((height as f64 - 1.0).powi(2) + (width as f64 - 1.0).powi(2)).sqrt()
}

/// Net mass below this is treated as a perfect match.
const CANCELLED: f64 = 1e-12;

/// `1 - OT(|attr|, F+) / δ_max`; `None` for an all-zero map.
///
/// The ground cost is a metric, so mass both measures put on the same pixel
/// stays put at zero cost and only the difference is transported.
pub fn emd_score(attr: &Grid, mask: &Mask) -> Result<Option<f64>> {
    let k = check(attr, mask)?;
    let total: f64 = attr.values().iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return Ok(None);
    }
    let dmax = delta_max(attr.height(), attr.width());
    if dmax == 0.0 {
        return Ok(Some(1.0));
    }
    let target = 1.0 / k as f64;
    let (mut surplus, mut deficit) = (Vec::new(), Vec::new());
    for (i, (v, &m)) in attr.values().iter().zip(mask.bits()).enumerate() {
        let net = v.abs() / total - if m { target } else { 0.0 };
        if net > 0.0 {
            surplus.push((i, net));
        } else if net < 0.0 {
            deficit.push((i, -net));
        }
    }
    let moved: f64 = surplus.iter().map(|p| p.1).sum();
    let owed: f64 = deficit.iter().map(|p| p.1).sum();
    if moved <= CANCELLED || owed <= CANCELLED {
        return Ok(Some(1.0));
    }
    for p in &mut deficit {
        p.1 *= moved / owed;
    }
    let cost = solve_on_grid(&surplus, &deficit, attr.width())?;
    Ok(Some((1.0 - cost / dmax).clamp(0.0, 1.0)))
}

/// Optimal cost between `(pixel index, mass)` lists under the Euclidean
/// ground metric, with distances read from a table indexed by the offset.
fn solve_on_grid(source: &[(usize, f64)], sink: &[(usize, f64)], width: usize) -> Result<f64> {
    let height = source.iter().chain(sink).map(|p| p.0 / width + 1).max().unwrap_or(0);
    let table: Vec<f64> = (0..height * width).map(|k| ((k / width) as f64).hypot((k % width) as f64)).collect();
    let cell = |p: &(usize, f64)| (p.0 / width, p.0 % width);
    let src: Vec<(usize, usize)> = source.iter().map(cell).collect();
    let snk: Vec<(usize, usize)> = sink.iter().map(cell).collect();
    let a: Vec<f64> = source.iter().map(|p| p.1).collect();
    let b: Vec<f64> = sink.iter().map(|p| p.1).collect();
    let plan = solve_transport(&a, &b, |i, j| {
        let (s, t) = (src[i], snk[j]);
        table[s.0.abs_diff(t.0) * width + s.1.abs_diff(t.1)]
    })?;
    Ok(plan.cost)
}

/// Scores the requested metrics. Zero maps score 0 on EMD and IMA and
/// carry [`FLAG_ZERO_ATTRIBUTION`].
pub fn evaluate(attr: &Grid, mask: &Mask, metrics: &[Metric]) -> Result<MetricResult> {
    check(attr, mask)?;
    let mut out = MetricResult { precision: None, emd: None, ima: None, flags: Vec::new() };
    let zero = attr.values().iter().all(|v| *v == 0.0);
    if zero {
        out.flags.push(FLAG_ZERO_ATTRIBUTION.to_string());
    }
    for &m in metrics {
        match m {
            Metric::Precision => out.precision = Some(precision_at_k(attr, mask)?),
            Metric::Ima => out.ima = Some(ima(attr, mask)?.unwrap_or(0.0)),
            Metric::Emd => out.emd = Some(emd_score(attr, mask)?.unwrap_or(0.0)),
        }
    }
    Ok(out)
}
