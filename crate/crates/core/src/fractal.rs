//! Fractal dimension estimators: dyadic box counting (Euclidean), greedy
//! covers by LQG metric balls (quantum), and log–log least squares.
//!
//! All estimates are box-counting (Minkowski) surrogates for Hausdorff
//! dimension and are labelled as such in emitted output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridGeometry, Point, Rect};
use crate::metric::{internal_diameter, shortest_distances, BoundedSearch, MetricError, WeightGrid};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FractalError {
    #[error("empty point set")]
    EmptySet,
    #[error("scale {scale} outside ({min}, {max}]")]
    ScaleOutOfRange { scale: f64, min: f64, max: f64 },
    #[error("need at least 3 (scale, count) pairs, got {0}")]
    TooFewPairs(usize),
    #[error("counts must be positive")]
    NonPositiveCount,
    #[error("scales must be distinct and positive")]
    DegenerateScales,
    #[error("greedy cover at radius {0} left a boundary cell uncovered")]
    InvalidCover(f64),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Fitted log–log slope of counts against inverse scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// Strictly decreasing.
    pub scales: Vec<f64>,
    pub counts: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    #[serde(with = "crate::stats::nan_as_null")]
    pub r_squared: f64,
    #[serde(with = "crate::stats::nan_as_null")]
    pub slope_stderr: f64,
    /// Slope refit without the coarsest scale (needs at least 4 pairs).
    pub slope_drop_coarsest: Option<f64>,
    /// Slope refit without the finest scale (needs at least 4 pairs).
    pub slope_drop_finest: Option<f64>,
}

impl DimensionEstimate {
    /// Rows `(scale, count, log_scale, log_count)` for plotting.
    pub fn rows(&self) -> Vec<[f64; 4]> {
        self.scales
            .iter()
            .zip(&self.counts)
            .map(|(&s, &c)| [s, c, s.ln(), c.ln()])
            .collect()
    }
}

/// Least-squares slope of `log count` against `log(1/scale)`.
pub fn fit_dimension(pairs: &[(f64, f64)]) -> Result<DimensionEstimate, FractalError> {
    if pairs.len() < 3 {
        return Err(FractalError::TooFewPairs(pairs.len()));
    }
    if pairs.iter().any(|&(_, c)| !(c > 0.0)) {
        return Err(FractalError::NonPositiveCount);
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    if sorted.iter().any(|&(s, _)| !(s > 0.0) || !s.is_finite())
        || sorted.windows(2).any(|w| w[0].0 <= w[1].0)
    {
        return Err(FractalError::DegenerateScales);
    }
    let fit_of = |ps: &[(f64, f64)]| {
        let xs: Vec<f64> = ps.iter().map(|p| -p.0.ln()).collect();
        let ys: Vec<f64> = ps.iter().map(|p| p.1.ln()).collect();
        stats::linear_fit(&xs, &ys)
    };
    let fit = fit_of(&sorted).ok_or(FractalError::DegenerateScales)?;
    let (drop_coarse, drop_fine) = if sorted.len() >= 4 {
        (
            fit_of(&sorted[1..]).map(|f| f.slope),
            fit_of(&sorted[..sorted.len() - 1]).map(|f| f.slope),
        )
    } else {
        (None, None)
    };
    Ok(DimensionEstimate {
        scales: sorted.iter().map(|p| p.0).collect(),
        counts: sorted.iter().map(|p| p.1).collect(),
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        slope_stderr: fit.slope_stderr,
        slope_drop_coarsest: drop_coarse,
        slope_drop_finest: drop_fine,
    })
}

/// Box indices along one axis touched by a closed box partition: a
/// coordinate sitting exactly on an interior box edge belongs to both sides.
fn axis_boxes(coord: f64, origin: f64, scale: f64, boxes: i64) -> (i64, Option<i64>) {
    let u = (coord - origin) / scale;
    let i = (u.floor() as i64).clamp(0, boxes - 1);
    let other = (u == u.floor() && u > 0.0 && (u as i64) < boxes).then(|| u as i64 - 1);
    (i, other.filter(|&j| j != i))
}

fn count_boxes(points: &[Point], extent: &Rect, scale: f64, shift: (f64, f64)) -> usize {
    let ox = extent.x0 - shift.0;
    let oy = extent.y0 - shift.1;
    let nx = ((extent.x1 - ox) / scale).ceil() as i64;
    let ny = ((extent.y1 - oy) / scale).ceil() as i64;
    let mut keys: Vec<i64> = Vec::with_capacity(points.len());
    for &(x, y) in points {
        let (ix, ix2) = axis_boxes(x, ox, scale, nx);
        let (iy, iy2) = axis_boxes(y, oy, scale, ny);
        for a in std::iter::once(ix).chain(ix2) {
            for b in std::iter::once(iy).chain(iy2) {
                keys.push(a * ny + b);
            }
        }
    }
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn check_scales(points: &[Point], extent: &Rect, scales: &[f64], min: f64) -> Result<(), FractalError> {
    if points.is_empty() {
        return Err(FractalError::EmptySet);
    }
    let max = extent.width().max(extent.height());
    match scales.iter().find(|&&s| !(s > min && s <= max)) {
        Some(&scale) => Err(FractalError::ScaleOutOfRange { scale, min, max }),
        None => Ok(()),
    }
}

/// Number of closed boxes of side `ε` in the partition anchored at the
/// extent's lower-left corner that meet the point set, for each `ε`.
pub fn box_count(points: &[Point], extent: &Rect, scales: &[f64]) -> Result<Vec<(f64, u64)>, FractalError> {
    check_scales(points, extent, scales, 0.0)?;
    Ok(scales
        .iter()
        .map(|&s| (s, count_boxes(points, extent, s, (0.0, 0.0)) as u64))
        .collect())
}

/// [`box_count`] for lattice cells; scales must exceed the lattice spacing.
pub fn box_count_cells(
    geom: GridGeometry,
    cells: &[usize],
    extent: &Rect,
    scales: &[f64],
) -> Result<Vec<(f64, u64)>, FractalError> {
    let points: Vec<Point> = cells.iter().map(|&c| geom.point(c)).collect();
    check_scales(&points, extent, scales, geom.spacing())?;
    box_count(&points, extent, scales)
}

/// Box counts averaged over four partitions shifted by half a box in each
/// axis, which damps lattice-alignment artifacts.
pub fn box_count_shifted(points: &[Point], extent: &Rect, scales: &[f64]) -> Result<Vec<(f64, f64)>, FractalError> {
    check_scales(points, extent, scales, 0.0)?;
    Ok(scales
        .iter()
        .map(|&s| {
            let h = 0.5 * s;
            let total: usize = [(0.0, 0.0), (h, 0.0), (0.0, h), (h, h)]
                .into_iter()
                .map(|shift| count_boxes(points, extent, s, shift))
                .sum();
            (s, total as f64 / 4.0)
        })
        .collect())
}

/// Dyadic box sides `side / 2^k` falling inside `[lo, hi]`, coarsest first.
pub fn dyadic_scales(side: f64, lo: f64, hi: f64) -> Vec<f64> {
    (0..64)
        .map(|k| side / 2f64.powi(k))
        .skip_while(|&s| s > hi * (1.0 + 1e-12))
        .take_while(|&s| s >= lo * (1.0 - 1e-12))
        .collect()
}

/// Euclidean box-counting dimension of a cell set over the given scales.
pub fn euclidean_dimension(
    geom: GridGeometry,
    cells: &[usize],
    extent: &Rect,
    scales: &[f64],
) -> Result<DimensionEstimate, FractalError> {
    let pairs: Vec<(f64, f64)> = box_count_cells(geom, cells, extent, scales)?
        .into_iter()
        .map(|(s, c)| (s, c as f64))
        .collect();
    fit_dimension(&pairs)
}

/// Centers of a greedy cover of a boundary by LQG balls of one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumCover {
    pub radius: f64,
    pub centers: Vec<usize>,
}

/// Greedy cover: take the lowest-index uncovered boundary cell, mark every
/// boundary cell within LQG distance `r` of it, repeat.
pub fn greedy_cover(boundary: &[usize], w: &WeightGrid, r: f64) -> Result<QuantumCover, FractalError> {
    let mut search = BoundedSearch::new(w);
    greedy_cover_with_search(boundary, w, r, &mut search)
}

pub fn greedy_cover_with_search(
    boundary: &[usize],
    w: &WeightGrid,
    r: f64,
    search: &mut BoundedSearch,
) -> Result<QuantumCover, FractalError> {
    if boundary.is_empty() {
        return Err(FractalError::EmptySet);
    }
    let mut cells = boundary.to_vec();
    cells.sort_unstable();
    cells.dedup();
    let len = w.geometry().len();
    let mut slot = vec![u32::MAX; len];
    for (i, &c) in cells.iter().enumerate() {
        slot[c] = i as u32;
    }
    let mut covered = vec![false; cells.len()];
    let mut centers = Vec::new();
    let mut next = 0;
    while next < cells.len() {
        if covered[next] {
            next += 1;
            continue;
        }
        let center = cells[next];
        centers.push(center);
        search.run(w, center, r, |c, _| {
            let s = slot[c];
            if s != u32::MAX {
                covered[s as usize] = true;
            }
        });
    }
    Ok(QuantumCover { radius: r, centers })
}

/// Independent check that every boundary cell lies within distance `r` of
/// some center.
pub fn verify_cover(boundary: &[usize], w: &WeightGrid, cover: &QuantumCover) -> Result<bool, FractalError> {
    let d = shortest_distances(w, &cover.centers, Some(cover.radius))?;
    Ok(boundary.iter().all(|&c| d.at(c) <= cover.radius))
}

/// Size of the greedy LQG `r`-cover of the boundary.
pub fn quantum_cover_count(boundary: &[usize], w: &WeightGrid, r: f64) -> Result<usize, FractalError> {
    Ok(greedy_cover(boundary, w, r)?.centers.len())
}

/// Slope of greedy cover counts against `log(1/r)`. Each cover is checked
/// post hoc.
pub fn quantum_dimension(boundary: &[usize], w: &WeightGrid, r_scales: &[f64]) -> Result<DimensionEstimate, FractalError> {
    if r_scales.len() < 3 {
        return Err(FractalError::TooFewPairs(r_scales.len()));
    }
    let mut search = BoundedSearch::new(w);
    let mut pairs = Vec::with_capacity(r_scales.len());
    for &r in r_scales {
        let cover = greedy_cover_with_search(boundary, w, r, &mut search)?;
        if !verify_cover(boundary, w, &cover)? {
            return Err(FractalError::InvalidCover(r));
        }
        pairs.push((r, cover.centers.len() as f64));
    }
    fit_dimension(&pairs)
}

/// Secondary quantum-dimension diagnostic: for each exponent `p`, the slope
/// `τ(p)` of `log Σ_boxes diam^p` against `log(1/ε)`, where the sum runs
/// over occupied dyadic boxes and `diam` is the internal LQG diameter of the
/// box. The dimension reading is the `p` where `τ` crosses zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterSumDiagnostic {
    pub ps: Vec<f64>,
    #[serde(with = "crate::stats::nan_as_null::vec")]
    pub slopes: Vec<f64>,
    pub zero_crossing: Option<f64>,
}

pub fn diameter_sum_diagnostic(
    boundary: &[usize],
    w: &WeightGrid,
    extent: &Rect,
    scales: &[f64],
    ps: &[f64],
) -> Result<DiameterSumDiagnostic, FractalError> {
    let geom = w.geometry();
    let points: Vec<Point> = boundary.iter().map(|&c| geom.point(c)).collect();
    check_scales(&points, extent, scales, geom.spacing())?;
    let n = geom.n;
    let h = geom.spacing();
    // Diameters of every occupied box, per scale.
    let mut diams_per_scale = Vec::with_capacity(scales.len());
    for &s in scales {
        let mut boxes: Vec<(i64, i64)> = points
            .iter()
            .map(|&(x, y)| (((x - extent.x0) / s).floor() as i64, ((y - extent.y0) / s).floor() as i64))
            .collect();
        boxes.sort_unstable();
        boxes.dedup();
        let mut diams = Vec::with_capacity(boxes.len());
        for (bx, by) in boxes {
            let x_lo = extent.x0 + bx as f64 * s;
            let y_lo = extent.y0 + by as f64 * s;
            let col_range = cell_range(x_lo, s, h, n);
            let row_range = cell_range(y_lo, s, h, n);
            let region: Vec<usize> = row_range
                .flat_map(|r| col_range.clone().map(move |c| r * n + c))
                .collect();
            diams.push(internal_diameter(w, &region)?.value);
        }
        diams_per_scale.push(diams);
    }
    let xs: Vec<f64> = scales.iter().map(|s| -s.ln()).collect();
    let mut slopes = Vec::with_capacity(ps.len());
    for &p in ps {
        let ys: Vec<f64> = diams_per_scale
            .iter()
            .map(|d| {
                let terms: Vec<f64> = d.iter().map(|v| v.powf(p)).collect();
                stats::pairwise_sum(&terms).ln()
            })
            .collect();
        slopes.push(stats::linear_fit(&xs, &ys).map_or(f64::NAN, |f| f.slope));
    }
    let zero_crossing = ps.windows(2).zip(slopes.windows(2)).find_map(|(p, t)| {
        (t[0] >= 0.0 && t[1] < 0.0).then(|| p[0] + (p[1] - p[0]) * t[0] / (t[0] - t[1]))
    });
    Ok(DiameterSumDiagnostic { ps: ps.to_vec(), slopes, zero_crossing })
}

/// Lattice indices whose centers fall in `[lo, lo + s)`.
fn cell_range(lo: f64, s: f64, h: f64, n: usize) -> std::ops::Range<usize> {
    let first = ((lo + 1.0) / h - 0.5).ceil().max(0.0) as usize;
    let end = (((lo + s + 1.0) / h - 0.5).ceil().max(0.0) as usize).min(n);
    first.min(n)..end
}
