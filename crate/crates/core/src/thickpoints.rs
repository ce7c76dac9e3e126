//! Thick-point classification and the boundary thick-point spectrum.
//!
//! Two finite-scale surrogates for the thickness `α` of a point `z`:
//! * circle thickness: least-squares slope of `h_r(z)` against `log(1/r)`;
//! * metric thickness: slope `m` of `log diam(B_r(z))` against `log r`,
//!   read as `α = Q - (m + shift)/ξ` after a recentering `shift` that makes
//!   typical points read the slope `ξQ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulas::{alpha_window, FormulaError, GammaParams};
use crate::fractal::{dyadic_scales, fit_dimension, DimensionEstimate, FractalError};
use crate::gff::{FieldError, FieldGrid};
use crate::grid::GridGeometry;
use crate::metric::{internal_diameter, DistanceField, MetricBall, MetricError, WeightGrid};
use crate::stats;

/// Fewest boundary cells for a spectrum.
pub const MIN_BOUNDARY_CELLS: usize = 100;
/// Fewest cells in a bin before a dimension is fitted.
pub const MIN_BIN_CELLS: usize = 20;
/// Default number of bins across the admissible α window.
pub const DEFAULT_ALPHA_BINS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThickError {
    #[error("need at least 3 radii, got {0}")]
    TooFewRadii(usize),
    #[error("radius {r} below minimum {min}")]
    RadiusTooSmall { r: f64, min: f64 },
    #[error("ball of radius {r} around cell {cell} leaves the grid")]
    BallLeavesGrid { cell: usize, r: f64 },
    #[error("metric ball touches the grid frame")]
    TruncatedBall,
    #[error("ball boundary has {got} cells, need {need}")]
    SmallBoundary { got: usize, need: usize },
    #[error("no typical points supplied")]
    NoTypicalPoints,
    #[error("bin count must be positive")]
    NoBins,
    #[error("degenerate regression at cell {0}")]
    Degenerate(usize),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Fractal(#[from] FractalError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// Thickness readings at one cell. A reading is `None` when that surrogate
/// was not computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub cell: usize,
    pub alpha_circle: Option<f64>,
    pub alpha_metric: Option<f64>,
    /// Raw slope of `log diam` against `log r` before recentering.
    pub metric_slope_raw: Option<f64>,
    pub n_scales: usize,
}

fn check_radii(radii: &[f64], min: f64) -> Result<(), ThickError> {
    if radii.len() < 3 {
        return Err(ThickError::TooFewRadii(radii.len()));
    }
    match radii.iter().find(|&&r| !(r >= min)) {
        Some(&r) => Err(ThickError::RadiusTooSmall { r, min }),
        None => Ok(()),
    }
}

/// Circle-average slope of `h_r(z)` against `log(1/r)` at one cell.
pub fn circle_alpha(f: &FieldGrid, cell: usize, radii: &[f64]) -> Result<f64, ThickError> {
    let z = f.geometry().point(cell);
    let xs: Vec<f64> = radii.iter().map(|r| -r.ln()).collect();
    let ys = radii
        .iter()
        .map(|&r| f.circle_average(z, r))
        .collect::<Result<Vec<f64>, _>>()?;
    stats::linear_fit(&xs, &ys)
        .map(|fit| fit.slope)
        .ok_or(ThickError::Degenerate(cell))
}

/// Circle thickness of each cell.
pub fn classify_alpha(f: &FieldGrid, points: &[usize], radii: &[f64]) -> Result<Vec<AlphaEstimate>, ThickError> {
    check_radii(radii, 2.0 * f.spacing())?;
    points
        .iter()
        .map(|&cell| {
            Ok(AlphaEstimate {
                cell,
                alpha_circle: Some(circle_alpha(f, cell, radii)?),
                alpha_metric: None,
                metric_slope_raw: None,
                n_scales: radii.len(),
            })
        })
        .collect()
}

/// Affine correction applied to log-diameters: the recentered value of
/// `log diam(B_r)` is `log diam + slope_shift·log r + log_offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recentering {
    pub slope_shift: f64,
    pub log_offset: f64,
}

impl Recentering {
    pub const NONE: Recentering = Recentering { slope_shift: 0.0, log_offset: 0.0 };

    /// Choose the shift so that the median slope and intercept over
    /// `typical` read `ξQ` and 0.
    pub fn estimate(w: &WeightGrid, p: &GammaParams, typical: &[usize], radii: &[f64]) -> Result<Self, ThickError> {
        if typical.is_empty() {
            return Err(ThickError::NoTypicalPoints);
        }
        let mut slopes = Vec::with_capacity(typical.len());
        let mut intercepts = Vec::with_capacity(typical.len());
        for &cell in typical {
            let (m, b) = log_diameter_fit(w, cell, radii)?;
            slopes.push(m);
            intercepts.push(b);
        }
        Ok(Recentering {
            slope_shift: p.xi() * p.q() - stats::median(&slopes),
            log_offset: -stats::median(&intercepts),
        })
    }

    pub fn apply(&self, log_diam: f64, r: f64) -> f64 {
        log_diam + self.slope_shift * r.ln() + self.log_offset
    }
}

/// Internal LQG diameter of the Euclidean disk of radius `r` at a cell.
pub fn ball_diameter(w: &WeightGrid, cell: usize, r: f64) -> Result<f64, ThickError> {
    let geom = w.geometry();
    let z = geom.point(cell);
    if !geom.disk_inside(z, r) {
        return Err(ThickError::BallLeavesGrid { cell, r });
    }
    Ok(internal_diameter(w, &geom.disk_cells(z, r))?.value)
}

/// Slope and intercept of `log diam(B_r(z))` against `log r`.
fn log_diameter_fit(w: &WeightGrid, cell: usize, radii: &[f64]) -> Result<(f64, f64), ThickError> {
    check_radii(radii, 4.0 * w.spacing())?;
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys = radii
        .iter()
        .map(|&r| ball_diameter(w, cell, r).map(f64::ln))
        .collect::<Result<Vec<f64>, _>>()?;
    let fit = stats::linear_fit(&xs, &ys).ok_or(ThickError::Degenerate(cell))?;
    Ok((fit.slope, fit.intercept))
}

/// Metric thickness of each cell, `Q - (m + shift)/ξ`.
pub fn classify_metric_alpha(
    w: &WeightGrid,
    p: &GammaParams,
    points: &[usize],
    radii: &[f64],
    recentering: Recentering,
) -> Result<Vec<AlphaEstimate>, ThickError> {
    check_radii(radii, 4.0 * w.spacing())?;
    points
        .iter()
        .map(|&cell| {
            let (m, _) = log_diameter_fit(w, cell, radii)?;
            Ok(AlphaEstimate {
                cell,
                alpha_circle: None,
                alpha_metric: Some(p.q() - (m + recentering.slope_shift) / p.xi()),
                metric_slope_raw: Some(m),
                n_scales: radii.len(),
            })
        })
        .collect()
}

/// `count` distinct cells drawn uniformly from those whose centers lie in
/// the measurement window.
pub fn typical_points(geom: GridGeometry, count: usize, seed: u64) -> Vec<usize> {
    let window = geom.window();
    let pool: Vec<usize> = (0..geom.len()).filter(|&c| window.contains(geom.point(c))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(count.min(pool.len()));
    let mut pool = pool;
    while picked.len() < count && !pool.is_empty() {
        let i = rng.random_range(0..pool.len());
        picked.push(pool.swap_remove(i));
    }
    picked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    /// Radii for the circle-thickness regression.
    pub radii: Vec<f64>,
    /// Box-counting scales for the per-bin dimensions.
    pub box_scales: Vec<f64>,
    /// Number of bins spanning the admissible α window.
    pub bins: usize,
}

impl SpectrumOptions {
    /// Radii and box scales log-spread over `[lo, hi]`.
    pub fn from_window(lo: f64, hi: f64, bins: usize) -> Self {
        SpectrumOptions {
            radii: stats::geomspace(lo, hi, 6),
            box_scales: dyadic_scales(2.0, lo, hi),
            bins,
        }
    }
}

/// Boundary cells grouped by circle thickness, with a box-counting dimension
/// for every bin holding at least [`MIN_BIN_CELLS`] cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub alpha_bins: Vec<f64>,
    pub bin_width: f64,
    pub bin_dims: Vec<Option<DimensionEstimate>>,
    pub counts: Vec<usize>,
    /// Boundary cells whose largest circle left the grid.
    pub unclassified: usize,
}

impl SpectrumResult {
    /// Center of the bin with the largest fitted dimension.
    pub fn peak(&self) -> Option<f64> {
        self.alpha_bins
            .iter()
            .zip(&self.bin_dims)
            .filter_map(|(&a, d)| d.as_ref().map(|d| (a, d.slope)))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(a, _)| a)
    }

    pub fn classified(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Bin `α` values into bins of width `width` anchored at `anchor`; returns
/// the bin centers and members of every bin between the extreme occupied
/// ones.
pub fn bin_alphas(values: &[(usize, f64)], anchor: f64, width: f64) -> (Vec<f64>, Vec<Vec<usize>>) {
    let keys: Vec<i64> = values.iter().map(|&(_, a)| ((a - anchor) / width).floor() as i64).collect();
    let (Some(&lo), Some(&hi)) = (keys.iter().min(), keys.iter().max()) else {
        return (Vec::new(), Vec::new());
    };
    let mut members = vec![Vec::new(); (hi - lo + 1) as usize];
    for (&(cell, _), &k) in values.iter().zip(&keys) {
        members[(k - lo) as usize].push(cell);
    }
    let centers = (lo..=hi).map(|k| anchor + (k as f64 + 0.5) * width).collect();
    (centers, members)
}

pub fn boundary_spectrum(
    f: &FieldGrid,
    p: &GammaParams,
    ball: &MetricBall,
    opts: &SpectrumOptions,
) -> Result<SpectrumResult, ThickError> {
    if ball.touches_frame {
        return Err(ThickError::TruncatedBall);
    }
    if ball.boundary.len() < MIN_BOUNDARY_CELLS {
        return Err(ThickError::SmallBoundary { got: ball.boundary.len(), need: MIN_BOUNDARY_CELLS });
    }
    if opts.bins == 0 {
        return Err(ThickError::NoBins);
    }
    check_radii(&opts.radii, 2.0 * f.spacing())?;
    let geom = f.geometry();
    let r_max = opts.radii.iter().cloned().fold(0.0, f64::max);
    let mut values = Vec::with_capacity(ball.boundary.len());
    let mut unclassified = 0;
    for &cell in &ball.boundary {
        if !geom.disk_inside(geom.point(cell), r_max) {
            unclassified += 1;
            continue;
        }
        values.push((cell, circle_alpha(f, cell, &opts.radii)?));
    }
    let window = alpha_window(p)?;
    let width = window.width() / opts.bins as f64;
    let (alpha_bins, members) = bin_alphas(&values, window.lo, width);
    let extent = geom.extent();
    let mut bin_dims = Vec::with_capacity(members.len());
    for cells in &members {
        bin_dims.push(if cells.len() >= MIN_BIN_CELLS {
            let points: Vec<_> = cells.iter().map(|&c| geom.point(c)).collect();
            let pairs: Vec<(f64, f64)> = crate::fractal::box_count(&points, &extent, &opts.box_scales)?
                .into_iter()
                .map(|(s, c)| (s, c as f64))
                .collect();
            fit_dimension(&pairs).ok()
        } else {
            None
        });
    }
    Ok(SpectrumResult {
        alpha_bins,
        bin_width: width,
        counts: members.iter().map(Vec::len).collect(),
        bin_dims,
        unclassified,
    })
}

/// Whether both brackets of the one-point event hold at `z`: the distance
/// from the source lies within `ε^{ξ(Q-α)-ζ}` of `s`, and the recentered
/// internal diameter of `B_ε(z)` lies in `[ε^{ξ(Q-α)+ζ}, ε^{ξ(Q-α)-ζ}]`.
#[allow(clippy::too_many_arguments)]
pub fn one_point_event(
    d: &DistanceField,
    w: &WeightGrid,
    p: &GammaParams,
    recentering: Recentering,
    z: usize,
    eps: f64,
    alpha: f64,
    zeta: f64,
    s: f64,
) -> Result<bool, ThickError> {
    let diam = ball_diameter(w, z, eps)?;
    Ok(one_point_brackets(d.at(z), recentering.apply(diam.ln(), eps), p, eps, alpha, zeta, s))
}

/// The two bracket tests of [`one_point_event`] on precomputed values.
pub fn one_point_brackets(dist: f64, log_diam: f64, p: &GammaParams, eps: f64, alpha: f64, zeta: f64, s: f64) -> bool {
    let e = p.xi() * (p.q() - alpha);
    let le = eps.ln();
    let near = (dist - s).abs() <= eps.powf(e - zeta);
    let thick = log_diam >= (e + zeta) * le && log_diam <= (e - zeta) * le;
    near && thick
}
