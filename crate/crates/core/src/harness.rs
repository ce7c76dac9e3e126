//! Reproducible experiment driver: configuration, seeding, the per-replicate
//! pipeline, ensemble aggregation, a flat-file cache and result emission.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::formulas::{
    alpha_window, euclid_boundary_dim, quantum_boundary_dim, thick_euclid_dim, AlphaWindow, DGammaModel,
    FormulaError, GammaParams, SQRT_8_3,
};
use crate::fractal::{
    diameter_sum_diagnostic, dyadic_scales, euclidean_dimension, fit_dimension, greedy_cover_with_search,
    verify_cover, DiameterSumDiagnostic, DimensionEstimate, FractalError,
};
use crate::gff::{FieldError, FieldGrid, Normalization, Sampler, MIN_N};
use crate::io::{self, EstimateSummary, IoError};
use crate::metric::{
    build_weights_with, metric_ball, shortest_distances, BoundedSearch, EdgeCostRule, MetricConfig, MetricError,
    Topology, WeightGrid,
};
use crate::stats;
use crate::thickpoints::{boundary_spectrum, SpectrumOptions, SpectrumResult, ThickError};

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "LQGSIM_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = ".lqgsim-cache";
/// Header of the ensemble spectrum table.
pub const SPECTRUM_HEADER: &str = "alpha,count,dim_est,dim_stderr,dim_pred";
pub const CAVEAT: &str = "Dimension estimates are finite-size box-counting surrogates of asymptotic Hausdorff \
dimensions; ensemble means cannot distinguish an essential supremum from an almost-sure value.";

/// SplitMix64 finalizer applied to `base ^ golden·(index+1)`; a bijection in
/// `base` for fixed `index`, used to derive per-replicate seeds.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("all {0} replicates produced truncated balls")]
    AllTruncated(usize),
    #[error("stored aggregates disagree with records: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Format(#[from] IoError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Fractal(#[from] FractalError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

impl HarnessError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) | HarnessError::Formula(_) => 2,
            HarnessError::AllTruncated(_) => 3,
            _ => 1,
        }
    }
}

/// How the ball radius `s` is chosen for each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallRadiusPolicy {
    Fixed(f64),
    /// `s = q · D(origin, grid frame)`, so the ball never reaches the frame.
    QuantileOfFrameDistance(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub gamma: f64,
    pub d_model: DGammaModel,
    pub n: usize,
    pub replicates: usize,
    pub base_seed: u64,
    pub ball_radius_policy: BallRadiusPolicy,
    /// Euclidean scale window for box counting and circle averages.
    pub scale_window: (f64, f64),
    pub alpha_bins: usize,
    pub graph_topology: Topology,
    pub edge_cost_rule: EdgeCostRule,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults at `γ = √(8/3)` for a lattice of side `n`.
    pub fn for_grid(n: usize) -> Self {
        ExperimentConfig {
            gamma: SQRT_8_3,
            d_model: DGammaModel::ExactSqrt83,
            n,
            replicates: 4,
            base_seed: 0,
            ball_radius_policy: BallRadiusPolicy::QuantileOfFrameDistance(0.25),
            scale_window: (8.0 * 2.0 / n as f64, 0.25),
            alpha_bins: crate::thickpoints::DEFAULT_ALPHA_BINS,
            graph_topology: Topology::Eight,
            edge_cost_rule: EdgeCostRule::ArithMean,
            output_dir: PathBuf::from("lqgsim-out"),
        }
    }

    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig { topology: self.graph_topology, edge_rule: self.edge_cost_rule }
    }

    /// Check every field and return the exponents it implies.
    pub fn validate(&self) -> Result<GammaParams, HarnessError> {
        let bad = |m: String| Err(HarnessError::Validation(m));
        if self.n < MIN_N {
            return bad(format!("n = {} below {MIN_N}", self.n));
        }
        if self.replicates < 1 {
            return bad("replicates must be at least 1".into());
        }
        match self.ball_radius_policy {
            BallRadiusPolicy::Fixed(s) if !(s > 0.0 && s.is_finite()) => return bad(format!("fixed radius {s}")),
            BallRadiusPolicy::QuantileOfFrameDistance(q) if !(q > 0.0 && q < 1.0) => {
                return bad(format!("quantile {q} outside (0, 1)"))
            }
            _ => {}
        }
        let spacing = 2.0 / self.n as f64;
        let (lo, hi) = self.scale_window;
        if !(lo > spacing && lo < hi && hi < 1.0) {
            return bad(format!("scale window ({lo}, {hi}) not within ({spacing}, 1)"));
        }
        if dyadic_scales(2.0, lo, hi).len() < 3 {
            return bad(format!("scale window ({lo}, {hi}) spans fewer than 3 dyadic scales"));
        }
        if self.alpha_bins == 0 {
            return bad("alpha_bins must be positive".into());
        }
        Ok(GammaParams::new(self.gamma, self.d_model)?)
    }

    /// First 8 bytes of SHA-256 over the canonical JSON of every field except
    /// `output_dir`.
    pub fn hash(&self) -> u64 {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> u64 {
    cfg.hash()
}

/// Switches that change what runs without belonging to the numerics of a
/// configuration. Runs with `zero_field` are never cached.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Replace every sampled field by `h ≡ 0`.
    pub zero_field: bool,
    /// Also compute the diameter-sum diagnostic.
    pub diameter_sum: bool,
}

/// Quantum cover radii are `s·2^{-k/2}` for these `k`, kept while the cover
/// count lies in `[MIN_COUNT, boundary/MAX_FRACTION_INV]`.
pub const QUANTUM_HALF_OCTAVES: std::ops::RangeInclusive<u32> = 2..=20;
pub const QUANTUM_MIN_COUNT: usize = 4;
pub const QUANTUM_MAX_FRACTION_INV: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub truncated: bool,
    pub frame_distance: f64,
    pub radius_s: f64,
    pub ball_cells: usize,
    pub boundary_cells: usize,
    pub euclid: Option<DimensionEstimate>,
    pub quantum: Option<DimensionEstimate>,
    pub spectrum: Option<SpectrumResult>,
    pub diameter_sum: Option<DiameterSumDiagnostic>,
    /// Why an estimate is missing.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub quantity: String,
    pub count: usize,
    #[serde(with = "crate::stats::nan_as_null")]
    pub mean: f64,
    #[serde(with = "crate::stats::nan_as_null")]
    pub stderr: f64,
}

/// Per-bin ensemble of the thick-point spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpectrum {
    pub alpha: Vec<f64>,
    pub count: Vec<usize>,
    /// Number of replicates contributing a fitted dimension to each bin.
    pub replicates: Vec<usize>,
    #[serde(with = "crate::stats::nan_as_null::vec")]
    pub dim_est: Vec<f64>,
    #[serde(with = "crate::stats::nan_as_null::vec")]
    pub dim_stderr: Vec<f64>,
    pub dim_pred: Vec<f64>,
}

impl EnsembleSpectrum {
    /// Indices of bins with fitted dimensions from at least `min_reps`
    /// replicates.
    pub fn supported(&self, min_reps: usize) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&i| self.replicates[i] >= min_reps).collect()
    }

    /// Bin center of the largest ensemble dimension among supported bins.
    pub fn peak(&self, min_reps: usize) -> Option<f64> {
        self.supported(min_reps)
            .into_iter()
            .max_by(|&a, &b| self.dim_est[a].total_cmp(&self.dim_est[b]))
            .map(|i| self.alpha[i])
    }

    /// Whether the supported part of the curve rises to a single maximum
    /// and then falls. A step against the trend counts only when it exceeds
    /// `z` combined standard errors of the two bins.
    pub fn is_unimodal(&self, min_reps: usize, z: f64) -> bool {
        let idx = self.supported(min_reps);
        let Some(top) = (0..idx.len()).max_by(|&a, &b| self.dim_est[idx[a]].total_cmp(&self.dim_est[idx[b]])) else {
            return false;
        };
        let slack = |a: usize, b: usize| z * self.dim_stderr[a].hypot(self.dim_stderr[b]);
        let rising = idx[..=top].windows(2).all(|w| self.dim_est[w[1]] >= self.dim_est[w[0]] - slack(w[0], w[1]));
        let falling = idx[top..].windows(2).all(|w| self.dim_est[w[1]] <= self.dim_est[w[0]] + slack(w[0], w[1]));
        rising && falling
    }

    /// Mean absolute deviation from the prediction over supported bins whose
    /// centers lie in the central half of the window.
    pub fn central_deviation(&self, window: AlphaWindow, min_reps: usize) -> Option<f64> {
        let quarter = window.width() / 4.0;
        let devs: Vec<f64> = self
            .supported(min_reps)
            .into_iter()
            .filter(|&i| self.alpha[i] >= window.lo + quarter && self.alpha[i] <= window.hi - quarter)
            .map(|i| (self.dim_est[i] - self.dim_pred[i]).abs())
            .collect();
        (!devs.is_empty()).then(|| stats::mean(&devs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub xi: f64,
    pub q: f64,
    pub d_gamma: f64,
    pub euclid_boundary_dim: f64,
    pub quantum_boundary_dim: f64,
    pub alpha_window: AlphaWindow,
    /// Thickness whose thick points carry the full boundary dimension.
    pub spectrum_peak: f64,
}

impl Predictions {
    pub fn of(p: &GammaParams) -> Result<Self, FormulaError> {
        Ok(Predictions {
            xi: p.xi(),
            q: p.q(),
            d_gamma: p.d_gamma(),
            euclid_boundary_dim: euclid_boundary_dim(p),
            quantum_boundary_dim: quantum_boundary_dim(p),
            alpha_window: alpha_window(p)?,
            spectrum_peak: p.xi(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub elapsed_seconds: f64,
    pub threads: usize,
    pub version: String,
    pub zero_field: bool,
    pub caveat: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub config_hash: u64,
    pub records: Vec<ReplicateRecord>,
    pub aggregates: Vec<Aggregate>,
    pub spectrum: Option<EnsembleSpectrum>,
    pub predictions: Predictions,
    pub metadata: RunMetadata,
}

impl ExperimentResult {
    pub fn aggregate(&self, quantity: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.quantity == quantity)
    }

    /// Recompute aggregates from the records and compare with the stored
    /// ones to `1e-12`.
    pub fn verify(&self) -> Result<(), HarnessError> {
        let fresh = aggregate_records(&self.records);
        if fresh.len() != self.aggregates.len() {
            return Err(HarnessError::Inconsistent("aggregate count".into()));
        }
        for (a, b) in fresh.iter().zip(&self.aggregates) {
            let same = |x: f64, y: f64| (x.is_nan() && y.is_nan()) || (x - y).abs() <= 1e-12 * x.abs().max(1.0);
            if a.quantity != b.quantity || a.count != b.count || !same(a.mean, b.mean) || !same(a.stderr, b.stderr) {
                return Err(HarnessError::Inconsistent(b.quantity.clone()));
            }
        }
        Ok(())
    }
}

/// Greedy-cover quantum dimension over the adaptive radius window.
pub fn quantum_estimate(boundary: &[usize], w: &WeightGrid, s: f64) -> Result<DimensionEstimate, FractalError> {
    let max_count = (boundary.len() / QUANTUM_MAX_FRACTION_INV).max(QUANTUM_MIN_COUNT);
    let mut search = BoundedSearch::new(w);
    let mut pairs = Vec::new();
    for k in QUANTUM_HALF_OCTAVES {
        let r = s * 2f64.powf(-(k as f64) / 2.0);
        let cover = greedy_cover_with_search(boundary, w, r, &mut search)?;
        if !verify_cover(boundary, w, &cover)? {
            return Err(FractalError::InvalidCover(r));
        }
        let count = cover.centers.len();
        if count > max_count {
            break;
        }
        if count >= QUANTUM_MIN_COUNT {
            pairs.push((r, count as f64));
        }
    }
    fit_dimension(&pairs)
}

/// Run one replicate end to end.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    p: &GammaParams,
    index: usize,
    opts: RunOptions,
) -> Result<ReplicateRecord, HarnessError> {
    let seed = mix_seed(cfg.base_seed, index as u64);
    let field = if opts.zero_field {
        FieldGrid::zero(cfg.n)
    } else {
        Sampler::calibrated(cfg.n)?.sample(seed, Normalization::RawZeroBoundary)?
    };
    run_on_field(cfg, p, index, seed, &field, opts)
}

/// The replicate pipeline on a given field.
pub fn run_on_field(
    cfg: &ExperimentConfig,
    p: &GammaParams,
    index: usize,
    seed: u64,
    field: &FieldGrid,
    opts: RunOptions,
) -> Result<ReplicateRecord, HarnessError> {
    let w = build_weights_with(field, p.xi(), cfg.metric_config())?;
    let geom = w.geometry();
    let d = shortest_distances(&w, &[geom.center_cell()], None)?;
    let frame_distance = d.min_over(&geom.frame_cells());
    let s = match cfg.ball_radius_policy {
        BallRadiusPolicy::Fixed(s) => s,
        BallRadiusPolicy::QuantileOfFrameDistance(q) => q * frame_distance,
    };
    let ball = metric_ball(&d, s);
    let mut record = ReplicateRecord {
        index,
        seed,
        truncated: ball.touches_frame,
        frame_distance,
        radius_s: s,
        ball_cells: ball.cell_count(),
        boundary_cells: ball.boundary.len(),
        euclid: None,
        quantum: None,
        spectrum: None,
        diameter_sum: None,
        notes: Vec::new(),
    };
    if ball.touches_frame {
        record.notes.push("ball touches the grid frame".into());
        return Ok(record);
    }
    let (lo, hi) = cfg.scale_window;
    let box_scales = dyadic_scales(2.0, lo, hi);
    let extent = geom.extent();
    match euclidean_dimension(geom, &ball.boundary, &extent, &box_scales) {
        Ok(e) => record.euclid = Some(e),
        Err(e) => record.notes.push(format!("euclidean: {e}")),
    }
    match quantum_estimate(&ball.boundary, &w, s) {
        Ok(e) => record.quantum = Some(e),
        Err(FractalError::TooFewPairs(k)) => record.notes.push(format!("quantum: only {k} usable radii")),
        Err(e) => return Err(e.into()),
    }
    let spec_opts = SpectrumOptions { radii: stats::geomspace(lo, hi, 6), box_scales: box_scales.clone(), bins: cfg.alpha_bins };
    match boundary_spectrum(field, p, &ball, &spec_opts) {
        Ok(sp) => record.spectrum = Some(sp),
        Err(ThickError::SmallBoundary { got, need }) => {
            record.notes.push(format!("spectrum: boundary has {got} cells, need {need}"))
        }
        Err(e) => record.notes.push(format!("spectrum: {e}")),
    }
    if opts.diameter_sum {
        let ps: Vec<f64> = (1..=24).map(|k| k as f64 * 0.25).collect();
        match diameter_sum_diagnostic(&ball.boundary, &w, &extent, &box_scales, &ps) {
            Ok(ds) => record.diameter_sum = Some(ds),
            Err(e) => record.notes.push(format!("diameter sum: {e}")),
        }
    }
    Ok(record)
}

fn summarize(quantity: &str, xs: &[f64]) -> Aggregate {
    Aggregate {
        quantity: quantity.to_string(),
        count: xs.len(),
        mean: stats::mean(xs),
        stderr: stats::stderr(xs),
    }
}

/// Means and standard errors over valid replicates, in record order.
pub fn aggregate_records(records: &[ReplicateRecord]) -> Vec<Aggregate> {
    let valid: Vec<&ReplicateRecord> = records.iter().filter(|r| !r.truncated).collect();
    let collect = |f: &dyn Fn(&ReplicateRecord) -> Option<f64>| -> Vec<f64> { valid.iter().filter_map(|r| f(r)).collect() };
    vec![
        summarize("euclid_dim", &collect(&|r| r.euclid.as_ref().map(|e| e.slope))),
        summarize("quantum_dim", &collect(&|r| r.quantum.as_ref().map(|e| e.slope))),
        summarize("radius_s", &collect(&|r| Some(r.radius_s))),
        summarize("boundary_cells", &collect(&|r| Some(r.boundary_cells as f64))),
        summarize("spectrum_peak", &collect(&|r| r.spectrum.as_ref().and_then(|s| s.peak()))),
        summarize(
            "diameter_sum_crossing",
            &collect(&|r| r.diameter_sum.as_ref().and_then(|d| d.zero_crossing)),
        ),
    ]
}

/// Combine per-replicate spectra bin by bin; bins share anchor and width.
pub fn ensemble_spectrum(records: &[ReplicateRecord], p: &GammaParams) -> Option<EnsembleSpectrum> {
    let spectra: Vec<&SpectrumResult> = records.iter().filter_map(|r| r.spectrum.as_ref()).collect();
    let first = spectra.first()?;
    let width = first.bin_width;
    let anchor = alpha_window(p).ok()?.lo;
    let key = |a: f64| ((a - anchor) / width - 0.5).round() as i64;
    let keys: Vec<i64> = spectra.iter().flat_map(|s| s.alpha_bins.iter().map(|&a| key(a))).collect();
    let (lo, hi) = (*keys.iter().min()?, *keys.iter().max()?);
    let len = (hi - lo + 1) as usize;
    let mut count = vec![0; len];
    let mut dims: Vec<Vec<f64>> = vec![Vec::new(); len];
    for s in &spectra {
        for ((&a, &c), d) in s.alpha_bins.iter().zip(&s.counts).zip(&s.bin_dims) {
            let i = (key(a) - lo) as usize;
            count[i] += c;
            if let Some(d) = d {
                dims[i].push(d.slope);
            }
        }
    }
    let alpha: Vec<f64> = (lo..=hi).map(|k| anchor + (k as f64 + 0.5) * width).collect();
    Some(EnsembleSpectrum {
        dim_pred: alpha.iter().map(|&a| thick_euclid_dim(p, a)).collect(),
        alpha,
        count,
        replicates: dims.iter().map(Vec::len).collect(),
        dim_est: dims.iter().map(|d| stats::mean(d)).collect(),
        dim_stderr: dims.iter().map(|d| stats::stderr(d)).collect(),
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    run_experiment_with(cfg, RunOptions::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentResult, HarnessError> {
    let p = cfg.validate()?;
    let start = Instant::now();
    log::info!("running {} replicates at n = {}", cfg.replicates, cfg.n);
    let records = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| run_replicate(cfg, &p, i, opts))
        .collect::<Result<Vec<_>, _>>()?;
    if records.iter().all(|r| r.truncated) {
        return Err(HarnessError::AllTruncated(records.len()));
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        aggregates: aggregate_records(&records),
        spectrum: ensemble_spectrum(&records, &p),
        predictions: Predictions::of(&p)?,
        records,
        metadata: RunMetadata {
            elapsed_seconds: start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            zero_field: opts.zero_field,
            caveat: CAVEAT.to_string(),
        },
    })
}

/// Cache directory: `$LQGSIM_CACHE_DIR` if set, else `./.lqgsim-cache`.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV).map_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR), PathBuf::from)
}

fn cache_path(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    dir.join(format!("{:016x}.json", cfg.hash()))
}

pub fn cache_lookup(cfg: &ExperimentConfig) -> Option<ExperimentResult> {
    cache_lookup_in(&cache_dir(), cfg)
}

/// Stored result for the configuration, if present and valid. Corrupt
/// entries are logged and treated as misses.
pub fn cache_lookup_in(dir: &Path, cfg: &ExperimentConfig) -> Option<ExperimentResult> {
    let path = cache_path(dir, cfg);
    let text = fs::read_to_string(&path).ok()?;
    let parsed = serde_json::from_str::<ExperimentResult>(&text)
        .map_err(HarnessError::from)
        .and_then(|r| r.verify().map(|_| r));
    match parsed {
        Ok(r) if r.config_hash == cfg.hash() && !r.metadata.zero_field => Some(r),
        Ok(_) => {
            log::warn!("cache entry {} does not match its key; ignoring", path.display());
            None
        }
        Err(e) => {
            log::warn!("corrupt cache entry {}: {e}; ignoring", path.display());
            None
        }
    }
}

pub fn cache_store(result: &ExperimentResult) -> Result<PathBuf, HarnessError> {
    cache_store_in(&cache_dir(), result)
}

pub fn cache_store_in(dir: &Path, result: &ExperimentResult) -> Result<PathBuf, HarnessError> {
    if result.metadata.zero_field {
        return Err(HarnessError::Validation("debug zero-field runs are not cached".into()));
    }
    fs::create_dir_all(dir)?;
    let path = cache_path(dir, &result.config);
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string(result)?)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutputFormat {
    /// `summary.json`.
    Json,
    /// `replicates.csv`, `spectrum.csv` and per-estimate tables.
    Csv,
    /// Two-column plot files under `plot/`.
    Plot,
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn nan_blank(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

/// Write the requested formats into `config.output_dir`; returns the files
/// written.
pub fn emit(result: &ExperimentResult, formats: &[OutputFormat]) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = &result.config.output_dir;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    for format in formats {
        match format {
            OutputFormat::Json => {
                let path = dir.join("summary.json");
                fs::write(&path, serde_json::to_string_pretty(result)?)?;
                written.push(path);
            }
            OutputFormat::Csv => {
                let path = dir.join("replicates.csv");
                let mut text = String::from(
                    "index,seed,truncated,radius_s,boundary_cells,euclid_dim,euclid_stderr,quantum_dim,quantum_stderr\n",
                );
                for r in &result.records {
                    text.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{}\n",
                        r.index,
                        r.seed,
                        r.truncated,
                        r.radius_s,
                        r.boundary_cells,
                        opt(r.euclid.as_ref().map(|e| e.slope)),
                        opt(r.euclid.as_ref().map(|e| e.slope_stderr)),
                        opt(r.quantum.as_ref().map(|e| e.slope)),
                        opt(r.quantum.as_ref().map(|e| e.slope_stderr)),
                    ));
                }
                fs::write(&path, text)?;
                written.push(path);
                let path = dir.join("spectrum.csv");
                let mut text = format!("{SPECTRUM_HEADER}\n");
                if let Some(s) = &result.spectrum {
                    for i in 0..s.alpha.len() {
                        text.push_str(&format!(
                            "{},{},{},{},{}\n",
                            s.alpha[i],
                            s.count[i],
                            nan_blank(s.dim_est[i]),
                            nan_blank(s.dim_stderr[i]),
                            s.dim_pred[i]
                        ));
                    }
                }
                fs::write(&path, text)?;
                written.push(path);
                for r in &result.records {
                    for (name, est) in [("euclid", &r.euclid), ("quantum", &r.quantum)] {
                        if let Some(est) = est {
                            let path = dir.join(format!("rep{:03}_{name}.csv", r.index));
                            io::write_estimate_csv(est, fs::File::create(&path)?)?;
                            written.push(path);
                            let path = dir.join(format!("rep{:03}_{name}.json", r.index));
                            fs::write(&path, serde_json::to_string_pretty(&EstimateSummary::of(est))?)?;
                            written.push(path);
                        }
                    }
                }
            }
            OutputFormat::Plot => {
                let plot = dir.join("plot");
                fs::create_dir_all(&plot)?;
                if let Some(s) = &result.spectrum {
                    let est: Vec<(f64, f64)> = s
                        .alpha
                        .iter()
                        .zip(&s.dim_est)
                        .filter(|(_, d)| d.is_finite())
                        .map(|(&a, &d)| (a, d))
                        .collect();
                    let pred: Vec<(f64, f64)> = s.alpha.iter().cloned().zip(s.dim_pred.iter().cloned()).collect();
                    for (name, xy) in [("spectrum_est.dat", est), ("spectrum_pred.dat", pred)] {
                        let path = plot.join(name);
                        io::write_plot_data(&xy, fs::File::create(&path)?)?;
                        written.push(path);
                    }
                }
                for r in &result.records {
                    for (name, est) in [("euclid", &r.euclid), ("quantum", &r.quantum)] {
                        if let Some(est) = est {
                            let xy: Vec<(f64, f64)> = est.rows().iter().map(|row| (-row[2], row[3])).collect();
                            let path = plot.join(format!("rep{:03}_{name}.dat", r.index));
                            io::write_plot_data(&xy, fs::File::create(&path)?)?;
                            written.push(path);
                        }
                    }
                }
            }
        }
    }
    Ok(written)
}

/// Load a summary written by [`emit`] and check its aggregates.
pub fn load_summary(path: &Path) -> Result<ExperimentResult, HarnessError> {
    let result: ExperimentResult = serde_json::from_str(&fs::read_to_string(path)?)?;
    result.verify()?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_seed_is_injective_on_small_range() {
        let mut seeds: Vec<u64> = (0..10_000).map(|i| mix_seed(42, i)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(mix_seed(0, 0), mix_seed(1, 0));
    }

    #[test]
    fn validation() {
        let good = ExperimentConfig::for_grid(256);
        assert!(good.validate().is_ok());
        let mut c = good.clone();
        c.replicates = 0;
        assert!(matches!(c.validate(), Err(HarnessError::Validation(_))));
        let mut c = good.clone();
        c.ball_radius_policy = BallRadiusPolicy::QuantileOfFrameDistance(1.0);
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.scale_window = (0.005, 0.25);
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.gamma = 2.5;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::for_grid(64);
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.base_seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn config_json_is_strict() {
        let c = ExperimentConfig::for_grid(64);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
        assert!(text.contains("\"quantile_of_frame_distance\":0.25"));
        let extra = text.replacen('{', "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<ExperimentConfig>(&extra).is_err());
    }

    #[test]
    fn flat_baseline_dimensions_are_one() {
        let mut cfg = ExperimentConfig::for_grid(256);
        cfg.replicates = 1;
        cfg.ball_radius_policy = BallRadiusPolicy::QuantileOfFrameDistance(0.5);
        cfg.scale_window = (4.0 * cfg.scale_window.0 / 8.0, 0.25);
        let res = run_experiment_with(&cfg, RunOptions { zero_field: true, diameter_sum: false }).unwrap();
        let r = &res.records[0];
        assert!(!r.truncated);
        let e = r.euclid.as_ref().unwrap().slope;
        let q = r.quantum.as_ref().unwrap().slope;
        assert!((e - 1.0).abs() < 0.15, "euclid {e}");
        assert!((q - 1.0).abs() < 0.15, "quantum {q}");
        assert!(res.metadata.zero_field);
        res.verify().unwrap();
    }

    #[test]
    fn all_truncated_is_reported() {
        let mut cfg = ExperimentConfig::for_grid(32);
        cfg.replicates = 2;
        cfg.scale_window = (0.0625 * 1.01, 0.5);
        cfg.ball_radius_policy = BallRadiusPolicy::Fixed(1e6);
        let err = run_experiment(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    fn spectrum(dims: &[f64], se: &[f64]) -> EnsembleSpectrum {
        let k = dims.len();
        EnsembleSpectrum {
            alpha: (0..k).map(|i| i as f64 * 0.1).collect(),
            count: vec![100; k],
            replicates: vec![5; k],
            dim_est: dims.to_vec(),
            dim_stderr: se.to_vec(),
            dim_pred: vec![0.0; k],
        }
    }

    #[test]
    fn unimodality_respects_standard_errors() {
        let s = spectrum(&[0.2, 0.5, 0.45, 0.8, 0.3], &[0.01; 5]);
        assert!(!s.is_unimodal(5, 2.0));
        let s = spectrum(&[0.2, 0.5, 0.45, 0.8, 0.3], &[0.05; 5]);
        assert!(s.is_unimodal(5, 2.0));
        assert!((s.peak(5).unwrap() - 0.3).abs() < 1e-12);
        assert!(!s.is_unimodal(6, 2.0));
        assert_eq!(s.peak(6), None);
    }
}
