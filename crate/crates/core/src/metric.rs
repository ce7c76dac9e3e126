//! Discrete γ-LQG metric: shortest paths over exponentiated-field weights.
//!
//! Each cell carries the cost `exp(ξ h)`; the edge between neighbors `u, v`
//! costs `spacing · |u - v| · mean(cost_u, cost_v)` where `|u - v|` is 1 for
//! axis steps and √2 for diagonal steps. No ε-power prefactor is applied, so
//! distances are only meaningful up to a global constant.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulas::GammaParams;
use crate::gff::{FieldGrid, RadialBump};
use crate::grid::{GridGeometry, Point};

/// Largest `|ξ h|` accepted before `exp` is considered to overflow.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("exp(xi * h) overflows at cell {cell} (xi * h = {exponent})")]
    Overflow { cell: usize, exponent: f64 },
    #[error("empty source set")]
    EmptySources,
    #[error("cell index {0} is outside the grid")]
    CellOutOfRange(usize),
    #[error("region is empty or not connected")]
    DisconnectedRegion,
    #[error("theta profile geometry: {0}")]
    Geometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    #[default]
    Eight,
    Four,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeCostRule {
    #[default]
    ArithMean,
    GeoMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricConfig {
    pub topology: Topology,
    pub edge_rule: EdgeCostRule,
}

const SQRT2: f64 = std::f64::consts::SQRT_2;
const STEPS8: [(i32, i32, f64); 8] = [
    (-1, 0, 1.0),
    (1, 0, 1.0),
    (0, -1, 1.0),
    (0, 1, 1.0),
    (-1, -1, SQRT2),
    (-1, 1, SQRT2),
    (1, -1, SQRT2),
    (1, 1, SQRT2),
];

/// Per-cell costs `exp(ξ h)` plus the rule turning them into edge lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrid {
    n: usize,
    spacing: f64,
    xi: f64,
    cell_cost: Vec<f64>,
    config: MetricConfig,
}

pub fn build_weights(f: &FieldGrid, p: &GammaParams) -> Result<WeightGrid, MetricError> {
    build_weights_with(f, p.xi(), MetricConfig::default())
}

pub fn build_weights_with(f: &FieldGrid, xi: f64, config: MetricConfig) -> Result<WeightGrid, MetricError> {
    let mut cell_cost = Vec::with_capacity(f.values().len());
    for (cell, &h) in f.values().iter().enumerate() {
        let exponent = xi * h;
        if !exponent.is_finite() || exponent.abs() > MAX_EXPONENT {
            return Err(MetricError::Overflow { cell, exponent });
        }
        cell_cost.push(exponent.exp());
    }
    Ok(WeightGrid { n: f.n(), spacing: f.spacing(), xi, cell_cost, config })
}

impl WeightGrid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn config(&self) -> MetricConfig {
        self.config
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.n)
    }

    pub fn cell_costs(&self) -> &[f64] {
        &self.cell_cost
    }

    fn steps(&self) -> &'static [(i32, i32, f64)] {
        match self.config.topology {
            Topology::Eight => &STEPS8,
            Topology::Four => &STEPS8[..4],
        }
    }

    /// Cost of the edge between two cells given the unit step length.
    #[inline]
    pub fn edge_cost(&self, u: usize, v: usize, unit_len: f64) -> f64 {
        let (a, b) = (self.cell_cost[u], self.cell_cost[v]);
        let mean = match self.config.edge_rule {
            EdgeCostRule::ArithMean => 0.5 * (a + b),
            EdgeCostRule::GeoMean => (a * b).sqrt(),
        };
        self.spacing * unit_len * mean
    }

    /// Neighbors of `u` with the connecting edge cost.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let n = self.n as i32;
        let (row, col) = ((u / self.n) as i32, (u % self.n) as i32);
        self.steps().iter().filter_map(move |&(dr, dc, len)| {
            let (r, c) = (row + dr, col + dc);
            if r < 0 || c < 0 || r >= n || c >= n {
                return None;
            }
            let v = (r * n + c) as usize;
            Some((v, self.edge_cost(u, v, len)))
        })
    }

    /// Smallest edge cost incident to `u`.
    pub fn min_incident_cost(&self, u: usize) -> f64 {
        self.neighbors(u).map(|(_, c)| c).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    idx: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, ties broken by index for determinism.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest LQG distances from a source set. Cells that were not reached
/// (beyond a cutoff, or outside a restricting mask) hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    n: usize,
    sources: Vec<usize>,
    dist: Vec<f64>,
    visited_all: bool,
}

impl DistanceField {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn dist(&self) -> &[f64] {
        &self.dist
    }

    #[inline]
    pub fn at(&self, idx: usize) -> f64 {
        self.dist[idx]
    }

    pub fn visited_all(&self) -> bool {
        self.visited_all
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.n)
    }

    pub fn max_finite(&self) -> f64 {
        self.dist.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max)
    }

    pub fn min_over(&self, cells: &[usize]) -> f64 {
        cells.iter().map(|&c| self.dist[c]).fold(f64::INFINITY, f64::min)
    }

    /// Largest violation of `|d(u) - d(v)| <= edge(u, v)` over all reached
    /// neighbor pairs, relative to the edge cost.
    pub fn max_edge_violation(&self, w: &WeightGrid) -> f64 {
        let mut worst: f64 = 0.0;
        for u in 0..self.dist.len() {
            if !self.dist[u].is_finite() {
                continue;
            }
            for (v, cost) in w.neighbors(u) {
                if self.dist[v].is_finite() {
                    let excess = (self.dist[u] - self.dist[v]).abs() - cost;
                    worst = worst.max(excess / cost);
                }
            }
        }
        worst
    }
}

fn check_sources(w: &WeightGrid, sources: &[usize]) -> Result<(), MetricError> {
    if sources.is_empty() {
        return Err(MetricError::EmptySources);
    }
    match sources.iter().find(|&&s| s >= w.cell_cost.len()) {
        Some(&bad) => Err(MetricError::CellOutOfRange(bad)),
        None => Ok(()),
    }
}

/// Dijkstra core. Writes into `dist` (which must be all `INFINITY` on
/// entry), optionally recording predecessors and touched cells.
fn dijkstra_into(
    w: &WeightGrid,
    sources: &[usize],
    cutoff: f64,
    mask: Option<&[bool]>,
    dist: &mut [f64],
    mut pred: Option<&mut [usize]>,
    mut touched: Option<&mut Vec<u32>>,
) {
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if mask.is_some_and(|m| !m[s]) || dist[s] == 0.0 {
            continue;
        }
        dist[s] = 0.0;
        if let Some(t) = touched.as_deref_mut() {
            t.push(s as u32);
        }
        heap.push(HeapItem { dist: 0.0, idx: s as u32 });
    }
    while let Some(HeapItem { dist: d, idx }) = heap.pop() {
        let u = idx as usize;
        if d > dist[u] {
            continue;
        }
        for (v, cost) in w.neighbors(u) {
            if mask.is_some_and(|m| !m[v]) {
                continue;
            }
            let nd = d + cost;
            if nd < dist[v] && nd <= cutoff {
                if dist[v].is_infinite() {
                    if let Some(t) = touched.as_deref_mut() {
                        t.push(v as u32);
                    }
                }
                dist[v] = nd;
                if let Some(p) = pred.as_deref_mut() {
                    p[v] = u;
                }
                heap.push(HeapItem { dist: nd, idx: v as u32 });
            }
        }
    }
}

/// Exact multi-source shortest distances on the grid graph. With a cutoff,
/// cells farther than it are left unreached.
pub fn shortest_distances(
    w: &WeightGrid,
    sources: &[usize],
    cutoff: Option<f64>,
) -> Result<DistanceField, MetricError> {
    shortest_distances_masked(w, sources, cutoff, None)
}

/// As [`shortest_distances`], but paths may only use cells where `mask` is
/// true (the internal metric of that region).
pub fn shortest_distances_masked(
    w: &WeightGrid,
    sources: &[usize],
    cutoff: Option<f64>,
    mask: Option<&[bool]>,
) -> Result<DistanceField, MetricError> {
    check_sources(w, sources)?;
    let mut dist = vec![f64::INFINITY; w.cell_cost.len()];
    dijkstra_into(w, sources, cutoff.unwrap_or(f64::INFINITY), mask, &mut dist, None, None);
    let visited_all = dist.iter().all(|d| d.is_finite());
    Ok(DistanceField { n: w.n, sources: sources.to_vec(), dist, visited_all })
}

/// Distances plus a shortest-path predecessor for every reached non-source
/// cell (`usize::MAX` otherwise).
pub fn shortest_distances_with_predecessors(
    w: &WeightGrid,
    sources: &[usize],
) -> Result<(DistanceField, Vec<usize>), MetricError> {
    check_sources(w, sources)?;
    let len = w.cell_cost.len();
    let mut dist = vec![f64::INFINITY; len];
    let mut pred = vec![usize::MAX; len];
    dijkstra_into(w, sources, f64::INFINITY, None, &mut dist, Some(&mut pred), None);
    let visited_all = dist.iter().all(|d| d.is_finite());
    Ok((DistanceField { n: w.n, sources: sources.to_vec(), dist, visited_all }, pred))
}

/// Reusable buffers for many small cutoff searches on one large grid; only
/// the touched cells are reset between runs.
pub struct BoundedSearch {
    dist: Vec<f64>,
    touched: Vec<u32>,
}

impl BoundedSearch {
    pub fn new(w: &WeightGrid) -> Self {
        BoundedSearch { dist: vec![f64::INFINITY; w.cell_cost.len()], touched: Vec::new() }
    }

    /// Run a search from `source` up to `cutoff`, calling `visit(cell, dist)`
    /// for every reached cell.
    pub fn run<F: FnMut(usize, f64)>(&mut self, w: &WeightGrid, source: usize, cutoff: f64, mut visit: F) {
        for &t in &self.touched {
            self.dist[t as usize] = f64::INFINITY;
        }
        self.touched.clear();
        dijkstra_into(w, &[source], cutoff, None, &mut self.dist, None, Some(&mut self.touched));
        for &t in &self.touched {
            visit(t as usize, self.dist[t as usize]);
        }
    }
}

/// Cells within LQG distance `s` of the sources, and the part of them
/// adjacent to the outside.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricBall {
    pub radius_s: f64,
    pub n: usize,
    /// `dist <= s`, row-major.
    pub mask: Vec<bool>,
    /// In-ball cells with at least one on-grid 4-neighbor outside the ball.
    pub boundary: Vec<usize>,
    /// The ball reaches the outermost ring of the grid; such a sample is
    /// truncated and unusable for dimension estimates.
    pub touches_frame: bool,
}

impl MetricBall {
    pub fn cell_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.n)
    }

    pub fn boundary_points(&self) -> Vec<Point> {
        let g = self.geometry();
        self.boundary.iter().map(|&c| g.point(c)).collect()
    }

    /// Whether some in-ball cell center lies outside `rect`.
    pub fn leaves(&self, rect: &crate::grid::Rect) -> bool {
        let g = self.geometry();
        self.mask
            .iter()
            .enumerate()
            .any(|(i, &m)| m && !rect.contains(g.point(i)))
    }
}

pub fn metric_ball(d: &DistanceField, s: f64) -> MetricBall {
    let g = d.geometry();
    let mask: Vec<bool> = d.dist.iter().map(|&x| x <= s).collect();
    let boundary = (0..mask.len())
        .filter(|&i| mask[i] && g.neighbors4(i).any(|j| !mask[j]))
        .collect();
    let touches_frame = (0..mask.len()).any(|i| mask[i] && g.on_frame(i));
    MetricBall { radius_s: s, n: d.n, mask, boundary, touches_frame }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diameter {
    pub value: f64,
    /// Set when the value came from the two-sweep heuristic, which never
    /// exceeds the true internal diameter.
    pub lower_bound: bool,
}

/// Compact copy of a region for searches that must stay inside it.
struct LocalRegion<'a> {
    w: &'a WeightGrid,
    cells: Vec<usize>,
    /// Bounding box origin and width, and map from box position to local id.
    r0: usize,
    c0: usize,
    width: usize,
    height: usize,
    local: Vec<u32>,
}

impl<'a> LocalRegion<'a> {
    fn new(w: &'a WeightGrid, region: &[usize]) -> Result<Self, MetricError> {
        if region.is_empty() {
            return Err(MetricError::DisconnectedRegion);
        }
        let n = w.n;
        let mut cells = region.to_vec();
        cells.sort_unstable();
        cells.dedup();
        if let Some(&bad) = cells.iter().find(|&&c| c >= n * n) {
            return Err(MetricError::CellOutOfRange(bad));
        }
        let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
        for &c in &cells {
            let (r, col) = (c / n, c % n);
            r0 = r0.min(r);
            r1 = r1.max(r);
            c0 = c0.min(col);
            c1 = c1.max(col);
        }
        let (width, height) = (c1 - c0 + 1, r1 - r0 + 1);
        let mut local = vec![u32::MAX; width * height];
        for (i, &c) in cells.iter().enumerate() {
            local[(c / n - r0) * width + (c % n - c0)] = i as u32;
        }
        let region = LocalRegion { w, cells, r0, c0, width, height, local };
        if !region.connected() {
            return Err(MetricError::DisconnectedRegion);
        }
        Ok(region)
    }

    fn local_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let n = self.w.n;
        let cell = self.cells[i];
        let (r, c) = ((cell / n - self.r0) as i32, (cell % n - self.c0) as i32);
        self.w.steps().iter().filter_map(move |&(dr, dc, len)| {
            let (rr, cc) = (r + dr, c + dc);
            if rr < 0 || cc < 0 || rr >= self.height as i32 || cc >= self.width as i32 {
                return None;
            }
            let j = self.local[rr as usize * self.width + cc as usize];
            (j != u32::MAX).then(|| {
                let j = j as usize;
                (j, self.w.edge_cost(cell, self.cells[j], len))
            })
        })
    }

    fn connected(&self) -> bool {
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for (j, _) in self.local_neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.cells.len()
    }

    /// Farthest local cell from `start` and its distance.
    fn farthest(&self, start: usize) -> (usize, f64) {
        let mut dist = vec![f64::INFINITY; self.cells.len()];
        let mut heap = BinaryHeap::new();
        dist[start] = 0.0;
        heap.push(HeapItem { dist: 0.0, idx: start as u32 });
        while let Some(HeapItem { dist: d, idx }) = heap.pop() {
            let u = idx as usize;
            if d > dist[u] {
                continue;
            }
            for (v, cost) in self.local_neighbors(u) {
                let nd = d + cost;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapItem { dist: nd, idx: v as u32 });
                }
            }
        }
        dist.iter()
            .enumerate()
            .fold((start, 0.0), |best, (i, &d)| if d > best.1 { (i, d) } else { best })
    }
}

/// Regions up to this size get an exact diameter from every source.
pub const EXACT_DIAMETER_MAX_CELLS: usize = 64;

/// Internal diameter of a connected region (paths restricted to the region).
/// Small regions are searched from every cell. Larger ones use the two-sweep
/// heuristic: search from the lowest-index cell to find the farthest cell
/// `a`, then report the largest distance from `a`; that value is flagged as
/// a lower bound.
pub fn internal_diameter(w: &WeightGrid, region: &[usize]) -> Result<Diameter, MetricError> {
    let local = LocalRegion::new(w, region)?;
    if local.cells.len() <= EXACT_DIAMETER_MAX_CELLS {
        let value = (0..local.cells.len()).map(|i| local.farthest(i).1).fold(0.0, f64::max);
        return Ok(Diameter { value, lower_bound: false });
    }
    let (a, _) = local.farthest(0);
    let (_, value) = local.farthest(a);
    Ok(Diameter { value, lower_bound: true })
}

/// Profile added to the field when computing `θ(x) = D_{h + xφ}(K1, K2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpProfile {
    Radial(RadialBump),
    /// Spatially constant `φ ≡ c`.
    Constant(f64),
}

impl BumpProfile {
    pub fn value(&self, p: Point) -> f64 {
        match self {
            BumpProfile::Radial(b) => b.value(p),
            BumpProfile::Constant(c) => *c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaProfile {
    pub xs: Vec<f64>,
    pub thetas: Vec<f64>,
    pub bump: BumpProfile,
    /// Distance under `h` across the plateau annulus, using plateau cells
    /// only; zero when the profile has no plateau annulus.
    pub annulus_gap: f64,
}

impl ThetaProfile {
    /// Lower bound on `θ(y) - θ(x)` for `x < y` implied by Weyl scaling on
    /// the plateau: `(1 - e^{-ξ(y-x)}) e^{ξx} · annulus_gap`.
    pub fn increment_bound(&self, xi: f64, x: f64, y: f64) -> f64 {
        (1.0 - (-xi * (y - x)).exp()) * (xi * x).exp() * self.annulus_gap
    }
}

/// Plateau cells of a radial bump and its inner/outer boundary layers.
fn plateau_layers(w: &WeightGrid, bump: &RadialBump) -> (Vec<bool>, Vec<usize>, Vec<usize>) {
    let g = w.geometry();
    let (r_in, r_out) = bump.plateau_radii();
    let rho: Vec<f64> = (0..g.len())
        .map(|i| {
            let (x, y) = g.point(i);
            (x - bump.center.0).hypot(y - bump.center.1)
        })
        .collect();
    let plateau: Vec<bool> = rho.iter().map(|&r| r >= r_in && r <= r_out).collect();
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    for i in 0..g.len() {
        if !plateau[i] {
            continue;
        }
        let nbrs: Vec<usize> = w.neighbors(i).map(|(j, _)| j).collect();
        if nbrs.iter().any(|&j| rho[j] < r_in) {
            inner.push(i);
        }
        if nbrs.iter().any(|&j| rho[j] > r_out) {
            outer.push(i);
        }
    }
    (plateau, inner, outer)
}

fn validate_separation(
    w: &WeightGrid,
    bump: &RadialBump,
    k1: &[usize],
    k2: &[usize],
) -> Result<(), MetricError> {
    let g = w.geometry();
    if bump.scale < 2.0 * w.spacing() {
        return Err(MetricError::Geometry(format!(
            "bump scale {} is below two lattice spacings; the plateau could be stepped over",
            bump.scale
        )));
    }
    if !g.disk_inside(bump.center, 3.0 * bump.scale) {
        return Err(MetricError::Geometry("plateau annulus leaves the grid".into()));
    }
    let (r_in, r_out) = bump.plateau_radii();
    let rho = |c: usize| {
        let (x, y) = g.point(c);
        (x - bump.center.0).hypot(y - bump.center.1)
    };
    if let Some(&c) = k1.iter().find(|&&c| rho(c) >= r_in) {
        return Err(MetricError::Geometry(format!("K1 cell {c} is not inside the plateau annulus")));
    }
    if let Some(&c) = k2.iter().find(|&&c| rho(c) <= r_out) {
        return Err(MetricError::Geometry(format!("K2 cell {c} is not outside the plateau annulus")));
    }
    Ok(())
}

/// Distance between two cell sets: multi-source search from `k1`, stopped
/// as soon as the nearest `k2` cell is settled.
pub fn set_distance(w: &WeightGrid, k1: &[usize], k2: &[usize]) -> Result<f64, MetricError> {
    check_sources(w, k1)?;
    check_sources(w, k2)?;
    let len = w.cell_cost.len();
    let mut target = vec![false; len];
    k2.iter().for_each(|&c| target[c] = true);
    let mut dist = vec![f64::INFINITY; len];
    let mut heap = BinaryHeap::new();
    for &s in k1 {
        dist[s] = 0.0;
        heap.push(HeapItem { dist: 0.0, idx: s as u32 });
    }
    while let Some(HeapItem { dist: d, idx }) = heap.pop() {
        let u = idx as usize;
        if d > dist[u] {
            continue;
        }
        if target[u] {
            return Ok(d);
        }
        for (v, cost) in w.neighbors(u) {
            let nd = d + cost;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem { dist: nd, idx: v as u32 });
            }
        }
    }
    Ok(f64::INFINITY)
}

/// `θ(x) = D_{h + xφ}(K1, K2)` for each `x` in `xs`.
pub fn theta_profile(
    f: &FieldGrid,
    p: &GammaParams,
    bump: &BumpProfile,
    xs: &[f64],
    k1: &[usize],
    k2: &[usize],
) -> Result<ThetaProfile, MetricError> {
    theta_profile_with(f, p.xi(), MetricConfig::default(), bump, xs, k1, k2)
}

pub fn theta_profile_with(
    f: &FieldGrid,
    xi: f64,
    config: MetricConfig,
    bump: &BumpProfile,
    xs: &[f64],
    k1: &[usize],
    k2: &[usize],
) -> Result<ThetaProfile, MetricError> {
    let base = build_weights_with(f, xi, config)?;
    check_sources(&base, k1)?;
    check_sources(&base, k2)?;
    let annulus_gap = match bump {
        BumpProfile::Radial(b) if b.scale > 0.0 => {
            validate_separation(&base, b, k1, k2)?;
            let (plateau, inner, outer) = plateau_layers(&base, b);
            if inner.is_empty() || outer.is_empty() {
                return Err(MetricError::Geometry("plateau annulus has no cells".into()));
            }
            let d = shortest_distances_masked(&base, &inner, None, Some(&plateau))?;
            d.min_over(&outer)
        }
        _ => 0.0,
    };
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let thetas = sorted
        .iter()
        .map(|&x| {
            let shifted = f.add_function(|pt| x * bump.value(pt));
            let w = build_weights_with(&shifted, xi, config)?;
            set_distance(&w, k1, k2)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(ThetaProfile { xs: sorted, thetas, bump: *bump, annulus_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulas::{DGammaModel, SQRT_8_3};
    use crate::gff::{sample_field, Normalization};

    fn params() -> GammaParams {
        GammaParams::new(SQRT_8_3, DGammaModel::ExactSqrt83).unwrap()
    }

    #[test]
    fn zero_field_weights() {
        let w = build_weights(&FieldGrid::zero(16), &params()).unwrap();
        assert!(w.cell_costs().iter().all(|&c| c == 1.0));
        let (v, c) = w.neighbors(w.geometry().index(3, 3)).next().unwrap();
        assert_eq!(v, w.geometry().index(2, 3));
        assert_eq!(c, w.spacing());
    }

    #[test]
    fn constant_field_scales_edges() {
        let p = params();
        let w0 = build_weights(&FieldGrid::zero(8), &p).unwrap();
        let w1 = build_weights(&FieldGrid::constant(8, 1.3), &p).unwrap();
        let factor = (p.xi() * 1.3).exp();
        for (a, b) in w0.neighbors(20).zip(w1.neighbors(20)) {
            assert!((b.1 - factor * a.1).abs() <= 1e-15 * b.1);
        }
    }

    #[test]
    fn min_cost_tracks_field_min() {
        let p = params();
        let f = sample_field(32, 5, Normalization::RawZeroBoundary).unwrap();
        let w = build_weights(&f, &p).unwrap();
        let min_cost = w.cell_costs().iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min_cost - (p.xi() * f.min_max().0).exp()).abs() < 1e-15);
    }

    #[test]
    fn overflow_is_an_error() {
        let f = FieldGrid::constant(8, 5000.0);
        assert!(matches!(build_weights(&f, &params()), Err(MetricError::Overflow { .. })));
    }

    #[test]
    fn straight_line_distances_on_flat_field() {
        let w = build_weights(&FieldGrid::zero(16), &params()).unwrap();
        let g = w.geometry();
        let src = g.index(8, 8);
        let d = shortest_distances(&w, &[src], None).unwrap();
        for k in 1..7 {
            let expect = k as f64 * w.spacing();
            assert!((d.at(g.index(8, 8 + k)) - expect).abs() < 1e-14);
            assert!((d.at(g.index(8 - k, 8)) - expect).abs() < 1e-14);
        }
        assert!(d.visited_all());
        assert_eq!(d.at(src), 0.0);
    }

    #[test]
    fn empty_sources_rejected() {
        let w = build_weights(&FieldGrid::zero(8), &params()).unwrap();
        assert_eq!(shortest_distances(&w, &[], None).unwrap_err(), MetricError::EmptySources);
        assert!(matches!(shortest_distances(&w, &[64], None), Err(MetricError::CellOutOfRange(64))));
    }

    #[test]
    fn cutoff_leaves_far_cells_unreached() {
        let w = build_weights(&FieldGrid::zero(16), &params()).unwrap();
        let d = shortest_distances(&w, &[0], Some(3.5 * w.spacing())).unwrap();
        assert!(!d.visited_all());
        assert!(d.at(3).is_finite() && d.at(4).is_infinite());
    }

    #[test]
    fn bounded_search_reuses_buffers() {
        let f = sample_field(32, 2, Normalization::RawZeroBoundary).unwrap();
        let w = build_weights(&f, &params()).unwrap();
        let mut search = BoundedSearch::new(&w);
        for src in [0, 100, 500] {
            let cutoff = 0.3;
            let full = shortest_distances(&w, &[src], Some(cutoff)).unwrap();
            let mut seen = vec![f64::INFINITY; w.geometry().len()];
            search.run(&w, src, cutoff, |c, d| seen[c] = d);
            assert_eq!(seen, full.dist());
        }
    }

    #[test]
    fn ball_edge_cases() {
        let w = build_weights(&FieldGrid::zero(16), &params()).unwrap();
        let src = w.geometry().index(8, 8);
        let d = shortest_distances(&w, &[src], None).unwrap();
        let tiny = metric_ball(&d, 0.5 * w.min_incident_cost(src));
        assert_eq!(tiny.cell_count(), 1);
        assert_eq!(tiny.boundary, vec![src]);
        assert!(!tiny.touches_frame);
        let all = metric_ball(&d, d.max_finite());
        assert!(all.mask.iter().all(|&m| m));
        assert!(all.touches_frame);
        assert!(all.boundary.is_empty());
    }

    #[test]
    fn diameter_simple_cases() {
        let w = build_weights(&FieldGrid::zero(16), &params()).unwrap();
        let g = w.geometry();
        assert_eq!(internal_diameter(&w, &[17]).unwrap().value, 0.0);
        let strip: Vec<usize> = (0..7).map(|k| g.index(4, 2 + k)).collect();
        let d = internal_diameter(&w, &strip).unwrap();
        assert!((d.value - 6.0 * w.spacing()).abs() < 1e-14);
        assert!(!d.lower_bound);
        let block: Vec<usize> = (0..81).map(|k| g.index(3 + k / 9, 3 + k % 9)).collect();
        let d = internal_diameter(&w, &block).unwrap();
        assert!(d.lower_bound);
        assert!((d.value - 8.0 * std::f64::consts::SQRT_2 * w.spacing()).abs() < 1e-12);
        assert_eq!(
            internal_diameter(&w, &[g.index(1, 1), g.index(5, 5)]).unwrap_err(),
            MetricError::DisconnectedRegion
        );
        assert!(internal_diameter(&w, &[]).is_err());
    }

    #[test]
    fn diagonal_neighbors_connect_under_eight_topology_only() {
        let f = FieldGrid::zero(8);
        let g = f.geometry();
        let region = [g.index(1, 1), g.index(2, 2)];
        let w8 = build_weights(&f, &params()).unwrap();
        assert!(internal_diameter(&w8, &region).is_ok());
        let cfg = MetricConfig { topology: Topology::Four, ..Default::default() };
        let w4 = build_weights_with(&f, params().xi(), cfg).unwrap();
        assert!(internal_diameter(&w4, &region).is_err());
    }

    #[test]
    fn theta_degenerate_profiles() {
        let p = params();
        let f = sample_field(64, 9, Normalization::RawZeroBoundary).unwrap();
        let g = f.geometry();
        let k1 = [g.index(32, 32)];
        let k2 = [g.index(5, 5)];
        let xs = [0.0, 0.5, 1.0, 2.0];
        let zero = BumpProfile::Radial(RadialBump::new((0.0, 0.0), 0.0));
        let t = theta_profile(&f, &p, &zero, &xs, &k1, &k2).unwrap();
        assert!(t.thetas.iter().all(|&v| v == t.thetas[0]));
        assert_eq!(t.annulus_gap, 0.0);

        let one = BumpProfile::Constant(1.0);
        let t = theta_profile(&f, &p, &one, &xs, &k1, &k2).unwrap();
        for (x, th) in t.xs.iter().zip(&t.thetas) {
            let expect = (p.xi() * x).exp() * t.thetas[0];
            assert!((th - expect).abs() <= 1e-12 * expect);
        }
    }

    #[test]
    fn theta_rejects_bad_geometry() {
        let p = params();
        let f = FieldGrid::zero(64);
        let g = f.geometry();
        let bump = BumpProfile::Radial(RadialBump::new((0.0, 0.0), 0.1));
        let inside = [g.cell_at((0.0, 0.0)).unwrap()];
        let outside = [g.cell_at((0.9, 0.9)).unwrap()];
        let on_plateau = [g.cell_at((0.25, 0.0)).unwrap()];
        assert!(theta_profile(&f, &p, &bump, &[0.0], &inside, &outside).is_ok());
        assert!(theta_profile(&f, &p, &bump, &[0.0], &on_plateau, &outside).is_err());
        assert!(theta_profile(&f, &p, &bump, &[0.0], &inside, &on_plateau).is_err());
        let thin = BumpProfile::Radial(RadialBump::new((0.0, 0.0), 0.02));
        assert!(theta_profile(&f, &p, &thin, &[0.0], &inside, &outside).is_err());
    }
}
