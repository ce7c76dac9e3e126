//! Slow, exact reference implementations used to validate the fast paths.
//!
//! Nothing here calls into the shortest-path, sampling or box-counting code
//! it checks; each oracle recomputes from first principles.

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Point, Rect};
use crate::metric::{EdgeCostRule, Topology, WeightGrid};

/// Largest subgrid side for [`floyd_warshall`].
pub const MAX_FW_SIDE: usize = 8;
/// Largest lattice side for [`dense_green`].
pub const MAX_GREEN_N: usize = 24;
/// Largest point set for [`exhaustive_box_count`].
pub const MAX_BOX_POINTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("size {got} exceeds oracle cap {cap}")]
    TooLarge { got: usize, cap: usize },
    #[error("subgrid at ({row}, {col}) of side {m} leaves the {n}×{n} grid")]
    OutOfGrid { row: usize, col: usize, m: usize, n: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("scale must be positive")]
    BadScale,
}

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix { n, entries: vec![0.0; n * n] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.n + j] = v;
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.entries
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// All-pairs shortest paths on the `m × m` subgrid with lower-left cell
/// `(row, col)`, using only subgrid cells. Indices in the result are local
/// and row-major.
pub fn floyd_warshall(w: &WeightGrid, origin: (usize, usize), m: usize) -> Result<DenseMatrix, OracleError> {
    if m > MAX_FW_SIDE {
        return Err(OracleError::TooLarge { got: m, cap: MAX_FW_SIDE });
    }
    let n = w.n();
    let (row0, col0) = origin;
    if row0 + m > n || col0 + m > n {
        return Err(OracleError::OutOfGrid { row: row0, col: col0, m, n });
    }
    let cost = w.cell_costs();
    let h = w.spacing();
    let rule = w.config().edge_rule;
    let diagonals = w.config().topology == Topology::Eight;
    let k = m * m;
    let mut d = DenseMatrix::zeros(k);
    d.entries.iter_mut().for_each(|e| *e = f64::INFINITY);
    for i in 0..k {
        d.set(i, i, 0.0);
    }
    for i in 0..k {
        let (ri, ci) = (i / m, i % m);
        for j in 0..k {
            let (rj, cj) = (j / m, j % m);
            let dr = ri.abs_diff(rj);
            let dc = ci.abs_diff(cj);
            let len = match (dr, dc) {
                (0, 1) | (1, 0) => 1.0,
                (1, 1) if diagonals => std::f64::consts::SQRT_2,
                _ => continue,
            };
            let a = cost[(row0 + ri) * n + col0 + ci];
            let b = cost[(row0 + rj) * n + col0 + cj];
            let mean = match rule {
                EdgeCostRule::ArithMean => 0.5 * (a + b),
                EdgeCostRule::GeoMean => (a * b).sqrt(),
            };
            d.set(i, j, h * len * mean);
        }
    }
    for via in 0..k {
        for i in 0..k {
            let div = d.get(i, via);
            if div.is_infinite() {
                continue;
            }
            for j in 0..k {
                let cand = div + d.get(via, j);
                if cand < d.get(i, j) {
                    d.set(i, j, cand);
                }
            }
        }
    }
    Ok(d)
}

/// Dirichlet Laplacian `4I - A` of the `n × n` lattice (4-neighbor).
pub fn grid_laplacian(n: usize) -> DenseMatrix {
    let k = n * n;
    let mut l = DenseMatrix::zeros(k);
    for i in 0..k {
        l.set(i, i, 4.0);
        let (r, c) = (i / n, i % n);
        if c + 1 < n {
            l.set(i, i + 1, -1.0);
            l.set(i + 1, i, -1.0);
        }
        if r + 1 < n {
            l.set(i, i + n, -1.0);
            l.set(i + n, i, -1.0);
        }
    }
    l
}

/// Dirichlet Laplacian `tridiag(-1, 2, -1)` of a path with `k` interior nodes.
pub fn path_laplacian(k: usize) -> DenseMatrix {
    let mut l = DenseMatrix::zeros(k);
    for i in 0..k {
        l.set(i, i, 2.0);
        if i + 1 < k {
            l.set(i, i + 1, -1.0);
            l.set(i + 1, i, -1.0);
        }
    }
    l
}

/// Inverse of a symmetric positive-definite matrix through Cholesky.
pub fn invert_spd(a: &DenseMatrix) -> Result<DenseMatrix, OracleError> {
    let m = DMatrix::from_row_slice(a.n, a.n, &a.entries);
    let chol = Cholesky::new(m).ok_or(OracleError::NotPositiveDefinite)?;
    let inv = chol.inverse();
    let mut out = DenseMatrix::zeros(a.n);
    for i in 0..a.n {
        for j in 0..a.n {
            out.set(i, j, inv[(i, j)]);
        }
    }
    Ok(out)
}

/// Green's function of the zero-boundary lattice: the inverse of
/// [`grid_laplacian`], indexed row-major like a field.
pub fn dense_green(n: usize) -> Result<DenseMatrix, OracleError> {
    if n > MAX_GREEN_N {
        return Err(OracleError::TooLarge { got: n, cap: MAX_GREEN_N });
    }
    invert_spd(&grid_laplacian(n))
}

/// Occupied closed boxes of side `scale`, found by testing every box of the
/// partition anchored at the extent's lower-left corner against every point.
pub fn exhaustive_box_count(points: &[Point], scale: f64, extent: &Rect) -> Result<u64, OracleError> {
    if points.len() > MAX_BOX_POINTS {
        return Err(OracleError::TooLarge { got: points.len(), cap: MAX_BOX_POINTS });
    }
    if !(scale > 0.0) {
        return Err(OracleError::BadScale);
    }
    let nx = ((extent.x1 - extent.x0) / scale).ceil() as usize;
    let ny = ((extent.y1 - extent.y0) / scale).ceil() as usize;
    let mut count = 0;
    for i in 0..nx {
        let (xa, xb) = (extent.x0 + i as f64 * scale, extent.x0 + (i + 1) as f64 * scale);
        for j in 0..ny {
            let (ya, yb) = (extent.y0 + j as f64 * scale, extent.y0 + (j + 1) as f64 * scale);
            if points.iter().any(|&(x, y)| x >= xa && x <= xb && y >= ya && y <= yb) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Outcome of one named cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CrossCheck {
    CrossCheck { name: name.to_string(), passed, detail }
}

/// Random 6×6 fields: Dijkstra from every source against Floyd–Warshall.
pub fn check_dijkstra(instances: usize, seed: u64) -> CrossCheck {
    use crate::gff::FieldGrid;
    use crate::metric::{build_weights_with, shortest_distances, MetricConfig};
    let m = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for inst in 0..instances {
        let values: Vec<f64> = (0..m * m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let f = FieldGrid::from_values(m, values).expect("finite");
        let config = MetricConfig {
            topology: if inst % 5 == 4 { Topology::Four } else { Topology::Eight },
            edge_rule: if inst % 2 == 0 { EdgeCostRule::ArithMean } else { EdgeCostRule::GeoMean },
        };
        let w = build_weights_with(&f, rng.random_range(0.2..1.0), config).expect("small field");
        let fw = floyd_warshall(&w, (0, 0), m).expect("6 ≤ cap");
        for src in 0..m * m {
            let d = shortest_distances(&w, &[src], None).expect("valid source");
            for dst in 0..m * m {
                let (a, b) = (d.at(dst), fw.get(src, dst));
                let rel = if a == b { 0.0 } else { (a - b).abs() / b.abs() };
                worst = worst.max(rel);
            }
        }
    }
    check(
        "dijkstra_vs_floyd_warshall",
        worst <= 1e-12,
        format!("{instances} instances, worst relative error {worst:.3e}"),
    )
}

/// Sampler covariance against the dense Green's function.
pub fn check_covariance(n: usize) -> CrossCheck {
    let cov = crate::gff::Sampler::raw(n).and_then(|s| s.analytic_covariance());
    let green = dense_green(n);
    match (cov, green) {
        (Ok(cov), Ok(g)) => {
            let diff = g.max_abs_diff(&cov);
            check("sampler_covariance_vs_green", diff <= 1e-8, format!("n = {n}, max abs diff {diff:.3e}"))
        }
        (c, g) => check("sampler_covariance_vs_green", false, format!("{:?} / {:?}", c.err(), g.err())),
    }
}

/// Random point sets: fast box counts against the exhaustive count.
pub fn check_box_counts(sets: usize, seed: u64) -> CrossCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = Rect::square(-1.0, -1.0, 2.0);
    let scales: Vec<f64> = (1..=8).map(|k| 2.0 / 2f64.powi(k)).collect();
    let mut mismatches = 0;
    for set in 0..sets {
        let count = rng.random_range(1..=1000);
        let points: Vec<Point> = if set % 2 == 0 {
            (0..count).map(|_| (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))).collect()
        } else {
            // Points on the dyadic lattice exercise the closed-edge rule.
            (0..count)
                .map(|_| (rng.random_range(0..=64) as f64 / 32.0 - 1.0, rng.random_range(0..=64) as f64 / 32.0 - 1.0))
                .collect()
        };
        let fast = crate::fractal::box_count(&points, &extent, &scales).expect("valid input");
        for &(s, c) in &fast {
            if exhaustive_box_count(&points, s, &extent).expect("≤ cap") != c {
                mismatches += 1;
            }
        }
    }
    check("box_count_vs_exhaustive", mismatches == 0, format!("{sets} sets, {mismatches} mismatches"))
}

/// Two-sweep internal diameters on small square regions against the exact
/// all-pairs maximum.
pub fn check_diameters(instances: usize, seed: u64) -> CrossCheck {
    use crate::gff::FieldGrid;
    use crate::metric::{build_weights_with, internal_diameter, MetricConfig};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 1.0f64;
    for _ in 0..instances {
        let n = 8;
        let values: Vec<f64> = (0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let w = build_weights_with(&FieldGrid::from_values(n, values).expect("finite"), 0.5, MetricConfig::default())
            .expect("small field");
        let m = rng.random_range(2..=3);
        let (r0, c0) = (rng.random_range(0..=n - m), rng.random_range(0..=n - m));
        let region: Vec<usize> = (0..m * m).map(|i| (r0 + i / m) * n + c0 + i % m).collect();
        let exact = floyd_warshall(&w, (r0, c0), m).expect("small").entries.iter().cloned().fold(0.0, f64::max);
        let approx = internal_diameter(&w, &region).expect("connected").value;
        if approx > exact * (1.0 + 1e-12) {
            worst = f64::INFINITY;
        } else {
            worst = worst.min(approx / exact);
        }
    }
    check(
        "internal_diameter_vs_all_pairs",
        worst >= 0.9 && worst.is_finite(),
        format!("{instances} regions, worst two-sweep/exact ratio {worst:.6}"),
    )
}

/// The full suite run by the `oracle-check` command.
pub fn run_cross_checks(seed: u64) -> Vec<CrossCheck> {
    vec![
        check_dijkstra(100, seed),
        check_covariance(16),
        check_box_counts(40, seed ^ 1),
        check_diameters(100, seed ^ 2),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gff::FieldGrid;
    use crate::metric::build_weights_with;

    #[test]
    fn path_green_by_hand() {
        let g = invert_spd(&path_laplacian(3)).unwrap();
        let expect = [3.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 3.0];
        for (a, b) in g.entries.iter().zip(expect) {
            assert!((a - b / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn green_is_symmetric_and_peaks_in_the_middle() {
        let n = 9;
        let g = dense_green(n).unwrap();
        assert!(g.max_asymmetry() < 1e-10);
        let centre = 4 * n + 4;
        let diag: Vec<f64> = (0..n * n).map(|i| g.get(i, i)).collect();
        assert!(diag.iter().all(|&d| d <= diag[centre]));
        assert_eq!(dense_green(25).unwrap_err(), OracleError::TooLarge { got: 25, cap: 24 });
    }

    #[test]
    fn uniform_two_by_two() {
        let w = build_weights_with(&FieldGrid::zero(2), 0.5, Default::default()).unwrap();
        let d = floyd_warshall(&w, (0, 0), 2).unwrap();
        let h = w.spacing();
        assert_eq!(d.get(0, 1), h);
        assert_eq!(d.get(0, 2), h);
        assert!((d.get(0, 3) - h * std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(d.max_asymmetry() == 0.0 && (0..4).all(|i| d.get(i, i) == 0.0));
        assert!(floyd_warshall(&w, (0, 0), 9).is_err());
        assert!(floyd_warshall(&w, (1, 0), 2).is_err());
    }

    #[test]
    fn exhaustive_counts() {
        let ext = Rect::square(0.0, 0.0, 1.0);
        assert_eq!(exhaustive_box_count(&[(0.3, 0.3)], 0.25, &ext).unwrap(), 1);
        assert_eq!(exhaustive_box_count(&[(0.3, 0.3), (0.4, 0.4)], 0.25, &ext).unwrap(), 1);
        assert_eq!(exhaustive_box_count(&[(0.2, 0.3), (0.3, 0.3)], 0.25, &ext).unwrap(), 2);
        let many = vec![(0.5, 0.5); MAX_BOX_POINTS + 1];
        assert!(exhaustive_box_count(&many, 0.5, &ext).is_err());
    }

    #[test]
    fn cross_checks_pass() {
        for c in run_cross_checks(11) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
