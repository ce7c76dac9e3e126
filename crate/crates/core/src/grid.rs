//! Square lattice geometry shared by the field, metric and estimator modules.
//!
//! The domain is `[-1, 1]²` cut into `n × n` cells of side `spacing = 2/n`.
//! Cells are indexed row-major (`idx = row * n + col`); row grows with `y`,
//! column with `x`, and values live at cell centers.

use serde::{Deserialize, Serialize};

/// Half-width of the simulation domain.
pub const DOMAIN_HALF_WIDTH: f64 = 1.0;
/// Half-width of the concentric window where measurements are taken.
pub const WINDOW_HALF_WIDTH: f64 = 0.5;

pub type Point = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub n: usize,
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]` in domain units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn square(x0: f64, y0: f64, side: f64) -> Self {
        Rect { x0, y0, x1: x0 + side, y1: y0 + side }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn contains(&self, (x, y): Point) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

impl GridGeometry {
    pub fn new(n: usize) -> Self {
        GridGeometry { n }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * DOMAIN_HALF_WIDTH / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn extent(&self) -> Rect {
        Rect::square(-DOMAIN_HALF_WIDTH, -DOMAIN_HALF_WIDTH, 2.0 * DOMAIN_HALF_WIDTH)
    }

    pub fn window(&self) -> Rect {
        Rect::square(-WINDOW_HALF_WIDTH, -WINDOW_HALF_WIDTH, 2.0 * WINDOW_HALF_WIDTH)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n + col
    }

    #[inline]
    pub fn row_col(&self, idx: usize) -> (usize, usize) {
        (idx / self.n, idx % self.n)
    }

    /// Center of a cell in domain coordinates.
    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let (row, col) = self.row_col(idx);
        let h = self.spacing();
        (
            -DOMAIN_HALF_WIDTH + (col as f64 + 0.5) * h,
            -DOMAIN_HALF_WIDTH + (row as f64 + 0.5) * h,
        )
    }

    /// Cell whose square contains `p`, if `p` lies in the domain.
    pub fn cell_at(&self, (x, y): Point) -> Option<usize> {
        let h = self.spacing();
        let col = ((x + DOMAIN_HALF_WIDTH) / h).floor();
        let row = ((y + DOMAIN_HALF_WIDTH) / h).floor();
        let n = self.n as f64;
        if col < 0.0 || row < 0.0 || col >= n || row >= n {
            return None;
        }
        Some(self.index(row as usize, col as usize))
    }

    /// The cell just up-right of the origin; the origin is a cell corner
    /// for even `n`.
    pub fn center_cell(&self) -> usize {
        self.index(self.n / 2, self.n / 2)
    }

    pub fn on_frame(&self, idx: usize) -> bool {
        let (row, col) = self.row_col(idx);
        row == 0 || col == 0 || row + 1 == self.n || col + 1 == self.n
    }

    /// Cells on the outermost ring of the grid.
    pub fn frame_cells(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.on_frame(i)).collect()
    }

    /// The 4-neighbors of a cell that lie on the grid.
    pub fn neighbors4(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (row, col) = self.row_col(idx);
        let n = self.n;
        [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
            .into_iter()
            .filter_map(move |(dr, dc)| {
                let r = row as i64 + dr;
                let c = col as i64 + dc;
                (r >= 0 && c >= 0 && r < n as i64 && c < n as i64)
                    .then(|| r as usize * n + c as usize)
            })
    }

    /// Cells whose centers lie within Euclidean distance `radius` of `center`.
    pub fn disk_cells(&self, center: Point, radius: f64) -> Vec<usize> {
        let h = self.spacing();
        let n = self.n as i64;
        let to_index = |v: f64| (v + DOMAIN_HALF_WIDTH) / h - 0.5;
        let c_lo = to_index(center.0 - radius).ceil().max(0.0) as i64;
        let c_hi = (to_index(center.0 + radius).floor() as i64).min(n - 1);
        let r_lo = to_index(center.1 - radius).ceil().max(0.0) as i64;
        let r_hi = (to_index(center.1 + radius).floor() as i64).min(n - 1);
        let mut out = Vec::new();
        for row in r_lo..=r_hi {
            for col in c_lo..=c_hi {
                let idx = self.index(row as usize, col as usize);
                let (x, y) = self.point(idx);
                if (x - center.0).hypot(y - center.1) <= radius {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// Whether the closed disk of given radius around `center` stays within
    /// the square spanned by cell centers (so bilinear interpolation and disk
    /// enumeration never need cells off the grid).
    pub fn disk_inside(&self, center: Point, radius: f64) -> bool {
        let lim = DOMAIN_HALF_WIDTH - 0.5 * self.spacing();
        center.0 - radius >= -lim
            && center.0 + radius <= lim
            && center.1 - radius >= -lim
            && center.1 + radius <= lim
    }
}
