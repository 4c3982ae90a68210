use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Cell, GridSpec, Point2};

/// Scalar field sampled at the cell centres of a [`GridSpec`], row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskGrid {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl RiskGrid {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Evaluates `f` at every cell centre, rows in parallel.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(Point2) -> f64 + Sync,
    {
        Self::from_row_fn(grid, |_, centers, out| {
            for (o, p) in out.iter_mut().zip(centers) {
                *o = f(*p);
            }
        })
    }

    /// Rasterizes row by row; `fill(row, centers, out)` writes one row.
    /// Row-level access lets callers carry search hints across a row.
    pub fn from_row_fn<F>(grid: GridSpec, fill: F) -> Self
    where
        F: Fn(usize, &[Point2], &mut [f64]) + Sync,
    {
        let cols = grid.cols();
        let mut values = vec![0.0; grid.len()];
        if cols > 0 {
            values
                .par_chunks_mut(cols)
                .enumerate()
                .for_each(|(row, out)| {
                    let ly = grid.row_center_local(row);
                    let centers: Vec<Point2> = (0..cols)
                        .map(|c| grid.to_world(Point2::new(grid.col_center_local(c), ly)))
                        .collect();
                    fill(row, &centers, out);
                });
        }
        Self { grid, values }
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.values[self.grid.index(cell)]
    }

    pub fn set(&mut self, cell: Cell, value: f64) {
        let i = self.grid.index(cell);
        self.values[i] = value;
    }

    pub fn rows(&self) -> usize {
        self.grid.rows()
    }

    pub fn cols(&self) -> usize {
        self.grid.cols()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Cell holding the largest value (first in row-major order on ties).
    pub fn argmax(&self) -> Option<Cell> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| self.grid.cell_of_index(i))
    }

    /// Maximum over a cell set, zero when the set is empty.
    pub fn max_over(&self, cells: &[Cell]) -> f64 {
        cells.iter().map(|&c| self.get(c)).fold(0.0, f64::max)
    }

    pub fn is_valid(&self) -> bool {
        self.values.len() == self.grid.len() && self.values.iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    /// Cellwise sum `(a + b) + c`; the grids must share one spec.
    pub fn sum3(a: &RiskGrid, b: &RiskGrid, c: &RiskGrid) -> RiskGrid {
        debug_assert_eq!(a.grid, b.grid);
        debug_assert_eq!(a.grid, c.grid);
        let values = a
            .values
            .iter()
            .zip(&b.values)
            .zip(&c.values)
            .map(|((x, y), z)| x + y + z)
            .collect();
        RiskGrid {
            grid: a.grid,
            values,
        }
    }

    /// Bilinear interpolation between cell centres. Points within half a
    /// cell of the border use the edge values; points outside the grid
    /// return `None`.
    pub fn sample_bilinear(&self, p: Point2) -> Option<f64> {
        if !self.grid.contains(p) {
            return None;
        }
        let n = self.grid.cells_per_axis();
        let (fc, fr) = self.grid.local_to_fractional(self.grid.to_local(p));
        let max_idx = (n - 1) as f64;
        let x = (fc - 0.5).clamp(0.0, max_idx);
        let y = (fr - 0.5).clamp(0.0, max_idx);
        let c0 = (x.floor() as usize).min(n - 1);
        let r0 = (y.floor() as usize).min(n - 1);
        let c1 = (c0 + 1).min(n - 1);
        let r1 = (r0 + 1).min(n - 1);
        let tx = x - c0 as f64;
        let ty = y - r0 as f64;
        let v00 = self.get(Cell::new(r0, c0));
        let v01 = self.get(Cell::new(r0, c1));
        let v10 = self.get(Cell::new(r1, c0));
        let v11 = self.get(Cell::new(r1, c1));
        let top = v00 + (v01 - v00) * tx;
        let bottom = v10 + (v11 - v10) * tx;
        Some(top + (bottom - top) * ty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_hits_cell_centres_and_interpolates() {
        let grid = GridSpec::new(Point2::new(0.0, 0.0), 2.0, 1.0, 0.0);
        let g = RiskGrid::from_fn(grid, |p| 2.0 * p.x + p.y);
        for row in 0..4 {
            for col in 0..4 {
                let c = Cell::new(row, col);
                let p = grid.cell_to_world(c);
                assert_eq!(g.sample_bilinear(p), Some(g.get(c)));
            }
        }
        // linear fields are reproduced exactly inside the centre hull
        let v = g.sample_bilinear(Point2::new(0.3, -0.7)).unwrap();
        assert!((v - (0.6 - 0.7)).abs() < 1e-12);
        assert_eq!(g.sample_bilinear(Point2::new(2.5, 0.0)), None);
    }

    #[test]
    fn argmax_and_max_over() {
        let grid = GridSpec::new(Point2::new(0.0, 0.0), 1.0, 0.5, 0.0);
        let mut g = RiskGrid::zeros(grid);
        g.set(Cell::new(1, 2), 3.0);
        assert_eq!(g.argmax(), Some(Cell::new(1, 2)));
        assert_eq!(g.max_over(&[]), 0.0);
        assert_eq!(g.max_over(&[Cell::new(1, 2), Cell::new(0, 0)]), 3.0);
    }
}
