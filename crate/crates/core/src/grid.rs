//! Uniform periodic grids, grid functions and interior/exterior partitions.
//!
//! The box is the torus `[-L/2, L/2)^dim` sampled at `N` points per axis.
//! Flat indices are lexicographic with the last axis fastest, so in two
//! dimensions `idx = i0 * N + i1`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    extent: f64,
    points_per_dim: usize,
    spacing: f64,
}

impl Grid {
    pub fn new(dim: usize, extent: f64, points_per_dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "extent must be positive and finite, got {extent}"
            )));
        }
        if points_per_dim < 8 || !points_per_dim.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per dimension must be a power of two >= 8, got {points_per_dim}"
            )));
        }
        Ok(Self {
            dim,
            extent,
            points_per_dim,
            // exact: division by a power of two
            spacing: extent / points_per_dim as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of grid points, `N^dim`.
    pub fn len(&self) -> usize {
        self.points_per_dim.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of a single point, `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Angular wavenumbers `2π m / L` along one axis, in FFT order
    /// (`m = 0, 1, …, N/2-1, -N/2, …, -1`).
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.points_per_dim;
        (0..n)
            .map(|i| 2.0 * PI * signed_mode(i, n) as f64 / self.extent)
            .collect()
    }

    pub fn axis_coordinate(&self, i: usize) -> f64 {
        -0.5 * self.extent + i as f64 * self.spacing
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        let n = self.points_per_dim;
        match self.dim {
            1 => [idx, 0],
            _ => [idx / n, idx % n],
        }
    }

    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        match self.dim {
            1 => mi[0],
            _ => mi[0] * self.points_per_dim + mi[1],
        }
    }

    /// Coordinates of a grid point; the unused second slot is 0 in 1-d.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        let mut p = [0.0; 2];
        for (axis, slot) in p.iter_mut().enumerate().take(self.dim) {
            *slot = self.axis_coordinate(mi[axis]);
        }
        p
    }

    /// Inverse of [`Grid::point`] for points on the lattice (tolerance h/4).
    pub fn index_of(&self, p: &[f64]) -> Option<usize> {
        if p.len() != self.dim {
            return None;
        }
        let mut mi = [0usize; 2];
        for axis in 0..self.dim {
            let t = (p[axis] + 0.5 * self.extent) / self.spacing;
            let r = t.round();
            if (t - r).abs() > 0.25 || r < 0.0 || r >= self.points_per_dim as f64 {
                return None;
            }
            mi[axis] = r as usize;
        }
        Some(self.flat_index(mi))
    }

    /// Periodic minimum-image distance between two grid points.
    pub fn periodic_distance(&self, a: usize, b: usize) -> f64 {
        let (ma, mb) = (self.multi_index(a), self.multi_index(b));
        let n = self.points_per_dim;
        let mut d2 = 0.0;
        for axis in 0..self.dim {
            let diff = (ma[axis] + n - mb[axis]) % n;
            let steps = diff.min(n - diff) as f64 * self.spacing;
            d2 += steps * steps;
        }
        d2.sqrt()
    }
}

/// Map an FFT-ordered bin to its signed mode number in `[-N/2, N/2)`.
pub(crate) fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

pub fn make_grid(dim: usize, extent: f64, points_per_dim: usize) -> Result<Grid> {
    Grid::new(dim, extent, points_per_dim)
}

/// Real-valued grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(
                "values",
                format!("expected {} entries, got {}", grid.len(), values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|i| f(&grid.point(i)[..grid.dim()]))
            .collect();
        Self::new(grid, values)
    }

    /// Unit value at `idx`, zero elsewhere.
    pub fn indicator(grid: Grid, idx: usize) -> Self {
        let mut f = Self::zeros(grid);
        f.values[idx] = 1.0;
        f
    }

    /// Field equal to `values[k]` at `indices[k]` and zero elsewhere.
    pub fn scatter(grid: Grid, indices: &[usize], values: &[f64]) -> Result<Self> {
        let mut out = vec![0.0; grid.len()];
        for (&i, &v) in indices.iter().zip(values) {
            out[i] = v;
        }
        Self::new(grid, out)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn gather(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.values[i]).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(self, other)?;
        Self::new(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Copy of the field with the entries at `indices` set to zero.
    pub fn zeroed_on(&self, indices: &[usize]) -> Self {
        let mut out = self.clone();
        for &i in indices {
            out.values[i] = 0.0;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Discrete L² norm `sqrt(inner(u, u))`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Indices where the field is nonzero.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

pub(crate) fn same_grid(a: &Field, b: &Field) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Rectangle-rule L² pairing `h^dim Σ a_i b_i`.
pub fn inner(a: &Field, b: &Field) -> Result<f64> {
    same_grid(a, b)?;
    let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(a.grid.cell_volume() * s)
}

/// Named geometric primitives used to describe domains and windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Open interval `(lo, hi)` along the first axis.
    Interval { lo: f64, hi: f64 },
    /// Open ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Open axis-aligned box.
    Rectangle { lo: Vec<f64>, hi: Vec<f64> },
    Union { parts: Vec<Shape> },
}

impl Shape {
    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            Shape::Interval { lo, hi } => p[0] > *lo && p[0] < *hi,
            Shape::Ball { center, radius } => {
                let d2: f64 = p
                    .iter()
                    .zip(center.iter().chain(std::iter::repeat(&0.0)))
                    .map(|(x, c)| (x - c) * (x - c))
                    .sum();
                d2 < radius * radius
            }
            Shape::Rectangle { lo, hi } => p
                .iter()
                .enumerate()
                .all(|(k, x)| *x > lo.get(k).copied().unwrap_or(f64::NEG_INFINITY)
                    && *x < hi.get(k).copied().unwrap_or(f64::INFINITY)),
            Shape::Union { parts } => parts.iter().any(|s| s.contains(p)),
        }
    }
}

/// Partition of the grid into the interior Ω, its exterior, and named
/// measurement windows inside the exterior.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMask {
    grid: Grid,
    interior: Vec<usize>,
    exterior: Vec<usize>,
    windows: BTreeMap<String, Vec<usize>>,
    // position of a grid index inside `interior` / `exterior`
    slot: Vec<Slot>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Interior(usize),
    Exterior(usize),
}

pub type PointPredicate<'a> = &'a dyn Fn(&[f64]) -> bool;

/// Build a mask from an interior predicate and named window predicates.
///
/// Window point sets are intersected with the exterior; a window with no
/// exterior points is rejected.
pub fn mask_from_predicate(
    grid: Grid,
    inside: impl Fn(&[f64]) -> bool,
    windows: &[(&str, PointPredicate<'_>)],
) -> Result<DomainMask> {
    let interior: Vec<usize> = (0..grid.len())
        .filter(|&i| inside(&grid.point(i)[..grid.dim()]))
        .collect();
    let is_inside: Vec<bool> = {
        let mut v = vec![false; grid.len()];
        for &i in &interior {
            v[i] = true;
        }
        v
    };
    let mut named = BTreeMap::new();
    for (name, pred) in windows {
        let pts: Vec<usize> = (0..grid.len())
            .filter(|&i| !is_inside[i] && pred(&grid.point(i)[..grid.dim()]))
            .collect();
        if pts.is_empty() {
            return Err(Error::EmptyWindow(name.to_string()));
        }
        named.insert(name.to_string(), pts);
    }
    DomainMask::from_indices(grid, interior, named)
}

impl DomainMask {
    /// Build a mask from explicit interior indices; windows must already lie
    /// in the exterior.
    pub fn from_indices(
        grid: Grid,
        mut interior: Vec<usize>,
        windows: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self> {
        interior.sort_unstable();
        interior.dedup();
        if interior.iter().any(|&i| i >= grid.len()) {
            return Err(invalid("interior", "index out of range"));
        }
        if interior.is_empty() {
            return Err(Error::EmptyInterior);
        }
        if interior.len() == grid.len() {
            return Err(Error::EmptyExterior);
        }
        let mut slot = vec![Slot::Exterior(0); grid.len()];
        for (k, &i) in interior.iter().enumerate() {
            slot[i] = Slot::Interior(k);
        }
        let mut exterior = Vec::with_capacity(grid.len() - interior.len());
        for (i, s) in slot.iter_mut().enumerate() {
            if let Slot::Exterior(_) = s {
                *s = Slot::Exterior(exterior.len());
                exterior.push(i);
            }
        }
        let mut checked = BTreeMap::new();
        for (name, mut pts) in windows {
            pts.sort_unstable();
            pts.dedup();
            if pts.is_empty() {
                return Err(Error::EmptyWindow(name));
            }
            let bad: Vec<usize> = pts
                .iter()
                .copied()
                .filter(|&i| i >= grid.len() || matches!(slot[i], Slot::Interior(_)))
                .collect();
            if !bad.is_empty() {
                return Err(Error::SupportViolation {
                    what: format!("window `{name}` meets the interior"),
                    indices: bad,
                });
            }
            checked.insert(name, pts);
        }
        Ok(Self {
            grid,
            interior,
            exterior,
            windows: checked,
            slot,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn exterior(&self) -> &[usize] {
        &self.exterior
    }

    pub fn windows(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.windows
    }

    pub fn window(&self, name: &str) -> Result<&[usize]> {
        self.windows
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownWindow(name.to_string()))
    }

    /// Positions of a window's points inside the exterior index list.
    pub fn window_positions(&self, name: &str) -> Result<Vec<usize>> {
        Ok(self
            .window(name)?
            .iter()
            .map(|&i| self.exterior_position(i).expect("window lies in exterior"))
            .collect())
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        matches!(self.slot[idx], Slot::Interior(_))
    }

    pub fn interior_position(&self, idx: usize) -> Option<usize> {
        match self.slot[idx] {
            Slot::Interior(k) => Some(k),
            Slot::Exterior(_) => None,
        }
    }

    pub fn exterior_position(&self, idx: usize) -> Option<usize> {
        match self.slot[idx] {
            Slot::Exterior(k) => Some(k),
            Slot::Interior(_) => None,
        }
    }

    /// Same partition with an extra named window.
    pub fn with_window(&self, name: &str, indices: Vec<usize>) -> Result<Self> {
        let mut windows = self.windows.clone();
        windows.insert(name.to_string(), indices);
        Self::from_indices(self.grid, self.interior.clone(), windows)
    }

    /// Indices of `field` that are nonzero on the interior.
    pub fn interior_support(&self, field: &Field) -> Vec<usize> {
        self.interior
            .iter()
            .copied()
            .filter(|&i| field.values()[i] != 0.0)
            .collect()
    }

    /// Indices of `field` that are nonzero on the exterior.
    pub fn exterior_support(&self, field: &Field) -> Vec<usize> {
        self.exterior
            .iter()
            .copied()
            .filter(|&i| field.values()[i] != 0.0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_from_definition() {
        let g = make_grid(1, 2.0 * PI, 16).unwrap();
        assert_eq!(g.spacing(), 2.0 * PI / 16.0);
        let mut k: Vec<i64> = g
            .wavenumbers()
            .iter()
            .map(|k| (k * g.extent() / (2.0 * PI)).round() as i64)
            .collect();
        k.sort_unstable();
        assert_eq!(k, (-8..8).collect::<Vec<_>>());

        let g2 = make_grid(2, 4.0, 8).unwrap();
        assert_eq!(g2.len(), 64);
        assert_eq!(g2.spacing(), 0.5);
        assert_eq!(g2.spacing() * g2.points_per_dim() as f64, g2.extent());
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(make_grid(1, 1.0, 10).is_err());
        assert!(make_grid(3, 1.0, 8).is_err());
        assert!(make_grid(1, 1.0, 4).is_err());
        assert!(make_grid(1, -1.0, 8).is_err());
    }

    #[test]
    fn index_round_trip() {
        for g in [make_grid(1, 3.0, 32).unwrap(), make_grid(2, 5.0, 16).unwrap()] {
            for i in 0..g.len() {
                assert_eq!(g.flat_index(g.multi_index(i)), i);
                assert_eq!(g.index_of(&g.point(i)[..g.dim()]), Some(i));
            }
        }
    }

    #[test]
    fn inner_quadrature() {
        let g = make_grid(1, 2.0 * PI, 16).unwrap();
        let one = Field::constant(g, 1.0);
        assert_relative_eq!(inner(&one, &one).unwrap(), 2.0 * PI, epsilon = 1e-14);
        let s = Field::from_fn(g, |p| p[0].sin()).unwrap();
        let c = Field::from_fn(g, |p| p[0].cos()).unwrap();
        assert!(inner(&s, &c).unwrap().abs() < 1e-12);
        assert!((inner(&s, &s).unwrap() - PI).abs() < 1e-10);
        let other = Field::zeros(make_grid(1, 2.0 * PI, 32).unwrap());
        assert!(matches!(inner(&s, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn interval_mask() {
        let g = make_grid(1, 8.0, 64).unwrap();
        let mask = mask_from_predicate(g, |p| p[0].abs() < 1.0, &[]).unwrap();
        for &i in mask.interior() {
            assert!(g.point(i)[0].abs() < 1.0);
        }
        for &i in mask.exterior() {
            assert!(g.point(i)[0].abs() >= 1.0);
        }
        assert_eq!(mask.interior().len() + mask.exterior().len(), g.len());
    }

    #[test]
    fn overlapping_windows_are_accepted() {
        let g = make_grid(1, 8.0, 64).unwrap();
        let w = |p: &[f64]| p[0] > 2.0 && p[0] < 3.0;
        let mask =
            mask_from_predicate(g, |p| p[0].abs() < 1.0, &[("W1", &w), ("W2", &w)]).unwrap();
        assert_eq!(mask.window("W1").unwrap(), mask.window("W2").unwrap());
    }

    #[test]
    fn mask_contract_cases() {
        let g = make_grid(1, 8.0, 64).unwrap();
        assert!(matches!(
            mask_from_predicate(g, |_| true, &[]),
            Err(Error::EmptyExterior)
        ));
        assert!(matches!(
            mask_from_predicate(g, |_| false, &[]),
            Err(Error::EmptyInterior)
        ));
        let inside_window = |p: &[f64]| p[0].abs() < 0.5;
        assert!(matches!(
            mask_from_predicate(g, |p| p[0].abs() < 1.0, &[("W", &inside_window)]),
            Err(Error::EmptyWindow(_))
        ));
        let straddling = |p: &[f64]| p[0] > 0.5 && p[0] < 2.0;
        let mask =
            mask_from_predicate(g, |p| p[0].abs() < 1.0, &[("W", &straddling)]).unwrap();
        assert!(mask
            .window("W")
            .unwrap()
            .iter()
            .all(|&i| !mask.is_interior(i)));
    }

    #[test]
    fn shapes() {
        let u = Shape::Union {
            parts: vec![
                Shape::Interval { lo: 0.0, hi: 1.0 },
                Shape::Ball {
                    center: vec![3.0],
                    radius: 0.5,
                },
            ],
        };
        assert!(u.contains(&[0.5]));
        assert!(u.contains(&[3.2]));
        assert!(!u.contains(&[2.0]));
        let r = Shape::Rectangle {
            lo: vec![-1.0, 0.0],
            hi: vec![1.0, 2.0],
        };
        assert!(r.contains(&[0.0, 1.0]));
        assert!(!r.contains(&[0.0, 2.0]));
    }
}
