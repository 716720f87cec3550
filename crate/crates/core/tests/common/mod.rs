#![allow(dead_code)]

use fraccal::grid::PointPredicate;
use fraccal::{make_grid, mask_from_predicate, DomainMask, Field, Grid};

/// Smooth compactly supported bump `height · exp(1 - 1/(1 - r²))`, peak
/// `height` at `center`.
pub fn bump(grid: Grid, center: [f64; 2], radius: f64, height: f64) -> Field {
    Field::from_fn(grid, |p| {
        let mut r2 = 0.0;
        for (axis, x) in p.iter().enumerate() {
            r2 += ((x - center[axis]) / radius).powi(2);
        }
        if r2 < 1.0 {
            height * (1.0 - 1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    })
    .unwrap()
}

pub fn one_plus(f: &Field) -> Field {
    f.map(|v| 1.0 + v).unwrap()
}

/// `(lo, hi)` in 1-d with named windows given as open intervals.
pub fn interval(l: f64, n: usize, lo: f64, hi: f64, windows: &[(&str, f64, f64)]) -> DomainMask {
    let g = make_grid(1, l, n).unwrap();
    let preds: Vec<_> = windows
        .iter()
        .map(|&(name, a, b)| (name, move |p: &[f64]| p[0] > a && p[0] < b))
        .collect();
    let refs: Vec<(&str, PointPredicate)> = preds.iter().map(|(n, f)| (*n, f as PointPredicate)).collect();
    mask_from_predicate(g, |p| p[0] > lo && p[0] < hi, &refs).unwrap()
}

/// Open rectangle `(lo, hi)` in 2-d.
pub fn rectangle(l: f64, n: usize, lo: [f64; 2], hi: [f64; 2]) -> DomainMask {
    let g = make_grid(2, l, n).unwrap();
    mask_from_predicate(
        g,
        |p| p[0] > lo[0] && p[0] < hi[0] && p[1] > lo[1] && p[1] < hi[1],
        &[],
    )
    .unwrap()
}

pub fn all(grid: &Grid) -> Vec<usize> {
    (0..grid.len()).collect()
}
