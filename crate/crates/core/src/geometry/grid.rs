//! Uniform-grid spatial index for radius and k-nearest-neighbor queries.

use std::collections::HashMap;

use super::Point3;

type Cell = (i64, i64, i64);

#[derive(Debug, Clone)]
pub struct UniformGrid {
    cell: f64,
    cells: HashMap<Cell, Vec<usize>>,
    lo: Cell,
    hi: Cell,
}

impl UniformGrid {
    pub fn new(points: &[Point3], cell_size: f64) -> Self {
        assert!(cell_size > 0.0 && cell_size.is_finite());
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        let mut lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let c = key(p, cell_size);
            lo = (lo.0.min(c.0), lo.1.min(c.1), lo.2.min(c.2));
            hi = (hi.0.max(c.0), hi.1.max(c.1), hi.2.max(c.2));
            cells.entry(c).or_default().push(i);
        }
        UniformGrid {
            cell: cell_size,
            cells,
            lo,
            hi,
        }
    }

    /// Grid with a cell size suited to k-NN queries on a roughly surface-like cloud.
    pub fn for_knn(points: &[Point3], k: usize) -> Self {
        let mut min = Point3::repeat(f64::INFINITY);
        let mut max = Point3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        let mut ext = [max.x - min.x, max.y - min.y, max.z - min.z];
        ext.sort_by(|a, b| b.total_cmp(a));
        let area = (ext[0] * ext[1]).max(ext[0] * ext[0] * 1e-6).max(1e-18);
        let h = (area * (k.max(1) as f64) / points.len().max(1) as f64).sqrt();
        Self::new(points, h.max(1e-9))
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    /// Indices of all points within `radius` of `q` (inclusive), ascending.
    pub fn within(&self, points: &[Point3], q: &Point3, radius: f64) -> Vec<usize> {
        let c = key(q, self.cell);
        let r = (radius / self.cell).ceil() as i64;
        let r2 = radius * radius;
        let mut out = Vec::new();
        for i in (c.0 - r).max(self.lo.0)..=(c.0 + r).min(self.hi.0) {
            for j in (c.1 - r).max(self.lo.1)..=(c.1 + r).min(self.hi.1) {
                for k in (c.2 - r).max(self.lo.2)..=(c.2 + r).min(self.hi.2) {
                    if let Some(ids) = self.cells.get(&(i, j, k)) {
                        out.extend(
                            ids.iter()
                                .copied()
                                .filter(|&id| (points[id] - q).norm_squared() <= r2),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest points to `q` as `(index, distance)`, nearest first,
    /// optionally skipping one index (the query point itself). Ties are
    /// broken by index.
    pub fn knn(
        &self,
        points: &[Point3],
        q: &Point3,
        k: usize,
        skip: Option<usize>,
    ) -> Vec<(usize, f64)> {
        let c = key(q, self.cell);
        let max_shell = [
            c.0 - self.lo.0,
            self.hi.0 - c.0,
            c.1 - self.lo.1,
            self.hi.1 - c.1,
            c.2 - self.lo.2,
            self.hi.2 - c.2,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
        .max(0);
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        for s in 0..=max_shell {
            for i in c.0 - s..=c.0 + s {
                for j in c.1 - s..=c.1 + s {
                    for kk in c.2 - s..=c.2 + s {
                        let on_shell = (i - c.0).abs() == s
                            || (j - c.1).abs() == s
                            || (kk - c.2).abs() == s;
                        if !on_shell {
                            continue;
                        }
                        let Some(ids) = self.cells.get(&(i, j, kk)) else {
                            continue;
                        };
                        for &id in ids {
                            if Some(id) == skip {
                                continue;
                            }
                            let d = (points[id] - q).norm();
                            insert_sorted(&mut best, (id, d), k);
                        }
                    }
                }
            }
            if best.len() == k && best[k - 1].1 <= s as f64 * self.cell {
                break;
            }
        }
        best
    }
}

fn key(p: &Point3, h: f64) -> Cell {
    (
        (p.x / h).floor() as i64,
        (p.y / h).floor() as i64,
        (p.z / h).floor() as i64,
    )
}

fn insert_sorted(best: &mut Vec<(usize, f64)>, item: (usize, f64), k: usize) {
    let before = |a: &(usize, f64), b: &(usize, f64)| a.1 < b.1 || (a.1 == b.1 && a.0 < b.0);
    if best.len() == k && !before(&item, &best[k - 1]) {
        return;
    }
    let pos = best.iter().position(|b| before(&item, b)).unwrap_or(best.len());
    best.insert(pos, item);
    best.truncate(k);
}
