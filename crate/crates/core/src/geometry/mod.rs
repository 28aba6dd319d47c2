//! Point-cloud primitives shared by every other module: frames with optional
//! normals, PCA normal estimation, time averaging, farthest-point decimation,
//! area-weighted surface samplings and ASCII PLY I/O.

mod grid;
mod ply;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par;

pub use grid::UniformGrid;
pub use ply::{load_ply, save_ply};

/// A position in meters.
pub type Point3 = Vector3<f64>;

/// Tolerance on the Euclidean norm of stored unit normals.
pub const NORMAL_TOL: f64 = 1e-9;

/// Neighbor count used for the area-weight density estimate.
pub const AREA_NEIGHBORS: usize = 6;

/// Default neighbor count for PCA normals.
pub const DEFAULT_NORMAL_NEIGHBORS: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("coordinate {index} is not finite")]
    NonFinite { index: usize },
    #[error("normal {index} has norm {norm}, expected 1")]
    NotUnit { index: usize, norm: f64 },
    #[error("{normals} normals for {points} points")]
    NormalCount { points: usize, normals: usize },
    #[error("timestamp {0} must be finite and non-negative")]
    BadTimestamp(f64),
    #[error("neighborhood of point {index} is degenerate (covariance rank < 2)")]
    DegenerateNeighborhood { index: usize },
    #[error("frame {frame} has {found} points, expected {expected}")]
    MismatchedFrameShape {
        frame: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

/// A timestamped point set with optional unit normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloudFrame {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Vector3<f64>>>,
    /// Slow time in seconds.
    pub timestamp: f64,
}

impl PointCloudFrame {
    pub fn new(points: Vec<Point3>, timestamp: f64) -> Result<Self, GeometryError> {
        let frame = PointCloudFrame {
            points,
            normals: None,
            timestamp,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn with_normals(
        points: Vec<Point3>,
        normals: Vec<Vector3<f64>>,
        timestamp: f64,
    ) -> Result<Self, GeometryError> {
        let frame = PointCloudFrame {
            points,
            normals: Some(normals),
            timestamp,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.timestamp.is_finite() && self.timestamp >= 0.0) {
            return Err(GeometryError::BadTimestamp(self.timestamp));
        }
        if let Some(index) = self.points.iter().position(|p| !all_finite(p)) {
            return Err(GeometryError::NonFinite { index });
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(GeometryError::NormalCount {
                    points: self.points.len(),
                    normals: normals.len(),
                });
            }
            for (index, n) in normals.iter().enumerate() {
                let norm = n.norm();
                if !((norm - 1.0).abs() <= NORMAL_TOL) {
                    return Err(GeometryError::NotUnit { index, norm });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.points.len().max(1) as f64;
        self.points.iter().sum::<Point3>() / n
    }
}

fn all_finite(p: &Point3) -> bool {
    p.iter().all(|c| c.is_finite())
}

/// A surface sampling: points with normals and per-point quadrature areas (m²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSampling {
    pub points: PointCloudFrame,
    pub area_weights: Vec<f64>,
}

impl SurfaceSampling {
    pub fn new(points: PointCloudFrame, area_weights: Vec<f64>) -> Result<Self, GeometryError> {
        if area_weights.len() != points.len() {
            return Err(GeometryError::InvalidArgument(format!(
                "{} area weights for {} points",
                area_weights.len(),
                points.len()
            )));
        }
        if let Some(i) = area_weights.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(GeometryError::InvalidArgument(format!(
                "area weight {i} is {}",
                area_weights[i]
            )));
        }
        Ok(SurfaceSampling {
            points,
            area_weights,
        })
    }

    /// Density-adaptive quadrature weights: each point gets the area of a
    /// hexagonal cell whose spacing is the mean distance to its
    /// [`AREA_NEIGHBORS`] nearest neighbors.
    pub fn from_cloud(points: PointCloudFrame) -> Result<Self, GeometryError> {
        let weights = area_weights(&points.points)?;
        Self::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-point area π·d̄²·(√3/2π) = (√3/2)·d̄², with d̄ the mean distance to the
/// six nearest neighbors. Exact for a hexagonal lattice.
pub fn area_weights(points: &[Point3]) -> Result<Vec<f64>, GeometryError> {
    if points.len() <= AREA_NEIGHBORS {
        return Err(GeometryError::InvalidArgument(format!(
            "need more than {AREA_NEIGHBORS} points for area weights, got {}",
            points.len()
        )));
    }
    let grid = UniformGrid::for_knn(points, AREA_NEIGHBORS);
    let hex = 3f64.sqrt() / (2.0 * std::f64::consts::PI);
    let weights = par::map_range(points.len(), |i| {
        let nn = grid.knn(points, &points[i], AREA_NEIGHBORS, Some(i));
        let mean = nn.iter().map(|(_, d)| d).sum::<f64>() / nn.len() as f64;
        std::f64::consts::PI * mean * mean * hex
    });
    if let Some(i) = weights.iter().position(|&w| !(w > 0.0)) {
        return Err(GeometryError::InvalidArgument(format!(
            "point {i} coincides with its neighbors; area weight is zero"
        )));
    }
    Ok(weights)
}

/// PCA normals from the `k_neighbors`-NN covariance, oriented toward `viewpoint`.
pub fn estimate_normals(
    cloud: &PointCloudFrame,
    k_neighbors: usize,
    viewpoint: &Point3,
) -> Result<PointCloudFrame, GeometryError> {
    if k_neighbors < 3 {
        return Err(GeometryError::InvalidArgument(format!(
            "k_neighbors must be at least 3, got {k_neighbors}"
        )));
    }
    if cloud.len() < k_neighbors + 1 {
        return Err(GeometryError::InvalidArgument(format!(
            "{} points is too few for {k_neighbors} neighbors",
            cloud.len()
        )));
    }
    let pts = &cloud.points;
    let grid = UniformGrid::for_knn(pts, k_neighbors);
    let normals = par::try_map_range(pts.len(), |i| {
        let nn = grid.knn(pts, &pts[i], k_neighbors, Some(i));
        let neighborhood: Vec<Point3> = std::iter::once(pts[i])
            .chain(nn.iter().map(|&(j, _)| pts[j]))
            .collect();
        let n = pca_normal(&neighborhood).ok_or(GeometryError::DegenerateNeighborhood { index: i })?;
        Ok::<_, GeometryError>(if n.dot(&(viewpoint - pts[i])) < 0.0 { -n } else { n })
    })?;
    Ok(PointCloudFrame {
        points: cloud.points.clone(),
        normals: Some(normals),
        timestamp: cloud.timestamp,
    })
}

/// Smallest-eigenvalue eigenvector of the neighborhood covariance, or `None`
/// if the covariance has rank < 2.
fn pca_normal(neighborhood: &[Point3]) -> Option<Vector3<f64>> {
    let n = neighborhood.len() as f64;
    let mean = neighborhood.iter().sum::<Point3>() / n;
    let mut cov = Matrix3::zeros();
    for p in neighborhood {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if !(largest > 0.0) || middle <= 1e-10 * largest {
        return None;
    }
    let v = eig.eigenvectors.column(order[0]).into_owned();
    Some(v / v.norm())
}

/// Per-index arithmetic mean over frames; the timestamp is the mean timestamp.
pub fn time_average_frames(frames: &[PointCloudFrame]) -> Result<PointCloudFrame, GeometryError> {
    let first = frames
        .first()
        .ok_or_else(|| GeometryError::InvalidArgument("no frames to average".into()))?;
    let m = first.len();
    for (frame, f) in frames.iter().enumerate() {
        if f.len() != m {
            return Err(GeometryError::MismatchedFrameShape {
                frame,
                expected: m,
                found: f.len(),
            });
        }
    }
    let count = frames.len() as f64;
    let points = (0..m)
        .map(|k| frames.iter().map(|f| f.points[k]).sum::<Point3>() / count)
        .collect();
    let timestamp = frames.iter().map(|f| f.timestamp).sum::<f64>() / count;
    PointCloudFrame::new(points, timestamp)
}

/// Farthest-point decimation to `target_count` points.
///
/// The seed picks a random start; the first kept point is the one farthest
/// from it, and each next point maximizes its distance to the kept set (ties
/// to the lower index). Output points keep their normals.
pub fn subsample(
    cloud: &PointCloudFrame,
    target_count: usize,
    seed: u64,
) -> Result<PointCloudFrame, GeometryError> {
    let n = cloud.len();
    if target_count > n {
        return Err(GeometryError::InvalidArgument(format!(
            "target {target_count} exceeds {n} points"
        )));
    }
    let indices = farthest_point_indices(&cloud.points, target_count, seed);
    Ok(PointCloudFrame {
        points: indices.iter().map(|&i| cloud.points[i]).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
        timestamp: cloud.timestamp,
    })
}

/// Indices chosen by [`subsample`], in selection order.
pub fn farthest_point_indices(points: &[Point3], target_count: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    if target_count == 0 || n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = points[rng.random_range(0..n)];
    let mut min_d: Vec<f64> = points.iter().map(|p| (p - start).norm_squared()).collect();
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(target_count);
    for _ in 0..target_count {
        let mut best = usize::MAX;
        for i in 0..n {
            if !taken[i] && (best == usize::MAX || min_d[i] > min_d[best]) {
                best = i;
            }
        }
        taken[best] = true;
        out.push(best);
        let chosen = points[best];
        for (i, d) in min_d.iter_mut().enumerate() {
            if !taken[i] {
                *d = if out.len() == 1 {
                    (points[i] - chosen).norm_squared()
                } else {
                    d.min((points[i] - chosen).norm_squared())
                };
            }
        }
    }
    out
}
