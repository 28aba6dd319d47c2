//! Physical-optics scattering from a perfectly conducting surface sampling.
//!
//! A Hertzian dipole illuminates the surface; the induced current is
//! `J = 2 n̂ × H_inc` on lit samples, and the field at an observer follows from
//! the free-space dyadic Green's function applied to each current element.
//! The eye function (a raised-cosine window of radius `a₀`) localizes the
//! radiated field to the neighborhood of one surface point, which gives the
//! per-point scattering maps used to pick scattering centers.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, SurfaceSampling, UniformGrid};
use crate::{io, par, SPEED_OF_LIGHT};

/// Free-space permeability, H/m.
pub const MU0: f64 = 1.256_637_062_12e-6;

pub type CVec3 = Vector3<Complex64>;

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, thiserror::Error)]
pub enum EmError {
    #[error("field point coincides with the dipole source")]
    SourceCoincident,
    #[error("observer is {distance:e} m from surface sample {index}, inside λ/2π")]
    NearFieldSingular { index: usize, distance: f64 },
    #[error("surface sampling has no normals")]
    MissingNormals,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] io::IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConstants {
    /// Hz
    pub frequency: f64,
    /// rad/m
    pub k0: f64,
    /// rad/s
    pub omega: f64,
    /// H/m
    pub mu: f64,
    /// m/s
    pub c: f64,
}

impl EmConstants {
    pub fn new(frequency: f64) -> Self {
        let omega = 2.0 * PI * frequency;
        EmConstants {
            frequency,
            k0: omega / SPEED_OF_LIGHT,
            omega,
            mu: MU0,
            c: SPEED_OF_LIGHT,
        }
    }

    pub fn wavelength(&self) -> f64 {
        self.c / self.frequency
    }
}

/// An infinitesimal electric dipole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleSource {
    pub position: Point3,
    /// Unit dipole axis.
    pub axis: Vector3<f64>,
    /// Current-length product I₀l, A·m.
    pub moment: f64,
}

impl DipoleSource {
    pub fn new(position: Point3, axis: Vector3<f64>, moment: f64) -> Result<Self, EmError> {
        let n = axis.norm();
        if !(n > 0.0) {
            return Err(EmError::InvalidArgument("dipole axis is zero".into()));
        }
        Ok(DipoleSource {
            position,
            axis: axis / n,
            moment,
        })
    }
}

/// Incident magnetic field of the dipole at `r_s`, A/m.
///
/// In the dipole frame (axis = local z) the field is `[-H_φ sin φ, H_φ cos φ, 0]`
/// with `H_φ = (j k₀ I₀l sin θ / 4πr)(1 + 1/(j k₀ r)) e^{-j k₀ r}`.
pub fn incident_h_field(
    source: &DipoleSource,
    consts: &EmConstants,
    r_s: &Point3,
) -> Result<CVec3, EmError> {
    let rel = r_s - source.position;
    let r = rel.norm();
    if !(r > 0.0) {
        return Err(EmError::SourceCoincident);
    }
    let (ex, ey, _) = local_frame(&source.axis);
    let (lx, ly) = (rel.dot(&ex), rel.dot(&ey));
    let rho = lx.hypot(ly);
    if rho == 0.0 {
        return Ok(CVec3::zeros());
    }
    let sin_theta = rho / r;
    let (sin_phi, cos_phi) = (ly / rho, lx / rho);
    let k = consts.k0;
    let h_phi = J * k * source.moment * sin_theta / (4.0 * PI * r)
        * (1.0 + 1.0 / (J * k * r))
        * Complex64::from_polar(1.0, -k * r);
    let hl = [-h_phi * sin_phi, h_phi * cos_phi];
    Ok(Vector3::new(
        hl[0] * ex.x + hl[1] * ey.x,
        hl[0] * ex.y + hl[1] * ey.y,
        hl[0] * ex.z + hl[1] * ey.z,
    ))
}

/// Right-handed orthonormal frame with `axis` as the third vector.
fn local_frame(axis: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let z = axis.normalize();
    let helper = if z.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let x = (helper - z * helper.dot(&z)).normalize();
    let y = z.cross(&x);
    (x, y, z)
}

fn cross_rc(a: &Vector3<f64>, b: &CVec3) -> CVec3 {
    Vector3::new(
        b.z * a.y - b.y * a.z,
        b.x * a.z - b.z * a.x,
        b.y * a.x - b.x * a.y,
    )
}

/// Physical-optics current `2 n̂ × H`.
pub fn surface_current(normal: &Vector3<f64>, h_inc: &CVec3) -> CVec3 {
    cross_rc(normal, h_inc) * Complex64::new(2.0, 0.0)
}

/// A sample is lit when its normal faces the source: `n̂ · (r_S - source) < 0`.
pub fn is_lit(normal: &Vector3<f64>, r_s: &Point3, source: &Point3) -> bool {
    normal.dot(&(r_s - source)) < 0.0
}

/// Induced currents over a sampling.
#[derive(Debug, Clone)]
pub struct SurfaceCurrents {
    pub sampling: SurfaceSampling,
    /// A/m, tangent to the surface.
    pub currents: Vec<CVec3>,
}

impl SurfaceCurrents {
    /// `J = 2 n̂ × H_inc`, zeroed on unlit samples when `shadowing` is set.
    pub fn compute(
        sampling: &SurfaceSampling,
        source: &DipoleSource,
        consts: &EmConstants,
        shadowing: bool,
    ) -> Result<Self, EmError> {
        let normals = sampling
            .points
            .normals
            .as_ref()
            .ok_or(EmError::MissingNormals)?;
        let pts = &sampling.points.points;
        let currents = par::try_map_range(pts.len(), |i| {
            if shadowing && !is_lit(&normals[i], &pts[i], &source.position) {
                return Ok::<_, EmError>(CVec3::zeros());
            }
            let h = incident_h_field(source, consts, &pts[i])?;
            Ok(surface_current(&normals[i], &h))
        })?;
        Ok(SurfaceCurrents {
            sampling: sampling.clone(),
            currents,
        })
    }

    pub fn scale(&mut self, factor: f64) {
        for j in &mut self.currents {
            *j *= Complex64::new(factor, 0.0);
        }
    }
}

/// `Ḡ(r; r_S) · J` for the free-space dyadic `(Ī + ∇∇/k₀²) e^{-jk₀R}/(4πR)`:
///
/// `g(R) [ (1 - j/(k₀R) - 1/(k₀R)²) J - (1 - 3j/(k₀R) - 3/(k₀R)²) (R̂·J) R̂ ]`.
pub fn green_dot(k0: f64, r: &Point3, r_s: &Point3, current: &CVec3) -> CVec3 {
    let d = r - r_s;
    let big_r = d.norm();
    let rh = d / big_r;
    let kr = k0 * big_r;
    let g = Complex64::from_polar(1.0 / (4.0 * PI * big_r), -kr);
    let inv = 1.0 / kr;
    let a = Complex64::new(1.0 - inv * inv, -inv);
    let b = Complex64::new(1.0 - 3.0 * inv * inv, -3.0 * inv);
    let rdotj = current.x * rh.x + current.y * rh.y + current.z * rh.z;
    Vector3::new(
        g * (a * current.x - b * rdotj * rh.x),
        g * (a * current.y - b * rdotj * rh.y),
        g * (a * current.z - b * rdotj * rh.z),
    )
}

/// Raised-cosine eye window of radius `a0` centered on `r0`.
pub fn eye_weight(r_s: &Point3, r0: &Point3, a0: f64) -> f64 {
    let d = (r_s - r0).norm();
    if d <= a0 {
        0.5 * ((PI * d / a0).cos() + 1.0)
    } else {
        0.0
    }
}

/// Per-sample radiated contributions `-jωμ · area · Ḡ·J` at observer `r`.
fn contributions(
    currents: &SurfaceCurrents,
    consts: &EmConstants,
    r: &Point3,
) -> Result<Vec<CVec3>, EmError> {
    let pts = &currents.sampling.points.points;
    let min_r = consts.wavelength() / (2.0 * PI);
    let pre = -J * consts.omega * consts.mu;
    par::try_map_range(pts.len(), |i| {
        let dist = (r - pts[i]).norm();
        if dist < min_r {
            return Err(EmError::NearFieldSingular {
                index: i,
                distance: dist,
            });
        }
        let jc = &currents.currents[i];
        if jc.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
            return Ok(CVec3::zeros());
        }
        let area = currents.sampling.area_weights[i];
        Ok(green_dot(consts.k0, r, &pts[i], jc) * (pre * area))
    })
}

/// `|−jωμ · area_k · Ḡ(r; r_k)·J_k|` for every sample `k`, unwindowed.
pub fn contribution_magnitudes(
    currents: &SurfaceCurrents,
    consts: &EmConstants,
    r: &Point3,
) -> Result<Vec<f64>, EmError> {
    Ok(contributions(currents, consts, r)?.iter().map(cnorm).collect())
}

/// Complex field at `r`: `-jωμ Σ_k w_k · area_k · Ḡ(r; r_k)·J_k`, with unit
/// weights when `weights` is `None`.
pub fn radiate(
    currents: &SurfaceCurrents,
    consts: &EmConstants,
    r: &Point3,
    weights: Option<&[f64]>,
) -> Result<CVec3, EmError> {
    if let Some(w) = weights {
        if w.len() != currents.currents.len() {
            return Err(EmError::InvalidArgument(format!(
                "{} weights for {} samples",
                w.len(),
                currents.currents.len()
            )));
        }
    }
    let c = contributions(currents, consts, r)?;
    Ok(c.iter().enumerate().fold(CVec3::zeros(), |acc, (i, v)| {
        let wi = weights.map_or(1.0, |w| w[i]);
        if wi == 0.0 {
            acc
        } else {
            acc + v * Complex64::new(wi, 0.0)
        }
    }))
}

/// Euclidean norm of a complex 3-vector.
pub fn cnorm(v: &CVec3) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// `|E_scat(r; r0)|`: the radiated field restricted by the eye window around `r0`.
pub fn scattered_field_magnitude(
    currents: &SurfaceCurrents,
    consts: &EmConstants,
    r: &Point3,
    r0: &Point3,
    a0: f64,
) -> Result<f64, EmError> {
    if !(a0 > 0.0) {
        return Err(EmError::InvalidArgument("eye radius must be positive".into()));
    }
    let w: Vec<f64> = currents
        .sampling
        .points
        .points
        .iter()
        .map(|p| eye_weight(p, r0, a0))
        .collect();
    Ok(cnorm(&radiate(currents, consts, r, Some(&w))?))
}

/// Per-surface-point scattered-field magnitudes for one observer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringMap {
    pub observation_point: Point3,
    /// V/m, aligned with the sampling's point order.
    pub magnitudes: Vec<f64>,
    /// Eye radius a₀, m.
    pub eye_radius: f64,
}

impl ScatteringMap {
    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &v) in self.magnitudes.iter().enumerate() {
            if best.is_none_or(|b| v > self.magnitudes[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// CSV with columns `index,x,y,z,magnitude`.
    pub fn write_csv(&self, points: &[Point3], path: &Path) -> Result<(), EmError> {
        if points.len() != self.magnitudes.len() {
            return Err(EmError::InvalidArgument("point count does not match map".into()));
        }
        let rows: Vec<Vec<f64>> = points
            .iter()
            .zip(&self.magnitudes)
            .enumerate()
            .map(|(i, (p, m))| vec![i as f64, p.x, p.y, p.z, *m])
            .collect();
        io::write_csv(path, &["index", "x", "y", "z", "magnitude"], &rows)?;
        Ok(())
    }
}

/// Eye-window neighbor lists and weights over a fixed sampling, reusable for
/// every observer of the same frame.
#[derive(Debug, Clone)]
pub struct EyeWindows {
    neighbors: Vec<Vec<(usize, f64)>>,
    a0: f64,
}

impl EyeWindows {
    pub fn new(points: &[Point3], a0: f64) -> Result<Self, EmError> {
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(EmError::InvalidArgument("eye radius must be positive".into()));
        }
        let grid = UniformGrid::new(points, a0);
        let neighbors = par::map_range(points.len(), |i| {
            grid.within(points, &points[i], a0)
                .into_iter()
                .map(|j| (j, eye_weight(&points[j], &points[i], a0)))
                .filter(|&(_, w)| w > 0.0)
                .collect()
        });
        Ok(EyeWindows { neighbors, a0 })
    }

    /// Windows centered on `centers` rather than on the samples themselves.
    pub fn at_centers(points: &[Point3], centers: &[Point3], a0: f64) -> Result<Self, EmError> {
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(EmError::InvalidArgument("eye radius must be positive".into()));
        }
        let grid = UniformGrid::new(points, a0);
        let neighbors = par::map_range(centers.len(), |i| {
            grid.within(points, &centers[i], a0)
                .into_iter()
                .map(|j| (j, eye_weight(&points[j], &centers[i], a0)))
                .filter(|&(_, w)| w > 0.0)
                .collect()
        });
        Ok(EyeWindows { neighbors, a0 })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.a0
    }

    /// Magnitudes for every window center given per-sample contributions.
    fn magnitudes(&self, contrib: &[CVec3]) -> Vec<f64> {
        par::map_range(self.neighbors.len(), |i| {
            let sum = self.neighbors[i]
                .iter()
                .fold(CVec3::zeros(), |acc, &(j, w)| acc + contrib[j] * Complex64::new(w, 0.0));
            cnorm(&sum)
        })
    }
}

/// Map for precomputed currents and windows; the currents are shared by
/// every observer illuminated by the same source.
pub fn scattering_map_with(
    currents: &SurfaceCurrents,
    windows: &EyeWindows,
    consts: &EmConstants,
    r_obs: &Point3,
) -> Result<ScatteringMap, EmError> {
    let contrib = contributions(currents, consts, r_obs)?;
    Ok(ScatteringMap {
        observation_point: *r_obs,
        magnitudes: windows.magnitudes(&contrib),
        eye_radius: windows.radius(),
    })
}

/// `|E_scat(r_obs; r0)|` for every sample point `r0` of `cloud`.
pub fn scattering_map(
    cloud: &SurfaceSampling,
    source: &DipoleSource,
    consts: &EmConstants,
    r_obs: &Point3,
    a0: f64,
    shadowing: bool,
) -> Result<ScatteringMap, EmError> {
    let currents = SurfaceCurrents::compute(cloud, source, consts, shadowing)?;
    let windows = EyeWindows::new(&cloud.points.points, a0)?;
    scattering_map_with(&currents, &windows, consts, r_obs)
}
