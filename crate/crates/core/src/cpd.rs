//! Coherent point drift: non-rigid registration of a template cloud `Y`
//! (M points, the GMM centroids) onto an observed cloud `X` (N points).
//!
//! The displacement field is `v(y) = G W` with the Gaussian kernel
//! `G_ij = exp(-|y_i - y_j|² / 2β²)`, so the deformed template `T = Y + G W`
//! keeps the template's point indexing.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, PointCloudFrame};
use crate::{io, par};

/// Point dimension.
const D: f64 = 3.0;

#[derive(Debug, thiserror::Error)]
pub enum CpdError {
    #[error("invalid CPD parameters: {0}")]
    InvalidParams(String),
    #[error("registration needs at least one point in each cloud")]
    EmptyCloud,
    #[error("initial variance is zero (clouds coincide); perturb or skip registration")]
    DegenerateInit,
    #[error("linear solve for W failed (condition estimate {condition:e})")]
    SingularSystem { condition: f64 },
    #[error("template rows without posterior support: {rows:?}")]
    UnsupportedRows { rows: Vec<usize> },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] io::IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpdParams {
    /// Kernel width β, meters.
    pub beta: f64,
    /// Motion-coherence weight λ.
    pub lambda_reg: f64,
    /// Uniform outlier weight w in [0, 1).
    pub outlier_w: f64,
    pub max_iters: usize,
    /// Convergence threshold on the relative change of σ².
    pub tol: f64,
    /// Lower clamp for σ², m². Reaching it counts as converged.
    pub sigma2_floor: f64,
    /// Minimum posterior mass Σ_n p_mn a template row needs.
    pub support_eps: f64,
}

impl Default for CpdParams {
    fn default() -> Self {
        CpdParams {
            beta: 0.1,
            lambda_reg: 2.0,
            outlier_w: 0.1,
            max_iters: 100,
            tol: 1e-6,
            sigma2_floor: 1e-10,
            support_eps: 1e-12,
        }
    }
}

impl CpdParams {
    pub fn validate(&self) -> Result<(), CpdError> {
        let bad = |m: &str| Err(CpdError::InvalidParams(m.to_string()));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return bad("lambda_reg must be non-negative");
        }
        if !(0.0..1.0).contains(&self.outlier_w) {
            return bad("outlier_w must lie in [0, 1)");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.sigma2_floor > 0.0) {
            return bad("sigma2_floor must be positive");
        }
        if !(self.support_eps >= 0.0) {
            return bad("support_eps must be non-negative");
        }
        Ok(())
    }
}

/// Posterior correspondence probabilities, M×N (template rows, observation columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub posterior: DMatrix<f64>,
}

/// Result of one M-step.
#[derive(Debug, Clone)]
pub struct MStep {
    /// M×3 kernel weights.
    pub weights: DMatrix<f64>,
    pub sigma2: f64,
    /// `T = Y + G W`, template indexing.
    pub transformed: Vec<Point3>,
}

/// A fitted deformation of the template onto one observed frame.
#[derive(Debug, Clone)]
pub struct DeformationField {
    pub template: Arc<PointCloudFrame>,
    pub kernel: Arc<DMatrix<f64>>,
    /// M×3 kernel weights W, meters.
    pub weights: DMatrix<f64>,
    pub sigma2: f64,
    pub iterations_run: usize,
    /// False when `max_iters` ran out before the σ² criterion was met.
    pub converged: bool,
    /// EM objective per iteration: the mixture negative log-likelihood
    /// (outlier component included) plus the coherence penalty
    /// `λ/2 tr(WᵀGW)`. Entry 0 is the starting point, the last entry the
    /// returned state.
    pub neg_log_likelihood_trace: Vec<f64>,
    pub params: CpdParams,
    /// Timestamp of the observed frame.
    pub timestamp: f64,
}

/// `(1/(D M N)) Σ_mn |x_n - y_m|²`.
pub fn init_sigma2(x: &PointCloudFrame, y: &PointCloudFrame) -> Result<f64, CpdError> {
    sigma2_between(&x.points, &y.points)
}

fn sigma2_between(x: &[Point3], y: &[Point3]) -> Result<f64, CpdError> {
    if x.is_empty() || y.is_empty() {
        return Err(CpdError::EmptyCloud);
    }
    // Σ_mn |x_n - y_m|² = M Σ|x|² + N Σ|y|² - 2 (Σx)·(Σy), on centered data.
    let c = x.iter().sum::<Point3>() / x.len() as f64;
    let sx: Point3 = x.iter().map(|p| p - c).sum();
    let sy: Point3 = y.iter().map(|p| p - c).sum();
    let xx: f64 = x.iter().map(|p| (p - c).norm_squared()).sum();
    let yy: f64 = y.iter().map(|p| (p - c).norm_squared()).sum();
    let (m, n) = (y.len() as f64, x.len() as f64);
    let total = m * xx + n * yy - 2.0 * sx.dot(&sy);
    let s2 = total.max(0.0) / (D * m * n);
    if !(s2 > 0.0) {
        return Err(CpdError::DegenerateInit);
    }
    Ok(s2)
}

/// Mean squared distance from each template point to its nearest data point,
/// per coordinate. Seeds σ² for warm starts so the first E-step cannot
/// underflow when the frame moved more than the previous σ² allows.
fn nearest_residual(x: &[Point3], t: &[Point3]) -> f64 {
    let total: f64 = t
        .iter()
        .map(|tm| {
            x.iter()
                .map(|xn| (xn - tm).norm_squared())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / (D * t.len() as f64)
}

/// Gaussian motion-coherence kernel over the template points.
pub fn build_kernel(y: &PointCloudFrame, beta: f64) -> DMatrix<f64> {
    kernel_of(&y.points, beta)
}

fn kernel_of(y: &[Point3], beta: f64) -> DMatrix<f64> {
    let m = y.len();
    let inv = -1.0 / (2.0 * beta * beta);
    let mut g = DMatrix::zeros(m, m);
    par::for_each_chunk_mut(g.as_mut_slice(), m.max(1), |j, col| {
        for (i, v) in col.iter_mut().enumerate() {
            *v = if i == j {
                1.0
            } else {
                ((y[i] - y[j]).norm_squared() * inv).exp()
            };
        }
    });
    g
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// E-step: posterior `p_mn` of centroid `m` having generated `x_n`, with the
/// uniform outlier term. Exponents are shifted by the column maximum.
pub fn e_step(
    x: &PointCloudFrame,
    t: &PointCloudFrame,
    sigma2: f64,
    outlier_w: f64,
) -> Result<Correspondence, CpdError> {
    if !(sigma2 > 0.0) {
        return Err(CpdError::InvalidParams(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(0.0..1.0).contains(&outlier_w) {
        return Err(CpdError::InvalidParams("outlier_w must lie in [0, 1)".into()));
    }
    if x.is_empty() || t.is_empty() {
        return Err(CpdError::EmptyCloud);
    }
    Ok(posterior(&x.points, &t.points, sigma2, outlier_w).0)
}

/// Posterior matrix and the mixture negative log-likelihood at `(T, σ²)`.
fn posterior(x: &[Point3], t: &[Point3], sigma2: f64, w: f64) -> (Correspondence, f64) {
    let (m, n) = (t.len(), x.len());
    let two_pi_s2 = 2.0 * std::f64::consts::PI * sigma2;
    let log_c = if w > 0.0 {
        (m as f64 * w / (n as f64 * (1.0 - w))).ln() + 0.5 * D * two_pi_s2.ln()
    } else {
        f64::NEG_INFINITY
    };
    let log_mix = (1.0 - w).ln() - (m as f64).ln() - 0.5 * D * two_pi_s2.ln();
    let inv = -1.0 / (2.0 * sigma2);
    let columns = par::map_range(n, |j| {
        let xn = x[j];
        let mut col: Vec<f64> = t.iter().map(|tm| (xn - tm).norm_squared() * inv).collect();
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for e in col.iter_mut() {
            *e = (*e - max).exp();
            s += *e;
        }
        let log_den = log_add_exp(max + s.ln(), log_c);
        let scale = (max - log_den).exp();
        for e in col.iter_mut() {
            *e *= scale;
        }
        (col, -(log_mix + log_den))
    });
    let mut p = DMatrix::zeros(m, n);
    let mut nll = 0.0;
    for (j, (col, l)) in columns.into_iter().enumerate() {
        p.column_mut(j).copy_from_slice(&col);
        nll += l;
    }
    (Correspondence { posterior: p }, nll)
}

/// M-step: solves for W and updates σ².
///
/// The W update `(G + λσ²P̃⁻¹) W = P̃⁻¹PX - Y` is solved in the scaled
/// symmetric form `(D G D + λσ² I) Z = D⁻¹(PX - P̃Y)`, `W = D Z`, with
/// `D = P̃^{1/2}`; LU on `(P̃G + λσ²I)` is the fallback when that system is
/// not positive definite (λσ² = 0).
pub fn m_step(
    x: &PointCloudFrame,
    y: &PointCloudFrame,
    g: &DMatrix<f64>,
    p: &Correspondence,
    sigma2_prev: f64,
    params: &CpdParams,
) -> Result<MStep, CpdError> {
    let (m, n) = (y.len(), x.len());
    if g.shape() != (m, m) || p.posterior.shape() != (m, n) {
        return Err(CpdError::Shape(format!(
            "G {:?}, P {:?} for M={m}, N={n}",
            g.shape(),
            p.posterior.shape()
        )));
    }
    m_step_points(&x.points, &y.points, g, &p.posterior, sigma2_prev, params)
}

fn m_step_points(
    x: &[Point3],
    y: &[Point3],
    g: &DMatrix<f64>,
    p: &DMatrix<f64>,
    sigma2_prev: f64,
    params: &CpdParams,
) -> Result<MStep, CpdError> {
    let m = y.len();
    let pt1: DVector<f64> = p.column_sum(); // P̃ diagonal, length M
    let p1: DVector<f64> = p.row_sum().transpose(); // P̆ diagonal, length N
    let np = p1.sum();

    let rows: Vec<usize> = (0..m).filter(|&i| !(pt1[i] > params.support_eps)).collect();
    if !rows.is_empty() {
        return Err(CpdError::UnsupportedRows { rows });
    }

    let xm = to_matrix(x);
    let ym = to_matrix(y);
    let px = p * &xm; // M×3
    let mut b = px.clone();
    for i in 0..m {
        for c in 0..3 {
            b[(i, c)] -= pt1[i] * ym[(i, c)];
        }
    }

    let reg = params.lambda_reg * sigma2_prev;
    let w = solve_weights(g, &pt1, &b, reg)?;

    let gw = g * &w;
    let t: Vec<Point3> = (0..m)
        .map(|i| y[i] + Point3::new(gw[(i, 0)], gw[(i, 1)], gw[(i, 2)]))
        .collect();

    let x_term: f64 = x.iter().zip(p1.iter()).map(|(xn, &s)| s * xn.norm_squared()).sum();
    let cross: f64 = (0..m)
        .map(|i| px[(i, 0)] * t[i].x + px[(i, 1)] * t[i].y + px[(i, 2)] * t[i].z)
        .sum();
    let t_term: f64 = t.iter().zip(pt1.iter()).map(|(tm, &s)| s * tm.norm_squared()).sum();
    let raw = (x_term - 2.0 * cross + t_term) / (np * D);
    let sigma2 = if raw.is_finite() {
        raw.max(params.sigma2_floor)
    } else {
        params.sigma2_floor
    };
    Ok(MStep {
        weights: w,
        sigma2,
        transformed: t,
    })
}

fn solve_weights(
    g: &DMatrix<f64>,
    pt1: &DVector<f64>,
    b: &DMatrix<f64>,
    reg: f64,
) -> Result<DMatrix<f64>, CpdError> {
    let m = g.nrows();
    let d: Vec<f64> = pt1.iter().map(|v| v.sqrt()).collect();
    if reg > 0.0 {
        let mut s = DMatrix::zeros(m, m);
        par::for_each_chunk_mut(s.as_mut_slice(), m.max(1), |j, col| {
            for (i, v) in col.iter_mut().enumerate() {
                *v = d[i] * g[(i, j)] * d[j];
            }
            col[j] += reg;
        });
        let mut rhs = b.clone();
        for i in 0..m {
            for c in 0..3 {
                rhs[(i, c)] /= d[i];
            }
        }
        if let Some(chol) = s.cholesky() {
            let mut z = chol.solve(&rhs);
            for i in 0..m {
                for c in 0..3 {
                    z[(i, c)] *= d[i];
                }
            }
            if z.iter().all(|v| v.is_finite()) {
                return Ok(z);
            }
        }
    }
    let mut a = DMatrix::zeros(m, m);
    for j in 0..m {
        for i in 0..m {
            a[(i, j)] = pt1[i] * g[(i, j)];
        }
        a[(j, j)] += reg;
    }
    let lu = a.lu();
    let diag = lu.u().diagonal();
    let max = diag.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    match lu.solve(b) {
        Some(w) if w.iter().all(|v| v.is_finite()) && condition < 1e15 => Ok(w),
        _ => Err(CpdError::SingularSystem { condition }),
    }
}

fn to_matrix(points: &[Point3]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 3, |i, c| points[i][c])
}

/// Starting state for a registration, usually the previous frame's result.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub weights: DMatrix<f64>,
    pub sigma2: f64,
}

impl From<&DeformationField> for WarmStart {
    fn from(f: &DeformationField) -> Self {
        WarmStart {
            weights: f.weights.clone(),
            sigma2: f.sigma2,
        }
    }
}

/// A template with its precomputed kernel, reused across frames.
#[derive(Debug, Clone)]
pub struct Registrar {
    template: Arc<PointCloudFrame>,
    kernel: Arc<DMatrix<f64>>,
    params: CpdParams,
}

impl Registrar {
    pub fn new(template: PointCloudFrame, params: CpdParams) -> Result<Self, CpdError> {
        params.validate()?;
        if template.is_empty() {
            return Err(CpdError::EmptyCloud);
        }
        let kernel = build_kernel(&template, params.beta);
        Ok(Registrar {
            template: Arc::new(template),
            kernel: Arc::new(kernel),
            params,
        })
    }

    pub fn template(&self) -> &PointCloudFrame {
        &self.template
    }

    pub fn params(&self) -> &CpdParams {
        &self.params
    }

    /// Runs EM from `W = 0` and the pairwise-distance σ² (cold), or from a
    /// previous state (warm).
    pub fn register(
        &self,
        x: &PointCloudFrame,
        warm: Option<&WarmStart>,
    ) -> Result<DeformationField, CpdError> {
        let params = &self.params;
        let m = self.template.len();
        if x.is_empty() {
            return Err(CpdError::EmptyCloud);
        }
        // Work in coordinates centered on X; every quantity is translation invariant.
        let c = x.centroid();
        let xs: Vec<Point3> = x.points.iter().map(|p| p - c).collect();
        let ys: Vec<Point3> = self.template.points.iter().map(|p| p - c).collect();
        let g = &*self.kernel;

        let (mut w, mut sigma2) = match warm {
            Some(ws) => {
                if ws.weights.shape() != (m, 3) {
                    return Err(CpdError::Shape(format!(
                        "warm-start W is {:?}, expected ({m}, 3)",
                        ws.weights.shape()
                    )));
                }
                let t0 = deform(&ys, g, &ws.weights);
                let s2 = ws.sigma2.max(nearest_residual(&xs, &t0)).max(params.sigma2_floor);
                (ws.weights.clone(), s2)
            }
            None => (DMatrix::zeros(m, 3), sigma2_between(&xs, &ys)?),
        };
        let mut t = deform(&ys, g, &w);

        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        while iterations < params.max_iters {
            let (p, nll) = posterior(&xs, &t, sigma2, params.outlier_w);
            trace.push(nll + penalty(g, &w, params.lambda_reg));
            let step = match m_step_points(&xs, &ys, g, &p.posterior, sigma2, params) {
                Ok(step) => step,
                // Support lost after progress means σ² collapsed onto the
                // matched points; keep the last supported state.
                Err(CpdError::UnsupportedRows { .. }) if iterations > 0 => {
                    trace.pop();
                    converged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            iterations += 1;
            let prev = sigma2;
            w = step.weights;
            t = step.transformed;
            sigma2 = step.sigma2;
            if sigma2 <= params.sigma2_floor || ((sigma2 - prev) / prev).abs() < params.tol {
                converged = true;
                break;
            }
        }
        let (_, nll) = posterior(&xs, &t, sigma2, params.outlier_w);
        trace.push(nll + penalty(g, &w, params.lambda_reg));

        Ok(DeformationField {
            template: Arc::clone(&self.template),
            kernel: Arc::clone(&self.kernel),
            weights: w,
            sigma2,
            iterations_run: iterations,
            converged,
            neg_log_likelihood_trace: trace,
            params: *params,
            timestamp: x.timestamp,
        })
    }
}

fn deform(y: &[Point3], g: &DMatrix<f64>, w: &DMatrix<f64>) -> Vec<Point3> {
    let gw = g * w;
    y.iter()
        .enumerate()
        .map(|(i, p)| p + Point3::new(gw[(i, 0)], gw[(i, 1)], gw[(i, 2)]))
        .collect()
}

fn penalty(g: &DMatrix<f64>, w: &DMatrix<f64>, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let gw = g * w;
    0.5 * lambda * w.component_mul(&gw).sum()
}

/// Cold-start registration of template `y` onto `x`.
pub fn register(
    x: &PointCloudFrame,
    y: &PointCloudFrame,
    params: &CpdParams,
) -> Result<DeformationField, CpdError> {
    Registrar::new(y.clone(), *params)?.register(x, None)
}

/// The deformed template `T = Y + G W`, in template order, stamped with the
/// observed frame's time.
pub fn apply_deformation(field: &DeformationField) -> PointCloudFrame {
    PointCloudFrame {
        points: deform(&field.template.points, &field.kernel, &field.weights),
        normals: None,
        timestamp: field.timestamp,
    }
}

/// The displacement field `v(p) = Σ_m G(p, y_m) w_m` of a fit, evaluated at
/// points other than the template's, such as a finer sampling of the same
/// surface. The kernel matrix is built once and reused for every frame.
#[derive(Debug, Clone)]
pub struct FieldInterpolator {
    points: Vec<Point3>,
    /// P×M.
    kernel: DMatrix<f64>,
}

impl FieldInterpolator {
    pub fn new(points: &[Point3], template: &PointCloudFrame, beta: f64) -> Self {
        let (p, m) = (points.len(), template.len());
        let inv = -1.0 / (2.0 * beta * beta);
        let mut kernel = DMatrix::zeros(p, m);
        par::for_each_chunk_mut(kernel.as_mut_slice(), p.max(1), |j, col| {
            let y = &template.points[j];
            for (i, v) in col.iter_mut().enumerate() {
                *v = ((points[i] - y).norm_squared() * inv).exp();
            }
        });
        FieldInterpolator {
            points: points.to_vec(),
            kernel,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `p + v(p)` for every point, given the M×3 weights of a fit.
    pub fn apply(&self, weights: &DMatrix<f64>) -> Result<Vec<Point3>, CpdError> {
        if weights.shape() != (self.kernel.ncols(), 3) {
            return Err(CpdError::Shape(format!(
                "W is {:?}, expected ({}, 3)",
                weights.shape(),
                self.kernel.ncols()
            )));
        }
        Ok(deform(&self.points, &self.kernel, weights))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    beta: f64,
    lambda_reg: f64,
    outlier_w: f64,
    sigma2: f64,
    iterations: usize,
    converged: bool,
    points: usize,
    timestamp: f64,
}

/// Writes W as an M-row CSV (`w_x,w_y,w_z`) plus a JSON header.
pub fn write_field(field: &DeformationField, csv: &Path, json: &Path) -> Result<(), CpdError> {
    let rows: Vec<Vec<f64>> = (0..field.weights.nrows())
        .map(|i| (0..3).map(|c| field.weights[(i, c)]).collect())
        .collect();
    io::write_csv(csv, &["w_x", "w_y", "w_z"], &rows)?;
    io::write_json(
        json,
        &FieldHeader {
            beta: field.params.beta,
            lambda_reg: field.params.lambda_reg,
            outlier_w: field.params.outlier_w,
            sigma2: field.sigma2,
            iterations: field.iterations_run,
            converged: field.converged,
            points: field.weights.nrows(),
            timestamp: field.timestamp,
        },
    )?;
    Ok(())
}

/// Reads the weights written by [`write_field`].
pub fn read_weights(csv: &Path) -> Result<DMatrix<f64>, CpdError> {
    let (_, rows) = io::read_csv(csv)?;
    if rows.iter().any(|r| r.len() != 3) {
        return Err(CpdError::Shape(format!("{} is not an M×3 table", csv.display())));
    }
    Ok(DMatrix::from_fn(rows.len(), 3, |i, c| rows[i][c]))
}
