//! Spherical-trigonometry kernels for circle patterns.
//!
//! A pattern assigns each vertex a circle of radius r in (0, pi/2); adjacent
//! circles meet at the prescribed angle Theta(e). The kernels here compute
//! the half angles Theta(e, v) of the edge quadrilaterals, the per-edge and
//! per-vertex total geodesic curvatures, the lens areas where adjacent disks
//! overlap, and the analytic partial derivatives of the curvatures in the
//! log-cotangent coordinate u = ln cot r, assembled into a sparse symmetric
//! Jacobian.
//!
//! All operations are pure functions of their inputs.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{ComplexTopology, VertexId};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("intersection angle {0} out of range (0, pi/2]")]
    ThetaOutOfRange(f64),
    #[error("radius {0} out of range (0, pi/2)")]
    RadiusOutOfRange(f64),
    #[error("coordinate {0} is not finite")]
    NonFiniteCoordinate(f64),
    #[error("state covers {state} vertices but the complex has {complex}")]
    StateMismatch { state: usize, complex: usize },
    #[error("unknown vertex id {0}")]
    UnknownVertex(VertexId),
}

/// Per-vertex log-cotangent coordinates u_i = ln cot r_i.
///
/// The map u = ln cot r is a bijection (0, pi/2) -> R, so every finite u is
/// a legal state and the induced radius is structurally inside the open
/// interval; no clamping is ever needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternState {
    u: Vec<f64>,
}

/// r = arccot(e^u), evaluated as atan(e^{-u}) which stays accurate for
/// large |u| at both ends of the interval.
pub fn radius_from_u(u: f64) -> f64 {
    (-u).exp().atan()
}

/// u = ln cot r = ln cos r - ln sin r for r in (0, pi/2).
pub fn u_from_radius(r: f64) -> Result<f64, GeometryError> {
    if !(r > 0.0 && r < FRAC_PI_2) {
        return Err(GeometryError::RadiusOutOfRange(r));
    }
    Ok(r.cos().ln() - r.sin().ln())
}

impl PatternState {
    pub fn new(u: Vec<f64>) -> Result<Self, GeometryError> {
        for &value in &u {
            if !value.is_finite() {
                return Err(GeometryError::NonFiniteCoordinate(value));
            }
        }
        Ok(Self { u })
    }

    pub fn uniform(len: usize, u: f64) -> Result<Self, GeometryError> {
        Self::new(vec![u; len])
    }

    pub fn from_radii(radii: &[f64]) -> Result<Self, GeometryError> {
        let u = radii
            .iter()
            .map(|&r| u_from_radius(r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { u })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self, v: usize) -> f64 {
        self.u[v]
    }

    pub fn coords(&self) -> &[f64] {
        &self.u
    }

    pub fn radius(&self, v: usize) -> f64 {
        radius_from_u(self.u[v])
    }

    pub fn radii(&self) -> Vec<f64> {
        self.u.iter().map(|&u| radius_from_u(u)).collect()
    }

    /// Max over vertices of |u_i - other.u_i|.
    pub fn max_distance(&self, other: &PatternState) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_domain(theta: f64, r_i: f64, r_j: f64) -> Result<(), GeometryError> {
    if !(theta > 0.0 && theta <= FRAC_PI_2) {
        return Err(GeometryError::ThetaOutOfRange(theta));
    }
    for r in [r_i, r_j] {
        if !(r > 0.0 && r < FRAC_PI_2) {
            return Err(GeometryError::RadiusOutOfRange(r));
        }
    }
    Ok(())
}

/// Half angle Theta(e, v_i) of the edge quadrilateral at the circle of v_i,
/// from the spherical cotangent four-part formula
///
/// ```text
/// cot(Theta(e,v_i)/2) = (cot r_j sin r_i + cos r_i cos Theta(e)) / sin Theta(e)
/// ```
///
/// inverted through atan2 so the result stays accurate when the half angle
/// approaches either end of (0, pi). Swapping `r_i` and `r_j` yields
/// Theta(e, v_j).
pub fn half_angle(theta: f64, r_i: f64, r_j: f64) -> Result<f64, GeometryError> {
    check_domain(theta, r_i, r_j)?;
    Ok(half_angle_raw(theta, r_i, r_j))
}

pub(crate) fn half_angle_raw(theta: f64, r_i: f64, r_j: f64) -> f64 {
    let cot_rj = r_j.cos() / r_j.sin();
    let numer = cot_rj * r_i.sin() + r_i.cos() * theta.cos();
    2.0 * theta.sin().atan2(numer)
}

/// Per-edge total geodesic curvature contributions
/// (T_(e,v_i), T_(e,v_j)) with T_(e,v) = Theta(e, v) cos r_v.
pub fn edge_curvatures(theta: f64, r_i: f64, r_j: f64) -> Result<(f64, f64), GeometryError> {
    check_domain(theta, r_i, r_j)?;
    Ok((
        half_angle_raw(theta, r_i, r_j) * r_i.cos(),
        half_angle_raw(theta, r_j, r_i) * r_j.cos(),
    ))
}

pub(crate) fn edge_curvature_raw(theta: f64, r_self: f64, r_other: f64) -> f64 {
    half_angle_raw(theta, r_self, r_other) * r_self.cos()
}

/// Area of the lens where the two disks of an edge overlap:
/// A = 2 Theta(e) - T_(e,v_i) - T_(e,v_j) by Gauss-Bonnet applied to the
/// lens. The exact value is nonnegative on the legal domain; round-off dust
/// below 1e-13 is clamped to zero.
pub fn lens_area(theta: f64, r_i: f64, r_j: f64) -> Result<f64, GeometryError> {
    let (t_ei, t_ej) = edge_curvatures(theta, r_i, r_j)?;
    let area = 2.0 * theta - t_ei - t_ej;
    Ok(if area < 0.0 && area > -1e-13 {
        0.0
    } else {
        area
    })
}

/// Cone angle, geodesic curvature, circumference, and total geodesic
/// curvature of the circle at one vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VertexGeometry {
    /// Cone angle alpha = sum of half angles over incident edges.
    pub alpha: f64,
    /// Geodesic curvature k = cot r.
    pub k: f64,
    /// Circumference l = alpha sin r.
    pub l: f64,
    /// Total geodesic curvature T = k l = alpha cos r.
    pub t: f64,
}

pub fn vertex_geometry(
    state: &PatternState,
    complex: &ComplexTopology,
    vertex: &VertexId,
) -> Result<VertexGeometry, GeometryError> {
    let v = complex
        .index_of(vertex)
        .ok_or_else(|| GeometryError::UnknownVertex(vertex.clone()))?;
    check_state(state, complex)?;
    let r = state.radius(v);
    let mut alpha = 0.0;
    for &e in complex.incident_edges(v) {
        let edge = complex.edges()[e];
        alpha += half_angle_raw(edge.theta, r, state.radius(edge.other(v)));
    }
    Ok(VertexGeometry {
        alpha,
        k: r.cos() / r.sin(),
        l: alpha * r.sin(),
        t: alpha * r.cos(),
    })
}

fn check_state(state: &PatternState, complex: &ComplexTopology) -> Result<(), GeometryError> {
    if state.len() != complex.vertex_count() {
        return Err(GeometryError::StateMismatch {
            state: state.len(),
            complex: complex.vertex_count(),
        });
    }
    Ok(())
}

/// Total geodesic curvature T_i for every vertex in one pass over the edges.
pub fn vertex_curvatures(
    state: &PatternState,
    complex: &ComplexTopology,
) -> Result<Vec<f64>, GeometryError> {
    check_state(state, complex)?;
    let radii = state.radii();
    let mut alpha = vec![0.0; complex.vertex_count()];
    for edge in complex.edges() {
        alpha[edge.i] += half_angle_raw(edge.theta, radii[edge.i], radii[edge.j]);
        alpha[edge.j] += half_angle_raw(edge.theta, radii[edge.j], radii[edge.i]);
    }
    Ok(alpha.iter().zip(&radii).map(|(a, r)| a * r.cos()).collect())
}

/// The four partial derivatives of the per-edge curvature contributions with
/// respect to the u-coordinates of the endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePartials {
    /// dT_(e,v_i)/du_i, positive.
    pub dti_dui: f64,
    /// dT_(e,v_i)/du_j, negative.
    pub dti_duj: f64,
    /// dT_(e,v_j)/du_i; equals `dti_duj` by the symmetry of the geometry.
    pub dtj_dui: f64,
    /// dT_(e,v_j)/du_j, positive.
    pub dtj_duj: f64,
}

/// Analytic partials of T_(e,v) = Theta(e,v) cos r_v, obtained by
/// differentiating the four-part formula and applying dr/du = -sin r cos r.
///
/// The i-side and j-side cross partials are evaluated by independent
/// differentiation routes; their equality (with the law of sines as the
/// bridge) and the sign pattern are theorems of the geometry exercised by
/// the test suite, not identities imposed here.
pub fn edge_jacobian(theta: f64, r_i: f64, r_j: f64) -> Result<EdgePartials, GeometryError> {
    check_domain(theta, r_i, r_j)?;
    let s = theta.sin();
    let c = theta.cos();
    let (si, ci) = r_i.sin_cos();
    let (sj, cj) = r_j.sin_cos();
    let th_i = half_angle_raw(theta, r_i, r_j);
    let th_j = half_angle_raw(theta, r_j, r_i);
    let shi2 = (th_i / 2.0).sin().powi(2);
    let shj2 = (th_j / 2.0).sin().powi(2);

    let dti_dui = th_i * si * si * ci + 2.0 * si * ci * ci * shi2 * ((cj / sj) * ci - si * c) / s;
    let dti_duj = -2.0 * ci * cj * shi2 * si / (sj * s);
    let dtj_dui = -2.0 * ci * cj * shj2 * sj / (si * s);
    let dtj_duj = th_j * sj * sj * cj + 2.0 * sj * cj * cj * shj2 * ((ci / si) * cj - sj * c) / s;

    Ok(EdgePartials {
        dti_dui,
        dti_duj,
        dtj_dui,
        dtj_duj,
    })
}

/// Everything the solvers need about one edge at a given state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeGeometry {
    pub half_angle_i: f64,
    pub half_angle_j: f64,
    pub t_ei: f64,
    pub t_ej: f64,
    pub area: f64,
    pub partials: EdgePartials,
}

pub fn edge_geometry(theta: f64, r_i: f64, r_j: f64) -> Result<EdgeGeometry, GeometryError> {
    let half_angle_i = half_angle(theta, r_i, r_j)?;
    let half_angle_j = half_angle_raw(theta, r_j, r_i);
    let t_ei = half_angle_i * r_i.cos();
    let t_ej = half_angle_j * r_j.cos();
    Ok(EdgeGeometry {
        half_angle_i,
        half_angle_j,
        t_ei,
        t_ej,
        area: lens_area(theta, r_i, r_j)?,
        partials: edge_jacobian(theta, r_i, r_j)?,
    })
}

/// Sparse symmetric matrix L with L_ij = dT_i/du_j, nonzero only on the
/// diagonal and on pairs joined by an edge. The two directions of each
/// off-diagonal entry are kept as computed by their own differentiation
/// routes; they agree to round-off.
#[derive(Debug, Clone)]
pub struct CurvatureJacobian {
    diag: Vec<f64>,
    ends: Vec<(usize, usize)>,
    off_ij: Vec<f64>,
    off_ji: Vec<f64>,
}

impl CurvatureJacobian {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Iterate the off-diagonal entries as (i, j, L_ij, L_ji) per edge.
    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        self.ends
            .iter()
            .zip(self.off_ij.iter().zip(&self.off_ji))
            .map(|(&(i, j), (&ij, &ji))| (i, j, ij, ji))
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        if row == col {
            return self.diag[row];
        }
        for (k, &(i, j)) in self.ends.iter().enumerate() {
            if (i, j) == (row, col) {
                return self.off_ij[k];
            }
            if (i, j) == (col, row) {
                return self.off_ji[k];
            }
        }
        0.0
    }

    pub fn row_abs_sums(&self) -> Vec<f64> {
        let mut sums: Vec<f64> = self.diag.iter().map(|d| d.abs()).collect();
        for (k, &(i, j)) in self.ends.iter().enumerate() {
            sums[i] += self.off_ij[k].abs();
            sums[j] += self.off_ji[k].abs();
        }
        sums
    }

    pub fn max_row_abs_sum(&self) -> f64 {
        self.row_abs_sums().into_iter().fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, xi)| d * xi).collect();
        for (k, &(i, j)) in self.ends.iter().enumerate() {
            y[i] += self.off_ij[k] * x[j];
            y[j] += self.off_ji[k] * x[i];
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (v, &d) in self.diag.iter().enumerate() {
            m[(v, v)] = d;
        }
        for (k, &(i, j)) in self.ends.iter().enumerate() {
            m[(i, j)] = self.off_ij[k];
            m[(j, i)] = self.off_ji[k];
        }
        m
    }
}

/// Aggregate the per-edge partials into the curvature Jacobian:
/// L_ii = sum over incident edges of dT_(e,v_i)/du_i and
/// L_ij = dT_(e,v_i)/du_j on the edge joining i and j.
pub fn assemble_jacobian(
    state: &PatternState,
    complex: &ComplexTopology,
) -> Result<CurvatureJacobian, GeometryError> {
    check_state(state, complex)?;
    let radii = state.radii();
    let mut diag = vec![0.0; complex.vertex_count()];
    let mut ends = Vec::with_capacity(complex.edge_count());
    let mut off_ij = Vec::with_capacity(complex.edge_count());
    let mut off_ji = Vec::with_capacity(complex.edge_count());
    for edge in complex.edges() {
        let p = edge_jacobian(edge.theta, radii[edge.i], radii[edge.j])?;
        diag[edge.i] += p.dti_dui;
        diag[edge.j] += p.dtj_duj;
        ends.push((edge.i, edge.j));
        off_ij.push(p.dti_duj);
        off_ji.push(p.dtj_dui);
    }
    Ok(CurvatureJacobian {
        diag,
        ends,
        off_ij,
        off_ji,
    })
}
