//! The curvature potential and its damped Newton minimizer.
//!
//! Each edge carries the 1-form omega(e) = T_(e,v_i) du_i + T_(e,v_j) du_j,
//! which is closed because the mixed partials agree; its line integral from
//! a base point defines a convex per-edge potential. The total potential
//!
//! ```text
//! E(u) = sum_e E_e(u_i, u_j) - sum_v T̂_v u_v
//! ```
//!
//! has gradient T - T̂ and Hessian equal to the curvature Jacobian, which
//! makes minimizing E an independent route to the same solutions the flow
//! converges to.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use thiserror::Error;

use crate::complex::{ComplexTopology, TargetCurvature};
use crate::flow::{FlowError, FlowTrace, SolveReport, SolveStatus};
use crate::geometry::{
    assemble_jacobian, edge_curvature_raw, radius_from_u, vertex_curvatures, GeometryError,
    PatternState,
};

/// Absolute tolerance for the adaptive edge quadrature.
const QUAD_TOL: f64 = 1e-13;
/// Armijo sufficient-decrease constant and backtracking factor.
const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MIN_STEP: f64 = 1e-14;
/// Once the predicted decrease falls below this (relative to |E|), the
/// Armijo test drowns in quadrature noise; the undamped Newton step is
/// taken instead.
const NOISE_FLOOR: f64 = 1e-11;

#[derive(Debug, Error)]
pub enum VariationalError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("targets cover {targets} vertices but the complex has {complex}")]
    TargetMismatch { targets: usize, complex: usize },
    #[error("base state covers {base} vertices but the complex has {complex}")]
    BaseMismatch { base: usize, complex: usize },
    #[error("tolerance must be positive")]
    BadTolerance,
}

/// Potential value together with the state it is normalized at, so that
/// E(base) = 0 by construction.
#[derive(Debug, Clone)]
pub struct PotentialValue {
    pub value: f64,
    pub base: PatternState,
}

/// Adaptive Simpson quadrature with Richardson acceptance; the integrands
/// here are analytic and bounded by pi, so the recursion stays shallow.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let refined = left + right;
        if depth == 0 || (refined - whole).abs() <= 15.0 * tol {
            return refined + (refined - whole) / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    sign * recurse(f, lo, hi, fa, fm, fb, whole, tol, 48)
}

/// T of the varying endpoint as a function of its own u, the other endpoint
/// held at `u_other`.
fn curvature_of_u(theta: f64, u_self: f64, u_other: f64) -> f64 {
    edge_curvature_raw(theta, radius_from_u(u_self), radius_from_u(u_other))
}

/// Line integral of omega(e) from `base` to `(u_i, u_j)` along the
/// axis-aligned two-segment path: first u_i moves with u_j at base, then u_j
/// moves with u_i at its target. Closedness of omega makes the value path
/// independent; tests integrate the reversed path to confirm.
pub fn edge_potential(
    theta: f64,
    u_i: f64,
    u_j: f64,
    base: (f64, f64),
) -> Result<f64, VariationalError> {
    if !(theta > 0.0 && theta <= FRAC_PI_2) {
        return Err(GeometryError::ThetaOutOfRange(theta).into());
    }
    for u in [u_i, u_j, base.0, base.1] {
        if !u.is_finite() {
            return Err(GeometryError::NonFiniteCoordinate(u).into());
        }
    }
    let first = adaptive_simpson(&|s| curvature_of_u(theta, s, base.1), base.0, u_i, QUAD_TOL);
    let second = adaptive_simpson(&|s| curvature_of_u(theta, s, u_i), base.1, u_j, QUAD_TOL);
    Ok(first + second)
}

/// E(u) = sum_e E_e - sum_v T̂_v (u_v - base_v), normalized so that the base
/// state evaluates to zero.
pub fn total_potential(
    state: &PatternState,
    complex: &ComplexTopology,
    targets: &TargetCurvature,
    base: &PatternState,
) -> Result<PotentialValue, VariationalError> {
    if targets.len() != complex.vertex_count() {
        return Err(VariationalError::TargetMismatch {
            targets: targets.len(),
            complex: complex.vertex_count(),
        });
    }
    if base.len() != complex.vertex_count() {
        return Err(VariationalError::BaseMismatch {
            base: base.len(),
            complex: complex.vertex_count(),
        });
    }
    if state.len() != complex.vertex_count() {
        return Err(GeometryError::StateMismatch {
            state: state.len(),
            complex: complex.vertex_count(),
        }
        .into());
    }
    let mut value = 0.0;
    for edge in complex.edges() {
        value += edge_potential(
            edge.theta,
            state.u(edge.i),
            state.u(edge.j),
            (base.u(edge.i), base.u(edge.j)),
        )?;
    }
    for v in 0..complex.vertex_count() {
        value -= targets.get(v) * (state.u(v) - base.u(v));
    }
    Ok(PotentialValue {
        value,
        base: base.clone(),
    })
}

/// Outcome of a Newton solve: the final state, a report in the same schema
/// as the flow solver, the per-iteration trace (time column = iteration),
/// and how often a singular Hessian forced a plain gradient step.
#[derive(Debug)]
pub struct NewtonResult {
    pub state: PatternState,
    pub report: SolveReport,
    pub trace: FlowTrace,
    pub hessian_fallbacks: usize,
}

/// Damped Newton descent on the curvature potential with Armijo
/// backtracking. Stops when the residual infinity norm drops below `tol`;
/// reports horizon_reached when `max_iter` is exhausted. A Hessian whose
/// Cholesky factorization fails (isolated vertices, exact degeneracy) falls
/// back to a gradient step.
pub fn newton_solve(
    complex: &ComplexTopology,
    targets: &TargetCurvature,
    init: &PatternState,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonResult, VariationalError> {
    if !(tol > 0.0) {
        return Err(VariationalError::BadTolerance);
    }
    let started = Instant::now();
    let mut state = init.clone();
    let mut fallbacks = 0usize;

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut residuals = Vec::new();

    let curvature = |s: &PatternState| -> Result<Vec<f64>, VariationalError> {
        Ok(vertex_curvatures(s, complex)?)
    };
    let residual_of = |s: &PatternState| -> Result<Vec<f64>, VariationalError> {
        let t = curvature(s)?;
        Ok(t.iter()
            .zip(targets.values())
            .map(|(ti, hat)| ti - hat)
            .collect())
    };
    if targets.len() != complex.vertex_count() {
        return Err(VariationalError::TargetMismatch {
            targets: targets.len(),
            complex: complex.vertex_count(),
        });
    }

    let energy = |s: &PatternState| -> Result<f64, VariationalError> {
        Ok(total_potential(s, complex, targets, init)?.value)
    };

    let mut res = residual_of(&state)?;
    let mut rinf = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let mut iterations = 0usize;
    times.push(0.0);
    states.push(state.clone());
    residuals.push(res.clone());

    let status = loop {
        if rinf <= tol {
            break SolveStatus::Converged;
        }
        if iterations >= max_iter {
            break SolveStatus::HorizonReached;
        }

        let hessian = assemble_jacobian(&state, complex)?.to_dense();
        let rhs = nalgebra::DVector::from_iterator(res.len(), res.iter().map(|r| -r));
        let mut direction: Vec<f64> = match nalgebra::Cholesky::new(hessian) {
            Some(ch) => ch.solve(&rhs).iter().copied().collect(),
            None => {
                fallbacks += 1;
                rhs.iter().copied().collect()
            }
        };
        // Guarantee descent; a non-descent direction degrades to the
        // negative gradient.
        let mut slope: f64 = res.iter().zip(&direction).map(|(g, d)| g * d).sum();
        if !(slope < 0.0) {
            fallbacks += 1;
            direction = res.iter().map(|r| -r).collect();
            slope = -res.iter().map(|r| r * r).sum::<f64>();
        }

        let trial_at = |alpha: f64| -> Result<PatternState, VariationalError> {
            Ok(PatternState::new(
                state
                    .coords()
                    .iter()
                    .zip(&direction)
                    .map(|(u, d)| u + alpha * d)
                    .collect(),
            )?)
        };
        let e0 = energy(&state)?;
        let next = if -slope <= NOISE_FLOOR * (1.0 + e0.abs()) {
            trial_at(1.0)?
        } else {
            let mut alpha = 1.0;
            loop {
                let trial = trial_at(alpha)?;
                if energy(&trial)? <= e0 + ARMIJO_C * alpha * slope || alpha <= MIN_STEP {
                    break trial;
                }
                alpha *= ARMIJO_SHRINK;
            }
        };

        state = next;
        res = residual_of(&state)?;
        rinf = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        iterations += 1;
        times.push(iterations as f64);
        states.push(state.clone());
        residuals.push(res.clone());
    };

    let report = SolveReport {
        status,
        steps: iterations,
        final_residual: rinf,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let trace = FlowTrace::from_samples(times, states, residuals)?;
    Ok(NewtonResult {
        state,
        report,
        trace,
        hessian_fallbacks: fallbacks,
    })
}
