//! Solvability conditions, trace diagnostics, derivative validation, and a
//! numerical exercise of the graph maximum principle.
//!
//! The solvability conditions are: (S1) every target positive, (S2) for
//! every vertex subset U the targets sum to strictly less than 2 sum of
//! Theta(e) over edges meeting U, and (S3) the initial curvature dominates
//! the target. E(U) is read as "edges with at least one endpoint in U"; the
//! induced-edge reading would force negative targets on singletons,
//! contradicting (S1).

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use crate::complex::{ComplexTopology, TargetCurvature};
use crate::flow::{integrate_finite, FlowConfig, FlowError, FlowTrace, SolveReport, SolveStatus};
use crate::geometry::{assemble_jacobian, vertex_curvatures, GeometryError, PatternState};
use crate::variational::{newton_solve, VariationalError};

/// Brute-force subset enumeration cap: 2^22 subsets.
pub const BRUTE_LIMIT: usize = 22;
/// Sign tolerance for the maximum-principle check.
pub const SIGN_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("brute-force mode supports at most {BRUTE_LIMIT} vertices, got {0}")]
    TooLargeForBrute(usize),
    #[error("step out of range (0, 1e-3]: {0}")]
    StepOutOfRange(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace shape does not match the complex")]
    TraceMismatch,
    #[error("vertex index {0} out of range")]
    BadVertexIndex(usize),
    #[error("negative weight on edge {edge} at step {step}")]
    NegativeWeight { edge: usize, step: usize },
    #[error("weight-sum bound violated at step {step}, vertex {vertex}")]
    WeightBoundViolated { step: usize, vertex: usize },
    #[error("zeroth-order bound violated at step {step}, vertex {vertex}")]
    ZerothBoundViolated { step: usize, vertex: usize },
    #[error("initial data must be nonpositive; vertex {0} is positive")]
    PositiveInitialData(usize),
    #[error("buffer vertex {0} must start at zero")]
    BufferNotZero(usize),
    #[error("horizon and dt must be positive")]
    BadTime,
}

/// How (S2) subsets are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    /// All 2^|V| - 1 nonempty subsets; exhaustive.
    Brute,
    /// All singletons, the full set, and `samples` random subsets.
    Sampled { samples: usize, seed: u64 },
}

/// A vertex subset with its (S2) slack 2 sum Theta(E(U)) - sum T̂(U);
/// positive slack means the subset satisfies the condition.
#[derive(Debug, Clone, Serialize)]
pub struct SubsetSlack {
    pub vertices: Vec<String>,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct S3Report {
    pub ok: bool,
    pub first_violation: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub mode: CheckMode,
    pub s1_ok: bool,
    pub s1_first_violation: Option<String>,
    pub s2_ok: bool,
    /// First violating subset in enumeration order, present iff s2 failed.
    pub s2_violation: Option<SubsetSlack>,
    /// The checked subset with the smallest slack; on a passing brute run
    /// this is the tightest margin over all subsets.
    pub s2_min_slack: Option<SubsetSlack>,
    /// Present only when an initial state was supplied.
    pub s3: Option<S3Report>,
}

impl ConditionReport {
    pub fn all_ok(&self) -> bool {
        self.s1_ok && self.s2_ok && self.s3.as_ref().is_none_or(|s| s.ok)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

fn subset_slack(complex: &ComplexTopology, targets: &TargetCurvature, subset: &[bool]) -> f64 {
    let mut target_sum = 0.0;
    for (v, &inside) in subset.iter().enumerate() {
        if inside {
            target_sum += targets.get(v);
        }
    }
    let mut theta_sum = 0.0;
    for edge in complex.edges() {
        if subset[edge.i] || subset[edge.j] {
            theta_sum += edge.theta;
        }
    }
    2.0 * theta_sum - target_sum
}

fn subset_ids(complex: &ComplexTopology, subset: &[bool]) -> Vec<String> {
    subset
        .iter()
        .enumerate()
        .filter(|(_, inside)| **inside)
        .map(|(v, _)| complex.id(v).to_string())
        .collect()
}

/// Check (S1), (S2), and optionally (S3) at `state0`.
pub fn check_conditions(
    complex: &ComplexTopology,
    targets: &TargetCurvature,
    state0: Option<&PatternState>,
    mode: CheckMode,
) -> Result<ConditionReport, AnalysisError> {
    let n = complex.vertex_count();

    let mut s1_ok = true;
    let mut s1_first_violation = None;
    for v in 0..n {
        if !(targets.get(v) > 0.0) {
            s1_ok = false;
            s1_first_violation = Some(complex.id(v).to_string());
            break;
        }
    }

    // Subsets stream through a reusable buffer; the trackers keep copies of
    // the argmin and the first violation only.
    let mut min_slack: Option<(Vec<bool>, f64)> = None;
    let mut first_violation: Option<(Vec<bool>, f64)> = None;
    let mut consider = |subset: &[bool]| {
        let slack = subset_slack(complex, targets, subset);
        if min_slack.as_ref().is_none_or(|(_, s)| slack < *s) {
            min_slack = Some((subset.to_vec(), slack));
        }
        if slack <= 0.0 && first_violation.is_none() {
            first_violation = Some((subset.to_vec(), slack));
        }
    };

    match mode {
        CheckMode::Brute => {
            if n > BRUTE_LIMIT {
                return Err(AnalysisError::TooLargeForBrute(n));
            }
            let mut subset = vec![false; n];
            for mask in 1..(1u64 << n) {
                for (v, inside) in subset.iter_mut().enumerate() {
                    *inside = mask & (1 << v) != 0;
                }
                consider(&subset);
            }
        }
        CheckMode::Sampled { samples, seed } => {
            let mut subset = vec![false; n];
            for v in 0..n {
                subset.iter_mut().for_each(|b| *b = false);
                subset[v] = true;
                consider(&subset);
            }
            if n > 0 {
                consider(&vec![true; n]);
            }
            let mut rng = StdRng::seed_from_u64(seed);
            for _ in 0..samples {
                subset.iter_mut().for_each(|b| *b = rng.gen_bool(0.5));
                if subset.iter().any(|&b| b) {
                    consider(&subset);
                }
            }
        }
    }

    let to_subset = |pair: (Vec<bool>, f64)| SubsetSlack {
        vertices: subset_ids(complex, &pair.0),
        slack: pair.1,
    };
    let s2_ok = first_violation.is_none();
    let s2_violation = first_violation.map(to_subset);
    let s2_min_slack = min_slack.map(to_subset);

    let s3 = match state0 {
        None => None,
        Some(state) => {
            let t = vertex_curvatures(state, complex)?;
            let mut ok = true;
            let mut first = None;
            for (v, t_v) in t.iter().enumerate() {
                if *t_v < targets.get(v) {
                    ok = false;
                    first = Some(complex.id(v).to_string());
                    break;
                }
            }
            Some(S3Report {
                ok,
                first_violation: first,
            })
        }
    };

    Ok(ConditionReport {
        mode,
        s1_ok,
        s1_first_violation,
        s2_ok,
        s2_violation,
        s2_min_slack,
        s3,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneViolation {
    pub sample: usize,
    pub vertex: String,
    pub increase: f64,
}

/// Diagnostics over one trace; all checks are reported, none raise.
#[derive(Debug, Clone, Serialize)]
pub struct TraceDiagnostics {
    /// Whether T(0) >= T̂ held, i.e. whether the monotonicity statements
    /// apply to this trace at all.
    pub monotone_applicable: bool,
    /// (a) T(t) >= T̂ - eps at every sample (when applicable).
    pub curvature_dominance_ok: Option<bool>,
    /// (b) every u_i nonincreasing up to eps (when applicable).
    pub u_monotone_ok: Option<bool>,
    pub first_monotone_violation: Option<MonotoneViolation>,
    /// (c) T_i < 2 sum Theta at every sample, every vertex of degree >= 1.
    pub curvature_bound_ok: bool,
    /// |du_i/dt| = |T_i - T̂_i| <= 2 sum Theta + |T̂_i| at every sample.
    pub field_bound_ok: bool,
    /// |u_i(t)| <= |u_i(0)| + t (2 sum Theta + |T̂_i|) at every sample.
    pub linear_bound_ok: bool,
    /// Least-squares exponential decay rate of the residual norm, when a
    /// fit makes sense (at least three positive samples and real decay).
    pub decay_rate: Option<f64>,
}

impl TraceDiagnostics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Verify monotonicity, curvature bounds, and the a priori estimates along a
/// trace; `residual_tol` sets the integrator tolerance eps = 10 * tol.
pub fn verify_trace(
    trace: &FlowTrace,
    targets: &TargetCurvature,
    complex: &ComplexTopology,
    residual_tol: f64,
) -> Result<TraceDiagnostics, AnalysisError> {
    if trace.is_empty() {
        return Err(AnalysisError::EmptyTrace);
    }
    let n = complex.vertex_count();
    if targets.len() != n || trace.states().iter().any(|s| s.len() != n) {
        return Err(AnalysisError::TraceMismatch);
    }
    let eps = 10.0 * residual_tol;
    let bounds = complex.curvature_bounds();

    // T at a sample is residual + target; traces store residuals.
    let curvature_at = |k: usize, v: usize| trace.residuals()[k][v] + targets.get(v);

    let monotone_applicable = (0..n).all(|v| curvature_at(0, v) >= targets.get(v));

    let mut curvature_dominance_ok = None;
    let mut u_monotone_ok = None;
    let mut first_monotone_violation = None;
    if monotone_applicable {
        let mut dominance = true;
        'dom: for k in 0..trace.len() {
            for v in 0..n {
                if curvature_at(k, v) < targets.get(v) - eps {
                    dominance = false;
                    break 'dom;
                }
            }
        }
        curvature_dominance_ok = Some(dominance);

        let mut monotone = true;
        'mono: for k in 1..trace.len() {
            for v in 0..n {
                let increase = trace.state(k).u(v) - trace.state(k - 1).u(v);
                if increase > eps {
                    monotone = false;
                    first_monotone_violation = Some(MonotoneViolation {
                        sample: k,
                        vertex: complex.id(v).to_string(),
                        increase,
                    });
                    break 'mono;
                }
            }
        }
        u_monotone_ok = Some(monotone);
    }

    let mut curvature_bound_ok = true;
    let mut field_bound_ok = true;
    let mut linear_bound_ok = true;
    let t0 = trace.times()[0];
    for k in 0..trace.len() {
        let elapsed = trace.times()[k] - t0;
        for (v, bound) in bounds.iter().enumerate() {
            let t_v = curvature_at(k, v);
            if complex.degree(v) >= 1 && !(t_v < *bound) {
                curvature_bound_ok = false;
            }
            let rate_bound = bound + targets.get(v).abs();
            if trace.residuals()[k][v].abs() > rate_bound {
                field_bound_ok = false;
            }
            let allowed = trace.state(0).u(v).abs() + elapsed * rate_bound;
            if trace.state(k).u(v).abs() > allowed + 1e-12 * (1.0 + allowed.abs()) {
                linear_bound_ok = false;
            }
        }
    }

    Ok(TraceDiagnostics {
        monotone_applicable,
        curvature_dominance_ok,
        u_monotone_ok,
        first_monotone_violation,
        curvature_bound_ok,
        field_bound_ok,
        linear_bound_ok,
        decay_rate: fit_decay_rate(trace.times(), trace.residual_inf()),
    })
}

/// Least-squares slope of ln(residual) against t, returned as a positive
/// decay rate. None when fewer than three positive samples exist or the fit
/// shows no decay.
fn fit_decay_rate(times: &[f64], residual_inf: &[f64]) -> Option<f64> {
    let points: Vec<(f64, f64)> = times
        .iter()
        .zip(residual_inf)
        .filter(|(_, &r)| r > 0.0)
        .map(|(&t, &r)| (t, r.ln()))
        .collect();
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|(t, _)| t).sum();
    let sy: f64 = points.iter().map(|(_, y)| y).sum();
    let sxx: f64 = points.iter().map(|(t, _)| t * t).sum();
    let sxy: f64 = points.iter().map(|(t, y)| t * y).sum();
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    if slope < 0.0 {
        Some(-slope)
    } else {
        None
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FdReport {
    pub max_abs_deviation: f64,
    pub worst_row: String,
    pub worst_col: String,
    pub pass: bool,
}

impl FdReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Compare the assembled curvature Jacobian against central finite
/// differences of the curvature map at the given state.
pub fn fd_validate(
    complex: &ComplexTopology,
    state: &PatternState,
    step: f64,
    tol: f64,
) -> Result<FdReport, AnalysisError> {
    if !(step > 0.0 && step <= 1e-3) {
        return Err(AnalysisError::StepOutOfRange(step));
    }
    let n = complex.vertex_count();
    let analytic = assemble_jacobian(state, complex)?.to_dense();
    let mut max_dev = 0.0f64;
    let mut worst = (0usize, 0usize);
    for col in 0..n {
        let mut up = state.coords().to_vec();
        let mut dn = up.clone();
        up[col] += step;
        dn[col] -= step;
        let t_up = vertex_curvatures(&PatternState::new(up)?, complex)?;
        let t_dn = vertex_curvatures(&PatternState::new(dn)?, complex)?;
        for row in 0..n {
            let fd = (t_up[row] - t_dn[row]) / (2.0 * step);
            let dev = (fd - analytic[(row, col)]).abs();
            if dev > max_dev {
                max_dev = dev;
                worst = (row, col);
            }
        }
    }
    Ok(FdReport {
        max_abs_deviation: max_dev,
        worst_row: complex.id(worst.0).to_string(),
        worst_col: complex.id(worst.1).to_string(),
        pass: max_dev < tol,
    })
}

/// Time-dependent coefficient, one closure per edge or vertex.
pub type TimeCoefficient = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A finite truncation of the graph system df/dt = Delta_G f + g f with
/// time-dependent nonnegative weights, a buffer set held at zero, and the
/// uniform bounds the maximum principle requires.
pub struct MaxPrincipleSystem {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<TimeCoefficient>,
    zeroth: Vec<TimeCoefficient>,
    /// Uniform bound C: sum_j w_ij(t) < C must hold at all times.
    pub weight_sum_bound: f64,
    /// Upper bound C0 for the zeroth-order coefficient.
    pub zeroth_bound: f64,
    f0: Vec<f64>,
    pub horizon: f64,
    buffer: Vec<bool>,
}

impl MaxPrincipleSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        vertex_count: usize,
        edges: Vec<(usize, usize)>,
        weights: Vec<TimeCoefficient>,
        zeroth: Vec<TimeCoefficient>,
        weight_sum_bound: f64,
        zeroth_bound: f64,
        f0: Vec<f64>,
        horizon: f64,
        buffer: Vec<bool>,
    ) -> Result<Self, AnalysisError> {
        if !(horizon > 0.0) {
            return Err(AnalysisError::BadTime);
        }
        for &(i, j) in &edges {
            if i >= vertex_count || j >= vertex_count || i == j {
                return Err(AnalysisError::BadVertexIndex(i.max(j)));
            }
        }
        if f0.len() != vertex_count || buffer.len() != vertex_count || weights.len() != edges.len()
        {
            return Err(AnalysisError::TraceMismatch);
        }
        if zeroth.len() != vertex_count {
            return Err(AnalysisError::TraceMismatch);
        }
        for (v, &f) in f0.iter().enumerate() {
            if !(f <= 0.0) {
                return Err(AnalysisError::PositiveInitialData(v));
            }
            if buffer[v] && f != 0.0 {
                return Err(AnalysisError::BufferNotZero(v));
            }
        }
        Ok(Self {
            vertex_count,
            edges,
            weights,
            zeroth,
            weight_sum_bound,
            zeroth_bound,
            f0,
            horizon,
            buffer,
        })
    }

    /// Constant coefficients; the weight-sum bound is derived from the data
    /// with unit headroom.
    pub fn with_constants(
        vertex_count: usize,
        edges: Vec<(usize, usize, f64)>,
        g: Vec<f64>,
        f0: Vec<f64>,
        horizon: f64,
        buffer: Vec<bool>,
    ) -> Result<Self, AnalysisError> {
        let mut sums = vec![0.0; vertex_count];
        for &(i, j, w) in &edges {
            if i < vertex_count && j < vertex_count {
                sums[i] += w;
                sums[j] += w;
            }
        }
        let c = sums.iter().fold(0.0f64, |m, &s| m.max(s)) + 1.0;
        let c0 = g.iter().fold(0.0f64, |m, &gi| m.max(gi));
        let ends: Vec<(usize, usize)> = edges.iter().map(|&(i, j, _)| (i, j)).collect();
        let weights: Vec<TimeCoefficient> = edges
            .iter()
            .map(|&(_, _, w)| Box::new(move |_| w) as TimeCoefficient)
            .collect();
        let zeroth: Vec<TimeCoefficient> = g
            .iter()
            .map(|&gi| Box::new(move |_| gi) as TimeCoefficient)
            .collect();
        Self::new(
            vertex_count,
            ends,
            weights,
            zeroth,
            c,
            c0,
            f0,
            horizon,
            buffer,
        )
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Explicit Euler evolution of df/dt = Delta_G f + g f with the buffer
    /// held at zero. Checks the weight-sum and zeroth-order bounds at every
    /// step and reports the largest f value seen anywhere.
    pub fn evolve(&self, dt: f64) -> Result<MaxPrincipleRun, AnalysisError> {
        if !(dt > 0.0) {
            return Err(AnalysisError::BadTime);
        }
        let mut f = self.f0.clone();
        let mut max_f = f.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let steps = (self.horizon / dt).ceil() as usize;
        let stride = (steps / 32).max(1);
        let mut snapshots = vec![(0.0, f.clone())];

        let mut t = 0.0;
        for step_index in 0..steps {
            let h = dt.min(self.horizon - t);
            let mut weight_values = Vec::with_capacity(self.edges.len());
            let mut sums = vec![0.0; self.vertex_count];
            for (e, &(i, j)) in self.edges.iter().enumerate() {
                let w = (self.weights[e])(t);
                if w < 0.0 {
                    return Err(AnalysisError::NegativeWeight {
                        edge: e,
                        step: step_index,
                    });
                }
                weight_values.push(w);
                sums[i] += w;
                sums[j] += w;
            }
            for (v, &s) in sums.iter().enumerate() {
                if s >= self.weight_sum_bound {
                    return Err(AnalysisError::WeightBoundViolated {
                        step: step_index,
                        vertex: v,
                    });
                }
            }

            let mut delta = vec![0.0; self.vertex_count];
            for (e, &(i, j)) in self.edges.iter().enumerate() {
                let w = weight_values[e];
                delta[i] += w * (f[j] - f[i]);
                delta[j] += w * (f[i] - f[j]);
            }
            for v in 0..self.vertex_count {
                if self.buffer[v] {
                    continue;
                }
                let g = (self.zeroth[v])(t);
                if g > self.zeroth_bound {
                    return Err(AnalysisError::ZerothBoundViolated {
                        step: step_index,
                        vertex: v,
                    });
                }
                f[v] += h * (delta[v] + g * f[v]);
            }
            t += h;
            max_f = f.iter().fold(max_f, |m, &v| m.max(v));
            if (step_index + 1) % stride == 0 || step_index + 1 == steps {
                snapshots.push((t, f.clone()));
            }
        }

        Ok(MaxPrincipleRun {
            max_f,
            sign_preserved: max_f <= SIGN_EPS,
            steps,
            snapshots,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxPrincipleRun {
    /// Max over all vertices and all times (including t = 0) of f.
    pub max_f: f64,
    pub sign_preserved: bool,
    pub steps: usize,
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

/// Cross-solver agreement between the flow limit and the Newton minimizer.
#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub comparable: bool,
    pub flow_status: SolveStatus,
    pub newton_status: SolveStatus,
    /// Infinity norm of u_flow - u_newton, when both converged.
    pub u_distance: Option<f64>,
    /// Infinity norm of T(u_flow) - T̂, when both converged.
    pub flow_residual: Option<f64>,
    pub flow_report: SolveReport,
    pub newton_report: SolveReport,
}

impl AgreementReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

pub fn flow_vs_newton(
    complex: &ComplexTopology,
    targets: &TargetCurvature,
    init: &PatternState,
    config: &FlowConfig,
) -> Result<AgreementReport, AnalysisError> {
    let frozen = vec![false; complex.vertex_count()];
    let (flow_trace, flow_report) = integrate_finite(complex, targets, init, &frozen, config)?;
    let newton = newton_solve(complex, targets, init, config.residual_tol, 200)?;

    let comparable = flow_report.status == SolveStatus::Converged
        && newton.report.status == SolveStatus::Converged;
    let (u_distance, flow_residual) = if comparable {
        let flow_state = flow_trace.final_state().expect("trace is never empty");
        let t = vertex_curvatures(flow_state, complex)?;
        let res = t
            .iter()
            .zip(targets.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        (Some(flow_state.max_distance(&newton.state)), Some(res))
    } else {
        (None, None)
    };

    Ok(AgreementReport {
        comparable,
        flow_status: flow_report.status,
        newton_status: newton.report.status,
        u_distance,
        flow_residual,
        flow_report,
        newton_report: newton.report,
    })
}

/// Worst deviations of the edge-kernel identities over all edges of a
/// complex at one state; used by the validation command.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub max_cross_asymmetry: f64,
    pub max_law_of_sines_deviation: f64,
    pub max_lens_identity_deviation: f64,
    pub min_lens_area: f64,
    pub sign_pattern_ok: bool,
    pub curvature_bound_ok: bool,
}

impl IdentityReport {
    pub fn pass(&self) -> bool {
        self.max_cross_asymmetry < 1e-12
            && self.max_law_of_sines_deviation < 1e-12
            && self.max_lens_identity_deviation < 1e-12
            && self.min_lens_area >= 0.0
            && self.sign_pattern_ok
            && self.curvature_bound_ok
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

pub fn identity_checks(
    complex: &ComplexTopology,
    state: &PatternState,
) -> Result<IdentityReport, AnalysisError> {
    use crate::geometry::{edge_curvatures, edge_jacobian, half_angle, lens_area};

    let radii = state.radii();
    let mut max_cross = 0.0f64;
    let mut max_sines = 0.0f64;
    let mut max_lens_dev = 0.0f64;
    let mut min_area = f64::INFINITY;
    let mut signs_ok = true;
    for edge in complex.edges() {
        let (ri, rj) = (radii[edge.i], radii[edge.j]);
        let p = edge_jacobian(edge.theta, ri, rj)?;
        max_cross = max_cross.max((p.dti_duj - p.dtj_dui).abs());
        signs_ok &= p.dti_dui > 0.0
            && p.dtj_duj > 0.0
            && p.dti_duj < 0.0
            && p.dti_dui + p.dtj_dui > 0.0
            && p.dtj_duj + p.dti_duj > 0.0;
        let hi = half_angle(edge.theta, ri, rj)?;
        let hj = half_angle(edge.theta, rj, ri)?;
        let lhs = (hi / 2.0).sin() * ri.sin();
        let rhs = (hj / 2.0).sin() * rj.sin();
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        max_sines = max_sines.max((lhs - rhs).abs() / scale);
        let (ti, tj) = edge_curvatures(edge.theta, ri, rj)?;
        let area = lens_area(edge.theta, ri, rj)?;
        min_area = min_area.min(area);
        max_lens_dev = max_lens_dev.max((ti + tj + area - 2.0 * edge.theta).abs());
    }
    if complex.edge_count() == 0 {
        min_area = 0.0;
    }

    let t = vertex_curvatures(state, complex)?;
    let curvature_bound_ok = (0..complex.vertex_count())
        .filter(|&v| complex.degree(v) >= 1)
        .all(|v| t[v] < complex.curvature_bound(v));

    Ok(IdentityReport {
        max_cross_asymmetry: max_cross,
        max_law_of_sines_deviation: max_sines,
        max_lens_identity_deviation: max_lens_dev,
        min_lens_area: min_area,
        sign_pattern_ok: signs_ok,
        curvature_bound_ok,
    })
}

/// Bundle of validation results for one (complex, state) pair.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub fd: FdReport,
    pub identities: IdentityReport,
    pub pass: bool,
    pub wall_time_secs: f64,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

pub fn validate_state(
    complex: &ComplexTopology,
    state: &PatternState,
) -> Result<ValidationReport, AnalysisError> {
    let started = Instant::now();
    let fd = fd_validate(complex, state, 1e-6, 1e-6)?;
    let identities = identity_checks(complex, state)?;
    let pass = fd.pass && identities.pass();
    Ok(ValidationReport {
        fd,
        identities,
        pass,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::octahedron;
    use crate::flow::Integrator;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn two_vertex() -> ComplexTopology {
        ComplexTopology::build(
            vec!["a".into(), "b".into()],
            vec![("a".into(), "b".into(), FRAC_PI_2)],
            None,
        )
        .unwrap()
    }

    #[test]
    fn conditions_pass_on_unit_targets() {
        let c = two_vertex();
        let targets = TargetCurvature::constant(&c, 1.0).unwrap();
        let report = check_conditions(&c, &targets, None, CheckMode::Brute).unwrap();
        assert!(report.s1_ok && report.s2_ok);
        assert!(report.s2_violation.is_none());
        // Tightest subset is {a, b}: slack pi - 2.
        let tightest = report.s2_min_slack.unwrap();
        assert_eq!(tightest.vertices.len(), 2);
        assert_abs_diff_eq!(tightest.slack, PI - 2.0, epsilon = 1e-15);
    }

    #[test]
    fn s2_fails_on_oversized_target() {
        let c = two_vertex();
        let targets = TargetCurvature::from_values(&c, vec![4.0, 1.0]).unwrap();
        let report = check_conditions(&c, &targets, None, CheckMode::Brute).unwrap();
        assert!(report.s1_ok);
        assert!(!report.s2_ok);
        // The first violating subset in enumeration order is the singleton
        // {a}; the full set violates by more but is reached later.
        let violation = report.s2_violation.unwrap();
        assert_eq!(violation.vertices, vec!["a".to_string()]);
        assert_abs_diff_eq!(violation.slack, PI - 4.0, epsilon = 1e-15);
        assert!(report.s2_min_slack.unwrap().slack < violation.slack);
    }

    #[test]
    fn s1_fails_on_zero_target() {
        let c = two_vertex();
        let targets = TargetCurvature::from_values(&c, vec![1.0, 0.0]).unwrap();
        let report = check_conditions(&c, &targets, None, CheckMode::Brute).unwrap();
        assert!(!report.s1_ok);
        assert_eq!(report.s1_first_violation.as_deref(), Some("b"));
    }

    #[test]
    fn s3_checked_only_with_state() {
        let c = two_vertex();
        let targets = TargetCurvature::constant(&c, 1.0).unwrap();
        let report = check_conditions(&c, &targets, None, CheckMode::Brute).unwrap();
        assert!(report.s3.is_none());

        let state = PatternState::uniform(2, 0.0).unwrap();
        let report = check_conditions(&c, &targets, Some(&state), CheckMode::Brute).unwrap();
        // T at u = 0 is about 1.35 per vertex, above the unit target.
        assert!(report.s3.unwrap().ok);

        let high = TargetCurvature::constant(&c, 1.4).unwrap();
        let report = check_conditions(&c, &high, Some(&state), CheckMode::Brute).unwrap();
        let s3 = report.s3.unwrap();
        assert!(!s3.ok);
        assert_eq!(s3.first_violation.as_deref(), Some("a"));
    }

    #[test]
    fn brute_mode_rejects_oversized_complex() {
        let ids: Vec<crate::complex::VertexId> =
            (0..23).map(crate::complex::VertexId::Int).collect();
        let c = ComplexTopology::build(ids, vec![], None).unwrap();
        let targets = TargetCurvature::constant(&c, 1.0).unwrap();
        assert!(matches!(
            check_conditions(&c, &targets, None, CheckMode::Brute),
            Err(AnalysisError::TooLargeForBrute(23))
        ));
    }

    #[test]
    fn sampled_mode_catches_singleton_violation() {
        let c = two_vertex();
        let targets = TargetCurvature::from_values(&c, vec![4.0, 1.0]).unwrap();
        let report = check_conditions(
            &c,
            &targets,
            None,
            CheckMode::Sampled {
                samples: 16,
                seed: 7,
            },
        )
        .unwrap();
        assert!(!report.s2_ok);
    }

    #[test]
    fn sampled_mode_handles_complexes_beyond_word_size() {
        // 217 vertices: subsets cannot be u64 masks.
        let gen = crate::lattice::InfiniteComplexGenerator::lattice(
            crate::lattice::LatticeKind::TriangularDisk,
            FRAC_PI_2,
        )
        .unwrap();
        let ball = gen.extract_ball(8).unwrap();
        let targets = TargetCurvature::constant(&ball, 6.0).unwrap();
        let report = check_conditions(
            &ball,
            &targets,
            None,
            CheckMode::Sampled {
                samples: 256,
                seed: 3,
            },
        )
        .unwrap();
        assert!(report.s1_ok);
        assert!(report.s2_ok);
        assert!(report.s2_min_slack.unwrap().slack > 0.0);
    }

    #[test]
    fn trace_diagnostics_pass_on_converged_run() {
        let c = octahedron(FRAC_PI_2).unwrap();
        let targets = TargetCurvature::constant(&c, 4.0).unwrap();
        let init = PatternState::from_radii(&[FRAC_PI_4; 6]).unwrap();
        let config = FlowConfig::default();
        let (trace, report) = integrate_finite(&c, &targets, &init, &[false; 6], &config).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        let diag = verify_trace(&trace, &targets, &c, config.residual_tol).unwrap();
        assert!(diag.monotone_applicable);
        assert_eq!(diag.curvature_dominance_ok, Some(true));
        assert_eq!(diag.u_monotone_ok, Some(true));
        assert!(diag.curvature_bound_ok);
        assert!(diag.field_bound_ok);
        assert!(diag.linear_bound_ok);
        assert!(diag.decay_rate.unwrap() > 0.0);
    }

    #[test]
    fn fixed_point_trace_has_no_decay_rate() {
        let c = two_vertex();
        let s = PatternState::uniform(2, 0.0).unwrap();
        let t = vertex_curvatures(&s, &c).unwrap();
        let targets = TargetCurvature::from_values(&c, t).unwrap();
        let (trace, _) =
            integrate_finite(&c, &targets, &s, &[false, false], &FlowConfig::default()).unwrap();
        let diag = verify_trace(&trace, &targets, &c, 1e-10).unwrap();
        assert!(diag.decay_rate.is_none());
    }

    #[test]
    fn synthetic_monotone_violation_is_pinpointed() {
        let c = two_vertex();
        let u0 = PatternState::uniform(2, 0.5).unwrap();
        let u1 = PatternState::new(vec![0.4, 0.4]).unwrap();
        let u2 = PatternState::new(vec![0.45, 0.3]).unwrap(); // vertex a rises
        let curvature = |s: &PatternState| vertex_curvatures(s, &c).unwrap();
        let t0 = curvature(&u0);
        // Targets below the initial curvature so the monotone checks apply.
        let targets =
            TargetCurvature::from_values(&c, t0.iter().map(|t| t - 0.1).collect()).unwrap();
        let residuals: Vec<Vec<f64>> = [&u0, &u1, &u2]
            .iter()
            .map(|s| {
                curvature(s)
                    .iter()
                    .zip(targets.values())
                    .map(|(t, hat)| t - hat)
                    .collect()
            })
            .collect();
        let trace =
            FlowTrace::from_samples(vec![0.0, 1.0, 2.0], vec![u0, u1, u2], residuals).unwrap();
        let diag = verify_trace(&trace, &targets, &c, 1e-10).unwrap();
        assert_eq!(diag.u_monotone_ok, Some(false));
        let violation = diag.first_monotone_violation.unwrap();
        assert_eq!(violation.sample, 2);
        assert_eq!(violation.vertex, "a");
    }

    #[test]
    fn fd_validation_on_octahedron() {
        let c = octahedron(FRAC_PI_2).unwrap();
        let state = PatternState::new(vec![0.2, -0.3, 0.1, 0.0, 0.4, -0.1]).unwrap();
        let report = fd_validate(&c, &state, 1e-6, 1e-6).unwrap();
        assert!(report.pass, "max deviation {}", report.max_abs_deviation);
    }

    #[test]
    fn fd_validation_one_edge_cross_entry() {
        let c = two_vertex();
        let state = PatternState::uniform(2, 0.0).unwrap();
        let report = fd_validate(&c, &state, 1e-6, 1e-6).unwrap();
        assert!(report.pass);
        // The analytic off-diagonal equals -2/3 at this point.
        let l = assemble_jacobian(&state, &c).unwrap();
        assert_abs_diff_eq!(l.entry(0, 1), -2.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn fd_step_out_of_range() {
        let c = two_vertex();
        let state = PatternState::uniform(2, 0.0).unwrap();
        assert!(matches!(
            fd_validate(&c, &state, 0.0, 1e-6),
            Err(AnalysisError::StepOutOfRange(_))
        ));
        assert!(matches!(
            fd_validate(&c, &state, 1e-2, 1e-6),
            Err(AnalysisError::StepOutOfRange(_))
        ));
    }

    #[test]
    fn max_principle_constant_data_stays_put() {
        // Two vertices, unit weight, g = 0, f(0) = (-1, -1): the Laplacian
        // of a constant vanishes, so f never moves.
        let system = MaxPrincipleSystem::with_constants(
            2,
            vec![(0, 1, 1.0)],
            vec![0.0, 0.0],
            vec![-1.0, -1.0],
            5.0,
            vec![false, false],
        )
        .unwrap();
        let run = system.evolve(0.01).unwrap();
        assert_abs_diff_eq!(run.max_f, -1.0, epsilon = 1e-12);
        assert!(run.sign_preserved);
    }

    #[test]
    fn max_principle_path_graph() {
        let n = 50;
        let edges: Vec<(usize, usize, f64)> = (0..n - 1).map(|k| (k, k + 1, 1.0)).collect();
        let mut f0: Vec<f64> = (0..n).map(|k| -((k * 7919 % 97) as f64) / 97.0).collect();
        f0[0] = 0.0;
        f0[n - 1] = 0.0;
        let mut buffer = vec![false; n];
        buffer[0] = true;
        buffer[n - 1] = true;
        let system =
            MaxPrincipleSystem::with_constants(n, edges, vec![0.0; n], f0, 10.0, buffer).unwrap();
        let run = system.evolve(0.01).unwrap();
        assert!(run.max_f <= SIGN_EPS, "max f = {}", run.max_f);
    }

    #[test]
    fn max_principle_with_positive_growth() {
        // g = +2 everywhere: negative values may grow toward zero but cannot
        // cross it.
        let n = 10;
        let edges: Vec<(usize, usize, f64)> = (0..n - 1).map(|k| (k, k + 1, 0.5)).collect();
        let f0: Vec<f64> = (0..n).map(|k| -1.0 + 0.05 * (k as f64 % 3.0)).collect();
        let system =
            MaxPrincipleSystem::with_constants(n, edges, vec![2.0; n], f0, 10.0, vec![false; n])
                .unwrap();
        let run = system.evolve(0.01).unwrap();
        assert!(run.max_f <= SIGN_EPS, "max f = {}", run.max_f);
    }

    #[test]
    fn weight_bound_violation_is_identified() {
        let system = MaxPrincipleSystem::new(
            2,
            vec![(0, 1)],
            vec![Box::new(|t| if t > 0.5 { 3.0 } else { 1.0 })],
            vec![Box::new(|_| 0.0), Box::new(|_| 0.0)],
            2.0, // bound violated once the weight jumps to 3
            0.0,
            vec![-1.0, -1.0],
            2.0,
            vec![false, false],
        )
        .unwrap();
        let err = system.evolve(0.1).unwrap_err();
        match err {
            AnalysisError::WeightBoundViolated { step, vertex } => {
                assert!(step >= 5);
                assert!(vertex < 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn positive_initial_data_rejected() {
        assert!(matches!(
            MaxPrincipleSystem::with_constants(
                2,
                vec![(0, 1, 1.0)],
                vec![0.0, 0.0],
                vec![-1.0, 0.5],
                1.0,
                vec![false, false],
            ),
            Err(AnalysisError::PositiveInitialData(1))
        ));
    }

    #[test]
    fn flow_vs_newton_octahedron_agreement() {
        let c = octahedron(FRAC_PI_2).unwrap();
        let targets = TargetCurvature::constant(&c, 4.0).unwrap();
        let init = PatternState::from_radii(&[FRAC_PI_4; 6]).unwrap();
        let report = flow_vs_newton(&c, &targets, &init, &FlowConfig::default()).unwrap();
        assert!(report.comparable);
        assert!(report.u_distance.unwrap() < 1e-8);
        assert!(report.flow_residual.unwrap() < 1e-9);
    }

    #[test]
    fn flow_vs_newton_incomparable_when_flow_diverges() {
        // Isolated vertex with a positive target: (S2) fails, the flow guard
        // trips, and the comparison is marked incomparable.
        let c = ComplexTopology::build(vec!["v".into()], vec![], None).unwrap();
        let targets = TargetCurvature::constant(&c, 1.0).unwrap();
        let init = PatternState::uniform(1, 0.0).unwrap();
        let config = FlowConfig {
            integrator: Integrator::Euler,
            dt: 0.5,
            ..FlowConfig::default()
        };
        let report = flow_vs_newton(&c, &targets, &init, &config).unwrap();
        assert!(!report.comparable);
        assert_eq!(report.flow_status, SolveStatus::GuardTripped);
        assert!(report.u_distance.is_none());
    }

    #[test]
    fn identity_checks_pass_on_octahedron() {
        let c = octahedron(FRAC_PI_2).unwrap();
        let state = PatternState::new(vec![0.3, -0.2, 0.1, 0.0, -0.5, 0.4]).unwrap();
        let report = identity_checks(&c, &state).unwrap();
        assert!(report.pass(), "{report:?}");
    }
}
