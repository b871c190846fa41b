//! Time integration of the prescribed-curvature flow du_i/dt = -(T_i - T̂_i).
//!
//! Integration happens in the u-coordinate, so radii stay inside (0, pi/2)
//! structurally. Frozen vertices keep their initial u bit-for-bit; the
//! exhaustion solver approximates the flow on an infinite complex by running
//! on nested balls with the outer ring frozen and comparing the solutions on
//! a fixed interior window.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{ComplexError, ComplexTopology, TargetCurvature, VertexId};
use crate::geometry::{assemble_jacobian, vertex_curvatures, GeometryError, PatternState};
use crate::lattice::InfiniteComplexGenerator;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("targets cover {targets} vertices but the complex has {complex}")]
    TargetMismatch { targets: usize, complex: usize },
    #[error("frozen mask covers {mask} vertices but the complex has {complex}")]
    FrozenMismatch { mask: usize, complex: usize },
    #[error("field value at vertex index {0} is not finite")]
    NonFiniteField(usize),
    #[error("trace sample times must be strictly increasing")]
    NonMonotoneTimes,
    #[error("trace arrays have mismatched lengths")]
    TraceShape,
    #[error("no value for vertex {0}")]
    MissingValue(VertexId),
    #[error("value for vertex {0} is not finite")]
    NonFiniteValue(VertexId),
    #[error("exhaustion levels must be nonempty and strictly increasing")]
    BadLevels,
    #[error("window radius {window} must be smaller than the smallest level {level}")]
    WindowTooLarge { window: usize, level: usize },
    #[error("horizon must be positive")]
    BadHorizon,
    #[error("guard |u| > {guard} tripped during exhaustion level {level}")]
    ExhaustionGuard { level: usize, guard: f64 },
}

/// Explicit time-stepping schemes. `Adaptive` takes classical RK4 stages
/// with the step size capped by the Jacobian row-sum stability bound
/// dt <= 0.5 / max_i sum_j |L_ij| at every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
    Adaptive,
}

impl FromStr for Integrator {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            "adaptive" => Ok(Integrator::Adaptive),
            _ => Err(FlowError::InvalidConfig(
                "integrator must be euler, rk4 or adaptive",
            )),
        }
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
            Integrator::Adaptive => "adaptive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub integrator: Integrator,
    /// Base step; the adaptive integrator may shorten it per step.
    pub dt: f64,
    pub t_end: f64,
    /// Stop once the residual infinity norm over non-frozen vertices is
    /// below this.
    pub residual_tol: f64,
    /// Escape bound: |u_i| beyond this reports guard_tripped.
    pub u_guard: f64,
    /// Record a trace sample every this many accepted steps.
    pub record_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            integrator: Integrator::Adaptive,
            dt: 0.05,
            t_end: 1e4,
            residual_tol: 1e-10,
            u_guard: 50.0,
            record_every: 16,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.dt > 0.0) {
            return Err(FlowError::InvalidConfig("dt must be positive"));
        }
        if !(self.t_end > 0.0) {
            return Err(FlowError::InvalidConfig("t_end must be positive"));
        }
        if !(self.residual_tol > 0.0) {
            return Err(FlowError::InvalidConfig("residual_tol must be positive"));
        }
        if !(self.u_guard > 0.0) {
            return Err(FlowError::InvalidConfig("u_guard must be positive"));
        }
        if self.record_every == 0 {
            return Err(FlowError::InvalidConfig("record_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    HorizonReached,
    GuardTripped,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::HorizonReached => "horizon_reached",
            SolveStatus::GuardTripped => "guard_tripped",
        })
    }
}

/// Outcome summary shared by the flow integrator and the Newton solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub steps: usize,
    pub final_residual: f64,
    pub wall_time_secs: f64,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Time series of states and residuals along one run.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    times: Vec<f64>,
    states: Vec<PatternState>,
    residuals: Vec<Vec<f64>>,
    residual_inf: Vec<f64>,
}

impl FlowTrace {
    fn empty() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            residuals: Vec::new(),
            residual_inf: Vec::new(),
        }
    }

    /// Assemble a trace from raw samples; the infinity norm is taken over
    /// all vertices of each residual vector.
    pub fn from_samples(
        times: Vec<f64>,
        states: Vec<PatternState>,
        residuals: Vec<Vec<f64>>,
    ) -> Result<Self, FlowError> {
        if times.len() != states.len() || times.len() != residuals.len() {
            return Err(FlowError::TraceShape);
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FlowError::NonMonotoneTimes);
        }
        let residual_inf = residuals.iter().map(|r| inf_norm(r)).collect();
        Ok(Self {
            times,
            states,
            residuals,
            residual_inf,
        })
    }

    fn push(&mut self, t: f64, state: PatternState, residual: Vec<f64>, rinf: f64) {
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.states.push(state);
        self.residuals.push(residual);
        self.residual_inf.push(rinf);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[PatternState] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &PatternState {
        &self.states[k]
    }

    pub fn residuals(&self) -> &[Vec<f64>] {
        &self.residuals
    }

    pub fn residual_inf(&self) -> &[f64] {
        &self.residual_inf
    }

    pub fn final_state(&self) -> Option<&PatternState> {
        self.states.last()
    }

    /// Long-format CSV: one row per (sample, vertex) with columns
    /// time, vertex_id, u, r, T, residual.
    pub fn write_csv<W: io::Write>(
        &self,
        complex: &ComplexTopology,
        targets: &TargetCurvature,
        writer: W,
    ) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "vertex_id", "u", "r", "T", "residual"])?;
        for (k, &t) in self.times.iter().enumerate() {
            let state = &self.states[k];
            let res = &self.residuals[k];
            for (v, r) in res.iter().enumerate() {
                w.write_record(&[
                    t.to_string(),
                    complex.id(v).to_string(),
                    state.u(v).to_string(),
                    state.radius(v).to_string(),
                    (r + targets.get(v)).to_string(),
                    r.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn inf_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn inf_norm_unfrozen(values: &[f64], frozen: &[bool]) -> f64 {
    values
        .iter()
        .zip(frozen)
        .filter(|(_, f)| !**f)
        .fold(0.0, |m, (v, _)| m.max(v.abs()))
}

fn check_coverage(
    complex: &ComplexTopology,
    targets: &TargetCurvature,
    state: &PatternState,
) -> Result<(), FlowError> {
    if targets.len() != complex.vertex_count() {
        return Err(FlowError::TargetMismatch {
            targets: targets.len(),
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
    Ok(())
}

/// Per-vertex residual T_i - T̂_i at the given state.
pub fn residual(
    state: &PatternState,
    complex: &ComplexTopology,
    targets: &TargetCurvature,
) -> Result<Vec<f64>, FlowError> {
    check_coverage(complex, targets, state)?;
    let t = vertex_curvatures(state, complex)?;
    Ok(t.iter()
        .zip(targets.values())
        .map(|(ti, hat)| ti - hat)
        .collect())
}

/// The flow vector field: -(T_i - T̂_i) on evolving vertices, zero on
/// frozen ones.
fn field(
    state: &PatternState,
    complex: &ComplexTopology,
    targets: &TargetCurvature,
    frozen: &[bool],
) -> Result<Vec<f64>, FlowError> {
    let res = residual(state, complex, targets)?;
    let mut f = Vec::with_capacity(res.len());
    for (v, (r, &is_frozen)) in res.iter().zip(frozen).enumerate() {
        let value = if is_frozen { 0.0 } else { -r };
        if !value.is_finite() {
            return Err(FlowError::NonFiniteField(v));
        }
        f.push(value);
    }
    Ok(f)
}

fn displaced(
    base: &PatternState,
    slope: &[f64],
    dt: f64,
    frozen: &[bool],
) -> Result<PatternState, FlowError> {
    let u: Vec<f64> = base
        .coords()
        .iter()
        .zip(slope.iter().zip(frozen))
        .map(|(&u, (&k, &f))| if f { u } else { u + dt * k })
        .collect();
    Ok(PatternState::new(u)?)
}

/// One explicit step of the flow; frozen vertices are returned unchanged.
pub fn step(
    state: &PatternState,
    complex: &ComplexTopology,
    targets: &TargetCurvature,
    frozen: &[bool],
    dt: f64,
    method: Integrator,
) -> Result<PatternState, FlowError> {
    if !(dt > 0.0) {
        return Err(FlowError::InvalidConfig("dt must be positive"));
    }
    if frozen.len() != complex.vertex_count() {
        return Err(FlowError::FrozenMismatch {
            mask: frozen.len(),
            complex: complex.vertex_count(),
        });
    }
    check_coverage(complex, targets, state)?;
    match method {
        Integrator::Euler => {
            let k1 = field(state, complex, targets, frozen)?;
            displaced(state, &k1, dt, frozen)
        }
        // A single adaptive step is an RK4 step; the step-size policy lives
        // in the integration loop.
        Integrator::Rk4 | Integrator::Adaptive => {
            let k1 = field(state, complex, targets, frozen)?;
            let s2 = displaced(state, &k1, dt / 2.0, frozen)?;
            let k2 = field(&s2, complex, targets, frozen)?;
            let s3 = displaced(state, &k2, dt / 2.0, frozen)?;
            let k3 = field(&s3, complex, targets, frozen)?;
            let s4 = displaced(state, &k3, dt, frozen)?;
            let k4 = field(&s4, complex, targets, frozen)?;
            let combined: Vec<f64> = k1
                .iter()
                .zip(k2.iter().zip(k3.iter().zip(&k4)))
                .map(|(a, (b, (c, d)))| (a + 2.0 * b + 2.0 * c + d) / 6.0)
                .collect();
            displaced(state, &combined, dt, frozen)
        }
    }
}

fn step_size(
    state: &PatternState,
    complex: &ComplexTopology,
    config: &FlowConfig,
    remaining: f64,
) -> Result<f64, FlowError> {
    let mut dt = config.dt.min(remaining);
    if config.integrator == Integrator::Adaptive {
        let max_row = assemble_jacobian(state, complex)?.max_row_abs_sum();
        if max_row > 0.0 {
            dt = dt.min(0.5 / max_row);
        }
    }
    Ok(dt)
}

/// Integrate the flow on a finite complex until the residual tolerance is
/// met on the evolving vertices, the horizon is reached, or the escape
/// guard trips (reported, not raised).
pub fn integrate_finite(
    complex: &ComplexTopology,
    targets: &TargetCurvature,
    init: &PatternState,
    frozen: &[bool],
    config: &FlowConfig,
) -> Result<(FlowTrace, SolveReport), FlowError> {
    config.validate()?;
    if frozen.len() != complex.vertex_count() {
        return Err(FlowError::FrozenMismatch {
            mask: frozen.len(),
            complex: complex.vertex_count(),
        });
    }
    check_coverage(complex, targets, init)?;

    let started = Instant::now();
    let mut trace = FlowTrace::empty();
    let mut state = init.clone();
    let mut t = 0.0;
    let mut steps = 0usize;

    let mut res = residual(&state, complex, targets)?;
    let mut rinf = inf_norm_unfrozen(&res, frozen);
    trace.push(t, state.clone(), res.clone(), rinf);

    let status = loop {
        if rinf <= config.residual_tol {
            break SolveStatus::Converged;
        }
        if t >= config.t_end {
            break SolveStatus::HorizonReached;
        }
        let dt = step_size(&state, complex, config, config.t_end - t)?;
        state = step(&state, complex, targets, frozen, dt, config.integrator)?;
        t += dt;
        steps += 1;
        res = residual(&state, complex, targets)?;
        rinf = inf_norm_unfrozen(&res, frozen);

        let guard_hit = state.coords().iter().any(|u| u.abs() > config.u_guard);
        if steps.is_multiple_of(config.record_every) || guard_hit {
            trace.push(t, state.clone(), res.clone(), rinf);
        }
        if guard_hit {
            break SolveStatus::GuardTripped;
        }
    };

    if trace.times.last() != Some(&t) && t > 0.0 {
        trace.push(t, state.clone(), res.clone(), rinf);
    }
    let report = SolveReport {
        status,
        steps,
        final_residual: rinf,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((trace, report))
}

/// Fixed-horizon integration that records the state exactly at the given
/// sample times (the first of which must be 0). No early stopping; used by
/// the exhaustion scheme so traces at different levels share a time grid.
pub fn integrate_sampled(
    complex: &ComplexTopology,
    targets: &TargetCurvature,
    init: &PatternState,
    frozen: &[bool],
    config: &FlowConfig,
    sample_times: &[f64],
) -> Result<(FlowTrace, SolveReport), FlowError> {
    config.validate()?;
    check_coverage(complex, targets, init)?;
    if sample_times.is_empty() || sample_times[0] != 0.0 {
        return Err(FlowError::InvalidConfig("sample times must start at 0"));
    }
    if sample_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FlowError::NonMonotoneTimes);
    }

    let started = Instant::now();
    let mut trace = FlowTrace::empty();
    let mut state = init.clone();
    let mut steps = 0usize;
    let mut guard_hit = false;

    let res0 = residual(&state, complex, targets)?;
    let rinf0 = inf_norm_unfrozen(&res0, frozen);
    trace.push(0.0, state.clone(), res0, rinf0);

    'outer: for window in sample_times.windows(2) {
        let (mut t, t_next) = (window[0], window[1]);
        while t < t_next {
            let dt = step_size(&state, complex, config, t_next - t)?;
            state = step(&state, complex, targets, frozen, dt, config.integrator)?;
            t += dt;
            steps += 1;
            if state.coords().iter().any(|u| u.abs() > config.u_guard) {
                guard_hit = true;
                break 'outer;
            }
        }
        let res = residual(&state, complex, targets)?;
        let rinf = inf_norm_unfrozen(&res, frozen);
        trace.push(t_next, state.clone(), res, rinf);
    }

    let final_res = residual(&state, complex, targets)?;
    let rinf = inf_norm_unfrozen(&final_res, frozen);
    let status = if guard_hit {
        SolveStatus::GuardTripped
    } else if rinf <= config.residual_tol {
        SolveStatus::Converged
    } else {
        SolveStatus::HorizonReached
    };
    let report = SolveReport {
        status,
        steps,
        final_residual: rinf,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((trace, report))
}

/// Assigns a value to every vertex: a constant, or a map keyed by the
/// display form of the vertex id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValueRule {
    Constant(f64),
    PerVertex(BTreeMap<String, f64>),
}

impl ValueRule {
    pub fn eval(&self, id: &VertexId) -> Result<f64, FlowError> {
        let value = match self {
            ValueRule::Constant(v) => *v,
            ValueRule::PerVertex(map) => *map
                .get(&id.to_string())
                .ok_or_else(|| FlowError::MissingValue(id.clone()))?,
        };
        if !value.is_finite() {
            return Err(FlowError::NonFiniteValue(id.clone()));
        }
        Ok(value)
    }

    pub fn values_for(&self, complex: &ComplexTopology) -> Result<Vec<f64>, FlowError> {
        complex.ids().iter().map(|id| self.eval(id)).collect()
    }
}

/// Number of uniform time samples used for the window comparisons.
pub const EXHAUSTION_SAMPLES: usize = 64;

#[derive(Debug, Clone, Serialize)]
pub struct ExhaustionLevel {
    pub n: usize,
    pub vertex_count: usize,
    pub report: SolveReport,
}

/// Sup over the window vertices and all sample times of |u at level
/// `lower` - u at level `upper`|.
#[derive(Debug, Clone, Serialize)]
pub struct WindowComparison {
    pub lower: usize,
    pub upper: usize,
    pub sup_diff: f64,
}

#[derive(Debug, Serialize)]
pub struct ExhaustionReport {
    pub horizon: f64,
    pub window_radius: usize,
    pub window: Vec<String>,
    pub levels: Vec<ExhaustionLevel>,
    pub comparisons: Vec<WindowComparison>,
    /// Window u-values of the largest level at the final sample time: the
    /// best available approximation of the infinite flow at the horizon.
    pub extrapolated: BTreeMap<String, f64>,
    #[serde(skip)]
    pub traces: Vec<FlowTrace>,
    #[serde(skip)]
    pub balls: Vec<ComplexTopology>,
}

impl ExhaustionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Run the truncated flow on each ball B(v0, n), freezing the distance-n
/// ring at its initial value, and compare consecutive levels on the
/// interior window B(v0, window_radius) at 64 uniform times in [0, tau].
pub fn solve_exhaustion(
    gen: &InfiniteComplexGenerator,
    targets_rule: &ValueRule,
    init_rule: &ValueRule,
    tau: f64,
    levels: &[usize],
    window_radius: usize,
    config: &FlowConfig,
) -> Result<ExhaustionReport, FlowError> {
    config.validate()?;
    if !(tau > 0.0) {
        return Err(FlowError::BadHorizon);
    }
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FlowError::BadLevels);
    }
    if window_radius >= levels[0] {
        return Err(FlowError::WindowTooLarge {
            window: window_radius,
            level: levels[0],
        });
    }

    let samples: Vec<f64> = (0..EXHAUSTION_SAMPLES)
        .map(|k| tau * k as f64 / (EXHAUSTION_SAMPLES - 1) as f64)
        .collect();
    let window_ids: Vec<VertexId> = gen.extract_ball(window_radius)?.ids().to_vec();

    let mut report_levels = Vec::new();
    let mut traces = Vec::new();
    let mut balls = Vec::new();
    for &n in levels {
        let ball = gen.extract_ball(n)?;
        let targets = TargetCurvature::from_values(&ball, targets_rule.values_for(&ball)?)?;
        let init = PatternState::new(init_rule.values_for(&ball)?)?;
        let frozen = ball.boundary_mask().to_vec();
        let (trace, solve) = integrate_sampled(&ball, &targets, &init, &frozen, config, &samples)?;
        if solve.status == SolveStatus::GuardTripped {
            return Err(FlowError::ExhaustionGuard {
                level: n,
                guard: config.u_guard,
            });
        }
        report_levels.push(ExhaustionLevel {
            n,
            vertex_count: ball.vertex_count(),
            report: solve,
        });
        traces.push(trace);
        balls.push(ball);
    }

    let mut comparisons = Vec::new();
    for k in 0..levels.len().saturating_sub(1) {
        let (ball_a, ball_b) = (&balls[k], &balls[k + 1]);
        let (trace_a, trace_b) = (&traces[k], &traces[k + 1]);
        let mut sup = 0.0f64;
        for id in &window_ids {
            let a = ball_a
                .index_of(id)
                .ok_or_else(|| FlowError::MissingValue(id.clone()))?;
            let b = ball_b
                .index_of(id)
                .ok_or_else(|| FlowError::MissingValue(id.clone()))?;
            for (sa, sb) in trace_a.states().iter().zip(trace_b.states()) {
                sup = sup.max((sa.u(a) - sb.u(b)).abs());
            }
        }
        comparisons.push(WindowComparison {
            lower: levels[k],
            upper: levels[k + 1],
            sup_diff: sup,
        });
    }

    let mut extrapolated = BTreeMap::new();
    if let (Some(ball), Some(trace)) = (balls.last(), traces.last()) {
        if let Some(state) = trace.final_state() {
            for id in &window_ids {
                let v = ball
                    .index_of(id)
                    .ok_or_else(|| FlowError::MissingValue(id.clone()))?;
                extrapolated.insert(id.to_string(), state.u(v));
            }
        }
    }

    Ok(ExhaustionReport {
        horizon: tau,
        window_radius,
        window: window_ids.iter().map(|id| id.to_string()).collect(),
        levels: report_levels,
        comparisons,
        extrapolated,
        traces,
        balls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::octahedron;
    use crate::lattice::LatticeKind;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn no_frozen(n: usize) -> Vec<bool> {
        vec![false; n]
    }

    fn one_edge() -> ComplexTopology {
        ComplexTopology::build(
            vec!["a".into(), "b".into()],
            vec![("a".into(), "b".into(), FRAC_PI_2)],
            None,
        )
        .unwrap()
    }

    fn isolated() -> ComplexTopology {
        ComplexTopology::build(vec!["v".into()], vec![], None).unwrap()
    }

    // Frozen from the degree-six star oracle: 6 * T_edge(pi/2, pi/4, pi/4) - 6.
    const DEG6_RESIDUAL: f64 = 2.106_130_306_272_479_7;

    #[test]
    fn residual_at_fixed_point_is_zero() {
        let c = one_edge();
        let s = PatternState::uniform(2, 0.0).unwrap();
        let t = vertex_curvatures(&s, &c).unwrap();
        let targets = TargetCurvature::from_values(&c, t).unwrap();
        let res = residual(&s, &c, &targets).unwrap();
        assert!(res.iter().all(|r| r.abs() < 1e-15));
    }

    #[test]
    fn residual_on_isolated_vertex() {
        let c = isolated();
        let s = PatternState::uniform(1, 0.0).unwrap();
        let targets = TargetCurvature::constant(&c, 1.0).unwrap();
        let res = residual(&s, &c, &targets).unwrap();
        assert_abs_diff_eq!(res[0], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn residual_on_degree_six_star() {
        let mut vertices: Vec<VertexId> = vec!["c".into()];
        let mut edges = Vec::new();
        for k in 0..6 {
            vertices.push(VertexId::Int(k));
            edges.push(("c".into(), VertexId::Int(k), FRAC_PI_2));
        }
        let c = ComplexTopology::build(vertices, edges, None).unwrap();
        let s = PatternState::uniform(7, 0.0).unwrap();
        let targets = TargetCurvature::constant(&c, 6.0).unwrap();
        let res = residual(&s, &c, &targets).unwrap();
        assert_abs_diff_eq!(res[0], DEG6_RESIDUAL, epsilon = 1e-12);
    }

    #[test]
    fn step_at_fixed_point_is_identity() {
        let c = one_edge();
        let s = PatternState::uniform(2, 0.0).unwrap();
        let t = vertex_curvatures(&s, &c).unwrap();
        let targets = TargetCurvature::from_values(&c, t).unwrap();
        for method in [Integrator::Euler, Integrator::Rk4] {
            let next = step(&s, &c, &targets, &no_frozen(2), 0.1, method).unwrap();
            assert_eq!(next.coords(), s.coords());
        }
    }

    #[test]
    fn euler_step_on_isolated_vertex() {
        let c = isolated();
        let s = PatternState::uniform(1, 0.0).unwrap();
        let targets = TargetCurvature::constant(&c, 1.0).unwrap();
        let next = step(&s, &c, &targets, &no_frozen(1), 0.1, Integrator::Euler).unwrap();
        // du/dt = -(0 - 1) = +1, so one Euler step of 0.1 moves u to 0.1.
        assert_abs_diff_eq!(next.u(0), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn swap_symmetry_is_preserved() {
        let c = one_edge();
        let mut s = PatternState::uniform(2, 0.4).unwrap();
        let targets = TargetCurvature::constant(&c, 1.0).unwrap();
        for _ in 0..25 {
            s = step(&s, &c, &targets, &no_frozen(2), 0.05, Integrator::Rk4).unwrap();
            assert_eq!(s.u(0), s.u(1));
        }
    }

    #[test]
    fn frozen_vertices_never_move() {
        let c = one_edge();
        let init = PatternState::new(vec![0.25, -0.5]).unwrap();
        let targets = TargetCurvature::constant(&c, 1.0).unwrap();
        let frozen = vec![false, true];
        let config = FlowConfig {
            t_end: 3.0,
            ..FlowConfig::default()
        };
        let (trace, _) = integrate_finite(&c, &targets, &init, &frozen, &config).unwrap();
        for state in trace.states() {
            assert_eq!(state.u(1).to_bits(), (-0.5f64).to_bits());
        }
    }

    #[test]
    fn converges_at_step_zero_from_fixed_point() {
        let c = octahedron(FRAC_PI_2).unwrap();
        let s = PatternState::uniform(6, 0.0).unwrap();
        let t = vertex_curvatures(&s, &c).unwrap();
        let targets = TargetCurvature::from_values(&c, t).unwrap();
        let (trace, report) =
            integrate_finite(&c, &targets, &s, &no_frozen(6), &FlowConfig::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert_eq!(report.steps, 0);
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn octahedron_flow_reaches_uniform_limit() {
        let c = octahedron(FRAC_PI_2).unwrap();
        let targets = TargetCurvature::constant(&c, 4.0).unwrap();
        let init = PatternState::from_radii(&[FRAC_PI_4; 6]).unwrap();
        let (trace, report) =
            integrate_finite(&c, &targets, &init, &no_frozen(6), &FlowConfig::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(report.final_residual <= 1e-10);
        let last = trace.final_state().unwrap();
        // Uniform limit frozen from the one-dimensional root of
        // 8 cos r arccot(cos r) = 4.
        for v in 0..6 {
            assert_abs_diff_eq!(last.radius(v), 1.127_435_343_339_071_1, epsilon = 1e-9);
        }
    }

    #[test]
    fn isolated_vertex_guard_trips() {
        let c = isolated();
        let s = PatternState::uniform(1, 0.0).unwrap();
        let targets = TargetCurvature::constant(&c, 1.0).unwrap();
        let config = FlowConfig {
            integrator: Integrator::Euler,
            dt: 0.5,
            ..FlowConfig::default()
        };
        let (trace, report) = integrate_finite(&c, &targets, &s, &no_frozen(1), &config).unwrap();
        assert_eq!(report.status, SolveStatus::GuardTripped);
        // u grows linearly at unit rate until it crosses the guard.
        let last = trace.final_state().unwrap();
        assert!(last.u(0) > 50.0);
    }

    #[test]
    fn euler_halving_is_first_order() {
        let c = one_edge();
        let targets = TargetCurvature::constant(&c, 1.0).unwrap();
        let init = PatternState::uniform(2, 0.6).unwrap();
        let horizon = 1.0;
        let run = |dt: f64, method: Integrator| {
            let mut s = init.clone();
            let steps = (horizon / dt).round() as usize;
            for _ in 0..steps {
                s = step(&s, &c, &targets, &[false, false], dt, method).unwrap();
            }
            s.u(0)
        };
        let reference = run(1.0 / 4096.0, Integrator::Rk4);
        let e1 = (run(0.1, Integrator::Euler) - reference).abs();
        let e2 = (run(0.05, Integrator::Euler) - reference).abs();
        let order = (e1 / e2).log2();
        assert!(order > 0.7 && order < 1.4, "euler order {order}");
    }

    #[test]
    fn rk4_halving_is_fourth_order() {
        let c = one_edge();
        let targets = TargetCurvature::constant(&c, 1.0).unwrap();
        let init = PatternState::uniform(2, 0.6).unwrap();
        let horizon = 1.0;
        let run = |dt: f64| {
            let mut s = init.clone();
            let steps = (horizon / dt).round() as usize;
            for _ in 0..steps {
                s = step(&s, &c, &targets, &[false, false], dt, Integrator::Rk4).unwrap();
            }
            s.u(0)
        };
        let reference = run(1.0 / 4096.0);
        let e1 = (run(0.2) - reference).abs();
        let e2 = (run(0.1) - reference).abs();
        let order = (e1 / e2).log2();
        assert!(order >= 3.5, "rk4 observed order {order}");
    }

    #[test]
    fn trace_times_strictly_increase() {
        let c = octahedron(FRAC_PI_2).unwrap();
        let targets = TargetCurvature::constant(&c, 4.0).unwrap();
        let init = PatternState::uniform(6, 0.0).unwrap();
        let config = FlowConfig {
            record_every: 3,
            ..FlowConfig::default()
        };
        let (trace, _) = integrate_finite(&c, &targets, &init, &no_frozen(6), &config).unwrap();
        assert!(trace.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn value_rule_lookup() {
        let c = one_edge();
        let rule = ValueRule::Constant(2.0);
        assert_eq!(rule.values_for(&c).unwrap(), vec![2.0, 2.0]);
        let mut map = BTreeMap::new();
        map.insert("a".to_string(), 1.0);
        let rule = ValueRule::PerVertex(map);
        assert!(matches!(
            rule.values_for(&c).unwrap_err(),
            FlowError::MissingValue(_)
        ));
    }

    #[test]
    fn exhaustion_single_level_has_no_comparisons() {
        let gen =
            InfiniteComplexGenerator::lattice(LatticeKind::TriangularDisk, FRAC_PI_2).unwrap();
        let report = solve_exhaustion(
            &gen,
            &ValueRule::Constant(6.0),
            &ValueRule::Constant(0.0),
            1.0,
            &[3],
            2,
            &FlowConfig::default(),
        )
        .unwrap();
        assert!(report.comparisons.is_empty());
        assert_eq!(report.levels.len(), 1);
        assert_eq!(report.traces[0].len(), EXHAUSTION_SAMPLES);
    }

    #[test]
    fn exhaustion_window_zero_compares_root_only() {
        let gen =
            InfiniteComplexGenerator::lattice(LatticeKind::TriangularDisk, FRAC_PI_2).unwrap();
        let report = solve_exhaustion(
            &gen,
            &ValueRule::Constant(6.0),
            &ValueRule::Constant(0.0),
            1.0,
            &[2, 3],
            0,
            &FlowConfig::default(),
        )
        .unwrap();
        assert_eq!(report.window.len(), 1);
        assert_eq!(report.comparisons.len(), 1);
        assert!(report.comparisons[0].sup_diff >= 0.0);
    }

    #[test]
    fn exhaustion_rejects_oversized_window() {
        let gen =
            InfiniteComplexGenerator::lattice(LatticeKind::TriangularDisk, FRAC_PI_2).unwrap();
        let err = solve_exhaustion(
            &gen,
            &ValueRule::Constant(6.0),
            &ValueRule::Constant(0.0),
            1.0,
            &[3, 4],
            3,
            &FlowConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, FlowError::WindowTooLarge { .. }));
    }

    #[test]
    fn synthetic_trace_validation() {
        let s = PatternState::uniform(1, 0.0).unwrap();
        assert!(FlowTrace::from_samples(
            vec![0.0, 1.0],
            vec![s.clone(), s.clone()],
            vec![vec![0.0], vec![0.0]],
        )
        .is_ok());
        assert!(matches!(
            FlowTrace::from_samples(
                vec![0.0, 0.0],
                vec![s.clone(), s.clone()],
                vec![vec![0.0], vec![0.0]],
            ),
            Err(FlowError::NonMonotoneTimes)
        ));
        assert!(matches!(
            FlowTrace::from_samples(vec![0.0], vec![s], vec![]),
            Err(FlowError::TraceShape)
        ));
    }
}
