//! Command-line front end: generate lattice balls, check solvability
//! conditions, run the curvature flow and the Newton solver, approximate
//! the infinite flow by exhaustion, and validate derivatives.
//!
//! Exit codes: 0 success/converged, 2 non-convergence or failed checks,
//! 1 malformed input.

mod plot;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cpflow::analysis::{check_conditions, validate_state, CheckMode, BRUTE_LIMIT};
use cpflow::complex::{ComplexTopology, TargetCurvature};
use cpflow::flow::{
    integrate_finite, solve_exhaustion, FlowConfig, FlowError, FlowTrace, Integrator, SolveStatus,
    ValueRule,
};
use cpflow::geometry::{u_from_radius, PatternState};
use cpflow::lattice::{InfiniteComplexGenerator, LatticeKind};
use cpflow::variational::newton_solve;

const EXIT_NONCONVERGED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "cpflow",
    version,
    about = "Circle-pattern curvature toolkit: prescribed-curvature flow, lattice truncations, and a Newton cross-check"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TargetArgs {
    /// Constant prescribed total geodesic curvature for every vertex.
    #[arg(long)]
    target_const: Option<f64>,
    /// JSON map {"vertex_id": value} of prescribed curvatures.
    #[arg(long)]
    target_file: Option<PathBuf>,
}

impl TargetArgs {
    fn rule(&self) -> Result<ValueRule> {
        match (self.target_const, &self.target_file) {
            (Some(value), None) => Ok(ValueRule::Constant(value)),
            (None, Some(path)) => Ok(ValueRule::PerVertex(read_value_map(path)?)),
            _ => bail!("exactly one of --target-const or --target-file is required"),
        }
    }

    fn targets(&self, complex: &ComplexTopology) -> Result<TargetCurvature> {
        let values = self.rule()?.values_for(complex)?;
        Ok(TargetCurvature::from_values(complex, values)?)
    }
}

#[derive(Args)]
struct RadiusArgs {
    /// Constant initial radius in (0, pi/2); default pi/4.
    #[arg(long)]
    r0_const: Option<f64>,
    /// JSON map {"vertex_id": radius} of initial radii.
    #[arg(long)]
    r0_file: Option<PathBuf>,
}

impl RadiusArgs {
    fn provided(&self) -> bool {
        self.r0_const.is_some() || self.r0_file.is_some()
    }

    /// Initial u-coordinate rule; radii are converted to u = ln cot r.
    fn u_rule(&self) -> Result<ValueRule> {
        match (self.r0_const, &self.r0_file) {
            (Some(_), Some(_)) => bail!("--r0-const and --r0-file are mutually exclusive"),
            (Some(r0), None) => Ok(ValueRule::Constant(
                u_from_radius(r0).context("--r0-const out of range (0, pi/2)")?,
            )),
            (None, Some(path)) => {
                let radii = read_value_map(path)?;
                let mut u = BTreeMap::new();
                for (id, r) in radii {
                    let value = u_from_radius(r)
                        .with_context(|| format!("r0 for vertex {id} out of range (0, pi/2)"))?;
                    u.insert(id, value);
                }
                Ok(ValueRule::PerVertex(u))
            }
            (None, None) => Ok(ValueRule::Constant(0.0)), // r0 = pi/4
        }
    }

    fn state(&self, complex: &ComplexTopology) -> Result<PatternState> {
        let values = self.u_rule()?.values_for(complex)?;
        Ok(PatternState::new(values)?)
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Base integration step.
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    /// Integration horizon.
    #[arg(long, default_value_t = 1e4)]
    t_end: f64,
    /// Residual infinity-norm stopping tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Time integrator: euler, rk4, or adaptive.
    #[arg(long, default_value = "adaptive")]
    integrator: Integrator,
}

impl SolverArgs {
    fn config(&self) -> FlowConfig {
        FlowConfig {
            integrator: self.integrator,
            dt: self.dt,
            t_end: self.t_end,
            residual_tol: self.tol,
            ..FlowConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the combinatorial ball B(root, n) of a lattice family.
    Gen {
        /// Lattice family: triangular-disk or square-grid.
        #[arg(long)]
        kind: LatticeKind,
        /// Ball radius.
        #[arg(long)]
        n: usize,
        /// Intersection angle on every edge.
        #[arg(long, default_value_t = FRAC_PI_2)]
        theta_const: f64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check the solvability conditions on a complex.
    Check {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        r0: RadiusArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Integrate the prescribed-curvature flow; boundary-marked vertices
    /// stay frozen.
    Flow {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        r0: RadiusArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Minimize the curvature potential by damped Newton descent.
    Newton {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        r0: RadiusArgs,
        /// Residual stopping tolerance.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Approximate the infinite flow by truncations to nested balls,
    /// levels window_radius+1 ..= n.
    Exhaust {
        #[arg(long)]
        kind: LatticeKind,
        /// Largest truncation level.
        #[arg(long)]
        n: usize,
        /// Radius of the interior comparison window.
        #[arg(long)]
        window_radius: usize,
        #[arg(long, default_value_t = FRAC_PI_2)]
        theta_const: f64,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        r0: RadiusArgs,
        /// Flow horizon tau.
        #[arg(long, default_value_t = 5.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value = "adaptive")]
        integrator: Integrator,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Validate analytic derivatives and geometric identities at a state.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        r0: RadiusArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn read_value_map(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn read_complex(path: &Path) -> Result<ComplexTopology> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    ComplexTopology::from_json(&text)
        .with_context(|| format!("invalid complex in {}", path.display()))
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn write_trace_artifacts(
    dir: &Path,
    complex: &ComplexTopology,
    targets: &TargetCurvature,
    trace: &FlowTrace,
    report_json: &str,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("trace.csv");
    let file = fs::File::create(&csv_path)
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    trace.write_csv(complex, targets, file)?;
    write_out(dir, "report.json", report_json)?;
    write_out(dir, "residual.svg", &plot::emit_plot(trace)?)?;
    println!(
        "wrote {}, {}, {}",
        csv_path.display(),
        dir.join("report.json").display(),
        dir.join("residual.svg").display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Gen {
            kind,
            n,
            theta_const,
            out_dir,
        } => {
            let gen = InfiniteComplexGenerator::lattice(kind, theta_const)?;
            let ball = gen.extract_ball(n)?;
            let path = write_out(&out_dir, "complex.json", &ball.to_json())?;
            println!(
                "generated {} ball n={n}: {} vertices, {} edges -> {}",
                kind.name(),
                ball.vertex_count(),
                ball.edge_count(),
                path.display()
            );
            Ok(0)
        }

        Command::Check {
            input,
            target,
            r0,
            out_dir,
        } => {
            let complex = read_complex(&input)?;
            let targets = target.targets(&complex)?;
            let state = if r0.provided() {
                Some(r0.state(&complex)?)
            } else {
                None
            };
            let mode = if complex.vertex_count() <= BRUTE_LIMIT {
                CheckMode::Brute
            } else {
                CheckMode::Sampled {
                    samples: 4096,
                    seed: 0,
                }
            };
            let report = check_conditions(&complex, &targets, state.as_ref(), mode)?;
            let path = write_out(&out_dir, "conditions.json", &report.to_json())?;
            println!(
                "conditions: s1 {} s2 {}{} -> {}",
                if report.s1_ok { "ok" } else { "violated" },
                if report.s2_ok { "ok" } else { "violated" },
                match &report.s3 {
                    Some(s3) => format!(" s3 {}", if s3.ok { "ok" } else { "violated" }),
                    None => String::new(),
                },
                path.display()
            );
            Ok(if report.all_ok() {
                0
            } else {
                EXIT_NONCONVERGED
            })
        }

        Command::Flow {
            input,
            target,
            r0,
            solver,
            out_dir,
        } => {
            let complex = read_complex(&input)?;
            let targets = target.targets(&complex)?;
            let init = r0.state(&complex)?;
            let frozen = complex.boundary_mask().to_vec();
            let config = solver.config();
            let (trace, report) = integrate_finite(&complex, &targets, &init, &frozen, &config)?;
            println!(
                "flow: {} after {} steps, residual {:.3e}",
                report.status, report.steps, report.final_residual
            );
            write_trace_artifacts(&out_dir, &complex, &targets, &trace, &report.to_json())?;
            Ok(if report.status == SolveStatus::Converged {
                0
            } else {
                EXIT_NONCONVERGED
            })
        }

        Command::Newton {
            input,
            target,
            r0,
            tol,
            out_dir,
        } => {
            let complex = read_complex(&input)?;
            let targets = target.targets(&complex)?;
            let init = r0.state(&complex)?;
            let result = newton_solve(&complex, &targets, &init, tol, 200)?;
            println!(
                "newton: {} after {} iterations, residual {:.3e}",
                result.report.status, result.report.steps, result.report.final_residual
            );
            write_trace_artifacts(
                &out_dir,
                &complex,
                &targets,
                &result.trace,
                &result.report.to_json(),
            )?;
            Ok(if result.report.status == SolveStatus::Converged {
                0
            } else {
                EXIT_NONCONVERGED
            })
        }

        Command::Exhaust {
            kind,
            n,
            window_radius,
            theta_const,
            target,
            r0,
            t_end,
            dt,
            tol,
            integrator,
            out_dir,
        } => {
            let gen = InfiniteComplexGenerator::lattice(kind, theta_const)?;
            let levels: Vec<usize> = (window_radius + 1..=n).collect();
            if levels.is_empty() {
                bail!("--n must exceed --window-radius");
            }
            let config = FlowConfig {
                integrator,
                dt,
                t_end,
                residual_tol: tol,
                ..FlowConfig::default()
            };
            let report = solve_exhaustion(
                &gen,
                &target.rule()?,
                &r0.u_rule()?,
                t_end,
                &levels,
                window_radius,
                &config,
            )?;
            for comparison in &report.comparisons {
                println!(
                    "levels {} vs {}: window sup-difference {:.6e}",
                    comparison.lower, comparison.upper, comparison.sup_diff
                );
            }
            let path = write_out(&out_dir, "exhaustion.json", &report.to_json())?;
            for ((level, trace), ball) in
                report.levels.iter().zip(&report.traces).zip(&report.balls)
            {
                let targets = TargetCurvature::from_values(ball, target.rule()?.values_for(ball)?)?;
                let csv_path = out_dir.join(format!("trace_n{}.csv", level.n));
                let file = fs::File::create(&csv_path)?;
                trace.write_csv(ball, &targets, file)?;
            }
            if let Some(trace) = report.traces.last() {
                write_out(&out_dir, "residual.svg", &plot::emit_plot(trace)?)?;
            }
            println!("wrote {}", path.display());
            Ok(0)
        }

        Command::Validate { input, r0, out_dir } => {
            let complex = read_complex(&input)?;
            let state = r0.state(&complex)?;
            let report = validate_state(&complex, &state)?;
            let path = write_out(&out_dir, "validation.json", &report.to_json())?;
            println!(
                "validation: {} (max jacobian deviation {:.3e}) -> {}",
                if report.pass { "pass" } else { "fail" },
                report.fd.max_abs_deviation,
                path.display()
            );
            Ok(if report.pass { 0 } else { EXIT_NONCONVERGED })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version arrive here too; only real usage errors
            // classify as bad input.
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            // Guard trips during exhaustion are non-convergence, not bad input.
            if matches!(
                err.downcast_ref::<FlowError>(),
                Some(FlowError::ExhaustionGuard { .. })
            ) {
                eprintln!("non-convergence: {err:#}");
                return ExitCode::from(EXIT_NONCONVERGED);
            }
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
