//! Recovering the cyclic coordinate from a reduced trajectory, and the full
//! versus reduced round trip.

use crate::dynamics::{compare, integrate_rk4, Trajectory};
use crate::expr::{Binding, Expr};
use crate::geometry::{momentum_name, velocity_name};
use crate::mechanics::{euler_lagrange, LagrangianSystem};

use super::{
    cyclic_momentum, reduced_dynamics, routhian, BranchChoice, CyclicRoot, CyclicSolution, GaugeRecord, MomentumLevel,
    ReducedKind, ReducedSystem, RouthError, RouthOptions, ALPHA,
};

/// Samples whose constraint residual exceeds this are flagged.
pub const CONSTRAINT_FLAG_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    Trapezoid,
    /// Piecewise quadratic through consecutive sample triples; exact for
    /// quadratic integrands.
    #[default]
    Simpson,
}

/// Running integral `y(t_k) = y0 + ∫_{t_0}^{t_k} f`.
pub fn cumulative_integral(times: &[f64], values: &[f64], y0: f64, method: Quadrature) -> Vec<f64> {
    assert_eq!(times.len(), values.len());
    let mut out = Vec::with_capacity(times.len());
    if times.is_empty() {
        return out;
    }
    out.push(y0);
    let m = times.len() - 1;
    if method == Quadrature::Trapezoid || m < 2 {
        for k in 0..m {
            let step = 0.5 * (times[k + 1] - times[k]) * (values[k] + values[k + 1]);
            out.push(out[k] + step);
        }
        return out;
    }
    let mut k = 0;
    while k < m {
        // Pair intervals; a trailing single interval reuses the previous sample.
        let base = if k + 2 <= m { k } else { k - 1 };
        let t = [times[base], times[base + 1], times[base + 2]];
        let f = [values[base], values[base + 1], values[base + 2]];
        let last = (k + 2).min(m);
        for j in k..last {
            let step = quadratic_integral(t, f, times[j], times[j + 1]);
            out.push(out[j] + step);
        }
        k = last;
    }
    out
}

/// Integral over `[a, b]` of the quadratic interpolating `(t, f)`.
fn quadratic_integral(t: [f64; 3], f: [f64; 3], a: f64, b: f64) -> f64 {
    let d1 = (f[1] - f[0]) / (t[1] - t[0]);
    let d12 = (f[2] - f[1]) / (t[2] - t[1]);
    let d2 = (d12 - d1) / (t[2] - t[0]);
    let h1 = t[1] - t[0];
    let antiderivative = |u: f64| f[0] * u + d1 * u * u / 2.0 + d2 * (u * u * u / 3.0 - h1 * u * u / 2.0);
    antiderivative(b - t[0]) - antiderivative(a - t[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedSample {
    pub index: usize,
    pub t: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// The reduced trajectory with the cyclic coordinate and its velocity
    /// appended.
    pub trajectory: Trajectory,
    pub cyclic: Vec<f64>,
    pub cyclic_velocity: Vec<f64>,
    /// Samples where the momentum constraint is violated beyond
    /// [`CONSTRAINT_FLAG_TOLERANCE`].
    pub flagged: Vec<FlaggedSample>,
}

/// Cyclic velocity at every reduced sample, then `y` by quadrature from `y0`.
pub fn reconstruct_cyclic(
    red: &ReducedSystem,
    traj: &Trajectory,
    y0: f64,
    quadrature: Quadrature,
) -> Result<ReconstructionResult, RouthError> {
    let dy = red.cyclic_velocity_name();
    let mut velocities = Vec::with_capacity(traj.len());
    let mut flagged = Vec::new();
    match &red.kind {
        ReducedKind::Regular { cyclic_velocity, .. } => {
            let order: Vec<usize> = red
                .chart
                .tangent_vars()
                .iter()
                .map(|v| traj.index_of(v))
                .collect::<Result<_, _>>()?;
            let constraint = red.full.lagrangian().diff(&dy) - Expr::var(ALPHA);
            let mut root = match cyclic_velocity {
                CyclicSolution::Numeric { .. } => Some(CyclicRoot::new(red)?),
                CyclicSolution::Explicit(_) => None,
            };
            let mut state = vec![0.0; order.len()];
            for k in 0..traj.len() {
                for (s, &i) in state.iter_mut().zip(&order) {
                    *s = traj.samples()[k][i];
                }
                let mut point = traj.binding_at(k).merged(&red.params);
                let v = match (cyclic_velocity, root.as_mut()) {
                    (CyclicSolution::Explicit(e), _) => e.eval(&point)?,
                    (_, Some(r)) => r.solve(&state)?,
                    (_, None) => unreachable!("numeric solution has a root solver"),
                };
                point.insert(dy.clone(), v);
                let residual = constraint.eval(&point)?;
                if !(residual.abs() <= CONSTRAINT_FLAG_TOLERANCE) {
                    flagged.push(FlaggedSample {
                        index: k,
                        t: traj.times()[k],
                        residual,
                    });
                }
                velocities.push(v);
            }
        }
        ReducedKind::Degenerate {
            constraint,
            hamiltonian: Some(h),
            ..
        } => {
            let x = &red.chart.coords()[0];
            let dx = velocity_name(x);
            for k in 0..traj.len() {
                let mut point = traj.binding_at(k).merged(&red.params);
                velocities.push(h.multiplier.eval(&point)?);
                let u = h.reduced_velocity.eval(&point)?;
                point.insert(dx.clone(), u);
                let residual = constraint.eval(&point)?;
                if !(residual.abs() <= CONSTRAINT_FLAG_TOLERANCE) {
                    flagged.push(FlaggedSample {
                        index: k,
                        t: traj.times()[k],
                        residual,
                    });
                }
            }
        }
        ReducedKind::Degenerate { .. } => {
            return Err(RouthError::Unsupported(
                "the cyclic velocity is undetermined on this constraint set".into(),
            ))
        }
    }
    let cyclic = cumulative_integral(traj.times(), &velocities, y0, quadrature);
    let mut trajectory = traj.clone();
    trajectory.push_column(red.cyclic(), &cyclic);
    trajectory.push_column(dy, &velocities);
    Ok(ReconstructionResult {
        trajectory,
        cyclic,
        cyclic_velocity: velocities,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTripConfig {
    pub cyclic: String,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    /// Momentum level; inferred from the initial state when absent.
    pub alpha: Option<f64>,
    pub gauge: Expr,
    pub options: RouthOptions,
    pub quadrature: Quadrature,
}

impl RoundTripConfig {
    pub fn new(cyclic: impl Into<String>, t1: f64, dt: f64) -> Self {
        RoundTripConfig {
            cyclic: cyclic.into(),
            t0: 0.0,
            t1,
            dt,
            alpha: None,
            gauge: Expr::zero(),
            options: RouthOptions::default(),
            quadrature: Quadrature::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrip {
    /// Level used for the reduction.
    pub alpha: f64,
    /// `∂L/∂ẏ` at the initial state.
    pub inferred_alpha: f64,
    pub reduced: ReducedSystem,
    /// Full trajectory, with reduced momenta appended for degenerate
    /// reductions.
    pub full: Trajectory,
    pub reconstruction: ReconstructionResult,
    /// Sup-norm deviation per shared component.
    pub deviations: Vec<(String, f64)>,
}

impl RoundTrip {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().map(|(_, d)| *d).fold(0.0, f64::max)
    }
}

/// Simulates the full system, reduces at the momentum level of the initial
/// state (or the configured one), simulates the reduced system from the
/// projected initial data, reconstructs the cyclic coordinate and compares.
pub fn round_trip(sys: &LagrangianSystem, initial: &Binding, cfg: &RoundTripConfig) -> Result<RoundTrip, RouthError> {
    let sys = sys.with_cyclic(Some(&cfg.cyclic))?;
    let mut field = euler_lagrange(&sys).field()?;
    let mut full = integrate_rk4(&mut field, initial, cfg.t0, cfg.t1, cfg.dt)?;
    if let Some(f) = &full.failure {
        return Err(RouthError::Integration {
            t: f.t,
            error: f.error.clone(),
        });
    }

    let inferred_alpha = cyclic_momentum(&sys, &cfg.cyclic, initial)?;
    let alpha = cfg.alpha.unwrap_or(inferred_alpha);
    let level = MomentumLevel::new(alpha, cfg.cyclic.clone());
    let mut options = cfg.options.clone();
    if options.branch.is_none() {
        let dy = velocity_name(&cfg.cyclic);
        if let Some(v) = initial.get(&dy) {
            options.branch = Some(BranchChoice::Nearest {
                state: initial.clone(),
                cyclic_velocity: v,
            });
        }
    }
    let gauge = GaugeRecord {
        reference: cfg.gauge.clone(),
        alpha,
    };
    let reduced = routhian(&sys, &level, &gauge, &options)?;

    let start = reduced.project_state(initial)?;
    let mut rfield = reduced_dynamics(&reduced)?;
    let rtraj = integrate_rk4(&mut rfield, &start, cfg.t0, cfg.t1, cfg.dt)?;
    if let Some(f) = &rtraj.failure {
        return Err(RouthError::Integration {
            t: f.t,
            error: f.error.clone(),
        });
    }
    let y0 = initial
        .get(&cfg.cyclic)
        .ok_or_else(|| crate::expr::EvalError::Unbound(cfg.cyclic.clone()))?;
    let reconstruction = reconstruct_cyclic(&reduced, &rtraj, y0, cfg.quadrature)?;

    if let ReducedKind::Degenerate { .. } = reduced.kind {
        for x in reduced.chart.coords() {
            let p = sys.lagrangian().diff(&velocity_name(x));
            let values = (0..full.len())
                .map(|k| p.eval(&full.binding_at(k).merged(sys.params())))
                .collect::<Result<Vec<_>, _>>()?;
            full.push_column(momentum_name(x), &values);
        }
    }

    let names: Vec<String> = reconstruction
        .trajectory
        .names()
        .iter()
        .filter(|n| full.index_of(n).is_ok())
        .cloned()
        .collect();
    let pairs: Vec<(&str, &str)> = names.iter().map(|n| (n.as_str(), n.as_str())).collect();
    let values = compare(&full, &reconstruction.trajectory, &pairs)?;
    let deviations = names.into_iter().zip(values).collect();
    Ok(RoundTrip {
        alpha,
        inferred_alpha,
        reduced,
        full,
        reconstruction,
        deviations,
    })
}
