//! Lagrangian systems in one chart: Euler-Lagrange equations, the Legendre
//! map, energy, the Hamiltonian generating family and the symmetry test.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{FieldError, FirstOrderField};
use crate::expr::{Binding, CompiledExpr, EvalError, Expr, ParseError};
use crate::geometry::{acceleration_name, complete_lift, Chart, GeometryError, VectorField};

/// Hessians with a larger 1-norm condition estimate count as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanicsError {
    #[error("lagrangian uses `{0}`, which is neither a coordinate, a velocity nor a parameter")]
    ForeignVariable(String),
    #[error("parameter `{0}` shadows a coordinate or velocity")]
    ParameterShadows(String),
    #[error("singular velocity Hessian at {point:?} (condition estimate {condition:.3e})")]
    SingularHessian { point: Vec<(String, f64)>, condition: f64 },
    #[error("inverse Legendre map did not converge at {0:?}")]
    NoConvergence(Vec<(String, f64)>),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A Lagrangian over `(q, q̇)` plus numeric values for its named constants.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianSystem {
    chart: Chart,
    lagrangian: Expr,
    params: Binding,
}

impl LagrangianSystem {
    pub fn new(chart: Chart, lagrangian: Expr, params: Binding) -> Result<Self, MechanicsError> {
        let state = chart.tangent_vars();
        if let Some(p) = params.names().find(|p| state.iter().any(|s| s == p)) {
            return Err(MechanicsError::ParameterShadows(p.to_string()));
        }
        for v in lagrangian.free_vars() {
            if !state.contains(&v) && !params.contains(&v) {
                return Err(MechanicsError::ForeignVariable(v));
            }
        }
        Ok(LagrangianSystem {
            chart,
            lagrangian,
            params,
        })
    }

    pub fn parse(chart: Chart, lagrangian: &str, params: Binding) -> Result<Self, MechanicsError> {
        LagrangianSystem::new(chart, Expr::parse(lagrangian)?, params)
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian
    }

    pub fn params(&self) -> &Binding {
        &self.params
    }

    /// The same system with a different cyclic designation.
    pub fn with_cyclic(&self, cyclic: Option<&str>) -> Result<Self, MechanicsError> {
        Ok(LagrangianSystem {
            chart: self.chart.with_cyclic(cyclic)?,
            ..self.clone()
        })
    }

    /// Evaluates `e` at a `(q, q̇)` state given in chart order.
    pub fn eval_at(&self, e: &Expr, state: &[f64]) -> Result<f64, EvalError> {
        let b = self.state_binding(state);
        e.eval(&b)
    }

    pub fn state_binding(&self, state: &[f64]) -> Binding {
        let mut b: Binding = self
            .chart
            .tangent_vars()
            .into_iter()
            .zip(state.iter().copied())
            .collect();
        b.extend(&self.params);
        b
    }
}

/// Euler-Lagrange equations `Σ ∂²L/∂q̇ⁱ∂q̇ʲ q̈ʲ + Σ ∂²L/∂q̇ⁱ∂qʲ q̇ʲ - ∂L/∂qⁱ = 0`.
#[derive(Debug, Clone)]
pub struct EulerLagrange {
    chart: Chart,
    params: Binding,
    /// One residual per coordinate, over `(q, q̇, q̈)`; accelerations are `ddq`.
    pub residuals: Vec<Expr>,
    /// `∂²L/∂q̇ⁱ∂q̇ʲ`.
    pub hessian: Vec<Vec<Expr>>,
    /// `∂²L/∂q̇ⁱ∂qʲ`.
    pub mixed: Vec<Vec<Expr>>,
    /// `∂L/∂qⁱ`.
    pub force: Vec<Expr>,
}

pub fn euler_lagrange(sys: &LagrangianSystem) -> EulerLagrange {
    let chart = sys.chart.clone();
    let coords = chart.coords().to_vec();
    let velocities = chart.velocities();
    let momenta: Vec<Expr> = velocities.iter().map(|v| sys.lagrangian.diff(v)).collect();
    let hessian: Vec<Vec<Expr>> = momenta
        .iter()
        .map(|p| velocities.iter().map(|v| p.diff(v)).collect())
        .collect();
    let mixed: Vec<Vec<Expr>> = momenta
        .iter()
        .map(|p| coords.iter().map(|q| p.diff(q)).collect())
        .collect();
    let force: Vec<Expr> = coords.iter().map(|q| sys.lagrangian.diff(q)).collect();
    let residuals = (0..coords.len())
        .map(|i| {
            let inertial = Expr::sum(
                coords
                    .iter()
                    .enumerate()
                    .map(|(j, q)| hessian[i][j].clone() * Expr::var(acceleration_name(q))),
            );
            let transport = Expr::sum(
                velocities
                    .iter()
                    .enumerate()
                    .map(|(j, v)| mixed[i][j].clone() * Expr::var(v.as_str())),
            );
            (inertial + transport - force[i].clone()).simplify()
        })
        .collect();
    EulerLagrange {
        chart,
        params: sys.params.clone(),
        residuals,
        hessian,
        mixed,
        force,
    }
}

impl EulerLagrange {
    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    /// Explicit accelerations at a `(q, q̇)` state, by a linear solve.
    pub fn accelerations(&self, state: &[f64]) -> Result<Vec<f64>, MechanicsError> {
        let mut field = self.field()?;
        let n = self.chart.dim();
        let mut out = vec![0.0; 2 * n];
        match field.derivative(0.0, state, &mut out) {
            Ok(()) => Ok(out[n..].to_vec()),
            Err(FieldError::SingularHessian { condition }) => Err(MechanicsError::SingularHessian {
                point: self
                    .chart
                    .tangent_vars()
                    .into_iter()
                    .zip(state.iter().copied())
                    .collect(),
                condition,
            }),
            Err(FieldError::Eval(e)) => Err(e.into()),
            Err(FieldError::Failed(m)) => unreachable!("{m}"),
        }
    }

    /// Residuals evaluated at a state and acceleration.
    pub fn residual_at(&self, state: &[f64], accel: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut b: Binding = self
            .chart
            .tangent_vars()
            .into_iter()
            .zip(state.iter().copied())
            .collect();
        for (q, a) in self.chart.coords().iter().zip(accel) {
            b.insert(acceleration_name(q), *a);
        }
        b.extend(&self.params);
        self.residuals.iter().map(|r| r.eval(&b)).collect()
    }

    /// The explicit first-order field on `(q, q̇)`.
    pub fn field(&self) -> Result<EulerLagrangeField, EvalError> {
        let names = self.chart.tangent_vars();
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let compile = |e: &Expr| e.bind(&self.params).simplify().compile(&vars);
        let n = self.chart.dim();
        let mut hessian = Vec::with_capacity(n * n);
        let mut mixed = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                hessian.push(compile(&self.hessian[i][j])?);
                mixed.push(compile(&self.mixed[i][j])?);
            }
        }
        let force = self.force.iter().map(compile).collect::<Result<_, _>>()?;
        Ok(EulerLagrangeField {
            names,
            n,
            hessian,
            mixed,
            force,
        })
    }
}

/// Compiled explicit form of [`EulerLagrange`]: state `(q, q̇)`, derivative
/// `(q̇, q̈)`.
pub struct EulerLagrangeField {
    names: Vec<String>,
    n: usize,
    hessian: Vec<CompiledExpr>,
    mixed: Vec<CompiledExpr>,
    force: Vec<CompiledExpr>,
}

impl FirstOrderField for EulerLagrangeField {
    fn component_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn derivative(&mut self, _t: f64, state: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for i in 0..n {
            let mut b = self.force[i].eval(state)?;
            for j in 0..n {
                m[(i, j)] = self.hessian[i * n + j].eval(state)?;
                b -= self.mixed[i * n + j].eval(state)? * state[n + j];
            }
            rhs[i] = b;
        }
        let a = solve_checked(m, &rhs).map_err(|condition| FieldError::SingularHessian { condition })?;
        out[..n].copy_from_slice(&state[n..]);
        out[n..].copy_from_slice(a.as_slice());
        Ok(())
    }
}

/// 1-norm condition estimate `‖M‖₁‖M⁻¹‖₁`; infinite when `M` is not invertible.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let norm1 = |a: &DMatrix<f64>| {
        a.column_iter()
            .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match m.clone().try_inverse() {
        Some(inv) => norm1(m) * norm1(&inv),
        None => f64::INFINITY,
    }
}

/// Solves `m x = b`, or returns the condition estimate when `m` is singular.
pub fn solve_checked(m: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, f64> {
    let condition = condition_estimate(&m);
    if !(condition <= SINGULAR_CONDITION) {
        return Err(condition);
    }
    m.lu().solve(b).ok_or(f64::INFINITY)
}

/// Momenta `pᵢ = ∂L/∂q̇ⁱ` as expressions over `(q, q̇)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreMap {
    pub chart: Chart,
    pub momenta: Vec<Expr>,
}

pub fn legendre(sys: &LagrangianSystem) -> LegendreMap {
    LegendreMap {
        chart: sys.chart.clone(),
        momenta: sys.chart.velocities().iter().map(|v| sys.lagrangian.diff(v)).collect(),
    }
}

impl LegendreMap {
    pub fn eval(&self, point: &Binding) -> Result<Vec<f64>, EvalError> {
        self.momenta.iter().map(|p| p.eval(point)).collect()
    }
}

/// `E = Σ q̇ⁱ ∂L/∂q̇ⁱ - L`.
pub fn energy(sys: &LagrangianSystem) -> Expr {
    let velocities = sys.chart.velocities();
    (Expr::sum(
        velocities
            .iter()
            .map(|v| Expr::var(v.as_str()) * sys.lagrangian.diff(v)),
    ) - sys.lagrangian.clone())
    .simplify()
}

/// Name of the family parameter standing in for the velocity of `coord`.
pub fn family_parameter(coord: &str) -> String {
    format!("v_{coord}")
}

/// The generating family `F(q, v, p) = L(q, v) - Σ pᵢ vⁱ` with velocities
/// renamed to parameters `v_q`. At a stationary point in `v`, `F = -H`.
pub fn hamiltonian_family(sys: &LagrangianSystem) -> Expr {
    let chart = &sys.chart;
    let renamed = chart
        .coords()
        .iter()
        .map(|q| (crate::geometry::velocity_name(q), Expr::var(family_parameter(q))))
        .collect();
    let l = sys.lagrangian.substitute(&renamed);
    let pairing = Expr::sum(
        chart
            .coords()
            .iter()
            .zip(chart.momenta())
            .map(|(q, p)| Expr::var(p) * Expr::var(family_parameter(q))),
    );
    (l - pairing).simplify()
}

/// Inverts the Legendre map at `(q, p)` by Newton iteration from `guess`.
pub fn inverse_legendre(
    sys: &LagrangianSystem,
    q: &[f64],
    p: &[f64],
    guess: &[f64],
) -> Result<Vec<f64>, MechanicsError> {
    let names = sys.chart.tangent_vars();
    let vars: Vec<&str> = names.iter().map(String::as_str).collect();
    let velocities = sys.chart.velocities();
    let compile = |e: Expr| e.bind(&sys.params).simplify().compile(&vars);
    let momenta = legendre(sys)
        .momenta
        .into_iter()
        .map(compile)
        .collect::<Result<Vec<_>, _>>()?;
    let hessian = legendre(sys)
        .momenta
        .iter()
        .flat_map(|p| velocities.iter().map(move |v| p.diff(v)))
        .map(compile)
        .collect::<Result<Vec<_>, _>>()?;
    let n = sys.chart.dim();
    let mut v = guess.to_vec();
    let mut state = q.to_vec();
    state.extend_from_slice(guess);
    let scale = p.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
    for _ in 0..60 {
        state[n..].copy_from_slice(&v);
        let mut residual = DVector::zeros(n);
        for i in 0..n {
            residual[i] = momenta[i].eval(&state)? - p[i];
        }
        if residual.amax() <= 1e-13 * scale {
            return Ok(v);
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = hessian[i * n + j].eval(&state)?;
            }
        }
        let step = solve_checked(m, &residual).map_err(|condition| MechanicsError::SingularHessian {
            point: sys
                .chart
                .tangent_vars()
                .into_iter()
                .zip(q.iter().chain(&v).copied())
                .collect(),
            condition,
        })?;
        for (vi, si) in v.iter_mut().zip(step.iter()) {
            *vi -= si;
        }
    }
    Err(MechanicsError::NoConvergence(
        sys.chart
            .cotangent_vars()
            .into_iter()
            .zip(q.iter().chain(p).copied())
            .collect(),
    ))
}

/// `H(q, p) = Σ pᵢ vⁱ - L(q, v)` at the velocity `v` solving `∂L/∂q̇(q, v) = p`.
/// Returns the value and that velocity.
pub fn hamiltonian_at(
    sys: &LagrangianSystem,
    q: &[f64],
    p: &[f64],
    guess: &[f64],
) -> Result<(f64, Vec<f64>), MechanicsError> {
    let v = inverse_legendre(sys, q, p, guess)?;
    let mut state = q.to_vec();
    state.extend_from_slice(&v);
    let l = sys.eval_at(&sys.lagrangian, &state)?;
    let pv: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
    Ok((pv - l, v))
}

/// How a zero test concluded.
#[derive(Debug, Clone, PartialEq)]
pub enum ZeroTest {
    /// Simplifies to the constant zero.
    Symbolic,
    /// Vanishes at every sampled point but is not symbolically zero.
    NumericOnly {
        samples: usize,
    },
    NonZero {
        witness: Binding,
        value: f64,
    },
    /// No sample point could be evaluated.
    Undecided,
}

impl ZeroTest {
    pub fn is_zero(&self) -> bool {
        matches!(self, ZeroTest::Symbolic | ZeroTest::NumericOnly { .. })
    }
}

pub const ZERO_TEST_SAMPLES: usize = 1000;
pub const ZERO_TEST_TOLERANCE: f64 = 1e-10;

/// Draws a value with magnitude in `[0.2, 2]` and random sign.
pub fn random_coordinate<R: Rng>(rng: &mut R, positive: bool) -> f64 {
    let m = rng.gen_range(0.2..2.0);
    if positive || rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Symbolic zero test with a random-point fallback. Free variables bound in
/// `params` keep their values; the rest are sampled, retrying with positive
/// values when the signed draw leaves the domain.
pub fn zero_test(e: &Expr, params: &Binding, seed: u64) -> ZeroTest {
    let s = e.simplify();
    if s.is_zero() {
        return ZeroTest::Symbolic;
    }
    let free: Vec<String> = s.free_vars().into_iter().filter(|v| !params.contains(v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluated = 0;
    for _ in 0..ZERO_TEST_SAMPLES {
        let mut value = None;
        for positive in [false, true] {
            let mut b = params.clone();
            for v in &free {
                b.insert(v.clone(), random_coordinate(&mut rng, positive));
            }
            if let Ok(x) = s.eval(&b) {
                value = Some((b, x));
                break;
            }
        }
        let Some((b, x)) = value else { continue };
        evaluated += 1;
        if x.abs() > ZERO_TEST_TOLERANCE {
            return ZeroTest::NonZero { witness: b, value: x };
        }
    }
    if evaluated == 0 {
        ZeroTest::Undecided
    } else {
        ZeroTest::NumericOnly { samples: evaluated }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SymmetryReport {
    Symmetric {
        proof: ZeroTest,
    },
    /// `d_T X(L)`, simplified, with the failing test.
    Violation {
        derivative: Expr,
        test: ZeroTest,
    },
}

impl SymmetryReport {
    pub fn is_symmetric(&self) -> bool {
        matches!(self, SymmetryReport::Symmetric { .. })
    }
}

/// Tests `d_T X(L) = 0`.
pub fn check_symmetry(sys: &LagrangianSystem, x: &VectorField) -> Result<SymmetryReport, MechanicsError> {
    let lift = complete_lift(x)?;
    let derivative = lift.apply(&sys.lagrangian);
    let test = zero_test(&derivative, &sys.params, 0x5eed);
    Ok(if test.is_zero() {
        SymmetryReport::Symmetric { proof: test }
    } else {
        SymmetryReport::Violation {
            derivative: derivative.simplify(),
            test,
        }
    })
}

/// Symmetry under the chart's cyclic translation `∂/∂y`.
pub fn check_cyclic_symmetry(sys: &LagrangianSystem) -> Result<Option<SymmetryReport>, MechanicsError> {
    match sys.chart.symmetry_field() {
        Some(x) => check_symmetry(sys, &x).map(Some),
        None => Ok(None),
    }
}
