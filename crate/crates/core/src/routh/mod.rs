//! Routh reduction with respect to a cyclic coordinate `y`.
//!
//! Fixing the cyclic momentum `∂L/∂ẏ = α` and eliminating `ẏ` turns
//! `L - αẏ` into the Routhian over the remaining coordinates. When `L` is
//! affine in the cyclic velocity the constraint does not determine `ẏ`; the
//! reduction then keeps `ẏ` as a family parameter and, for one remaining
//! coordinate, produces an explicit reduced Hamiltonian instead.
//!
//! The level `α` appears in expressions as the symbol [`ALPHA`] and is bound
//! to its numeric value through [`ReducedSystem::params`].

mod jacobi;
mod reconstruct;
pub mod roots;

use nalgebra::DVector;
use thiserror::Error;

use crate::dynamics::{ExprField, FieldError, FirstOrderField};
use crate::expr::{Binding, CompiledExpr, EvalError, Expr};
use crate::geometry::{hamiltonian_field, momentum_name, velocity_name, Chart, GeometryError};
use crate::mechanics::{
    check_cyclic_symmetry, euler_lagrange, solve_checked, EulerLagrangeField, LagrangianSystem, MechanicsError,
    SymmetryReport,
};

pub use jacobi::{
    homogenize, jacobi_reduce, mechanical_form, JacobiReduction, JacobiSample, MechanicalForm, Orientation,
    HOMOGENEOUS_COORDINATE,
};
pub use reconstruct::{
    cumulative_integral, reconstruct_cyclic, round_trip, FlaggedSample, Quadrature, ReconstructionResult, RoundTrip,
    RoundTripConfig, CONSTRAINT_FLAG_TOLERANCE,
};
use roots::{brent, RootError};

/// Symbol standing for the momentum level in derived expressions.
pub const ALPHA: &str = "alpha";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouthError {
    #[error("`{0}` is not a coordinate of the chart")]
    UnknownCoordinate(String),
    #[error("`{0}` is reserved for the momentum level")]
    ReservedName(String),
    #[error("the cyclic coordinate is the only coordinate; nothing is left after reduction")]
    NothingLeft,
    #[error("lagrangian is not invariant under the cyclic translation: d_T X(L) = {0}")]
    NotSymmetric(Expr),
    #[error("empty constraint set: the momentum constraint reduces to {residual} = 0")]
    EmptyConstraintSet { residual: Expr },
    #[error("momentum constraint has {} branches; select one", branches.len())]
    BranchAmbiguity { branches: Vec<Expr> },
    #[error("branch {index} requested but only {count} exist")]
    BranchIndex { index: usize, count: usize },
    #[error("numeric solve of the momentum constraint needs a bracket for the cyclic velocity")]
    BracketRequired,
    #[error("momentum constraint has no root: {0}")]
    NoRoot(RootError),
    #[error("unsupported reduction: {0}")]
    Unsupported(String),
    #[error("operation needs a regular reduction")]
    NotRegular,
    #[error("gauge function uses `{0}`, which is not a reduced coordinate or parameter")]
    InvalidGauge(String),
    #[error("energy {energy} does not exceed the potential {potential} at {point:?}")]
    EnergyBelowPotential {
        point: Vec<(String, f64)>,
        energy: f64,
        potential: f64,
    },
    #[error("integration failed at t = {t}: {error}")]
    Integration { t: f64, error: FieldError },
    #[error(transparent)]
    Mechanics(#[from] MechanicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
}

impl From<RootError> for RouthError {
    fn from(e: RootError) -> Self {
        match e {
            RootError::Eval(e) => RouthError::Eval(e),
            other => RouthError::NoRoot(other),
        }
    }
}

/// The level set `∂L/∂ẏ = α` of the cyclic momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumLevel {
    pub alpha: f64,
    pub cyclic: String,
}

impl MomentumLevel {
    pub fn new(alpha: f64, cyclic: impl Into<String>) -> Self {
        MomentumLevel {
            alpha,
            cyclic: cyclic.into(),
        }
    }
}

/// The reference section used to trivialize the reduced values, given by a
/// function `f₀` of the reduced coordinates. It contributes the total
/// derivative `Σ ∂f₀/∂xⁱ ẋⁱ` to the Routhian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeRecord {
    pub reference: Expr,
    pub alpha: f64,
}

impl GaugeRecord {
    pub fn zero(alpha: f64) -> Self {
        GaugeRecord {
            reference: Expr::zero(),
            alpha,
        }
    }
}

/// How to pick among several closed-form roots of the constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchChoice {
    Index(usize),
    /// The root closest to a known cyclic velocity at a reduced state.
    Nearest {
        state: Binding,
        cyclic_velocity: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouthOptions {
    pub branch: Option<BranchChoice>,
    pub bracket: Option<(f64, f64)>,
    /// Refuse non-invariant Lagrangians.
    pub enforce_symmetry: bool,
}

impl Default for RouthOptions {
    fn default() -> Self {
        RouthOptions {
            branch: None,
            bracket: None,
            enforce_symmetry: true,
        }
    }
}

/// Solutions of the momentum constraint for the cyclic velocity.
#[derive(Debug, Clone, PartialEq)]
pub enum CyclicVelocity {
    Explicit(Expr),
    /// Roots of a quadratic constraint, `+√` branch first.
    Branches(Vec<Expr>),
    /// The constraint does not involve the cyclic velocity but is not trivial.
    Degenerate {
        constraint: Expr,
    },
    /// The constraint holds identically.
    Unconstrained,
    /// Solved by root finding at each point.
    Numeric {
        residual: Expr,
    },
}

/// The cyclic velocity of a regular reduction.
#[derive(Debug, Clone, PartialEq)]
pub enum CyclicSolution {
    Explicit(Expr),
    Numeric { residual: Expr, bracket: (f64, f64) },
}

/// Explicit reduced Hamiltonian of a degenerate reduction over `(x, p_x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateHamiltonian {
    pub hamiltonian: Expr,
    /// The reduced velocity fixed by the constraint, over `x`.
    pub reduced_velocity: Expr,
    /// The cyclic velocity as a function of `(x, p_x)`.
    pub multiplier: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReducedKind {
    Regular {
        /// `None` when the cyclic velocity is only known numerically.
        routhian: Option<Expr>,
        cyclic_velocity: CyclicSolution,
    },
    Degenerate {
        /// The momentum constraint over the reduced `(x, ẋ)`.
        constraint: Expr,
        /// `L - αẏ` with the cyclic velocity left as a parameter.
        family: Expr,
        /// Name of the cyclic velocity parameter.
        parameter: String,
        hamiltonian: Option<DegenerateHamiltonian>,
        /// When the constraint holds identically, `L - αẏ` no longer depends
        /// on `ẏ` and is an ordinary Routhian.
        routhian: Option<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    /// The unreduced system, with its cyclic coordinate designated.
    pub full: LagrangianSystem,
    pub level: MomentumLevel,
    pub gauge: GaugeRecord,
    /// The chart with the cyclic coordinate dropped.
    pub chart: Chart,
    /// Parameters of the full system plus [`ALPHA`].
    pub params: Binding,
    pub kind: ReducedKind,
}

fn prepare(sys: &LagrangianSystem, level: &MomentumLevel) -> Result<LagrangianSystem, RouthError> {
    let chart = sys.chart();
    if chart.index_of(&level.cyclic).is_none() {
        return Err(RouthError::UnknownCoordinate(level.cyclic.clone()));
    }
    if chart.tangent_vars().iter().any(|v| v == ALPHA) || sys.params().contains(ALPHA) {
        return Err(RouthError::ReservedName(ALPHA.into()));
    }
    if chart.dim() < 2 {
        return Err(RouthError::NothingLeft);
    }
    Ok(sys.with_cyclic(Some(&level.cyclic))?)
}

fn level_params(sys: &LagrangianSystem, level: &MomentumLevel) -> Binding {
    sys.params().clone().with(ALPHA, level.alpha)
}

/// `∂L/∂ẏ - α`, refusing Lagrangians that depend on `y` unless
/// `enforce_symmetry` is off.
pub fn momentum_constraint(
    sys: &LagrangianSystem,
    level: &MomentumLevel,
    enforce_symmetry: bool,
) -> Result<Expr, RouthError> {
    let sys = prepare(sys, level)?;
    if enforce_symmetry {
        if let Some(SymmetryReport::Violation { derivative, .. }) = check_cyclic_symmetry(&sys)? {
            return Err(RouthError::NotSymmetric(derivative));
        }
    }
    let dy = velocity_name(&level.cyclic);
    Ok(sys.lagrangian().diff(&dy) - Expr::var(ALPHA))
}

fn is_free_of(e: &Expr, v: &str) -> bool {
    !e.simplify().contains_var(v)
}

/// Solves the momentum constraint for the cyclic velocity: closed form when
/// linear, both roots when quadratic, numeric otherwise.
pub fn solve_cyclic_velocity(
    sys: &LagrangianSystem,
    level: &MomentumLevel,
    enforce_symmetry: bool,
) -> Result<CyclicVelocity, RouthError> {
    let residual = momentum_constraint(sys, level, enforce_symmetry)?;
    let dy = velocity_name(&level.cyclic);
    if is_free_of(&residual, &dy) {
        let bound = residual.bind(&level_params(sys, level)).simplify();
        return match bound.as_const() {
            Some(c) if c.abs() <= 1e-12 => Ok(CyclicVelocity::Unconstrained),
            Some(_) => Err(RouthError::EmptyConstraintSet { residual }),
            None => Ok(CyclicVelocity::Degenerate { constraint: residual }),
        };
    }
    let zero = Expr::zero();
    let d1 = residual.diff(&dy);
    if is_free_of(&d1, &dy) {
        let c0 = residual.subs(&dy, &zero);
        return Ok(CyclicVelocity::Explicit((-c0 / d1).simplify()));
    }
    let d2 = d1.diff(&dy);
    if is_free_of(&d2, &dy) && is_free_of(&d2.diff(&dy), &dy) {
        let a = (d2 * 0.5).simplify();
        let b = d1.subs(&dy, &zero).simplify();
        let c = residual.subs(&dy, &zero).simplify();
        let disc = (b.clone().powf(2.0) - 4.0 * a.clone() * c).sqrt();
        let plus = ((-b.clone() + disc.clone()) / (2.0 * a.clone())).simplify();
        let minus = ((-b - disc) / (2.0 * a)).simplify();
        return Ok(CyclicVelocity::Branches(vec![plus, minus]));
    }
    Ok(CyclicVelocity::Numeric { residual })
}

/// The Routhian (or the constrained family of a degenerate system) at the
/// given level and gauge.
pub fn routhian(
    sys: &LagrangianSystem,
    level: &MomentumLevel,
    gauge: &GaugeRecord,
    options: &RouthOptions,
) -> Result<ReducedSystem, RouthError> {
    let full = prepare(sys, level)?;
    let chart = full.chart().reduced().ok_or(RouthError::NothingLeft)?;
    let params = level_params(&full, level);
    let dy = velocity_name(&level.cyclic);
    let shifted = full.lagrangian().clone() - Expr::var(ALPHA) * Expr::var(dy.as_str());

    let kind = match solve_cyclic_velocity(&full, level, options.enforce_symmetry)? {
        CyclicVelocity::Explicit(v) => ReducedKind::Regular {
            routhian: Some(shifted.subs(&dy, &v).simplify()),
            cyclic_velocity: CyclicSolution::Explicit(v),
        },
        CyclicVelocity::Branches(branches) => {
            let v = select_branch(branches, options.branch.as_ref(), &params)?;
            ReducedKind::Regular {
                routhian: Some(shifted.subs(&dy, &v).simplify()),
                cyclic_velocity: CyclicSolution::Explicit(v),
            }
        }
        CyclicVelocity::Numeric { residual } => {
            let bracket = options.bracket.ok_or(RouthError::BracketRequired)?;
            ReducedKind::Regular {
                routhian: None,
                cyclic_velocity: CyclicSolution::Numeric { residual, bracket },
            }
        }
        CyclicVelocity::Degenerate { constraint } => {
            if !chart.velocities().iter().any(|v| constraint.contains_var(v)) {
                return Err(RouthError::Unsupported(format!(
                    "momentum constraint {constraint} = 0 restricts positions only"
                )));
            }
            let hamiltonian = degenerate_hamiltonian(&full, &chart, &constraint, &dy);
            ReducedKind::Degenerate {
                constraint,
                family: shifted.simplify(),
                parameter: dy.clone(),
                hamiltonian,
                routhian: None,
            }
        }
        CyclicVelocity::Unconstrained => ReducedKind::Degenerate {
            constraint: Expr::zero(),
            family: shifted.simplify(),
            parameter: dy.clone(),
            hamiltonian: None,
            routhian: Some(shifted.subs(&dy, &Expr::zero()).simplify()),
        },
    };
    let mut reduced = ReducedSystem {
        full,
        level: level.clone(),
        gauge: GaugeRecord::zero(level.alpha),
        chart,
        params,
        kind,
    };
    if !gauge.reference.is_zero() {
        reduced = gauge_shift(&reduced, &gauge.reference)?;
    }
    Ok(reduced)
}

fn select_branch(branches: Vec<Expr>, choice: Option<&BranchChoice>, params: &Binding) -> Result<Expr, RouthError> {
    match choice {
        None => Err(RouthError::BranchAmbiguity { branches }),
        Some(BranchChoice::Index(i)) => {
            let count = branches.len();
            branches
                .into_iter()
                .nth(*i)
                .ok_or(RouthError::BranchIndex { index: *i, count })
        }
        Some(BranchChoice::Nearest { state, cyclic_velocity }) => {
            let point = state.merged(params);
            let mut best: Option<(f64, Expr)> = None;
            for b in branches {
                let Ok(v) = b.eval(&point) else { continue };
                let d = (v - cyclic_velocity).abs();
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, b));
                }
            }
            best.map(|(_, b)| b).ok_or_else(|| {
                RouthError::Unsupported("no branch of the momentum constraint is real at the initial state".into())
            })
        }
    }
}

/// Explicit reduced Hamiltonian for a degenerate system with one remaining
/// coordinate `x` and a constraint linear in `ẋ`.
///
/// Writing `L = L₀(x, ẋ) + B(x, ẋ) ẏ`, the family `L - αẏ` generates
/// `ẋ = u(x)` (the constraint `B = α` solved), `p = ∂L₀/∂ẋ + w ∂B/∂ẋ` and
/// `ṗ = ∂L₀/∂x + w ∂B/∂x` with free `w = ẏ`. Eliminating `w` gives the
/// Hamiltonian field of `h(x, p) = p u(x) - L₀(x, u(x))`.
fn degenerate_hamiltonian(
    full: &LagrangianSystem,
    chart: &Chart,
    constraint: &Expr,
    dy: &str,
) -> Option<DegenerateHamiltonian> {
    if chart.dim() != 1 {
        return None;
    }
    let x = &chart.coords()[0];
    let dx = velocity_name(x);
    let px = Expr::var(momentum_name(x));
    let zero = Expr::zero();

    let slope = constraint.diff(&dx).simplify();
    if slope.contains_var(&dx) || slope.is_zero() {
        return None;
    }
    let u = (-constraint.subs(&dx, &zero) / slope).simplify();

    let l = full.lagrangian();
    let l0 = l.subs(dy, &zero).simplify();
    let b = l.diff(dy).simplify();
    let b_slope = b.diff(&dx).subs(&dx, &u).simplify();
    if b_slope.is_zero() {
        return None;
    }
    let multiplier = ((px.clone() - l0.diff(&dx).subs(&dx, &u)) / b_slope).simplify();
    let hamiltonian = (px * u.clone() - l0.subs(&dx, &u)).simplify();
    Some(DegenerateHamiltonian {
        hamiltonian,
        reduced_velocity: u,
        multiplier,
    })
}

/// Adds the total derivative of `f` to a regular Routhian and records `f` in
/// the gauge.
pub fn gauge_shift(red: &ReducedSystem, f: &Expr) -> Result<ReducedSystem, RouthError> {
    let ReducedKind::Regular { routhian, .. } = &red.kind else {
        return Err(RouthError::NotRegular);
    };
    for v in f.free_vars() {
        if red.chart.index_of(&v).is_none() && !red.params.contains(&v) {
            return Err(RouthError::InvalidGauge(v));
        }
    }
    let total = Expr::sum(
        red.chart
            .coords()
            .iter()
            .map(|x| f.diff(x) * Expr::var(velocity_name(x))),
    );
    let mut out = red.clone();
    if let ReducedKind::Regular { routhian: r, .. } = &mut out.kind {
        *r = routhian.as_ref().map(|r| (r.clone() + total).simplify());
    }
    out.gauge.reference = (red.gauge.reference.clone() + f.clone()).simplify();
    Ok(out)
}

impl ReducedSystem {
    pub fn is_regular(&self) -> bool {
        matches!(self.kind, ReducedKind::Regular { .. })
    }

    pub fn cyclic(&self) -> &str {
        &self.level.cyclic
    }

    pub fn cyclic_velocity_name(&self) -> String {
        velocity_name(&self.level.cyclic)
    }

    /// The Routhian in closed form, if there is one.
    pub fn routhian(&self) -> Option<&Expr> {
        match &self.kind {
            ReducedKind::Regular { routhian, .. } => routhian.as_ref(),
            ReducedKind::Degenerate { routhian, .. } => routhian.as_ref(),
        }
    }

    /// The Routhian as a Lagrangian system on the reduced chart.
    pub fn lagrangian_system(&self) -> Option<LagrangianSystem> {
        let r = self.routhian()?;
        LagrangianSystem::new(self.chart.clone(), r.clone(), self.params.clone()).ok()
    }

    /// Names of the reduced state: `(x, ẋ)` for Lagrangian dynamics, `(x, p)`
    /// for a degenerate reduction with a Hamiltonian.
    pub fn state_names(&self) -> Vec<String> {
        match &self.kind {
            ReducedKind::Degenerate {
                hamiltonian: Some(_), ..
            } => self.chart.cotangent_vars(),
            _ => self.chart.tangent_vars(),
        }
    }

    /// Reduced initial state matching a full `(q, q̇)` state.
    pub fn project_state(&self, full_state: &Binding) -> Result<Binding, RouthError> {
        match &self.kind {
            ReducedKind::Degenerate {
                hamiltonian: Some(_), ..
            } => {
                let point = full_state.merged(self.full.params());
                let mut out = Binding::new();
                for x in self.chart.coords() {
                    out.insert(x.clone(), lookup(full_state, x)?);
                }
                for x in self.chart.coords() {
                    let p = self.full.lagrangian().diff(&velocity_name(x)).eval(&point)?;
                    out.insert(momentum_name(x), p);
                }
                Ok(out)
            }
            _ => {
                let mut out = Binding::new();
                for v in self.chart.tangent_vars() {
                    out.insert(v.clone(), lookup(full_state, &v)?);
                }
                Ok(out)
            }
        }
    }

    /// Cyclic velocity at a reduced `(x, ẋ)` state of a regular reduction.
    pub fn cyclic_velocity_at(&self, state: &Binding) -> Result<f64, RouthError> {
        match &self.kind {
            ReducedKind::Regular {
                cyclic_velocity: CyclicSolution::Explicit(v),
                ..
            } => Ok(v.eval(&state.merged(&self.params))?),
            ReducedKind::Regular {
                cyclic_velocity: CyclicSolution::Numeric { .. },
                ..
            } => {
                let mut solver = CyclicRoot::new(self)?;
                let values = self
                    .chart
                    .tangent_vars()
                    .iter()
                    .map(|v| lookup(state, v))
                    .collect::<Result<Vec<_>, _>>()?;
                solver.solve(&values)
            }
            ReducedKind::Degenerate { .. } => Err(RouthError::NotRegular),
        }
    }

    /// Routhian value and cyclic velocity at a reduced `(x, ẋ)` state. Works
    /// for numeric solutions, where no closed-form Routhian exists.
    pub fn routhian_at(&self, state: &Binding) -> Result<(f64, f64), RouthError> {
        let v = self.cyclic_velocity_at(state)?;
        let dy = self.cyclic_velocity_name();
        let mut point = state.merged(&self.params);
        point.insert(dy.clone(), v);
        let shifted = self.full.lagrangian().clone() - Expr::var(ALPHA) * Expr::var(dy.as_str());
        let gauge_term = Expr::sum(
            self.chart
                .coords()
                .iter()
                .map(|x| self.gauge.reference.diff(x) * Expr::var(velocity_name(x))),
        );
        Ok(((shifted + gauge_term).eval(&point)?, v))
    }

    /// Reduced Euler-Lagrange residuals, when a closed-form Routhian exists.
    pub fn reduced_equations(&self) -> Option<Vec<Expr>> {
        self.lagrangian_system().map(|s| euler_lagrange(&s).residuals)
    }
}

fn lookup(b: &Binding, name: &str) -> Result<f64, EvalError> {
    b.get(name).ok_or_else(|| EvalError::Unbound(name.to_string()))
}

/// Per-point numeric solution of the momentum constraint.
pub(crate) struct CyclicRoot {
    residual: CompiledExpr,
    slots: Vec<f64>,
    bracket: (f64, f64),
}

impl CyclicRoot {
    pub(crate) fn new(red: &ReducedSystem) -> Result<Self, RouthError> {
        let ReducedKind::Regular {
            cyclic_velocity: CyclicSolution::Numeric { residual, bracket },
            ..
        } = &red.kind
        else {
            return Err(RouthError::NotRegular);
        };
        let mut vars = red.chart.tangent_vars();
        vars.push(red.cyclic_velocity_name());
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        let residual = residual.bind(&red.params).simplify().compile(&refs)?;
        Ok(CyclicRoot {
            residual,
            slots: vec![0.0; vars.len()],
            bracket: *bracket,
        })
    }

    /// Root for a reduced `(x, ẋ)` state in chart order.
    pub(crate) fn solve(&mut self, state: &[f64]) -> Result<f64, RouthError> {
        let n = state.len();
        self.slots[..n].copy_from_slice(state);
        let (lo, hi) = self.bracket;
        let residual = &self.residual;
        let slots = &mut self.slots;
        Ok(brent(
            |v| {
                slots[n] = v;
                residual.eval(slots)
            },
            lo,
            hi,
        )?)
    }
}

/// First-order field of a reduced system. Built once per run, so the
/// variant sizes do not matter.
#[allow(clippy::large_enum_variant)]
pub enum ReducedField {
    /// Euler-Lagrange equations of a closed-form Routhian, on `(x, ẋ)`.
    Lagrangian(EulerLagrangeField),
    /// Euler-Lagrange equations of a Routhian known only through numeric
    /// roots of the constraint, on `(x, ẋ)`.
    Numeric(NumericRouthField),
    /// Hamiltonian field of a degenerate reduction, on `(x, p)`.
    Hamiltonian(ExprField),
}

impl FirstOrderField for ReducedField {
    fn component_names(&self) -> Vec<String> {
        match self {
            ReducedField::Lagrangian(f) => f.component_names(),
            ReducedField::Numeric(f) => f.component_names(),
            ReducedField::Hamiltonian(f) => f.component_names(),
        }
    }

    fn derivative(&mut self, t: f64, state: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        match self {
            ReducedField::Lagrangian(f) => f.derivative(t, state, out),
            ReducedField::Numeric(f) => f.derivative(t, state, out),
            ReducedField::Hamiltonian(f) => f.derivative(t, state, out),
        }
    }
}

/// The reduced dynamics: Euler-Lagrange equations of the Routhian, or the
/// Hamiltonian field of a degenerate reduction.
pub fn reduced_dynamics(red: &ReducedSystem) -> Result<ReducedField, RouthError> {
    match &red.kind {
        ReducedKind::Regular { routhian: Some(r), .. } | ReducedKind::Degenerate { routhian: Some(r), .. } => {
            let sys = LagrangianSystem::new(red.chart.clone(), r.clone(), red.params.clone())?;
            Ok(ReducedField::Lagrangian(euler_lagrange(&sys).field()?))
        }
        ReducedKind::Regular { routhian: None, .. } => Ok(ReducedField::Numeric(NumericRouthField::new(red)?)),
        ReducedKind::Degenerate {
            hamiltonian: Some(h), ..
        } => {
            let field = hamiltonian_field(&red.chart, &h.hamiltonian);
            let names = red.chart.cotangent_vars();
            Ok(ReducedField::Hamiltonian(ExprField::new(
                names,
                field.components(),
                &red.params,
            )?))
        }
        ReducedKind::Degenerate { constraint, .. } => Err(RouthError::Unsupported(format!(
            "no reduced Hamiltonian could be derived from the constraint {constraint} = 0"
        ))),
    }
}

/// Reduced Euler-Lagrange field when the cyclic velocity is found by root
/// finding. With `ẏ(x, ẋ)` the root, the Routhian derivatives follow from
/// those of `L`: `R_x = L_x`, `R_ẋẋ = L_ẋẋ - L_ẋẏ L_ẏẋ / L_ẏẏ` and
/// `R_ẋx = L_ẋx - L_ẋẏ L_ẏx / L_ẏẏ`.
pub struct NumericRouthField {
    root: CyclicRoot,
    n: usize,
    names: Vec<String>,
    /// Over `(x, ẋ, ẏ)`.
    l_x: Vec<CompiledExpr>,
    l_vv: Vec<CompiledExpr>,
    l_vx: Vec<CompiledExpr>,
    l_vy: Vec<CompiledExpr>,
    l_yx: Vec<CompiledExpr>,
    l_yy: CompiledExpr,
    slots: Vec<f64>,
}

impl NumericRouthField {
    fn new(red: &ReducedSystem) -> Result<Self, RouthError> {
        let root = CyclicRoot::new(red)?;
        let names = red.chart.tangent_vars();
        let dy = red.cyclic_velocity_name();
        let mut vars = names.clone();
        vars.push(dy.clone());
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        let l = red.full.lagrangian().bind(&red.params);
        let compile = |e: Expr| e.simplify().compile(&refs);
        let xs = red.chart.coords();
        let vs = red.chart.velocities();
        let mut l_vv = Vec::new();
        let mut l_vx = Vec::new();
        for vi in &vs {
            let li = l.diff(vi);
            for (xj, vj) in xs.iter().zip(&vs) {
                l_vv.push(compile(li.diff(vj))?);
                l_vx.push(compile(li.diff(xj))?);
            }
        }
        let ly = l.diff(&dy);
        Ok(NumericRouthField {
            root,
            n: xs.len(),
            l_x: xs.iter().map(|x| compile(l.diff(x))).collect::<Result<_, _>>()?,
            l_vy: vs
                .iter()
                .map(|v| compile(l.diff(v).diff(&dy)))
                .collect::<Result<_, _>>()?,
            l_yx: xs.iter().map(|x| compile(ly.diff(x))).collect::<Result<_, _>>()?,
            l_yy: compile(ly.diff(&dy))?,
            l_vv,
            l_vx,
            names,
            slots: vec![0.0; vars.len()],
        })
    }
}

impl FirstOrderField for NumericRouthField {
    fn component_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn derivative(&mut self, _t: f64, state: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        let n = self.n;
        let v = self.root.solve(state).map_err(|e| FieldError::Failed(e.to_string()))?;
        self.slots[..2 * n].copy_from_slice(state);
        self.slots[2 * n] = v;
        let s = &self.slots;
        let l_yy = self.l_yy.eval(s)?;
        if l_yy == 0.0 {
            return Err(FieldError::SingularHessian {
                condition: f64::INFINITY,
            });
        }
        let l_vy: Vec<f64> = self.l_vy.iter().map(|e| e.eval(s)).collect::<Result<_, _>>()?;
        let l_yx: Vec<f64> = self.l_yx.iter().map(|e| e.eval(s)).collect::<Result<_, _>>()?;
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for i in 0..n {
            let mut b = self.l_x[i].eval(s)?;
            for j in 0..n {
                m[(i, j)] = self.l_vv[i * n + j].eval(s)? - l_vy[i] * l_vy[j] / l_yy;
                let r_vx = self.l_vx[i * n + j].eval(s)? - l_vy[i] * l_yx[j] / l_yy;
                b -= r_vx * state[n + j];
            }
            rhs[i] = b;
        }
        let a = solve_checked(m, &rhs).map_err(|condition| FieldError::SingularHessian { condition })?;
        out[..n].copy_from_slice(&state[n..]);
        out[n..].copy_from_slice(a.as_slice());
        Ok(())
    }
}

/// `ι_X = ∂L/∂ẏ` at a full `(q, q̇)` state.
pub fn cyclic_momentum(sys: &LagrangianSystem, cyclic: &str, state: &Binding) -> Result<f64, RouthError> {
    let p = sys.lagrangian().diff(&velocity_name(cyclic));
    Ok(p.eval(&state.merged(sys.params()))?)
}

/// Variables in a Routhian that are not reduced coordinates, reduced
/// velocities, parameters or [`ALPHA`].
pub fn foreign_routhian_vars(red: &ReducedSystem) -> Vec<String> {
    let Some(r) = red.routhian() else {
        return Vec::new();
    };
    let allowed = red.chart.tangent_vars();
    r.free_vars()
        .into_iter()
        .filter(|v| !allowed.contains(v) && !red.params.contains(v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::zero_test;

    fn system(coords: &[&str], l: &str, params: &[(&str, f64)]) -> LagrangianSystem {
        let chart = Chart::new(coords.iter().copied(), None).unwrap();
        LagrangianSystem::parse(chart, l, Binding::from_pairs(params.iter().copied())).unwrap()
    }

    fn p(text: &str) -> Expr {
        Expr::parse(text).unwrap()
    }

    fn equivalent(a: &Expr, b: &Expr, params: &Binding) -> bool {
        zero_test(&(a.clone() - b.clone()), params, 11).is_zero()
    }

    const CENTRAL: &str = "0.5*(dr^2 + r^2*dtheta^2) + k/r";

    #[test]
    fn constraints() {
        let free = system(&["x", "y"], "0.5*(dx^2 + dy^2)", &[]);
        assert_eq!(
            momentum_constraint(&free, &MomentumLevel::new(1.0, "y"), true).unwrap(),
            p("dy - alpha")
        );
        let ex = system(&["x", "y"], "dx*dy - y^2", &[]);
        assert_eq!(
            momentum_constraint(&ex, &MomentumLevel::new(1.0, "x"), true).unwrap(),
            p("dy - alpha")
        );
        let cf = system(&["r", "theta"], CENTRAL, &[("k", 1.0)]);
        let c = momentum_constraint(&cf, &MomentumLevel::new(1.0, "theta"), true).unwrap();
        assert!(equivalent(&c, &p("r^2*dtheta - alpha"), &Binding::new()));
        assert!(matches!(
            momentum_constraint(&ex, &MomentumLevel::new(1.0, "y"), true),
            Err(RouthError::NotSymmetric(_))
        ));
        assert!(momentum_constraint(&ex, &MomentumLevel::new(1.0, "y"), false).is_ok());
        assert_eq!(
            momentum_constraint(&ex, &MomentumLevel::new(1.0, "z"), true).unwrap_err(),
            RouthError::UnknownCoordinate("z".into())
        );
    }

    #[test]
    fn cyclic_velocity_cases() {
        let cf = system(&["r", "theta"], CENTRAL, &[("k", 1.0)]);
        match solve_cyclic_velocity(&cf, &MomentumLevel::new(1.0, "theta"), true).unwrap() {
            CyclicVelocity::Explicit(v) => assert_eq!(v, p("alpha/r^2")),
            other => panic!("{other:?}"),
        }
        let ex = system(&["x", "y"], "dx*dy - y^2", &[]);
        assert!(matches!(
            solve_cyclic_velocity(&ex, &MomentumLevel::new(1.0, "x"), true).unwrap(),
            CyclicVelocity::Degenerate { .. }
        ));
        let charged = system(
            &["x1", "x2", "y"],
            "m*sqrt(dx1^2 + dx2^2) + e*(dy - A1*dx1 - A2*dx2)",
            &[("m", 1.0), ("e", 1.0), ("A1", 0.3), ("A2", -0.2)],
        );
        assert!(matches!(
            solve_cyclic_velocity(&charged, &MomentumLevel::new(2.0, "y"), true),
            Err(RouthError::EmptyConstraintSet { .. })
        ));
        assert_eq!(
            solve_cyclic_velocity(&charged, &MomentumLevel::new(1.0, "y"), true).unwrap(),
            CyclicVelocity::Unconstrained
        );
        let quad = system(&["x", "y"], "0.5*dx^2 + dy^3/3 + x*dy", &[]);
        match solve_cyclic_velocity(&quad, &MomentumLevel::new(2.0, "y"), true).unwrap() {
            CyclicVelocity::Branches(b) => {
                let at = Binding::from_pairs([("x", 0.5), ("alpha", 2.0)]);
                assert!((b[0].eval(&at).unwrap() - 1.5f64.sqrt()).abs() < 1e-14);
                assert!((b[1].eval(&at).unwrap() + 1.5f64.sqrt()).abs() < 1e-14);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn central_force_routhian() {
        let cf = system(&["r", "theta"], CENTRAL, &[("k", 1.0)]);
        let level = MomentumLevel::new(1.0, "theta");
        let red = routhian(&cf, &level, &GaugeRecord::zero(1.0), &RouthOptions::default()).unwrap();
        let expected = p("0.5*dr^2 - alpha^2/(2*r^2) + k/r");
        assert!(equivalent(red.routhian().unwrap(), &expected, &red.params));
        assert!(foreign_routhian_vars(&red).is_empty());
        // r̈ = α²/r³ - V'(r) with V = -k/r.
        let mut field = reduced_dynamics(&red).unwrap();
        let mut out = [0.0; 2];
        field.derivative(0.0, &[1.3, 0.2], &mut out).unwrap();
        let r: f64 = 1.3;
        assert!((out[1] - (1.0 / r.powi(3) - 1.0 / (r * r))).abs() < 1e-14);
    }

    #[test]
    fn free_particle_routhian() {
        let free = system(&["x", "y"], "0.5*(dx^2 + dy^2)", &[]);
        let red = routhian(
            &free,
            &MomentumLevel::new(3.0, "y"),
            &GaugeRecord::zero(3.0),
            &RouthOptions::default(),
        )
        .unwrap();
        assert!(equivalent(
            red.routhian().unwrap(),
            &p("0.5*dx^2 - 0.5*alpha^2"),
            &red.params
        ));
        let mut field = reduced_dynamics(&red).unwrap();
        let mut out = [0.0; 2];
        field.derivative(0.0, &[0.4, -1.1], &mut out).unwrap();
        assert_eq!(out, [-1.1, 0.0]);
    }

    #[test]
    fn degenerate_example() {
        let ex = system(&["x", "y"], "dx*dy - y^2", &[]);
        let red = routhian(
            &ex,
            &MomentumLevel::new(1.0, "x"),
            &GaugeRecord::zero(1.0),
            &RouthOptions::default(),
        )
        .unwrap();
        match &red.kind {
            ReducedKind::Degenerate {
                constraint,
                family,
                parameter,
                hamiltonian: Some(h),
                ..
            } => {
                assert_eq!(constraint, &p("dy - alpha"));
                assert_eq!(parameter, "dx");
                assert!(equivalent(family, &p("dx*dy - y^2 - alpha*dx"), &red.params));
                assert!(equivalent(&h.hamiltonian, &p("alpha*p_y + y^2"), &red.params));
                assert_eq!(h.multiplier, p("p_y"));
            }
            other => panic!("{other:?}"),
        }
        let mut field = reduced_dynamics(&red).unwrap();
        assert_eq!(field.component_names(), ["y", "p_y"]);
        let mut out = [0.0; 2];
        field.derivative(0.0, &[0.7, 3.0], &mut out).unwrap();
        assert_eq!(out, [1.0, -1.4]);
    }

    #[test]
    fn quadratic_branch_selection() {
        let quad = system(&["x", "y"], "0.5*dx^2 + dy^3/3 + x*dy", &[]);
        let level = MomentumLevel::new(2.0, "y");
        assert!(matches!(
            routhian(&quad, &level, &GaugeRecord::zero(2.0), &RouthOptions::default()),
            Err(RouthError::BranchAmbiguity { .. })
        ));
        let options = RouthOptions {
            branch: Some(BranchChoice::Nearest {
                state: Binding::from_pairs([("x", 0.5), ("dx", 0.0)]),
                cyclic_velocity: -1.0,
            }),
            ..RouthOptions::default()
        };
        let red = routhian(&quad, &level, &GaugeRecord::zero(2.0), &options).unwrap();
        let v = red
            .cyclic_velocity_at(&Binding::from_pairs([("x", 0.5), ("dx", 0.0)]))
            .unwrap();
        assert!((v + 1.5f64.sqrt()).abs() < 1e-14);
        let options = RouthOptions {
            branch: Some(BranchChoice::Index(5)),
            ..RouthOptions::default()
        };
        assert!(matches!(
            routhian(&quad, &level, &GaugeRecord::zero(2.0), &options),
            Err(RouthError::BranchIndex { .. })
        ));
    }

    #[test]
    fn numeric_path_matches_closed_form() {
        // A quartic term in the cyclic velocity forces root finding.
        let sys = system(
            &["r", "theta"],
            "0.5*(dr^2 + r^2*dtheta^2) + c*dtheta^4 + k/r",
            &[("k", 1.0), ("c", 0.01)],
        );
        let level = MomentumLevel::new(1.0, "theta");
        let options = RouthOptions {
            bracket: Some((-10.0, 10.0)),
            ..RouthOptions::default()
        };
        let red = routhian(&sys, &level, &GaugeRecord::zero(1.0), &options).unwrap();
        assert!(red.routhian().is_none());
        let state = Binding::from_pairs([("r", 1.2), ("dr", 0.3)]);
        let (_, v) = red.routhian_at(&state).unwrap();
        let residual = 1.2f64.powi(2) * v + 0.04 * v.powi(3) - 1.0;
        assert!(residual.abs() <= 1e-12);

        // Finite-difference check of the reduced acceleration through R.
        let mut field = reduced_dynamics(&red).unwrap();
        let mut out = [0.0; 2];
        field.derivative(0.0, &[1.2, 0.3], &mut out).unwrap();
        let r_at = |r: f64, dr: f64| red.routhian_at(&Binding::from_pairs([("r", r), ("dr", dr)])).unwrap().0;
        let h = 1e-4;
        // For R = ½ṙ² + R₀(r) the equation is r̈ = ∂R/∂r.
        let dr_dr = (r_at(1.2 + h, 0.3) - r_at(1.2 - h, 0.3)) / (2.0 * h);
        assert!((out[1] - dr_dr).abs() < 1e-7, "{} vs {}", out[1], dr_dr);
        assert!(matches!(
            routhian(&sys, &level, &GaugeRecord::zero(1.0), &RouthOptions::default()),
            Err(RouthError::BracketRequired)
        ));
    }

    #[test]
    fn gauge_shift_adds_total_derivative() {
        let cf = system(&["r", "theta"], CENTRAL, &[("k", 1.0)]);
        let level = MomentumLevel::new(1.0, "theta");
        let red = routhian(&cf, &level, &GaugeRecord::zero(1.0), &RouthOptions::default()).unwrap();
        let same = gauge_shift(&red, &Expr::zero()).unwrap();
        assert_eq!(same.routhian(), red.routhian());
        let constant = gauge_shift(&red, &p("3")).unwrap();
        assert_eq!(constant.routhian(), red.routhian());
        let shifted = gauge_shift(&red, &p("r^2")).unwrap();
        let diff = shifted.routhian().unwrap().clone() - red.routhian().unwrap().clone();
        assert!(equivalent(&diff, &p("2*r*dr"), &red.params));
        assert_eq!(shifted.gauge.reference, p("r^2"));
        assert!(matches!(
            gauge_shift(&red, &p("theta")),
            Err(RouthError::InvalidGauge(_))
        ));
    }

    #[test]
    fn charged_particle_at_matching_level() {
        let charged = system(
            &["x1", "x2", "y"],
            "m*sqrt(dx1^2 + dx2^2) + e*(dy - A1*dx1 - A2*dx2)",
            &[("m", 1.5), ("e", 0.7), ("A1", 0.3), ("A2", -0.2)],
        );
        let red = routhian(
            &charged,
            &MomentumLevel::new(0.7, "y"),
            &GaugeRecord::zero(0.7),
            &RouthOptions::default(),
        )
        .unwrap();
        let expected = p("m*sqrt(dx1^2 + dx2^2) - e*(A1*dx1 + A2*dx2)");
        assert!(equivalent(red.routhian().unwrap(), &expected, &red.params));
    }
}
