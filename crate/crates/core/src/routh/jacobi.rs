//! Homogenization and the Jacobi metric: reducing `ṡ L(q̇/ṡ)` by its cyclic
//! time coordinate `s` at momentum level `-E`.

use crate::expr::{Binding, Expr};
use crate::geometry::{velocity_name, Chart};
use crate::mechanics::{zero_test, LagrangianSystem};

use super::{routhian, GaugeRecord, MomentumLevel, ReducedSystem, RouthError, RouthOptions};

/// Preferred name of the added time coordinate.
pub const HOMOGENEOUS_COORDINATE: &str = "s";

/// `L_h(q, s, q̇, ṡ) = ṡ L(q, q̇/ṡ)` on the chart extended by `s`, which is
/// cyclic in `L_h`.
pub fn homogenize(sys: &LagrangianSystem) -> Result<LagrangianSystem, RouthError> {
    let chart = sys.chart();
    let mut s = HOMOGENEOUS_COORDINATE.to_string();
    while chart.tangent_vars().contains(&s)
        || chart.tangent_vars().contains(&velocity_name(&s))
        || sys.params().contains(&s)
    {
        s.push('_');
    }
    let ds = Expr::var(velocity_name(&s));
    let scaled = chart
        .velocities()
        .into_iter()
        .map(|v| {
            let e = Expr::var(v.as_str()) / ds.clone();
            (v, e)
        })
        .collect();
    let lh = (ds * sys.lagrangian().substitute(&scaled)).simplify();
    let mut coords = chart.coords().to_vec();
    coords.push(s.clone());
    let extended = Chart::new(coords, Some(&s))?;
    Ok(LagrangianSystem::new(extended, lh, sys.params().clone())?)
}

/// `L = ½ gᵢⱼ(q) q̇ⁱq̇ʲ - V(q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanicalForm {
    pub metric: Vec<Vec<Expr>>,
    pub potential: Expr,
}

impl MechanicalForm {
    /// `g(q̇, q̇)`.
    pub fn kinetic_quadratic(&self, chart: &Chart) -> Expr {
        let vs = chart.velocities();
        let mut terms = Vec::new();
        for (i, vi) in vs.iter().enumerate() {
            for (j, vj) in vs.iter().enumerate() {
                terms.push(self.metric[i][j].clone() * Expr::var(vi.as_str()) * Expr::var(vj.as_str()));
            }
        }
        Expr::sum(terms).simplify()
    }
}

/// Detects a Lagrangian quadratic in velocities with no linear part.
pub fn mechanical_form(sys: &LagrangianSystem) -> Option<MechanicalForm> {
    let chart = sys.chart();
    let vs = chart.velocities();
    let l = sys.lagrangian();
    let at_rest: std::collections::HashMap<String, Expr> = vs.iter().map(|v| (v.clone(), Expr::zero())).collect();
    let params = sys.params();
    for v in &vs {
        if !zero_test(&l.diff(v).substitute(&at_rest), params, 21).is_zero() {
            return None;
        }
    }
    let mut metric = Vec::with_capacity(vs.len());
    for vi in &vs {
        let mut row = Vec::with_capacity(vs.len());
        for vj in &vs {
            let g = l.diff(vi).diff(vj).simplify();
            if vs.iter().any(|v| g.contains_var(v)) {
                return None;
            }
            row.push(g);
        }
        metric.push(row);
    }
    let potential = (-l.substitute(&at_rest)).simplify();
    let form = MechanicalForm { metric, potential };
    let rebuilt = form.kinetic_quadratic(chart) * 0.5 - form.potential.clone();
    if !zero_test(&(l.clone() - rebuilt), params, 22).is_zero() {
        return None;
    }
    Some(form)
}

/// Sign of `ṡ`, i.e. the orientation of the reparametrized trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }
}

/// Bracket for `ṡ` used for mechanical Lagrangians when none is supplied.
const DEFAULT_BRACKET: (f64, f64) = (1e-6, 1e6);

#[derive(Debug, Clone, PartialEq)]
pub struct JacobiReduction {
    pub homogenized: LagrangianSystem,
    /// The homogenized system reduced by `s` at level `-E`.
    pub reduced: ReducedSystem,
    pub energy: f64,
    pub orientation: Orientation,
    pub mechanical: Option<MechanicalForm>,
    /// `±√2 √g(q̇,q̇) √(E - V)` for mechanical Lagrangians.
    pub closed_form: Option<Expr>,
    /// `±√g(q̇,q̇) / √(2(E - V))` for mechanical Lagrangians.
    pub closed_form_velocity: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiSample {
    /// Routhian of the homogenized system at the sample.
    pub lagrangian: f64,
    /// Stationary `ṡ`.
    pub time_velocity: f64,
    /// Closed-form `(L_J, ṡ)` when the Lagrangian is mechanical.
    pub closed_form: Option<(f64, f64)>,
}

impl JacobiSample {
    /// Relative deviations of `(L_J, ṡ)` from the closed form.
    pub fn relative_deviation(&self) -> Option<(f64, f64)> {
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        self.closed_form
            .map(|(l, s)| (rel(self.lagrangian, l), rel(self.time_velocity, s)))
    }
}

/// Homogenizes and reduces at momentum level `-E`. The stationary `ṡ` is
/// found by root finding inside `bracket`; for mechanical Lagrangians a
/// bracket matching the orientation is used when none is given.
pub fn jacobi_reduce(
    sys: &LagrangianSystem,
    energy: f64,
    orientation: Orientation,
    bracket: Option<(f64, f64)>,
) -> Result<JacobiReduction, RouthError> {
    let homogenized = homogenize(sys)?;
    let s = homogenized
        .chart()
        .cyclic()
        .expect("homogenized chart is cyclic in s")
        .to_string();
    let mechanical = mechanical_form(sys);
    let sign = orientation.sign();
    let bracket = bracket.or_else(|| {
        mechanical.as_ref().map(|_| {
            let (lo, hi) = DEFAULT_BRACKET;
            if sign > 0.0 {
                (lo, hi)
            } else {
                (-hi, -lo)
            }
        })
    });
    let level = MomentumLevel::new(-energy, s);
    let options = RouthOptions {
        bracket,
        ..RouthOptions::default()
    };
    let reduced = match routhian(&homogenized, &level, &GaugeRecord::zero(-energy), &options) {
        Err(RouthError::BracketRequired) => return Err(RouthError::BracketRequired),
        other => other?,
    };

    let (closed_form, closed_form_velocity) = match &mechanical {
        Some(m) => {
            let g = m.kinetic_quadratic(sys.chart());
            let gap = Expr::num(energy) - m.potential.clone();
            let l = Expr::num(sign) * Expr::num(2.0).sqrt() * g.clone().sqrt() * gap.clone().sqrt();
            let v = Expr::num(sign) * g.sqrt() / (Expr::num(2.0) * gap).sqrt();
            (Some(l), Some(v))
        }
        None => (None, None),
    };
    Ok(JacobiReduction {
        homogenized,
        reduced,
        energy,
        orientation,
        mechanical,
        closed_form,
        closed_form_velocity,
    })
}

impl JacobiReduction {
    /// Evaluates the reduced Lagrangian at a `(q, q̇)` point.
    pub fn sample(&self, point: &Binding) -> Result<JacobiSample, RouthError> {
        let full_point = point.merged(self.homogenized.params());
        if let Some(m) = &self.mechanical {
            let potential = m.potential.eval(&full_point)?;
            if !(self.energy > potential) {
                return Err(RouthError::EnergyBelowPotential {
                    point: point.iter().map(|(k, v)| (k.to_string(), v)).collect(),
                    energy: self.energy,
                    potential,
                });
            }
        }
        let (lagrangian, time_velocity) = self.reduced.routhian_at(point)?;
        let closed_form = match (&self.closed_form, &self.closed_form_velocity) {
            (Some(l), Some(v)) => Some((l.eval(&full_point)?, v.eval(&full_point)?)),
            _ => None,
        };
        Ok(JacobiSample {
            lagrangian,
            time_velocity,
            closed_form,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::check_cyclic_symmetry;

    fn system(coords: &[&str], l: &str, params: &[(&str, f64)]) -> LagrangianSystem {
        let chart = Chart::new(coords.iter().copied(), None).unwrap();
        LagrangianSystem::parse(chart, l, Binding::from_pairs(params.iter().copied())).unwrap()
    }

    #[test]
    fn homogenized_free_particle() {
        let sys = system(&["x"], "0.5*dx^2", &[]);
        let h = homogenize(&sys).unwrap();
        assert_eq!(h.lagrangian(), &Expr::parse("0.5*dx^2/ds").unwrap());
        assert_eq!(h.chart().cyclic(), Some("s"));
        assert!(check_cyclic_symmetry(&h).unwrap().unwrap().is_symmetric());
    }

    #[test]
    fn homogenize_avoids_name_clash() {
        let sys = system(&["s", "x"], "0.5*(ds^2 + dx^2)", &[]);
        let h = homogenize(&sys).unwrap();
        assert_eq!(h.chart().cyclic(), Some("s_"));
    }

    #[test]
    fn detects_mechanical_form() {
        let sys = system(&["r", "theta"], "0.5*(dr^2 + r^2*dtheta^2) + k/r", &[("k", 1.0)]);
        let m = mechanical_form(&sys).unwrap();
        assert_eq!(m.metric[1][1], Expr::parse("r^2").unwrap());
        assert!(mechanical_form(&system(&["x", "y"], "dx*dy - y^2 + dx", &[])).is_none());
        assert!(mechanical_form(&system(&["x"], "sqrt(1 + dx^2)", &[])).is_none());
    }

    #[test]
    fn closed_form_examples() {
        let free = system(&["x"], "0.5*dx^2", &[]);
        let j = jacobi_reduce(&free, 2.0, Orientation::Positive, None).unwrap();
        let s = j.sample(&Binding::from_pairs([("x", 0.0), ("dx", 1.0)])).unwrap();
        assert!((s.lagrangian - 2.0).abs() < 1e-12);
        assert!((s.closed_form.unwrap().0 - 2.0).abs() < 1e-15);

        let osc = system(&["x"], "0.5*dx^2 - 0.5*x^2", &[]);
        let j = jacobi_reduce(&osc, 1.0, Orientation::Positive, None).unwrap();
        let s = j.sample(&Binding::from_pairs([("x", 0.0), ("dx", 1.0)])).unwrap();
        assert!((s.lagrangian - 2f64.sqrt()).abs() < 1e-12);

        let neg = jacobi_reduce(&osc, 1.0, Orientation::Negative, None).unwrap();
        let s = neg.sample(&Binding::from_pairs([("x", 0.0), ("dx", 1.0)])).unwrap();
        assert!((s.lagrangian + 2f64.sqrt()).abs() < 1e-12);
        assert!(s.time_velocity < 0.0);

        assert!(matches!(
            j.sample(&Binding::from_pairs([("x", 2.0), ("dx", 1.0)])),
            Err(RouthError::EnergyBelowPotential { .. })
        ));
    }

    #[test]
    fn non_mechanical_needs_bracket() {
        let sys = system(&["x"], "sqrt(1 + dx^2) + 0.5*dx^4", &[]);
        assert_eq!(
            jacobi_reduce(&sys, 1.0, Orientation::Positive, None).unwrap_err(),
            RouthError::BracketRequired
        );
    }
}
