//! Fixed-step RK4 integration, post-hoc monitors, trajectory comparison and
//! CSV output.

use std::io::{self, Write};

use thiserror::Error;

use crate::expr::{Binding, CompiledExpr, EvalError, Expr};

/// Failure of a vector field at one state.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("singular velocity Hessian (condition estimate {condition:.3e})")]
    SingularHessian { condition: f64 },
    #[error("{0}")]
    Failed(String),
}

/// An explicit first-order system `ż = F(t, z)`.
pub trait FirstOrderField {
    /// Names of the state components, in order.
    fn component_names(&self) -> Vec<String>;

    fn derivative(&mut self, t: f64, state: &[f64], out: &mut [f64]) -> Result<(), FieldError>;
}

/// A field given by one expression per component, over the state names and
/// fixed parameters.
pub struct ExprField {
    names: Vec<String>,
    rhs: Vec<CompiledExpr>,
    slots: Vec<f64>,
}

impl ExprField {
    pub fn new(names: Vec<String>, rhs: &[Expr], params: &Binding) -> Result<Self, EvalError> {
        assert_eq!(names.len(), rhs.len(), "one expression per state component");
        let vars: Vec<&str> = names.iter().map(String::as_str).collect();
        let rhs = rhs
            .iter()
            .map(|e| e.bind(params).compile(&vars))
            .collect::<Result<_, _>>()?;
        let slots = vec![0.0; names.len()];
        Ok(ExprField { names, rhs, slots })
    }
}

impl FirstOrderField for ExprField {
    fn component_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn derivative(&mut self, _t: f64, state: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        self.slots.copy_from_slice(state);
        for (o, e) in out.iter_mut().zip(&self.rhs) {
            *o = e.eval(&self.slots)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("empty time interval [{t0}, {t1}]")]
    EmptyInterval { t0: f64, t1: f64 },
    #[error("no initial value for `{0}`")]
    MissingInitial(String),
    #[error("no component named `{0}`")]
    UnknownComponent(String),
    #[error("time ranges [{a0}, {a1}] and [{b0}, {b1}] do not overlap")]
    Disjoint { a0: f64, a1: f64, b0: f64, b1: f64 },
    #[error("initial field evaluation failed: {0}")]
    InitialState(FieldError),
}

/// Where and why an integration stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationFailure {
    pub t: f64,
    pub state: Vec<f64>,
    pub error: FieldError,
}

/// Values of one monitored quantity along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitor {
    pub name: String,
    pub values: Vec<f64>,
    /// `max |value_k - value_0|`.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    names: Vec<String>,
    times: Vec<f64>,
    samples: Vec<Vec<f64>>,
    pub monitors: Vec<Monitor>,
    pub failure: Option<IntegrationFailure>,
}

impl Trajectory {
    pub fn new(names: Vec<String>, times: Vec<f64>, samples: Vec<Vec<f64>>) -> Self {
        assert_eq!(times.len(), samples.len());
        debug_assert!(samples.iter().all(|s| s.len() == names.len()));
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        Trajectory {
            names,
            times,
            samples,
            monitors: Vec::new(),
            failure: None,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, DynamicsError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DynamicsError::UnknownComponent(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, DynamicsError> {
        let i = self.index_of(name)?;
        Ok(self.samples.iter().map(|s| s[i]).collect())
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.samples.last().map(Vec::as_slice)
    }

    /// Appends a column; `values` must have one entry per sample.
    pub fn push_column(&mut self, name: impl Into<String>, values: &[f64]) {
        assert_eq!(values.len(), self.samples.len());
        self.names.push(name.into());
        for (s, &v) in self.samples.iter_mut().zip(values) {
            s.push(v);
        }
    }

    /// Sample `k` as a binding over the component names.
    pub fn binding_at(&self, k: usize) -> Binding {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.samples[k].iter().copied())
            .collect()
    }

    /// Linear interpolation of component `i` at time `t` inside the grid.
    fn interpolate(&self, i: usize, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.samples[0][i];
        }
        if k == self.times.len() {
            return self.samples[k - 1][i];
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (y0, y1) = (self.samples[k - 1][i], self.samples[k][i]);
        let w = (t - t0) / (t1 - t0);
        y0 + w * (y1 - y0)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "t")?;
        for n in &self.names {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
        for (t, s) in self.times.iter().zip(&self.samples) {
            write!(out, "{}", format_g17(*t))?;
            for v in s {
                write!(out, ",{}", format_g17(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Step count and whether a final partial step is needed. A ratio within
/// rounding of an integer counts as exact so the last grid point is `t1`.
fn grid_steps(t0: f64, t1: f64, dt: f64) -> (usize, bool) {
    let ratio = (t1 - t0) / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        (nearest as usize, false)
    } else {
        (ratio.floor() as usize, true)
    }
}

/// Classical RK4 on the uniform grid `t_k = t0 + k*dt`, with a final
/// shortened step landing on `t1`. A field failure stops the integration and
/// is recorded in [`Trajectory::failure`].
pub fn integrate_rk4<F: FirstOrderField + ?Sized>(
    field: &mut F,
    state0: &Binding,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    let names = field.component_names();
    let z0 = names
        .iter()
        .map(|n| state0.get(n).ok_or_else(|| DynamicsError::MissingInitial(n.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    integrate_rk4_from(field, &z0, t0, t1, dt)
}

/// [`integrate_rk4`] with the initial state given positionally.
pub fn integrate_rk4_from<F: FirstOrderField + ?Sized>(
    field: &mut F,
    z0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    if !(t1 > t0) {
        return Err(DynamicsError::EmptyInterval { t0, t1 });
    }
    let names = field.component_names();
    let n = names.len();
    assert_eq!(z0.len(), n, "initial state length");
    let (steps, partial) = grid_steps(t0, t1, dt);

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    field.derivative(t0, z0, &mut k1).map_err(DynamicsError::InitialState)?;

    let total = steps + usize::from(partial);
    let mut times = Vec::with_capacity(total + 1);
    let mut samples = Vec::with_capacity(total + 1);
    times.push(t0);
    samples.push(z0.to_vec());
    let mut z = z0.to_vec();
    let mut failure = None;

    for k in 0..total {
        let t = times[k];
        let t_next = if k + 1 == total { t1 } else { t0 + (k + 1) as f64 * dt };
        let h = t_next - t;
        let step = |field: &mut F,
                    z: &[f64],
                    k1: &mut [f64],
                    k2: &mut [f64],
                    k3: &mut [f64],
                    k4: &mut [f64],
                    tmp: &mut [f64]|
         -> Result<(), FieldError> {
            field.derivative(t, z, k1)?;
            for i in 0..n {
                tmp[i] = z[i] + 0.5 * h * k1[i];
            }
            field.derivative(t + 0.5 * h, tmp, k2)?;
            for i in 0..n {
                tmp[i] = z[i] + 0.5 * h * k2[i];
            }
            field.derivative(t + 0.5 * h, tmp, k3)?;
            for i in 0..n {
                tmp[i] = z[i] + h * k3[i];
            }
            field.derivative(t + h, tmp, k4)
        };
        if let Err(error) = step(field, &z, &mut k1, &mut k2, &mut k3, &mut k4, &mut tmp) {
            failure = Some(IntegrationFailure {
                t,
                state: z.clone(),
                error,
            });
            break;
        }
        for i in 0..n {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        times.push(t_next);
        samples.push(z.clone());
    }

    let mut traj = Trajectory::new(names, times, samples);
    traj.failure = failure;
    Ok(traj)
}

/// Evaluates each named quantity on every sample (with `params` bound) and
/// reports its drift from the initial value. Samples where a quantity cannot
/// be evaluated give NaN and an infinite drift.
pub fn monitor(traj: &Trajectory, quantities: &[(String, Expr)], params: &Binding) -> Vec<Monitor> {
    let vars: Vec<&str> = traj.names.iter().map(String::as_str).collect();
    quantities
        .iter()
        .map(|(name, e)| {
            let values: Vec<f64> = match e.bind(params).compile(&vars) {
                Ok(c) => traj.samples.iter().map(|s| c.eval(s).unwrap_or(f64::NAN)).collect(),
                Err(_) => vec![f64::NAN; traj.len()],
            };
            let drift = match values.first() {
                None => 0.0,
                Some(&v0) => values.iter().fold(0.0_f64, |acc, &v| {
                    let d = (v - v0).abs();
                    if d.is_nan() {
                        f64::INFINITY
                    } else {
                        acc.max(d)
                    }
                }),
            };
            Monitor {
                name: name.clone(),
                values,
                drift,
            }
        })
        .collect()
}

/// Sup-norm deviation between component pairs, with `b` linearly
/// interpolated onto the samples of `a` that fall inside `b`'s time range.
pub fn compare(a: &Trajectory, b: &Trajectory, pairs: &[(&str, &str)]) -> Result<Vec<f64>, DynamicsError> {
    let (a0, a1) = (a.times[0], *a.times.last().expect("non-empty"));
    let (b0, b1) = (b.times[0], *b.times.last().expect("non-empty"));
    let eps = 1e-12 * (a1.abs().max(b1.abs()).max(1.0));
    if a1 < b0 - eps || b1 < a0 - eps {
        return Err(DynamicsError::Disjoint { a0, a1, b0, b1 });
    }
    pairs
        .iter()
        .map(|(ca, cb)| {
            let ia = a.index_of(ca)?;
            let ib = b.index_of(cb)?;
            Ok(a.times
                .iter()
                .zip(&a.samples)
                .filter(|(t, _)| **t >= b0 - eps && **t <= b1 + eps)
                .map(|(&t, s)| (s[ia] - b.interpolate(ib, t)).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

/// `%.17g`-style rendering: 17 significant digits, trailing zeros trimmed,
/// scientific notation outside `[1e-4, 1e17)`.
pub fn format_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator() -> ExprField {
        ExprField::new(
            vec!["x".into(), "dx".into()],
            &[Expr::var("dx"), -Expr::var("x")],
            &Binding::new(),
        )
        .unwrap()
    }

    #[test]
    fn harmonic_oscillator_matches_cosine() {
        let mut f = oscillator();
        let z0 = Binding::from_pairs([("x", 1.0), ("dx", 0.0)]);
        let traj = integrate_rk4(&mut f, &z0, 0.0, 10.0, 1e-3).unwrap();
        assert_eq!(traj.len(), 10_001);
        assert_eq!(*traj.times().last().unwrap(), 10.0);
        let x = traj.last().unwrap()[0];
        assert!((x - 10f64.cos()).abs() <= 1e-9, "{}", x - 10f64.cos());
    }

    #[test]
    fn zero_field_is_constant() {
        let mut f = ExprField::new(
            vec!["a".into(), "b".into()],
            &[Expr::zero(), Expr::zero()],
            &Binding::new(),
        )
        .unwrap();
        let z0 = Binding::from_pairs([("a", 0.3), ("b", -2.0)]);
        let traj = integrate_rk4(&mut f, &z0, 0.0, 1.0, 0.1).unwrap();
        assert!(traj.samples().iter().all(|s| s == &[0.3, -2.0]));
    }

    #[test]
    fn polynomial_solution_is_reproduced() {
        // ẏ = α, ṗ = -2y with α = 1: y = t, p = -t².
        let mut f = ExprField::new(
            vec!["y".into(), "p_y".into()],
            &[Expr::var("alpha"), Expr::parse("-2*y").unwrap()],
            &Binding::new().with("alpha", 1.0),
        )
        .unwrap();
        let z0 = Binding::from_pairs([("y", 0.0), ("p_y", 0.0)]);
        let traj = integrate_rk4(&mut f, &z0, 0.0, 10.0, 1e-3).unwrap();
        for (t, s) in traj.times().iter().zip(traj.samples()) {
            assert!((s[0] - t).abs() <= 1e-10);
            assert!((s[1] + t * t).abs() <= 1e-9);
        }
    }

    #[test]
    fn partial_final_step_lands_on_t1() {
        let mut f = oscillator();
        let z0 = Binding::from_pairs([("x", 1.0), ("dx", 0.0)]);
        let traj = integrate_rk4(&mut f, &z0, 0.0, 1.05, 0.1).unwrap();
        assert_eq!(traj.len(), 12);
        assert_eq!(*traj.times().last().unwrap(), 1.05);
        assert!((traj.times()[10] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn domain_error_truncates() {
        // ẋ = -1/sqrt(x) reaches x = 0 in finite time.
        let mut f = ExprField::new(vec!["x".into()], &[Expr::parse("-1/sqrt(x)").unwrap()], &Binding::new()).unwrap();
        let traj = integrate_rk4(&mut f, &Binding::new().with("x", 1.0), 0.0, 5.0, 0.01).unwrap();
        let failure = traj.failure.as_ref().expect("failure recorded");
        assert!(failure.t < 1.0);
        assert_eq!(traj.times().len(), traj.samples().len());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut f = oscillator();
        let z0 = Binding::from_pairs([("x", 1.0), ("dx", 0.0)]);
        assert_eq!(
            integrate_rk4(&mut f, &z0, 0.0, 1.0, 0.0).unwrap_err(),
            DynamicsError::InvalidStep(0.0)
        );
        assert!(matches!(
            integrate_rk4(&mut f, &z0, 1.0, 1.0, 0.1),
            Err(DynamicsError::EmptyInterval { .. })
        ));
        assert_eq!(
            integrate_rk4(&mut f, &Binding::new().with("x", 1.0), 0.0, 1.0, 0.1).unwrap_err(),
            DynamicsError::MissingInitial("dx".into())
        );
    }

    #[test]
    fn monitor_drift() {
        let mut f = oscillator();
        let z0 = Binding::from_pairs([("x", 1.0), ("dx", 0.0)]);
        let traj = integrate_rk4(&mut f, &z0, 0.0, 10.0, 1e-3).unwrap();
        let energy = Expr::parse("0.5*dx^2 + 0.5*x^2").unwrap();
        let m = monitor(&traj, &[("E".into(), energy.clone())], &Binding::new());
        assert!(m[0].drift <= 1e-8);

        let single = Trajectory::new(vec!["x".into(), "dx".into()], vec![0.0], vec![vec![1.0, 0.0]]);
        let m = monitor(&single, &[("E".into(), energy)], &Binding::new());
        assert_eq!(m[0].drift, 0.0);
    }

    #[test]
    fn compare_identical_and_shifted() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let a = Trajectory::new(
            vec!["u".into()],
            times.clone(),
            times.iter().map(|t| vec![2.0 * t]).collect(),
        );
        assert_eq!(compare(&a, &a, &[("u", "u")]).unwrap(), [0.0]);
        let shifted = Trajectory::new(
            vec!["u".into()],
            times.iter().map(|t| t + 0.05).collect(),
            times.iter().map(|t| vec![2.0 * t]).collect(),
        );
        let d = compare(&a, &shifted, &[("u", "u")]).unwrap();
        assert!((d[0] - 0.1).abs() < 1e-12);

        let far = Trajectory::new(vec!["u".into()], vec![5.0, 6.0], vec![vec![0.0], vec![0.0]]);
        assert!(matches!(
            compare(&a, &far, &[("u", "u")]),
            Err(DynamicsError::Disjoint { .. })
        ));
    }

    #[test]
    fn g17_formatting() {
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(1.0), "1");
        assert_eq!(format_g17(-2.5), "-2.5");
        assert_eq!(format_g17(10.0), "10");
        assert_eq!(format_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(format_g17(1e20), "1e+20");
        assert_eq!(format_g17(0.0), "0");
        assert_eq!(format_g17(123456.789), "123456.789");
        for x in [0.1, 1.0 / 3.0, -7.25e-3, 6.02214076e23, 1e-300, 12345678901234567.0] {
            assert_eq!(format_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_layout() {
        let traj = Trajectory::new(
            vec!["x".into(), "dx".into()],
            vec![0.0, 0.5],
            vec![vec![1.0, 0.0], vec![0.5, -0.25]],
        );
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x,dx\n0,1,0\n0.5,0.5,-0.25\n");
    }
}
