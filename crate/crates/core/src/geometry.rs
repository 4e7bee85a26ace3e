//! Coordinate realizations of the lifts and canonical maps on `TQ`, `T*Q` and
//! the iterated bundles.
//!
//! Everything here works in a single chart. A configuration coordinate `q`
//! has velocity `dq` on `TQ` and momentum `p_q` on `T*Q`. Points of the
//! iterated bundles (`TTQ`, `TT*Q`, `T*T*Q`, `T*TQ`) are flat slices made of
//! four blocks of length `n`, in the block order documented on each map.

use std::collections::HashSet;

use thiserror::Error;

use crate::expr::{Binding, EvalError, Expr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("chart has no coordinates")]
    EmptyChart,
    #[error("duplicate coordinate `{0}`")]
    DuplicateCoordinate(String),
    #[error("cyclic coordinate `{0}` is not a chart coordinate")]
    UnknownCyclic(String),
    #[error("invalid coordinate name `{0}`")]
    InvalidName(String),
    #[error("expected {expected} components, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("expected a {expected:?} field, got a {got:?} field")]
    BundleMismatch { expected: Bundle, got: Bundle },
    #[error("component uses `{0}`, which is not a coordinate of its bundle")]
    ForeignVariable(String),
    #[error("tangent pairing needs matching (q, q̇) blocks; they differ by {0:e}")]
    BaseMismatch(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub fn velocity_name(coord: &str) -> String {
    format!("d{coord}")
}

pub fn acceleration_name(coord: &str) -> String {
    format!("dd{coord}")
}

pub fn momentum_name(coord: &str) -> String {
    format!("p_{coord}")
}

/// Ordered configuration coordinates, optionally with a cyclic coordinate `y`
/// whose symmetry field is `∂/∂y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    coords: Vec<String>,
    cyclic: Option<String>,
}

impl Chart {
    pub fn new<I, S>(coords: I, cyclic: Option<&str>) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let coords: Vec<String> = coords.into_iter().map(Into::into).collect();
        if coords.is_empty() {
            return Err(GeometryError::EmptyChart);
        }
        let mut seen = HashSet::new();
        for c in &coords {
            if !is_identifier(c) {
                return Err(GeometryError::InvalidName(c.clone()));
            }
            if !seen.insert(c.as_str()) {
                return Err(GeometryError::DuplicateCoordinate(c.clone()));
            }
        }
        if let Some(y) = cyclic {
            if !seen.contains(y) {
                return Err(GeometryError::UnknownCyclic(y.to_string()));
            }
        }
        Ok(Chart {
            coords,
            cyclic: cyclic.map(str::to_string),
        })
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn cyclic(&self) -> Option<&str> {
        self.cyclic.as_deref()
    }

    pub fn index_of(&self, coord: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == coord)
    }

    pub fn with_cyclic(&self, cyclic: Option<&str>) -> Result<Chart, GeometryError> {
        Chart::new(self.coords.clone(), cyclic)
    }

    pub fn velocities(&self) -> Vec<String> {
        self.coords.iter().map(|c| velocity_name(c)).collect()
    }

    pub fn momenta(&self) -> Vec<String> {
        self.coords.iter().map(|c| momentum_name(c)).collect()
    }

    /// `(q, q̇)` variable names.
    pub fn tangent_vars(&self) -> Vec<String> {
        let mut v = self.coords.clone();
        v.extend(self.velocities());
        v
    }

    /// `(q, p)` variable names.
    pub fn cotangent_vars(&self) -> Vec<String> {
        let mut v = self.coords.clone();
        v.extend(self.momenta());
        v
    }

    pub fn bundle_vars(&self, bundle: Bundle) -> Vec<String> {
        match bundle {
            Bundle::Base => self.coords.clone(),
            Bundle::Tangent => self.tangent_vars(),
            Bundle::Cotangent => self.cotangent_vars(),
        }
    }

    /// The chart of the orbit space: the cyclic coordinate dropped.
    pub fn reduced(&self) -> Option<Chart> {
        let y = self.cyclic.as_deref()?;
        let coords: Vec<String> = self.coords.iter().filter(|c| *c != y).cloned().collect();
        if coords.is_empty() {
            return None;
        }
        Some(Chart { coords, cyclic: None })
    }

    /// `∂/∂y` for the cyclic coordinate.
    pub fn symmetry_field(&self) -> Option<VectorField> {
        let y = self.cyclic.as_deref()?;
        Some(self.coordinate_field(y).expect("cyclic is a coordinate"))
    }

    /// The coordinate field `∂/∂coord`.
    pub fn coordinate_field(&self, coord: &str) -> Option<VectorField> {
        let idx = self.index_of(coord)?;
        let components = (0..self.dim())
            .map(|i| if i == idx { Expr::one() } else { Expr::zero() })
            .collect();
        Some(VectorField {
            chart: self.clone(),
            bundle: Bundle::Base,
            components,
        })
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Which bundle a vector field lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bundle {
    Base,
    Tangent,
    Cotangent,
}

impl Bundle {
    pub fn components(self, n: usize) -> usize {
        match self {
            Bundle::Base => n,
            Bundle::Tangent | Bundle::Cotangent => 2 * n,
        }
    }
}

/// A vector field in chart coordinates. Base fields have `n` components over
/// `q`; tangent and cotangent fields have `2n` over `(q, q̇)` or `(q, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    chart: Chart,
    bundle: Bundle,
    components: Vec<Expr>,
}

impl VectorField {
    /// Builds a field; component variables outside the bundle coordinates are
    /// allowed only if they appear in `params`.
    pub fn new(chart: Chart, bundle: Bundle, components: Vec<Expr>, params: &[&str]) -> Result<Self, GeometryError> {
        let expected = bundle.components(chart.dim());
        if components.len() != expected {
            return Err(GeometryError::Dimension {
                expected,
                got: components.len(),
            });
        }
        let vars = chart.bundle_vars(bundle);
        for c in &components {
            for v in c.free_vars() {
                if !vars.contains(&v) && !params.contains(&v.as_str()) {
                    return Err(GeometryError::ForeignVariable(v));
                }
            }
        }
        Ok(VectorField {
            chart,
            bundle,
            components,
        })
    }

    pub fn base(chart: Chart, components: Vec<Expr>) -> Result<Self, GeometryError> {
        VectorField::new(chart, Bundle::Base, components, &[])
    }

    pub fn zero(chart: Chart, bundle: Bundle) -> Self {
        let n = bundle.components(chart.dim());
        VectorField {
            chart,
            bundle,
            components: vec![Expr::zero(); n],
        }
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn bundle(&self) -> Bundle {
        self.bundle
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.simplify().is_zero())
    }

    pub fn eval(&self, point: &Binding) -> Result<Vec<f64>, GeometryError> {
        Ok(self
            .components
            .iter()
            .map(|c| c.eval(point))
            .collect::<Result<_, _>>()?)
    }

    /// The directional derivative `Σ Cⁱ ∂f/∂zⁱ` of `f` along this field.
    pub fn apply(&self, f: &Expr) -> Expr {
        let vars = self.chart.bundle_vars(self.bundle);
        Expr::sum(
            vars.iter()
                .zip(&self.components)
                .filter(|(_, c)| !c.is_zero())
                .map(|(v, c)| c.clone() * f.diff(v)),
        )
        .simplify()
    }

    fn require(&self, bundle: Bundle) -> Result<(), GeometryError> {
        if self.bundle == bundle {
            Ok(())
        } else {
            Err(GeometryError::BundleMismatch {
                expected: bundle,
                got: self.bundle,
            })
        }
    }
}

/// Complete lift `d_T X` of a base field: components `Xⁱ` and
/// `∂Xʲ/∂qᵏ q̇ᵏ` over `(q, q̇)`.
pub fn complete_lift(x: &VectorField) -> Result<VectorField, GeometryError> {
    x.require(Bundle::Base)?;
    let chart = x.chart.clone();
    let velocities = chart.velocities();
    let mut components = x.components.clone();
    for xj in &x.components {
        let vertical = Expr::sum(
            chart
                .coords()
                .iter()
                .zip(&velocities)
                .map(|(qk, dqk)| xj.diff(qk) * Expr::var(dqk.as_str())),
        );
        components.push(vertical.simplify());
    }
    Ok(VectorField {
        chart,
        bundle: Bundle::Tangent,
        components,
    })
}

/// The fibre-linear function `ι_X(p) = Σ pᵢ Xⁱ(q)`.
pub fn momentum_function(x: &VectorField) -> Result<Expr, GeometryError> {
    x.require(Bundle::Base)?;
    let momenta = x.chart.momenta();
    Ok(Expr::sum(
        momenta
            .iter()
            .zip(&x.components)
            .map(|(p, xi)| Expr::var(p.as_str()) * xi.clone()),
    )
    .simplify())
}

/// Hamiltonian vector field of `h(q, p)`: `(∂h/∂pᵢ, -∂h/∂qⁱ)`.
pub fn hamiltonian_field(chart: &Chart, h: &Expr) -> VectorField {
    let mut components: Vec<Expr> = chart.momenta().iter().map(|p| h.diff(p).simplify()).collect();
    components.extend(chart.coords().iter().map(|q| (-h.diff(q)).simplify()));
    VectorField {
        chart: chart.clone(),
        bundle: Bundle::Cotangent,
        components,
    }
}

/// Cotangent lift `d_{T*} X`, the Hamiltonian field of `ι_X`.
pub fn cotangent_lift(x: &VectorField) -> Result<VectorField, GeometryError> {
    let iota = momentum_function(x)?;
    Ok(hamiltonian_field(&x.chart, &iota))
}

fn blocks(w: &[f64]) -> Result<usize, GeometryError> {
    if w.is_empty() || !w.len().is_multiple_of(4) {
        return Err(GeometryError::Dimension {
            expected: 4 * (w.len() / 4).max(1),
            got: w.len(),
        });
    }
    Ok(w.len() / 4)
}

fn reorder(w: &[f64], order: [usize; 4], negate: [bool; 4]) -> Result<Vec<f64>, GeometryError> {
    let n = blocks(w)?;
    let mut out = Vec::with_capacity(w.len());
    for (src, neg) in order.iter().zip(negate) {
        out.extend(w[src * n..(src + 1) * n].iter().map(|&v| if neg { -v } else { v }));
    }
    Ok(out)
}

/// Canonical flip `κ_Q` on `TTQ`: `(q, q̇, δq, δq̇) ↦ (q, δq, q̇, δq̇)`.
pub fn flip_kappa(w: &[f64]) -> Result<Vec<f64>, GeometryError> {
    reorder(w, [0, 2, 1, 3], [false; 4])
}

/// `β_Q: TT*Q → T*T*Q`, `(q, p, q̇, ṗ) ↦ (q, p, ξ, y) = (q, p, ṗ, -q̇)`.
pub fn beta_map(v: &[f64]) -> Result<Vec<f64>, GeometryError> {
    reorder(v, [0, 1, 3, 2], [false, false, false, true])
}

/// Inverse of [`beta_map`]: `(q, p, ξ, y) ↦ (q, p, -y, ξ)`.
pub fn beta_inverse(v: &[f64]) -> Result<Vec<f64>, GeometryError> {
    reorder(v, [0, 1, 3, 2], [false, false, true, false])
}

/// Tulczyjew `α_Q: TT*Q → T*TQ`, `(q, p, q̇, ṗ) ↦ (q, q̇, φ, ψ) = (q, q̇, ṗ, p)`.
pub fn alpha_map(v: &[f64]) -> Result<Vec<f64>, GeometryError> {
    reorder(v, [0, 2, 3, 1], [false; 4])
}

/// Inverse of [`alpha_map`]: `(q, q̇, φ, ψ) ↦ (q, ψ, q̇, φ)`.
pub fn alpha_inverse(v: &[f64]) -> Result<Vec<f64>, GeometryError> {
    reorder(v, [0, 3, 1, 2], [false; 4])
}

/// Tangent pairing `⟨⟨w, u⟩⟩ = Σ (ṗᵢ vⁱ + pᵢ v̇ⁱ)` of `w = (q, p, q̇, ṗ)` in
/// `TT*Q` and `u = (q, v, q̇, v̇)` in `TTQ` over the same `(q, q̇)`.
pub fn tangent_pairing(w: &[f64], u: &[f64]) -> Result<f64, GeometryError> {
    let n = blocks(w)?;
    if u.len() != w.len() {
        return Err(GeometryError::Dimension {
            expected: w.len(),
            got: u.len(),
        });
    }
    let mismatch = (0..n)
        .chain(2 * n..3 * n)
        .map(|i| (w[i] - u[i]).abs())
        .fold(0.0, f64::max);
    if mismatch > 1e-12 {
        return Err(GeometryError::BaseMismatch(mismatch));
    }
    Ok((0..n).map(|i| w[3 * n + i] * u[n + i] + w[n + i] * u[3 * n + i]).sum())
}

/// `d_T ω_Q = dp ∧ dq̇ + dṗ ∧ dq` on two displacements of `TT*Q`, both in
/// `(δq, δp, δq̇, δṗ)` block order.
pub fn tangent_symplectic_form(a: &[f64], b: &[f64]) -> Result<f64, GeometryError> {
    let n = blocks(a)?;
    if b.len() != a.len() {
        return Err(GeometryError::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let blk = |v: &[f64], k: usize, i: usize| v[k * n + i];
    Ok((0..n)
        .map(|i| {
            (blk(a, 1, i) * blk(b, 2, i) - blk(b, 1, i) * blk(a, 2, i))
                + (blk(a, 3, i) * blk(b, 0, i) - blk(b, 3, i) * blk(a, 0, i))
        })
        .sum())
}

/// `ω_{T*Q} = dξ ∧ dq + dy ∧ dp` on two displacements of `T*T*Q`, both in
/// `(δq, δp, δξ, δy)` block order.
pub fn cotangent_symplectic_form(a: &[f64], b: &[f64]) -> Result<f64, GeometryError> {
    let n = blocks(a)?;
    if b.len() != a.len() {
        return Err(GeometryError::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let blk = |v: &[f64], k: usize, i: usize| v[k * n + i];
    Ok((0..n)
        .map(|i| {
            (blk(a, 2, i) * blk(b, 0, i) - blk(b, 2, i) * blk(a, 0, i))
                + (blk(a, 3, i) * blk(b, 1, i) - blk(b, 3, i) * blk(a, 1, i))
        })
        .sum())
}

/// Tangent map of a base field, `TX(q, v) = (q, X(q), v, ∂X(q)·v)` in
/// `(q, q̇, δq, δq̇)` order.
pub fn tangent_map(x: &VectorField, q: &[f64], v: &[f64]) -> Result<Vec<f64>, GeometryError> {
    x.require(Bundle::Base)?;
    let n = x.chart.dim();
    if q.len() != n || v.len() != n {
        return Err(GeometryError::Dimension {
            expected: n,
            got: q.len().min(v.len()),
        });
    }
    let point: Binding = x
        .chart
        .coords()
        .iter()
        .map(String::as_str)
        .zip(q.iter().copied())
        .collect();
    let mut out = q.to_vec();
    out.extend(x.eval(&point)?);
    out.extend_from_slice(v);
    for xj in &x.components {
        let mut acc = 0.0;
        for (k, qk) in x.chart.coords().iter().enumerate() {
            acc += xj.diff(qk).eval(&point)? * v[k];
        }
        out.push(acc);
    }
    Ok(out)
}

/// Components `X^k ∂_k Y^i - Y^k ∂_k X^i` of the commutator `[X, Y]`.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> Result<VectorField, GeometryError> {
    x.require(Bundle::Base)?;
    y.require(Bundle::Base)?;
    let coords = x.chart.coords();
    let components = (0..coords.len())
        .map(|i| {
            Expr::sum(coords.iter().enumerate().map(|(k, qk)| {
                x.components[k].clone() * y.components[i].diff(qk) - y.components[k].clone() * x.components[i].diff(qk)
            }))
            .simplify()
        })
        .collect();
    Ok(VectorField {
        chart: x.chart.clone(),
        bundle: Bundle::Base,
        components,
    })
}
