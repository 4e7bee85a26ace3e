//! The system definition file: TOML with `[system]`, `[params]`,
//! `[simulate]` and `[reduce]` tables.

use std::collections::BTreeMap;
use std::path::Path;

use routh_core::expr::{Binding, Expr};
use routh_core::geometry::Chart;
use routh_core::mechanics::{LagrangianSystem, MechanicsError};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub system: SystemTable,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub simulate: Option<SimulateTable>,
    pub reduce: Option<ReduceTable>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemTable {
    pub coordinates: Vec<String>,
    pub cyclic: Option<String>,
    pub lagrangian: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateTable {
    pub initial: BTreeMap<String, f64>,
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceTable {
    pub alpha: Option<f64>,
    pub branch: Option<usize>,
    pub gauge: Option<String>,
    pub bracket: Option<[f64; 2]>,
}

/// A definition file checked against its own names.
#[derive(Debug, Clone)]
pub struct Definition {
    pub file: SystemFile,
    pub system: LagrangianSystem,
}

impl Definition {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Definition(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let file: SystemFile = toml::from_str(text).map_err(|e| CliError::Definition(e.to_string()))?;
        let cyclic = file.system.cyclic.as_deref();
        let chart = Chart::new(file.system.coordinates.iter().map(String::as_str), cyclic)
            .map_err(|e| CliError::Definition(format!("[system]: {e}")))?;
        let params = Binding::from_pairs(file.params.iter().map(|(k, v)| (k.as_str(), *v)));
        let system = match LagrangianSystem::parse(chart, &file.system.lagrangian, params) {
            Ok(s) => s,
            Err(MechanicsError::Parse(e)) => {
                return Err(CliError::Definition(format!(
                    "lagrangian: parse error at byte {}: {e}",
                    e.offset()
                )))
            }
            Err(e) => return Err(CliError::Definition(format!("lagrangian: {e}"))),
        };
        let def = Definition { file, system };
        def.check_simulate()?;
        def.check_reduce()?;
        Ok(def)
    }

    fn check_simulate(&self) -> Result<(), CliError> {
        let Some(sim) = &self.file.simulate else {
            return Ok(());
        };
        let vars = self.system.chart().tangent_vars();
        for name in sim.initial.keys() {
            if !vars.contains(name) {
                return Err(CliError::Definition(format!(
                    "[simulate] initial value for `{name}`, which is not a coordinate or velocity"
                )));
            }
        }
        for name in &vars {
            if !sim.initial.contains_key(name) {
                return Err(CliError::Definition(format!(
                    "[simulate] initial value for `{name}` is missing"
                )));
            }
        }
        if !(sim.dt > 0.0 && sim.dt.is_finite()) {
            return Err(CliError::Definition(format!(
                "[simulate] dt must be positive, got {}",
                sim.dt
            )));
        }
        if !(sim.t1 > sim.t0) {
            return Err(CliError::Definition(format!(
                "[simulate] t1 = {} must exceed t0 = {}",
                sim.t1, sim.t0
            )));
        }
        Ok(())
    }

    fn check_reduce(&self) -> Result<(), CliError> {
        let Some(red) = &self.file.reduce else {
            return Ok(());
        };
        if let Some(g) = &red.gauge {
            parse_expr("[reduce] gauge", g)?;
        }
        if let Some([lo, hi]) = red.bracket {
            check_bracket(lo, hi)?;
        }
        if self.system.chart().cyclic().is_none() {
            return Err(CliError::Definition(
                "[reduce] needs a cyclic coordinate in [system]".into(),
            ));
        }
        Ok(())
    }

    pub fn cyclic(&self) -> Result<&str, CliError> {
        self.system
            .chart()
            .cyclic()
            .ok_or_else(|| CliError::Definition("no cyclic coordinate given in [system]".into()))
    }

    pub fn simulate(&self) -> Result<&SimulateTable, CliError> {
        self.file
            .simulate
            .as_ref()
            .ok_or_else(|| CliError::Definition("the file has no [simulate] block".into()))
    }

    pub fn initial(&self) -> Result<Binding, CliError> {
        let sim = self.simulate()?;
        Ok(Binding::from_pairs(sim.initial.iter().map(|(k, v)| (k.as_str(), *v))))
    }

    pub fn reduce(&self) -> ReduceTable {
        self.file.reduce.clone().unwrap_or_default()
    }
}

pub fn parse_expr(what: &str, text: &str) -> Result<Expr, CliError> {
    Expr::parse(text).map_err(|e| CliError::Definition(format!("{what}: parse error at byte {}: {e}", e.offset())))
}

pub fn check_bracket(lo: f64, hi: f64) -> Result<(f64, f64), CliError> {
    if lo < hi && lo.is_finite() && hi.is_finite() {
        Ok((lo, hi))
    } else {
        Err(CliError::Definition(format!("bracket [{lo}, {hi}] is not an interval")))
    }
}
