use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use routh_core::dynamics::{format_g17, integrate_rk4, monitor, Trajectory};
use routh_core::expr::{Binding, Expr};
use routh_core::geometry::{hamiltonian_field, velocity_name, Chart};
use routh_core::mechanics::{check_symmetry, energy, euler_lagrange, SymmetryReport};
use routh_core::routh::{
    cyclic_momentum, jacobi_reduce, momentum_constraint, reconstruct_cyclic, reduced_dynamics, round_trip, routhian,
    BranchChoice, CyclicSolution, GaugeRecord, MomentumLevel, Orientation, ReducedKind, ReducedSystem, RoundTripConfig,
    RouthError, RouthOptions, ALPHA,
};
use serde_json::json;

use crate::file::{check_bracket, parse_expr, Definition};
use crate::{CliError, Command, ReduceArgs, Sign, Which, EXIT_COMPARISON, EXIT_DOMAIN, EXIT_OK, EXIT_SYMMETRY};

/// Momentum levels closer than this to the initial data count as consistent.
const ALPHA_CONSISTENCY: f64 = 1e-10;

pub(crate) fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Validate { file } => {
            Definition::load(&file)?;
            writeln!(out, "ok")?;
            Ok(EXIT_OK)
        }
        Command::Symmetry { file, cyclic } => symmetry(&Definition::load(&file)?, cyclic.as_deref(), out),
        Command::Reduce { file, reduce, json } => reduce_cmd(&Definition::load(&file)?, &reduce, json, out),
        Command::Simulate {
            file,
            which,
            out: path,
            reduce,
        } => simulate(&Definition::load(&file)?, which, path.as_deref(), &reduce, out, err),
        Command::Compare {
            file,
            reduce,
            tol,
            out: path,
            quadrature,
        } => compare(
            &Definition::load(&file)?,
            &reduce,
            tol,
            path.as_deref(),
            quadrature.into(),
            out,
            err,
        ),
        Command::Jacobi {
            file,
            energy,
            sign,
            sample,
            bracket,
        } => jacobi(
            &Definition::load(&file)?,
            energy,
            sign,
            sample.as_deref(),
            bracket,
            out,
            err,
        ),
    }
}

fn symmetry(def: &Definition, cyclic: Option<&str>, out: &mut dyn Write) -> Result<i32, CliError> {
    let name = match cyclic {
        Some(c) => c,
        None => def.cyclic()?,
    };
    let chart = def
        .system
        .chart()
        .with_cyclic(Some(name))
        .map_err(|e| CliError::Definition(e.to_string()))?;
    let field = chart.symmetry_field().expect("chart has a cyclic coordinate");
    match check_symmetry(&def.system, &field)? {
        SymmetryReport::Symmetric { .. } => {
            writeln!(out, "symmetric")?;
            Ok(EXIT_OK)
        }
        SymmetryReport::Violation { derivative, .. } => {
            writeln!(out, "violation: dL/d{name} = {derivative}")?;
            Ok(EXIT_SYMMETRY)
        }
    }
}

/// Level, gauge and options from flags, falling back on `[reduce]` and then
/// on the initial state.
struct Reduction {
    level: MomentumLevel,
    gauge: GaugeRecord,
    options: RouthOptions,
    /// Set when the level was taken from the initial state.
    inferred: bool,
}

fn reduction(def: &Definition, args: &ReduceArgs) -> Result<Reduction, CliError> {
    let cyclic = def.cyclic()?.to_string();
    let table = def.reduce();
    let initial = def.file.simulate.as_ref().map(|_| def.initial()).transpose()?;
    let (alpha, inferred) = match (args.alpha, table.alpha, &initial) {
        (Some(a), _, _) | (None, Some(a), _) => (a, false),
        (None, None, Some(init)) => (cyclic_momentum(&def.system, &cyclic, init)?, true),
        (None, None, None) => {
            return Err(CliError::Definition(
                "no momentum level: pass --alpha, set [reduce] alpha or give [simulate] initial".into(),
            ))
        }
    };
    let gauge = match args.gauge.as_ref().or(table.gauge.as_ref()) {
        Some(text) => parse_expr("gauge", text)?,
        None => Expr::zero(),
    };
    let bracket = match args.bracket.as_deref() {
        Some([lo, hi]) => Some(check_bracket(*lo, *hi)?),
        Some(_) => unreachable!("clap takes two bracket values"),
        None => table.bracket.map(|[lo, hi]| (lo, hi)),
    };
    let branch = match (args.branch.or(table.branch), &initial) {
        (Some(i), _) => Some(BranchChoice::Index(i)),
        (None, Some(init)) => init.get(&velocity_name(&cyclic)).map(|v| BranchChoice::Nearest {
            state: init.clone(),
            cyclic_velocity: v,
        }),
        (None, None) => None,
    };
    Ok(Reduction {
        level: MomentumLevel::new(alpha, cyclic),
        gauge: GaugeRecord {
            reference: gauge,
            alpha,
        },
        options: RouthOptions {
            branch,
            bracket,
            enforce_symmetry: true,
        },
        inferred,
    })
}

fn reduce_system(def: &Definition, r: &Reduction) -> Result<ReducedSystem, CliError> {
    Ok(routhian(&def.system, &r.level, &r.gauge, &r.options)?)
}

fn bound(e: &Expr, red: &ReducedSystem) -> Expr {
    e.bind(&Binding::new().with(ALPHA, red.level.alpha)).simplify()
}

fn reduce_cmd(def: &Definition, args: &ReduceArgs, as_json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let r = reduction(def, args)?;
    let constraint = momentum_constraint(&def.system, &r.level, true)?;
    let red = reduce_system(def, &r)?;
    let cyclic = red.cyclic().to_string();
    let dy = red.cyclic_velocity_name();
    let mut doc = json!({
        "cyclic": cyclic,
        "alpha": red.level.alpha,
        "alpha_inferred": r.inferred,
        "constraint": constraint.to_string(),
        "gauge": red.gauge.reference.to_string(),
        "coordinates": red.chart.coords(),
    });
    let mut lines = vec![
        format!("cyclic coordinate: {cyclic}"),
        format!(
            "momentum level: {ALPHA} = {}{}",
            red.level.alpha,
            if r.inferred { " (from the initial state)" } else { "" }
        ),
        format!("constraint: {constraint} = 0"),
    ];
    if !red.gauge.reference.is_zero() {
        lines.push(format!("gauge: {}", red.gauge.reference));
    }
    let mut code = EXIT_OK;
    match &red.kind {
        ReducedKind::Regular {
            routhian,
            cyclic_velocity,
        } => {
            doc["kind"] = json!("regular");
            match cyclic_velocity {
                CyclicSolution::Explicit(v) => {
                    lines.push(format!("cyclic velocity: {dy} = {v}"));
                    doc["cyclic_velocity"] = json!(v.to_string());
                }
                CyclicSolution::Numeric { residual, bracket } => {
                    lines.push(format!(
                        "cyclic velocity: root of {residual} = 0 for {dy} in [{}, {}]",
                        bracket.0, bracket.1
                    ));
                    doc["cyclic_velocity"] = json!(null);
                    doc["bracket"] = json!([bracket.0, bracket.1]);
                }
            }
            match routhian {
                Some(rt) => describe_routhian(&red, rt, &mut lines, &mut doc),
                None => {
                    lines.push("routhian: no closed form; evaluated pointwise by root finding".into());
                    doc["routhian"] = json!(null);
                }
            }
        }
        ReducedKind::Degenerate {
            family,
            parameter,
            hamiltonian,
            routhian,
            ..
        } => {
            doc["kind"] = json!("degenerate");
            doc["family"] = json!(family.to_string());
            doc["parameter"] = json!(parameter);
            lines.push(format!("degenerate: {parameter} is not fixed by the constraint"));
            lines.push(format!("family: {family}  (parameter {parameter})"));
            if let Some(rt) = routhian {
                lines.push("the constraint holds identically at this level".into());
                describe_routhian(&red, rt, &mut lines, &mut doc);
            } else if let Some(h) = hamiltonian {
                let x = &red.chart.coords()[0];
                let field = hamiltonian_field(&red.chart, &h.hamiltonian);
                let names = red.chart.cotangent_vars();
                let comps: Vec<Expr> = field.components().iter().map(Expr::simplify).collect();
                lines.push(format!(
                    "reduced velocity: {} = {}",
                    velocity_name(x),
                    h.reduced_velocity
                ));
                lines.push(format!("reduced hamiltonian: {}", h.hamiltonian));
                lines.push("reduced field:".into());
                for (n, c) in names.iter().zip(&comps) {
                    lines.push(format!("  {n}' = {c}"));
                }
                lines.push(format!("cyclic velocity: {parameter} = {}", h.multiplier));
                doc["hamiltonian"] = json!(h.hamiltonian.to_string());
                doc["reduced_velocity"] = json!(h.reduced_velocity.to_string());
                doc["multiplier"] = json!(h.multiplier.to_string());
                doc["field"] = names
                    .iter()
                    .zip(&comps)
                    .map(|(n, c)| (n.clone(), json!(c.to_string())))
                    .collect::<serde_json::Map<_, _>>()
                    .into();
            } else {
                code = crate::EXIT_UNSUPPORTED;
                lines.push("no reduced Hamiltonian could be derived for this constraint".into());
                doc["hamiltonian"] = json!(null);
            }
        }
    }
    if as_json {
        writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("json value"))?;
    } else {
        for l in lines {
            writeln!(out, "{l}")?;
        }
    }
    Ok(code)
}

fn describe_routhian(red: &ReducedSystem, rt: &Expr, lines: &mut Vec<String>, doc: &mut serde_json::Value) {
    let at_level = bound(rt, red);
    lines.push(format!("routhian: {rt}"));
    lines.push(format!("routhian at {ALPHA} = {}: {at_level}", red.level.alpha));
    doc["routhian"] = json!(rt.to_string());
    doc["routhian_at_level"] = json!(at_level.to_string());
    if let Some(eqs) = red.reduced_equations() {
        lines.push("reduced equations:".into());
        for e in &eqs {
            lines.push(format!("  {e} = 0"));
        }
        doc["equations"] = json!(eqs.iter().map(ToString::to_string).collect::<Vec<_>>());
    }
}

fn write_csv_to(traj: &Trajectory, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            traj.write_csv(&mut w)?;
            w.flush()?;
        }
        None => traj.write_csv(&mut *out)?,
    }
    Ok(())
}

fn simulate(
    def: &Definition,
    which: Which,
    path: Option<&Path>,
    args: &ReduceArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let sim = def.simulate()?;
    let initial = def.initial()?;
    let sys = &def.system;
    let (traj, monitors) = match which {
        Which::Full => {
            let mut field = euler_lagrange(sys).field()?;
            let traj = integrate_rk4(&mut field, &initial, sim.t0, sim.t1, sim.dt)?;
            let mut quantities = vec![("energy".to_string(), energy(sys))];
            if let Some(y) = sys.chart().cyclic() {
                quantities.push((format!("momentum p_{y}"), sys.lagrangian().diff(&velocity_name(y))));
            }
            let monitors = monitor(&traj, &quantities, sys.params());
            (traj, monitors)
        }
        Which::Reduced => {
            let r = reduction(def, args)?;
            let red = reduce_system(def, &r)?;
            let start = red.project_state(&initial)?;
            let mut field = reduced_dynamics(&red)?;
            let traj = integrate_rk4(&mut field, &start, sim.t0, sim.t1, sim.dt)?;
            let quantities = match &red.kind {
                ReducedKind::Degenerate {
                    hamiltonian: Some(h), ..
                } => vec![("reduced hamiltonian".to_string(), h.hamiltonian.clone())],
                _ => match red.lagrangian_system() {
                    Some(rs) => vec![("routhian energy".to_string(), energy(&rs))],
                    None => Vec::new(),
                },
            };
            let monitors = monitor(&traj, &quantities, &red.params);
            let y0 = initial.get(red.cyclic()).unwrap_or(0.0);
            let traj = match reconstruct_cyclic(&red, &traj, y0, Default::default()) {
                Ok(rec) if traj.failure.is_none() => {
                    let mut t = rec.trajectory;
                    t.failure = traj.failure.clone();
                    t
                }
                _ => traj,
            };
            (traj, monitors)
        }
    };
    write_csv_to(&traj, path, out)?;
    let summary: &mut dyn Write = if path.is_some() { out } else { err };
    writeln!(summary, "samples: {}", traj.len())?;
    for m in &monitors {
        writeln!(summary, "drift {}: {:.3e}", m.name, m.drift)?;
    }
    if let Some(f) = &traj.failure {
        writeln!(err, "error: integration stopped at t = {}: {}", f.t, f.error)?;
        return Ok(EXIT_DOMAIN);
    }
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn compare(
    def: &Definition,
    args: &ReduceArgs,
    tol: f64,
    path: Option<&Path>,
    quadrature: routh_core::routh::Quadrature,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let sim = def.simulate()?;
    let initial = def.initial()?;
    let r = reduction(def, args)?;
    let mut cfg = RoundTripConfig::new(r.level.cyclic.clone(), sim.t1, sim.dt);
    cfg.t0 = sim.t0;
    cfg.alpha = (!r.inferred).then_some(r.level.alpha);
    cfg.gauge = r.gauge.reference.clone();
    cfg.options = r.options.clone();
    cfg.quadrature = quadrature;
    let rt = round_trip(&def.system, &initial, &cfg)?;
    if (rt.alpha - rt.inferred_alpha).abs() > ALPHA_CONSISTENCY {
        writeln!(
            err,
            "warning: {ALPHA} = {} differs from the initial momentum {}; using {}",
            rt.alpha, rt.inferred_alpha, rt.alpha
        )?;
    }
    writeln!(out, "{ALPHA}: {}", rt.alpha)?;
    for (name, d) in &rt.deviations {
        writeln!(out, "deviation {name}: {d:.3e}")?;
    }
    for f in &rt.reconstruction.flagged {
        writeln!(
            err,
            "warning: momentum constraint residual {:.3e} at t = {}",
            f.residual, f.t
        )?;
    }
    let worst = rt.max_deviation();
    writeln!(out, "max deviation: {worst:.3e} (tolerance {tol:.1e})")?;
    if let Some(p) = path {
        write_side_by_side(p, &rt.full, &rt.reconstruction.trajectory, &rt.deviations)?;
    }
    if worst <= tol {
        writeln!(out, "pass")?;
        Ok(EXIT_OK)
    } else {
        writeln!(out, "fail")?;
        Ok(EXIT_COMPARISON)
    }
}

/// Both trajectories share the grid, so rows pair up by index.
fn write_side_by_side(
    path: &Path,
    full: &Trajectory,
    reduced: &Trajectory,
    deviations: &[(String, f64)],
) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "t")?;
    let mut columns = Vec::new();
    for (name, _) in deviations {
        write!(w, ",{name}_full,{name}_reduced")?;
        columns.push((full.index_of(name)?, reduced.index_of(name)?));
    }
    writeln!(w)?;
    let rows = full.len().min(reduced.len());
    for k in 0..rows {
        write!(w, "{}", format_g17(full.times()[k]))?;
        for &(i, j) in &columns {
            write!(
                w,
                ",{},{}",
                format_g17(full.samples()[k][i]),
                format_g17(reduced.samples()[k][j])
            )?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_samples(path: &Path, chart: &Chart) -> Result<Vec<Binding>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Definition(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Definition(e.to_string()))?
        .clone();
    for v in chart.tangent_vars() {
        if !headers.iter().any(|h| h == v) {
            return Err(CliError::Definition(format!(
                "{}: missing column `{v}`",
                path.display()
            )));
        }
    }
    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Definition(e.to_string()))?;
        let mut b = Binding::new();
        for (h, field) in headers.iter().zip(record.iter()) {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Definition(format!(
                    "{}: row {}: `{field}` is not a number",
                    path.display(),
                    row + 1
                ))
            })?;
            b.insert(h, v);
        }
        samples.push(b);
    }
    Ok(samples)
}

fn jacobi(
    def: &Definition,
    energy_level: f64,
    sign: Sign,
    sample: Option<&Path>,
    bracket: Option<Vec<f64>>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let orientation = match sign {
        Sign::Plus => Orientation::Positive,
        Sign::Minus => Orientation::Negative,
    };
    let bracket = match bracket.as_deref() {
        Some([lo, hi]) => Some(check_bracket(*lo, *hi)?),
        Some(_) => unreachable!("clap takes two bracket values"),
        None => None,
    };
    let samples = match sample {
        Some(p) => read_samples(p, def.system.chart())?,
        None => vec![def
            .initial()
            .map_err(|_| CliError::Definition("no sample points: pass --sample or give [simulate] initial".into()))?],
    };
    let j = jacobi_reduce(&def.system, energy_level, orientation, bracket)?;
    writeln!(out, "sample,L_J,ds,closed_L_J,closed_ds,rel_dev_L_J,rel_dev_ds")?;
    let mut flagged = 0;
    for (k, point) in samples.iter().enumerate() {
        match j.sample(point) {
            Ok(s) => {
                let (cl, cs) = s.closed_form.unwrap_or((f64::NAN, f64::NAN));
                let (dl, ds) = s.relative_deviation().unwrap_or((f64::NAN, f64::NAN));
                writeln!(
                    out,
                    "{k},{},{},{},{},{},{}",
                    format_g17(s.lagrangian),
                    format_g17(s.time_velocity),
                    format_g17(cl),
                    format_g17(cs),
                    format_g17(dl),
                    format_g17(ds)
                )?;
            }
            Err(e @ RouthError::EnergyBelowPotential { .. }) => {
                flagged += 1;
                writeln!(out, "{k},nan,nan,nan,nan,nan,nan")?;
                writeln!(err, "sample {k}: {e}")?;
            }
            Err(e) => return Err(e.into()),
        }
    }
    if flagged > 0 {
        writeln!(err, "error: {flagged} sample(s) have energy at or below the potential")?;
        return Ok(EXIT_DOMAIN);
    }
    Ok(EXIT_OK)
}
