//! Command dispatch. Every command returns a JSON result plus diagnostics;
//! `bowen-field` also returns CSV rows.

use julia_thermo::bowen::{self, FieldOptions, NodeStatus, ParameterGrid};
use julia_thermo::family::{self, ParameterFamily};
use julia_thermo::metric::{self, DistanceOptions, MetricContext, MetricOptions};
use julia_thermo::thermo::ThermoSystem;
use julia_thermo::{Complex64, Error};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Pressure,
    Bowen,
    BowenField,
    Hessian,
    PressureForm,
    ConformalCheck,
    DegeneracyScan,
    PathLength,
    Distance,
    Classify,
    PerSolve,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Pressure => "pressure",
            Command::Bowen => "bowen",
            Command::BowenField => "bowen-field",
            Command::Hessian => "hessian",
            Command::PressureForm => "pressure-form",
            Command::ConformalCheck => "conformal-check",
            Command::DegeneracyScan => "degeneracy-scan",
            Command::PathLength => "path-length",
            Command::Distance => "distance",
            Command::Classify => "classify",
            Command::PerSolve => "per-solve",
        }
    }
}

pub struct Outcome {
    pub result: Value,
    pub diagnostics: Value,
    /// Header and rows for a CSV field file.
    pub table: Option<(Vec<String>, Vec<Vec<String>>)>,
}

pub enum Failure {
    Config(ConfigError),
    Compute(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(ConfigError(msg.into()))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn metric_options(cfg: &RunConfig) -> MetricOptions {
    MetricOptions {
        fd_step: cfg.tolerances.fd_step,
        grad_tol: cfg.tolerances.gradient,
        psd_tol: cfg.tolerances.psd,
        bowen_tol: cfg.tolerances.solver.min(1e-12),
        fate_budget: cfg.fate_budget,
        ..MetricOptions::default()
    }
}

fn base_parameter(cfg: &RunConfig, family: &dyn ParameterFamily) -> Result<Vec<f64>, Failure> {
    let p = cfg.parameter();
    if p.len() != family.real_dimension() {
        return Err(config_error(format!(
            "this command needs family.parameter with {} coordinates",
            family.real_dimension()
        )));
    }
    Ok(p.to_vec())
}

fn directions(cfg: &RunConfig) -> Result<&[Vec<f64>], Failure> {
    if cfg.directions.is_empty() {
        return Err(config_error("this command needs at least one entry in `directions`"));
    }
    Ok(&cfg.directions)
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome, Failure> {
    let family = cfg.build_family().map_err(Failure::Config)?;
    let family = family.as_ref();
    let mut table = None;
    let (result, diagnostics) = match command {
        Command::Pressure => {
            let f = family.evaluate(&base_parameter(cfg, family)?)?;
            let system = ThermoSystem::new(&f, &cfg.levels)?;
            let (theta, constant) = (cfg.potential.theta, cfg.potential.constant);
            let estimate = system.pressure(|z| constant - theta * f.derivative_at(z).norm().ln())?;
            let points: Vec<usize> = system.levels().iter().map(|a| a.num_points()).collect();
            (to_value(&estimate), json!({ "points_per_level": points }))
        }
        Command::Bowen => {
            let f = family.evaluate(&base_parameter(cfg, family)?)?;
            let system = ThermoSystem::new(&f, &cfg.levels)?;
            let r = bowen::bowen_number_on(&system, cfg.eta, cfg.tolerances.solver)?;
            (to_value(&r), json!({ "levels": cfg.levels }))
        }
        Command::BowenField => {
            let g = cfg.grid.as_ref().ok_or_else(|| config_error("bowen-field needs a [grid] block"))?;
            let grid = ParameterGrid {
                lower: g.lower.clone(),
                upper: g.upper.clone(),
                resolution: g.resolution.clone(),
            };
            grid.validate().map_err(|e| config_error(e.to_string()))?;
            let options = FieldOptions {
                levels: cfg.levels.clone(),
                tol: cfg.tolerances.solver,
                fate_budget: cfg.fate_budget,
            };
            let field = bowen::bowen_field(family, cfg.eta, &grid, &options)?;
            let mut counts = serde_json::Map::new();
            for node in &field.nodes {
                let key = to_value(&node.status).as_str().unwrap_or("unknown").to_string();
                let entry = counts.entry(key).or_insert(json!(0));
                *entry = json!(entry.as_u64().unwrap_or(0) + 1);
            }
            table = Some(field_table(&field));
            (to_value(&field), json!({ "status_counts": counts }))
        }
        Command::Hessian => {
            let ctx = context(cfg, family)?;
            let h = ctx.hessian()?;
            let psd = h.is_psd(cfg.tolerances.psd);
            (to_value(&h), json!({ "psd": psd, "level": cfg.metric_level(), "delta": ctx.delta0() }))
        }
        Command::PressureForm => {
            let ctx = context(cfg, family)?;
            let forms = directions(cfg)?
                .iter()
                .map(|v| ctx.pressure_form(v))
                .collect::<Result<Vec<_>, _>>()?;
            (to_value(&forms), json!({ "level": cfg.metric_level(), "normalization": ctx.normalization() }))
        }
        Command::ConformalCheck => {
            let ctx = context(cfg, family)?;
            let checks = directions(cfg)?
                .iter()
                .map(|v| ctx.conformal_residual(v))
                .collect::<Result<Vec<_>, _>>()?;
            let worst = checks.iter().map(|c| c.residual).fold(0.0, f64::max);
            (to_value(&checks), json!({ "level": cfg.metric_level(), "max_residual": worst }))
        }
        Command::DegeneracyScan => {
            let ctx = context(cfg, family)?;
            let reports = directions(cfg)?
                .iter()
                .map(|v| ctx.degeneracy_scan(v))
                .collect::<Result<Vec<_>, _>>()?;
            let smallest = reports.iter().map(|r| r.dispersion).fold(f64::INFINITY, f64::min);
            (to_value(&reports), json!({ "level": cfg.metric_level(), "min_dispersion": smallest }))
        }
        Command::PathLength => {
            let p = cfg.path.as_ref().ok_or_else(|| config_error("path-length needs a [path] block"))?;
            let opts = metric_options(cfg);
            let n = cfg.metric_level();
            let length = metric::path_length(family, &p.nodes, cfg.eta, n, p.order, &opts)?;
            let refined = metric::path_length(family, &p.nodes, cfg.eta, n, 2 * p.order, &opts)?;
            (
                json!({ "length": length }),
                json!({ "level": n, "quadrature_error": (refined - length).abs() }),
            )
        }
        Command::Distance => {
            let d = cfg.distance.as_ref().ok_or_else(|| config_error("distance needs a [distance] block"))?;
            let opts = DistanceOptions {
                budget: d.budget,
                order: d.order,
                interior_nodes: d.interior_nodes,
                metric: metric_options(cfg),
            };
            let est = metric::distance_estimate(family, &d.x, &d.y, cfg.eta, cfg.metric_level(), &opts)?;
            (to_value(&est), json!({ "level": cfg.metric_level() }))
        }
        Command::Classify => {
            let lambda = base_parameter(cfg, family)?;
            let c = family::classify_lambda_hyperbolic(family, &lambda, cfg.fate_budget)?;
            (to_value(&c), json!({ "budget": cfg.fate_budget }))
        }
        Command::PerSolve => {
            let p = cfg.per.as_ref().ok_or_else(|| config_error("per-solve needs a [per] block"))?;
            let c = |v: [f64; 2]| Complex64::new(v[0], v[1]);
            let sol = family::solve_per_relation(
                family,
                p.period,
                c(p.multiplier),
                (c(p.seed_point), c(p.seed_parameter)),
            )?;
            let f = family.evaluate(&sol.parameter)?;
            let (holds, residual) = family::verify_relation(&f, p.period, c(p.multiplier), cfg.tolerances.newton)?;
            (to_value(&sol), json!({ "relation_verified": holds, "verification_residual": residual }))
        }
    };
    Ok(Outcome {
        result,
        diagnostics,
        table,
    })
}

fn context<'a>(cfg: &RunConfig, family: &'a dyn ParameterFamily) -> Result<MetricContext<'a>, Failure> {
    let lambda = base_parameter(cfg, family)?;
    Ok(MetricContext::new(
        family,
        &lambda,
        cfg.eta,
        cfg.metric_level(),
        metric_options(cfg),
    )?)
}

fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        // Shortest representation that round-trips.
        format!("{x:?}")
    } else {
        String::new()
    }
}

fn field_table(field: &bowen::BowenField) -> (Vec<String>, Vec<Vec<String>>) {
    let dim = field.grid.lower.len();
    let mut header: Vec<String> = (0..dim).map(|k| format!("index_{k}")).collect();
    for k in 0..dim / 2 {
        let suffix = if dim > 2 { format!("_{k}") } else { String::new() };
        header.push(format!("param_re{suffix}"));
        header.push(format!("param_im{suffix}"));
    }
    header.push("value".into());
    header.push("status".into());
    let rows = field
        .nodes
        .iter()
        .map(|node| {
            let mut row: Vec<String> = node.index.iter().map(|i| i.to_string()).collect();
            row.extend(node.parameter.iter().map(|&x| fmt_float(x)));
            row.push(node.result.map_or(String::new(), |r| fmt_float(r.delta)));
            let status = match node.status {
                NodeStatus::Ok => "ok",
                NodeStatus::NotHyperbolic => "not_hyperbolic",
                NodeStatus::BracketFailure => "bracket_failure",
                NodeStatus::EnumerationFailure => "enumeration_failure",
                NodeStatus::SolverFailure => "solver_failure",
            };
            row.push(status.into());
            row
        })
        .collect();
    (header, rows)
}
