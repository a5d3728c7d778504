use std::time::Instant;

use anyhow::{Context, Result};
use log::info;
use pbrom::io::write_trace;
use pbrom::{nonlinear_residual, DiscreteSystem, FomSolution, Model};
use serde_json::{json, Value};

use super::{create, file_name, write_field, write_json, Inputs, Status, REPORT_SCHEMA_VERSION};

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Same physics, other source treatment.
fn counterpart(model: Model) -> Model {
    match model {
        Model::Nrpbe => Model::Npbe,
        Model::Npbe => Model::Nrpbe,
        Model::Lrpbe => Model::Lpbe,
        Model::Lpbe => Model::Lrpbe,
    }
}

fn run(sys: &DiscreteSystem, inputs: &Inputs, model: Model) -> Result<(FomSolution, f64, f64)> {
    let cfg = &inputs.config;
    let start = Instant::now();
    let sol = sys
        .solve(model, cfg.ionic, &cfg.fom_options())
        .with_context(|| format!("{} solve at ionic strength {} failed", model.name(), cfg.ionic))?;
    let seconds = start.elapsed().as_secs_f64();
    let problem = sys.problem(model, cfg.ionic)?;
    let residual = l2(&nonlinear_residual(&problem, &sol.interior)) / l2(&problem.rhs).max(f64::MIN_POSITIVE);
    Ok((sol, seconds, residual))
}

/// Relative ℓ2 difference of two node fields over nodes at least
/// `cutoff` Å from every atom centre.
fn far_field_difference(sys: &DiscreteSystem, a: &[f64], b: &[f64], cutoff: f64) -> (f64, usize) {
    let (mut num, mut den, mut count) = (0.0, 0.0, 0);
    for idx in 0..sys.grid.num_nodes() {
        let x = sys.grid.node_position(idx);
        let far = sys.molecule.atoms.iter().all(|atom| {
            let d2: f64 = (0..3).map(|d| (x[d] - atom.position[d]).powi(2)).sum();
            d2 >= cutoff * cutoff
        });
        if far {
            num += (a[idx] - b[idx]).powi(2);
            den += b[idx].powi(2);
            count += 1;
        }
    }
    let rel = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    (rel, count)
}

pub fn solve(inputs: &Inputs, compare: bool) -> Result<Status> {
    let cfg = &inputs.config;
    let dir = inputs.output_dir()?;
    let sys = inputs.build_system()?;
    info!("grid {}^3, h = {:.4} Å, {} unknowns", sys.grid.n, sys.grid.h, sys.dim());

    let model = cfg.model;
    let (sol, seconds, residual) = run(&sys, inputs, model)?;
    let hash = &inputs.config_hash;
    let mut files = Vec::new();
    let total = sys.total_potential(model, &sol.interior, cfg.ionic);
    if model.is_regularized() {
        let regular = sys.node_field(&sol.interior, cfg.ionic);
        files.push(write_field(&dir.join("potential_regular.dx"), &sys, &inputs.molecule, regular, "regular potential u^r", hash)?);
        let short = sys.short_range.field.clone();
        files.push(write_field(&dir.join("potential_short.dx"), &sys, &inputs.molecule, short, "short-range potential P_s", hash)?);
    }
    files.push(write_field(&dir.join("potential_total.dx"), &sys, &inputs.molecule, total.clone(), "total potential", hash)?);
    let trace_path = dir.join("trace.csv");
    write_trace(create(&trace_path)?, &sol.trace)?;
    files.push(trace_path);

    let comparison = if compare {
        let other = counterpart(model);
        let (osol, oseconds, oresidual) = run(&sys, inputs, other)?;
        let other_total = sys.total_potential(other, &osol.interior, cfg.ionic);
        let cutoff = 2.0 * sys.molecule.max_radius();
        let (rel, nodes) = far_field_difference(&sys, &total, &other_total, cutoff);
        json!({
            "model": other.name(),
            "steps": osol.trace.steps(),
            "seconds": oseconds,
            "relative_residual": oresidual,
            "far_field_cutoff": cutoff,
            "far_field_nodes": nodes,
            "far_field_relative_difference": rel,
        })
    } else {
        Value::Null
    };

    let report = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "solve",
        "config_hash": hash,
        "system_hash": sys.hash(),
        "model": model.name(),
        "ionic_strength": cfg.ionic,
        "grid": { "n": sys.grid.n, "h": sys.grid.h, "half_length": sys.grid.half_length },
        "unknowns": sys.dim(),
        "long_rank": sys.long_rank,
        "steps": sol.trace.steps(),
        "final_delta": sol.trace.deltas.last().copied(),
        "relative_residual": residual,
        "seconds": seconds,
        "comparison": comparison,
        "files": files.iter().map(|p| file_name(p)).collect::<Vec<_>>(),
    });
    write_json(&dir.join("solve_report.json"), &report)?;
    println!(
        "{} at I = {}: {} steps, relative residual {:e}, {:.3} s",
        model.name(),
        cfg.ionic,
        sol.trace.steps(),
        residual,
        seconds
    );
    Ok(Status::Ok)
}
