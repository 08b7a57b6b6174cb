use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde_json::{json, Value};

use pseudospec::degeneracy::{export_events, export_manifolds, CrossingEvent};
use pseudospec::model::{build_hamiltonian, normalize, pseudo_metric_catalog, MetricLabel, ModelFamily};
use pseudospec::oracle::compare_with_dense;
use pseudospec::spectral::analyze_point;
use pseudospec::sweep::{export_sweep, run_sweep, GammaSweep};
use pseudospec::{check_zero_condition, detect_events, trace_dp_manifold, Classification, Complex64, ErrorName};

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Output(String),
    Numerical { name: &'static str, message: String },
    OracleFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::OracleFailed(_) => 1,
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Numerical { .. } => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Output(m) => write!(f, "output: {m}"),
            CliError::Numerical { name, message } if message.starts_with(name) => f.write_str(message),
            CliError::Numerical { name, message } => write!(f, "{name}: {message}"),
            CliError::OracleFailed(n) => write!(f, "oracle check failed for {n} sample(s)"),
        }
    }
}

fn numerical<E: ErrorName + fmt::Display>(e: E) -> CliError {
    CliError::Numerical { name: e.name(), message: e.to_string() }
}

fn output_error(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

/// Creates the output directory and records the resolved configuration in it.
pub fn prepare_output(cfg: &RunConfig, command: &str) -> Result<(), CliError> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| output_error(dir, e))?;
    let text = toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let path = dir.join("resolved_config.toml");
    fs::write(&path, format!("# pseudospec {command}\n{text}")).map_err(|e| output_error(&path, e))
}

fn create(cfg: &RunConfig, name: &str) -> Result<(BufWriter<File>, std::path::PathBuf), CliError> {
    let path = cfg.output.dir.join(name);
    let file = File::create(&path).map_err(|e| output_error(&path, e))?;
    Ok((BufWriter::new(file), path))
}

fn write_json(cfg: &RunConfig, name: &str, value: &Value) -> Result<(), CliError> {
    let (mut w, path) = create(cfg, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| output_error(&path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| output_error(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn family(cfg: &RunConfig) -> Result<ModelFamily, CliError> {
    ModelFamily::with_split(cfg.model.arrangement, cfg.model.n_sites, cfg.model.mixed_split)
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn spectrum(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.point_model().map_err(|e| CliError::Config(e.0))?;
    let norm = normalize(&model).map_err(|e| CliError::Config(e.to_string()))?;
    let h = build_hamiltonian(&model).map_err(numerical)?;
    let catalog = pseudo_metric_catalog(&model).map_err(numerical)?;
    // thresholds are in normalized units
    let h_tilde = h.scale(Complex64::new(1.0 / norm.scale, 0.0));
    let ps = analyze_point(&h_tilde, &catalog, &cfg.tolerances).map_err(numerical)?;

    let labels: Vec<MetricLabel> = catalog.iter().map(|m| m.label).collect();
    let cluster_of = |l: usize| ps.clusters.iter().position(|c| c.contains(&l));
    let levels: Vec<Value> = (0..ps.eigensystem.len())
        .map(|l| {
            let eps = ps.eigensystem.eigenvalue(l);
            let indices: serde_json::Map<String, Value> = labels
                .iter()
                .zip(&ps.indices[l])
                .map(|(label, ix)| {
                    let v = ix.map_or(Value::Null, |ix| json!({ "value": ix.value, "quality": ix.quality }));
                    (label.as_str().to_string(), v)
                })
                .collect();
            json!({
                "level": l,
                "energy": { "re": eps.re * norm.scale, "im": eps.im * norm.scale },
                "eps_tilde": { "re": eps.re, "im": eps.im },
                "cluster": cluster_of(l),
                "indices": indices,
            })
        })
        .collect();
    let out = json!({
        "arrangement": model.kind().to_string(),
        "n_sites": model.n_sites(),
        "delta": model.delta,
        "coupling": model.coupling,
        "gamma_z": model.gain_loss.gamma_z(),
        "gamma_x": model.gain_loss.gamma_x(),
        "scale": norm.scale,
        "j_tilde": norm.j_tilde,
        "gamma_tilde": norm.gamma_tilde,
        "metrics": labels.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
        "levels": levels,
    });
    write_json(cfg, "spectrum.json", &out)
}

fn sweeps(cfg: &RunConfig) -> Result<Vec<GammaSweep>, CliError> {
    let plan = cfg.sweep_plan();
    plan.validate().map_err(|e| CliError::Config(e.to_string()))?;
    run_sweep(&plan, &cfg.tolerances).map_err(numerical)
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let sweeps = sweeps(cfg)?;
    let (mut w, path) = create(cfg, "sweep.csv")?;
    export_sweep(&sweeps, &cfg.tolerances, &mut w).map_err(numerical)?;
    w.flush().map_err(|e| output_error(&path, e))?;
    let ambiguous: usize = sweeps.iter().map(|s| s.ambiguous_steps.len()).sum();
    if ambiguous > 0 {
        eprintln!("note: {ambiguous} grid step(s) had ambiguous band stitching");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn all_events(cfg: &RunConfig, sweeps: &[GammaSweep]) -> Result<Vec<CrossingEvent>, CliError> {
    let fam = family(cfg)?;
    Ok(sweeps.iter().flat_map(|s| detect_events(&fam, s, &cfg.tolerances)).collect())
}

pub fn crossings(cfg: &RunConfig) -> Result<(), CliError> {
    let sweeps = sweeps(cfg)?;
    let events = all_events(cfg, &sweeps)?;
    let labels = family(cfg)?.catalog().iter().map(|m| m.label).collect::<Vec<_>>();
    let (mut w, path) = create(cfg, "events.csv")?;
    export_events(&events, &labels, &mut w).map_err(numerical)?;
    w.flush().map_err(|e| output_error(&path, e))?;
    for e in events.iter().filter(|e| e.classification.is_none()) {
        eprintln!("unresolved at {}: {}", e.location, e.note.as_deref().unwrap_or("no diagnostics"));
    }
    let count = |c: Classification| events.iter().filter(|e| e.classification == Some(c)).count();
    println!(
        "{} events: {} EP2, {} Diabolical, {} Avoided",
        events.len(),
        count(Classification::EP2),
        count(Classification::Diabolical),
        count(Classification::Avoided)
    );
    println!("wrote {}", path.display());
    Ok(())
}

pub fn trace_manifold(cfg: &RunConfig) -> Result<(), CliError> {
    let mut seed_cfg = cfg.clone();
    seed_cfg.sweep.gamma_tilde = vec![cfg.trace.seed_gamma_tilde];
    let sweeps = sweeps(&seed_cfg)?;
    let fam = family(cfg)?;
    let near_requested = |e: &CrossingEvent| {
        cfg.trace.seed_j_tilde.is_empty() || cfg.trace.seed_j_tilde.iter().any(|j| (e.location.j_tilde - j).abs() <= 1e-2)
    };
    let seeds: Vec<CrossingEvent> = all_events(cfg, &sweeps)?
        .into_iter()
        .filter(|e| e.classification == Some(Classification::Diabolical) && check_zero_condition(&e.index_products))
        .filter(near_requested)
        .collect();
    if seeds.is_empty() {
        eprintln!("note: no diabolical crossing satisfying the zero-condition at gamma~ = {}", cfg.trace.seed_gamma_tilde);
    }
    let traces = seeds
        .par_iter()
        .map(|s| trace_dp_manifold(&fam, s, cfg.trace.step, cfg.trace.max_points, &cfg.tolerances))
        .collect::<Result<Vec<_>, _>>()
        .map_err(numerical)?;
    for (i, t) in traces.iter().enumerate() {
        println!(
            "trace {i}: {} points, {} .. {}",
            t.points.len(),
            t.start.termination,
            t.end.termination
        );
        for d in &t.diagnostics {
            eprintln!("trace {i}: {d}");
        }
    }
    let (mut w, path) = create(cfg, "manifold.csv")?;
    export_manifolds(&traces, &mut w).map_err(numerical)?;
    w.flush().map_err(|e| output_error(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn oracle_check(cfg: &RunConfig) -> Result<(), CliError> {
    let o = &cfg.oracle;
    let mut rng = StdRng::seed_from_u64(o.seed);
    let samples: Vec<(f64, f64)> =
        (0..o.samples).map(|_| (rng.random_range(0.1..2.0), rng.random_range(-2.0..2.0))).collect();
    let mut failed = 0;
    let mut rows = Vec::new();
    for (delta, coupling) in samples {
        let r = compare_with_dense(delta, coupling, o.n_sites, &cfg.tolerances).map_err(numerical)?;
        let passed = r.passed(o.spectrum_tolerance * delta.hypot(coupling));
        failed += usize::from(!passed);
        rows.push(json!({
            "delta": delta,
            "coupling": coupling,
            "spectrum_error": r.spectrum_error,
            "nondegenerate_checked": r.nondegenerate_checked,
            "nondegenerate_mismatches": r.nondegenerate_mismatches,
            "cluster_mismatches": r.cluster_mismatches,
            "passed": passed,
        }));
    }
    let report = json!({ "n_sites": o.n_sites, "seed": o.seed, "failed": failed, "samples": rows });
    write_json(cfg, "oracle_report.json", &report)?;
    println!("{} of {} samples passed", o.samples - failed, o.samples);
    if failed > 0 {
        return Err(CliError::OracleFailed(failed));
    }
    Ok(())
}
