//! Subcommand drivers.

use std::path::PathBuf;

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use raman_core::readout::{
    local_minima, node_count, readout_by_propagation, stored_mode, sweep_readout,
};
use raman_core::statistics::equivalent_modes_of;
use raman_core::{
    beamsplitter_reduce, bloch_messiah, build_green, calibrate_g0, full_chain, make_grid,
    verify_structure, Error, Pass, PassConfig, PhotonStats, PumpConfig, ResidualReport,
    SimulationGrid, SqueezerModes,
};

use crate::config::{RunConfig, Subcommand, SweepParameter};
use crate::output::{num, Sink, SCHEMA_VERSION};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cmd: Subcommand, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut sink = Sink::create(&cfg.output.directory, cfg.output.csv, cfg.output.json)?;
    log::info!(
        "{}: writing to {}",
        cmd.name(),
        cfg.output.directory.display()
    );
    let record = match cmd {
        Subcommand::Stokes => stokes(cfg, &mut sink)?,
        Subcommand::Readout => readout(cfg, &mut sink)?,
        Subcommand::Chain => chain(cfg, &mut sink)?,
        Subcommand::Stats => stats(cfg, &mut sink)?,
        Subcommand::Sweep => sweep(cfg, &mut sink)?,
        Subcommand::Calibrate => calibrate(cfg, &mut sink)?,
    };
    sink.document("provenance.json", &provenance(cmd, cfg, record))?;
    Ok(sink.written().to_vec())
}

/// Pass settings and residuals gathered by a subcommand for its provenance.
#[derive(Default)]
struct Record {
    passes: Map<String, Value>,
    residuals: Map<String, Value>,
}

impl Record {
    fn pass(&mut self, name: &str, p: &PassConfig) {
        self.passes.insert(name.into(), pass_json(p));
    }

    fn residuals(&mut self, name: &str, r: &ResidualReport) {
        self.residuals.insert(name.into(), report_json(r));
    }
}

fn provenance(cmd: Subcommand, cfg: &RunConfig, rec: Record) -> Value {
    // the output location does not affect results and is left out so that
    // runs into different directories produce identical records
    let resolved: Vec<_> = cfg
        .resolved()
        .into_iter()
        .filter(|(k, _)| *k != "output.directory")
        .collect();
    let text: String = resolved
        .iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    let config: Map<String, Value> = resolved
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::String(v)))
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "subcommand": cmd.name(),
        "versions": {
            "raman-modes": env!("CARGO_PKG_VERSION"),
            "raman-core": raman_core::VERSION,
        },
        "config": config,
        "config_text": text,
        "passes": rec.passes,
        "residuals": rec.residuals,
    })
}

fn grid_json(g: &SimulationGrid) -> Value {
    json!({
        "length": g.length(),
        "half_window": g.half_window(),
        "nz": g.nz(),
        "nt": g.nt(),
        "dz": g.dz(),
        "dt": g.dt(),
    })
}

fn pass_json(p: &PassConfig) -> Value {
    let d = p.dimensionless();
    json!({
        "grid": grid_json(&p.grid),
        "pump": {
            "tau_p": p.pump.tau_p,
            "delta_beta": p.pump.delta_beta,
            "g0": p.pump.g0,
            "shape": p.pump.shape.to_string(),
        },
        "dimensionless": {"gamma": d.gamma, "delta": d.delta},
    })
}

fn report_json(r: &ResidualReport) -> Value {
    Value::Object(
        r.entries
            .iter()
            .map(|e| (e.name.clone(), json!(e.value)))
            .collect(),
    )
}

fn stokes_pass(cfg: &RunConfig, g0: f64, delta_beta: f64) -> Result<PassConfig> {
    let s = &cfg.stokes;
    let grid = make_grid(
        cfg.grid.length,
        s.tau_p,
        delta_beta,
        cfg.grid.nz,
        cfg.grid.nt,
        cfg.grid.margin,
    )?;
    let pump = PumpConfig::new(s.tau_p, delta_beta, g0, s.shape)?;
    Ok(PassConfig { grid, pump })
}

fn readout_pass(cfg: &RunConfig, g0: f64, delta_beta: f64) -> Result<PassConfig> {
    let r = &cfg.readout;
    let grid = make_grid(
        cfg.grid.length,
        r.tau_p_prime,
        delta_beta,
        cfg.grid.nz,
        cfg.grid.nt,
        cfg.grid.margin,
    )?;
    let pump = PumpConfig::new(r.tau_p_prime, delta_beta, g0, r.shape)?;
    Ok(PassConfig { grid, pump })
}

fn configured_stokes(cfg: &RunConfig) -> Result<PassConfig> {
    let g0 = cfg
        .stokes
        .g0
        .ok_or_else(|| CliError::Usage("stokes.g0 is not set".into()))?;
    stokes_pass(cfg, g0, cfg.stokes.delta_beta)
}

fn configured_readout(cfg: &RunConfig) -> Result<PassConfig> {
    let g0 = cfg
        .readout
        .g0_prime
        .ok_or_else(|| CliError::Usage("readout.g0_prime is not set".into()))?;
    readout_pass(cfg, g0, cfg.readout.delta_beta_prime)
}

struct StokesRun {
    structure: ResidualReport,
    modes: SqueezerModes,
}

fn run_stokes(pass: &PassConfig) -> Result<StokesRun> {
    let g = build_green(&pass.grid, &pass.pump, Pass::Stokes)?;
    let structure = verify_structure(&g);
    let modes = bloch_messiah(&g)?;
    Ok(StokesRun { structure, modes })
}

/// Equivalent mode number, or null when there are no photons at all.
fn modes_number(occ: &[f64]) -> Result<Value> {
    if occ.iter().all(|&x| x == 0.0) {
        return Ok(Value::Null);
    }
    Ok(json!(equivalent_modes_of(occ)?))
}

fn stokes(cfg: &RunConfig, sink: &mut Sink) -> Result<Record> {
    let pass = configured_stokes(cfg)?;
    let run = run_stokes(&pass)?;
    let pairs = &run.modes.pairs;
    let catalog = sink.table(
        "stokes_modes.csv",
        &["index", "zeta", "occupancy"],
        pairs
            .iter()
            .map(|p| vec![p.index.to_string(), num(p.zeta), num(p.occupancy())]),
    )?;
    let (ts, zs) = (pass.grid.t_samples(), pass.grid.z_samples());
    for p in pairs.iter().take(cfg.output.modes) {
        let k = p.index;
        sink.mode_function(
            &format!("stokes_mode_{k:03}_psi_in.csv"),
            "t",
            &ts,
            &p.psi_in,
        )?;
        sink.mode_function(
            &format!("stokes_mode_{k:03}_psi_out.csv"),
            "t",
            &ts,
            &p.psi_out,
        )?;
        sink.mode_function(
            &format!("stokes_mode_{k:03}_phi_in.csv"),
            "z",
            &zs,
            &p.phi_in,
        )?;
        sink.mode_function(
            &format!("stokes_mode_{k:03}_phi_out.csv"),
            "z",
            &zs,
            &p.phi_out,
        )?;
    }
    let occ = run.modes.occupancies();
    log::info!(
        "stokes: {} pairs, N_tot = {:.6e}",
        pairs.len(),
        run.modes.total_photons()
    );
    sink.report(
        "stokes_summary.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "N_tot": run.modes.total_photons(),
            "M": modes_number(&occ)?,
            "pairs": pairs.len(),
            "dropped": run.modes.dropped,
            "catalog_path": catalog,
        }),
    )?;
    let mut rec = Record::default();
    rec.pass("stokes", &pass);
    rec.residuals("stokes_structure", &run.structure);
    rec.residuals("stokes_decomposition", &run.modes.residuals);
    Ok(rec)
}

fn readout(cfg: &RunConfig, sink: &mut Sink) -> Result<Record> {
    let pass = configured_readout(cfg)?;
    let g = build_green(&pass.grid, &pass.pump, Pass::AntiStokes)?;
    let structure = verify_structure(&g);
    let modes = beamsplitter_reduce(&g)?;
    let catalog = sink.table(
        "readout_modes.csv",
        &["index", "eta", "one_minus_eta"],
        modes
            .pairs
            .iter()
            .map(|p| vec![p.index.to_string(), num(p.eta), num(1.0 - p.eta)]),
    )?;
    let (ts, zs) = (pass.grid.t_samples(), pass.grid.z_samples());
    for p in modes.pairs.iter().take(cfg.output.modes) {
        let k = p.index;
        sink.mode_function(
            &format!("readout_mode_{k:03}_psi_in.csv"),
            "t",
            &ts,
            &p.psi_in,
        )?;
        sink.mode_function(
            &format!("readout_mode_{k:03}_psi_out.csv"),
            "t",
            &ts,
            &p.psi_out,
        )?;
        sink.mode_function(
            &format!("readout_mode_{k:03}_phi_in.csv"),
            "z",
            &zs,
            &p.phi_in,
        )?;
        sink.mode_function(
            &format!("readout_mode_{k:03}_phi_out.csv"),
            "z",
            &zs,
            &p.phi_out,
        )?;
    }
    sink.report(
        "readout_summary.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "pairs": modes.pairs.len(),
            "best_eta": modes.pairs.first().map(|p| p.eta),
            "catalog_path": catalog,
        }),
    )?;
    let mut rec = Record::default();
    rec.pass("readout", &pass);
    rec.residuals("readout_structure", &structure);
    rec.residuals("readout_decomposition", &modes.residuals);
    Ok(rec)
}

fn chain(cfg: &RunConfig, sink: &mut Sink) -> Result<Record> {
    let s = configured_stokes(cfg)?;
    let r = configured_readout(cfg)?;
    let res = full_chain(&s, &r, cfg.readout.delta_k, cfg.readout.target)?;
    let target = res
        .stokes_modes
        .pairs
        .get(cfg.readout.target - 1)
        .ok_or_else(|| Error::InvalidArgument("target mode missing".into()))?;
    let phi = stored_mode(&target.phi_out, &s.grid, cfg.readout.delta_k);
    let sigma = sink.mode_function("sigma.csv", "t", &r.grid.t_samples(), &res.readout.sigma)?;
    let epsilon = sink.mode_function(
        "epsilon.csv",
        "z",
        &r.grid.z_samples(),
        &res.readout.epsilon,
    )?;
    let stored = sink.mode_function("stored_mode.csv", "z", &s.grid.z_samples(), &phi)?;
    let p = &res.provenance;
    sink.report(
        "chain.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "target_mode_index": p.target_mode_index,
            "target_occupancy": p.target_occupancy,
            "N_tot": p.total_photons,
            "delta_k": p.delta_k,
            "residual": res.readout.residual,
            "efficiency": res.readout.efficiency(),
            "normalization_error": res.readout.normalization_error,
            "sigma_nodes": node_count(&res.readout.sigma),
            "sigma_path": sigma,
            "epsilon_path": epsilon,
            "stored_mode_path": stored,
        }),
    )?;
    let mut rec = Record::default();
    rec.pass("stokes", &s);
    rec.pass("readout", &r);
    rec.residuals("stokes_structure", &p.stokes_structure);
    rec.residuals("stokes_decomposition", &p.stokes_decomposition);
    rec.residuals("readout_structure", &p.readout_structure);
    Ok(rec)
}

fn stats(cfg: &RunConfig, sink: &mut Sink) -> Result<Record> {
    let pass = configured_stokes(cfg)?;
    let run = run_stokes(&pass)?;
    let occ = run.modes.occupancies();
    let st = PhotonStats::from_occupancies(&occ, Some((cfg.stats.n_max, cfg.stats.resolution)))?;
    let pmf = st
        .pmf
        .as_ref()
        .ok_or_else(|| Error::NumericalFailure("distribution was not computed".into()))?;
    let path = sink.table(
        "pmf.csv",
        &["n", "p"],
        pmf.n
            .iter()
            .zip(&pmf.p)
            .map(|(n, p)| vec![format!("{}", *n as u64), num(*p)]),
    )?;
    let mut pmf_json = json!({
        "method": serde_json::to_value(pmf.method).unwrap_or(Value::Null),
        "points": pmf.n.len(),
        "n_max": pmf.n.last().map(|n| *n as u64),
        "mass": pmf.mass,
        "tail": pmf.tail,
        "mean": pmf.mean(),
    });
    if path.is_none() {
        pmf_json["n"] = json!(pmf.n);
        pmf_json["p"] = json!(pmf.p);
    }
    log::info!("stats: N_tot = {:.6e}, M = {:.6}", st.n_tot, st.m);
    sink.report(
        "stats.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "N_tot": st.n_tot,
            "M": st.m,
            "occupancies": st.occupancies,
            "pmf_path": path,
            "pmf": pmf_json,
        }),
    )?;
    let mut rec = Record::default();
    rec.pass("stokes", &pass);
    rec.residuals("stokes_structure", &run.structure);
    rec.residuals("stokes_decomposition", &run.modes.residuals);
    Ok(rec)
}

/// The Stokes output mode selected by `readout.target`, phase-shifted by delta_k.
fn target_mode(cfg: &RunConfig, rec: &mut Record) -> Result<Vec<Complex64>> {
    let pass = configured_stokes(cfg)?;
    let run = run_stokes(&pass)?;
    let target = cfg.readout.target;
    let pair = run.modes.pairs.get(target - 1).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "target mode {target} not available ({} significant pairs)",
            run.modes.pairs.len()
        ))
    })?;
    rec.pass("stokes", &pass);
    rec.residuals("stokes_structure", &run.structure);
    rec.residuals("stokes_decomposition", &run.modes.residuals);
    Ok(stored_mode(&pair.phi_out, &pass.grid, cfg.readout.delta_k))
}

fn sweep(cfg: &RunConfig, sink: &mut Sink) -> Result<Record> {
    let param = cfg
        .sweep
        .parameter
        .ok_or_else(|| CliError::Usage("sweep.parameter is not set".into()))?;
    let xs = cfg.sweep.values();
    let col = param.column();
    let mut rec = Record::default();
    let mut minima = Value::Null;
    let mut summary_rows = Vec::new();

    let table = match param {
        SweepParameter::StokesG0 | SweepParameter::StokesDeltaBeta => {
            let points: Vec<Result<Vec<String>>> = xs
                .par_iter()
                .map(|&x| {
                    let pass = match param {
                        SweepParameter::StokesG0 => stokes_pass(cfg, x, cfg.stokes.delta_beta)?,
                        _ => stokes_pass(cfg, cfg.stokes.g0.unwrap_or(0.0), x)?,
                    };
                    let run = run_stokes(&pass)?;
                    let occ = run.modes.occupancies();
                    let m = modes_number(&occ)?.as_f64().unwrap_or(f64::NAN);
                    let first = occ.first().copied().unwrap_or(0.0);
                    let second = occ.get(1).copied().unwrap_or(0.0);
                    Ok(vec![
                        num(x),
                        num(run.modes.total_photons()),
                        num(m),
                        num(first),
                        num(second),
                        num(run.structure.max()),
                        num(run.modes.residuals.max()),
                    ])
                })
                .collect();
            for p in points {
                summary_rows.push(p?);
            }
            sink.table(
                "sweep.csv",
                &[
                    col,
                    "N_tot",
                    "M",
                    "occupancy_1",
                    "occupancy_2",
                    "structure_residual",
                    "decomposition_residual",
                ],
                summary_rows.clone(),
            )?
        }
        SweepParameter::ReadoutG0 => {
            let phi = target_mode(cfg, &mut rec)?;
            let base = readout_pass(cfg, 0.0, cfg.readout.delta_beta_prime)?;
            let points = sweep_readout(&base, &phi, &xs)?;
            let residuals: Vec<f64> = points.iter().map(|p| p.residual).collect();
            let found: Vec<Value> = local_minima(&xs, &residuals)
                .into_iter()
                .map(|(g0, _)| {
                    let pass = PassConfig {
                        grid: base.grid,
                        pump: base.pump.with_g0(g0),
                    };
                    let r = readout_by_propagation(&pass, &phi)?;
                    Ok(json!({"g0_prime": g0, "residual": r.residual, "nodes": node_count(&r.sigma)}))
                })
                .collect::<Result<_>>()?;
            sink.table(
                "minima.csv",
                &["g0_prime", "residual", "nodes"],
                found.iter().map(|m| {
                    vec![
                        num(m["g0_prime"].as_f64().unwrap_or(f64::NAN)),
                        num(m["residual"].as_f64().unwrap_or(f64::NAN)),
                        m["nodes"].to_string(),
                    ]
                }),
            )?;
            minima = Value::Array(found);
            rec.pass("readout", &base);
            summary_rows = points
                .iter()
                .map(|p| {
                    vec![
                        num(p.g0),
                        num(p.residual),
                        num(1.0 - p.residual),
                        num(p.normalization_error),
                    ]
                })
                .collect();
            sink.table(
                "sweep.csv",
                &[col, "residual", "efficiency", "normalization_error"],
                summary_rows.clone(),
            )?
        }
        SweepParameter::ReadoutDeltaBeta => {
            let phi = target_mode(cfg, &mut rec)?;
            let g0 = cfg.readout.g0_prime.unwrap_or(0.0);
            let points: Vec<Result<Vec<String>>> = xs
                .par_iter()
                .map(|&x| {
                    let pass = readout_pass(cfg, g0, x)?;
                    let r = readout_by_propagation(&pass, &phi)?;
                    Ok(vec![
                        num(x),
                        num(r.residual),
                        num(r.efficiency()),
                        num(r.normalization_error),
                    ])
                })
                .collect();
            for p in points {
                summary_rows.push(p?);
            }
            rec.pass("readout", &readout_pass(cfg, g0, xs[0])?);
            sink.table(
                "sweep.csv",
                &[col, "residual", "efficiency", "normalization_error"],
                summary_rows.clone(),
            )?
        }
    };
    log::info!("sweep: {} points over {}", xs.len(), param.key());
    sink.report(
        "sweep.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "parameter": param.key(),
            "values": xs,
            "table_path": table,
            "minima": minima,
        }),
    )?;
    Ok(rec)
}

fn calibrate(cfg: &RunConfig, sink: &mut Sink) -> Result<Record> {
    let pass = stokes_pass(cfg, 0.0, cfg.stokes.delta_beta)?;
    let c = &cfg.calibrate;
    let cal = calibrate_g0(&pass.grid, &pass.pump, c.target, c.rel_tol, c.max_steps)?;
    let found = PassConfig {
        grid: pass.grid,
        pump: pass.pump.with_g0(cal.g0),
    };
    log::info!(
        "calibrate: g0 = {:.10e} gives N_tot = {:.6e} after {} steps",
        cal.g0,
        cal.total_photons,
        cal.steps
    );
    sink.report(
        "calibrate.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "target": c.target,
            "g0": cal.g0,
            "N_tot": cal.total_photons,
            "steps": cal.steps,
            "relative_error": cal.relative_error,
            "gamma": found.dimensionless().gamma,
        }),
    )?;
    let mut rec = Record::default();
    rec.pass("stokes", &found);
    Ok(rec)
}
