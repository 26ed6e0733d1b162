//! Subcommand bodies. Each returns its output files as `(name, contents)`;
//! nothing touches the filesystem until every result is gathered.

use std::fmt::Write as _;

use resfluor::correlator::{g2_cross, Direction};
use resfluor::exec::Parallelism;
use resfluor::liouville::{emission_spectrum, liouvillian_matrix, transition_energies, weighted_transition_energies};
use resfluor::modelkit::{build_driven_2ls, SOURCE_SLOT};
use resfluor::opalg::mode_operator;
use resfluor::scenarios::{
    analyze_point, build_system, csv_float, entanglement_map, heralding_study, optimal_detuning, optimal_drive,
    optimal_map, polariton_study, sweep_csv, Optimum, SearchSpec, LOWER_DETECTOR, UPPER_DETECTOR,
};
use serde::Serialize;

use crate::config::{MapKind, OptimalTarget, RunConfig};
use crate::error::CliError;

pub type Outputs = Vec<(String, String)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Job {
    Spectrum,
    Lines,
    G2,
    Mc,
    Map,
    Optimal,
    Polariton,
}

pub fn run(job: Job, cfg: &RunConfig, par: Parallelism) -> Result<Outputs, CliError> {
    match job {
        Job::Spectrum => spectrum(cfg),
        Job::Lines => lines(cfg),
        Job::G2 => g2(cfg),
        Job::Mc => mc(cfg, par),
        Job::Map => map(cfg, par),
        Job::Optimal => optimal(cfg, par),
        Job::Polariton => polariton(cfg),
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialize");
    s.push('\n');
    s
}

fn spectrum(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let job = &cfg.spectrum;
    let grid = job.frequencies.points().map_err(CliError::Config)?;
    let model = build_driven_2ls(job.delta, job.omega_drive, job.gamma_sigma)?;
    let sigma = mode_operator(model.layout(), SOURCE_SLOT)?;
    let table = emission_spectrum(&model, &sigma, &grid)?;
    #[derive(Serialize)]
    struct Summary {
        coherent_fraction: f64,
    }
    Ok(vec![
        ("spectrum.csv".into(), table.to_csv()),
        ("spectrum.json".into(), json(&Summary { coherent_fraction: table.coherent_fraction })),
    ])
}

/// Long format: one row per (Ω, line).
fn lines(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let job = &cfg.lines;
    let omegas = job.omegas.points().map_err(CliError::Config)?;
    let mut out = String::from("Omega,energy\n");
    for &w in &omegas {
        let model = build_driven_2ls(job.delta, w, job.gamma_sigma)?;
        let energies = match job.weight_threshold {
            Some(th) => weighted_transition_energies(&model, &mode_operator(model.layout(), SOURCE_SLOT)?, th)?,
            None => transition_energies(&liouvillian_matrix(&model))?,
        };
        for e in energies {
            let _ = writeln!(out, "{},{}", csv_float(w), csv_float(e));
        }
    }
    Ok(vec![("lines.csv".into(), out)])
}

fn g2(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let job = &cfg.g2;
    let taus = job.taus.points().map_err(CliError::Config)?;
    job.system.validate()?;
    let model = build_system(&job.system)?;
    let a1 = mode_operator(model.layout(), UPPER_DETECTOR)?;
    let a2 = mode_operator(model.layout(), LOWER_DETECTOR)?;
    let curve = g2_cross(&model, &a1, &a2, &taus, Direction::Forward)?;
    Ok(vec![("g2.csv".into(), curve.to_csv())])
}

fn mc(cfg: &RunConfig, par: Parallelism) -> Result<Outputs, CliError> {
    cfg.mc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let report = heralding_study(&cfg.mc, cfg.seed, par)?;
    #[derive(Serialize)]
    struct Summary {
        detuned_heralds: u64,
        resonant_heralds: u64,
        signal_rate: f64,
    }
    let summary = Summary {
        detuned_heralds: report.detuned_heralds,
        resonant_heralds: report.resonant_heralds,
        signal_rate: report.signal_rate,
    };
    Ok(vec![
        ("mc_r1.csv".into(), report.r1.to_csv()),
        ("mc_r2plus.csv".into(), report.r2plus.to_csv()),
        ("mc_histogram.csv".into(), report.histogram_csv()),
        ("mc_summary.json".into(), json(&summary)),
    ])
}

fn map(cfg: &RunConfig, par: Parallelism) -> Result<Outputs, CliError> {
    let job = &cfg.map;
    let omegas = job.omegas.points().map_err(CliError::Config)?;
    let rows = match job.kind {
        MapKind::Detuning => {
            let deltas = job.deltas.points().map_err(CliError::Config)?;
            entanglement_map(&job.system, &omegas, &deltas, par)?
        }
        MapKind::Optimal => {
            let gammas = job.gammas.points().map_err(CliError::Config)?;
            optimal_map(&job.system, &omegas, &gammas, SearchSpec::detuning_for, job.search_truncation, par)?
        }
    };
    Ok(vec![("map.csv".into(), sweep_csv(&rows))])
}

fn optimal(cfg: &RunConfig, par: Parallelism) -> Result<Outputs, CliError> {
    let job = &cfg.optimal;
    let search = job.resolved_search();
    let opt: Optimum = match job.target {
        OptimalTarget::Detuning => optimal_detuning(&job.system, &search, par)?,
        OptimalTarget::Drive => optimal_drive(&job.system, &search, par)?,
    };
    let mut files = vec![("optimal.json".into(), json(&opt))];
    if let Some(x) = opt.argmax {
        let point = match job.target {
            OptimalTarget::Detuning => job.system.with_delta(x),
            OptimalTarget::Drive => job.system.with_omega(x),
        };
        files.push(("optimal.csv".into(), sweep_csv(&[analyze_point(&point)?])));
    }
    Ok(files)
}

fn polariton(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let report = polariton_study(&cfg.polariton)?;
    Ok(vec![
        ("polariton.json".into(), json(&report)),
        ("theta.json".into(), report.theta.to_json() + "\n"),
        ("theta_postselected.json".into(), report.theta_postselected.to_json() + "\n"),
    ])
}
