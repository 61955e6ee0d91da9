use std::path::Path;
use std::time::Instant;

use fkjump::ctsim::{simulate_ct, write_events_csv, CtOptions};
use fkjump::measures::ProbabilityVector;
use fkjump::oracle::{
    ct_exact_flow, flow_discrete_trajectory, mesh_trajectory, semigroup, variance_constant,
    uniform_recycling_trajectory, FkModel, MeshSchedule, MeshedModel,
};
use fkjump::parallel::{map_indexed, Execution};
use fkjump::particle::{
    finite_observer, indicator_functions, run, write_sweep_csv, FiniteParticleModel, RunConfig, SweepRow,
};
use fkjump::rng::derive_seed;
use fkjump::stats::{mean, sample_variance, standard_error, variance_standard_error};
use fkjump::verify::{run_all, run_criterion, CriterionOutcome, CRITERIA, DEFAULT_SEED};

use crate::config::ExperimentConfig;
use crate::{CliError, Context};

pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn header(fixed: &[&str], d: usize) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain((0..d).map(|x| format!("p{x}")))
        .collect()
}

fn law_row(fixed: Vec<String>, law: &ProbabilityVector) -> Vec<String> {
    fixed.into_iter().chain(law.as_slice().iter().map(f64::to_string)).collect()
}

/// Test functions from the config, state indicators by default.
pub fn functions(cfg: &ExperimentConfig, d: usize) -> Result<Vec<Vec<f64>>, CliError> {
    match &cfg.particle.functions {
        None => Ok(indicator_functions(d)),
        Some(fs) if fs.is_empty() => Err(CliError::Config("particle.functions must not be empty".into())),
        Some(fs) => {
            if let Some((i, f)) = fs.iter().enumerate().find(|(_, f)| f.len() != d) {
                return Err(CliError::Config(format!(
                    "particle.functions[{i}] has {} entries, the model has {d} states",
                    f.len()
                )));
            }
            Ok(fs.clone())
        }
    }
}

pub fn particle_model(cfg: &ExperimentConfig) -> Result<FkModel, CliError> {
    let model = cfg.model()?;
    Ok(if cfg.particle.shift { model.shifted_to_nonpositive() } else { model })
}

pub fn exact(cfg: &ExperimentConfig, ctx: &Context) -> Result<bool, CliError> {
    let model = cfg.model()?;
    let out = ctx.create_out()?;
    let d = model.state_count();
    let mut written = Vec::new();
    match &model {
        FkModel::Discrete(dm) => {
            let rows: Vec<Vec<String>> = flow_discrete_trajectory(dm, dm.horizon())?
                .iter()
                .enumerate()
                .map(|(n, (gamma, eta))| law_row(vec![n.to_string(), gamma.to_string()], eta))
                .collect();
            write_table(&out.join("eta.csv"), &header(&["n", "gamma"], d), &rows)?;
            let mut sg = Vec::new();
            for n in 0..=dm.horizon() {
                for k in 0..=n {
                    let b = semigroup(dm, k, n)?;
                    sg.push(vec![k.to_string(), n.to_string(), b.g.to_string(), b.beta.to_string()]);
                }
            }
            write_table(&out.join("semigroup.csv"), &header(&["k", "n", "g", "beta"], 0), &sg)?;
            let a: Vec<Vec<String>> = (0..=dm.horizon())
                .map(|n| Ok(vec![n.to_string(), variance_constant(dm, n)?.to_string()]))
                .collect::<Result<_, CliError>>()?;
            write_table(&out.join("variance_constant.csv"), &header(&["n", "a"], 0), &a)?;
            written.extend(["eta.csv", "semigroup.csv", "variance_constant.csv"].map(String::from));
        }
        FkModel::Ctmc(cm) => {
            let step = cfg.exact.time_step;
            if !(step > 0.0) {
                return Err(CliError::Config("exact.time_step must be positive".into()));
            }
            let count = (cm.horizon() / step + 1e-9).floor() as usize;
            let mut times: Vec<f64> = (0..=count).map(|j| j as f64 * step).collect();
            if cm.horizon() - times[count] > 1e-9 {
                times.push(cm.horizon());
            }
            let rows: Vec<Vec<String>> = times
                .iter()
                .map(|&t| {
                    let (mass, mu) = ct_exact_flow(cm, t)?;
                    Ok(law_row(vec![t.to_string(), mass.to_string()], &mu))
                })
                .collect::<Result<_, CliError>>()?;
            write_table(&out.join("ct_flow.csv"), &header(&["t", "mass"], d), &rows)?;
            written.push("ct_flow.csv".into());
        }
    }
    let shifted = model.shifted_to_nonpositive();
    for &m in &cfg.exact.m {
        let mesh = MeshSchedule::new(m)?;
        let meshed = MeshedModel::new(&model, mesh)?;
        let traj = mesh_trajectory(&meshed, meshed.steps())?;
        let rows: Vec<Vec<String>> = traj
            .measures
            .iter()
            .zip(&traj.masses)
            .enumerate()
            .map(|(k, (mu, mass))| law_row(vec![k.to_string(), mesh.time(k as u64).to_string(), mass.to_string()], mu))
            .collect();
        let name = format!("mesh_flow_m{m}.csv");
        write_table(&out.join(&name), &header(&["k", "t", "mass"], d), &rows)?;
        written.push(name);
        let meshed = MeshedModel::new(&shifted, mesh)?;
        let rows: Vec<Vec<String>> = uniform_recycling_trajectory(&meshed, meshed.steps())?
            .iter()
            .enumerate()
            .map(|(k, mu)| law_row(vec![k.to_string(), mesh.time(k as u64).to_string()], mu))
            .collect();
        let name = format!("uniform_recycling_m{m}.csv");
        write_table(&out.join(&name), &header(&["k", "t"], d), &rows)?;
        written.push(name);
    }
    println!("wrote {} files to {}: {}", written.len(), out.display(), written.join(", "));
    Ok(true)
}

pub fn particle(cfg: &ExperimentConfig, ctx: &Context) -> Result<bool, CliError> {
    let seed = ctx.seed()?;
    let model = particle_model(cfg)?;
    let case = cfg.case()?;
    let grid = cfg.grid()?;
    let d = model.state_count();
    let fs = functions(cfg, d)?;
    let time = cfg.particle.time.unwrap_or(model.horizon_time());
    let out = ctx.create_out()?;
    let mut rows = Vec::new();
    for &(n, m) in &grid {
        let mesh = MeshSchedule::new(m)?;
        let pm = FiniteParticleModel::new(&model, mesh, cfg.particle.method)?;
        let steps = mesh.index_of_time(time)?;
        let exact = mesh_trajectory(pm.meshed(), steps)?.measures;
        let cell_seed = derive_seed(seed, &[n as u64, m as u64]);
        let cfg_run = RunConfig::new(case, n, cell_seed).record_at((0..=steps).collect()).horizon(steps);
        let est = run(&pm, &cfg_run, finite_observer(d, fs.clone()))?;
        for (i, &k) in est.record_at.iter().enumerate() {
            for (j, f) in fs.iter().enumerate() {
                rows.push(vec![
                    n.to_string(),
                    m.to_string(),
                    k.to_string(),
                    mesh.time(k).to_string(),
                    j.to_string(),
                    est.f_values[i][j].to_string(),
                    exact[k as usize].expectation(f).to_string(),
                    est.mass_estimate[i].to_string(),
                    est.survivors[i].to_string(),
                    cell_seed.to_string(),
                ]);
            }
        }
        let last = est.record_at.len() - 1;
        println!(
            "N={n} m={m} t={time}: mu^N(f) = {:?}, mass {:.6}, never-rejected {}",
            est.f_values[last],
            est.mass_estimate[last],
            est.survivors[last]
        );
    }
    let cols = ["N", "m", "step", "t", "f_id", "value", "exact", "mass", "survivors", "seed"];
    write_table(&out.join("particle.csv"), &header(&cols, 0), &rows)?;
    Ok(true)
}

pub fn ctsim(cfg: &ExperimentConfig, ctx: &Context) -> Result<bool, CliError> {
    let seed = ctx.seed()?;
    let model = cfg.model()?;
    let ct = model.as_ctmc()?;
    let ct = if cfg.ctsim.shift { ct.shifted_to_nonpositive() } else { ct.clone() };
    let kind = cfg.interaction()?;
    let options = CtOptions {
        bound: cfg.ctsim.bound,
        log_events: cfg.ctsim.log_events,
        ..CtOptions::new(cfg.mode()?)
    };
    let n = cfg.ctsim.n;
    let reps = cfg.ctsim.replications;
    if n == 0 || reps == 0 {
        return Err(CliError::Config("ctsim.n and ctsim.replications must be at least 1".into()));
    }
    let record_at = cfg.ctsim.record_at.clone().unwrap_or_else(|| vec![ct.horizon()]);
    if record_at.is_empty() {
        return Err(CliError::Config("ctsim.record_at must not be empty".into()));
    }
    let d = ct.state_count();
    let out = ctx.create_out()?;
    let started = Instant::now();
    let runs = map_indexed(Execution::Parallel, reps, |r| {
        let opts = CtOptions {
            log_events: options.log_events && r == 0,
            ..options.clone()
        };
        simulate_ct(&ct, kind, n, &opts, derive_seed(seed, &[r as u64]), &record_at)
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let wall_ms = started.elapsed().as_millis() as u64;
    let mut rows = Vec::new();
    for (i, &t) in record_at.iter().enumerate() {
        let (_, exact) = ct_exact_flow(&ct, t)?;
        for x in 0..d {
            let xs: Vec<f64> = runs.iter().map(|r| r.counts[i][x] as f64 / n as f64).collect();
            let mu = mean(&xs);
            rows.push(SweepRow {
                n,
                m: 0,
                step: i as u64,
                f_id: x,
                mean: mu,
                var: sample_variance(&xs),
                exact: exact.as_slice()[x],
                bias: mu - exact.as_slice()[x],
                se: standard_error(&xs),
                seed,
                wall_ms,
                var_se: variance_standard_error(&xs),
                replications: reps,
            });
        }
    }
    write_sweep_csv(&rows, std::fs::File::create(out.join("ctsim.csv"))?)?;
    if options.log_events {
        write_events_csv(&runs[0].events, std::fs::File::create(out.join("events.csv"))?)?;
    }
    let interactions: u64 = runs.iter().map(|r| r.interactions).sum();
    let mutations: u64 = runs.iter().map(|r| r.mutations).sum();
    println!(
        "{} / {}: {reps} run(s) of N={n}; {mutations} mutations, {interactions} interactions",
        kind.name(),
        options.mode.name()
    );
    for r in &rows {
        println!(
            "  t={} state {}: {:.5} (exact {:.5}, se {:.5})",
            record_at[r.step as usize], r.f_id, r.mean, r.exact, r.se
        );
    }
    Ok(true)
}

fn selected_criteria(suite: Option<&str>) -> Result<Option<Vec<u8>>, CliError> {
    let Some(s) = suite.filter(|s| !s.eq_ignore_ascii_case("all")) else {
        return Ok(None);
    };
    s.split(',')
        .map(|part| {
            let p = part.trim().trim_start_matches(['c', 'C']);
            match p.parse::<u8>() {
                Ok(id) if (1..=CRITERIA).contains(&id) => Ok(id),
                _ => Err(CliError::Config(format!(
                    "unknown criterion \"{}\" (expected 1..{CRITERIA} or \"all\")",
                    part.trim()
                ))),
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

pub fn verify(ctx: &Context) -> Result<bool, CliError> {
    let seed = ctx.seed.unwrap_or(DEFAULT_SEED);
    let outcomes: Vec<CriterionOutcome> = match selected_criteria(ctx.suite.as_deref())? {
        None => run_all(seed, Execution::Parallel),
        Some(ids) => ids
            .into_iter()
            .filter_map(|id| run_criterion(id, seed, Execution::Parallel))
            .collect(),
    };
    for o in &outcomes {
        println!("{}", o.line());
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria passed (seed {seed})", outcomes.len());
    if ctx.out_given {
        let out = ctx.create_out()?;
        let rows: Vec<Vec<String>> = outcomes
            .iter()
            .map(|o| {
                vec![
                    o.id.to_string(),
                    o.name.to_string(),
                    o.passed.to_string(),
                    o.detail.clone(),
                    o.elapsed_ms.to_string(),
                    o.budget_ms.to_string(),
                ]
            })
            .collect();
        let cols = ["id", "name", "passed", "detail", "elapsed_ms", "budget_ms"];
        write_table(&out.join("verify.csv"), &header(&cols, 0), &rows)?;
    }
    Ok(passed == outcomes.len())
}
