//! The `run`, `compare` and `gait-design` verbs.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use clfqp_core::clfqp::{ControllerConfig, SaturationSpec};
use clfqp_core::mechsys::MechState;
use clfqp_core::models::gait::{find_periodic_gait, GaitDesign};
use clfqp_core::models::{make_linear_chain, make_three_link_biped, HybridModel};
use clfqp_core::sim::{perturb_initial_state, simulate_walk, summarize, Clock, SimConfig, SimLog};
use log::info;

use crate::config::{PlantSpec, PresetBounds, SaturationCfg, Scenario};
use crate::error::{CliError, Result};
use crate::formats::{write_json, BipedParamsCfg, ClfCfg, GaitFile, PlantFile, TemplateCfg};
use crate::output::{self, CompareRow, SummaryDoc};

/// Wall clock for the solve-time columns.
pub struct StdClock(Instant);

impl StdClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now_us(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e6
    }
}

/// A scenario with everything it refers to loaded and built.
pub struct Resolved {
    pub scenario: Scenario,
    pub base: PathBuf,
    pub model: HybridModel,
    pub gait: GaitDesign,
    pub ctrl: ControllerConfig,
    pub sim: SimConfig,
    pub x0: MechState,
    /// Identifies the plant and gait; `compare` requires these to agree.
    pub fingerprint: String,
}

impl Resolved {
    pub fn output_dir(&self) -> PathBuf {
        self.base.join(&self.scenario.output_dir)
    }
}

/// Default gaits designed so far in this process, keyed by plant parameters.
static DESIGNED: Mutex<Vec<(BipedParamsCfg, GaitDesign)>> = Mutex::new(Vec::new());

fn default_gait(params: &BipedParamsCfg, model: &HybridModel) -> Result<GaitDesign> {
    if let Some((_, g)) = DESIGNED.lock().unwrap().iter().find(|(p, _)| p == params) {
        return Ok(g.clone());
    }
    info!("no gait_file given; designing the default gait");
    let clf = ClfCfg::default().build(model.plant.m(), "clf")?;
    let g = find_periodic_gait(model, &TemplateCfg::default().to_core(), &clf, None)?;
    DESIGNED.lock().unwrap().push((params.clone(), g.clone()));
    Ok(g)
}

fn to_json(v: &impl serde::Serialize) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

pub fn resolve(sc: Scenario, base: PathBuf) -> Result<Resolved> {
    let (model, gait, fingerprint) = match &sc.plant {
        PlantSpec::ThreeLinkBiped { params } => {
            let model = make_three_link_biped(params.to_core()).map_err(|e| CliError::config("plant.params", e.to_string()))?;
            match &sc.gait_file {
                Some(rel) => {
                    let gf = GaitFile::read(&base.join(rel))?;
                    if &gf.params != params {
                        return Err(CliError::config("gait_file", format!("{rel} was designed for different plant.params")));
                    }
                    let g = gf.to_design()?;
                    (model, g, format!("biped {} gait {}", to_json(params), to_json(&gf)))
                }
                None => {
                    let g = default_gait(params, &model)?;
                    (model, g, format!("biped {} gait default", to_json(params)))
                }
            }
        }
        PlantSpec::LinearChain { m, initial_q, initial_dq, step_period } => {
            let (plant, outmap) = make_linear_chain(*m).map_err(|e| CliError::config("plant.m", e.to_string()))?;
            let x0 = MechState::new(initial_q.clone(), initial_dq.clone())
                .map_err(|e| CliError::config("plant.initial_q", e.to_string()))?;
            let g = GaitDesign::without_impacts(outmap, x0, *step_period);
            (HybridModel { plant }, g, format!("linear_chain {}", to_json(&sc.plant)))
        }
    };

    let m = sc.m();
    let sat = match (sc.saturation.preset_bounds(m), &sc.saturation) {
        (Some(PresetBounds::Constant { umin, umax }), _) => SaturationSpec::Constant { umin, umax },
        (Some(PresetBounds::Offsets { lo, hi }), _) => dynamic(&gait, lo, hi)?,
        (None, SaturationCfg::Custom { umin: Some(lo), umax: Some(hi), .. }) => {
            SaturationSpec::Constant { umin: lo.clone(), umax: hi.clone() }
        }
        (None, SaturationCfg::Custom { offsets_lo: Some(lo), offsets_hi: Some(hi), .. }) => {
            dynamic(&gait, lo.clone(), hi.clone())?
        }
        _ => SaturationSpec::None,
    };
    let ctrl = sc.controller_config(sat)?;
    let sim = sc.sim.to_core();
    let x0 = perturb_initial_state(&gait.fixed_point, sim.perturbation, sim.seed);
    Ok(Resolved { scenario: sc, base, model, gait, ctrl, sim, x0, fingerprint })
}

fn dynamic(gait: &GaitDesign, lo: Vec<f64>, hi: Vec<f64>) -> Result<SaturationSpec> {
    let fit = gait
        .ustar_fit
        .clone()
        .ok_or_else(|| CliError::config("saturation", "dynamic bounds need a gait with a u* fit"))?;
    Ok(SaturationSpec::Dynamic { offsets_lo: lo, offsets_hi: hi, ustar_fit: fit, theta_range: gait.outmap.theta_range })
}

pub fn load(path: &Path) -> Result<Resolved> {
    let (sc, base) = Scenario::load(path)?;
    resolve(sc, base)
}

/// What `run` produced.
pub struct RunReport {
    pub log: SimLog,
    pub summary: SummaryDoc,
    pub output_dir: PathBuf,
}

/// Simulates a resolved scenario without touching the file system.
pub fn simulate(r: &Resolved) -> Result<(SimLog, SummaryDoc)> {
    let clock = StdClock::new();
    let log = simulate_walk(&r.model, &r.gait, &r.ctrl, &r.sim, &r.x0, &clock).map_err(|e| match e {
        clfqp_core::Error::InvalidConfig(msg) => CliError::config("scenario", msg),
        clfqp_core::Error::Dimension { .. } => CliError::config("scenario", e.to_string()),
        e => CliError::Core(e),
    })?;
    let plant = match r.scenario.plant {
        PlantSpec::ThreeLinkBiped { .. } => "three_link_biped",
        PlantSpec::LinearChain { .. } => "linear_chain",
    };
    let stats = summarize(&log);
    let summary = SummaryDoc::new(
        &r.scenario.name,
        plant,
        r.ctrl.mode.as_str(),
        r.scenario.saturation.label(),
        &stats,
        &log,
    );
    Ok((log, summary))
}

/// Writes `log.csv`, `summary.json`, `phase_portrait.csv` and, for the
/// linear chain, `envelope.csv`.
pub fn write_outputs(r: &Resolved, log: &SimLog, summary: &SummaryDoc) -> Result<PathBuf> {
    let dir = r.output_dir();
    output::write_log(&dir.join("log.csv"), log)?;
    summary.write(&dir.join("summary.json"))?;
    let coord = match r.scenario.plant {
        PlantSpec::ThreeLinkBiped { .. } => 2,
        PlantSpec::LinearChain { .. } => 0,
    };
    output::write_phase_portrait(&dir.join("phase_portrait.csv"), log, coord)?;
    if matches!(r.scenario.plant, PlantSpec::LinearChain { .. }) {
        output::write_envelope(&dir.join("envelope.csv"), log, &r.ctrl.clf)?;
    }
    Ok(dir)
}

pub fn run(path: &Path) -> Result<RunReport> {
    let r = load(path)?;
    let (log, summary) = simulate(&r)?;
    let output_dir = write_outputs(&r, &log, &summary)?;
    info!(
        "{}: {} after {}/{} steps, outputs in {}",
        summary.scenario,
        summary.outcome,
        summary.steps_completed,
        summary.steps_attempted,
        output_dir.display()
    );
    Ok(RunReport { log, summary, output_dir })
}

/// Worker count from `CLFQP_THREADS`, else the machine's parallelism.
pub fn thread_budget() -> Result<usize> {
    match std::env::var("CLFQP_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::config("CLFQP_THREADS", format!("must be a positive integer, got \"{s}\""))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs every scenario (each writes its own outputs) and tabulates them in
/// `out/compare.csv`. All scenarios must share the plant and gait.
pub fn compare(paths: &[PathBuf], out: &Path) -> Result<Vec<CompareRow>> {
    if paths.len() < 2 {
        return Err(CliError::config("scenarios", "compare needs at least two scenario files"));
    }
    let threads = thread_budget()?;
    let resolved = paths.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    if let Some(odd) = resolved.iter().find(|r| r.fingerprint != resolved[0].fingerprint) {
        return Err(CliError::IncompatibleScenarios(format!(
            "\"{}\" and \"{}\" differ in plant or gait",
            resolved[0].scenario.name, odd.scenario.name
        )));
    }

    let mut results: Vec<Option<Result<SummaryDoc>>> = (0..resolved.len()).map(|_| None).collect();
    for (chunk_r, chunk_out) in resolved.chunks(threads).zip(results.chunks_mut(threads)) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk_r
                .iter()
                .map(|r| {
                    s.spawn(move || {
                        let (log, summary) = simulate(r)?;
                        write_outputs(r, &log, &summary)?;
                        Ok(summary)
                    })
                })
                .collect();
            for (h, slot) in handles.into_iter().zip(chunk_out.iter_mut()) {
                *slot = Some(h.join().unwrap_or_else(|_| Err(CliError::Internal("scenario worker panicked".into()))));
            }
        });
    }
    let rows = results
        .into_iter()
        .map(|r| r.expect("every scenario ran").map(|s| CompareRow::from_summary(&s)))
        .collect::<Result<Vec<_>>>()?;
    output::write_compare(&out.join("compare.csv"), &rows)?;
    Ok(rows)
}

/// Designs the periodic gait for a plant file and writes it as a gait file.
pub fn gait_design(plant: &Path, out: &Path) -> Result<GaitFile> {
    let pf = PlantFile::read(plant)?;
    let model = make_three_link_biped(pf.params.to_core()).map_err(|e| CliError::config("params", e.to_string()))?;
    let clf = pf.clf.build(model.plant.m(), "clf")?;
    let g = find_periodic_gait(&model, &pf.template.to_core(), &clf, None)?;
    let d = &g.diagnostics;
    info!(
        "fixed point residual {:.2e} after {} Newton steps, spectral radius {:.3}, u* fit residual {:.2e} of span {:.3}",
        d.fixed_point_residual, d.newton_iterations, d.spectral_radius, d.ustar_fit_residual, d.ustar_span
    );
    let gf = GaitFile::from_design(&pf.params, &pf.template, &pf.clf, &g);
    write_json(out, &gf)?;
    Ok(gf)
}
