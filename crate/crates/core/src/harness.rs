//! Experiment orchestration: single runs, landscape campaigns, A/B
//! comparisons and the files they emit.
//!
//! Every artifact is a pure function of the experiment description, so a
//! rerun reproduces it byte for byte. Wall-clock time is only written when
//! explicitly requested.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run, Branch, EngineConfig, RunState};
use crate::error::{Error, Result};
use crate::genotype::{parse_suites, write_suites, TestSuite};
use crate::landscape::{snapshot, EvaluatedIndividual, GenerationSnapshot, SNAPSHOT_COLUMNS};
use crate::stats::{compare, ComparisonResult, PValueMethod, SampleGroup};
use crate::sut::{AppModel, AppParams};

/// Derives the engine seed of repetition `rep` from the master seed.
///
/// `stream` separates independent seed streams (one per app model); arms of
/// a comparison share a stream so that repetition `r` of each arm starts
/// from the same seed.
pub fn derive_seed(master: u64, stream: u64, rep: u64) -> u64 {
    let mut z = splitmix(master ^ splitmix(stream.wrapping_add(0x5851_f42d_4c95_7f2d)));
    z = splitmix(z ^ rep.wrapping_mul(0x2545_f491_4f6c_dd1d));
    z
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum AppSource {
    Generated(AppParams),
    Pinned { path: PathBuf },
}

impl AppSource {
    pub fn load(&self) -> Result<AppModel> {
        match self {
            AppSource::Generated(params) => AppModel::generate(params),
            AppSource::Pinned { path } => AppModel::load(path),
        }
    }

    pub fn id(&self) -> String {
        match self {
            AppSource::Generated(p) => format!("synthetic-s{}", p.model_seed),
            AppSource::Pinned { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "app".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub engine: EngineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub apps: Vec<AppSource>,
    /// The first arm is the control; a comparison needs exactly two.
    pub arms: Vec<Arm>,
    pub repetitions: usize,
    pub k: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub p_value: PValueMethod,
    /// Record wall-clock time per run (breaks byte-identical reruns).
    #[serde(default)]
    pub wall_time: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1");
        }
        if self.apps.is_empty() {
            return fail("an experiment needs at least one app model");
        }
        let Some(first) = self.arms.first() else {
            return fail("an experiment needs at least one arm");
        };
        for arm in &self.arms {
            arm.engine.validate()?;
            if arm.engine.genotype != first.engine.genotype {
                return fail("all arms must share one genotype configuration");
            }
        }
        Ok(())
    }

    /// Engine config of `arm` for repetition `rep` on app `app_index`.
    pub fn engine_for(&self, arm: usize, app_index: usize, rep: usize) -> EngineConfig {
        let mut cfg = self.arms[arm].engine;
        cfg.landscape.k = self.k;
        cfg.rng_seed = derive_seed(self.master_seed, app_index as u64, rep as u64);
        cfg
    }
}

/// Outcome of one engine run in the shape of a results-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub app: String,
    pub arm: String,
    pub repetition: usize,
    pub seed: u64,
    pub mechanisms: String,
    pub generations: usize,
    /// Highest statement coverage among archived Pareto-optimal suites.
    pub final_coverage: f64,
    pub distinct_crashes: usize,
    /// Shortest revealing prefix seen for each crash id.
    pub minimal_lengths: BTreeMap<u32, usize>,
    /// Mean of `minimal_lengths`, 0 when no crash was found.
    pub mean_minimal_length: f64,
    pub evaluations: usize,
    pub restarts: usize,
    pub archive_size: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_s: Option<f64>,
}

impl RunSummary {
    pub fn from_state(
        app: &str,
        arm: &str,
        repetition: usize,
        cfg: &EngineConfig,
        state: &RunState,
        wall_time_s: Option<f64>,
    ) -> Self {
        let mut minimal_lengths = BTreeMap::new();
        for c in &state.crash_log {
            minimal_lengths
                .entry(c.crash_id)
                .and_modify(|m: &mut usize| *m = (*m).min(c.revealing_prefix_length))
                .or_insert(c.revealing_prefix_length);
        }
        let mean_minimal_length = if minimal_lengths.is_empty() {
            0.0
        } else {
            minimal_lengths.values().sum::<usize>() as f64 / minimal_lengths.len() as f64
        };
        Self {
            app: app.to_string(),
            arm: arm.to_string(),
            repetition,
            seed: cfg.rng_seed,
            mechanisms: cfg.mechanisms.to_string(),
            generations: state.generation,
            final_coverage: state
                .archive
                .iter()
                .map(|a| a.fitness.coverage)
                .fold(0.0, f64::max),
            distinct_crashes: minimal_lengths.len(),
            minimal_lengths,
            mean_minimal_length,
            evaluations: state.evaluations,
            restarts: state
                .telemetry
                .iter()
                .filter(|t| t.branch == Branch::Restart)
                .count(),
            archive_size: state.archive.len(),
            wall_time_s,
        }
    }

    /// Values of the four compared metrics in [`COMPARISON_METRICS`] order.
    /// The last one is wall time when recorded, else the evaluation count.
    pub fn metric_values(&self) -> [f64; 4] {
        [
            self.final_coverage,
            self.distinct_crashes as f64,
            self.mean_minimal_length,
            self.wall_time_s.unwrap_or(self.evaluations as f64),
        ]
    }
}

pub const COMPARISON_METRICS: [&str; 3] = ["coverage", "crashes", "length"];

fn cost_metric_name(wall_time: bool) -> &'static str {
    if wall_time {
        "time_s"
    } else {
        "evaluations"
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Snapshot CSV of a run: the twelve snapshot columns plus the branch that
/// produced each generation.
pub fn snapshots_csv(state: &RunState) -> String {
    let mut out = GenerationSnapshot::csv_header();
    out.push_str(",branch\n");
    for (snap, t) in state.snapshots.iter().zip(&state.telemetry) {
        let _ = writeln!(out, "{},{}", snap.csv_row(), t.branch);
    }
    out
}

/// Per-generation arithmetic mean of every metric across runs.
pub fn mean_snapshots_csv(runs: &[Vec<GenerationSnapshot>]) -> Result<String> {
    let Some(first) = runs.first() else {
        return Err(Error::Usage("no runs to average".into()));
    };
    if runs.iter().any(|r| r.len() != first.len()) {
        return Err(Error::Usage("runs differ in generation count".into()));
    }
    let mut out = GenerationSnapshot::csv_header();
    out.push('\n');
    for g in 0..first.len() {
        let mut sums = [0.0; 11];
        for r in runs {
            for (s, v) in sums.iter_mut().zip(r[g].metric_values()) {
                *s += v;
            }
        }
        let _ = write!(out, "{}", first[g].generation);
        for s in sums {
            let _ = write!(out, ",{:.6}", s / runs.len() as f64);
        }
        out.push('\n');
    }
    Ok(out)
}

fn population_suites(pop: &[EvaluatedIndividual]) -> Vec<TestSuite> {
    pop.iter().map(|p| p.suite.clone()).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Write the population of every generation under `populations/`.
    pub archive_populations: bool,
    pub wall_time: bool,
}

/// Runs one engine configuration and writes its artifacts into `out`:
/// `snapshots.csv`, `pareto_front.txt`, `final_population.txt`,
/// `summary.json`, and optionally `populations/gen_NNN.txt`.
pub fn run_single(
    app_id: &str,
    app: &AppModel,
    arm: &str,
    repetition: usize,
    cfg: &EngineConfig,
    opts: RunOptions,
    out: &Path,
) -> Result<(RunState, RunSummary)> {
    let start = Instant::now();
    let mut cfg = *cfg;
    cfg.trace = cfg.trace || opts.archive_populations;
    let state = run(&cfg, app)?;
    let wall = opts.wall_time.then(|| start.elapsed().as_secs_f64());
    let summary = RunSummary::from_state(app_id, arm, repetition, &cfg, &state, wall);

    write_file(&out.join("snapshots.csv"), &snapshots_csv(&state))?;
    write_file(
        &out.join("pareto_front.txt"),
        &write_suites(&population_suites(&state.archive))?,
    )?;
    write_file(
        &out.join("final_population.txt"),
        &write_suites(&population_suites(&state.population))?,
    )?;
    write_file(&out.join("summary.json"), &to_json_line(&summary)?)?;
    if opts.archive_populations {
        for trace in &state.traces {
            let pop: Vec<TestSuite> = trace
                .next
                .iter()
                .map(|&i| trace.pool[i].suite.clone())
                .collect();
            write_file(
                &out.join("populations")
                    .join(format!("gen_{:03}.txt", trace.generation)),
                &write_suites(&pop)?,
            )?;
        }
    }
    Ok((state, summary))
}

/// Runs the first arm on the single configured app for every repetition.
/// Writes `rep_NN.csv` per repetition and `mean.csv` into `out`.
pub fn run_landscape_campaign(
    spec: &ExperimentSpec,
    out: &Path,
) -> Result<Vec<Vec<GenerationSnapshot>>> {
    spec.validate()?;
    if spec.apps.len() != 1 {
        return Err(Error::InvalidConfig(
            "a landscape campaign runs exactly one app model".into(),
        ));
    }
    let app = spec.apps[0].load()?;
    write_file(&out.join("experiment.json"), &to_json_line(spec)?)?;
    let states = (0..spec.repetitions)
        .into_par_iter()
        .map(|rep| run(&spec.engine_for(0, 0, rep), &app))
        .collect::<Result<Vec<_>>>()?;
    for (rep, state) in states.iter().enumerate() {
        write_file(
            &out.join(format!("rep_{rep:02}.csv")),
            &snapshots_csv(state),
        )?;
    }
    let runs: Vec<Vec<GenerationSnapshot>> = states.into_iter().map(|s| s.snapshots).collect();
    write_file(&out.join("mean.csv"), &mean_snapshots_csv(&runs)?)?;
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub app: String,
    pub result: ComparisonResult,
}

pub const COMPARISON_HEADER: &str = "app,metric,a12,effect,h,p,significant";

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for r in rows {
        let c = &r.result;
        let _ = writeln!(
            out,
            "{},{},{:.6},{},{:.6},{:.6},{}",
            r.app, c.metric, c.a12, c.effect, c.kw_h, c.p_value, c.significant
        );
    }
    out
}

/// Runs both arms on every app for every repetition and compares the second
/// arm against the first. Writes `runs/<app>/<arm>/rep_NN/...` and
/// `comparison.csv` into `out`.
pub fn run_comparison(spec: &ExperimentSpec, out: &Path) -> Result<Vec<ComparisonRow>> {
    spec.validate()?;
    if spec.arms.len() != 2 {
        return Err(Error::InvalidConfig(
            "a comparison needs exactly two arms".into(),
        ));
    }
    write_file(&out.join("experiment.json"), &to_json_line(spec)?)?;
    let opts = RunOptions {
        archive_populations: false,
        wall_time: spec.wall_time,
    };
    let mut rows = Vec::new();
    for (app_index, source) in spec.apps.iter().enumerate() {
        let app = source.load()?;
        let app_id = source.id();
        let jobs: Vec<(usize, usize)> = (0..spec.arms.len())
            .flat_map(|arm| (0..spec.repetitions).map(move |rep| (arm, rep)))
            .collect();
        let summaries = jobs
            .par_iter()
            .map(|&(arm, rep)| {
                let name = &spec.arms[arm].name;
                let dir = out
                    .join("runs")
                    .join(&app_id)
                    .join(name)
                    .join(format!("rep_{rep:02}"));
                let cfg = spec.engine_for(arm, app_index, rep);
                run_single(&app_id, &app, name, rep, &cfg, opts, &dir).map(|(_, s)| s)
            })
            .collect::<Result<Vec<_>>>()?;
        let per_arm = |arm: usize, metric: usize| {
            SampleGroup::new(
                spec.arms[arm].name.clone(),
                summaries
                    .iter()
                    .zip(&jobs)
                    .filter(|(_, job)| job.0 == arm)
                    .map(|(s, _)| s.metric_values()[metric])
                    .collect(),
            )
        };
        let names = COMPARISON_METRICS
            .iter()
            .copied()
            .chain([cost_metric_name(spec.wall_time)]);
        for (m, name) in names.enumerate() {
            let result = compare(name, &per_arm(1, m), &per_arm(0, m), spec.p_value)?;
            rows.push(ComparisonRow {
                app: app_id.clone(),
                result,
            });
        }
    }
    write_file(&out.join("comparison.csv"), &comparison_csv(&rows))?;
    Ok(rows)
}

/// Recomputes the snapshot of an archived population file.
pub fn snapshot_from_archive(
    population_text: &str,
    generation: usize,
    app: &AppModel,
    cfg: &EngineConfig,
) -> Result<GenerationSnapshot> {
    let suites = parse_suites(population_text)?;
    let mut pop = Vec::with_capacity(suites.len());
    for suite in suites {
        if suite.len() != cfg.genotype.suite_max {
            return Err(Error::SuiteSizeMismatch {
                left: suite.len(),
                right: cfg.genotype.suite_max,
            });
        }
        let fitness = app.evaluate(&suite)?.fitness;
        pop.push(EvaluatedIndividual { suite, fitness });
    }
    snapshot(
        generation,
        &pop,
        &cfg.genotype,
        &cfg.landscape,
        &cfg.reference(),
    )
}

/// Header and row of [`snapshot_from_archive`] as CSV text.
pub fn snapshot_csv(snap: &GenerationSnapshot) -> String {
    format!("{}\n{}\n", SNAPSHOT_COLUMNS.join(","), snap.csv_row())
}
