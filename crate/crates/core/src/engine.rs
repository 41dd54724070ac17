//! Evolutionary engine: NSGA-II over test suites, optionally extended with
//! four diversity mechanisms (diverse initialisation, adaptive diversity
//! control, duplicate elimination, hybrid selection).
//!
//! With every mechanism switched off the engine is plain NSGA-II: binary
//! tournament variation followed by crowded truncation of parents plus
//! offspring.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{random_suite, GenotypeConfig, TestSuite};
use crate::landscape::{
    diameters, hypervolume, nadir, snapshot, EvaluatedIndividual, GenerationSnapshot,
    LandscapeConfig,
};
use crate::sut::{AppModel, CrashReport, FitnessVector};
use crate::variation::{
    select_most_distant, select_most_distant_refs, whole_suite_variation, SelectionKey,
    VariationConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Mechanisms {
    pub diverse_init: bool,
    pub adaptive_control: bool,
    pub duplicate_elim: bool,
    pub hybrid_selection: bool,
}

impl Mechanisms {
    pub const NAMES: [&'static str; 4] = [
        "diverse-init",
        "adaptive-control",
        "duplicate-elim",
        "hybrid-selection",
    ];

    pub fn all() -> Self {
        Self {
            diverse_init: true,
            adaptive_control: true,
            duplicate_elim: true,
            hybrid_selection: true,
        }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn any(&self) -> bool {
        self.diverse_init || self.adaptive_control || self.duplicate_elim || self.hybrid_selection
    }
}

impl FromStr for Mechanisms {
    type Err = Error;

    /// Accepts `all`, `none`, or a comma-separated list of mechanism names.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => return Ok(Self::all()),
            "none" | "" => return Ok(Self::none()),
            _ => {}
        }
        let mut m = Self::none();
        for name in s.split(',').map(str::trim) {
            match name {
                "diverse-init" => m.diverse_init = true,
                "adaptive-control" => m.adaptive_control = true,
                "duplicate-elim" => m.duplicate_elim = true,
                "hybrid-selection" => m.hybrid_selection = true,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown mechanism {other:?}; expected all, none or a list of {}",
                        Self::NAMES.join(", ")
                    )))
                }
            }
        }
        Ok(m)
    }
}

impl fmt::Display for Mechanisms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::all() {
            return f.write_str("all");
        }
        if !self.any() {
            return f.write_str("none");
        }
        let flags = [
            self.diverse_init,
            self.adaptive_control,
            self.duplicate_elim,
            self.hybrid_selection,
        ];
        let names: Vec<&str> = Self::NAMES
            .iter()
            .zip(flags)
            .filter(|(_, on)| *on)
            .map(|(n, _)| *n)
            .collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub genotype: GenotypeConfig,
    pub variation: VariationConfig,
    pub landscape: LandscapeConfig,
    pub size_pop: usize,
    pub size_off: usize,
    pub g_max: usize,
    pub size_init: usize,
    pub div_limit: f64,
    pub n_div: usize,
    pub mechanisms: Mechanisms,
    pub rng_seed: u64,
    /// Keep a [`StepTrace`] per generation (memory heavy; for verification).
    #[serde(default)]
    pub trace: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            genotype: GenotypeConfig::default(),
            variation: VariationConfig::default(),
            landscape: LandscapeConfig::default(),
            size_pop: 50,
            size_off: 50,
            g_max: 40,
            size_init: 100,
            div_limit: 0.5,
            n_div: 15,
            mechanisms: Mechanisms::none(),
            rng_seed: 0,
            trace: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.genotype.validate()?;
        self.variation.validate()?;
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.size_pop < 2 {
            return fail(format!(
                "size_pop must be at least 2, got {}",
                self.size_pop
            ));
        }
        if self.size_off == 0 {
            return fail("size_off must be at least 1".into());
        }
        if self.size_init < self.size_pop {
            return fail(format!(
                "size_init ({}) must be at least size_pop ({})",
                self.size_init, self.size_pop
            ));
        }
        if !(0.0..=1.0).contains(&self.div_limit) {
            return fail(format!(
                "div_limit must lie in [0, 1], got {}",
                self.div_limit
            ));
        }
        if self.n_div >= self.size_pop {
            return fail(format!(
                "n_div ({}) must be below size_pop ({})",
                self.n_div, self.size_pop
            ));
        }
        Ok(())
    }

    /// Hypervolume reference point: no crashes, no coverage, longest sequence.
    pub fn reference(&self) -> FitnessVector {
        nadir(self.genotype.seq_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Generation 0, right after initialisation.
    Initial,
    /// Variation followed by non-dominated selection.
    Variation,
    /// Diversity fell to the limit: fresh suites plus most-distant selection.
    Restart,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Initial => "initial",
            Branch::Variation => "variation",
            Branch::Restart => "restart",
        })
    }
}

/// Per-generation record of which branch ran and how the next population
/// was composed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTelemetry {
    pub generation: usize,
    pub branch: Branch,
    /// Average diameter of the population the generation started from.
    pub div_pop: f64,
    /// `div_limit * div_init`.
    pub div_threshold: f64,
    pub pool_size: usize,
    pub duplicates_removed: usize,
    pub refilled: usize,
    pub best_slice: usize,
    pub diverse: usize,
    /// Diverse picks that were already in the best slice.
    pub overlap: usize,
    pub archive_hv: f64,
    pub archive_size: usize,
}

/// Full selection record of one generation, kept when tracing is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub generation: usize,
    pub branch: Branch,
    /// Candidate pool the next population was drawn from (after duplicate
    /// elimination and refill, when those apply).
    pub pool: Vec<EvaluatedIndividual>,
    /// Crowded-comparison order `P'` over pool indices (variation branch).
    pub crowded_order: Vec<usize>,
    /// Pool indices chosen by most-distant selection, in pick order.
    pub distant: Vec<usize>,
    /// Pool indices of the next population, in order.
    pub next: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub population: Vec<EvaluatedIndividual>,
    /// Every non-dominated fitness seen so far, one suite per fitness value.
    pub archive: Vec<EvaluatedIndividual>,
    pub crash_log: Vec<CrashReport>,
    pub div_init: f64,
    pub snapshots: Vec<GenerationSnapshot>,
    pub telemetry: Vec<StepTelemetry>,
    pub traces: Vec<StepTrace>,
    pub generation: usize,
    pub evaluations: usize,
    rng: ChaCha8Rng,
}

impl RunState {
    pub fn archive_hypervolume(&self, cfg: &EngineConfig) -> f64 {
        let fit: Vec<FitnessVector> = self.archive.iter().map(|a| a.fitness).collect();
        hypervolume(&fit, &cfg.reference()).expect("archive fitness lies inside the reference box")
    }

    fn evaluate_batch(
        &mut self,
        suites: Vec<TestSuite>,
        app: &AppModel,
    ) -> Result<Vec<EvaluatedIndividual>> {
        let evals = suites
            .par_iter()
            .map(|s| app.evaluate(s))
            .collect::<Result<Vec<_>>>()?;
        let base = self.evaluations;
        self.evaluations += suites.len();
        let mut out = Vec::with_capacity(suites.len());
        for (i, (suite, ev)) in suites.into_iter().zip(evals).enumerate() {
            self.crash_log
                .extend(ev.crashes.into_iter().map(|c| CrashReport {
                    suite_index: base + i,
                    ..c
                }));
            let ind = EvaluatedIndividual {
                suite,
                fitness: ev.fitness,
            };
            self.offer_to_archive(&ind);
            out.push(ind);
        }
        Ok(out)
    }

    fn offer_to_archive(&mut self, ind: &EvaluatedIndividual) {
        let f = ind.fitness;
        if self
            .archive
            .iter()
            .any(|a| a.fitness.dominates(&f) || a.fitness == f)
        {
            return;
        }
        self.archive.retain(|a| !f.dominates(&a.fitness));
        self.archive.push(ind.clone());
    }
}

/// Fast non-dominated sorting. Front 0 is the Pareto front of `fitness`;
/// each front lists indices in ascending order.
pub fn non_dominated_sort(fitness: &[FitnessVector]) -> Vec<Vec<usize>> {
    let n = fitness.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if fitness[i].dominates(&fitness[j]) {
                dominates[i].push(j);
                dominated_by_count[j] += 1;
            } else if fitness[j].dominates(&fitness[i]) {
                dominates[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

fn objectives(f: &FitnessVector) -> [f64; 3] {
    [f.crashes as f64, f.coverage, f.length]
}

/// Crowding distance of each member of `front` (indices into `fitness`),
/// returned in the same order as `front`.
///
/// Fronts of at most two members are all boundary (infinite). Otherwise,
/// per objective with a non-zero range, members at the minimum or maximum
/// value are boundary and every other member adds the gap between the
/// nearest values of other members below and above it, normalised by the
/// range. An interior member tied with another adds nothing for that
/// objective, so the result does not depend on member order.
pub fn crowding_distance(fitness: &[FitnessVector], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    let mut dist = vec![0.0; m];
    for obj in 0..3 {
        let vals: Vec<f64> = front
            .iter()
            .map(|&i| objectives(&fitness[i])[obj])
            .collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let lo = vals[order[0]];
        let hi = vals[order[m - 1]];
        let range = hi - lo;
        if range == 0.0 {
            continue;
        }
        for pos in 0..m {
            let member = order[pos];
            let v = vals[member];
            if v == lo || v == hi {
                dist[member] = f64::INFINITY;
                continue;
            }
            let prev = vals[order[pos - 1]];
            let next = vals[order[pos + 1]];
            if prev == v || next == v {
                // Nearest other value on both sides is the tie itself.
                continue;
            }
            dist[member] += (next - prev) / range;
        }
    }
    dist
}

/// Rank and crowding of every member, for the variation tournament.
pub fn selection_keys(fitness: &[FitnessVector]) -> Vec<SelectionKey> {
    let mut keys = vec![
        SelectionKey {
            rank: 0,
            crowding: 0.0
        };
        fitness.len()
    ];
    for (rank, front) in non_dominated_sort(fitness).iter().enumerate() {
        for (&i, c) in front.iter().zip(crowding_distance(fitness, front)) {
            keys[i] = SelectionKey { rank, crowding: c };
        }
    }
    keys
}

/// Whole fronts are appended to `P'` until it holds at least `target`
/// members, then `P'` is sorted by rank and descending crowding (pool index
/// breaks remaining ties).
pub fn crowded_order(fitness: &[FitnessVector], target: usize) -> Vec<usize> {
    let mut keyed: Vec<(usize, SelectionKey)> = Vec::new();
    for (rank, front) in non_dominated_sort(fitness).iter().enumerate() {
        if keyed.len() >= target {
            break;
        }
        for (&i, c) in front.iter().zip(crowding_distance(fitness, front)) {
            keyed.push((i, SelectionKey { rank, crowding: c }));
        }
    }
    keyed.sort_by(|a, b| a.1.crowded_cmp(&b.1).then(a.0.cmp(&b.0)));
    keyed.into_iter().map(|(i, _)| i).collect()
}

fn avgdiam(pop: &[EvaluatedIndividual]) -> f64 {
    let suites: Vec<&TestSuite> = pop.iter().map(|p| &p.suite).collect();
    diameters(&suites)
        .expect("population holds at least two uniform suites")
        .avg
}

fn random_suites(cfg: &EngineConfig, count: usize, rng: &mut ChaCha8Rng) -> Vec<TestSuite> {
    (0..count)
        .map(|_| random_suite(&cfg.genotype, rng))
        .collect()
}

fn check_app(cfg: &EngineConfig, app: &AppModel) -> Result<()> {
    if cfg.genotype.alphabet_size > app.alphabet_size {
        return Err(Error::InvalidConfig(format!(
            "genotype alphabet ({}) exceeds the app alphabet ({})",
            cfg.genotype.alphabet_size, app.alphabet_size
        )));
    }
    Ok(())
}

fn record_generation(
    state: &mut RunState,
    cfg: &EngineConfig,
    mut telemetry: StepTelemetry,
) -> Result<()> {
    let snap = snapshot(
        state.generation,
        &state.population,
        &cfg.genotype,
        &cfg.landscape,
        &cfg.reference(),
    )?;
    telemetry.archive_hv = state.archive_hypervolume(cfg);
    telemetry.archive_size = state.archive.len();
    state.snapshots.push(snap);
    state.telemetry.push(telemetry);
    Ok(())
}

pub fn initialize(cfg: &EngineConfig, app: &AppModel) -> Result<RunState> {
    cfg.validate()?;
    check_app(cfg, app)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut trace = None;
    let suites = if cfg.mechanisms.diverse_init {
        let pool = random_suites(cfg, cfg.size_init, &mut rng);
        let picked = select_most_distant(&pool, cfg.size_pop)?;
        let chosen: Vec<TestSuite> = picked.iter().map(|&i| pool[i].clone()).collect();
        if cfg.trace {
            trace = Some((pool, picked));
        }
        chosen
    } else {
        random_suites(cfg, cfg.size_pop, &mut rng)
    };

    let mut state = RunState {
        population: Vec::new(),
        archive: Vec::new(),
        crash_log: Vec::new(),
        div_init: 0.0,
        snapshots: Vec::new(),
        telemetry: Vec::new(),
        traces: Vec::new(),
        generation: 0,
        evaluations: 0,
        rng,
    };
    state.population = state.evaluate_batch(suites, app)?;
    state.div_init = avgdiam(&state.population);

    if cfg.trace {
        // Initial pool members were not evaluated; only the genotypes matter
        // for replaying the most-distant selection.
        let (pool, picked) = trace.unwrap_or_else(|| {
            let pool: Vec<TestSuite> = state.population.iter().map(|p| p.suite.clone()).collect();
            let next = (0..pool.len()).collect();
            (pool, next)
        });
        let distant = if cfg.mechanisms.diverse_init {
            picked.clone()
        } else {
            Vec::new()
        };
        state.traces.push(StepTrace {
            generation: 0,
            branch: Branch::Initial,
            pool: pool
                .into_iter()
                .map(|suite| EvaluatedIndividual {
                    suite,
                    fitness: FitnessVector::new(0, 0.0, 0.0),
                })
                .collect(),
            crowded_order: Vec::new(),
            distant,
            next: picked,
        });
    }

    let telemetry = StepTelemetry {
        generation: 0,
        branch: Branch::Initial,
        div_pop: state.div_init,
        div_threshold: cfg.div_limit * state.div_init,
        pool_size: if cfg.mechanisms.diverse_init {
            cfg.size_init
        } else {
            cfg.size_pop
        },
        duplicates_removed: 0,
        refilled: 0,
        best_slice: 0,
        diverse: if cfg.mechanisms.diverse_init {
            cfg.size_pop
        } else {
            0
        },
        overlap: 0,
        archive_hv: 0.0,
        archive_size: 0,
    };
    record_generation(&mut state, cfg, telemetry)?;
    Ok(state)
}

/// Removes later copies of identical suites (distance 0), keeping the first
/// occurrence. Returns the number removed.
fn remove_duplicates(pool: &mut Vec<EvaluatedIndividual>) -> usize {
    let before = pool.len();
    let mut seen: HashSet<TestSuite> = HashSet::with_capacity(before);
    pool.retain(|ind| seen.insert(ind.suite.clone()));
    before - pool.len()
}

/// Runs one generation and appends its snapshot and telemetry.
pub fn step(state: &mut RunState, cfg: &EngineConfig, app: &AppModel) -> Result<()> {
    if state.generation >= cfg.g_max {
        return Err(Error::Usage(format!(
            "generation {} already reached g_max {}",
            state.generation, cfg.g_max
        )));
    }
    state.generation += 1;
    let div_pop = avgdiam(&state.population);
    let div_threshold = cfg.div_limit * state.div_init;
    let mut telemetry = StepTelemetry {
        generation: state.generation,
        branch: Branch::Variation,
        div_pop,
        div_threshold,
        pool_size: 0,
        duplicates_removed: 0,
        refilled: 0,
        best_slice: 0,
        diverse: 0,
        overlap: 0,
        archive_hv: 0.0,
        archive_size: 0,
    };

    let population = std::mem::take(&mut state.population);
    let (pool, crowded, distant, next) = if cfg.mechanisms.adaptive_control
        && div_pop <= div_threshold
    {
        telemetry.branch = Branch::Restart;
        let fresh = random_suites(cfg, cfg.size_off, &mut state.rng);
        let offspring = state.evaluate_batch(fresh, app)?;
        let pool: Vec<EvaluatedIndividual> = population.into_iter().chain(offspring).collect();
        let refs: Vec<&TestSuite> = pool.iter().map(|p| &p.suite).collect();
        let picked = select_most_distant_refs(&refs, cfg.size_pop)?;
        telemetry.pool_size = pool.len();
        telemetry.diverse = picked.len();
        (pool, Vec::new(), picked.clone(), picked)
    } else {
        let fitness: Vec<FitnessVector> = population.iter().map(|p| p.fitness).collect();
        let keys = selection_keys(&fitness);
        let parents: Vec<TestSuite> = population.iter().map(|p| p.suite.clone()).collect();
        let children = whole_suite_variation(
            &parents,
            &keys,
            cfg.size_off,
            &cfg.variation,
            &cfg.genotype,
            &mut state.rng,
        )?;
        let offspring = state.evaluate_batch(children, app)?;
        let mut pool: Vec<EvaluatedIndividual> = population.into_iter().chain(offspring).collect();

        if cfg.mechanisms.duplicate_elim {
            telemetry.duplicates_removed = remove_duplicates(&mut pool);
            let mut present: HashSet<TestSuite> = pool.iter().map(|p| p.suite.clone()).collect();
            while pool.len() < cfg.size_pop {
                let need = cfg.size_pop - pool.len();
                let fresh: Vec<TestSuite> = random_suites(cfg, need, &mut state.rng)
                    .into_iter()
                    .filter(|s| present.insert(s.clone()))
                    .collect();
                telemetry.refilled += fresh.len();
                pool.extend(state.evaluate_batch(fresh, app)?);
            }
        }
        telemetry.pool_size = pool.len();

        let fitness: Vec<FitnessVector> = pool.iter().map(|p| p.fitness).collect();
        let order = crowded_order(&fitness, cfg.size_pop);
        let (next, distant) = if cfg.mechanisms.hybrid_selection {
            let best_len = cfg.size_pop - cfg.n_div;
            let mut next: Vec<usize> = order[..best_len].to_vec();
            let refs: Vec<&TestSuite> = pool.iter().map(|p| &p.suite).collect();
            let distant = select_most_distant_refs(&refs, cfg.n_div)?;
            let mut taken: HashSet<usize> = next.iter().copied().collect();
            for &d in &distant {
                if taken.insert(d) {
                    next.push(d);
                } else {
                    telemetry.overlap += 1;
                }
            }
            for &i in &order[best_len..] {
                if next.len() == cfg.size_pop {
                    break;
                }
                if taken.insert(i) {
                    next.push(i);
                }
            }
            telemetry.best_slice = best_len;
            telemetry.diverse = distant.len();
            (next, distant)
        } else {
            telemetry.best_slice = cfg.size_pop;
            (order[..cfg.size_pop].to_vec(), Vec::new())
        };
        (pool, order, distant, next)
    };

    state.population = next.iter().map(|&i| pool[i].clone()).collect();
    debug_assert_eq!(state.population.len(), cfg.size_pop);
    if cfg.trace {
        state.traces.push(StepTrace {
            generation: state.generation,
            branch: telemetry.branch,
            pool,
            crowded_order: crowded,
            distant,
            next,
        });
    }
    record_generation(state, cfg, telemetry)
}

/// Initialises and steps until `g_max`, yielding `g_max + 1` snapshots.
pub fn run(cfg: &EngineConfig, app: &AppModel) -> Result<RunState> {
    let mut state = initialize(cfg, app)?;
    while state.generation < cfg.g_max {
        step(&mut state, cfg, app)?;
    }
    Ok(state)
}
