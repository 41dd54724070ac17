//! Seeded synthetic app-under-test.
//!
//! An [`AppModel`] is a small activity graph. Dispatching event `e` while in
//! activity `a` executes a fixed set of statements of `a`, may trigger a
//! crash, and may move the app to another activity. Every sequence of a
//! suite starts from the launch activity 0.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::TestSuite;

pub const APP_MODEL_FORMAT_VERSION: u32 = 1;

const TRANSITION_PROB: f64 = 0.5;
const STATEMENT_PROB: f64 = 0.25;

/// Objective triple of a suite: crashes and coverage are maximised, length
/// is minimised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessVector {
    /// Distinct crash ids triggered by the suite.
    pub crashes: u32,
    /// Fraction of all statements executed, in `[0, 1]`.
    pub coverage: f64,
    /// Mean executed sequence length.
    pub length: f64,
}

impl FitnessVector {
    pub fn new(crashes: u32, coverage: f64, length: f64) -> Self {
        Self {
            crashes,
            coverage,
            length,
        }
    }

    /// Pareto dominance under (max crashes, max coverage, min length).
    pub fn dominates(&self, other: &Self) -> bool {
        let no_worse = self.crashes >= other.crashes
            && self.coverage >= other.coverage
            && self.length <= other.length;
        let better = self.crashes > other.crashes
            || self.coverage > other.coverage
            || self.length < other.length;
        no_worse && better
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrashReport {
    pub crash_id: u32,
    /// Number of events executed up to and including the crashing one.
    pub revealing_prefix_length: usize,
    pub suite_index: usize,
    pub sequence_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: FitnessVector,
    pub crashes: Vec<CrashReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppParams {
    pub model_seed: u64,
    pub activity_count: usize,
    pub statements_per_activity: usize,
    pub alphabet_size: usize,
    pub crash_density: f64,
}

impl Default for AppParams {
    fn default() -> Self {
        Self {
            model_seed: 11,
            activity_count: 4,
            statements_per_activity: 20,
            alphabet_size: 10,
            crash_density: 0.05,
        }
    }
}

impl AppParams {
    pub fn validate(&self) -> Result<()> {
        if self.activity_count == 0 || self.statements_per_activity == 0 || self.alphabet_size == 0
        {
            return Err(Error::InvalidConfig(
                "app model counts must all be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crash_density) {
            return Err(Error::InvalidConfig(format!(
                "crash_density must lie in [0, 1], got {}",
                self.crash_density
            )));
        }
        Ok(())
    }
}

/// Synthetic app model. Tables are dense and indexed `[activity][event]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppModel {
    pub format_version: u32,
    pub model_seed: u64,
    pub activity_count: usize,
    pub statements_per_activity: usize,
    pub alphabet_size: usize,
    /// Target activity, or `None` when the event leaves the activity unchanged.
    pub transitions: Vec<Vec<Option<u32>>>,
    pub crashes: Vec<Vec<Option<u32>>>,
    /// Activity-local statement indices executed by each event.
    pub statements: Vec<Vec<Vec<u32>>>,
}

impl AppModel {
    pub fn generate(params: &AppParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.model_seed);
        let (na, ne, ns) = (
            params.activity_count,
            params.alphabet_size,
            params.statements_per_activity,
        );
        let mut transitions = vec![vec![None; ne]; na];
        let mut crashes = vec![vec![None; ne]; na];
        let mut statements = vec![vec![Vec::new(); ne]; na];
        let mut next_crash = 1u32;
        for a in 0..na {
            for e in 0..ne {
                if rng.gen_bool(TRANSITION_PROB) {
                    transitions[a][e] = Some(rng.gen_range(0..na as u32));
                }
                if rng.gen_bool(params.crash_density) {
                    crashes[a][e] = Some(next_crash);
                    next_crash += 1;
                }
                statements[a][e] = (0..ns as u32)
                    .filter(|_| rng.gen_bool(STATEMENT_PROB))
                    .collect();
            }
        }
        Ok(Self {
            format_version: APP_MODEL_FORMAT_VERSION,
            model_seed: params.model_seed,
            activity_count: na,
            statements_per_activity: ns,
            alphabet_size: ne,
            transitions,
            crashes,
            statements,
        })
    }

    /// Checks table shapes, transition targets and crash-id uniqueness.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != APP_MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        let (na, ne, ns) = (
            self.activity_count,
            self.alphabet_size,
            self.statements_per_activity,
        );
        if na == 0 || ne == 0 || ns == 0 {
            return Err(Error::InvalidConfig(
                "app model counts must all be at least 1".into(),
            ));
        }
        let shaped = |rows: usize, cols: &dyn Fn(usize) -> usize| {
            rows == na && (0..na).all(|a| cols(a) == ne)
        };
        if !shaped(self.transitions.len(), &|a| self.transitions[a].len())
            || !shaped(self.crashes.len(), &|a| self.crashes[a].len())
            || !shaped(self.statements.len(), &|a| self.statements[a].len())
        {
            return Err(Error::InvalidConfig(format!(
                "app tables must be {na} activities x {ne} events"
            )));
        }
        if self
            .transitions
            .iter()
            .flatten()
            .flatten()
            .any(|&t| t as usize >= na)
        {
            return Err(Error::InvalidConfig(
                "transition target outside activity range".into(),
            ));
        }
        if self
            .statements
            .iter()
            .flatten()
            .flatten()
            .any(|&s| s as usize >= ns)
        {
            return Err(Error::InvalidConfig(
                "statement index outside activity range".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for &id in self.crashes.iter().flatten().flatten() {
            if id == 0 || !seen.insert(id) {
                return Err(Error::InvalidConfig(format!(
                    "crash ids must be unique positive integers (offending id {id})"
                )));
            }
        }
        Ok(())
    }

    pub fn total_statements(&self) -> usize {
        self.activity_count * self.statements_per_activity
    }

    pub fn crash_ids(&self) -> Vec<u32> {
        self.crashes.iter().flatten().flatten().copied().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Executes every sequence of `suite` from the launch activity.
    ///
    /// A crash stops the crashing sequence only. Coverage is the union over
    /// all sequences; `length` is the mean number of executed events.
    pub fn evaluate(&self, suite: &TestSuite) -> Result<Evaluation> {
        if let Some(e) = suite
            .sequences
            .iter()
            .flat_map(|s| &s.events)
            .find(|e| e.index() >= self.alphabet_size)
        {
            return Err(Error::EventOutOfAlphabet {
                event: e.0,
                alphabet_size: self.alphabet_size,
            });
        }
        let spa = self.statements_per_activity;
        let mut covered = vec![false; self.total_statements()];
        let mut reports = Vec::new();
        let mut executed_total = 0usize;
        for (si, seq) in suite.sequences.iter().enumerate() {
            let mut activity = 0usize;
            let mut executed = seq.len();
            for (j, ev) in seq.events.iter().enumerate() {
                let e = ev.index();
                for &s in &self.statements[activity][e] {
                    covered[activity * spa + s as usize] = true;
                }
                if let Some(crash_id) = self.crashes[activity][e] {
                    reports.push(CrashReport {
                        crash_id,
                        revealing_prefix_length: j + 1,
                        suite_index: 0,
                        sequence_index: si,
                    });
                    executed = j + 1;
                    break;
                }
                if let Some(target) = self.transitions[activity][e] {
                    activity = target as usize;
                }
            }
            executed_total += executed;
        }
        let distinct: BTreeSet<u32> = reports.iter().map(|r| r.crash_id).collect();
        let coverage = covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64;
        let length = if suite.is_empty() {
            0.0
        } else {
            executed_total as f64 / suite.len() as f64
        };
        Ok(Evaluation {
            fitness: FitnessVector::new(distinct.len() as u32, coverage, length),
            crashes: reports,
        })
    }
}
