//! Search-space representation: test suites made of event sequences, the
//! genotypic distance between suites, and random suite construction.
//!
//! A suite always holds exactly `suite_max` sequences, so two suites built
//! from the same [`GenotypeConfig`] can be compared sequence by sequence.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque GUI-level event token, an index into the app's event alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event(pub u32);

impl Event {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TestSequence {
    pub events: Vec<Event>,
}

impl TestSequence {
    pub fn new(events: Vec<Event>) -> Self {
        Self { events }
    }

    pub fn from_ids(ids: &[u32]) -> Self {
        Self::new(ids.iter().copied().map(Event).collect())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// An individual of the search: an ordered, fixed-size list of sequences.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestSuite {
    pub sequences: Vec<TestSequence>,
}

impl TestSuite {
    pub fn new(sequences: Vec<TestSequence>) -> Self {
        Self { sequences }
    }

    pub fn from_ids(seqs: &[&[u32]]) -> Self {
        Self::new(seqs.iter().map(|s| TestSequence::from_ids(s)).collect())
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_events(&self) -> usize {
        self.sequences.iter().map(TestSequence::len).sum()
    }

    /// Checks every construction-time invariant against `cfg`.
    pub fn check_conforms(&self, cfg: &GenotypeConfig) -> Result<()> {
        if self.len() != cfg.suite_max {
            return Err(Error::SuiteSizeMismatch {
                left: self.len(),
                right: cfg.suite_max,
            });
        }
        for (i, seq) in self.sequences.iter().enumerate() {
            if seq.len() < cfg.seq_min || seq.len() > cfg.seq_max {
                return Err(Error::Usage(format!(
                    "sequence {i} has length {} outside [{}, {}]",
                    seq.len(),
                    cfg.seq_min,
                    cfg.seq_max
                )));
            }
            if let Some(e) = seq.events.iter().find(|e| e.index() >= cfg.alphabet_size) {
                return Err(Error::EventOutOfAlphabet {
                    event: e.0,
                    alphabet_size: cfg.alphabet_size,
                });
            }
        }
        Ok(())
    }

    pub fn conforms(&self, cfg: &GenotypeConfig) -> bool {
        self.check_conforms(cfg).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenotypeConfig {
    pub suite_max: usize,
    pub seq_min: usize,
    pub seq_max: usize,
    pub alphabet_size: usize,
}

impl Default for GenotypeConfig {
    fn default() -> Self {
        Self {
            suite_max: 5,
            seq_min: 20,
            seq_max: 500,
            alphabet_size: 10,
        }
    }
}

impl GenotypeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.suite_max == 0 {
            return Err(Error::InvalidConfig("suite_max must be at least 1".into()));
        }
        if self.seq_min == 0 || self.seq_min > self.seq_max {
            return Err(Error::InvalidConfig(format!(
                "sequence bounds must satisfy 0 < seq_min <= seq_max (got {} and {})",
                self.seq_min, self.seq_max
            )));
        }
        if self.alphabet_size == 0 {
            return Err(Error::InvalidConfig(
                "alphabet_size must be at least 1".into(),
            ));
        }
        if u32::try_from(self.alphabet_size).is_err() {
            return Err(Error::InvalidConfig(
                "alphabet_size exceeds u32 range".into(),
            ));
        }
        Ok(())
    }
}

/// Genotypic distance between two suites.
///
/// Sequences are paired by index. Each pair contributes the absolute length
/// difference plus one for every index `j` below the shorter length where the
/// events differ.
pub fn suite_distance(a: &TestSuite, b: &TestSuite) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::SuiteSizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(aligned_distance(a, b))
}

/// Distance for suites already known to have the same number of sequences.
pub(crate) fn aligned_distance(a: &TestSuite, b: &TestSuite) -> usize {
    debug_assert_eq!(a.len(), b.len());
    a.sequences
        .iter()
        .zip(&b.sequences)
        .map(|(s, t)| sequence_distance(s, t))
        .sum()
}

fn sequence_distance(s: &TestSequence, t: &TestSequence) -> usize {
    let length_gap = s.len().abs_diff(t.len());
    let mismatches = s
        .events
        .iter()
        .zip(&t.events)
        .filter(|(x, y)| x != y)
        .count();
    length_gap + mismatches
}

/// Full symmetric distance matrix, row-major `n * n`.
pub fn distance_matrix(suites: &[&TestSuite]) -> Vec<usize> {
    use rayon::prelude::*;

    let n = suites.len();
    let upper: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| aligned_distance(suites[i], suites[j]))
                .collect()
        })
        .collect();
    let mut m = vec![0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (off, d) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            m[i * n + j] = d;
            m[j * n + i] = d;
        }
    }
    m
}

/// Largest distance two conforming suites can have: every sequence differs in
/// every event position up to `seq_max`.
pub fn max_possible_distance(cfg: &GenotypeConfig) -> usize {
    cfg.suite_max * cfg.seq_max
}

pub fn random_sequence<R: Rng + ?Sized>(cfg: &GenotypeConfig, rng: &mut R) -> TestSequence {
    let len = rng.gen_range(cfg.seq_min..=cfg.seq_max);
    let alphabet = cfg.alphabet_size as u32;
    TestSequence::new(
        (0..len)
            .map(|_| Event(rng.gen_range(0..alphabet)))
            .collect(),
    )
}

pub fn random_suite<R: Rng + ?Sized>(cfg: &GenotypeConfig, rng: &mut R) -> TestSuite {
    TestSuite::new(
        (0..cfg.suite_max)
            .map(|_| random_sequence(cfg, rng))
            .collect(),
    )
}

/// Renders suites in the line-oriented archive form: one sequence per line
/// with space-separated event ids, suites separated by one blank line.
///
/// Empty sequences have no representation in this format and are rejected.
pub fn write_suites(suites: &[TestSuite]) -> Result<String> {
    let mut out = String::new();
    for (s, suite) in suites.iter().enumerate() {
        if s > 0 {
            out.push('\n');
        }
        for (i, seq) in suite.sequences.iter().enumerate() {
            if seq.is_empty() {
                return Err(Error::Usage(format!(
                    "suite {s} sequence {i} is empty and cannot be archived"
                )));
            }
            for (j, e) in seq.events.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                write!(out, "{}", e.0).expect("writing to String");
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn parse_suites(text: &str) -> Result<Vec<TestSuite>> {
    let mut suites = Vec::new();
    let mut current: Vec<TestSequence> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            if !current.is_empty() {
                suites.push(TestSuite::new(std::mem::take(&mut current)));
            }
            continue;
        }
        let events = line
            .split_ascii_whitespace()
            .map(|tok| {
                tok.parse::<u32>().map(Event).map_err(|e| Error::Parse {
                    line: lineno + 1,
                    message: format!("bad event id {tok:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        current.push(TestSequence::new(events));
    }
    if !current.is_empty() {
        suites.push(TestSuite::new(current));
    }
    Ok(suites)
}
