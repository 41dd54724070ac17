//! Whole-suite variation operators and most-distant subset selection.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{distance_matrix, random_sequence, GenotypeConfig, TestSuite};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationConfig {
    pub crossover_prob: f64,
    pub mutation_prob: f64,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self {
            crossover_prob: 0.7,
            mutation_prob: 0.3,
        }
    }
}

impl VariationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Non-dominated rank and crowding distance of a parent, used by the binary
/// tournament.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionKey {
    pub rank: usize,
    pub crowding: f64,
}

impl SelectionKey {
    /// Crowded-comparison order: lower rank first, then larger crowding.
    pub fn crowded_cmp(&self, other: &Self) -> Ordering {
        self.rank
            .cmp(&other.rank)
            .then_with(|| other.crowding.total_cmp(&self.crowding))
    }
}

fn tournament<R: Rng + ?Sized>(keys: &[SelectionKey], rng: &mut R) -> usize {
    let a = rng.gen_range(0..keys.len());
    let b = rng.gen_range(0..keys.len());
    match keys[a].crowded_cmp(&keys[b]) {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal => {
            if rng.gen_bool(0.5) {
                a
            } else {
                b
            }
        }
    }
}

/// Produces `size_off` offspring from `parents`.
///
/// Parents are paired by binary tournament on `keys`. Each pair is crossed
/// with probability `crossover_prob`, and each child is then mutated with
/// probability `mutation_prob`. Children are clamped to the sequence length
/// bounds of `gcfg`.
pub fn whole_suite_variation<R: Rng + ?Sized>(
    parents: &[TestSuite],
    keys: &[SelectionKey],
    size_off: usize,
    vcfg: &VariationConfig,
    gcfg: &GenotypeConfig,
    rng: &mut R,
) -> Result<Vec<TestSuite>> {
    if parents.is_empty() {
        return Err(Error::Usage("variation needs at least one parent".into()));
    }
    if keys.len() != parents.len() {
        return Err(Error::Usage(format!(
            "{} selection keys for {} parents",
            keys.len(),
            parents.len()
        )));
    }
    let mut offspring = Vec::with_capacity(size_off + 1);
    while offspring.len() < size_off {
        let a = &parents[tournament(keys, rng)];
        let b = &parents[tournament(keys, rng)];
        let (c1, c2) = if rng.gen_bool(vcfg.crossover_prob) {
            crossover(a, b, rng)
        } else {
            (a.clone(), b.clone())
        };
        for child in [c1, c2] {
            let child = if rng.gen_bool(vcfg.mutation_prob) {
                mutate(&child, rng)
            } else {
                child
            };
            offspring.push(clamp_lengths(child, gcfg, rng));
        }
    }
    offspring.truncate(size_off);
    Ok(offspring)
}

/// Truncates sequences longer than `seq_max` and pads shorter than `seq_min`
/// with random events.
fn clamp_lengths<R: Rng + ?Sized>(
    mut t: TestSuite,
    gcfg: &GenotypeConfig,
    rng: &mut R,
) -> TestSuite {
    for seq in &mut t.sequences {
        seq.events.truncate(gcfg.seq_max);
        if seq.len() < gcfg.seq_min {
            let pad = random_sequence(
                &GenotypeConfig {
                    seq_min: gcfg.seq_min - seq.len(),
                    seq_max: gcfg.seq_min - seq.len(),
                    ..*gcfg
                },
                rng,
            );
            seq.events.extend(pad.events);
        }
    }
    t
}

/// Single-point crossover on the sequence list: children swap all sequences
/// from a cut index in `[1, suite_max - 1]` onwards.
pub fn crossover<R: Rng + ?Sized>(
    a: &TestSuite,
    b: &TestSuite,
    rng: &mut R,
) -> (TestSuite, TestSuite) {
    let n = a.len().min(b.len());
    if n < 2 {
        return (a.clone(), b.clone());
    }
    let cut = rng.gen_range(1..n);
    let splice = |head: &TestSuite, tail: &TestSuite| {
        TestSuite::new(
            head.sequences[..cut]
                .iter()
                .chain(&tail.sequences[cut..])
                .cloned()
                .collect(),
        )
    };
    (splice(a, b), splice(b, a))
}

fn two_distinct<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.gen_range(0..n);
    let mut j = rng.gen_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// Shuffle mutation: either swaps two sequences of the suite or swaps two
/// events inside one sequence, each with probability one half.
pub fn mutate<R: Rng + ?Sized>(t: &TestSuite, rng: &mut R) -> TestSuite {
    let mut out = t.clone();
    if rng.gen_bool(0.5) {
        if out.len() >= 2 {
            let (i, j) = two_distinct(out.len(), rng);
            out.sequences.swap(i, j);
        }
    } else if !out.is_empty() {
        let s = rng.gen_range(0..out.len());
        let seq = &mut out.sequences[s];
        if seq.len() >= 2 {
            let (i, j) = two_distinct(seq.len(), rng);
            seq.events.swap(i, j);
        }
    }
    out
}

/// Greedy farthest-point selection of `count` pool members, returned as pool
/// indices in the order they were picked.
///
/// For `count >= 2` the selection starts from the pair at maximum distance and
/// then repeatedly adds the member whose minimum distance to the picked set is
/// largest. For `count == 1` the member with the largest summed distance to
/// the rest is returned. Ties go to the lowest index. `count == 0` yields an
/// empty selection.
pub fn select_most_distant(pool: &[TestSuite], count: usize) -> Result<Vec<usize>> {
    let refs: Vec<&TestSuite> = pool.iter().collect();
    select_most_distant_refs(&refs, count)
}

pub(crate) fn select_most_distant_refs(pool: &[&TestSuite], count: usize) -> Result<Vec<usize>> {
    let n = pool.len();
    if count > n {
        return Err(Error::Usage(format!(
            "cannot select {count} suites from a pool of {n}"
        )));
    }
    if let Some(first) = pool.first() {
        if let Some(bad) = pool.iter().find(|t| t.len() != first.len()) {
            return Err(Error::SuiteSizeMismatch {
                left: first.len(),
                right: bad.len(),
            });
        }
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let dist = distance_matrix(pool);
    Ok(greedy_from_matrix(&dist, n, count))
}

/// Greedy farthest-point selection over a row-major `n * n` distance matrix.
pub(crate) fn greedy_from_matrix(dist: &[usize], n: usize, count: usize) -> Vec<usize> {
    let d = |i: usize, j: usize| dist[i * n + j];
    if count == 0 {
        return Vec::new();
    }
    if count == 1 {
        let best = (0..n)
            .map(|i| (i, (0..n).map(|j| d(i, j)).sum::<usize>()))
            .fold((0, 0), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
        return vec![best.0];
    }

    let mut seed = (0, 1);
    for i in 0..n {
        for j in i + 1..n {
            if d(i, j) > d(seed.0, seed.1) {
                seed = (i, j);
            }
        }
    }
    let mut picked = vec![seed.0, seed.1];
    let mut taken = vec![false; n];
    taken[seed.0] = true;
    taken[seed.1] = true;
    let mut min_to_picked: Vec<usize> = (0..n).map(|i| d(i, seed.0).min(d(i, seed.1))).collect();
    while picked.len() < count {
        let next = (0..n)
            .filter(|&i| !taken[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if min_to_picked[b] >= min_to_picked[i] => Some(b),
                _ => Some(i),
            })
            .expect("pool has unpicked members while count <= pool size");
        taken[next] = true;
        picked.push(next);
        for (i, m) in min_to_picked.iter_mut().enumerate() {
            *m = (*m).min(d(i, next));
        }
    }
    picked
}

/// Replays a selection made by [`select_most_distant`] and checks the greedy
/// invariant: the seed pair is at maximum distance (a lone pick has the
/// largest distance sum), and every member added later had a minimum
/// distance to the already-picked set at least as large as every member left
/// behind.
pub fn verify_greedy_selection(pool: &[TestSuite], picked: &[usize]) -> bool {
    let n = pool.len();
    if picked.len() > n || picked.iter().any(|&i| i >= n) {
        return false;
    }
    let mut unique = picked.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != picked.len() {
        return false;
    }
    if picked.is_empty() {
        return true;
    }
    let refs: Vec<&TestSuite> = pool.iter().collect();
    let dist = distance_matrix(&refs);
    let d = |i: usize, j: usize| dist[i * n + j];
    if picked.len() == 1 {
        let sum = |i: usize| (0..n).map(|j| d(i, j)).sum::<usize>();
        return (0..n).all(|i| sum(i) <= sum(picked[0]));
    }
    let seed = d(picked[0], picked[1]);
    if (0..n).any(|i| (0..n).any(|j| d(i, j) > seed)) {
        return false;
    }
    for step in 2..picked.len() {
        let before = &picked[..step];
        let min_to = |i: usize| before.iter().map(|&p| d(i, p)).min().unwrap_or(0);
        let chosen = min_to(picked[step]);
        let beaten = (0..n)
            .filter(|i| !picked[..=step].contains(i))
            .any(|i| min_to(i) > chosen);
        if beaten {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::{random_suite, suite_distance, Event};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gcfg() -> GenotypeConfig {
        GenotypeConfig {
            suite_max: 5,
            seq_min: 20,
            seq_max: 60,
            alphabet_size: 10,
        }
    }

    fn keys(n: usize) -> Vec<SelectionKey> {
        vec![
            SelectionKey {
                rank: 0,
                crowding: 1.0
            };
            n
        ]
    }

    fn event_multiset(suites: &[&TestSuite]) -> Vec<Event> {
        let mut v: Vec<Event> = suites
            .iter()
            .flat_map(|t| t.sequences.iter().flat_map(|s| s.events.iter().copied()))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn no_variation_copies_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let parents: Vec<_> = (0..4).map(|_| random_suite(&gcfg(), &mut rng)).collect();
        let vcfg = VariationConfig {
            crossover_prob: 0.0,
            mutation_prob: 0.0,
        };
        let off = whole_suite_variation(&parents, &keys(4), 7, &vcfg, &gcfg(), &mut rng).unwrap();
        assert_eq!(off.len(), 7);
        assert!(off.iter().all(|o| parents.contains(o)));
    }

    #[test]
    fn crossover_of_identical_parents_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_suite(&gcfg(), &mut rng);
        let parents = vec![p.clone(), p.clone()];
        let vcfg = VariationConfig {
            crossover_prob: 1.0,
            mutation_prob: 0.0,
        };
        let off = whole_suite_variation(&parents, &keys(2), 6, &vcfg, &gcfg(), &mut rng).unwrap();
        assert!(off.iter().all(|o| *o == p));
    }

    #[test]
    fn empty_parents_is_usage_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = whole_suite_variation(&[], &[], 2, &VariationConfig::default(), &gcfg(), &mut rng);
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn variation_is_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let parents: Vec<_> = (0..10).map(|_| random_suite(&gcfg(), &mut rng)).collect();
            let k: Vec<_> = (0..10)
                .map(|i| SelectionKey {
                    rank: i % 3,
                    crowding: i as f64,
                })
                .collect();
            let off = whole_suite_variation(
                &parents,
                &k,
                10,
                &VariationConfig::default(),
                &gcfg(),
                &mut rng,
            )
            .unwrap();
            crate::genotype::write_suites(&off).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn clamping_pads_and_truncates() {
        let cfg = GenotypeConfig {
            suite_max: 2,
            seq_min: 3,
            seq_max: 4,
            alphabet_size: 5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = TestSuite::from_ids(&[&[1], &[1, 2, 3, 4, 0, 0]]);
        let c = clamp_lengths(t, &cfg, &mut rng);
        assert_eq!(c.sequences[0].len(), 3);
        assert_eq!(c.sequences[0].events[0], Event(1));
        assert_eq!(
            c.sequences[1],
            crate::genotype::TestSequence::from_ids(&[1, 2, 3, 4])
        );
    }

    #[test]
    fn crossover_cut_swaps_tails() {
        let a = TestSuite::from_ids(&[&[1], &[2], &[3]]);
        let b = TestSuite::from_ids(&[&[7], &[8], &[9]]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (c1, c2) = crossover(&a, &b, &mut rng);
            let cut = (1..3)
                .find(|&c| c1.sequences[c] == b.sequences[c])
                .expect("child takes a tail from b");
            assert_eq!(c1.sequences[..cut], a.sequences[..cut]);
            assert_eq!(c1.sequences[cut..], b.sequences[cut..]);
            assert_eq!(c2.sequences[..cut], b.sequences[..cut]);
            assert_eq!(c2.sequences[cut..], a.sequences[cut..]);
        }
    }

    #[test]
    fn crossover_single_sequence_copies() {
        let a = TestSuite::from_ids(&[&[1, 2]]);
        let b = TestSuite::from_ids(&[&[3]]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(crossover(&a, &b, &mut rng), (a, b));
    }

    #[test]
    fn mutation_of_singleton_is_noop() {
        let t = TestSuite::from_ids(&[&[4]]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            assert_eq!(mutate(&t, &mut rng), t);
        }
    }

    #[test]
    fn mutation_preserves_event_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = random_suite(&gcfg(), &mut rng);
        let mut lengths: Vec<usize> = t.sequences.iter().map(|s| s.len()).collect();
        lengths.sort();
        for _ in 0..200 {
            let m = mutate(&t, &mut rng);
            assert_eq!(event_multiset(&[&m]), event_multiset(&[&t]));
            let mut ml: Vec<usize> = m.sequences.iter().map(|s| s.len()).collect();
            ml.sort();
            assert_eq!(ml, lengths);
        }
    }

    #[test]
    fn repeated_mutation_moves_away() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = random_suite(&GenotypeConfig::default(), &mut rng);
        let mut cur = t.clone();
        for _ in 0..1000 {
            cur = mutate(&cur, &mut rng);
        }
        assert!(suite_distance(&t, &cur).unwrap() > 0);
    }

    #[test]
    fn most_distant_pair_from_three() {
        // d(A,B)=10, d(A,C)=2, d(B,C)=2
        let dist = [0, 10, 2, 10, 0, 2, 2, 2, 0];
        let mut sel = greedy_from_matrix(&dist, 3, 2);
        sel.sort();
        assert_eq!(sel, vec![0, 1]);

        let a = TestSuite::from_ids(&[&[0], &[0]]);
        let b = TestSuite::from_ids(&[&[0; 6], &[0; 6]]);
        let c = TestSuite::from_ids(&[&[0; 2], &[0; 5]]);
        let mut sel = select_most_distant(&[c, a, b], 2).unwrap();
        sel.sort();
        assert_eq!(sel, vec![1, 2]);
    }

    #[test]
    fn select_all_and_one_and_too_many() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pool: Vec<_> = (0..6).map(|_| random_suite(&gcfg(), &mut rng)).collect();
        let mut all = select_most_distant(&pool, 6).unwrap();
        all.sort();
        assert_eq!(all, (0..6).collect::<Vec<_>>());

        let one = select_most_distant(&pool, 1).unwrap();
        let sums: Vec<usize> = (0..6)
            .map(|i| {
                (0..6)
                    .map(|j| suite_distance(&pool[i], &pool[j]).unwrap())
                    .sum()
            })
            .collect();
        let max = *sums.iter().max().unwrap();
        assert_eq!(one[0], sums.iter().position(|&s| s == max).unwrap());

        assert!(matches!(
            select_most_distant(&pool, 7),
            Err(Error::Usage(_))
        ));
        assert!(select_most_distant(&pool, 0).unwrap().is_empty());
    }

    #[test]
    fn greedy_replay_accepts_selection_and_rejects_bad_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let pool: Vec<_> = (0..12).map(|_| random_suite(&gcfg(), &mut rng)).collect();
        let sel = select_most_distant(&pool, 8).unwrap();
        assert!(verify_greedy_selection(&pool, &sel));

        // Three clustered points and one far away: picking a clustered point
        // third breaks the invariant.
        let near = |x: u32| TestSuite::from_ids(&[&[x, 0, 0, 0]]);
        let pool = vec![
            near(1),
            TestSuite::from_ids(&[&[9, 9, 9, 9]]),
            near(2),
            TestSuite::from_ids(&[&[5, 5, 5, 0]]),
        ];
        let good = select_most_distant(&pool, 3).unwrap();
        assert!(verify_greedy_selection(&pool, &good));
        let bad = vec![
            good[0],
            good[1],
            (0..4).find(|i| !good.contains(i)).unwrap(),
        ];
        assert!(!verify_greedy_selection(&pool, &bad));
    }
}
