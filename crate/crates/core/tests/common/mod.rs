//! Independent reference implementations used as test oracles. None of
//! these call into the library beyond its plain data types.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};

use divsearch::genotype::TestSuite;
use divsearch::sut::{AppModel, FitnessVector};
use rand::Rng;

/// Distance as Hamming distance after padding every sequence pair to equal
/// length with a symbol outside the alphabet.
pub fn padded_hamming(a: &TestSuite, b: &TestSuite) -> usize {
    assert_eq!(a.len(), b.len());
    let mut total = 0;
    for (x, y) in a.sequences.iter().zip(&b.sequences) {
        let len = x.len().max(y.len());
        for i in 0..len {
            let ex = x.events.get(i).map(|e| e.0 as i64).unwrap_or(-1);
            let ey = y.events.get(i).map(|e| e.0 as i64).unwrap_or(-1);
            if ex != ey {
                total += 1;
            }
        }
    }
    total
}

/// Distance by its literal per-sequence definition: length difference plus
/// mismatches over the shared prefix.
pub fn literal_distance(a: &TestSuite, b: &TestSuite) -> usize {
    let mut d = 0;
    for i in 0..a.len() {
        let (x, y) = (&a.sequences[i].events, &b.sequences[i].events);
        let common = x.len().min(y.len());
        d += x.len().abs_diff(y.len());
        let mut j = 0;
        while j < common {
            if x[j] != y[j] {
                d += 1;
            }
            j += 1;
        }
    }
    d
}

pub fn random_small_suite<R: Rng>(
    rng: &mut R,
    seqs: usize,
    max_len: usize,
    alphabet: u32,
) -> TestSuite {
    let ids: Vec<Vec<u32>> = (0..seqs)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len).map(|_| rng.gen_range(0..alphabet)).collect()
        })
        .collect();
    let refs: Vec<&[u32]> = ids.iter().map(Vec::as_slice).collect();
    TestSuite::from_ids(&refs)
}

pub fn dominates(a: &FitnessVector, b: &FitnessVector) -> bool {
    let ge = [
        a.crashes >= b.crashes,
        a.coverage >= b.coverage,
        a.length <= b.length,
    ];
    let gt = [
        a.crashes > b.crashes,
        a.coverage > b.coverage,
        a.length < b.length,
    ];
    ge.iter().all(|&x| x) && gt.iter().any(|&x| x)
}

/// Fronts by repeated peeling of the non-dominated remainder.
pub fn peel_fronts(f: &[FitnessVector]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..f.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dominates(&f[j], &f[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

pub fn pareto_indices(f: &[FitnessVector]) -> Vec<usize> {
    peel_fronts(f).into_iter().next().unwrap_or_default()
}

fn gains(p: &FitnessVector, reference: &FitnessVector) -> [f64; 3] {
    [
        p.crashes as f64 - reference.crashes as f64,
        p.coverage - reference.coverage,
        reference.length - p.length,
    ]
}

/// Exact hypervolume by inclusion-exclusion over all subsets (small fronts).
pub fn hv_inclusion_exclusion(front: &[FitnessVector], reference: &FitnessVector) -> f64 {
    let n = front.len();
    assert!(n <= 16);
    let g: Vec<[f64; 3]> = front.iter().map(|p| gains(p, reference)).collect();
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let mut lo = [f64::INFINITY; 3];
        for (i, gi) in g.iter().enumerate() {
            if mask & (1 << i) != 0 {
                for d in 0..3 {
                    lo[d] = lo[d].min(gi[d]);
                }
            }
        }
        let vol = lo.iter().map(|v| v.max(0.0)).product::<f64>();
        if mask.count_ones() % 2 == 1 {
            total += vol;
        } else {
            total -= vol;
        }
    }
    total
}

/// Monte-Carlo hypervolume estimate over the bounding box of the gains.
pub fn hv_monte_carlo<R: Rng>(
    front: &[FitnessVector],
    reference: &FitnessVector,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let g: Vec<[f64; 3]> = front.iter().map(|p| gains(p, reference)).collect();
    let mut hi = [0.0f64; 3];
    for gi in &g {
        for d in 0..3 {
            hi[d] = hi[d].max(gi[d]);
        }
    }
    let box_vol = hi[0] * hi[1] * hi[2];
    if box_vol == 0.0 {
        return 0.0;
    }
    let mut hits = 0usize;
    for _ in 0..samples {
        let x = [
            rng.gen::<f64>() * hi[0],
            rng.gen::<f64>() * hi[1],
            rng.gen::<f64>() * hi[2],
        ];
        if g.iter()
            .any(|gi| x[0] <= gi[0] && x[1] <= gi[1] && x[2] <= gi[2])
        {
            hits += 1;
        }
    }
    box_vol * hits as f64 / samples as f64
}

/// Connected components of the threshold graph via breadth-first search.
pub fn bfs_components(dist: &dyn Fn(usize, usize) -> usize, n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for (w, flag) in seen.iter_mut().enumerate() {
                if !*flag && w != v && dist(v, w) < k {
                    *flag = true;
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Smallest k making the graph connected, found by trying every candidate
/// threshold in increasing order.
pub fn kconnec_sweep(dist: &dyn Fn(usize, usize) -> usize, n: usize) -> usize {
    if n < 2 {
        return 0;
    }
    let mut candidates: BTreeSet<usize> = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                candidates.insert(dist(i, j) + 1);
            }
        }
    }
    for k in std::iter::once(1).chain(candidates) {
        if bfs_components(dist, n, k).len() == 1 {
            return k;
        }
    }
    unreachable!()
}

/// The eleven landscape metrics computed from first principles, in snapshot
/// column order after `generation`.
pub fn oracle_metrics(
    suites: &[TestSuite],
    fitness: &[FitnessVector],
    k: usize,
    max_distance: usize,
    reference: &FitnessVector,
) -> [f64; 11] {
    let n = suites.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pairs.push(padded_hamming(&suites[i], &suites[j]));
            }
        }
    }
    let maxdiam = *pairs.iter().max().unwrap();
    let mindiam = *pairs.iter().min().unwrap();
    let avgdiam = pairs.iter().sum::<usize>() as f64 / pairs.len() as f64;

    let front = pareto_indices(fitness);
    let m = front.len();
    let fit: Vec<FitnessVector> = front.iter().map(|&i| fitness[i]).collect();
    let dist = |a: usize, b: usize| padded_hamming(&suites[front[a]], &suites[front[b]]);
    let comps = bfs_components(&dist, m, k);
    let hv = hv_inclusion_exclusion(&fit, reference);
    let clustered: usize = comps.iter().filter(|c| c.len() > 1).map(Vec::len).sum();
    let lconnec = comps.iter().map(Vec::len).max().unwrap_or(0);
    let largest_hv = comps
        .iter()
        .filter(|c| c.len() == lconnec)
        .map(|c| {
            let pts: Vec<FitnessVector> = c.iter().map(|&v| fit[v]).collect();
            hv_inclusion_exclusion(&pts, reference)
        })
        .fold(0.0, f64::max);
    [
        m as f64 / n as f64,
        hv,
        maxdiam as f64,
        avgdiam,
        mindiam as f64,
        avgdiam / max_distance as f64,
        if m == 0 {
            0.0
        } else {
            clustered as f64 / m as f64
        },
        comps.len() as f64,
        kconnec_sweep(&dist, m) as f64,
        lconnec as f64,
        if hv == 0.0 { 0.0 } else { largest_hv / hv },
    ]
}

/// Crowding distance computed per member from the distinct values of each
/// objective, without sorting the front.
pub fn crowding_oracle(f: &[FitnessVector], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    let obj = |p: &FitnessVector, o: usize| match o {
        0 => p.crashes as f64,
        1 => p.coverage,
        _ => p.length,
    };
    let mut out = vec![0.0; m];
    for o in 0..3 {
        let vals: Vec<f64> = front.iter().map(|&i| obj(&f[i], o)).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            continue;
        }
        for (a, &v) in vals.iter().enumerate() {
            if v == lo || v == hi {
                out[a] = f64::INFINITY;
                continue;
            }
            if vals.iter().filter(|&&w| w == v).count() > 1 {
                continue;
            }
            let below = vals
                .iter()
                .copied()
                .filter(|&w| w < v)
                .fold(f64::NEG_INFINITY, f64::max);
            let above = vals
                .iter()
                .copied()
                .filter(|&w| w > v)
                .fold(f64::INFINITY, f64::min);
            out[a] += (above - below) / (hi - lo);
        }
    }
    out
}

/// (rank, crowding) per pool member.
pub fn keys_oracle(f: &[FitnessVector]) -> Vec<(usize, f64)> {
    let mut keys = vec![(0, 0.0); f.len()];
    for (rank, front) in peel_fronts(f).iter().enumerate() {
        for (&i, c) in front.iter().zip(crowding_oracle(f, front)) {
            keys[i] = (rank, c);
        }
    }
    keys
}

/// Whole fronts until at least `target` members, then sorted by rank,
/// descending crowding, then index.
pub fn crowded_order_oracle(f: &[FitnessVector], target: usize) -> Vec<usize> {
    let keys = keys_oracle(f);
    let mut chosen = Vec::new();
    for front in peel_fronts(f) {
        if chosen.len() >= target {
            break;
        }
        chosen.extend(front);
    }
    chosen.sort_by(|&a, &b| {
        keys[a]
            .0
            .cmp(&keys[b].0)
            .then(keys[b].1.total_cmp(&keys[a].1))
            .then(a.cmp(&b))
    });
    chosen
}

/// Straight-line interpreter of an app model: returns (distinct crashes,
/// covered statement count, executed events per sequence, crash prefixes).
pub fn interpret(
    app: &AppModel,
    suite: &TestSuite,
) -> (usize, usize, Vec<usize>, Vec<(u32, usize)>) {
    let mut covered: HashSet<(usize, u32)> = HashSet::new();
    let mut crashes = BTreeSet::new();
    let mut executed = Vec::new();
    let mut prefixes = Vec::new();
    for seq in &suite.sequences {
        let mut act = 0usize;
        let mut count = 0;
        for ev in &seq.events {
            let e = ev.0 as usize;
            count += 1;
            for &s in &app.statements[act][e] {
                covered.insert((act, s));
            }
            if let Some(id) = app.crashes[act][e] {
                crashes.insert(id);
                prefixes.push((id, count));
                break;
            }
            if let Some(t) = app.transitions[act][e] {
                act = t as usize;
            }
        }
        executed.push(count);
    }
    (crashes.len(), covered.len(), executed, prefixes)
}

/// ln Gamma via the Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Upper tail of the chi-square distribution via the series of the lower
/// regularised incomplete gamma function.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let a = df / 2.0;
    let z = x / 2.0;
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = 1.0;
    while term.abs() > sum.abs() * 1e-16 && n < 10_000.0 {
        term *= z / (a + n);
        sum += term;
        n += 1.0;
    }
    let lower = (a * z.ln() - z - ln_gamma(a)).exp() * sum;
    (1.0 - lower).clamp(0.0, 1.0)
}

/// Kruskal-Wallis H with tie correction, by explicit midrank assignment.
pub fn kw_h_oracle(groups: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let rank_of = |v: f64| {
        let less = all.iter().filter(|&&w| w < v).count() as f64;
        let eq = all.iter().filter(|&&w| w == v).count() as f64;
        less + (eq + 1.0) / 2.0
    };
    let mut h = 0.0;
    for g in groups {
        let r: f64 = g.iter().map(|&v| rank_of(v)).sum();
        h += r * r / g.len() as f64;
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    let mut distinct: Vec<f64> = all.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let ties: f64 = distinct
        .iter()
        .map(|&v| {
            let t = all.iter().filter(|&&w| w == v).count() as f64;
            t * t * t - t
        })
        .sum();
    let c = 1.0 - ties / (n * n * n - n);
    if c == 0.0 {
        0.0
    } else {
        h / c
    }
}

/// A12 by counting wins and ties over every cross pair.
pub fn a12_oracle(x: &[f64], y: &[f64]) -> f64 {
    let mut score = 0.0;
    for &a in x {
        for &b in y {
            if a > b {
                score += 1.0;
            } else if a == b {
                score += 0.5;
            }
        }
    }
    score / (x.len() * y.len()) as f64
}

/// Plain NSGA-II written from the algorithm description: random initial
/// population, binary-tournament variation, then truncation of the merged
/// pool in crowded-comparison order. Returns the population genotypes of
/// generations `0..=g_max`.
pub fn baseline_nsga2(
    cfg: &divsearch::engine::EngineConfig,
    app: &AppModel,
) -> Vec<Vec<TestSuite>> {
    use divsearch::genotype::random_suite;
    use divsearch::variation::{whole_suite_variation, SelectionKey};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let eval = |s: &TestSuite| app.evaluate(s).unwrap().fitness;
    let mut pop: Vec<(TestSuite, FitnessVector)> = (0..cfg.size_pop)
        .map(|_| random_suite(&cfg.genotype, &mut rng))
        .map(|s| {
            let f = eval(&s);
            (s, f)
        })
        .collect();
    let mut history = vec![pop.iter().map(|p| p.0.clone()).collect::<Vec<_>>()];
    for _ in 0..cfg.g_max {
        let fit: Vec<FitnessVector> = pop.iter().map(|p| p.1).collect();
        let keys: Vec<SelectionKey> = keys_oracle(&fit)
            .into_iter()
            .map(|(rank, crowding)| SelectionKey { rank, crowding })
            .collect();
        let parents: Vec<TestSuite> = pop.iter().map(|p| p.0.clone()).collect();
        let children = whole_suite_variation(
            &parents,
            &keys,
            cfg.size_off,
            &cfg.variation,
            &cfg.genotype,
            &mut rng,
        )
        .unwrap();
        let mut pool = pop;
        pool.extend(children.into_iter().map(|s| {
            let f = eval(&s);
            (s, f)
        }));
        let fit: Vec<FitnessVector> = pool.iter().map(|p| p.1).collect();
        let order = crowded_order_oracle(&fit, cfg.size_pop);
        pop = order[..cfg.size_pop]
            .iter()
            .map(|&i| pool[i].clone())
            .collect();
        history.push(pop.iter().map(|p| p.0.clone()).collect());
    }
    history
}

/// Farthest-point replay written against the oracle distance: the first
/// two picks are a maximum pair, and each later pick maximises the minimum
/// distance to the earlier picks. A single pick maximises the distance sum.
pub fn greedy_replay_holds(pool: &[TestSuite], picked: &[usize]) -> bool {
    let n = pool.len();
    let distinct: HashSet<usize> = picked.iter().copied().collect();
    if distinct.len() != picked.len() || picked.iter().any(|&i| i >= n) {
        return false;
    }
    let mut m = vec![0usize; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = padded_hamming(&pool[i], &pool[j]);
            m[i * n + j] = d;
            m[j * n + i] = d;
        }
    }
    let d = |i: usize, j: usize| m[i * n + j];
    match picked.len() {
        0 => true,
        1 => {
            let sum = |i: usize| (0..n).map(|j| d(i, j)).sum::<usize>();
            (0..n).all(|i| sum(i) <= sum(picked[0]))
        }
        _ => {
            let top = m.iter().copied().max().unwrap();
            if d(picked[0], picked[1]) != top {
                return false;
            }
            let mut min_to: Vec<usize> = (0..n)
                .map(|i| d(i, picked[0]).min(d(i, picked[1])))
                .collect();
            for s in 2..picked.len() {
                let chosen = min_to[picked[s]];
                if (0..n).any(|i| !picked[..s].contains(&i) && min_to[i] > chosen) {
                    return false;
                }
                for (i, v) in min_to.iter_mut().enumerate() {
                    *v = (*v).min(d(i, picked[s]));
                }
            }
            true
        }
    }
}
