//! Global-topology landscape metrics computed once per generation.
//!
//! Pareto-optimal metrics (`ppos`, `hv`), population diameters (`maxdiam`,
//! `avgdiam`, `mindiam`, `reldiam`) and connectedness metrics over the graph
//! of Pareto-optimal suites (`pconnec`, `nconnec`, `kconnec`, `lconnec`,
//! `hvconnec`).

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genotype::{distance_matrix, max_possible_distance, GenotypeConfig, TestSuite};
use crate::sut::FitnessVector;

/// Default connectedness threshold: suites are neighbours when they differ
/// in fewer than this many events.
pub const DEFAULT_K: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedIndividual {
    pub suite: TestSuite,
    pub fitness: FitnessVector,
}

/// Indices of the mutually non-dominated members of `fitness`, ascending.
pub fn pareto_front_indices(fitness: &[FitnessVector]) -> Vec<usize> {
    (0..fitness.len())
        .filter(|&i| !fitness.iter().any(|other| other.dominates(&fitness[i])))
        .collect()
}

pub fn pareto_front(pop: &[EvaluatedIndividual]) -> Vec<&EvaluatedIndividual> {
    let fit: Vec<FitnessVector> = pop.iter().map(|p| p.fitness).collect();
    pareto_front_indices(&fit)
        .into_iter()
        .map(|i| &pop[i])
        .collect()
}

pub fn ppos(pop: &[EvaluatedIndividual]) -> Result<f64> {
    if pop.is_empty() {
        return Err(Error::Usage("ppos of an empty population".into()));
    }
    Ok(pareto_front(pop).len() as f64 / pop.len() as f64)
}

/// Reference point (0 crashes, 0 coverage, `max_length` events).
pub fn nadir(max_length: usize) -> FitnessVector {
    FitnessVector::new(0, 0.0, max_length as f64)
}

/// Exact dominated hypervolume of `front` relative to `reference`.
///
/// Crashes and coverage contribute their gain over the reference, length
/// contributes `reference.length - length`. Points are swept in decreasing
/// length gain; each slab adds the area of the 2-D staircase of the points
/// seen so far.
pub fn hypervolume(front: &[FitnessVector], reference: &FitnessVector) -> Result<f64> {
    let mut boxes = Vec::with_capacity(front.len());
    for p in front {
        let x = p.crashes as f64 - reference.crashes as f64;
        let y = p.coverage - reference.coverage;
        let z = reference.length - p.length;
        if !(x >= 0.0 && y >= 0.0 && z >= 0.0 && y.is_finite() && z.is_finite()) {
            return Err(Error::OutsideReference {
                point: format!("{p:?}"),
                reference: format!("{reference:?}"),
            });
        }
        boxes.push((x, y, z));
    }
    boxes.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut volume = 0.0;
    for i in 0..boxes.len() {
        let next_z = boxes.get(i + 1).map_or(0.0, |b| b.2);
        let depth = boxes[i].2 - next_z;
        if depth > 0.0 {
            volume += staircase_area(&boxes[..=i]) * depth;
        }
    }
    Ok(volume)
}

fn staircase_area(boxes: &[(f64, f64, f64)]) -> f64 {
    let mut xy: Vec<(f64, f64)> = boxes.iter().map(|b| (b.0, b.1)).collect();
    xy.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut area = 0.0;
    let mut height: f64 = 0.0;
    for k in 0..xy.len() {
        height = height.max(xy[k].1);
        let next_x = xy.get(k + 1).map_or(0.0, |p| p.0);
        area += (xy[k].0 - next_x) * height;
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diameters {
    pub max: usize,
    pub avg: f64,
    pub min: usize,
}

pub fn diameters(pop: &[&TestSuite]) -> Result<Diameters> {
    if pop.len() < 2 {
        return Err(Error::Usage(format!(
            "diameters need at least two individuals, got {}",
            pop.len()
        )));
    }
    check_uniform(pop)?;
    Ok(diameters_from_matrix(&distance_matrix(pop), pop.len()))
}

fn check_uniform(pop: &[&TestSuite]) -> Result<()> {
    if let Some(first) = pop.first() {
        if let Some(bad) = pop.iter().find(|t| t.len() != first.len()) {
            return Err(Error::SuiteSizeMismatch {
                left: first.len(),
                right: bad.len(),
            });
        }
    }
    Ok(())
}

fn diameters_from_matrix(dist: &[usize], n: usize) -> Diameters {
    let mut max = 0;
    let mut min = usize::MAX;
    let mut sum = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            let d = dist[i * n + j];
            max = max.max(d);
            min = min.min(d);
            sum += d as u64;
        }
    }
    // Each unordered pair appears twice among the ordered pairs.
    let avg = (2 * sum) as f64 / (n * (n - 1)) as f64;
    Diameters { max, avg, min }
}

pub fn reldiam(pop: &[&TestSuite], cfg: &GenotypeConfig) -> Result<f64> {
    Ok(diameters(pop)?.avg / max_possible_distance(cfg) as f64)
}

/// How `nconnec` counts clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterCounting {
    /// Every connected component, singletons included.
    #[default]
    AllComponents,
    /// Only components with at least two members.
    ExcludeSingletons,
}

/// Threshold graph over Pareto-optimal suites: an edge joins two vertices
/// whose genotypic distance is strictly below `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoGraph {
    pub fitness: Vec<FitnessVector>,
    /// Row-major vertex distance matrix.
    pub weights: Vec<usize>,
    pub k: usize,
    /// Connected components, each sorted ascending, ordered by first vertex.
    pub components: Vec<Vec<usize>>,
}

impl ParetoGraph {
    fn from_matrix(fitness: Vec<FitnessVector>, weights: Vec<usize>, k: usize) -> Self {
        let n = fitness.len();
        let mut uf = UnionFind::<usize>::new(n);
        for i in 0..n {
            for j in i + 1..n {
                if weights[i * n + j] < k {
                    uf.union(i, j);
                }
            }
        }
        let labels = uf.into_labeling();
        let mut components: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for (v, &root) in labels.iter().enumerate() {
            if slot[root] == usize::MAX {
                slot[root] = components.len();
                components.push(Vec::new());
            }
            components[slot[root]].push(v);
        }
        Self {
            fitness,
            weights,
            k,
            components,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.fitness.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> usize {
        self.weights[i * self.vertex_count() + j]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.weight(i, j) < self.k
    }
}

pub fn build_pareto_graph(front: &[&EvaluatedIndividual], k: usize) -> Result<ParetoGraph> {
    let suites: Vec<&TestSuite> = front.iter().map(|p| &p.suite).collect();
    check_uniform(&suites)?;
    Ok(ParetoGraph::from_matrix(
        front.iter().map(|p| p.fitness).collect(),
        distance_matrix(&suites),
        k,
    ))
}

/// Share of vertices that sit in a component of two or more; 0 for an empty
/// graph.
pub fn pconnec(g: &ParetoGraph) -> f64 {
    if g.vertex_count() == 0 {
        return 0.0;
    }
    let clustered: usize = g
        .components
        .iter()
        .filter(|c| c.len() >= 2)
        .map(Vec::len)
        .sum();
    clustered as f64 / g.vertex_count() as f64
}

pub fn nconnec(g: &ParetoGraph, counting: ClusterCounting) -> usize {
    match counting {
        ClusterCounting::AllComponents => g.components.len(),
        ClusterCounting::ExcludeSingletons => g.components.iter().filter(|c| c.len() >= 2).count(),
    }
}

/// Smallest threshold under which the graph is a single component: one more
/// than the heaviest edge of a minimum spanning tree. Zero for fewer than two
/// vertices.
pub fn kconnec(g: &ParetoGraph) -> usize {
    kconnec_from_matrix(&g.weights, g.vertex_count())
}

fn kconnec_from_matrix(weights: &[usize], n: usize) -> usize {
    if n < 2 {
        return 0;
    }
    let mut edges: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (weights[i * n + j], i, j))
        .collect();
    edges.sort_unstable();
    let mut uf = UnionFind::<usize>::new(n);
    let mut joined = 1;
    for (w, i, j) in edges {
        if uf.union(i, j) {
            joined += 1;
            if joined == n {
                return w + 1;
            }
        }
    }
    unreachable!("complete graph is connected")
}

pub fn lconnec(g: &ParetoGraph) -> usize {
    g.components.iter().map(Vec::len).max().unwrap_or(0)
}

/// Share of the front's hypervolume covered by the largest component alone.
///
/// The largest component is the one with most members; ties go to the larger
/// own hypervolume and then to the lowest vertex index.
pub fn hvconnec(g: &ParetoGraph, reference: &FitnessVector) -> Result<f64> {
    let total = hypervolume(&g.fitness, reference)?;
    if total == 0.0 || g.components.is_empty() {
        return Ok(0.0);
    }
    let mut best: Option<(usize, f64)> = None;
    for comp in &g.components {
        let pts: Vec<FitnessVector> = comp.iter().map(|&v| g.fitness[v]).collect();
        let hv = hypervolume(&pts, reference)?;
        let better = match best {
            None => true,
            Some((size, bhv)) => comp.len() > size || (comp.len() == size && hv > bhv),
        };
        if better {
            best = Some((comp.len(), hv));
        }
    }
    Ok(best.map_or(0.0, |b| b.1) / total)
}

/// All eleven landscape metrics for one population state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationSnapshot {
    pub generation: usize,
    pub ppos: f64,
    pub hv: f64,
    pub maxdiam: usize,
    pub avgdiam: f64,
    pub mindiam: usize,
    pub reldiam: f64,
    pub pconnec: f64,
    pub nconnec: usize,
    pub kconnec: usize,
    pub lconnec: usize,
    pub hvconnec: f64,
}

pub const SNAPSHOT_COLUMNS: [&str; 12] = [
    "generation",
    "ppos",
    "hv",
    "maxdiam",
    "avgdiam",
    "mindiam",
    "reldiam",
    "pconnec",
    "nconnec",
    "kconnec",
    "lconnec",
    "hvconnec",
];

impl GenerationSnapshot {
    pub fn csv_header() -> String {
        SNAPSHOT_COLUMNS.join(",")
    }

    /// One CSV row; reals are written with six decimals.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{},{:.6},{},{:.6},{:.6},{},{},{},{:.6}",
            self.generation,
            self.ppos,
            self.hv,
            self.maxdiam,
            self.avgdiam,
            self.mindiam,
            self.reldiam,
            self.pconnec,
            self.nconnec,
            self.kconnec,
            self.lconnec,
            self.hvconnec
        )
    }

    /// The eleven metric values in column order, generation excluded.
    pub fn metric_values(&self) -> [f64; 11] {
        [
            self.ppos,
            self.hv,
            self.maxdiam as f64,
            self.avgdiam,
            self.mindiam as f64,
            self.reldiam,
            self.pconnec,
            self.nconnec as f64,
            self.kconnec as f64,
            self.lconnec as f64,
            self.hvconnec,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeConfig {
    pub k: usize,
    pub counting: ClusterCounting,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            counting: ClusterCounting::AllComponents,
        }
    }
}

pub fn snapshot(
    generation: usize,
    pop: &[EvaluatedIndividual],
    cfg: &GenotypeConfig,
    landscape: &LandscapeConfig,
    reference: &FitnessVector,
) -> Result<GenerationSnapshot> {
    let n = pop.len();
    if n < 2 {
        return Err(Error::Usage(format!(
            "a snapshot needs at least two individuals, got {n}"
        )));
    }
    let suites: Vec<&TestSuite> = pop.iter().map(|p| &p.suite).collect();
    check_uniform(&suites)?;
    let dist = distance_matrix(&suites);
    let diam = diameters_from_matrix(&dist, n);

    let fitness: Vec<FitnessVector> = pop.iter().map(|p| p.fitness).collect();
    let front = pareto_front_indices(&fitness);
    let m = front.len();
    let mut weights = vec![0; m * m];
    for (a, &i) in front.iter().enumerate() {
        for (b, &j) in front.iter().enumerate() {
            weights[a * m + b] = dist[i * n + j];
        }
    }
    let graph = ParetoGraph::from_matrix(
        front.iter().map(|&i| fitness[i]).collect(),
        weights,
        landscape.k,
    );

    Ok(GenerationSnapshot {
        generation,
        ppos: m as f64 / n as f64,
        hv: hypervolume(&graph.fitness, reference)?,
        maxdiam: diam.max,
        avgdiam: diam.avg,
        mindiam: diam.min,
        reldiam: diam.avg / max_possible_distance(cfg) as f64,
        pconnec: pconnec(&graph),
        nconnec: nconnec(&graph, landscape.counting),
        kconnec: kconnec(&graph),
        lconnec: lconnec(&graph),
        hvconnec: hvconnec(&graph, reference)?,
    })
}
