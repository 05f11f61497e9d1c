//! Reference implementations and fixture helpers shared by the integration
//! suites. The oracles are deliberately naive.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use eegrag::eeg::{Channel, EegRecording};
use eegrag::hypergraph::{EntityId, HyperedgeId, HypergraphStore, Layer};
use eegrag::{PipelineConfig, Workspace};
use rand::Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compare against a golden file, or rewrite it when `UPDATE_GOLDEN` is set.
pub fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "output differs from {}", path.display());
}

/// Ingest the bundled corpus (documents, cases, EEG) into `dir`.
pub fn ingest_fixtures(dir: &Path, config: PipelineConfig) -> Workspace {
    let ws = Workspace::new(dir, config).unwrap();
    let f = fixtures();
    ws.ingest_docs(&f.join("docs.jsonl"), Some(&f.join("docs.facts.jsonl"))).unwrap();
    ws.ingest_cases(&f.join("cases.jsonl")).unwrap();
    ws.ingest_eeg(&f.join("eeg")).unwrap();
    ws
}

/// Every file in `dir`, by name.
pub fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
        }
    }
    out
}

/// Minimum over every monotone warping path of the summed `|a_i - b_j|`,
/// accumulated from the start of the path.
pub fn dtw_enumerate(a: &[f64], b: &[f64]) -> f64 {
    fn go(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            go(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            go(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            go(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    go(a, b, 0, 0, 0.0, &mut best);
    best
}

/// Full-matrix DTW with an optional Sakoe-Chiba band.
pub fn dtw_matrix(a: &[f64], b: &[f64], band: Option<usize>) -> f64 {
    let (n, m) = (a.len(), b.len());
    let w = band.map(|w| w.max(n.abs_diff(m)));
    let mut d = vec![vec![f64::INFINITY; m + 1]; n + 1];
    d[0][0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            if w.is_some_and(|w| i.abs_diff(j) > w) {
                continue;
            }
            let prev = d[i - 1][j - 1].min(d[i - 1][j]).min(d[i][j - 1]);
            d[i][j] = prev + (a[i - 1] - b[j - 1]).abs();
        }
    }
    d[n][m]
}

/// Segment means computed by integrating the step function of `x` over
/// `[j*T/n, (j+1)*T/n)` in floating point.
pub fn paa_oracle(x: &[f64], n: usize) -> Vec<f64> {
    let t = x.len() as f64;
    let w = t / n as f64;
    (0..n)
        .map(|j| {
            let (lo, hi) = (j as f64 * w, (j + 1) as f64 * w);
            let mut acc = 0.0;
            for (i, v) in x.iter().enumerate() {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                acc += overlap * v;
            }
            acc / w
        })
        .collect()
}

pub fn cosine_oracle(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        (dot / (nu * nv)).clamp(-1.0, 1.0)
    }
}

/// A random store together with the edge lists it was built from.
pub struct RandomGraph {
    pub store: HypergraphStore,
    pub entities: Vec<EntityId>,
    pub edges: Vec<(HyperedgeId, BTreeSet<EntityId>)>,
}

/// At most `max_nodes` nodes in total; every hyperedge has 1 to 4 members.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize, dim: usize) -> RandomGraph {
    let total = rng.random_range(2..=max_nodes);
    let n_entities = rng.random_range(1..total);
    let n_edges = total - n_entities;
    let mut store = HypergraphStore::new(dim);
    let entities: Vec<EntityId> = (0..n_entities)
        .map(|i| store.add_entity(&format!("entity {i}"), "", "", None).unwrap())
        .collect();
    let mut edges = Vec::new();
    let mut i = 0;
    while edges.len() < n_edges {
        let k = rng.random_range(1..=4.min(n_entities));
        let members: BTreeSet<EntityId> = (0..k).map(|_| entities[rng.random_range(0..n_entities)]).collect();
        let id = store
            .add_hyperedge(&format!("fact {i}"), members.iter().copied(), Layer::Knowledge, None)
            .unwrap();
        edges.push((id, members));
        i += 1;
    }
    store.seal();
    RandomGraph { store, entities, edges }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RefNode {
    E(EntityId),
    H(HyperedgeId),
}

/// Textbook BFS over an adjacency list built from the raw edge lists.
pub fn reference_bfs(g: &RandomGraph, seeds: &[RefNode], radius: usize) -> BTreeSet<RefNode> {
    let mut adj: BTreeMap<RefNode, Vec<RefNode>> = BTreeMap::new();
    for e in &g.entities {
        adj.entry(RefNode::E(*e)).or_default();
    }
    for (h, members) in &g.edges {
        for m in members {
            adj.entry(RefNode::H(*h)).or_default().push(RefNode::E(*m));
            adj.entry(RefNode::E(*m)).or_default().push(RefNode::H(*h));
        }
    }
    let mut dist: BTreeMap<RefNode, usize> = BTreeMap::new();
    let mut q = VecDeque::new();
    for s in seeds {
        if dist.insert(*s, 0).is_none() {
            q.push_back(*s);
        }
    }
    while let Some(n) = q.pop_front() {
        let d = dist[&n];
        if d == radius {
            continue;
        }
        for next in &adj[&n] {
            if !dist.contains_key(next) {
                dist.insert(*next, d + 1);
                q.push_back(*next);
            }
        }
    }
    dist.into_keys().collect()
}

pub fn random_recording(rng: &mut impl Rng, id: &str, channels: usize, len: usize) -> EegRecording {
    EegRecording {
        id: id.to_string(),
        patient_hash: None,
        sample_rate: 128.0,
        channels: (0..channels)
            .map(|c| Channel {
                name: format!("ch{c}"),
                samples: (0..len).map(|_| f64::from(rng.random_range(-3i32..=3))).collect(),
            })
            .collect(),
    }
}
