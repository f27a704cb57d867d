//! Deterministic stand-ins for small citation benchmarks.
//!
//! The generator plants class labels, wires a homophilous graph with a
//! heavy-tailed degree profile (Chung–Lu style node weights) and gives every
//! node a bag of words biased towards its class topic, row-normalized the way
//! citation feature matrices usually are. Sizes match the published node and
//! edge counts of the real datasets.
//!
//! [`fixture_model`] builds fixed weights that read the class topics out of
//! the aggregated features, so the models make confident, mostly correct
//! predictions without any training.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::Dataset;
use crate::gnn::{GnnModel, Layer, ModelKind};
use crate::graph::{CsrMatrix, DenseMatrix};
use crate::io::Features;

/// Shape of a generated citation-style dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CitationSpec {
    pub name: &'static str,
    pub nodes: usize,
    /// Undirected edges; the stored matrix holds both directions.
    pub undirected_edges: usize,
    /// Relative class sizes.
    pub class_sizes: &'static [usize],
    pub features: usize,
    /// Mean number of distinct words per node.
    pub words_per_node: usize,
    /// Probability that an edge stays inside the source node's class.
    pub homophily: f64,
    /// Probability that a word is drawn from the node's class topic.
    pub topic_bias: f64,
    /// Node weight decay `(rank + 1)^-exponent`; larger means heavier hubs.
    pub degree_exponent: f64,
}

/// 2,708 nodes, 10,556 stored edges, 7 classes, 1,433 words.
pub const CORA: CitationSpec = CitationSpec {
    name: "cora",
    nodes: 2708,
    undirected_edges: 5278,
    class_sizes: &[351, 217, 418, 818, 426, 298, 180],
    features: 1433,
    words_per_node: 18,
    homophily: 0.81,
    topic_bias: 0.6,
    degree_exponent: 0.62,
};

/// 19,717 nodes, 88,648 stored edges, 3 classes, 500 words.
pub const PUBMED: CitationSpec = CitationSpec {
    name: "pubmed",
    nodes: 19717,
    undirected_edges: 44324,
    class_sizes: &[4103, 7739, 7875],
    features: 500,
    words_per_node: 50,
    homophily: 0.8,
    topic_bias: 0.5,
    degree_exponent: 0.62,
};

pub fn by_name(name: &str) -> Option<CitationSpec> {
    [CORA, PUBMED].into_iter().find(|s| s.name == name)
}

impl CitationSpec {
    pub fn n_classes(&self) -> usize {
        self.class_sizes.len()
    }

    /// Words `[c * T, (c + 1) * T)` form the topic of class `c`.
    fn topic_range(&self, class: usize) -> std::ops::Range<usize> {
        let t = self.features / self.n_classes();
        class * t..(class + 1) * t
    }
}

/// Generates the dataset described by `spec`. Same seed, same dataset.
pub fn citation_dataset(spec: &CitationSpec, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = plant_labels(spec, &mut rng);
    let graph = homophilous_graph(spec, &labels, &mut rng);
    let features = bag_of_words(spec, &labels, &mut rng);
    Dataset {
        name: spec.name.to_string(),
        graph,
        features: Features::Dense(features),
        labels,
        mask: None,
        feature_load_time: None,
    }
}

fn plant_labels(spec: &CitationSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let total: usize = spec.class_sizes.iter().sum();
    let mut labels = Vec::with_capacity(spec.nodes);
    for (c, &size) in spec.class_sizes.iter().enumerate() {
        let count = size * spec.nodes / total;
        labels.extend(std::iter::repeat_n(c, count));
    }
    // rounding leftovers go to the largest class
    let largest = (0..spec.n_classes()).max_by_key(|&c| spec.class_sizes[c]).unwrap_or(0);
    labels.resize(spec.nodes, largest);
    labels.shuffle(rng);
    labels
}

fn homophilous_graph(spec: &CitationSpec, labels: &[usize], rng: &mut ChaCha8Rng) -> CsrMatrix {
    let n = spec.nodes;
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(rng);
    let weight: Vec<f64> = rank.iter().map(|&r| (r as f64 + 1.0).powf(-spec.degree_exponent)).collect();
    let global = WeightedIndex::new(&weight).expect("positive weights");

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.n_classes()];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    let per_class: Vec<Option<WeightedIndex<f64>>> = members
        .iter()
        .map(|m| WeightedIndex::new(m.iter().map(|&i| weight[i])).ok())
        .collect();

    let mut edges: HashSet<(usize, usize)> = HashSet::with_capacity(spec.undirected_edges);
    let max_edges = n * (n - 1) / 2;
    let target = spec.undirected_edges.min(max_edges);
    while edges.len() < target {
        let u = global.sample(rng);
        let c = labels[u];
        let v = match &per_class[c] {
            Some(dist) if rng.random_bool(spec.homophily) => members[c][dist.sample(rng)],
            _ => global.sample(rng),
        };
        if u != v {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    let mut sorted: Vec<(usize, usize)> = edges.into_iter().collect();
    sorted.sort_unstable();
    CsrMatrix::from_triplets(
        n,
        n,
        sorted.into_iter().flat_map(|(u, v)| [(u, v, 1.0), (v, u, 1.0)]),
    )
    .expect("generated edges are in range")
}

fn bag_of_words(spec: &CitationSpec, labels: &[usize], rng: &mut ChaCha8Rng) -> DenseMatrix {
    let f = spec.features;
    let mut data = vec![0.0f32; spec.nodes * f];
    let lo = (spec.words_per_node / 2).max(1);
    let hi = (spec.words_per_node * 3 / 2).clamp(lo, f);
    for (i, &c) in labels.iter().enumerate() {
        let topic = spec.topic_range(c);
        let count = rng.random_range(lo..=hi);
        let mut words = HashSet::with_capacity(count);
        while words.len() < count {
            let w = if rng.random_bool(spec.topic_bias) {
                rng.random_range(topic.clone())
            } else {
                rng.random_range(0..f)
            };
            words.insert(w);
        }
        let v = 1.0 / count as f32;
        for w in words {
            data[i * f + w] = v;
        }
    }
    DenseMatrix::new(spec.nodes, f, data).expect("finite features")
}

/// Fixed two-layer weights for `spec`: hidden units `0..n_classes` score the
/// class topics, the remaining hidden units are small random projections,
/// and the output layer reads the topic units back with random cross-talk.
pub fn fixture_model(spec: &CitationSpec, kind: ModelKind, hidden: usize, seed: u64) -> GnnModel {
    let k = spec.n_classes();
    assert!(hidden >= k, "hidden width must hold one unit per class");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = |scale: f32| (rng.random::<f32>() * 2.0 - 1.0) * scale;

    let f = spec.features;
    let topic_gain = 4.0f32;
    let mut first = |rows: usize| {
        DenseMatrix::from_fn(rows, hidden, |r, h| {
            let word = r % f;
            if h < k && spec.topic_range(h).contains(&word) {
                topic_gain + noise(0.5)
            } else if h < k {
                noise(0.2)
            } else {
                noise(1.0)
            }
        })
    };
    let w0 = match kind {
        ModelKind::Gcn => first(f),
        ModelKind::SageMean => first(2 * f),
    };
    let b0: Vec<f32> = (0..hidden).map(|_| noise(0.05)).collect();

    let second_rows = match kind {
        ModelKind::Gcn => hidden,
        ModelKind::SageMean => 2 * hidden,
    };
    let w1 = DenseMatrix::from_fn(second_rows, k, |r, c| {
        let unit = r % hidden;
        if unit == c {
            1.0 + noise(0.2)
        } else {
            noise(0.3)
        }
    });
    let b1: Vec<f32> = (0..k).map(|_| noise(0.05)).collect();

    GnnModel::new(
        kind,
        vec![
            Layer::new(w0, Some(b0)).expect("bias matches width"),
            Layer::new(w1, Some(b1)).expect("bias matches width"),
        ],
    )
    .expect("fixture layers chain")
}
