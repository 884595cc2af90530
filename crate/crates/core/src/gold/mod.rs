//! Gold pairwise distances: dependency trees, hypernymy graphs and
//! articulatory feature tables.

mod conllu;
mod graph;
mod phoneme;

use std::collections::{HashMap, HashSet};

use ndarray::Array2;
use thiserror::Error;

pub use conllu::{
    linear_tree_distances, parse_conllu, tree_distance_matrix, write_conllu, ConlluError,
    ConlluErrorKind, DependencySentence, Word,
};
pub use graph::{category_members, graph_distances, GraphError, SemanticGraph};
pub use phoneme::{phoneme_dissimilarity, PhonemeError, PhonemeFeatureTable, ENGLISH_VOWELS_CSV};

pub(crate) use graph::descendants;

#[derive(Debug, Error)]
pub enum GoldError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Phoneme(#[from] PhonemeError),
    #[error("{0} element ids and {1} labels")]
    LabelCount(usize, usize),
}

/// Distances among the words of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldGroup {
    pub id: String,
    pub element_ids: Vec<String>,
    pub distances: Array2<f64>,
    /// Tree edges, 0-based within the group.
    pub edges: Vec<(usize, usize)>,
}

/// Distances over one shared element set. Undefined pairs hold `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalGold {
    pub element_ids: Vec<String>,
    pub distances: Array2<f64>,
    /// Graph edges between elements; empty for feature-table gold.
    pub edges: Vec<(usize, usize)>,
}

impl GlobalGold {
    pub fn distance(&self, a: usize, b: usize) -> Option<f64> {
        let d = self.distances[[a, b]];
        (!d.is_nan()).then_some(d)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        adjacency(self.element_ids.len(), &self.edges)
    }
}

/// A pairwise-distance provider: per-sentence trees or one global set.
#[derive(Debug, Clone, PartialEq)]
pub enum GoldStructure {
    Grouped(Vec<GoldGroup>),
    Global(GlobalGold),
}

pub(crate) fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

impl GoldStructure {
    pub fn from_sentences(sentences: &[DependencySentence]) -> Self {
        Self::Grouped(
            sentences
                .iter()
                .map(|s| GoldGroup {
                    id: s.id.clone(),
                    element_ids: s.element_ids(),
                    distances: tree_distance_matrix(s).mapv(f64::from),
                    edges: s.edges(),
                })
                .collect(),
        )
    }

    /// Surface-order control with the same groups and element ids.
    pub fn linear_control(sentences: &[DependencySentence]) -> Self {
        Self::Grouped(
            sentences
                .iter()
                .map(|s| {
                    let n = s.len();
                    GoldGroup {
                        id: s.id.clone(),
                        element_ids: s.element_ids(),
                        distances: linear_tree_distances(n).mapv(f64::from),
                        edges: (1..n).map(|i| (i - 1, i)).collect(),
                    }
                })
                .collect(),
        )
    }

    /// Elements are graph nodes named by their element id.
    pub fn from_graph(g: &SemanticGraph, element_ids: &[String]) -> Result<Self, GoldError> {
        let nodes = element_ids
            .iter()
            .map(|id| g.node(id))
            .collect::<Result<Vec<_>, _>>()?;
        let n = nodes.len();
        let mut distances = Array2::from_elem((n, n), f64::NAN);
        for (i, &src) in nodes.iter().enumerate() {
            let from = g.bfs(src);
            for (j, &dst) in nodes.iter().enumerate() {
                if let Some(d) = from[dst] {
                    distances[[i, j]] = f64::from(d);
                }
            }
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if distances[[i, j]] == 1.0 {
                    edges.push((i, j));
                }
            }
        }
        Ok(Self::Global(GlobalGold {
            element_ids: element_ids.to_vec(),
            distances,
            edges,
        }))
    }

    /// Elements labelled with phoneme symbols from `table`.
    pub fn from_phonemes(
        element_ids: &[String],
        labels: &[String],
        table: &PhonemeFeatureTable,
    ) -> Result<Self, GoldError> {
        if element_ids.len() != labels.len() {
            return Err(GoldError::LabelCount(element_ids.len(), labels.len()));
        }
        let n = labels.len();
        let mut distances = Array2::zeros((n, n));
        let mut memo: HashMap<(&str, &str), f64> = HashMap::new();
        for i in 0..n {
            for j in i + 1..n {
                let key = (labels[i].as_str(), labels[j].as_str());
                let d = match memo.get(&key) {
                    Some(&d) => d,
                    None => {
                        let d = f64::from(phoneme_dissimilarity(key.0, key.1, table)?);
                        memo.insert(key, d);
                        d
                    }
                };
                distances[[i, j]] = d;
                distances[[j, i]] = d;
            }
        }
        Ok(Self::Global(GlobalGold {
            element_ids: element_ids.to_vec(),
            distances,
            edges: Vec::new(),
        }))
    }

    pub fn element_ids(&self) -> Vec<&str> {
        match self {
            Self::Grouped(groups) => groups
                .iter()
                .flat_map(|g| g.element_ids.iter().map(String::as_str))
                .collect(),
            Self::Global(g) => g.element_ids.iter().map(String::as_str).collect(),
        }
    }

    pub fn has_edges(&self) -> bool {
        match self {
            Self::Grouped(groups) => groups.iter().any(|g| !g.edges.is_empty()),
            Self::Global(g) => !g.edges.is_empty(),
        }
    }

    /// Keeps only elements in `keep`. Sentences are kept whole or dropped.
    pub fn restrict(&self, keep: &HashSet<&str>) -> Self {
        match self {
            Self::Grouped(groups) => Self::Grouped(
                groups
                    .iter()
                    .filter(|g| g.element_ids.iter().all(|id| keep.contains(id.as_str())))
                    .cloned()
                    .collect(),
            ),
            Self::Global(g) => {
                let idx: Vec<usize> = g
                    .element_ids
                    .iter()
                    .enumerate()
                    .filter(|(_, id)| keep.contains(id.as_str()))
                    .map(|(i, _)| i)
                    .collect();
                let mut remap = vec![usize::MAX; g.element_ids.len()];
                for (new, &old) in idx.iter().enumerate() {
                    remap[old] = new;
                }
                let distances = Array2::from_shape_fn((idx.len(), idx.len()), |(a, b)| {
                    g.distances[[idx[a], idx[b]]]
                });
                let edges = g
                    .edges
                    .iter()
                    .filter(|(a, b)| remap[*a] != usize::MAX && remap[*b] != usize::MAX)
                    .map(|&(a, b)| (remap[a], remap[b]))
                    .collect();
                Self::Global(GlobalGold {
                    element_ids: idx.iter().map(|&i| g.element_ids[i].clone()).collect(),
                    distances,
                    edges,
                })
            }
        }
    }
}
