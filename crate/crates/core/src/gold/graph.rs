//! Hypernymy graph ingested from a `child<TAB>parent` edge list.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("line {line}: expected \"child<TAB>parent\"")]
    Malformed { line: usize },
    #[error("line {line}: self-loop on {node:?}")]
    SelfLoop { line: usize, node: String },
    #[error("unknown node {0:?}")]
    UnknownNode(String),
}

#[derive(Debug, Clone, Default)]
pub struct SemanticGraph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    /// Undirected adjacency, sorted.
    neighbors: Vec<Vec<usize>>,
    /// Hyponyms of each node, sorted.
    children: Vec<Vec<usize>>,
}

impl SemanticGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses a TSV edge list. Duplicate edges are merged; blank lines and
    /// lines starting with `#` are ignored.
    pub fn from_tsv(text: &str) -> Result<Self, GraphError> {
        let mut g = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(child), Some(parent), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(GraphError::Malformed { line: i + 1 });
            };
            let (child, parent) = (child.trim(), parent.trim());
            if child.is_empty() || parent.is_empty() {
                return Err(GraphError::Malformed { line: i + 1 });
            }
            if child == parent {
                return Err(GraphError::SelfLoop {
                    line: i + 1,
                    node: child.to_string(),
                });
            }
            g.add_edge(child, parent);
        }
        g.finish();
        Ok(g)
    }

    /// Builds a graph from `(child, parent)` pairs.
    pub fn from_edges<'a>(
        edges: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, GraphError> {
        let mut g = Self::new();
        for (child, parent) in edges {
            if child == parent {
                return Err(GraphError::SelfLoop {
                    line: 0,
                    node: child.to_string(),
                });
            }
            g.add_edge(child, parent);
        }
        g.finish();
        Ok(g)
    }

    pub fn add_node(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        self.neighbors.push(Vec::new());
        self.children.push(Vec::new());
        i
    }

    fn add_edge(&mut self, child: &str, parent: &str) {
        let c = self.add_node(child);
        let p = self.add_node(parent);
        self.neighbors[c].push(p);
        self.neighbors[p].push(c);
        self.children[p].push(c);
    }

    fn finish(&mut self) {
        for list in self.neighbors.iter_mut().chain(self.children.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node(&self, name: &str) -> Result<usize, GraphError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn hyponyms(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.children[node].is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    /// Undirected BFS distances from `src`; `None` when unreachable.
    pub fn bfs(&self, src: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.len()];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(node) = queue.pop_front() {
            let d = dist[node].unwrap();
            for &next in &self.neighbors[node] {
                if dist[next].is_none() {
                    dist[next] = Some(d + 1);
                    queue.push_back(next);
                }
            }
        }
        dist
    }
}

/// Shortest-path edge counts for each queried pair; unreachable pairs are
/// `None` and belong outside the pair set.
pub fn graph_distances(
    g: &SemanticGraph,
    pairs: &[(&str, &str)],
) -> Result<Vec<Option<u32>>, GraphError> {
    let mut cache: HashMap<usize, Vec<Option<u32>>> = HashMap::new();
    pairs
        .iter()
        .map(|&(a, b)| {
            let (a, b) = (g.node(a)?, g.node(b)?);
            let from = cache.entry(a).or_insert_with(|| g.bfs(a));
            Ok(from[b])
        })
        .collect()
}

/// `root` plus every node reaching it through hypernym links.
pub fn category_members(g: &SemanticGraph, root: &str) -> Result<BTreeSet<usize>, GraphError> {
    let root = g.node(root)?;
    Ok(descendants(g, root))
}

pub(crate) fn descendants(g: &SemanticGraph, root: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::from([root]);
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        for &c in g.hyponyms(node) {
            if out.insert(c) {
                stack.push(c);
            }
        }
    }
    out
}
