//! Probing dataset construction: unisemic synset/lemma selection and
//! category-balanced train/test splitting by simulated annealing.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gold::SemanticGraph;

/// Synsets with candidate lemmas, plus per-lemma frequency scores.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Lexicon {
    pub synsets: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub frequencies: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WordlistSummary {
    pub selected: usize,
    pub pruned_leaves: Vec<String>,
    pub dropped: Vec<String>,
    pub rounds: usize,
}

/// Assigns each synset its most specific lemma.
///
/// Lemmas listed under a single synset are assigned to it, and a synset that
/// owns at least one such lemma releases its shared lemmas so they may become
/// unique elsewhere. After this fixpoint, leaf synsets (no hyponyms in
/// `graph`) still owning nothing are pruned and the fixpoint is rerun. Each
/// surviving synset keeps its highest-frequency unique lemma; ties go to the
/// lexicographically smaller lemma. Synsets absent from `graph` count as
/// leaves.
pub fn unisemic_wordlist(
    lex: &Lexicon,
    graph: &SemanticGraph,
) -> (Vec<(String, String)>, WordlistSummary) {
    let mut lists: BTreeMap<&str, BTreeSet<&str>> = lex
        .synsets
        .iter()
        .map(|(s, lemmas)| (s.as_str(), lemmas.iter().map(String::as_str).collect()))
        .collect();
    let mut summary = WordlistSummary::default();

    summary.rounds += release_shared(&mut lists);

    let pruned: Vec<&str> = lists
        .iter()
        .filter(|(s, lemmas)| {
            let leaf = graph.node(s).map(|n| graph.is_leaf(n)).unwrap_or(true);
            leaf && owned(&lists, lemmas).is_empty()
        })
        .map(|(s, _)| *s)
        .collect();
    for s in &pruned {
        lists.remove(s);
    }
    summary.pruned_leaves = pruned.iter().map(|s| s.to_string()).collect();

    summary.rounds += release_shared(&mut lists);

    let mut pairs = Vec::new();
    for (synset, lemmas) in &lists {
        let unique = owned(&lists, lemmas);
        let best = unique.into_iter().max_by(|a, b| {
            let fa = lex.frequencies.get(*a).copied().unwrap_or(0.0);
            let fb = lex.frequencies.get(*b).copied().unwrap_or(0.0);
            fa.total_cmp(&fb).then_with(|| b.cmp(a))
        });
        match best {
            Some(lemma) => pairs.push((synset.to_string(), lemma.to_string())),
            None => summary.dropped.push(synset.to_string()),
        }
    }
    summary.selected = pairs.len();
    (pairs, summary)
}

fn lemma_counts<'a>(lists: &BTreeMap<&'a str, BTreeSet<&'a str>>) -> BTreeMap<&'a str, usize> {
    let mut counts = BTreeMap::new();
    for lemmas in lists.values() {
        for &l in lemmas {
            *counts.entry(l).or_insert(0) += 1;
        }
    }
    counts
}

fn owned<'a>(
    lists: &BTreeMap<&'a str, BTreeSet<&'a str>>,
    lemmas: &BTreeSet<&'a str>,
) -> Vec<&'a str> {
    let counts = lemma_counts(lists);
    lemmas.iter().copied().filter(|l| counts[l] == 1).collect()
}

// Returns the number of rounds until no list changes.
fn release_shared(lists: &mut BTreeMap<&str, BTreeSet<&str>>) -> usize {
    let mut rounds = 0;
    loop {
        rounds += 1;
        let counts = lemma_counts(lists);
        let mut changed = false;
        for lemmas in lists.values_mut() {
            let has_unique = lemmas.iter().any(|l| counts[l] == 1);
            if has_unique && lemmas.iter().any(|l| counts[l] > 1) {
                lemmas.retain(|l| counts[l] == 1);
                changed = true;
            }
        }
        if !changed {
            return rounds;
        }
    }
}

/// Keeps pairs whose every word appears in `allowed`. Multiword lemmas are
/// split on whitespace and underscores.
pub fn filter_vocabulary(
    pairs: &[(String, String)],
    allowed: &HashSet<String>,
) -> Vec<(String, String)> {
    pairs
        .iter()
        .filter(|(_, lemma)| {
            let mut words = lemma
                .split(|c: char| c.is_whitespace() || c == '_')
                .filter(|w| !w.is_empty())
                .peekable();
            words.peek().is_some() && words.all(|w| allowed.contains(w))
        })
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryFraction {
    pub category: usize,
    pub size: usize,
    pub test_count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitAssignment {
    pub labels: Vec<Split>,
    pub test_fraction: f64,
    pub initial_cost: f64,
    pub cost: f64,
    /// `(iteration, cost)` samples taken during annealing.
    pub trace: Vec<(usize, f64)>,
}

impl SplitAssignment {
    pub fn from_labels(labels: Vec<Split>, test_fraction: f64, categories: &[Vec<usize>]) -> Self {
        let cost = split_cost(&labels, categories, test_fraction);
        Self {
            labels,
            test_fraction,
            initial_cost: cost,
            cost,
            trace: Vec::new(),
        }
    }

    pub fn category_fractions(&self, categories: &[Vec<usize>]) -> Vec<CategoryFraction> {
        categories
            .iter()
            .enumerate()
            .map(|(category, members)| {
                let test_count = members
                    .iter()
                    .filter(|&&i| self.labels[i] == Split::Test)
                    .count();
                CategoryFraction {
                    category,
                    size: members.len(),
                    test_count,
                    fraction: if members.is_empty() {
                        0.0
                    } else {
                        test_count as f64 / members.len() as f64
                    },
                }
            })
            .collect()
    }

    pub fn test_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Split::Test).count()
    }
}

/// Σ_j (t_j − f·|C_j|)² where t_j counts test members of category j.
pub fn split_cost(labels: &[Split], categories: &[Vec<usize>], test_fraction: f64) -> f64 {
    categories
        .iter()
        .map(|members| {
            let t = members
                .iter()
                .filter(|&&i| labels[i] == Split::Test)
                .count() as f64;
            let r = t - test_fraction * members.len() as f64;
            r * r
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub test_fraction: f64,
    pub iterations: usize,
    pub cooling: f64,
    pub initial_temperature: f64,
    pub seed: u64,
    /// Cost samples kept in the trace.
    pub trace_points: usize,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            iterations: 1_000_000,
            cooling: 0.999_995,
            initial_temperature: 1.0,
            seed: 0,
            trace_points: 100,
        }
    }
}

/// Metropolis acceptance: improvements always, otherwise with probability
/// `exp(-delta / temperature)`.
pub fn accept_move(delta: f64, temperature: f64, u: f64) -> bool {
    delta < 0.0 || u < (-delta / temperature).exp()
}

/// Splits `n_elements` so each category holds about `test_fraction` test
/// members. Starts from independent Bernoulli draws and flips one random
/// element per iteration.
pub fn sa_split(
    n_elements: usize,
    categories: &[Vec<usize>],
    cfg: &AnnealConfig,
) -> SplitAssignment {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels: Vec<Split> = (0..n_elements)
        .map(|_| {
            if rng.gen_bool(cfg.test_fraction) {
                Split::Test
            } else {
                Split::Train
            }
        })
        .collect();
    if n_elements == 0 {
        return SplitAssignment::from_labels(labels, cfg.test_fraction, categories);
    }

    let mut membership: Vec<Vec<usize>> = vec![Vec::new(); n_elements];
    for (j, members) in categories.iter().enumerate() {
        for &i in members {
            membership[i].push(j);
        }
    }
    let targets: Vec<f64> = categories
        .iter()
        .map(|m| cfg.test_fraction * m.len() as f64)
        .collect();
    let mut test_counts: Vec<f64> = categories
        .iter()
        .map(|m| m.iter().filter(|&&i| labels[i] == Split::Test).count() as f64)
        .collect();
    let cost_of = |counts: &[f64]| -> f64 {
        counts
            .iter()
            .zip(&targets)
            .map(|(t, target)| (t - target) * (t - target))
            .sum()
    };
    let initial_cost = cost_of(&test_counts);
    let mut cost = initial_cost;
    let mut temperature = cfg.initial_temperature;
    let every = (cfg.iterations / cfg.trace_points.max(1)).max(1);
    let mut trace = vec![(0, cost)];

    for iter in 1..=cfg.iterations {
        let i = rng.gen_range(0..n_elements);
        let step = match labels[i] {
            Split::Train => 1.0,
            Split::Test => -1.0,
        };
        // (t + s - τ)² - (t - τ)² = 2s(t - τ) + 1
        let delta: f64 = membership[i]
            .iter()
            .map(|&j| 2.0 * step * (test_counts[j] - targets[j]) + 1.0)
            .sum();
        let u: f64 = rng.gen();
        if accept_move(delta, temperature, u) {
            labels[i] = if step > 0.0 {
                Split::Test
            } else {
                Split::Train
            };
            for &j in &membership[i] {
                test_counts[j] += step;
            }
            cost += delta;
        }
        temperature *= cfg.cooling;
        if iter % every == 0 {
            trace.push((iter, cost));
        }
    }
    // recompute to shed accumulated rounding
    let cost = cost_of(&test_counts);
    SplitAssignment {
        labels,
        test_fraction: cfg.test_fraction,
        initial_cost,
        cost,
        trace,
    }
}

/// Categories (node plus all hyponym descendants) of every node with at
/// least `min_size` members, as indices into `elements`. Nodes not in
/// `elements` still contribute their descendants.
pub fn graph_categories(
    graph: &SemanticGraph,
    elements: &[String],
    min_size: usize,
) -> Vec<(String, Vec<usize>)> {
    let position: std::collections::HashMap<&str, usize> = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    let mut out = Vec::new();
    for node in 0..graph.len() {
        let members: Vec<usize> = crate::gold::descendants(graph, node)
            .into_iter()
            .filter_map(|n| position.get(graph.name(n)).copied())
            .collect();
        if !members.is_empty() && members.len() >= min_size {
            let mut members = members;
            members.sort_unstable();
            out.push((graph.name(node).to_string(), members));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon(entries: &[(&str, &[&str])], freqs: &[(&str, f64)]) -> Lexicon {
        Lexicon {
            synsets: entries
                .iter()
                .map(|(s, ls)| (s.to_string(), ls.iter().map(|l| l.to_string()).collect()))
                .collect(),
            frequencies: freqs.iter().map(|(l, f)| (l.to_string(), *f)).collect(),
        }
    }

    #[test]
    fn unique_lemma_is_selected() {
        let lex = lexicon(&[("x.n.01", &["quark"]), ("y.n.01", &["lepton"])], &[]);
        let g = SemanticGraph::from_tsv("x.n.01\ty.n.01\n").unwrap();
        let (pairs, _) = unisemic_wordlist(&lex, &g);
        assert!(pairs.contains(&("x.n.01".into(), "quark".into())));
    }

    #[test]
    fn shared_leaf_is_pruned() {
        // L is a leaf sharing its only lemma with internal synset I
        let lex = lexicon(&[("l.n.01", &["bank"]), ("i.n.01", &["bank"])], &[]);
        let g = SemanticGraph::from_tsv("l.n.01\ti.n.01\n").unwrap();
        let (pairs, summary) = unisemic_wordlist(&lex, &g);
        assert_eq!(pairs, vec![("i.n.01".into(), "bank".into())]);
        assert_eq!(summary.pruned_leaves, vec!["l.n.01"]);
    }

    #[test]
    fn release_makes_lemmas_unique_elsewhere() {
        // a owns "alpha" so it releases "shared"; b then owns "shared"
        let lex = lexicon(
            &[("a.n.01", &["alpha", "shared"]), ("b.n.01", &["shared"])],
            &[],
        );
        let g = SemanticGraph::from_tsv("a.n.01\troot\nb.n.01\troot\nc\tb.n.01\n").unwrap();
        let (pairs, _) = unisemic_wordlist(&lex, &g);
        assert_eq!(
            pairs,
            vec![
                ("a.n.01".into(), "alpha".into()),
                ("b.n.01".into(), "shared".into())
            ]
        );
    }

    #[test]
    fn highest_frequency_wins() {
        let lex = lexicon(&[("s.n.01", &["a", "b"])], &[("a", 2.1), ("b", 7.4)]);
        let (pairs, _) = unisemic_wordlist(&lex, &SemanticGraph::new());
        assert_eq!(pairs, vec![("s.n.01".into(), "b".into())]);
    }

    #[test]
    fn internal_synsets_without_unique_lemma_are_dropped() {
        let lex = lexicon(&[("p.n.01", &["run"]), ("q.n.01", &["run"])], &[]);
        let g = SemanticGraph::from_tsv("x\tp.n.01\ny\tq.n.01\n").unwrap();
        let (pairs, summary) = unisemic_wordlist(&lex, &g);
        assert!(pairs.is_empty());
        assert_eq!(summary.dropped, vec!["p.n.01", "q.n.01"]);
    }

    #[test]
    fn wordlist_uniqueness() {
        let lex = lexicon(
            &[
                ("a", &["x", "y", "z"]),
                ("b", &["y", "w"]),
                ("c", &["z", "w", "v"]),
                ("d", &["v"]),
                ("e", &["x"]),
            ],
            &[("x", 1.0), ("z", 3.0)],
        );
        let g = SemanticGraph::from_tsv("b\ta\nc\ta\nd\tc\ne\tb\n").unwrap();
        let (pairs, _) = unisemic_wordlist(&lex, &g);
        let synsets: HashSet<_> = pairs.iter().map(|p| &p.0).collect();
        let lemmas: HashSet<_> = pairs.iter().map(|p| &p.1).collect();
        assert_eq!(synsets.len(), pairs.len());
        assert_eq!(lemmas.len(), pairs.len());
    }

    fn set(words: &[&str]) -> HashSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn vocabulary_filter() {
        let pairs = vec![
            ("dog.n.01".to_string(), "dog".to_string()),
            ("hound.n.01".to_string(), "hunting dog".to_string()),
        ];
        assert_eq!(
            filter_vocabulary(&pairs, &set(&["dog"])),
            pairs[..1].to_vec()
        );
        assert!(filter_vocabulary(&pairs, &HashSet::new()).is_empty());
        let once = filter_vocabulary(&pairs, &set(&["dog", "hunting"]));
        assert_eq!(once.len(), 2);
        assert_eq!(filter_vocabulary(&once, &set(&["dog", "hunting"])), once);
    }

    fn labels(test: &[usize], n: usize) -> Vec<Split> {
        (0..n)
            .map(|i| {
                if test.contains(&i) {
                    Split::Test
                } else {
                    Split::Train
                }
            })
            .collect()
    }

    #[test]
    fn cost_values() {
        let cat = vec![(0..10).collect::<Vec<_>>()];
        assert_eq!(split_cost(&labels(&[0, 1], 10), &cat, 0.2), 0.0);
        // (4 - 2)^2
        assert!((split_cost(&labels(&[0, 1, 2, 3], 10), &cat, 0.2) - 4.0).abs() < 1e-12);

        let a = vec![(0..10).collect::<Vec<_>>()];
        let b = vec![(10..15).collect::<Vec<_>>()];
        let both = [a.clone(), b.clone()].concat();
        let l = labels(&[0, 1, 2, 10, 11], 15);
        let sum = split_cost(&l, &a, 0.2) + split_cost(&l, &b, 0.2);
        assert!((split_cost(&l, &both, 0.2) - sum).abs() < 1e-12);
    }

    #[test]
    fn zero_delta_is_always_accepted() {
        for u in [0.0, 0.5, 0.999_999] {
            assert!(accept_move(0.0, 1e-3, u));
        }
        assert!(accept_move(-1.0, 1e-9, 0.999));
        assert!(!accept_move(5.0, 1e-3, 0.5));
    }

    #[test]
    fn five_element_category_reaches_one_test_member() {
        let cat = vec![(0..5).collect::<Vec<_>>()];
        // exhaustive oracle over all 2^5 assignments
        let (best_cost, best_count) = (0u32..32)
            .map(|mask| {
                let l: Vec<Split> = (0..5)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            Split::Test
                        } else {
                            Split::Train
                        }
                    })
                    .collect();
                (split_cost(&l, &cat, 0.2), mask.count_ones())
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        assert!(best_cost < 1e-12);
        assert_eq!(best_count, 1);

        let cfg = AnnealConfig {
            iterations: 20_000,
            cooling: 0.9995,
            seed: 9,
            ..AnnealConfig::default()
        };
        let split = sa_split(5, &cat, &cfg);
        assert_eq!(split.test_count(), 1);
        assert!(split.cost < 1e-12);
    }

    #[test]
    fn deterministic_under_seed() {
        let cats = vec![
            (0..40).collect::<Vec<_>>(),
            (0..20).collect(),
            (20..40).collect(),
        ];
        let cfg = AnnealConfig {
            iterations: 10_000,
            seed: 4,
            ..AnnealConfig::default()
        };
        assert_eq!(sa_split(40, &cats, &cfg), sa_split(40, &cats, &cfg));
    }

    #[test]
    fn incremental_cost_matches_recomputation() {
        let cats = vec![
            (0..30).collect::<Vec<_>>(),
            (0..12).collect(),
            (12..30).step_by(2).collect(),
        ];
        for seed in 0..5 {
            let cfg = AnnealConfig {
                iterations: 2_000,
                seed,
                ..AnnealConfig::default()
            };
            let s = sa_split(30, &cats, &cfg);
            assert!((s.cost - split_cost(&s.labels, &cats, 0.2)).abs() < 1e-9);
            assert!(s.cost <= s.initial_cost);
        }
    }

    #[test]
    fn categories_from_graph() {
        let g = SemanticGraph::from_tsv("b\ta\nc\ta\nd\tb\n").unwrap();
        let elements: Vec<String> = ["b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let cats = graph_categories(&g, &elements, 1);
        assert_eq!(
            cats,
            vec![
                ("a".to_string(), vec![0, 1, 2]),
                ("b".to_string(), vec![0, 2]),
                ("c".to_string(), vec![1]),
                ("d".to_string(), vec![2]),
            ]
        );
        assert_eq!(graph_categories(&g, &elements, 2).len(), 2);
    }
}
