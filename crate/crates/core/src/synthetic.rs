//! Seeded fixtures with known ground truth: activations that encode
//! dependency trees in a hidden subspace, logistic learning curves, and a
//! three-level category hierarchy.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::analysis::Logistic;
use crate::gold::{DependencySentence, SemanticGraph};
use crate::tensor_io::ActivationMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub sentences: usize,
    pub words: usize,
    /// Activation width `k`.
    pub units: usize,
    /// Width of the hidden tree subspace; at least `words − 1`.
    pub subspace: usize,
    /// Standard deviation of the noise outside the subspace.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    /// 75 sentences of 8 words (600 elements), `k = 128`, an 8-d subspace
    /// and noise 0.1.
    fn default() -> Self {
        Self {
            sentences: 75,
            words: 8,
            units: 128,
            subspace: 8,
            noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub acts: ActivationMatrix,
    pub sentences: Vec<DependencySentence>,
    /// `k × subspace` orthonormal basis of the tree subspace.
    pub basis: Array2<f64>,
}

/// Random orthogonal `n × n` matrix (QR of a Gaussian matrix with the sign
/// convention that makes it Haar distributed).
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    Array2::from_shape_fn((n, n), |(i, j)| q[(i, j)] * r[(j, j)].signum())
}

/// 1-based heads of a random tree: word `i > 0` attaches to a uniformly
/// chosen earlier word, word 0 is the root.
pub fn random_heads(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n)
        .map(|i| if i == 0 { 0 } else { rng.gen_range(0..i) + 1 })
        .collect()
}

pub fn random_sentences(count: usize, words: usize, seed: u64) -> Vec<DependencySentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|s| {
            DependencySentence::from_heads(format!("s{s:03}"), &random_heads(words, &mut rng))
                .expect("valid tree")
        })
        .collect()
}

/// Activations whose squared distances, restricted to a hidden subspace,
/// equal tree distances exactly: each edge moves along its own orthonormal
/// direction. Gaussian noise fills the orthogonal complement.
pub fn planted_trees(cfg: &PlantedConfig) -> Planted {
    assert!(cfg.words >= 1 && cfg.words - 1 <= cfg.subspace && cfg.subspace <= cfg.units);
    let sentences = random_sentences(cfg.sentences, cfg.words, cfg.seed);
    embed_sentences(&sentences, cfg)
}

/// Embeds given trees the way [`planted_trees`] does.
pub fn embed_sentences(sentences: &[DependencySentence], cfg: &PlantedConfig) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let rotation = random_orthogonal(cfg.units, &mut rng);
    let (p, k) = (cfg.subspace, cfg.units);
    let noise = Normal::new(0.0, cfg.noise).expect("finite noise");
    let total: usize = sentences.iter().map(DependencySentence::len).sum();
    let mut latent = Array2::<f64>::zeros((total, k));
    let mut ids = Vec::with_capacity(total);
    let mut row = 0;
    for s in sentences {
        let n = s.len();
        assert!(
            n == 0 || n - 1 <= p,
            "sentence {} needs {} edge directions",
            s.id,
            n - 1
        );
        let dirs = random_orthogonal(p, &mut rng);
        let offset: Array1<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // position of each word = offset + sum of edge directions on its root
        // path; each non-root word owns the direction of the edge to its head
        let mut edge_dir = vec![0; n];
        let mut next = 0;
        for (i, w) in s.words.iter().enumerate() {
            if w.head != 0 {
                edge_dir[i] = next;
                next += 1;
            }
        }
        let mut pos = vec![None::<Array1<f64>>; n];
        fn place(
            i: usize,
            s: &DependencySentence,
            dirs: &Array2<f64>,
            edge_dir: &[usize],
            offset: &Array1<f64>,
            pos: &mut [Option<Array1<f64>>],
        ) -> Array1<f64> {
            if let Some(v) = &pos[i] {
                return v.clone();
            }
            let v = match s.words[i].head {
                0 => offset.clone(),
                h => place(h - 1, s, dirs, edge_dir, offset, pos) + dirs.row(edge_dir[i]),
            };
            pos[i] = Some(v.clone());
            v
        }
        for i in 0..n {
            let v = place(i, s, &dirs, &edge_dir, &offset, &mut pos);
            latent.row_mut(row).slice_mut(ndarray::s![..p]).assign(&v);
            for c in p..k {
                latent[[row, c]] = noise.sample(&mut rng);
            }
            row += 1;
        }
        ids.extend(s.element_ids());
    }
    let data = latent.dot(&rotation.t());
    let basis = rotation.slice(ndarray::s![.., ..p]).to_owned();
    Planted {
        acts: ActivationMatrix::new(data.mapv(|v| v as f32), ids).expect("unique ids"),
        sentences: sentences.to_vec(),
        basis,
    }
}

/// Same sentence ids and lengths with fresh random trees, for a
/// random-label control.
pub fn shuffled_trees(sentences: &[DependencySentence], seed: u64) -> Vec<DependencySentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sentences
        .iter()
        .map(|s| {
            let mut order: Vec<usize> = (0..s.len()).collect();
            order.shuffle(&mut rng);
            // random tree over a random relabelling of positions
            let shape = random_heads(s.len(), &mut rng);
            let mut heads = vec![0; s.len()];
            for (slot, &word) in order.iter().enumerate() {
                heads[word] = match shape[slot] {
                    0 => 0,
                    h => order[h - 1] + 1,
                };
            }
            let mut out = DependencySentence::from_heads(s.id.clone(), &heads).expect("valid tree");
            for (w, orig) in out.words.iter_mut().zip(&s.words) {
                w.token_id.clone_from(&orig.token_id);
                w.form.clone_from(&orig.form);
            }
            out
        })
        .collect()
}

/// `(words, score)` samples of a logistic over `μ ± 3` (log10 words) with
/// Gaussian noise.
pub fn logistic_points(truth: &Logistic, points: usize, noise: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).expect("finite noise");
    let last = (points.max(2) - 1) as f64;
    (0..points)
        .map(|i| {
            let x = truth.mu - 3.0 + 6.0 * i as f64 / last;
            (10f64.powf(x), truth.eval(x) + normal.sample(&mut rng))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub graph: SemanticGraph,
    /// Leaf names, the elements to split.
    pub elements: Vec<String>,
    /// Member indices (into `elements`) of every non-root internal node.
    pub categories: Vec<Vec<usize>>,
    pub category_names: Vec<String>,
}

/// Root → `top` categories → `per_top` subcategories each → `elements`
/// leaves. Leaves land in subcategories with uneven, seeded weights so
/// category sizes vary.
pub fn hierarchy(elements: usize, top: usize, per_top: usize, seed: u64) -> Hierarchy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut subs = Vec::new();
    for t in 0..top {
        let tn = format!("cat{t}");
        edges.push((tn.clone(), "root".into()));
        for m in 0..per_top {
            let mn = format!("cat{t}.{m}");
            edges.push((mn.clone(), tn.clone()));
            subs.push((t, mn));
        }
    }
    let weights: Vec<f64> = subs.iter().map(|_| rng.gen_range(0.3..2.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut leaves_of: Vec<Vec<usize>> = vec![Vec::new(); subs.len()];
    let names: Vec<String> = (0..elements).map(|i| format!("leaf{i:04}")).collect();
    for (i, name) in names.iter().enumerate() {
        let mut u = rng.gen_range(0.0..total);
        let mut c = 0;
        while c + 1 < weights.len() && u >= weights[c] {
            u -= weights[c];
            c += 1;
        }
        leaves_of[c].push(i);
        edges.push((name.clone(), subs[c].1.clone()));
    }
    let graph = SemanticGraph::from_edges(edges.iter().map(|(a, b)| (a.as_str(), b.as_str())))
        .expect("acyclic");
    let mut categories = Vec::new();
    let mut category_names = Vec::new();
    for t in 0..top {
        let mut members: Vec<usize> = subs
            .iter()
            .zip(&leaves_of)
            .filter(|((st, _), _)| *st == t)
            .flat_map(|(_, l)| l.iter().copied())
            .collect();
        members.sort_unstable();
        categories.push(members);
        category_names.push(format!("cat{t}"));
    }
    for ((_, name), leaves) in subs.iter().zip(leaves_of) {
        categories.push(leaves);
        category_names.push(name.clone());
    }
    Hierarchy {
        graph,
        elements: names,
        categories,
        category_names,
    }
}
