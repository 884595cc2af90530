//! Browser demo operations. Each is a plain function returning a
//! serializable result; the `#[wasm_bindgen]` wrappers hand JSON to the page.

use geoprobe::analysis::{emergence_point, fit_emergence, subspace_alignment, FitOptions};
use geoprobe::gold::GoldStructure;
use geoprobe::metrics::{
    eval_distance_probe, eval_uuas, mst, project, squared_distances, EvalOptions,
};
use geoprobe::probe::{train_probe, BatchSpec, TrainConfig};
use geoprobe::synthetic::{planted_trees, random_orthogonal, PlantedConfig};
use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub sentence: usize,
    pub word: usize,
}

#[derive(Debug, Serialize)]
pub struct Projection {
    /// Held-out sentences only.
    pub points: Vec<Point>,
    /// Minimum-spanning-tree edges of the projected points (indices into `points`).
    pub predicted: Vec<(usize, usize)>,
    pub gold: Vec<(usize, usize)>,
    pub spearman: Option<f64>,
    pub uuas: Option<f64>,
}

/// Trains a 2-D distance probe on planted trees and projects held-out
/// sentences through it.
pub fn planted_projection(
    sentences: usize,
    words: usize,
    noise: f64,
    epochs: usize,
    seed: u64,
) -> Result<Projection, String> {
    if sentences < 4 || words < 2 {
        return Err("need at least 4 sentences of 2 words".into());
    }
    let cfg = PlantedConfig {
        sentences,
        words,
        units: 32.max(words),
        subspace: words - 1,
        noise,
        seed,
    };
    let planted = planted_trees(&cfg);
    let s = &planted.sentences;
    let n_test = (sentences / 4).max(1);
    let n_val = (sentences / 8).max(1);
    let n_train = sentences - n_test - n_val;
    let train = GoldStructure::from_sentences(&s[..n_train]);
    let val = GoldStructure::from_sentences(&s[n_train..n_train + n_val]);
    let test_sentences = &s[n_train + n_val..];
    let test = GoldStructure::from_sentences(test_sentences);
    let train_cfg = TrainConfig {
        learning_rate: 1e-2,
        probe_dim: 2,
        epochs,
        batch: BatchSpec {
            units_per_batch: 4,
            set_size: None,
        },
        seed,
        ..TrainConfig::syntax()
    };
    let out = train_probe(&train_cfg, &planted.acts, &train, &val).map_err(|e| e.to_string())?;
    let w = &out.probe.weights;
    let opts = EvalOptions::default();
    let spearman = eval_distance_probe(w, &planted.acts, &test, &opts)
        .map_err(|e| e.to_string())?
        .aggregate;
    let uuas = eval_uuas(w, &planted.acts, &test)
        .map_err(|e| e.to_string())?
        .aggregate;

    let mut proj = Projection {
        points: Vec::new(),
        predicted: Vec::new(),
        gold: Vec::new(),
        spearman,
        uuas,
    };
    for (si, sentence) in test_sentences.iter().enumerate() {
        let ids = sentence.element_ids();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let z = project(w, &planted.acts, &refs).map_err(|e| e.to_string())?;
        let base = proj.points.len();
        for (wi, row) in z.rows().into_iter().enumerate() {
            proj.points.push(Point {
                x: row[0],
                y: row[1],
                sentence: si,
                word: wi,
            });
        }
        for (a, b) in mst(&squared_distances(&z)).map_err(|e| e.to_string())? {
            proj.predicted.push((base + a, base + b));
        }
        proj.gold.extend(
            sentence
                .edges()
                .into_iter()
                .map(|(a, b)| (base + a, base + b)),
        );
    }
    Ok(proj)
}

#[derive(Debug, Serialize)]
pub struct CurveFit {
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub sigma: f64,
    /// log10 words where the curve reaches `level` of its rise.
    pub emergence_log10: f64,
    pub extrapolated: bool,
    /// `(log10 words, fitted score)` across the observed range.
    pub curve: Vec<(f64, f64)>,
}

/// Logistic fit of `(words, score)` points.
pub fn fit_curve(words: &[f64], scores: &[f64], level: f64) -> Result<CurveFit, String> {
    if words.len() != scores.len() {
        return Err("words and scores differ in length".into());
    }
    let points: Vec<(f64, f64)> = words.iter().copied().zip(scores.iter().copied()).collect();
    let curve = fit_emergence(&points, &FitOptions::default()).map_err(|e| e.to_string())?;
    let p = curve.params.ok_or("scores are flat; no curve to fit")?;
    let pt = emergence_point(&curve, level).map_err(|e| e.to_string())?;
    let (lo, hi) = curve.log10_range();
    let samples = 60;
    Ok(CurveFit {
        a: p.a,
        b: p.b,
        mu: p.mu,
        sigma: p.sigma,
        emergence_log10: pt.log10_words,
        extrapolated: pt.extrapolated,
        curve: (0..samples)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
                (x, p.eval(x))
            })
            .collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct AlignmentDemo {
    pub alignment: f64,
    /// `shared / p` for this construction.
    pub expected: f64,
    /// Mean alignment of two random `p`-d subspaces of `R^k`.
    pub random_baseline: f64,
}

/// Two `k × p` probes whose column spaces share `shared` directions, each
/// mixed by a random invertible matrix.
pub fn alignment_demo(
    k: usize,
    p: usize,
    shared: usize,
    seed: u64,
) -> Result<AlignmentDemo, String> {
    if p == 0 || shared > p || 2 * p - shared > k {
        return Err(format!(
            "need 0 < p, shared <= p and 2p - shared <= k (k {k}, p {p}, shared {shared})"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_orthogonal(k, &mut rng);
    let mut mix = || random_orthogonal(p, &mut rng) + Array2::<f64>::eye(p) * 0.5;
    let b1 = q.slice(s![.., 0..p]).dot(&mix());
    let b2 = q.slice(s![.., p - shared..2 * p - shared]).dot(&mix());
    Ok(AlignmentDemo {
        alignment: subspace_alignment(&b1, &b2).map_err(|e| e.to_string())?,
        expected: shared as f64 / p as f64,
        random_baseline: p as f64 / k as f64,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string())))
}

#[wasm_bindgen(js_name = plantedProjection)]
pub fn planted_projection_js(
    sentences: usize,
    words: usize,
    noise: f64,
    epochs: usize,
    seed: u64,
) -> Result<String, JsError> {
    to_js(planted_projection(sentences, words, noise, epochs, seed))
}

#[wasm_bindgen(js_name = fitCurve)]
pub fn fit_curve_js(words: &[f64], scores: &[f64], level: f64) -> Result<String, JsError> {
    to_js(fit_curve(words, scores, level))
}

#[wasm_bindgen(js_name = alignmentDemo)]
pub fn alignment_demo_js(k: usize, p: usize, shared: usize, seed: u64) -> Result<String, JsError> {
    to_js(alignment_demo(k, p, shared, seed))
}
