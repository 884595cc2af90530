use std::collections::BTreeMap;

use anyhow::{anyhow, Context, Result};
use geoprobe::dataset::graph_categories;
use geoprobe::metrics::{
    eval_distance_probe, eval_rank, eval_uuas, knn_f1, linear_tree_control, project,
    random_probe_null, EvalReport,
};
use geoprobe::tensor_io::read_tensor;
use serde::Serialize;

use super::train::{eval_options, read_probe, Manifest};
use crate::config::Loaded;
use crate::data::{split, SplitSets, TaskData};
use crate::output::{fmt, write_atomic, write_csv, write_json, Provenance};
use crate::Failure;

#[derive(Debug, Clone, Serialize)]
struct Best {
    checkpoint_words: Option<u64>,
    metric: String,
    layer: u32,
    relative_depth: f64,
    value: f64,
}

#[derive(Serialize)]
struct BestReport {
    best: Vec<Best>,
}

/// Lower is better for rank scores; higher for everything else.
fn lower_is_better(metric: &str) -> bool {
    metric == "rank"
}

struct Scored {
    layer: u32,
    checkpoint_words: Option<u64>,
    reports: Vec<EvalReport>,
    extra: Vec<(String, Option<f64>)>,
}

fn knn_score(
    l: &Loaded,
    data: &TaskData,
    sets: &SplitSets,
    weights: &ndarray::Array2<f64>,
    acts: &geoprobe::tensor_io::ActivationMatrix,
) -> Result<Option<f64>> {
    let TaskData::Semantic { graph, .. } = data else {
        return Ok(None);
    };
    let elements: Vec<String> = sets.train.iter().chain(&sets.test).cloned().collect();
    let categories: Vec<Vec<usize>> =
        graph_categories(graph, &elements, l.config.eval.min_category_size)
            .into_iter()
            .map(|(_, m)| m)
            .filter(|m| m.len() < elements.len())
            .collect();
    if categories.is_empty() {
        return Ok(None);
    }
    let refs: Vec<&str> = elements.iter().map(String::as_str).collect();
    let z = project(weights, acts, &refs)?;
    let train: Vec<usize> = (0..sets.train.len()).collect();
    let test: Vec<usize> = (sets.train.len()..elements.len()).collect();
    let f1 = knn_f1(
        &z,
        &elements,
        &train,
        &test,
        &categories,
        l.config.eval.knn_k,
    )?;
    Ok(Some(f1.iter().sum::<f64>() / f1.len() as f64))
}

pub fn run(l: &Loaded, baseline: bool) -> Result<(), Failure> {
    let mut prov = Provenance::new("eval", &l.hash(), l.config.seed);
    let manifest_path = l.manifest_path();
    let manifest = Manifest::read(&manifest_path)?;
    prov.add_input(&l.label(&manifest_path), &manifest_path)?;
    let manifest_dir = manifest_path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_default();
    let data = TaskData::load(l, &mut prov)?;
    let usable: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| e.probe.is_some())
        .collect();
    let Some(first) = usable.first() else {
        return Err(anyhow!("manifest lists no trained probes").into());
    };
    let first_acts = data.prepare(read_tensor(l.resolve(&first.activations))?)?;
    let sets = split(l, &data.units(&first_acts), &mut prov)?;
    drop(first_acts);
    let test_gold = data.gold(&sets.test)?;
    let opts = eval_options(l);

    let mut scored = Vec::new();
    for entry in manifest.entries.iter() {
        let Some(probe_rel) = &entry.probe else {
            eprintln!("eval: skipping {} ({})", entry.activations, entry.status);
            continue;
        };
        let probe_path = manifest_dir.join(probe_rel);
        if !probe_path.exists() {
            eprintln!("eval: warning: probe {probe_rel} is missing, skipping");
            continue;
        }
        prov.add_input(probe_rel, &probe_path)?;
        let weights = read_probe(&probe_path)?;
        let acts_path = l.resolve(&entry.activations);
        let acts = data.prepare(crate::data::load_acts(
            &entry.activations,
            &acts_path,
            &mut prov,
        )?)?;
        let ctx = || format!("evaluating {}", entry.activations);

        let mut reports =
            vec![eval_distance_probe(&weights, &acts, &test_gold, &opts).with_context(ctx)?];
        if test_gold.has_edges() {
            if let Some(sentences) = data.sentences(&sets.test) {
                reports.push(eval_uuas(&weights, &acts, &test_gold).with_context(ctx)?);
                let (_, linear) =
                    linear_tree_control(&weights, &acts, &sentences, &opts).with_context(ctx)?;
                reports.push(linear);
            }
            reports.push(eval_rank(&weights, &acts, &test_gold).with_context(ctx)?);
        }
        let mut extra = Vec::new();
        if let Some(f1) = knn_score(l, &data, &sets, &weights, &acts).with_context(ctx)? {
            extra.push(("knn_f1".to_string(), Some(f1)));
        }
        if baseline {
            let null = random_probe_null(
                &acts,
                &test_gold,
                weights.ncols(),
                l.config.eval.baseline_reps,
                l.config.seed,
                &opts,
            )
            .with_context(ctx)?;
            let mean = (!null.is_empty()).then(|| null.iter().sum::<f64>() / null.len() as f64);
            extra.push(("baseline_spearman".to_string(), mean));
        }
        scored.push(Scored {
            layer: acts.layer,
            checkpoint_words: acts.checkpoint_words,
            reports,
            extra,
        });
    }
    if scored.is_empty() {
        return Err(anyhow!("no probe could be evaluated").into());
    }

    let num_layers = l
        .config
        .eval
        .num_layers
        .unwrap_or_else(|| scored.iter().map(|s| s.layer).max().unwrap_or(0) + 1);
    let depth = |layer: u32| {
        if num_layers <= 1 {
            0.0
        } else {
            f64::from(layer) / f64::from(num_layers - 1)
        }
    };

    scored.sort_by_key(|s| (s.checkpoint_words, s.layer));
    let mut rows = Vec::new();
    let mut best: BTreeMap<(Option<u64>, String), Best> = BTreeMap::new();
    let eval_dir = l.out_dir.join("eval");
    for s in &scored {
        let mut values: Vec<(String, Option<f64>)> = s
            .reports
            .iter()
            .map(|r| (r.metric.clone(), r.aggregate))
            .collect();
        values.extend(s.extra.iter().cloned());
        for (metric, value) in &values {
            rows.push(vec![
                s.layer.to_string(),
                format!("{:.6}", depth(s.layer)),
                s.checkpoint_words
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                metric.clone(),
                fmt(*value),
            ]);
            let Some(v) = value else { continue };
            let key = (s.checkpoint_words, metric.clone());
            let better = match best.get(&key) {
                None => true,
                Some(b) if lower_is_better(metric) => {
                    *v < b.value || (*v == b.value && s.layer < b.layer)
                }
                Some(b) => *v > b.value || (*v == b.value && s.layer < b.layer),
            };
            if better {
                best.insert(
                    key,
                    Best {
                        checkpoint_words: s.checkpoint_words,
                        metric: metric.clone(),
                        layer: s.layer,
                        relative_depth: depth(s.layer),
                        value: *v,
                    },
                );
            }
        }
        for r in &s.reports {
            let name = match s.checkpoint_words {
                Some(w) => format!("layer{:03}_ckpt{w}_{}.csv", s.layer, r.metric),
                None => format!("layer{:03}_{}.csv", s.layer, r.metric),
            };
            let text = format!("{}{}", prov.csv_header(), r.to_csv());
            write_atomic(&eval_dir.join("details").join(name), text.as_bytes())?;
        }
    }
    write_csv(
        &eval_dir.join("layer_scores.csv"),
        &prov,
        &[
            "layer",
            "relative_depth",
            "checkpoint_words",
            "metric",
            "value",
        ],
        &rows,
    )?;
    write_json(
        &eval_dir.join("best_layers.json"),
        &prov,
        &BestReport {
            best: best.into_values().collect(),
        },
    )?;
    eprintln!("eval: {} probes scored", scored.len());
    Ok(())
}
