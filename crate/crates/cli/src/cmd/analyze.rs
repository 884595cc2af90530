use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use geoprobe::analysis::{
    encode_units, joint_outliers, layers_above_fraction, probe_unit_norms, subspace_alignment,
    Validation,
};
use ndarray::{Array2, Axis};

use super::train::{read_probe, Manifest};
use crate::config::Loaded;
use crate::data::{activation_files, load_acts};
use crate::output::{fmt, read_csv, write_csv, Provenance};
use crate::Failure;

type LayerKey = (u32, Option<u64>);

/// Probe paths of a manifest keyed by `(layer, checkpoint_words)`.
fn probes(
    l: &Loaded,
    field: &str,
    value: &Option<String>,
    prov: &mut Provenance,
) -> Result<BTreeMap<LayerKey, std::path::PathBuf>> {
    let (label, path) = l.require(field, value)?;
    prov.add_input(&label, &path)?;
    let manifest = Manifest::read(&path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut out = BTreeMap::new();
    for e in manifest.entries {
        if let (Some(layer), Some(probe)) = (e.layer, e.probe) {
            out.insert((layer, e.checkpoint_words), dir.join(probe));
        }
    }
    if out.is_empty() {
        bail!("{label} lists no trained probes");
    }
    Ok(out)
}

/// Per-layer `spearman` values from an eval `layer_scores.csv`.
fn layer_scores(path: &Path) -> Result<Vec<(u32, f64)>> {
    let (header, rows) = read_csv(path)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: missing column {name}", path.display()))
    };
    let (cl, cm, cv) = (col("layer")?, col("metric")?, col("value")?);
    let mut best: BTreeMap<u32, f64> = BTreeMap::new();
    for r in rows
        .iter()
        .filter(|r| r[cm] == "spearman" && !r[cv].is_empty())
    {
        let layer: u32 = r[cl]
            .parse()
            .with_context(|| format!("bad layer {:?}", r[cl]))?;
        let v: f64 = r[cv]
            .parse()
            .with_context(|| format!("bad value {:?}", r[cv]))?;
        let e = best.entry(layer).or_insert(f64::NEG_INFINITY);
        *e = e.max(v);
    }
    Ok(best.into_iter().collect())
}

/// Layers kept by the score filter; every layer when no scores are given.
fn kept_layers(l: &Loaded, prov: &mut Provenance) -> Result<Option<BTreeSet<u32>>> {
    let p = &l.config.paths;
    let mut kept: Option<BTreeSet<u32>> = None;
    for (field, value) in [
        ("semantic_scores", &p.semantic_scores),
        ("syntax_scores", &p.syntax_scores),
    ] {
        if let Some((label, path)) = l.optional(field, value)? {
            prov.add_input(&label, &path)?;
            let layers: BTreeSet<u32> =
                layers_above_fraction(&layer_scores(&path)?, l.config.analyze.layer_fraction)
                    .into_iter()
                    .collect();
            kept = Some(match kept {
                Some(k) => k.intersection(&layers).copied().collect(),
                None => layers,
            });
        }
    }
    Ok(kept)
}

/// `element_id` plus numeric feature columns, aligned to `ids`.
fn univariate(path: &Path, ids: &[String]) -> Result<Array2<f64>> {
    let (header, rows) = read_csv(path)?;
    if header.len() < 2 || header[0] != "element_id" {
        bail!(
            "{}: expected element_id followed by feature columns",
            path.display()
        );
    }
    let index: HashMap<&str, &Vec<String>> = rows.iter().map(|r| (r[0].as_str(), r)).collect();
    let mut out = Array2::zeros((ids.len(), header.len() - 1));
    for (i, id) in ids.iter().enumerate() {
        let row = index
            .get(id.as_str())
            .ok_or_else(|| anyhow!("{}: no row for {id}", path.display()))?;
        for j in 1..header.len() {
            out[[i, j - 1]] = row[j]
                .parse()
                .with_context(|| format!("{}: bad value for {id}", path.display()))?;
        }
    }
    Ok(out)
}

pub fn run(l: &Loaded) -> Result<(), Failure> {
    let cfg = &l.config.analyze;
    let p = &l.config.paths;
    let mut prov = Provenance::new("analyze", &l.hash(), l.config.seed);
    let sem = probes(l, "semantic_manifest", &p.semantic_manifest, &mut prov)?;
    let syn = probes(l, "syntax_manifest", &p.syntax_manifest, &mut prov)?;
    let sem_keys: Vec<_> = sem.keys().collect();
    let syn_keys: Vec<_> = syn.keys().collect();
    if sem_keys != syn_keys {
        return Err(anyhow!(
            "semantic and syntactic manifests cover different layers: {:?} vs {:?}",
            sem_keys,
            syn_keys
        )
        .into());
    }
    let kept = kept_layers(l, &mut prov)?;
    let acts_by_layer: BTreeMap<u32, (String, std::path::PathBuf)> = match &p.activations {
        Some(_) => activation_files(l)?
            .into_iter()
            .map(|(label, path)| {
                let layer = geoprobe::tensor_io::read_tensor(&path)?.layer;
                Ok((layer, (label, path)))
            })
            .collect::<Result<_>>()?,
        None => {
            eprintln!("analyze: paths.activations unset, skipping encoding models");
            BTreeMap::new()
        }
    };
    let uni_path = l.optional("univariate", &p.univariate)?;
    if uni_path.is_none() && !acts_by_layer.is_empty() {
        eprintln!("analyze: paths.univariate unset, incremental R² omitted");
    }
    let validation = Validation::NestedCv(cfg.cv.clone());

    let (mut align_rows, mut norm_rows, mut outlier_rows, mut enc_rows) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (key, sem_path) in &sem {
        let (layer, words) = *key;
        let ckpt = words.map(|w| w.to_string()).unwrap_or_default();
        prov.add_input(&l.label(sem_path), sem_path)?;
        prov.add_input(&l.label(&syn[key]), &syn[key])?;
        let b_sem = read_probe(sem_path)?;
        let b_syn = read_probe(&syn[key])?;
        if b_sem.nrows() != b_syn.nrows() {
            return Err(anyhow!(
                "layer {layer}: probes read {} vs {} units",
                b_sem.nrows(),
                b_syn.nrows()
            )
            .into());
        }
        let in_filter = kept.as_ref().is_none_or(|k| k.contains(&layer));
        let alignment =
            subspace_alignment(&b_sem, &b_syn).with_context(|| format!("layer {layer}"))?;
        align_rows.push(vec![
            layer.to_string(),
            ckpt.clone(),
            fmt(Some(alignment)),
            in_filter.to_string(),
        ]);

        let ns = probe_unit_norms(&b_sem, cfg.outlier_factor);
        let nx = probe_unit_norms(&b_syn, cfg.outlier_factor);
        let joint = joint_outliers(&ns, &nx);
        for u in 0..b_sem.nrows() {
            norm_rows.push(vec![
                layer.to_string(),
                ckpt.clone(),
                u.to_string(),
                fmt(Some(ns.norms[u])),
                fmt(Some(nx.norms[u])),
                ns.outliers.binary_search(&u).is_ok().to_string(),
                nx.outliers.binary_search(&u).is_ok().to_string(),
            ]);
        }
        outlier_rows.push(vec![
            layer.to_string(),
            ckpt.clone(),
            ns.outliers.len().to_string(),
            nx.outliers.len().to_string(),
            joint.len().to_string(),
        ]);

        let Some((label, path)) = acts_by_layer.get(&layer).filter(|_| in_filter) else {
            continue;
        };
        let acts = load_acts(label, path, &mut prov)?;
        let h = acts.to_f64();
        if h.ncols() != b_sem.nrows() {
            return Err(anyhow!(
                "layer {layer}: {label} has {} units, probes {}",
                h.ncols(),
                b_sem.nrows()
            )
            .into());
        }
        let mut targets: Vec<usize> = if joint.is_empty() {
            ns.outliers
                .iter()
                .chain(&nx.outliers)
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        } else {
            joint
        };
        targets.truncate(cfg.max_units);
        if targets.is_empty() {
            eprintln!("analyze: layer {layer}: no outlier units to model");
            continue;
        }
        let x_sem = h.dot(&b_sem);
        let x_syn = h.dot(&b_syn);
        let y = h.select(Axis(1), &targets);
        let x_uni = match &uni_path {
            Some((ul, up)) => {
                prov.add_input(ul, up)?;
                Some(univariate(up, acts.element_ids())?)
            }
            None => None,
        };
        let fits = encode_units(
            x_sem.view(),
            x_syn.view(),
            x_uni.as_ref().map(|u| u.view()),
            y.view(),
            &validation,
        )
        .with_context(|| format!("encoding models for layer {layer}"))?;
        for f in fits {
            let inc = f.incremental.as_ref();
            enc_rows.push(vec![
                layer.to_string(),
                ckpt.clone(),
                targets[f.unit].to_string(),
                fmt(Some(f.partition.r2_semantic)),
                fmt(Some(f.partition.r2_syntax)),
                fmt(Some(f.partition.r2_total)),
                fmt(Some(f.partition.cross_term)),
                fmt(inc.map(|i| i.r2_univariate)),
                fmt(inc.map(|i| i.r2_joint)),
                fmt(inc.map(|i| i.delta)),
            ]);
        }
    }

    let dir = l.out_dir.join("analyze");
    write_csv(
        &dir.join("alignment.csv"),
        &prov,
        &["layer", "checkpoint_words", "alignment", "in_layer_filter"],
        &align_rows,
    )?;
    write_csv(
        &dir.join("norms.csv"),
        &prov,
        &[
            "layer",
            "checkpoint_words",
            "unit",
            "norm_semantic",
            "norm_syntax",
            "outlier_semantic",
            "outlier_syntax",
        ],
        &norm_rows,
    )?;
    write_csv(
        &dir.join("outliers.csv"),
        &prov,
        &["layer", "checkpoint_words", "semantic", "syntax", "joint"],
        &outlier_rows,
    )?;
    if !enc_rows.is_empty() {
        write_csv(
            &dir.join("encoding.csv"),
            &prov,
            &[
                "layer",
                "checkpoint_words",
                "unit",
                "r2_semantic",
                "r2_syntax",
                "r2_total",
                "cross_term",
                "r2_univariate",
                "r2_joint",
                "delta_r2",
            ],
            &enc_rows,
        )?;
    }
    eprintln!("analyze: {} layers compared", align_rows.len());
    Ok(())
}
