use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use geoprobe::metrics::{category_centroids, mst, project, squared_distances};
use ndarray::{Array2, Axis};

use super::train::{read_probe, Manifest};
use crate::config::Loaded;
use crate::data::{activation_files, load_acts, read_categories, TaskData};
use crate::output::{fmt, write_atomic, write_csv, Provenance};
use crate::svg::{Marker, Scatter};
use crate::Failure;

/// Palette slot (grey) for elements without a category.
const UNCATEGORIZED: usize = 7;

/// Probe path and activation label for the configured layer.
fn locate(l: &Loaded, prov: &mut Provenance) -> Result<(std::path::PathBuf, String)> {
    let want = l.config.visualize.layer;
    if let Some(probe) = &l.config.visualize.probe {
        let probe_path = l.resolve(probe);
        let files = activation_files(l)?;
        let pick = match want {
            Some(layer) => files.into_iter().find(|(_, p)| {
                geoprobe::tensor_io::read_tensor(p)
                    .map(|a| a.layer == layer)
                    .unwrap_or(false)
            }),
            None if files.len() == 1 => files.into_iter().next(),
            None => bail!("several activation files match; set visualize.layer"),
        };
        let (label, _) = pick.ok_or_else(|| anyhow!("no activation file for layer {want:?}"))?;
        return Ok((probe_path, label));
    }
    let manifest_path = l.manifest_path();
    let manifest = Manifest::read(&manifest_path)?;
    prov.add_input(&l.label(&manifest_path), &manifest_path)?;
    let trained: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| e.probe.is_some())
        .collect();
    let entry = match want {
        Some(layer) => trained.iter().find(|e| e.layer == Some(layer)),
        None if trained.len() == 1 => trained.first(),
        None => bail!(
            "manifest holds {} probes; set visualize.layer",
            trained.len()
        ),
    }
    .ok_or_else(|| anyhow!("manifest has no trained probe for layer {want:?}"))?;
    let dir = manifest_path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_default();
    Ok((
        dir.join(entry.probe.as_ref().expect("filtered")),
        entry.activations.clone(),
    ))
}

pub fn run(l: &Loaded, tree: bool) -> Result<(), Failure> {
    let mut prov = Provenance::new("visualize", &l.hash(), l.config.seed);
    let (probe_path, acts_label) = locate(l, &mut prov)?;
    prov.add_input(&l.label(&probe_path), &probe_path)?;
    let weights = read_probe(&probe_path)?;
    if weights.ncols() != 2 {
        return Err(anyhow!(
            "visualize draws 2-D probes only; {} has dimension {}. Train with train.probe_dim = 2",
            l.label(&probe_path),
            weights.ncols()
        )
        .into());
    }
    let data = TaskData::load(l, &mut prov)?;
    let acts = data.prepare(load_acts(&acts_label, &l.resolve(&acts_label), &mut prov)?)?;
    let select = l.config.visualize.select.as_deref().unwrap_or("");

    // groups of element ids: sentences for syntax, one group otherwise
    let groups: Vec<Vec<String>> = match data.sentences(&data.units(&acts)) {
        Some(sentences) => sentences
            .iter()
            .filter(|s| s.id.starts_with(select))
            .map(|s| s.element_ids())
            .collect(),
        None => vec![acts
            .element_ids()
            .iter()
            .filter(|id| id.starts_with(select))
            .cloned()
            .collect()],
    };
    let ids: Vec<String> = groups.iter().flatten().cloned().collect();
    if ids.is_empty() {
        return Err(anyhow!("visualize.select = {select:?} matches no elements").into());
    }
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let z = project(&weights, &acts, &refs).context("projecting")?;

    let categories = match l.optional("categories", &l.config.paths.categories)? {
        Some((label, path)) => {
            prov.add_input(&label, &path)?;
            Some(read_categories(&path)?)
        }
        None => None,
    };
    let mut category_index: BTreeMap<String, usize> = BTreeMap::new();
    if let Some(c) = &categories {
        for id in &ids {
            if let Some(cat) = c.get(id) {
                let next = category_index.len();
                category_index.entry(cat.clone()).or_insert(next);
            }
        }
    }
    let group_of = |i: usize, g: usize| -> usize {
        match &categories {
            Some(c) => c
                .get(&ids[i])
                .map_or(UNCATEGORIZED, |cat| category_index[cat]),
            None => g,
        }
    };

    let mut plot = Scatter {
        title: format!("{} layer {}", acts.model, acts.layer),
        ..Scatter::default()
    };
    let mut start = 0;
    for (g, members) in groups.iter().enumerate() {
        for i in start..start + members.len() {
            plot.points.push(Marker {
                x: z[[i, 0]],
                y: z[[i, 1]],
                label: ids[i].clone(),
                group: group_of(i, g),
            });
        }
        if tree && members.len() > 1 {
            let sub: Array2<f64> = z
                .slice(ndarray::s![start..start + members.len(), ..])
                .to_owned();
            for (a, b) in mst(&squared_distances(&sub)).context("spanning tree")? {
                plot.edges.push((start + a, start + b));
            }
        }
        start += members.len();
    }
    if let Some(c) = &categories {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); category_index.len()];
        for (i, id) in ids.iter().enumerate() {
            if let Some(cat) = c.get(id) {
                members[category_index[cat]].push(i);
            }
        }
        let centroids = category_centroids(&z, &members).context("centroids")?;
        for (name, &k) in &category_index {
            let row = centroids.index_axis(Axis(0), k);
            plot.centroids.push(Marker {
                x: row[0],
                y: row[1],
                label: name.clone(),
                group: k,
            });
        }
    }

    let dir = l.out_dir.join("visualize");
    let stem = format!("layer{:03}", acts.layer);
    write_atomic(
        &dir.join(format!("{stem}.svg")),
        plot.render(l.config.visualize.width, l.config.visualize.height)
            .as_bytes(),
    )?;
    let rows: Vec<Vec<String>> = plot
        .points
        .iter()
        .map(|m| {
            vec![
                m.label.clone(),
                m.group.to_string(),
                fmt(Some(m.x)),
                fmt(Some(m.y)),
            ]
        })
        .collect();
    write_csv(
        &dir.join(format!("{stem}_coords.csv")),
        &prov,
        &["element_id", "group", "x", "y"],
        &rows,
    )?;
    eprintln!(
        "visualize: {} points, {} edges",
        plot.points.len(),
        plot.edges.len()
    );
    Ok(())
}
