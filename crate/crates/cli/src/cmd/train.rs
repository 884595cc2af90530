use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use geoprobe::metrics::EvalOptions;
use geoprobe::probe::{grid_search, lr_grid, train_probe, EpochLoss, GridRow, Objective, Probe};
use geoprobe::tensor_io::{read_tensor, write_tensor, ActivationMatrix};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Loaded, Task};
use crate::data::{activation_files, split, SplitSets, TaskData};
use crate::output::{fmt, write_csv, write_json, Provenance};
use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub activations: String,
    pub layer: Option<u32>,
    pub checkpoint_words: Option<u64>,
    /// Paths relative to the manifest's directory.
    pub probe: Option<String>,
    pub sidecar: Option<String>,
    pub status: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: Task,
    pub objective: Objective,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing manifest {}", path.display()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub activations: String,
    pub layer: u32,
    pub checkpoint_words: Option<u64>,
    pub units: usize,
    pub probe: Probe,
    pub history: Vec<EpochLoss>,
    pub train_units: usize,
    pub validation_units: usize,
}

#[derive(Deserialize)]
struct SidecarFile {
    provenance: SidecarProvenance,
    #[serde(flatten)]
    sidecar: Sidecar,
}

#[derive(Deserialize)]
struct SidecarProvenance {
    config_sha256: String,
}

pub fn probe_to_matrix(weights: &Array2<f64>, template: &ActivationMatrix) -> ActivationMatrix {
    let ids = (0..weights.nrows()).map(|i| format!("unit{i}")).collect();
    ActivationMatrix::new(weights.mapv(|v| v as f32), ids)
        .expect("unique unit ids")
        .with_layer(template.layer)
        .with_checkpoint_words(template.checkpoint_words)
        .with_model(format!("probe/{}", template.model))
}

pub fn read_probe(path: &Path) -> Result<Array2<f64>> {
    Ok(read_tensor(path)
        .with_context(|| format!("reading probe {}", path.display()))?
        .to_f64())
}

fn stem(label: &str) -> String {
    let trimmed = label.strip_suffix(".act").unwrap_or(label);
    trimmed
        .replace(['/', '\\'], "_")
        .trim_start_matches(['.', '_'])
        .to_string()
}

struct Done {
    entry: ManifestEntry,
    grid: Vec<GridRow>,
    inputs: Provenance,
}

#[allow(clippy::too_many_arguments)]
fn train_one(
    l: &Loaded,
    label: &str,
    path: &Path,
    data: &TaskData,
    sets: &SplitSets,
    base: &Provenance,
    use_grid: bool,
    resume: bool,
) -> Result<Done> {
    let name = stem(label);
    let probe_rel = format!("probes/{name}.act");
    let side_rel = format!("probes/{name}.json");
    let probe_path = l.out_dir.join(&probe_rel);
    let side_path = l.out_dir.join(&side_rel);
    let mut prov = base.clone();

    if resume && probe_path.exists() && side_path.exists() {
        let file: SidecarFile = serde_json::from_slice(&std::fs::read(&side_path)?)
            .with_context(|| format!("reading {}", side_path.display()))?;
        if file.provenance.config_sha256 == l.hash() {
            prov.add_input(label, path)?;
            return Ok(Done {
                entry: ManifestEntry {
                    activations: label.to_string(),
                    layer: Some(file.sidecar.layer),
                    checkpoint_words: file.sidecar.checkpoint_words,
                    probe: Some(probe_rel),
                    sidecar: Some(side_rel),
                    status: "resumed".into(),
                    error: None,
                },
                grid: Vec::new(),
                inputs: prov,
            });
        }
    }

    let acts = data.prepare(crate::data::load_acts(label, path, &mut prov)?)?;
    let train_gold = data.gold(&sets.train)?;
    let val_gold = data.gold(&sets.validation)?;
    let base_cfg = l.train_config();
    let opts = eval_options(l);
    let (outcome, grid) = if use_grid {
        let g = &l.config.grid;
        let lrs = lr_grid(g.low, g.high, g.points, g.spacing);
        let res = grid_search(&base_cfg, &lrs, &acts, &train_gold, &val_gold, &opts)?;
        (res.best_outcome, res.rows)
    } else {
        (
            train_probe(&base_cfg, &acts, &train_gold, &val_gold)?,
            Vec::new(),
        )
    };

    write_atomic_tensor(&probe_path, &probe_to_matrix(&outcome.probe.weights, &acts))?;
    let sidecar = Sidecar {
        activations: label.to_string(),
        layer: acts.layer,
        checkpoint_words: acts.checkpoint_words,
        units: acts.ncols(),
        probe: outcome.probe,
        history: outcome.history,
        train_units: sets.train.len(),
        validation_units: sets.validation.len(),
    };
    write_json(&side_path, &prov, &sidecar)?;
    Ok(Done {
        entry: ManifestEntry {
            activations: label.to_string(),
            layer: Some(acts.layer),
            checkpoint_words: acts.checkpoint_words,
            probe: Some(probe_rel),
            sidecar: Some(side_rel),
            status: "trained".into(),
            error: None,
        },
        grid,
        inputs: prov,
    })
}

pub fn write_atomic_tensor(path: &Path, m: &ActivationMatrix) -> Result<()> {
    let dir = path.parent().context("output path has a parent")?;
    std::fs::create_dir_all(dir)?;
    let tmp: PathBuf = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().context("file name")?.to_string_lossy(),
        std::process::id()
    ));
    write_tensor(m, &tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn eval_options(l: &Loaded) -> EvalOptions {
    EvalOptions {
        set_size: l.config.eval.set_size,
        seed: l.config.seed,
        min_sentence_words: l.config.eval.min_sentence_words,
    }
}

pub fn run(l: &Loaded, use_grid: bool, resume: bool) -> Result<(), Failure> {
    let mut prov = Provenance::new("train", &l.hash(), l.config.seed);
    let files = activation_files(l)?;
    let data = TaskData::load(l, &mut prov)?;
    let first =
        data.prepare(read_tensor(&files[0].1).with_context(|| format!("reading {}", files[0].0))?)?;
    let sets = split(l, &data.units(&first), &mut prov)?;
    drop(first);

    let results: Vec<Result<Done>> = files
        .par_iter()
        .map(|(label, path)| {
            train_one(l, label, path, &data, &sets, &prov, use_grid, resume)
                .with_context(|| format!("layer file {label}"))
        })
        .collect();

    let mut entries = Vec::new();
    let mut grid_rows = Vec::new();
    let mut failed = 0;
    for ((label, path), r) in files.iter().zip(results) {
        match r {
            Ok(done) => {
                for row in &done.grid {
                    grid_rows.push(vec![
                        done.entry.layer.map(|v| v.to_string()).unwrap_or_default(),
                        done.entry
                            .checkpoint_words
                            .map(|v| v.to_string())
                            .unwrap_or_default(),
                        format!("{:e}", row.learning_rate),
                        fmt(row.validation_score),
                        fmt(row.validation_loss),
                    ]);
                }
                prov.merge(&done.inputs);
                eprintln!("train: {label} {}", done.entry.status);
                entries.push(done.entry);
            }
            Err(e) => {
                failed += 1;
                eprintln!("train: {label} failed: {e:#}");
                prov.add_input(label, path).ok();
                entries.push(ManifestEntry {
                    activations: label.clone(),
                    layer: None,
                    checkpoint_words: None,
                    probe: None,
                    sidecar: None,
                    status: "failed".into(),
                    error: Some(format!("{e:#}")),
                });
            }
        }
    }
    if use_grid {
        write_csv(
            &l.out_dir.join("grid_report.csv"),
            &prov,
            &[
                "layer",
                "checkpoint_words",
                "learning_rate",
                "validation_score",
                "validation_loss",
            ],
            &grid_rows,
        )?;
    }
    let manifest = Manifest {
        task: l.config.task,
        objective: l.config.objective,
        entries,
    };
    write_json(&l.out_dir.join("manifest.json"), &prov, &manifest)?;
    if failed > 0 {
        return Err(Failure::partial(anyhow!(
            "{failed} of {} layer files failed",
            files.len()
        )));
    }
    Ok(())
}
