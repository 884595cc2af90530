//! Loading activations, gold structures and splits for a run.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use geoprobe::gold::{
    parse_conllu, DependencySentence, GoldStructure, PhonemeFeatureTable, SemanticGraph,
};
use geoprobe::tensor_io::{read_tensor, ActivationMatrix, SpanTable};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Loaded, Task};
use crate::output::{read_csv, Provenance};

/// Activation files matched by `paths.activations`, sorted by path.
pub fn activation_files(l: &Loaded) -> Result<Vec<(String, PathBuf)>> {
    let Some(pattern) = &l.config.paths.activations else {
        bail!("config is missing paths.activations");
    };
    let full = l.resolve(pattern);
    let mut files: Vec<PathBuf> = glob::glob(&full.to_string_lossy())
        .with_context(|| format!("bad glob {pattern:?}"))?
        .collect::<Result<_, _>>()?;
    files.sort();
    if files.is_empty() {
        bail!("paths.activations = {pattern:?} matched no files");
    }
    Ok(files.into_iter().map(|p| (l.label(&p), p)).collect())
}

pub enum TaskData {
    Syntax(Vec<DependencySentence>),
    Semantic {
        graph: SemanticGraph,
        /// Activation id to graph node.
        rename: Option<HashMap<String, String>>,
    },
    Phoneme {
        labels: HashMap<String, String>,
        table: PhonemeFeatureTable,
    },
}

impl TaskData {
    pub fn load(l: &Loaded, prov: &mut Provenance) -> Result<Self> {
        let p = &l.config.paths;
        match l.config.task {
            Task::Syntax => {
                let (label, path) = l.require("gold", &p.gold)?;
                prov.add_input(&label, &path)?;
                let text = fs::read_to_string(&path)?;
                let sentences = parse_conllu(&text).with_context(|| format!("parsing {label}"))?;
                Ok(Self::Syntax(sentences))
            }
            Task::Semantic => {
                let (label, path) = l.require("gold", &p.gold)?;
                prov.add_input(&label, &path)?;
                let graph = SemanticGraph::from_tsv(&fs::read_to_string(&path)?)
                    .with_context(|| format!("parsing {label}"))?;
                let rename = match l.optional("pairs", &p.pairs)? {
                    Some((label, path)) => {
                        prov.add_input(&label, &path)?;
                        let (header, rows) = read_csv(&path)?;
                        if header != ["synset", "lemma"] {
                            bail!("{label}: expected columns synset,lemma");
                        }
                        Some(
                            rows.into_iter()
                                .map(|r| (r[1].clone(), r[0].clone()))
                                .collect(),
                        )
                    }
                    None => None,
                };
                Ok(Self::Semantic { graph, rename })
            }
            Task::Phoneme => {
                let (label, path) = l.require("spans", &p.spans)?;
                prov.add_input(&label, &path)?;
                let spans = SpanTable::read(&path, l.config.frame_rate)?;
                let labels = spans
                    .spans
                    .into_iter()
                    .map(|s| (s.element_id, s.label))
                    .collect();
                let table = match l.optional("features", &p.features)? {
                    Some((label, path)) => {
                        prov.add_input(&label, &path)?;
                        PhonemeFeatureTable::from_csv(&fs::read_to_string(&path)?)
                            .with_context(|| format!("parsing {label}"))?
                    }
                    None => PhonemeFeatureTable::english_vowels(),
                };
                Ok(Self::Phoneme { labels, table })
            }
        }
    }

    /// Activations with ids mapped onto gold element names; rows without a
    /// gold counterpart are dropped.
    pub fn prepare(&self, acts: ActivationMatrix) -> Result<ActivationMatrix> {
        let keep: Vec<(usize, String)> = acts
            .element_ids()
            .iter()
            .enumerate()
            .filter_map(|(i, id)| self.gold_name(id).map(|g| (i, g)))
            .collect();
        if keep.is_empty() {
            bail!("no activation rows match the gold structure");
        }
        if keep.len() == acts.nrows() && keep.iter().all(|(i, g)| acts.element_ids()[*i] == *g) {
            return Ok(acts);
        }
        let rows: Vec<usize> = keep.iter().map(|k| k.0).collect();
        let data = acts.data().select(ndarray::Axis(0), &rows);
        Ok(
            ActivationMatrix::new(data, keep.into_iter().map(|k| k.1).collect())?
                .with_layer(acts.layer)
                .with_checkpoint_words(acts.checkpoint_words)
                .with_model(acts.model.clone()),
        )
    }

    fn gold_name(&self, id: &str) -> Option<String> {
        match self {
            Self::Syntax(_) => Some(id.to_string()),
            Self::Semantic { graph, rename } => {
                let name = match rename {
                    Some(map) => map.get(id)?.clone(),
                    None => id.to_string(),
                };
                graph.contains(&name).then_some(name)
            }
            Self::Phoneme { labels, table } => {
                let label = labels.get(id)?;
                table.features(label).ok().map(|_| id.to_string())
            }
        }
    }

    /// Split units: sentence ids for syntax, element ids otherwise.
    pub fn units(&self, acts: &ActivationMatrix) -> Vec<String> {
        match self {
            Self::Syntax(sentences) => {
                let index = acts.index();
                sentences
                    .iter()
                    .filter(|s| {
                        s.element_ids()
                            .iter()
                            .all(|e| index.contains_key(e.as_str()))
                    })
                    .map(|s| s.id.clone())
                    .collect()
            }
            _ => acts.element_ids().to_vec(),
        }
    }

    pub fn gold(&self, units: &[String]) -> Result<GoldStructure> {
        let wanted: HashSet<&str> = units.iter().map(String::as_str).collect();
        Ok(match self {
            Self::Syntax(sentences) => {
                let chosen: Vec<DependencySentence> = sentences
                    .iter()
                    .filter(|s| wanted.contains(s.id.as_str()))
                    .cloned()
                    .collect();
                GoldStructure::from_sentences(&chosen)
            }
            Self::Semantic { graph, .. } => GoldStructure::from_graph(graph, units)?,
            Self::Phoneme { labels, table } => {
                let l: Vec<String> = units.iter().map(|u| labels[u].clone()).collect();
                GoldStructure::from_phonemes(units, &l, table)?
            }
        })
    }

    pub fn sentences(&self, units: &[String]) -> Option<Vec<DependencySentence>> {
        let Self::Syntax(all) = self else {
            return None;
        };
        let wanted: HashSet<&str> = units.iter().map(String::as_str).collect();
        Some(
            all.iter()
                .filter(|s| wanted.contains(s.id.as_str()))
                .cloned()
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSets {
    pub train: Vec<String>,
    #[serde(default)]
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Split from `paths.split`, or a seeded 80/10/10 split of `units`. A file
/// without a validation set gives up the last tenth of its training units.
pub fn split(l: &Loaded, units: &[String], prov: &mut Provenance) -> Result<SplitSets> {
    let known: HashSet<&str> = units.iter().map(String::as_str).collect();
    let mut sets = match l.optional("split", &l.config.paths.split)? {
        Some((label, path)) => {
            prov.add_input(&label, &path)?;
            let mut s: SplitSets = serde_json::from_slice(&fs::read(&path)?)
                .with_context(|| format!("parsing {label}"))?;
            for v in [&mut s.train, &mut s.validation, &mut s.test] {
                v.retain(|u| known.contains(u.as_str()));
            }
            s
        }
        None => {
            let mut order = units.to_vec();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(l.config.seed));
            let n = order.len();
            let n_test = (n / 10).max(1);
            let n_val = (n / 10).max(1);
            let test = order.split_off(n.saturating_sub(n_test));
            let validation = order.split_off(order.len().saturating_sub(n_val));
            SplitSets {
                train: order,
                validation,
                test,
            }
        }
    };
    if sets.validation.is_empty() && sets.train.len() >= 2 {
        let n_val = (sets.train.len() / 10).max(1);
        sets.validation = sets.train.split_off(sets.train.len() - n_val);
    }
    if sets.train.is_empty() || sets.test.is_empty() {
        bail!(
            "split needs training and test units matching the activations (train {}, test {})",
            sets.train.len(),
            sets.test.len()
        );
    }
    Ok(sets)
}

pub fn load_acts(
    label: &str,
    path: &std::path::Path,
    prov: &mut Provenance,
) -> Result<ActivationMatrix> {
    prov.add_input(label, path)?;
    read_tensor(path).with_context(|| format!("reading {label}"))
}

/// `element_id,category` table.
pub fn read_categories(path: &std::path::Path) -> Result<BTreeMap<String, String>> {
    let (header, rows) = read_csv(path)?;
    if header.len() < 2 {
        bail!("{}: expected columns element_id,category", path.display());
    }
    Ok(rows
        .into_iter()
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect())
}
