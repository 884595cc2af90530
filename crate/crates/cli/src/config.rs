//! Run configuration (TOML or JSON) and its validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use geoprobe::analysis::CvConfig;
use geoprobe::dataset::AnnealConfig;
use geoprobe::probe::{AmsGradParams, LrSpacing, Objective, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::output::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Phoneme,
    Semantic,
    Syntax,
}

/// Input locations, relative to the configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Glob of `.act` files, one per (layer, checkpoint).
    pub activations: Option<String>,
    /// CoNLL-U treebank (syntax) or `child<TAB>parent` graph (semantic).
    pub gold: Option<String>,
    /// JSON split: `{"train": [...], "validation": [...], "test": [...]}`.
    pub split: Option<String>,
    /// Span table whose labels name the phoneme of each element.
    pub spans: Option<String>,
    /// Articulatory feature CSV; built-in English vowels when absent.
    pub features: Option<String>,
    /// `synset,lemma` pairs mapping activation ids to graph nodes.
    pub pairs: Option<String>,
    /// `element_id,category` table for visual centroids.
    pub categories: Option<String>,
    /// Lexicon JSON for `build-dataset`.
    pub lexicon: Option<String>,
    /// Allowed vocabulary, one word per line, for `build-dataset`.
    pub vocabulary: Option<String>,
    /// Probe manifest; defaults to `<out>/manifest.json`.
    pub manifest: Option<String>,
    /// Score tables (`structure,checkpoint_words,score`) for `emergence`.
    #[serde(default)]
    pub scores: Vec<String>,
    pub semantic_manifest: Option<String>,
    pub syntax_manifest: Option<String>,
    /// `eval` layer score tables; `analyze` keeps layers whose Spearman is
    /// within `analyze.layer_fraction` of the best.
    pub semantic_scores: Option<String>,
    pub syntax_scores: Option<String>,
    /// `element_id,feature...` table of univariate predictors.
    pub univariate: Option<String>,
    /// Frame-level activations and frame rate for `pool`.
    pub frames: Option<String>,
}

/// Optional overrides of the task's default probe settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub probe_dim: Option<usize>,
    pub epochs: Option<usize>,
    pub init_scale: Option<f64>,
    pub units_per_batch: Option<usize>,
    pub set_size: Option<usize>,
    pub negatives_per_anchor: Option<usize>,
    pub optimizer: Option<AmsGradParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub low: f64,
    pub high: f64,
    pub points: usize,
    pub spacing: LrSpacing,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            low: 1e-7,
            high: 1e-2,
            points: 20,
            spacing: LrSpacing::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub set_size: usize,
    pub min_sentence_words: usize,
    pub knn_k: usize,
    pub min_category_size: usize,
    pub baseline_reps: usize,
    /// Layer count for relative depth; the largest layer index + 1 when unset.
    pub num_layers: Option<u32>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            set_size: 12,
            min_sentence_words: 3,
            knn_k: 5,
            min_category_size: 20,
            baseline_reps: 10,
            num_layers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    pub test_fraction: f64,
    pub iterations: usize,
    pub cooling: f64,
    pub initial_temperature: f64,
    /// Smallest category balanced by the splitter.
    pub min_category_size: usize,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        let a = AnnealConfig::default();
        Self {
            test_fraction: a.test_fraction,
            iterations: a.iterations,
            cooling: a.cooling,
            initial_temperature: a.initial_temperature,
            min_category_size: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmergenceSettings {
    /// Words a child hears per year.
    pub child_words: f64,
    pub levels: Vec<f64>,
    pub grid_points: usize,
}

impl Default for EmergenceSettings {
    fn default() -> Self {
        Self {
            child_words: 1e7,
            levels: vec![0.5],
            grid_points: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualizeSettings {
    /// Layer of the 2-D probe to draw, when reading from a manifest.
    pub layer: Option<u32>,
    /// Probe `.act` file, overriding the manifest.
    pub probe: Option<String>,
    /// Sentence or element-id prefix to draw; everything when unset.
    pub select: Option<String>,
    pub width: u32,
    pub height: u32,
}

impl Default for VisualizeSettings {
    fn default() -> Self {
        Self {
            layer: None,
            probe: None,
            select: None,
            width: 640,
            height: 480,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSettings {
    pub outlier_factor: f64,
    pub layer_fraction: f64,
    pub max_units: usize,
    pub cv: CvConfig,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        Self {
            outlier_factor: 2.0,
            layer_fraction: 0.8,
            max_units: 50,
            cv: CvConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub out: Option<String>,
    /// Frames per second for span pooling; spans are token indices when unset.
    #[serde(default)]
    pub frame_rate: Option<f64>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub dataset: DatasetSettings,
    #[serde(default)]
    pub emergence: EmergenceSettings,
    #[serde(default)]
    pub visualize: VisualizeSettings,
    #[serde(default)]
    pub analyze: AnalyzeSettings,
}

fn default_objective() -> Objective {
    Objective::Distance
}

/// A parsed configuration plus where it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Loaded {
    pub fn load(
        path: &Path,
        seed: Option<u64>,
        jobs: Option<usize>,
        out: Option<&Path>,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?,
            _ => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        };
        if let Some(s) = seed {
            config.seed = s;
        }
        if let Some(j) = jobs {
            config.jobs = Some(j);
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let out_dir = match (out, &config.out) {
            (Some(o), _) => o.to_path_buf(),
            (None, Some(o)) => base_dir.join(o),
            (None, None) => base_dir.join("out"),
        };
        let loaded = Self {
            config,
            base_dir,
            out_dir,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    /// Resolved path of a required entry, checked to exist.
    pub fn require(&self, field: &str, value: &Option<String>) -> Result<(String, PathBuf)> {
        let Some(rel) = value else {
            bail!("config is missing paths.{field}");
        };
        let path = self.resolve(rel);
        if !path.exists() {
            bail!("paths.{field} = {rel:?} does not exist");
        }
        Ok((rel.clone(), path))
    }

    /// Resolved path of an optional entry, checked to exist when given.
    pub fn optional(
        &self,
        field: &str,
        value: &Option<String>,
    ) -> Result<Option<(String, PathBuf)>> {
        value
            .as_ref()
            .map(|_| self.require(field, value))
            .transpose()
    }

    /// Hash of the effective configuration (after command-line overrides).
    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(&self.config)
                .expect("config serializes")
                .as_bytes(),
        )
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        let p = &c.paths;
        for (field, value) in [
            ("gold", &p.gold),
            ("split", &p.split),
            ("spans", &p.spans),
            ("features", &p.features),
            ("pairs", &p.pairs),
            ("categories", &p.categories),
            ("lexicon", &p.lexicon),
            ("vocabulary", &p.vocabulary),
            ("univariate", &p.univariate),
            ("semantic_scores", &p.semantic_scores),
            ("syntax_scores", &p.syntax_scores),
        ] {
            self.optional(field, value)?;
        }
        for s in &p.scores {
            if !self.resolve(s).exists() {
                bail!("paths.scores entry {s:?} does not exist");
            }
        }
        if let Some(g) = &p.gold {
            let is_conllu = g.ends_with(".conllu") || g.ends_with(".conll");
            match c.task {
                Task::Syntax if !is_conllu => {
                    bail!("task syntax requires a CoNLL-U gold file, got {g:?}")
                }
                Task::Semantic if is_conllu => {
                    bail!("task semantic requires a graph edge list, got {g:?}")
                }
                Task::Phoneme => {
                    bail!("task phoneme takes labels from paths.spans, not paths.gold")
                }
                _ => {}
            }
        }
        if c.objective == Objective::Contrastive && c.task == Task::Phoneme {
            bail!("the contrastive objective needs tree or graph edges; phoneme gold has none");
        }
        if c.jobs == Some(0) {
            bail!("jobs must be at least 1");
        }
        if !(c.grid.low > 0.0 && c.grid.high >= c.grid.low && c.grid.points >= 1) {
            bail!("grid needs 0 < low <= high and at least one point");
        }
        self.train_config().validate()?;
        Ok(())
    }

    /// Task preset with the configured objective, seed and overrides.
    pub fn train_config(&self) -> TrainConfig {
        let c = &self.config;
        let mut t = match c.task {
            Task::Phoneme => TrainConfig::phoneme(),
            Task::Semantic => TrainConfig::semantic(),
            Task::Syntax => TrainConfig::syntax(),
        };
        if c.objective == Objective::Contrastive {
            t = t.contrastive();
        }
        t.seed = c.seed;
        let o = &c.train;
        if let Some(v) = o.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = o.probe_dim {
            t.probe_dim = v;
        }
        if let Some(v) = o.epochs {
            t.epochs = v;
        }
        if let Some(v) = o.init_scale {
            t.init_scale = v;
        }
        if let Some(v) = o.units_per_batch {
            t.batch.units_per_batch = v;
        }
        if let Some(v) = o.set_size {
            t.batch.set_size = Some(v);
        }
        if let Some(v) = o.negatives_per_anchor {
            t.negatives_per_anchor = v;
        }
        if let Some(v) = o.optimizer {
            t.optimizer = v;
        }
        t
    }

    pub fn anneal_config(&self) -> AnnealConfig {
        let d = &self.config.dataset;
        AnnealConfig {
            test_fraction: d.test_fraction,
            iterations: d.iterations,
            cooling: d.cooling,
            initial_temperature: d.initial_temperature,
            seed: self.config.seed,
            ..AnnealConfig::default()
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        match &self.config.paths.manifest {
            Some(m) => self.resolve(m),
            None => self.out_dir.join("manifest.json"),
        }
    }

    /// Path label relative to the config directory, for provenance.
    pub fn label(&self, path: &Path) -> String {
        path.strip_prefix(&self.base_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "t.conllu", "");
        let t = write(
            dir.path(),
            "c.toml",
            "task = \"syntax\"\nseed = 4\n[paths]\ngold = \"t.conllu\"\n[train]\nepochs = 7\n",
        );
        let j = write(
            dir.path(),
            "c.json",
            r#"{"task":"syntax","seed":4,"paths":{"gold":"t.conllu"},"train":{"epochs":7}}"#,
        );
        let a = Loaded::load(&t, None, None, None).unwrap();
        let b = Loaded::load(&j, None, None, None).unwrap();
        assert_eq!(a.config, b.config);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.train_config().epochs, 7);
        assert_eq!(a.out_dir, dir.path().join("out"));
        let c = Loaded::load(&t, Some(5), None, None).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(c.train_config().seed, 5);
    }

    #[test]
    fn validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "g.tsv", "a\tb\n");
        let cases = [
            ("task = \"syntax\"\n[paths]\ngold = \"g.tsv\"\n", "CoNLL-U"),
            (
                "task = \"syntax\"\n[paths]\ngold = \"missing.conllu\"\n",
                "does not exist",
            ),
            ("task = \"phoneme\"\nobjective = \"contrastive\"\n", "edges"),
            ("task = \"syntax\"\nbogus = 1\n", "unknown field"),
            (
                "task = \"syntax\"\n[train]\nlearning_rate = -1.0\n",
                "learning rate",
            ),
        ];
        for (i, (text, needle)) in cases.iter().enumerate() {
            let p = write(dir.path(), &format!("c{i}.toml"), text);
            let err = format!("{:#}", Loaded::load(&p, None, None, None).unwrap_err());
            assert!(err.contains(needle), "{err}");
        }
    }
}
