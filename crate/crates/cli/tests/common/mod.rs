//! On-disk fixtures for driving the `geoprobe` binary.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geoprobe::gold::write_conllu;
use geoprobe::synthetic::{embed_sentences, hierarchy, random_sentences, PlantedConfig};
use geoprobe::tensor_io::write_tensor;

pub const BIN: &str = env!("CARGO_BIN_EXE_geoprobe");

pub fn run(args: &[&str], config: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .expect("spawn geoprobe")
}

pub fn run_ok(args: &[&str], config: &Path) -> Output {
    let out = run(args, config);
    assert!(
        out.status.success(),
        "geoprobe {args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Three layers of planted tree activations with CoNLL-U gold, score tables
/// for `emergence`, and a semantic hierarchy with a lexicon for
/// `build-dataset`. Returns the syntax config path.
pub fn write_fixture(dir: &Path, extra_toml: &str) -> PathBuf {
    let cfg = PlantedConfig {
        sentences: 30,
        words: 6,
        units: 16,
        subspace: 6,
        noise: 0.1,
        seed: 0,
    };
    let sentences = random_sentences(cfg.sentences, cfg.words, 7);
    fs::create_dir_all(dir.join("acts")).unwrap();
    for layer in 0..3u32 {
        let planted = embed_sentences(
            &sentences,
            &PlantedConfig {
                noise: 0.05 + 0.2 * f64::from(layer),
                seed: u64::from(layer),
                ..cfg
            },
        );
        let acts = planted.acts.with_layer(layer).with_model("planted");
        write_tensor(&acts, dir.join(format!("acts/layer{layer}.act"))).unwrap();
    }
    fs::write(dir.join("gold.conllu"), write_conllu(&sentences)).unwrap();

    let mut scores = String::from("structure,checkpoint_words,score\n");
    for (structure, mu) in [("phonemes", 7.0), ("syntax", 8.5)] {
        for i in 0..8 {
            let x = 5.0 + 0.75 * f64::from(i);
            let s = 0.1 + 0.7 / (1.0 + (-(x - mu) / 0.4f64).exp());
            scores.push_str(&format!("{structure},{},{s:.6}\n", 10f64.powf(x)));
        }
    }
    fs::write(dir.join("scores.csv"), scores).unwrap();

    let config = dir.join("syntax.toml");
    fs::write(
        &config,
        format!(
            r#"task = "syntax"
seed = 3

[paths]
activations = "acts/layer*.act"
gold = "gold.conllu"
scores = ["scores.csv"]
semantic_manifest = "out/manifest.json"
syntax_manifest = "out/manifest.json"

[train]
learning_rate = 0.01
probe_dim = 2
epochs = 3
units_per_batch = 5

[grid]
low = 0.001
high = 0.01
points = 20

[eval]
baseline_reps = 2

[visualize]
layer = 1
select = "s00"

[analyze]
outlier_factor = 1.5
max_units = 3
{extra_toml}"#
        ),
    )
    .unwrap();
    config
}

/// Semantic hierarchy, lexicon and config for `build-dataset`.
pub fn write_dataset_fixture(dir: &Path) -> PathBuf {
    let h = hierarchy(120, 3, 3, 1);
    let mut tsv = String::new();
    for name in h.graph.names() {
        let node = h.graph.node(name).unwrap();
        for &child in h.graph.hyponyms(node) {
            tsv.push_str(&format!("{}\t{}\n", h.graph.name(child), name));
        }
    }
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("graph.tsv"), tsv).unwrap();
    let synsets: serde_json::Map<String, serde_json::Value> = h
        .elements
        .iter()
        .map(|e| (e.clone(), serde_json::json!([format!("w_{e}"), "shared"])))
        .collect();
    fs::write(
        dir.join("lexicon.json"),
        serde_json::json!({ "synsets": synsets }).to_string(),
    )
    .unwrap();
    let config = dir.join("dataset.toml");
    fs::write(
        &config,
        r#"task = "semantic"

[paths]
gold = "graph.tsv"
lexicon = "lexicon.json"

[dataset]
iterations = 20000
cooling = 0.9995
"#,
    )
    .unwrap();
    config
}

/// Every regular file under `dir`, relative path to bytes, sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
