use std::collections::HashSet;
use std::fs;

use anyhow::{anyhow, Context};
use geoprobe::dataset::{
    filter_vocabulary, graph_categories, sa_split, unisemic_wordlist, Lexicon, Split,
    WordlistSummary,
};
use geoprobe::gold::SemanticGraph;
use serde::Serialize;

use crate::config::Loaded;
use crate::data::SplitSets;
use crate::output::{fmt, write_csv, write_json, Provenance};
use crate::Failure;

#[derive(Serialize)]
struct Summary<'a> {
    wordlist: &'a WordlistSummary,
    elements: usize,
    categories: usize,
    initial_cost: f64,
    cost: f64,
    trace: &'a [(usize, f64)],
}

pub fn run(l: &Loaded) -> Result<(), Failure> {
    let mut prov = Provenance::new("build-dataset", &l.hash(), l.config.seed);
    let p = &l.config.paths;
    let (lex_label, lex_path) = l.require("lexicon", &p.lexicon)?;
    let (graph_label, graph_path) = l.require("gold", &p.gold)?;
    prov.add_input(&lex_label, &lex_path)?;
    prov.add_input(&graph_label, &graph_path)?;
    let lexicon: Lexicon = serde_json::from_slice(&fs::read(&lex_path).context("reading lexicon")?)
        .with_context(|| format!("parsing {lex_label}"))?;
    let graph = SemanticGraph::from_tsv(&fs::read_to_string(&graph_path)?)
        .with_context(|| format!("parsing {graph_label}"))?;

    let (mut pairs, summary) = unisemic_wordlist(&lexicon, &graph);
    if let Some((label, path)) = l.optional("vocabulary", &p.vocabulary)? {
        prov.add_input(&label, &path)?;
        let allowed: HashSet<String> = fs::read_to_string(&path)?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        pairs = filter_vocabulary(&pairs, &allowed);
    }
    pairs.retain(|(synset, _)| graph.contains(synset));
    if pairs.is_empty() {
        return Err(anyhow!("no synset survived word selection").into());
    }
    let elements: Vec<String> = pairs.iter().map(|(s, _)| s.clone()).collect();
    let categories = graph_categories(&graph, &elements, l.config.dataset.min_category_size);
    let members: Vec<Vec<usize>> = categories.iter().map(|(_, m)| m.clone()).collect();
    let cfg = l.anneal_config();
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(anyhow!("dataset.test_fraction must lie in (0, 1)").into());
    }
    let split = sa_split(elements.len(), &members, &cfg);

    let out = l.out_dir.join("dataset");
    write_csv(
        &out.join("pairs.csv"),
        &prov,
        &["synset", "lemma"],
        &pairs
            .iter()
            .map(|(s, w)| vec![s.clone(), w.clone()])
            .collect::<Vec<_>>(),
    )?;
    let mut sets = SplitSets::default();
    for (e, label) in elements.iter().zip(&split.labels) {
        match label {
            Split::Train => sets.train.push(e.clone()),
            Split::Test => sets.test.push(e.clone()),
        }
    }
    write_json(&out.join("split.json"), &prov, &sets)?;
    let rows: Vec<Vec<String>> = split
        .category_fractions(&members)
        .into_iter()
        .zip(&categories)
        .map(|(f, (name, _))| {
            vec![
                name.clone(),
                f.size.to_string(),
                f.test_count.to_string(),
                fmt(Some(f.fraction)),
            ]
        })
        .collect();
    write_csv(
        &out.join("category_fractions.csv"),
        &prov,
        &["category", "size", "test_count", "fraction"],
        &rows,
    )?;
    write_json(
        &out.join("summary.json"),
        &prov,
        &Summary {
            wordlist: &summary,
            elements: elements.len(),
            categories: categories.len(),
            initial_cost: split.initial_cost,
            cost: split.cost,
            trace: &split.trace,
        },
    )?;
    eprintln!(
        "build-dataset: {} synsets, {} categories, split cost {:.3} (initial {:.3})",
        elements.len(),
        categories.len(),
        split.cost,
        split.initial_cost
    );
    Ok(())
}
