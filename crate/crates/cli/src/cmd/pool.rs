//! Frame files hold rows named `<utterance>#<frame>`, each utterance's
//! frames contiguous and in time order. Spans are pooled within their
//! utterance's block.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use geoprobe::tensor_io::{pool_spans, write_tensor, ActivationMatrix, PoolMode, Span, SpanTable};
use ndarray::{concatenate, Axis};

use crate::config::Loaded;
use crate::data::load_acts;
use crate::output::Provenance;
use crate::Failure;

/// Row range of every utterance in a frame matrix.
fn utterance_blocks(frames: &ActivationMatrix) -> Result<BTreeMap<String, std::ops::Range<usize>>> {
    let mut blocks: BTreeMap<String, std::ops::Range<usize>> = BTreeMap::new();
    for (i, id) in frames.element_ids().iter().enumerate() {
        let (utt, _) = id
            .rsplit_once('#')
            .ok_or_else(|| anyhow!("frame id {id:?} is not <utterance>#<frame>"))?;
        match blocks.get_mut(utt) {
            Some(r) if r.end == i => r.end = i + 1,
            Some(_) => bail!("frames of utterance {utt:?} are not contiguous"),
            None => {
                blocks.insert(utt.to_string(), i..i + 1);
            }
        }
    }
    Ok(blocks)
}

pub fn pool_file(frames: &ActivationMatrix, spans: &SpanTable) -> Result<ActivationMatrix> {
    let blocks = utterance_blocks(frames)?;
    let mut parts = Vec::new();
    let mut ids = Vec::new();
    let mut by_utt: BTreeMap<&str, Vec<Span>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for s in &spans.spans {
        if !by_utt.contains_key(s.utterance.as_str()) {
            order.push(&s.utterance);
        }
        by_utt.entry(&s.utterance).or_default().push(s.clone());
    }
    for utt in order {
        let range = blocks
            .get(utt)
            .ok_or_else(|| anyhow!("no frames for utterance {utt:?}"))?
            .clone();
        let sub_ids = frames.element_ids()[range.clone()].to_vec();
        let sub = ActivationMatrix::new(
            frames.data().slice(ndarray::s![range, ..]).to_owned(),
            sub_ids,
        )?;
        let table = SpanTable::new(by_utt[utt].clone(), spans.frame_rate)?;
        let pooled = pool_spans(&sub, &table, PoolMode::Mean)?;
        ids.extend(pooled.element_ids().iter().cloned());
        parts.push(pooled.data().clone());
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let data = concatenate(Axis(0), &views)?;
    Ok(ActivationMatrix::new(data, ids)?
        .with_layer(frames.layer)
        .with_checkpoint_words(frames.checkpoint_words)
        .with_model(frames.model.clone()))
}

pub fn run(l: &Loaded) -> Result<(), Failure> {
    let mut prov = Provenance::new("pool", &l.hash(), l.config.seed);
    let Some(pattern) = &l.config.paths.frames else {
        return Err(anyhow!("config is missing paths.frames").into());
    };
    let (span_label, span_path) = l.require("spans", &l.config.paths.spans)?;
    prov.add_input(&span_label, &span_path)?;
    let spans = SpanTable::read(&span_path, l.config.frame_rate)?;
    let mut files: Vec<_> = glob::glob(&l.resolve(pattern).to_string_lossy())
        .context("bad frames glob")?
        .collect::<Result<_, _>>()
        .context("listing frames")?;
    files.sort();
    if files.is_empty() {
        return Err(anyhow!("paths.frames = {pattern:?} matched no files").into());
    }
    for path in files {
        let label = l.label(&path);
        let frames = load_acts(&label, &path, &mut prov)?;
        let pooled = pool_file(&frames, &spans).with_context(|| format!("pooling {label}"))?;
        let name = path.file_name().context("frame file name")?;
        let dest = l.out_dir.join("pooled").join(name);
        std::fs::create_dir_all(dest.parent().expect("has parent"))
            .context("creating output dir")?;
        let tmp = dest.with_extension("act.tmp");
        write_tensor(&pooled, &tmp)?;
        std::fs::rename(&tmp, &dest).context("renaming pooled file")?;
        eprintln!("pool: {label} -> {} rows", pooled.nrows());
    }
    Ok(())
}
