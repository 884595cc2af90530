use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use geoprobe::analysis::{
    data_gap, emergence_point, fit_emergence, relative_scores, EmergenceCurve, EmergencePoint,
    FitOptions, Logistic,
};
use serde::Serialize;

use crate::config::Loaded;
use crate::output::{fmt, read_csv, write_csv, write_json, Provenance};
use crate::Failure;

#[derive(Serialize)]
struct CurveReport {
    structure: String,
    points: Vec<(f64, f64)>,
    params: Option<Logistic>,
    residual: Option<f64>,
    degenerate: bool,
    emergence: Vec<EmergencePoint>,
    /// Orders of magnitude between the emergence word count and a child's
    /// yearly exposure, per level.
    data_gap: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct Report {
    child_words: f64,
    levels: Vec<f64>,
    curves: Vec<CurveReport>,
    /// Structures with a fitted curve, by midpoint (earliest first).
    order_by_midpoint: Vec<String>,
}

/// `structure → [(words, score)]` from every score table.
fn read_scores(l: &Loaded, prov: &mut Provenance) -> Result<BTreeMap<String, Vec<(f64, f64)>>> {
    let p = &l.config.paths;
    if p.scores.is_empty() {
        bail!("config lists no paths.scores tables (columns structure,checkpoint_words,score)");
    }
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for rel in &p.scores {
        let path = l.resolve(rel);
        prov.add_input(&l.label(&path), &path)?;
        let (header, rows) = read_csv(&path)?;
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| anyhow!("{rel}: missing column {name}"))
        };
        let (cs, cw, cv) = (col("structure")?, col("checkpoint_words")?, col("score")?);
        for (i, r) in rows.iter().enumerate() {
            let words: f64 = r[cw].parse().with_context(|| {
                format!("{rel} row {}: bad checkpoint_words {:?}", i + 1, r[cw])
            })?;
            let score: f64 = r[cv]
                .parse()
                .with_context(|| format!("{rel} row {}: bad score {:?}", i + 1, r[cv]))?;
            out.entry(r[cs].clone()).or_default().push((words, score));
        }
    }
    Ok(out)
}

pub fn run(l: &Loaded) -> Result<(), Failure> {
    let settings = &l.config.emergence;
    let mut prov = Provenance::new("emergence", &l.hash(), l.config.seed);
    let scores = read_scores(l, &mut prov)?;
    if scores.is_empty() {
        return Err(anyhow!("score tables contain no rows").into());
    }
    let opts = FitOptions {
        seed: l.config.seed,
        ..FitOptions::default()
    };
    let mut curves: Vec<(String, EmergenceCurve)> = Vec::new();
    for (structure, points) in &scores {
        let mut checkpoints: Vec<f64> = points.iter().map(|p| p.0).collect();
        checkpoints.sort_by(f64::total_cmp);
        checkpoints.dedup();
        if checkpoints.len() < 4 {
            return Err(anyhow!(
                "structure {structure:?} has scores at {} checkpoint(s); fitting a learning curve needs at least 4 \
                 distinct checkpoints. Train and evaluate probes on more checkpoints of the same model",
                checkpoints.len()
            )
            .into());
        }
        let curve = fit_emergence(points, &opts).with_context(|| format!("fitting {structure}"))?;
        curves.push((structure.clone(), curve));
    }

    let (lo, hi) = curves
        .iter()
        .map(|(_, c)| c.log10_range())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| {
            (a.0.min(b.0), a.1.max(b.1))
        });
    let n = settings.grid_points.max(2);
    let grid: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();

    let mut reports = Vec::new();
    let mut rel_rows = Vec::new();
    let mut gap_rows = Vec::new();
    for (structure, curve) in &curves {
        let mut emergence = Vec::new();
        let mut gaps = Vec::new();
        if !curve.degenerate {
            for &level in &settings.levels {
                let pt = emergence_point(curve, level)
                    .with_context(|| format!("{structure} at level {level}"))?;
                let gap = data_gap(pt.words, settings.child_words).ok();
                gap_rows.push(vec![
                    structure.clone(),
                    format!("{level}"),
                    fmt(Some(pt.log10_words)),
                    format!("{:e}", pt.words),
                    fmt(gap),
                    pt.extrapolated.to_string(),
                ]);
                emergence.push(pt);
                gaps.push(gap);
            }
            let rel =
                relative_scores(curve, &grid).with_context(|| format!("rescaling {structure}"))?;
            for (x, r) in grid.iter().zip(rel) {
                rel_rows.push(vec![structure.clone(), fmt(Some(*x)), fmt(Some(r))]);
            }
        } else {
            eprintln!("emergence: {structure}: scores are flat, no curve fitted");
        }
        reports.push(CurveReport {
            structure: structure.clone(),
            points: curve.points.clone(),
            params: curve.params,
            residual: curve.residual,
            degenerate: curve.degenerate,
            emergence,
            data_gap: gaps,
        });
    }
    let mut order: Vec<(f64, String)> = reports
        .iter()
        .filter_map(|r| r.params.map(|p| (p.mu, r.structure.clone())))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let dir = l.out_dir.join("emergence");
    write_json(
        &dir.join("curves.json"),
        &prov,
        &Report {
            child_words: settings.child_words,
            levels: settings.levels.clone(),
            curves: reports,
            order_by_midpoint: order.into_iter().map(|o| o.1).collect(),
        },
    )?;
    write_csv(
        &dir.join("relative_scores.csv"),
        &prov,
        &["structure", "log10_words", "relative_score"],
        &rel_rows,
    )?;
    write_csv(
        &dir.join("data_gap.csv"),
        &prov,
        &[
            "structure",
            "level",
            "log10_words",
            "words",
            "orders_of_magnitude",
            "extrapolated",
        ],
        &gap_rows,
    )?;
    eprintln!("emergence: {} curves fitted", curves.len());
    Ok(())
}
