//! Library-level pipeline: files on disk through training to metrics.

use geoprobe::gold::{parse_conllu, write_conllu, GoldStructure};
use geoprobe::metrics::{eval_distance_probe, eval_rank, eval_uuas, EvalOptions};
use geoprobe::probe::{train_probe, BatchSpec, Objective, TrainConfig};
use geoprobe::synthetic::{planted_trees, PlantedConfig};
use geoprobe::tensor_io::{read_tensor, write_tensor};

fn config(objective: Objective) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        probe_dim: 16,
        epochs: 15,
        batch: BatchSpec {
            units_per_batch: 5,
            set_size: None,
        },
        objective,
        ..TrainConfig::syntax()
    }
}

#[test]
fn planted_trees_round_trip_through_files_and_train() {
    let dir = tempfile::tempdir().unwrap();
    let planted = planted_trees(&PlantedConfig {
        sentences: 40,
        units: 48,
        ..PlantedConfig::default()
    });
    let act = dir.path().join("layer.act");
    write_tensor(&planted.acts.clone().with_layer(5), &act).unwrap();
    let conllu = dir.path().join("gold.conllu");
    std::fs::write(&conllu, write_conllu(&planted.sentences)).unwrap();

    let acts = read_tensor(&act).unwrap();
    assert_eq!(acts.layer, 5);
    let sentences = parse_conllu(&std::fs::read_to_string(&conllu).unwrap()).unwrap();
    assert_eq!(sentences, planted.sentences);

    let train = GoldStructure::from_sentences(&sentences[..28]);
    let val = GoldStructure::from_sentences(&sentences[28..32]);
    let test = GoldStructure::from_sentences(&sentences[32..]);
    let opts = EvalOptions::default();
    for objective in [Objective::Distance, Objective::Contrastive] {
        let out = train_probe(&config(objective), &acts, &train, &val).unwrap();
        assert_eq!(out.history.len(), 15);
        let w = &out.probe.weights;
        let rho = eval_distance_probe(w, &acts, &test, &opts)
            .unwrap()
            .aggregate
            .unwrap();
        let uuas = eval_uuas(w, &acts, &test).unwrap().aggregate.unwrap();
        let rank = eval_rank(w, &acts, &test).unwrap().aggregate.unwrap();
        assert!(rho > 0.8, "{objective:?} spearman {rho}");
        assert!(uuas > 0.8, "{objective:?} uuas {uuas}");
        assert!(rank < 2.0, "{objective:?} rank {rank}");
    }
}

#[test]
fn untrained_probe_scores_near_chance() {
    let planted = planted_trees(&PlantedConfig {
        sentences: 30,
        ..PlantedConfig::default()
    });
    let gold = GoldStructure::from_sentences(&planted.sentences);
    let w = geoprobe::probe::init_weights(128, 16, 1.0, 4).unwrap();
    let rho = eval_distance_probe(&w, &planted.acts, &gold, &EvalOptions::default())
        .unwrap()
        .aggregate
        .unwrap();
    let exact = eval_distance_probe(
        &planted.basis,
        &planted.acts,
        &gold,
        &EvalOptions::default(),
    )
    .unwrap()
    .aggregate
    .unwrap();
    assert!(rho < exact - 0.2, "random {rho} vs planted {exact}");
}
