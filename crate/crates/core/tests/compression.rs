use meshfl::compress::*;
use meshfl::flcore::*;
use meshfl::seed;
use proptest::prelude::*;

fn trained_mlp() -> (ModelSpec, ParamVector, LabeledDataset, LabeledDataset) {
    let mut rng = seed::stream(21, &[0]);
    let data = synth_blobs(4, 80, 6, 0.6, &mut rng).unwrap();
    let (train, val) = data.split(0.25, &mut rng).unwrap();
    let spec = ModelSpec::MlpClassifier {
        inputs: 6,
        hidden: 16,
        classes: 4,
    };
    let mut w = spec.init_params(&mut rng);
    let cfg = TrainConfig {
        learning_rate: 0.1,
        batch_size: 16,
        local_steps: Some(400),
    };
    train_local(&mut w, &spec, &train, &cfg, &mut rng).unwrap();
    (spec, w, train, val)
}

#[test]
fn pruning_equals_zeroing_the_dropped_units() {
    let (spec, w, _, val) = trained_mlp();
    let mut genome = Genome::full(16);
    for j in [0, 3, 4, 9, 15] {
        genome.mask[j] = false;
    }
    let (pruned, pw) = apply_mask(&spec, &w, &genome).unwrap();
    assert_eq!(pw.dim(), kept_params(&spec, &genome).unwrap());
    assert_eq!(pw.dim(), 11 * (6 + 1 + 4) + 4);

    // zero the dropped units' outgoing weights in the full model
    let mut z = w.clone();
    let w2 = 6 * 16 + 16;
    for j in (0..16).filter(|&j| !genome.mask[j]) {
        for c in 0..4 {
            z.as_mut_slice()[w2 + j * 4 + c] = 0.0;
        }
    }
    for i in 0..val.len() {
        let a = pruned.forward(&pw, val.row(i)).unwrap();
        let b = spec.forward(&z, val.row(i)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn full_mask_is_the_identity() {
    let (spec, w, _, _) = trained_mlp();
    let (s, pw) = apply_mask(&spec, &w, &Genome::full(16)).unwrap();
    assert_eq!((s, pw), (spec, w));
}

#[test]
fn evolve_halves_the_model_and_keeps_accuracy() {
    let (spec, w, train, val) = trained_mlp();
    let cfg = GaConfig {
        population: 16,
        generations: 15,
        seed: 4,
        ..GaConfig::default()
    };
    let ft = TrainConfig {
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let (genome, pruned, report) = evolve(&cfg, &spec, &w, &train, &val, &ft).unwrap();
    assert_eq!(report.kept_units, genome.kept());
    assert_eq!(report.kept_params, pruned.dim());
    assert_eq!(report.mask, genome.to_hex());
    // generation 0 is the initial population
    assert_eq!(report.history.len(), report.generations_run + 1);
    assert!(report.ratio <= 0.6, "{report:?}");
    assert!(report.acc_before - report.acc_after <= 0.02, "{report:?}");
    // best fitness never decreases thanks to elitism
    for pair in report.history.windows(2) {
        assert!(pair[1].best_fitness >= pair[0].best_fitness);
    }
    let again = evolve(&cfg, &spec, &w, &train, &val, &ft).unwrap();
    assert_eq!(again.2, report);
}

#[test]
fn mask_and_config_errors() {
    let (spec, w, train, val) = trained_mlp();
    assert!(apply_mask(&spec, &w, &Genome::full(15)).is_err());
    assert!(apply_mask(&spec, &w, &Genome { mask: vec![false; 16] }).is_err());
    assert_eq!(fitness(&Genome { mask: vec![false; 16] }, &spec, &w, &val, 0.5).unwrap(), f64::NEG_INFINITY);
    let soft = ModelSpec::SoftmaxClassifier { inputs: 6, classes: 4 };
    assert!(kept_params(&soft, &Genome::full(16)).is_err());
    let bad = GaConfig {
        elitism: 30,
        ..GaConfig::default()
    };
    assert!(evolve(&bad, &spec, &w, &train, &val, &TrainConfig::default()).is_err());
}

proptest! {
    #[test]
    fn hex_masks_round_trip(bits in prop::collection::vec(any::<bool>(), 1..70)) {
        let g = Genome { mask: bits.clone() };
        let back = Genome::from_hex(&g.to_hex(), bits.len()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn kept_params_is_linear_in_kept_units(bits in prop::collection::vec(any::<bool>(), 16)) {
        let spec = ModelSpec::MlpClassifier { inputs: 6, hidden: 16, classes: 4 };
        let g = Genome { mask: bits };
        prop_assert_eq!(kept_params(&spec, &g).unwrap(), g.kept() * 11 + 4);
        prop_assert!((g.density() - g.kept() as f64 / 16.0).abs() < 1e-15);
    }
}
