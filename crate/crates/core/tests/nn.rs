use cpsense::config::{Preset, RunConfig};
use cpsense::dataset::{generate_dataset, Dataset};
use cpsense::nn::{
    evaluate, load_model, save_model, train, Gradients, MlpModel, ModelMeta, Normalizer, RmsProp, TrainOptions,
    TrainSchedule, TrainStage, TrainedModel,
};
use cpsense::Error;
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smoke_dataset(rows: usize) -> Dataset {
    let cfg = RunConfig::builtin(".");
    let model = cfg.build_model(cfg.sampling.cap_pa).unwrap();
    let spec = cfg.sampling_spec(Preset::Set1, model.species(), 17);
    generate_dataset(&spec, &model, rows, 1, "set1", "smoke").unwrap()
}

fn options(epochs: usize, seed: u64) -> TrainOptions {
    TrainOptions {
        hidden_layers: 2,
        width: 16,
        schedule: TrainSchedule {
            stages: vec![TrainStage {
                learning_rate: 1e-3,
                epochs,
            }],
            batch_size: 10,
        },
        seed,
        validation_rows: 20,
    }
}

fn meta(species: &[&str]) -> ModelMeta {
    ModelMeta {
        species: species.iter().map(|s| s.to_string()).collect(),
        spheres: vec!["silica".into(), "gold".into()],
        target: "CO2".into(),
        seed: 1,
        dataset_hash: "x".into(),
        config_hash: "y".into(),
        epochs: 0,
    }
}

fn random_model(seed: u64) -> TrainedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TrainedModel {
        mlp: MlpModel::new(&[4, 8, 8, 1], &mut rng).unwrap(),
        normalizer: Normalizer::new(array![0.0, 1.0, 2.0, 3.0], array![1.0, 3.0, 4.0, 9.0]).unwrap(),
        meta: meta(&["CO2", "N2"]),
    }
}

#[test]
fn save_load_round_trip_is_bit_exact() {
    let model = random_model(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Array2::from_shape_fn((100, 4), |_| rng.gen_range(0.0..10.0));
    let a = model.predict_bar(x.view()).unwrap();
    let b = back.predict_bar(x.view()).unwrap();
    assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn damaged_model_files_are_rejected() {
    let model = random_model(5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    save_model(&model, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
    assert!(matches!(load_model(&path), Err(Error::Format { .. })));
    std::fs::write(&path, &bytes[..40]).unwrap();
    assert!(matches!(load_model(&path), Err(Error::Format { .. })));
    assert!(matches!(load_model(dir.path().join("missing.bin")), Err(Error::Io { .. })));
}

#[test]
fn species_order_mismatch_is_reported() {
    let model = random_model(6);
    let spheres = vec!["silica".to_string(), "gold".to_string()];
    assert!(model.layout_mismatch(&["CO2".into(), "N2".into()], &spheres).is_none());
    let msg = model.layout_mismatch(&["N2".into(), "CO2".into()], &spheres).unwrap();
    assert!(msg.contains("species"), "{msg}");
}

#[test]
fn memorised_labels_give_zero_error() {
    let mut ds = smoke_dataset(5);
    let t = ds.target_index().unwrap();
    ds.pressures.column_mut(t).fill(1234.5);
    let n_in = ds.frequencies.ncols();
    let perfect = TrainedModel {
        mlp: MlpModel::from_parameters(vec![Array2::zeros((1, n_in))], vec![array![1234.5 / 1e5]]).unwrap(),
        normalizer: Normalizer::fit(ds.frequencies.view()).unwrap(),
        meta: meta(&[]),
    };
    let report = evaluate(&perfect, &ds).unwrap();
    assert_eq!(report.mse, 0.0);
    assert_eq!(report.rmse, 0.0);
}

#[test]
fn evaluate_is_the_plain_mean_square() {
    let ds = smoke_dataset(12);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = TrainedModel {
        mlp: MlpModel::new(&[20, 5, 1], &mut rng).unwrap(),
        normalizer: Normalizer::fit(ds.frequencies.view()).unwrap(),
        meta: meta(&[]),
    };
    let report = evaluate(&model, &ds).unwrap();
    let t = ds.target_index().unwrap();
    let mut sq = 0.0;
    for i in 0..ds.len() {
        let x = model.normalizer.apply(ds.frequencies.row(i));
        let pred = model.mlp.forward(x.view()).unwrap();
        sq += (pred - ds.pressures[[i, t]] / 1e5).powi(2);
    }
    let brute = sq / ds.len() as f64;
    assert!((report.mse - brute).abs() <= 1e-15 * brute.max(1e-300));
    assert_eq!(report.rmse, report.mse.sqrt());
    assert_eq!(report.pairs.len(), 12);
}

#[test]
fn smoke_training_runs_and_is_deterministic() {
    let ds = smoke_dataset(100);
    // seed 1 starts with a live output unit; some seeds start dead and stay flat
    let a = train(&ds, &options(5, 1)).unwrap();
    assert_eq!(a.history.train.len(), 5);
    assert!(a.history.train.iter().chain(&a.history.validation).all(|v| v.is_finite() && *v >= 0.0));
    assert!(a.history.train[4] < a.history.train[0], "{:?}", a.history.train);
    assert_eq!(a.validation_rows.len(), 20);
    let b = train(&ds, &options(5, 1)).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
    let c = train(&ds, &options(5, 3)).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn zero_gradient_leaves_parameters_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut m = MlpModel::new(&[3, 4, 1], &mut rng).unwrap();
    let before = m.clone();
    let zero = Gradients {
        weights: m.weights().iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
        biases: m.biases().iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
    };
    let mut opt = RmsProp::new(&m);
    opt.step(&mut m, &zero, 1e-2);
    assert_eq!(m, before);
}

#[test]
fn identical_batches_give_identical_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let m0 = MlpModel::new(&[3, 6, 1], &mut rng).unwrap();
    let x = Array2::from_shape_fn((7, 3), |_| rng.gen_range(0.0..1.0));
    let y = Array1::from_shape_fn(7, |_| rng.gen_range(0.0..1.0));
    let run = || {
        let mut m = m0.clone();
        let mut opt = RmsProp::new(&m);
        for _ in 0..3 {
            let (_, g) = m.loss_and_gradients(x.view(), y.view()).unwrap();
            opt.step(&mut m, &g, 1e-3);
        }
        m
    };
    assert_eq!(run(), run());
}

#[test]
fn normalizer_contract() {
    let rows = array![[2.0, 10.0], [4.0, 30.0], [3.0, 20.0]];
    let n = Normalizer::fit(rows.view()).unwrap();
    assert_eq!(n.apply(array![3.0, 20.0].view()), array![0.5, 0.5]);
    assert_eq!(n.apply(array![2.0, 10.0].view()), array![0.0, 0.0]);
    assert_eq!(n.apply(array![5.0, 30.0].view()), array![1.5, 1.0]);
    assert!(Normalizer::fit(array![[1.0, 2.0], [1.0, 3.0]].view()).is_err());
}
