use vanya::data::{generate_synthetic, SynthConfig};
use vanya::evaluation::{rmse, split_series, SplitSpec};
use vanya::model_file::ModelFile;
use vanya::training::{rolling_forecast, train_vanya, Phase, TrainConfig};

fn small() -> TrainConfig {
    TrainConfig {
        steps: 5_000,
        hidden: 8,
        pretrain_epochs: 15,
        finetune_epochs: 15,
        seed: 12,
        ..TrainConfig::default()
    }
}

#[test]
fn trained_model_file_is_byte_identical_across_runs() {
    let data = generate_synthetic(&SynthConfig::default()).unwrap();
    let a = ModelFile::lstm(train_vanya(&data.prefix(30), &small()).unwrap()).to_json().unwrap();
    let b = ModelFile::lstm(train_vanya(&data.prefix(30), &small()).unwrap()).to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn saved_model_forecasts_like_the_original() {
    let data = generate_synthetic(&SynthConfig::default()).unwrap();
    let (train, test) = split_series(data.len(), SplitSpec::new(80).unwrap(), small().min_train_len()).unwrap();
    let model = train_vanya(&data.prefix(train), &small()).unwrap();
    assert_eq!(model.phase, Phase::Finetuned);
    assert!(model.loss_history.iter().all(|l| l.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    ModelFile::lstm(model.clone()).save(&path).unwrap();
    let loaded = ModelFile::load(&path).unwrap().into_lstm().unwrap();

    let p1 = rolling_forecast(&model, &data, train).unwrap();
    let p2 = rolling_forecast(&loaded, &data, train).unwrap();
    assert_eq!(p1.len(), test);
    assert_eq!(p1, p2);
    assert!(rmse(&p1, &data.values()[train..]).unwrap().is_finite());
}
