use seqadv_core::data::{
    generate_correlated_pairs, generate_synthetic_corpus, CorpusConfig, EmbeddingDictionary, LabeledCorpus,
    MatrixFormat, SeqPairConfig, SeqPairSet, Split,
};
use seqadv_core::models::{load_model, save_model, ModelMetadata};
use seqadv_core::{LstmClassifierParams, Model, Rng, VanillaRnnParams};

#[test]
fn models_survive_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::derive(3, "persist/models");
    let models = [
        Model::Sequential(VanillaRnnParams::random(&mut rng, 5, 9, 3, 1.0)),
        Model::Classifier(LstmClassifierParams::random(&mut rng, 40, 8, 6, 1.0)),
    ];
    for (k, model) in models.iter().enumerate() {
        let path = dir.path().join(format!("m{k}.bin"));
        let meta = ModelMetadata::describe(model, 3, serde_json::json!({"epochs": 1}));
        save_model(&path, model, &meta).unwrap();
        let (back, meta_back) = load_model(&path).unwrap();
        assert_eq!(&back, model);
        assert_eq!(meta_back.unwrap(), meta);
    }
}

#[test]
fn datasets_survive_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SeqPairConfig { n_pairs: 7, ..SeqPairConfig::default() };
    let set = generate_correlated_pairs(&mut Rng::derive(4, "persist/pairs"), &cfg).unwrap();
    let path = dir.path().join("pairs.csv");
    set.save(&path).unwrap();
    assert_eq!(SeqPairSet::load(&path).unwrap(), set);

    let cfg = CorpusConfig { n_train: 12, n_test: 3, ..CorpusConfig::default() };
    let corpus = generate_synthetic_corpus(&mut Rng::derive(4, "persist/corpus"), &cfg).unwrap();
    for format in [MatrixFormat::Csv, MatrixFormat::Binary] {
        let dict_path = dir.path().join("dict");
        corpus.dictionary.save(&dict_path, format).unwrap();
        assert_eq!(EmbeddingDictionary::load(&dict_path).unwrap(), corpus.dictionary);
    }
    let tsv = dir.path().join("train.tsv");
    corpus.train.save(&tsv, &corpus.dictionary).unwrap();
    assert_eq!(LabeledCorpus::load(&tsv, &corpus.dictionary, Split::Train).unwrap(), corpus.train);
}
