use semrel::data::{encode_pairs, encode_pairs_with, make_split, SplitConfig, SplitManifest, TaskSpec, WordPair};
use semrel::data::Relation;
use semrel::eval::{accuracy, macro_f1};
use semrel::exec::Execution;
use semrel::multitask::{build_model, read_checkpoint, train_multitask, write_checkpoint, LabeledSet, TaskData, TrainConfig};
use semrel::nn::Matrix;
use semrel::synthetic::{relation_suite, SuiteSpec, SyntheticSuite};

fn suite() -> SyntheticSuite {
    relation_suite(&SuiteSpec {
        words: 400,
        dimension: 12,
        pairs_per_class: 200,
        seed: 21,
        ..SuiteSpec::default()
    })
    .unwrap()
}

fn labeled(s: &SyntheticSuite, task: TaskSpec, pairs: &[WordPair]) -> LabeledSet {
    let sel = task.select(pairs);
    let words: Vec<&WordPair> = sel.iter().map(|(p, _)| *p).collect();
    LabeledSet::new(encode_pairs(&s.embeddings, &words).unwrap(), sel.iter().map(|(_, c)| *c).collect()).unwrap()
}

#[test]
fn split_train_checkpoint_round_trip() {
    let s = suite();
    let (bundle, discarded) = make_split(&s.pairs, SplitConfig::default(), 8).unwrap();

    let manifest = SplitManifest::describe(&bundle, SplitConfig::default(), 8, discarded).unwrap();
    let parsed = SplitManifest::parse(&manifest.to_text()).unwrap();
    assert_eq!(parsed.to_text(), manifest.to_text());
    parsed.verify(&bundle).unwrap();
    let mut tampered = bundle.clone();
    tampered.test.pop();
    assert!(parsed.verify(&tampered).is_err());

    let tasks: Vec<TaskSpec> = [Relation::Hypernym, Relation::Cohyponym].map(|r| TaskSpec::new(r).unwrap()).to_vec();
    let data: Vec<TaskData> = tasks
        .iter()
        .map(|&t| TaskData {
            train: labeled(&s, t, &bundle.labeled),
            validation: labeled(&s, t, &bundle.validation),
        })
        .collect();
    let config = TrainConfig {
        epochs: 40,
        seed: 3,
        ..TrainConfig::default()
    };
    let model = build_model(2 * 12, &[50, 50], &[2, 2], 4).unwrap();
    let (model, history) = train_multitask(model, &data, &config).unwrap();
    assert!(history.best_score() > 0.6, "validation accuracy {}", history.best_score());

    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &model, Some(&config)).unwrap();
    let (restored, restored_config) = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(restored_config, Some(config));
    for (i, &t) in tasks.iter().enumerate() {
        let test = labeled(&s, t, &bundle.test);
        let a = model.predict(i, &test.features).unwrap();
        let b = restored.predict(i, &test.features).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let pred = model.predict_labels(i, &test.features).unwrap();
        let acc = accuracy(&pred, &test.labels).unwrap();
        let f1 = macro_f1(&pred, &test.labels, &[0, 1]).unwrap();
        assert!(acc > 0.6 && f1 > 0.5, "task {t}: accuracy {acc}, macro-F1 {f1}");
    }

    // training is reproducible from the same seeds
    let again = build_model(2 * 12, &[50, 50], &[2, 2], 4).unwrap();
    let (again, _) = train_multitask(again, &data, &config).unwrap();
    let mut other = Vec::new();
    write_checkpoint(&mut other, &again, Some(&config)).unwrap();
    assert_eq!(buf, other);
}

#[test]
fn sequential_and_parallel_agree() {
    let s = suite();
    let pairs: Vec<&WordPair> = s.pairs.iter().collect();
    let seq = encode_pairs_with(&s.embeddings, &pairs, Execution::Sequential).unwrap();
    let par = encode_pairs_with(&s.embeddings, &pairs, Execution::Parallel).unwrap();
    assert_eq!(seq.as_slice(), par.as_slice());

    let a = Matrix::from_vec(300, 64, (0..300 * 64).map(|i| ((i * 37 % 101) as f64 - 50.0) / 17.0).collect()).unwrap();
    let b = Matrix::from_vec(80, 64, (0..80 * 64).map(|i| ((i * 53 % 97) as f64 - 48.0) / 13.0).collect()).unwrap();
    assert_eq!(
        a.matmul_nt(&b, Execution::Sequential).as_slice(),
        a.matmul_nt(&b, Execution::Parallel).as_slice()
    );
    let c = Matrix::from_vec(300, 80, (0..300 * 80).map(|i| (i % 7) as f64 - 3.0).collect()).unwrap();
    assert_eq!(
        a.matmul_tn(&c, Execution::Sequential).as_slice(),
        a.matmul_tn(&c, Execution::Parallel).as_slice()
    );

    let model = build_model(24, &[50, 50], &[2], 1).unwrap();
    assert_eq!(
        model.predict_with(0, &seq, Execution::Sequential).unwrap().as_slice(),
        model.predict_with(0, &seq, Execution::Parallel).unwrap().as_slice()
    );
}
