//! One function per degenerate or definitional case the library promises.
//! Run individually by the `trivial` target and replayed by `acceptance`.

use std::collections::BTreeMap;

use phongru::data::synth::generate;
use phongru::data::{
    load_corpus, normalize_transcription, AssembleOptions, CaptionRecord, FeatureRecord, GroundedDataset, PhonemeVocab,
    RawCorpus, Split, SplitRecord, StripSet, SynthConfig, Utterance, WordVocab,
};
use phongru::models::{
    gru_cell, gru_layer, residual_layer, Checkpoint, GruLayerParams, Model, ModelDims, ModelType, PhonGruModel,
    WordGruModel, WordSumModel,
};
use phongru::numerics::{
    clip_global_norm, clipped_relu, cosine_similarity, levenshtein, spearman_rho, steep_sigmoid, zscore_apply,
    zscore_fit, Mat,
};
use phongru::probing::*;
use phongru::retrieval::evaluate_retrieval;
use phongru::training::{gradients, loss, select_best_epoch, train, AdamHyper, AdamState, EpochLog, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{as_refs, random_model, run_cli, tiny_run, utterance, write_text, TINY_SYNTH};

macro_rules! cases {
    ($($name:ident,)*) => {
        pub const CASES: &[(&str, fn())] = &[$((stringify!($name), $name as fn()),)*];
    };
}

cases! {
    steep_sigmoid_at_zero,
    clipped_relu_clamps_negative,
    clipped_relu_identity_inside,
    clipped_relu_clips_above,
    cosine_self_is_one,
    cosine_orthogonal_is_zero,
    zscore_constant_column,
    zscore_single_row,
    spearman_monotone_increasing,
    spearman_monotone_decreasing,
    levenshtein_identity,
    levenshtein_insertions_only,
    clip_below_threshold,
    clip_exactly_at_threshold,
    normalize_single_word,
    normalize_strips_markers,
    normalize_rejects_marker_only_word,
    rare_word_maps_to_unk,
    threshold_one_keeps_every_word,
    empty_corpus_file,
    dataset_round_trip,
    missing_image_is_named,
    synth_same_seed_same_bytes,
    synth_noiseless_single_word,
    gru_cell_zero_fixed_point,
    gru_layer_length_one,
    gru_layer_zero_weights,
    gru_layer_prefix,
    residual_zero_weights_passes_input,
    residual_minus_gru_is_input,
    residual_dim_mismatch,
    phon_zero_weights,
    phon_trace_shape,
    phon_forward_deterministic,
    word_gru_zero_embeddings,
    word_gru_trace_shape,
    word_gru_unk_column,
    word_sum_counts,
    word_sum_permutation,
    word_sum_duplicate_word,
    loss_identical,
    loss_orthogonal,
    loss_opposite,
    dead_unit_zero_gradient,
    adam_zero_gradient,
    train_zero_epochs,
    train_same_seed_same_logs,
    best_epoch_single,
    best_epoch_improving,
    best_epoch_tie,
    retrieval_perfect_oracle,
    retrieval_k_equals_n,
    boundary_labels_one_word,
    ngram_definition,
    ngram_padding,
    ngram_space_bound,
    logreg_degenerate_eval,
    grid_single_value,
    grid_returns_member,
    folds_deterministic,
    leaked_label_probe,
    similarity_identical_words,
    similarity_self_correlation,
    nearest_duplicate,
    nearest_excludes_self,
    substring_abc,
    substring_disjoint,
    substring_two_identical_sentences,
    cli_synth_files,
    cli_synth_deterministic,
    cli_synth_missing_field,
    cli_train_word_sum,
    cli_best_pointer,
    cli_train_rerun,
    cli_eval_perfect_oracle,
    cli_probe_boundary_layers,
    cli_similarity_without_men,
}

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

pub fn steep_sigmoid_at_zero() {
    assert_eq!(steep_sigmoid(0.0), 0.5);
}

pub fn clipped_relu_clamps_negative() {
    assert_eq!(clipped_relu(-3.0), 0.0);
}

pub fn clipped_relu_identity_inside() {
    assert_eq!(clipped_relu(2.5), 2.5);
}

pub fn clipped_relu_clips_above() {
    assert_eq!(clipped_relu(7.0), 5.0);
}

pub fn cosine_self_is_one() {
    let a = [0.3, -1.2, 4.0];
    assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
}

pub fn cosine_orthogonal_is_zero() {
    assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
}

pub fn zscore_constant_column() {
    let rows = vec![vec![1.0, 7.0], vec![3.0, 7.0], vec![5.0, 7.0]];
    let st = zscore_fit(&rows).unwrap();
    for r in &rows {
        assert_eq!(zscore_apply(&st, r).unwrap()[1], 0.0);
    }
}

pub fn zscore_single_row() {
    let rows = vec![vec![2.0, -4.0, 9.0]];
    let st = zscore_fit(&rows).unwrap();
    assert_eq!(zscore_apply(&st, &rows[0]).unwrap(), vec![0.0; 3]);
}

pub fn spearman_monotone_increasing() {
    assert!((spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
}

pub fn spearman_monotone_decreasing() {
    assert!((spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
}

pub fn levenshtein_identity() {
    assert_eq!(levenshtein(b"kitten", b"kitten"), 0);
}

pub fn levenshtein_insertions_only() {
    assert_eq!(levenshtein(b"", b"abc"), 3);
}

pub fn clip_below_threshold() {
    let mut g = Mat::from_row_major(1, 2, vec![0.0, 3.0]).unwrap();
    let before = g.clone();
    assert_eq!(clip_global_norm(&mut [&mut g], 5.0), 3.0);
    assert_eq!(g, before);
}

pub fn clip_exactly_at_threshold() {
    let mut g = Mat::from_row_major(1, 2, vec![3.0, 4.0]).unwrap();
    let before = g.clone();
    assert_eq!(clip_global_norm(&mut [&mut g], 5.0), 5.0);
    assert_eq!(g, before);
}

pub fn normalize_single_word() {
    let (p, f) = normalize_transcription(&[s(&["a"])], &StripSet::none()).unwrap();
    assert_eq!(p, s(&["a", "<eos>"]));
    assert_eq!(f, vec![true, false]);
}

pub fn normalize_strips_markers() {
    let (p, f) = normalize_transcription(&[s(&["ˈa", "b"]), s(&["c"])], &StripSet::new(["ˈ"])).unwrap();
    assert_eq!(p, s(&["a", "b", "c", "<eos>"]));
    assert_eq!(f, vec![false, true, true, false]);
}

pub fn normalize_rejects_marker_only_word() {
    assert!(normalize_transcription(&[s(&["a"]), s(&["ˈ", "ˌ"])], &StripSet::default()).is_err());
}

pub fn rare_word_maps_to_unk() {
    let counts: BTreeMap<String, usize> = [("cat".to_string(), 9), ("dog".to_string(), 10)].into();
    let v = WordVocab::build(&counts, 10);
    assert_eq!(v.encode_word("cat"), WordVocab::UNK_INDEX);
    assert_ne!(v.encode_word("dog"), WordVocab::UNK_INDEX);
}

pub fn threshold_one_keeps_every_word() {
    let counts: BTreeMap<String, usize> = [("cat".to_string(), 1), ("dog".to_string(), 3)].into();
    let v = WordVocab::build(&counts, 1);
    assert!(v.contains("cat") && v.contains("dog"));
    assert_ne!(v.encode_word("cat"), WordVocab::UNK_INDEX);
}

pub fn empty_corpus_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("corpus.jsonl");
    write_text(&p, "");
    assert!(load_corpus(&p).unwrap().is_empty());
}

fn small_synth() -> SynthConfig {
    SynthConfig {
        n_words: 8,
        n_phonemes_per_word: [2, 4],
        n_concepts: 4,
        feature_dim: 5,
        n_train: 12,
        n_val: 4,
        n_test: 4,
        noise_sigma: 0.2,
        seed: 11,
        phoneme_inventory: 12,
        words_per_caption: [3, 8],
        men_pairs: 0,
    }
}

pub fn dataset_round_trip() {
    let raw = generate(&small_synth()).unwrap().raw;
    let dir = tempfile::tempdir().unwrap();
    raw.write_dir(dir.path()).unwrap();
    assert_eq!(RawCorpus::load_dir(dir.path()).unwrap(), raw);
    let opts = AssembleOptions::default();
    assert_eq!(GroundedDataset::load_dir(dir.path(), &opts).unwrap(), GroundedDataset::assemble(&raw, &opts).unwrap());
}

pub fn missing_image_is_named() {
    let mut raw = generate(&small_synth()).unwrap().raw;
    raw.captions[0].image_id = "img-nowhere".into();
    let err = GroundedDataset::assemble(&raw, &AssembleOptions::default()).unwrap_err();
    assert!(err.to_string().contains("img-nowhere"), "{err}");
}

pub fn synth_same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&small_synth()).unwrap().raw.write_dir(a.path()).unwrap();
    generate(&small_synth()).unwrap().raw.write_dir(b.path()).unwrap();
    for f in ["corpus.jsonl", "features.jsonl", "splits.jsonl"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}

pub fn synth_noiseless_single_word() {
    let cfg = SynthConfig { noise_sigma: 0.0, words_per_caption: [1, 1], ..small_synth() };
    let corpus = generate(&cfg).unwrap();
    let features: BTreeMap<&str, &[f64]> =
        corpus.raw.features.iter().map(|f| (f.image_id.as_str(), f.vector.as_slice())).collect();
    for cap in &corpus.raw.captions {
        assert_eq!(cap.words.len(), 1);
        let w = corpus.lexicon.iter().find(|w| w.word == cap.words[0]).unwrap();
        assert_eq!(features[cap.image_id.as_str()], corpus.prototypes[w.concept].as_slice());
    }
}

pub fn gru_cell_zero_fixed_point() {
    let p = GruLayerParams::zeros(3, 4);
    assert_eq!(gru_cell(&[1.0, -2.0, 5.0], &[0.0; 4], &p).unwrap(), vec![0.0; 4]);
}

fn random_layer(input: usize, hidden: usize, seed: u64) -> GruLayerParams {
    GruLayerParams::glorot(input, hidden, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn random_seq(len: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| super::random_vec(&mut rng, dim)).collect()
}

pub fn gru_layer_length_one() {
    let p = random_layer(3, 4, 1);
    let x = random_seq(1, 3, 2);
    assert_eq!(gru_layer(&x, &[0.0; 4], &p).unwrap(), vec![gru_cell(&x[0], &[0.0; 4], &p).unwrap()]);
}

pub fn gru_layer_zero_weights() {
    let p = GruLayerParams::zeros(3, 4);
    assert!(gru_layer(&random_seq(5, 3, 3), &[0.0; 4], &p).unwrap().iter().all(|h| h == &vec![0.0; 4]));
}

pub fn gru_layer_prefix() {
    let p = random_layer(3, 4, 4);
    let x = random_seq(6, 3, 5);
    let full = gru_layer(&x, &[0.0; 4], &p).unwrap();
    for m in 1..=x.len() {
        assert_eq!(gru_layer(&x[..m], &[0.0; 4], &p).unwrap(), full[..m].to_vec());
    }
}

pub fn residual_zero_weights_passes_input() {
    let x = random_seq(4, 3, 6);
    assert_eq!(residual_layer(&x, &[0.0; 3], &GruLayerParams::zeros(3, 3)).unwrap(), x);
}

pub fn residual_minus_gru_is_input() {
    let p = random_layer(4, 4, 7);
    let x = random_seq(5, 4, 8);
    let res = residual_layer(&x, &[0.0; 4], &p).unwrap();
    let g = gru_layer(&x, &[0.0; 4], &p).unwrap();
    for t in 0..x.len() {
        for i in 0..4 {
            assert_eq!(res[t][i], g[t][i] + x[t][i]);
            assert!((res[t][i] - g[t][i] - x[t][i]).abs() <= f64::EPSILON * res[t][i].abs().max(1.0));
        }
    }
}

pub fn residual_dim_mismatch() {
    assert!(residual_layer(&random_seq(3, 3, 9), &[0.0; 4], &random_layer(3, 4, 9)).is_err());
}

pub fn phon_zero_weights() {
    let m = PhonGruModel::zeros(6, 4, 3, 5);
    let u = utterance(vec![1, 2, 3, 0], vec![1, 0]);
    let t = m.forward(&u).unwrap();
    assert_eq!(t.prediction, vec![0.0; 5]);
    assert!(t.layers.iter().flatten().flatten().all(|v| *v == 0.0));
}

pub fn phon_trace_shape() {
    let m = random_model(ModelType::PhonGru, 3, 7, 3, 6, 5, 4);
    let u = utterance(vec![1, 2, 3, 4, 0], vec![1, 0]);
    let t = m.forward(&u).unwrap();
    assert_eq!(t.layers.len(), 3);
    assert!(t.layers.iter().all(|l| l.len() == 5 && l.iter().all(|h| h.len() == 7)));
}

pub fn phon_forward_deterministic() {
    let u = utterance(vec![5, 1, 2, 0], vec![1, 0]);
    let a = random_model(ModelType::PhonGru, 4, 6, 2, 6, 5, 4).forward(&u).unwrap();
    let b = random_model(ModelType::PhonGru, 4, 6, 2, 6, 5, 4).forward(&u).unwrap();
    let bits = |t: &phongru::models::ActivationTrace| -> Vec<u64> {
        t.layers.iter().flatten().flatten().chain(&t.prediction).map(|v| v.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

pub fn word_gru_zero_embeddings() {
    let Model::WordGru(mut m) = random_model(ModelType::WordGru, 5, 4, 1, 6, 5, 3) else { unreachable!() };
    m.embeddings.fill(0.0);
    let t = m.forward(&utterance(vec![0], vec![3, 2, 4, 0])).unwrap();
    assert_eq!(t.prediction, vec![0.0; 3]);
}

pub fn word_gru_trace_shape() {
    let m = random_model(ModelType::WordGru, 6, 5, 1, 6, 7, 3);
    let t = m.forward(&utterance(vec![0], vec![3, 2, 4, 0])).unwrap();
    assert_eq!(t.layers.len(), 1);
    assert_eq!(t.layers[0].len(), 4);
    assert!(t.layers[0].iter().all(|h| h.len() == 5));
}

pub fn word_gru_unk_column() {
    let counts: BTreeMap<String, usize> = [("cat".to_string(), 1), ("dog".to_string(), 50)].into();
    let v = WordVocab::build(&counts, 10);
    let unk = v.encode_word("cat");
    let Model::WordGru(m) = random_model(ModelType::WordGru, 7, 4, 1, 6, v.len(), 3) else { unreachable!() };
    // a model whose only input column is the UNK one gives the same result
    let mut only_unk = WordGruModel { embeddings: Mat::zeros(4, v.len()), ..m.clone() };
    for r in 0..4 {
        only_unk.embeddings.set(r, unk, m.embeddings.get(r, unk));
    }
    let u = utterance(vec![0], vec![unk, 0]);
    let mut with_eos = only_unk.clone();
    for r in 0..4 {
        with_eos.embeddings.set(r, 0, m.embeddings.get(r, 0));
    }
    assert_eq!(m.forward(&u).unwrap().prediction, with_eos.forward(&u).unwrap().prediction);
}

fn identity_word_sum(vocab: usize) -> WordSumModel {
    WordSumModel { embeddings: Mat::identity(vocab), projection: Mat::identity(vocab) }
}

pub fn word_sum_counts() {
    let m = identity_word_sum(5);
    assert_eq!(m.predict(&[2, 3, 2, 0]).unwrap(), vec![1.0, 0.0, 2.0, 1.0, 0.0]);
}

pub fn word_sum_permutation() {
    let Model::WordSum(m) = random_model(ModelType::WordSum, 8, 4, 1, 6, 7, 3) else { unreachable!() };
    let a = m.predict(&[3, 5, 6, 0]).unwrap();
    let b = m.predict(&[6, 3, 5, 0]).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
    }
}

pub fn word_sum_duplicate_word() {
    let Model::WordSum(mut m) = random_model(ModelType::WordSum, 9, 4, 1, 6, 7, 3) else { unreachable!() };
    for r in 0..4 {
        m.embeddings.set(r, 0, 0.0);
    }
    let once = m.predict(&[4, 0]).unwrap();
    let twice = m.predict(&[4, 4, 0]).unwrap();
    for (a, b) in once.iter().zip(&twice) {
        assert!((2.0 * a - b).abs() <= 1e-14 * b.abs().max(1.0));
    }
}

pub fn loss_identical() {
    assert!(loss(&[1.0, 2.0, -3.0], &[1.0, 2.0, -3.0]).unwrap().abs() < 1e-15);
}

pub fn loss_orthogonal() {
    assert_eq!(loss(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 1.0);
}

pub fn loss_opposite() {
    assert!((loss(&[1.0, -2.0], &[-1.0, 2.0]).unwrap() - 2.0).abs() < 1e-15);
}

pub fn dead_unit_zero_gradient() {
    let mut m = PhonGruModel::init(5, 4, 1, 3, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    for c in 0..5 {
        m.layers[0].w.set(2, c, -100.0);
    }
    for c in 0..4 {
        m.layers[0].u.set(2, c, 0.0);
    }
    let model = Model::PhonGru(m);
    let batch = vec![(utterance(vec![1, 2, 3, 0], vec![1, 0]), vec![0.5, -1.0, 2.0])];
    let (_, g) = gradients(&model, &as_refs(&batch)).unwrap();
    let Model::PhonGru(g) = g else { unreachable!() };
    assert!((0..5).all(|c| g.layers[0].w.get(2, c) == 0.0));
    assert!((0..4).all(|c| g.layers[0].u.get(2, c) == 0.0));
}

pub fn adam_zero_gradient() {
    let model = random_model(ModelType::PhonGru, 10, 4, 2, 5, 5, 3);
    let mut params = model.clone();
    let zero = model.zeros_like();
    let mut st = AdamState::new(AdamHyper::new(0.1), params.tensors());
    st.step(&mut params.tensors_mut(), &zero.tensors()).unwrap();
    assert_eq!(params, model);
}

fn small_dataset() -> GroundedDataset {
    generate(&small_synth())
        .unwrap()
        .assemble(&AssembleOptions { word_unk_threshold: 1, ..Default::default() })
        .unwrap()
}

fn small_train_config(epochs: usize) -> TrainConfig {
    let mut c = TrainConfig::new(4, epochs, ModelDims { hidden_dim: 6, layers: 2, embedding_dim: 6 });
    c.learning_rate = 0.01;
    c.batch_size = 5;
    c.eval_k = 2;
    c
}

pub fn train_zero_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(&small_train_config(0), &small_dataset(), ModelType::PhonGru, Some(dir.path())).unwrap();
    assert!(o.logs.is_empty() && o.best.is_none());
    assert!(dir.path().join("epoch-000.json").exists());
    assert!(!dir.path().join("epoch-001.json").exists());
    assert_eq!(std::fs::read_to_string(dir.path().join("epochs.jsonl")).unwrap(), "");
}

pub fn train_same_seed_same_logs() {
    let d = small_dataset();
    let a = train(&small_train_config(2), &d, ModelType::WordGru, None).unwrap();
    let b = train(&small_train_config(2), &d, ModelType::WordGru, None).unwrap();
    assert_eq!(serde_json::to_string(&a.logs).unwrap(), serde_json::to_string(&b.logs).unwrap());
}

fn log(epoch: usize, acc: f64) -> EpochLog {
    EpochLog { epoch, train_loss: 0.5, val_loss: 0.5, val_acc: acc, eval_k: 5, checkpoint: None }
}

pub fn best_epoch_single() {
    assert_eq!(select_best_epoch(&[log(1, 0.3)]).unwrap(), 1);
}

pub fn best_epoch_improving() {
    let logs: Vec<EpochLog> = (1..=5).map(|e| log(e, e as f64 / 10.0)).collect();
    assert_eq!(select_best_epoch(&logs).unwrap(), 5);
}

pub fn best_epoch_tie() {
    let logs: Vec<EpochLog> = (1..=8).map(|e| log(e, if e == 3 || e == 7 { 0.6 } else { 0.2 })).collect();
    assert_eq!(select_best_epoch(&logs).unwrap(), 3);
}

struct Oracle(BTreeMap<String, Vec<f64>>);

impl phongru::models::Predictor for Oracle {
    fn predict(&self, u: &Utterance) -> phongru::Result<Vec<f64>> {
        Ok(self.0[&u.image_id].clone())
    }
}

fn oracle_setup() -> (Oracle, Vec<Utterance>) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let targets: BTreeMap<String, Vec<f64>> =
        (0..9).map(|i| (format!("img{i}"), super::random_vec(&mut rng, 4))).collect();
    let utts =
        targets.keys().map(|id| Utterance { image_id: id.clone(), ..utterance(vec![1, 0], vec![1, 0]) }).collect();
    (Oracle(targets), utts)
}

pub fn retrieval_perfect_oracle() {
    let (o, utts) = oracle_setup();
    let r = evaluate_retrieval(&o, &utts, |id| Ok(o.0[id].as_slice()), &[1]).unwrap();
    assert_eq!(r.acc_at(1), Some(1.0));
}

pub fn retrieval_k_equals_n() {
    let (o, utts) = oracle_setup();
    // a constant predictor still finds every image within N
    let constant = Oracle(o.0.keys().map(|k| (k.clone(), vec![1.0, 0.0, 0.0, 0.0])).collect());
    let r = evaluate_retrieval(&constant, &utts, |id| Ok(o.0[id].as_slice()), &[9]).unwrap();
    assert_eq!(r.acc_at(9), Some(1.0));
}

/// Every layer's activation is the phoneme index and boundary flag.
struct Leak;

impl phongru::models::Representations for Leak {
    fn num_layers(&self) -> usize {
        1
    }
    fn activations(&self, u: &Utterance) -> phongru::Result<Vec<Vec<Vec<f64>>>> {
        Ok(vec![u
            .phonemes
            .iter()
            .zip(&u.boundary_after)
            .map(|(&p, &b)| vec![p as f64, f64::from(u8::from(b))])
            .collect()])
    }
}

pub fn boundary_labels_one_word() {
    let u = Utterance { boundary_after: vec![false, false, true, false], ..utterance(vec![1, 2, 3, 0], vec![1, 0]) };
    let d = collect_boundary_dataset(&Leak, &[u], 1).unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(d.labels, vec![false, false, true]);
}

fn ab_vocab() -> (PhonemeVocab, usize, usize) {
    let v = PhonemeVocab::build(["a", "b"]);
    let (a, b) = (v.vocab().get("a").unwrap(), v.vocab().get("b").unwrap());
    (v, a, b)
}

pub fn ngram_definition() {
    let (v, a, b) = ab_vocab();
    let grams: Vec<String> = ngrams_at(&[a, b, 0], 1, 2).iter().map(|k| render_ngram(k, &v)).collect();
    assert_eq!(grams, vec!["b", "ab"]);
}

pub fn ngram_padding() {
    let (v, a, b) = ab_vocab();
    let grams: Vec<String> = ngrams_at(&[a, b, 0], 0, 2).iter().map(|k| render_ngram(k, &v)).collect();
    assert_eq!(grams, vec!["a", "^a"]);
}

pub fn ngram_space_bound() {
    let d = generate(&small_synth()).unwrap().assemble(&AssembleOptions::default()).unwrap();
    let utts = d.split(Split::Train);
    let f = NgramFeaturizer::fit(utts, 3).unwrap();
    let mut distinct = vec![std::collections::BTreeSet::new(); 3];
    for u in utts {
        for t in 0..u.len_without_eos() {
            for (k, g) in ngrams_at(&u.phonemes, t, 3).into_iter().enumerate() {
                distinct[k].insert(g);
            }
        }
    }
    assert!(f.dim() <= distinct.iter().map(|s| s.len()).sum());
}

pub fn logreg_degenerate_eval() {
    let train = ProbeDataset::dense(vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]], vec![false, false, true, true])
        .unwrap();
    let m = logreg_fit(&train, 1.0).unwrap();
    let all_neg = ProbeDataset::dense(vec![vec![-3.0], vec![-1.5], vec![-2.5]], vec![false; 3]).unwrap();
    let r = logreg_eval(&m, &all_neg).unwrap();
    assert_eq!(r.accuracy, majority_baseline(&all_neg.labels, &all_neg.labels));
    assert_eq!(r.recall, 0.0);
    let all_pos = ProbeDataset::dense(vec![vec![3.0], vec![1.5]], vec![true; 2]).unwrap();
    let r = logreg_eval(&m, &all_pos).unwrap();
    assert_eq!(r.accuracy, majority_baseline(&all_pos.labels, &all_pos.labels));
    assert_eq!(r.recall, 1.0);
}

fn separable(n: usize) -> ProbeDataset {
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 - n as f64 / 2.0 + 0.5, (i % 3) as f64]).collect();
    let labels = rows.iter().map(|r| r[0] > 0.0).collect();
    ProbeDataset::dense(rows, labels).unwrap()
}

pub fn grid_single_value() {
    assert_eq!(grid_search_c(&separable(30), &[3.0], 5, 1).unwrap().best_c, 3.0);
}

pub fn grid_returns_member() {
    let r = grid_search_c(&separable(40), &DEFAULT_C_GRID, 5, 1).unwrap();
    assert!(DEFAULT_C_GRID.contains(&r.best_c));
}

pub fn folds_deterministic() {
    assert_eq!(fold_assignment(37, 5, 99), fold_assignment(37, 5, 99));
}

pub fn leaked_label_probe() {
    let utts: Vec<Utterance> = (0..40)
        .map(|i| {
            let n = 2 + i % 5;
            Utterance {
                boundary_after: (0..n).map(|t| t % 2 == 1 || t + 1 == n).chain([false]).collect(),
                ..utterance((0..n).map(|t| 1 + (t + i) % 4).chain([0]).collect(), vec![1, 0])
            }
        })
        .collect();
    let cfg = BoundaryProbeConfig { layers: vec![1], ngram_orders: vec![], ..Default::default() };
    let r = boundary_probe_report(&Leak, &utts[..25], &utts[25..], &cfg).unwrap();
    assert_eq!(r.layers[0].accuracy, 1.0);
}

fn men_fixture() -> (PhonemeVocab, WordVocab, phongru::data::MenPairSet) {
    let pv = PhonemeVocab::build(["a", "b", "c", "d"]);
    let counts: BTreeMap<String, usize> = [("x".to_string(), 20)].into();
    let wv = WordVocab::build(&counts, 1);
    let words = ["ab", "ba", "abcd", "dd", "cab", "bad", "c"];
    let mut pairs = Vec::new();
    for (i, a) in words.iter().enumerate() {
        for b in &words[i..] {
            pairs.push(phongru::data::MenPair {
                word_a: a.to_string(),
                word_b: b.to_string(),
                rating: (i * 7 % 5) as f64,
                phonemes_a: a.chars().map(String::from).collect(),
                phonemes_b: b.chars().map(String::from).collect(),
            });
        }
    }
    let set = phongru::data::MenPairSet { pairs, train_counts: BTreeMap::new(), skipped: 0 };
    (pv, wv, set)
}

pub fn similarity_identical_words() {
    let (pv, wv, set) = men_fixture();
    let model = random_model(ModelType::PhonGru, 13, 6, 3, pv.len(), wv.len(), 3);
    let enc =
        WordEncoder { model_type: ModelType::PhonGru, phoneme_vocab: &pv, word_vocab: &wv, strip: StripSet::default() };
    let (acts, _) = encode_pairs(&model, &set, &enc).unwrap();
    let again = final_activations(&model, &enc.encode("ab", &s(&["a", "b"])).unwrap()).unwrap();
    for k in 0..3 {
        assert!((cosine_similarity(&acts["ab"][k], &again[k]).unwrap() - 1.0).abs() < 1e-12);
    }
}

pub fn similarity_self_correlation() {
    let (pv, wv, mut set) = men_fixture();
    let model = random_model(ModelType::PhonGru, 14, 6, 2, pv.len(), wv.len(), 3);
    let enc =
        WordEncoder { model_type: ModelType::PhonGru, phoneme_vocab: &pv, word_vocab: &wv, strip: StripSet::default() };
    let (acts, _) = encode_pairs(&model, &set, &enc).unwrap();
    for p in &mut set.pairs {
        p.rating = phongru::numerics::cosine_or_zero(&acts[&p.word_a][1], &acts[&p.word_b][1]);
    }
    let r = word_similarity_report(&model, &set, &enc, 100).unwrap();
    assert!((r.layers[1].rho_all.unwrap() - 1.0).abs() < 1e-12);
}

pub fn nearest_duplicate() {
    let v = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![1.0, 2.0], vec![0.3, 0.1]];
    assert_eq!(nearest_neighbor(&v, 0), Some(2));
    assert_eq!(nearest_neighbor(&v, 2), Some(0));
}

pub fn nearest_excludes_self() {
    let v = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]];
    for i in 0..3 {
        assert_ne!(nearest_neighbor(&v, i), Some(i));
    }
}

pub fn substring_abc() {
    let abc: Vec<char> = "abc".chars().collect();
    assert_eq!(shared_substring_mean_position(&abc, &abc), Some(2.0));
}

pub fn substring_disjoint() {
    assert_eq!(shared_substring_mean_position(&[1, 2, 3], &[4, 5]), None);
}

pub fn substring_two_identical_sentences() {
    let model = random_model(ModelType::PhonGru, 15, 5, 3, 6, 5, 3);
    let u = utterance(vec![1, 4, 2, 5, 3, 0], vec![1, 0]);
    let r = substring_report(&model, &[u.clone(), u], &[1, 2, 3], SpanCounting::PerSpan).unwrap();
    for l in &r.layers {
        assert_eq!(l.mean_position, Some(3.0));
    }
}

pub fn cli_synth_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.json");
    write_text(
        &cfg,
        r#"{"n_words": 4, "n_phonemes_per_word": [1, 3], "n_concepts": 2, "feature_dim": 3, "n_train": 4, "n_val": 2, "n_test": 2, "noise_sigma": 0.1, "seed": 1}"#,
    );
    let out = dir.path().join("data");
    let r = run_cli(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for f in ["corpus.jsonl", "features.jsonl", "splits.jsonl", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

pub fn cli_synth_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.json");
    write_text(&cfg, TINY_SYNTH);
    for out in ["a", "b"] {
        let r = run_cli(&["synth", "--config", cfg.to_str().unwrap(), "--out", dir.path().join(out).to_str().unwrap()]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    for f in ["corpus.jsonl", "features.jsonl", "splits.jsonl", "men.txt", "men_phon.jsonl"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

pub fn cli_synth_missing_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.json");
    write_text(
        &cfg,
        r#"{"n_words": 4, "n_phonemes_per_word": [1, 3], "n_concepts": 2, "feature_dim": 3, "n_train": 4, "n_val": 2, "n_test": 2, "noise_sigma": 0.1}"#,
    );
    let r = run_cli(&["synth", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("d").to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("seed"), "{}", r.stderr);
}

pub fn cli_train_word_sum() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_run(dir.path(), "word-sum", 1);
    assert!(out.join("epoch-001.json").is_file());
}

pub fn cli_best_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_run(dir.path(), "word-sum", 4);
    let logs: Vec<EpochLog> = phongru::data::read_jsonl(&out.join("epochs.jsonl")).unwrap();
    let best: serde_json::Value = phongru::data::read_json(&out.join("best.json")).unwrap();
    let max = logs.iter().map(|l| l.val_acc).fold(f64::NEG_INFINITY, f64::max);
    let first = logs.iter().find(|l| l.val_acc == max).unwrap();
    assert_eq!(best["epoch"].as_u64().unwrap() as usize, first.epoch);
    assert!(logs.iter().all(|l| l.eval_k == 5));
}

pub fn cli_train_rerun() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let oa = tiny_run(a.path(), "word-gru", 2);
    let ob = tiny_run(b.path(), "word-gru", 2);
    assert_eq!(std::fs::read(oa.join("epochs.jsonl")).unwrap(), std::fs::read(ob.join("epochs.jsonl")).unwrap());
}

/// A data directory of one-word captions and a word-sum checkpoint that
/// maps each word exactly onto its image's z-scored target.
pub fn perfect_oracle_fixture(dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let words = ["ka", "po", "ti", "mu"];
    let mut raw = RawCorpus::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (i, w) in words.iter().enumerate() {
        raw.features.push(FeatureRecord { image_id: format!("img{i}"), vector: super::random_vec(&mut rng, 3) });
        for (j, split) in [Split::Train, Split::Val, Split::Test].into_iter().enumerate() {
            let id = format!("cap{i}{j}");
            raw.captions.push(CaptionRecord {
                id: id.clone(),
                image_id: format!("img{i}"),
                words: vec![w.to_string()],
                phoneme_words: vec![w.chars().map(String::from).collect()],
            });
            raw.splits.push(SplitRecord { id, split });
        }
    }
    let data = dir.join("data");
    raw.write_dir(&data).unwrap();
    let opts = AssembleOptions { word_unk_threshold: 1, ..Default::default() };
    let ds = GroundedDataset::load_dir(&data, &opts).unwrap();
    let v = ds.word_vocab.len();
    let mut projection = Mat::zeros(3, v);
    for (i, w) in words.iter().enumerate() {
        let target = ds.target(&format!("img{i}")).unwrap();
        for (r, t) in target.iter().enumerate() {
            projection.set(r, ds.word_vocab.encode_word(w), *t);
        }
    }
    let mut embeddings = Mat::identity(v);
    embeddings.set(0, 0, 0.0);
    let model = Model::WordSum(WordSumModel { embeddings, projection });
    let ck = dir.join("oracle.json");
    Checkpoint::new(&model, &ds.phoneme_vocab, &ds.word_vocab, 1, 0).save(&ck).unwrap();
    (data, ck)
}

pub fn cli_eval_perfect_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ck) = perfect_oracle_fixture(dir.path());
    let out = dir.path().join("eval.json");
    let r = run_cli(&[
        "eval",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--split",
        "test",
        "--k",
        "1,4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report: serde_json::Value = phongru::data::read_json(&out).unwrap();
    assert_eq!(report["result"]["acc"]["1"].as_f64(), Some(1.0));
}

pub fn cli_probe_boundary_layers() {
    let dir = tempfile::tempdir().unwrap();
    let run = tiny_run(dir.path(), "phon-gru", 1);
    let out = dir.path().join("boundary.json");
    let r = run_cli(&[
        "probe",
        "boundary",
        "--checkpoint",
        run.join("epoch-001.json").to_str().unwrap(),
        "--data",
        dir.path().join("data").to_str().unwrap(),
        "--layers",
        "1,2,3",
        "--ngrams",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report: serde_json::Value = phongru::data::read_json(&out).unwrap();
    let layers = report["report"]["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 3);
    for (k, l) in layers.iter().enumerate() {
        assert_eq!(l["source"]["layer"].as_u64(), Some(k as u64 + 1));
    }
    assert!(report["report"]["majority_baseline"].as_f64().is_some());
}

pub fn cli_similarity_without_men() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ck) = perfect_oracle_fixture(dir.path());
    let (ck, data) = (ck.to_str().unwrap(), data.to_str().unwrap());
    let r = run_cli(&["probe", "similarity", "--checkpoint", ck, "--data", data]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("--men"), "{}", r.stderr);
    let missing = dir.path().join("absent.txt");
    let r = run_cli(&["probe", "similarity", "--checkpoint", ck, "--data", data, "--men", missing.to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("absent.txt"), "{}", r.stderr);
}
