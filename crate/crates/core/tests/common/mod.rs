//! Test-only oracles, kept independent of the library code paths they check.
#![allow(dead_code)]

use phongru::data::{SynthConfig, Utterance};
use phongru::models::{GruLayerParams, Model, ModelDims, ModelType, PhonGruModel, WordGruModel};
use phongru::numerics::Mat;
use phongru::training::{batch_loss, flatten, param_mut};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const KINK_MARGIN: f64 = 1e-3;
/// Denominator floor of the relative error, so gradients that are zero up to
/// rounding compare on an absolute 1e-10 scale.
pub const REL_FLOOR: f64 = 1e-6;

pub fn utterance(phonemes: Vec<usize>, words: Vec<usize>) -> Utterance {
    let n = phonemes.len();
    Utterance {
        id: "u".into(),
        image_id: "i".into(),
        boundary_after: (0..n).map(|i| i + 2 == n).collect(),
        phonemes,
        words,
    }
}

/// Random utterance whose phoneme and word sequences end with EOS (index 0).
pub fn random_utterance<R: Rng>(rng: &mut R, phon_vocab: usize, word_vocab: usize, max_len: usize) -> Utterance {
    let n = rng.random_range(2..=max_len);
    let mut phonemes: Vec<usize> = (0..n - 1).map(|_| rng.random_range(1..phon_vocab)).collect();
    phonemes.push(0);
    let m = rng.random_range(2..=max_len);
    let mut words: Vec<usize> = (0..m - 1).map(|_| rng.random_range(1..word_vocab)).collect();
    words.push(0);
    utterance(phonemes, words)
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Scales every tensor so activations spread across the clipped range.
pub fn random_model(kind: ModelType, seed: u64, d: usize, k: usize, pv: usize, wv: usize, feat: usize) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModelDims { hidden_dim: d, layers: k, embedding_dim: d };
    let mut m = Model::init(kind, &dims, pv, wv, feat, &mut rng).unwrap();
    for t in m.tensors_mut() {
        t.scale(2.0);
    }
    m
}

fn min_kink_distance(pre: impl Iterator<Item = f64>) -> f64 {
    pre.map(|v| v.abs().min((v - 5.0).abs())).fold(f64::INFINITY, f64::min)
}

/// Distance of the nearest candidate pre-activation to a clip kink.
pub fn kink_distance(model: &Model, batch: &[(Utterance, Vec<f64>)]) -> f64 {
    batch
        .iter()
        .map(|(u, _)| match model {
            Model::PhonGru(m) => {
                let f = m.forward_detailed(&u.phonemes).unwrap();
                min_kink_distance(f.steps.iter().flatten().flat_map(|s| s.pre_candidate.clone()))
            }
            Model::WordGru(m) => {
                let f = m.forward_detailed(&u.words).unwrap();
                min_kink_distance(f.steps.iter().flat_map(|s| s.pre_candidate.clone()))
            }
            Model::WordSum(_) => f64::INFINITY,
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn as_refs(batch: &[(Utterance, Vec<f64>)]) -> Vec<(&Utterance, &[f64])> {
    batch.iter().map(|(u, t)| (u, t.as_slice())).collect()
}

/// Central finite differences of the mean batch loss, every parameter.
pub fn finite_difference_gradient(model: &Model, batch: &[(Utterance, Vec<f64>)]) -> Vec<f64> {
    let refs = as_refs(batch);
    let n = flatten(model).len();
    (0..n)
        .map(|i| {
            let mut plus = model.clone();
            *param_mut(&mut plus, i) += FD_STEP;
            let mut minus = model.clone();
            *param_mut(&mut minus, i) -= FD_STEP;
            (batch_loss(&plus, &refs).unwrap() - batch_loss(&minus, &refs).unwrap()) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Small random instance whose forward passes stay clear of clip kinks,
/// resampling the seed until one does.
pub fn gradient_instance(kind: ModelType, seed: u64, d: usize, k: usize) -> (Model, Vec<(Utterance, Vec<f64>)>) {
    let (pv, wv, feat) = (5, 6, 4);
    for attempt in 0..1000u64 {
        let s = seed * 1000 + attempt;
        let model = random_model(kind, s, d, k, pv, wv, feat);
        let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0x5eed);
        let batch: Vec<(Utterance, Vec<f64>)> =
            (0..3).map(|_| (random_utterance(&mut rng, pv, wv, 6), random_vec(&mut rng, feat))).collect();
        if kink_distance(&model, &batch) > KINK_MARGIN {
            return (model, batch);
        }
    }
    panic!("no kink-free instance found");
}

/// Full (n+1) x (m+1) edit-distance table.
pub fn levenshtein_table<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in t[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            t[i][j] = (t[i - 1][j] + 1).min(t[i][j - 1] + 1).min(t[i - 1][j - 1] + cost);
        }
    }
    t[a.len()][b.len()]
}

/// Average-tie rank by counting: rank = #less + (#equal + 1) / 2.
pub fn brute_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let less = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    brute_pearson(&brute_ranks(x), &brute_ranks(y))
}

pub fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Rank by sorting all candidates: similarity descending, then index.
pub fn brute_rank(pred: &[f64], candidates: &[Vec<f64>], correct: usize) -> usize {
    let mut scored: Vec<(f64, usize)> =
        candidates.iter().enumerate().map(|(i, c)| (brute_cosine(pred, c), i)).collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.iter().position(|(_, i)| *i == correct).unwrap() + 1
}

/// Every span of `a` found contiguously in `b` (naive search), each symbol
/// weighted by its position from the end of `a`.
pub fn brute_span_mean(a: &[usize], b: &[usize]) -> Option<f64> {
    let n = a.len();
    let (mut sum, mut count) = (0.0, 0usize);
    for s in 0..n {
        for e in s + 1..=n {
            let span = &a[s..e];
            let found = b.len() >= span.len() && (0..=b.len() - span.len()).any(|j| &b[j..j + span.len()] == span);
            if found {
                for i in s..e {
                    sum += (n - i) as f64;
                    count += 1;
                }
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

pub fn learning_synth_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_words: 20,
        n_phonemes_per_word: [2, 5],
        n_concepts: 20,
        feature_dim: 16,
        n_train: 1000,
        n_val: 200,
        n_test: 200,
        noise_sigma: 0.1,
        seed,
        phoneme_inventory: 12,
        words_per_caption: [3, 8],
        men_pairs: 0,
    }
}

/// Dense layer helper for hand-built models.
pub fn layer_from(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m.set(r, c, f(r, c));
        }
    }
    m
}

pub fn phon_model_from_layers(vocab: usize, layers: Vec<GruLayerParams>, projection: Mat) -> Model {
    Model::PhonGru(PhonGruModel { vocab_size: vocab, layers, projection })
}

pub fn word_gru_from(embeddings: Mat, layer: GruLayerParams, projection: Mat) -> Model {
    Model::WordGru(WordGruModel { embeddings, layer, projection })
}

pub mod trivial;

use std::path::Path;
use std::process::Command;

pub struct CliRun {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_cli(args: &[&str]) -> CliRun {
    run_cli_in(Path::new("."), args)
}

pub fn run_cli_in(dir: &Path, args: &[&str]) -> CliRun {
    let out = Command::new(env!("CARGO_BIN_EXE_phongru"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn write_text(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Small generator config with similarity pairs.
pub const TINY_SYNTH: &str = r#"{"n_words": 12, "n_phonemes_per_word": [2, 4], "n_concepts": 6, "feature_dim": 6,
 "n_train": 60, "n_val": 30, "n_test": 30, "noise_sigma": 0.1, "seed": 5, "men_pairs": 20}"#;

pub fn tiny_train_config(epochs: usize) -> String {
    format!(
        r#"{{"max_epochs": {epochs}, "seed": 2, "hidden_dim": 8, "embedding_dim": 8, "layers": 3, "learning_rate": 0.01, "batch_size": 16, "unk_threshold": 1}}"#
    )
}

/// Synthesizes a tiny corpus into `dir/data` and trains `model` on it for
/// `epochs` epochs into `dir/<model>`.
pub fn tiny_run(dir: &Path, model: &str, epochs: usize) -> std::path::PathBuf {
    let data = dir.join("data");
    if !data.join("corpus.jsonl").exists() {
        write_text(&dir.join("synth.json"), TINY_SYNTH);
        let r =
            run_cli(&["synth", "--config", dir.join("synth.json").to_str().unwrap(), "--out", data.to_str().unwrap()]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    let cfg = dir.join(format!("train-{model}.json"));
    write_text(&cfg, &tiny_train_config(epochs));
    let out = dir.join(model);
    let r = run_cli(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--model",
        model,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    out
}
