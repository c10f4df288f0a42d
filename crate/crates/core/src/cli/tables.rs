use std::fmt::Write;

use crate::data::SynthConfig;
use crate::models::ModelType;
use crate::training::TrainOutcome;

use super::{BoundaryOutput, EditDistanceOutput, EvalOutput, SimilarityOutput, SubstringOutput};

const PUBLISHED: &str = "published values are full-scale results, not desk-scale targets";

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

pub fn synth_summary(c: &SynthConfig, captions: usize, images: usize, men: Option<usize>) -> String {
    let mut s = format!(
        "synthetic corpus: {captions} captions, {images} images, {} words, feature dim {} (train/val/test {}/{}/{})",
        c.n_words, c.feature_dim, c.n_train, c.n_val, c.n_test
    );
    if let Some(n) = men {
        let _ = write!(s, ", {n} similarity pairs");
    }
    s
}

pub fn train_summary(model_type: ModelType, o: &TrainOutcome) -> String {
    let mut s = format!("{model_type}\n{:>5}  {:>10}  {:>10}  {:>8}\n", "epoch", "train loss", "val loss", "val acc");
    for l in &o.logs {
        let _ = writeln!(s, "{:>5}  {:>10.4}  {:>10.4}  {:>8.3}", l.epoch, l.train_loss, l.val_loss, l.val_acc);
    }
    match &o.best {
        Some(b) => {
            let _ = write!(s, "best epoch {} (val acc {:.3})", b.epoch, b.val_acc);
        }
        None => s.push_str("no epochs run"),
    }
    s
}

pub fn eval_table(o: &EvalOutput) -> String {
    let r = &o.result;
    let mut s = format!("{:<10} {:<6}", "Model", "Split");
    for k in r.acc.keys() {
        let _ = write!(s, " {:>8}", format!("Acc@{k}"));
    }
    let _ = write!(s, "\n{:<10} {:<6}", r.model_type, r.split);
    for a in r.acc.values() {
        let _ = write!(s, " {a:>8.3}");
    }
    let _ = write!(s, "\n{} queries over {} candidate images", r.n_queries, r.n_candidates);
    if let Some(p) = &o.published {
        let _ = write!(s, "\npublished test Acc@5 {:.3}, Acc@10 {:.3} ({PUBLISHED})", p.acc5, p.acc10);
    }
    s
}

pub fn boundary_table(o: &BoundaryOutput) -> String {
    let r = &o.report;
    let mut s =
        format!("{:<18} {:>6} {:>6} {:>6} {:>8}   {:>18}\n", "Probe", "Acc", "Prec", "Rec", "C", "published A/P/R");
    let _ = writeln!(
        s,
        "{:<18} {:>6.2} {:>6} {:>6} {:>8}   {:>18}",
        "Majority",
        r.majority_baseline,
        "",
        "",
        "",
        format!("{:.2}", o.published.majority)
    );
    let published = |p: Option<&crate::reference::ProbeScores>| {
        p.map_or_else(String::new, |p| format!("{:.2}/{:.2}/{:.2}", p.accuracy, p.precision, p.recall))
    };
    for p in &r.layers {
        let crate::probing::ProbeSource::Layer(k) = p.source else { continue };
        let _ = writeln!(
            s,
            "{:<18} {:>6.2} {:>6.2} {:>6.2} {:>8}   {:>18}",
            format!("Layer {k}"),
            p.accuracy,
            p.precision,
            p.recall,
            p.chosen_c,
            published(o.published.layers.get(&k))
        );
    }
    for p in &r.ngrams {
        let crate::probing::ProbeSource::Ngram(n) = p.source else { continue };
        let _ = writeln!(
            s,
            "{:<18} {:>6.2} {:>6.2} {:>6.2} {:>8}   {:>18}",
            format!("n-gram n = {n}"),
            p.accuracy,
            p.precision,
            p.recall,
            p.chosen_c,
            published(o.published.ngrams.get(&n))
        );
    }
    let _ = write!(
        s,
        "train {} / test {} phonemes, boundary rate {:.2} ({PUBLISHED})",
        r.n_train, r.n_test, r.test_positive_rate
    );
    s
}

pub fn similarity_table(o: &SimilarityOutput) -> String {
    let r = &o.report;
    let mut s = format!("{:<10} {:>9} {:>9}   {:>16}\n", "Layer", "All", format!("Freq>={}", r.min_freq), "published");
    for l in &r.layers {
        let p = o.published.get(&l.layer).map_or_else(String::new, |p| format!("{:.2}/{:.2}", p.all, p.frequent));
        let _ = writeln!(s, "{:<10} {:>9} {:>9}   {:>16}", l.layer, opt(l.rho_all, 3), opt(l.rho_frequent, 3), p);
    }
    let _ = write!(
        s,
        "{} pairs ({} frequent; published {}), skipped {} untranscribed and {} unencodable ({PUBLISHED})",
        r.n_pairs, r.n_frequent, o.published_frequent_pairs, r.skipped_untranscribed, r.skipped_unencodable
    );
    s
}

pub fn editdist_table(o: &EditDistanceOutput) -> String {
    let r = &o.report;
    let mut s = format!("{:<8} {:>8}   {:>9}\n", "Layer", "rho", "published");
    for l in &r.layers {
        let p = o.published.layers.get(&l.layer).map_or_else(String::new, |v| format!("{v:.2}"));
        let _ = writeln!(s, "{:<8} {:>8}   {:>9}", l.layer, opt(l.rho, 3), p);
    }
    let _ = write!(
        s,
        "{} pairs; ratings vs edit distance {} (published {:.2}) ({PUBLISHED})",
        r.n_pairs,
        opt(r.rating_rho, 3),
        o.published.rating
    );
    s
}

pub fn substring_table(o: &SubstringOutput) -> String {
    let r = &o.report;
    let mut s = format!("{:<8} {:>14}   {:>9}\n", "Layer", "Mean position", "published");
    for l in &r.layers {
        let p = o.published.layers.get(&l.layer).map_or_else(String::new, |v| format!("{v:.1}"));
        let _ = writeln!(s, "{:<8} {:>14}   {:>9}", l.layer, opt(l.mean_position, 2), p);
    }
    let _ = write!(s, "{} sentences, mean length {:.1} phonemes ({PUBLISHED})", r.n_sentences, r.mean_length);
    s
}
