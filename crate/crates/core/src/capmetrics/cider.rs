//! Per-pair CIDEr-D style similarity.
//!
//! For each n = 1..4 the hypothesis and reference become TF-IDF weighted
//! n-gram count vectors; their cosine is damped by the Gaussian length
//! penalty `exp(-(len_h - len_r)^2 / (2 sigma^2))` and the four levels are
//! averaged. No x10 scaling and no count clipping, so the value is symmetric
//! and lies in `[0, 1]`.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};

use crate::types::Caption;

pub const CIDER_MAX_N: usize = 4;
pub const CIDER_SIGMA: f64 = 6.0;

type NGram = Vec<String>;

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<NGram, f64> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// Document frequencies of 1..4-grams over a caption corpus; one caption is
/// one document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdfTable {
    n_docs: usize,
    doc_freq: HashMap<NGram, usize>,
}

impl IdfTable {
    pub fn build<I>(captions: I) -> Self
    where
        I: IntoIterator,
        I::Item: std::borrow::Borrow<Caption>,
    {
        let mut table = IdfTable::default();
        for c in captions {
            let c = c.borrow();
            table.n_docs += 1;
            for n in 1..=CIDER_MAX_N {
                for g in ngram_counts(&c.tokens, n).into_keys() {
                    *table.doc_freq.entry(g).or_default() += 1;
                }
            }
        }
        table
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// `ln(N / max(1, df))`; unseen n-grams get the maximal weight `ln N`.
    pub fn idf(&self, ngram: &[String]) -> f64 {
        if self.n_docs == 0 {
            return 0.0;
        }
        let df = self.doc_freq.get(ngram).copied().unwrap_or(0).max(1);
        (self.n_docs as f64 / df as f64).ln().max(0.0)
    }
}

fn tfidf(tokens: &[String], n: usize, idf: &IdfTable) -> BTreeMap<NGram, f64> {
    let mut v = ngram_counts(tokens, n);
    for (g, w) in v.iter_mut() {
        *w *= idf.idf(g);
    }
    v
}

pub fn cider_pair(pred: &Caption, reference: &Caption, idf: &IdfTable) -> f64 {
    let delta = pred.tokens.len() as f64 - reference.tokens.len() as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut total = 0.0;
    for n in 1..=CIDER_MAX_N {
        let vp = tfidf(&pred.tokens, n, idf);
        let vr = tfidf(&reference.tokens, n, idf);
        let norm = |v: &BTreeMap<NGram, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
        let (np, nr) = (norm(&vp), norm(&vr));
        if np == 0.0 || nr == 0.0 {
            continue;
        }
        let dot: f64 = vp
            .iter()
            .filter_map(|(g, a)| vr.get(g).map(|b| a * b))
            .sum();
        total += (dot / (np * nr)).clamp(0.0, 1.0) * penalty;
    }
    total / CIDER_MAX_N as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus() -> IdfTable {
        IdfTable::build(
            ["a red car parks", "a blue car drives", "a man walks a dog"]
                .iter()
                .map(|s| Caption::new(*s)),
        )
    }

    #[test]
    fn idf_values() {
        let t = corpus();
        assert_eq!(t.n_docs(), 3);
        assert_eq!(t.idf(&["a".to_string()]), 0.0);
        assert!((t.idf(&["car".to_string()]) - 1.5f64.ln()).abs() < 1e-15);
        assert!((t.idf(&["zebra".to_string()]) - 3f64.ln()).abs() < 1e-15);
        assert_eq!(IdfTable::default().idf(&["a".to_string()]), 0.0);
    }

    #[test]
    fn disjoint_vocabulary_scores_zero() {
        let t = corpus();
        assert_eq!(
            cider_pair(&Caption::new("green tree"), &Caption::new("blue car"), &t),
            0.0
        );
    }

    #[test]
    fn identical_with_positive_idf_scores_one() {
        let t = corpus();
        let c = Caption::new("the man walks his dog");
        assert!((cider_pair(&c, &c, &t) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_captions_lack_higher_order_grams() {
        // no 4-grams in a 3-token caption: that level contributes 0
        let t = corpus();
        let c = Caption::new("green tree grows");
        assert!((cider_pair(&c, &c, &t) - 0.75).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(h in proptest::collection::vec(0u8..7, 0..9), r in proptest::collection::vec(0u8..7, 0..9)) {
            let words = ["a", "red", "blue", "car", "dog", "man", "walks"];
            let hc = Caption::new(h.iter().map(|&i| words[i as usize]).collect::<Vec<_>>().join(" "));
            let rc = Caption::new(r.iter().map(|&i| words[i as usize]).collect::<Vec<_>>().join(" "));
            let t = corpus();
            let a = cider_pair(&hc, &rc, &t);
            let b = cider_pair(&rc, &hc, &t);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
