//! METEOR with the exact and stem matching stages (no synonym/paraphrase
//! tables).
//!
//! The alignment maximizes exact matches, then stem matches on the residue,
//! then minimizes the number of chunks. The score uses the standard
//! parameters: `F = 10PR / (R + 9P)` and fragmentation penalty
//! `0.5 (chunks / matches)^3`.

use std::collections::HashMap;

use super::stem;
use crate::types::Caption;

/// Search nodes explored before settling for the best alignment found so far.
const SEARCH_BUDGET: usize = 500_000;

/// Alignment summary between a hypothesis and a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub exact: usize,
    pub matches: usize,
    pub chunks: usize,
}

pub fn meteor_lite(pred: &Caption, reference: &Caption) -> f64 {
    let (p, r) = (&pred.tokens, &reference.tokens);
    if p.is_empty() || r.is_empty() {
        return 0.0;
    }
    let a = align(p, r);
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let precision = m / p.len() as f64;
    let recall = m / r.len() as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (a.chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

struct Search<'a> {
    // per hypothesis token: exact-class id and stem-class id
    hyp_word: Vec<usize>,
    hyp_stem: Vec<usize>,
    // reference positions grouped by class
    ref_by_word: &'a HashMap<usize, Vec<usize>>,
    ref_by_stem: &'a HashMap<usize, Vec<usize>>,
    ref_word: Vec<usize>,
    word_budget: HashMap<usize, usize>,
    stem_budget: HashMap<usize, usize>,
    remaining: usize,
    used: Vec<bool>,
    best_links: usize,
    nodes: usize,
}

impl Search<'_> {
    /// Depth-first search over hypothesis positions. `links` counts adjacent
    /// aligned pairs (i-1 -> j-1, i -> j); chunks = matches - links.
    fn run(&mut self, i: usize, prev: Option<usize>, links: usize) {
        self.nodes += 1;
        if self.remaining == 0 {
            self.best_links = self.best_links.max(links);
            return;
        }
        if i == self.hyp_word.len()
            || self.hyp_word.len() - i < self.remaining
            || links + self.remaining <= self.best_links
            || self.nodes > SEARCH_BUDGET
        {
            return;
        }
        let (w, s) = (self.hyp_word[i], self.hyp_stem[i]);
        let mut options: Vec<(usize, bool)> = Vec::new();
        if self.word_budget.get(&w).copied().unwrap_or(0) > 0 {
            if let Some(js) = self.ref_by_word.get(&w) {
                options.extend(js.iter().filter(|&&j| !self.used[j]).map(|&j| (j, true)));
            }
        }
        if self.stem_budget.get(&s).copied().unwrap_or(0) > 0 {
            if let Some(js) = self.ref_by_stem.get(&s) {
                options.extend(
                    js.iter()
                        .filter(|&&j| !self.used[j] && self.ref_word[j] != w)
                        .map(|&j| (j, false)),
                );
            }
        }
        // try the continuation of the current chunk first
        if let Some(p) = prev {
            if let Some(pos) = options.iter().position(|&(j, _)| j == p + 1) {
                options.swap(0, pos);
            }
        }
        for (j, exact) in options {
            let budget = if exact {
                self.word_budget.get_mut(&w)
            } else {
                self.stem_budget.get_mut(&s)
            }
            .expect("budget present");
            *budget -= 1;
            self.used[j] = true;
            self.remaining -= 1;
            let link = usize::from(prev.is_some_and(|p| p + 1 == j));
            self.run(i + 1, Some(j), links + link);
            self.remaining += 1;
            self.used[j] = false;
            *if exact {
                self.word_budget.get_mut(&w)
            } else {
                self.stem_budget.get_mut(&s)
            }
            .expect("budget present") += 1;
        }
        self.run(i + 1, None, links);
    }
}

fn intern(ids: &mut HashMap<String, usize>, s: String) -> usize {
    let next = ids.len();
    *ids.entry(s).or_insert(next)
}

/// Aligns `hyp` against `reference` (token slices).
pub fn align(hyp: &[String], reference: &[String]) -> Alignment {
    let mut words = HashMap::new();
    let mut stems = HashMap::new();
    let hyp_word: Vec<usize> = hyp.iter().map(|t| intern(&mut words, t.clone())).collect();
    let ref_word: Vec<usize> = reference
        .iter()
        .map(|t| intern(&mut words, t.clone()))
        .collect();
    let hyp_stem: Vec<usize> = hyp.iter().map(|t| intern(&mut stems, stem(t))).collect();
    let ref_stem: Vec<usize> = reference
        .iter()
        .map(|t| intern(&mut stems, stem(t)))
        .collect();

    let count = |v: &[usize]| {
        let mut c: HashMap<usize, usize> = HashMap::new();
        for &x in v {
            *c.entry(x).or_default() += 1;
        }
        c
    };
    let (hw, rw) = (count(&hyp_word), count(&ref_word));
    let word_budget: HashMap<usize, usize> = hw
        .iter()
        .filter_map(|(w, &c)| rw.get(w).map(|&rc| (*w, c.min(rc))))
        .collect();
    let exact: usize = word_budget.values().sum();

    // residue per stem class once exact matches are taken
    let mut hyp_res: HashMap<usize, usize> = HashMap::new();
    let mut ref_res: HashMap<usize, usize> = HashMap::new();
    let mut taken_h: HashMap<usize, usize> = HashMap::new();
    let mut taken_r: HashMap<usize, usize> = HashMap::new();
    for (i, &w) in hyp_word.iter().enumerate() {
        let t = taken_h.entry(w).or_default();
        if *t < word_budget.get(&w).copied().unwrap_or(0) {
            *t += 1;
        } else {
            *hyp_res.entry(hyp_stem[i]).or_default() += 1;
        }
    }
    for (j, &w) in ref_word.iter().enumerate() {
        let t = taken_r.entry(w).or_default();
        if *t < word_budget.get(&w).copied().unwrap_or(0) {
            *t += 1;
        } else {
            *ref_res.entry(ref_stem[j]).or_default() += 1;
        }
    }
    let stem_budget: HashMap<usize, usize> = hyp_res
        .iter()
        .filter_map(|(s, &c)| ref_res.get(s).map(|&rc| (*s, c.min(rc))))
        .filter(|&(_, c)| c > 0)
        .collect();
    let matches = exact + stem_budget.values().sum::<usize>();
    if matches == 0 {
        return Alignment {
            exact: 0,
            matches: 0,
            chunks: 0,
        };
    }

    let group = |v: &[usize]| {
        let mut g: HashMap<usize, Vec<usize>> = HashMap::new();
        for (j, &x) in v.iter().enumerate() {
            g.entry(x).or_default().push(j);
        }
        g
    };
    let ref_by_word = group(&ref_word);
    let ref_by_stem = group(&ref_stem);
    let mut search = Search {
        hyp_word,
        hyp_stem,
        ref_by_word: &ref_by_word,
        ref_by_stem: &ref_by_stem,
        ref_word,
        word_budget,
        stem_budget,
        remaining: matches,
        used: vec![false; reference.len()],
        best_links: 0,
        nodes: 0,
    };
    // a full alignment always exists, so best_links ends >= 0 with one chunk
    // per match in the worst case
    search.run(0, None, 0);
    Alignment {
        exact,
        matches,
        chunks: matches - search.best_links,
    }
}
