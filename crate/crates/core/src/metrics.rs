//! Corpus captioning metrics: BLEU, ROUGE-L, METEOR with exact matching only,
//! and CIDEr-D. Every score is reported on a ×100 scale.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub type Tokens = Vec<String>;

pub fn tokenize_for_metrics(text: &str) -> Tokens {
    crate::text::words(text)
}

fn check_corpus(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::Invalid("no candidates to score".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Invalid(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(Error::Invalid(format!("candidate {i} has no references")));
    }
    Ok(())
}

fn ngrams(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut out = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Corpus BLEU up to `n_max`-grams.
///
/// Clipped n-gram counts and candidate n-gram totals are summed over the
/// corpus, then combined as a geometric mean times the brevity penalty. The
/// reference length per candidate is the closest one (shorter on ties). A
/// zero precision at any order gives 0, so only candidates of at least
/// `n_max` tokens can reach 100.
pub fn bleu(candidates: &[Tokens], references: &[Vec<Tokens>], n_max: usize) -> Result<f64> {
    check_corpus(candidates, references)?;
    if n_max == 0 {
        return Err(Error::Invalid("n_max must be positive".into()));
    }
    let mut clipped = vec![0usize; n_max];
    let mut total = vec![0usize; n_max];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, refs) in candidates.iter().zip(references) {
        cand_len += cand.len();
        let c = cand.len() as i64;
        ref_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&r| ((r as i64 - c).abs(), r))
            .expect("non-empty references");
        for n in 1..=n_max {
            let counts = ngrams(cand, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (g, k) in ngrams(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in counts {
                total[n - 1] += k;
                clipped[n - 1] += k.min(max_ref.get(g).copied().unwrap_or(0));
            }
        }
    }
    if cand_len == 0 || clipped.contains(&0) {
        return Ok(0.0);
    }
    let log_mean = clipped
        .iter()
        .zip(&total)
        .map(|(&c, &t)| (c as f64 / t as f64).ln())
        .sum::<f64>()
        / n_max as f64;
    let bp = if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(100.0 * bp * log_mean.exp())
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

const ROUGE_BETA: f64 = 1.2;

/// ROUGE-L F-measure of one pair, in `[0, 1]`.
pub fn rouge_l_pair(cand: &[String], reference: &[String]) -> f64 {
    let lcs = lcs_len(cand, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / cand.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

fn per_candidate_max(
    candidates: &[Tokens],
    references: &[Vec<Tokens>],
    score: impl Fn(&[String], &[String]) -> f64,
) -> Vec<f64> {
    candidates
        .iter()
        .zip(references)
        .map(|(c, refs)| refs.iter().map(|r| score(c, r)).fold(0.0, f64::max))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Best pair score over references, averaged over the corpus.
pub fn rouge_l(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<f64> {
    check_corpus(candidates, references)?;
    Ok(100.0 * mean(&per_candidate_max(candidates, references, rouge_l_pair)))
}

/// Matches and chunks of the best exact-match alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

/// Reachable-state budget for the exact chunk search.
const ALIGN_STATE_BUDGET: usize = 200_000;

/// Maximum-match alignment with the fewest chunks.
///
/// The match count is fixed by word frequencies. Chunks are minimized by a
/// memoized search over candidate positions carrying the set of used
/// reference positions and the previous match. Pairs whose search space
/// exceeds the budget fall back to a greedy left-to-right alignment.
pub fn align(cand: &[String], reference: &[String]) -> Alignment {
    let mut cand_counts: HashMap<&str, usize> = HashMap::new();
    for w in cand {
        *cand_counts.entry(w).or_insert(0) += 1;
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for w in reference {
        *ref_counts.entry(w).or_insert(0) += 1;
    }
    let quota: HashMap<&str, usize> = cand_counts
        .iter()
        .filter_map(|(w, &c)| ref_counts.get(w).map(|&r| (*w, c.min(r))))
        .collect();
    let matches: usize = quota.values().sum();
    if matches == 0 {
        return Alignment { matches: 0, chunks: 0 };
    }
    if reference.len() <= 128 {
        let mut search = ChunkSearch::new(cand, reference, &quota);
        if let Some(chunks) = search.run() {
            return Alignment { matches, chunks };
        }
    }
    Alignment {
        matches,
        chunks: greedy_chunks(cand, reference, &quota),
    }
}

struct ChunkSearch<'a> {
    cand: &'a [String],
    reference: &'a [String],
    /// Word id per candidate position, `None` for words that cannot match.
    cand_word: Vec<Option<usize>>,
    ref_word: Vec<Option<usize>>,
    quota: Vec<usize>,
    /// Remaining candidate occurrences of each word from position `i` on.
    remaining: Vec<Vec<usize>>,
    memo: HashMap<(usize, u128, usize), usize>,
    aborted: bool,
}

const NO_PREV: usize = usize::MAX;

impl<'a> ChunkSearch<'a> {
    fn new(cand: &'a [String], reference: &'a [String], quota: &HashMap<&str, usize>) -> Self {
        let words: Vec<&str> = quota.keys().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let id = |w: &str| words.iter().position(|x| *x == w);
        let cand_word: Vec<Option<usize>> = cand.iter().map(|w| id(w)).collect();
        let ref_word: Vec<Option<usize>> = reference.iter().map(|w| id(w)).collect();
        let mut remaining = vec![vec![0usize; words.len()]; cand.len() + 1];
        for i in (0..cand.len()).rev() {
            remaining[i] = remaining[i + 1].clone();
            if let Some(w) = cand_word[i] {
                remaining[i][w] += 1;
            }
        }
        Self {
            cand,
            reference,
            cand_word,
            ref_word,
            quota: words.iter().map(|w| quota[w]).collect(),
            remaining,
            memo: HashMap::new(),
            aborted: false,
        }
    }

    fn run(&mut self) -> Option<usize> {
        let used = vec![0usize; self.quota.len()];
        let best = self.visit(0, 0, NO_PREV, &mut used.clone());
        if self.aborted {
            None
        } else {
            best
        }
    }

    /// Fewest chunks for positions `i..` given used reference positions.
    fn visit(&mut self, i: usize, mask: u128, prev: usize, used: &mut Vec<usize>) -> Option<usize> {
        if self.aborted {
            return None;
        }
        if i == self.cand.len() {
            return if used.iter().zip(&self.quota).all(|(u, q)| u == q) {
                Some(0)
            } else {
                None
            };
        }
        let key = (i, mask, prev);
        if let Some(&v) = self.memo.get(&key) {
            return if v == usize::MAX { None } else { Some(v) };
        }
        if self.memo.len() >= ALIGN_STATE_BUDGET {
            self.aborted = true;
            return None;
        }
        let mut best: Option<usize> = None;
        let word = self.cand_word[i];
        // leave position i unmatched if the quota can still be met later
        let can_skip = match word {
            None => true,
            Some(w) => used[w] + self.remaining[i + 1][w] >= self.quota[w],
        };
        if can_skip {
            best = self.visit(i + 1, mask, NO_PREV, used);
        }
        if let Some(w) = word {
            if used[w] < self.quota[w] {
                for j in 0..self.reference.len() {
                    if self.ref_word[j] != Some(w) || mask & (1u128 << j) != 0 {
                        continue;
                    }
                    let opens = if prev != NO_PREV && j == prev + 1 { 0 } else { 1 };
                    used[w] += 1;
                    let rest = self.visit(i + 1, mask | (1u128 << j), j, used);
                    used[w] -= 1;
                    if let Some(r) = rest {
                        let total = r + opens;
                        if best.is_none_or(|b| total < b) {
                            best = Some(total);
                        }
                    }
                }
            }
        }
        self.memo.insert(key, best.unwrap_or(usize::MAX));
        best
    }
}

fn greedy_chunks(cand: &[String], reference: &[String], quota: &HashMap<&str, usize>) -> usize {
    let mut used_ref = vec![false; reference.len()];
    let mut used_word: HashMap<&str, usize> = HashMap::new();
    let mut chunks = 0;
    let mut prev: Option<usize> = None;
    for w in cand {
        let q = quota.get(w.as_str()).copied().unwrap_or(0);
        let u = used_word.entry(w.as_str()).or_insert(0);
        if *u >= q {
            prev = None;
            continue;
        }
        // prefer extending the current chunk
        let next = prev
            .map(|p| p + 1)
            .filter(|&j| j < reference.len() && !used_ref[j] && reference[j] == *w)
            .or_else(|| (0..reference.len()).find(|&j| !used_ref[j] && reference[j] == *w));
        match next {
            Some(j) => {
                if prev.is_none_or(|p| j != p + 1) {
                    chunks += 1;
                }
                used_ref[j] = true;
                *u += 1;
                prev = Some(j);
            }
            None => prev = None,
        }
    }
    chunks
}

/// METEOR of one pair with exact matching, in `[0, 1]`.
pub fn meteor_pair(cand: &[String], reference: &[String]) -> f64 {
    let a = align(cand, reference);
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / cand.len() as f64;
    let r = m / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (a.chunks as f64 / m).powi(3);
    f_mean * (1.0 - penalty)
}

pub fn meteor_simplified(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<f64> {
    check_corpus(candidates, references)?;
    Ok(100.0 * mean(&per_candidate_max(candidates, references, meteor_pair)))
}

const CIDER_N: usize = 4;
const CIDER_SIGMA: f64 = 6.0;

struct CiderVec<'a> {
    tf: BTreeMap<&'a [String], usize>,
    norm: f64,
}

impl<'a> CiderVec<'a> {
    fn new(tokens: &'a [String], n: usize, idf: &impl Fn(usize, &[String]) -> f64) -> Self {
        let tf = ngrams(tokens, n + 1);
        let norm = tf
            .iter()
            .map(|(g, &k)| (k as f64 * idf(n, g)).powi(2))
            .sum::<f64>()
            .sqrt();
        Self { tf, norm }
    }
}

/// Per-candidate CIDEr-D, on the raw scale (already multiplied by 10).
///
/// Each image's reference set is one document for the IDF,
/// `ln(|I| / (1 + df))`. Clipping is applied to term frequencies:
/// `Σ min(tf_c, tf_r)·tf_r·idf²`, normalized by both vector norms.
pub fn cider_per_candidate(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<Vec<f64>> {
    check_corpus(candidates, references)?;
    let n_images = references.len() as f64;
    if references.len() == 1 {
        log::warn!("CIDEr over a single image: document frequencies are degenerate");
    }
    let mut df: [HashMap<&[String], usize>; CIDER_N] = Default::default();
    for refs in references {
        for (n, table) in df.iter_mut().enumerate() {
            let seen: BTreeSet<&[String]> = refs.iter().flat_map(|r| ngrams(r, n + 1).into_keys()).collect();
            for g in seen {
                *table.entry(g).or_insert(0) += 1;
            }
        }
    }
    let idf = |n: usize, g: &[String]| (n_images / (1.0 + df[n].get(g).copied().unwrap_or(0) as f64)).ln();
    let mut out = Vec::with_capacity(candidates.len());
    for (cand, refs) in candidates.iter().zip(references) {
        let mut per_n = [0.0f64; CIDER_N];
        for (n, slot) in per_n.iter_mut().enumerate() {
            let c = CiderVec::new(cand, n, &idf);
            let mut total = 0.0;
            for r in refs {
                let CiderVec { tf: rtf, norm: rnorm } = CiderVec::new(r, n, &idf);
                let mut val = 0.0;
                for (g, &kc) in &c.tf {
                    if let Some(&kr) = rtf.get(g) {
                        val += kc.min(kr) as f64 * kr as f64 * idf(n, g).powi(2);
                    }
                }
                if c.norm > 0.0 && rnorm > 0.0 {
                    val /= c.norm * rnorm;
                } else {
                    val = 0.0;
                }
                let delta = cand.len() as f64 - r.len() as f64;
                total += val * (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
            }
            *slot = total / refs.len() as f64;
        }
        out.push(10.0 * per_n.iter().sum::<f64>() / CIDER_N as f64);
    }
    Ok(out)
}

/// Corpus CIDEr-D on the ×100 reporting scale.
pub fn cider(candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<f64> {
    Ok(100.0 * mean(&cider_per_candidate(candidates, references)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub sample_id: String,
    pub candidate: String,
    pub n_references: usize,
    pub b1: f64,
    pub b4: f64,
    pub rouge_l: f64,
    pub meteor_ex: f64,
    pub cider: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub b1: f64,
    pub b4: f64,
    pub rouge_l: f64,
    pub meteor_ex: f64,
    pub cider: f64,
    pub n_candidates: usize,
    pub n_references: usize,
    pub per_sample: Vec<SampleScores>,
}

impl MetricReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(self).expect("report serializes");
        text.push(b'\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
    }
}

/// Scores a tokenized corpus. Per-sample rows are sorted by id so the report
/// does not depend on input order.
/// An empty corpus scores 0 everywhere.
pub fn score_corpus(ids: &[String], candidates: &[Tokens], references: &[Vec<Tokens>]) -> Result<MetricReport> {
    if candidates.is_empty() && references.is_empty() {
        return Ok(MetricReport {
            b1: 0.0,
            b4: 0.0,
            rouge_l: 0.0,
            meteor_ex: 0.0,
            cider: 0.0,
            n_candidates: 0,
            n_references: 0,
            per_sample: Vec::new(),
        });
    }
    check_corpus(candidates, references)?;
    if ids.len() != candidates.len() {
        return Err(Error::Invalid(format!(
            "{} ids for {} candidates",
            ids.len(),
            candidates.len()
        )));
    }
    // fixed summation order regardless of input order
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let ids: Vec<String> = order.iter().map(|&i| ids[i].clone()).collect();
    let candidates: Vec<Tokens> = order.iter().map(|&i| candidates[i].clone()).collect();
    let references: Vec<Vec<Tokens>> = order.iter().map(|&i| references[i].clone()).collect();
    let (candidates, references) = (candidates.as_slice(), references.as_slice());
    let ciders = cider_per_candidate(candidates, references)?;
    let per_sample: Vec<SampleScores> = (0..candidates.len())
        .map(|i| {
            let c = std::slice::from_ref(&candidates[i]);
            let r = std::slice::from_ref(&references[i]);
            Ok(SampleScores {
                sample_id: ids[i].clone(),
                candidate: candidates[i].join(" "),
                n_references: references[i].len(),
                b1: bleu(c, r, 1)?,
                b4: bleu(c, r, 4)?,
                rouge_l: rouge_l(c, r)?,
                meteor_ex: meteor_simplified(c, r)?,
                cider: 100.0 * ciders[i],
            })
        })
        .collect::<Result<_>>()?;
    Ok(MetricReport {
        b1: bleu(candidates, references, 1)?,
        b4: bleu(candidates, references, 4)?,
        rouge_l: rouge_l(candidates, references)?,
        meteor_ex: meteor_simplified(candidates, references)?,
        cider: 100.0 * mean(&ciders),
        n_candidates: candidates.len(),
        n_references: references.iter().map(Vec::len).sum(),
        per_sample,
    })
}

/// Parses `sample_id<TAB>caption` lines.
pub fn parse_predictions(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((id, caption)) if !id.is_empty() => out.push((id.to_string(), caption.to_string())),
            _ => bad.push(format!("line {}", n + 1)),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Predictions {
            reason: "malformed prediction lines".into(),
            ids: bad,
        });
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text)
}

pub fn write_predictions(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (id, caption) in rows {
        text.push_str(id);
        text.push('\t');
        text.push_str(caption);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Scores predictions against every caption recorded for each stimulus.
///
/// Ids may name a sample or, for repetition-averaged decoding, a stimulus.
pub fn evaluate_corpus(predictions: &[(String, String)], dataset: &Dataset) -> Result<MetricReport> {
    let mut refs_by_stimulus: BTreeMap<&str, Vec<Tokens>> = BTreeMap::new();
    let mut stimulus_of: HashMap<&str, &str> = HashMap::new();
    for s in &dataset.samples {
        let text = tokenize_for_metrics(&dataset.vocab.decode(s.caption.ids()));
        let refs = refs_by_stimulus.entry(&s.stimulus_id).or_default();
        if !refs.contains(&text) {
            refs.push(text);
        }
        stimulus_of.insert(&s.sample_id, &s.stimulus_id);
        stimulus_of.insert(&s.stimulus_id, &s.stimulus_id);
    }
    let mut seen = BTreeSet::new();
    let duplicates: BTreeSet<String> = predictions
        .iter()
        .filter(|(id, _)| !seen.insert(id.as_str()))
        .map(|(id, _)| id.clone())
        .collect();
    if !duplicates.is_empty() {
        return Err(Error::Predictions {
            reason: "duplicate sample ids".into(),
            ids: duplicates.into_iter().collect(),
        });
    }
    let missing: Vec<String> = predictions
        .iter()
        .filter(|(id, _)| !stimulus_of.contains_key(id.as_str()))
        .map(|(id, _)| id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Predictions {
            reason: "sample ids not in dataset".into(),
            ids: missing,
        });
    }
    let ids: Vec<String> = predictions.iter().map(|(id, _)| id.clone()).collect();
    let candidates: Vec<Tokens> = predictions.iter().map(|(_, c)| tokenize_for_metrics(c)).collect();
    let references: Vec<Vec<Tokens>> = predictions
        .iter()
        .map(|(id, _)| refs_by_stimulus[stimulus_of[id.as_str()]].clone())
        .collect();
    score_corpus(&ids, &candidates, &references)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> Tokens {
        tokenize_for_metrics(s)
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(t("A Dog runs."), vec!["a", "dog", "runs"]);
        assert!(t("").is_empty());
    }

    #[test]
    fn bleu_identity_and_clipping() {
        let c = vec![t("a man rides a horse on the beach")];
        let r = vec![vec![t("a man rides a horse on the beach")]];
        for n in 1..=4 {
            assert!((bleu(&c, &r, n).unwrap() - 100.0).abs() < 1e-9);
        }
        // p1 = 1/4 with no brevity penalty: "a a a a" vs "a b"
        let c = vec![t("a a a a")];
        let r = vec![vec![t("a b")]];
        assert!((bleu(&c, &r, 1).unwrap() - 25.0).abs() < 1e-9);
        assert_eq!(bleu(&[t("")], &[vec![t("a b")]], 1).unwrap(), 0.0);
    }

    #[test]
    fn brevity_penalty_uses_closest_reference() {
        let c = vec![t("a b c")];
        let r = vec![vec![t("a b c d e f"), t("a b c d")]];
        let want = 100.0 * (1.0f64 - 4.0 / 3.0).exp();
        assert!((bleu(&c, &r, 1).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn rouge_examples() {
        assert!((rouge_l(&[t("a b c")], &[vec![t("a b c")]]).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(rouge_l(&[t("a b")], &[vec![t("c d")]]).unwrap(), 0.0);
        assert_eq!(rouge_l(&[t("")], &[vec![t("c d")]]).unwrap(), 0.0);
    }

    #[test]
    fn report_is_bitwise_independent_of_input_order() {
        let cands: Vec<Tokens> = ["a red car on the road", "a dog near a door", "two birds in a tree", "a red car"]
            .iter()
            .map(|s| t(s))
            .collect();
        let refs: Vec<Vec<Tokens>> = [
            vec!["a red car parked on the street", "a car on a road"],
            vec!["a small dog sitting near a door"],
            vec!["birds sitting in a tree", "two birds on a branch"],
            vec!["a red car parked on the street"],
        ]
        .iter()
        .map(|rs| rs.iter().map(|s| t(s)).collect())
        .collect();
        let ids: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
        let base = score_corpus(&ids, &cands, &refs).unwrap();
        for perm in [[3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]] {
            fn pick<T: Clone>(v: &[T], perm: &[usize]) -> Vec<T> {
                perm.iter().map(|&i| v[i].clone()).collect()
            }
            let other = score_corpus(&pick(&ids, &perm), &pick(&cands, &perm), &pick(&refs, &perm)).unwrap();
            assert_eq!(serde_json::to_string(&other).unwrap(), serde_json::to_string(&base).unwrap());
        }
        assert!(score_corpus(&ids[..3], &cands, &refs).is_err());
    }

    #[test]
    fn meteor_closed_form_for_identity() {
        let s = t("w x y z");
        let score = meteor_simplified(std::slice::from_ref(&s), &[vec![s.clone()]]).unwrap();
        assert!((score - 100.0 * (1.0 - 0.5 / 64.0)).abs() < 1e-9);
        assert!((score - 99.22).abs() < 0.01);
        assert_eq!(meteor_simplified(&[t("a b")], &[vec![t("c d")]]).unwrap(), 0.0);
    }

    #[test]
    fn chunk_search_prefers_contiguous_alignment() {
        // "the cat" can align to either occurrence; contiguity wins
        let a = align(&t("the cat sat"), &t("the dog and the cat sat"));
        assert_eq!(a, Alignment { matches: 3, chunks: 1 });
        let a = align(&t("b a"), &t("a b"));
        assert_eq!(a, Alignment { matches: 2, chunks: 2 });
    }

    #[test]
    fn cider_identity_and_disjoint() {
        let cands = vec![t("a dog runs"), t("a cat sleeps"), t("red car")];
        let refs: Vec<Vec<Tokens>> = cands.iter().map(|c| vec![c.clone()]).collect();
        let per = cider_per_candidate(&cands, &refs).unwrap();
        // "red car" has no 3- and 4-grams: two of four orders contribute 1
        assert!((per[2] - 5.0).abs() < 1e-9);
        assert!((per[0] - 7.5).abs() < 1e-9);
        let zero = cider(&[t("x y")], &[vec![t("a b")]]).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn evaluate_rejects_unknown_and_duplicate_ids() {
        let err = parse_predictions("a\tx\nbroken\n").unwrap_err();
        assert!(matches!(err, Error::Predictions { .. }));
    }

    proptest! {
        #[test]
        fn tokenizer_is_idempotent(s in "\\PC{0,40}") {
            let once = tokenize_for_metrics(&s);
            prop_assert_eq!(tokenize_for_metrics(&once.join(" ")), once);
        }

        #[test]
        fn scores_stay_in_range(a in proptest::collection::vec(0u8..4, 0..8), b in proptest::collection::vec(0u8..4, 1..8)) {
            let w = |v: &[u8]| v.iter().map(|x| format!("w{x}")).collect::<Tokens>();
            let c = vec![w(&a)];
            let r = vec![vec![w(&b)]];
            for v in [bleu(&c, &r, 1).unwrap(), bleu(&c, &r, 4).unwrap(), rouge_l(&c, &r).unwrap(), meteor_simplified(&c, &r).unwrap()] {
                prop_assert!((0.0..=100.0 + 1e-9).contains(&v));
            }
        }
    }
}
