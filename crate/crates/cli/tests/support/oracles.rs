//! Brute-force reference scorers, written without the library's helpers.
//! Inputs are token slices; scores use the ×100 scale.

use std::collections::{BTreeMap, BTreeSet};

pub type Sent = Vec<String>;

fn grams(s: &[String], n: usize) -> BTreeMap<Vec<String>, usize> {
    let mut out = BTreeMap::new();
    let mut start = 0;
    while start + n <= s.len() {
        let g: Vec<String> = s[start..start + n].to_vec();
        *out.entry(g).or_insert(0) += 1;
        start += 1;
    }
    out
}

pub fn bleu(cands: &[Sent], refs: &[Vec<Sent>], n_max: usize) -> f64 {
    let mut matched = vec![0.0f64; n_max + 1];
    let mut possible = vec![0.0f64; n_max + 1];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, rs) in cands.iter().zip(refs) {
        c_len += c.len();
        let mut best = rs[0].len();
        for r in rs {
            let d = (r.len() as i64 - c.len() as i64).abs();
            let bd = (best as i64 - c.len() as i64).abs();
            if d < bd || (d == bd && r.len() < best) {
                best = r.len();
            }
        }
        r_len += best;
        for n in 1..=n_max {
            let ref_grams: Vec<_> = rs.iter().map(|r| grams(r, n)).collect();
            for (g, k) in grams(c, n) {
                let mut cap = 0;
                for rg in &ref_grams {
                    cap = cap.max(*rg.get(&g).unwrap_or(&0));
                }
                matched[n] += k.min(cap) as f64;
                possible[n] += k as f64;
            }
        }
    }
    if c_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=n_max {
        if matched[n] == 0.0 {
            return 0.0;
        }
        log_sum += (matched[n] / possible[n]).ln();
    }
    let bp = if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    100.0 * bp * (log_sum / n_max as f64).exp()
}

fn lcs(a: &[String], b: &[String], memo: &mut BTreeMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let key = (a.len(), b.len());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let v = if a[0] == b[0] {
        1 + lcs(&a[1..], &b[1..], memo)
    } else {
        lcs(&a[1..], b, memo).max(lcs(a, &b[1..], memo))
    };
    memo.insert(key, v);
    v
}

pub fn rouge_pair(c: &[String], r: &[String]) -> f64 {
    let l = lcs(c, r, &mut BTreeMap::new()) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
    let beta2 = 1.2f64 * 1.2;
    ((1.0 + beta2) * p * rec) / (rec + beta2 * p)
}

pub fn rouge(cands: &[Sent], refs: &[Vec<Sent>]) -> f64 {
    let total: f64 = cands
        .iter()
        .zip(refs)
        .map(|(c, rs)| rs.iter().map(|r| rouge_pair(c, r)).fold(0.0, f64::max))
        .sum();
    100.0 * total / cands.len() as f64
}

/// Enumerates every one-to-one exact matching and keeps the one with the
/// most matches, then the fewest chunks.
pub fn best_alignment(c: &[String], r: &[String]) -> (usize, usize) {
    fn chunks(pairs: &[(usize, usize)]) -> usize {
        let mut n = 0;
        for (k, &(i, j)) in pairs.iter().enumerate() {
            if k == 0 || !(pairs[k - 1].0 + 1 == i && pairs[k - 1].1 + 1 == j) {
                n += 1;
            }
        }
        n
    }
    fn go(c: &[String], r: &[String], i: usize, used: &mut Vec<bool>, pairs: &mut Vec<(usize, usize)>, best: &mut (usize, usize)) {
        if i == c.len() {
            let m = pairs.len();
            let ch = chunks(pairs);
            if m > best.0 || (m == best.0 && ch < best.1) {
                *best = (m, ch);
            }
            return;
        }
        go(c, r, i + 1, used, pairs, best);
        for j in 0..r.len() {
            if !used[j] && r[j] == c[i] {
                used[j] = true;
                pairs.push((i, j));
                go(c, r, i + 1, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0);
    go(c, r, 0, &mut vec![false; r.len()], &mut Vec::new(), &mut best);
    best
}

pub fn meteor_pair(c: &[String], r: &[String]) -> f64 {
    let (m, ch) = best_alignment(c, r);
    if m == 0 {
        return 0.0;
    }
    let m = m as f64;
    let p = m / c.len() as f64;
    let rec = m / r.len() as f64;
    let fmean = 10.0 * p * rec / (rec + 9.0 * p);
    fmean * (1.0 - 0.5 * (ch as f64 / m).powi(3))
}

pub fn meteor(cands: &[Sent], refs: &[Vec<Sent>]) -> f64 {
    let total: f64 = cands
        .iter()
        .zip(refs)
        .map(|(c, rs)| rs.iter().map(|r| meteor_pair(c, r)).fold(0.0, f64::max))
        .sum();
    100.0 * total / cands.len() as f64
}

/// Per-candidate CIDEr-D on the ×10 scale.
pub fn cider_each(cands: &[Sent], refs: &[Vec<Sent>]) -> Vec<f64> {
    let images = refs.len() as f64;
    // n-grams present in each image's reference set, per order
    let seen: Vec<Vec<BTreeSet<Vec<String>>>> = (0..=4)
        .map(|n| {
            refs.iter()
                .map(|set| set.iter().flat_map(|r| grams(r, n.max(1)).into_keys()).collect())
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for (c, rs) in cands.iter().zip(refs) {
        let mut by_order = 0.0;
        for n in 1..=4 {
            let df = |g: &Vec<String>| seen[n].iter().filter(|s| s.contains(g)).count() as f64;
            let cg = grams(c, n);
            let mut per_ref = 0.0;
            for r in rs {
                let rg = grams(r, n);
                let keys: BTreeSet<&Vec<String>> = cg.keys().chain(rg.keys()).collect();
                let (mut dot, mut nc, mut nr) = (0.0, 0.0, 0.0);
                for g in keys {
                    let w = (images / (1.0 + df(g))).ln();
                    let tc = *cg.get(g).unwrap_or(&0) as f64;
                    let tr = *rg.get(g).unwrap_or(&0) as f64;
                    dot += (tc.min(tr) * w) * (tr * w);
                    nc += (tc * w) * (tc * w);
                    nr += (tr * w) * (tr * w);
                }
                let cos = if nc > 0.0 && nr > 0.0 { dot / (nc.sqrt() * nr.sqrt()) } else { 0.0 };
                let delta = c.len() as f64 - r.len() as f64;
                per_ref += cos * (-delta * delta / 72.0).exp();
            }
            by_order += per_ref / rs.len() as f64;
        }
        out.push(10.0 * by_order / 4.0);
    }
    out
}

pub fn cider(cands: &[Sent], refs: &[Vec<Sent>]) -> f64 {
    let each = cider_each(cands, refs);
    100.0 * each.iter().sum::<f64>() / each.len() as f64
}

/// Every (candidate, reference) pair over `alphabet` symbols with lengths in
/// the given ranges, one representative per joint relabeling of symbols:
/// the concatenation uses symbols in order of first appearance.
pub fn canonical_pairs(alphabet: usize, cand_lens: std::ops::RangeInclusive<usize>, ref_lens: std::ops::RangeInclusive<usize>) -> Vec<(Vec<u8>, Vec<u8>)> {
    fn grow(len: usize, alphabet: usize, cur: &mut Vec<u8>, next: u8, out: &mut Vec<Vec<u8>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for s in 0..=next.min(alphabet as u8 - 1) {
            cur.push(s);
            grow(len, alphabet, cur, if s == next { next + 1 } else { next }, out);
            cur.pop();
        }
    }
    let mut pairs = Vec::new();
    for lc in cand_lens {
        for lr in ref_lens.clone() {
            let mut seqs = Vec::new();
            grow(lc + lr, alphabet, &mut Vec::new(), 0, &mut seqs);
            for s in seqs {
                pairs.push((s[..lc].to_vec(), s[lc..].to_vec()));
            }
        }
    }
    pairs
}

pub fn words(symbols: &[u8]) -> Sent {
    symbols.iter().map(|&s| format!("w{s}")).collect()
}
