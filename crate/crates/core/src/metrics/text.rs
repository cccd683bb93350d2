//! Text metrics: BLEU-4, classic CIDEr (×10), and exact-match variants.
//!
//! All metrics share one normalization pipeline, versioned as `norm-v1`:
//! lowercase → replace punctuation with spaces → collapse whitespace; the
//! answer-matching variant additionally drops the articles a/an/the.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const NORMALIZATION_VERSION: &str = "norm-v1";
pub const BLEU_SMOOTHING_EPS: f64 = 1e-9;
const MAX_NGRAM: usize = 4;

/// Lowercased, punctuation-stripped word tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Tokens for answer matching: like [`tokens`] but with articles dropped.
pub fn normalize_answer(text: &str) -> Vec<String> {
    tokens(text)
        .into_iter()
        .filter(|t| !matches!(t.as_str(), "a" | "an" | "the"))
        .collect()
}

fn ngram_counts(toks: &[String], n: usize) -> HashMap<&[String], f64> {
    let mut out: HashMap<&[String], f64> = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *out.entry(w).or_insert(0.0) += 1.0;
        }
    }
    out
}

/// Sentence BLEU with n-gram orders 1..4, brevity penalty, and add-ε
/// smoothing of zero modified precisions. Empty candidate scores 0.
pub fn bleu4(candidate: &str, references: &[String]) -> Result<f64> {
    if references.is_empty() {
        return Err(Error::Contract("bleu4 needs at least one reference".into()));
    }
    let cand = tokens(candidate);
    if cand.is_empty() {
        return Ok(0.0);
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokens(r)).collect();
    let mut log_sum = 0.0;
    for n in 1..=MAX_NGRAM {
        let cand_counts = ngram_counts(&cand, n);
        let total: f64 = cand_counts.values().sum();
        if total == 0.0 {
            // candidate shorter than n: treat as fully smoothed
            log_sum += BLEU_SMOOTHING_EPS.ln() / MAX_NGRAM as f64;
            continue;
        }
        let mut clipped = 0.0;
        for (gram, &c) in &cand_counts {
            let max_ref = refs
                .iter()
                .map(|r| ngram_counts(r, n).get(gram).copied().unwrap_or(0.0))
                .fold(0.0f64, f64::max);
            clipped += c.min(max_ref);
        }
        let p = if clipped > 0.0 { clipped / total } else { BLEU_SMOOTHING_EPS };
        log_sum += p.ln() / MAX_NGRAM as f64;
    }
    // closest reference length (ties toward the shorter)
    let c_len = cand.len() as f64;
    let mut r_len = refs[0].len() as f64;
    for r in &refs[1..] {
        let l = r.len() as f64;
        if (l - c_len).abs() < (r_len - c_len).abs()
            || ((l - c_len).abs() == (r_len - c_len).abs() && l < r_len)
        {
            r_len = l;
        }
    }
    let bp = if c_len < r_len { (1.0 - r_len / c_len).exp() } else { 1.0 };
    Ok(bp * log_sum.exp())
}

fn cosine(a: &HashMap<&[String], f64>, b: &HashMap<&[String], f64>) -> Option<f64> {
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a
        .iter()
        .filter_map(|(g, v)| b.get(g).map(|w| v * w))
        .sum();
    Some(dot / (na * nb))
}

/// Classic CIDEr (not CIDEr-D): TF-IDF n-gram cosine for n = 1..4 averaged
/// over references and orders, scaled ×10. Document frequencies come from
/// the reference corpus. When the TF-IDF vectors vanish (every gram appears
/// in every document — inevitable for a single-item corpus) the cosine
/// falls back to raw term frequencies; two empty vectors (sentences shorter
/// than n) count as a perfect match for that order.
pub fn cider(items: &[(String, Vec<String>)]) -> Result<(Vec<f64>, f64)> {
    if items.is_empty() {
        return Err(Error::Degenerate("cider over empty corpus".into()));
    }
    if items.iter().any(|(_, refs)| refs.is_empty()) {
        return Err(Error::Contract("cider item without references".into()));
    }
    let n_docs = items.len() as f64;
    let cand_toks: Vec<Vec<String>> = items.iter().map(|(c, _)| tokens(c)).collect();
    let ref_toks: Vec<Vec<Vec<String>>> =
        items.iter().map(|(_, rs)| rs.iter().map(|r| tokens(r)).collect()).collect();

    let mut scores = Vec::with_capacity(items.len());
    for (i, _) in items.iter().enumerate() {
        let mut order_sum = 0.0;
        for n in 1..=MAX_NGRAM {
            // document frequency of each n-gram over the reference corpus
            let mut df: HashMap<&[String], f64> = HashMap::new();
            for refs in &ref_toks {
                let mut seen: HashMap<&[String], ()> = HashMap::new();
                for r in refs {
                    for g in ngram_counts(r, n).keys() {
                        seen.entry(g).or_insert(());
                    }
                }
                for g in seen.keys() {
                    *df.entry(g).or_insert(0.0) += 1.0;
                }
            }
            let idf = |g: &[String]| (n_docs / df.get(g).copied().unwrap_or(0.0).max(1.0)).ln();
            fn weigh<'a>(
                tf: &HashMap<&'a [String], f64>,
                idf: impl Fn(&[String]) -> f64,
            ) -> HashMap<&'a [String], f64> {
                tf.iter().map(|(&g, &v)| (g, v * idf(g))).collect()
            }
            let cand_tf = ngram_counts(&cand_toks[i], n);
            let cand_w = weigh(&cand_tf, idf);
            let mut ref_sum = 0.0;
            for r in &ref_toks[i] {
                let ref_tf = ngram_counts(r, n);
                let sim = cosine(&cand_w, &weigh(&ref_tf, idf))
                    .or_else(|| cosine(&cand_tf, &ref_tf))
                    .unwrap_or(if cand_tf.is_empty() && ref_tf.is_empty() { 1.0 } else { 0.0 });
                ref_sum += sim;
            }
            order_sum += ref_sum / ref_toks[i].len() as f64;
        }
        scores.push(10.0 * order_sum / MAX_NGRAM as f64);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok((scores, mean))
}

/// Exact match over normalized answers, plus the relaxed variant: EM-R also
/// accepts a contiguous token-level containment in either direction.
pub fn exact_match(pred: &str, golds: &[String]) -> Result<(bool, bool)> {
    if golds.is_empty() {
        return Err(Error::Contract("exact_match needs at least one gold answer".into()));
    }
    let p = normalize_answer(pred);
    let mut em = false;
    let mut em_r = false;
    for gold in golds {
        let g = normalize_answer(gold);
        if p == g {
            em = true;
            em_r = true;
            break;
        }
        if !p.is_empty() && !g.is_empty() {
            let contains = |hay: &[String], needle: &[String]| {
                hay.len() >= needle.len() && hay.windows(needle.len()).any(|w| w == needle)
            };
            if contains(&p, &g) || contains(&g, &p) {
                em_r = true;
            }
        }
    }
    Ok((em, em_r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeedRng;

    fn refs(rs: &[&str]) -> Vec<String> {
        rs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bleu_perfect_match_is_one() {
        let s = "the red chair near the window";
        assert!((bleu4(s, &refs(&[s])).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_disjoint_is_tiny() {
        let b = bleu4("alpha beta gamma delta", &refs(&["one two three four"])).unwrap();
        assert!(b < 1e-6);
    }

    #[test]
    fn bleu_empty_candidate_is_zero() {
        assert_eq!(bleu4("", &refs(&["a b c"])).unwrap(), 0.0);
        assert!(bleu4("a", &[]).is_err());
    }

    #[test]
    fn bleu_hand_computation_six_tokens() {
        // candidate: "it is a small red box", reference: "it is a large red box"
        // unigrams: 5/6 match; bigrams: it-is, is-a, red-box → 3/5;
        // trigrams: it-is-a → 1/4; 4-grams: none → ε; lengths equal → BP = 1
        let cand = "it is a small red box";
        let reference = "it is a large red box";
        let expect = ((5.0f64 / 6.0).ln() / 4.0
            + (3.0f64 / 5.0).ln() / 4.0
            + (1.0f64 / 4.0).ln() / 4.0
            + BLEU_SMOOTHING_EPS.ln() / 4.0)
            .exp();
        let got = bleu4(cand, &refs(&[reference])).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn bleu_case_insensitive() {
        let a = bleu4("It is a Red Box today", &refs(&["it is a red box today"])).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cider_identity_single_item_is_ten() {
        let s = "the red box sits on the floor".to_string();
        let (scores, mean) = cider(&[(s.clone(), vec![s])]).unwrap();
        assert!((scores[0] - 10.0).abs() < 1e-9);
        assert!((mean - 10.0).abs() < 1e-9);
    }

    #[test]
    fn cider_disjoint_vocabulary_is_zero() {
        let items = vec![(
            "alpha beta gamma delta epsilon".to_string(),
            vec!["one two three four five".to_string()],
        )];
        let (_, mean) = cider(&items).unwrap();
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn cider_invariant_to_corpus_order() {
        let a = ("the red box".to_string(), vec!["the red box on the floor".to_string()]);
        let b = ("a blue sphere".to_string(), vec!["the blue sphere near a wall".to_string()]);
        let c = ("what color is it".to_string(), vec!["it is green today".to_string()]);
        let (s1, _) = cider(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let (s2, _) = cider(&[c, a, b]).unwrap();
        assert!((s1[0] - s2[1]).abs() < 1e-12);
        assert!((s1[1] - s2[2]).abs() < 1e-12);
        assert!((s1[2] - s2[0]).abs() < 1e-12);
        assert!(cider(&[]).is_err());
    }

    #[test]
    fn exact_match_rules() {
        let (em, emr) = exact_match("red", &refs(&["red"])).unwrap();
        assert!(em && emr);
        let (em, emr) = exact_match("the chair", &refs(&["chair"])).unwrap();
        assert!(em && emr, "article dropping should make these equal");
        let (em, emr) = exact_match("a red wooden chair", &refs(&["red chair"])).unwrap();
        assert!(!em && !emr, "non-contiguous tokens must not relax-match");
        let (em, emr) = exact_match("it is the red box", &refs(&["red box"])).unwrap();
        assert!(!em && emr, "contiguous containment relax-matches");
        assert!(exact_match("x", &[]).is_err());
    }

    // -- randomized oracles ---------------------------------------------

    fn random_sentence(rng: &mut SeedRng, vocab: &[&str], max_len: usize) -> String {
        let len = 1 + rng.below(max_len);
        (0..len).map(|_| vocab[rng.below(vocab.len())]).collect::<Vec<_>>().join(" ")
    }

    /// Naive BLEU written against joined-string n-grams for independence.
    fn bleu_oracle(cand: &str, rs: &[String]) -> f64 {
        let ct = tokens(cand);
        if ct.is_empty() {
            return 0.0;
        }
        let grams = |t: &[String], n: usize| -> Vec<String> {
            if t.len() < n {
                vec![]
            } else {
                (0..=t.len() - n).map(|i| t[i..i + n].join("\u{1f}")).collect()
            }
        };
        let mut log_sum = 0.0;
        for n in 1..=4 {
            let cg = grams(&ct, n);
            if cg.is_empty() {
                log_sum += 0.25 * BLEU_SMOOTHING_EPS.ln();
                continue;
            }
            let mut clipped = 0usize;
            let mut counted: Vec<String> = vec![];
            for g in &cg {
                if counted.contains(g) {
                    continue;
                }
                counted.push(g.clone());
                let c_count = cg.iter().filter(|x| *x == g).count();
                let max_ref = rs
                    .iter()
                    .map(|r| grams(&tokens(r), n).iter().filter(|x| *x == g).count())
                    .max()
                    .unwrap_or(0);
                clipped += c_count.min(max_ref);
            }
            let p = if clipped > 0 { clipped as f64 / cg.len() as f64 } else { BLEU_SMOOTHING_EPS };
            log_sum += 0.25 * p.ln();
        }
        let c_len = ct.len() as f64;
        let mut best = tokens(&rs[0]).len() as f64;
        for r in rs {
            let l = tokens(r).len() as f64;
            if (l - c_len).abs() < (best - c_len).abs()
                || ((l - c_len).abs() == (best - c_len).abs() && l < best)
            {
                best = l;
            }
        }
        let bp = if c_len < best { (1.0 - best / c_len).exp() } else { 1.0 };
        bp * log_sum.exp()
    }

    #[test]
    fn bleu_matches_oracle_on_200_instances() {
        let vocab = ["red", "blue", "box", "chair", "near", "the", "wall", "it"];
        let mut rng = SeedRng::new(42);
        for _ in 0..200 {
            let cand = random_sentence(&mut rng, &vocab, 8);
            let n_refs = 1 + rng.below(3);
            let rs: Vec<String> =
                (0..n_refs).map(|_| random_sentence(&mut rng, &vocab, 8)).collect();
            let got = bleu4(&cand, &rs).unwrap();
            let expect = bleu_oracle(&cand, &rs);
            assert!((got - expect).abs() < 1e-9, "cand={cand:?} refs={rs:?}: {got} vs {expect}");
        }
    }

    /// Naive CIDEr with BTreeMaps and joined-string grams for independence.
    fn cider_oracle(items: &[(String, Vec<String>)]) -> Vec<f64> {
        use std::collections::{BTreeMap, BTreeSet};
        let grams = |t: &[String], n: usize| -> BTreeMap<String, f64> {
            let mut m = BTreeMap::new();
            if t.len() >= n {
                for i in 0..=t.len() - n {
                    *m.entry(t[i..i + n].join("\u{1f}")).or_insert(0.0) += 1.0;
                }
            }
            m
        };
        let n_docs = items.len() as f64;
        let mut out = vec![];
        for (idx, (cand, _)) in items.iter().enumerate() {
            let ct = tokens(cand);
            let mut total = 0.0;
            for n in 1..=4 {
                let mut df: BTreeMap<String, f64> = BTreeMap::new();
                for (_, rs) in items {
                    let mut seen = BTreeSet::new();
                    for r in rs {
                        seen.extend(grams(&tokens(r), n).into_keys());
                    }
                    for g in seen {
                        *df.entry(g).or_insert(0.0) += 1.0;
                    }
                }
                let tfidf = |tf: &BTreeMap<String, f64>| -> BTreeMap<String, f64> {
                    tf.iter()
                        .map(|(g, v)| {
                            (g.clone(), v * (n_docs / df.get(g).copied().unwrap_or(1.0).max(1.0)).ln())
                        })
                        .collect()
                };
                let cos = |a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>| -> Option<f64> {
                    let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
                    let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
                    if na == 0.0 || nb == 0.0 {
                        return None;
                    }
                    let d: f64 =
                        a.iter().filter_map(|(g, v)| b.get(g).map(|w| v * w)).sum();
                    Some(d / (na * nb))
                };
                let ctf = grams(&ct, n);
                let rs = &items[idx].1;
                let mut ref_sum = 0.0;
                for r in rs {
                    let rtf = grams(&tokens(r), n);
                    let sim = cos(&tfidf(&ctf), &tfidf(&rtf))
                        .or_else(|| cos(&ctf, &rtf))
                        .unwrap_or(if ctf.is_empty() && rtf.is_empty() { 1.0 } else { 0.0 });
                    ref_sum += sim;
                }
                total += ref_sum / rs.len() as f64;
            }
            out.push(10.0 * total / 4.0);
        }
        out
    }

    #[test]
    fn cider_matches_oracle_on_200_instances() {
        let vocab = ["red", "blue", "box", "chair", "near", "the", "wall", "it", "is"];
        let mut rng = SeedRng::new(43);
        for _ in 0..40 {
            let n_items = 1 + rng.below(5);
            let items: Vec<(String, Vec<String>)> = (0..n_items)
                .map(|_| {
                    let cand = random_sentence(&mut rng, &vocab, 7);
                    let rs = (0..1 + rng.below(2))
                        .map(|_| random_sentence(&mut rng, &vocab, 7))
                        .collect();
                    (cand, rs)
                })
                .collect();
            let (got, _) = cider(&items).unwrap();
            let expect = cider_oracle(&items);
            for (g, e) in got.iter().zip(&expect) {
                assert!((g - e).abs() < 1e-9, "{g} vs {e} on {items:?}");
            }
        }
    }

    #[test]
    fn exact_match_matches_oracle_on_200_instances() {
        let vocab = ["the", "a", "red", "blue", "box", "chair", "it"];
        let mut rng = SeedRng::new(44);
        for _ in 0..200 {
            let pred = random_sentence(&mut rng, &vocab, 5);
            let golds: Vec<String> =
                (0..1 + rng.below(2)).map(|_| random_sentence(&mut rng, &vocab, 5)).collect();
            let (em, emr) = exact_match(&pred, &golds).unwrap();
            // oracle over joined normalized strings with explicit word-boundary scan
            let norm = |s: &str| normalize_answer(s);
            let p = norm(&pred);
            let em_o = golds.iter().any(|g| norm(g) == p);
            let sub = |hay: &[String], needle: &[String]| -> bool {
                if needle.is_empty() || hay.len() < needle.len() {
                    return false;
                }
                for i in 0..=hay.len() - needle.len() {
                    if hay[i..i + needle.len()] == *needle {
                        return true;
                    }
                }
                false
            };
            let emr_o = em_o
                || golds.iter().any(|g| {
                    let gn = norm(g);
                    !p.is_empty() && !gn.is_empty() && (sub(&p, &gn) || sub(&gn, &p))
                });
            assert_eq!(em, em_o, "pred={pred:?} golds={golds:?}");
            assert_eq!(emr, emr_o, "pred={pred:?} golds={golds:?}");
        }
    }
}
