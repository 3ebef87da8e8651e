//! Fake-indicative n-gram mining and pattern-based weak labeling.
//!
//! Candidate uni/bi/tri-grams are scored against a labeled corpus with the
//! 2x2 chi-squared statistic and the information gain ratio; texts matching a
//! ranked pattern as a contiguous token run receive weak label 1 (fake).
//! Texts without a match receive no label at all: trusted negatives come from
//! elsewhere, never from pattern absence.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub type NGram = Vec<String>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub id: String,
    pub tokens: Vec<String>,
    /// 0 = real, 1 = fake.
    pub label: u8,
}

/// 2x2 document contingency of one n-gram:
/// a = fake docs containing it, b = real docs containing it,
/// c = fake docs lacking it,   d = real docs lacking it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contingency {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

#[derive(Debug, Clone)]
pub struct PatternScore {
    pub ngram: NGram,
    /// Total occurrence count across the corpus.
    pub tf: u64,
    pub counts: Contingency,
    pub chi2: f64,
    pub gain_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    Chi2,
    GainRatio,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternList {
    pub method: RankMethod,
    pub patterns: Vec<NGram>,
}

/// Default tokenizer: lowercase, split on whitespace, then peel punctuation
/// off token edges into standalone tokens ("Real?!" -> ["real", "?", "!"]).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && is_edge_punct(chars[start]) {
            start += 1;
        }
        while end > start && is_edge_punct(chars[end - 1]) {
            end -= 1;
        }
        let mut lead: Vec<String> = chars[..start].iter().map(|c| c.to_string()).collect();
        out.append(&mut lead);
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        let mut trail: Vec<String> = chars[end..].iter().map(|c| c.to_string()).collect();
        out.append(&mut trail);
    }
    out
}

fn is_edge_punct(c: char) -> bool {
    c.is_ascii_punctuation() && c != '@' && c != '#'
}

/// Pluggable tokenization for corpora that need more than whitespace rules.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text)
    }
}

/// All contiguous n-grams of length 1..=max_n with occurrence counts.
pub fn extract_ngrams(tokens: &[String], max_n: usize) -> BTreeMap<NGram, u64> {
    assert!((1..=3).contains(&max_n), "max_n must be in 1..=3");
    let mut counts = BTreeMap::new();
    for n in 1..=max_n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Pearson chi-squared for a 2x2 table: N(ad - bc)^2 / ((a+b)(c+d)(a+c)(b+d)).
/// Degenerate margins score 0 so corpus-wide scoring stays total.
pub fn chi_squared(t: Contingency) -> f64 {
    let Contingency { a, b, c, d } = t;
    let row1 = a + b;
    let row2 = c + d;
    let col1 = a + c;
    let col2 = b + d;
    if row1 == 0 || row2 == 0 || col1 == 0 || col2 == 0 {
        return 0.0;
    }
    let n = (a + b + c + d) as f64;
    let diff = a as f64 * d as f64 - b as f64 * c as f64;
    n * diff * diff / (row1 as f64 * row2 as f64 * col1 as f64 * col2 as f64)
}

fn entropy2(p: f64) -> f64 {
    let mut h = 0.0;
    for q in [p, 1.0 - p] {
        if q > 0.0 {
            h -= q * q.log2();
        }
    }
    h
}

/// Information gain ratio of the present/absent split, entropies in bits.
/// Returns IG / IV, defined as 0 when the split is constant (IV = 0).
pub fn info_gain_ratio(t: Contingency) -> f64 {
    let Contingency { a, b, c, d } = t;
    let n = (a + b + c + d) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let present = (a + b) as f64;
    let absent = (c + d) as f64;
    let iv = entropy2(present / n);
    if iv == 0.0 {
        return 0.0;
    }
    let h_class = entropy2((a + c) as f64 / n);
    let h_present = if present > 0.0 { entropy2(a as f64 / present) } else { 0.0 };
    let h_absent = if absent > 0.0 { entropy2(c as f64 / absent) } else { 0.0 };
    let ig = h_class - (present / n) * h_present - (absent / n) * h_absent;
    ig / iv
}

/// Score every n-gram with document frequency >= min_df against the corpus.
/// Returns scores in deterministic lexicographic n-gram order.
pub fn score_patterns(
    corpus: &[TokenizedDoc],
    max_n: usize,
    min_df: u64,
) -> Result<Vec<PatternScore>> {
    let fake_total = corpus.iter().filter(|d| d.label == 1).count() as u64;
    let real_total = corpus.len() as u64 - fake_total;
    if fake_total == 0 || real_total == 0 {
        return Err(CoreError::SingleClassCorpus);
    }

    let mut tf: BTreeMap<NGram, u64> = BTreeMap::new();
    let mut df_fake: BTreeMap<NGram, u64> = BTreeMap::new();
    let mut df_real: BTreeMap<NGram, u64> = BTreeMap::new();
    for doc in corpus {
        let counts = extract_ngrams(&doc.tokens, max_n);
        let distinct: BTreeSet<&NGram> = counts.keys().collect();
        for (gram, count) in &counts {
            *tf.entry(gram.clone()).or_insert(0) += count;
        }
        let df = if doc.label == 1 { &mut df_fake } else { &mut df_real };
        for gram in distinct {
            *df.entry(gram.clone()).or_insert(0) += 1;
        }
    }

    let mut scores = Vec::new();
    for (gram, &tf_count) in &tf {
        let a = df_fake.get(gram).copied().unwrap_or(0);
        let b = df_real.get(gram).copied().unwrap_or(0);
        if a + b < min_df {
            continue;
        }
        let counts = Contingency {
            a,
            b,
            c: fake_total - a,
            d: real_total - b,
        };
        scores.push(PatternScore {
            ngram: gram.clone(),
            tf: tf_count,
            counts,
            chi2: chi_squared(counts),
            gain_ratio: info_gain_ratio(counts),
        });
    }
    Ok(scores)
}

/// Rank fake-indicative patterns: only n-grams over-represented in fake
/// documents (a/(a+c) > b/(b+d)) are eligible; the top_k by the chosen score
/// are returned, ties broken lexicographically on the joined n-gram.
pub fn rank_patterns(
    corpus: &[TokenizedDoc],
    max_n: usize,
    method: RankMethod,
    top_k: usize,
    min_df: u64,
) -> Result<PatternList> {
    assert!(top_k >= 1, "top_k must be >= 1");
    let mut scored = score_patterns(corpus, max_n, min_df)?;
    // Fake-direction filter, in exact integer arithmetic:
    // a/(a+c) > b/(b+d)  <=>  a(b+d) > b(a+c).
    scored.retain(|s| {
        let Contingency { a, b, c, d } = s.counts;
        (a as u128) * ((b + d) as u128) > (b as u128) * ((a + c) as u128)
    });
    scored.sort_by(|x, y| {
        let sx = score_of(x, method);
        let sy = score_of(y, method);
        sy.partial_cmp(&sx)
            .unwrap()
            .then_with(|| x.ngram.join(" ").cmp(&y.ngram.join(" ")))
    });
    scored.truncate(top_k);
    Ok(PatternList {
        method,
        patterns: scored.into_iter().map(|s| s.ngram).collect(),
    })
}

fn score_of(s: &PatternScore, method: RankMethod) -> f64 {
    match method {
        RankMethod::Chi2 => s.chi2,
        RankMethod::GainRatio => s.gain_ratio,
    }
}

/// Weak-label texts by pattern matching: a text gets weak label 1 iff it
/// contains at least one pattern as a contiguous token run. Unmatched texts
/// are omitted, not labeled real.
pub fn weak_label(
    texts: &[(String, Vec<String>)],
    patterns: &PatternList,
) -> Result<Vec<(String, u8)>> {
    if patterns.patterns.is_empty() {
        return Err(CoreError::EmptyPatterns);
    }
    let mut out = Vec::new();
    for (id, tokens) in texts {
        let hit = patterns.patterns.iter().any(|p| contains_run(tokens, p));
        if hit {
            out.push((id.clone(), 1u8));
        }
    }
    Ok(out)
}

fn contains_run(tokens: &[String], pattern: &[String]) -> bool {
    !pattern.is_empty()
        && pattern.len() <= tokens.len()
        && tokens.windows(pattern.len()).any(|w| w == pattern)
}
