//! The 16 text features used by the text-based baseline.
//!
//! Entity counts (people/location/organization) come from gazetteer word
//! lists rather than a trained tagger, and the sentiment score is the
//! normalized positive/negative difference, so the baseline stays
//! self-contained.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::Result;

pub const TEXT_FEATURE_NAMES: [&str; 16] = [
    "exclamation_count",
    "question_count",
    "positive_word_count",
    "negative_word_count",
    "sentiment_score",
    "word_count",
    "char_count",
    "first_person_count",
    "second_person_count",
    "third_person_count",
    "people_count",
    "location_count",
    "organization_count",
    "url_count",
    "mention_count",
    "hashtag_count",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextFeatureVector {
    pub exclamation_count: f64,
    pub question_count: f64,
    pub positive_word_count: f64,
    pub negative_word_count: f64,
    /// (pos - neg) / (pos + neg), 0 when both are 0. In [-1, 1].
    pub sentiment_score: f64,
    pub word_count: f64,
    pub char_count: f64,
    pub first_person_count: f64,
    pub second_person_count: f64,
    pub third_person_count: f64,
    pub people_count: f64,
    pub location_count: f64,
    pub organization_count: f64,
    pub url_count: f64,
    pub mention_count: f64,
    pub hashtag_count: f64,
}

impl TextFeatureVector {
    pub fn zeros() -> Self {
        TextFeatureVector {
            exclamation_count: 0.0,
            question_count: 0.0,
            positive_word_count: 0.0,
            negative_word_count: 0.0,
            sentiment_score: 0.0,
            word_count: 0.0,
            char_count: 0.0,
            first_person_count: 0.0,
            second_person_count: 0.0,
            third_person_count: 0.0,
            people_count: 0.0,
            location_count: 0.0,
            organization_count: 0.0,
            url_count: 0.0,
            mention_count: 0.0,
            hashtag_count: 0.0,
        }
    }

    /// The 16 values in the fixed `TEXT_FEATURE_NAMES` order.
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.exclamation_count,
            self.question_count,
            self.positive_word_count,
            self.negative_word_count,
            self.sentiment_score,
            self.word_count,
            self.char_count,
            self.first_person_count,
            self.second_person_count,
            self.third_person_count,
            self.people_count,
            self.location_count,
            self.organization_count,
            self.url_count,
            self.mention_count,
            self.hashtag_count,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Lexicons {
    pub positive: BTreeSet<String>,
    pub negative: BTreeSet<String>,
    pub first_person: BTreeSet<String>,
    pub second_person: BTreeSet<String>,
    pub third_person: BTreeSet<String>,
    pub people: BTreeSet<String>,
    pub location: BTreeSet<String>,
    pub organization: BTreeSet<String>,
}

fn set_of(words: &[&str]) -> BTreeSet<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl Default for Lexicons {
    /// Small built-in English lists; real runs load project-specific files.
    fn default() -> Self {
        Lexicons {
            positive: set_of(&[
                "good", "great", "true", "confirmed", "beautiful", "love", "happy", "safe",
                "verified", "official",
            ]),
            negative: set_of(&[
                "bad", "fake", "false", "rumor", "hoax", "terrible", "scary", "dead", "panic",
                "fraud",
            ]),
            first_person: set_of(&["i", "me", "my", "mine", "we", "us", "our", "ours"]),
            second_person: set_of(&["you", "your", "yours"]),
            third_person: set_of(&[
                "he", "him", "his", "she", "her", "hers", "it", "its", "they", "them", "their",
                "theirs",
            ]),
            people: set_of(&["obama", "putin", "madonna", "einstein"]),
            location: set_of(&["london", "paris", "tokyo", "york", "berlin"]),
            organization: set_of(&["nasa", "un", "bbc", "reuters", "who"]),
        }
    }
}

impl Lexicons {
    /// Load categories from one-token-per-line files in a directory. Missing
    /// files leave the built-in defaults for that category.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut lex = Lexicons::default();
        for (name, slot) in [
            ("positive.txt", &mut lex.positive),
            ("negative.txt", &mut lex.negative),
            ("first_person.txt", &mut lex.first_person),
            ("second_person.txt", &mut lex.second_person),
            ("third_person.txt", &mut lex.third_person),
            ("people.txt", &mut lex.people),
            ("location.txt", &mut lex.location),
            ("organization.txt", &mut lex.organization),
        ] {
            let path = dir.join(name);
            if path.exists() {
                let content = fs::read_to_string(&path)?;
                *slot = content
                    .lines()
                    .map(|l| l.trim().to_lowercase())
                    .filter(|l| !l.is_empty())
                    .collect();
            }
        }
        Ok(lex)
    }
}

/// Compute the 16 text features. Counting conventions:
/// exclamation/question marks are counted over characters; url/mention/
/// hashtag over raw whitespace tokens by prefix; lexicon matches over
/// lowercased tokens with edge punctuation stripped.
pub fn text_features(text: &str, lexicons: &Lexicons) -> TextFeatureVector {
    let mut f = TextFeatureVector::zeros();
    if text.is_empty() {
        return f;
    }
    f.exclamation_count = text.chars().filter(|&c| c == '!').count() as f64;
    f.question_count = text.chars().filter(|&c| c == '?').count() as f64;
    f.char_count = text.chars().count() as f64;

    for raw in text.split_whitespace() {
        f.word_count += 1.0;
        if raw.starts_with("http") {
            f.url_count += 1.0;
        }
        if raw.starts_with('@') {
            f.mention_count += 1.0;
        }
        if raw.starts_with('#') {
            f.hashtag_count += 1.0;
        }
        let token = raw
            .trim_matches(|c: char| c.is_ascii_punctuation())
            .to_lowercase();
        if token.is_empty() {
            continue;
        }
        if lexicons.positive.contains(&token) {
            f.positive_word_count += 1.0;
        }
        if lexicons.negative.contains(&token) {
            f.negative_word_count += 1.0;
        }
        if lexicons.first_person.contains(&token) {
            f.first_person_count += 1.0;
        }
        if lexicons.second_person.contains(&token) {
            f.second_person_count += 1.0;
        }
        if lexicons.third_person.contains(&token) {
            f.third_person_count += 1.0;
        }
        if lexicons.people.contains(&token) {
            f.people_count += 1.0;
        }
        if lexicons.location.contains(&token) {
            f.location_count += 1.0;
        }
        if lexicons.organization.contains(&token) {
            f.organization_count += 1.0;
        }
    }

    let pos = f.positive_word_count;
    let neg = f.negative_word_count;
    if pos + neg > 0.0 {
        f.sentiment_score = (pos - neg) / (pos + neg);
    }
    f
}
