//! Planted-signal corpus generator.
//!
//! The bias label is driven by the record's `religion` attribute, which only
//! reaches a model through the attached context. The sentence text carries the
//! bias *type* (through tone words drawn independently of the label) and a weak
//! label cue, so a text-only model can type biases but detects them poorly.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Record, SensitiveAttribute, UNKNOWN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub records: usize,
    pub seed: u64,
    /// Probability that a record's label disagrees with the planted rule.
    pub label_noise: f64,
    /// Probability that a non-religion attribute is left `unknown`.
    pub unknown_rate: f64,
    /// How much more often the cue word appears in positive sentences.
    pub text_cue: f64,
}

impl SyntheticSpec {
    pub fn new(records: usize, seed: u64) -> Self {
        SyntheticSpec {
            records,
            seed,
            label_noise: 0.05,
            unknown_rate: 0.1,
            text_cue: 0.2,
        }
    }
}

pub const TARGETED_RELIGIONS: [&str; 3] = ["muslim", "jewish", "hindu"];
const OTHER_RELIGIONS: [&str; 3] = ["christian", "buddhist", "atheist"];
const GENDERS: [&str; 3] = ["male", "female", "nonbinary"];
const RACES: [&str; 4] = ["asian", "black", "white", "hispanic"];
const AGES: [&str; 3] = ["youth", "adult", "senior"];

const TONES: [(&str, [&str; 4]); 3] = [
    ("toxicity", ["hate", "disgusting", "vile", "despise"]),
    ("stereotyping", ["always", "typical", "naturally", "every"]),
    (
        "offensive_language",
        ["idiots", "morons", "trash", "clowns"],
    ),
];

const SUBJECTS: [&str; 8] = [
    "my neighbors",
    "the people downstairs",
    "those folks",
    "the new coworkers",
    "the guys at the gym",
    "the family next door",
    "the students",
    "the tourists",
];
const VERBS: [&str; 8] = [
    "talk about",
    "show up for",
    "look at",
    "complain about",
    "bring",
    "cook",
    "watch",
    "sing",
];
const OBJECTS: [&str; 12] = [
    "dinner",
    "the game",
    "music",
    "the news",
    "church",
    "work",
    "holidays",
    "the market",
    "school",
    "the weather",
    "movies",
    "politics",
];
const ENDINGS: [&str; 6] = [
    "today",
    "again",
    "every week",
    "at night",
    "on weekends",
    "lately",
];
const TOPICS: [&str; 10] = [
    "habits",
    "intelligence",
    "manners",
    "values",
    "work ethic",
    "cleanliness",
    "honesty",
    "families",
    "appearance",
    "beliefs",
];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty")
}

/// Generate `spec.records` distinct records (sentence/hypothesis pairs are unique).
pub fn synthetic_corpus(spec: &SyntheticSpec) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(spec.records);
    while records.len() < spec.records {
        let targeted = rng.gen_bool(0.5);
        let religion = if targeted {
            pick(&mut rng, &TARGETED_RELIGIONS)
        } else {
            pick(&mut rng, &OTHER_RELIGIONS)
        };
        let biased = targeted != rng.gen_bool(spec.label_noise);
        let (tone, words) = TONES[rng.gen_range(0..TONES.len())];

        let cue_p = if biased {
            0.5 + spec.text_cue / 2.0
        } else {
            0.5 - spec.text_cue / 2.0
        };
        let opener = if rng.gen_bool(cue_p) {
            "honestly"
        } else {
            "yesterday"
        };
        let sentence = format!(
            "{opener} {} {} {} {} {} {}",
            pick(&mut rng, &SUBJECTS),
            pick(&mut rng, &words),
            pick(&mut rng, &VERBS),
            pick(&mut rng, &OBJECTS),
            pick(&mut rng, &words),
            pick(&mut rng, &ENDINGS),
        );
        let hypothesis = format!(
            "the speaker implies something about their {}",
            pick(&mut rng, &TOPICS)
        );
        if !seen.insert((sentence.clone(), hypothesis.clone())) {
            continue;
        }

        let mut record = Record::new(&sentence, &hypothesis, biased.then_some(tone))
            .with_attribute(SensitiveAttribute::Religion, religion);
        for (attr, values) in [
            (SensitiveAttribute::Gender, &GENDERS[..]),
            (SensitiveAttribute::Race, &RACES[..]),
            (SensitiveAttribute::Age, &AGES[..]),
        ] {
            let value = if rng.gen_bool(spec.unknown_rate) {
                UNKNOWN
            } else {
                pick(&mut rng, values)
            };
            record = record.with_attribute(attr, value);
        }
        records.push(record);
    }
    Corpus::new(format!("synthetic:{}:{}", spec.records, spec.seed), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::preprocess;

    #[test]
    fn deterministic_and_clean() {
        let spec = SyntheticSpec::new(300, 4);
        let a = synthetic_corpus(&spec);
        assert_eq!(a, synthetic_corpus(&spec));
        assert_eq!(a.len(), 300);
        assert_eq!(preprocess(&a), a);
    }

    #[test]
    fn label_follows_planted_rule() {
        let c = synthetic_corpus(&SyntheticSpec::new(2000, 1));
        let agree = c
            .records
            .iter()
            .filter(|r| {
                TARGETED_RELIGIONS.contains(&r.attribute(SensitiveAttribute::Religion))
                    == r.is_biased()
            })
            .count();
        let rate = agree as f64 / c.len() as f64;
        assert!(rate > 0.92 && rate < 0.98, "{rate}");
        let pos = c.positives() as f64 / c.len() as f64;
        assert!((0.4..0.6).contains(&pos), "{pos}");
    }
}
