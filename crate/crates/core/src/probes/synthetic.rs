//! Generated corpora with known structure, used by the desk-scale probes.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::Tokens;

/// A generated sentence with its topic label and one marked position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopicSentence {
    pub tokens: Tokens,
    pub topic: usize,
    pub position: usize,
}

struct Topic {
    name: &'static str,
    templates: &'static [&'static str],
    slots: &'static [(&'static str, &'static [&'static str])],
}

// `{T}` marks the position used for context queries.
const FOOD: Topic = Topic {
    name: "food",
    templates: &[
        "i like eating {T} with {topping} and {topping}",
        "do you like to eat {T} with {topping} and {topping} ?",
        "did you eat {T} at {meal} ?",
        "what is the best {T} i can eat {place} ?",
        "we ordered {T} and {drink} for {meal}",
        "the {T} was baked with {topping} and {topping}",
        "my friends cooked {T} with {topping} for {meal}",
    ],
    slots: &[
        ("T", &["pizza", "pasta", "lasagna", "risotto", "bread", "salad"]),
        (
            "topping",
            &["cheese", "ham", "salami", "tomato", "basil", "olives", "mushrooms"],
        ),
        ("meal", &["lunch", "dinner", "breakfast"]),
        ("drink", &["wine", "beer", "water", "soda"]),
        ("place", &["here", "tonight", "nearby", "downtown"]),
    ],
};

const CAPITALS: Topic = Topic {
    name: "capitals",
    templates: &[
        "{city} is the {T} of {country}",
        "{city} is the {T} and most populous city of {country}",
        "the {T} of {country} is {city}",
        "{city} became the {T} of {country} in {year}",
        "{country} moved its {T} to {city} in {year}",
        "{city} is the {T} of the {region} of {country}",
    ],
    slots: &[
        ("T", &["capital", "seat", "center", "hub"]),
        (
            "city",
            &[
                "paris", "london", "rome", "berlin", "madrid", "vienna", "lisbon", "athens",
            ],
        ),
        (
            "country",
            &[
                "france", "england", "italy", "germany", "spain", "austria", "portugal", "greece",
            ],
        ),
        ("year", &["1871", "1901", "1945", "1990"]),
        ("region", &["north", "south", "republic", "kingdom"]),
    ],
};

const TOPICS: [Topic; 2] = [FOOD, CAPITALS];

pub fn topic_names() -> Vec<&'static str> {
    TOPICS.iter().map(|t| t.name).collect()
}

fn realize<R: Rng + ?Sized>(topic: &Topic, template: &str, rng: &mut R) -> (Tokens, usize) {
    let mut tokens = Vec::new();
    let mut position = 0;
    for piece in template.split(' ') {
        match piece.strip_prefix('{').and_then(|p| p.strip_suffix('}')) {
            Some(slot) => {
                let (_, words) = topic
                    .slots
                    .iter()
                    .find(|(name, _)| *name == slot)
                    .expect("template slots are declared");
                if slot == "T" {
                    position = tokens.len();
                }
                tokens.push(words.choose(rng).expect("non-empty slot").to_string());
            }
            None => tokens.push(piece.to_string()),
        }
    }
    (tokens, position)
}

/// `n` sentences from a two-topic template grammar (food and capitals),
/// topics alternating so both are equally represented.
pub fn two_topic_corpus<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<TopicSentence> {
    (0..n)
        .map(|i| {
            let topic = i % TOPICS.len();
            let t = &TOPICS[topic];
            let template = t.templates.choose(rng).expect("templates");
            let (tokens, position) = realize(t, template, rng);
            TopicSentence {
                tokens,
                topic,
                position,
            }
        })
        .collect()
}

/// Suffixes of the morphology corpus; a word's class is its suffix.
pub const SUFFIXES: [&str; 4] = ["ly", "tion", "ing", "ful"];

const MORPH_TEMPLATES: [&[&str]; 4] = [
    &[
        "she walked {W} to the market",
        "he spoke {W} to them",
        "they answered {W} and left",
    ],
    &[
        "the {W} was approved by the board",
        "we discussed the {W} yesterday",
        "a new {W} was announced",
    ],
    &[
        "they enjoy {W} on weekends",
        "{W} is good for you",
        "she started {W} last year",
    ],
    &["it was a {W} day", "the garden looks {W}", "what a {W} idea"],
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MorphologyCorpus {
    pub sentences: Vec<Tokens>,
    /// Words that occur in `sentences`, with their class.
    pub train_words: Vec<(String, usize)>,
    /// Words of every class never seen in `sentences`.
    pub held_out: Vec<(String, usize)>,
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn stem<R: Rng + ?Sized>(rng: &mut R) -> String {
    let syllables = rng.random_range(2..=3);
    let mut s = String::new();
    for _ in 0..syllables {
        s.push(*CONSONANTS.choose(rng).expect("letters") as char);
        s.push(*VOWELS.choose(rng).expect("letters") as char);
    }
    s
}

/// Corpus in which the suffix of a slot word alone decides which templates
/// it appears in. Stems are random and never shared between words, so
/// only the suffix carries class information.
pub fn morphology_corpus<R: Rng + ?Sized>(
    sentences: usize,
    words_per_class: usize,
    held_out_per_class: usize,
    rng: &mut R,
) -> MorphologyCorpus {
    let mut used = HashSet::new();
    let mut fresh = |rng: &mut R| loop {
        let s = stem(rng);
        if used.insert(s.clone()) {
            return s;
        }
    };
    let mut train_words = Vec::new();
    let mut held_out = Vec::new();
    for (class, suffix) in SUFFIXES.iter().enumerate() {
        for _ in 0..words_per_class {
            train_words.push((format!("{}{suffix}", fresh(rng)), class));
        }
        for _ in 0..held_out_per_class {
            held_out.push((format!("{}{suffix}", fresh(rng)), class));
        }
    }
    let mut out = Vec::with_capacity(sentences);
    for i in 0..sentences {
        let class = i % SUFFIXES.len();
        let template = MORPH_TEMPLATES[class].choose(rng).expect("templates");
        let pool: Vec<&String> = train_words
            .iter()
            .filter(|(_, c)| *c == class)
            .map(|(w, _)| w)
            .collect();
        let tokens = template
            .split(' ')
            .map(|p| {
                if p == "{W}" {
                    pool.choose(rng).expect("words").to_string()
                } else {
                    p.to_string()
                }
            })
            .collect();
        out.push(tokens);
    }
    MorphologyCorpus {
        sentences: out,
        train_words,
        held_out,
    }
}
