use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// Tokens at or above this many characters count as technical terms.
pub const LONG_TERM_CHARS: usize = 12;

/// Lowercased alphanumeric words.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

pub fn word_set(text: &str) -> HashSet<String> {
    words(text).collect()
}

/// Whitespace-separated word count.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityDensity {
    pub count: usize,
    pub density: f64,
}

/// Heuristic entity count over whitespace tokens. A token is an entity if it
/// starts with an uppercase letter (sentence-initial tokens excluded),
/// contains a digit, or has at least [`LONG_TERM_CHARS`] alphanumeric chars.
pub fn entity_density(answer: &str) -> EntityDensity {
    let mut total = 0usize;
    let mut count = 0usize;
    let mut sentence_start = true;
    for tok in answer.split_whitespace() {
        total += 1;
        let core = tok.trim_start_matches(|c: char| !c.is_alphanumeric());
        let capitalized = core.chars().next().is_some_and(char::is_uppercase);
        let has_digit = tok.chars().any(|c| c.is_ascii_digit());
        let long = tok.chars().filter(|c| c.is_alphanumeric()).count() >= LONG_TERM_CHARS;
        if (capitalized && !sentence_start) || has_digit || long {
            count += 1;
        }
        sentence_start = tok
            .trim_end_matches(['"', '\'', ')', ']', '»', '”', '’'])
            .ends_with(['.', '!', '?']);
    }
    EntityDensity {
        count,
        density: if total == 0 { 0.0 } else { count as f64 / total as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_entities() {
        assert_eq!(entity_density("the cat sat"), EntityDensity { count: 0, density: 0.0 });
    }

    #[test]
    fn sentence_initial_capital_is_not_an_entity() {
        assert_eq!(
            entity_density("Paris hosted 1900 games"),
            EntityDensity { count: 1, density: 0.25 }
        );
    }

    #[test]
    fn capitals_and_numbers() {
        assert_eq!(
            entity_density("He met Marie Curie in 1903"),
            EntityDensity { count: 3, density: 0.5 }
        );
    }

    #[test]
    fn second_sentence_start_is_excluded() {
        let d = entity_density("it rained. Then Bob left");
        assert_eq!(d.count, 1);
    }

    #[test]
    fn long_technical_terms() {
        let d = entity_density("the electroencephalogram was normal");
        assert_eq!(d.count, 1);
    }

    #[test]
    fn word_helpers() {
        assert_eq!(count_words("  a b\tc\n"), 3);
        let s = word_set("Hello, hello WORLD!");
        assert_eq!(s.len(), 2);
        assert!(s.contains("world"));
    }
}
