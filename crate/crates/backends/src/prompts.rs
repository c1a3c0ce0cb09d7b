//! Prompt templates used by the remote backend.
//!
//! Templates are versioned as a set; bump [`PROMPT_VERSION`] whenever any of
//! them changes so cached signals are invalidated.

pub const PROMPT_VERSION: &str = "pcib-prompts-v1";

pub const CLAIMS_SYSTEM: &str =
    "You decompose answers into short, self-contained factual claims. Output only the claims.";

pub const PARAPHRASE_SYSTEM: &str =
    "You rewrite statements without changing their meaning. Output only the rewrites.";

pub const TRACE_SYSTEM: &str =
    "You explain, step by step, the reasoning that supports an answer to a question.";

/// Scoring prefix; the answer is appended after a single space.
pub fn scoring_prefix(question: &str, context: Option<&str>) -> String {
    match context {
        Some(ctx) => format!("Context:\n{}\n\nQuestion: {}\nAnswer:", ctx.trim(), question.trim()),
        None => format!("Question: {}\nAnswer:", question.trim()),
    }
}

pub fn claims_user(answer: &str, max_claims: usize) -> String {
    format!(
        "List the distinct factual claims made in the answer below, one claim per line, \
         at most {max_claims} claims. Do not number them or add commentary.\n\nAnswer: {}",
        answer.trim()
    )
}

pub fn paraphrase_user(claim: &str, k: usize) -> String {
    format!(
        "Rewrite the statement below in {k} different ways that keep its exact meaning. \
         Return one rewrite per line with no numbering.\n\nStatement: {}",
        claim.trim()
    )
}

pub fn trace_user(question: &str, answer: &str) -> String {
    format!(
        "Question: {}\nAnswer: {}\n\nExplain why this answer is correct.",
        question.trim(),
        answer.trim()
    )
}

/// Splits a chat completion into lines, dropping bullets and list numbering.
pub fn parse_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(|line| {
            let line = line.trim();
            let line = line.trim_start_matches(['-', '*', '•']).trim_start();
            let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
            let rest = &line[digits..];
            if digits > 0 && (rest.starts_with('.') || rest.starts_with(')')) {
                rest[1..].trim().to_string()
            } else {
                line.to_string()
            }
        })
        .filter(|l| !l.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_differs_only_before_answer_marker() {
        let with = scoring_prefix("Who?", Some("ctx"));
        let without = scoring_prefix("Who?", None);
        assert!(with.ends_with("Answer:") && without.ends_with("Answer:"));
        assert!(with.contains("ctx"));
    }

    #[test]
    fn parse_lines_strips_list_markers() {
        let parsed = parse_lines("1. Paris is in France.\n- It has 2M people\n\n3) Seine\n2024 was warm");
        assert_eq!(
            parsed,
            vec!["Paris is in France.", "It has 2M people", "Seine", "2024 was warm"]
        );
    }
}
