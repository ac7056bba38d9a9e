//! Sentence segmentation and FLARE query formation.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;

use crate::gateways::{GatewayError, LanguageModel, TokenLogprob};

use super::{llm_call, GenSettings};

fn ends_sentence(token: &str) -> bool {
    token.trim_end().ends_with(['.', '!', '?'])
}

/// Number of leading tokens forming the first sentence. A sentence ends at
/// a token ending in `.`, `!` or `?` that is followed by whitespace or by
/// the end of the stream.
pub fn sentence_token_count(tokens: &[TokenLogprob]) -> usize {
    for (i, t) in tokens.iter().enumerate() {
        if !ends_sentence(&t.token) {
            continue;
        }
        let trailing_space = t.token.len() != t.token.trim_end().len();
        let next_starts_with_space = tokens
            .get(i + 1)
            .is_none_or(|n| n.token.starts_with(char::is_whitespace));
        if trailing_space || next_starts_with_space {
            return i + 1;
        }
    }
    tokens.len()
}

/// Splits text after `.`, `!` or `?` followed by whitespace or the end.
pub fn split_sentences(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[.!?]+(\s+|$)").expect("static regex"));
    let mut out = Vec::new();
    let mut start = 0;
    for m in re.find_iter(text) {
        let s = text[start..m.end()].trim();
        if !s.is_empty() {
            out.push(s.to_string());
        }
        start = m.end();
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

fn join_tokens<'a>(tokens: impl Iterator<Item = &'a TokenLogprob>) -> String {
    let joined: String = tokens.map(|t| t.token.as_str()).collect();
    joined.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The sentence with every token below `beta` removed. Falls back to the
/// whole sentence when nothing survives the mask.
pub fn qry_masked(sentence: &str, tokens: &[TokenLogprob], beta: f64) -> String {
    let masked = join_tokens(tokens.iter().filter(|t| t.prob() >= beta));
    if masked.is_empty() {
        sentence.split_whitespace().collect::<Vec<_>>().join(" ")
    } else {
        masked
    }
}

/// Maximal runs of tokens whose probability is below `beta`.
pub fn low_confidence_spans(tokens: &[TokenLogprob], beta: f64) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, t) in tokens.iter().enumerate() {
        match (t.prob() < beta, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(s..tokens.len());
    }
    spans
}

/// Prompt asking the model for a question targeting one uncertain span.
pub fn question_prompt(sentence: &str, span: &str) -> String {
    format!(
        "Sentence: {sentence}\n\
         Write one search question whose answer is the phrase \"{span}\" in the sentence above. \
         Reply with the question only."
    )
}

/// One generated question per low-confidence span. An empty reply falls
/// back to the masked query.
pub fn qry_llm(
    sentence: &str,
    tokens: &[TokenLogprob],
    spans: &[Range<usize>],
    beta: f64,
    llm: &dyn LanguageModel,
    settings: &GenSettings,
) -> Result<Vec<String>, GatewayError> {
    spans
        .iter()
        .map(|span| {
            let phrase = join_tokens(tokens[span.clone()].iter());
            let resp = llm_call(llm, question_prompt(sentence, &phrase), "", 64, false, settings)?;
            let q = resp.text.trim();
            Ok(if q.is_empty() {
                qry_masked(sentence, tokens, beta)
            } else {
                q.to_string()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateways::llm::{LlmScript, ScriptRule};
    use crate::gateways::ScriptedLlm;

    fn toks(items: &[(&str, f64)]) -> Vec<TokenLogprob> {
        items.iter().map(|(t, p)| TokenLogprob::new(*t, *p)).collect()
    }

    #[test]
    fn masks_low_confidence_token() {
        let t = toks(&[("the", 0.9), ("flork", 0.1)]);
        assert_eq!(qry_masked("the flork", &t, 0.4), "the");
    }

    #[test]
    fn confident_sentence_unchanged() {
        let t = toks(&[("Troops", 0.9), (" were", 0.8), (" fed.", 0.5)]);
        assert_eq!(qry_masked("Troops were fed.", &t, 0.4), "Troops were fed.");
    }

    #[test]
    fn all_masked_falls_back_to_sentence() {
        let t = toks(&[("a", 0.1), (" b", 0.2)]);
        assert_eq!(qry_masked("a b", &t, 0.4), "a b");
    }

    #[test]
    fn spans_are_maximal_runs() {
        let t = toks(&[("a", 0.1), ("b", 0.2), ("c", 0.9), ("d", 0.3)]);
        assert_eq!(low_confidence_spans(&t, 0.4), vec![0..2, 3..4]);
        assert!(low_confidence_spans(&t, 0.0).is_empty());
    }

    #[test]
    fn no_spans_no_queries() {
        let llm = ScriptedLlm::constant("unused?");
        let q = qry_llm("s", &[], &[], 0.4, &llm, &GenSettings::default()).unwrap();
        assert!(q.is_empty());
    }

    #[test]
    fn generated_question_is_used() {
        let llm = ScriptedLlm::constant("Who supplied the troops?");
        let t = toks(&[("Russia", 0.1), (" supplied", 0.9)]);
        let q = qry_llm("Russia supplied", &t, &[Range { start: 0, end: 1 }], 0.4, &llm, &GenSettings::default()).unwrap();
        assert_eq!(q, vec!["Who supplied the troops?"]);
        let prompt = &llm.requests()[0].prompt;
        assert!(prompt.contains("\"Russia\""));
    }

    #[test]
    fn empty_question_falls_back_to_mask() {
        let llm = ScriptedLlm::new(LlmScript {
            rules: vec![],
            default: Some(ScriptRule::reply(&[], "")),
        });
        let t = toks(&[("Russia", 0.1), (" supplied", 0.9)]);
        let q = qry_llm("Russia supplied", &t, &[Range { start: 0, end: 1 }], 0.4, &llm, &GenSettings::default()).unwrap();
        assert_eq!(q, vec!["supplied"]);
    }

    #[test]
    fn sentence_boundaries_on_tokens() {
        let t = toks(&[("It", 1.0), (" is.", 1.0), (" Next", 1.0), (" one", 1.0)]);
        assert_eq!(sentence_token_count(&t), 2);
        let t = toks(&[("3", 1.0), (".", 1.0), ("5", 1.0)]);
        assert_eq!(sentence_token_count(&t), 3);
        let t = toks(&[("done", 1.0), ("!", 1.0)]);
        assert_eq!(sentence_token_count(&t), 2);
    }

    #[test]
    fn sentence_split_on_text() {
        assert_eq!(
            split_sentences("One. Two! Three? 3.5 stays"),
            vec!["One.", "Two!", "Three?", "3.5 stays"]
        );
        assert!(split_sentences("  ").is_empty());
    }
}
