use crate::corpus::Tokenizer;
use crate::datamodel::{RetrievedContext, TraceEntry};
use crate::gateways::llm::split_reply;
use crate::gateways::{FinishReason, GenerationResponse, LanguageModel, TokenLogprob};

use super::{llm_call, GenSettings, PromptBuilder, RalmParams, RetrievalError, Sources};

/// In-context retrieval at a fixed stride.
///
/// Before every block of `stride` generated tokens the last `query_window`
/// tokens of the running sequence (claim tokens followed by generated
/// tokens) are used as the query, and the result replaces the retrieval slot
/// of the prompt. An `n`-token generation therefore triggers `ceil(n /
/// stride)` retrievals.
pub fn ralm_generate(
    claim: &str,
    tokenizer: &dyn Tokenizer,
    prompt: &dyn PromptBuilder,
    params: RalmParams,
    settings: GenSettings,
    llm: &dyn LanguageModel,
    sources: &Sources<'_>,
) -> Result<(GenerationResponse, Vec<TraceEntry>), RetrievalError> {
    params.validate()?;
    let mut history: Vec<String> = tokenizer
        .tokens(claim)
        .into_iter()
        .map(str::to_string)
        .collect();
    let mut text = String::new();
    let mut tokens: Vec<TokenLogprob> = Vec::new();
    let mut events = Vec::new();
    let mut finish = FinishReason::Stop;

    while tokens.len() < settings.max_tokens {
        let position = tokens.len();
        let window = &history[history.len().saturating_sub(params.query_window)..];
        let query = window.join(" ");
        let (ctx, event): (RetrievedContext, TraceEntry) = sources.retrieve(&[query], position)?;

        let budget = params.stride.min(settings.max_tokens - position);
        let resp = llm_call(llm, prompt(&ctx), &text, budget, false, &settings)?;
        let new_tokens: Vec<TokenLogprob> = if resp.tokens.is_empty() {
            split_reply(&resp.text)
                .into_iter()
                .map(|t| TokenLogprob::new(t, 1.0))
                .collect()
        } else {
            resp.tokens
        };
        if new_tokens.is_empty() {
            // nothing generated in this stride, so it does not count as a trigger
            break;
        }
        events.push(event);
        for t in &new_tokens {
            let trimmed = t.token.trim();
            if !trimmed.is_empty() {
                history.push(trimmed.to_string());
            }
        }
        text.push_str(&resp.text);
        tokens.extend(new_tokens);
        finish = resp.finish_reason;
        if finish != FinishReason::Length {
            break;
        }
    }
    Ok((
        GenerationResponse {
            text,
            tokens,
            finish_reason: finish,
        },
        events,
    ))
}
