use crate::datamodel::TraceEntry;
use crate::gateways::{FinishReason, GenerationResponse, LanguageModel, TokenLogprob};

use super::query::{low_confidence_spans, qry_llm, qry_masked, sentence_token_count};
use super::{llm_call, FlareParams, GenSettings, PromptBuilder, QueryStrategy, RetrievalError, Sources};

#[derive(Debug, Clone, PartialEq)]
pub struct FlareOutput {
    pub response: GenerationResponse,
    pub events: Vec<TraceEntry>,
    /// Sentences replaced by a retrieval-backed regeneration.
    pub regenerations: usize,
    /// Sentences accepted in total.
    pub sentences: usize,
}

fn text_of(tokens: &[TokenLogprob]) -> String {
    tokens.iter().map(|t| t.token.as_str()).collect()
}

/// Forward-looking active retrieval.
///
/// Each sentence is first generated with the current context. If its
/// lowest token probability is below `theta`, queries are formed from it,
/// retrieval refreshes the context slot and the sentence is generated
/// again; the regenerated sentence is kept. The first sentence starts with
/// only fixed (query-independent) context.
pub fn flare_generate(
    prompt: &dyn PromptBuilder,
    params: FlareParams,
    settings: GenSettings,
    llm: &dyn LanguageModel,
    sources: &Sources<'_>,
) -> Result<FlareOutput, RetrievalError> {
    params.validate()?;
    let mut ctx = sources.initial_context();
    let mut accepted: Vec<TokenLogprob> = Vec::new();
    let mut text = String::new();
    let mut events = Vec::new();
    let mut regenerations = 0;
    let mut sentences = 0;
    let mut finish = FinishReason::Stop;

    while accepted.len() < settings.max_tokens {
        let budget = settings.max_tokens - accepted.len();
        let draft = llm_call(llm, prompt(&ctx), &text, budget, true, &settings)?;
        if draft.tokens.is_empty() {
            break;
        }
        let n = sentence_token_count(&draft.tokens);
        let tentative = &draft.tokens[..n];
        let min_prob = tentative.iter().map(TokenLogprob::prob).fold(f64::INFINITY, f64::min);

        let (sentence, rest_len, reason) = if min_prob < params.theta {
            let sentence_text = text_of(tentative);
            let queries = match params.query_strategy {
                QueryStrategy::Masked => vec![qry_masked(&sentence_text, tentative, params.beta)],
                QueryStrategy::LlmGenerated => {
                    let spans = low_confidence_spans(tentative, params.beta);
                    let q = qry_llm(&sentence_text, tentative, &spans, params.beta, llm, &settings)?;
                    if q.is_empty() {
                        vec![qry_masked(&sentence_text, tentative, params.beta)]
                    } else {
                        q
                    }
                }
            };
            let (new_ctx, event) = sources.retrieve(&queries, accepted.len())?;
            ctx = new_ctx;
            events.push(event);
            regenerations += 1;
            let redo = llm_call(llm, prompt(&ctx), &text, budget, true, &settings)?;
            if redo.tokens.is_empty() {
                (tentative.to_vec(), draft.tokens.len() - n, draft.finish_reason)
            } else {
                let m = sentence_token_count(&redo.tokens);
                (redo.tokens[..m].to_vec(), redo.tokens.len() - m, redo.finish_reason)
            }
        } else {
            (tentative.to_vec(), draft.tokens.len() - n, draft.finish_reason)
        };

        sentences += 1;
        text.push_str(&text_of(&sentence));
        accepted.extend(sentence);
        finish = if rest_len == 0 { reason } else { FinishReason::Length };
        if rest_len == 0 && reason != FinishReason::Length {
            break;
        }
    }

    Ok(FlareOutput {
        response: GenerationResponse {
            text,
            tokens: accepted,
            finish_reason: finish,
        },
        events,
        regenerations,
        sentences,
    })
}
