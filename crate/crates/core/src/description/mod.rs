//! Natural-language trend descriptions, either from a chat-completion
//! endpoint or from a deterministic piecewise-linear describer.

mod llm;
mod rephrase;
mod rules;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::llm::{ChatMessage, Completion, LlmClient, LlmConfig, TokenUsage, API_KEY_ENV};
pub use self::rephrase::{rephrase_rules, REPHRASE_VARIANTS};
pub use self::rules::{describe_rules, segment, Direction, Segment, RULES_MODEL_ID};
use crate::trend_summary::{round_one_decimal, TrendSummary};

#[derive(Debug, Error)]
pub enum DescriptionError {
    #[error("prompt template must contain `{{values}}` exactly once (found {0})")]
    TemplateSlotMissing(usize),
    #[error("summary needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("non-finite summary value")]
    NonFinite,
    #[error("endpoint rejected credentials (HTTP {0})")]
    AuthError(u16),
    #[error("still rate limited after {0} attempts")]
    RateLimited(u32),
    #[error("endpoint failed after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("completion was empty")]
    EmptyCompletion,
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("transcript log: {0}")]
    Transcript(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Llm,
    Rules,
    LlmRephrased,
    RulesRephrased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendDescription {
    pub text: String,
    pub generator: Generator,
    pub model_id: String,
    pub summary_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub text: String,
    pub version: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>, version: impl Into<String>) -> Result<Self, DescriptionError> {
        let text = text.into();
        let slots = text.matches("{values}").count();
        if slots != 1 {
            return Err(DescriptionError::TemplateSlotMissing(slots));
        }
        Ok(Self {
            text,
            version: version.into(),
        })
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            text: "The following is the smoothed trend of a time series, sampled at 25 evenly spaced points: \
                   {values}. Describe the overall trend of this time series in plain language. \
                   Do not repeat the numbers."
                .to_string(),
            version: "trend-v1".to_string(),
        }
    }
}

/// `[a, b, …]` with one decimal per value.
pub fn format_values(values: &[f64]) -> String {
    let body: Vec<String> = values.iter().map(|v| format!("{:.1}", round_one_decimal(*v))).collect();
    format!("[{}]", body.join(", "))
}

pub fn build_prompt(summary: &TrendSummary, template: &PromptTemplate) -> Result<String, DescriptionError> {
    render(&summary.values, template)
}

pub(crate) fn render(values: &[f64], template: &PromptTemplate) -> Result<String, DescriptionError> {
    let slots = template.text.matches("{values}").count();
    if slots != 1 {
        return Err(DescriptionError::TemplateSlotMissing(slots));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DescriptionError::NonFinite);
    }
    Ok(template.text.replace("{values}", &format_values(values)))
}

/// Asks the endpoint for a description of `summary`.
pub fn describe_llm(
    client: &LlmClient,
    summary: &TrendSummary,
    template: &PromptTemplate,
) -> Result<TrendDescription, DescriptionError> {
    let prompt = build_prompt(summary, template)?;
    let completion = client.chat(&[ChatMessage::user(prompt)])?;
    Ok(TrendDescription {
        text: completion.text,
        generator: Generator::Llm,
        model_id: completion.model_id,
        summary_id: summary.window_id.clone(),
    })
}

pub const REPHRASE_INSTRUCTION: &str = "Rephrase the following description of a time-series trend. \
Keep every factual claim, change only the wording, and answer with a single paragraph.";

/// Paraphrase through the endpoint. `variant` is passed along so repeated
/// calls for the same description ask for different wordings.
pub fn rephrase_llm(
    client: &LlmClient,
    description: &TrendDescription,
    variant: usize,
) -> Result<TrendDescription, DescriptionError> {
    let prompt = format!(
        "{REPHRASE_INSTRUCTION} Write version {} of {}.\n\n{}",
        variant + 1,
        REPHRASE_VARIANTS,
        description.text
    );
    let completion = client.chat(&[ChatMessage::user(prompt)])?;
    Ok(TrendDescription {
        text: completion.text,
        generator: Generator::LlmRephrased,
        model_id: completion.model_id,
        summary_id: description.summary_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(values: Vec<f64>) -> TrendSummary {
        TrendSummary {
            window_id: "w".into(),
            stride: 1,
            kernel_size: 1,
            values,
        }
    }

    #[test]
    fn prompt_rendering() {
        let t = PromptTemplate::new("Trend: {values}", "t").unwrap();
        assert_eq!(build_prompt(&summary(vec![1.0, 2.0]), &t).unwrap(), "Trend: [1.0, 2.0]");
        assert_eq!(build_prompt(&summary(vec![-0.0, -0.04]), &t).unwrap(), "Trend: [0.0, 0.0]");
        let p = build_prompt(&summary((0..25).map(|i| i as f64 * 0.1).collect()), &PromptTemplate::default()).unwrap();
        let inner = &p[p.find('[').unwrap()..=p.find(']').unwrap()];
        assert_eq!(inner.matches(',').count(), 24);
    }

    #[test]
    fn template_slot_checked() {
        assert!(matches!(
            PromptTemplate::new("no slot", "x"),
            Err(DescriptionError::TemplateSlotMissing(0))
        ));
        assert!(matches!(
            PromptTemplate::new("{values} {values}", "x"),
            Err(DescriptionError::TemplateSlotMissing(2))
        ));
        let bad = PromptTemplate {
            text: "nothing".into(),
            version: "x".into(),
        };
        assert!(build_prompt(&summary(vec![1.0]), &bad).is_err());
        assert_eq!(PromptTemplate::default().text.matches("{values}").count(), 1);
    }

    #[test]
    fn distinct_summaries_give_distinct_prompts() {
        let t = PromptTemplate::default();
        let a = build_prompt(&summary(vec![1.0, 2.0, 3.0]), &t).unwrap();
        let b = build_prompt(&summary(vec![1.0, 2.0, 3.1]), &t).unwrap();
        let c = build_prompt(&summary(vec![1.0, 2.0]), &t).unwrap();
        assert!(a != b && a != c && b != c);
    }
}
