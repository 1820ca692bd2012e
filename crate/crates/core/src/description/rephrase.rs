//! Offline paraphrasing by deterministic phrase rotation. Each variant index
//! picks one wording per phrase group, so variants `0..REPHRASE_VARIANTS` of
//! a rules-generated text are pairwise distinct.

use super::{Generator, TrendDescription};

pub const REPHRASE_VARIANTS: usize = 9;

const OPENERS: [&str; 3] = ["This series", "The sequence", "The plotted series"];
const CLOSERS: [&str; 3] = ["In summary,", "Taken together,", "All in all,"];

/// Synonym groups applied after the opener and closer, rotated by variant.
const SWAPS: [(&str, [&str; 3]); 8] = [
    ("steadily increases", ["climbs steadily", "grows consistently", "rises steadily"]),
    ("steadily decreases", ["falls steadily", "declines consistently", "drops steadily"]),
    ("rises", ["climbs", "goes up", "increases"]),
    ("declines", ["falls", "drops", "decreases"]),
    ("holds steady", ["stays level", "levels off", "remains stable"]),
    ("starts at around", ["begins near", "opens at roughly", "starts close to"]),
    ("ending at around", ["finishing near", "closing at roughly", "ending close to"]),
    ("to about", ["to roughly", "to around", "to approximately"]),
];

fn rotate(text: &str, variant: usize) -> String {
    let mut out = text.to_string();
    // these phrases open and close every rules-generated paragraph
    out = out.replacen("The time series", OPENERS[variant % 3], 1);
    out = out.replacen("Overall,", CLOSERS[(variant / 3) % 3], 1);
    for (k, (from, alternatives)) in SWAPS.iter().enumerate() {
        out = out.replace(from, alternatives[(variant + k) % 3]);
    }
    out
}

/// Paraphrase variant `variant` of `description`.
pub fn rephrase_rules(description: &TrendDescription, variant: usize) -> TrendDescription {
    let mut text = rotate(&description.text, variant);
    if text == description.text || !description.text.contains("The time series") {
        // foreign wording: fall back to a marked lead-in so variants still differ
        text = format!("{} {}", CLOSERS[variant % 3], lower_first(&description.text));
        if variant >= 3 {
            text = format!("{} {text}", ["Put simply:", "In short:", "Briefly:"][(variant / 3) % 3]);
        }
    }
    TrendDescription {
        text,
        generator: Generator::RulesRephrased,
        model_id: description.model_id.clone(),
        summary_id: description.summary_id.clone(),
    }
}

fn lower_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::description::describe_rules;
    use crate::trend_summary::TrendSummary;
    use std::collections::HashSet;

    fn desc(values: Vec<f64>) -> TrendDescription {
        describe_rules(&TrendSummary {
            window_id: "x".into(),
            stride: 1,
            kernel_size: 1,
            values,
        })
        .unwrap()
    }

    #[test]
    fn nine_distinct_variants() {
        let cases = [
            vec![0.0; 25],
            (0..25).map(|i| i as f64).collect(),
            (0..25).map(|i| -(i as f64)).collect(),
            (0..25).map(|i| (i as f64 - 12.0).abs()).collect::<Vec<_>>(),
        ];
        for values in cases {
            let d = desc(values);
            let texts: HashSet<String> = (0..REPHRASE_VARIANTS).map(|v| rephrase_rules(&d, v).text).collect();
            assert_eq!(texts.len(), REPHRASE_VARIANTS, "{}", d.text);
            assert!(!texts.contains(&d.text));
        }
    }

    #[test]
    fn deterministic_and_flagged() {
        let d = desc((0..25).map(|i| (i as f64).sqrt()).collect());
        let a = rephrase_rules(&d, 4);
        assert_eq!(a, rephrase_rules(&d, 4));
        assert_eq!(a.generator, Generator::RulesRephrased);
        assert_eq!(a.summary_id, d.summary_id);
    }

    #[test]
    fn foreign_text_still_varies() {
        let d = TrendDescription {
            text: "It goes up.".into(),
            generator: Generator::Llm,
            model_id: "m".into(),
            summary_id: "s".into(),
        };
        let texts: HashSet<String> = (0..REPHRASE_VARIANTS).map(|v| rephrase_rules(&d, v).text).collect();
        assert_eq!(texts.len(), REPHRASE_VARIANTS);
    }
}
