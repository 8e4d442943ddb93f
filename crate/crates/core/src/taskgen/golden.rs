//! Frozen verifier cases. The fixture is produced by [`build_golden_cases`]; the
//! expected scores come from how each completion was constructed (truth wrapped
//! in various legal ways scores 1, corruptions and format violations score 0),
//! never from running the verifier.

use serde::{Deserialize, Serialize};

use super::{corrupt_last_digit, generate, wrap_answer, Question, Specialty, SpecialtyId};
use crate::error::Result;

pub const GOLDEN_FIXTURE: &str = include_str!("../../fixtures/golden_suite.jsonl");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenCase {
    pub specialty: SpecialtyId,
    pub instance_seed: u64,
    pub prompt: String,
    pub ground_truth: String,
    pub completion: String,
    pub expected_score: f64,
}

impl GoldenCase {
    pub fn question(&self) -> Question {
        generate(Specialty::from(self.specialty), self.instance_seed)
    }
}

fn equivalent_form(id: SpecialtyId, truth: &str) -> String {
    match id {
        SpecialtyId::BaseConversion => format!("0{}", truth.to_uppercase()),
        SpecialtyId::BasicArithmetic => match truth.strip_prefix('-') {
            Some(rest) => format!("-0{rest}"),
            None => format!("+0{truth}"),
        },
        SpecialtyId::DecimalArithmetic => {
            if truth.contains('.') {
                format!("{truth}0")
            } else {
                format!("{truth}.0")
            }
        }
        SpecialtyId::FractionSimplification => match truth.split_once('/') {
            Some((n, d)) => format!("{} / 0{}", 3 * n.parse::<i64>().unwrap_or(1), 3 * d.parse::<i64>().unwrap_or(1)),
            None => truth.to_string(),
        },
        SpecialtyId::BinaryMatrix => format!("\n{}\n", truth.replace(' ', "  ")),
    }
}

fn corrupted(truth: &str) -> String {
    corrupt_last_digit(truth).unwrap_or_else(|| format!("{truth}0"))
}

pub fn build_golden_cases() -> Vec<GoldenCase> {
    type Builder = fn(SpecialtyId, &str) -> (String, f64);
    let builders: [Builder; 11] = [
        |_, t| (wrap_answer(t), 1.0),
        |_, t| (format!("Let me think step by step. {}", wrap_answer(t)), 1.0),
        |_, t| (wrap_answer(&format!("  {t}  ")), 1.0),
        |_, t| (format!("{} no wait {}", wrap_answer("7x"), wrap_answer(t)), 1.0),
        |id, t| (wrap_answer(&equivalent_form(id, t)), 1.0),
        |_, t| (format!("{} done.", wrap_answer(t)), 1.0),
        |_, t| (wrap_answer(&corrupted(t)), 0.0),
        |_, t| (format!("The answer is {t}"), 0.0),
        |_, t| (format!("{} {}", wrap_answer(t), wrap_answer(&corrupted(t))), 0.0),
        |_, t| (format!("<answer>{t}"), 0.0),
        |_, _| (String::new(), 0.0),
    ];
    let mut cases = Vec::new();
    for id in SpecialtyId::ALL {
        for (i, build) in builders.iter().enumerate() {
            let instance_seed = 1000 + i as u64;
            let q = generate(Specialty::from(id), instance_seed);
            let (completion, expected_score) = build(id, &q.ground_truth);
            cases.push(GoldenCase {
                specialty: id,
                instance_seed,
                prompt: q.prompt,
                ground_truth: q.ground_truth,
                completion,
                expected_score,
            });
        }
    }
    cases
}

pub fn parse_golden_suite(text: &str) -> Result<Vec<GoldenCase>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// The frozen suite shipped with the crate.
pub fn golden_suite() -> Vec<GoldenCase> {
    parse_golden_suite(GOLDEN_FIXTURE).expect("embedded golden fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::verify;

    /// Regenerate with `SAPO_REGEN_GOLDEN=1 cargo test -p sapo-core golden`.
    #[test]
    fn fixture_matches_builder() {
        let built = build_golden_cases();
        if std::env::var_os("SAPO_REGEN_GOLDEN").is_some() {
            let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/golden_suite.jsonl");
            let text: String = built
                .iter()
                .map(|c| serde_json::to_string(c).unwrap() + "\n")
                .collect();
            std::fs::write(path, text).unwrap();
            return;
        }
        assert_eq!(golden_suite(), built);
    }

    #[test]
    fn suite_is_balanced_and_consistent() {
        let cases = golden_suite();
        assert!(cases.len() >= 50);
        for id in SpecialtyId::ALL {
            let ours: Vec<_> = cases.iter().filter(|c| c.specialty == id).collect();
            assert!(ours.iter().any(|c| c.expected_score == 1.0));
            assert!(ours.iter().any(|c| c.expected_score == 0.0));
        }
        for c in &cases {
            let q = c.question();
            assert_eq!(q.prompt, c.prompt);
            assert_eq!(q.ground_truth, c.ground_truth);
            assert_eq!(verify(&q, &c.completion).score, c.expected_score, "{c:?}");
        }
    }
}
