//! Procedurally generated, verifiable micro-tasks.
//!
//! Each [`SpecialtyId`] has a generator (seed to [`Task`]) and a rule-based
//! verifier. Generation is a pure function of `(specialty, instance_seed)`, so a
//! question can be shipped across the swarm as its seed plus rendered text and
//! regenerated anywhere.

mod golden;
mod tasks;
mod verify;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use golden::{build_golden_cases, golden_suite, parse_golden_suite, GoldenCase, GOLDEN_FIXTURE};
pub use tasks::{Decimal, Op, Task};
pub use verify::{canonicalize, corrupt_last_digit, extract_answer, wrap_answer};

/// Instruction every prompt carries; completions are graded on the last span.
pub const ANSWER_INSTRUCTION: &str = "Answer inside <answer>...</answer>.";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialtyId {
    BaseConversion,
    BasicArithmetic,
    FractionSimplification,
    DecimalArithmetic,
    BinaryMatrix,
}

impl SpecialtyId {
    pub const ALL: [SpecialtyId; 5] = [
        SpecialtyId::BaseConversion,
        SpecialtyId::BasicArithmetic,
        SpecialtyId::FractionSimplification,
        SpecialtyId::DecimalArithmetic,
        SpecialtyId::BinaryMatrix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpecialtyId::BaseConversion => "base_conversion",
            SpecialtyId::BasicArithmetic => "basic_arithmetic",
            SpecialtyId::FractionSimplification => "fraction_simplification",
            SpecialtyId::DecimalArithmetic => "decimal_arithmetic",
            SpecialtyId::BinaryMatrix => "binary_matrix",
        }
    }

    /// Inclusive difficulty bounds.
    ///
    /// base_conversion: value magnitude tier; basic/decimal arithmetic: operand
    /// count; fraction_simplification: magnitude tier; binary_matrix: side length.
    pub fn difficulty_bounds(self) -> (u8, u8) {
        match self {
            SpecialtyId::BaseConversion => (1, 3),
            SpecialtyId::BasicArithmetic => (2, 4),
            SpecialtyId::FractionSimplification => (1, 3),
            SpecialtyId::DecimalArithmetic => (2, 4),
            SpecialtyId::BinaryMatrix => (2, 4),
        }
    }

    pub fn default_difficulty(self) -> u8 {
        self.difficulty_bounds().0
    }

    /// Identifier written into question metadata and looked up by `verify`.
    pub fn verifier_id(self) -> String {
        format!("{}/v1", self.name())
    }

    pub fn from_verifier_id(id: &str) -> Option<SpecialtyId> {
        let name = id.strip_suffix("/v1")?;
        name.parse().ok()
    }
}

impl fmt::Display for SpecialtyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpecialtyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SpecialtyId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownSpecialty(s.to_string()))
    }
}

/// A specialty plus its difficulty knob, validated at construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "SpecialtyRepr", into = "SpecialtyRepr")]
pub struct Specialty {
    id: SpecialtyId,
    difficulty: u8,
}

#[derive(Serialize, Deserialize)]
struct SpecialtyRepr {
    id: SpecialtyId,
    difficulty: u8,
}

impl TryFrom<SpecialtyRepr> for Specialty {
    type Error = Error;

    fn try_from(r: SpecialtyRepr) -> Result<Self> {
        Specialty::new(r.id, r.difficulty)
    }
}

impl From<Specialty> for SpecialtyRepr {
    fn from(s: Specialty) -> Self {
        SpecialtyRepr {
            id: s.id,
            difficulty: s.difficulty,
        }
    }
}

impl Specialty {
    pub fn new(id: SpecialtyId, difficulty: u8) -> Result<Self> {
        let (min, max) = id.difficulty_bounds();
        if !(min..=max).contains(&difficulty) {
            return Err(Error::DifficultyOutOfRange {
                specialty: id.name(),
                difficulty,
                min,
                max,
            });
        }
        Ok(Specialty { id, difficulty })
    }

    pub fn id(&self) -> SpecialtyId {
        self.id
    }

    pub fn difficulty(&self) -> u8 {
        self.difficulty
    }

    pub fn all_default() -> Vec<Specialty> {
        SpecialtyId::ALL.into_iter().map(Specialty::from).collect()
    }
}

impl From<SpecialtyId> for Specialty {
    fn from(id: SpecialtyId) -> Self {
        Specialty {
            id,
            difficulty: id.default_difficulty(),
        }
    }
}

impl fmt::Display for Specialty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.id, self.difficulty)
    }
}

/// Accepts `name` (default difficulty) or `name:difficulty`.
impl FromStr for Specialty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None => Ok(s.parse::<SpecialtyId>()?.into()),
            Some((name, d)) => {
                let id: SpecialtyId = name.parse()?;
                let difficulty = d
                    .parse::<u8>()
                    .map_err(|_| Error::InvalidArgument(format!("bad difficulty in `{s}`")))?;
                Specialty::new(id, difficulty)
            }
        }
    }
}

/// How a completion for this question is parsed and checked.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionMetadata {
    pub verifier: String,
    /// Name of the answer span tag, without brackets.
    pub answer_tag: String,
}

impl QuestionMetadata {
    pub fn for_specialty(id: SpecialtyId) -> Self {
        QuestionMetadata {
            verifier: id.verifier_id(),
            answer_tag: "answer".into(),
        }
    }

    /// The verifier this metadata names, if it is one we implement.
    pub fn verifier(&self) -> Option<SpecialtyId> {
        if self.answer_tag != "answer" {
            return None;
        }
        SpecialtyId::from_verifier_id(&self.verifier)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub specialty: Specialty,
    pub prompt: String,
    pub ground_truth: String,
    pub instance_seed: u64,
    pub metadata: QuestionMetadata,
}

impl Question {
    pub fn from_task(specialty: Specialty, instance_seed: u64, task: &Task) -> Question {
        Question {
            specialty,
            prompt: task.prompt(),
            ground_truth: task.answer(),
            instance_seed,
            metadata: QuestionMetadata::for_specialty(specialty.id()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifierResult {
    pub score: f64,
    pub parsed_answer: Option<String>,
}

/// Deterministically generates the question identified by `(specialty, instance_seed)`.
pub fn generate(specialty: Specialty, instance_seed: u64) -> Question {
    let mut rng = seed::rng(instance_seed, &[specialty.id() as u64, specialty.difficulty() as u64]);
    let task = Task::sample(specialty, &mut rng);
    Question::from_task(specialty, instance_seed, &task)
}

/// Grades `completion` against the question's ground truth. Never fails: a
/// malformed completion is a policy failure and scores 0.
pub fn verify(question: &Question, completion: &str) -> VerifierResult {
    let Some(id) = question.metadata.verifier() else {
        return VerifierResult {
            score: 0.0,
            parsed_answer: None,
        };
    };
    let Some(parsed) = extract_answer(completion) else {
        return VerifierResult {
            score: 0.0,
            parsed_answer: None,
        };
    };
    let matched = canonicalize(id, &parsed) == canonicalize(id, &question.ground_truth);
    VerifierResult {
        score: if matched { 1.0 } else { 0.0 },
        parsed_answer: Some(parsed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specialty_names_round_trip() {
        for id in SpecialtyId::ALL {
            assert_eq!(id.name().parse::<SpecialtyId>().unwrap(), id);
            assert_eq!(SpecialtyId::from_verifier_id(&id.verifier_id()), Some(id));
        }
    }

    #[test]
    fn unknown_specialty_is_rejected_by_name() {
        let err = "arc_1d".parse::<SpecialtyId>().unwrap_err();
        assert!(err.to_string().contains("arc_1d"));
    }

    #[test]
    fn difficulty_bounds_are_enforced() {
        assert!(Specialty::new(SpecialtyId::BinaryMatrix, 1).is_err());
        assert!(Specialty::new(SpecialtyId::BinaryMatrix, 5).is_err());
        assert!(Specialty::new(SpecialtyId::BinaryMatrix, 4).is_ok());
        assert!(Specialty::new(SpecialtyId::BasicArithmetic, 5).is_err());
        let parsed: Specialty = "basic_arithmetic:3".parse().unwrap();
        assert_eq!(parsed.difficulty(), 3);
        assert!("basic_arithmetic:9".parse::<Specialty>().is_err());
    }

    #[test]
    fn specialty_json_rejects_bad_difficulty() {
        let ok: Specialty = serde_json::from_str(r#"{"id":"binary_matrix","difficulty":3}"#).unwrap();
        assert_eq!(ok.difficulty(), 3);
        assert!(serde_json::from_str::<Specialty>(r#"{"id":"binary_matrix","difficulty":9}"#).is_err());
        assert!(serde_json::from_str::<Specialty>(r#"{"id":"bf","difficulty":1}"#).is_err());
    }

    #[test]
    fn generated_prompts_carry_the_answer_instruction() {
        for specialty in Specialty::all_default() {
            for s in 0..20 {
                let q = generate(specialty, s);
                assert!(q.prompt.contains(ANSWER_INSTRUCTION), "{}", q.prompt);
            }
        }
    }

    #[test]
    fn fixed_arithmetic_instance_respects_precedence() {
        let task = Task::BasicArithmetic {
            operands: vec![3, 4, 2],
            ops: vec![Op::Add, Op::Mul],
        };
        let q = Question::from_task("basic_arithmetic:3".parse().unwrap(), 7, &task);
        assert_eq!(q.ground_truth, "11");
        assert!(q.prompt.contains("3 + 4 * 2"));
    }

    #[test]
    fn fixed_base_conversion_instance() {
        let task = Task::BaseConversion {
            value: 42,
            from_base: 10,
            to_base: 2,
        };
        assert_eq!(task.answer(), "101010");
    }

    #[test]
    fn fixed_fraction_instance() {
        let task = Task::FractionSimplification {
            numerator: 24,
            denominator: 36,
        };
        assert_eq!(task.answer(), "2/3");
    }

    #[test]
    fn verify_examples() {
        let task = Task::BasicArithmetic {
            operands: vec![3, 4, 2],
            ops: vec![Op::Add, Op::Mul],
        };
        let q = Question::from_task("basic_arithmetic:3".parse().unwrap(), 0, &task);
        let r = verify(&q, "I think <answer>11</answer>");
        assert_eq!(r.score, 1.0);
        assert_eq!(r.parsed_answer.as_deref(), Some("11"));
        assert_eq!(verify(&q, "<answer>10</answer>").score, 0.0);

        let b = Question::from_task(
            SpecialtyId::BaseConversion.into(),
            0,
            &Task::BaseConversion {
                value: 42,
                from_base: 10,
                to_base: 2,
            },
        );
        let r = verify(&b, "no tags at all 101010");
        assert_eq!(r.score, 0.0);
        assert!(r.parsed_answer.is_none());
    }

    #[test]
    fn verify_uses_the_last_span() {
        let q = Question::from_task(
            SpecialtyId::BasicArithmetic.into(),
            0,
            &Task::BasicArithmetic {
                operands: vec![5, 6],
                ops: vec![Op::Add],
            },
        );
        assert_eq!(verify(&q, "<answer>3</answer> wait <answer> 11 </answer>").score, 1.0);
        assert_eq!(verify(&q, "<answer>11</answer> no, <answer>12</answer>").score, 0.0);
    }

    #[test]
    fn unknown_verifier_scores_zero() {
        let mut q = generate(SpecialtyId::BasicArithmetic.into(), 3);
        let truth = wrap_answer(&q.ground_truth);
        assert_eq!(verify(&q, &truth).score, 1.0);
        q.metadata.verifier = "propositional_logic/v1".into();
        assert_eq!(verify(&q, &truth).score, 0.0);
    }
}
