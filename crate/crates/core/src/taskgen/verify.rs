use super::tasks::Decimal;
use super::{SpecialtyId, ANSWER_CLOSE, ANSWER_OPEN};

/// Trimmed contents of the last complete `<answer>...</answer>` span.
pub fn extract_answer(completion: &str) -> Option<String> {
    let close = completion.rfind(ANSWER_CLOSE)?;
    let open = completion[..close].rfind(ANSWER_OPEN)?;
    Some(completion[open + ANSWER_OPEN.len()..close].trim().to_string())
}

pub fn wrap_answer(answer: &str) -> String {
    format!("{ANSWER_OPEN}{answer}{ANSWER_CLOSE}")
}

fn strip_leading_zeros(s: &str) -> String {
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", s.strip_prefix('+').unwrap_or(s)),
    };
    let trimmed = body.trim_start_matches('0');
    if trimmed.is_empty() {
        if body.is_empty() {
            return s.to_string();
        }
        return "0".into();
    }
    format!("{sign}{trimmed}")
}

/// Specialty-specific normal form used on both sides of the comparison.
///
/// Fractions are compared in lowest terms, so `4/6` matches `2/3`.
fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn canonicalize(id: SpecialtyId, answer: &str) -> String {
    let folded = answer.trim().to_lowercase();
    match id {
        SpecialtyId::BaseConversion => strip_leading_zeros(&folded),
        SpecialtyId::BasicArithmetic => match folded.parse::<i64>() {
            Ok(v) => v.to_string(),
            Err(_) => folded,
        },
        SpecialtyId::DecimalArithmetic => match Decimal::parse(&folded) {
            Some(d) => d.to_string(),
            None => folded,
        },
        SpecialtyId::FractionSimplification => {
            let compact: String = folded.chars().filter(|c| !c.is_whitespace()).collect();
            match compact.split_once('/').map(|(n, d)| (n.parse::<i64>(), d.parse::<i64>())) {
                Some((Ok(n), Ok(d))) if d != 0 => {
                    let g = gcd(n.unsigned_abs(), d.unsigned_abs()).max(1) as i64;
                    let sign = if (n < 0) != (d < 0) && n != 0 { "-" } else { "" };
                    format!("{sign}{}/{}", (n / g).abs(), (d / g).abs())
                }
                _ => compact,
            }
        }
        SpecialtyId::BinaryMatrix => folded
            .lines()
            .map(|row| {
                row.split_whitespace()
                    .map(strip_leading_zeros)
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .filter(|row| !row.is_empty())
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

/// Increments the last decimal digit (9 wraps to 0). Returns `None` when the
/// text has no decimal digit.
pub fn corrupt_last_digit(answer: &str) -> Option<String> {
    let (idx, c) = answer.char_indices().rev().find(|(_, c)| c.is_ascii_digit())?;
    let next = char::from_digit((c.to_digit(10)? + 1) % 10, 10)?;
    let mut out = answer.to_string();
    out.replace_range(idx..idx + 1, &next.to_string());
    Some(out)
}
