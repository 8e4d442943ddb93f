use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Specialty, SpecialtyId, ANSWER_INSTRUCTION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Add,
    Sub,
    Mul,
}

impl Op {
    const ALL: [Op; 3] = [Op::Add, Op::Sub, Op::Mul];

    fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
        }
    }
}

/// Exact decimal: `mantissa * 10^-scale`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decimal {
    pub mantissa: i64,
    pub scale: u32,
}

impl Decimal {
    pub fn new(mantissa: i64, scale: u32) -> Self {
        Decimal { mantissa, scale }
    }

    fn rescale(self, scale: u32) -> i64 {
        self.mantissa * 10i64.pow(scale - self.scale)
    }

    fn add(self, other: Decimal) -> Decimal {
        let scale = self.scale.max(other.scale);
        Decimal::new(self.rescale(scale) + other.rescale(scale), scale)
    }

    fn neg(self) -> Decimal {
        Decimal::new(-self.mantissa, self.scale)
    }

    fn mul(self, other: Decimal) -> Decimal {
        Decimal::new(self.mantissa * other.mantissa, self.scale + other.scale)
    }

    /// Drops trailing fractional zeros.
    pub fn normalized(mut self) -> Decimal {
        while self.scale > 0 && self.mantissa % 10 == 0 {
            self.mantissa /= 10;
            self.scale -= 1;
        }
        if self.mantissa == 0 {
            self.scale = 0;
        }
        self
    }

    /// Parses `[+-]digits[.digits]`.
    pub fn parse(s: &str) -> Option<Decimal> {
        let (negative, body) = match s.as_bytes().first()? {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (int, frac) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return None;
        }
        // Keep well inside i64: answers here never need more than 17 digits.
        if int.len() + frac.len() > 17 {
            return None;
        }
        let digits: String = int.chars().chain(frac.chars()).collect();
        let mantissa: i64 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
        let d = Decimal::new(if negative { -mantissa } else { mantissa }, frac.len() as u32);
        Some(d.normalized())
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.normalized();
        let sign = if d.mantissa < 0 { "-" } else { "" };
        let abs = d.mantissa.unsigned_abs();
        if d.scale == 0 {
            return write!(f, "{sign}{abs}");
        }
        let pow = 10u64.pow(d.scale);
        write!(
            f,
            "{sign}{}.{:0width$}",
            abs / pow,
            abs % pow,
            width = d.scale as usize
        )
    }
}

/// A concrete task instance, before rendering.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    BaseConversion {
        value: u64,
        from_base: u32,
        to_base: u32,
    },
    BasicArithmetic {
        operands: Vec<i64>,
        ops: Vec<Op>,
    },
    FractionSimplification {
        numerator: u64,
        denominator: u64,
    },
    DecimalArithmetic {
        operands: Vec<Decimal>,
        ops: Vec<Op>,
    },
    BinaryMatrix {
        size: usize,
        cells: Vec<u8>,
    },
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub(crate) fn to_base(mut value: u64, base: u32) -> String {
    if value == 0 {
        return "0".into();
    }
    let mut digits = Vec::new();
    while value > 0 {
        let d = (value % base as u64) as u32;
        digits.push(char::from_digit(d, base).expect("digit below base"));
        value /= base as u64;
    }
    digits.iter().rev().collect()
}

/// Evaluates with `*` binding tighter than `+` and `-`, left to right.
fn evaluate<T: Copy>(
    operands: &[T],
    ops: &[Op],
    zero: T,
    add: impl Fn(T, T) -> T,
    neg: impl Fn(T) -> T,
    mul: impl Fn(T, T) -> T,
) -> T {
    let mut total = zero;
    let mut term = operands[0];
    let mut negative = false;
    for (&op, &x) in ops.iter().zip(&operands[1..]) {
        match op {
            Op::Mul => term = mul(term, x),
            Op::Add | Op::Sub => {
                total = add(total, if negative { neg(term) } else { term });
                negative = op == Op::Sub;
                term = x;
            }
        }
    }
    add(total, if negative { neg(term) } else { term })
}

fn render_expression<T: fmt::Display>(operands: &[T], ops: &[Op]) -> String {
    let mut s = operands[0].to_string();
    for (op, x) in ops.iter().zip(&operands[1..]) {
        s.push_str(&format!(" {} {}", op.symbol(), x));
    }
    s
}

fn nearest_zero_distances(size: usize, cells: &[u8]) -> Vec<usize> {
    (0..size * size)
        .map(|i| {
            let (r, c) = (i / size, i % size);
            (0..size * size)
                .filter(|&j| cells[j] == 0)
                .map(|j| r.abs_diff(j / size) + c.abs_diff(j % size))
                .min()
                .expect("matrix has at least one zero")
        })
        .collect()
}

fn render_rows<T: fmt::Display>(size: usize, cells: &[T]) -> String {
    cells
        .chunks(size)
        .map(|row| row.iter().map(ToString::to_string).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Task {
    pub fn specialty_id(&self) -> SpecialtyId {
        match self {
            Task::BaseConversion { .. } => SpecialtyId::BaseConversion,
            Task::BasicArithmetic { .. } => SpecialtyId::BasicArithmetic,
            Task::FractionSimplification { .. } => SpecialtyId::FractionSimplification,
            Task::DecimalArithmetic { .. } => SpecialtyId::DecimalArithmetic,
            Task::BinaryMatrix { .. } => SpecialtyId::BinaryMatrix,
        }
    }

    pub fn sample<R: Rng>(specialty: Specialty, rng: &mut R) -> Task {
        let d = specialty.difficulty();
        match specialty.id() {
            SpecialtyId::BaseConversion => {
                const BASES: [u32; 4] = [2, 8, 10, 16];
                let (max, from_base, to_base) = match d {
                    1 => (15, 10, 2),
                    2 => (255, 10, [2, 8, 16][rng.gen_range(0..3)]),
                    _ => {
                        let from = BASES[rng.gen_range(0..4)];
                        let to = loop {
                            let b = BASES[rng.gen_range(0..4)];
                            if b != from {
                                break b;
                            }
                        };
                        (4095, from, to)
                    }
                };
                Task::BaseConversion {
                    value: rng.gen_range(2..=max),
                    from_base,
                    to_base,
                }
            }
            SpecialtyId::BasicArithmetic => {
                let n = d as usize;
                Task::BasicArithmetic {
                    operands: (0..n).map(|_| rng.gen_range(0..=9)).collect(),
                    ops: (1..n).map(|_| Op::ALL[rng.gen_range(0..3)]).collect(),
                }
            }
            SpecialtyId::FractionSimplification => {
                let (max_den, max_factor) = match d {
                    1 => (6, 4),
                    2 => (12, 9),
                    _ => (20, 15),
                };
                let denominator = rng.gen_range(2..=max_den);
                let numerator = loop {
                    let p = rng.gen_range(1..denominator);
                    if gcd(p, denominator) == 1 {
                        break p;
                    }
                };
                let k = rng.gen_range(2..=max_factor);
                Task::FractionSimplification {
                    numerator: numerator * k,
                    denominator: denominator * k,
                }
            }
            SpecialtyId::DecimalArithmetic => {
                let n = d as usize;
                Task::DecimalArithmetic {
                    operands: (0..n).map(|_| Decimal::new(rng.gen_range(1..=99), 1)).collect(),
                    ops: (1..n).map(|_| Op::ALL[rng.gen_range(0..3)]).collect(),
                }
            }
            SpecialtyId::BinaryMatrix => {
                let size = d as usize;
                let mut cells: Vec<u8> = (0..size * size).map(|_| rng.gen_range(0..=1)).collect();
                if cells.iter().all(|&c| c == 1) {
                    let i = rng.gen_range(0..cells.len());
                    cells[i] = 0;
                }
                Task::BinaryMatrix { size, cells }
            }
        }
    }

    fn body(&self) -> String {
        match self {
            Task::BaseConversion {
                value,
                from_base,
                to_base,
            } => format!(
                "Convert the base-{from_base} number {} to base-{to_base}.",
                self::to_base(*value, *from_base)
            ),
            Task::BasicArithmetic { operands, ops } => {
                format!("Compute {}.", render_expression(operands, ops))
            }
            Task::FractionSimplification {
                numerator,
                denominator,
            } => format!("Simplify the fraction {numerator}/{denominator} to lowest terms."),
            Task::DecimalArithmetic { operands, ops } => {
                format!("Compute {}.", render_expression(operands, ops))
            }
            Task::BinaryMatrix { size, cells } => format!(
                "Give the distance from each cell to the nearest 0.\n{}",
                render_rows(*size, cells)
            ),
        }
    }

    /// Instruction first, task last: the task text sits right before the completion.
    pub fn prompt(&self) -> String {
        format!("{ANSWER_INSTRUCTION}\n{}\n", self.body())
    }

    pub fn answer(&self) -> String {
        match self {
            Task::BaseConversion { value, to_base: b, .. } => to_base(*value, *b),
            Task::BasicArithmetic { operands, ops } => {
                evaluate(operands, ops, 0, |a, b| a + b, |a| -a, |a, b| a * b).to_string()
            }
            Task::FractionSimplification {
                numerator,
                denominator,
            } => {
                let g = gcd(*numerator, *denominator);
                format!("{}/{}", numerator / g, denominator / g)
            }
            Task::DecimalArithmetic { operands, ops } => evaluate(
                operands,
                ops,
                Decimal::new(0, 0),
                Decimal::add,
                Decimal::neg,
                Decimal::mul,
            )
            .to_string(),
            Task::BinaryMatrix { size, cells } => {
                render_rows(*size, &nearest_zero_distances(*size, cells))
            }
        }
    }
}
