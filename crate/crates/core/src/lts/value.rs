//! Typed offer values carried by labels and held in process variables.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest node identifier a [`Pid`] may hold.
pub const MAX_PID: u8 = 64;

/// Number of probability ticks in 1.0.
pub const PROB_SCALE: u16 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("bit value {0} is not 0 or 1")]
    Bit(u8),
    #[error("node identifier {0} is outside 1..={MAX_PID}")]
    Pid(u32),
    #[error("step value {0} is not 0, 1 or 2")]
    Step(u8),
    #[error("probability of {0} ticks exceeds {PROB_SCALE}")]
    ProbRange(u32),
    #[error("malformed probability `{0}`")]
    ProbSyntax(String),
    #[error("`{0}` is not a valid symbol")]
    Symbol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bit(u8);

impl Bit {
    pub const ZERO: Bit = Bit(0);
    pub const ONE: Bit = Bit(1);

    pub fn new(v: u8) -> Result<Self, ValueError> {
        match v {
            0 | 1 => Ok(Bit(v)),
            _ => Err(ValueError::Bit(v)),
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pid(u8);

impl Pid {
    pub fn new(v: u32) -> Result<Self, ValueError> {
        if (1..=MAX_PID as u32).contains(&v) {
            Ok(Pid(v as u8))
        } else {
            Err(ValueError::Pid(v))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

/// Step of the inner voting loop, i.e. the step number modulo 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Step(u8);

impl Step {
    pub const ZERO: Step = Step(0);
    pub const ONE: Step = Step(1);
    pub const TWO: Step = Step(2);
    pub const ALL: [Step; 3] = [Step(0), Step(1), Step(2)];

    pub fn new(v: u8) -> Result<Self, ValueError> {
        if v <= 2 {
            Ok(Step(v))
        } else {
            Err(ValueError::Step(v))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn next(self) -> Step {
        Step((self.0 + 1) % 3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Begin,
    End,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Begin => "BEGIN",
            Tag::End => "END",
        }
    }
}

/// Probability in fixed point, ticks of 10^-4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prob(u16);

impl Prob {
    pub const HALF: Prob = Prob(5_000);

    pub fn from_ticks(ticks: u32) -> Result<Self, ValueError> {
        if ticks <= PROB_SCALE as u32 {
            Ok(Prob(ticks as u16))
        } else {
            Err(ValueError::ProbRange(ticks))
        }
    }

    /// Const counterpart of [`Prob::from_ticks`].
    pub const fn from_ticks_const(ticks: u16) -> Option<Prob> {
        if ticks <= PROB_SCALE {
            Some(Prob(ticks))
        } else {
            None
        }
    }

    pub fn ticks(self) -> u16 {
        self.0
    }

    pub fn one_minus(self) -> Prob {
        Prob(PROB_SCALE - self.0)
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.0 / PROB_SCALE;
        let frac = format!("{:04}", self.0 % PROB_SCALE);
        let frac = frac.trim_end_matches('0');
        let frac = if frac.is_empty() { "0" } else { frac };
        write!(f, "{int}.{frac}")
    }
}

impl FromStr for Prob {
    type Err = ValueError;

    /// Accepts `0`, `1`, and decimal fractions with at most four digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ValueError::ProbSyntax(s.to_string());
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int.is_empty()
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > 4
            || (s.contains('.') && frac.is_empty())
        {
            return Err(bad());
        }
        let int: u32 = int.parse().map_err(|_| bad())?;
        let mut frac_ticks = 0u32;
        for (i, b) in frac.bytes().enumerate() {
            frac_ticks += (b - b'0') as u32 * 10u32.pow(3 - i as u32);
        }
        let ticks = int
            .checked_mul(PROB_SCALE as u32)
            .and_then(|t| t.checked_add(frac_ticks))
            .ok_or_else(bad)?;
        Prob::from_ticks(ticks)
    }
}

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Prob {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An abstract constant such as the `X` used when slicing away data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(name: &str) -> Result<Self, ValueError> {
        if is_identifier(name) {
            Ok(Symbol(Arc::from(name)))
        } else {
            Err(ValueError::Symbol(name.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut bytes = s.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_alphabetic() || b == b'_' => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Bit(Bit),
    Pid(Pid),
    Step(Step),
    Tag(Tag),
    Count(u8),
    Prob(Prob),
    Abstract(Symbol),
}

impl Value {
    pub fn bit(v: u8) -> Result<Value, ValueError> {
        Bit::new(v).map(Value::Bit)
    }

    pub fn pid(v: u32) -> Result<Value, ValueError> {
        Pid::new(v).map(Value::Pid)
    }

    pub fn step(v: u8) -> Result<Value, ValueError> {
        Step::new(v).map(Value::Step)
    }

    pub fn prob(s: &str) -> Result<Value, ValueError> {
        s.parse().map(Value::Prob)
    }

    pub fn symbol(name: &str) -> Result<Value, ValueError> {
        Symbol::new(name).map(Value::Abstract)
    }

    /// The canonical abstract constant `X`.
    pub fn x() -> Value {
        Value::Abstract(Symbol(Arc::from("X")))
    }

    /// Integer payload of the numeric variants.
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Bit(b) => Some(b.get() as i64),
            Value::Pid(p) => Some(p.get() as i64),
            Value::Step(s) => Some(s.get() as i64),
            Value::Count(c) => Some(*c as i64),
            Value::Prob(p) => Some(p.ticks() as i64),
            Value::Tag(_) | Value::Abstract(_) => None,
        }
    }

    /// Rebuilds a value of the same variant from an integer payload.
    pub fn with_int(&self, v: i64) -> Option<Value> {
        let v32 = u32::try_from(v).ok()?;
        match self {
            Value::Bit(_) => Bit::new(u8::try_from(v32).ok()?).ok().map(Value::Bit),
            Value::Pid(_) => Pid::new(v32).ok().map(Value::Pid),
            Value::Step(_) => Step::new(u8::try_from(v32).ok()?).ok().map(Value::Step),
            Value::Count(_) => u8::try_from(v32).ok().map(Value::Count),
            Value::Prob(_) => Prob::from_ticks(v32).ok().map(Value::Prob),
            Value::Tag(_) | Value::Abstract(_) => None,
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Bit(_) => ValueKind::Bit,
            Value::Pid(_) => ValueKind::Pid,
            Value::Step(_) => ValueKind::Step,
            Value::Tag(_) => ValueKind::Tag,
            Value::Count(_) => ValueKind::Count,
            Value::Prob(_) => ValueKind::Prob,
            Value::Abstract(_) => ValueKind::Abstract,
        }
    }
}

impl From<Bit> for Value {
    fn from(b: Bit) -> Self {
        Value::Bit(b)
    }
}

impl From<Pid> for Value {
    fn from(p: Pid) -> Self {
        Value::Pid(p)
    }
}

impl From<Step> for Value {
    fn from(s: Step) -> Self {
        Value::Step(s)
    }
}

impl From<Tag> for Value {
    fn from(t: Tag) -> Self {
        Value::Tag(t)
    }
}

impl From<Prob> for Value {
    fn from(p: Prob) -> Self {
        Value::Prob(p)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bit(b) => write!(f, "{}", b.get()),
            Value::Pid(p) => write!(f, "{}", p.get()),
            Value::Step(s) => write!(f, "{}", s.get()),
            Value::Tag(t) => f.write_str(t.as_str()),
            Value::Count(c) => write!(f, "{c}"),
            Value::Prob(p) => write!(f, "{p}"),
            Value::Abstract(s) => f.write_str(s.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Bit,
    Pid,
    Step,
    Tag,
    Count,
    Prob,
    Abstract,
}
