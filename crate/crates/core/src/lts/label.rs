//! Labels and their canonical text form `GATE !v1 !v2`, with `i` for tau.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::value::{is_identifier, Bit, Pid, Prob, Step, Symbol, Tag, Value, ValueKind};

/// Text of the internal action.
pub const TAU_TEXT: &str = "i";

pub mod gates {
    pub const SYNC: &str = "SYNC";
    pub const RECEIVE_BLOCK_PROPOSAL: &str = "RECEIVE_BLOCK_PROPOSAL";
    pub const COMMIT_PROPOSED_BLOCK: &str = "COMMIT_PROPOSED_BLOCK";
    pub const COMMIT_EMPTY_BLOCK: &str = "COMMIT_EMPTY_BLOCK";
    pub const SET_BIT: &str = "SET_BIT";
    pub const P_ZERO: &str = "P_ZERO";
    pub const P_ONE: &str = "P_ONE";
    pub const P_IN: &str = "P_IN";
    pub const P_OUT: &str = "P_OUT";
    pub const SELF_PROPAGATE: &str = "SELF_PROPAGATE";
    pub const PROPAGATE: &str = "PROPAGATE";
    pub const TALLY: &str = "TALLY";

    /// Every gate of the consensus model.
    pub const MODEL_ALPHABET: [&str; 12] = [
        SYNC,
        RECEIVE_BLOCK_PROPOSAL,
        COMMIT_PROPOSED_BLOCK,
        COMMIT_EMPTY_BLOCK,
        SET_BIT,
        P_ZERO,
        P_ONE,
        P_IN,
        P_OUT,
        SELF_PROPAGATE,
        PROPAGATE,
        TALLY,
    ];
}

/// Offer profile of a model gate, used to type offers when parsing.
pub fn gate_signature(gate: &str) -> Option<&'static [ValueKind]> {
    use ValueKind::*;
    Some(match gate {
        gates::SYNC => &[Tag],
        gates::RECEIVE_BLOCK_PROPOSAL => &[Bit],
        gates::COMMIT_PROPOSED_BLOCK | gates::COMMIT_EMPTY_BLOCK => &[],
        gates::SET_BIT => &[Pid, Step, Bit],
        gates::P_ZERO | gates::P_ONE | gates::P_IN | gates::P_OUT => &[Pid, Prob],
        gates::SELF_PROPAGATE | gates::PROPAGATE => &[Pid, Bit],
        gates::TALLY => &[Pid, Count, Count],
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Tau,
    Visible { gate: Arc<str>, offers: Vec<Value> },
}

impl Label {
    pub fn new(gate: impl Into<Arc<str>>, offers: Vec<Value>) -> Label {
        Label::Visible {
            gate: gate.into(),
            offers,
        }
    }

    pub fn is_tau(&self) -> bool {
        matches!(self, Label::Tau)
    }

    pub fn gate(&self) -> Option<&str> {
        match self {
            Label::Tau => None,
            Label::Visible { gate, .. } => Some(gate),
        }
    }

    pub fn offers(&self) -> &[Value] {
        match self {
            Label::Tau => &[],
            Label::Visible { offers, .. } => offers,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Tau => f.write_str(TAU_TEXT),
            Label::Visible { gate, offers } => {
                f.write_str(gate)?;
                for v in offers {
                    write!(f, " !{v}")?;
                }
                Ok(())
            }
        }
    }
}

pub fn format_label(l: &Label) -> String {
    l.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("label `{text}`: {reason} at byte {offset}")]
pub struct LabelParseError {
    pub text: String,
    pub offset: usize,
    pub reason: String,
}

/// Parses canonical label text. Offers of model gates are typed by the gate
/// profile; other offers are typed by their shape (integer, fraction, name).
pub fn parse_label(text: &str) -> Result<Label, LabelParseError> {
    let err = |offset: usize, reason: &str| LabelParseError {
        text: text.to_string(),
        offset,
        reason: reason.to_string(),
    };
    if text == TAU_TEXT {
        return Ok(Label::Tau);
    }
    let gate_end = text.find(' ').unwrap_or(text.len());
    let gate = &text[..gate_end];
    if !is_identifier(gate) {
        return Err(err(0, "expected a gate name"));
    }
    if gate == TAU_TEXT {
        return Err(err(0, "the internal action takes no offers"));
    }
    let signature = gate_signature(gate);
    let mut offers = Vec::new();
    let mut pos = gate_end;
    while pos < text.len() {
        if !text[pos..].starts_with(" !") {
            return Err(err(pos, "expected ` !` before an offer"));
        }
        let start = pos + 2;
        let end = text[start..].find(' ').map_or(text.len(), |i| start + i);
        let token = &text[start..end];
        if token.is_empty() {
            return Err(err(start, "empty offer"));
        }
        let kind = signature.and_then(|s| s.get(offers.len()).copied());
        let value = parse_offer(token, kind).map_err(|reason| err(start, &reason))?;
        offers.push(value);
        pos = end;
    }
    Ok(Label::new(gate, offers))
}

fn parse_offer(token: &str, kind: Option<ValueKind>) -> Result<Value, String> {
    if is_identifier(token) {
        return match (kind, token) {
            (Some(ValueKind::Tag), "BEGIN") => Ok(Value::Tag(Tag::Begin)),
            (Some(ValueKind::Tag), "END") => Ok(Value::Tag(Tag::End)),
            _ => Symbol::new(token)
                .map(Value::Abstract)
                .map_err(|e| e.to_string()),
        };
    }
    let is_int = token.bytes().all(|b| b.is_ascii_digit());
    let is_frac = !is_int && token.bytes().all(|b| b.is_ascii_digit() || b == b'.');
    if !is_int && !is_frac {
        return Err(format!("malformed offer `{token}`"));
    }
    let int = || {
        token
            .parse::<u32>()
            .map_err(|_| format!("integer `{token}` out of range"))
    };
    let small = || {
        int().and_then(|v| u8::try_from(v).map_err(|_| format!("integer `{token}` out of range")))
    };
    let res = match kind {
        Some(ValueKind::Prob) | None if is_frac => token.parse::<Prob>().map(Value::Prob),
        Some(ValueKind::Prob) => token.parse::<Prob>().map(Value::Prob),
        _ if is_frac => return Err(format!("unexpected fraction `{token}`")),
        Some(ValueKind::Bit) => Bit::new(small()?).map(Value::Bit),
        Some(ValueKind::Pid) => Pid::new(int()?).map(Value::Pid),
        Some(ValueKind::Step) => Step::new(small()?).map(Value::Step),
        Some(ValueKind::Count) | None => Ok(Value::Count(small()?)),
        Some(ValueKind::Tag) | Some(ValueKind::Abstract) => {
            return Err(format!("unexpected number `{token}`"))
        }
    };
    res.map_err(|e| e.to_string())
}
