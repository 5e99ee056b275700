//! Aldebaran `.aut` text format.

use std::fmt::Write as _;

use thiserror::Error;

use super::label::{parse_label, LabelParseError, TAU_TEXT};
use super::{Lts, LtsError};

#[derive(Debug, Error)]
pub enum AutError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: {source}")]
    Label {
        line: usize,
        #[source]
        source: LabelParseError,
    },
    #[error("header declares {declared} transitions but {found} were read")]
    Arity { declared: usize, found: usize },
    #[error(transparent)]
    Range(#[from] LtsError),
    #[error("input is not valid UTF-8")]
    Encoding,
}

/// Serializes `l` as `des (I, T, S)` followed by one `(src, "LABEL", dst)`
/// line per transition in storage order.
pub fn write_aut(l: &Lts) -> Vec<u8> {
    let texts: Vec<String> = l.labels().iter().map(|x| x.to_string()).collect();
    let mut out = String::with_capacity(32 + 24 * l.transitions().len());
    let _ = writeln!(
        out,
        "des ({}, {}, {})",
        l.initial(),
        l.transitions().len(),
        l.states()
    );
    for t in l.transitions() {
        let _ = writeln!(out, "({}, \"{}\", {})", t.src, texts[t.label], t.dst);
    }
    out.into_bytes()
}

pub fn read_aut(bytes: &[u8]) -> Result<Lts, AutError> {
    let text = std::str::from_utf8(bytes).map_err(|_| AutError::Encoding)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(AutError::Syntax {
        line: 1,
        reason: "missing header".into(),
    })?;
    let (initial, declared, states) = parse_header(header.trim()).ok_or(AutError::Syntax {
        line: 1,
        reason: format!("malformed header `{header}`"),
    })?;
    let mut transitions = Vec::with_capacity(declared);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let syntax = |reason: &str| AutError::Syntax {
            line: line_no,
            reason: reason.to_string(),
        };
        let body = line
            .trim()
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| syntax("expected `(src, label, dst)`"))?;
        let (src, rest) = body
            .split_once(',')
            .ok_or_else(|| syntax("missing label"))?;
        let (label, dst) = rest
            .rsplit_once(',')
            .ok_or_else(|| syntax("missing destination"))?;
        let src: usize = src.trim().parse().map_err(|_| syntax("bad source state"))?;
        let dst: usize = dst
            .trim()
            .parse()
            .map_err(|_| syntax("bad destination state"))?;
        let label = label.trim();
        let label = match label.strip_prefix('"').and_then(|s| s.strip_suffix('"')) {
            Some(inner) => inner,
            None if label == TAU_TEXT || !label.contains('"') => label,
            None => return Err(syntax("unterminated label quote")),
        };
        let label = parse_label(label).map_err(|source| AutError::Label {
            line: line_no,
            source,
        })?;
        transitions.push((src, label, dst));
    }
    if transitions.len() != declared {
        return Err(AutError::Arity {
            declared,
            found: transitions.len(),
        });
    }
    Ok(Lts::new(states, initial, transitions)?)
}

fn parse_header(h: &str) -> Option<(usize, usize, usize)> {
    let inner = h
        .strip_prefix("des")?
        .trim()
        .strip_prefix('(')?
        .strip_suffix(')')?;
    let mut parts = inner.split(',').map(|p| p.trim().parse::<usize>());
    let res = (
        parts.next()?.ok()?,
        parts.next()?.ok()?,
        parts.next()?.ok()?,
    );
    parts.next().is_none().then_some(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lts::{normalize, Label};

    #[test]
    fn smallest_nonempty_system() {
        let l = Lts::new(1, 0, [(0, Label::new("a", vec![]), 0)]).unwrap();
        assert_eq!(write_aut(&l), b"des (0, 1, 1)\n(0, \"a\", 0)\n");
    }

    #[test]
    fn empty_relation_is_single_deadlock() {
        let l = read_aut(b"des (0, 0, 1)").unwrap();
        assert_eq!(l.states(), 1);
        assert!(l.is_deadlock(0));
    }

    #[test]
    fn reads_bare_tau_and_round_trips() {
        let text =
            b"des (0, 3, 3)\n(0, \"SYNC !BEGIN\", 1)\n(1, i, 2)\n(2, \"TALLY !1 !X !X\", 0)\n";
        let l = normalize(&read_aut(text).unwrap());
        assert_eq!(read_aut(&write_aut(&l)).unwrap(), l);
        assert!(String::from_utf8(write_aut(&l)).unwrap().contains("\"i\""));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            read_aut(b"des (0, 2, 1)\n(0, \"a\", 0)\n"),
            Err(AutError::Arity { .. })
        ));
        assert!(matches!(
            read_aut(b"des (0, 1, 1)\n(0, \"a\", 3)\n"),
            Err(AutError::Range(_))
        ));
        assert!(matches!(
            read_aut(b"dez (0, 0, 1)\n"),
            Err(AutError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            read_aut(b"des (0, 1, 1)\n(0, \"A !\", 0)\n"),
            Err(AutError::Label { line: 2, .. })
        ));
        assert!(matches!(
            read_aut(b"des (0, 1, 1)\n0, \"a\", 0\n"),
            Err(AutError::Syntax { line: 2, .. })
        ));
    }
}
