//! Event slicing: hiding and renaming labels by regular expressions over
//! their canonical text. Every pattern must match the whole label.

use fancy_regex::Regex;
use thiserror::Error;

use super::label::{parse_label, LabelParseError};
use super::{Label, Lts};

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("invalid pattern `{pattern}`: {reason}")]
    Pattern { pattern: String, reason: String },
    #[error("pattern `{pattern}` failed on `{text}`: {reason}")]
    Match {
        pattern: String,
        text: String,
        reason: String,
    },
    #[error("renaming `{from}` produced an invalid label: {source}")]
    Rename {
        from: String,
        #[source]
        source: LabelParseError,
    },
}

#[derive(Debug, Clone)]
struct Anchored {
    source: String,
    re: Regex,
}

impl Anchored {
    fn new(pattern: &str) -> Result<Self, SliceError> {
        let re = Regex::new(&format!("^(?:{pattern})$")).map_err(|e| SliceError::Pattern {
            pattern: pattern.to_string(),
            reason: e.to_string(),
        })?;
        Ok(Anchored {
            source: pattern.to_string(),
            re,
        })
    }

    fn is_match(&self, text: &str) -> Result<bool, SliceError> {
        self.re.is_match(text).map_err(|e| SliceError::Match {
            pattern: self.source.clone(),
            text: text.to_string(),
            reason: e.to_string(),
        })
    }
}

/// A set of full-match label patterns; matches when any member does.
#[derive(Debug, Clone, Default)]
pub struct LabelMatcher {
    patterns: Vec<Anchored>,
}

impl LabelMatcher {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, SliceError> {
        let patterns = patterns
            .iter()
            .map(|p| Anchored::new(p.as_ref()))
            .collect::<Result<_, _>>()?;
        Ok(LabelMatcher { patterns })
    }

    /// Matches every label whose gate is one of `gates`, whatever its offers.
    pub fn gates<S: AsRef<str>>(gates: &[S]) -> Result<Self, SliceError> {
        let pats: Vec<String> = gates
            .iter()
            .map(|g| format!("{}(?: !.*)?", fancy_regex::escape(g.as_ref())))
            .collect();
        Self::new(&pats)
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn matches_text(&self, text: &str) -> Result<bool, SliceError> {
        for p in &self.patterns {
            if p.is_match(text)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn matches(&self, label: &Label) -> Result<bool, SliceError> {
        self.matches_text(&label.to_string())
    }

    /// Evaluates the matcher once per label of `l`'s table.
    pub fn mask(&self, l: &Lts) -> Result<Vec<bool>, SliceError> {
        l.labels().iter().map(|lab| self.matches(lab)).collect()
    }
}

/// Turns every transition whose label matches `patterns` into tau.
pub fn hide(l: &Lts, patterns: &LabelMatcher) -> Result<Lts, SliceError> {
    let mask = patterns.mask(l)?;
    let mut i = 0;
    Ok(l.map_labels(|lab| {
        let hidden = mask[i];
        i += 1;
        if hidden {
            Label::Tau
        } else {
            lab.clone()
        }
    }))
}

/// Hides every visible label that does not match `keep`.
pub fn hide_all_but(l: &Lts, keep: &LabelMatcher) -> Result<Lts, SliceError> {
    let mask = keep.mask(l)?;
    let mut i = 0;
    Ok(l.map_labels(|lab| {
        let kept = mask[i];
        i += 1;
        if kept {
            lab.clone()
        } else {
            Label::Tau
        }
    }))
}

/// Ordered `(pattern, template)` rules; templates use `$1`-style groups.
#[derive(Debug, Clone, Default)]
pub struct RenameRules {
    rules: Vec<(Anchored, String)>,
}

impl RenameRules {
    pub fn new<S: AsRef<str>, T: AsRef<str>>(rules: &[(S, T)]) -> Result<Self, SliceError> {
        let rules = rules
            .iter()
            .map(|(p, t)| Ok((Anchored::new(p.as_ref())?, t.as_ref().to_string())))
            .collect::<Result<_, SliceError>>()?;
        Ok(RenameRules { rules })
    }

    /// Parses `RE=>TEMPLATE`.
    pub fn parse_rule(rule: &str) -> Result<(String, String), SliceError> {
        rule.split_once("=>")
            .map(|(p, t)| (p.to_string(), t.to_string()))
            .ok_or_else(|| SliceError::Pattern {
                pattern: rule.to_string(),
                reason: "expected RE=>TEMPLATE".into(),
            })
    }

    /// Applies the first matching rule; `None` when no rule matches.
    pub fn apply(&self, label: &Label) -> Result<Option<Label>, SliceError> {
        if label.is_tau() {
            return Ok(None);
        }
        let text = label.to_string();
        for (pat, template) in &self.rules {
            let caps = pat.re.captures(&text).map_err(|e| SliceError::Match {
                pattern: pat.source.clone(),
                text: text.clone(),
                reason: e.to_string(),
            })?;
            if let Some(caps) = caps {
                let mut out = String::new();
                caps.expand(template, &mut out);
                let renamed = parse_label(&out).map_err(|source| SliceError::Rename {
                    from: text.clone(),
                    source,
                })?;
                return Ok(Some(renamed));
            }
        }
        Ok(None)
    }
}

/// Relabels transitions by `rules`; non-matching labels and tau are kept.
pub fn rename(l: &Lts, rules: &RenameRules) -> Result<Lts, SliceError> {
    let renamed: Vec<Option<Label>> = l
        .labels()
        .iter()
        .map(|lab| rules.apply(lab))
        .collect::<Result<_, _>>()?;
    let mut i = 0;
    Ok(l.map_labels(|lab| {
        let r = renamed[i].clone().unwrap_or_else(|| lab.clone());
        i += 1;
        r
    }))
}
