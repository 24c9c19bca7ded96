//! Keyword lexicon and rule-based duality labeling.
//!
//! A label of 0 means pure object-semantic intent, 1 pure scene-geometric
//! intent. Matching is case-insensitive on word boundaries; multi-word
//! keywords ("land use", "how many") are supported.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

const DEFAULT_LEXICON_TOML: &str = include_str!("../data/default_lexicon.toml");

#[derive(Debug, Deserialize)]
struct LexiconFile {
    geometric: BTreeMap<String, f64>,
    semantic: BTreeMap<String, f64>,
}

/// Weighted keyword tables for the geometric and semantic task classes.
#[derive(Clone, Debug)]
pub struct Lexicon {
    geometric: Vec<(String, f64)>,
    semantic: Vec<(String, f64)>,
}

/// Collapse to lowercase words separated by single spaces.
fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(ch.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

fn normalize_entries(entries: BTreeMap<String, f64>) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::with_capacity(entries.len());
    for (keyword, weight) in entries {
        let normalized = normalize(&keyword);
        if normalized.is_empty() {
            return Err(Error::invalid("lexicon", format!("empty keyword {keyword:?}")));
        }
        if !weight.is_finite() || weight <= 0.0 {
            return Err(Error::invalid(
                "lexicon",
                format!("keyword {keyword:?} has non-positive weight {weight}"),
            ));
        }
        out.push((normalized, weight));
    }
    Ok(out)
}

impl Lexicon {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: LexiconFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("lexicon: {e}")))?;
        let lexicon = Self {
            geometric: normalize_entries(file.geometric)?,
            semantic: normalize_entries(file.semantic)?,
        };
        if lexicon.geometric.is_empty() || lexicon.semantic.is_empty() {
            return Err(Error::invalid("lexicon", "both classes must be non-empty"));
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn geometric_keywords(&self) -> impl Iterator<Item = &str> {
        self.geometric.iter().map(|(k, _)| k.as_str())
    }

    pub fn semantic_keywords(&self) -> impl Iterator<Item = &str> {
        self.semantic.iter().map(|(k, _)| k.as_str())
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_LEXICON_TOML).expect("shipped lexicon is valid")
    }
}

fn matched_weight(padded_text: &str, entries: &[(String, f64)]) -> f64 {
    entries
        .iter()
        .filter(|(keyword, _)| padded_text.contains(&format!(" {keyword} ")))
        .map(|(_, weight)| weight)
        .sum()
}

/// Rule-based duality label: `w_geo / (w_geo + w_sem)` over matched keyword
/// weights, falling back to the neutral prior 0.5 when nothing matches.
pub fn rule_label(text: &str, lexicon: &Lexicon) -> f64 {
    let padded = format!(" {} ", normalize(text));
    let w_geo = matched_weight(&padded, &lexicon.geometric);
    let w_sem = matched_weight(&padded, &lexicon.semantic);
    if w_geo + w_sem == 0.0 {
        0.5
    } else {
        w_geo / (w_geo + w_sem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_phrase_scores_high() {
        let lex = Lexicon::default();
        let label = rule_label("Plan a route from the harbor to the stadium", &lex);
        assert!(label > 0.7, "got {label}");
    }

    #[test]
    fn semantic_phrase_scores_low() {
        let lex = Lexicon::default();
        let label = rule_label("How many red cars are parked?", &lex);
        assert!(label < 0.3, "got {label}");
    }

    #[test]
    fn empty_text_is_neutral() {
        assert_eq!(rule_label("", &Lexicon::default()), 0.5);
    }

    #[test]
    fn case_and_order_invariant() {
        let lex = Lexicon::default();
        let a = rule_label("plan the ROUTE now", &lex);
        let b = rule_label("Now route; the plan!", &lex);
        assert_eq!(a, b);
    }

    #[test]
    fn word_boundaries_respected() {
        let lex = Lexicon::default();
        // "counting" must not match "count", "classes" must not match "class".
        assert_eq!(rule_label("counting classes routed", &lex), 0.5);
        // Multi-word keyword across punctuation/casing.
        assert!(rule_label("the LAND  USE here", &lex) > 0.7);
    }

    #[test]
    fn balanced_phrase_is_half() {
        let lex = Lexicon::default();
        assert_eq!(rule_label("count along the route", &lex), 0.5);
    }

    #[test]
    fn rejects_bad_lexicon() {
        assert!(Lexicon::from_toml_str("[geometric]\n\"x\" = -1.0\n[semantic]\n\"y\" = 1.0").is_err());
        assert!(Lexicon::from_toml_str("[geometric]\n[semantic]\n\"y\" = 1.0").is_err());
    }
}
