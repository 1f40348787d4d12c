use std::path::Path;

use regex::{Regex, RegexBuilder};

use crate::error::{Error, Result};

/// Rewrite rules seeded into a fresh rules file.
pub const DEFAULT_RULES: &str = "\
# One rule per line: <regex> => <replacement>
# Patterns match whole lowercase words after punctuation is stripped.
corporation|incorporated|company => inc
";

/// Ordered word-level rewrite rules.
#[derive(Debug, Clone)]
pub struct SynonymRules {
    rules: Vec<(Regex, String)>,
}

impl Default for SynonymRules {
    fn default() -> Self {
        SynonymRules::parse(DEFAULT_RULES).expect("built-in rules parse")
    }
}

impl SynonymRules {
    pub fn empty() -> Self {
        SynonymRules { rules: Vec::new() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (pattern, replacement) = line
                .split_once("=>")
                .ok_or_else(|| Error::InvalidInput(format!("rules line {}: expected `pattern => replacement`", n + 1)))?;
            let regex = RegexBuilder::new(&format!(r"\b(?:{})\b", pattern.trim()))
                .case_insensitive(true)
                .build()
                .map_err(|e| Error::InvalidInput(format!("rules line {}: {e}", n + 1)))?;
            rules.push((regex, replacement.trim().to_lowercase()));
        }
        Ok(SynonymRules { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SynonymRules::parse(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    fn apply(&self, text: &str) -> String {
        self.rules
            .iter()
            .fold(text.to_string(), |acc, (re, rep)| re.replace_all(&acc, rep.as_str()).into_owned())
    }
}

/// Lowercase, drop punctuation, collapse whitespace.
pub fn clean_text(raw: &str) -> String {
    let lowered: String = raw
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Canonical company-name form: cleaned, rewritten by `rules`, and each word
/// capitalized ("FACEBOOK, INC." → "Facebook Inc").
pub fn normalize_name(raw: &str, rules: &SynonymRules) -> Result<String> {
    let cleaned = clean_text(raw);
    let rewritten = rules.apply(&cleaned);
    let words: Vec<String> = rewritten.split_whitespace().map(capitalize).collect();
    if words.is_empty() {
        return Err(Error::InvalidInput(format!("name `{raw}` is empty after cleaning")));
    }
    Ok(words.join(" "))
}
