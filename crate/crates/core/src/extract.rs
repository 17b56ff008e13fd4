//! Pulls the program out of a free-form model response.
//!
//! Selection order: the last fenced block tagged with the guest language, then
//! the last fenced block with no tag or a foreign tag, then the whole text when
//! it looks like source code of the guest language, then the whole text.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    FencedTagged,
    FencedUntagged,
    HeuristicFragment,
    WholeText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub code: String,
    pub origin: Origin,
    pub block_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no code found in response")]
    NoCode,
}

/// Alias table and per-language signature patterns. Lives in the worker
/// configuration under `[extraction]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    /// Fence tag (lower-case) to canonical language id.
    pub aliases: BTreeMap<String, String>,
    /// Canonical language id to line regexes that mark source code.
    pub signatures: BTreeMap<String, Vec<String>>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        let aliases = [
            ("py", "python"),
            ("py3", "python"),
            ("python3", "python"),
            ("c++", "cpp"),
            ("cxx", "cpp"),
            ("h++", "cpp"),
            ("sh", "bash"),
            ("shell", "bash"),
            ("js", "javascript"),
            ("node", "javascript"),
            ("rs", "rust"),
        ];
        let signatures = [
            (
                "python",
                vec![
                    r"^\s*(def|class)\s+\w+",
                    r"^\s*import\s+\w+",
                    r"^\s*from\s+[\w.]+\s+import\s+",
                    r"^\s*print\(",
                    r"^\s*if\s+__name__\s*==",
                ],
            ),
            ("cpp", vec![r"^\s*#\s*include\s*[<\x22]", r"\bint\s+main\s*\(", r"^\s*using\s+namespace\s+"]),
            ("c", vec![r"^\s*#\s*include\s*[<\x22]", r"\bint\s+main\s*\("]),
            ("bash", vec![r"^#!\s*/\S*(ba)?sh", r"^\s*(echo|read|printf)\b"]),
            ("javascript", vec![r"^\s*(const|let|var|function)\s+\w+", r"\bconsole\.log\("]),
            ("rust", vec![r"^\s*fn\s+main\s*\(", r"^\s*use\s+std::"]),
        ];
        Self {
            aliases: aliases.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            signatures: signatures
                .into_iter()
                .map(|(l, ps)| (l.to_string(), ps.into_iter().map(String::from).collect()))
                .collect(),
        }
    }
}

/// Compiled form of [`ExtractConfig`].
#[derive(Debug, Clone)]
pub struct Extractor {
    aliases: BTreeMap<String, String>,
    signatures: BTreeMap<String, Vec<Regex>>,
}

impl Default for Extractor {
    fn default() -> Self {
        Self::new(&ExtractConfig::default()).expect("default signatures compile")
    }
}

struct Block<'a> {
    tag: Option<&'a str>,
    lines: Vec<&'a str>,
}

fn fence_info(line: &str) -> Option<&str> {
    line.trim_start().strip_prefix("```").map(str::trim)
}

fn parse_blocks(text: &str) -> Vec<Block<'_>> {
    let mut blocks = Vec::new();
    let mut open: Option<Block<'_>> = None;
    for line in text.lines() {
        match (fence_info(line), open.take()) {
            (Some(info), None) => {
                let tag = info.split_whitespace().next().filter(|t| !t.contains('`'));
                open = Some(Block { tag, lines: Vec::new() });
            }
            (Some(_), Some(block)) => blocks.push(block),
            (None, Some(mut block)) => {
                block.lines.push(line);
                open = Some(block);
            }
            (None, None) => {}
        }
    }
    // an unclosed fence runs to the end of the text
    if let Some(block) = open {
        blocks.push(block);
    }
    blocks
}

fn strip_blank_edges<'a>(lines: impl IntoIterator<Item = &'a str>) -> String {
    let lines: Vec<&str> = lines.into_iter().collect();
    let start = lines.iter().position(|l| !l.trim().is_empty());
    let end = lines.iter().rposition(|l| !l.trim().is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

impl Extractor {
    pub fn new(config: &ExtractConfig) -> Result<Self, regex::Error> {
        let signatures = config
            .signatures
            .iter()
            .map(|(lang, pats)| {
                let compiled = pats
                    .iter()
                    .map(|p| Regex::new(&format!("(?m){p}")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((lang.to_lowercase(), compiled))
            })
            .collect::<Result<_, regex::Error>>()?;
        Ok(Self {
            aliases: config
                .aliases
                .iter()
                .map(|(a, l)| (a.to_lowercase(), l.to_lowercase()))
                .collect(),
            signatures,
        })
    }

    pub fn canonical(&self, tag: &str) -> String {
        let tag = tag.to_lowercase();
        self.aliases.get(&tag).cloned().unwrap_or(tag)
    }

    fn looks_like(&self, text: &str, language: &str) -> bool {
        self.signatures
            .get(language)
            .is_some_and(|pats| pats.iter().any(|re| re.is_match(text)))
    }

    pub fn extract(&self, raw_text: &str, guest_language: &str) -> Result<ExtractionResult, ExtractError> {
        if raw_text.trim().is_empty() {
            return Err(ExtractError::NoCode);
        }
        let language = self.canonical(guest_language);
        let blocks = parse_blocks(raw_text);

        let candidates: Vec<(usize, String, bool)> = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let tagged = b.tag.is_some_and(|t| self.canonical(t) == language);
                (i, strip_blank_edges(b.lines.iter().copied()), tagged)
            })
            .filter(|(_, code, _)| !code.is_empty())
            .collect();

        if let Some((i, code, _)) = candidates.iter().rev().find(|(_, _, tagged)| *tagged) {
            return Ok(ExtractionResult { code: code.clone(), origin: Origin::FencedTagged, block_index: *i });
        }
        if let Some((i, code, _)) = candidates.last() {
            return Ok(ExtractionResult {
                code: code.clone(),
                origin: Origin::FencedUntagged,
                block_index: *i,
            });
        }

        // No usable block: fall back to the text itself, minus stray fence lines.
        let text = strip_blank_edges(raw_text.lines().filter(|l| fence_info(l).is_none()));
        if text.is_empty() {
            return Err(ExtractError::NoCode);
        }
        let origin = if self.looks_like(&text, &language) {
            Origin::HeuristicFragment
        } else {
            Origin::WholeText
        };
        Ok(ExtractionResult { code: text, origin, block_index: 0 })
    }
}

/// Convenience wrapper using the default alias and signature tables.
pub fn extract_code(raw_text: &str, guest_language: &str) -> Result<ExtractionResult, ExtractError> {
    Extractor::default().extract(raw_text, guest_language)
}
