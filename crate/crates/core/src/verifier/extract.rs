//! Locating the final answer inside a model response.

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;

use crate::domain::Task;

/// A located answer: `span` covers the whole token (including any `\boxed{}`
/// wrapper or code fences), `content` is the answer text itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Located {
    pub span: Range<usize>,
    pub content: String,
    /// Fence info string for code blocks (e.g. `python`), if any.
    pub lang: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no {task} answer found in response")]
pub struct ExtractionError {
    pub task: Task,
}

pub fn extract_final_answer(raw_text: &str, task: Task) -> Result<String, ExtractionError> {
    locate_final_answer(raw_text, task).map(|l| l.content)
}

pub fn locate_final_answer(raw_text: &str, task: Task) -> Result<Located, ExtractionError> {
    let found = match task {
        Task::Math => last_boxed(raw_text).or_else(|| last_number(raw_text)),
        Task::Code => last_code_block(raw_text),
    };
    found.ok_or(ExtractionError { task })
}

/// Content of the last brace-balanced `\boxed{...}` (or `\fbox{...}`).
pub fn last_boxed(text: &str) -> Option<Located> {
    let mut starts: Vec<usize> = text
        .match_indices("\\boxed")
        .chain(text.match_indices("\\fbox"))
        .map(|(i, _)| i)
        .collect();
    starts.sort_unstable();
    for &start in starts.iter().rev() {
        let cmd_len = if text[start..].starts_with("\\boxed") {
            6
        } else {
            5
        };
        let after = start + cmd_len;
        let rest = &text[after..];
        let open = after + (rest.len() - rest.trim_start().len());
        if !text[open..].starts_with('{') {
            continue;
        }
        if let Some(close) = matching_brace(text, open) {
            return Some(Located {
                span: start..close + 1,
                content: text[open + 1..close].trim().to_string(),
                lang: None,
            });
        }
    }
    None
}

/// Index of the `}` closing the `{` at `open`, honoring `\{` and `\}` escapes.
pub(crate) fn matching_brace(text: &str, open: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut i = open;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => {
                i += 2;
                continue;
            }
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

static NUMBER_TOKEN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"-?\\[dt]?frac\{-?\d+\}\{-?\d+\}|-?\d+(?:,\d{3})*(?:\.\d+)?(?:/\d+)?|-?\.\d+")
        .unwrap()
});

/// The last standalone integer, decimal, or fraction token.
pub fn last_number(text: &str) -> Option<Located> {
    let bytes = text.as_bytes();
    let mut best = None;
    for m in NUMBER_TOKEN.find_iter(text) {
        let before_ok = m.start() == 0 || {
            let c = bytes[m.start() - 1];
            !(c.is_ascii_alphanumeric() || c == b'_')
        };
        let after_ok = m.end() == bytes.len() || {
            let c = bytes[m.end()];
            !(c.is_ascii_alphanumeric() || c == b'_')
        };
        if before_ok && after_ok {
            best = Some(Located {
                span: m.range(),
                content: m.as_str().to_string(),
                lang: None,
            });
        }
    }
    best
}

/// Body of the last closed triple-backtick block.
pub fn last_code_block(text: &str) -> Option<Located> {
    let mut found = None;
    let mut open: Option<(usize, usize, Option<String>)> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        match &open {
            None => {
                // a fence may follow other text on its line (`</think>```python`)
                // as long as it is the only fence there
                if let Some((_, info)) = trimmed
                    .split_once("```")
                    .filter(|(_, rest)| !rest.contains('`'))
                {
                    let info = info.trim();
                    let lang = (!info.is_empty())
                        .then(|| info.split_whitespace().next().unwrap().to_ascii_lowercase());
                    let fence = line.find("```").unwrap_or(0);
                    open = Some((offset + fence, offset + line.len(), lang));
                }
            }
            Some((start, body_start, lang)) => {
                if trimmed == "```" {
                    let body = &text[*body_start..offset];
                    found = Some(Located {
                        span: *start..offset + line.trim_end_matches(['\n', '\r']).len(),
                        content: body.trim_end_matches(['\n', '\r']).to_string(),
                        lang: lang.clone(),
                    });
                    open = None;
                }
            }
        }
        offset += line.len();
    }
    found
}
