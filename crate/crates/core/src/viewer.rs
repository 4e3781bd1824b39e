//! Document navigation: scrolling, line jumps and keyword lookup over a
//! loaded document.
//!
//! Every operation is a pure function from one [`ViewerState`] to another.
//! Lines are 1-based; column spans are 0-based half-open character offsets
//! into the original line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::DocumentRef;
use crate::text::{fold_char, split_lines};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ViewerError {
    #[error("viewport height must be at least 1")]
    ZeroHeight,
    #[error("keyword is empty")]
    EmptyKeyword,
    #[error("keyword {0:?} not found")]
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewerState {
    pub doc: Option<DocumentRef>,
    pub lines: Vec<String>,
    pub cursor_line: usize,
    pub top_line: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineMatches {
    pub line: usize,
    pub spans: Vec<Span>,
}

pub fn open_document(content: &str, height: usize) -> Result<ViewerState, ViewerError> {
    if height == 0 {
        return Err(ViewerError::ZeroHeight);
    }
    Ok(ViewerState {
        doc: None,
        lines: split_lines(content).into_iter().map(str::to_string).collect(),
        cursor_line: 1,
        top_line: 1,
        height,
    })
}

impl ViewerState {
    pub fn with_doc(mut self, doc: DocumentRef) -> Self {
        self.doc = Some(doc);
        self
    }

    pub fn line_count(&self) -> usize {
        self.lines.len().max(1)
    }

    fn max_top(&self) -> usize {
        (self.line_count() + 1).saturating_sub(self.height).max(1)
    }

    /// Moves the viewport by `delta` lines; the cursor keeps its offset
    /// within the viewport.
    pub fn scroll(&self, delta: i64) -> ViewerState {
        let top = clamp_i(self.top_line as i64 + delta, 1, self.max_top());
        let offset = self.cursor_line.saturating_sub(self.top_line);
        let cursor = (top + offset).min(top + self.height - 1).min(self.line_count());
        ViewerState {
            top_line: top,
            cursor_line: cursor,
            ..self.clone()
        }
    }

    /// Puts the cursor on line `n` (clamped) at the top of the viewport, or
    /// as close to the top as a full viewport allows near the end.
    pub fn goto_line(&self, n: i64) -> ViewerState {
        let cursor = clamp_i(n, 1, self.line_count());
        ViewerState {
            cursor_line: cursor,
            top_line: cursor.min(self.max_top()),
            ..self.clone()
        }
    }

    /// Restores a saved position, clamped so the viewport invariant holds.
    pub fn at(&self, top_line: i64, cursor_line: i64) -> ViewerState {
        let top = clamp_i(top_line, 1, self.max_top());
        let last = (top + self.height - 1).min(self.line_count());
        ViewerState {
            top_line: top,
            cursor_line: clamp_i(cursor_line, top, last),
            ..self.clone()
        }
    }

    /// Every case-insensitive, non-overlapping occurrence, by line.
    pub fn find_all(&self, keyword: &str) -> Result<Vec<LineMatches>, ViewerError> {
        if keyword.is_empty() {
            return Err(ViewerError::EmptyKeyword);
        }
        let needle: Vec<char> = keyword.chars().map(fold_char).collect();
        let mut out = Vec::new();
        for (i, line) in self.lines.iter().enumerate() {
            let hay: Vec<char> = line.chars().map(fold_char).collect();
            let mut spans = Vec::new();
            let mut at = 0;
            while at + needle.len() <= hay.len() {
                if hay[at..at + needle.len()] == needle[..] {
                    spans.push(Span {
                        start: at,
                        end: at + needle.len(),
                    });
                    at += needle.len();
                } else {
                    at += 1;
                }
            }
            if !spans.is_empty() {
                out.push(LineMatches { line: i + 1, spans });
            }
        }
        Ok(out)
    }

    pub fn goto_first(&self, keyword: &str) -> Result<ViewerState, ViewerError> {
        let hits = self.find_all(keyword)?;
        match hits.first() {
            Some(m) => Ok(self.goto_line(m.line as i64)),
            None => Err(ViewerError::NotFound(keyword.to_string())),
        }
    }

    /// Visible `(line number, text)` pairs.
    pub fn visible(&self) -> Vec<(usize, &str)> {
        self.lines
            .iter()
            .enumerate()
            .skip(self.top_line - 1)
            .take(self.height)
            .map(|(i, l)| (i + 1, l.as_str()))
            .collect()
    }

    pub fn invariant_holds(&self) -> bool {
        self.height >= 1
            && (1..=self.line_count()).contains(&self.cursor_line)
            && self.top_line >= 1
            && self.top_line <= self.cursor_line
            && self.cursor_line < self.top_line + self.height
    }
}

fn clamp_i(v: i64, lo: usize, hi: usize) -> usize {
    v.clamp(lo as i64, hi as i64) as usize
}
