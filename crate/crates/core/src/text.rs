//! Case folding shared by keyword search and the report viewer.
//!
//! Folding is per character so that column positions in a folded line map
//! one-to-one onto the original line.

/// Lowercases `c` when its lowercase form is a single character.
pub fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

pub fn fold(s: &str) -> String {
    s.chars().map(fold_char).collect()
}

/// Splits on LF and strips one trailing CR per line. An empty input yields a
/// single empty line.
pub fn split_lines(content: &str) -> Vec<&str> {
    content
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect()
}
