//! `Label: value` blocks and bullet lists as models tend to write them.

use std::collections::HashMap;

use super::squash;

/// Splits `text` into labelled fields. A line opens a field when its prefix
/// before `:` names one of `labels` (ignoring case, markdown emphasis and
/// heading marks); other lines continue the open field. Keys are returned in
/// the spelling given in `labels`. First occurrence wins.
pub(crate) fn parse_fields(text: &str, labels: &[&str]) -> HashMap<String, String> {
    let mut out: HashMap<String, String> = HashMap::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        if let Some((label, value)) = label_line(line, labels) {
            if out.contains_key(label) {
                current = None;
                continue;
            }
            out.insert(label.to_string(), value);
            current = Some(label.to_string());
        } else if let Some(key) = &current {
            let v = out.get_mut(key).expect("open field exists");
            if !v.is_empty() || !line.trim().is_empty() {
                if !v.is_empty() {
                    v.push('\n');
                }
                v.push_str(line.trim_end());
            }
        }
    }
    for v in out.values_mut() {
        *v = v.trim().to_string();
    }
    out
}

fn label_line<'a>(line: &str, labels: &[&'a str]) -> Option<(&'a str, String)> {
    let raw = line.trim();
    let t = raw.trim_start_matches(['#', '-', '*', ' ']);
    if raw.starts_with('#') && !t.contains(':') {
        // markdown heading used as a label: `## Rationale`
        let key = squash(t);
        let label = labels.iter().find(|l| squash(l) == key)?;
        return Some((label, String::new()));
    }
    let (head, rest) = t.split_once(':')?;
    let key = squash(head);
    if key.is_empty() {
        return None;
    }
    let label = labels.iter().find(|l| squash(l) == key)?;
    Some((label, rest.trim().trim_start_matches('*').trim().to_string()))
}

/// Bullet items (`-`, `*`, `•`, `1.`); text without bullets is split on `;`.
pub(crate) fn bullets(text: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut any_bullet = false;
    for line in text.lines() {
        let t = line.trim();
        if let Some(item) = bullet_item(t) {
            any_bullet = true;
            if !item.is_empty() {
                items.push(item.to_string());
            }
        } else if any_bullet && !t.is_empty() {
            // wrapped continuation of the previous bullet
            if let Some(last) = items.last_mut() {
                last.push(' ');
                last.push_str(t);
            }
        }
    }
    if any_bullet {
        return items;
    }
    text.split([';', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("none"))
        .map(str::to_string)
        .collect()
}

fn bullet_item(t: &str) -> Option<&str> {
    for p in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(p) {
            return Some(rest.trim());
        }
    }
    if t == "-" || t == "*" {
        return Some("");
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some(r.trim());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labelled_fields() {
        let f = parse_fields(
            "**Recommended Specialty:** Pulmonology\nRationale: one\ntwo\n\n## Points for Attention\n- a\n- b",
            &["Recommended Specialty", "Rationale", "Points for Attention"],
        );
        assert_eq!(f["Recommended Specialty"], "Pulmonology");
        assert_eq!(f["Rationale"], "one\ntwo");
        assert_eq!(bullets(&f["Points for Attention"]), vec!["a", "b"]);
    }

    #[test]
    fn first_occurrence_wins() {
        let f = parse_fields("A: 1\nA: 2\nmore", &["A"]);
        assert_eq!(f["A"], "1");
    }

    #[test]
    fn bullet_forms() {
        assert_eq!(bullets("1. x\n2) y\n  wrapped"), vec!["x", "y wrapped"]);
        assert_eq!(bullets("nausea; rash"), vec!["nausea", "rash"]);
        assert_eq!(bullets("None"), Vec::<String>::new());
    }
}
