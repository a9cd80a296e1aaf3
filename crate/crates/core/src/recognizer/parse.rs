//! Maps free-form backend answers onto catalog class ids.
//!
//! Matching tiers, strongest first:
//! 1. a numbered-list line whose payload is exactly a class id
//! 2. class ids appearing verbatim (identifier-bounded) in a line
//! 3. display names appearing case-insensitively (word-bounded) in a line
//!
//! When the answer contains numbered lines that match anything, only those
//! lines are read, so preambles mentioning classes do not leak in. Results
//! keep order of appearance, drop repeats, and are cut at `k`.

use crate::dataset::ClassCatalog;

fn is_ident(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Payload of a `1. foo`, `2) foo` or `3: foo` line.
fn numbered_payload(line: &str) -> Option<&str> {
    let t = line.trim_start().trim_start_matches(['*', '#', ' ']);
    let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    let rest = &t[digits..];
    let rest = rest.strip_prefix(['.', ')', ':'])?;
    Some(rest.trim_start_matches('*'))
}

fn clean_payload(payload: &str) -> &str {
    payload
        .trim()
        .trim_matches(|c: char| matches!(c, '*' | '`' | '"' | '\'' | '[' | ']'))
        .trim_end_matches(['.', ',', ';'])
        .trim()
}

/// Non-overlapping bounded occurrences of any needle, leftmost first and
/// longest first on ties. Returns the class index of each match.
fn find_bounded(haystack: &str, needles: &[(String, usize)]) -> Vec<usize> {
    let mut hits: Vec<(usize, usize, usize)> = Vec::new();
    for (needle, class) in needles {
        if needle.is_empty() {
            continue;
        }
        for (start, _) in haystack.match_indices(needle.as_str()) {
            let end = start + needle.len();
            let before_ok = haystack[..start].chars().next_back().is_none_or(|c| !is_ident(c));
            let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_ident(c));
            if before_ok && after_ok {
                hits.push((start, end, *class));
            }
        }
    }
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut taken_until = 0;
    let mut out = Vec::new();
    for (start, end, class) in hits {
        if start >= taken_until {
            out.push(class);
            taken_until = end;
        }
    }
    out
}

pub fn parse_ranked_response(raw: &str, catalog: &ClassCatalog, k: usize) -> Vec<String> {
    let ids: Vec<(String, usize)> = catalog
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.class_id.clone(), i))
        .collect();
    let names: Vec<(String, usize)> = catalog
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.display_name.to_lowercase(), i))
        .collect();

    let line_matches = |line: &str| -> Vec<usize> {
        if let Some(payload) = numbered_payload(line) {
            if let Some(i) = catalog.position(clean_payload(payload)) {
                return vec![i];
            }
        }
        let by_id = find_bounded(line, &ids);
        if !by_id.is_empty() {
            return by_id;
        }
        find_bounded(&line.to_lowercase(), &names)
    };

    let numbered: Vec<Vec<usize>> = raw
        .lines()
        .filter(|l| numbered_payload(l).is_some())
        .map(line_matches)
        .collect();
    let matches: Vec<usize> = if numbered.iter().any(|m| !m.is_empty()) {
        numbered.into_iter().flatten().collect()
    } else {
        raw.lines().flat_map(line_matches).collect()
    };

    let mut seen = vec![false; catalog.len()];
    let mut out = Vec::new();
    for i in matches {
        if out.len() == k {
            break;
        }
        if !std::mem::replace(&mut seen[i], true) {
            out.push(catalog.entries()[i].class_id.clone());
        }
    }
    out
}
