use crate::render::OutputGroup;
use crate::triple::{Provenance, SurfaceTriple};

/// Parses a model output string in the canonical grouped format.
///
/// Tolerated repairs: surrounding whitespace, trailing separators after the
/// closing bracket, and trailing commas before `]` or `}`. Anything else is
/// unparseable (`None`).
pub fn parse_output(s: &str) -> Option<Vec<SurfaceTriple>> {
    let trimmed = s.trim_matches(|c: char| c.is_whitespace() || c == '\u{feff}');
    let trimmed = trimmed.trim_end_matches(|c: char| c == ',' || c == ';' || c.is_whitespace());
    if !trimmed.starts_with('[') {
        return None;
    }
    let repaired = strip_trailing_commas(trimmed);
    let groups: Vec<OutputGroup> = serde_json::from_str(&repaired).ok()?;
    let mut out = Vec::new();
    for g in groups {
        if g.entity.trim().is_empty() {
            return None;
        }
        for (relation, tails) in g.attributes.0 {
            if relation.trim().is_empty() {
                return None;
            }
            for tail in tails {
                if tail.trim().is_empty() {
                    return None;
                }
                out.push(SurfaceTriple::new(g.entity.clone(), relation.clone(), tail, Provenance::LLM));
            }
        }
    }
    Some(out)
}

/// Drops commas that are followed (after whitespace) by `]` or `}`, outside string literals.
fn strip_trailing_commas(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut in_str = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_str {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        if c == '"' {
            in_str = true;
        } else if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some(']') | Some('}')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}
