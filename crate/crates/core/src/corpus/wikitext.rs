//! Minimal wiki-markup stripping. Templates, tables, comments and references
//! are removed; links become plain text with recorded anchors.

use super::Span;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("byte {offset}: {message}")]
pub struct MarkupError {
    pub offset: usize,
    pub message: String,
}

fn err(offset: usize, message: &str) -> MarkupError {
    MarkupError { offset, message: message.to_string() }
}

/// Removes document-level constructs that may span paragraphs: comments,
/// templates `{{…}}`, tables `{|…|}` and `<ref>` elements.
pub fn strip_blocks(src: &str) -> Result<String, MarkupError> {
    let bytes = src.as_bytes();
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    while i < bytes.len() {
        let rest = &src[i..];
        if rest.starts_with("<!--") {
            let end = rest.find("-->").ok_or_else(|| err(i, "unterminated comment"))?;
            i += end + 3;
        } else if rest.starts_with("{{") || rest.starts_with("{|") {
            i = skip_braces(src, i)?;
        } else if rest.starts_with("<ref") && rest[4..].starts_with(|c: char| c == '>' || c.is_whitespace() || c == '/') {
            let close = rest.find('>').ok_or_else(|| err(i, "unterminated <ref> tag"))?;
            if rest[..close].ends_with('/') {
                i += close + 1;
            } else {
                let end = rest.find("</ref>").ok_or_else(|| err(i, "unterminated <ref> element"))?;
                i += end + "</ref>".len();
            }
        } else {
            let c = rest.chars().next().expect("non-empty");
            out.push(c);
            i += c.len_utf8();
        }
    }
    Ok(out)
}

/// Skips a nested `{{…}}` / `{|…|}` construct starting at `start`; returns the offset after it.
fn skip_braces(src: &str, start: usize) -> Result<usize, MarkupError> {
    let mut stack: Vec<&str> = Vec::new();
    let mut i = start;
    while i < src.len() {
        let rest = &src[i..];
        if rest.starts_with("{{") {
            stack.push("}}");
            i += 2;
        } else if rest.starts_with("{|") {
            stack.push("|}");
            i += 2;
        } else if stack.last().is_some_and(|c| rest.starts_with(c)) {
            stack.pop();
            i += 2;
            if stack.is_empty() {
                return Ok(i);
            }
        } else {
            i += rest.chars().next().map_or(1, char::len_utf8);
        }
    }
    Err(err(start, if src[start..].starts_with("{|") { "unterminated table" } else { "unterminated template" }))
}

/// Plain text of one paragraph plus link anchors (char offsets into the text).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub text: String,
    pub anchors: Vec<(Span, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unbalanced link markup at byte {0}")]
pub struct Unbalanced(pub usize);

const DROPPED_NAMESPACES: &[&str] =
    &["file:", "image:", "category:", "文件:", "檔案:", "图像:", "圖像:", "分类:", "分類:"];

/// Renders a paragraph block: links, external links, bold/italic quotes and
/// inline HTML tags. Heading lines are dropped.
pub fn render_block(block: &str) -> Result<Rendered, Unbalanced> {
    let mut text = String::new();
    let mut chars = 0usize;
    let mut anchors = Vec::new();
    let mut first_line = true;
    for line in block.lines() {
        let t = line.trim();
        if t.len() >= 2 && t.starts_with('=') && t.ends_with('=') {
            continue;
        }
        let line = line.trim_start_matches(['*', '#', ':', ';']);
        if !first_line {
            text.push('\n');
            chars += 1;
        }
        first_line = false;
        render_line(line, &mut text, &mut chars, &mut anchors)?;
    }
    Ok(trim_rendered(Rendered { text, anchors }))
}

fn push(text: &mut String, chars: &mut usize, s: &str) {
    text.push_str(s);
    *chars += s.chars().count();
}

fn render_line(
    line: &str,
    text: &mut String,
    chars: &mut usize,
    anchors: &mut Vec<(Span, String)>,
) -> Result<(), Unbalanced> {
    let mut i = 0;
    while i < line.len() {
        let rest = &line[i..];
        if rest.starts_with("[[") {
            let close = find_link_close(line, i)?;
            let inner = &line[i + 2..close];
            i = close + 2;
            let lower = inner.trim_start().to_lowercase();
            if DROPPED_NAMESPACES.iter().any(|ns| lower.starts_with(ns)) {
                continue;
            }
            if inner.contains("[[") {
                return Err(Unbalanced(i));
            }
            let (target, surface) = match inner.split_once('|') {
                Some((t, s)) if !s.trim().is_empty() => (t, s),
                Some((t, _)) => (t, t),
                None => (inner, inner),
            };
            let surface = strip_quotes(surface);
            let lead = surface.len() - surface.trim_start().len();
            push(text, chars, &surface[..lead]);
            let core = surface.trim();
            let start = *chars;
            push(text, chars, core);
            push(text, chars, &surface[lead + core.len()..]);
            let target = target.trim().replace('_', " ");
            if !core.is_empty() && !target.is_empty() {
                anchors.push((Span { start, end: start + core.chars().count() }, target));
            }
        } else if rest.starts_with("]]") {
            return Err(Unbalanced(i));
        } else if rest.starts_with("[http://") || rest.starts_with("[https://") || rest.starts_with("[//") {
            let close = rest.find(']').ok_or(Unbalanced(i))?;
            let inner = &rest[1..close];
            if let Some((_, label)) = inner.split_once(' ') {
                push(text, chars, label.trim());
            }
            i += close + 1;
        } else if rest.starts_with("''") {
            i += rest.len() - rest.trim_start_matches('\'').len();
        } else if rest.starts_with('<') && is_tag(rest) {
            i += rest.find('>').expect("is_tag checked") + 1;
        } else {
            let c = rest.chars().next().expect("non-empty");
            text.push(c);
            *chars += 1;
            i += c.len_utf8();
        }
    }
    Ok(())
}

fn find_link_close(line: &str, open: usize) -> Result<usize, Unbalanced> {
    let mut depth = 0usize;
    let mut i = open;
    while i < line.len() {
        let rest = &line[i..];
        if rest.starts_with("[[") {
            depth += 1;
            i += 2;
        } else if rest.starts_with("]]") {
            depth -= 1;
            if depth == 0 {
                return Ok(i);
            }
            i += 2;
        } else {
            i += rest.chars().next().map_or(1, char::len_utf8);
        }
    }
    Err(Unbalanced(open))
}

fn strip_quotes(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while !rest.is_empty() {
        if rest.starts_with("''") {
            rest = rest.trim_start_matches('\'');
        } else {
            let c = rest.chars().next().expect("non-empty");
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

fn is_tag(s: &str) -> bool {
    let Some(end) = s.find('>') else { return false };
    let inner = &s[1..end];
    let name = inner.trim_start_matches('/');
    !name.is_empty()
        && name.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || " =\"'/-_:;.#".contains(c))
}

/// Trims surrounding whitespace, shifting anchors.
fn trim_rendered(r: Rendered) -> Rendered {
    let lead_bytes = r.text.len() - r.text.trim_start().len();
    let lead = r.text[..lead_bytes].chars().count();
    let text = r.text.trim().to_string();
    let len = text.chars().count();
    let anchors = r
        .anchors
        .into_iter()
        .filter_map(|(sp, t)| {
            let start = sp.start.checked_sub(lead)?;
            let end = sp.end - lead;
            (end <= len).then_some((Span { start, end }, t))
        })
        .collect();
    Rendered { text, anchors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::slice_chars;

    #[test]
    fn strips_templates_refs_comments_tables() {
        let src = "A{{Infobox|x={{nested}}}} b<ref name=\"r\">cite</ref> c<ref name=x/> d<!-- hidden -->\n{|\n| cell\n|}\ne";
        assert_eq!(strip_blocks(src).unwrap(), "A b c d\n\ne");
    }

    #[test]
    fn unterminated_template_reports_offset() {
        let e = strip_blocks("abc {{Infobox").unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(e.message.contains("template"));
    }

    #[test]
    fn links_become_anchors() {
        let r = render_block("  '''[[Apple Inc.|Apple]]''' was founded by [[Steve Jobs]] in [[Cupertino, California|Cupertino]].").unwrap();
        assert_eq!(r.text, "Apple was founded by Steve Jobs in Cupertino.");
        let got: Vec<_> = r
            .anchors
            .iter()
            .map(|(s, t)| (slice_chars(&r.text, s.start, s.end).unwrap(), t.as_str()))
            .collect();
        assert_eq!(got, vec![("Apple", "Apple Inc."), ("Steve Jobs", "Steve Jobs"), ("Cupertino", "Cupertino, California")]);
    }

    #[test]
    fn media_and_category_links_dropped() {
        let r = render_block("x [[File:a.jpg|thumb|An [[apple]]]] y [[Category:Fruit]]").unwrap();
        assert_eq!(r.text, "x  y");
        assert!(r.anchors.is_empty());
    }

    #[test]
    fn unbalanced_links_rejected() {
        assert!(render_block("broken [[link here").is_err());
        assert!(render_block("stray ]] close").is_err());
    }

    #[test]
    fn external_links_and_tags() {
        let r = render_block("See [https://example.org the site]<br/> and [https://x.org].").unwrap();
        assert_eq!(r.text, "See the site and .");
    }

    #[test]
    fn cjk_offsets_are_chars() {
        let r = render_block("[[苹果公司|苹果]]的CEO是[[蒂姆·库克]]。").unwrap();
        assert_eq!(r.text, "苹果的CEO是蒂姆·库克。");
        assert_eq!(r.anchors[1].0, Span { start: 7, end: 12 });
    }
}
