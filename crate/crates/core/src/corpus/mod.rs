//! Corpus ingestion: wikitext documents → token-filtered, domain-labelled paragraphs.

pub mod wikitext;

use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::backend::{self, Backend, BackendError, ClassifyRequest};
use crate::domain::DomainLabel;
use crate::text::{count_tokens, Lang};

/// Half-open `[start, end)` interval of char offsets. Serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl Serialize for Span {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.start, self.end).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (start, end) = <(usize, usize)>::deserialize(d)?;
        if start >= end {
            return Err(serde::de::Error::custom(format!("empty or inverted span [{start}, {end})")));
        }
        Ok(Span { start, end })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub span: Span,
    pub target_title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub id: String,
    pub lang: Lang,
    pub text: String,
    pub token_count: usize,
    #[serde(default)]
    pub domain: Option<DomainLabel>,
    pub anchors: Vec<Anchor>,
}

/// One input line of the corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub id: String,
    pub lang: Lang,
    pub title: String,
    pub wikitext: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus line {line} (byte {offset}): {message}")]
    Record { line: usize, offset: usize, message: String },
    #[error("document {doc}: malformed markup at wikitext byte {offset}: {message}")]
    Markup { doc: String, offset: usize, message: String },
    #[error("corpus read failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Reads line-delimited corpus documents, reporting the byte offset of bad records.
pub fn read_documents(reader: impl BufRead) -> Result<Vec<CorpusDocument>, CorpusError> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    for (i, line) in reader.split(b'\n').enumerate() {
        let raw = line?;
        let line_start = offset;
        offset += raw.len() + 1;
        let text = std::str::from_utf8(&raw).map_err(|e| CorpusError::Record {
            line: i + 1,
            offset: line_start + e.valid_up_to(),
            message: "invalid UTF-8".into(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str(text).map_err(|e| CorpusError::Record {
            line: i + 1,
            offset: line_start + e.column().saturating_sub(1),
            message: e.to_string(),
        })?;
        out.push(doc);
    }
    Ok(out)
}

/// Paragraphs of one document, before filtering and classification.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extracted {
    pub paragraphs: Vec<Paragraph>,
    /// Ids of paragraph blocks dropped for unbalanced link markup.
    pub skipped_unbalanced: Vec<String>,
}

/// Strips markup from a document and splits it on blank lines.
pub fn extract_paragraphs(doc: &CorpusDocument, lang: Lang) -> Result<Extracted, CorpusError> {
    let stripped = wikitext::strip_blocks(&doc.wikitext).map_err(|e| CorpusError::Markup {
        doc: doc.id.clone(),
        offset: e.offset,
        message: e.message,
    })?;
    let mut out = Extracted::default();
    for (idx, block) in split_blocks(&stripped).into_iter().enumerate() {
        let id = format!("{}#{idx:04}", doc.id);
        match wikitext::render_block(block) {
            Ok(r) if r.text.is_empty() => {}
            Ok(r) => out.paragraphs.push(Paragraph {
                token_count: count_tokens(&r.text, lang),
                id,
                lang,
                text: r.text,
                domain: None,
                anchors: r.anchors.into_iter().map(|(span, target_title)| Anchor { span, target_title }).collect(),
            }),
            Err(e) => {
                log::debug!("{id}: {e}");
                out.skipped_unbalanced.push(id);
            }
        }
    }
    Ok(out)
}

fn split_blocks(s: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut start = 0;
    let mut pos = 0;
    let mut blank_run = false;
    for line in s.split_inclusive('\n') {
        if line.trim().is_empty() {
            if !blank_run && !s[start..pos].trim().is_empty() {
                blocks.push(&s[start..pos]);
            }
            blank_run = true;
            start = pos + line.len();
        } else {
            blank_run = false;
        }
        pos += line.len();
    }
    if !s[start..].trim().is_empty() {
        blocks.push(&s[start..]);
    }
    blocks
}

/// Inclusive token-count bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFilter {
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for TokenFilter {
    fn default() -> Self {
        TokenFilter { min_tokens: 50, max_tokens: 512 }
    }
}

impl TokenFilter {
    pub fn keeps(&self, p: &Paragraph) -> bool {
        (self.min_tokens..=self.max_tokens).contains(&p.token_count)
    }

    pub fn apply(&self, paragraphs: Vec<Paragraph>) -> Vec<Paragraph> {
        paragraphs.into_iter().filter(|p| self.keeps(p)).collect()
    }
}

/// Asks the classification backend for the paragraph's domain.
pub fn classify_domain(p: &Paragraph, backend: &dyn Backend) -> Result<DomainLabel, BackendError> {
    backend::classify(backend, &ClassifyRequest { text: p.text.clone(), lang: p.lang }).map(|r| r.domain)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub documents: usize,
    pub other_language_documents: usize,
    pub blocks: usize,
    pub skipped_unbalanced: usize,
    pub too_short: usize,
    pub too_long: usize,
    pub classify_failed: usize,
    pub kept: usize,
}

/// Full ingest: extract, filter, classify. Output is sorted by paragraph id.
///
/// A classification failure drops that paragraph (logged and counted).
/// Without a backend, domains stay unset.
pub fn ingest(
    docs: &[CorpusDocument],
    lang: Lang,
    filter: TokenFilter,
    backend: Option<&dyn Backend>,
) -> Result<(Vec<Paragraph>, IngestReport), CorpusError> {
    let mut report = IngestReport { documents: docs.len(), ..Default::default() };
    let selected: Vec<&CorpusDocument> = docs.iter().filter(|d| d.lang == lang).collect();
    report.other_language_documents = docs.len() - selected.len();
    let extracted: Vec<Extracted> =
        selected.par_iter().map(|d| extract_paragraphs(d, lang)).collect::<Result<_, _>>()?;
    let mut candidates = Vec::new();
    for e in extracted {
        report.blocks += e.paragraphs.len() + e.skipped_unbalanced.len();
        report.skipped_unbalanced += e.skipped_unbalanced.len();
        for p in e.paragraphs {
            if p.token_count < filter.min_tokens {
                report.too_short += 1;
            } else if p.token_count > filter.max_tokens {
                report.too_long += 1;
            } else {
                candidates.push(p);
            }
        }
    }
    let classified: Vec<Option<Paragraph>> = candidates
        .into_par_iter()
        .map(|mut p| match backend {
            None => Some(p),
            Some(b) => match classify_domain(&p, b) {
                Ok(d) => {
                    p.domain = Some(d);
                    Some(p)
                }
                Err(e) => {
                    log::warn!("{}: classification failed, paragraph skipped: {e}", p.id);
                    None
                }
            },
        })
        .collect();
    report.classify_failed = classified.iter().filter(|p| p.is_none()).count();
    let mut kept: Vec<Paragraph> = classified.into_iter().flatten().collect();
    kept.sort_by(|a, b| a.id.cmp(&b.id));
    report.kept = kept.len();
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockRuleSet};
    use crate::text::slice_chars;

    fn words(n: usize, w: &str) -> String {
        vec![w; n].join(" ")
    }

    fn doc(id: &str, wikitext: String) -> CorpusDocument {
        CorpusDocument { id: id.into(), lang: Lang::En, title: id.into(), wikitext }
    }

    #[test]
    fn one_paragraph_two_links() {
        let text = format!("[[Apple Inc.|Apple]] hired [[Tim Cook]] {}", words(56, "word"));
        let e = extract_paragraphs(&doc("d", text), Lang::En).unwrap();
        assert_eq!(e.paragraphs.len(), 1);
        let p = &e.paragraphs[0];
        assert_eq!(p.token_count, 60);
        assert_eq!(p.anchors.len(), 2);
        for a in &p.anchors {
            assert!(!slice_chars(&p.text, a.span.start, a.span.end).unwrap().is_empty());
        }
    }

    #[test]
    fn token_filter_keeps_only_in_range() {
        let text = [words(30, "a"), words(100, "b"), words(600, "c")].join("\n\n");
        let e = extract_paragraphs(&doc("d", text), Lang::En).unwrap();
        assert_eq!(e.paragraphs.len(), 3);
        let kept = TokenFilter::default().apply(e.paragraphs);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].token_count, 100);
    }

    #[test]
    fn bounds_are_inclusive() {
        let text = [words(49, "a"), words(50, "b"), words(512, "c"), words(513, "d")].join("\n\n");
        let e = extract_paragraphs(&doc("d", text), Lang::En).unwrap();
        let kept: Vec<usize> = TokenFilter::default().apply(e.paragraphs).iter().map(|p| p.token_count).collect();
        assert_eq!(kept, vec![50, 512]);
    }

    #[test]
    fn unbalanced_paragraph_skipped_and_reported() {
        let text = format!("{}\n\nbad [[link {}", words(60, "ok"), words(60, "x"));
        let e = extract_paragraphs(&doc("d", text), Lang::En).unwrap();
        assert_eq!(e.paragraphs.len(), 1);
        assert_eq!(e.skipped_unbalanced, vec!["d#0001".to_string()]);
    }

    #[test]
    fn malformed_document_names_offset() {
        let err = extract_paragraphs(&doc("d", "text {{unclosed".into()), Lang::En).unwrap_err();
        assert!(matches!(err, CorpusError::Markup { offset: 5, .. }));
        let src = "{\"id\":\"a\",\"lang\":\"en\",\"title\":\"t\",\"wikitext\":\"x\"}\n{\"id\": 5}\n";
        match read_documents(src.as_bytes()) {
            Err(CorpusError::Record { line: 2, offset, .. }) => assert!(offset >= 51),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn classification_via_mock_backend() {
        let rules = MockRuleSet::from_json(
            r#"{"classify":{"rules":[{"keywords":["born","CEO"],"domain":"Person"},{"keywords":["star cluster"],"domain":"Astronomy"}]}}"#,
        )
        .unwrap();
        let mock = MockBackend::new(rules).unwrap();
        let p = |t: &str| Paragraph {
            id: "p".into(),
            lang: Lang::En,
            text: t.into(),
            token_count: 0,
            domain: None,
            anchors: vec![],
        };
        assert_eq!(classify_domain(&p("He is the CEO of a firm."), &mock).unwrap(), DomainLabel::Person);
        assert_eq!(classify_domain(&p("M45 is an open star cluster."), &mock).unwrap(), DomainLabel::Astronomy);
        assert_eq!(classify_domain(&p(""), &mock).unwrap(), DomainLabel::GPE);
    }

    #[test]
    fn span_rejects_inverted_intervals() {
        assert!(serde_json::from_str::<Span>("[3,1]").is_err());
        assert_eq!(serde_json::to_string(&Span::new(1, 3)).unwrap(), "[1,3]");
    }
}
