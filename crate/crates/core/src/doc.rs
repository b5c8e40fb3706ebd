//! Paragraph-addressed source documents.
//!
//! Two ingestion paths exist: a structured JSON record and markdown. Both
//! produce a [`SourceDocument`] whose paragraphs carry stable identifiers
//! (`p1`, `p2`, ... in document order) and whitespace word counts. Those
//! identifiers are what every bullet, selection and grounding block refers to.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Section title used for content that appears before the first heading.
pub const PREAMBLE_HEADER: &str = "Preamble";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DocError {
    #[error("invalid field `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("malformed document payload: {0}")]
    Malformed(String),
    #[error("document is empty: {0}")]
    Empty(&'static str),
}

impl DocError {
    fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        DocError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParaId(pub String);

impl ParaId {
    pub fn from_index(index: usize) -> Self {
        ParaId(format!("p{}", index + 1))
    }
}

impl fmt::Display for ParaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceParagraph {
    pub para_id: ParaId,
    pub text: String,
    pub word_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSection {
    pub header: String,
    pub paragraphs: Vec<SourceParagraph>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: DocId,
    pub title: String,
    pub sections: Vec<SourceSection>,
}

impl SourceDocument {
    pub fn paragraphs(&self) -> impl Iterator<Item = &SourceParagraph> + '_ {
        self.sections.iter().flat_map(|s| s.paragraphs.iter())
    }

    pub fn paragraph_count(&self) -> usize {
        self.sections.iter().map(|s| s.paragraphs.len()).sum()
    }

    pub fn paragraph(&self, id: &ParaId) -> Option<&SourceParagraph> {
        self.paragraphs().find(|p| &p.para_id == id)
    }

    /// Position of a paragraph in document order.
    pub fn paragraph_index(&self, id: &ParaId) -> Option<usize> {
        self.paragraphs().position(|p| &p.para_id == id)
    }

    /// Serializes back to markdown that [`ingest_markdown`] reads into the same
    /// sections and byte-identical paragraph texts.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for section in &self.sections {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str("# ");
            out.push_str(&section.header);
            out.push('\n');
            for para in &section.paragraphs {
                out.push('\n');
                out.push_str(&para.text);
                out.push('\n');
            }
        }
        out
    }
}

/// Whitespace-delimited token count (Unicode whitespace, no punctuation stripping).
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Number of outline bullets a paragraph of `word_count` words receives.
pub fn bullet_quota(word_count: usize) -> usize {
    match word_count {
        0..=50 => 1,
        51..=100 => 2,
        _ => 3,
    }
}

/// The structured-record ingestion format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredDocument {
    pub title: String,
    pub sections: Vec<StructuredSection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredSection {
    pub header: String,
    #[serde(default)]
    pub paragraphs: Vec<String>,
}

pub fn ingest_structured_json(json: &str) -> Result<SourceDocument, DocError> {
    let payload: StructuredDocument =
        serde_json::from_str(json).map_err(|e| DocError::Malformed(e.to_string()))?;
    ingest_structured(&payload)
}

pub fn ingest_structured(payload: &StructuredDocument) -> Result<SourceDocument, DocError> {
    if payload.title.trim().is_empty() {
        return Err(DocError::field("title", "must not be empty"));
    }
    if payload.sections.is_empty() {
        return Err(DocError::Empty("no sections"));
    }
    for (si, section) in payload.sections.iter().enumerate() {
        if section.header.trim().is_empty() {
            return Err(DocError::field(
                format!("sections[{si}].header"),
                "must not be empty",
            ));
        }
        for (pi, text) in section.paragraphs.iter().enumerate() {
            if text.trim().is_empty() {
                return Err(DocError::field(
                    format!("sections[{si}].paragraphs[{pi}]"),
                    "must not be empty",
                ));
            }
        }
    }
    let raw = payload
        .sections
        .iter()
        .map(|s| (s.header.clone(), s.paragraphs.clone()))
        .collect();
    Ok(assemble(payload.title.clone(), raw))
}

/// Splits markdown into sections at ATX headings and into paragraphs at blank
/// lines. Content before the first heading lands in a [`PREAMBLE_HEADER`]
/// section. Headings inside fenced code blocks are ignored.
pub fn ingest_markdown(text: &str) -> Result<SourceDocument, DocError> {
    if text.trim().is_empty() {
        return Err(DocError::Empty("no text"));
    }

    let mut sections: Vec<(String, Vec<String>)> = Vec::new();
    let mut block: Vec<&str> = Vec::new();
    let mut in_fence = false;

    fn flush(block: &mut Vec<&str>, sections: &mut Vec<(String, Vec<String>)>) {
        if block.is_empty() {
            return;
        }
        if sections.is_empty() {
            sections.push((PREAMBLE_HEADER.to_string(), Vec::new()));
        }
        let para = block.join("\n");
        sections.last_mut().expect("section").1.push(para);
        block.clear();
    }

    for (lineno, line) in text.lines().enumerate() {
        if is_fence(line) {
            in_fence = !in_fence;
            block.push(line);
            continue;
        }
        if in_fence {
            block.push(line);
            continue;
        }
        if let Some(header) = atx_heading(line) {
            flush(&mut block, &mut sections);
            if header.is_empty() {
                return Err(DocError::field(
                    format!("line {}", lineno + 1),
                    "heading has no text",
                ));
            }
            sections.push((header.to_string(), Vec::new()));
        } else if line.trim().is_empty() {
            flush(&mut block, &mut sections);
        } else {
            block.push(line);
        }
    }
    flush(&mut block, &mut sections);

    if sections.iter().all(|(_, paras)| paras.is_empty()) {
        return Err(DocError::Empty("no paragraphs"));
    }
    let title = sections
        .iter()
        .map(|(h, _)| h.as_str())
        .find(|h| *h != PREAMBLE_HEADER)
        .unwrap_or(PREAMBLE_HEADER)
        .to_string();
    Ok(assemble(title, sections))
}

fn is_fence(line: &str) -> bool {
    let t = line.trim_start();
    line.len() - t.len() <= 3 && (t.starts_with("```") || t.starts_with("~~~"))
}

/// Returns the heading text when `line` is an ATX heading (`#` through `######`).
fn atx_heading(line: &str) -> Option<&str> {
    let t = line.trim_start_matches(' ');
    if line.len() - t.len() > 3 {
        return None;
    }
    let hashes = t.bytes().take_while(|b| *b == b'#').count();
    if !(1..=6).contains(&hashes) {
        return None;
    }
    let rest = &t[hashes..];
    if !(rest.is_empty() || rest.starts_with(' ') || rest.starts_with('\t')) {
        return None;
    }
    let rest = rest.trim();
    // closing sequence: `## Title ##`
    let stripped = rest.trim_end_matches('#');
    let rest = if stripped.is_empty() || stripped.ends_with(' ') {
        stripped.trim_end()
    } else {
        rest
    };
    Some(rest)
}

fn assemble(title: String, raw: Vec<(String, Vec<String>)>) -> SourceDocument {
    let mut hasher = Sha256::new();
    hasher.update(title.as_bytes());
    let mut next = 0usize;
    let sections = raw
        .into_iter()
        .map(|(header, paragraphs)| {
            hasher.update([0u8]);
            hasher.update(header.as_bytes());
            let paragraphs = paragraphs
                .into_iter()
                .map(|text| {
                    hasher.update([1u8]);
                    hasher.update(text.as_bytes());
                    let para = SourceParagraph {
                        para_id: ParaId::from_index(next),
                        word_count: word_count(&text),
                        text,
                    };
                    next += 1;
                    para
                })
                .collect();
            SourceSection {
                header: header.trim().to_string(),
                paragraphs,
            }
        })
        .collect();
    let digest = hasher.finalize();
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    SourceDocument {
        doc_id: DocId(format!("doc-{hex}")),
        title: title.trim().to_string(),
        sections,
    }
}
