//! Reverse source outline: one bullet group per source paragraph, plus the
//! per-section selection state over bullets and paragraphs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::doc::{bullet_quota, DocId, ParaId, SourceDocument};
use crate::exec::{map_ordered, ExecMode};
use crate::gateway::{CompletionProvider, CompletionRequest, GatewayError, Purpose};
use crate::prompt;

/// Number of bullets picked for each blog post section.
pub const SELECTION_SIZE: usize = 10;

/// Shown next to an unselected paragraph whose bullets are still selected.
pub const NOTE_BULLETS_STILL_SELECTED: &str = "A corresponding bulletpoint(s) is still selected";
/// Shown next to a bullet group whose paragraph is still selected.
pub const NOTE_PARAGRAPH_STILL_SELECTED: &str = "A corresponding paragraph is still selected";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BulletId(pub String);

impl BulletId {
    pub fn from_index(index: usize) -> Self {
        BulletId(format!("b{}", index + 1))
    }
}

impl fmt::Display for BulletId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BulletPoint {
    pub bullet_id: BulletId,
    pub para_id: ParaId,
    pub text: String,
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BulletGroup {
    pub para_id: ParaId,
    pub bullets: Vec<BulletPoint>,
    /// The provider never produced the right number of bullets; they were
    /// trimmed or split to fit the quota.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outline {
    pub doc_id: DocId,
    pub groups: Vec<BulletGroup>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OutlineError {
    #[error("document has no paragraphs")]
    EmptyDocument,
    #[error("outline has no bullets")]
    EmptyOutline,
    #[error("outline generation failed for paragraph {para_id}: {source}")]
    Provider {
        para_id: ParaId,
        #[source]
        source: GatewayError,
    },
    #[error("bullet selection failed for section {header:?}: {source}")]
    Selection {
        header: String,
        #[source]
        source: GatewayError,
    },
    #[error("unknown bullet id {0}")]
    UnknownBullet(BulletId),
    #[error("unknown paragraph id {0}")]
    UnknownParagraph(ParaId),
}

impl Outline {
    pub fn bullets(&self) -> impl Iterator<Item = &BulletPoint> + '_ {
        self.groups.iter().flat_map(|g| g.bullets.iter())
    }

    pub fn bullet_count(&self) -> usize {
        self.groups.iter().map(|g| g.bullets.len()).sum()
    }

    pub fn bullet(&self, id: &BulletId) -> Option<&BulletPoint> {
        self.bullets().find(|b| &b.bullet_id == id)
    }

    pub fn group(&self, para: &ParaId) -> Option<&BulletGroup> {
        self.groups.iter().find(|g| &g.para_id == para)
    }

    pub fn has_paragraph(&self, para: &ParaId) -> bool {
        self.group(para).is_some()
    }

    pub fn is_degraded(&self) -> bool {
        self.groups.iter().any(|g| g.degraded)
    }
}

/// Builds the outline with one provider call per paragraph, scheduled per
/// [`ExecMode::default`].
pub fn build_outline(
    doc: &SourceDocument,
    provider: &dyn CompletionProvider,
) -> Result<Outline, OutlineError> {
    build_outline_with(doc, provider, ExecMode::default())
}

pub fn build_outline_with(
    doc: &SourceDocument,
    provider: &dyn CompletionProvider,
    mode: ExecMode,
) -> Result<Outline, OutlineError> {
    let paragraphs: Vec<_> = doc.paragraphs().collect();
    if paragraphs.is_empty() {
        return Err(OutlineError::EmptyDocument);
    }
    let texts = map_ordered(mode, &paragraphs, |p| {
        bullets_for_paragraph(&p.text, bullet_quota(p.word_count), provider).map_err(|source| {
            OutlineError::Provider {
                para_id: p.para_id.clone(),
                source,
            }
        })
    });

    let mut next_id = 0;
    let mut groups = Vec::with_capacity(paragraphs.len());
    for (para, result) in paragraphs.iter().zip(texts) {
        let (lines, degraded) = result?;
        let bullets = lines
            .into_iter()
            .enumerate()
            .map(|(ordinal, text)| {
                let bullet = BulletPoint {
                    bullet_id: BulletId::from_index(next_id),
                    para_id: para.para_id.clone(),
                    text,
                    ordinal,
                };
                next_id += 1;
                bullet
            })
            .collect();
        groups.push(BulletGroup {
            para_id: para.para_id.clone(),
            bullets,
            degraded,
        });
    }
    Ok(Outline {
        doc_id: doc.doc_id.clone(),
        groups,
    })
}

/// Asks for `quota` bullets, re-requesting once on a count mismatch, then
/// forces the count by trimming or splitting.
fn bullets_for_paragraph(
    paragraph: &str,
    quota: usize,
    provider: &dyn CompletionProvider,
) -> Result<(Vec<String>, bool), GatewayError> {
    let req = CompletionRequest::new(Purpose::Outline, prompt::outline_prompt(paragraph, quota));
    let mut lines = parse_bullet_lines(&provider.complete(&req)?.text);
    if lines.len() == quota {
        return Ok((lines, false));
    }
    let retry = parse_bullet_lines(&provider.complete(&req)?.text);
    if retry.len() == quota {
        return Ok((retry, false));
    }
    if retry.len() > lines.len() {
        lines = retry;
    }
    Ok((fit_to_quota(lines, paragraph, quota), true))
}

fn strip_list_marker(line: &str) -> &str {
    let t = line.trim();
    for marker in ["- ", "* ", "• ", "– "] {
        if let Some(rest) = t.strip_prefix(marker) {
            return rest.trim();
        }
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim();
        }
    }
    t
}

pub(crate) fn parse_bullet_lines(response: &str) -> Vec<String> {
    response
        .lines()
        .map(strip_list_marker)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

fn fit_to_quota(mut lines: Vec<String>, paragraph: &str, quota: usize) -> Vec<String> {
    lines.truncate(quota);
    while lines.len() < quota {
        let splittable = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.split_whitespace().count() >= 2)
            .max_by_key(|(i, l)| (l.split_whitespace().count(), std::cmp::Reverse(*i)))
            .map(|(i, _)| i);
        match splittable {
            Some(i) => {
                let (a, b) = split_near_middle(&lines[i]);
                lines.splice(i..=i, [a, b]);
            }
            None => {
                // nothing left to split; rebuild from the paragraph itself,
                // which always has at least `quota` words
                lines = vec![paragraph.split_whitespace().collect::<Vec<_>>().join(" ")];
            }
        }
    }
    lines
}

/// Splits at the sentence boundary closest to the middle, or at the middle
/// word when the text is a single sentence.
fn split_near_middle(text: &str) -> (String, String) {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mid = words.len() / 2;
    let boundary = (1..words.len())
        .filter(|&i| words[i - 1].ends_with(['.', '!', '?', ';']))
        .min_by_key(|&i| i.abs_diff(mid));
    let at = boundary.unwrap_or(mid.max(1));
    (words[..at].join(" "), words[at..].join(" "))
}

/// Result of asking the provider for a section's initial bullets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitialSelection {
    pub bullet_ids: Vec<BulletId>,
    pub degraded: bool,
}

/// Picks `min(10, total bullets)` bullets relevant to `section_header`.
/// Invalid or duplicate ids are dropped and the shortfall is requested once
/// more; whatever is valid after that is returned with `degraded` set.
pub fn select_initial(
    outline: &Outline,
    section_header: &str,
    provider: &dyn CompletionProvider,
) -> Result<InitialSelection, OutlineError> {
    let total = outline.bullet_count();
    if total == 0 {
        return Err(OutlineError::EmptyOutline);
    }
    let want = SELECTION_SIZE.min(total);
    let wrap = |source| OutlineError::Selection {
        header: section_header.to_string(),
        source,
    };

    let listing: Vec<(&BulletId, &str)> = outline
        .bullets()
        .map(|b| (&b.bullet_id, b.text.as_str()))
        .collect();
    let req = CompletionRequest::new(
        Purpose::Selection,
        prompt::selection_prompt(&listing, section_header, want),
    );
    let mut chosen = Vec::new();
    absorb_ids(outline, &provider.complete(&req).map_err(wrap)?.text, &mut chosen, want);
    if chosen.len() == want {
        return Ok(InitialSelection {
            bullet_ids: chosen,
            degraded: false,
        });
    }

    let shortfall = want - chosen.len();
    let remaining: Vec<(&BulletId, &str)> = listing
        .iter()
        .filter(|(id, _)| !chosen.contains(id))
        .copied()
        .collect();
    let req = CompletionRequest::new(
        Purpose::Selection,
        prompt::selection_prompt(&remaining, section_header, shortfall),
    );
    absorb_ids(outline, &provider.complete(&req).map_err(wrap)?.text, &mut chosen, want);
    let degraded = chosen.len() < want;
    Ok(InitialSelection {
        bullet_ids: chosen,
        degraded,
    })
}

/// Extracts ids such as `b7` (or a bare `7`) from a free-form response.
fn absorb_ids(outline: &Outline, response: &str, chosen: &mut Vec<BulletId>, cap: usize) {
    for token in response.split(|c: char| !c.is_ascii_alphanumeric()) {
        if chosen.len() >= cap {
            break;
        }
        if token.is_empty() {
            continue;
        }
        let id = if token.bytes().all(|b| b.is_ascii_digit()) {
            BulletId(format!("b{token}"))
        } else {
            BulletId(token.to_ascii_lowercase())
        };
        if outline.bullet(&id).is_some() && !chosen.contains(&id) {
            chosen.push(id);
        }
    }
}

/// Selected bullets and selected paragraphs. The two sets are independent:
/// toggling one never changes the other.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionState {
    pub selected_bullets: BTreeSet<BulletId>,
    pub selected_paragraphs: BTreeSet<ParaId>,
}

impl SelectionState {
    pub fn with_bullets(ids: impl IntoIterator<Item = BulletId>) -> Self {
        SelectionState {
            selected_bullets: ids.into_iter().collect(),
            selected_paragraphs: BTreeSet::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.selected_bullets.is_empty() && self.selected_paragraphs.is_empty()
    }
}

pub fn toggle_bullet(
    state: &SelectionState,
    outline: &Outline,
    id: &BulletId,
) -> Result<SelectionState, OutlineError> {
    if outline.bullet(id).is_none() {
        return Err(OutlineError::UnknownBullet(id.clone()));
    }
    let mut next = state.clone();
    if !next.selected_bullets.remove(id) {
        next.selected_bullets.insert(id.clone());
    }
    Ok(next)
}

pub fn toggle_paragraph(
    state: &SelectionState,
    outline: &Outline,
    id: &ParaId,
) -> Result<SelectionState, OutlineError> {
    if !outline.has_paragraph(id) {
        return Err(OutlineError::UnknownParagraph(id.clone()));
    }
    let mut next = state.clone();
    if !next.selected_paragraphs.remove(id) {
        next.selected_paragraphs.insert(id.clone());
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewTab {
    Bullets,
    Paragraphs,
}

/// One paragraph slot of a "selected only" view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub para_id: ParaId,
    /// Selected bullets of this paragraph (bullet tab), or the paragraph text
    /// itself when selected (paragraph tab).
    pub items: Vec<ViewItem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewItem {
    Bullet { bullet_id: BulletId, text: String },
    Paragraph { text: String },
}

pub fn selected_view(
    outline: &Outline,
    doc: &SourceDocument,
    state: &SelectionState,
    tab: ViewTab,
) -> Vec<ViewEntry> {
    let mut entries = Vec::new();
    for group in &outline.groups {
        let para_selected = state.selected_paragraphs.contains(&group.para_id);
        let bullets: Vec<&BulletPoint> = group
            .bullets
            .iter()
            .filter(|b| state.selected_bullets.contains(&b.bullet_id))
            .collect();
        let entry = match tab {
            ViewTab::Paragraphs if para_selected => Some(ViewEntry {
                para_id: group.para_id.clone(),
                items: vec![ViewItem::Paragraph {
                    text: doc
                        .paragraph(&group.para_id)
                        .map(|p| p.text.clone())
                        .unwrap_or_default(),
                }],
                note: None,
            }),
            ViewTab::Paragraphs if !bullets.is_empty() => Some(ViewEntry {
                para_id: group.para_id.clone(),
                items: Vec::new(),
                note: Some(NOTE_BULLETS_STILL_SELECTED.to_string()),
            }),
            ViewTab::Bullets if !bullets.is_empty() => Some(ViewEntry {
                para_id: group.para_id.clone(),
                items: bullets
                    .iter()
                    .map(|b| ViewItem::Bullet {
                        bullet_id: b.bullet_id.clone(),
                        text: b.text.clone(),
                    })
                    .collect(),
                note: None,
            }),
            ViewTab::Bullets if para_selected => Some(ViewEntry {
                para_id: group.para_id.clone(),
                items: Vec::new(),
                note: Some(NOTE_PARAGRAPH_STILL_SELECTED.to_string()),
            }),
            _ => None,
        };
        entries.extend(entry);
    }
    entries
}

/// A paragraph sent to the provider for grounding, with the selected bullets
/// that pulled it in (empty when only the paragraph itself was selected).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingGroup {
    pub para_id: ParaId,
    pub paragraph: String,
    pub bullets: Vec<String>,
}

/// Every selected bullet brings its paragraph; every selected paragraph
/// contributes itself. One entry per paragraph, in document order.
pub fn grounding_set(
    outline: &Outline,
    doc: &SourceDocument,
    state: &SelectionState,
) -> Vec<GroundingGroup> {
    fn entry<'m>(
        by_para: &'m mut BTreeMap<usize, GroundingGroup>,
        doc: &SourceDocument,
        para: &ParaId,
    ) -> Option<&'m mut GroundingGroup> {
        let idx = doc.paragraph_index(para)?;
        let text = &doc.paragraph(para)?.text;
        Some(by_para.entry(idx).or_insert_with(|| GroundingGroup {
            para_id: para.clone(),
            paragraph: text.clone(),
            bullets: Vec::new(),
        }))
    }
    let mut by_para: BTreeMap<usize, GroundingGroup> = BTreeMap::new();
    for group in &outline.groups {
        for bullet in &group.bullets {
            if state.selected_bullets.contains(&bullet.bullet_id) {
                if let Some(g) = entry(&mut by_para, doc, &bullet.para_id) {
                    g.bullets.push(bullet.text.clone());
                }
            }
        }
        if state.selected_paragraphs.contains(&group.para_id) {
            entry(&mut by_para, doc, &group.para_id);
        }
    }
    by_para.into_values().collect()
}
