//! The blog post state machine.
//!
//! A [`Workspace`] owns the source document, its outline and the post being
//! written. Every section carries its own [`SectionWorkspace`]: selections,
//! drafting inputs, toggles and append-only generation and modification
//! histories. Generation and modification never touch a section body; only
//! [`Workspace::apply_edit`] does, and each call logs exactly one writing
//! action.
//!
//! Mutations bump `state_version` and queue [`InteractionEvent`]s in an
//! outbox that the caller drains with [`Workspace::take_events`].

mod replay;
mod warm_start;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::doc::{word_count, ParaId, SourceDocument};
use crate::gateway::{CompletionProvider, CompletionRequest, CompletionResult, GatewayError, Purpose};
use crate::outline::{
    self, grounding_set, select_initial, BulletId, Outline, OutlineError, SelectionState,
};
use crate::prompt::{
    self, GenerationContext, LengthChoice, ModificationContext, ModificationKind, PromptError,
    SectionGuidelines, SectionKind,
};
use crate::store::events::{EventPayload, InteractionEvent, StructuralOp};

pub use replay::{replay_bodies, ReplayError};
pub use warm_start::{warm_start, warm_start_with};

pub const WORKSPACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SectionId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkspaceId(pub String);

impl fmt::Display for SectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for WorkspaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DraftError {
    #[error("unknown section {0}")]
    SectionNotFound(SectionId),
    #[error("section header must not be empty")]
    EmptyHeader,
    #[error("edit span {start}..{end} is outside a text of {len} characters")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("edit changes nothing")]
    EmptyEdit,
    #[error("no {kind} record at index {index} (history has {total})")]
    HistoryIndex {
        kind: HistoryKind,
        index: usize,
        total: usize,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Outline(#[from] OutlineError),
    #[error("provider call failed: {0}")]
    Provider(#[from] GatewayError),
}

/// Inputs that shape the next generation for one section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionWorkspace {
    pub selection: SelectionState,
    pub custom_bullets: String,
    pub custom_instructions: String,
    pub starting_text: String,
    pub context_toggle: bool,
    pub grounding_toggle: bool,
    pub length: LengthChoice,
    pub generations: Vec<GenerationRecord>,
    pub modifications: Vec<ModificationRecord>,
}

impl SectionWorkspace {
    pub fn new(guidelines: SectionGuidelines, selection: SelectionState) -> Self {
        SectionWorkspace {
            selection,
            custom_bullets: String::new(),
            custom_instructions: guidelines.text,
            starting_text: String::new(),
            context_toggle: true,
            grounding_toggle: true,
            length: LengthChoice::Auto,
            generations: Vec::new(),
            modifications: Vec::new(),
        }
    }

    fn field_mut(&mut self, target: EditTarget) -> Option<&mut String> {
        match target {
            EditTarget::Body => None,
            EditTarget::CustomBullets => Some(&mut self.custom_bullets),
            EditTarget::CustomInstructions => Some(&mut self.custom_instructions),
            EditTarget::StartingText => Some(&mut self.starting_text),
        }
    }
}

/// Everything a generation prompt was rendered from. Re-rendering these
/// inputs against the same document and outline yields the same bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationInputs {
    pub title: String,
    pub header: String,
    pub selected_bullets: Vec<BulletId>,
    pub selected_paragraphs: Vec<ParaId>,
    pub custom_bullets: String,
    pub custom_instructions: String,
    pub starting_text: String,
    pub context_toggle: bool,
    pub length: LengthChoice,
    /// The text of earlier sections when the context toggle was on.
    pub prior_sections: Option<String>,
    pub template_version: String,
}

impl GenerationInputs {
    pub fn selection(&self) -> SelectionState {
        SelectionState {
            selected_bullets: self.selected_bullets.iter().cloned().collect(),
            selected_paragraphs: self.selected_paragraphs.iter().cloned().collect(),
        }
    }

    pub fn render_prompt(&self, doc: &SourceDocument, outline: &Outline) -> String {
        let grounding = grounding_set(outline, doc, &self.selection());
        prompt::generation_prompt(&GenerationContext {
            title: &self.title,
            header: &self.header,
            prior_sections: self.prior_sections.as_deref(),
            grounding: &grounding,
            custom_bullets: &self.custom_bullets,
            instructions: &self.custom_instructions,
            length: self.length,
            starting_text: &self.starting_text,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub inputs: GenerationInputs,
    pub output: String,
    pub timestamp: Timestamp,
    pub provider_id: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

/// Per-request options for a modification. Missing fields take the
/// [`ModificationOptions::standard`] values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModificationOptions {
    pub length: LengthChoice,
    pub grounding_toggle: bool,
    pub context_toggle: bool,
    pub instructions: String,
}

impl Default for ModificationOptions {
    fn default() -> Self {
        ModificationOptions::standard()
    }
}

impl ModificationOptions {
    /// Both toggles on, automatic length, no instructions.
    pub fn standard() -> Self {
        ModificationOptions {
            length: LengthChoice::Auto,
            grounding_toggle: true,
            context_toggle: true,
            instructions: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModificationRecord {
    pub kind: ModificationKind,
    pub input_text: String,
    pub instructions: String,
    pub length: LengthChoice,
    pub grounding_toggle: bool,
    pub context_toggle: bool,
    pub selected_bullets: Vec<BulletId>,
    pub selected_paragraphs: Vec<ParaId>,
    pub prior_sections: Option<String>,
    pub output: String,
    pub timestamp: Timestamp,
    pub template_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlogSection {
    pub section_id: SectionId,
    pub header: String,
    pub kind: SectionKind,
    pub body: String,
    pub position: usize,
    pub workspace: SectionWorkspace,
    /// Why warm start left this section empty, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start_error: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

/// Header and body of one section, without the workspace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionText {
    pub section_id: SectionId,
    pub header: String,
    pub body: String,
}

/// Full draft text: headers and bodies in position order.
pub fn render_preview<'a>(sections: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    sections
        .into_iter()
        .map(|(header, body)| {
            if body.is_empty() {
                header.to_string()
            } else {
                format!("{header}\n\n{body}")
            }
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlogPost {
    pub title: String,
    pub sections: Vec<BlogSection>,
    pub next_section_seq: u64,
}

impl BlogPost {
    pub fn new(title: impl Into<String>) -> Self {
        BlogPost {
            title: title.into(),
            sections: Vec::new(),
            next_section_seq: 1,
        }
    }

    pub fn section(&self, id: &SectionId) -> Option<&BlogSection> {
        self.sections.iter().find(|s| &s.section_id == id)
    }

    fn index_of(&self, id: &SectionId) -> Result<usize, DraftError> {
        self.sections
            .iter()
            .position(|s| &s.section_id == id)
            .ok_or_else(|| DraftError::SectionNotFound(id.clone()))
    }

    fn allocate_id(&mut self) -> SectionId {
        let id = SectionId(format!("s{}", self.next_section_seq));
        self.next_section_seq += 1;
        id
    }

    fn renumber(&mut self) {
        for (i, s) in self.sections.iter_mut().enumerate() {
            s.position = i;
        }
    }

    pub fn word_count_total(&self) -> usize {
        self.sections.iter().map(|s| word_count(&s.body)).sum()
    }

    pub fn render_preview(&self) -> String {
        render_preview(
            self.sections
                .iter()
                .map(|s| (s.header.as_str(), s.body.as_str())),
        )
    }

    /// Markdown export: the title as a first-level heading and each section
    /// header as a second-level heading.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("# {}\n", self.title);
        for s in &self.sections {
            out.push_str(&format!("\n## {}\n", s.header));
            if !s.body.is_empty() {
                out.push('\n');
                out.push_str(&s.body);
                out.push('\n');
            }
        }
        out
    }

    pub fn texts(&self) -> Vec<SectionText> {
        self.sections
            .iter()
            .map(|s| SectionText {
                section_id: s.section_id.clone(),
                header: s.header.clone(),
                body: s.body.clone(),
            })
            .collect()
    }

    /// Text of the sections above `index`, as the provider sees it.
    fn prior_text(&self, index: usize) -> Option<String> {
        let text = self.sections[..index]
            .iter()
            .filter(|s| !s.body.trim().is_empty())
            .map(|s| format!("## {}\n\n{}", s.header, s.body))
            .collect::<Vec<_>>()
            .join("\n\n");
        (!text.is_empty()).then_some(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddMode {
    Blank,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MoveOutcome {
    Moved { position: usize },
    Unchanged { notice: String },
}

/// Which text field an edit applies to. Edits to instruction fields count as
/// writing actions too.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditTarget {
    Body,
    CustomBullets,
    CustomInstructions,
    StartingText,
}

/// A span edit. Offsets count Unicode scalar values; a paste is one insert.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextEdit {
    Insert { at: usize, text: String },
    Delete { start: usize, end: usize },
}

impl TextEdit {
    pub fn apply(&self, text: &str) -> Result<String, DraftError> {
        let len = text.chars().count();
        let byte_at = |char_idx: usize| {
            text.char_indices()
                .nth(char_idx)
                .map(|(b, _)| b)
                .unwrap_or(text.len())
        };
        match self {
            TextEdit::Insert { at, text: ins } => {
                if *at > len {
                    return Err(DraftError::SpanOutOfBounds { start: *at, end: *at, len });
                }
                if ins.is_empty() {
                    return Err(DraftError::EmptyEdit);
                }
                let b = byte_at(*at);
                Ok(format!("{}{}{}", &text[..b], ins, &text[b..]))
            }
            TextEdit::Delete { start, end } => {
                if start > end || *end > len {
                    return Err(DraftError::SpanOutOfBounds {
                        start: *start,
                        end: *end,
                        len,
                    });
                }
                if start == end {
                    return Err(DraftError::EmptyEdit);
                }
                let (bs, be) = (byte_at(*start), byte_at(*end));
                Ok(format!("{}{}", &text[..bs], &text[be..]))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryKind {
    Generation,
    Modification,
}

impl fmt::Display for HistoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HistoryKind::Generation => "generation",
            HistoryKind::Modification => "modification",
        })
    }
}

/// One page of a section's history; `index` is 1-based, as shown in the pager.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryPage<'a, T> {
    pub index: usize,
    pub total: usize,
    pub record: &'a T,
}

impl<T> HistoryPage<'_, T> {
    pub fn label(&self) -> String {
        format!("{}/{}", self.index, self.total)
    }
}

pub fn pager_label(total: usize) -> String {
    format!("{total}/{total}")
}

/// Toggle and length changes for a section's drafting inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SettingsPatch {
    pub context_toggle: Option<bool>,
    pub grounding_toggle: Option<bool>,
    pub length: Option<LengthChoice>,
}

/// A rendered generation prompt waiting for the provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedGeneration {
    pub section_id: SectionId,
    pub inputs: GenerationInputs,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedModification {
    pub section_id: SectionId,
    pub record: ModificationRecord,
    pub prompt: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Workspace {
    pub format_version: u32,
    pub workspace_id: WorkspaceId,
    pub template_version: String,
    pub state_version: u64,
    pub created_at: Timestamp,
    pub document: SourceDocument,
    pub outline: Outline,
    pub post: BlogPost,
    /// Sections exactly as warm start produced them.
    pub initial_draft: Vec<SectionText>,
    #[serde(skip)]
    outbox: Vec<InteractionEvent>,
}

/// Equality over persisted state; queued events are not compared.
impl PartialEq for Workspace {
    fn eq(&self, other: &Self) -> bool {
        self.format_version == other.format_version
            && self.workspace_id == other.workspace_id
            && self.template_version == other.template_version
            && self.state_version == other.state_version
            && self.created_at == other.created_at
            && self.document == other.document
            && self.outline == other.outline
            && self.post == other.post
            && self.initial_draft == other.initial_draft
    }
}

impl Eq for Workspace {}

impl Workspace {
    pub fn new(
        workspace_id: WorkspaceId,
        document: SourceDocument,
        outline: Outline,
        post: BlogPost,
        created_at: Timestamp,
    ) -> Self {
        let initial_draft = post.texts();
        Workspace {
            format_version: WORKSPACE_FORMAT_VERSION,
            workspace_id,
            template_version: prompt::template_version().to_string(),
            state_version: 0,
            created_at,
            document,
            outline,
            post,
            initial_draft,
            outbox: Vec::new(),
        }
    }

    /// Drains events queued by mutations since the last call.
    pub fn take_events(&mut self) -> Vec<InteractionEvent> {
        std::mem::take(&mut self.outbox)
    }

    pub fn initial_preview(&self) -> String {
        render_preview(
            self.initial_draft
                .iter()
                .map(|s| (s.header.as_str(), s.body.as_str())),
        )
    }

    pub fn section(&self, id: &SectionId) -> Result<&BlogSection, DraftError> {
        self.post
            .section(id)
            .ok_or_else(|| DraftError::SectionNotFound(id.clone()))
    }

    fn section_mut(&mut self, id: &SectionId) -> Result<&mut BlogSection, DraftError> {
        let idx = self.post.index_of(id)?;
        Ok(&mut self.post.sections[idx])
    }

    fn emit(&mut self, now: Timestamp, payload: EventPayload) {
        self.outbox
            .push(InteractionEvent::new(now, self.workspace_id.clone(), payload));
    }

    fn provider_event(
        &mut self,
        now: Timestamp,
        purpose: Purpose,
        section: Option<&SectionId>,
        outcome: Result<(), &GatewayError>,
    ) {
        self.emit(
            now,
            EventPayload::ProviderCall {
                purpose,
                section_id: section.cloned(),
                ok: outcome.is_ok(),
                detail: outcome.err().map(|e| e.to_string()),
            },
        );
    }

    fn bump(&mut self) {
        self.state_version += 1;
    }

    // -- selection ---------------------------------------------------------

    pub fn toggle_bullet(
        &mut self,
        section: &SectionId,
        bullet: &BulletId,
        now: Timestamp,
    ) -> Result<&SelectionState, DraftError> {
        let idx = self.post.index_of(section)?;
        let next = outline::toggle_bullet(
            &self.post.sections[idx].workspace.selection,
            &self.outline,
            bullet,
        )?;
        self.post.sections[idx].workspace.selection = next;
        self.bump();
        self.emit(
            now,
            EventPayload::UiAction {
                section_id: Some(section.clone()),
                action: format!("toggle_bullet:{bullet}"),
            },
        );
        Ok(&self.post.sections[idx].workspace.selection)
    }

    pub fn toggle_paragraph(
        &mut self,
        section: &SectionId,
        para: &ParaId,
        now: Timestamp,
    ) -> Result<&SelectionState, DraftError> {
        let idx = self.post.index_of(section)?;
        let next = outline::toggle_paragraph(
            &self.post.sections[idx].workspace.selection,
            &self.outline,
            para,
        )?;
        self.post.sections[idx].workspace.selection = next;
        self.bump();
        self.emit(
            now,
            EventPayload::UiAction {
                section_id: Some(section.clone()),
                action: format!("toggle_paragraph:{para}"),
            },
        );
        Ok(&self.post.sections[idx].workspace.selection)
    }

    pub fn clear_selection(&mut self, section: &SectionId, now: Timestamp) -> Result<(), DraftError> {
        self.section_mut(section)?.workspace.selection = SelectionState::default();
        self.bump();
        self.emit(
            now,
            EventPayload::UiAction {
                section_id: Some(section.clone()),
                action: "clear_selection".into(),
            },
        );
        Ok(())
    }

    pub fn update_settings(
        &mut self,
        section: &SectionId,
        patch: &SettingsPatch,
        now: Timestamp,
    ) -> Result<(), DraftError> {
        let ws = &mut self.section_mut(section)?.workspace;
        if let Some(v) = patch.context_toggle {
            ws.context_toggle = v;
        }
        if let Some(v) = patch.grounding_toggle {
            ws.grounding_toggle = v;
        }
        if let Some(v) = patch.length {
            ws.length = v;
        }
        self.bump();
        self.emit(
            now,
            EventPayload::UiAction {
                section_id: Some(section.clone()),
                action: "update_settings".into(),
            },
        );
        Ok(())
    }

    // -- generation --------------------------------------------------------

    pub fn prepare_generation(&self, section: &SectionId) -> Result<PreparedGeneration, DraftError> {
        let idx = self.post.index_of(section)?;
        let s = &self.post.sections[idx];
        let ws = &s.workspace;
        let inputs = GenerationInputs {
            title: self.document.title.clone(),
            header: s.header.clone(),
            selected_bullets: ws.selection.selected_bullets.iter().cloned().collect(),
            selected_paragraphs: ws.selection.selected_paragraphs.iter().cloned().collect(),
            custom_bullets: ws.custom_bullets.clone(),
            custom_instructions: ws.custom_instructions.clone(),
            starting_text: ws.starting_text.clone(),
            context_toggle: ws.context_toggle,
            length: ws.length,
            prior_sections: if ws.context_toggle {
                self.post.prior_text(idx)
            } else {
                None
            },
            template_version: self.template_version.clone(),
        };
        let prompt = inputs.render_prompt(&self.document, &self.outline);
        Ok(PreparedGeneration {
            section_id: section.clone(),
            inputs,
            prompt,
        })
    }

    /// Appends the provider's answer to the section's history. Fails if the
    /// section was deleted while the request was in flight.
    pub fn commit_generation(
        &mut self,
        prepared: PreparedGeneration,
        result: CompletionResult,
        now: Timestamp,
    ) -> Result<&GenerationRecord, DraftError> {
        let idx = self.post.index_of(&prepared.section_id)?;
        let record = GenerationRecord {
            inputs: prepared.inputs,
            output: result.text,
            timestamp: now,
            provider_id: result.provider_id,
            degraded: result.degraded,
        };
        self.post.sections[idx].workspace.generations.push(record);
        self.bump();
        self.provider_event(now, Purpose::Generation, Some(&prepared.section_id), Ok(()));
        Ok(self.post.sections[idx]
            .workspace
            .generations
            .last()
            .expect("just pushed"))
    }

    pub fn record_provider_failure(
        &mut self,
        purpose: Purpose,
        section: Option<&SectionId>,
        err: &GatewayError,
        now: Timestamp,
    ) {
        self.provider_event(now, purpose, section, Err(err));
    }

    /// Renders the section's generation prompt from its live inputs, calls
    /// the provider, and records the result in history. The body is left
    /// alone.
    pub fn generate_section(
        &mut self,
        section: &SectionId,
        provider: &dyn CompletionProvider,
        now: Timestamp,
    ) -> Result<&GenerationRecord, DraftError> {
        let prepared = self.prepare_generation(section)?;
        let req = CompletionRequest::new(Purpose::Generation, prepared.prompt.clone());
        match provider.complete(&req) {
            Ok(result) => self.commit_generation(prepared, result, now),
            Err(err) => {
                self.record_provider_failure(Purpose::Generation, Some(section), &err, now);
                Err(err.into())
            }
        }
    }

    // -- modification ------------------------------------------------------

    pub fn prepare_modification(
        &self,
        section: &SectionId,
        kind: ModificationKind,
        text: &str,
        options: &ModificationOptions,
    ) -> Result<PreparedModification, DraftError> {
        let idx = self.post.index_of(section)?;
        let ws = &self.post.sections[idx].workspace;
        let (bullets, paras): (Vec<BulletId>, Vec<ParaId>) = if options.grounding_toggle {
            (
                ws.selection.selected_bullets.iter().cloned().collect(),
                ws.selection.selected_paragraphs.iter().cloned().collect(),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        let record = ModificationRecord {
            kind,
            input_text: text.to_string(),
            instructions: options.instructions.clone(),
            length: options.length,
            grounding_toggle: options.grounding_toggle,
            context_toggle: options.context_toggle,
            selected_bullets: bullets,
            selected_paragraphs: paras,
            prior_sections: if options.context_toggle {
                self.post.prior_text(idx)
            } else {
                None
            },
            output: String::new(),
            timestamp: Timestamp::default(),
            template_version: self.template_version.clone(),
        };
        let prompt = render_modification(&record, &self.document, &self.outline)?;
        Ok(PreparedModification {
            section_id: section.clone(),
            record,
            prompt,
        })
    }

    pub fn commit_modification(
        &mut self,
        prepared: PreparedModification,
        result: CompletionResult,
        now: Timestamp,
    ) -> Result<&ModificationRecord, DraftError> {
        let idx = self.post.index_of(&prepared.section_id)?;
        let mut record = prepared.record;
        record.output = result.text;
        record.timestamp = now;
        self.post.sections[idx].workspace.modifications.push(record);
        self.bump();
        self.provider_event(now, Purpose::Modification, Some(&prepared.section_id), Ok(()));
        Ok(self.post.sections[idx]
            .workspace
            .modifications
            .last()
            .expect("just pushed"))
    }

    pub fn modify_text(
        &mut self,
        section: &SectionId,
        kind: ModificationKind,
        text: &str,
        options: &ModificationOptions,
        provider: &dyn CompletionProvider,
        now: Timestamp,
    ) -> Result<&ModificationRecord, DraftError> {
        let prepared = self.prepare_modification(section, kind, text, options)?;
        let req = CompletionRequest::new(Purpose::Modification, prepared.prompt.clone());
        match provider.complete(&req) {
            Ok(result) => self.commit_modification(prepared, result, now),
            Err(err) => {
                self.record_provider_failure(Purpose::Modification, Some(section), &err, now);
                Err(err.into())
            }
        }
    }

    // -- structure ---------------------------------------------------------

    /// Inserts a section directly below `after`. In generated mode the new
    /// section gets its own initial bullet selection and one generation in
    /// history; its body stays empty. Nothing changes if a provider call fails.
    pub fn add_section(
        &mut self,
        after: &SectionId,
        header: &str,
        mode: AddMode,
        provider: &dyn CompletionProvider,
        now: Timestamp,
    ) -> Result<SectionId, DraftError> {
        let header = header.trim();
        if header.is_empty() {
            return Err(DraftError::EmptyHeader);
        }
        let after_idx = self.post.index_of(after)?;
        let selection = match mode {
            AddMode::Blank => SelectionState::default(),
            AddMode::Generated => match select_initial(&self.outline, header, provider) {
                Ok(sel) => SelectionState::with_bullets(sel.bullet_ids),
                Err(err) => {
                    if let OutlineError::Selection { source, .. } = &err {
                        self.record_provider_failure(Purpose::Selection, None, source, now);
                    }
                    return Err(err.into());
                }
            },
        };

        let mut candidate = self.post.clone();
        let id = candidate.allocate_id();
        candidate.sections.insert(
            after_idx + 1,
            BlogSection {
                section_id: id.clone(),
                header: header.to_string(),
                kind: SectionKind::Custom,
                body: String::new(),
                position: after_idx + 1,
                workspace: SectionWorkspace::new(
                    SectionGuidelines::default_for(SectionKind::Custom),
                    selection,
                ),
                warm_start_error: None,
                degraded: false,
            },
        );
        candidate.renumber();

        let previous = std::mem::replace(&mut self.post, candidate);
        if mode == AddMode::Generated {
            if let Err(err) = self.generate_section(&id, provider, now) {
                self.post = previous;
                return Err(err);
            }
        }
        self.bump();
        self.emit(
            now,
            EventPayload::Structural {
                op: StructuralOp::Add {
                    section_id: id.clone(),
                    after: after.clone(),
                    header: header.to_string(),
                    mode,
                },
            },
        );
        Ok(id)
    }

    pub fn move_section(
        &mut self,
        section: &SectionId,
        direction: Direction,
        now: Timestamp,
    ) -> Result<MoveOutcome, DraftError> {
        let idx = self.post.index_of(section)?;
        let target = match direction {
            Direction::Up => idx.checked_sub(1),
            Direction::Down => (idx + 1 < self.post.sections.len()).then_some(idx + 1),
        };
        let Some(target) = target else {
            let edge = if direction == Direction::Up { "first" } else { "last" };
            return Ok(MoveOutcome::Unchanged {
                notice: format!("section {section} is already the {edge} section"),
            });
        };
        self.post.sections.swap(idx, target);
        self.post.renumber();
        self.bump();
        self.emit(
            now,
            EventPayload::Structural {
                op: StructuralOp::Move {
                    section_id: section.clone(),
                    direction,
                },
            },
        );
        Ok(MoveOutcome::Moved { position: target })
    }

    pub fn delete_section(&mut self, section: &SectionId, now: Timestamp) -> Result<(), DraftError> {
        let idx = self.post.index_of(section)?;
        self.post.sections.remove(idx);
        self.post.renumber();
        self.bump();
        self.emit(
            now,
            EventPayload::Structural {
                op: StructuralOp::Delete {
                    section_id: section.clone(),
                },
            },
        );
        Ok(())
    }

    // -- editing -----------------------------------------------------------

    /// Applies one span edit and logs it as a single writing action.
    /// Returns the edited field's new text.
    pub fn apply_edit(
        &mut self,
        section: &SectionId,
        target: EditTarget,
        edit: TextEdit,
        now: Timestamp,
    ) -> Result<&str, DraftError> {
        let idx = self.post.index_of(section)?;
        let s = &mut self.post.sections[idx];
        let field = match s.workspace.field_mut(target) {
            Some(f) => f,
            None => &mut s.body,
        };
        *field = edit.apply(field)?;
        self.bump();
        self.emit(
            now,
            EventPayload::WritingAction {
                section_id: section.clone(),
                target,
                edit,
            },
        );
        let s = &self.post.sections[idx];
        Ok(match target {
            EditTarget::Body => &s.body,
            EditTarget::CustomBullets => &s.workspace.custom_bullets,
            EditTarget::CustomInstructions => &s.workspace.custom_instructions,
            EditTarget::StartingText => &s.workspace.starting_text,
        })
    }

    // -- history -----------------------------------------------------------

    pub fn generation_page(
        &self,
        section: &SectionId,
        index: Option<usize>,
    ) -> Result<HistoryPage<'_, GenerationRecord>, DraftError> {
        page(&self.section(section)?.workspace.generations, HistoryKind::Generation, index)
    }

    pub fn modification_page(
        &self,
        section: &SectionId,
        index: Option<usize>,
    ) -> Result<HistoryPage<'_, ModificationRecord>, DraftError> {
        page(&self.section(section)?.workspace.modifications, HistoryKind::Modification, index)
    }
}

/// `index` is 1-based; `None` means the latest record.
fn page<T>(
    records: &[T],
    kind: HistoryKind,
    index: Option<usize>,
) -> Result<HistoryPage<'_, T>, DraftError> {
    let total = records.len();
    let index = index.unwrap_or(total);
    if index == 0 || index > total {
        return Err(DraftError::HistoryIndex { kind, index, total });
    }
    Ok(HistoryPage {
        index,
        total,
        record: &records[index - 1],
    })
}

/// Re-renders the prompt a modification record was produced from.
pub fn render_modification(
    record: &ModificationRecord,
    doc: &SourceDocument,
    outline: &Outline,
) -> Result<String, PromptError> {
    let selection = SelectionState {
        selected_bullets: record.selected_bullets.iter().cloned().collect(),
        selected_paragraphs: record.selected_paragraphs.iter().cloned().collect(),
    };
    let grounding = if record.grounding_toggle {
        grounding_set(outline, doc, &selection)
    } else {
        Vec::new()
    };
    prompt::modification_prompt(&ModificationContext {
        title: &doc.title,
        kind: record.kind,
        text: &record.input_text,
        length: record.length,
        grounding: &grounding,
        prior_sections: record.prior_sections.as_deref(),
        instructions: &record.instructions,
    })
}
