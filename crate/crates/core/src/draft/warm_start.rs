use crate::clock::Timestamp;
use crate::doc::SourceDocument;
use crate::exec::{map_ordered, ExecMode};
use crate::gateway::{CompletionProvider, CompletionRequest, Purpose};
use crate::outline::{build_outline_with, select_initial, OutlineError, SelectionState};
use crate::prompt::{SectionGuidelines, SectionKind};

use super::{BlogPost, BlogSection, DraftError, SectionWorkspace, Workspace, WorkspaceId};

/// Builds the outline, picks initial bullets for the four default sections
/// and drafts them top to bottom, each seeing the sections above it.
///
/// Outline failure aborts. A section whose selection or generation fails is
/// left empty with `warm_start_error` set; the other sections still draft.
pub fn warm_start(
    doc: &SourceDocument,
    provider: &dyn CompletionProvider,
    now: Timestamp,
    workspace_id: WorkspaceId,
) -> Result<Workspace, DraftError> {
    warm_start_with(doc, provider, now, workspace_id, ExecMode::default())
}

pub fn warm_start_with(
    doc: &SourceDocument,
    provider: &dyn CompletionProvider,
    now: Timestamp,
    workspace_id: WorkspaceId,
    mode: ExecMode,
) -> Result<Workspace, DraftError> {
    let outline = build_outline_with(doc, provider, mode)?;
    let outline_degraded = outline.is_degraded();

    let kinds = SectionKind::INITIAL;
    let selections = map_ordered(mode, &kinds, |kind| {
        select_initial(&outline, kind.default_header(), provider)
    });

    let mut post = BlogPost::new(doc.title.clone());
    let mut failures = Vec::new();
    for (kind, selection) in kinds.iter().zip(selections) {
        let id = post.allocate_id();
        let (state, degraded, error) = match selection {
            Ok(sel) => (SelectionState::with_bullets(sel.bullet_ids), sel.degraded, None),
            Err(err) => {
                if let OutlineError::Selection { source, .. } = &err {
                    failures.push((id.clone(), source.clone()));
                }
                (SelectionState::default(), false, Some(err.to_string()))
            }
        };
        post.sections.push(BlogSection {
            section_id: id,
            header: kind.default_header().to_string(),
            kind: *kind,
            body: String::new(),
            position: post.sections.len(),
            workspace: SectionWorkspace::new(SectionGuidelines::default_for(*kind), state),
            warm_start_error: error,
            degraded,
        });
    }

    let mut ws = Workspace::new(workspace_id, doc.clone(), outline, post, now);
    for (id, err) in &failures {
        ws.record_provider_failure(Purpose::Selection, Some(id), err, now);
    }

    let ids: Vec<_> = ws.post.sections.iter().map(|s| s.section_id.clone()).collect();
    for id in ids {
        if ws.section(&id)?.warm_start_error.is_some() {
            continue;
        }
        let prepared = ws.prepare_generation(&id)?;
        let req = CompletionRequest::new(Purpose::Generation, prepared.prompt.clone());
        match provider.complete(&req) {
            Ok(result) => {
                let degraded = result.degraded;
                let output = ws.commit_generation(prepared, result, now)?.output.clone();
                let idx = ws.post.index_of(&id)?;
                let section = &mut ws.post.sections[idx];
                section.body = output;
                section.degraded |= degraded || outline_degraded;
            }
            Err(err) => {
                ws.record_provider_failure(Purpose::Generation, Some(&id), &err, now);
                let idx = ws.post.index_of(&id)?;
                ws.post.sections[idx].warm_start_error = Some(err.to_string());
            }
        }
    }

    ws.initial_draft = ws.post.texts();
    ws.state_version = 0;
    Ok(ws)
}
