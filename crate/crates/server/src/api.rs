//! HTTP routes. Every mutation of a workspace returns its new
//! `state_version`; non-idempotent mutations must send the version they were
//! computed against as `expected_version`.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use reverso_core::analytics::analyze_dir;
use reverso_core::doc::{ingest_markdown, ingest_structured, ParaId, StructuredDocument};
use reverso_core::draft::{
    pager_label, AddMode, BlogSection, Direction, EditTarget, HistoryKind, ModificationOptions,
    MoveOutcome, SectionId, SettingsPatch, TextEdit, Workspace, WorkspaceId,
};
use reverso_core::gateway::CancelToken;
use reverso_core::outline::{selected_view, BulletId, SelectionState, ViewTab};
use reverso_core::prompt::{LengthChoice, ModificationKind, SectionKind};

use crate::error::ApiError;
use crate::state::{AppState, CancelOnDrop, Cancellable, Session, Slot};

type ApiResult<T = Json<Value>> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/workspaces", post(create_workspace))
        .route("/workspaces/{id}", get(get_workspace))
        .route("/workspaces/{id}/outline", get(get_outline))
        .route("/workspaces/{id}/sections", post(add_section))
        .route("/workspaces/{id}/sections/{sid}", patch(patch_section))
        .route(
            "/workspaces/{id}/sections/{sid}/selection",
            get(get_selection).patch(patch_selection),
        )
        .route("/workspaces/{id}/sections/{sid}/generate", post(generate))
        .route("/workspaces/{id}/sections/{sid}/modify", post(modify))
        .route("/workspaces/{id}/sections/{sid}/history", get(history))
        .route("/workspaces/{id}/save", post(save))
        .route("/workspaces/{id}/analytics/report", get(report))
        .with_state(state)
}

/// Runs blocking workspace work off the async executor. Dropping the
/// returned future (client disconnect) cancels any provider call made
/// through the supplied provider.
async fn blocking<R: Send + 'static>(
    state: &Arc<AppState>,
    f: impl FnOnce(&AppState, &Cancellable) -> Result<R, ApiError> + Send + 'static,
) -> Result<R, ApiError> {
    let token = CancelToken::new();
    let _guard = CancelOnDrop(token.clone());
    let provider = Cancellable {
        inner: state.provider.clone(),
        token,
    };
    let state = state.clone();
    tokio::task::spawn_blocking(move || f(&state, &provider))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn check_version(ws: &Workspace, expected: u64) -> Result<(), ApiError> {
    if ws.state_version == expected {
        Ok(())
    } else {
        Err(ApiError::stale(expected, ws.state_version))
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(ApiError::from)
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(ApiError::from)
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

// -- workspaces --------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateWorkspace {
    pub document: Option<StructuredDocument>,
    pub markdown: Option<String>,
}

async fn create_workspace(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<CreateWorkspace>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req = body(payload)?;
    let doc = match (req.document, req.markdown) {
        (Some(d), None) => ingest_structured(&d)?,
        (None, Some(md)) => ingest_markdown(&md)?,
        _ => {
            return Err(ApiError::validation(
                "send exactly one of `document` or `markdown`",
            ))
        }
    };
    let (id, _) = state.start_workspace(doc);
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "workspace_id": id, "status": "pending" })),
    ))
}

#[derive(Serialize)]
struct SectionView<'a> {
    section_id: &'a SectionId,
    header: &'a str,
    kind: SectionKind,
    position: usize,
    body: &'a str,
    word_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    warm_start_error: Option<&'a str>,
    degraded: bool,
    selection: &'a SelectionState,
    custom_bullets: &'a str,
    custom_instructions: &'a str,
    starting_text: &'a str,
    context_toggle: bool,
    grounding_toggle: bool,
    length: LengthChoice,
    generations: usize,
    modifications: usize,
}

fn section_view(s: &BlogSection) -> SectionView<'_> {
    SectionView {
        section_id: &s.section_id,
        header: &s.header,
        kind: s.kind,
        position: s.position,
        body: &s.body,
        word_count: reverso_core::doc::word_count(&s.body),
        warm_start_error: s.warm_start_error.as_deref(),
        degraded: s.degraded,
        selection: &s.workspace.selection,
        custom_bullets: &s.workspace.custom_bullets,
        custom_instructions: &s.workspace.custom_instructions,
        starting_text: &s.workspace.starting_text,
        context_toggle: s.workspace.context_toggle,
        grounding_toggle: s.workspace.grounding_toggle,
        length: s.workspace.length,
        generations: s.workspace.generations.len(),
        modifications: s.workspace.modifications.len(),
    }
}

fn workspace_view(ws: &Workspace) -> Value {
    json!({
        "workspace_id": ws.workspace_id,
        "status": "ready",
        "state_version": ws.state_version,
        "title": ws.post.title,
        "template_version": ws.template_version,
        "outline_degraded": ws.outline.is_degraded(),
        "word_count_total": ws.post.word_count_total(),
        "sections": ws.post.sections.iter().map(section_view).collect::<Vec<_>>(),
    })
}

async fn get_workspace(
    State(state): State<Arc<AppState>>,
    Path(id): Path<WorkspaceId>,
) -> ApiResult {
    blocking(&state, move |state, _| {
        state.inspect(&id, |slot| match slot {
            Slot::Pending => json!({ "workspace_id": id, "status": "pending" }),
            Slot::Failed(e) => json!({ "workspace_id": id, "status": "failed", "error": e }),
            Slot::Ready(s) => workspace_view(&s.ws),
        })
    })
    .await
    .map(Json)
}

// -- outline and selection ---------------------------------------------------

#[derive(Debug, Deserialize)]
struct OutlineQuery {
    section: Option<SectionId>,
}

async fn get_outline(
    State(state): State<Arc<AppState>>,
    Path(id): Path<WorkspaceId>,
    q: Result<Query<OutlineQuery>, QueryRejection>,
) -> ApiResult {
    let q = query(q)?;
    blocking(&state, move |state, _| {
        state.with_session(&id, |s, _| {
            let ws = &s.ws;
            let selection = match &q.section {
                Some(sid) => Some(&ws.section(sid)?.workspace.selection),
                None => None,
            };
            let groups: Vec<Value> = ws
                .outline
                .groups
                .iter()
                .map(|g| {
                    let para = ws.document.paragraph(&g.para_id);
                    json!({
                        "para_id": g.para_id,
                        "paragraph": para.map(|p| p.text.as_str()),
                        "word_count": para.map(|p| p.word_count),
                        "degraded": g.degraded,
                        "selected": selection.map(|s| s.selected_paragraphs.contains(&g.para_id)),
                        "bullets": g.bullets.iter().map(|b| json!({
                            "bullet_id": b.bullet_id,
                            "text": b.text,
                            "selected": selection.map(|s| s.selected_bullets.contains(&b.bullet_id)),
                        })).collect::<Vec<_>>(),
                    })
                })
                .collect();
            Ok(json!({
                "state_version": ws.state_version,
                "doc_id": ws.outline.doc_id,
                "degraded": ws.outline.is_degraded(),
                "groups": groups,
            }))
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
struct SelectionQuery {
    #[serde(default = "default_tab")]
    tab: ViewTab,
}

fn default_tab() -> ViewTab {
    ViewTab::Bullets
}

async fn get_selection(
    State(state): State<Arc<AppState>>,
    Path((id, sid)): Path<(WorkspaceId, SectionId)>,
    q: Result<Query<SelectionQuery>, QueryRejection>,
) -> ApiResult {
    let q = query(q)?;
    blocking(&state, move |state, _| {
        state.with_session(&id, |s, _| {
            let ws = &s.ws;
            let sel = &ws.section(&sid)?.workspace.selection;
            Ok(json!({
                "state_version": ws.state_version,
                "selection": sel,
                "tab": q.tab,
                "entries": selected_view(&ws.outline, &ws.document, sel, q.tab),
            }))
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionOp {
    ToggleBullet { id: BulletId },
    ToggleParagraph { id: ParaId },
    Clear,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPatch {
    pub expected_version: u64,
    pub ops: Vec<SelectionOp>,
}

async fn patch_selection(
    State(state): State<Arc<AppState>>,
    Path((id, sid)): Path<(WorkspaceId, SectionId)>,
    payload: Result<Json<SelectionPatch>, JsonRejection>,
) -> ApiResult {
    let req = body(payload)?;
    blocking(&state, move |state, _| {
        state.with_session(&id, |s, now| {
            check_version(&s.ws, req.expected_version)?;
            let backup = s.ws.clone();
            let applied = req.ops.iter().try_for_each(|op| {
                match op {
                    SelectionOp::ToggleBullet { id } => s.ws.toggle_bullet(&sid, id, now).map(|_| ()),
                    SelectionOp::ToggleParagraph { id } => s.ws.toggle_paragraph(&sid, id, now).map(|_| ()),
                    SelectionOp::Clear => s.ws.clear_selection(&sid, now),
                }
            });
            if let Err(e) = applied {
                s.ws = backup;
                return Err(e.into());
            }
            Ok(json!({
                "state_version": s.ws.state_version,
                "selection": s.ws.section(&sid)?.workspace.selection,
            }))
        })
    })
    .await
    .map(Json)
}

// -- generation and modification ---------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionOnly {
    pub expected_version: u64,
}

async fn generate(
    State(state): State<Arc<AppState>>,
    Path((id, sid)): Path<(WorkspaceId, SectionId)>,
    payload: Result<Json<VersionOnly>, JsonRejection>,
) -> ApiResult {
    let req = body(payload)?;
    blocking(&state, move |state, provider| {
        state.with_session(&id, |s, now| {
            check_version(&s.ws, req.expected_version)?;
            let record = s.ws.generate_section(&sid, provider, now)?.clone();
            let total = s.ws.section(&sid)?.workspace.generations.len();
            Ok(json!({
                "state_version": s.ws.state_version,
                "pager": pager_label(total),
                "record": record,
            }))
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModifyRequest {
    pub expected_version: u64,
    pub kind: ModificationKind,
    pub text: String,
    #[serde(default)]
    pub options: ModificationOptions,
}

async fn modify(
    State(state): State<Arc<AppState>>,
    Path((id, sid)): Path<(WorkspaceId, SectionId)>,
    payload: Result<Json<ModifyRequest>, JsonRejection>,
) -> ApiResult {
    let req = body(payload)?;
    blocking(&state, move |state, provider| {
        state.with_session(&id, |s, now| {
            check_version(&s.ws, req.expected_version)?;
            let record = s
                .ws
                .modify_text(&sid, req.kind, &req.text, &req.options, provider, now)?
                .clone();
            let total = s.ws.section(&sid)?.workspace.modifications.len();
            Ok(json!({
                "state_version": s.ws.state_version,
                "pager": pager_label(total),
                "record": record,
            }))
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
struct HistoryQuery {
    #[serde(default = "default_kind")]
    kind: HistoryKind,
    index: Option<usize>,
}

fn default_kind() -> HistoryKind {
    HistoryKind::Generation
}

async fn history(
    State(state): State<Arc<AppState>>,
    Path((id, sid)): Path<(WorkspaceId, SectionId)>,
    q: Result<Query<HistoryQuery>, QueryRejection>,
) -> ApiResult {
    let q = query(q)?;
    blocking(&state, move |state, _| {
        state.with_session(&id, |s, _| {
            let ws = &s.ws;
            let value = match q.kind {
                HistoryKind::Generation => {
                    let page = ws.generation_page(&sid, q.index)?;
                    json!({
                        "kind": q.kind,
                        "index": page.index,
                        "total": page.total,
                        "pager": page.label(),
                        "prompt": page.record.inputs.render_prompt(&ws.document, &ws.outline),
                        "record": page.record,
                    })
                }
                HistoryKind::Modification => {
                    let page = ws.modification_page(&sid, q.index)?;
                    json!({
                        "kind": q.kind,
                        "index": page.index,
                        "total": page.total,
                        "pager": page.label(),
                        "record": page.record,
                    })
                }
            };
            Ok(value)
        })
    })
    .await
    .map(Json)
}

// -- structure and editing ---------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddSectionRequest {
    pub expected_version: u64,
    pub after: SectionId,
    pub header: String,
    pub mode: AddMode,
}

async fn add_section(
    State(state): State<Arc<AppState>>,
    Path(id): Path<WorkspaceId>,
    payload: Result<Json<AddSectionRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req = body(payload)?;
    blocking(&state, move |state, provider| {
        state.with_session(&id, |s, now| {
            check_version(&s.ws, req.expected_version)?;
            let sid = s.ws.add_section(&req.after, &req.header, req.mode, provider, now)?;
            let section = s.ws.section(&sid)?;
            Ok(json!({
                "state_version": s.ws.state_version,
                "section_id": sid,
                "position": section.position,
                "generations": section.workspace.generations.len(),
            }))
        })
    })
    .await
    .map(|v| (StatusCode::CREATED, Json(v)))
}

#[derive(Debug, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SectionAction {
    Move {
        direction: Direction,
    },
    Delete,
    Edit {
        #[serde(default = "body_target")]
        target: EditTarget,
        edit: TextEdit,
    },
    Settings {
        context_toggle: Option<bool>,
        grounding_toggle: Option<bool>,
        length: Option<LengthChoice>,
    },
}

fn body_target() -> EditTarget {
    EditTarget::Body
}

#[derive(Debug, Deserialize)]
pub struct SectionPatch {
    pub expected_version: u64,
    #[serde(flatten)]
    pub action: SectionAction,
}

async fn patch_section(
    State(state): State<Arc<AppState>>,
    Path((id, sid)): Path<(WorkspaceId, SectionId)>,
    payload: Result<Json<SectionPatch>, JsonRejection>,
) -> ApiResult {
    let req = body(payload)?;
    blocking(&state, move |state, _| {
        state.with_session(&id, |s, now| {
            check_version(&s.ws, req.expected_version)?;
            let mut out = match req.action {
                SectionAction::Move { direction } => match s.ws.move_section(&sid, direction, now)? {
                    MoveOutcome::Moved { position } => json!({ "moved": true, "position": position }),
                    MoveOutcome::Unchanged { notice } => json!({ "moved": false, "notice": notice }),
                },
                SectionAction::Delete => {
                    s.ws.delete_section(&sid, now)?;
                    json!({ "deleted": sid })
                }
                SectionAction::Edit { target, edit } => {
                    let text = s.ws.apply_edit(&sid, target, edit, now)?;
                    json!({ "target": target, "text": text })
                }
                SectionAction::Settings {
                    context_toggle,
                    grounding_toggle,
                    length,
                } => {
                    let patch = SettingsPatch {
                        context_toggle,
                        grounding_toggle,
                        length,
                    };
                    s.ws.update_settings(&sid, &patch, now)?;
                    json!({ "section": section_view(s.ws.section(&sid)?) })
                }
            };
            out["state_version"] = json!(s.ws.state_version);
            Ok(out)
        })
    })
    .await
    .map(Json)
}

// -- persistence and analytics -----------------------------------------------

async fn save(State(state): State<Arc<AppState>>, Path(id): Path<WorkspaceId>) -> ApiResult {
    blocking(&state, move |state, _| {
        state.with_session(&id, |s: &mut Session, now| {
            let snap = s.recorder.save(&mut s.ws, now)?;
            Ok(json!({
                "state_version": s.ws.state_version,
                "saved_at": now,
                "snapshot": snap.file_name(),
            }))
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    #[serde(default)]
    format: ReportFormat,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ReportFormat {
    #[default]
    Csv,
    Json,
}

async fn report(
    State(state): State<Arc<AppState>>,
    Path(id): Path<WorkspaceId>,
    q: Result<Query<ReportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let q = query(q)?;
    blocking(&state, move |state, _| {
        // Flushes pending events before reading the log back.
        state.with_session(&id, |_, _| Ok(()))?;
        let report = analyze_dir(&state.store.dir(&id)?)?;
        Ok(match q.format {
            ReportFormat::Csv => (
                [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
                report.to_csv()?,
            )
                .into_response(),
            ReportFormat::Json => Json(report).into_response(),
        })
    })
    .await
}
