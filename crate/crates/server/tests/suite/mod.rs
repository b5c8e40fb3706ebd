//! End-to-end API scenarios against the router with the mock provider.
//! Shared by the `api` test target and the acceptance harness.
#![allow(dead_code)]

use std::future::Future;
use std::pin::Pin;
use std::time::Duration;

use axum::http::{Method, StatusCode};
use serde_json::{json, Value};

use crate::common::{fixture, gateway, TestApp};
use reverso_core::gateway::{Fallback, Matcher, MockBackend, MockFailure, MockReply, MockRule, Purpose};
use reverso_core::outline::NOTE_BULLETS_STILL_SELECTED;

pub async fn healthz() {
    let app = TestApp::new();
    assert_eq!(app.get("/healthz").await, (StatusCode::OK, json!({ "status": "ok" })));
}

pub async fn create_then_poll_yields_four_sections() {
    let app = TestApp::new();
    let (id, ws) = app.ready_workspace().await;
    assert_eq!(ws["status"], "ready");
    assert_eq!(ws["state_version"], 0);
    let headers: Vec<_> = ws["sections"].as_array().unwrap().iter().map(|s| s["header"].clone()).collect();
    assert_eq!(headers, [json!("Introduction"), json!("Methods"), json!("Results"), json!("Conclusion")]);
    for s in ws["sections"].as_array().unwrap() {
        assert!(s["word_count"].as_u64().unwrap() > 0);
        assert_eq!(s["generations"], 1);
        assert_eq!(s["selection"]["selected_bullets"].as_array().unwrap().len(), 10);
    }
    assert!(app.dir.path().join(&id).join("workspace.json").is_file());
}

pub async fn structured_documents_are_accepted_and_validated() {
    let app = TestApp::new();
    let doc: Value = serde_json::from_str(&fixture("paper.json")).unwrap();
    let (status, _) = app.post("/workspaces", json!({ "document": doc })).await;
    assert_eq!(status, StatusCode::ACCEPTED);

    let (status, err) = app
        .post("/workspaces", json!({ "document": { "title": "", "sections": [] } }))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "validation_failed");
    assert_eq!(err["details"]["field"], "title");

    let (status, err) = app.post("/workspaces", json!({})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "validation_failed");

    let (status, err) = app.call(Method::POST, "/workspaces", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{err}");
}

pub async fn selection_toggle_is_visible_in_outline() {
    let app = TestApp::new();
    let (id, ws) = app.ready_workspace().await;
    let v = ws["state_version"].as_u64().unwrap();
    let (status, out) = app
        .patch(
            &format!("/workspaces/{id}/sections/s1/selection"),
            json!({ "expected_version": v, "ops": [{ "op": "toggle_paragraph", "id": "p3" }] }),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["state_version"], v + 1);

    let (_, outline) = app.get(&format!("/workspaces/{id}/outline?section=s1")).await;
    let p3 = outline["groups"].as_array().unwrap().iter().find(|g| g["para_id"] == "p3").unwrap();
    assert_eq!(p3["selected"], true);
    let (_, other) = app.get(&format!("/workspaces/{id}/outline?section=s2")).await;
    let p3 = other["groups"].as_array().unwrap().iter().find(|g| g["para_id"] == "p3").unwrap();
    assert_eq!(p3["selected"], false);
}

pub async fn selection_view_shows_cross_tab_note() {
    let app = TestApp::new();
    let (id, _) = app.ready_workspace().await;
    let (_, view) = app.get(&format!("/workspaces/{id}/sections/s1/selection?tab=paragraphs")).await;
    let entries = view["entries"].as_array().unwrap();
    assert!(!entries.is_empty());
    assert!(entries.iter().all(|e| e["note"] == NOTE_BULLETS_STILL_SELECTED));
    let (_, view) = app.get(&format!("/workspaces/{id}/sections/s1/selection?tab=bullets")).await;
    let items: usize = view["entries"].as_array().unwrap().iter().map(|e| e["items"].as_array().unwrap().len()).sum();
    assert_eq!(items, 10);
}

pub async fn bad_selection_ops_change_nothing() {
    let app = TestApp::new();
    let (id, _) = app.ready_workspace().await;
    let (status, err) = app
        .patch(
            &format!("/workspaces/{id}/sections/s1/selection"),
            json!({ "expected_version": 0, "ops": [{ "op": "clear" }, { "op": "toggle_bullet", "id": "b999" }] }),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{err}");
    let (_, ws) = app.get(&format!("/workspaces/{id}")).await;
    assert_eq!(ws["state_version"], 0);
    assert_eq!(ws["sections"][0]["selection"]["selected_bullets"].as_array().unwrap().len(), 10);
}

pub async fn regenerate_after_toggle_pages_two_of_two() {
    let app = TestApp::new();
    let (id, ws) = app.ready_workspace().await;
    let victim = ws["sections"][1]["selection"]["selected_bullets"][0].clone();
    let (status, out) = app
        .patch(
            &format!("/workspaces/{id}/sections/s2/selection"),
            json!({ "expected_version": 0, "ops": [{ "op": "toggle_bullet", "id": victim }] }),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let v = out["state_version"].as_u64().unwrap();
    let (status, gen) = app.post(&format!("/workspaces/{id}/sections/s2/generate"), json!({ "expected_version": v })).await;
    assert_eq!(status, StatusCode::OK, "{gen}");
    assert_eq!(gen["pager"], "2/2");
    assert!(!gen["record"]["inputs"]["selected_bullets"].as_array().unwrap().contains(&victim));

    let (status, page) = app.get(&format!("/workspaces/{id}/sections/s2/history?kind=generation&index=1")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["pager"], "1/2");
    assert!(page["prompt"].as_str().unwrap().contains("\"Methods\""));
    let (status, err) = app.get(&format!("/workspaces/{id}/sections/s2/history?kind=generation&index=3")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");

    // The body keeps the warm-start text until the user edits it.
    let (_, after) = app.get(&format!("/workspaces/{id}")).await;
    assert_eq!(after["sections"][1]["body"], ws["sections"][1]["body"]);
}

pub async fn unknown_ids_are_404() {
    let app = TestApp::new();
    let (id, _) = app.ready_workspace().await;
    let (status, err) = app.post(&format!("/workspaces/{id}/sections/s99/generate"), json!({ "expected_version": 0 })).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");
    let (status, err) = app.get("/workspaces/ws-missing").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");
}

pub async fn stale_versions_are_rejected() {
    let app = TestApp::new();
    let (id, _) = app.ready_workspace().await;
    let edit = |v: u64| json!({ "expected_version": v, "action": "edit", "edit": { "insert": { "at": 0, "text": "A" } } });
    let (status, _) = app.patch(&format!("/workspaces/{id}/sections/s1"), edit(0)).await;
    assert_eq!(status, StatusCode::OK);
    let (status, err) = app.patch(&format!("/workspaces/{id}/sections/s1"), edit(0)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "stale_version");
    assert_eq!(err["details"]["current_version"], 1);
    let (status, err) = app.patch(&format!("/workspaces/{id}/sections/s1"), json!({ "action": "delete" })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{err}");
}

pub async fn modify_validates_and_records() {
    let app = TestApp::new();
    let (id, _) = app.ready_workspace().await;
    let uri = format!("/workspaces/{id}/sections/s1/modify");
    let (status, err) = app.post(&uri, json!({ "expected_version": 0, "kind": "custom", "text": "abc" })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "validation_failed");
    let (status, out) = app
        .post(&uri, json!({ "expected_version": 0, "kind": "condense", "text": "a b c d", "options": { "grounding_toggle": false } }))
        .await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["pager"], "1/1");
    assert_eq!(out["record"]["output"], "a b");
    assert_eq!(out["record"]["grounding_toggle"], false);
    assert_eq!(out["record"]["context_toggle"], true);
    let (_, page) = app.get(&format!("/workspaces/{id}/sections/s1/history?kind=modification")).await;
    assert_eq!(page["record"]["kind"], "condense");
}

pub async fn sections_add_move_delete_and_edit() {
    let app = TestApp::new();
    let (id, _) = app.ready_workspace().await;
    let (status, added) = app
        .post(&format!("/workspaces/{id}/sections"), json!({ "expected_version": 0, "after": "s2", "header": "Related Work", "mode": "generated" }))
        .await;
    assert_eq!(status, StatusCode::CREATED, "{added}");
    assert_eq!(added["section_id"], "s5");
    assert_eq!(added["position"], 2);
    assert_eq!(added["generations"], 1);
    let mut v = added["state_version"].as_u64().unwrap();

    let (status, err) = app
        .post(&format!("/workspaces/{id}/sections"), json!({ "expected_version": v, "after": "s2", "header": "", "mode": "blank" }))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{err}");

    let (_, out) = app.patch(&format!("/workspaces/{id}/sections/s1"), json!({ "expected_version": v, "action": "move", "direction": "up" })).await;
    assert_eq!(out["moved"], false);
    assert!(out["notice"].as_str().unwrap().contains("first"));
    assert_eq!(out["state_version"], v);

    let (_, out) = app.patch(&format!("/workspaces/{id}/sections/s5"), json!({ "expected_version": v, "action": "move", "direction": "up" })).await;
    assert_eq!(out["position"], 1);
    v = out["state_version"].as_u64().unwrap();
    let (status, _) = app.patch(&format!("/workspaces/{id}/sections/s3"), json!({ "expected_version": v, "action": "delete" })).await;
    assert_eq!(status, StatusCode::OK);
    v += 1;
    let (_, out) = app
        .patch(&format!("/workspaces/{id}/sections/s5"), json!({ "expected_version": v, "action": "edit", "edit": { "insert": { "at": 0, "text": "Prior systems" } } }))
        .await;
    assert_eq!(out["text"], "Prior systems");
    v += 1;
    let (_, out) = app
        .patch(&format!("/workspaces/{id}/sections/s5"), json!({ "expected_version": v, "action": "settings", "length": "one_sentence", "context_toggle": false }))
        .await;
    assert_eq!(out["section"]["length"], "one_sentence");
    assert_eq!(out["section"]["context_toggle"], false);

    let (_, ws) = app.get(&format!("/workspaces/{id}")).await;
    let order: Vec<_> = ws["sections"].as_array().unwrap().iter().map(|s| s["section_id"].as_str().unwrap().to_string()).collect();
    assert_eq!(order, ["s1", "s5", "s2", "s4"]);
}

pub async fn provider_failures_are_502_with_purpose() {
    let backend = MockBackend::new(
        vec![MockRule::new(Matcher::Contains("\"Extra\"".into()), vec![MockReply::fail(MockFailure::Auth)]).for_purpose(Purpose::Generation)],
        Fallback::Synthetic,
    );
    let app = TestApp::with_provider(gateway(backend));
    let (id, _) = app.ready_workspace().await;
    let (status, added) = app
        .post(&format!("/workspaces/{id}/sections"), json!({ "expected_version": 0, "after": "s4", "header": "Extra", "mode": "blank" }))
        .await;
    assert_eq!(status, StatusCode::CREATED);
    let v = added["state_version"].as_u64().unwrap();
    let (status, err) = app.post(&format!("/workspaces/{id}/sections/s5/generate"), json!({ "expected_version": v })).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(err["code"], "provider_error");
    assert_eq!(err["details"]["purpose"], "generation");
    assert_eq!(app.version(&id).await, v);
}

pub async fn failed_warm_start_reports_and_blocks_mutations() {
    let backend = MockBackend::new(
        vec![MockRule::new(Matcher::Contains(String::new()), vec![MockReply::fail(MockFailure::Malformed)]).for_purpose(Purpose::Outline)],
        Fallback::Synthetic,
    );
    let app = TestApp::with_provider(gateway(backend));
    let (_, created) = app.post("/workspaces", json!({ "markdown": fixture("paper.md") })).await;
    let id = created["workspace_id"].as_str().unwrap();
    let ws = app.wait_ready(id).await;
    assert_eq!(ws["status"], "failed");
    assert_eq!(ws["error"]["code"], "provider_error");
    assert_eq!(ws["error"]["details"]["purpose"], "outline");
    let (status, err) = app.post(&format!("/workspaces/{id}/sections/s1/generate"), json!({ "expected_version": 0 })).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "not_ready");
}

pub async fn pending_workspace_is_not_ready() {
    let app = TestApp::with_provider(gateway(MockBackend::synthetic().with_delay(Duration::from_millis(40))));
    let (_, created) = app.post("/workspaces", json!({ "markdown": fixture("paper.md") })).await;
    let id = created["workspace_id"].as_str().unwrap();
    let (_, ws) = app.get(&format!("/workspaces/{id}")).await;
    assert_eq!(ws["status"], "pending");
    let (status, err) = app.get(&format!("/workspaces/{id}/outline")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "not_ready");
    assert_eq!(app.wait_ready(id).await["status"], "ready");
}

pub async fn client_disconnect_discards_the_result() {
    let app = TestApp::new();
    let (id, _) = app.ready_workspace().await;
    // Same workspace on disk, now behind a slow provider.
    let dir = tempfile::tempdir().unwrap();
    app.post(&format!("/workspaces/{id}/save"), json!({})).await;
    copy_dir(&app.dir.path().join(&id), &dir.path().join(&id));
    let slow = TestApp::in_dir(dir, gateway(MockBackend::synthetic().with_delay(Duration::from_millis(300))));
    let v = slow.version(&id).await;

    let router = slow.router.clone();
    let uri = format!("/workspaces/{id}/sections/s1/generate");
    let request = tokio::spawn(async move {
        use tower::ServiceExt;
        let req = axum::http::Request::post(uri)
            .header("content-type", "application/json")
            .body(axum::body::Body::from(json!({ "expected_version": v }).to_string()))
            .unwrap();
        router.oneshot(req).await
    });
    tokio::time::sleep(Duration::from_millis(50)).await;
    request.abort();
    tokio::time::sleep(Duration::from_millis(500)).await;
    let (_, ws) = slow.get(&format!("/workspaces/{id}")).await;
    assert_eq!(ws["state_version"], v);
    assert_eq!(ws["sections"][0]["generations"], 1);
}

fn copy_dir(from: &std::path::Path, to: &std::path::Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

pub async fn save_reload_and_snapshots() {
    let app = TestApp::new();
    let (id, _) = app.ready_workspace().await;
    app.clock.advance(Duration::from_secs(10));
    app.patch(&format!("/workspaces/{id}/sections/s1"), json!({ "expected_version": 0, "action": "edit", "edit": { "insert": { "at": 0, "text": "Hi. " } } }))
        .await;
    app.clock.advance(Duration::from_secs(55));
    app.state.tick_all();
    let (status, saved) = app.post(&format!("/workspaces/{id}/save"), json!({})).await;
    assert_eq!(status, StatusCode::OK, "{saved}");
    let (_, again) = app.post(&format!("/workspaces/{id}/save"), json!({})).await;
    assert_eq!(again["state_version"], saved["state_version"]);

    let snaps: Vec<String> = std::fs::read_dir(app.dir.path().join(&id).join("snapshots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let count = |t: &str| snaps.iter().filter(|s| s.ends_with(&format!("-{t}.txt"))).count();
    assert_eq!((count("open"), count("periodic"), count("save")), (1, 1, 1), "{snaps:?}");

    let workspace_json = std::fs::read(app.dir.path().join(&id).join("workspace.json")).unwrap();
    let (_, before) = app.get(&format!("/workspaces/{id}")).await;
    let dir = app.dir;
    let reopened = TestApp::in_dir(dir, gateway(MockBackend::synthetic()));
    reopened.clock.advance(Duration::from_secs(600));
    let (status, after) = reopened.get(&format!("/workspaces/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(after, before);
    assert_eq!(std::fs::read(reopened.dir.path().join(&id).join("workspace.json")).unwrap(), workspace_json);

    let (status, csv) = reopened.call_raw(Method::GET, &format!("/workspaces/{id}/analytics/report"), None).await;
    assert_eq!(status, StatusCode::OK);
    let csv = String::from_utf8(csv).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "snapshot,timestamp_ms,trigger,active_minutes,writing_actions,levenshtein_from_initial,length_delta_chars");
    // open, periodic, save, then the reopen snapshot.
    assert_eq!(lines.len(), 5);
    assert!(lines[2].contains(",periodic,") && lines[2].ends_with(",1,4,4"), "{csv}");

    let (_, json_report) = reopened.get(&format!("/workspaces/{id}/analytics/report?format=json")).await;
    assert_eq!(json_report["writing_actions"], 1);
}

pub type Scenario = fn() -> Pin<Box<dyn Future<Output = ()> + Send>>;

pub fn all() -> Vec<(&'static str, Scenario)> {
    vec![
        ("healthz", || Box::pin(healthz())),
        ("create_then_poll_yields_four_sections", || Box::pin(create_then_poll_yields_four_sections())),
        ("structured_documents_are_accepted_and_validated", || Box::pin(structured_documents_are_accepted_and_validated())),
        ("selection_toggle_is_visible_in_outline", || Box::pin(selection_toggle_is_visible_in_outline())),
        ("selection_view_shows_cross_tab_note", || Box::pin(selection_view_shows_cross_tab_note())),
        ("bad_selection_ops_change_nothing", || Box::pin(bad_selection_ops_change_nothing())),
        ("regenerate_after_toggle_pages_two_of_two", || Box::pin(regenerate_after_toggle_pages_two_of_two())),
        ("unknown_ids_are_404", || Box::pin(unknown_ids_are_404())),
        ("stale_versions_are_rejected", || Box::pin(stale_versions_are_rejected())),
        ("modify_validates_and_records", || Box::pin(modify_validates_and_records())),
        ("sections_add_move_delete_and_edit", || Box::pin(sections_add_move_delete_and_edit())),
        ("provider_failures_are_502_with_purpose", || Box::pin(provider_failures_are_502_with_purpose())),
        ("failed_warm_start_reports_and_blocks_mutations", || Box::pin(failed_warm_start_reports_and_blocks_mutations())),
        ("pending_workspace_is_not_ready", || Box::pin(pending_workspace_is_not_ready())),
        ("client_disconnect_discards_the_result", || Box::pin(client_disconnect_discards_the_result())),
        ("save_reload_and_snapshots", || Box::pin(save_reload_and_snapshots())),
    ]
}
