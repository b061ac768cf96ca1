use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use backdrop_cli::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const CSV: &str = "\
x,y,z,group
0.1,0.2,5.0,a
-0.3,0.1,5.2,a
0.2,-0.2,4.9,a
0.0,0.3,5.1,a
4.1,3.9,0.2,b
3.8,4.2,-0.1,b
4.0,4.1,0.0,b
4.2,3.8,0.1,b
-3.9,0.1,-4.8,c
-4.1,-0.2,-5.1,c
-4.0,0.2,-5.0,c
-3.8,-0.1,-4.9,c
";

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let body = body.map_or_else(Body::empty, |v| Body::from(v.to_string()));
    let request =
        Request::builder().method(method).uri(uri).header("content-type", "application/json").body(body).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn create(app: &Router) -> String {
    let request = Request::builder()
        .method("POST")
        .uri("/sessions?label_column=group&seed=3")
        .body(Body::from(CSV))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::CREATED);
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["rows"], 12);
    assert_eq!(v["labels"], json!(["a", "b", "c"]));
    assert_eq!(v["view"]["method"], "pca");
    v["id"].as_str().unwrap().to_owned()
}

#[tokio::test]
async fn create_select_constrain_fit_and_view() {
    let app = router(AppState::new());
    let id = create(&app).await;

    let (status, v) = send(&app, "POST", &format!("/sessions/{id}/selection"), Some(json!({ "label": "b" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["count"], 4);

    let (status, v) = send(&app, "GET", &format!("/sessions/{id}/selection/stats"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["stats"]["count"], 4);
    assert!(v["ellipses"]["data"].is_object());

    let (status, v) =
        send(&app, "POST", &format!("/sessions/{id}/constraints"), Some(json!({ "variant": "cluster" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["added"], 6);
    let (_, v) = send(&app, "POST", &format!("/sessions/{id}/constraints"), Some(json!({ "variant": "cluster" }))).await;
    assert_eq!(v["added"], 0, "duplicate composites add nothing");

    // the model changed, so views must wait for a fit
    let (status, v) = send(&app, "GET", &format!("/sessions/{id}/view?method=pca"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "stale_model");
    let (status, v) = send(&app, "GET", &format!("/sessions/{id}/view"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["stale"], true);

    let (status, _) = send(&app, "POST", &format!("/sessions/{id}/fit"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let mut state = String::new();
    for _ in 0..200 {
        let (_, v) = send(&app, "GET", &format!("/sessions/{id}/fit/status"), None).await;
        state = v["state"].as_str().unwrap().to_owned();
        if state == "finished" {
            assert_eq!(v["outcome"]["installed"], true);
            assert_eq!(v["outcome"]["status"], "converged");
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert_eq!(state, "finished");

    let (status, v) = send(&app, "GET", &format!("/sessions/{id}/view?method=ica"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["method"], "ica");
    assert_eq!(v["stale"], false);
    assert_eq!(v["data_points"].as_array().unwrap().len(), 12);
    assert_eq!(v["background_points"].as_array().unwrap().len(), 12);
}

#[tokio::test]
async fn groupings_round_trip_and_drive_selection() {
    let app = router(AppState::new());
    let id = create(&app).await;
    let (status, v) = send(
        &app,
        "POST",
        &format!("/sessions/{id}/groupings"),
        Some(json!({ "name": "corner", "row_ids": [7, 1, 1, 4] })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["version"], 1);
    let (_, v) = send(&app, "GET", &format!("/sessions/{id}/groupings/corner"), None).await;
    assert_eq!(v["row_ids"], json!([1, 4, 7]));

    let (_, v) = send(&app, "POST", &format!("/sessions/{id}/selection"), Some(json!({ "grouping": "corner" }))).await;
    assert_eq!(v["count"], 3);
    let (_, v) =
        send(&app, "POST", &format!("/sessions/{id}/selection"), Some(json!({ "row_ids": [0], "add": true }))).await;
    assert_eq!(v["count"], 4);

    let (status, v) = send(&app, "GET", &format!("/sessions/{id}/groupings/nope"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_grouping");
}

#[tokio::test]
async fn errors_map_to_client_statuses() {
    let app = router(AppState::new());
    let (status, v) = send(&app, "GET", "/sessions/s99/view", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_session");

    let request = Request::builder().method("POST").uri("/sessions").body(Body::from("a,b\n1,x\n")).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::BAD_REQUEST);

    let id = create(&app).await;
    let (status, v) = send(&app, "GET", &format!("/sessions/{id}/selection/stats"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "empty_selection");

    let (status, _) = send(&app, "POST", &format!("/sessions/{id}/selection"), Some(json!({}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = send(&app, "POST", &format!("/sessions/{id}/selection"), Some(json!({ "row_ids": [99] }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = send(&app, "GET", &format!("/sessions/{id}/view?method=tsne"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn waited_fit_and_cancel_when_idle() {
    let app = router(AppState::new());
    let id = create(&app).await;
    let (_, v) = send(&app, "POST", &format!("/sessions/{id}/fit/cancel"), None).await;
    assert_eq!(v["state"], "idle");

    send(&app, "POST", &format!("/sessions/{id}/constraints"), Some(json!({ "variant": "margin" }))).await;
    let (status, v) = send(&app, "POST", &format!("/sessions/{id}/fit?wait=true"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["state"], "finished");
    assert_eq!(v["model_version"], 2);
}

#[tokio::test]
async fn export_is_stable_json() {
    let app = router(AppState::new());
    let id = create(&app).await;
    let get = |uri: String| {
        let app = app.clone();
        async move {
            let request = Request::builder().uri(uri).body(Body::empty()).unwrap();
            app.oneshot(request).await.unwrap().into_body().collect().await.unwrap().to_bytes()
        }
    };
    let a = get(format!("/sessions/{id}/export")).await;
    let b = get(format!("/sessions/{id}/export")).await;
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["format"], 1);
    assert_eq!(v["data"]["column_names"], json!(["x", "y", "z"]));
}
