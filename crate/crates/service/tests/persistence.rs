use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cfbd_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(if body.is_null() { Body::empty() } else { Body::from(body.to_string()) })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn conflicting_posts_exactly_one_wins() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(dir.path(), 1).unwrap());
    for round in 0..20 {
        let (_, created) = call(&app, "POST", "/trials", json!({})).await;
        let id = created["id"].as_str().unwrap().to_string();
        let uri = format!("/trials/{id}/cohorts");
        let body = json!({"dose": 0, "t": round % 2, "revision": 0});
        let (a, b) = tokio::join!(
            tokio::spawn({
                let app = app.clone();
                let (uri, body) = (uri.clone(), body.clone());
                async move { call(&app, "POST", &uri, body).await }
            }),
            tokio::spawn({
                let app = app.clone();
                async move { call(&app, "POST", &uri, body).await }
            })
        );
        let mut statuses = [a.unwrap().0, b.unwrap().0];
        statuses.sort();
        assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT]);
        let (_, now) = call(&app, "GET", &format!("/trials/{id}"), Value::Null).await;
        assert_eq!(now["revision"], json!(1));
        assert_eq!(now["n_total"], json!(1));
    }
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, before) = {
        let app = router(AppState::new(dir.path(), 1).unwrap());
        let (_, mut body) = call(&app, "POST", "/trials", json!({"agents": 2, "config": {"calibrate": true}})).await;
        let id = body["id"].as_str().unwrap().to_string();
        for t in [0, 0, 1, 0] {
            let rev = body["revision"].clone();
            let (status, next) = call(
                &app,
                "POST",
                &format!("/trials/{id}/cohorts"),
                json!({"dose": body["next_dose"], "t": t, "revision": rev}),
            )
            .await;
            assert_eq!(status, StatusCode::OK);
            body = next;
        }
        let (_, got) = call(&app, "GET", &format!("/trials/{id}"), Value::Null).await;
        (id, got)
    };
    let app = router(AppState::new(dir.path(), 1).unwrap());
    let (status, after) = call(&app, "GET", &format!("/trials/{id}"), Value::Null).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(after, before);
    assert_eq!(after["revision"], json!(4));
}
