use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use flowfill_app::formats::{decode_image, encode_png, mask_to_image};
use flowfill_app::server::{router, ServerConfig};
use flowfill_core::{corpus, ImageBuffer, InpaintConfig, Mask};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

const BOUNDARY: &str = "flowfill-test-boundary";

fn fast_config() -> ServerConfig {
    let mut inpaint = InpaintConfig::default();
    inpaint.flowopt.pyramid_levels = 1;
    inpaint.flowopt.steps_per_level = 40;
    ServerConfig {
        inpaint,
        ..ServerConfig::default()
    }
}

fn multipart(png: &[u8]) -> Body {
    let mut body = format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"in.png\"\r\nContent-Type: image/png\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(png);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    Body::from(body)
}

async fn call(app: &Router, method: Method, uri: &str, body: Body, content_type: Option<String>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        req = req.header("content-type", ct);
    }
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn upload(app: &Router, png: &[u8]) -> Value {
    let ct = format!("multipart/form-data; boundary={BOUNDARY}");
    let (status, body) = call(app, Method::POST, "/api/session", multipart(png), Some(ct)).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

async fn put(app: &Router, uri: &str, bytes: Vec<u8>) -> StatusCode {
    call(app, Method::PUT, uri, Body::from(bytes), Some("image/png".into())).await.0
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    call(app, Method::GET, uri, Body::empty(), None).await
}

async fn inpaint(app: &Router, id: &str, cfg: &str) -> (StatusCode, Value) {
    let uri = format!("/api/session/{id}/inpaint");
    let (status, body) = call(app, Method::POST, &uri, Body::from(cfg.to_string()), Some("application/json".into())).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

fn mask_png(m: &Mask) -> Vec<u8> {
    encode_png(&mask_to_image(m)).unwrap()
}

#[tokio::test]
async fn round_trip_preserves_the_valid_region() {
    let app = router(fast_config());
    let img = corpus::checker(32, 32, 4, 0.2, 0.8);
    let png = encode_png(&img).unwrap();
    let created = upload(&app, &png).await;
    assert_eq!(created["width"], 32);
    assert_eq!(created["height"], 32);
    let id = created["session_id"].as_str().unwrap().to_string();

    let m = Mask::new(32, 32).with_rect(10, 12, 8, 6);
    let mpng = mask_png(&m);
    assert_eq!(put(&app, &format!("/api/session/{id}/mask"), mpng.clone()).await, StatusCode::NO_CONTENT);

    let (status, body) = inpaint(&app, &id, "").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert!(body["metrics"]["ssim"].as_f64().is_some());
    assert!((body["metrics"]["hole_ratio"].as_f64().unwrap() - m.ratio()).abs() < 1e-12);
    for a in ["s_hat", "flow_viz", "result"] {
        let url = body["urls"][a].as_str().unwrap();
        let (status, bytes) = get(&app, url).await;
        assert_eq!(status, StatusCode::OK, "{a}");
        assert_eq!(decode_image(&bytes).unwrap().dims(), (32, 32));
    }
    let (_, result) = get(&app, body["urls"]["result"].as_str().unwrap()).await;
    let result = decode_image(&result).unwrap();
    assert!(m.valid().all(|(x, y)| result.pixel(x, y) == img.pixel(x, y)));

    // Echo endpoints return the uploads byte for byte.
    assert_eq!(get(&app, &format!("/api/session/{id}/result/source")).await.1, png);
    assert_eq!(get(&app, &format!("/api/session/{id}/result/mask")).await.1, mpng);
}

#[tokio::test]
async fn zero_mask_result_equals_the_upload() {
    let app = router(fast_config());
    let png = encode_png(&corpus::waves(24, 20, 3)).unwrap();
    let id = upload(&app, &png).await["session_id"].as_str().unwrap().to_string();
    let (status, body) = inpaint(&app, &id, "{}").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["metrics"]["psnr"], "inf");
    assert_eq!(get(&app, &format!("/api/session/{id}/result/result")).await.1, png);
}

#[tokio::test]
async fn structure_override_changes_only_hole_pixels() {
    let app = router(fast_config());
    let img = corpus::stripes(32, 32, 8, 0.25, 0.75);
    let id = upload(&app, &encode_png(&img).unwrap()).await["session_id"].as_str().unwrap().to_string();
    let m = Mask::new(32, 32).with_rect(12, 12, 8, 8);
    put(&app, &format!("/api/session/{id}/mask"), mask_png(&m)).await;
    let (_, first) = inpaint(&app, &id, "").await;
    let before = decode_image(&get(&app, first["urls"]["result"].as_str().unwrap()).await.1).unwrap();

    let edited = ImageBuffer::filled(32, 32, 1, 0.9).unwrap();
    let status = put(&app, &format!("/api/session/{id}/structure"), encode_png(&edited).unwrap()).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, second) = inpaint(&app, &id, "").await;
    assert_eq!(status, StatusCode::OK);
    let after = decode_image(&get(&app, second["urls"]["result"].as_str().unwrap()).await.1).unwrap();
    assert!(m.valid().all(|(x, y)| after.pixel(x, y) == before.pixel(x, y)));
    let s_hat = decode_image(&get(&app, &format!("/api/session/{id}/result/s_hat")).await.1).unwrap();
    assert!(s_hat.data().iter().all(|v| *v == 0.9f64.mul_add(255.0, 0.0).round() / 255.0));
}

#[tokio::test]
async fn error_statuses() {
    let app = router(fast_config());
    let id = upload(&app, &encode_png(&corpus::waves(16, 16, 1)).unwrap()).await["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let mask = format!("/api/session/{id}/mask");
    assert_eq!(put(&app, &mask, mask_png(&Mask::new(16, 17))).await, StatusCode::CONFLICT);
    let structure = format!("/api/session/{id}/structure");
    assert_eq!(put(&app, &structure, encode_png(&corpus::waves(8, 8, 1)).unwrap()).await, StatusCode::CONFLICT);
    assert_eq!(put(&app, &mask, b"not a png".to_vec()).await, StatusCode::BAD_REQUEST);
    assert_eq!(inpaint(&app, &id, "{ nope").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(inpaint(&app, &id, "[1, 2]").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(inpaint(&app, &id, r#"{"rtv": {"sigma": -2}}"#).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(inpaint(&app, &id, r#"{"flowopt": {"patch": "big"}}"#).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(get(&app, &format!("/api/session/{id}/result/result")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, &format!("/api/session/{id}/result/bogus")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(put(&app, "/api/session/unknown/mask", mask_png(&Mask::new(16, 16))).await, StatusCode::NOT_FOUND);
    assert_eq!(inpaint(&app, "unknown", "").await.0, StatusCode::NOT_FOUND);

    let ct = Some(format!("multipart/form-data; boundary={BOUNDARY}"));
    let (status, _) = call(&app, Method::POST, "/api/session", multipart(b"garbage"), ct).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::POST, "/api/session", Body::from("x"), Some("text/plain".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn delete_frees_the_session() {
    let app = router(fast_config());
    let id = upload(&app, &encode_png(&corpus::waves(16, 16, 2)).unwrap()).await["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    assert_eq!(inpaint(&app, &id, "").await.0, StatusCode::OK);
    assert_eq!(get(&app, &format!("/api/session/{id}/result/result")).await.0, StatusCode::OK);
    let (status, _) = call(&app, Method::DELETE, &format!("/api/session/{id}"), Body::empty(), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert_eq!(get(&app, &format!("/api/session/{id}/result/result")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, &format!("/api/session/{id}/result/source")).await.0, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::DELETE, &format!("/api/session/{id}"), Body::empty(), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_stay_independent() {
    let app = router(fast_config());
    let imgs = [corpus::brick(32, 32, 8, 4), corpus::checker(32, 32, 4, 0.1, 0.9)];
    let m = Mask::new(32, 32).with_rect(11, 11, 9, 9);

    // Reference runs, one session at a time.
    let mut solo = Vec::new();
    for img in &imgs {
        let id = upload(&app, &encode_png(img).unwrap()).await["session_id"].as_str().unwrap().to_string();
        put(&app, &format!("/api/session/{id}/mask"), mask_png(&m)).await;
        inpaint(&app, &id, "").await;
        solo.push(get(&app, &format!("/api/session/{id}/result/result")).await.1);
    }
    assert_ne!(solo[0], solo[1]);

    let run = |img: ImageBuffer| {
        let app = app.clone();
        let mpng = mask_png(&m);
        tokio::spawn(async move {
            let id = upload(&app, &encode_png(&img).unwrap()).await["session_id"].as_str().unwrap().to_string();
            put(&app, &format!("/api/session/{id}/mask"), mpng).await;
            let (status, _) = inpaint(&app, &id, "").await;
            assert_eq!(status, StatusCode::OK);
            get(&app, &format!("/api/session/{id}/result/result")).await.1
        })
    };
    let (a, b) = (run(imgs[0].clone()), run(imgs[1].clone()));
    assert_eq!(a.await.unwrap(), solo[0]);
    assert_eq!(b.await.unwrap(), solo[1]);
}

#[tokio::test]
async fn oldest_sessions_are_evicted_past_the_cap() {
    let app = router(ServerConfig {
        session_cap: 2,
        ..fast_config()
    });
    let png = encode_png(&corpus::waves(16, 16, 0)).unwrap();
    let mut ids = Vec::new();
    for _ in 0..3 {
        ids.push(upload(&app, &png).await["session_id"].as_str().unwrap().to_string());
    }
    let status = |id: String| {
        let app = app.clone();
        async move { get(&app, &format!("/api/session/{id}/result/source")).await.0 }
    };
    assert_eq!(status(ids[0].clone()).await, StatusCode::NOT_FOUND);
    assert_eq!(status(ids[1].clone()).await, StatusCode::OK);
    assert_eq!(status(ids[2].clone()).await, StatusCode::OK);
}
