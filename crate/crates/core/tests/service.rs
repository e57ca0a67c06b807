mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use concept_forge::explore::{blend, query};
use concept_forge::service::{router, BundleManifest, SessionBundle, BUNDLE_FILE, BUNDLE_FORMAT};
use concept_forge::Error;

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn post(app: &axum::Router, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b) = call(app, req).await;
    (s, serde_json::from_slice(&b).unwrap())
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn assert_error(status: StatusCode, body: &Value, expected: StatusCode, code: &str) {
    assert_eq!(status, expected, "{body}");
    assert_eq!(body["code"], code);
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn endpoints_follow_the_library() {
    let f = common::fixture();
    let bundle = Arc::new(common::bundle(&f));
    let app = router(bundle.clone());
    let p = f.ae.points();

    let (s, health) = get(&app, "/api/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(health["points"], p);
    assert_eq!(health["latent_dim"], 8);
    assert_eq!(health["concepts"], 2);

    let (_, designs) = get(&app, "/api/designs").await;
    let designs = designs.as_array().unwrap();
    assert_eq!(designs.len(), f.dataset.len());
    assert_eq!(designs[0]["id"], f.dataset.manifest.entries[0].id);
    assert_eq!(designs[0]["drag"].as_f64().unwrap(), f.dataset.manifest.entries[0].drag);

    let id = "cuboid-0003";
    let i = f.dataset.index_of(id).unwrap();
    let (s, d) = get(&app, &format!("/api/designs/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(d["n_points"], p);
    assert_eq!(floats(&d["points"]), f.dataset.clouds[i].to_flat());
    assert_eq!(floats(&d["latent"]), f.latents[i]);
    assert_eq!(d["predicted_drag"].as_f64().unwrap(), f.reg.predict(&f.latents[i]).unwrap());

    let (s, body) = get(&app, "/api/designs/nope").await;
    assert_error(s, &body, StatusCode::NOT_FOUND, "not_found");

    let (_, concepts) = get(&app, "/api/concepts").await;
    let names: Vec<&str> = concepts.as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["Cuboids", "Sport"]);
    assert_eq!(concepts[0]["counter"], "Ellipsoids");
    assert_eq!(concepts[0]["train_accuracy"].as_f64().unwrap(), f.cavs[0].train_accuracy);

    // Blend matches library composition bit-for-bit.
    let req = json!({"design_id": id, "terms": [{"concept": "Cuboids", "eps": 0.3}, {"concept": "Sport", "eps": -0.7}]});
    let (s, r) = post(&app, "/api/blend", &req.to_string()).await;
    assert_eq!(s, StatusCode::OK);
    let edited = blend(&f.latents[i], &[(&f.cavs[0], 0.3), (&f.cavs[1], -0.7)]).unwrap();
    assert_eq!(floats(&r["latent"]), edited.latent);
    assert_eq!(floats(&r["points"]), f.ae.decode(&edited.latent).unwrap().to_flat());
    assert_eq!(r["drag"].as_f64().unwrap(), f.reg.predict(&edited.latent).unwrap());
    assert_eq!(r["out_of_box"], edited.out_of_box);

    let far = json!({"latent": vec![0.0; 8], "terms": [{"concept": "Cuboids", "eps": 5.0}]});
    let (_, r) = post(&app, "/api/blend", &far.to_string()).await;
    assert_eq!(r["out_of_box"], true);

    let (s, body) = post(&app, "/api/blend", &json!({"design_id": id, "terms": [{"concept": "Nope", "eps": 1.0}]}).to_string()).await;
    assert_error(s, &body, StatusCode::NOT_FOUND, "not_found");
    let (s, body) = post(&app, "/api/blend", &json!({"terms": []}).to_string()).await;
    assert_error(s, &body, StatusCode::BAD_REQUEST, "malformed");
    let (s, body) = post(&app, "/api/blend", &json!({"latent": [0.0, 1.0], "terms": []}).to_string()).await;
    assert_error(s, &body, StatusCode::UNPROCESSABLE_ENTITY, "dimension_mismatch");

    // Encode normalizes its input before encoding.
    let flat = f.dataset.clouds[i].to_flat();
    let (s, r) = post(&app, "/api/encode", &json!({"points": flat, "n_points": p}).to_string()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(floats(&r["latent"]), f.ae.encode(&f.dataset.clouds[i].normalize().unwrap()).unwrap());
    let (s, body) = post(&app, "/api/encode", &json!({"points": &flat[..flat.len() - 3]}).to_string()).await;
    assert_error(s, &body, StatusCode::UNPROCESSABLE_ENTITY, "dimension_mismatch");
    let (s, body) = post(&app, "/api/encode", &json!({"points": flat, "n_points": p + 1}).to_string()).await;
    assert_error(s, &body, StatusCode::UNPROCESSABLE_ENTITY, "dimension_mismatch");
    let (s, body) = post(&app, "/api/encode", "{not json").await;
    assert_error(s, &body, StatusCode::BAD_REQUEST, "malformed");
    let (s, body) = post(&app, "/api/encode", r#"{"points": "x"}"#).await;
    assert_error(s, &body, StatusCode::BAD_REQUEST, "malformed");

    let z = vec![0.1, -0.2, 0.3, 1.5, 0.0, 0.0, -0.4, 0.9];
    let (s, r) = post(&app, "/api/decode", &json!({"latent": z}).to_string()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(floats(&r["points"]), f.ae.decode(&z).unwrap().to_flat());
    assert_eq!(r["out_of_box"], true);
    let (s, body) = post(&app, "/api/decode", &json!({"latent": [0.0]}).to_string()).await;
    assert_error(s, &body, StatusCode::UNPROCESSABLE_ENTITY, "dimension_mismatch");

    let (s, q) = get(&app, "/api/query?concept=Cuboids&k=5").await;
    assert_eq!(s, StatusCode::OK);
    let ids: Vec<String> = f.dataset.manifest.entries.iter().map(|e| e.id.clone()).collect();
    let direct = query(&ids, &f.latents, &f.cavs[0], 5).unwrap();
    let top: Vec<&str> = q["top"].as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    let bottom: Vec<&str> = q["bottom"].as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(top, direct.top.iter().map(|r| r.id.as_str()).collect::<Vec<_>>());
    assert_eq!(bottom, direct.bottom.iter().map(|r| r.id.as_str()).collect::<Vec<_>>());
    let (s, body) = get(&app, "/api/query?concept=Nope&k=5").await;
    assert_error(s, &body, StatusCode::NOT_FOUND, "not_found");
    let (s, body) = get(&app, "/api/query?k=5").await;
    assert_error(s, &body, StatusCode::BAD_REQUEST, "malformed");
    let (_, q) = get(&app, "/api/query?concept=Cuboids&k=100000").await;
    assert_eq!(q["top"].as_array().unwrap().len(), f.dataset.len());

    let (s, t) = get(&app, "/api/tcav").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(t["rows"][0]["concept"], "Cuboids");
    assert_eq!(t["columns"][6], "n_runs");
    assert!(t["csv"].as_str().unwrap().starts_with("concept,counter,sign_fraction"));
}

#[tokio::test]
async fn responses_replay_identically() {
    let f = common::fixture();
    let app = router(Arc::new(common::bundle(&f)));
    let body = json!({"design_id": "car-0001", "terms": [{"concept": "Sport", "eps": 0.25}]}).to_string();
    let mk = || {
        Request::post("/api/blend")
            .header("content-type", "application/json")
            .body(Body::from(body.clone()))
            .unwrap()
    };
    let a = call(&app, mk()).await;
    let b = call(&app, mk()).await;
    assert_eq!(a, b);
    let q1 = call(&app, Request::get("/api/query?concept=Sport&k=3").body(Body::empty()).unwrap()).await;
    let q2 = call(&app, Request::get("/api/query?concept=Sport&k=3").body(Body::empty()).unwrap()).await;
    assert_eq!(q1, q2);
}

#[tokio::test]
async fn missing_report_is_404() {
    let f = common::fixture();
    let mut b = common::bundle(&f);
    b.tcav = None;
    let (s, body) = get(&router(Arc::new(b)), "/api/tcav").await;
    assert_error(s, &body, StatusCode::NOT_FOUND, "not_found");
}

#[test]
fn bundle_rejects_hash_mismatch() {
    let f = common::fixture();
    let bad_reg = SessionBundle::new(
        f.ae.clone(),
        f.ae_hash.clone(),
        f.reg.clone(),
        "other",
        f.dataset.clone(),
        vec![],
        None,
    );
    assert!(matches!(bad_reg, Err(Error::ArtifactMismatch(_))));
    let bad_cav = SessionBundle::new(
        f.ae.clone(),
        f.ae_hash.clone(),
        f.reg.clone(),
        &f.ae_hash,
        f.dataset.clone(),
        vec![(f.cavs[0].clone(), "other".into())],
        None,
    );
    assert!(matches!(bad_cav, Err(Error::ArtifactMismatch(_))));
}

#[test]
fn bundle_loads_from_disk_and_checks_hashes() {
    let f = common::fixture();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    f.dataset.save(&root.join("data")).unwrap();
    let ae_hash = f.ae.save(&root.join("ae.model"), &f.dataset.manifest_hash).unwrap();
    f.reg.save(&root.join("reg.model"), &ae_hash).unwrap();
    std::fs::create_dir(root.join("cavs")).unwrap();
    for c in &f.cavs {
        c.save(&root.join("cavs").join(format!("{}.json", c.concept_name)), &ae_hash).unwrap();
    }
    common::sample_report().save(&root.join("tcav.csv")).unwrap();
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.into(),
        ae: "ae.model".into(),
        regressor: "reg.model".into(),
        data: "data".into(),
        cavs: "cavs".into(),
        tcav: Some("tcav.csv".into()),
    };
    std::fs::write(root.join(BUNDLE_FILE), serde_json::to_string(&manifest).unwrap()).unwrap();

    let b = SessionBundle::load(root).unwrap();
    assert_eq!(b.cavs.len(), 2);
    assert_eq!(b.ae_hash, ae_hash);
    assert_eq!(b.tcav.unwrap(), common::sample_report());

    f.reg.save(&root.join("reg.model"), "stale").unwrap();
    assert!(matches!(SessionBundle::load(root), Err(Error::ArtifactMismatch(_))));
}
