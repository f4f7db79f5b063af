use std::sync::Arc;

use serde_json::{json, Value};
use watn_core::invite::{InviteKey, InviteToken};
use watn_core::wire::{WireRequest, WireResponse};
use watn_core::{Store, TestClock};
use watn_server::{Api, ServerHandle};

const TTL: u64 = 86_400_000;

fn api() -> Api {
    let clock = Arc::new(TestClock::new(1_700_000_000_000, 1000));
    Api::new(
        Arc::new(Store::seeded(1000, clock, 5)),
        InviteKey::from_bytes([1; 32]),
        TTL,
    )
}

fn json_of(r: &WireResponse) -> Value {
    serde_json::from_slice(&r.body).expect("every response is JSON")
}

fn post(api: &Api, path: &str, body: Value) -> (u16, Value) {
    let r = api.handle(&WireRequest::post_json(path, &body));
    (r.status, json_of(&r))
}

fn get(api: &Api, path: &str, params: &[(&str, &str)]) -> (u16, Value) {
    let mut req = WireRequest::get(path);
    for (k, v) in params {
        req = req.param(k, *v);
    }
    let r = api.handle(&req);
    (r.status, json_of(&r))
}

struct Who {
    id: String,
    secret: String,
}

fn register(api: &Api) -> Who {
    let (st, v) = post(api, "/register", json!({}));
    assert_eq!(st, 200);
    Who {
        id: v["id"].as_str().unwrap().into(),
        secret: v["secret"].as_str().unwrap().into(),
    }
}

fn auth(w: &Who) -> Value {
    json!({"id": w.id, "secret": w.secret})
}

fn invite(api: &Api, w: &Who) -> String {
    let (st, v) = post(api, "/invite", auth(w));
    assert_eq!(st, 200, "{v}");
    v["token"].as_str().unwrap().into()
}

fn accept(api: &Api, w: &Who, token: &str) -> (u16, Value) {
    post(
        api,
        "/accept",
        json!({"token": token, "id": w.id, "secret": w.secret}),
    )
}

#[test]
fn register_returns_exactly_id_and_secret() {
    let api = api();
    let r = api.handle(&WireRequest::post("/register"));
    assert_eq!(r.status, 200);
    let v = json_of(&r);
    let obj = v.as_object().unwrap();
    let mut keys: Vec<_> = obj.keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["id", "secret"]);
    let other = register(&api);
    assert_ne!(other.id, v["id"].as_str().unwrap());
}

#[test]
fn register_ignores_malformed_body() {
    let api = api();
    let mut req = WireRequest::post("/register");
    req.body = b"{not json".to_vec();
    assert_eq!(api.handle(&req).status, 200);
}

#[test]
fn checkin_statuses() {
    let api = api();
    let a = register(&api);
    let (st, v) = post(
        &api,
        "/checkin",
        json!({"id": a.id, "secret": a.secret, "lat": 55.0, "lng": 37.0}),
    );
    assert_eq!(st, 200);
    assert!(v["ts"].is_u64());
    let (st, v) = post(
        &api,
        "/checkin",
        json!({"id": a.id, "secret": a.secret, "lat": 91.0, "lng": 37.0}),
    );
    assert_eq!((st, v), (400, json!({"error": "out_of_range"})));
    let (st, v) = post(
        &api,
        "/checkin",
        json!({"id": a.id, "secret": "wrong", "lat": 1.0, "lng": 1.0}),
    );
    assert_eq!((st, v), (401, json!({"error": "auth_failed"})));
    let (st, v) = post(
        &api,
        "/checkin",
        json!({"id": a.id, "secret": a.secret, "lat": 1.0, "lng": 1.0, "msg": "x".repeat(501)}),
    );
    assert_eq!((st, v), (400, json!({"error": "msg_too_long"})));
}

#[test]
fn identity_fields_are_rejected() {
    let api = api();
    let a = register(&api);
    let (st, v) = post(
        &api,
        "/checkin",
        json!({"id": a.id, "secret": a.secret, "lat": 1.0, "lng": 1.0, "name": "alice"}),
    );
    assert_eq!((st, v), (400, json!({"error": "bad_request"})));
    let (st, _) = post(
        &api,
        "/invite",
        json!({"id": a.id, "secret": a.secret, "email": "a@example.org"}),
    );
    assert_eq!(st, 400);
    let (st, _) = get(
        &api,
        "/feed",
        &[("id", &a.id), ("secret", &a.secret), ("phone", "555")],
    );
    assert_eq!(st, 400);
}

#[test]
fn feed_shape_and_order() {
    let api = api();
    let b = register(&api);
    let (st, v) = get(&api, "/feed", &[("id", &b.id), ("secret", &b.secret)]);
    assert_eq!((st, v), (200, json!([])));

    let sharers: Vec<Who> = (0..3).map(|_| register(&api)).collect();
    for (i, s) in sharers.iter().enumerate() {
        let t = invite(&api, s);
        assert_eq!(accept(&api, &b, &t).0, 200);
        let mut body = json!({"id": s.id, "secret": s.secret, "lat": 55.0, "lng": 37.0 + i as f64});
        if i == 1 {
            body["msg"] = json!("on my way");
        }
        assert_eq!(post(&api, "/checkin", body).0, 200);
    }
    let r = api.handle(
        &WireRequest::get("/feed")
            .param("id", &b.id)
            .param("secret", &b.secret),
    );
    let v = json_of(&r);
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 3);
    let ids: Vec<&str> = arr.iter().map(|e| e["id"].as_str().unwrap()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    for e in arr {
        let keys: Vec<_> = e.as_object().unwrap().keys().cloned().collect();
        assert!(keys == ["id", "lat", "lng", "ts"] || keys == ["id", "lat", "lng", "msg", "ts"]);
    }
    let text = String::from_utf8(r.body).unwrap();
    assert!(text.starts_with(r#"[{"id":""#));
    assert!(text.contains(r#""lat":55.0,"lng":37.0,"ts":"#));
}

#[test]
fn invite_tokens_name_the_caller() {
    let api = api();
    let a = register(&api);
    let t1 = invite(&api, &a);
    let t2 = invite(&api, &a);
    let d1 = InviteToken::decode(&t1, api.key(), 0).unwrap();
    let d2 = InviteToken::decode(&t2, api.key(), 0).unwrap();
    assert_eq!(d1.sharer.as_str(), a.id);
    assert_ne!(d1.nonce, d2.nonce);
    let (_, v) = post(&api, "/invite", auth(&a));
    assert_eq!(
        v["link"],
        json!(format!(
            "watn://accept?token={}",
            v["token"].as_str().unwrap()
        ))
    );

    assert_eq!(post(&api, "/delete", auth(&a)).0, 200);
    assert_eq!(post(&api, "/invite", auth(&a)).0, 401);
}

#[test]
fn accept_paths() {
    let api = api();
    let a = register(&api);
    let b = register(&api);
    let c = register(&api);
    let t = invite(&api, &a);
    assert_eq!(accept(&api, &a, &t), (409, json!({"error": "self_share"})));
    assert_eq!(accept(&api, &b, &t), (200, json!({"sharer": a.id})));
    assert_eq!(accept(&api, &c, &t), (400, json!({"error": "used_token"})));
    let (_, v) = get(&api, "/sharers", &[("id", &b.id), ("secret", &b.secret)]);
    assert_eq!(v, json!([a.id]));
    let (_, v) = get(&api, "/readers", &[("id", &a.id), ("secret", &a.secret)]);
    assert_eq!(v, json!([b.id]));

    let mut forged = t.clone();
    let last = forged.pop().unwrap();
    forged.push(if last == 'A' { 'B' } else { 'A' });
    assert_eq!(
        accept(&api, &c, &forged),
        (400, json!({"error": "bad_token"}))
    );
    assert_eq!(
        accept(&api, &c, "garbage"),
        (400, json!({"error": "bad_token"}))
    );

    let t2 = invite(&api, &a);
    assert_eq!(post(&api, "/delete", auth(&a)).0, 200);
    assert_eq!(
        accept(&api, &c, &t2),
        (404, json!({"error": "unknown_participant"}))
    );
}

#[test]
fn expired_invite() {
    let clock = Arc::new(TestClock::new(1_000_000, 1));
    let api = Api::new(
        Arc::new(Store::seeded(10, clock.clone(), 1)),
        InviteKey::from_bytes([2; 32]),
        50,
    );
    let a = register(&api);
    let b = register(&api);
    let t = invite(&api, &a);
    clock.advance(1000);
    assert_eq!(
        accept(&api, &b, &t),
        (400, json!({"error": "expired_token"}))
    );
}

#[test]
fn revoke_history_delete() {
    let api = api();
    let a = register(&api);
    let b = register(&api);
    let c = register(&api);
    let t = invite(&api, &a);
    accept(&api, &b, &t);
    for i in 0..3 {
        post(
            &api,
            "/checkin",
            json!({"id": a.id, "secret": a.secret, "lat": i as f64, "lng": 0.0}),
        );
    }
    let (st, v) = get(
        &api,
        "/history",
        &[
            ("id", &b.id),
            ("secret", &b.secret),
            ("target", &a.id),
            ("limit", "2"),
        ],
    );
    assert_eq!(st, 200);
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[0]["lat"], json!(1.0));
    let (st, v) = get(
        &api,
        "/history",
        &[("id", &c.id), ("secret", &c.secret), ("target", &a.id)],
    );
    assert_eq!((st, v), (403, json!({"error": "not_shared"})));
    let (st, _) = get(&api, "/history", &[("id", &a.id), ("secret", &a.secret)]);
    assert_eq!(st, 200);

    let edge = json!({"sharer": a.id, "reader": b.id});
    let mut body = auth(&c);
    body.as_object_mut()
        .unwrap()
        .extend(edge.as_object().unwrap().clone());
    assert_eq!(post(&api, "/revoke", body).0, 403);
    let mut body = auth(&b);
    body.as_object_mut()
        .unwrap()
        .extend(edge.as_object().unwrap().clone());
    assert_eq!(
        post(&api, "/revoke", body.clone()),
        (200, json!({"ok": true}))
    );
    assert_eq!(post(&api, "/revoke", body).0, 200);
    let (_, v) = get(&api, "/feed", &[("id", &b.id), ("secret", &b.secret)]);
    assert_eq!(v, json!([]));

    assert_eq!(post(&api, "/delete", auth(&b)).0, 200);
    let (st, _) = get(&api, "/feed", &[("id", &b.id), ("secret", &b.secret)]);
    assert_eq!(st, 401);
}

#[test]
fn routing_errors_are_json() {
    let api = api();
    let r = api.handle(&WireRequest::get("/nope"));
    assert_eq!(
        (r.status, json_of(&r)),
        (404, json!({"error": "not_found"}))
    );
    let r = api.handle(&WireRequest::get("/register"));
    assert_eq!(
        (r.status, json_of(&r)),
        (405, json!({"error": "method_not_allowed"}))
    );
    let (st, _) = get(&api, "/feed", &[("id", "short")]);
    assert_eq!(st, 400);
    let r = api.handle(&WireRequest::post("/checkin"));
    assert_eq!(
        (r.status, json_of(&r)),
        (400, json!({"error": "bad_request"}))
    );
}

#[test]
fn concurrent_duplicate_accept_is_exactly_once() {
    let api = Arc::new(api());
    let a = register(&api);
    let readers: Vec<Who> = (0..16).map(|_| register(&api)).collect();
    let t = invite(&api, &a);
    let statuses: Vec<u16> = std::thread::scope(|s| {
        let hs: Vec<_> = readers
            .iter()
            .map(|r| {
                let api = &api;
                let t = &t;
                s.spawn(move || accept(api, r, t).0)
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(statuses.iter().filter(|&&s| s == 200).count(), 1);
    assert_eq!(statuses.iter().filter(|&&s| s == 400).count(), 15);
}

#[test]
fn over_http() {
    let api = Arc::new(api());
    let server = ServerHandle::spawn(api, "127.0.0.1:0".parse().unwrap()).unwrap();
    let base = server.base_url();
    let agent = ureq::Agent::new_with_defaults();
    let reg: Value = agent
        .post(&format!("{base}/register"))
        .send_empty()
        .unwrap()
        .body_mut()
        .read_json()
        .unwrap();
    let id = reg["id"].as_str().unwrap();
    let secret = reg["secret"].as_str().unwrap();
    let mut resp = agent
        .get(&format!("{base}/feed"))
        .query("id", id)
        .query("secret", secret)
        .call()
        .unwrap();
    assert_eq!(
        resp.headers().get("content-type").unwrap(),
        "application/json"
    );
    assert_eq!(resp.body_mut().read_to_string().unwrap(), "[]");

    let err = agent
        .get(&format!("{base}/feed"))
        .query("id", id)
        .query("secret", "bad")
        .config()
        .http_status_as_error(false)
        .build()
        .call()
        .unwrap();
    assert_eq!(err.status().as_u16(), 401);
    let addr = server.addr();
    server.stop();
    assert!(std::net::TcpStream::connect(addr).is_err());
}
