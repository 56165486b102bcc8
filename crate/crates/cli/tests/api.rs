mod common;

use std::sync::{Arc, Barrier};

use common::{fixture_library, Server};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};
use texsynth::server::QueuePage;
use texsynth_core::imageops::decode_image;
use texsynth_core::texlib::{CurationState, Library};

fn queue(client: &Client, s: &Server, query: &str) -> QueuePage {
    client.get(s.url(&format!("/api/queue?{query}"))).send().unwrap().json().unwrap()
}

fn decide(client: &Client, s: &Server, id: &str, body: Value) -> reqwest::blocking::Response {
    client
        .post(s.url(&format!("/api/assets/{id}/decision")))
        .json(&body)
        .send()
        .unwrap()
}

#[test]
fn stats_after_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(fixture_library(dir.path()));
    let stats: Value = reqwest::blocking::get(s.url("/api/stats")).unwrap().json().unwrap();
    assert_eq!(stats["total"], 10);
    assert_eq!(stats["by_state"]["pending"], 8);
    assert_eq!(stats["by_state"]["auto_rejected"], 2);
}

#[test]
fn accepted_asset_leaves_the_pending_queue() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(fixture_library(dir.path()));
    let c = Client::new();
    let page = queue(&c, &s, "state=pending");
    assert_eq!(page.total, 8);
    let id = page.items[0].asset_id.clone();

    let r = decide(&c, &s, &id, json!({"decision": "accept", "note": "clear"}));
    assert_eq!(r.status(), StatusCode::OK);
    let asset: Value = r.json().unwrap();
    assert_eq!(asset["curation_state"], "accepted");
    assert_eq!(asset["decision_note"], "clear");

    let page = queue(&c, &s, "state=pending");
    assert_eq!(page.total, 7);
    assert!(page.items.iter().all(|i| i.asset_id != id));
    let accepted = queue(&c, &s, "state=accepted");
    assert_eq!(accepted.items.len(), 1);
    assert_eq!(accepted.items[0].asset_id, id);
}

#[test]
fn paging_and_filters() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(fixture_library(dir.path()));
    let c = Client::new();
    let all = queue(&c, &s, "state=pending&limit=100");
    let first = queue(&c, &s, "state=pending&limit=3&offset=0");
    let second = queue(&c, &s, "state=pending&limit=3&offset=3");
    assert_eq!((first.items.len(), second.items.len(), first.total), (3, 3, 8));
    let ids: Vec<_> = first.items.iter().chain(&second.items).map(|i| &i.asset_id).collect();
    let expect: Vec<_> = all.items.iter().take(6).map(|i| &i.asset_id).collect();
    assert_eq!(ids, expect);
    assert_eq!(queue(&c, &s, "category=rusty").total, 0);
    assert_eq!(queue(&c, &s, "category=cracked&state=auto_rejected").total, 2);
    let r = c.get(s.url("/api/queue?state=bogus")).send().unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
}

#[test]
fn images_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(fixture_library(dir.path()));
    let c = Client::new();
    let item = queue(&c, &s, "").items.remove(0);
    let meta: Value = c.get(s.url(&format!("/api/assets/{}", item.asset_id))).send().unwrap().json().unwrap();
    assert_eq!(meta["asset_id"], item.asset_id.as_str());
    for url in [&item.image_url, &item.edges_url] {
        let r = c.get(s.url(url)).send().unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        assert_eq!(r.headers()["content-type"], "image/png");
        assert_eq!(decode_image(&r.bytes().unwrap()).unwrap().dims(), (64, 64));
    }
    let r = c.get(s.url("/api/assets/nope")).send().unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let r = c.get(s.url("/api/assets/nope/edges")).send().unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let r = c.get(s.url("/")).send().unwrap();
    assert_eq!(r.status(), StatusCode::OK);
}

#[test]
fn decision_errors() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(fixture_library(dir.path()));
    let c = Client::new();
    let id = queue(&c, &s, "").items[0].asset_id.clone();
    assert_eq!(decide(&c, &s, "missing", json!({"decision": "accept"})).status(), StatusCode::NOT_FOUND);
    assert_eq!(decide(&c, &s, &id, json!({"decision": "maybe"})).status(), StatusCode::BAD_REQUEST);
    assert_eq!(decide(&c, &s, &id, json!({"verdict": "accept"})).status(), StatusCode::BAD_REQUEST);
    let r = c
        .post(s.url(&format!("/api/assets/{id}/decision")))
        .body("{not json")
        .send()
        .unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let rejected = queue(&c, &s, "state=auto_rejected").items[0].asset_id.clone();
    assert_eq!(decide(&c, &s, &rejected, json!({"decision": "accept"})).status(), StatusCode::CONFLICT);
    // None of the failed calls changed anything.
    assert_eq!(queue(&c, &s, "").total, 8);
}

#[test]
fn concurrent_decisions_yield_one_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(fixture_library(dir.path()));
    let ids: Vec<String> = queue(&Client::new(), &s, "").items.into_iter().map(|i| i.asset_id).collect();
    for (round, id) in ids.iter().enumerate() {
        let barrier = Arc::new(Barrier::new(2));
        let handles: Vec<_> = ["accept", "reject"]
            .into_iter()
            .map(|d| {
                let (url, barrier) = (s.url(&format!("/api/assets/{id}/decision")), barrier.clone());
                std::thread::spawn(move || {
                    let c = Client::new();
                    barrier.wait();
                    c.post(url).json(&json!({"decision": d})).send().unwrap().status()
                })
            })
            .collect();
        let mut codes: Vec<u16> = handles.into_iter().map(|h| h.join().unwrap().as_u16()).collect();
        codes.sort();
        assert_eq!(codes, [200, 409], "round {round}");
    }
    assert_eq!(queue(&Client::new(), &s, "").total, 0);
}

#[test]
fn restart_keeps_every_decision() {
    let dir = tempfile::tempdir().unwrap();
    let lib = fixture_library(dir.path());
    let root = lib.root().to_path_buf();
    let s = Server::start(lib);
    let c = Client::new();
    let ids: Vec<String> = queue(&c, &s, "").items.into_iter().map(|i| i.asset_id).collect();
    let mut expected = Vec::new();
    for (i, id) in ids.iter().take(5).enumerate() {
        let d = if i % 2 == 0 { "accept" } else { "reject" };
        assert_eq!(decide(&c, &s, id, json!({"decision": d})).status(), StatusCode::OK);
        expected.push((id.clone(), d));
    }
    s.stop();

    let reopened = Library::open(&root).unwrap();
    for (id, d) in &expected {
        let want = if *d == "accept" { CurationState::Accepted } else { CurationState::Rejected };
        assert_eq!(reopened.asset(id).unwrap().curation_state, want);
    }
    let replayed = reopened.replay_states().unwrap();
    for (id, _) in &expected {
        assert_eq!(replayed[id], reopened.asset(id).unwrap().curation_state);
    }

    let s = Server::start(reopened);
    let page = queue(&c, &s, "");
    assert_eq!(page.total, 3);
    assert_eq!(decide(&c, &s, &expected[0].0, json!({"decision": "reject"})).status(), StatusCode::CONFLICT);
}

/// The committed schema lists exactly the fields the server sends.
#[test]
fn schema_matches_payloads() {
    let schema: Value =
        serde_json::from_str(include_str!("../api/curation-api.schema.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(fixture_library(dir.path()));
    let c = Client::new();
    let page: Value = c.get(s.url("/api/queue")).send().unwrap().json().unwrap();
    let item = &page["items"][0];
    let asset: Value = c
        .get(s.url(&format!("/api/assets/{}", item["asset_id"].as_str().unwrap())))
        .send()
        .unwrap()
        .json()
        .unwrap();
    for (def, payload) in [("QueuePage", &page), ("QueueItem", item), ("TextureAsset", &asset)] {
        let mut want: Vec<&str> = schema["$defs"][def]["required"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap())
            .collect();
        let mut got: Vec<&str> = payload.as_object().unwrap().keys().map(String::as_str).collect();
        want.sort();
        got.sort();
        assert_eq!(got, want, "{def}");
    }
}
