mod common;

use std::path::PathBuf;
use std::sync::Arc;

use fpscore::scorer::protocol::{BackendInfo, ScoreRequest, ScoreResponse, INFO_PATH, SCORE_PATH};
use fpscore::scorer::{NgramScorer, RemoteScorer, ScoreServer, Scorer};
use fpscore::tokenizer::tokenize;
use fpscore::types::TokenScore;
use fpscore::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn fixture_model() -> Arc<fpscore::NgramModel> {
    Arc::new(common::train(common::CORPORA[0], 2).0)
}

fn fixture_request() -> ScoreRequest {
    ScoreRequest::pretokenized(vec![tokenize("the cat sat on the log"), tokenize("a dog saw the mat")])
}

fn assert_close(remote: &TokenScore, local: &TokenScore) {
    let pairs = [
        (remote.p_actual, local.p_actual),
        (remote.p_max, local.p_max),
        (remote.entropy_nats, local.entropy_nats),
        (remote.fp, local.fp),
    ];
    for (r, l) in pairs {
        assert!((r - l).abs() <= 1e-9, "{remote:?} vs {local:?}");
    }
    assert_eq!(remote.rank, local.rank);
}

#[test]
fn loopback_scores_equal_local_scores() {
    let model = Arc::new(common::train(common::CORPORA[1], 3).0);
    let local = NgramScorer::from_shared(Arc::clone(&model));
    let server = ScoreServer::start(Some(model), "127.0.0.1:0").unwrap();
    let remote = RemoteScorer::new(&server.url());
    assert_eq!(remote.info().unwrap(), local.info().unwrap());

    // 70 texts span three batches.
    let base = [
        "we will work and win",
        "they see what we will see .",
        "unknown words stay unknown",
    ];
    let texts: Vec<Vec<String>> = (0..70).map(|i| tokenize(base[i % 3])).collect();
    let got = remote.score_batch(&texts).unwrap();
    assert_eq!(got.len(), texts.len());
    for (text, scores) in texts.iter().zip(&got) {
        let want = local.score(text).unwrap();
        assert_eq!(scores.len(), want.len());
        for (r, l) in scores.iter().zip(&want) {
            assert_close(r, l);
        }
    }
}

#[test]
fn raw_mode_uses_server_tokenization() {
    let model = fixture_model();
    let local = NgramScorer::from_shared(Arc::clone(&model));
    let server = ScoreServer::start(Some(model), "127.0.0.1:0").unwrap();
    let remote = RemoteScorer::new(&server.url());
    let (info, results) = remote.score_raw(&["The cat, sat!".to_string()]).unwrap();
    assert_eq!(info, local.info().unwrap());
    let (tokens, scores) = &results[0];
    assert_eq!(tokens, &tokenize("The cat, sat!"));
    for (r, l) in scores.iter().zip(&local.score(tokens).unwrap()) {
        assert_close(r, l);
    }
}

#[test]
fn error_statuses() {
    let server = ScoreServer::start(Some(fixture_model()), "127.0.0.1:0").unwrap();
    let url = format!("{}{}", server.url(), SCORE_PATH);
    match ureq::post(&url)
        .set("Content-Type", "application/json")
        .send_string("{nope")
    {
        Err(ureq::Error::Status(400, resp)) => assert!(resp.into_string().unwrap().contains("\"error\"")),
        other => panic!("expected 400, got {other:?}"),
    }
    let empty = serde_json::to_string(&ScoreRequest::pretokenized(vec![])).unwrap();
    assert!(matches!(
        ureq::post(&url).send_string(&empty),
        Err(ureq::Error::Status(400, _))
    ));

    let idle = ScoreServer::start(None, "127.0.0.1:0").unwrap();
    let err = RemoteScorer::new(&idle.url()).score(&tokenize("the cat")).unwrap_err();
    assert!(matches!(err, Error::RemoteStatus { status: 503, .. }), "{err}");
}

#[test]
fn recorded_fixtures_round_trip_byte_exactly() {
    let req_bytes = std::fs::read_to_string(fixture("score_request.json")).unwrap();
    let resp_bytes = std::fs::read_to_string(fixture("score_response.json")).unwrap();
    let info_bytes = std::fs::read_to_string(fixture("info_response.json")).unwrap();

    let req: ScoreRequest = serde_json::from_str(&req_bytes).unwrap();
    let resp: ScoreResponse = serde_json::from_str(&resp_bytes).unwrap();
    let info: BackendInfo = serde_json::from_str(&info_bytes).unwrap();
    assert_eq!(serde_json::to_string(&req).unwrap(), req_bytes);
    assert_eq!(serde_json::to_string(&resp).unwrap(), resp_bytes);
    assert_eq!(serde_json::to_string(&info).unwrap(), info_bytes);

    resp.validate_against(&req).unwrap();
    assert_eq!(resp.backend, info);
    // The fixtures were recorded from a server wrapping this same model.
    let local = NgramScorer::from_shared(fixture_model());
    assert_eq!(fpscore::ScorerInfo::from(info), local.info().unwrap());
    for (text, records) in fixture_request().texts.iter().zip(&resp.results) {
        let fpscore::scorer::protocol::Text::Tokens(tokens) = text else {
            unreachable!()
        };
        let want = local.score(tokens).unwrap();
        for (rec, l) in records.iter().zip(&want) {
            assert_close(&rec.to_score(), l);
        }
    }
}

/// Regenerates the fixtures from a live loopback server:
/// `cargo test -p fpscore --test protocol -- --ignored record_fixtures`.
#[test]
#[ignore]
fn record_fixtures() {
    let server = ScoreServer::start(Some(fixture_model()), "127.0.0.1:0").unwrap();
    let req = serde_json::to_string(&fixture_request()).unwrap();
    let resp = ureq::post(&format!("{}{}", server.url(), SCORE_PATH))
        .set("Content-Type", "application/json")
        .send_string(&req)
        .unwrap()
        .into_string()
        .unwrap();
    let info = ureq::get(&format!("{}{}", server.url(), INFO_PATH))
        .call()
        .unwrap()
        .into_string()
        .unwrap();
    std::fs::write(fixture("score_request.json"), req).unwrap();
    std::fs::write(fixture("score_response.json"), resp).unwrap();
    std::fs::write(fixture("info_response.json"), info).unwrap();
}
