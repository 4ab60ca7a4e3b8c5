//! Minimal loopback implementation of the scoring protocol over an n-gram
//! model. Backs `fpscore serve` and the conformance tests.
//!
//! Conditioning is strictly left-to-right. Raw-mode texts go through the
//! crate tokenizer; pretokenized surfaces are echoed back as sent.

use std::sync::Arc;
use std::thread::JoinHandle;

use log::info;
use tiny_http::{Header, Method, Request, Response, Server};

use super::protocol::{BackendInfo, ErrorBody, ScoreRequest, ScoreResponse, Text, TokenRecord, INFO_PATH, SCORE_PATH};
use super::NgramScorer;
use crate::error::{Error, Result};
use crate::ngram::NgramModel;
use crate::tokenizer::tokenize;

const WORKERS: usize = 4;

pub struct ScoreServer {
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
    addr: std::net::SocketAddr,
}

impl ScoreServer {
    /// Binds `addr` (e.g. `127.0.0.1:0`) and starts serving in the background.
    ///
    /// With `model = None` every scoring call answers 503.
    pub fn start(model: Option<Arc<NgramModel>>, addr: &str) -> Result<Self> {
        let server = Server::http(addr).map_err(|e| Error::RemoteUnreachable(format!("cannot bind {addr}: {e}")))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Config("server is not bound to an IP socket".into()))?;
        let server = Arc::new(server);
        let scorer = model.map(NgramScorer::from_shared);
        let workers = (0..WORKERS)
            .map(|_| {
                let server = Arc::clone(&server);
                let scorer = scorer.clone();
                std::thread::spawn(move || {
                    for req in server.incoming_requests() {
                        handle(req, scorer.as_ref());
                    }
                })
            })
            .collect();
        info!("scoring server listening on {addr}");
        Ok(Self { server, workers, addr })
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the worker threads exit.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ScoreServer {
    fn drop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_string(body).with_status_code(status).with_header(header)
}

fn error_response(status: u16, message: impl Into<String>) -> Response<std::io::Cursor<Vec<u8>>> {
    let body = serde_json::to_string(&ErrorBody { error: message.into() }).expect("error body serializes");
    json_response(status, body)
}

fn handle(mut req: Request, scorer: Option<&NgramScorer>) {
    let path = req.url().split('?').next().unwrap_or_default().to_owned();
    let response = match (req.method(), path.as_str()) {
        (Method::Get, INFO_PATH) => match scorer {
            Some(s) => json_response(
                200,
                serde_json::to_string(&BackendInfo::from(&s.model().info())).expect("info serializes"),
            ),
            None => error_response(503, "model not loaded"),
        },
        (Method::Post, SCORE_PATH) => {
            let mut body = String::new();
            if let Err(e) = req.as_reader().read_to_string(&mut body) {
                error_response(400, format!("unreadable body: {e}"))
            } else {
                match scorer {
                    None => error_response(503, "model not loaded"),
                    Some(s) => match score_body(s, &body) {
                        Ok(resp) => json_response(200, resp),
                        Err(msg) => error_response(400, msg),
                    },
                }
            }
        }
        (_, INFO_PATH) | (_, SCORE_PATH) => error_response(405, "method not allowed"),
        _ => error_response(404, "not found"),
    };
    let _ = req.respond(response);
}

fn score_body(scorer: &NgramScorer, body: &str) -> std::result::Result<String, String> {
    let request: ScoreRequest = serde_json::from_str(body).map_err(|e| e.to_string())?;
    request.validate().map_err(|e| e.to_string())?;
    let results = request
        .texts
        .iter()
        .map(|text| {
            let surfaces = match text {
                Text::Tokens(t) => t.clone(),
                Text::Raw(r) => tokenize(r),
            };
            let scores = scorer.score_ids(&scorer.model().vocab().encode(&surfaces));
            surfaces
                .into_iter()
                .zip(&scores)
                .map(|(tok, s)| TokenRecord::from_score(tok, s))
                .collect()
        })
        .collect();
    let response = ScoreResponse {
        backend: BackendInfo::from(&scorer.model().info()),
        results,
    };
    serde_json::to_string(&response).map_err(|e| e.to_string())
}
