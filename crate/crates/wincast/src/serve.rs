//! HTTP scoring endpoint: a loaded artifact served read-only.
//!
//! `POST /score` takes `{"records": [...]}` where each record carries the
//! CSV schema minus `status`, and returns per-record probability, threshold
//! and decision in input order — bit-identical to what the batch prediction
//! pipeline computes for the same record. `GET /health` reports the artifact
//! fingerprint and schema version. Requests are validated field by field so
//! a client sees exactly which record and field is wrong (400); scoring
//! failures map to 500; neither kills the server.

use std::io::{Cursor, Read};
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

use crate::ingest::{OpportunityRecord, RecordSet, Segment, Status, COLUMNS};
use crate::pipeline::{predict_records, ModelArtifact};
use crate::{Error, Result};

/// Worker threads pulling from the shared accept queue; the artifact is
/// immutable, so concurrent scoring needs no synchronization beyond `Arc`.
const N_WORKERS: usize = 4;

/// Request bodies above this size are refused with 413.
const MAX_BODY_BYTES: u64 = 16 * 1024 * 1024;

struct Served {
    artifact: ModelArtifact,
    fingerprint: String,
}

/// A running scoring endpoint. [`ScoreServer::shutdown`] (or dropping the
/// handle) stops accepting requests and joins the workers.
pub struct ScoreServer {
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
    addr: SocketAddr,
}

impl ScoreServer {
    /// The bound address; with a `:0` request this carries the actual port.
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stop the server and wait for in-flight requests to finish.
    pub fn shutdown(self) {
        // Drop does the work; this method exists to make call sites read well.
    }

    /// Block for the server's lifetime (the CLI foreground mode).
    pub fn join(mut self) {
        for worker in self.workers.drain(..) {
            let _ = worker.join();
        }
    }
}

impl Drop for ScoreServer {
    fn drop(&mut self) {
        // One unblock call wakes exactly one blocked `recv`.
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for worker in self.workers.drain(..) {
            let _ = worker.join();
        }
    }
}

/// Validate the artifact, bind `addr` (e.g. `127.0.0.1:8080`, port 0 for
/// ephemeral), and start answering health and scoring requests.
pub fn serve(artifact: ModelArtifact, addr: &str) -> Result<ScoreServer> {
    artifact.validate()?;
    let server = Server::http(addr)
        .map_err(|e| Error::Config(format!("cannot bind scoring endpoint on {addr}: {e}")))?;
    let addr = server
        .server_addr()
        .to_ip()
        .expect("http binding always yields an IP address");
    let server = Arc::new(server);
    let served = Arc::new(Served {
        fingerprint: artifact.fingerprint(),
        artifact,
    });

    let workers = (0..N_WORKERS)
        .map(|_| {
            let server = Arc::clone(&server);
            let served = Arc::clone(&served);
            std::thread::spawn(move || {
                // `recv` errors only on unblock/shutdown (or a dead listener),
                // so exiting the loop is the correct response either way.
                while let Ok(request) = server.recv() {
                    handle(&served, request);
                }
            })
        })
        .collect();

    Ok(ScoreServer {
        server,
        workers,
        addr,
    })
}

fn handle(served: &Served, mut request: Request) {
    let response = respond_to(served, &mut request);
    // A client that hung up mid-response is its own problem; the worker
    // simply moves on to the next request.
    let _ = request.respond(response);
}

fn respond_to(served: &Served, request: &mut Request) -> Response<Cursor<Vec<u8>>> {
    match (request.method(), request.url()) {
        (Method::Get, "/health") => json_response(
            200,
            &json!({
                "fingerprint": served.fingerprint,
                "schema_version": served.artifact.schema_version,
            }),
        ),
        (Method::Post, "/score") => {
            let mut body = String::new();
            let mut limited = request.as_reader().take(MAX_BODY_BYTES + 1);
            if limited.read_to_string(&mut body).is_err() {
                return error_response(400, "request body is not valid UTF-8");
            }
            if body.len() as u64 > MAX_BODY_BYTES {
                return error_response(413, "request body exceeds the 16 MiB limit");
            }
            match score(served, &body) {
                Ok(value) => json_response(200, &value),
                Err((code, message)) => error_response(code, &message),
            }
        }
        (_, "/health") | (_, "/score") => {
            error_response(405, "method not allowed on this route")
        }
        _ => error_response(404, "no such route (use GET /health or POST /score)"),
    }
}

fn json_response(code: u16, value: &Value) -> Response<Cursor<Vec<u8>>> {
    let header = Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header is valid");
    Response::from_string(value.to_string())
        .with_status_code(code)
        .with_header(header)
}

fn error_response(code: u16, message: &str) -> Response<Cursor<Vec<u8>>> {
    json_response(code, &json!({ "error": message }))
}

fn score(served: &Served, body: &str) -> std::result::Result<Value, (u16, String)> {
    let records = parse_score_body(body).map_err(|m| (400, m))?;
    let rs = RecordSet::new(records, "score-request");
    let report = predict_records(&rs, &served.artifact)
        .map_err(|e| (500, format!("scoring failed: {e}")))?;

    let results: Vec<Value> = report
        .rows
        .iter()
        .map(|row| {
            json!({
                "id": row.opportunity_id,
                "probability": row.probability,
                "threshold": row.threshold,
                "decision": if row.predicted_won { "won" } else { "lost" },
            })
        })
        .collect();
    Ok(json!({ "results": results }))
}

/// Decode a scoring request body into open records, or explain exactly which
/// part of the request is malformed (the message becomes the 400 payload).
pub fn parse_score_body(body: &str) -> std::result::Result<Vec<OpportunityRecord>, String> {
    let parsed: Value =
        serde_json::from_str(body).map_err(|e| format!("request body is not valid JSON: {e}"))?;
    parse_score_request(&parsed)
}

/// Extract the record batch from a scoring request body, or explain exactly
/// which part of the request is malformed.
fn parse_score_request(v: &Value) -> std::result::Result<Vec<OpportunityRecord>, String> {
    let obj = v
        .as_object()
        .ok_or_else(|| "request body must be a JSON object".to_string())?;
    if let Some(key) = obj.keys().find(|k| *k != "records") {
        return Err(format!("unknown top-level field `{key}`"));
    }
    let array = obj
        .get("records")
        .ok_or_else(|| "missing `records` array".to_string())?
        .as_array()
        .ok_or_else(|| "`records` must be an array".to_string())?;
    if array.is_empty() {
        return Err("`records` must contain at least one record".to_string());
    }
    array
        .iter()
        .enumerate()
        .map(|(i, r)| parse_score_record(i, r))
        .collect()
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn parse_score_record(
    i: usize,
    v: &Value,
) -> std::result::Result<OpportunityRecord, String> {
    let obj = v
        .as_object()
        .ok_or_else(|| format!("records[{i}]: must be a JSON object"))?;

    for key in obj.keys() {
        if key == "status" {
            return Err(format!(
                "records[{i}].status: scoring requests must not carry an outcome; omit this field"
            ));
        }
        if !COLUMNS.contains(&key.as_str()) {
            return Err(format!("records[{i}].{key}: unknown field"));
        }
    }

    let text = |field: &str| -> std::result::Result<String, String> {
        match obj.get(field) {
            Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
            Some(Value::String(_)) => Err(format!("records[{i}].{field}: must not be empty")),
            Some(other) => Err(format!(
                "records[{i}].{field}: expected a string, got {}",
                json_kind(other)
            )),
            None => Err(format!("records[{i}].{field}: missing required field")),
        }
    };
    let flag = |field: &str| -> std::result::Result<bool, String> {
        match obj.get(field) {
            Some(Value::Bool(b)) => Ok(*b),
            Some(other) => Err(format!(
                "records[{i}].{field}: expected true or false, got {}",
                json_kind(other)
            )),
            None => Err(format!("records[{i}].{field}: missing required field")),
        }
    };
    let number = |field: &str| -> std::result::Result<f64, String> {
        match obj.get(field) {
            Some(Value::Number(n)) => n
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("records[{i}].{field}: must be a finite number")),
            Some(other) => Err(format!(
                "records[{i}].{field}: expected a number, got {}",
                json_kind(other)
            )),
            None => Err(format!("records[{i}].{field}: missing required field")),
        }
    };

    let segment_raw = text("segment")?;
    let segment = Segment::parse(&segment_raw).ok_or_else(|| {
        format!(
            "records[{i}].segment: unknown segment `{segment_raw}` \
             (expected Healthcare, Energy or Finance)"
        )
    })?;

    let user_probability = number("user_probability")?;
    if !(0.0..=1.0).contains(&user_probability) {
        return Err(format!(
            "records[{i}].user_probability: probability {user_probability} out of [0, 1]"
        ));
    }
    let project_duration = number("project_duration")?;
    if project_duration <= 0.0 {
        return Err(format!(
            "records[{i}].project_duration: duration {project_duration} must be > 0 days"
        ));
    }
    let total_contract_value = number("total_contract_value")?;
    if total_contract_value < 0.0 {
        return Err(format!(
            "records[{i}].total_contract_value: contract value {total_contract_value} \
             must be >= 0"
        ));
    }

    Ok(OpportunityRecord {
        opportunity_id: text("opportunity_id")?,
        business_unit: text("business_unit")?,
        opportunity_type: text("opportunity_type")?,
        project_location: text("project_location")?,
        general_now: text("general_now")?,
        detailed_now: text("detailed_now")?,
        account: text("account")?,
        account_location: text("account_location")?,
        sales_lead: text("sales_lead")?,
        engagement_manager: text("engagement_manager")?,
        sub_practice: text("sub_practice")?,
        practice: text("practice")?,
        group_practice: text("group_practice")?,
        segment: Some(segment),
        key_account_energy: Some(flag("key_account_energy")?),
        key_account_healthcare: Some(flag("key_account_healthcare")?),
        key_account_finance: Some(flag("key_account_finance")?),
        // A record being scored is by definition still in flight.
        status: Some(Status::Open),
        user_probability: Some(user_probability),
        project_duration: Some(project_duration),
        total_contract_value: Some(total_contract_value),
    })
}
