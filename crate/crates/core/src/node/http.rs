//! HTTP front end for a [`LocalNetwork`].
//!
//! Network routes live under `/nodes/{id}/...` next to `/ledger` and
//! `/ledger/tx`. A single-node router exposes the same node routes at the
//! root. Errors are returned as `{"error": code, "message": text}`.

use std::collections::BTreeMap;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, on, MethodFilter};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::Value;

use super::api::{ErrorBody, LedgerApi, LocalNetwork, NodeApi, ORIGIN_HEADER};
use super::types::*;
use super::NodeError;
use crate::ledger::LedgerTx;

struct Served {
    net: LocalNetwork,
    /// Ledger state file rewritten after every mutating request.
    ledger_path: Option<PathBuf>,
}

type Shared = Arc<Served>;

impl Served {
    fn persist(&self) -> Result<(), NodeError> {
        let Some(path) = &self.ledger_path else { return Ok(()) };
        let json = self.net.lock().to_json();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json)
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| NodeError::Storage(e.to_string()))
    }
}

pub fn status_for(err: &NodeError) -> StatusCode {
    match err {
        NodeError::UnknownPolicy => StatusCode::NOT_FOUND,
        NodeError::BadAuth => StatusCode::UNAUTHORIZED,
        NodeError::QuotaExceeded | NodeError::DuplicatePolicy => StatusCode::CONFLICT,
        NodeError::OutsideWindow | NodeError::ConditionFalse | NodeError::Revoked => StatusCode::FORBIDDEN,
        NodeError::Offline => StatusCode::SERVICE_UNAVAILABLE,
        NodeError::Malformed(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn error_response(err: NodeError) -> Response {
    let body = ErrorBody { error: err.code().to_string(), message: err.to_string() };
    (status_for(&err), Json(body)).into_response()
}

fn reply(result: Result<Value, NodeError>) -> Response {
    match result {
        Ok(v) => Json(v).into_response(),
        Err(e) => error_response(e),
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, NodeError> {
    serde_json::from_slice(body).map_err(|e| NodeError::Malformed(e.to_string()))
}

fn to_value<T: serde::Serialize>(v: T) -> Result<Value, NodeError> {
    Ok(serde_json::to_value(v).expect("serializable"))
}

fn query_map(query: Option<String>) -> BTreeMap<String, String> {
    query
        .unwrap_or_default()
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn list_request(query: Option<String>) -> Result<ListRequest, NodeError> {
    let q = query_map(query);
    let field = |k: &str| q.get(k).ok_or_else(|| NodeError::Malformed(format!("missing query parameter {k}")));
    let bad = |k: &str| NodeError::Malformed(format!("bad query parameter {k}"));
    let owner: [u8; 32] =
        hex::decode(field("owner")?).ok().and_then(|b| b.try_into().ok()).ok_or_else(|| bad("owner"))?;
    let nonce = field("nonce")?.parse().map_err(|_| bad("nonce"))?;
    let signature = hex::decode(field("signature")?).map_err(|_| bad("signature"))?;
    Ok(ListRequest { owner, auth: OwnerAuth { nonce, signature } })
}

struct Call<'a> {
    origin: String,
    query: Option<String>,
    body: &'a [u8],
}

type Op = fn(&Served, &str, Call<'_>) -> Result<Value, NodeError>;

fn op_deploy(s: &Served, id: &str, c: Call<'_>) -> Result<Value, NodeError> {
    let node = s.net.handle(id, &c.origin).ok_or(NodeError::UnknownPolicy)?;
    node.deploy(&parse(c.body)?)?;
    s.persist()?;
    to_value(serde_json::json!({ "deployed": true }))
}

fn op_reencrypt(s: &Served, id: &str, c: Call<'_>) -> Result<Value, NodeError> {
    let node = s.net.handle(id, &c.origin).ok_or(NodeError::UnknownPolicy)?;
    to_value(node.reencrypt(&parse(c.body)?)?)
}

fn op_revoke(s: &Served, id: &str, c: Call<'_>) -> Result<Value, NodeError> {
    let node = s.net.handle(id, &c.origin).ok_or(NodeError::UnknownPolicy)?;
    let payout = node.revoke(&parse(c.body)?)?;
    s.persist()?;
    to_value(payout)
}

fn op_renew(s: &Served, id: &str, c: Call<'_>) -> Result<Value, NodeError> {
    let node = s.net.handle(id, &c.origin).ok_or(NodeError::UnknownPolicy)?;
    node.renew(&parse(c.body)?)?;
    s.persist()?;
    to_value(serde_json::json!({ "renewed": true }))
}

fn op_policies(s: &Served, id: &str, c: Call<'_>) -> Result<Value, NodeError> {
    let node = s.net.handle(id, &c.origin).ok_or(NodeError::UnknownPolicy)?;
    to_value(node.policies(&list_request(c.query)?)?)
}

fn op_ping(s: &Served, id: &str, c: Call<'_>) -> Result<Value, NodeError> {
    let node = s.net.handle(id, &c.origin).ok_or(NodeError::UnknownPolicy)?;
    to_value(node.ping()?)
}

const OPS: [(&str, MethodFilter, Op); 6] = [
    ("/policy", MethodFilter::POST, op_deploy),
    ("/reencrypt", MethodFilter::POST, op_reencrypt),
    ("/revoke", MethodFilter::POST, op_revoke),
    ("/renew", MethodFilter::POST, op_renew),
    ("/policies", MethodFilter::GET, op_policies),
    ("/ping", MethodFilter::GET, op_ping),
];

fn origin(headers: &HeaderMap) -> String {
    headers.get(ORIGIN_HEADER).and_then(|v| v.to_str().ok()).unwrap_or("").to_string()
}

async fn get_ledger(State(s): State<Shared>) -> Response {
    let json = s.net.lock().to_json();
    ([(axum::http::header::CONTENT_TYPE, "application/json")], json).into_response()
}

async fn post_tx(State(s): State<Shared>, body: Bytes) -> Response {
    let result = parse::<LedgerTx>(&body).and_then(|tx| s.net.submit(tx)).and_then(|out| {
        s.persist()?;
        to_value(out)
    });
    reply(result)
}

async fn list_nodes(State(s): State<Shared>) -> Response {
    let nodes: BTreeMap<&str, String> =
        s.net.nodes.iter().map(|(id, n)| (id.as_str(), hex::encode(n.public_key()))).collect();
    Json(nodes).into_response()
}

async fn get_head(State(s): State<Shared>) -> Response {
    Json(s.net.lock().block()).into_response()
}

fn with_ledger_routes(router: Router<Shared>) -> Router<Shared> {
    router
        .route("/ledger", get(get_ledger))
        .route("/ledger/head", get(get_head))
        .route("/ledger/tx", axum::routing::post(post_tx))
}

/// Router for every node of the network plus the ledger.
pub fn network_router(net: LocalNetwork, ledger_path: Option<PathBuf>) -> Router {
    let mut router = Router::new().route("/nodes", get(list_nodes));
    for (path, method, op) in OPS {
        router = router.route(
            &format!("/nodes/{{id}}{path}"),
            on(
                method,
                move |State(s): State<Shared>,
                      Path(id): Path<String>,
                      headers: HeaderMap,
                      RawQuery(query): RawQuery,
                      body: Bytes| async move {
                    reply(op(&s, &id, Call { origin: origin(&headers), query, body: &body }))
                },
            ),
        );
    }
    with_ledger_routes(router).with_state(Arc::new(Served { net, ledger_path }))
}

/// Router exposing one node's routes at the root, plus the ledger.
pub fn node_router(net: LocalNetwork, node_id: &str, ledger_path: Option<PathBuf>) -> Router {
    let mut router = Router::new();
    for (path, method, op) in OPS {
        let id = node_id.to_string();
        router = router.route(
            path,
            on(
                method,
                move |State(s): State<Shared>, headers: HeaderMap, RawQuery(query): RawQuery, body: Bytes| async move {
                    reply(op(&s, &id, Call { origin: origin(&headers), query, body: &body }))
                },
            ),
        );
    }
    with_ledger_routes(router).with_state(Arc::new(Served { net, ledger_path }))
}

/// A router served on a background runtime. Dropping it stops the server.
pub struct Server {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl Server {
    pub fn start(router: Router, addr: &str) -> io::Result<Server> {
        let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                axum::serve(listener, router)
                    .with_graceful_shutdown(async move {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        Ok(Server { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) -> io::Result<()> {
        let thread = self.thread.take().expect("running server");
        thread.join().unwrap_or_else(|_| Err(io::Error::other("server thread panicked")))
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}
