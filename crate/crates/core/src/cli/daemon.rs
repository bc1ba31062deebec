//! Loopback HTTP API over one unlocked session.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `GET /identity` | | contact card |
//! | `POST /write?path=P` | raw bytes | `{"ref": ...}` |
//! | `GET /read?target=T` | | raw bytes |
//! | `POST /delete?path=P` | | delete report |
//! | `POST /share` | share JSON | grant |
//! | `POST /grants` | grant | `{}` |
//! | `POST /renew` | `{"selector", "blocks", "fee"}` | `{"renewed": n}` |
//! | `POST /revoke?selector=S` | | revoked policies |
//! | `GET /policies` | | policy rows |
//!
//! Errors come back as `{"error", "exit_code"}` with a matching status.
//! Mutations are serialized; each one persists the client state.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use prekms::client::{Grant, ShareOptions, SplitScheme};
use prekms::node::http::Server;
use prekms::node::Condition;
use serde::Deserialize;
use serde_json::{json, Value};

use super::session::Session;
use super::CliError;

type Shared = Arc<Mutex<Session>>;
type Params = Query<HashMap<String, String>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareBody {
    pub path: String,
    pub to: String,
    /// Seconds; `blocks` wins when both are given.
    pub duration: Option<u64>,
    pub blocks: Option<u64>,
    pub fee: Option<u64>,
    pub collateral: Option<u64>,
    #[serde(default)]
    pub condition: Condition,
    #[serde(default)]
    pub scheme: Option<String>,
    #[serde(default)]
    pub nodes: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RenewBody {
    selector: String,
    blocks: u64,
    #[serde(default)]
    fee: u64,
}

fn status_for(code: i32) -> StatusCode {
    match code {
        2 => StatusCode::BAD_REQUEST,
        3 => StatusCode::FORBIDDEN,
        4 => StatusCode::BAD_GATEWAY,
        5 => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn error(e: CliError) -> Response {
    (status_for(e.code), Json(json!({ "error": e.message, "exit_code": e.code }))).into_response()
}

fn param(q: &HashMap<String, String>, key: &str) -> Result<String, CliError> {
    q.get(key).cloned().ok_or_else(|| CliError::usage(format!("missing query parameter {key:?}")))
}

/// Runs `f` on a blocking thread: node calls may use a blocking HTTP client.
async fn with_session<T: Send + 'static>(
    s: Shared,
    f: impl FnOnce(&mut Session) -> Result<T, CliError> + Send + 'static,
) -> Result<T, CliError> {
    tokio::task::spawn_blocking(move || f(&mut s.lock().expect("session lock")))
        .await
        .unwrap_or_else(|e| Err(CliError { code: 1, message: format!("handler failed: {e}") }))
}

fn json_reply(r: Result<Value, CliError>) -> Response {
    r.map_or_else(error, |v| Json(v).into_response())
}

fn to_value<T: serde::Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

pub fn router(session: Session) -> Router {
    let shared: Shared = Arc::new(Mutex::new(session));
    Router::new()
        .route(
            "/identity",
            get(|State(s): State<Shared>| async move {
                json_reply(with_session(s, |s| Ok(to_value(s.client.identity().card()))).await)
            }),
        )
        .route(
            "/write",
            post(|State(s): State<Shared>, Query(q): Params, body: Bytes| async move {
                json_reply(
                    with_session(s, move |s| {
                        let path = param(&q, "path")?;
                        let (client, conn) = s.parts();
                        let at = client.write(&conn, &path, &body)?;
                        s.save()?;
                        Ok(json!({ "ref": at }))
                    })
                    .await,
                )
            }),
        )
        .route(
            "/read",
            get(|State(s): State<Shared>, Query(q): Params| async move {
                let r = with_session(s, move |s| Ok(s.client.read(&s.conn(), &param(&q, "target")?)?)).await;
                r.map_or_else(error, |data| data.into_response())
            }),
        )
        .route(
            "/delete",
            post(|State(s): State<Shared>, Query(q): Params| async move {
                json_reply(
                    with_session(s, move |s| {
                        let path = param(&q, "path")?;
                        let (client, conn) = s.parts();
                        let report = client.delete(&conn, &path)?;
                        s.save()?;
                        Ok(to_value(report))
                    })
                    .await,
                )
            }),
        )
        .route(
            "/share",
            post(|State(s): State<Shared>, body: Bytes| async move {
                json_reply(
                    with_session(s, move |s| {
                        let b: ShareBody =
                            serde_json::from_slice(&body).map_err(|e| CliError::usage(format!("share: {e}")))?;
                        let duration = match b.blocks {
                            Some(n) => n,
                            None => s.network.blocks_for_seconds(b.duration.unwrap_or(s.settings.duration))?,
                        };
                        let opts = ShareOptions {
                            duration,
                            fee: b.fee.unwrap_or(s.settings.fee),
                            collateral: b.collateral.unwrap_or(s.settings.collateral),
                            condition: b.condition,
                            scheme: b
                                .scheme
                                .as_deref()
                                .map(SplitScheme::parse)
                                .transpose()
                                .map_err(CliError::usage)?
                                .unwrap_or_default(),
                            nodes: b.nodes,
                        };
                        let recipient = s.client.resolve_recipient(&b.to)?;
                        let (client, conn) = s.parts();
                        let grant = client.share(&conn, &recipient, &b.path, &opts)?;
                        s.save()?;
                        Ok(to_value(grant))
                    })
                    .await,
                )
            }),
        )
        .route(
            "/grants",
            post(|State(s): State<Shared>, body: Bytes| async move {
                json_reply(
                    with_session(s, move |s| {
                        let g: Grant =
                            serde_json::from_slice(&body).map_err(|e| CliError::usage(format!("grant: {e}")))?;
                        s.client.add_contact(g.owner.clone());
                        s.client.import_grant(g);
                        s.save()?;
                        Ok(json!({}))
                    })
                    .await,
                )
            }),
        )
        .route(
            "/renew",
            post(|State(s): State<Shared>, body: Bytes| async move {
                json_reply(
                    with_session(s, move |s| {
                        let b: RenewBody =
                            serde_json::from_slice(&body).map_err(|e| CliError::usage(format!("renew: {e}")))?;
                        let (client, conn) = s.parts();
                        let n = client.renew(&conn, &b.selector, b.blocks, b.fee)?;
                        s.save()?;
                        Ok(json!({ "renewed": n }))
                    })
                    .await,
                )
            }),
        )
        .route(
            "/revoke",
            post(|State(s): State<Shared>, Query(q): Params| async move {
                json_reply(
                    with_session(s, move |s| {
                        let selector = param(&q, "selector")?;
                        let (client, conn) = s.parts();
                        let done = client.revoke(&conn, &selector)?;
                        s.save()?;
                        Ok(to_value(done))
                    })
                    .await,
                )
            }),
        )
        .route(
            "/policies",
            get(|State(s): State<Shared>| async move {
                json_reply(
                    with_session(s, |s| {
                        let (client, conn) = s.parts();
                        let rows = client.list_policies(&conn)?;
                        s.save()?;
                        Ok(to_value(rows))
                    })
                    .await,
                )
            }),
        )
        .with_state(shared)
}

/// Refuses anything but a loopback address.
pub fn check_loopback(listen: &str) -> Result<(), CliError> {
    let addr: std::net::SocketAddr =
        listen.parse().map_err(|_| CliError::usage(format!("bad listen address {listen:?}")))?;
    if !addr.ip().is_loopback() {
        return Err(CliError::usage(format!("the daemon only listens on loopback, not {}", addr.ip())));
    }
    Ok(())
}

pub fn serve(session: Session, listen: &str) -> Result<(), CliError> {
    check_loopback(listen)?;
    let server = Server::start(router(session), listen)
        .map_err(|e| CliError { code: 4, message: format!("listen on {listen}: {e}") })?;
    eprintln!("daemon listening at {}", server.url());
    server.wait().map_err(|e| CliError { code: 4, message: e.to_string() })
}
