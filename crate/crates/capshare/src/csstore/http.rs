//! HTTP facade over [`Store`]. Bodies are the same TOML containers used on
//! disk; errors come back as plain text, first line a stable machine code,
//! second line a human message.
//!
//! Routes:
//!
//! | method | path                     | body in            | 200/201 body out |
//! |--------|--------------------------|--------------------|------------------|
//! | PUT    | /capsules                | capsule            | empty (201)      |
//! | POST   | /capsules/{dci}/tokens   | token-pair         | empty            |
//! | POST   | /capsules/{dci}/download | download-parameter | capsule snapshot |
//! | GET    | /admin/capsules/{dci}    | none               | capsule          |
//! | POST   | /admin/sweep             | none               | count expired    |
//! | POST   | /admin/clock             | decimal seconds    | empty            |
//!
//! `{dci}` is the capsule id as unpadded URL-safe base64. Capsule bytes
//! normally leave only through the token gate; the `/admin` routes are for
//! the operator (inspection, expiry, test clock) and a deployment would bind
//! them separately. The clock route additionally requires the server to be
//! started with `allow_clock` and the store to run on a manual clock.

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use std::net::SocketAddr;
use std::sync::Arc;

use super::{Store, StoreError};
use crate::envelope;
use crate::scheme::CapsuleId;

pub fn encode_dci(id: &CapsuleId) -> String {
    URL_SAFE_NO_PAD.encode(id.to_bytes())
}

pub fn decode_dci(text: &str) -> Option<CapsuleId> {
    let bytes = URL_SAFE_NO_PAD.decode(text).ok()?;
    CapsuleId::from_bytes(&bytes).ok()
}

fn status_for(e: &StoreError) -> StatusCode {
    match e {
        StoreError::UnknownCapsule => StatusCode::NOT_FOUND,
        StoreError::DuplicateCapsule => StatusCode::CONFLICT,
        StoreError::IntegrityFailure => StatusCode::UNPROCESSABLE_ENTITY,
        StoreError::TokenMismatch => StatusCode::FORBIDDEN,
        StoreError::TokenConsumed | StoreError::TokenExpired | StoreError::TokenExpiredOnArrival => {
            StatusCode::GONE
        }
        StoreError::Log(_) | StoreError::Transport(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn fail(e: StoreError) -> Response {
    (status_for(&e), format!("{}\n{e}", e.code())).into_response()
}

fn reject(status: StatusCode, code: &str, msg: impl std::fmt::Display) -> Response {
    (status, format!("{code}\n{msg}")).into_response()
}

fn bad_envelope(msg: impl std::fmt::Display) -> Response {
    reject(StatusCode::UNPROCESSABLE_ENTITY, "bad-envelope", msg)
}

struct AppState {
    store: Arc<Store>,
    allow_clock: bool,
}

async fn put_capsule(State(st): State<Arc<AppState>>, body: String) -> Response {
    let (id, dc) = match envelope::read_capsule(&body) {
        Ok(v) => v,
        Err(e) => return bad_envelope(e),
    };
    match st.store.store_capsule(&id, &dc) {
        Ok(()) => StatusCode::CREATED.into_response(),
        Err(e) => fail(e),
    }
}

async fn get_capsule(State(st): State<Arc<AppState>>, UrlPath(dci): UrlPath<String>) -> Response {
    let Some(id) = decode_dci(&dci) else {
        return bad_envelope("capsule id is not a valid group element");
    };
    match st.store.get_capsule(&id) {
        Some((id, dc)) => envelope::write_capsule(&id, &dc).into_response(),
        None => fail(StoreError::UnknownCapsule),
    }
}

async fn post_tokens(
    State(st): State<Arc<AppState>>,
    UrlPath(dci): UrlPath<String>,
    body: String,
) -> Response {
    let Some(id) = decode_dci(&dci) else {
        return bad_envelope("capsule id is not a valid group element");
    };
    let (revocation, token) = match envelope::read_token_pair(&body) {
        Ok(v) => v,
        Err(e) => return bad_envelope(e),
    };
    match st.store.register_tokens(&id, &revocation, &token) {
        Ok(()) => StatusCode::OK.into_response(),
        Err(e) => fail(e),
    }
}

async fn post_download(
    State(st): State<Arc<AppState>>,
    UrlPath(dci): UrlPath<String>,
    body: String,
) -> Response {
    let Some(id) = decode_dci(&dci) else {
        return bad_envelope("capsule id is not a valid group element");
    };
    let param = match envelope::read_download_parameter(&body) {
        Ok(v) => v,
        Err(e) => return bad_envelope(e),
    };
    match st.store.handle_download(&id, &param) {
        Ok((sid, sdc)) => envelope::write_capsule(&sid, &sdc).into_response(),
        Err(e) => fail(e),
    }
}

async fn post_sweep(State(st): State<Arc<AppState>>) -> Response {
    let now = st.store.clock().now();
    match st.store.expire_sweep(now) {
        Ok(n) => n.to_string().into_response(),
        Err(e) => fail(e),
    }
}

async fn post_clock(State(st): State<Arc<AppState>>, body: String) -> Response {
    if !st.allow_clock {
        return reject(
            StatusCode::FORBIDDEN,
            "clock-disabled",
            "this server does not accept clock writes",
        );
    }
    let Ok(now) = body.trim().parse::<u64>() else {
        return bad_envelope("clock body must be decimal seconds");
    };
    if st.store.clock().set(now) {
        StatusCode::OK.into_response()
    } else {
        reject(
            StatusCode::FORBIDDEN,
            "clock-disabled",
            "store runs on the system clock",
        )
    }
}

pub fn router(store: Arc<Store>, allow_clock: bool) -> Router {
    let state = Arc::new(AppState { store, allow_clock });
    Router::new()
        .route("/capsules", put(put_capsule))
        .route("/capsules/:dci/tokens", post(post_tokens))
        .route("/capsules/:dci/download", post(post_download))
        .route("/admin/capsules/:dci", get(get_capsule))
        .route("/admin/sweep", post(post_sweep))
        .route("/admin/clock", post(post_clock))
        .with_state(state)
}

/// A running store server. Shuts down on drop or [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.halt();
    }
}

/// Binds `bind` (port 0 for ephemeral) and serves the store on a background
/// thread. Returns once the listener is live, so `addr()` is immediately
/// usable.
pub fn serve(store: Arc<Store>, bind: SocketAddr, allow_clock: bool) -> Result<ServerHandle, StoreError> {
    let transport = |e: String| StoreError::Transport(e);
    let (addr_tx, addr_rx) = std::sync::mpsc::channel::<Result<SocketAddr, String>>();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();

    let thread = std::thread::Builder::new()
        .name("capshare-store-http".into())
        .spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .expect("tokio runtime");
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::bind(bind).await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = addr_tx.send(Err(e.to_string()));
                        return;
                    }
                };
                let addr = listener.local_addr().expect("bound socket has an address");
                let app = router(store, allow_clock);
                let _ = addr_tx.send(Ok(addr));
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .ok();
            });
        })
        .map_err(|e| transport(e.to_string()))?;

    let addr = addr_rx
        .recv()
        .map_err(|_| transport("server thread exited before binding".into()))?
        .map_err(transport)?;
    Ok(ServerHandle {
        addr,
        stop: Some(stop_tx),
        thread: Some(thread),
    })
}
