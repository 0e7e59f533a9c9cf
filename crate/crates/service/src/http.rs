use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use labelfix::ALState;
use serde::Deserialize;
use tokio::sync::{oneshot, watch};

use crate::error::ServiceError;
use crate::session::{retrain, AdvanceStart, Session, Status};

struct Shared {
    session: Mutex<Session>,
    done: watch::Sender<bool>,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Session> {
        // A panic while holding the lock cannot leave the session half
        // mutated in a way later requests care about more than losing it.
        self.session.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// A session ready to be served.
#[derive(Clone)]
pub struct Service {
    shared: Arc<Shared>,
}

impl Service {
    /// Wraps the session and, if no iteration is open yet, runs the first
    /// retrain so the queue is populated before any request arrives.
    pub fn new(mut session: Session) -> Result<Self, ServiceError> {
        if session.status() == Status::Idle {
            session.advance_blocking(false)?;
        }
        let done = session.status() == Status::Done;
        let (tx, _) = watch::channel(done);
        Ok(Self { shared: Arc::new(Shared { session: Mutex::new(session), done: tx }) })
    }

    pub fn status(&self) -> Status {
        self.shared.lock().status()
    }

    /// Copy of the current loop state.
    pub fn state(&self) -> ALState {
        self.shared.lock().state().clone()
    }

    pub fn router(&self) -> Router {
        router(self.clone())
    }
}

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/session", get(session_info))
        .route("/queue/next", get(queue_next))
        .route("/annotations", post(annotations))
        .route("/iterations/advance", post(advance))
        .route("/progress", get(progress))
        .fallback(|| async { ServiceError::NotFound("no such endpoint".into()) })
        .with_state(service.shared)
}

async fn session_info(State(s): State<Arc<Shared>>) -> Response {
    Json(s.lock().info()).into_response()
}

#[derive(Deserialize)]
struct NextQuery {
    annotator_id: String,
}

async fn queue_next(State(s): State<Arc<Shared>>, q: Result<Query<NextQuery>, QueryRejection>) -> Response {
    let Ok(Query(q)) = q else {
        return ServiceError::BadRequest("annotator_id is required".into()).into_response();
    };
    match s.lock().next_item(&q.annotator_id, Instant::now()) {
        Ok(Some(item)) => Json(item).into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Submission {
    lease_token: String,
    labels: Vec<usize>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("malformed body: {e}")))
}

async fn annotations(State(s): State<Arc<Shared>>, body: Bytes) -> Response {
    let sub: Submission = match parse_json(&body) {
        Ok(v) => v,
        Err(e) => return e.into_response(),
    };
    match s.lock().submit(&sub.lease_token, &sub.labels, Instant::now()) {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AdvanceRequest {
    #[serde(default)]
    force: bool,
}

async fn advance(State(s): State<Arc<Shared>>, body: Bytes) -> Response {
    let req: AdvanceRequest = if body.iter().all(u8::is_ascii_whitespace) {
        AdvanceRequest::default()
    } else {
        match parse_json(&body) {
            Ok(v) => v,
            Err(e) => return e.into_response(),
        }
    };
    let start = s.lock().begin_advance(req.force);
    let outcome = match start {
        Err(e) => return e.into_response(),
        Ok(AdvanceStart::Finished(o)) => Ok(o),
        Ok(AdvanceStart::Retrain { work, closed }) => {
            let result = tokio::task::spawn_blocking(move || retrain(*work))
                .await
                .unwrap_or_else(|e| Err(format!("retrain task failed: {e}")));
            s.lock().finish_advance(result, closed)
        }
    };
    match outcome {
        Ok(o) => {
            if o.status == Status::Done {
                s.done.send_replace(true);
            }
            Json(o).into_response()
        }
        Err(e) => e.into_response(),
    }
}

async fn progress(State(s): State<Arc<Shared>>) -> Response {
    Json(s.lock().progress(Instant::now())).into_response()
}

/// A service running on its own thread and runtime.
pub struct RunningService {
    addr: SocketAddr,
    service: Service,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl RunningService {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn start(service: Service, addr: &str) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let local = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = service.router();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        Ok(Self { addr: local, service, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn service(&self) -> &Service {
        &self.service
    }

    /// Blocks until the session finishes or `timeout` passes. Returns
    /// whether the session finished.
    pub fn wait_until_done(&self, timeout: Option<Duration>) -> bool {
        let mut rx = self.service.shared.done.subscribe();
        let deadline = timeout.map(|t| Instant::now() + t);
        loop {
            if *rx.borrow_and_update() {
                return true;
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return false;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
    }

    /// Stops serving and returns the final loop state.
    pub fn stop(mut self) -> std::io::Result<ALState> {
        self.shutdown_inner()?;
        Ok(self.service.state())
    }

    fn shutdown_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            return t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked")));
        }
        Ok(())
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}
