//! HTTP control API.
//!
//! Requests may arrive concurrently, but the simulator is owned by a single
//! task. Every mutation goes through that task's command queue and is applied
//! between ticks; reads get snapshots. Each accepted mutation is logged with
//! the logical time it was applied at, so the session can be replayed as a
//! scenario through `firesim run`.

use std::convert::Infallible;
use std::path::PathBuf;
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{broadcast, mpsc, oneshot};

use firesim_core::firmware::{PasswordLatch, RangeButton, SensorId};
use firesim_core::{
    Scenario, ScenarioEvent, ScenarioOp, SimConfig, Simulator, Snapshot, TraceEvent,
};

enum Command {
    Apply(ScenarioOp, oneshot::Sender<Result<u64, String>>),
    Step(u64, oneshot::Sender<Result<u64, String>>),
    Pace(u64),
    State(oneshot::Sender<Snapshot>),
    Events(u64, oneshot::Sender<Vec<TraceEvent>>),
    Log(oneshot::Sender<Scenario>),
}

/// Cloneable handle to the task that owns the simulator.
#[derive(Clone)]
pub struct SimHandle {
    tx: mpsc::Sender<Command>,
    events: broadcast::Sender<TraceEvent>,
}

struct Owner {
    sim: Simulator,
    config: SimConfig,
    log: Vec<ScenarioEvent>,
    published: usize,
    events: broadcast::Sender<TraceEvent>,
}

impl Owner {
    fn publish(&mut self) {
        for e in self.sim.trace().since(self.published as u64) {
            // No subscribers is fine.
            let _ = self.events.send(e.clone());
        }
        self.published = self.sim.trace().len();
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Apply(op, reply) => {
                let t = self.sim.now();
                let result = self.sim.apply(&op).map_err(|e| e.to_string());
                if result.is_ok() {
                    self.log.push(ScenarioEvent { t, op });
                }
                let _ = reply.send(result.map(|()| t));
            }
            Command::Step(n, reply) => {
                let _ = reply.send(self.sim.step(n).map_err(|e| e.to_string()));
            }
            Command::Pace(n) => {
                if let Err(e) = self.sim.step(n) {
                    eprintln!("pacer stopped stepping: {e}");
                }
            }
            Command::State(reply) => {
                let _ = reply.send(self.sim.snapshot());
            }
            Command::Events(since, reply) => {
                let _ = reply.send(self.sim.trace().since(since).to_vec());
            }
            Command::Log(reply) => {
                let _ = reply.send(Scenario {
                    name: "api-session".to_string(),
                    duration_ms: Some(self.sim.now()),
                    config: Some(self.config.clone()),
                    events: self.log.clone(),
                });
            }
        }
        self.publish();
    }
}

impl SimHandle {
    /// Starts the owner task. With `pace`, logical time also advances on its
    /// own at that many ticks per wall-clock second.
    pub fn spawn(config: SimConfig, pace: Option<f64>) -> anyhow::Result<SimHandle> {
        let sim = Simulator::new(&config)?;
        let (tx, mut rx) = mpsc::channel::<Command>(256);
        let (events, _) = broadcast::channel(4096);
        let mut owner = Owner {
            sim,
            config,
            log: Vec::new(),
            published: 0,
            events: events.clone(),
        };
        tokio::spawn(async move {
            while let Some(cmd) = rx.recv().await {
                owner.handle(cmd);
            }
        });
        if let Some(rate) = pace.filter(|r| *r > 0.0) {
            let tx = tx.clone();
            tokio::spawn(async move {
                let period = Duration::from_millis(10);
                let mut interval = tokio::time::interval(period);
                let mut owed = 0.0f64;
                loop {
                    interval.tick().await;
                    owed += rate * period.as_secs_f64();
                    let whole = owed.floor();
                    owed -= whole;
                    if whole >= 1.0 && tx.send(Command::Pace(whole as u64)).await.is_err() {
                        break;
                    }
                }
            });
        }
        Ok(SimHandle { tx, events })
    }

    async fn request<T>(
        &self,
        make: impl FnOnce(oneshot::Sender<T>) -> Command,
    ) -> Result<T, ApiError> {
        let (reply, rx) = oneshot::channel();
        self.tx
            .send(make(reply))
            .await
            .map_err(|_| ApiError::gone())?;
        rx.await.map_err(|_| ApiError::gone())
    }

    pub async fn apply(&self, op: ScenarioOp) -> Result<u64, ApiError> {
        self.request(|r| Command::Apply(op, r))
            .await?
            .map_err(ApiError::bad_request)
    }

    pub async fn step(&self, ticks: u64) -> Result<u64, ApiError> {
        self.request(|r| Command::Step(ticks, r))
            .await?
            .map_err(ApiError::bad_request)
    }

    pub async fn snapshot(&self) -> Result<Snapshot, ApiError> {
        self.request(Command::State).await
    }

    pub async fn events_since(&self, since: u64) -> Result<Vec<TraceEvent>, ApiError> {
        self.request(|r| Command::Events(since, r)).await
    }

    pub async fn log(&self) -> Result<Scenario, ApiError> {
        self.request(Command::Log).await
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn gone() -> Self {
        Self {
            status: StatusCode::SERVICE_UNAVAILABLE,
            message: "simulator task has stopped".into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.message}))).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct EnvRequest {
    pub sensor: SensorId,
    pub value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ButtonKind {
    PwMode,
    Commit,
    Threshold,
}

#[derive(Debug, Deserialize)]
pub struct ButtonRequest {
    pub kind: ButtonKind,
    pub latch: PasswordLatch,
    pub select: Option<u8>,
    pub range: Option<RangeButton>,
}

#[derive(Debug, Deserialize)]
pub struct SmsRequest {
    pub from: String,
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct StepRequest {
    pub ticks: u64,
}

#[derive(Debug, Deserialize)]
pub struct SinceQuery {
    #[serde(default)]
    pub since: u64,
}

fn env_op(req: EnvRequest) -> ScenarioOp {
    match req.sensor {
        SensorId::Temp1 => ScenarioOp::SetTemp {
            sensor: 1,
            celsius: req.value,
        },
        SensorId::Temp2 => ScenarioOp::SetTemp {
            sensor: 2,
            celsius: req.value,
        },
        SensorId::Smoke1 => ScenarioOp::SetSmoke {
            sensor: 1,
            density: req.value,
        },
        SensorId::Smoke2 => ScenarioOp::SetSmoke {
            sensor: 2,
            density: req.value,
        },
    }
}

fn button_op(req: ButtonRequest) -> Result<ScenarioOp, ApiError> {
    Ok(match req.kind {
        ButtonKind::PwMode => ScenarioOp::PressPwMode { latch: req.latch },
        ButtonKind::Commit => ScenarioOp::CommitPassword { latch: req.latch },
        ButtonKind::Threshold => ScenarioOp::SetThresholdLocal {
            latch: req.latch,
            select: req
                .select
                .ok_or_else(|| ApiError::bad_request("threshold button needs `select`"))?,
            range: req
                .range
                .ok_or_else(|| ApiError::bad_request("threshold button needs `range`"))?,
        },
    })
}

async fn post_env(
    State(h): State<SimHandle>,
    Json(req): Json<EnvRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let t = h.apply(env_op(req)).await?;
    Ok(Json(json!({"t": t})))
}

async fn post_button(
    State(h): State<SimHandle>,
    Json(req): Json<ButtonRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let t = h.apply(button_op(req)?).await?;
    Ok(Json(json!({"t": t})))
}

async fn post_sms(
    State(h): State<SimHandle>,
    Json(req): Json<SmsRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let t = h
        .apply(ScenarioOp::SendSms {
            from: req.from,
            text: req.text,
        })
        .await?;
    Ok(Json(json!({"t": t})))
}

async fn post_step(
    State(h): State<SimHandle>,
    Json(req): Json<StepRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let now = h.step(req.ticks).await?;
    Ok(Json(json!({"now": now})))
}

async fn get_state(State(h): State<SimHandle>) -> Result<Json<Snapshot>, ApiError> {
    Ok(Json(h.snapshot().await?))
}

async fn get_events(
    State(h): State<SimHandle>,
    Query(q): Query<SinceQuery>,
) -> Result<Json<Vec<TraceEvent>>, ApiError> {
    Ok(Json(h.events_since(q.since).await?))
}

async fn get_log(State(h): State<SimHandle>) -> Result<Json<Scenario>, ApiError> {
    Ok(Json(h.log().await?))
}

async fn stream(State(h): State<SimHandle>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = h.events.subscribe();
    let events = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(e) => {
                    let event = Event::default()
                        .id(e.seq.to_string())
                        .event(e.kind.clone())
                        .data(e.to_canonical());
                    return Some((Ok(event), rx));
                }
                // Slow client: it detects the seq gap and refetches via /api/events.
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

pub fn router(handle: SimHandle, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/env", post(post_env))
        .route("/api/button", post(post_button))
        .route("/api/sms", post(post_sms))
        .route("/api/step", post(post_step))
        .route("/api/state", get(get_state))
        .route("/api/events", get(get_events))
        .route("/api/log", get(get_log))
        .route("/api/stream", get(stream))
        .with_state(handle);
    match assets {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}
