//! REST and SSE endpoints.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use lens_core::event::{haversine_m, CrimeEvent, FieldError, Gps};
use lens_core::videoio::{decode_clip, ActionLabel};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;
use uuid::Uuid;

use crate::config::{Role, TokenEntry};
use crate::store::{Alert, Broadcast, BroadcastNotice, CrimeNotice, Ingest, Store};

#[derive(Clone)]
pub struct AppState {
    pub store: Store,
    pub clock_skew_ms: u64,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            error: error.into(),
            field: None,
        }
    }

    fn bad(error: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error)
    }

    fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "missing or unknown bearer token")
    }

    fn forbidden() -> Self {
        Self::new(StatusCode::FORBIDDEN, "not permitted for this role")
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<FieldError> for ApiError {
    fn from(e: FieldError) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            error: e.message,
            field: Some(e.field),
        }
    }
}

impl From<crate::RelayError> for ApiError {
    fn from(e: crate::RelayError) -> Self {
        Self::internal(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.error });
        if let Some(f) = self.field {
            body["field"] = Value::String(f);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn principal(state: &AppState, token: Option<&str>) -> ApiResult<TokenEntry> {
    token
        .and_then(|t| state.store.user(t))
        .ok_or_else(ApiError::unauthorized)
}

fn require(state: &AppState, headers: &HeaderMap, roles: &[Role]) -> ApiResult<TokenEntry> {
    let p = principal(state, bearer(headers))?;
    if roles.contains(&p.role) {
        Ok(p)
    } else {
        Err(ApiError::forbidden())
    }
}

fn parse_json(body: &Bytes) -> ApiResult<Value> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad(format!("invalid JSON: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/clips", post(upload_clip))
        .route("/v1/events", post(ingest_event))
        .route("/v1/crimes", get(query_crimes))
        .route("/v1/crimes/{id}/clip", get(fetch_clip))
        .route(
            "/v1/config/threshold",
            get(get_threshold).put(set_threshold),
        )
        .route("/v1/broadcasts", post(broadcast))
        .route("/v1/alerts", get(alerts))
        .route("/v1/users", post(register))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(state)
}

async fn upload_clip(
    State(s): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    require(&s, &headers, &[Role::Edge])?;
    decode_clip(&body).map_err(|e| ApiError::bad(format!("not a valid clip: {e}")))?;
    let store = s.store.clone();
    let (clip_ref, new) = tokio::task::spawn_blocking(move || store.put_clip(&body))
        .await
        .map_err(ApiError::internal)??;
    let status = if new {
        StatusCode::CREATED
    } else {
        StatusCode::OK
    };
    Ok((status, Json(json!({ "clip_ref": clip_ref }))).into_response())
}

async fn ingest_event(
    State(s): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    require(&s, &headers, &[Role::Edge])?;
    let event = CrimeEvent::from_json(&parse_json(&body)?)?;
    let now = now_ms();
    if event.timestamp_ms > now + s.clock_skew_ms {
        return Err(FieldError::new("timestamp_ms", "timestamp is in the future").into());
    }
    let (status, entry) = match s.store.ingest(event, now).await? {
        Ingest::Created(e) => (StatusCode::CREATED, e),
        Ingest::Duplicate(e) => (StatusCode::OK, e),
    };
    let body = json!({
        "event_id": entry.event.event_id,
        "suppressed": entry.suppressed,
        "duplicate": status == StatusCode::OK,
    });
    Ok((status, Json(body)).into_response())
}

#[derive(Debug, Deserialize)]
struct CrimeFilter {
    since_ms: Option<String>,
    label: Option<String>,
    camera_id: Option<String>,
    limit: Option<String>,
    offset: Option<String>,
}

fn parse_num<T: std::str::FromStr>(v: &Option<String>, field: &str) -> ApiResult<Option<T>> {
    v.as_deref()
        .map(|x| {
            x.parse::<T>()
                .map_err(|_| FieldError::new(field, "expected a non-negative integer").into())
        })
        .transpose()
}

async fn query_crimes(
    State(s): State<AppState>,
    headers: HeaderMap,
    Query(f): Query<CrimeFilter>,
) -> ApiResult<Response> {
    let user = require(&s, &headers, &[Role::Authority, Role::Civilian])?;
    let since: u64 = parse_num(&f.since_ms, "since_ms")?.unwrap_or(0);
    let limit: usize = parse_num(&f.limit, "limit")?.unwrap_or(100).min(1000);
    let offset: usize = parse_num(&f.offset, "offset")?.unwrap_or(0);
    let label = f
        .label
        .as_deref()
        .map(|l| {
            ActionLabel::from_name(l)
                .ok_or_else(|| ApiError::from(FieldError::new("label", "unknown action label")))
        })
        .transpose()?;
    let authority = user.role == Role::Authority;
    let idx = s.store.index.read();
    let mut rows: Vec<_> = idx
        .events
        .iter()
        .filter(|e| authority || !e.suppressed)
        .filter(|e| e.event.timestamp_ms >= since)
        .filter(|e| label.is_none_or(|l| e.event.label == l))
        .filter(|e| {
            f.camera_id
                .as_deref()
                .is_none_or(|c| e.event.camera_id == c)
        })
        .collect();
    rows.sort_by(|a, b| {
        b.event
            .timestamp_ms
            .cmp(&a.event.timestamp_ms)
            .then(b.seq.cmp(&a.seq))
    });
    let page = rows.into_iter().skip(offset).take(limit);
    let body = if authority {
        serde_json::to_value(page.cloned().collect::<Vec<_>>())
    } else {
        serde_json::to_value(page.map(CrimeNotice::from).collect::<Vec<_>>())
    }
    .map_err(ApiError::internal)?;
    Ok(Json(body).into_response())
}

async fn fetch_clip(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    require(&s, &headers, &[Role::Authority])?;
    let id = Uuid::parse_str(&id).map_err(|_| ApiError::not_found("event"))?;
    let clip_ref = s
        .store
        .index
        .read()
        .event(&id)
        .ok_or_else(|| ApiError::not_found("event"))?
        .event
        .clip_ref
        .clone()
        .ok_or_else(|| ApiError::not_found("clip"))?;
    let bytes = s
        .store
        .get_clip(&clip_ref)?
        .ok_or_else(|| ApiError::not_found("clip"))?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

async fn get_threshold(State(s): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    principal(&s, bearer(&headers))?;
    let value = s.store.index.read().threshold;
    Ok(Json(json!({ "value": value })).into_response())
}

async fn set_threshold(
    State(s): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let user = require(&s, &headers, &[Role::Authority])?;
    let v = parse_json(&body)?;
    let value = v
        .get("value")
        .and_then(Value::as_f64)
        .ok_or_else(|| ApiError::from(FieldError::new("value", "expected a number")))?;
    if !(0.0..=1.0).contains(&value) {
        return Err(FieldError::new("value", "threshold must lie in [0, 1]").into());
    }
    let value = s.store.set_threshold(value, user.user_id, now_ms()).await?;
    Ok(Json(json!({ "value": value })).into_response())
}

async fn broadcast(
    State(s): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let user = require(&s, &headers, &[Role::Authority])?;
    let v = parse_json(&body)?;
    let message = v
        .get("message")
        .and_then(Value::as_str)
        .filter(|m| !m.trim().is_empty())
        .ok_or_else(|| ApiError::from(FieldError::new("message", "expected a non-empty string")))?
        .to_string();
    let num = |path: &str, x: Option<&Value>| {
        x.and_then(Value::as_f64)
            .filter(|f| f.is_finite())
            .ok_or_else(|| ApiError::from(FieldError::new(path, "expected a finite number")))
    };
    let center = Gps {
        lat: num("center.lat", v.get("center").and_then(|c| c.get("lat")))?,
        lon: num("center.lon", v.get("center").and_then(|c| c.get("lon")))?,
    };
    center.validate("center")?;
    let radius_m = num("radius_m", v.get("radius_m"))?;
    if radius_m <= 0.0 {
        return Err(FieldError::new("radius_m", "radius must be positive").into());
    }
    let mut recipients: Vec<String> = s
        .store
        .civilians()
        .into_iter()
        .filter(|c| {
            c.location
                .is_some_and(|l| haversine_m(l, center) <= radius_m)
        })
        .map(|c| c.user_id)
        .collect();
    recipients.sort();
    recipients.dedup();
    let b = Broadcast {
        broadcast_id: Uuid::new_v4(),
        message,
        center,
        radius_m,
        created_by: user.user_id,
        created_at_ms: now_ms(),
        recipients,
    };
    let b = s.store.add_broadcast(b).await?;
    Ok((StatusCode::CREATED, Json(b)).into_response())
}

async fn register(
    State(s): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let v = parse_json(&body)?;
    let role = match v.get("role").and_then(Value::as_str) {
        Some("civilian") => Role::Civilian,
        Some("authority") => Role::Authority,
        _ => return Err(FieldError::new("role", "expected \"civilian\" or \"authority\"").into()),
    };
    if role == Role::Authority {
        require(&s, &headers, &[Role::Authority])?;
    }
    let location = match v.get("location") {
        None | Some(Value::Null) => None,
        Some(l) => {
            let g: Gps = serde_json::from_value(l.clone())
                .map_err(|_| ApiError::from(FieldError::new("location", "expected {lat, lon}")))?;
            g.validate("location")?;
            Some(g)
        }
    };
    let account = TokenEntry {
        token: Uuid::new_v4().simple().to_string(),
        user_id: format!("u-{}", Uuid::new_v4().simple()),
        role,
        location,
    };
    let account = s.store.add_user(account).await?;
    Ok((StatusCode::CREATED, Json(account)).into_response())
}

#[derive(Debug, Deserialize)]
struct AlertQuery {
    token: Option<String>,
    last_event_id: Option<u64>,
}

/// The SSE payload of `alert` for `user`, or `None` if they may not see it.
pub fn render_alert(alert: &Alert, user: &TokenEntry) -> Option<(&'static str, Value)> {
    let authority = user.role == Role::Authority;
    match alert {
        Alert::Crime(e) if authority => Some(("crime", serde_json::to_value(e).ok()?)),
        Alert::Crime(e) if user.role == Role::Civilian => Some((
            "crime_notice",
            serde_json::to_value(CrimeNotice::from(e)).ok()?,
        )),
        Alert::Broadcast { broadcast, .. } if authority => {
            Some(("broadcast", serde_json::to_value(broadcast).ok()?))
        }
        Alert::Broadcast { broadcast, .. } if broadcast.recipients.contains(&user.user_id) => {
            Some((
                "broadcast",
                serde_json::to_value(BroadcastNotice::from(broadcast)).ok()?,
            ))
        }
        Alert::Threshold { value, .. } if authority => {
            Some(("config", json!({ "threshold": value })))
        }
        _ => None,
    }
}

async fn alerts(
    State(s): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<AlertQuery>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let token = bearer(&headers).map(str::to_string).or(q.token);
    let user = principal(&s, token.as_deref())?;
    if user.role == Role::Edge {
        return Err(ApiError::forbidden());
    }
    let last = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .or(q.last_event_id)
        .unwrap_or(0);
    // subscribe before reading history so nothing falls in between
    let rx = s.store.live.subscribe();
    let backlog = s.store.index.read().alerts_after(last);
    let sent = backlog.last().map_or(last, |a| a.id());
    let user = Arc::new(user);
    let u = user.clone();
    let history = stream::iter(backlog).filter_map(move |a| {
        let out = render(&a, &u);
        async move { out }
    });
    let store = s.store.clone();
    let live = stream::unfold(
        (rx, sent, store, user),
        |(mut rx, mut sent, store, user)| async move {
            loop {
                let batch = match rx.recv().await {
                    Ok(a) => vec![a],
                    Err(RecvError::Lagged(_)) => store.index.read().alerts_after(sent),
                    Err(RecvError::Closed) => return None,
                };
                let mut out = Vec::new();
                for a in batch {
                    if a.id() > sent {
                        sent = a.id();
                        if let Some(ev) = render(&a, &user) {
                            out.push(ev);
                        }
                    }
                }
                if !out.is_empty() {
                    return Some((stream::iter(out), (rx, sent, store, user)));
                }
            }
        },
    )
    .flatten();
    Ok(Sse::new(history.chain(live)).keep_alive(KeepAlive::default()))
}

fn render(a: &Alert, user: &TokenEntry) -> Option<Result<Event, Infallible>> {
    let (name, data) = render_alert(a, user)?;
    Some(Ok(Event::default()
        .id(a.id().to_string())
        .event(name)
        .data(data.to_string())))
}
