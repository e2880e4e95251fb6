//! Read-only consultation service over a fitted [`RegimeArtifact`].
//!
//! Every answer is a table lookup; nothing is estimated at request time.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::artifact::{RegimeArtifact, ValueEstimate};
use crate::data::Schema;
use crate::regime::RegimeKind;

#[derive(Debug, Error, PartialEq)]
pub enum ServeError {
    #[error("{message}")]
    BadRequest { field: Option<String>, message: String },
    #[error("{0}")]
    NotFound(String),
}

impl ServeError {
    fn bad(field: impl Into<String>, message: impl Into<String>) -> Self {
        ServeError::BadRequest { field: Some(field.into()), message: message.into() }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServeError::BadRequest { .. } => StatusCode::BAD_REQUEST,
            ServeError::NotFound(_) => StatusCode::NOT_FOUND,
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl IntoResponse for ServeError {
    fn into_response(self) -> Response {
        let field = match &self {
            ServeError::BadRequest { field, .. } => field.as_deref(),
            ServeError::NotFound(_) => None,
        };
        let body = ErrorBody { error: self.to_string(), field };
        (self.status(), Json(serde_json::to_value(body).expect("error body serializes"))).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    /// Covariate name to level. Numbers are accepted and read as their
    /// decimal text. A key `z` is the instrument when no covariate is named `z`.
    #[serde(default)]
    pub covariates: BTreeMap<String, Value>,
    #[serde(default)]
    pub intent: Option<u8>,
    #[serde(default)]
    pub instrument: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub context: BTreeMap<String, String>,
    pub g_opt: u8,
    /// Superoptimal assignment for each possible intent, keyed "0" and "1".
    pub g_sup_by_intent: BTreeMap<String, u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_zsup_by_intent: Option<BTreeMap<String, u8>>,
    pub gamma: u8,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<u8>,
    /// The superoptimal assignment for the disclosed intent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommended: Option<u8>,
    pub value_estimates: Vec<ValueEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub schema_version: u32,
    pub schema: Schema,
    pub regime_kinds: Vec<RegimeKind>,
    pub value_estimates: Vec<ValueEstimate>,
    pub data_fingerprint: String,
}

pub fn meta(artifact: &RegimeArtifact) -> MetaResponse {
    MetaResponse {
        schema_version: artifact.schema_version,
        schema: artifact.schema.clone(),
        regime_kinds: vec![RegimeKind::Observed, RegimeKind::OptimalL, RegimeKind::SuperoptimalLA, RegimeKind::SuperoptimalLAZ],
        value_estimates: artifact.values.clone(),
        data_fingerprint: artifact.data_fingerprint.clone(),
    }
}

fn level_text(name: &str, v: &Value) -> Result<String, ServeError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(match n.as_i64() {
            Some(i) => i.to_string(),
            None => n.to_string(),
        }),
        _ => Err(ServeError::bad(name, format!("covariate `{name}` must be a string or number"))),
    }
}

fn binary(name: &str, v: Option<u8>) -> Result<Option<u8>, ServeError> {
    match v {
        Some(x) if x > 1 => Err(ServeError::bad(name, format!("{name} must be 0 or 1"))),
        other => Ok(other),
    }
}

/// Answers one consultation.
pub fn recommend(artifact: &RegimeArtifact, req: &RecommendRequest) -> Result<RecommendResponse, ServeError> {
    let schema = &artifact.schema;
    let intent = binary("intent", req.intent)?;
    let mut instrument = binary("instrument", req.instrument)?;
    let known: Vec<&str> = schema.categorical().map(|(n, _)| n).collect();
    let mut names = BTreeMap::new();
    for (name, v) in &req.covariates {
        let text = level_text(name, v)?;
        if known.contains(&name.as_str()) {
            names.insert(name.clone(), text);
        } else if name == "z" && schema.instrument {
            let z = match text.as_str() {
                "0" => 0,
                "1" => 1,
                _ => return Err(ServeError::bad("z", "z must be 0 or 1")),
            };
            if instrument.is_some_and(|i| i != z) {
                return Err(ServeError::bad("z", "covariate z disagrees with instrument"));
            }
            instrument = Some(z);
        } else {
            return Err(ServeError::bad(name.clone(), format!("unknown covariate `{name}`")));
        }
    }
    if instrument.is_some() && !schema.instrument {
        return Err(ServeError::bad("instrument", "artifact was fit without an instrument"));
    }
    let ctx = schema.context_from_names(&names).map_err(|e| ServeError::bad(e.column.clone(), format!("{}: {}", e.column, e.message)))?;
    let l = artifact.optimal.space().index(&ctx);
    if artifact.context_support.get(l).copied().unwrap_or(0) == 0 {
        return Err(ServeError::NotFound(format!("context {ctx} has no training support")));
    }
    let lookup = |r: &crate::regime::Regime, i: u8, z: Option<u8>| r.assign(i, l, z).map_err(|e| ServeError::NotFound(e.to_string()));
    let g_opt = lookup(&artifact.optimal, 0, None)?;
    let by_intent = |r, z| (0..2u8).map(|i| Ok((i.to_string(), lookup(r, i, z)?))).collect::<Result<BTreeMap<_, _>, ServeError>>();
    let g_sup = by_intent(&artifact.superoptimal, None)?;
    let g_zsup = instrument.map(|z| by_intent(&artifact.instrument_superoptimal, Some(z))).transpose()?;
    let gamma = artifact.gamma_at(l).ok_or_else(|| ServeError::NotFound(format!("context {ctx} missing from gamma table")))?;
    Ok(RecommendResponse {
        context: schema.context_names(&ctx),
        g_opt,
        recommended: intent.map(|i| g_sup[&i.to_string()]),
        g_sup_by_intent: g_sup,
        g_zsup_by_intent: g_zsup,
        gamma: gamma as u8,
        instruction: gamma.instruction().to_string(),
        intent,
        value_estimates: artifact.values.clone(),
    })
}

async fn meta_handler(State(a): State<Arc<RegimeArtifact>>) -> Json<MetaResponse> {
    Json(meta(&a))
}

async fn recommend_handler(State(a): State<Arc<RegimeArtifact>>, body: Bytes) -> Result<Json<RecommendResponse>, ServeError> {
    let req: RecommendRequest = serde_json::from_slice(&body).map_err(|e| ServeError::BadRequest { field: None, message: format!("invalid request body: {e}") })?;
    let out = recommend(&a, &req);
    match &out {
        Ok(r) => log::info!("recommend {:?} -> gamma {}", r.context, r.gamma),
        Err(e) => log::info!("recommend rejected: {e}"),
    }
    out.map(Json)
}

pub fn router(artifact: Arc<RegimeArtifact>) -> Router {
    Router::new().route("/meta", get(meta_handler)).route("/recommend", post(recommend_handler)).with_state(artifact)
}

/// Pending-connection queue length of the listening socket.
pub const BACKLOG: u32 = 1024;

fn runtime() -> std::io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

async fn listen(port: u16) -> std::io::Result<tokio::net::TcpListener> {
    let socket = tokio::net::TcpSocket::new_v4()?;
    socket.set_reuseaddr(true)?;
    socket.bind(SocketAddr::from(([127, 0, 0, 1], port)))?;
    socket.listen(BACKLOG)
}

/// Binds `127.0.0.1:port` and serves until the process exits.
pub fn serve(artifact: RegimeArtifact, port: u16) -> std::io::Result<()> {
    runtime()?.block_on(async move {
        let listener = listen(port).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(artifact))).await
    })
}

/// Starts the service on a background thread and returns the bound address.
/// Port 0 picks a free port.
pub fn spawn(artifact: RegimeArtifact, port: u16) -> std::io::Result<SocketAddr> {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = match runtime() {
            Ok(rt) => rt,
            Err(e) => return drop(tx.send(Err(e))),
        };
        rt.block_on(async move {
            match listen(port).await {
                Ok(listener) => {
                    let _ = tx.send(listener.local_addr());
                    if let Err(e) = axum::serve(listener, router(Arc::new(artifact))).await {
                        log::error!("service stopped: {e}");
                    }
                }
                Err(e) => drop(tx.send(Err(e))),
            }
        });
    });
    rx.recv().map_err(|_| std::io::Error::other("service thread exited before binding"))?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::fit;
    use crate::estimate::EstimationConfig;
    use crate::identify::Gamma;
    use crate::simulate::{build_example_law, draw_sample, ExampleParams, SampleMode};
    use serde_json::json;

    fn ex3_artifact() -> RegimeArtifact {
        let law = build_example_law("ex3", ExampleParams::default()).unwrap();
        let ds = draw_sample(&law, 40_000, 3, SampleMode::Observational).unwrap();
        fit(&ds, &EstimationConfig { bootstrap_reps: 50, seed: 1, ..EstimationConfig::default() }).unwrap()
    }

    fn req(v: Value) -> RecommendRequest {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn ex3_instrument_alias() {
        let a = ex3_artifact();
        let r = recommend(&a, &req(json!({"covariates": {"z": 1}}))).unwrap();
        assert_eq!(r.g_zsup_by_intent.unwrap()["1"], 0);
        assert_eq!(r.g_sup_by_intent.len(), 2);
        assert!(r.recommended.is_none());
        let r0 = recommend(&a, &req(json!({"covariates": {}, "instrument": 0, "intent": 0}))).unwrap();
        assert_eq!(r0.g_zsup_by_intent.unwrap()["0"], 1);
        assert_eq!(r0.recommended, Some(r0.g_sup_by_intent["0"]));
        let clash = recommend(&a, &req(json!({"covariates": {"z": 1}, "instrument": 0})));
        assert!(matches!(clash, Err(ServeError::BadRequest { .. })));
    }

    #[test]
    fn follow_echoes_optimal() {
        let mut a = ex3_artifact();
        a.gamma[0].gamma = Gamma::Follow;
        a.gamma[0].instruction = "follow".into();
        let r = recommend(&a, &req(json!({"covariates": {}}))).unwrap();
        assert_eq!(r.instruction, "follow");
        assert_eq!(r.gamma, 0);
        assert_eq!(r.g_opt, a.optimal.assign(0, 0, None).unwrap());
    }

    #[test]
    fn rejects_bad_requests() {
        let law = build_example_law("ex1", ExampleParams { include_w: true, ..ExampleParams::default() }).unwrap();
        let ds = draw_sample(&law, 4000, 5, SampleMode::Observational).unwrap();
        let mut a = fit(&ds, &EstimationConfig { bootstrap_reps: 50, ..EstimationConfig::default() }).unwrap();
        let ok = recommend(&a, &req(json!({"covariates": {"w": 1}, "intent": 1}))).unwrap();
        assert_eq!(ok.context["w"], "1");
        for body in [json!({"covariates": {"w": "7"}}), json!({"covariates": {}}), json!({"covariates": {"w": 0, "v": 1}}), json!({"covariates": {"w": 0}, "intent": 2})] {
            let e = recommend(&a, &req(body.clone())).unwrap_err();
            assert_eq!(e.status(), StatusCode::BAD_REQUEST, "{body}");
        }
        a.context_support[1] = 0;
        let e = recommend(&a, &req(json!({"covariates": {"w": "1"}}))).unwrap_err();
        assert_eq!(e.status(), StatusCode::NOT_FOUND);
    }

    #[test]
    fn meta_lists_schema_and_values() {
        let a = ex3_artifact();
        let m = meta(&a);
        assert_eq!(m.value_estimates.len(), 4);
        assert!(m.schema.instrument);
        assert_eq!(m.regime_kinds.len(), 4);
    }
}
