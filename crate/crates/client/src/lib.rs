//! Thin async client for the rating service API.

use std::sync::Arc;

use reqwest::{Method, StatusCode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionItem {
    pub item_id: String,
    pub image_url: String,
    #[serde(default)]
    pub score: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSet {
    pub set_id: usize,
    pub items: Vec<SessionItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub sets: Vec<SessionSet>,
}

impl Session {
    pub fn items(&self) -> impl Iterator<Item = &SessionItem> {
        self.sets.iter().flat_map(|s| s.items.iter())
    }

    /// First item without a score, in presentation order.
    pub fn next_unrated(&self) -> Option<&SessionItem> {
        self.items().find(|it| it.score.is_none())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub mos: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub methods: Vec<ReportRow>,
}

/// One request/response pair, handed to the observer.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub method: Method,
    pub path: String,
    pub status: StatusCode,
    pub body: Vec<u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Http(#[from] reqwest::Error),
    #[error("report not available yet: {0}")]
    Incomplete(String),
    #[error("{status}: {message}")]
    Status { status: StatusCode, message: String },
    #[error("bad response body: {0}")]
    Decode(#[from] serde_json::Error),
}

type Observer = Arc<dyn Fn(&Exchange) + Send + Sync>;

#[derive(Clone)]
pub struct RatingClient {
    base: String,
    http: reqwest::Client,
    observer: Option<Observer>,
}

impl RatingClient {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        let base = base.into().trim_end_matches('/').to_string();
        RatingClient { base, http: reqwest::Client::new(), observer: None }
    }

    /// Calls `f` with every response the client receives.
    pub fn observe(mut self, f: impl Fn(&Exchange) + Send + Sync + 'static) -> Self {
        self.observer = Some(Arc::new(f));
        self
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn send(&self, req: reqwest::RequestBuilder, method: Method, path: &str) -> Result<Exchange, ClientError> {
        let resp = req.send().await?;
        let status = resp.status();
        let body = resp.bytes().await?.to_vec();
        let ex = Exchange { method, path: path.to_string(), status, body };
        if let Some(f) = &self.observer {
            f(&ex);
        }
        Ok(ex)
    }

    /// GET of an arbitrary service path, without status checks.
    pub async fn get_raw(&self, path: &str) -> Result<Exchange, ClientError> {
        let req = self.http.get(format!("{}{path}", self.base));
        self.send(req, Method::GET, path).await
    }

    fn check(ex: Exchange) -> Result<Exchange, ClientError> {
        if ex.status.is_success() {
            return Ok(ex);
        }
        #[derive(Deserialize)]
        struct ErrorBody {
            error: String,
        }
        let message = serde_json::from_slice::<ErrorBody>(&ex.body)
            .map(|e| e.error)
            .unwrap_or_else(|_| String::from_utf8_lossy(&ex.body).into_owned());
        if ex.status == StatusCode::CONFLICT {
            return Err(ClientError::Incomplete(message));
        }
        Err(ClientError::Status { status: ex.status, message })
    }

    /// Starts a new session, or fetches `resume` with its recorded scores.
    pub async fn session(&self, resume: Option<&str>) -> Result<Session, ClientError> {
        let path = "/api/session";
        let mut req = self.http.get(format!("{}{path}", self.base));
        if let Some(id) = resume {
            req = req.query(&[("session_id", id)]);
        }
        let ex = Self::check(self.send(req, Method::GET, path).await?)?;
        Ok(serde_json::from_slice(&ex.body)?)
    }

    pub async fn image(&self, item: &SessionItem) -> Result<Vec<u8>, ClientError> {
        Ok(Self::check(self.get_raw(&item.image_url).await?)?.body)
    }

    pub async fn rate(&self, session_id: &str, item_id: &str, score: i64) -> Result<(), ClientError> {
        let path = "/api/rating";
        let body = serde_json::json!({ "session_id": session_id, "item_id": item_id, "score": score });
        let req = self.http.post(format!("{}{path}", self.base)).json(&body);
        Self::check(self.send(req, Method::POST, path).await?)?;
        Ok(())
    }

    /// Fails with [`ClientError::Incomplete`] until every item is rated.
    pub async fn report(&self, session_id: &str) -> Result<Report, ClientError> {
        let path = "/api/report";
        let req = self.http.get(format!("{}{path}", self.base)).query(&[("session_id", session_id)]);
        let ex = Self::check(self.send(req, Method::GET, path).await?)?;
        Ok(serde_json::from_slice(&ex.body)?)
    }
}
