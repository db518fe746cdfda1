//! Blinded mean-opinion-score rating service.
//!
//! A study is a list of sets, each holding one image per [`Label`]. Every
//! rater session gets its own shuffled item order and opaque item ids; the
//! label of an item stays on the server and only appears in the ratings log
//! and in the report, which unlocks once every item in the session is rated.
//!
//! HTTP API:
//!
//! | method | path | result |
//! |---|---|---|
//! | GET | `/api/session[?session_id=]` | new or existing session |
//! | GET | `/images/{item_id}` | PNG bytes |
//! | POST | `/api/rating` | 204, or 400/404 |
//! | GET | `/api/report?session_id=` | per-method MOS, or 409 |

mod config;
mod log;
mod server;
mod study;

pub use config::{ItemConfig, Label, SetConfig, StudyConfig, SET_SIZE};
pub use log::{
    mos_by_method, mos_table, parse_log, read_log, render_mos_table, LogRecord, LogScan, MethodMos, RatingLog, SkippedLine, LOG_HEADER,
};
pub use server::{bind, router, serve, AppState};
pub use study::{ItemView, Registry, Report, SessionView, SetView, Study};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid study: {0}")]
    Config(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("score {0} outside 1..=5")]
    InvalidScore(i64),
    #[error("session_id is required")]
    MissingSession,
    #[error("session incomplete: {rated} of {total} items rated")]
    Incomplete { rated: usize, total: usize },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
