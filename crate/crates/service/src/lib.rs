//! HTTP service for the live label-cleaning loop, plus a scripted client.
//!
//! Endpoints:
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/session` | run metadata and class names |
//! | GET | `/queue/next?annotator_id=..` | lease the next item (204 when none) |
//! | POST | `/annotations` | `{"lease_token", "labels"}` |
//! | POST | `/iterations/advance` | `{"force": bool}`, retrain and refill the queue |
//! | GET | `/progress` | effort per iteration and per-class correction rates |
//!
//! Errors are JSON `{"code", "message"}` with status 400, 404, 409, 410 or 500.

pub mod client;
pub mod error;
pub mod http;
pub mod session;

pub use client::{Client, ClientError, Policy};
pub use error::{ErrorBody, ServiceError};
pub use http::{router, RunningService, Service};
pub use session::{AdvanceOutcome, LeasedItem, Progress, Session, SessionInfo, Status};
