//! Annotation session logic, independent of the transport.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use labelfix::active::{correction_stats, ClassCorrection, IterationCount, IterationSummary, Phase};
use labelfix::{ALState, AnnotationItem, AnnotationRecord, LabelSet};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const MAX_LABELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    /// Waiting for the first or a retried retrain.
    Idle,
    Annotating,
    Retraining,
    Done,
}

#[derive(Debug, Clone)]
struct Lease {
    sample_id: u64,
    annotator_id: String,
    expires_at: Instant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeasedItem {
    pub lease_token: String,
    pub expires_in_secs: f64,
    pub item: AnnotationItem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub run_id: String,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub k_target: usize,
    pub per_iteration: usize,
    pub lease_ttl_secs: f64,
    pub iteration: usize,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub run_id: String,
    pub status: Status,
    pub iteration: usize,
    pub k_target: usize,
    pub clean_size: usize,
    pub queued: usize,
    pub leased: usize,
    pub submitted_this_iteration: usize,
    pub per_iteration: Vec<IterationCount>,
    pub per_class: Vec<ClassCorrection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvanceOutcome {
    /// The iteration that was closed, if one was open.
    pub closed: Option<IterationSummary>,
    /// Index of the iteration now collecting corrections.
    pub iteration: usize,
    pub queue_size: usize,
    pub status: Status,
}

/// Outcome of the first half of an advance.
pub enum AdvanceStart {
    /// The session is finished; nothing to retrain.
    Finished(AdvanceOutcome),
    /// Retrain this copy, then hand it to [`Session::finish_advance`].
    Retrain { work: Box<ALState>, closed: Option<IterationSummary> },
}

/// State of one annotation run. All mutation goes through `&mut self`, so
/// wrapping it in a mutex gives a single serialized writer.
pub struct Session {
    run_id: String,
    class_names: Vec<String>,
    state: ALState,
    status: Status,
    ttl: Duration,
    leases: BTreeMap<String, Lease>,
    expired: HashMap<String, u64>,
    submitted: HashMap<String, AnnotationRecord>,
    next_token: u64,
}

impl Session {
    pub fn new(run_id: impl Into<String>, class_names: Vec<String>, state: ALState, ttl: Duration) -> Self {
        let status = match (state.phase(), state.is_done()) {
            (Phase::Annotating, _) => Status::Annotating,
            (Phase::Idle, true) => Status::Done,
            (Phase::Idle, false) => Status::Idle,
        };
        Self {
            run_id: run_id.into(),
            class_names,
            state,
            status,
            ttl,
            leases: BTreeMap::new(),
            expired: HashMap::new(),
            submitted: HashMap::new(),
            next_token: 0,
        }
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn state(&self) -> &ALState {
        &self.state
    }

    pub fn num_classes(&self) -> usize {
        self.state.base_dataset().num_classes()
    }

    pub fn info(&self) -> SessionInfo {
        SessionInfo {
            run_id: self.run_id.clone(),
            num_classes: self.num_classes(),
            class_names: self.class_names.clone(),
            k_target: self.state.config().k_target,
            per_iteration: self.state.config().per_iteration,
            lease_ttl_secs: self.ttl.as_secs_f64(),
            iteration: self.state.iteration(),
            status: self.status,
        }
    }

    fn expire(&mut self, now: Instant) {
        let stale: Vec<String> = self.leases.iter().filter(|(_, l)| l.expires_at <= now).map(|(t, _)| t.clone()).collect();
        for token in stale {
            let lease = self.leases.remove(&token).expect("listed above");
            self.expired.insert(token, lease.sample_id);
        }
    }

    /// Leases the highest-scoring unleased item to `annotator_id`.
    pub fn next_item(&mut self, annotator_id: &str, now: Instant) -> Result<Option<LeasedItem>, ServiceError> {
        if annotator_id.trim().is_empty() {
            return Err(ServiceError::BadRequest("annotator_id is required".into()));
        }
        if self.status != Status::Annotating {
            return Ok(None);
        }
        self.expire(now);
        if let Some((token, _)) = self.leases.iter().find(|(_, l)| l.annotator_id == annotator_id) {
            return Err(ServiceError::Conflict(format!("annotator {annotator_id} already holds lease {token}")));
        }
        let leased: Vec<u64> = self.leases.values().map(|l| l.sample_id).collect();
        let Some(item) = self.state.pending().iter().find(|it| !leased.contains(&it.sample_id)).cloned() else {
            return Ok(None);
        };
        self.next_token += 1;
        let token = format!("{}-{}-{}", self.state.iteration(), item.sample_id, self.next_token);
        self.leases.insert(
            token.clone(),
            Lease { sample_id: item.sample_id, annotator_id: annotator_id.to_string(), expires_at: now + self.ttl },
        );
        Ok(Some(LeasedItem { lease_token: token, expires_in_secs: self.ttl.as_secs_f64(), item }))
    }

    /// Applies the labels submitted under `token`. Replaying a token returns
    /// the record created the first time.
    pub fn submit(&mut self, token: &str, labels: &[usize], now: Instant) -> Result<AnnotationRecord, ServiceError> {
        if let Some(r) = self.submitted.get(token) {
            return Ok(r.clone());
        }
        self.expire(now);
        if self.expired.contains_key(token) {
            return Err(ServiceError::Gone(format!("lease {token} has expired")));
        }
        let Some(lease) = self.leases.get(token) else {
            return Err(ServiceError::NotFound(format!("unknown lease {token}")));
        };
        let t = self.num_classes();
        if labels.len() > MAX_LABELS {
            return Err(ServiceError::BadRequest(format!("at most {MAX_LABELS} labels, got {}", labels.len())));
        }
        let set = LabelSet::from_ids(labels, t).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        let (sample_id, annotator) = (lease.sample_id, lease.annotator_id.clone());
        let record = self
            .state
            .apply_correction(sample_id, set, &annotator)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.leases.remove(token);
        self.submitted.insert(token.to_string(), record.clone());
        Ok(record)
    }

    /// Closes the open iteration and, unless the run is finished, returns a
    /// copy of the loop state for retraining outside the lock.
    pub fn begin_advance(&mut self, force: bool) -> Result<AdvanceStart, ServiceError> {
        match self.status {
            Status::Retraining => return Err(ServiceError::Conflict("a retrain is already in progress".into())),
            Status::Done => return Err(ServiceError::Conflict("the session is finished".into())),
            Status::Annotating => {
                let waiting = self.state.pending().len();
                if waiting > 0 && !force {
                    return Err(ServiceError::Conflict(format!(
                        "{} of {} items corrected; pass force to advance early",
                        self.state.submitted_this_iteration(),
                        self.state.submitted_this_iteration() + waiting
                    )));
                }
            }
            Status::Idle => {}
        }
        let closed = if self.state.phase() == Phase::Annotating {
            Some(self.state.end_iteration().map_err(|e| ServiceError::Internal(e.to_string()))?)
        } else {
            None
        };
        for (token, lease) in std::mem::take(&mut self.leases) {
            self.expired.insert(token, lease.sample_id);
        }
        if self.state.is_done() {
            self.status = Status::Done;
            return Ok(AdvanceStart::Finished(AdvanceOutcome {
                closed,
                iteration: self.state.iteration(),
                queue_size: 0,
                status: Status::Done,
            }));
        }
        self.status = Status::Retraining;
        Ok(AdvanceStart::Retrain { work: Box::new(self.state.clone()), closed })
    }

    /// Installs the retrained state, or returns to idle when retraining failed.
    pub fn finish_advance(
        &mut self,
        result: Result<ALState, String>,
        closed: Option<IterationSummary>,
    ) -> Result<AdvanceOutcome, ServiceError> {
        match result {
            Ok(state) => {
                self.state = state;
                self.status = Status::Annotating;
                Ok(AdvanceOutcome {
                    closed,
                    iteration: self.state.iteration(),
                    queue_size: self.state.pending().len(),
                    status: self.status,
                })
            }
            Err(e) => {
                self.status = Status::Idle;
                Err(ServiceError::Internal(format!("retraining failed: {e}")))
            }
        }
    }

    /// Runs a whole advance in place. Used where blocking the caller is fine.
    pub fn advance_blocking(&mut self, force: bool) -> Result<AdvanceOutcome, ServiceError> {
        match self.begin_advance(force)? {
            AdvanceStart::Finished(o) => Ok(o),
            AdvanceStart::Retrain { work, closed } => {
                let result = retrain(*work);
                self.finish_advance(result, closed)
            }
        }
    }

    pub fn progress(&self, now: Instant) -> Progress {
        let stats = correction_stats(self.state.records(), self.num_classes());
        Progress {
            run_id: self.run_id.clone(),
            status: self.status,
            iteration: self.state.iteration(),
            k_target: self.state.config().k_target,
            clean_size: self.state.clean().len(),
            queued: self.state.pending().len(),
            leased: self.leases.values().filter(|l| l.expires_at > now).count(),
            submitted_this_iteration: self.state.submitted_this_iteration(),
            per_iteration: stats.per_iteration,
            per_class: stats.per_class,
        }
    }
}

/// Retrains and rescores a detached copy of the loop state.
pub fn retrain(mut state: ALState) -> Result<ALState, String> {
    state.begin_iteration().map_err(|e| e.to_string())?;
    Ok(state)
}
