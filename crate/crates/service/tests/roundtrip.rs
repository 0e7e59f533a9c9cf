use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use labelfix::active::AuditLog;
use labelfix::ensemble::default_member_configs;
use labelfix::selftrain::hard_examples;
use labelfix::{
    correction_stats, generate_synthetic, ALConfig, ALState, Ensemble, LabelSet, NoiseSpec, TrainSchedule,
};
use labelfix_service::session::AdvanceStart;
use labelfix_service::{Client, Policy, RunningService, Service, Session, Status};

const T: usize = 14;

fn state(audit: &Path, k_target: usize, per_iteration: usize) -> (ALState, BTreeMap<u64, LabelSet>) {
    let spec = NoiseSpec { groups: 20, frames_min: 6, frames_max: 6, ..NoiseSpec::default() };
    let ds = generate_synthetic(&spec, 16, T, 7).unwrap();
    let truth = ds.samples().iter().map(|s| (s.sample_id, s.true_labels)).collect();
    let schedule = TrainSchedule { phase1_epochs: 2, phase2_epochs: 1, ..TrainSchedule::default() };
    let configs = default_member_configs(7);
    let mut e = Ensemble::from_configs(&configs, 16, T).unwrap();
    e.train(&hard_examples(&ds), &schedule, None, 7).unwrap();
    let cfg = ALConfig { k_target, per_iteration, ..ALConfig::default() };
    let st = ALState::new(ds, e, configs, schedule, cfg, 7).unwrap().with_audit_log(AuditLog::new(audit));
    (st, truth)
}

fn names() -> Vec<String> {
    (0..T).map(|c| format!("tool {c}")).collect()
}

fn start(dir: &Path, ttl: Duration, k_target: usize, per_iteration: usize) -> (RunningService, BTreeMap<u64, LabelSet>) {
    let (st, truth) = state(&dir.join("audit.jsonl"), k_target, per_iteration);
    let service = Service::new(Session::new("test-run", names(), st, ttl)).unwrap();
    (RunningService::start(service, "127.0.0.1:0").unwrap(), truth)
}

#[test]
fn three_iterations_match_the_audit_log() {
    let dir = tempfile::tempdir().unwrap();
    let (server, truth) = start(dir.path(), Duration::from_secs(120), 100, 10);
    let client = Client::new(server.url());

    let fresh = client.progress().unwrap();
    assert_eq!(fresh.clean_size, 0);
    assert!(fresh.per_iteration.is_empty());
    assert!(fresh.per_class.iter().all(|c| c.corrected == 0 && c.reviewed == 0));

    let info = client.session().unwrap();
    assert_eq!((info.num_classes, info.k_target, info.status), (T, 100, Status::Annotating));

    let policy = Policy::Truth(truth.clone());
    let mut last_clean = 0;
    for i in 1..=3 {
        let leased = client.next("alice").unwrap().unwrap();
        let labels = truth[&leased.item.sample_id].to_vec();
        let first = client.submit(&leased.lease_token, &labels).unwrap();
        let again = client.submit(&leased.lease_token, &labels).unwrap();
        assert_eq!(first, again);
        assert_eq!(first.iteration_index, i);

        let (records, outcome) = client.run_iteration("alice", &policy).unwrap();
        assert_eq!(records.len(), 9);
        assert_eq!(outcome.closed.as_ref().unwrap().iteration, i);
        let p = client.progress().unwrap();
        assert!(p.clean_size >= last_clean);
        assert_eq!(p.clean_size, 10 * i);
        last_clean = p.clean_size;
    }

    let progress = client.progress().unwrap();
    let log = AuditLog::read(&dir.path().join("audit.jsonl")).unwrap();
    assert_eq!(log.len(), 30);
    let recount = correction_stats(&log, T);
    assert_eq!(progress.per_iteration, recount.per_iteration);
    assert_eq!(progress.per_class, recount.per_class);
    for r in &log {
        assert_eq!(r.corrected_labels, truth[&r.sample_id]);
    }
    let ids: std::collections::BTreeSet<u64> = log.iter().map(|r| r.sample_id).collect();
    assert_eq!(ids.len(), 30);
    assert_eq!(progress.iteration, 4);
}

#[test]
fn leases_are_exclusive_and_expire() {
    let dir = tempfile::tempdir().unwrap();
    let (server, _) = start(dir.path(), Duration::from_millis(400), 100, 5);
    let client = Client::new(server.url());

    let a = client.next("alice").unwrap().unwrap();
    let b = client.next("bob").unwrap().unwrap();
    assert_ne!(a.item.sample_id, b.item.sample_id);
    assert!(a.item.score >= b.item.score);
    assert_eq!(client.next("alice").unwrap_err().status(), Some(409));

    std::thread::sleep(Duration::from_millis(600));
    let c = client.next("carol").unwrap().unwrap();
    assert_eq!(c.item.sample_id, a.item.sample_id);
    let err = client.submit(&a.lease_token, &[0]).unwrap_err();
    assert_eq!(err.status(), Some(410));
    if let labelfix_service::ClientError::Http { body, .. } = err {
        assert_eq!(body.code, "lease_expired");
    }
    assert_eq!(client.progress().unwrap().clean_size, 0);
}

#[test]
fn bad_requests_do_not_mutate() {
    let dir = tempfile::tempdir().unwrap();
    let (server, _) = start(dir.path(), Duration::from_secs(120), 100, 5);
    let client = Client::new(server.url());
    let leased = client.next("alice").unwrap().unwrap();

    assert_eq!(client.submit(&leased.lease_token, &[99]).unwrap_err().status(), Some(400));
    assert_eq!(client.submit(&leased.lease_token, &[1, 2, 3, 4]).unwrap_err().status(), Some(400));
    assert_eq!(client.submit(&leased.lease_token, &[2, 2]).unwrap_err().status(), Some(400));
    assert_eq!(client.submit("no-such-token", &[1]).unwrap_err().status(), Some(404));

    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent.post(format!("{}/annotations", server.url())).send("{not json").unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    let body: serde_json::Value = serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap();
    assert_eq!(body["code"], "bad_request");
    assert!(body["message"].is_string());
    let resp = agent.get(format!("{}/queue/next", server.url())).call().unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    let resp = agent.get(format!("{}/nowhere", server.url())).call().unwrap();
    assert_eq!(resp.status().as_u16(), 404);

    let p = client.progress().unwrap();
    assert_eq!((p.clean_size, p.submitted_this_iteration), (0, 0));
    let record = client.submit(&leased.lease_token, &leased.item.suggested_labels.to_vec()).unwrap();
    assert_eq!(record.changed, record.previous_labels != record.corrected_labels);
    let unchanged = client.next("alice").unwrap().unwrap();
    let r = client.submit(&unchanged.lease_token, &unchanged.item.current_labels.to_vec()).unwrap();
    assert!(!r.changed);
}

#[test]
fn advance_requires_a_full_batch_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let (server, _) = start(dir.path(), Duration::from_secs(120), 12, 5);
    let client = Client::new(server.url());
    assert_eq!(client.advance(false).unwrap_err().status(), Some(409));
    let forced = client.advance(true).unwrap();
    assert_eq!(forced.closed.unwrap().changed, 0);
    assert_eq!(forced.queue_size, 5);

    let outcomes = client.run("bob", &Policy::KeepCurrent, 10).unwrap();
    let last = outcomes.last().unwrap();
    assert_eq!(last.status, Status::Done);
    assert_eq!(client.progress().unwrap().clean_size, 12);
    assert!(client.next("bob").unwrap().is_none());
    assert_eq!(client.advance(true).unwrap_err().status(), Some(409));
    assert!(server.wait_until_done(Some(Duration::from_secs(1))));
    let state = server.stop().unwrap();
    assert_eq!(state.clean().len(), 12);
}

#[test]
fn only_one_advance_runs_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let (st, _) = state(&dir.path().join("audit.jsonl"), 100, 5);
    let mut session = Session::new("s", names(), st, Duration::from_secs(120));
    session.advance_blocking(false).unwrap();
    let first = session.begin_advance(true).unwrap();
    assert_eq!(session.status(), Status::Retraining);
    assert!(session.begin_advance(true).is_err());
    assert!(session.next_item("alice", Instant::now()).unwrap().is_none());
    let AdvanceStart::Retrain { work, closed } = first else { panic!("expected a retrain") };
    let out = session.finish_advance(labelfix_service::session::retrain(*work), closed).unwrap();
    assert_eq!(out.status, Status::Annotating);
    assert_eq!(out.queue_size, 5);
}
