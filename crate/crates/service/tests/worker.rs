mod common;

use std::thread;
use std::time::Duration;

use common::{echo_request, fenced, LocalWorker, WorkerProc};
use judgebox_core::{TestCase, Verdict};
use judgebox_service::client::WorkerClient;
use judgebox_service::worker::WorkerConfig;

#[test]
fn sandbox_worker_serves_submissions() {
    let w = LocalWorker::sandbox(WorkerConfig::default());
    let client = WorkerClient::new(&w.url);

    let report = client.submit(&echo_request("r1")).unwrap();
    assert!(report.accepted);
    assert_eq!(report.request_id, "r1");

    let mut wrong = echo_request("r2");
    wrong.tests.push(TestCase::stdin("u", "1\n", "2\n"));
    let report = client.submit(&wrong).unwrap();
    assert!(!report.accepted);
    assert_eq!(report.per_test[1].verdict, Verdict::WrongAnswer);

    let (status, body) = client.submit_raw("{not json").unwrap();
    assert_eq!(status.as_u16(), 400);
    assert!(body.contains("bad_request"), "{body}");

    let mut unknown = echo_request("r3");
    unknown.guest_language = "cobol".into();
    let err = client.submit(&unknown).unwrap_err();
    assert_eq!(err.status(), Some(400));

    let status = client.health().unwrap();
    assert!(status.healthy);
    assert!(status.runtimes.contains(&"python".to_string()));
    assert_eq!(status.in_flight, 0);
    assert_eq!(status.received_total, 4);

    let logs = client.logs(2).unwrap();
    assert_eq!(logs.len(), 2);
    assert!(logs[0].seq < logs[1].seq);
    assert_eq!(client.logs(0).unwrap_err().status(), Some(400));

    client.reload().unwrap();
}

#[test]
fn full_queue_sheds_with_retry_after() {
    let config = WorkerConfig { max_concurrent_requests: 1, queue_capacity: 1, retry_after_s: 3, ..WorkerConfig::default() };
    let w = LocalWorker::synthetic(400, config);
    let url = w.url.clone();
    let handles: Vec<_> = (0..3)
        .map(|i| {
            let url = url.clone();
            thread::spawn(move || {
                thread::sleep(Duration::from_millis(50 * i));
                let resp = reqwest::blocking::Client::new()
                    .post(format!("{url}/submit"))
                    .json(&echo_request(&format!("q{i}")))
                    .send()
                    .unwrap();
                (resp.status().as_u16(), resp.headers().get("retry-after").map(|v| v.to_str().unwrap().to_string()))
            })
        })
        .collect();
    let mut results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    results.sort();
    assert_eq!(results[0].0, 200);
    assert_eq!(results[1].0, 200);
    assert_eq!(results[2], (503, Some("3".to_string())));
    assert_eq!(w.worker.status().rejected_total, 1);
}

#[test]
fn drain_finishes_in_flight_then_exits() {
    let mut w = WorkerProc::synthetic(500, 4);
    let client = WorkerClient::new(&w.url);
    let pending: Vec<_> = (0..3)
        .map(|i| {
            let c = client.clone();
            thread::spawn(move || c.submit(&echo_request(&format!("d{i}"))))
        })
        .collect();
    assert!(common::wait_for(Duration::from_secs(5), || client.health().unwrap().in_flight == 3));

    let status = client.drain().unwrap();
    assert!(status.draining);
    let refused = client.submit(&echo_request("late")).unwrap_err();
    assert_eq!(refused.status(), Some(503));

    for h in pending {
        assert!(h.join().unwrap().unwrap().accepted);
    }
    let exit = w.terminate(Duration::from_secs(5)).expect("worker exits after drain");
    assert!(exit.success(), "{exit:?}");
}

#[test]
fn sigterm_drains_gracefully() {
    let mut w = WorkerProc::synthetic(400, 2);
    let client = WorkerClient::new(&w.url);
    let c = client.clone();
    let job = thread::spawn(move || c.submit(&echo_request("s")));
    assert!(common::wait_for(Duration::from_secs(5), || client.health().unwrap().in_flight == 1));
    let exit = w.terminate(Duration::from_secs(5)).expect("worker exits");
    assert!(exit.success());
    assert!(job.join().unwrap().unwrap().accepted);
}

#[test]
fn worker_config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("worker.toml");
    std::fs::write(&path, "max_concurrent_requests = 2\n[default_limits]\nper_test_timeout_ms = 1500\n").unwrap();
    let c = WorkerConfig::load(Some(&path)).unwrap();
    assert_eq!(c.max_concurrent_requests, 2);
    assert_eq!(c.default_limits.per_test_timeout_ms, 1500);
    std::fs::write(&path, "max_concurrent_requests = 0\n").unwrap();
    assert!(WorkerConfig::load(Some(&path)).is_err());
    assert!(fenced("python", "x").contains("```python"));
}
