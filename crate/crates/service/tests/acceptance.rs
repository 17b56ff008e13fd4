//! Acceptance gate. One line per criterion, PASS or FAIL, then a non-zero
//! exit if anything failed. Criteria run one at a time because several of
//! them measure wall-clock time.
//!
//! `cargo test --test acceptance -- <substring>` runs a subset.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use common::{fenced, LocalGateway, WorkerProc};
use judgebox_core::engine::{Engine, EngineConfig, RuntimeManifest};
use judgebox_core::eval::{
    load_dataset, run_eval, BenchmarkConfig, DispatchError, Dispatcher, EvalError, Generations, LocalDispatcher,
    RunOptions,
};
use judgebox_core::extract::Extractor;
use judgebox_core::pipeline::{Sandbox, SandboxSettings};
use judgebox_core::synth::{
    classify_problem, measure_fidelity, parse_classification, ArtifactStatus, Category, CheckKind, Classification,
    JudgeArtifact, Label, LabeledSolution, ProblemRecord, ScriptedProvider, SynthConfig, SynthError, Synthesizer,
};
use judgebox_core::verify::{
    exact_match, normalize, verify_test, JudgeContext, JudgeInvocation, JudgeRunner, JudgeVerdict, MatchPolicy,
};
use judgebox_core::{
    ExecStatus, ExecutionOutcome, JudgeProgram, ResourceLimits, Stage, SubmissionRequest, TestCase, ToleranceSpec,
    Verdict, VerificationReport,
};
use judgebox_service::client::{GatewayClient, WorkerClient};
use judgebox_service::gateway::{GatewayConfig, NodeState};
use judgebox_service::worker::now_ms;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn sandbox() -> Sandbox {
    let engine = Arc::new(Engine::new(EngineConfig::default()).expect("engine"));
    Sandbox::new(engine, RuntimeManifest::builtin(), Extractor::default(), SandboxSettings::default())
}

fn spawned(sb: &Sandbox) -> u64 {
    sb.engine().stats().processes_spawned
}

// ---------------------------------------------------------------------------
// verification properties

/// Independent reading of the matching rule, used as an oracle.
fn oracle_match(actual: &str, expected: &str, tol: Option<ToleranceSpec>) -> bool {
    let norm = |s: &str| {
        let s = s.replace("\r\n", "\n");
        let mut lines: Vec<String> = s.split('\n').map(|l| l.trim_end().to_string()).collect();
        while lines.last().is_some_and(|l| l.trim().is_empty()) {
            lines.pop();
        }
        lines.join("\n")
    };
    if norm(actual) == norm(expected) {
        return true;
    }
    let Some(tol) = tol else { return false };
    let numeric = regex::Regex::new(r"^[+-]?([0-9]+\.?[0-9]*|\.[0-9]+)([eE][+-]?[0-9]+)?$").unwrap();
    let num = |t: &str| if numeric.is_match(t) { t.parse::<f64>().ok().filter(|v| v.is_finite()) } else { None };
    let a: Vec<&str> = actual.split_whitespace().collect();
    let b: Vec<&str> = expected.split_whitespace().collect();
    a.len() == b.len()
        && a.iter().zip(&b).all(|(x, y)| {
            if tol.epsilon == 0.0 {
                return x == y;
            }
            match (num(x), num(y)) {
                (Some(p), Some(q)) => {
                    let d = (p - q).abs();
                    d <= tol.epsilon || (tol.relative && d <= tol.epsilon * q.abs().max(1.0))
                }
                _ => x == y,
            }
        })
}

fn token() -> impl Strategy<Value = String> {
    prop_oneof![
        (-1000i64..1000).prop_map(|v| v.to_string()),
        (-100.0f64..100.0).prop_map(|v| format!("{v:.3}")),
        (-1.0f64..1.0).prop_map(|v| format!("{v:e}")),
        "[a-z]{1,4}",
        Just("1.".to_string()),
        Just(".5".to_string()),
        Just("ans=3.0".to_string()),
    ]
}

fn separator() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just(" "), Just("  "), Just("\t"), Just("\n"), Just("\r\n"), Just(" \n")]
}

fn output() -> impl Strategy<Value = String> {
    (prop::collection::vec((token(), separator()), 0..8), prop_oneof![Just(""), Just("\n"), Just(" \n\n"), Just("\r\n")])
        .prop_map(|(parts, tail)| parts.into_iter().map(|(t, s)| t + s).collect::<String>() + tail)
}

/// `text` with every numeric token nudged by up to `scale`.
fn jitter(text: &str, seeds: &[f64], scale: f64) -> String {
    text.split(' ')
        .enumerate()
        .map(|(i, t)| match t.trim().parse::<f64>() {
            Ok(v) if !t.trim().is_empty() => format!("{}", v + seeds[i % seeds.len()] * scale),
            _ => t.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// An output plus jitter seeds and a jitter scale.
fn pair() -> impl Strategy<Value = (String, Vec<f64>, f64)> {
    (output(), prop::collection::vec(-1.0f64..1.0, 1..4), prop_oneof![Just(0.0), Just(1e-4), Just(0.5)])
}

fn epsilon() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1e-9), Just(1e-6), Just(1e-3), Just(0.01), Just(0.1), Just(1.0), 0.0f64..2.0]
}

fn verification_properties() -> Outcome {
    let started = Instant::now();
    let cases = 1000;
    let runner = || TestRunner::new(PropConfig { cases, failure_persistence: None, ..PropConfig::default() });
    let mut total = 0;

    runner()
        .run(&output(), |x| {
            let once = normalize(&x);
            prop_assert_eq!(normalize(&once), once);
            Ok(())
        })
        .map_err(|e| format!("idempotence: {e}"))?;
    total += cases;

    runner()
        .run(&(pair(), epsilon(), epsilon(), any::<bool>()), |((a, seeds, scale), e1, e2, relative)| {
            let b = jitter(&a, &seeds, scale);
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let at = |eps| MatchPolicy::with_tolerance(Some(ToleranceSpec { epsilon: eps, relative }));
            if exact_match(&a, &b, &at(lo)) {
                prop_assert!(exact_match(&a, &b, &at(hi)), "accepted at {lo} but not at {hi}");
            }
            if exact_match(&a, &b, &MatchPolicy::default()) {
                prop_assert!(exact_match(&a, &b, &at(hi)));
            }
            Ok(())
        })
        .map_err(|e| format!("monotonicity: {e}"))?;
    total += cases;

    runner()
        .run(&(pair(), epsilon()), |((a, seeds, scale), eps)| {
            let b = jitter(&a, &seeds, scale);
            let p = MatchPolicy::with_tolerance(Some(ToleranceSpec::absolute(eps)));
            prop_assert_eq!(exact_match(&a, &b, &p), exact_match(&b, &a, &p));
            Ok(())
        })
        .map_err(|e| format!("symmetry: {e}"))?;
    total += cases;

    runner()
        .run(&(output(), token(), epsilon(), any::<bool>(), any::<bool>()), |(a, extra, eps, relative, drop)| {
            let tokens: Vec<&str> = a.split_whitespace().collect();
            let b = if drop && !tokens.is_empty() {
                tokens[..tokens.len() - 1].join(" ")
            } else {
                format!("{a} {extra}")
            };
            let p = MatchPolicy::with_tolerance(Some(ToleranceSpec { epsilon: eps, relative }));
            prop_assert!(!exact_match(&a, &b, &p), "{a:?} vs {b:?}");
            prop_assert!(!exact_match(&b, &a, &p));
            Ok(())
        })
        .map_err(|e| format!("token count: {e}"))?;
    total += cases;

    runner()
        .run(&(pair(), epsilon(), any::<bool>(), any::<bool>()), |((a, seeds, scale), eps, relative, with_tol)| {
            let b = jitter(&a, &seeds, scale);
            let tol = with_tol.then_some(ToleranceSpec { epsilon: eps, relative });
            prop_assert_eq!(exact_match(&a, &b, &MatchPolicy::with_tolerance(tol)), oracle_match(&a, &b, tol));
            Ok(())
        })
        .map_err(|e| format!("oracle agreement: {e}"))?;
    total += cases;

    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("{total} randomized cases, 0 violations, {:.1} s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// short circuit

#[derive(Default)]
struct CountingJudge(AtomicUsize);

impl JudgeRunner for CountingJudge {
    fn run_judge(&self, _: &JudgeInvocation) -> JudgeVerdict {
        self.0.fetch_add(1, Ordering::SeqCst);
        JudgeVerdict::Accepted
    }
}

fn ok_outcome(stdout: &str) -> ExecutionOutcome {
    ExecutionOutcome {
        test_id: "t".into(),
        status: ExecStatus::Ok,
        stdout: stdout.into(),
        stderr: String::new(),
        exit_code: Some(0),
        wall_time_ms: 1,
        truncated: false,
    }
}

const ACCEPT_JUDGE: &str = "import sys\n# reads stdin.txt, stdout.txt, answer.txt\nsys.exit(0)\n";

fn short_circuit() -> Outcome {
    let program = JudgeProgram::new(ACCEPT_JUDGE, "python");
    let counter = CountingJudge::default();
    let ctx = JudgeContext { program: &program, runner: &counter, limits: ResourceLimits::judge_default() };
    let policy = MatchPolicy::default();
    for i in 0..200 {
        let expected = format!("{i} {}\n{}", i * 7, "x".repeat(i % 5));
        let actual = match i % 4 {
            0 => expected.clone(),
            1 => expected.replace('\n', "\r\n"),
            2 => format!("{expected}   \n\n"),
            _ => expected.replace('\n', " \t\n"),
        };
        let test = TestCase::stdin(format!("t{i}"), "", expected);
        let v = verify_test(&ok_outcome(&actual), &test, &policy, Some(&ctx));
        ensure!(v.verdict == Verdict::Accepted && v.stage == Stage::ExactMatch, "case {i}: {v:?}");
    }
    ensure!(counter.0.load(Ordering::SeqCst) == 0, "judge ran on exact matches");
    for i in 0..200 {
        let test = TestCase::stdin(format!("f{i}"), "", format!("{i}"));
        let before = counter.0.load(Ordering::SeqCst);
        let v = verify_test(&ok_outcome(&format!("{}", i + 1)), &test, &policy, Some(&ctx));
        ensure!(counter.0.load(Ordering::SeqCst) == before + 1, "case {i}: judge not run exactly once");
        ensure!(v.stage == Stage::SpecialJudge, "case {i}: {v:?}");
    }

    // the same through real processes: every spawn is either a guest run or a judge run
    let sb = sandbox();
    let echo = fenced("bash", "read x\necho \"$x\"");
    let tests: Vec<TestCase> = (0..200).map(|i| TestCase::stdin(format!("t{i}"), format!("{i}\n"), format!("{i}\n"))).collect();
    let mut request = SubmissionRequest::new("sc-pass", &echo, "bash", tests);
    request.special_judge = Some(program.clone());
    let before = spawned(&sb);
    let report = sb.evaluate(&request).map_err(|e| e.to_string())?;
    let launched = spawned(&sb) - before;
    ensure!(report.accepted, "suite not accepted");
    ensure!(launched == 200, "expected 200 guest spawns and no judge, saw {launched}");

    let tests: Vec<TestCase> = (0..10)
        .map(|i| TestCase::stdin(format!("t{i}"), format!("{i}\n"), if i % 3 == 0 { format!("{i}.0\n") } else { format!("{i}\n") }))
        .collect();
    let failing = tests.iter().filter(|t| t.expected.contains(".0")).count();
    let mut request = SubmissionRequest::new("sc-mixed", &echo, "bash", tests);
    request.special_judge = Some(program);
    let before = spawned(&sb);
    let report = sb.evaluate(&request).map_err(|e| e.to_string())?;
    let judges = spawned(&sb) - before - 10;
    let judged = report.per_test.iter().filter(|t| t.stage == Stage::SpecialJudge).count();
    ensure!(judges as usize == failing && judged == failing, "{failing} mismatches, {judges} judge spawns, {judged} judged");
    Ok(format!("0 judge calls over 200 exact matches (counter and spawn count); 1 per mismatch ({failing}/{failing} via processes)"))
}

// ---------------------------------------------------------------------------
// special judge protocol

const STDIN_BYTES: &str = "3\n1 2 3\n";
const REFERENCE_BYTES: &str = "1 2 3  \n\n";
const ANSWER_BYTES: &str = "3 2 1\r\n  tail ";

fn conformance_judge() -> String {
    format!(
        r#"import os, sys

expected = {{"stdin.txt": {stdin:?}, "stdout.txt": {reference:?}, "answer.txt": {answer:?}}}
for name, want in expected.items():
    if not os.path.isfile(name):
        print("missing " + name, file=sys.stderr)
        sys.exit(2)
    with open(name, "rb") as f:
        data = f.read()
    if data != want.encode():
        print(name + " differs: " + repr(data), file=sys.stderr)
        sys.exit(2)
sys.exit(0)
"#,
        stdin = STDIN_BYTES,
        reference = REFERENCE_BYTES,
        answer = ANSWER_BYTES
    )
}

fn judge_protocol() -> Outcome {
    let sb = sandbox();
    let inv = |source: &str| JudgeInvocation {
        stdin_file: STDIN_BYTES.as_bytes().to_vec(),
        stdout_file: REFERENCE_BYTES.as_bytes().to_vec(),
        answer_file: ANSWER_BYTES.as_bytes().to_vec(),
        judge: JudgeProgram::new(source, "python"),
        limits: ResourceLimits::judge_default(),
    };
    let v = sb.run_judge(&inv(&conformance_judge()));
    ensure!(v == JudgeVerdict::Accepted, "conformance judge: {v:?}");

    let exits = [(0, "accepted"), (1, "wrong_answer"), (2, "judge_error")];
    for (code, want) in exits {
        let v = sb.run_judge(&inv(&format!("import sys\nsys.exit({code})\n")));
        let got = match v {
            JudgeVerdict::Accepted => "accepted",
            JudgeVerdict::WrongAnswer => "wrong_answer",
            JudgeVerdict::JudgeError(_) => "judge_error",
        };
        ensure!(got == want, "exit {code}: {v:?}");
    }

    // the pipeline hands the participant's stdout to the judge unchanged
    let guest = fenced("bash", "printf '3 2 1\\r\\n  tail '");
    let mut request =
        SubmissionRequest::new("proto", &guest, "bash", vec![TestCase::stdin("t", STDIN_BYTES, REFERENCE_BYTES)]);
    request.special_judge = Some(JudgeProgram::new(conformance_judge(), "python"));
    let report = sb.evaluate(&request).map_err(|e| e.to_string())?;
    ensure!(report.accepted && report.per_test[0].stage == Stage::SpecialJudge, "pipeline: {:?}", report.per_test[0]);
    for (code, want) in [(1, Verdict::WrongAnswer), (2, Verdict::Error)] {
        request.special_judge = Some(JudgeProgram::new(format!("import sys\nsys.exit({code})\n"), "python"));
        let report = sb.evaluate(&request).map_err(|e| e.to_string())?;
        ensure!(report.per_test[0].verdict == want, "pipeline exit {code}: {:?}", report.per_test[0].verdict);
    }
    Ok("three files byte-exact; exits 0/1/2 map to accepted/wrong_answer/judge_error".into())
}

// ---------------------------------------------------------------------------
// hybrid parallelism

fn hybrid_parallelism() -> Outcome {
    let sb = sandbox();
    let runtime = sb.manifest().get("bash").ok_or("no bash runtime")?.clone();
    let tests: Vec<TestCase> = (0..8).map(|i| TestCase::stdin(format!("s{i}"), "", "")).collect();
    let request = SubmissionRequest::new("sleep", "", "bash", tests);
    let run = |width| {
        let t = Instant::now();
        let out = sb.engine().execute_suite(&request, "sleep 0.1\n", &runtime, width);
        (t.elapsed(), out)
    };
    run(8);
    let (wide, out) = run(8);
    ensure!(out.iter().all(|o| o.status == ExecStatus::Ok), "sleep failed: {:?}", out[0]);
    let (narrow, _) = run(1);
    ensure!(wide < Duration::from_millis(500), "width 8 took {wide:?}");
    ensure!(narrow > Duration::from_millis(800), "width 1 took {narrow:?}");
    Ok(format!("width 8: {} ms, width 1: {} ms", wide.as_millis(), narrow.as_millis()))
}

// ---------------------------------------------------------------------------
// cluster behaviour

fn stub_request(i: usize) -> SubmissionRequest {
    SubmissionRequest::new(format!("req-{i}"), fenced("python", "print(1)"), "python", vec![TestCase::stdin("t", "", "1")])
}

struct Sent {
    started: Instant,
    started_ms: u64,
    route: Vec<(String, String)>,
    result: Result<VerificationReport, String>,
}

/// Sends `total` requests from `clients` threads; `on_progress` sees the
/// completion count after every reply.
fn load(url: &str, total: usize, clients: usize, on_progress: impl Fn(usize) + Sync) -> Vec<Sent> {
    let client = GatewayClient::new(url);
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let out = Mutex::new(Vec::with_capacity(total));
    thread::scope(|s| {
        for _ in 0..clients {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= total {
                    break;
                }
                let (started, started_ms) = (Instant::now(), now_ms());
                let sent = match client.submit(&stub_request(i)) {
                    Ok(r) => Sent { started, started_ms, route: r.route, result: Ok(r.report) },
                    Err(e) => Sent { started, started_ms, route: vec![], result: Err(e.to_string()) },
                };
                out.lock().unwrap().push(sent);
                on_progress(done.fetch_add(1, Ordering::SeqCst) + 1);
            });
        }
    });
    out.into_inner().unwrap()
}

fn scaling() -> Outcome {
    const TASKS: usize = 2000;
    const DELAY_MS: u64 = 40;
    const SLOTS: usize = 4;
    let started = Instant::now();
    let workers: Vec<WorkerProc> = (0..3).map(|_| WorkerProc::synthetic(DELAY_MS, SLOTS)).collect();
    let mut throughput = Vec::new();
    for k in 1..=3 {
        let ids: Vec<String> = (0..k).map(|i| format!("w{i}")).collect();
        let nodes: Vec<(&str, &str)> = ids.iter().zip(&workers).map(|(id, w)| (id.as_str(), w.url.as_str())).collect();
        let gw = LocalGateway::start(&nodes, GatewayConfig::default());
        // every configuration sees the same offered load, enough to saturate three nodes
        let clients = 3 * SLOTS * 2;
        load(&gw.url, 2 * clients, clients, |_| {});
        let t = Instant::now();
        let sent = load(&gw.url, TASKS, clients, |_| {});
        let secs = t.elapsed().as_secs_f64();
        let failed = sent.iter().filter(|s| s.result.is_err()).count();
        ensure!(failed == 0, "{failed} requests failed with {k} workers");
        throughput.push(TASKS as f64 / secs);
    }
    let (r2, r3) = (throughput[1] / throughput[0], throughput[2] / throughput[0]);
    let elapsed = started.elapsed();
    let detail = format!(
        "{TASKS} tasks each: {:.1} / {:.1} / {:.1} tasks/s, x{r2:.2} and x{r3:.2}, {:.0} s total",
        throughput[0],
        throughput[1],
        throughput[2],
        elapsed.as_secs_f64()
    );
    ensure!(r2 >= 1.6 && r3 >= 2.2, "{detail}");
    ensure!(elapsed < Duration::from_secs(300), "{detail}");
    Ok(detail)
}

fn failover() -> Outcome {
    let mut workers: Vec<WorkerProc> = (0..3).map(|_| WorkerProc::synthetic(20, 4)).collect();
    let urls: Vec<String> = workers.iter().map(|w| w.url.clone()).collect();
    let gw = LocalGateway::start(
        &[("n0", &urls[0]), ("n1", &urls[1]), ("n2", &urls[2])],
        GatewayConfig { max_retries: 2, ..common::fast_probes() },
    );
    let victim = Mutex::new(Some(workers.remove(2)));
    let killed_at = Mutex::new(None);
    let sent = load(&gw.url, 300, 8, |done| {
        if done == 100 {
            if let Some(mut w) = victim.lock().unwrap().take() {
                w.kill();
                *killed_at.lock().unwrap() = Some(Instant::now());
            }
        }
    });
    let killed_at = killed_at.into_inner().unwrap().ok_or("victim was never killed")?;

    let errors: Vec<&String> = sent.iter().filter_map(|s| s.result.as_ref().err()).collect();
    ensure!(sent.len() == 300 && errors.is_empty(), "{} client-visible errors, first: {:?}", errors.len(), errors.first());
    ensure!(sent.iter().all(|s| s.result.as_ref().is_ok_and(|r| r.accepted)), "missing verdicts");

    let post_kill: Vec<&Sent> = sent.iter().filter(|s| s.started > killed_at).collect();
    let delivered = post_kill.iter().filter(|s| s.route.iter().any(|(n, o)| n == "n2" && o == "ok")).count();
    ensure!(delivered == 0, "{delivered} post-kill deliveries to the dead node");

    let marked = gw
        .gateway
        .registry()
        .transitions()
        .into_iter()
        .find(|t| t.node_id == "n2" && t.to == NodeState::Unhealthy)
        .ok_or("dead node never marked unhealthy")?;
    let after_mark: Vec<&Sent> = sent.iter().filter(|s| s.started_ms > marked.at + 1).collect();
    let attempts = after_mark.iter().filter(|s| s.route.iter().any(|(n, _)| n == "n2")).count();
    ensure!(attempts == 0, "{attempts} requests tried the dead node after it was marked unhealthy");
    let retried = sent.iter().filter(|s| s.route.iter().any(|(n, o)| n == "n2" && o != "ok")).count();
    Ok(format!(
        "300/300 verdicts, {retried} rerouted off the dead node, {} sent after the kill, 0 delivered to it",
        post_kill.len()
    ))
}

fn drain_safety() -> Outcome {
    let workers: Vec<WorkerProc> = (0..3).map(|_| WorkerProc::synthetic(50, 4)).collect();
    let gw = LocalGateway::start(
        &[("n0", &workers[0].url), ("n1", &workers[1].url), ("n2", &workers[2].url)],
        GatewayConfig::default(),
    );
    let admin = GatewayClient::new(&gw.url);
    let drained_at = Mutex::new(None);
    let in_flight_at_drain = AtomicUsize::new(0);
    let sent = load(&gw.url, 240, 12, |done| {
        if done == 60 {
            let target = WorkerClient::new(&workers[1].url);
            in_flight_at_drain.store(target.health().map(|s| s.in_flight).unwrap_or(0), Ordering::SeqCst);
            admin.drain("n1", false).expect("drain");
            *drained_at.lock().unwrap() = Some(Instant::now());
        }
    });
    let drained_at = drained_at.into_inner().unwrap().ok_or("drain never issued")?;
    ensure!(sent.iter().all(|s| s.result.as_ref().is_ok_and(|r| r.accepted)), "not every request completed");

    let after: Vec<&Sent> = sent.iter().filter(|s| s.started > drained_at).collect();
    let leaked = after.iter().filter(|s| s.route.iter().any(|(n, _)| n == "n1")).count();
    ensure!(leaked == 0, "{leaked} requests routed to the node after the drain returned");

    let routed_before = sent.iter().filter(|s| s.route.iter().any(|(n, o)| n == "n1" && o == "ok")).count() as u64;
    let status = WorkerClient::new(&workers[1].url).health().map_err(|e| e.to_string())?;
    ensure!(status.received_total == routed_before, "node saw {} requests, {routed_before} routed", status.received_total);
    ensure!(status.completed_total == status.received_total && status.in_flight == 0, "node not idle: {status:?}");
    Ok(format!(
        "{} in flight at drain completed, {} later requests all went elsewhere",
        in_flight_at_drain.load(Ordering::SeqCst),
        after.len()
    ))
}

// ---------------------------------------------------------------------------
// judge synthesis

const PERMUTATION_JUDGE: &str = r#"import sys

def read_file(filepath):
    with open(filepath, 'r') as f:
        return f.read().strip().split('\n')

def validate_solution(stdin_path, stdout_path, answer_path):
    stdin_lines = read_file(stdin_path)
    stdout_lines = read_file(stdout_path)
    participant_output = read_file(answer_path)
    if participant_output == [''] and stdout_lines != ['']:
        return False
    n = int(stdin_lines[0])
    try:
        values = sorted(int(x) for x in participant_output[0].split())
    except ValueError:
        return False
    return len(participant_output) == 1 and values == list(range(1, n + 1))

is_valid = validate_solution("stdin.txt", "stdout.txt", "answer.txt")
sys.exit(0 if is_valid else 1)
"#;

const REJECT_JUDGE: &str = "import sys\n# reads stdin.txt, stdout.txt, answer.txt\nsys.exit(1)\n";

fn permutation_problem() -> ProblemRecord {
    ProblemRecord {
        problem_id: "perm".into(),
        statement: "Given n, print any permutation of 1..n on one line. Any valid answer is accepted.".into(),
        reference_solution: fenced("python", "n = int(input())\nprint(*range(1, n + 1))"),
        guest_language: "python".into(),
        tests: vec![TestCase::stdin("n3", "3\n", "1 2 3\n"), TestCase::stdin("n4", "4\n", "1 2 3 4\n")],
        known_incorrect: None,
    }
}

fn multiple_solutions() -> Classification {
    Classification {
        reason: "any permutation is valid".into(),
        needs_special_judge: true,
        categories: vec![Category::MultipleSolutions],
        confidence: 0.95,
    }
}

fn synthesis_loop() -> Outcome {
    let sb = sandbox();
    let llm = ScriptedProvider::new([
        fenced("python", ACCEPT_JUDGE),
        fenced("python", REJECT_JUDGE),
        fenced("python", PERMUTATION_JUDGE),
    ]);
    let synth = Synthesizer::new(&llm, &sb, SynthConfig::default());
    let artifact = synth
        .validate_judge(&permutation_problem(), &multiple_solutions(), None)
        .map_err(|e| e.to_string())?;
    ensure!(artifact.status == ArtifactStatus::Validated, "status {:?}", artifact.status);
    ensure!(artifact.attempts_used == 3 && llm.calls() == 3, "attempts {}, calls {}", artifact.attempts_used, llm.calls());
    ensure!(artifact.judge.source.trim() == PERMUTATION_JUDGE.trim(), "kept the wrong judge");
    ensure!(artifact.validation_log.iter().all(|e| e.passed && e.attempt == 3), "final log not clean");
    let failed = |attempt| artifact.history.iter().filter(|e| e.attempt == attempt && !e.passed).map(|e| e.check).collect::<Vec<_>>();
    let (first, second) = (failed(1), failed(2));
    ensure!(first.contains(&CheckKind::Robustness), "always-accept judge not caught by robustness: {first:?}");
    ensure!(second.contains(&CheckKind::Fidelity), "always-reject judge not caught by fidelity: {second:?}");
    Ok("always-accept rejected (robustness), always-reject rejected (fidelity), permutation judge validated; attempts_used = 3".into())
}

/// Accepts n in-range integers on one line; never checks distinctness and
/// refuses answers spread over several lines.
const WEAK_JUDGE: &str = r#"import sys

def read_file(filepath):
    with open(filepath, 'r') as f:
        return f.read().strip().split('\n')

def validate_solution(stdin_path, stdout_path, answer_path):
    n = int(read_file(stdin_path)[0])
    lines = read_file(answer_path)
    if len(lines) != 1:
        return False
    tokens = lines[0].split()
    if len(tokens) != n:
        return False
    try:
        values = [int(t) for t in tokens]
    except ValueError:
        return False
    return all(1 <= v <= n for v in values)

is_valid = validate_solution("stdin.txt", "stdout.txt", "answer.txt")
sys.exit(0 if is_valid else 1)
"#;

fn fidelity_arithmetic() -> Outcome {
    // (solution body after `n = int(input())`, label, accepted by WEAK_JUDGE on both tests)
    let cases: [(&str, Label, bool); 20] = [
        ("print(*range(1, n + 1))", Label::Correct, true),
        ("print(*range(n, 0, -1))", Label::Correct, true),
        ("print(*(list(range(2, n + 1)) + [1]))", Label::Correct, true),
        ("print(*range(1, n + 1), end=' \\n')", Label::Correct, true),
        ("print(*sorted(range(1, n + 1), reverse=True))", Label::Correct, true),
        ("print(*([i for i in range(1, n + 1) if i % 2 == 0] + [i for i in range(1, n + 1) if i % 2]))", Label::Correct, true),
        ("print(*([i for i in range(1, n + 1) if i % 2] + [i for i in range(1, n + 1) if i % 2 == 0]))", Label::Correct, true),
        ("print(*([2, 1] + list(range(3, n + 1))))", Label::Correct, true),
        ("print(*range(1, n + 1), sep='\\n')", Label::Correct, false),
        ("print(*range(n, 0, -1), sep='\\n')", Label::Correct, false),
        ("print(*[1] * n)", Label::Incorrect, true),
        ("print(*[n] * n)", Label::Incorrect, true),
        ("print(*([1] + list(range(1, n))))", Label::Incorrect, true),
        ("print(*range(0, n))", Label::Incorrect, false),
        ("print(*range(1, n + 2))", Label::Incorrect, false),
        ("print(*range(1, n))", Label::Incorrect, false),
        ("print()", Label::Incorrect, false),
        ("print('hello')", Label::Incorrect, false),
        ("raise SystemExit(3)", Label::Incorrect, false),
        ("print(*range(2, n + 2))", Label::Incorrect, false),
    ];
    // hand count from the table: 8 of 10 correct accepted, 3 of 10 incorrect accepted
    let (tpr, tnr) = (8.0 / 10.0, 7.0 / 10.0);

    let labeled: Vec<LabeledSolution> = cases
        .iter()
        .map(|(body, label, _)| LabeledSolution {
            problem_id: "perm".into(),
            solution: fenced("python", &format!("n = int(input())\n{body}")),
            label: *label,
        })
        .collect();
    let artifact = JudgeArtifact {
        problem_id: "perm".into(),
        judge: JudgeProgram::new(WEAK_JUDGE, "python"),
        classification: multiple_solutions(),
        status: ArtifactStatus::Validated,
        attempts_used: 1,
        validation_log: vec![],
        history: vec![],
        generation_errors: vec![],
    };
    let sb = sandbox();
    let report = measure_fidelity("toy", &[artifact], &[permutation_problem()], &labeled, &sb).map_err(|e| e.to_string())?;

    // per-solution verdicts must match the table before the ratios mean anything
    for (i, (body, label, accept)) in cases.iter().enumerate() {
        let mut r = SubmissionRequest::new(format!("f{i}"), &labeled[i].solution, "python", permutation_problem().tests);
        r.special_judge = Some(JudgeProgram::new(WEAK_JUDGE, "python"));
        let got = sb.evaluate(&r).map_err(|e| e.to_string())?.accepted;
        ensure!(got == *accept, "{label:?} solution {body:?}: accepted = {got}");
    }
    ensure!((report.n_correct, report.n_incorrect) == (10, 10), "counts {} / {}", report.n_correct, report.n_incorrect);
    ensure!(report.tpr == Some(tpr) && report.tnr == Some(tnr), "tpr {:?} tnr {:?}", report.tpr, report.tnr);
    Ok(format!("TPR = 8/10 = {tpr}, TNR = 7/10 = {tnr}"))
}

// ---------------------------------------------------------------------------
// pass@1

const DATASET: &str = r#"{"problem_id":"double","prompt":"print 2n","tests":[{"id":"a","test_type":"stdin_stdout","input":"2","expected":"4"},{"id":"b","test_type":"stdin_stdout","input":"5","expected":"10"}]}
{"problem_id":"negate","prompt":"print -n","tests":[{"id":"a","test_type":"stdin_stdout","input":"2","expected":"-2"}]}
"#;

/// Serves `budget` requests, then reports no capacity.
struct Interrupting<'a> {
    inner: LocalDispatcher<'a>,
    served: AtomicUsize,
    budget: usize,
}

impl Dispatcher for Interrupting<'_> {
    fn dispatch_batch(&self, requests: &[SubmissionRequest]) -> Vec<Result<VerificationReport, DispatchError>> {
        requests
            .iter()
            .map(|r| {
                if self.served.fetch_add(1, Ordering::SeqCst) >= self.budget {
                    Err(DispatchError::NoCapacity("interrupted".into()))
                } else {
                    self.inner.dispatch_batch(std::slice::from_ref(r)).remove(0)
                }
            })
            .collect()
    }
}

fn pass_at_1() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("data.jsonl"), DATASET).map_err(|e| e.to_string())?;
    let config = BenchmarkConfig::parse(
        "name = \"toy\"\ndataset_path = \"data.jsonl\"\ntest_type = \"stdin_stdout\"\nguest_language = \"python\"\nsamples_per_problem = 4\nconcurrency = 1\nbatch_size = 2\n",
        dir.path(),
    )
    .map_err(|e| e.to_string())?;
    let dataset = load_dataset(&config).map_err(|e| e.to_string())?;
    let right = fenced("python", "print(int(input()) * 2)");
    let wrong = fenced("python", "print(int(input()))");
    let generations: Generations =
        BTreeMap::from([("double".to_string(), vec![right; 4]), ("negate".to_string(), vec![wrong; 4])]);

    // oracle: mean over problems of passed / samples
    let expected = (4.0 / 4.0 + 0.0 / 4.0) / 2.0;
    let sb = sandbox();
    let full = run_eval(&config, &dataset.entries, &generations, &LocalDispatcher(&sb), &RunOptions::default())
        .map_err(|e| e.to_string())?;
    ensure!(full.pass_at_1 == expected, "pass@1 = {}", full.pass_at_1);

    let checkpoint = dir.path().join("partial.jsonl");
    let opts = RunOptions { checkpoint: Some(checkpoint), resume: false, concurrency: None };
    let cut = Interrupting { inner: LocalDispatcher(&sb), served: AtomicUsize::new(0), budget: 3 };
    match run_eval(&config, &dataset.entries, &generations, &cut, &opts) {
        Err(EvalError::NoCapacity { completed: 3, total: 8 }) => {}
        other => return Err(format!("interrupted run: {other:?}")),
    }
    let rest = Interrupting { inner: LocalDispatcher(&sb), served: AtomicUsize::new(0), budget: usize::MAX };
    let resumed = run_eval(&config, &dataset.entries, &generations, &rest, &RunOptions { resume: true, ..opts })
        .map_err(|e| e.to_string())?;
    let reran = rest.served.load(Ordering::SeqCst);
    ensure!(reran == 5, "resume executed {reran} samples, expected 5");
    ensure!(resumed.same_scores(&full), "resumed {resumed:?} vs full {full:?}");
    ensure!(
        serde_json::to_value(&resumed.per_problem).ok() == serde_json::to_value(&full.per_problem).ok(),
        "per-problem scores differ"
    );
    Ok(format!("pass@1 = {:.2}; interrupted after 3/8, resume ran 5 and matched", resumed.pass_at_1))
}

// ---------------------------------------------------------------------------
// classification schema

fn classification_schema() -> Outcome {
    let replies: [(&str, bool); 20] = [
        (r#"{"reason":"any order","needs_special_judge":true,"categories":["multiple_solutions"],"confidence":0.9}"#, true),
        (r#"{"reason":"floats","needs_special_judge":true,"categories":["float_comparison"],"confidence":0.8}"#, true),
        (r#"{"reason":"both","needs_special_judge":true,"categories":["multiple_solutions","float_comparison"],"confidence":1.0}"#, true),
        (r#"{"reason":"unique answer","needs_special_judge":false,"categories":[],"confidence":0.99}"#, true),
        (r#"{"reason":"","needs_special_judge":false,"categories":[],"confidence":0.0}"#, true),
        ("```json\n{\"reason\":\"fenced\",\"needs_special_judge\":false,\"categories\":[],\"confidence\":0.7}\n```", true),
        ("  {\"confidence\":0.5,\"categories\":[\"float_comparison\"],\"needs_special_judge\":true,\"reason\":\"order\"}\n", true),
        (r#"{"reason":"tolerance needed","needs_special_judge":true,"categories":["float_comparison"],"confidence":0.61}"#, true),
        (r#"{"reason":"x","needs_special_judge":false,"categories":[],"confidence":0.9,"notes":"extra"}"#, false),
        (r#"{"reason":"x","needs_special_judge":true,"categories":["float_comparison"],"confidence":0.9,"judge":"..."}"#, false),
        (r#"{"reason":"x","needs_special_judge":true,"categories":["multiple_solutions"],"confidence":0.9,"category":"x"}"#, false),
        (r#"{"reason":"x","needs_special_judge":false,"categories":[],"confidence":0.9,"confidence_pct":90}"#, false),
        (r#"{"reason":"x","needs_special_judge":true,"categories":[],"confidence":0.9}"#, false),
        (r#"{"reason":"x","needs_special_judge":false,"categories":["multiple_solutions"],"confidence":0.9}"#, false),
        (r#"{"reason":"x","needs_special_judge":false,"categories":["float_comparison","multiple_solutions"],"confidence":0.4}"#, false),
        (r#"{"reason":"","needs_special_judge":true,"categories":[],"confidence":1.0}"#, false),
        ("The problem needs a special judge because many answers are valid.", false),
        (r#"{"reason":"cut off","needs_special_judge":tr"#, false),
        ("", false),
        ("reason: any order\nneeds_special_judge: true\ncategories: [multiple_solutions]\nconfidence: 0.9", false),
    ];
    let mut accepted = 0;
    for (i, (reply, valid)) in replies.iter().enumerate() {
        let parsed = parse_classification(reply);
        ensure!(parsed.is_ok() == *valid, "reply {i}: expected valid = {valid}, got {parsed:?}");
        accepted += usize::from(parsed.is_ok());
    }
    ensure!(accepted == 8, "{accepted} replies parsed");
    for (i, reply) in replies[12..16].iter().enumerate() {
        let err = parse_classification(reply.0).unwrap_err();
        ensure!(err.contains("iff"), "violator {i} rejected for another reason: {err}");
    }

    // the classifier re-asks once, then gives up
    let llm = ScriptedProvider::new([replies[12].0, replies[0].0]);
    let c = classify_problem("print any permutation", &llm).map_err(|e| e.to_string())?;
    ensure!(c.has(Category::MultipleSolutions) && llm.calls() == 2, "re-ask path: {c:?}");
    let llm = ScriptedProvider::new([replies[16].0, replies[8].0, replies[0].0]);
    let err = classify_problem("print any permutation", &llm);
    ensure!(matches!(err, Err(SynthError::ParseFailure(_))) && llm.calls() == 2, "second failure: {err:?}");
    Ok("8/20 valid replies parsed; extra keys, iff violations and non-JSON rejected".into())
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("verification properties", verification_properties),
        ("short-circuit guarantee", short_circuit),
        ("special-judge protocol", judge_protocol),
        ("hybrid parallelism", hybrid_parallelism),
        ("scaling", scaling),
        ("failover", failover),
        ("drain safety", drain_safety),
        ("synthesis loop", synthesis_loop),
        ("fidelity arithmetic", fidelity_arithmetic),
        ("pass@1 arithmetic", pass_at_1),
        ("classification schema", classification_schema),
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (name, _) in criteria {
            println!("{name}: test");
        }
        return;
    }
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
