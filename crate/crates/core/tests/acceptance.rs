//! Acceptance suite: every primary criterion at its stated tolerance, one
//! PASS/FAIL line each. Runs as a plain binary so the lines always print.

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ledgerair_core::consensus::{ClusterWorld, Fault, MessageMatch, QuorumConfig, TxStatus};
use ledgerair_core::contract::REJECTION_MESSAGE;
use ledgerair_core::gateway::{ApiRequest, AuthConfig, Gateway};
use ledgerair_core::ledger::encode_log;
use ledgerair_core::money::Money;
use ledgerair_core::platform::{BookingRequest, Mode, PaymentRequest, Platform, PlatformConfig};
use ledgerair_core::services::{GatewayOutcome, ServiceError, ServiceProjections};
use ledgerair_core::sim::{compare_modes, probe_log, run, MetricsReport, Scenario, SimRng};
use ledgerair_core::testkit::{fixture_author_keys, fixture_chain, fixture_workload};
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = Box<dyn FnOnce(&mut Runs) -> Outcome>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"));
    Scenario::load(&path).unwrap()
}

fn run_logged(s: &Scenario, dir: &Path, tag: &str) -> (MetricsReport, Vec<u8>) {
    let log = dir.join(format!("{}-{tag}.alrb", s.name));
    let report = run(s, (s.mode == Mode::Ledger).then_some(log.as_path())).unwrap();
    (report, std::fs::read(&log).unwrap_or_default())
}

fn tamper_evidence() -> Outcome {
    let started = Instant::now();
    let mut rng = SimRng::new(0x7A3B);
    let (mut probes, mut detected) = (0, 0);
    for (seed, blocks, per_block) in [(1, 6, 1), (2, 10, 3), (3, 16, 2), (4, 24, 4)] {
        let (chain, _, members) = fixture_chain(seed, blocks, per_block);
        let summary = probe_log(&encode_log(chain.blocks()), &members, 300, &mut rng).unwrap();
        probes += summary.probes;
        detected += summary.detected;
    }
    let elapsed = started.elapsed();
    ensure(
        probes >= 1000 && detected == probes && elapsed < Duration::from_secs(30),
        format!("{detected}/{probes} single-byte mutations reported at or below their height in {elapsed:.1?}"),
    )
}

fn random_fault(rng: &mut SimRng, n: usize) -> Fault {
    let node = rng.index(n);
    match rng.range(0, 3) {
        0 => Fault::Crash {
            node,
            at: rng.range(1, 150),
        },
        1 => Fault::Restart {
            node,
            at: rng.range(1, 250),
        },
        2 => Fault::Drop(MessageMatch {
            from: rng.chance(0.5).then(|| rng.index(n)),
            to: rng.chance(0.5).then(|| rng.index(n)),
            probability: Some(rng.range(5, 60) as f64 / 100.0),
            before: Some(200),
            ..Default::default()
        }),
        _ => {
            let from = rng.range(0, 100);
            let mut group: Vec<usize> = (0..n).filter(|_| rng.chance(0.4)).collect();
            if group.is_empty() || group.len() == n {
                group = vec![node];
            }
            Fault::Partition {
                group,
                from,
                to: from + rng.range(1, 100),
            }
        }
    }
}

fn consensus_safety_and_liveness() -> Outcome {
    let sizes = [3usize, 4, 5, 7];
    let mut rng = SimRng::new(0x5AFE);
    let plans = 120;
    for plan in 0..plans {
        let n = sizes[plan % sizes.len()];
        let seed = rng.range(0, u64::MAX - 1);
        let keys = fixture_author_keys(seed);
        let mut w = ClusterWorld::new(QuorumConfig::majority(n), seed, keys.clone()).unwrap();
        for _ in 0..rng.range(1, 6) {
            w.inject_fault(random_fault(&mut rng, n)).unwrap();
        }
        for tx in fixture_workload(&keys, 10) {
            w.submit(tx);
        }
        for _ in 0..300 {
            w.step();
            if let Err(v) = w.check_safety() {
                return Err(format!("plan {plan} (n={n}, seed {seed}): {v:?}"));
            }
        }
    }

    let mut checked = 0;
    for n in sizes {
        let config = QuorumConfig::majority(n);
        let per_block = config.vote_timeout + 8 * config.latency;
        for crashed in 0..=(n - config.quorum()) {
            let seed = rng.range(0, u64::MAX - 1);
            let keys = fixture_author_keys(seed);
            let mut w = ClusterWorld::new(config.clone(), seed, keys.clone()).unwrap();
            let mut down: Vec<usize> = (0..n).collect();
            while down.len() > crashed {
                down.remove(rng.index(down.len()));
            }
            for &node in &down {
                w.inject_fault(Fault::Crash {
                    node,
                    at: rng.range(1, 40),
                })
                .unwrap();
            }
            let txs = fixture_workload(&keys, 11);
            for tx in &txs {
                w.submit(tx.clone());
            }
            let budget = txs.len() as u64 * per_block * (crashed as u64 + 1);
            w.run(budget);
            let uncommitted = txs
                .iter()
                .filter(|t| !matches!(w.tx_status(&t.tx_id), Some(TxStatus::Committed { .. })))
                .count();
            if uncommitted > 0 {
                return Err(format!("n={n} with {crashed} crashed: {uncommitted} txs uncommitted after {budget} ticks"));
            }
            checked += 1;
        }
    }
    Ok(format!("{plans} random fault plans over n in {sizes:?} without conflicting commits; {checked} crash-tolerance runs committed within budget"))
}

struct Runs {
    dir: tempfile::TempDir,
    faults: Option<(MetricsReport, Vec<u8>)>,
}

fn availability(runs: &mut Runs) -> Outcome {
    let s = scenario("faults");
    let crashes = s
        .fault_plan
        .iter()
        .filter(|f| matches!(f, Fault::Crash { .. }))
        .count();
    let restarts = s
        .fault_plan
        .iter()
        .filter(|f| matches!(f, Fault::Restart { .. }))
        .count();
    let (report, log) = run_logged(&s, runs.dir.path(), "a");
    runs.faults = Some((report.clone(), log));
    ensure(
        crashes == 1
            && restarts == 1
            && report.submitted_txs >= 1000
            && report.committed_fraction >= 0.999,
        format!(
            "committed_fraction {:.4} over {} txs with one crash/restart (min node uptime {:.3})",
            report.committed_fraction,
            report.submitted_txs,
            report.node_uptime.iter().cloned().fold(1.0, f64::min)
        ),
    )
}

fn overbooking() -> Outcome {
    let s = scenario("stress");
    let capacity = s.seed_data.total_capacity();
    let per_flight_ok = s.workload.round_robin
        && s.seed_data.flights.iter().all(|f| {
            s.workload.bookings as u64 == 3 * f.capacity as u64 * s.seed_data.flights.len() as u64
        });
    let report = run(&s, None).unwrap();
    ensure(
        per_flight_ok && report.overbooking_violations == 0 && report.chain.confirmed() == capacity,
        format!(
            "{} attempts on {} seats: {} confirmed, {} rejected, {} capacity violations",
            report.workload.booking_attempts,
            capacity,
            report.chain.confirmed(),
            report.workload.bookings_rejected,
            report.overbooking_violations
        ),
    )
}

fn divergence_dominance() -> Outcome {
    let c = compare_modes(&scenario("compare")).unwrap();
    let reduction = c.reduction_pct.unwrap_or(0.0);
    ensure(
        c.ledger_divergence == 0 && reduction >= 30.0,
        format!(
            "ledger {} vs baseline {} mismatches; reduction {reduction:.1}%",
            c.ledger_divergence, c.baseline_divergence
        ),
    )
}

/// Random operation mix against one platform; calls `start` once before the
/// first operation and `after` with each operation's result.
fn random_session(
    seed: u64,
    ops: usize,
    start: impl FnOnce(&Platform),
    mut after: impl FnMut(&Platform, &Result<(), ServiceError>, usize),
) -> Platform {
    let mut rng = SimRng::new(seed);
    let script: Vec<GatewayOutcome> = (0..ops)
        .map(|_| match rng.range(0, 9) {
            0 | 1 => GatewayOutcome::Decline,
            2 => GatewayOutcome::Timeout,
            _ => GatewayOutcome::Approve,
        })
        .collect();
    let mut p = Platform::new(PlatformConfig {
        seed,
        cluster: QuorumConfig::majority([3, 4, 5][rng.index(3)]),
        payment_script: script,
        ..PlatformConfig::default()
    })
    .unwrap();
    let flights: Vec<String> = p
        .config()
        .seed_data
        .flights
        .iter()
        .map(|f| f.flight.clone())
        .chain(["ZZ999".into()])
        .collect();
    let mut pnrs: Vec<(String, Money)> = Vec::new();
    start(&p);
    for i in 0..ops {
        let known = (!pnrs.is_empty()).then(|| pnrs[rng.index(pnrs.len())].clone());
        let result = match (rng.range(0, 9), known) {
            (0..=3, _) | (_, None) => {
                let req = BookingRequest {
                    customer: format!("Customer {}", rng.range(0, 9)),
                    flight: flights[rng.index(flights.len())].clone(),
                    payment_method: "Credit Card".into(),
                };
                p.initiate_booking(&req).map(|c| pnrs.push((c.pnr, c.fare)))
            }
            (4..=5, Some((pnr, fare))) => {
                let amount = if rng.chance(0.8) {
                    fare
                } else {
                    Money(fare.minor() + 1)
                };
                let req = PaymentRequest {
                    pnr,
                    amount,
                    method: "Credit Card".into(),
                    payment_id: None,
                };
                p.capture_payment(&req).map(|_| ())
            }
            (6..=7, Some((pnr, _))) => p.cancel_booking(&pnr, Some(rng.range(0, 200))).map(|_| ()),
            (_, Some((pnr, _))) => p
                .submit_review(&pnr, rng.range(1, 5), "Random review")
                .map(|_| ()),
        };
        after(&p, &result, i);
    }
    p
}

fn rejection_notices(p: &Platform) -> usize {
    p.notifications(None)
        .iter()
        .filter(|n| n.message == REJECTION_MESSAGE)
        .count()
}

fn rejection_purity() -> Outcome {
    let (mut rejections, mut sessions) = (0, 0);
    for seed in 0..40u64 {
        let before = Cell::new((0usize, 0usize));
        let mut failure = None;
        let start = |p: &Platform| before.set((p.chain().tx_count(), rejection_notices(p)));
        let p = random_session(seed, 30, start, |p, result, i| {
            let now = (p.chain().tx_count(), rejection_notices(p));
            let rejected = matches!(result, Err(ServiceError::RejectedByContract { .. }));
            let prev = before.get();
            let writes_ok = !rejected || now.0 == prev.0;
            let notices_ok = now.1 == prev.1 + rejected as usize;
            if rejected {
                rejections += 1;
            }
            if failure.is_none() && !(writes_ok && notices_ok) {
                failure = Some(format!(
                    "seed {seed} op {i}: {result:?} moved chain {prev:?} -> {now:?}"
                ));
            }
            before.set(now);
        });
        if let Some(f) = failure {
            return Err(f);
        }
        let logged = p
            .contract_log()
            .iter()
            .filter(|c| c.rejection_notices > 0)
            .all(|c| c.ledger_writes == 0 && c.rejection_notices == 1);
        if !logged {
            return Err(format!(
                "seed {seed}: contract log shows a rejection with writes"
            ));
        }
        sessions += 1;
    }
    ensure(rejections > 0, format!("{rejections} rejections over {sessions} random sessions, each one notice and zero writes"))
}

fn oracle_equivalence() -> Outcome {
    let mut comparisons = 0;
    for seed in 100..200u64 {
        let mut mismatch = None;
        random_session(
            seed,
            24,
            |_| {},
            |p, _, i| {
                if i % 6 == 5 || i == 23 {
                    comparisons += 1;
                    let rebuilt = ServiceProjections::rebuild(p.chain()).unwrap();
                    if mismatch.is_none() && rebuilt != *p.projections() {
                        mismatch = Some(format!("seed {seed} after op {i}"));
                    }
                }
            },
        );
        if let Some(m) = mismatch {
            return Err(format!("incremental projections differ from rebuild: {m}"));
        }
    }
    Ok(format!(
        "100 seeds, {comparisons} checkpoints, incremental projections equal genesis rebuilds"
    ))
}

fn determinism(runs: &mut Runs) -> Outcome {
    let mut checked = Vec::new();
    let mut cases: Vec<Scenario> = ["smoke", "stress", "compare"]
        .into_iter()
        .map(scenario)
        .collect();
    cases.push(scenario("compare").with_mode(Mode::Baseline));
    for s in &cases {
        let (a, log_a) = run_logged(s, runs.dir.path(), "x");
        let (b, log_b) = run_logged(s, runs.dir.path(), "y");
        if a.to_json() != b.to_json() || a.chain.tip_hash != b.chain.tip_hash || log_a != log_b {
            return Err(format!("{} ({:?}) differs between runs", s.name, s.mode));
        }
        checked.push(format!("{}/{:?}", s.name, s.mode).to_lowercase());
    }
    let s = scenario("faults");
    let (again, log) = run_logged(&s, runs.dir.path(), "b");
    let (first, first_log) = runs
        .faults
        .take()
        .unwrap_or_else(|| run_logged(&s, runs.dir.path(), "a"));
    if first.to_json() != again.to_json() || first_log != log {
        return Err("faults differs between runs".into());
    }
    checked.push("faults/ledger".into());
    Ok(format!(
        "byte-identical reports, tip hashes and logs for {}",
        checked.join(", ")
    ))
}

fn end_to_end_api() -> Outcome {
    let g = Gateway::new(AuthConfig::new("c", "a"));
    let mut p = Platform::new(PlatformConfig {
        seed: 77,
        ..PlatformConfig::default()
    })
    .unwrap();
    let post = |g: &Gateway, p: &mut Platform, path: &str, body: Value| {
        g.handle(p, &ApiRequest::post(path, Some("c"), body))
    };
    let booked = post(
        &g,
        &mut p,
        "/v1/bookings",
        json!({ "customer": "Tania", "flight": "BG201", "payment_method": "Debit Card" }),
    );
    let pnr = booked.data()["pnr"]
        .as_str()
        .ok_or("booking failed")?
        .to_string();
    let fare = booked.data()["fare"].clone();
    let paid = post(
        &g,
        &mut p,
        "/v1/payments",
        json!({ "pnr": pnr, "amount": fare, "method": "Debit Card" }),
    );
    let cancelled = post(
        &g,
        &mut p,
        &format!("/v1/bookings/{pnr}/cancel"),
        json!({ "cancel_hour": 10 }),
    );
    let statuses = [booked.status, paid.status, cancelled.status];
    if statuses != [201, 201, 200] {
        return Err(format!("statuses {statuses:?}"));
    }
    let refund = cancelled.data()["records"]
        .as_array()
        .and_then(|r| r.iter().find(|c| c["kind"] == "RefundIssued"))
        .ok_or("no refund record")?;
    let mut refs: Vec<(String, u64, String)> = [booked.data(), paid.data(), cancelled.data()]
        .iter()
        .map(|d| {
            (
                d["tx_id"].as_str().unwrap_or("").to_string(),
                d["block_height"].as_u64().unwrap_or(0),
                d["block_hash"].as_str().unwrap_or("").to_string(),
            )
        })
        .collect();
    refs.push((
        refund["tx_id"].as_str().unwrap_or("").into(),
        refund["height"].as_u64().unwrap_or(0),
        refund["block_hash"].as_str().unwrap_or("").into(),
    ));
    let resolvable = refs.iter().all(|(tx, h, hash)| {
        p.chain()
            .block(*h)
            .is_some_and(|b| &b.block_hash == hash && b.transactions.iter().any(|t| &t.tx_id == tx))
    });
    let history = g.handle(
        &mut p,
        &ApiRequest::get(&format!("/v1/bookings/{pnr}/history"), Some("c")),
    );
    let events = history.data()["history"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    let kinds: Vec<&str> = events.iter().filter_map(|e| e["kind"].as_str()).collect();
    let order: Vec<(u64, u64)> = events
        .iter()
        .map(|e| {
            (
                e["height"].as_u64().unwrap_or(0),
                e["index"].as_u64().unwrap_or(0),
            )
        })
        .collect();
    let ids: Vec<&str> = events.iter().filter_map(|e| e["tx_id"].as_str()).collect();
    let same_refs = refs.iter().map(|r| r.0.as_str()).collect::<Vec<_>>() == ids;
    let audit = g.handle(
        &mut p,
        &ApiRequest::get(&format!("/v1/admin/audit?pnr={pnr}"), Some("a")),
    );
    let audit_ids: Vec<&str> = audit.data()["events"]
        .as_array()
        .map(|e| e.iter().filter_map(|e| e["tx_id"].as_str()).collect())
        .unwrap_or_default();
    let audit_ok = audit.status == 200 && audit_ids == ids;
    ensure(
        resolvable
            && kinds
                == [
                    "TicketIssued",
                    "PaymentCaptured",
                    "BookingCancelled",
                    "RefundIssued",
                ]
            && order.windows(2).all(|w| w[0] < w[1])
            && same_refs
            && audit_ok,
        format!(
            "4 resolvable (tx_id, height) pairs at heights {:?}; history and audit {kinds:?}",
            refs.iter().map(|r| r.1).collect::<Vec<_>>()
        ),
    )
}

fn main() -> ExitCode {
    let mut runs = Runs {
        dir: tempfile::tempdir().unwrap(),
        faults: None,
    };
    let criteria: Vec<(&str, Criterion)> = vec![
        ("tamper evidence", Box::new(|_| tamper_evidence())),
        (
            "consensus safety and liveness",
            Box::new(|_| consensus_safety_and_liveness()),
        ),
        ("availability bound", Box::new(availability)),
        ("overbooking safety", Box::new(|_| overbooking())),
        ("divergence dominance", Box::new(|_| divergence_dominance())),
        ("rejection purity", Box::new(|_| rejection_purity())),
        ("oracle equivalence", Box::new(|_| oracle_equivalence())),
        ("determinism", Box::new(determinism)),
        ("end-to-end API", Box::new(|_| end_to_end_api())),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut runs))).unwrap_or_else(|e| {
            Err(format!(
                "panicked: {}",
                e.downcast_ref::<String>()
                    .cloned()
                    .unwrap_or_else(|| format!("{:?}", e.downcast_ref::<&str>()))
            ))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
