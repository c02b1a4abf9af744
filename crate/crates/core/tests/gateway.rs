use ledgerair_core::gateway::{ApiRequest, ApiResponse, AuthConfig, Gateway};
use ledgerair_core::platform::{Platform, PlatformConfig};
use ledgerair_core::services::GatewayOutcome;
use serde_json::{json, Value};

const CUSTOMER: Option<&str> = Some("cust-secret");
const ADMIN: Option<&str> = Some("admin-secret");

fn setup(script: Vec<GatewayOutcome>) -> (Gateway, Platform) {
    let gateway = Gateway::new(AuthConfig::new("cust-secret", "admin-secret"));
    let platform = Platform::new(PlatformConfig {
        seed: 11,
        payment_script: script,
        ..PlatformConfig::default()
    })
    .unwrap();
    (gateway, platform)
}

fn booking_body() -> Value {
    json!({ "customer": "Nadia", "flight": "BG147", "payment_method": "Credit Card" })
}

fn field_names(r: &ApiResponse) -> Vec<String> {
    r.body["error"]["details"]["fields"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["field"].as_str().unwrap().to_string())
        .collect()
}

/// The (tx_id, height) pair names a transaction in that committed block.
fn resolvable(p: &Platform, data: &Value) -> bool {
    let height = data["block_height"].as_u64().unwrap();
    let tx_id = data["tx_id"].as_str().unwrap();
    p.chain().block(height).is_some_and(|b| {
        b.block_hash == data["block_hash"].as_str().unwrap()
            && b.transactions.iter().any(|t| t.tx_id == tx_id)
    })
}

#[test]
fn missing_flight_is_rejected_before_any_service_call() {
    let (g, mut p) = setup(vec![]);
    let calls = p.service_calls();
    let r = g.handle(
        &mut p,
        &ApiRequest::post(
            "/v1/bookings",
            CUSTOMER,
            json!({ "customer": "Nadia", "payment_method": "Cash" }),
        ),
    );
    assert_eq!(r.status, 400);
    assert_eq!(r.error_code(), Some("VALIDATION"));
    assert_eq!(field_names(&r), ["flight"]);
    assert_eq!(p.service_calls(), calls);
}

#[test]
fn rating_outside_range_is_a_validation_error() {
    let (g, mut p) = setup(vec![]);
    let calls = p.service_calls();
    let r = g.handle(
        &mut p,
        &ApiRequest::post(
            "/v1/reviews",
            CUSTOMER,
            json!({ "pnr": "ABC123", "rating": 7, "text": "hi" }),
        ),
    );
    assert_eq!(r.status, 400);
    assert_eq!(field_names(&r), ["rating"]);
    assert_eq!(p.service_calls(), calls);
}

#[test]
fn booking_happy_path_returns_ledger_reference() {
    let (g, mut p) = setup(vec![]);
    let r = g.handle(
        &mut p,
        &ApiRequest::post("/v1/bookings", CUSTOMER, booking_body()),
    );
    assert_eq!(r.status, 201);
    assert_eq!(r.body["ok"], true);
    let data = r.data();
    assert_eq!(data["pnr"].as_str().unwrap().len(), 6);
    assert_eq!(data["status"], "Confirmed");
    assert!(resolvable(&p, data));
}

#[test]
fn prefix_is_optional_and_unknown_routes_are_404() {
    let (g, mut p) = setup(vec![]);
    assert_eq!(
        g.handle(&mut p, &ApiRequest::get("/flights", CUSTOMER))
            .status,
        200
    );
    assert_eq!(
        g.handle(
            &mut p,
            &ApiRequest::get("/v1/flights?route=DAC%20to%20CGP", CUSTOMER)
        )
        .data()["flights"]
            .as_array()
            .unwrap()
            .len(),
        2
    );
    let r = g.handle(&mut p, &ApiRequest::get("/v1/seats", CUSTOMER));
    assert_eq!((r.status, r.error_code()), (404, Some("UNKNOWN_ROUTE")));
    let r = g.handle(
        &mut p,
        &ApiRequest::new("DELETE", "/v1/bookings", CUSTOMER, Value::Null),
    );
    assert_eq!(r.status, 404);
}

#[test]
fn tokens_gate_customer_and_admin_routes() {
    let (g, mut p) = setup(vec![]);
    let r = g.handle(&mut p, &ApiRequest::get("/v1/flights", None));
    assert_eq!((r.status, r.error_code()), (401, Some("UNAUTHENTICATED")));
    let r = g.handle(&mut p, &ApiRequest::get("/v1/flights", Some("guess")));
    assert_eq!(r.status, 401);
    let r = g.handle(&mut p, &ApiRequest::get("/v1/admin/nodes", CUSTOMER));
    assert_eq!((r.status, r.error_code()), (403, Some("FORBIDDEN")));
    assert!(p.quiesce(500).unwrap());
    let r = g.handle(&mut p, &ApiRequest::get("/v1/admin/nodes", ADMIN));
    assert_eq!(r.status, 200);
    let nodes = r.data()["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 4);
    assert!(nodes
        .iter()
        .all(|n| n["up"] == true && n["tip_hash"] == nodes[0]["tip_hash"]));
}

#[test]
fn unknown_history_is_empty() {
    let (g, mut p) = setup(vec![]);
    let r = g.handle(
        &mut p,
        &ApiRequest::get("/v1/bookings/ZZZZZZ/history", CUSTOMER),
    );
    assert_eq!(r.status, 200);
    assert_eq!(r.data()["history"], json!([]));
    let r = g.handle(&mut p, &ApiRequest::get("/v1/bookings/ZZZZZZ", CUSTOMER));
    assert_eq!((r.status, r.error_code()), (404, Some("UNKNOWN_PNR")));
}

#[test]
fn end_to_end_booking_payment_cancel_refund() {
    let (g, mut p) = setup(vec![]);
    let booked = g.handle(
        &mut p,
        &ApiRequest::post("/v1/bookings", CUSTOMER, booking_body()),
    );
    assert_eq!(booked.status, 201);
    let pnr = booked.data()["pnr"].as_str().unwrap().to_string();
    let paid = g.handle(
        &mut p,
        &ApiRequest::post(
            "/v1/payments",
            CUSTOMER,
            json!({ "pnr": pnr, "amount": 10000, "method": "Credit Card" }),
        ),
    );
    assert_eq!(paid.status, 201);
    assert_eq!(paid.data()["status"], "Captured");
    let cancelled = g.handle(
        &mut p,
        &ApiRequest::post(
            &format!("/v1/bookings/{pnr}/cancel"),
            CUSTOMER,
            json!({ "cancel_hour": 5 }),
        ),
    );
    assert_eq!(cancelled.status, 200);
    assert_eq!(cancelled.data()["status"], "Refunded");
    assert_eq!(cancelled.data()["refund_amount"], 8000);
    for data in [booked.data(), paid.data(), cancelled.data()] {
        assert!(resolvable(&p, data));
    }
    let refund = &cancelled.data()["records"][1];
    assert_eq!(refund["kind"], "RefundIssued");
    let refund_ref = json!({ "tx_id": refund["tx_id"], "block_height": refund["height"], "block_hash": refund["block_hash"] });
    assert!(resolvable(&p, &refund_ref));

    let history = g.handle(
        &mut p,
        &ApiRequest::get(&format!("/v1/bookings/{pnr}/history"), CUSTOMER),
    );
    let events = history.data()["history"].as_array().unwrap().clone();
    let kinds: Vec<&str> = events.iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert_eq!(
        kinds,
        [
            "TicketIssued",
            "PaymentCaptured",
            "BookingCancelled",
            "RefundIssued"
        ]
    );
    let heights: Vec<u64> = events
        .iter()
        .map(|e| e["height"].as_u64().unwrap())
        .collect();
    assert!(heights.windows(2).all(|w| w[0] <= w[1]));

    let again = g.handle(
        &mut p,
        &ApiRequest::post(&format!("/v1/bookings/{pnr}/cancel"), CUSTOMER, json!({})),
    );
    assert_eq!(
        (again.status, again.error_code()),
        (409, Some("NOT_CANCELLABLE"))
    );
    let booking = g.handle(
        &mut p,
        &ApiRequest::get(&format!("/v1/bookings/{pnr}"), CUSTOMER),
    );
    assert_eq!(booking.data()["status"], "Refunded");
}

#[test]
fn rejections_carry_the_contract_message_and_reasons() {
    let (g, mut p) = setup(vec![GatewayOutcome::Decline]);
    let r = g.handle(
        &mut p,
        &ApiRequest::post("/v1/bookings", CUSTOMER, booking_body()),
    );
    assert_eq!((r.status, r.error_code()), (409, Some("CONTRACT_REJECTED")));
    assert_eq!(
        r.body["error"]["message"],
        "Conditions not met for contract execution"
    );
    assert_eq!(
        r.body["error"]["details"]["reasons"],
        json!(["PaymentFailed"])
    );
    let notes = g.handle(
        &mut p,
        &ApiRequest::get("/v1/notifications?recipient=Nadia", CUSTOMER),
    );
    assert_eq!(notes.data()["notifications"].as_array().unwrap().len(), 1);
}

#[test]
fn gateway_timeout_is_retryable() {
    let (g, mut p) = setup(vec![GatewayOutcome::Approve, GatewayOutcome::Timeout]);
    let booked = g.handle(
        &mut p,
        &ApiRequest::post("/v1/bookings", CUSTOMER, booking_body()),
    );
    let pnr = booked.data()["pnr"].as_str().unwrap().to_string();
    let body =
        json!({ "pnr": pnr, "amount": 10000, "method": "Credit Card", "payment_id": "PAY-77" });
    let r = g.handle(
        &mut p,
        &ApiRequest::post("/v1/payments", CUSTOMER, body.clone()),
    );
    assert_eq!((r.status, r.error_code()), (503, Some("GATEWAY_TIMEOUT")));
    let first = g.handle(
        &mut p,
        &ApiRequest::post("/v1/payments", CUSTOMER, body.clone()),
    );
    let replay = g.handle(&mut p, &ApiRequest::post("/v1/payments", CUSTOMER, body));
    assert_eq!((first.status, replay.status), (201, 200));
    assert_eq!(first.data()["tx_id"], replay.data()["tx_id"]);
}

#[test]
fn verify_reports_tampering_of_the_persisted_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("chain.alrb");
    let g = Gateway::new(AuthConfig::new("cust-secret", "admin-secret"));
    let mut p = Platform::with_log(
        PlatformConfig {
            seed: 11,
            ..PlatformConfig::default()
        },
        &log,
    )
    .unwrap();
    g.handle(
        &mut p,
        &ApiRequest::post("/v1/bookings", CUSTOMER, booking_body()),
    );
    let ok = g.handle(&mut p, &ApiRequest::get("/v1/chain/verify", ADMIN));
    assert_eq!(ok.data()["valid"], true);
    assert_eq!(ok.data()["source"], "log");

    let mut bytes = std::fs::read(&log).unwrap();
    let at = bytes.len() / 2;
    bytes[at] ^= 0x01;
    std::fs::write(&log, &bytes).unwrap();
    let bad = g.handle(&mut p, &ApiRequest::get("/v1/chain/verify", CUSTOMER));
    assert_eq!(bad.status, 200);
    assert_eq!(bad.data()["valid"], false);
    assert!(bad.data()["height"].as_u64().unwrap() <= p.chain().height());
    assert!(bad.data()["reason"].is_string());
    assert!(bad.data().get("tip_hash").is_none());
}

#[test]
fn admin_audit_filters_and_metrics() {
    let (g, mut p) = setup(vec![]);
    g.handle(
        &mut p,
        &ApiRequest::post("/v1/bookings", CUSTOMER, booking_body()),
    );
    let r = g.handle(
        &mut p,
        &ApiRequest::get("/v1/admin/audit?kind=TicketIssued&customer=Nadia", ADMIN),
    );
    assert_eq!(r.data()["events"].as_array().unwrap().len(), 1);
    let r = g.handle(
        &mut p,
        &ApiRequest::get("/v1/admin/audit?kind=Nonsense", ADMIN),
    );
    assert_eq!(r.status, 400);
    let m = g.handle(&mut p, &ApiRequest::get("/v1/admin/metrics", ADMIN));
    assert_eq!(m.data()["bookings_confirmed"], 1);
    assert_eq!(m.data()["divergence"]["field_mismatches"], 0);
    assert_eq!(m.data()["availability"]["committed_fraction"], 1.0);
}

#[test]
fn raw_http_parts_become_requests() {
    let req = ApiRequest::from_http(
        "post",
        "/v1/bookings",
        Some("Bearer cust-secret"),
        br#"{"flight":"BG147"}"#,
    )
    .unwrap();
    assert_eq!(req.method, "POST");
    assert_eq!(req.token.as_deref(), Some("cust-secret"));
    assert_eq!(req.body["flight"], "BG147");
    let empty = ApiRequest::from_http("GET", "/v1/flights", None, b"  ").unwrap();
    assert_eq!((empty.token, empty.body), (None, Value::Null));
    let bad = ApiRequest::from_http("POST", "/v1/bookings", None, b"{nope").unwrap_err();
    assert_eq!((bad.status, bad.error_code()), (400, Some("VALIDATION")));
    assert_eq!(field_names(&bad), ["body"]);
}
