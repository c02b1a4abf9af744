//! HTTP/JSON edge: authentication, input validation and routing onto the
//! platform. Transport-free; a server only converts to and from
//! [`ApiRequest`] and [`ApiResponse`].

mod validate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use validate::{
    query_object, validate_input, FieldError, FieldKind, FieldRule, ValidationError,
};

use crate::contract::{ContractError, REJECTION_MESSAGE};
use crate::ledger::{HistoryFilter, TxKind, Verdict};
use crate::money::Money;
use crate::platform::{BookingRequest, PaymentRequest, Platform};
use crate::services::ServiceError;

pub const CUSTOMER_TOKEN_ENV: &str = "LEDGERAIR_TOKEN_CUSTOMER";
pub const ADMIN_TOKEN_ENV: &str = "LEDGERAIR_TOKEN_ADMIN";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiRequest {
    pub method: String,
    /// Path with optional query string, with or without the `/v1` prefix.
    pub path: String,
    /// Bearer token.
    pub token: Option<String>,
    #[serde(default)]
    pub body: Value,
}

impl ApiRequest {
    pub fn new(method: &str, path: &str, token: Option<&str>, body: Value) -> Self {
        ApiRequest {
            method: method.to_string(),
            path: path.to_string(),
            token: token.map(str::to_string),
            body,
        }
    }

    pub fn get(path: &str, token: Option<&str>) -> Self {
        ApiRequest::new("GET", path, token, Value::Null)
    }

    pub fn post(path: &str, token: Option<&str>, body: Value) -> Self {
        ApiRequest::new("POST", path, token, body)
    }

    /// Builds a request from raw HTTP parts. A body that is not JSON yields
    /// the 400 response to send back instead.
    pub fn from_http(
        method: &str,
        url: &str,
        authorization: Option<&str>,
        body: &[u8],
    ) -> Result<Self, ApiResponse> {
        let token = authorization
            .and_then(|h| h.trim().strip_prefix("Bearer "))
            .map(str::trim);
        let body = if body.iter().all(u8::is_ascii_whitespace) {
            Value::Null
        } else {
            serde_json::from_slice(body).map_err(|e| {
                let field = FieldError {
                    field: "body".into(),
                    reason: format!("invalid JSON: {e}"),
                };
                ApiResponse::error(
                    400,
                    "VALIDATION",
                    "request body is not valid JSON",
                    json!({ "fields": [field] }),
                )
            })?
        };
        Ok(ApiRequest::new(
            &method.to_ascii_uppercase(),
            url,
            token,
            body,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl ApiResponse {
    fn ok(status: u16, data: Value) -> Self {
        ApiResponse {
            status,
            body: json!({ "ok": true, "data": data }),
        }
    }

    pub fn error(status: u16, code: &str, message: &str, details: Value) -> Self {
        let mut error = json!({ "code": code, "message": message });
        if !details.is_null() {
            error["details"] = details;
        }
        ApiResponse {
            status,
            body: json!({ "ok": false, "error": error }),
        }
    }

    pub fn data(&self) -> &Value {
        &self.body["data"]
    }

    pub fn error_code(&self) -> Option<&str> {
        self.body["error"]["code"].as_str()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Customer,
    Admin,
}

/// Static bearer tokens for the two roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthConfig {
    pub customer_token: String,
    pub admin_token: String,
}

impl AuthConfig {
    pub fn new(customer_token: impl Into<String>, admin_token: impl Into<String>) -> Self {
        AuthConfig {
            customer_token: customer_token.into(),
            admin_token: admin_token.into(),
        }
    }

    /// Tokens from the environment, or `None` for any that is unset.
    pub fn from_env() -> (Option<String>, Option<String>) {
        (
            std::env::var(CUSTOMER_TOKEN_ENV).ok(),
            std::env::var(ADMIN_TOKEN_ENV).ok(),
        )
    }

    pub fn role(&self, token: Option<&str>) -> Option<Role> {
        match token {
            Some(t) if !t.is_empty() && t == self.admin_token => Some(Role::Admin),
            Some(t) if !t.is_empty() && t == self.customer_token => Some(Role::Customer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Route {
    Flights,
    CreateBooking,
    Payments,
    Cancel(String),
    Reviews,
    Booking(String),
    History(String),
    Verify,
    Notifications,
    AdminNodes,
    AdminAudit,
    AdminMetrics,
}

impl Route {
    fn parse(method: &str, path: &str) -> Option<Route> {
        let path = path
            .strip_prefix("/v1")
            .filter(|p| p.is_empty() || p.starts_with('/'))
            .unwrap_or(path);
        let parts: Vec<&str> = path.trim_end_matches('/').split('/').skip(1).collect();
        Some(match (method, parts.as_slice()) {
            ("GET", ["flights"]) => Route::Flights,
            ("POST", ["bookings"]) => Route::CreateBooking,
            ("POST", ["payments"]) => Route::Payments,
            ("POST", ["bookings", pnr, "cancel"]) => Route::Cancel(pnr.to_string()),
            ("POST", ["reviews"]) => Route::Reviews,
            ("GET", ["bookings", pnr]) => Route::Booking(pnr.to_string()),
            ("GET", ["bookings", pnr, "history"]) => Route::History(pnr.to_string()),
            ("GET", ["chain", "verify"]) => Route::Verify,
            ("GET", ["notifications"]) => Route::Notifications,
            ("GET", ["admin", "nodes"]) => Route::AdminNodes,
            ("GET", ["admin", "audit"]) => Route::AdminAudit,
            ("GET", ["admin", "metrics"]) => Route::AdminMetrics,
            _ => return None,
        })
    }

    fn min_role(&self) -> Role {
        match self {
            Route::AdminNodes | Route::AdminAudit | Route::AdminMetrics => Role::Admin,
            _ => Role::Customer,
        }
    }

    fn schema(&self) -> &'static [FieldRule] {
        match self {
            Route::Flights => validate::FLIGHT_QUERY,
            Route::CreateBooking => validate::BOOKING,
            Route::Payments => validate::PAYMENT,
            Route::Cancel(_) => validate::CANCEL,
            Route::Reviews => validate::REVIEW,
            Route::AdminAudit => validate::AUDIT_QUERY,
            Route::Notifications => validate::NOTIFICATION_QUERY,
            _ => &[],
        }
    }
}

fn split_query(path: &str) -> (&str, BTreeMap<String, String>) {
    match path.split_once('?') {
        Some((p, q)) => (
            p,
            form_urlencoded::parse(q.as_bytes()).into_owned().collect(),
        ),
        None => (path, BTreeMap::new()),
    }
}

fn service_error(e: ServiceError) -> ApiResponse {
    match e {
        ServiceError::RejectedByContract { reasons } => ApiResponse::error(
            409,
            "CONTRACT_REJECTED",
            REJECTION_MESSAGE,
            json!({ "reasons": reasons }),
        ),
        ServiceError::UnknownPnr(pnr) => ApiResponse::error(
            404,
            "UNKNOWN_PNR",
            &format!("unknown pnr {pnr}"),
            Value::Null,
        ),
        ServiceError::NotCancellable(status) => ApiResponse::error(
            409,
            "NOT_CANCELLABLE",
            &format!("booking in status {status:?} cannot be cancelled"),
            json!({ "status": status }),
        ),
        ServiceError::GatewayTimeout { payment_id } => ApiResponse::error(
            503,
            "GATEWAY_TIMEOUT",
            "payment gateway timed out; retry with the same payment_id",
            json!({ "payment_id": payment_id }),
        ),
        ServiceError::Contract(ContractError::InvalidPolicy(m)) => {
            ApiResponse::error(422, "INVALID_POLICY", &m, Value::Null)
        }
        ServiceError::Contract(ContractError::SchemaViolation(field)) => ApiResponse::error(
            400,
            "VALIDATION",
            "invalid input",
            json!({ "fields": [FieldError { field, reason: "is missing or malformed".into() }] }),
        ),
        ServiceError::Ledger(_) => ApiResponse::error(
            503,
            "LEDGER_UNAVAILABLE",
            "ledger did not commit the request",
            Value::Null,
        ),
        _ => ApiResponse::error(500, "INTERNAL", "internal error", Value::Null),
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("response types serialize")
}

fn text(body: &Value, field: &str) -> String {
    body[field].as_str().unwrap_or_default().to_string()
}

/// Stateless request handler: the response depends only on the request and
/// the platform state.
#[derive(Debug, Clone)]
pub struct Gateway {
    auth: AuthConfig,
}

impl Gateway {
    pub fn new(auth: AuthConfig) -> Self {
        Gateway { auth }
    }

    pub fn handle(&self, platform: &mut Platform, req: &ApiRequest) -> ApiResponse {
        let (path, query) = split_query(&req.path);
        let Some(route) = Route::parse(&req.method, path) else {
            return ApiResponse::error(
                404,
                "UNKNOWN_ROUTE",
                &format!("no route for {} {path}", req.method),
                Value::Null,
            );
        };
        let Some(role) = self.auth.role(req.token.as_deref()) else {
            return ApiResponse::error(
                401,
                "UNAUTHENTICATED",
                "missing or unknown bearer token",
                Value::Null,
            );
        };
        if role < route.min_role() {
            return ApiResponse::error(403, "FORBIDDEN", "admin token required", Value::Null);
        }
        let input = if req.method == "GET" {
            query_object(&query, route.schema())
        } else {
            req.body.clone()
        };
        if let Err(v) = validate_input(&input, route.schema()) {
            return ApiResponse::error(
                400,
                "VALIDATION",
                "invalid input",
                json!({ "fields": v.fields }),
            );
        }
        if let Route::Cancel(pnr) | Route::Booking(pnr) | Route::History(pnr) = &route {
            if !crate::services::is_pnr(pnr) {
                let field = FieldError {
                    field: "pnr".into(),
                    reason: "must be a 6-character record locator".into(),
                };
                return ApiResponse::error(
                    400,
                    "VALIDATION",
                    "invalid input",
                    json!({ "fields": [field] }),
                );
            }
        }
        match self.dispatch(platform, route, role, &input) {
            Ok(r) => r,
            Err(e) => service_error(e),
        }
    }

    fn dispatch(
        &self,
        p: &mut Platform,
        route: Route,
        role: Role,
        input: &Value,
    ) -> Result<ApiResponse, ServiceError> {
        Ok(match route {
            Route::Flights => {
                let flights = p.search_flights(input["route"].as_str(), input["day"].as_u64())?;
                ApiResponse::ok(200, json!({ "flights": to_json(&flights) }))
            }
            Route::CreateBooking => {
                let req = BookingRequest {
                    customer: text(input, "customer"),
                    flight: text(input, "flight"),
                    payment_method: text(input, "payment_method"),
                };
                ApiResponse::ok(201, to_json(&p.initiate_booking(&req)?))
            }
            Route::Payments => {
                let req = PaymentRequest {
                    pnr: text(input, "pnr"),
                    amount: Money(input["amount"].as_u64().unwrap_or_default()),
                    method: text(input, "method"),
                    payment_id: input["payment_id"].as_str().map(str::to_string),
                };
                let receipt = p.capture_payment(&req)?;
                let status = if receipt.replayed { 200 } else { 201 };
                let mut data = to_json(&receipt.payment);
                for (k, v) in [
                    ("tx_id", json!(receipt.tx_id)),
                    ("block_height", json!(receipt.block_height)),
                    ("block_hash", json!(receipt.block_hash)),
                    ("replayed", json!(receipt.replayed)),
                ] {
                    data[k] = v;
                }
                ApiResponse::ok(status, data)
            }
            Route::Cancel(pnr) => ApiResponse::ok(
                200,
                to_json(&p.cancel_booking(&pnr, input["cancel_hour"].as_u64())?),
            ),
            Route::Reviews => {
                let receipt = p.submit_review(
                    &text(input, "pnr"),
                    input["rating"].as_u64().unwrap_or_default(),
                    &text(input, "text"),
                )?;
                let mut data = to_json(&receipt.review);
                data["tx_id"] = json!(receipt.tx_id);
                data["block_height"] = json!(receipt.block_height);
                data["block_hash"] = json!(receipt.block_hash);
                ApiResponse::ok(201, data)
            }
            Route::Booking(pnr) => ApiResponse::ok(200, to_json(&p.booking(&pnr)?)),
            Route::History(pnr) => {
                let history = p.history(&pnr)?;
                ApiResponse::ok(200, json!({ "pnr": pnr, "history": to_json(&history) }))
            }
            Route::Verify => {
                let check = p.verify()?;
                let mut data = match check.verdict {
                    Verdict::Ok => json!({ "valid": true }),
                    Verdict::Invalid { height, reason } => {
                        json!({ "valid": false, "height": height, "reason": reason })
                    }
                };
                if role == Role::Admin {
                    data["chain_height"] = json!(check.height);
                    data["tip_hash"] = json!(check.tip_hash);
                    data["source"] = json!(check.source);
                }
                ApiResponse::ok(200, data)
            }
            Route::Notifications => {
                let list = p.notifications(input["recipient"].as_str());
                ApiResponse::ok(200, json!({ "notifications": to_json(&list) }))
            }
            Route::AdminNodes => ApiResponse::ok(200, json!({ "nodes": to_json(&p.nodes()?) })),
            Route::AdminAudit => {
                let kind = match input["kind"].as_str() {
                    Some(k) => match TxKind::parse(k) {
                        Some(kind) => Some(kind),
                        None => {
                            let field = FieldError {
                                field: "kind".into(),
                                reason: "unknown transaction kind".into(),
                            };
                            return Ok(ApiResponse::error(
                                400,
                                "VALIDATION",
                                "invalid input",
                                json!({ "fields": [field] }),
                            ));
                        }
                    },
                    None => None,
                };
                let time_range = match (input["from"].as_u64(), input["to"].as_u64()) {
                    (None, None) => None,
                    (lo, hi) => Some((lo.unwrap_or(0), hi.unwrap_or(u64::MAX))),
                };
                let filter = HistoryFilter {
                    pnr: input["pnr"].as_str().map(str::to_string),
                    customer: input["customer"].as_str().map(str::to_string),
                    flight: input["flight"].as_str().map(str::to_string),
                    kind,
                    time_range,
                };
                ApiResponse::ok(200, json!({ "events": to_json(&p.audit(&filter)?) }))
            }
            Route::AdminMetrics => ApiResponse::ok(200, to_json(&p.metrics()?)),
        })
    }
}
