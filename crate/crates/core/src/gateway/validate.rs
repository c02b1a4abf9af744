use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::services::is_pnr;

/// One rejected field and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    pub fields: Vec<FieldError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// Non-blank string of at most `max` characters.
    Text {
        max: usize,
    },
    Pnr,
    /// Unsigned integer in `min..=max`.
    Integer {
        min: u64,
        max: u64,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct FieldRule {
    pub name: &'static str,
    pub kind: FieldKind,
    pub required: bool,
}

const fn req(name: &'static str, kind: FieldKind) -> FieldRule {
    FieldRule {
        name,
        kind,
        required: true,
    }
}

const fn opt(name: &'static str, kind: FieldKind) -> FieldRule {
    FieldRule {
        name,
        kind,
        required: false,
    }
}

const NAME: FieldKind = FieldKind::Text { max: 120 };
const HOURS: FieldKind = FieldKind::Integer {
    min: 0,
    max: 1_000_000,
};

pub const BOOKING: &[FieldRule] = &[
    req("customer", NAME),
    req("flight", NAME),
    req("payment_method", NAME),
];
pub const PAYMENT: &[FieldRule] = &[
    req("pnr", FieldKind::Pnr),
    req(
        "amount",
        FieldKind::Integer {
            min: 1,
            max: u64::MAX,
        },
    ),
    req("method", NAME),
    opt("payment_id", NAME),
];
pub const CANCEL: &[FieldRule] = &[opt("cancel_hour", HOURS)];
pub const REVIEW: &[FieldRule] = &[
    req("pnr", FieldKind::Pnr),
    req("rating", FieldKind::Integer { min: 1, max: 5 }),
    req("text", FieldKind::Text { max: 2000 }),
];
pub const FLIGHT_QUERY: &[FieldRule] = &[opt("route", NAME), opt("day", HOURS)];
pub const AUDIT_QUERY: &[FieldRule] = &[
    opt("pnr", FieldKind::Pnr),
    opt("customer", NAME),
    opt("flight", NAME),
    opt("kind", NAME),
    opt("from", HOURS),
    opt("to", HOURS),
];
pub const NOTIFICATION_QUERY: &[FieldRule] = &[opt("recipient", NAME)];

fn check(kind: FieldKind, v: &Value) -> Result<(), String> {
    match kind {
        FieldKind::Text { max } => match v.as_str() {
            Some(s) if s.trim().is_empty() => Err("must not be blank".into()),
            Some(s) if s.chars().count() > max => Err(format!("longer than {max} characters")),
            Some(_) => Ok(()),
            None => Err("must be a string".into()),
        },
        FieldKind::Pnr => match v.as_str() {
            Some(s) if is_pnr(s) => Ok(()),
            _ => Err("must be a 6-character record locator".into()),
        },
        FieldKind::Integer { min, max } => match v.as_u64() {
            Some(n) if (min..=max).contains(&n) => Ok(()),
            Some(_) => Err(format!("must be between {min} and {max}")),
            None => Err("must be a non-negative integer".into()),
        },
    }
}

/// Type, range and presence checks of a JSON object body.
pub fn validate_input(body: &Value, schema: &[FieldRule]) -> Result<(), ValidationError> {
    let empty = serde_json::Map::new();
    let Some(obj) = body.as_object().or(body.is_null().then_some(&empty)) else {
        let field = FieldError {
            field: "body".into(),
            reason: "must be a JSON object".into(),
        };
        return Err(ValidationError {
            fields: vec![field],
        });
    };
    let mut fields = Vec::new();
    for rule in schema {
        match obj.get(rule.name) {
            None | Some(Value::Null) if rule.required => fields.push(FieldError {
                field: rule.name.into(),
                reason: "is required".into(),
            }),
            None | Some(Value::Null) => {}
            Some(v) => {
                if let Err(reason) = check(rule.kind, v) {
                    fields.push(FieldError {
                        field: rule.name.into(),
                        reason,
                    });
                }
            }
        }
    }
    if fields.is_empty() {
        Ok(())
    } else {
        Err(ValidationError { fields })
    }
}

/// Query parameters as a JSON object, with integer-typed fields parsed.
pub fn query_object(query: &BTreeMap<String, String>, schema: &[FieldRule]) -> Value {
    let mut obj = serde_json::Map::new();
    for (k, v) in query {
        let integer = schema
            .iter()
            .any(|r| r.name == k && matches!(r.kind, FieldKind::Integer { .. }));
        let value = match (integer, v.parse::<u64>()) {
            (true, Ok(n)) => Value::from(n),
            _ => Value::from(v.clone()),
        };
        obj.insert(k.clone(), value);
    }
    Value::Object(obj)
}
