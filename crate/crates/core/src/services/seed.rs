use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contract::{FlightInfo, RefundPolicy};
use crate::money::{Fraction, Money};

/// Flights opened on the ledger at start-up and refund terms per fare class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedData {
    pub flights: Vec<FlightInfo>,
    #[serde(default = "default_fare_classes")]
    pub fare_classes: BTreeMap<String, RefundPolicy>,
}

fn default_fare_classes() -> BTreeMap<String, RefundPolicy> {
    let policy = |hours, bp| RefundPolicy {
        window_hours: hours,
        fee_fraction: Fraction::from_basis_points(bp).unwrap(),
    };
    BTreeMap::from([
        ("Y".to_string(), policy(24, 2000)),
        ("J".to_string(), policy(12, 500)),
    ])
}

impl SeedData {
    /// Policy for `fare_class`, falling back to no refund at all.
    pub fn policy(&self, fare_class: &str) -> RefundPolicy {
        self.fare_classes
            .get(fare_class)
            .copied()
            .unwrap_or(RefundPolicy {
                window_hours: u64::MAX,
                fee_fraction: Fraction::from_basis_points(Fraction::ONE_BP).unwrap(),
            })
    }

    pub fn total_capacity(&self) -> u64 {
        self.flights.iter().map(|f| f.capacity as u64).sum()
    }
}

impl Default for SeedData {
    fn default() -> Self {
        let flight = |id: &str, route: &str, dep, cap, fare, class: &str| FlightInfo {
            flight: id.into(),
            route: route.into(),
            departure_hour: dep,
            capacity: cap,
            fare: Money(fare),
            fare_class: class.into(),
        };
        SeedData {
            flights: vec![
                flight("BG147", "DAC to CGP", 96, 30, 10_000, "Y"),
                flight("BG149", "DAC to CGP", 102, 30, 12_000, "Y"),
                flight("BG201", "DAC to CXB", 120, 24, 14_500, "Y"),
                flight("BG388", "DAC to DXB", 168, 12, 65_000, "J"),
            ],
            fare_classes: default_fare_classes(),
        }
    }
}
