//! Permissioned reservation ledger with quorum consensus, a declarative
//! contract engine and event-sourced airline reservation services.

pub mod consensus;
pub mod contract;
pub mod crypto;
pub mod gateway;
pub mod ledger;
pub mod money;
pub mod platform;
pub mod services;
pub mod sim;
#[doc(hidden)]
pub mod testkit;
