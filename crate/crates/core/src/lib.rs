//! Privacy-preserving aggregation of vehicle-cluster data.
//!
//! Members mask their readings with pairwise masks whose net value is
//! Shamir-shared, so a misbehaving member can be excluded without a restart.
//! Every member computes the cluster average on its own and contributes a
//! share of a joint Schnorr approval over it; the cluster head pre-checks the
//! approval with cached aggregate trees and uploads it with an escrowed
//! credential. The cloud server audits cluster keys using records that
//! members report in later cycles.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod approval;
pub mod group;
pub mod hash;
pub mod masking;
pub mod multiexp;
pub mod precheck;
pub mod protocol;
pub mod schnorr;
pub mod seal;

pub use group::{Group, Secp256k1, ToyGroup};
