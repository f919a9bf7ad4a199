//! Task-driven sharing of data capsules.
//!
//! A data owner splits a payload into fixed-width granules, seals them into a
//! tamper-evident capsule under an attribute policy, and hands single-use,
//! identity-bound tasks to consumers. The capsule store releases capsule bytes
//! only against a download parameter that the task holder alone can derive, and
//! every resolved task advances the capsule so older tasks stop working.
//!
//! Modules follow the pipeline: [`groups`] (pairing arithmetic, hashing,
//! operation counters), [`policy`] (monotone formulas compiled to linear secret
//! sharing), [`granules`] (payload codec), [`scheme`] (the eleven protocol
//! operations), [`envelope`] (canonical file containers), [`csstore`] (the
//! capsule service), and [`actors`] (multi-party scenario driver and attack
//! scripts).

pub mod actors;
pub mod bits;
pub mod csstore;
pub mod envelope;
pub mod granules;
pub mod groups;
pub mod par;
pub mod policy;
pub mod scheme;
