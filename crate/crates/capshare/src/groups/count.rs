//! Thread-local tallies of expensive group operations.
//!
//! Exponentiations in each group and pairing evaluations are bumped from the
//! element wrappers; group multiplications, inversions, and hashing are not
//! counted. Tallies are per thread, and the protocol operations never spawn
//! threads internally, so a [`measure`] delta around one call is exact even
//! when many measurements run concurrently.

use std::cell::Cell;
use std::ops::{Add, Sub};

/// Snapshot of counted operations: exponentiations per group and pairings.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounts {
    pub g1_exp: u64,
    pub g2_exp: u64,
    pub gt_exp: u64,
    pub pairings: u64,
}

impl OpCounts {
    pub fn is_zero(&self) -> bool {
        *self == OpCounts::default()
    }
}

impl Add for OpCounts {
    type Output = OpCounts;
    fn add(self, o: OpCounts) -> OpCounts {
        OpCounts {
            g1_exp: self.g1_exp + o.g1_exp,
            g2_exp: self.g2_exp + o.g2_exp,
            gt_exp: self.gt_exp + o.gt_exp,
            pairings: self.pairings + o.pairings,
        }
    }
}

impl Sub for OpCounts {
    type Output = OpCounts;
    fn sub(self, o: OpCounts) -> OpCounts {
        OpCounts {
            g1_exp: self.g1_exp - o.g1_exp,
            g2_exp: self.g2_exp - o.g2_exp,
            gt_exp: self.gt_exp - o.gt_exp,
            pairings: self.pairings - o.pairings,
        }
    }
}

thread_local! {
    static TALLY: Cell<OpCounts> = const { Cell::new(OpCounts {
        g1_exp: 0,
        g2_exp: 0,
        gt_exp: 0,
        pairings: 0,
    }) };
}

fn bump(f: impl FnOnce(&mut OpCounts)) {
    TALLY.with(|t| {
        let mut c = t.get();
        f(&mut c);
        t.set(c);
    });
}

pub(crate) fn bump_g1_exp() {
    bump(|c| c.g1_exp += 1);
}

pub(crate) fn bump_g2_exp() {
    bump(|c| c.g2_exp += 1);
}

pub(crate) fn bump_gt_exp() {
    bump(|c| c.gt_exp += 1);
}

pub(crate) fn bump_pairing() {
    bump(|c| c.pairings += 1);
}

/// Current thread's running tally since thread start.
pub fn tally() -> OpCounts {
    TALLY.with(|t| t.get())
}

/// Runs `f` and returns its result together with the operations it performed
/// on this thread. Nested measurements compose: the inner delta is contained
/// in the outer one.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, OpCounts) {
    let before = tally();
    let out = f();
    (out, tally() - before)
}
