//! Unified call accounting against an episode budget.
//!
//! Every backend call needs a [`CallPermit`], which only the ledger can mint.
//! A permit holds one call of capacity until it is settled (appending a
//! charge) or cancelled (returning the capacity).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed size of the fallback extension.
pub const FALLBACK_EXTENSION_CALLS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChargeCategory {
    Generation,
    ProcessEval,
    Verify,
    Repair,
    Controller,
    Fallback,
}

impl ChargeCategory {
    pub const ALL: [ChargeCategory; 6] = [
        ChargeCategory::Generation,
        ChargeCategory::ProcessEval,
        ChargeCategory::Verify,
        ChargeCategory::Repair,
        ChargeCategory::Controller,
        ChargeCategory::Fallback,
    ];
}

impl fmt::Display for ChargeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Charge {
    pub category: ChargeCategory,
    pub calls: u32,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Token counts came from the whitespace estimator rather than backend metadata.
    #[serde(default)]
    pub estimated: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BudgetError {
    #[error("budget exceeded: requested {requested} call(s), {remaining} remaining")]
    BudgetExceeded { requested: u32, remaining: u32 },
    #[error("fallback extension already used in this episode")]
    FallbackAlreadyExtended,
    #[error("reservation exhausted")]
    ReservationExhausted,
}

/// Capacity set aside for a batch of calls.
#[derive(Debug)]
#[must_use = "unused reservations must be released"]
pub struct Reservation {
    calls: u32,
}

impl Reservation {
    pub fn calls(&self) -> u32 {
        self.calls
    }
}

/// Proof that one call of capacity is held for a backend invocation.
#[derive(Debug)]
#[must_use = "permits must be settled or cancelled"]
pub struct CallPermit {
    category: ChargeCategory,
    _private: (),
}

impl CallPermit {
    pub fn category(&self) -> ChargeCategory {
        self.category
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTotals {
    pub calls: u32,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub capacity: u32,
    pub total_calls: u32,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub by_category: BTreeMap<ChargeCategory, CategoryTotals>,
    pub fallback_extended: bool,
    pub estimated_tokens: bool,
}

impl BudgetSummary {
    pub fn total_tokens(&self) -> u64 {
        self.tokens_in + self.tokens_out
    }

    pub fn calls(&self, category: ChargeCategory) -> u32 {
        self.by_category.get(&category).map_or(0, |t| t.calls)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    capacity: u32,
    charges: Vec<Charge>,
    reserved: u32,
    fallback_extended: bool,
}

impl BudgetLedger {
    pub fn new(capacity: u32) -> Self {
        Self { capacity, charges: Vec::new(), reserved: 0, fallback_extended: false }
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn charges(&self) -> &[Charge] {
        &self.charges
    }

    pub fn charged_calls(&self) -> u32 {
        self.charges.iter().map(|c| c.calls).sum()
    }

    pub fn reserved(&self) -> u32 {
        self.reserved
    }

    /// Capacity not yet charged or reserved.
    pub fn remaining(&self) -> u32 {
        self.capacity - self.charged_calls() - self.reserved
    }

    pub fn fallback_extended(&self) -> bool {
        self.fallback_extended
    }

    fn check(&self, calls: u32) -> Result<(), BudgetError> {
        let remaining = self.remaining();
        if calls > remaining {
            return Err(BudgetError::BudgetExceeded { requested: calls, remaining });
        }
        Ok(())
    }

    /// Appends a charge against unreserved capacity.
    pub fn charge(&mut self, category: ChargeCategory, calls: u32, tokens_in: u64, tokens_out: u64) -> Result<(), BudgetError> {
        self.check(calls)?;
        self.charges.push(Charge { category, calls, tokens_in, tokens_out, estimated: false });
        Ok(())
    }

    pub fn reserve(&mut self, calls: u32) -> Result<Reservation, BudgetError> {
        self.check(calls)?;
        self.reserved += calls;
        Ok(Reservation { calls })
    }

    /// Returns the unused part of a reservation.
    pub fn release(&mut self, reservation: Reservation) {
        self.reserved -= reservation.calls;
    }

    /// Takes one call from unreserved capacity.
    pub fn permit(&mut self, category: ChargeCategory) -> Result<CallPermit, BudgetError> {
        self.check(1)?;
        self.reserved += 1;
        Ok(CallPermit { category, _private: () })
    }

    /// Takes one call out of an existing reservation.
    pub fn permit_from(&mut self, reservation: &mut Reservation, category: ChargeCategory) -> Result<CallPermit, BudgetError> {
        if reservation.calls == 0 {
            return Err(BudgetError::ReservationExhausted);
        }
        reservation.calls -= 1;
        Ok(CallPermit { category, _private: () })
    }

    /// Converts a permit into a charge once the call has completed.
    pub fn settle(&mut self, permit: CallPermit, tokens_in: u64, tokens_out: u64, estimated: bool) {
        self.reserved -= 1;
        self.charges.push(Charge { category: permit.category, calls: 1, tokens_in, tokens_out, estimated });
    }

    /// Returns a permit's capacity without charging (the call never happened).
    pub fn cancel(&mut self, permit: CallPermit) {
        let _ = permit.category;
        self.reserved -= 1;
    }

    /// Adds the one-off fallback budget.
    pub fn extend_for_fallback(&mut self) -> Result<(), BudgetError> {
        if self.fallback_extended {
            return Err(BudgetError::FallbackAlreadyExtended);
        }
        self.fallback_extended = true;
        self.capacity += FALLBACK_EXTENSION_CALLS;
        Ok(())
    }

    pub fn summary(&self) -> BudgetSummary {
        let mut by_category: BTreeMap<ChargeCategory, CategoryTotals> = BTreeMap::new();
        for c in &self.charges {
            let t = by_category.entry(c.category).or_default();
            t.calls += c.calls;
            t.tokens_in += c.tokens_in;
            t.tokens_out += c.tokens_out;
        }
        BudgetSummary {
            capacity: self.capacity,
            total_calls: by_category.values().map(|t| t.calls).sum(),
            tokens_in: by_category.values().map(|t| t.tokens_in).sum(),
            tokens_out: by_category.values().map(|t| t.tokens_out).sum(),
            by_category,
            fallback_extended: self.fallback_extended,
            estimated_tokens: self.charges.iter().any(|c| c.estimated),
        }
    }
}

/// Whitespace token estimate used when a backend reports no usage metadata.
pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
