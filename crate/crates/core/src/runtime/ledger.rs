use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("NegativeCost: {0}")]
    NegativeCost(i64),
    #[error("CostOverflow")]
    Overflow,
}

/// Cost units spent per node. `total` is always the exact sum of `per_node`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub per_node: BTreeMap<String, u64>,
    pub total: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Charge `amount` to `node`.
    pub fn record(&mut self, node: &str, amount: i64) -> Result<(), LedgerError> {
        let amount = u64::try_from(amount).map_err(|_| LedgerError::NegativeCost(amount))?;
        self.record_units(node, amount)
    }

    pub fn record_units(&mut self, node: &str, amount: u64) -> Result<(), LedgerError> {
        let total = self.total.checked_add(amount).ok_or(LedgerError::Overflow)?;
        let slot = self.per_node.entry(String::from(node)).or_insert(0);
        *slot = slot.checked_add(amount).ok_or(LedgerError::Overflow)?;
        self.total = total;
        Ok(())
    }

    pub fn spent_by(&self, node: &str) -> u64 {
        self.per_node.get(node).copied().unwrap_or(0)
    }
}

/// Functional form: returns the updated ledger.
pub fn record_cost(mut ledger: CostLedger, node: &str, amount: i64) -> Result<CostLedger, LedgerError> {
    ledger.record(node, amount)?;
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums() {
        let l = record_cost(record_cost(CostLedger::new(), "n", 100).unwrap(), "n", 50).unwrap();
        assert_eq!(l.spent_by("n"), 150);
        assert_eq!(l.total, 150);
        let l = record_cost(record_cost(CostLedger::new(), "a", 30).unwrap(), "b", 70).unwrap();
        assert_eq!(l.total, 100);
    }

    #[test]
    fn negative_rejected_and_ledger_untouched() {
        let mut l = CostLedger::new();
        l.record("a", 5).unwrap();
        assert_eq!(l.record("a", -1), Err(LedgerError::NegativeCost(-1)));
        assert_eq!(l.total, 5);
        l.record_units("a", u64::MAX).unwrap_err();
        assert_eq!(l.total, 5);
    }
}
