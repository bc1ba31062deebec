use serde::{Deserialize, Serialize};

use super::{AccountId, EscrowId, Ledger, LedgerError, Payment};
use crate::util::hex32;

/// The client-initiated ledger mutations, as sent to a remote ledger.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tx", rename_all = "snake_case")]
pub enum LedgerTx {
    Escrow {
        owner: AccountId,
        miner: AccountId,
        fee: u64,
        duration: u64,
        collateral: u64,
    },
    BindPolicy {
        escrow: EscrowId,
        #[serde(with = "hex32")]
        policy_id: [u8; 32],
        #[serde(with = "hex32")]
        material_hash: [u8; 32],
    },
    TopUp {
        escrow: EscrowId,
        extra_fee: u64,
        extra_duration: u64,
    },
    Payment {
        payer: AccountId,
        payee: AccountId,
        amount: u64,
    },
    DepositStake {
        node: AccountId,
        amount: u64,
        lock_blocks: u64,
    },
    WithdrawStake {
        node: AccountId,
    },
    AdvanceBlocks {
        count: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TxOutcome {
    Done,
    Escrow { id: EscrowId },
    Payment(Payment),
    Withdrawn { amount: u64 },
    Height { height: u64 },
}

impl LedgerTx {
    pub fn apply(self, ledger: &mut Ledger) -> Result<TxOutcome, LedgerError> {
        Ok(match self {
            LedgerTx::Escrow { owner, miner, fee, duration, collateral } => {
                TxOutcome::Escrow { id: ledger.escrow_policy(&owner, &miner, fee, duration, collateral)? }
            }
            LedgerTx::BindPolicy { escrow, policy_id, material_hash } => {
                ledger.bind_policy(escrow, policy_id, material_hash)?;
                TxOutcome::Done
            }
            LedgerTx::TopUp { escrow, extra_fee, extra_duration } => {
                ledger.top_up_escrow(escrow, extra_fee, extra_duration)?;
                TxOutcome::Done
            }
            LedgerTx::Payment { payer, payee, amount } => {
                TxOutcome::Payment(ledger.record_payment(&payer, &payee, amount)?)
            }
            LedgerTx::DepositStake { node, amount, lock_blocks } => {
                ledger.deposit_stake(&node, amount, lock_blocks)?;
                TxOutcome::Done
            }
            LedgerTx::WithdrawStake { node } => TxOutcome::Withdrawn { amount: ledger.withdraw_stake(&node)? },
            LedgerTx::AdvanceBlocks { count } => {
                for _ in 0..count {
                    ledger.advance_block();
                }
                TxOutcome::Height { height: ledger.height() }
            }
        })
    }
}
