use serde::{Deserialize, Serialize};

use crate::ledger::{AccountId, Ledger};

/// Policy condition, evaluated against ledger state only.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Condition {
    #[default]
    Always,
    Never,
    /// True from `height` on.
    After {
        height: u64,
    },
    /// True strictly before `height`.
    Before {
        height: u64,
    },
    PaymentObserved {
        payer: AccountId,
        payee: AccountId,
        min_amount: u64,
    },
    And {
        all: Vec<Condition>,
    },
    Or {
        any: Vec<Condition>,
    },
    Not {
        cond: Box<Condition>,
    },
}

impl Condition {
    pub fn eval(&self, ledger: &Ledger) -> bool {
        match self {
            Condition::Always => true,
            Condition::Never => false,
            Condition::After { height } => ledger.height() >= *height,
            Condition::Before { height } => ledger.height() < *height,
            Condition::PaymentObserved { payer, payee, min_amount } => {
                ledger.payment_observed(payer, payee, *min_amount)
            }
            Condition::And { all } => all.iter().all(|c| c.eval(ledger)),
            Condition::Or { any } => any.iter().any(|c| c.eval(ledger)),
            Condition::Not { cond } => !cond.eval(ledger),
        }
    }

    /// Parses either a JSON expression or the shorthand forms `always`,
    /// `never`, `after:H`, `before:H` and `paid:PAYER:PAYEE:MIN`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s).map_err(|e| e.to_string());
        }
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: &str| v.parse::<u64>().map_err(|e| format!("{v}: {e}"));
        match parts.as_slice() {
            ["always"] => Ok(Condition::Always),
            ["never"] => Ok(Condition::Never),
            ["after", h] => Ok(Condition::After { height: num(h)? }),
            ["before", h] => Ok(Condition::Before { height: num(h)? }),
            ["paid", payer, payee, min] => Ok(Condition::PaymentObserved {
                payer: payer.to_string(),
                payee: payee.to_string(),
                min_amount: num(min)?,
            }),
            _ => Err(format!("unrecognized condition {s:?}")),
        }
    }
}
