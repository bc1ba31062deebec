//! Scenario files: the node roster, clients, parameter overrides and a
//! script of timed client actions.

use serde::{Deserialize, Serialize};

use crate::audit::AuditConfig;
use crate::ledger::EconomicsParams;
use crate::node::Condition;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Blocks to simulate after the actions scheduled at height 0.
    pub blocks: u64,
    #[serde(default)]
    pub params: EconomicsParams,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default = "yes")]
    pub audit_enabled: bool,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub clients: Vec<ClientSpec>,
    #[serde(default)]
    pub actions: Vec<Action>,
}

fn yes() -> bool {
    true
}

fn one() -> u32 {
    1
}

fn default_stake() -> u64 {
    1_000
}

fn default_node_balance() -> u64 {
    10_000
}

fn default_client_balance() -> u64 {
    1_000_000
}

/// One node, or `count` nodes named `id00`, `id01`, ... when `count > 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    #[serde(default = "one")]
    pub count: u32,
    #[serde(default = "default_stake")]
    pub stake: u64,
    #[serde(default = "default_node_balance")]
    pub balance: u64,
    #[serde(default)]
    pub behavior: BehaviorSpec,
}

impl NodeSpec {
    pub fn ids(&self) -> Vec<String> {
        if self.count <= 1 {
            return vec![self.id.clone()];
        }
        let width = (self.count - 1).to_string().len().max(2);
        (0..self.count).map(|i| format!("{}{:0width$}", self.id, i)).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BehaviorSpec {
    #[default]
    Honest,
    OfflineAfter {
        height: u64,
    },
    /// Random outputs from `from` on.
    CheaterRandomOutput {
        #[serde(default)]
        from: u64,
    },
    /// Hands its material to a third party at `leak_height`, who files
    /// leak challenges with it.
    Leaker {
        leak_height: u64,
    },
    /// Keeps material past revocation and re-encrypts for the group's
    /// readers on request.
    Colluder {
        group: String,
    },
}

impl BehaviorSpec {
    /// Height from which health checks should find the node faulty. Leaks
    /// and collusion are invisible to health checks.
    pub fn faulty_from(&self) -> Option<u64> {
        match self {
            BehaviorSpec::OfflineAfter { height } => Some(*height),
            BehaviorSpec::CheaterRandomOutput { from } => Some(*from),
            BehaviorSpec::Honest | BehaviorSpec::Colluder { .. } | BehaviorSpec::Leaker { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSpec {
    pub name: String,
    #[serde(default = "default_client_balance")]
    pub balance: u64,
    /// Encode written files with the all-or-nothing transform.
    #[serde(default)]
    pub aont: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub at: u64,
    pub actor: String,
    #[serde(flatten)]
    pub op: Op,
}

/// What a scripted read is expected to do. `any` records the outcome only.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    #[default]
    Any,
    Ok,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Op {
    /// Writes `size` seeded pseudo-random bytes, or `text`, to `path`.
    Write {
        path: String,
        #[serde(default)]
        size: Option<usize>,
        #[serde(default)]
        text: Option<String>,
    },
    Share {
        path: String,
        to: String,
        duration: u64,
        #[serde(default)]
        fee: u64,
        #[serde(default)]
        collateral: u64,
        /// `single`, `additive:M` or `threshold:T:N`.
        #[serde(default)]
        scheme: Option<String>,
        #[serde(default)]
        nodes: Vec<String>,
        #[serde(default)]
        condition: Option<Condition>,
    },
    /// The actor reads `owner`'s file at `path`.
    Read {
        owner: String,
        path: String,
        #[serde(default)]
        expect: Expect,
    },
    Revoke {
        path: String,
    },
    Pay {
        to: String,
        amount: u64,
    },
    /// After revocation, the actor asks the colluders of `group` to
    /// re-encrypt `owner`'s file anyway.
    ColludeRead {
        owner: String,
        path: String,
        group: String,
    },
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self, String> {
        serde_json::from_str(json).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.nodes.iter().flat_map(NodeSpec::ids).collect()
    }

    /// Checks every name the script refers to.
    pub fn validate(&self) -> Result<(), String> {
        self.params.validate().map_err(|e| e.to_string())?;
        if self.audit_enabled {
            self.audit.validate(self.params.h).map_err(|e| e.to_string())?;
        }
        let nodes = self.node_ids();
        let mut seen = std::collections::BTreeSet::new();
        for id in &nodes {
            if !seen.insert(id) {
                return Err(format!("duplicate node id {id}"));
            }
        }
        let clients: Vec<&str> = self.clients.iter().map(|c| c.name.as_str()).collect();
        for c in &clients {
            if nodes.iter().any(|n| n == c) {
                return Err(format!("{c} is both a node and a client"));
            }
        }
        let client = |name: &str| {
            if clients.contains(&name) {
                Ok(())
            } else {
                Err(format!("unknown actor {name:?}"))
            }
        };
        for a in &self.actions {
            client(&a.actor)?;
            match &a.op {
                Op::Share { to, nodes: pinned, scheme, .. } => {
                    client(to)?;
                    if let Some(n) = pinned.iter().find(|n| !nodes.contains(n)) {
                        return Err(format!("unknown node {n:?}"));
                    }
                    if let Some(s) = scheme {
                        crate::client::SplitScheme::parse(s)?;
                    }
                }
                Op::Read { owner, .. } | Op::ColludeRead { owner, .. } => client(owner)?,
                Op::Pay { to, .. } => {
                    if !clients.contains(&to.as_str()) && !nodes.contains(to) {
                        return Err(format!("unknown payee {to:?}"));
                    }
                }
                Op::Write { size, text, .. } => {
                    if size.is_some() == text.is_some() {
                        return Err("write needs exactly one of size or text".into());
                    }
                }
                Op::Revoke { .. } => {}
            }
        }
        Ok(())
    }
}

pub const HONEST: &str = include_str!("../../scenarios/honest.json");
pub const CHEATER: &str = include_str!("../../scenarios/cheater.json");
pub const LEAKER: &str = include_str!("../../scenarios/leaker.json");
pub const COLLUDER: &str = include_str!("../../scenarios/colluder.json");
pub const SPLIT: &str = include_str!("../../scenarios/split.json");

/// The scenarios shipped with the crate, by name.
pub fn bundled(name: &str) -> Option<Scenario> {
    let json = match name {
        "honest" => HONEST,
        "cheater" => CHEATER,
        "leaker" => LEAKER,
        "colluder" => COLLUDER,
        "split" => SPLIT,
        _ => return None,
    };
    Some(Scenario::from_json(json).expect("bundled scenarios parse"))
}

pub const BUNDLED: [&str; 5] = ["honest", "cheater", "leaker", "colluder", "split"];
