use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

const HYPEREDGE_TAG: u64 = 1 << 63;

/// A node in the bipartite store. The top bit is set for hyperedges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HyperedgeId(u64);

pub(crate) enum NodeKind {
    Entity(EntityId),
    Hyperedge(HyperedgeId),
}

impl NodeId {
    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn is_hyperedge(self) -> bool {
        self.0 & HYPEREDGE_TAG != 0
    }

    pub fn as_entity(self) -> Option<EntityId> {
        (!self.is_hyperedge()).then_some(EntityId(self.0))
    }

    pub fn as_hyperedge(self) -> Option<HyperedgeId> {
        self.is_hyperedge().then_some(HyperedgeId(self.0))
    }

    pub(crate) fn kind(self) -> NodeKind {
        if self.is_hyperedge() {
            NodeKind::Hyperedge(HyperedgeId(self.0))
        } else {
            NodeKind::Entity(EntityId(self.0))
        }
    }

    pub(crate) fn kind_name(self) -> &'static str {
        if self.is_hyperedge() {
            "hyperedge"
        } else {
            "entity"
        }
    }
}

impl EntityId {
    pub(crate) fn from_hash(h: u64) -> Self {
        EntityId(h & !HYPEREDGE_TAG)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

impl HyperedgeId {
    pub(crate) fn from_hash(h: u64) -> Self {
        HyperedgeId(h | HYPEREDGE_TAG)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

impl From<EntityId> for NodeId {
    fn from(e: EntityId) -> Self {
        NodeId(e.0)
    }
}

impl From<HyperedgeId> for NodeId {
    fn from(h: HyperedgeId) -> Self {
        NodeId(h.0)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("malformed node id `{0}`")]
pub struct ParseIdError(String);

macro_rules! hex_id {
    ($ty:ident, $check:expr) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:016x}", self.0)
            }
        }

        impl FromStr for $ty {
            type Err = ParseIdError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let raw = u64::from_str_radix(s, 16).map_err(|_| ParseIdError(s.to_string()))?;
                let check: fn(u64) -> bool = $check;
                if s.len() != 16 || !check(raw) {
                    return Err(ParseIdError(s.to_string()));
                }
                Ok($ty(raw))
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
                ser.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
                let s = String::deserialize(de)?;
                s.parse().map_err(de::Error::custom)
            }
        }
    };
}

hex_id!(NodeId, |_| true);
hex_id!(EntityId, |raw| raw & HYPEREDGE_TAG == 0);
hex_id!(HyperedgeId, |raw| raw & HYPEREDGE_TAG != 0);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_bit_separates_kinds() {
        let e = EntityId::from_hash(u64::MAX);
        let h = HyperedgeId::from_hash(0);
        assert!(!NodeId::from(e).is_hyperedge());
        assert!(NodeId::from(h).is_hyperedge());
        assert_eq!(NodeId::from(e).as_entity(), Some(e));
        assert_eq!(NodeId::from(h).as_entity(), None);
    }

    #[test]
    fn hex_parse_rejects_wrong_kind() {
        let h = HyperedgeId::from_hash(42);
        assert!(h.to_string().parse::<EntityId>().is_err());
        assert_eq!(h.to_string().parse::<HyperedgeId>().unwrap(), h);
    }
}
