use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The twelve textual domains a paragraph can be assigned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DomainLabel {
    GPE,
    Event,
    Person,
    Science,
    Product,
    Creature,
    Building,
    Artworks,
    Medicine,
    Transport,
    Astronomy,
    Organization,
}

impl DomainLabel {
    pub const ALL: [DomainLabel; 12] = [
        DomainLabel::GPE,
        DomainLabel::Event,
        DomainLabel::Person,
        DomainLabel::Science,
        DomainLabel::Product,
        DomainLabel::Creature,
        DomainLabel::Building,
        DomainLabel::Artworks,
        DomainLabel::Medicine,
        DomainLabel::Transport,
        DomainLabel::Astronomy,
        DomainLabel::Organization,
    ];

    /// Column order used by the evaluation report table.
    pub const REPORT_ORDER: [DomainLabel; 12] = [
        DomainLabel::Product,
        DomainLabel::Person,
        DomainLabel::GPE,
        DomainLabel::Organization,
        DomainLabel::Event,
        DomainLabel::Building,
        DomainLabel::Artworks,
        DomainLabel::Creature,
        DomainLabel::Astronomy,
        DomainLabel::Medicine,
        DomainLabel::Science,
        DomainLabel::Transport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DomainLabel::GPE => "GPE",
            DomainLabel::Event => "Event",
            DomainLabel::Person => "Person",
            DomainLabel::Science => "Science",
            DomainLabel::Product => "Product",
            DomainLabel::Creature => "Creature",
            DomainLabel::Building => "Building",
            DomainLabel::Artworks => "Artworks",
            DomainLabel::Medicine => "Medicine",
            DomainLabel::Transport => "Transport",
            DomainLabel::Astronomy => "Astronomy",
            DomainLabel::Organization => "Organization",
        }
    }

    /// Three-letter column header.
    pub fn abbrev(self) -> &'static str {
        match self {
            DomainLabel::GPE => "GPE",
            DomainLabel::Event => "EVE",
            DomainLabel::Person => "PER",
            DomainLabel::Science => "SCI",
            DomainLabel::Product => "PRO",
            DomainLabel::Creature => "CRE",
            DomainLabel::Building => "BUD",
            DomainLabel::Artworks => "ART",
            DomainLabel::Medicine => "MED",
            DomainLabel::Transport => "TRA",
            DomainLabel::Astronomy => "AST",
            DomainLabel::Organization => "ORG",
        }
    }
}

impl fmt::Display for DomainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown domain label `{0}`")]
pub struct UnknownDomain(pub String);

impl FromStr for DomainLabel {
    type Err = UnknownDomain;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DomainLabel::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| UnknownDomain(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn twelve_distinct_domains() {
        let names: HashSet<_> = DomainLabel::ALL.iter().map(|d| d.name()).collect();
        assert_eq!(names.len(), 12);
        let cols: HashSet<_> = DomainLabel::REPORT_ORDER.iter().collect();
        assert_eq!(cols.len(), 12);
    }

    #[test]
    fn parse_round_trip() {
        for d in DomainLabel::ALL {
            assert_eq!(d.name().parse::<DomainLabel>().unwrap(), d);
            let json = serde_json::to_string(&d).unwrap();
            assert_eq!(json, format!("\"{}\"", d.name()));
        }
        assert!("Sports".parse::<DomainLabel>().is_err());
    }
}
