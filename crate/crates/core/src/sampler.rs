//! Schema-balanced subset selection.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::DomainLabel;
use crate::text::Lang;

pub const KEY_SEPARATOR: &str = "|";

/// Sorted, deduplicated relation labels of a sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaKey(pub String);

impl SchemaKey {
    pub fn new<'a>(relations: impl IntoIterator<Item = &'a str>) -> Self {
        let mut labels: Vec<&str> = relations.into_iter().collect();
        labels.sort_unstable();
        labels.dedup();
        SchemaKey(labels.join(KEY_SEPARATOR))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for SchemaKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Per-domain instance caps; a domain without an entry is uncapped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Caps(pub BTreeMap<DomainLabel, usize>);

impl Caps {
    pub fn get(&self, d: DomainLabel) -> Option<usize> {
        self.0.get(&d).copied()
    }
}

const TABLE_CAPS: [(DomainLabel, usize, usize); 12] = [
    (DomainLabel::GPE, 20200, 20176),
    (DomainLabel::Event, 19201, 20185),
    (DomainLabel::Person, 20200, 20201),
    (DomainLabel::Science, 4508, 8765),
    (DomainLabel::Product, 10000, 9969),
    (DomainLabel::Creature, 10200, 10103),
    (DomainLabel::Building, 16727, 20181),
    (DomainLabel::Artworks, 20200, 20100),
    (DomainLabel::Medicine, 3444, 6676),
    (DomainLabel::Transport, 20200, 20165),
    (DomainLabel::Astronomy, 10200, 11846),
    (DomainLabel::Organization, 18590, 20039),
];

/// Published per-domain instance counts of the reference dataset.
pub fn default_caps(lang: Lang) -> Caps {
    Caps(
        TABLE_CAPS
            .iter()
            .map(|&(d, zh, en)| (d, if lang == Lang::Zh { zh } else { en }))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error("sampling weight K must be positive and finite, got {0}")]
    BadWeight(f64),
    #[error("candidate {0} has no relations")]
    EmptyKey(usize),
}

/// Visits candidates in a seeded permutation and accepts each with
/// probability `min(1, k / (count[key] + 1))`, where `count` tracks accepted
/// samples per schema key. Returns accepted indices in visitation order.
pub fn sample_indices(
    candidates: &[(DomainLabel, SchemaKey)],
    seed: u64,
    k: f64,
    caps: &Caps,
) -> Result<Vec<usize>, SamplerError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(SamplerError::BadWeight(k));
    }
    if let Some(i) = candidates.iter().position(|(_, key)| key.is_empty()) {
        return Err(SamplerError::EmptyKey(i));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.shuffle(&mut rng);

    let mut key_counts: HashMap<&SchemaKey, usize> = HashMap::new();
    let mut domain_counts: HashMap<DomainLabel, usize> = HashMap::new();
    let mut out = Vec::new();
    for i in order {
        let (domain, key) = &candidates[i];
        let taken = domain_counts.get(domain).copied().unwrap_or(0);
        if caps.get(*domain).is_some_and(|cap| taken >= cap) {
            continue;
        }
        let count = key_counts.get(key).copied().unwrap_or(0);
        let p = (k / (count as f64 + 1.0)).min(1.0);
        if rng.random::<f64>() < p {
            *key_counts.entry(key).or_default() += 1;
            *domain_counts.entry(*domain).or_default() += 1;
            out.push(i);
        }
    }
    Ok(out)
}

/// [`sample_indices`] over owned items.
pub fn sample<T: Clone>(
    items: &[T],
    key_of: impl Fn(&T) -> (DomainLabel, SchemaKey),
    seed: u64,
    k: f64,
    caps: &Caps,
) -> Result<Vec<T>, SamplerError> {
    let keys: Vec<_> = items.iter().map(key_of).collect();
    Ok(sample_indices(&keys, seed, k, caps)?.into_iter().map(|i| items[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(s: &str) -> SchemaKey {
        SchemaKey::new(s.split(',').filter(|x| !x.is_empty()))
    }

    #[test]
    fn key_is_order_insensitive() {
        assert_eq!(key("b,a,b"), key("a,b"));
        assert_eq!(key("b,a").0, "a|b");
    }

    #[test]
    fn first_of_a_key_is_always_accepted() {
        for seed in 0..200 {
            let got = sample_indices(&[(DomainLabel::GPE, key("a"))], seed, 1.0, &Caps::default()).unwrap();
            assert_eq!(got, vec![0]);
        }
    }

    #[test]
    fn rejects_bad_weight_and_empty_keys() {
        let c = [(DomainLabel::GPE, key("a"))];
        assert!(matches!(sample_indices(&c, 0, 0.0, &Caps::default()), Err(SamplerError::BadWeight(_))));
        assert!(matches!(sample_indices(&c, 0, -1.0, &Caps::default()), Err(SamplerError::BadWeight(_))));
        assert!(matches!(sample_indices(&c, 0, f64::NAN, &Caps::default()), Err(SamplerError::BadWeight(_))));
        let e = [(DomainLabel::GPE, key(""))];
        assert_eq!(sample_indices(&e, 0, 1.0, &Caps::default()), Err(SamplerError::EmptyKey(0)));
    }

    #[test]
    fn zero_cap_excludes_domain() {
        let c = vec![(DomainLabel::GPE, key("a")), (DomainLabel::Person, key("b"))];
        let caps = Caps(BTreeMap::from([(DomainLabel::GPE, 0)]));
        assert_eq!(sample_indices(&c, 3, 1.0, &caps).unwrap(), vec![1]);
    }

    #[test]
    fn default_caps_cover_all_domains() {
        assert_eq!(default_caps(Lang::Zh).get(DomainLabel::GPE), Some(20200));
        assert_eq!(default_caps(Lang::En).get(DomainLabel::Medicine), Some(6676));
        assert_eq!(default_caps(Lang::En).0.len(), 12);
    }

    proptest! {
        #[test]
        fn deterministic_subset_without_duplicates(
            keys in proptest::collection::vec((0usize..12, "[a-c]{1,3}"), 0..60),
            seed in any::<u64>(),
            k in 0.1f64..3.0,
        ) {
            let cands: Vec<_> = keys
                .iter()
                .map(|(d, s)| (DomainLabel::ALL[*d], SchemaKey::new(s.split("").filter(|x| !x.is_empty()))))
                .collect();
            let a = sample_indices(&cands, seed, k, &Caps::default()).unwrap();
            let b = sample_indices(&cands, seed, k, &Caps::default()).unwrap();
            prop_assert_eq!(&a, &b);
            let mut sorted = a.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), a.len());
            prop_assert!(a.iter().all(|&i| i < cands.len()));
        }
    }
}
