use std::collections::HashMap;
use std::ops::RangeInclusive;
use std::path::Path;

use super::{Dictionary, Feature, FeatureError, FeatureKind};

pub const PAD_ID: u32 = 0;

/// Token-to-id mapping over the three dictionaries.
///
/// Ids are consecutive per kind: permissions first (starting at 1), then
/// intents, then APIs.
#[derive(Debug, Clone)]
pub struct LookupTable {
    dictionaries: [Dictionary; 3],
    index: [HashMap<String, u32>; 3],
}

fn slot(kind: FeatureKind) -> usize {
    match kind {
        FeatureKind::Permission => 0,
        FeatureKind::Intent => 1,
        FeatureKind::Api => 2,
    }
}

impl LookupTable {
    pub fn build(perm: Dictionary, intent: Dictionary, api: Dictionary) -> Result<Self, FeatureError> {
        let mut next = 1u32;
        let mut index: [HashMap<String, u32>; 3] = Default::default();
        let dictionaries = [perm, intent, api];
        for (dict, expected) in dictionaries.iter().zip(FeatureKind::ALL) {
            if dict.kind != expected {
                return Err(FeatureError::KindMismatch {
                    expected,
                    got: dict.kind,
                });
            }
            dict.check_unique()?;
            let map = &mut index[slot(expected)];
            map.reserve(dict.len());
            for entry in &dict.entries {
                map.insert(entry.clone(), next);
                next += 1;
            }
        }
        Ok(Self { dictionaries, index })
    }

    /// Loads `permissions.txt`, `intents.txt` and `apis.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, FeatureError> {
        let [p, i, a] = FeatureKind::ALL.map(|k| Dictionary::load(k, &dir.join(k.file_name())));
        Self::build(p?, i?, a?)
    }

    pub fn dictionary(&self, kind: FeatureKind) -> &Dictionary {
        &self.dictionaries[slot(kind)]
    }

    /// Number of embedding rows needed: every dictionary token plus padding.
    pub fn vocab_size(&self) -> usize {
        1 + self.dictionaries.iter().map(Dictionary::len).sum::<usize>()
    }

    pub fn id_range(&self, kind: FeatureKind) -> RangeInclusive<u32> {
        let before: usize = self.dictionaries[..slot(kind)].iter().map(Dictionary::len).sum();
        let len = self.dictionary(kind).len();
        (before as u32 + 1)..=(before + len) as u32
    }

    pub fn contains(&self, kind: FeatureKind, text: &str) -> bool {
        self.index[slot(kind)].contains_key(text)
    }

    pub fn id(&self, kind: FeatureKind, text: &str) -> Option<u32> {
        self.index[slot(kind)].get(text).copied()
    }

    pub fn encode(&self, feature: &Feature) -> Option<u32> {
        self.id(feature.kind, &feature.text)
    }

    pub fn decode(&self, id: u32) -> Option<Feature> {
        if id == PAD_ID {
            return None;
        }
        let mut base = 1u32;
        for dict in &self.dictionaries {
            let len = dict.len() as u32;
            if id < base + len {
                return Some(Feature::new(dict.kind, dict.entries[(id - base) as usize].clone()));
            }
            base += len;
        }
        None
    }

    /// Tab-separated `id kind token` listing of the whole table.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut id = 1;
        for dict in &self.dictionaries {
            for entry in &dict.entries {
                out.push_str(&format!("{id}\t{}\t{entry}\n", dict.kind));
                id += 1;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(kind: FeatureKind, n: usize) -> Dictionary {
        Dictionary::new(kind, (0..n).map(|i| format!("{}_{i}", kind.tag())))
    }

    #[test]
    fn reference_sizes_layout() {
        let t = LookupTable::build(
            synthetic(FeatureKind::Permission, 324),
            synthetic(FeatureKind::Intent, 262),
            synthetic(FeatureKind::Api, 2288),
        )
        .unwrap();
        assert_eq!(t.vocab_size(), 2875);
        assert_eq!(t.id(FeatureKind::Intent, "INTENT_0"), Some(325));
        assert_eq!(t.id(FeatureKind::Api, "API_0"), Some(587));
        assert_eq!(t.id_range(FeatureKind::Permission), 1..=324);
        assert_eq!(t.id_range(FeatureKind::Intent), 325..=586);
        assert_eq!(t.id_range(FeatureKind::Api), 587..=2874);
        assert_eq!(t.decode(2874), Some(Feature::new(FeatureKind::Api, "API_2287")));
        assert_eq!(t.decode(2875), None);
        assert_eq!(t.decode(PAD_ID), None);
    }

    #[test]
    fn singletons() {
        let t = LookupTable::build(
            Dictionary::new(FeatureKind::Permission, ["p"]),
            Dictionary::new(FeatureKind::Intent, ["i"]),
            Dictionary::new(FeatureKind::Api, ["a"]),
        )
        .unwrap();
        assert_eq!(
            [
                t.id(FeatureKind::Permission, "p"),
                t.id(FeatureKind::Intent, "i"),
                t.id(FeatureKind::Api, "a")
            ],
            [Some(1), Some(2), Some(3)]
        );
        assert_eq!(t.vocab_size(), 4);
        assert_eq!(t.dump(), "1\tPERM\tp\n2\tINTENT\ti\n3\tAPI\ta\n");
    }

    #[test]
    fn duplicate_api_entry() {
        let err = LookupTable::build(
            Dictionary::new(FeatureKind::Permission, ["p"]),
            Dictionary::new(FeatureKind::Intent, ["i"]),
            Dictionary::new(FeatureKind::Api, ["a", "a"]),
        )
        .unwrap_err();
        assert_eq!(
            err,
            FeatureError::DuplicateEntry {
                kind: FeatureKind::Api,
                entry: "a".into()
            }
        );
    }

    #[test]
    fn kinds_must_be_in_order() {
        let err = LookupTable::build(
            Dictionary::new(FeatureKind::Intent, ["i"]),
            Dictionary::new(FeatureKind::Permission, ["p"]),
            Dictionary::new(FeatureKind::Api, ["a"]),
        )
        .unwrap_err();
        assert!(matches!(err, FeatureError::KindMismatch { .. }));
    }

    #[test]
    fn same_text_in_two_kinds_gets_two_ids() {
        let t = LookupTable::build(
            Dictionary::new(FeatureKind::Permission, ["x"]),
            Dictionary::new(FeatureKind::Intent, ["x"]),
            Dictionary::new::<&str>(FeatureKind::Api, []),
        )
        .unwrap();
        assert_eq!(t.id(FeatureKind::Permission, "x"), Some(1));
        assert_eq!(t.id(FeatureKind::Intent, "x"), Some(2));
    }
}
