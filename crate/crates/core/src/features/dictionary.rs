use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FeatureKind {
    Permission,
    Intent,
    Api,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Permission, FeatureKind::Intent, FeatureKind::Api];

    /// File name of this kind's dictionary inside a dictionary directory.
    pub fn file_name(self) -> &'static str {
        match self {
            FeatureKind::Permission => "permissions.txt",
            FeatureKind::Intent => "intents.txt",
            FeatureKind::Api => "apis.txt",
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            FeatureKind::Permission => "PERM",
            FeatureKind::Intent => "INTENT",
            FeatureKind::Api => "API",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Ordered vocabulary of one feature kind. Entry order defines id
/// assignment in the lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dictionary {
    pub kind: FeatureKind,
    pub entries: Vec<String>,
}

impl Dictionary {
    pub fn new<S: Into<String>>(kind: FeatureKind, entries: impl IntoIterator<Item = S>) -> Self {
        Self {
            kind,
            entries: entries.into_iter().map(Into::into).collect(),
        }
    }

    /// Parses the dictionary file format: one token per line; blank lines
    /// and lines starting with `#` are skipped; surrounding whitespace is
    /// trimmed.
    pub fn parse(kind: FeatureKind, text: &str) -> Self {
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect();
        Self { kind, entries }
    }

    pub fn load(kind: FeatureKind, path: &Path) -> Result<Self, FeatureError> {
        let text = fs::read_to_string(path).map_err(|e| FeatureError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::parse(kind, &text))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(super) fn check_unique(&self) -> Result<HashMap<&str, usize>, FeatureError> {
        let mut seen = HashMap::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            if seen.insert(e.as_str(), i).is_some() {
                return Err(FeatureError::DuplicateEntry {
                    kind: self.kind,
                    entry: e.clone(),
                });
            }
        }
        Ok(seen)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_comments_and_blanks() {
        let d = Dictionary::parse(
            FeatureKind::Permission,
            "# dangerous\nandroid.permission.SEND_SMS\n\n  android.permission.READ_SMS  \n#x\n",
        );
        assert_eq!(
            d.entries,
            ["android.permission.SEND_SMS", "android.permission.READ_SMS"]
        );
    }

    #[test]
    fn duplicate_detection() {
        let d = Dictionary::new(FeatureKind::Api, ["La;->b", "La;->c", "La;->b"]);
        assert_eq!(
            d.check_unique().unwrap_err(),
            FeatureError::DuplicateEntry {
                kind: FeatureKind::Api,
                entry: "La;->b".into()
            }
        );
    }
}
