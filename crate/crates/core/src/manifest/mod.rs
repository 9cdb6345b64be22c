//! AndroidManifest decoding and extraction of requested permissions and
//! intent-filter values.

pub mod axml;
mod text;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ManifestError {
    #[error("unsupported manifest format (neither binary XML nor text XML)")]
    UnsupportedFormat,
    #[error("truncated manifest at offset {offset:#x}")]
    Truncated { offset: usize },
    #[error("string pool index {0} out of bounds")]
    BadStringIndex(u32),
    #[error("malformed manifest: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttrValue {
    String(String),
    Reference(u32),
    Int(i32),
    Bool(bool),
    Null,
    Other { data_type: u8, data: u32 },
}

impl AttrValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::String(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::String(s) => f.write_str(s),
            AttrValue::Reference(id) => write!(f, "@{id:#010x}"),
            AttrValue::Int(v) => write!(f, "{v}"),
            AttrValue::Bool(v) => write!(f, "{v}"),
            AttrValue::Null => Ok(()),
            AttrValue::Other { data_type, data } => write!(f, "({data_type:#04x}){data:#010x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    /// Namespace URI, when the attribute is namespaced.
    pub namespace: Option<String>,
    /// Local name, without prefix.
    pub name: String,
    pub value: AttrValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub namespace: Option<String>,
    pub name: String,
    pub attributes: Vec<Attribute>,
}

impl Element {
    /// First attribute with the given local name, regardless of namespace.
    pub fn attr(&self, local_name: &str) -> Option<&AttrValue> {
        self.attributes.iter().find(|a| a.name == local_name).map(|a| &a.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XmlEvent {
    Start(Element),
    End { namespace: Option<String>, name: String },
}

/// Decoded manifest: string pool (empty for text input) and properly nested
/// element events.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AxmlDocument {
    pub strings: Vec<String>,
    pub events: Vec<XmlEvent>,
}

impl AxmlDocument {
    /// Renders the element events as text XML. Namespaced attributes are
    /// written with a prefix declared on the root element.
    pub fn to_xml(&self) -> String {
        let mut prefixes: Vec<String> = Vec::new();
        for ev in &self.events {
            if let XmlEvent::Start(el) = ev {
                for a in &el.attributes {
                    if let Some(ns) = &a.namespace {
                        if !prefixes.contains(ns) {
                            prefixes.push(ns.clone());
                        }
                    }
                }
            }
        }
        let prefix_for = |uri: &str| -> String {
            if uri == axml::ANDROID_NS_URI {
                "android".to_owned()
            } else {
                format!("ns{}", prefixes.iter().position(|p| p == uri).unwrap_or(0))
            }
        };

        let mut out = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
        let mut depth = 0;
        let mut first = true;
        for ev in &self.events {
            match ev {
                XmlEvent::Start(el) => {
                    out.push_str(&"  ".repeat(depth));
                    out.push('<');
                    out.push_str(&el.name);
                    if first {
                        for uri in &prefixes {
                            out.push_str(&format!(" xmlns:{}=\"{}\"", prefix_for(uri), escape(uri)));
                        }
                        first = false;
                    }
                    for a in &el.attributes {
                        out.push(' ');
                        if let Some(ns) = &a.namespace {
                            out.push_str(&prefix_for(ns));
                            out.push(':');
                        }
                        out.push_str(&format!("{}=\"{}\"", a.name, escape(&a.value.to_string())));
                    }
                    out.push_str(">\n");
                    depth += 1;
                }
                XmlEvent::End { name, .. } => {
                    depth -= 1;
                    out.push_str(&format!("{}</{name}>\n", "  ".repeat(depth)));
                }
            }
        }
        out
    }
}

/// Escapes text for use in XML content or attribute values.
pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Decodes a manifest given either as binary XML or as UTF-8 text XML.
pub fn parse_axml(bytes: &[u8]) -> Result<AxmlDocument, ManifestError> {
    if axml::is_binary_xml(bytes) {
        return axml::parse(bytes);
    }
    let body = bytes.strip_prefix(b"\xef\xbb\xbf").unwrap_or(bytes);
    let first = body.iter().find(|b| !b.is_ascii_whitespace());
    if first == Some(&b'<') {
        let text = std::str::from_utf8(body).map_err(|_| ManifestError::UnsupportedFormat)?;
        return text::parse(text);
    }
    Err(ManifestError::UnsupportedFormat)
}

/// Permissions and intent-filter values in document order of first
/// occurrence, without repeats.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ManifestFeatures {
    pub permissions: Vec<String>,
    pub intent_values: Vec<String>,
}

impl ManifestFeatures {
    /// Debug dump, one `PERM\t<value>` or `INTENT\t<value>` line per feature.
    pub fn dump(&self) -> String {
        let perms = self.permissions.iter().map(|p| format!("PERM\t{p}\n"));
        let intents = self.intent_values.iter().map(|i| format!("INTENT\t{i}\n"));
        perms.chain(intents).collect()
    }
}

fn push_unique(list: &mut Vec<String>, value: &str) {
    if !list.iter().any(|v| v == value) {
        list.push(value.to_owned());
    }
}

/// Collects `uses-permission` names and the `action`/`category` names nested
/// anywhere inside an `intent-filter`.
pub fn extract_manifest_features(doc: &AxmlDocument) -> ManifestFeatures {
    let mut out = ManifestFeatures::default();
    let mut stack: Vec<&str> = Vec::new();
    let mut filter_depth = 0usize;
    for ev in &doc.events {
        match ev {
            XmlEvent::Start(el) => {
                let name = el.attr("name").and_then(AttrValue::as_str);
                match (el.name.as_str(), name) {
                    ("uses-permission", Some(n)) => push_unique(&mut out.permissions, n),
                    ("action" | "category", Some(n)) if filter_depth > 0 => push_unique(&mut out.intent_values, n),
                    _ => {}
                }
                if el.name == "intent-filter" {
                    filter_depth += 1;
                }
                stack.push(&el.name);
            }
            XmlEvent::End { .. } => {
                if stack.pop() == Some("intent-filter") {
                    filter_depth -= 1;
                }
            }
        }
    }
    out
}
