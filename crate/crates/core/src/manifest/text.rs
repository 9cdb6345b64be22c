//! Plain-text XML manifests, mapped onto the same event model as binary XML.

use std::collections::HashMap;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{AttrValue, Attribute, AxmlDocument, Element, ManifestError, XmlEvent};

fn split_qname(qname: &str) -> (Option<&str>, &str) {
    match qname.split_once(':') {
        Some((prefix, local)) => (Some(prefix), local),
        None => (None, qname),
    }
}

fn malformed(e: impl std::fmt::Display) -> ManifestError {
    ManifestError::Malformed(e.to_string())
}

pub(super) fn parse(text: &str) -> Result<AxmlDocument, ManifestError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    // prefix -> URI, one frame per open element
    let mut scopes: Vec<HashMap<String, String>> = Vec::new();
    let mut open: Vec<String> = Vec::new();
    let mut events = Vec::new();

    loop {
        match reader.read_event().map_err(malformed)? {
            Event::Start(e) => {
                let (el, scope) = element(&e, &scopes)?;
                open.push(String::from_utf8_lossy(e.name().as_ref()).into_owned());
                scopes.push(scope);
                events.push(XmlEvent::Start(el));
            }
            Event::Empty(e) => {
                let (el, _) = element(&e, &scopes)?;
                let (namespace, name) = (el.namespace.clone(), el.name.clone());
                events.push(XmlEvent::Start(el));
                events.push(XmlEvent::End { namespace, name });
            }
            Event::End(e) => {
                let qname = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if open.pop().as_deref() != Some(qname.as_str()) {
                    return Err(malformed(format!("unexpected </{qname}>")));
                }
                let scope = scopes.pop().unwrap_or_default();
                let (prefix, local) = split_qname(&qname);
                let namespace = prefix.and_then(|p| resolve(p, &scope, &scopes));
                events.push(XmlEvent::End {
                    namespace,
                    name: local.to_owned(),
                });
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if let Some(name) = open.last() {
        return Err(malformed(format!("element <{name}> is never closed")));
    }
    Ok(AxmlDocument {
        strings: Vec::new(),
        events,
    })
}

fn resolve(prefix: &str, current: &HashMap<String, String>, outer: &[HashMap<String, String>]) -> Option<String> {
    current
        .get(prefix)
        .or_else(|| outer.iter().rev().find_map(|s| s.get(prefix)))
        .cloned()
        .or_else(|| Some(prefix.to_owned()))
}

fn element(
    e: &BytesStart<'_>,
    scopes: &[HashMap<String, String>],
) -> Result<(Element, HashMap<String, String>), ManifestError> {
    let mut scope = HashMap::new();
    let mut raw_attrs = Vec::new();
    for attr in e.attributes() {
        let attr = attr.map_err(malformed)?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr.unescape_value().map_err(malformed)?.into_owned();
        if let Some(prefix) = key.strip_prefix("xmlns:") {
            scope.insert(prefix.to_owned(), value);
        } else if key != "xmlns" {
            raw_attrs.push((key, value));
        }
    }
    let attributes = raw_attrs
        .into_iter()
        .map(|(key, value)| {
            let (prefix, local) = split_qname(&key);
            Attribute {
                namespace: prefix.and_then(|p| resolve(p, &scope, scopes)),
                name: local.to_owned(),
                value: AttrValue::String(value),
            }
        })
        .collect();
    let qname = String::from_utf8_lossy(e.name().as_ref()).into_owned();
    let (prefix, local) = split_qname(&qname);
    let el = Element {
        namespace: prefix.and_then(|p| resolve(p, &scope, scopes)),
        name: local.to_owned(),
        attributes,
    };
    Ok((el, scope))
}
