//! Android binary XML (AXML) decoding.
//!
//! The document is a sequence of chunks, each starting with
//! `type: u16, header_size: u16, size: u32`. Only the string pool, the
//! resource map and element chunks carry information needed here.

use super::{AttrValue, Attribute, AxmlDocument, Element, ManifestError, XmlEvent};

pub mod chunk {
    pub const STRING_POOL: u16 = 0x0001;
    pub const XML: u16 = 0x0003;
    pub const START_NAMESPACE: u16 = 0x0100;
    pub const END_NAMESPACE: u16 = 0x0101;
    pub const START_ELEMENT: u16 = 0x0102;
    pub const END_ELEMENT: u16 = 0x0103;
    pub const CDATA: u16 = 0x0104;
    pub const RESOURCE_MAP: u16 = 0x0180;
}

pub const ANDROID_NS_URI: &str = "http://schemas.android.com/apk/res/android";
pub const NO_ENTRY: u32 = 0xffff_ffff;
pub const UTF8_FLAG: u32 = 0x100;

pub const TYPE_NULL: u8 = 0x00;
pub const TYPE_REFERENCE: u8 = 0x01;
pub const TYPE_STRING: u8 = 0x03;
pub const TYPE_INT_DEC: u8 = 0x10;
pub const TYPE_INT_HEX: u8 = 0x11;
pub const TYPE_INT_BOOLEAN: u8 = 0x12;

pub const ATTR_NAME_RESOURCE_ID: u32 = 0x0101_0003;

/// Framework attribute names for resource ids that obfuscators commonly
/// substitute for an empty pool string.
fn framework_attr_name(id: u32) -> Option<&'static str> {
    Some(match id {
        0x0101_0000 => "theme",
        0x0101_0001 => "label",
        0x0101_0002 => "icon",
        0x0101_0003 => "name",
        0x0101_0006 => "permission",
        0x0101_0010 => "exported",
        0x0101_001f => "priority",
        0x0101_020c => "minSdkVersion",
        0x0101_0270 => "targetSdkVersion",
        _ => return None,
    })
}

struct Bytes<'a>(&'a [u8]);

impl Bytes<'_> {
    fn u16(&self, at: usize) -> Result<u16, ManifestError> {
        match self.0.get(at..at + 2) {
            Some(b) => Ok(u16::from_le_bytes([b[0], b[1]])),
            None => Err(ManifestError::Truncated { offset: at }),
        }
    }

    fn u32(&self, at: usize) -> Result<u32, ManifestError> {
        match self.0.get(at..at + 4) {
            Some(b) => Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            None => Err(ManifestError::Truncated { offset: at }),
        }
    }

    fn u8(&self, at: usize) -> Result<u8, ManifestError> {
        self.0.get(at).copied().ok_or(ManifestError::Truncated { offset: at })
    }
}

pub fn is_binary_xml(bytes: &[u8]) -> bool {
    bytes.len() >= 4 && u16::from_le_bytes([bytes[0], bytes[1]]) == chunk::XML && bytes[2] >= 8
}

pub(super) fn parse(bytes: &[u8]) -> Result<AxmlDocument, ManifestError> {
    let b = Bytes(bytes);
    let header_size = b.u16(2)? as usize;
    let declared = b.u32(4)? as usize;
    let end = if declared >= header_size && declared <= bytes.len() {
        declared
    } else {
        bytes.len()
    };

    let mut strings: Vec<String> = Vec::new();
    let mut resource_ids: Vec<u32> = Vec::new();
    let mut events = Vec::new();
    let mut open: Vec<(Option<String>, String)> = Vec::new();

    let mut at = header_size;
    while at + 8 <= end {
        let ty = b.u16(at)?;
        let hsize = b.u16(at + 2)? as usize;
        let size = b.u32(at + 4)? as usize;
        if size < 8 || hsize < 8 || hsize > size {
            return Err(ManifestError::Malformed(format!("bad chunk header at {at:#x}")));
        }
        if at + size > end {
            return Err(ManifestError::Truncated { offset: at + size });
        }
        match ty {
            chunk::STRING_POOL => strings = parse_string_pool(&b, at, hsize, size)?,
            chunk::RESOURCE_MAP => {
                resource_ids = (0..(size - hsize) / 4)
                    .map(|i| b.u32(at + hsize + 4 * i))
                    .collect::<Result<_, _>>()?;
            }
            chunk::START_ELEMENT => {
                let ext = at + hsize;
                let namespace = lookup(&strings, b.u32(ext)?)?;
                let name = lookup(&strings, b.u32(ext + 4)?)?.unwrap_or_default();
                let attr_start = b.u16(ext + 8)? as usize;
                let attr_size = b.u16(ext + 10)? as usize;
                let attr_count = b.u16(ext + 12)? as usize;
                if attr_size < 20 && attr_count > 0 {
                    return Err(ManifestError::Malformed(format!(
                        "attribute size {attr_size} at {at:#x}"
                    )));
                }
                let mut attributes = Vec::with_capacity(attr_count);
                for i in 0..attr_count {
                    let a = ext + attr_start + i * attr_size;
                    if a + 20 > at + size {
                        return Err(ManifestError::Truncated { offset: a + 20 });
                    }
                    let ns = lookup(&strings, b.u32(a)?)?;
                    let name_idx = b.u32(a + 4)?;
                    let mut attr_name = lookup(&strings, name_idx)?.unwrap_or_default();
                    if attr_name.is_empty() {
                        if let Some(n) = resource_ids
                            .get(name_idx as usize)
                            .and_then(|&id| framework_attr_name(id))
                        {
                            attr_name = n.to_owned();
                        }
                    }
                    let raw = b.u32(a + 8)?;
                    let data_type = b.u8(a + 15)?;
                    let data = b.u32(a + 16)?;
                    let value = match (data_type, lookup(&strings, raw)?) {
                        (_, Some(s)) => AttrValue::String(s),
                        (TYPE_STRING, None) => AttrValue::String(lookup(&strings, data)?.unwrap_or_default()),
                        (TYPE_REFERENCE, None) => AttrValue::Reference(data),
                        (TYPE_INT_BOOLEAN, None) => AttrValue::Bool(data != 0),
                        (TYPE_INT_DEC | TYPE_INT_HEX, None) => AttrValue::Int(data as i32),
                        (TYPE_NULL, None) => AttrValue::Null,
                        (other, None) => AttrValue::Other { data_type: other, data },
                    };
                    attributes.push(Attribute {
                        namespace: ns,
                        name: attr_name,
                        value,
                    });
                }
                open.push((namespace.clone(), name.clone()));
                events.push(XmlEvent::Start(Element {
                    namespace,
                    name,
                    attributes,
                }));
            }
            chunk::END_ELEMENT => {
                let ext = at + hsize;
                let namespace = lookup(&strings, b.u32(ext)?)?;
                let name = lookup(&strings, b.u32(ext + 4)?)?.unwrap_or_default();
                match open.pop() {
                    Some((_, open_name)) if open_name == name => {}
                    other => {
                        return Err(ManifestError::Malformed(format!(
                            "end element </{name}> does not match {:?}",
                            other.map(|(_, n)| n)
                        )))
                    }
                }
                events.push(XmlEvent::End { namespace, name });
            }
            _ => {}
        }
        at += size;
    }
    if let Some((_, name)) = open.last() {
        return Err(ManifestError::Malformed(format!("element <{name}> is never closed")));
    }
    Ok(AxmlDocument { strings, events })
}

fn lookup(strings: &[String], idx: u32) -> Result<Option<String>, ManifestError> {
    if idx == NO_ENTRY {
        return Ok(None);
    }
    strings
        .get(idx as usize)
        .cloned()
        .map(Some)
        .ok_or(ManifestError::BadStringIndex(idx))
}

fn parse_string_pool(b: &Bytes<'_>, at: usize, hsize: usize, size: usize) -> Result<Vec<String>, ManifestError> {
    let count = b.u32(at + 8)? as usize;
    let flags = b.u32(at + 16)?;
    let strings_start = b.u32(at + 20)? as usize;
    let chunk_end = at + size;
    if at + hsize + 4 * count > chunk_end {
        return Err(ManifestError::Truncated {
            offset: at + hsize + 4 * count,
        });
    }
    let utf8 = flags & UTF8_FLAG != 0;
    let mut strings = Vec::with_capacity(count);
    for i in 0..count {
        let off = at + strings_start + b.u32(at + hsize + 4 * i)? as usize;
        if off >= chunk_end {
            return Err(ManifestError::Truncated { offset: off });
        }
        let s = if utf8 {
            read_utf8(b, off, chunk_end)?
        } else {
            read_utf16(b, off, chunk_end)?
        };
        strings.push(s);
    }
    Ok(strings)
}

fn read_len8(b: &Bytes<'_>, at: &mut usize) -> Result<usize, ManifestError> {
    let first = b.u8(*at)? as usize;
    *at += 1;
    if first & 0x80 != 0 {
        let second = b.u8(*at)? as usize;
        *at += 1;
        Ok(((first & 0x7f) << 8) | second)
    } else {
        Ok(first)
    }
}

fn read_utf8(b: &Bytes<'_>, mut at: usize, end: usize) -> Result<String, ManifestError> {
    let _utf16_len = read_len8(b, &mut at)?;
    let len = read_len8(b, &mut at)?;
    if at + len > end {
        return Err(ManifestError::Truncated { offset: at + len });
    }
    Ok(String::from_utf8_lossy(&b.0[at..at + len]).into_owned())
}

fn read_utf16(b: &Bytes<'_>, mut at: usize, end: usize) -> Result<String, ManifestError> {
    let mut len = b.u16(at)? as usize;
    at += 2;
    if len & 0x8000 != 0 {
        len = ((len & 0x7fff) << 16) | b.u16(at)? as usize;
        at += 2;
    }
    if at + 2 * len > end {
        return Err(ManifestError::Truncated { offset: at + 2 * len });
    }
    let units: Vec<u16> = (0..len).map(|i| b.u16(at + 2 * i)).collect::<Result<_, _>>()?;
    Ok(String::from_utf16_lossy(&units))
}
