//! Dalvik executable (DEX) container parsing and code-token extraction.
//!
//! Only the tables needed to resolve `invoke-*` and `const-string` operands are
//! decoded: strings, types, prototypes, method references and class
//! definitions with their code items.

mod extract;
pub mod insn;
pub mod mutf8;

pub use extract::{extract_code_tokens, CodeTokens, DecodeError, DecodeWarning, RawToken, TokenKind};

use thiserror::Error;

pub const HEADER_SIZE: usize = 0x70;
pub const ENDIAN_CONSTANT: u32 = 0x1234_5678;
pub const NO_INDEX: u32 = 0xffff_ffff;

const SUPPORTED_VERSIONS: [&[u8; 3]; 5] = [b"035", b"036", b"037", b"038", b"039"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DexError {
    #[error("not a DEX file (bad magic)")]
    BadMagic,
    #[error("truncated: {what} at offset {offset:#x} (+{len}) exceeds file size {file_size:#x}")]
    Truncated {
        what: &'static str,
        offset: usize,
        len: usize,
        file_size: usize,
    },
    #[error("{table} index {index} out of bounds (size {size})")]
    IndexOutOfBounds {
        table: &'static str,
        index: u32,
        size: usize,
    },
    #[error("unsupported endian tag {0:#010x}")]
    BadEndianTag(u32),
    #[error("malformed uleb128 at offset {0:#x}")]
    BadLeb128(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    /// Three ASCII digits from the magic, e.g. `035`.
    pub version: u16,
    pub checksum: u32,
    pub file_size: u32,
    pub header_size: u32,
    pub endian_tag: u32,
    pub string_ids: Section,
    pub type_ids: Section,
    pub proto_ids: Section,
    pub field_ids: Section,
    pub method_ids: Section,
    pub class_defs: Section,
    pub data: Section,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Section {
    pub size: u32,
    pub offset: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtoId {
    pub shorty_idx: u32,
    pub return_type_idx: u32,
    pub parameters_off: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodId {
    pub class_idx: u16,
    pub proto_idx: u16,
    pub name_idx: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeItem {
    pub registers_size: u16,
    pub ins_size: u16,
    pub outs_size: u16,
    pub tries_size: u16,
    pub debug_info_off: u32,
    /// Instruction stream in 16-bit code units.
    pub insns: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedMethod {
    pub method_idx: u32,
    pub access_flags: u32,
    pub code: Option<CodeItem>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub class_idx: u32,
    pub access_flags: u32,
    pub superclass_idx: u32,
    pub class_data_off: u32,
    pub direct_methods: Vec<EncodedMethod>,
    pub virtual_methods: Vec<EncodedMethod>,
}

/// A parsed DEX file. Immutable once built; all index tables are validated
/// against each other during parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DexFile {
    pub header: Header,
    pub strings: Vec<String>,
    /// Descriptor string index for each type id.
    pub types: Vec<u32>,
    pub protos: Vec<ProtoId>,
    pub methods: Vec<MethodId>,
    pub class_defs: Vec<ClassDef>,
    /// Non-fatal problems found while parsing (e.g. undecodable strings).
    pub warnings: Vec<String>,
}

impl DexFile {
    pub fn string(&self, idx: u32) -> Option<&str> {
        self.strings.get(idx as usize).map(String::as_str)
    }

    pub fn type_descriptor(&self, type_idx: u32) -> Option<&str> {
        self.types.get(type_idx as usize).and_then(|&s| self.string(s))
    }

    /// Class descriptor and bare name of a method reference.
    pub fn method_ref(&self, method_idx: u32) -> Option<(&str, &str)> {
        let m = self.methods.get(method_idx as usize)?;
        Some((self.type_descriptor(m.class_idx as u32)?, self.string(m.name_idx)?))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn slice(&self, what: &'static str, offset: usize, len: usize) -> Result<&'a [u8], DexError> {
        match offset.checked_add(len) {
            Some(end) if end <= self.bytes.len() => Ok(&self.bytes[offset..end]),
            _ => Err(DexError::Truncated {
                what,
                offset,
                len,
                file_size: self.bytes.len(),
            }),
        }
    }

    fn u16(&self, what: &'static str, offset: usize) -> Result<u16, DexError> {
        let b = self.slice(what, offset, 2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&self, what: &'static str, offset: usize) -> Result<u32, DexError> {
        let b = self.slice(what, offset, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn uleb128(&self, offset: &mut usize) -> Result<u32, DexError> {
        let start = *offset;
        let mut result: u32 = 0;
        for i in 0..5 {
            let byte = *self.bytes.get(*offset).ok_or(DexError::Truncated {
                what: "uleb128",
                offset: *offset,
                len: 1,
                file_size: self.bytes.len(),
            })?;
            *offset += 1;
            result |= ((byte & 0x7f) as u32) << (7 * i);
            if byte & 0x80 == 0 {
                return Ok(result);
            }
        }
        Err(DexError::BadLeb128(start))
    }

    fn section(&self, what: &'static str, header_off: usize, entry_size: usize) -> Result<Section, DexError> {
        let size = self.u32(what, header_off)?;
        let offset = self.u32(what, header_off + 4)?;
        if size > 0 {
            self.slice(what, offset as usize, size as usize * entry_size)?;
        }
        Ok(Section { size, offset })
    }
}

fn check_index(table: &'static str, index: u32, size: usize) -> Result<(), DexError> {
    if (index as usize) < size {
        Ok(())
    } else {
        Err(DexError::IndexOutOfBounds { table, index, size })
    }
}

fn parse_version(bytes: &[u8]) -> Result<u16, DexError> {
    if bytes.len() < 8 || &bytes[0..4] != b"dex\n" || bytes[7] != 0 {
        return Err(DexError::BadMagic);
    }
    let digits: &[u8; 3] = bytes[4..7].try_into().expect("three bytes");
    if !SUPPORTED_VERSIONS.contains(&digits) {
        return Err(DexError::BadMagic);
    }
    Ok(digits.iter().fold(0u16, |acc, d| acc * 10 + (d - b'0') as u16))
}

/// Parses a little-endian DEX container.
pub fn parse_dex(bytes: &[u8]) -> Result<DexFile, DexError> {
    if bytes.is_empty() {
        return Err(DexError::Truncated {
            what: "header",
            offset: 0,
            len: HEADER_SIZE,
            file_size: 0,
        });
    }
    let version = parse_version(bytes)?;
    let r = Reader { bytes };
    r.slice("header", 0, HEADER_SIZE)?;

    let endian_tag = r.u32("header", 40)?;
    if endian_tag != ENDIAN_CONSTANT {
        return Err(DexError::BadEndianTag(endian_tag));
    }
    let header = Header {
        version,
        checksum: r.u32("header", 8)?,
        file_size: r.u32("header", 32)?,
        header_size: r.u32("header", 36)?,
        endian_tag,
        string_ids: r.section("string_ids", 56, 4)?,
        type_ids: r.section("type_ids", 64, 4)?,
        proto_ids: r.section("proto_ids", 72, 12)?,
        field_ids: r.section("field_ids", 80, 8)?,
        method_ids: r.section("method_ids", 88, 8)?,
        class_defs: r.section("class_defs", 96, 32)?,
        data: Section {
            size: r.u32("header", 104)?,
            offset: r.u32("header", 108)?,
        },
    };

    let mut warnings = Vec::new();
    let strings = parse_strings(&r, header.string_ids, &mut warnings)?;

    let mut types = Vec::with_capacity(header.type_ids.size as usize);
    for i in 0..header.type_ids.size as usize {
        let idx = r.u32("type_ids", header.type_ids.offset as usize + i * 4)?;
        check_index("string_ids", idx, strings.len())?;
        types.push(idx);
    }

    let mut protos = Vec::with_capacity(header.proto_ids.size as usize);
    for i in 0..header.proto_ids.size as usize {
        let base = header.proto_ids.offset as usize + i * 12;
        let proto = ProtoId {
            shorty_idx: r.u32("proto_ids", base)?,
            return_type_idx: r.u32("proto_ids", base + 4)?,
            parameters_off: r.u32("proto_ids", base + 8)?,
        };
        check_index("string_ids", proto.shorty_idx, strings.len())?;
        check_index("type_ids", proto.return_type_idx, types.len())?;
        protos.push(proto);
    }

    let mut methods = Vec::with_capacity(header.method_ids.size as usize);
    for i in 0..header.method_ids.size as usize {
        let base = header.method_ids.offset as usize + i * 8;
        let m = MethodId {
            class_idx: r.u16("method_ids", base)?,
            proto_idx: r.u16("method_ids", base + 2)?,
            name_idx: r.u32("method_ids", base + 4)?,
        };
        check_index("type_ids", m.class_idx as u32, types.len())?;
        check_index("proto_ids", m.proto_idx as u32, protos.len())?;
        check_index("string_ids", m.name_idx, strings.len())?;
        methods.push(m);
    }

    let mut class_defs = Vec::with_capacity(header.class_defs.size as usize);
    for i in 0..header.class_defs.size as usize {
        let base = header.class_defs.offset as usize + i * 32;
        let class_idx = r.u32("class_defs", base)?;
        check_index("type_ids", class_idx, types.len())?;
        let superclass_idx = r.u32("class_defs", base + 8)?;
        if superclass_idx != NO_INDEX {
            check_index("type_ids", superclass_idx, types.len())?;
        }
        let class_data_off = r.u32("class_defs", base + 24)?;
        let (direct_methods, virtual_methods) = if class_data_off == 0 {
            (Vec::new(), Vec::new())
        } else {
            parse_class_data(&r, class_data_off as usize, methods.len())?
        };
        class_defs.push(ClassDef {
            class_idx,
            access_flags: r.u32("class_defs", base + 4)?,
            superclass_idx,
            class_data_off,
            direct_methods,
            virtual_methods,
        });
    }

    Ok(DexFile {
        header,
        strings,
        types,
        protos,
        methods,
        class_defs,
        warnings,
    })
}

fn parse_strings(r: &Reader<'_>, section: Section, warnings: &mut Vec<String>) -> Result<Vec<String>, DexError> {
    let mut strings = Vec::with_capacity(section.size as usize);
    for i in 0..section.size as usize {
        let data_off = r.u32("string_ids", section.offset as usize + i * 4)? as usize;
        let mut cursor = data_off;
        let _utf16_len = r.uleb128(&mut cursor)?;
        let tail = r.slice("string_data", cursor, r.bytes.len().saturating_sub(cursor))?;
        let nul = tail.iter().position(|&b| b == 0).ok_or(DexError::Truncated {
            what: "string_data",
            offset: cursor,
            len: tail.len() + 1,
            file_size: r.bytes.len(),
        })?;
        match mutf8::decode(&tail[..nul]) {
            Ok(s) => strings.push(s),
            Err(e) => {
                let msg = format!("string {i}: {e}; replaced with empty string");
                log::warn!("{msg}");
                warnings.push(msg);
                strings.push(String::new());
            }
        }
    }
    Ok(strings)
}

fn parse_class_data(
    r: &Reader<'_>,
    offset: usize,
    method_count: usize,
) -> Result<(Vec<EncodedMethod>, Vec<EncodedMethod>), DexError> {
    let mut cursor = offset;
    let static_fields = r.uleb128(&mut cursor)?;
    let instance_fields = r.uleb128(&mut cursor)?;
    let direct_count = r.uleb128(&mut cursor)?;
    let virtual_count = r.uleb128(&mut cursor)?;
    for _ in 0..(static_fields as u64 + instance_fields as u64) {
        r.uleb128(&mut cursor)?;
        r.uleb128(&mut cursor)?;
    }
    let direct = parse_encoded_methods(r, &mut cursor, direct_count, method_count)?;
    let virtuals = parse_encoded_methods(r, &mut cursor, virtual_count, method_count)?;
    Ok((direct, virtuals))
}

fn parse_encoded_methods(
    r: &Reader<'_>,
    cursor: &mut usize,
    count: u32,
    method_count: usize,
) -> Result<Vec<EncodedMethod>, DexError> {
    // Each encoded method needs at least three bytes; a corrupt count must not
    // drive a huge allocation.
    let mut out = Vec::with_capacity((count as usize).min(r.bytes.len() / 3));
    let mut method_idx: u32 = 0;
    for _ in 0..count {
        let diff = r.uleb128(cursor)?;
        method_idx = method_idx.checked_add(diff).ok_or(DexError::IndexOutOfBounds {
            table: "method_ids",
            index: u32::MAX,
            size: method_count,
        })?;
        check_index("method_ids", method_idx, method_count)?;
        let access_flags = r.uleb128(cursor)?;
        let code_off = r.uleb128(cursor)?;
        let code = if code_off == 0 {
            None
        } else {
            Some(parse_code_item(r, code_off as usize)?)
        };
        out.push(EncodedMethod {
            method_idx,
            access_flags,
            code,
        });
    }
    Ok(out)
}

fn parse_code_item(r: &Reader<'_>, offset: usize) -> Result<CodeItem, DexError> {
    let insns_size = r.u32("code_item", offset + 12)? as usize;
    let raw = r.slice("code_item insns", offset + 16, insns_size * 2)?;
    Ok(CodeItem {
        registers_size: r.u16("code_item", offset)?,
        ins_size: r.u16("code_item", offset + 2)?,
        outs_size: r.u16("code_item", offset + 4)?,
        tries_size: r.u16("code_item", offset + 6)?,
        debug_info_off: r.u32("code_item", offset + 8)?,
        insns: raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{DexBuilder, MethodBody};

    fn minimal() -> Vec<u8> {
        let mut b = DexBuilder::new();
        let main = b.method("LMain;", "main");
        b.class("LMain;", vec![MethodBody::new(main, vec![0x000e])], vec![]);
        b.build()
    }

    #[test]
    fn minimal_fixture_fields() {
        let bytes = minimal();
        let dex = parse_dex(&bytes).unwrap();
        // "LMain;", "main", and the shorty/return descriptor "V"
        assert_eq!(dex.strings.len(), 3);
        assert_eq!(dex.class_defs.len(), 1);
        assert_eq!(dex.header.version, 35);
        assert_eq!(dex.header.file_size as usize, bytes.len());
        assert_eq!(dex.type_descriptor(dex.class_defs[0].class_idx), Some("LMain;"));
        assert_eq!(dex.method_ref(0), Some(("LMain;", "main")));
        let m = &dex.class_defs[0].direct_methods[0];
        assert_eq!(m.code.as_ref().unwrap().insns, vec![0x000e]);
        assert!(dex.class_defs[0].virtual_methods.is_empty());
    }

    #[test]
    fn zip_bytes_are_bad_magic() {
        assert_eq!(parse_dex(b"PK\x03\x04\x14\x00\x00\x00"), Err(DexError::BadMagic));
    }

    #[test]
    fn unknown_version_is_bad_magic() {
        let mut bytes = minimal();
        bytes[4..7].copy_from_slice(b"034");
        assert_eq!(parse_dex(&bytes), Err(DexError::BadMagic));
    }

    #[test]
    fn string_ids_offset_past_end_is_truncated() {
        let mut bytes = minimal();
        let past = (bytes.len() as u32 + 16).to_le_bytes();
        bytes[60..64].copy_from_slice(&past);
        assert!(matches!(
            parse_dex(&bytes),
            Err(DexError::Truncated { what: "string_ids", .. })
        ));
    }

    #[test]
    fn empty_and_short_inputs() {
        assert!(matches!(parse_dex(&[]), Err(DexError::Truncated { .. })));
        assert!(matches!(parse_dex(b"dex\n035\0"), Err(DexError::Truncated { .. })));
    }

    #[test]
    fn corrupt_method_class_index() {
        let mut bytes = minimal();
        let dex = parse_dex(&bytes).unwrap();
        let off = dex.header.method_ids.offset as usize;
        bytes[off..off + 2].copy_from_slice(&99u16.to_le_bytes());
        assert_eq!(
            parse_dex(&bytes),
            Err(DexError::IndexOutOfBounds {
                table: "type_ids",
                index: 99,
                size: 2
            })
        );
    }

    #[test]
    fn bad_mutf8_string_becomes_empty_with_warning() {
        let mut b = DexBuilder::new();
        let main = b.method("LMain;", "main");
        let s = b.string("zz\u{e9}zz");
        b.class("LMain;", vec![MethodBody::new(main, vec![0x000e])], vec![]);
        let mut bytes = b.build();
        let dex = parse_dex(&bytes).unwrap();
        let data_off = u32::from_le_bytes(
            bytes[dex.header.string_ids.offset as usize + 4 * s as usize..][..4]
                .try_into()
                .unwrap(),
        ) as usize;
        // skip the one-byte length, then break the continuation byte of 'é'
        bytes[data_off + 1 + 3] = 0x41;
        let dex = parse_dex(&bytes).unwrap();
        assert_eq!(dex.strings[s as usize], "");
        assert_eq!(dex.warnings.len(), 1);
    }
}
