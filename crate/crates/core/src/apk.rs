//! Minimal ZIP reader for APK containers.
//!
//! Reads the central directory and extracts stored or deflated entries.
//! Zip64, encryption and other compression methods are rejected.

use std::io::Read;

use flate2::read::DeflateDecoder;
use thiserror::Error;

const LOCAL_SIG: u32 = 0x0403_4b50;
const CENTRAL_SIG: u32 = 0x0201_4b50;
const EOCD_SIG: u32 = 0x0605_4b50;
const EOCD_LEN: usize = 22;
const MAX_COMMENT: usize = 0xffff;

pub const METHOD_STORED: u16 = 0;
pub const METHOD_DEFLATE: u16 = 8;

pub const MANIFEST_ENTRY: &str = "AndroidManifest.xml";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ApkError {
    #[error("not an APK (no ZIP signature)")]
    NotAnApk,
    #[error("ZIP structure truncated or corrupt: {0}")]
    Corrupt(String),
    #[error("entry {name}: unsupported compression method {method}")]
    UnsupportedMethod { name: String, method: u16 },
    #[error("entry {0} is encrypted")]
    Encrypted(String),
    #[error("entry {0} needs Zip64, which is not supported")]
    Zip64(String),
    #[error("entry {name}: {reason}")]
    Inflate { name: String, reason: String },
    #[error("entry {name}: CRC mismatch (expected {expected:08x}, got {got:08x})")]
    CrcMismatch { name: String, expected: u32, got: u32 },
    #[error("APK has no classes.dex")]
    MissingDex,
    #[error("APK has no AndroidManifest.xml")]
    MissingManifest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZipEntry {
    pub name: String,
    pub method: u16,
    pub flags: u16,
    pub crc32: u32,
    pub compressed_size: u32,
    pub size: u32,
    local_offset: u32,
}

#[derive(Debug, Clone)]
pub struct ApkArchive<'a> {
    bytes: &'a [u8],
    entries: Vec<ZipEntry>,
}

fn u16_at(b: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_le_bytes(b.get(at..at + 2)?.try_into().ok()?))
}

fn u32_at(b: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes(b.get(at..at + 4)?.try_into().ok()?))
}

fn corrupt(what: &str) -> ApkError {
    ApkError::Corrupt(what.to_string())
}

/// Position in `classes.dex`, `classes2.dex`, ... order, or `None` for
/// other names.
pub fn dex_index(name: &str) -> Option<u32> {
    let n = name.strip_prefix("classes")?.strip_suffix(".dex")?;
    if n.is_empty() {
        return Some(1);
    }
    if n.starts_with('0') || !n.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    n.parse().ok().filter(|&i| i >= 2)
}

impl<'a> ApkArchive<'a> {
    pub fn open(bytes: &'a [u8]) -> Result<Self, ApkError> {
        if !bytes.starts_with(b"PK") {
            return Err(ApkError::NotAnApk);
        }
        let lowest = bytes.len().saturating_sub(EOCD_LEN + MAX_COMMENT);
        let eocd = (lowest..=bytes.len().saturating_sub(EOCD_LEN))
            .rev()
            .find(|&i| u32_at(bytes, i) == Some(EOCD_SIG))
            .ok_or(ApkError::NotAnApk)?;
        let count = u16_at(bytes, eocd + 10).ok_or_else(|| corrupt("end record"))? as usize;
        let cd_size = u32_at(bytes, eocd + 12).ok_or_else(|| corrupt("end record"))? as usize;
        let cd_off = u32_at(bytes, eocd + 16).ok_or_else(|| corrupt("end record"))? as usize;
        if cd_off == 0xffff_ffff || count == 0xffff {
            return Err(ApkError::Zip64("<archive>".into()));
        }
        if cd_off.checked_add(cd_size).map_or(true, |end| end > eocd) {
            return Err(corrupt("central directory outside archive"));
        }

        let mut entries = Vec::with_capacity(count);
        let mut p = cd_off;
        for _ in 0..count {
            if u32_at(bytes, p) != Some(CENTRAL_SIG) {
                return Err(corrupt("bad central directory signature"));
            }
            let field = |off: usize| u16_at(bytes, p + off).ok_or_else(|| corrupt("central directory"));
            let field32 = |off: usize| u32_at(bytes, p + off).ok_or_else(|| corrupt("central directory"));
            let name_len = field(28)? as usize;
            let extra_len = field(30)? as usize;
            let comment_len = field(32)? as usize;
            let name_bytes = bytes
                .get(p + 46..p + 46 + name_len)
                .ok_or_else(|| corrupt("entry name"))?;
            entries.push(ZipEntry {
                name: String::from_utf8_lossy(name_bytes).into_owned(),
                flags: field(8)?,
                method: field(10)?,
                crc32: field32(16)?,
                compressed_size: field32(20)?,
                size: field32(24)?,
                local_offset: field32(42)?,
            });
            p += 46 + name_len + extra_len + comment_len;
        }
        Ok(Self { bytes, entries })
    }

    pub fn entries(&self) -> &[ZipEntry] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<&ZipEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Decompressed contents of `name`, or `None` if absent.
    pub fn read(&self, name: &str) -> Result<Option<Vec<u8>>, ApkError> {
        self.find(name).map(|e| self.read_entry(e)).transpose()
    }

    pub fn read_entry(&self, e: &ZipEntry) -> Result<Vec<u8>, ApkError> {
        if e.flags & 1 != 0 {
            return Err(ApkError::Encrypted(e.name.clone()));
        }
        if e.size == u32::MAX || e.compressed_size == u32::MAX || e.local_offset == u32::MAX {
            return Err(ApkError::Zip64(e.name.clone()));
        }
        let lo = e.local_offset as usize;
        if u32_at(self.bytes, lo) != Some(LOCAL_SIG) {
            return Err(corrupt(&format!("bad local header for {}", e.name)));
        }
        let name_len = u16_at(self.bytes, lo + 26).ok_or_else(|| corrupt("local header"))? as usize;
        let extra_len = u16_at(self.bytes, lo + 28).ok_or_else(|| corrupt("local header"))? as usize;
        let start = lo + 30 + name_len + extra_len;
        let raw = self
            .bytes
            .get(start..start + e.compressed_size as usize)
            .ok_or_else(|| corrupt(&format!("data of {} past end of archive", e.name)))?;

        let data = match e.method {
            METHOD_STORED => raw.to_vec(),
            METHOD_DEFLATE => {
                let mut out = Vec::with_capacity(e.size as usize);
                DeflateDecoder::new(raw)
                    .take(e.size as u64 + 1)
                    .read_to_end(&mut out)
                    .map_err(|err| ApkError::Inflate {
                        name: e.name.clone(),
                        reason: err.to_string(),
                    })?;
                out
            }
            method => {
                return Err(ApkError::UnsupportedMethod {
                    name: e.name.clone(),
                    method,
                })
            }
        };
        if data.len() != e.size as usize {
            return Err(ApkError::Inflate {
                name: e.name.clone(),
                reason: format!("expected {} bytes, got {}", e.size, data.len()),
            });
        }
        let got = crc32fast::hash(&data);
        if got != e.crc32 {
            return Err(ApkError::CrcMismatch {
                name: e.name.clone(),
                expected: e.crc32,
                got,
            });
        }
        Ok(data)
    }

    /// Root-level DEX entries in loading order: `classes.dex`, then
    /// `classes2.dex`, `classes3.dex`, ... by number.
    pub fn dex_entries(&self) -> Vec<&ZipEntry> {
        let mut dex: Vec<(u32, &ZipEntry)> = self
            .entries
            .iter()
            .filter_map(|e| dex_index(&e.name).map(|i| (i, e)))
            .collect();
        dex.sort_by_key(|&(i, _)| i);
        dex.dedup_by_key(|&mut (i, _)| i);
        dex.into_iter().map(|(_, e)| e).collect()
    }
}

/// The manifest and DEX images of one APK.
#[derive(Debug, Clone)]
pub struct ApkContents {
    pub manifest: Vec<u8>,
    /// `(entry name, bytes)` in loading order.
    pub dex: Vec<(String, Vec<u8>)>,
}

pub fn read_apk(bytes: &[u8]) -> Result<ApkContents, ApkError> {
    let zip = ApkArchive::open(bytes)?;
    let manifest = zip.read(MANIFEST_ENTRY)?.ok_or(ApkError::MissingManifest)?;
    let entries = zip.dex_entries();
    if entries.first().map(|e| e.name.as_str()) != Some("classes.dex") {
        return Err(ApkError::MissingDex);
    }
    let dex = entries
        .into_iter()
        .map(|e| Ok((e.name.clone(), zip.read_entry(e)?)))
        .collect::<Result<_, ApkError>>()?;
    Ok(ApkContents { manifest, dex })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::ApkBuilder;

    #[test]
    fn dex_names() {
        assert_eq!(dex_index("classes.dex"), Some(1));
        assert_eq!(dex_index("classes2.dex"), Some(2));
        assert_eq!(dex_index("classes10.dex"), Some(10));
        for bad in [
            "classes1.dex",
            "classes02.dex",
            "classesX.dex",
            "lib/classes.dex",
            "classes.dex.bak",
        ] {
            assert_eq!(dex_index(bad), None, "{bad}");
        }
    }

    #[test]
    fn stored_and_deflated_entries() {
        let big = b"abcabcabc".repeat(500);
        let bytes = ApkBuilder::new()
            .stored("a.txt", b"hello")
            .deflated("b.bin", &big)
            .build();
        let zip = ApkArchive::open(&bytes).unwrap();
        assert_eq!(zip.entries().len(), 2);
        assert_eq!(zip.read("a.txt").unwrap().unwrap(), b"hello");
        assert_eq!(zip.read("b.bin").unwrap().unwrap(), big);
        assert!(zip.find("b.bin").unwrap().compressed_size < big.len() as u32);
        assert_eq!(zip.read("c").unwrap(), None);
    }

    #[test]
    fn dex_order_is_numeric() {
        let bytes = ApkBuilder::new()
            .stored("classes10.dex", b"10")
            .stored("classes2.dex", b"2")
            .stored("AndroidManifest.xml", b"<manifest/>")
            .stored("classes.dex", b"1")
            .stored("assets/classes3.dex", b"x")
            .build();
        let apk = read_apk(&bytes).unwrap();
        let names: Vec<_> = apk.dex.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["classes.dex", "classes2.dex", "classes10.dex"]);
        assert_eq!(apk.manifest, b"<manifest/>");
    }

    #[test]
    fn not_an_apk() {
        assert_eq!(ApkArchive::open(b"just some text\n").unwrap_err(), ApkError::NotAnApk);
        assert_eq!(ApkArchive::open(b"").unwrap_err(), ApkError::NotAnApk);
        assert_eq!(
            ApkArchive::open(b"PK\x03\x04 but nothing else").unwrap_err(),
            ApkError::NotAnApk
        );
    }

    #[test]
    fn missing_parts() {
        let no_dex = ApkBuilder::new().stored("AndroidManifest.xml", b"<manifest/>").build();
        assert_eq!(read_apk(&no_dex).unwrap_err(), ApkError::MissingDex);
        let only_second = ApkBuilder::new()
            .stored("AndroidManifest.xml", b"<manifest/>")
            .stored("classes2.dex", b"2")
            .build();
        assert_eq!(read_apk(&only_second).unwrap_err(), ApkError::MissingDex);
        let no_manifest = ApkBuilder::new().stored("classes.dex", b"1").build();
        assert_eq!(read_apk(&no_manifest).unwrap_err(), ApkError::MissingManifest);
    }

    #[test]
    fn crc_and_method_checks() {
        let mut bytes = ApkBuilder::new().stored("a.txt", b"hello").build();
        let at = bytes.windows(5).position(|w| w == b"hello").unwrap();
        bytes[at] = b'j';
        assert!(matches!(
            ApkArchive::open(&bytes).unwrap().read("a.txt"),
            Err(ApkError::CrcMismatch { .. })
        ));

        let mut bytes = ApkBuilder::new().stored("a.txt", b"hello").build();
        let cd = bytes.windows(4).position(|w| w == CENTRAL_SIG.to_le_bytes()).unwrap();
        bytes[cd + 10] = 12; // bzip2
        assert_eq!(
            ApkArchive::open(&bytes).unwrap().read("a.txt"),
            Err(ApkError::UnsupportedMethod {
                name: "a.txt".into(),
                method: 12
            })
        );
    }

    #[test]
    fn truncated_central_directory() {
        let bytes = ApkBuilder::new().stored("a.txt", b"hello").build();
        let eocd = bytes.len() - EOCD_LEN;
        let mut cut = bytes[..eocd - 10].to_vec();
        cut.extend_from_slice(&bytes[eocd..]);
        assert!(matches!(ApkArchive::open(&cut), Err(ApkError::Corrupt(_))));
    }
}
