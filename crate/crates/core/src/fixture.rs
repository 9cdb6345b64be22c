//! Byte-level builders for DEX, binary XML and APK (ZIP) inputs.
//!
//! These produce small, well-formed containers laid out per the published
//! formats. They are used by the test suites and by `apkseq` tooling that
//! needs synthetic inputs; they are not general-purpose writers.

use std::collections::HashMap;
use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;

use crate::dex::mutf8;
use crate::manifest::axml::{chunk, ANDROID_NS_URI, ATTR_NAME_RESOURCE_ID, NO_ENTRY, TYPE_STRING, UTF8_FLAG};
use crate::manifest::escape;

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_uleb128(out: &mut Vec<u8>, mut v: u32) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn align(out: &mut Vec<u8>, to: usize) {
    while out.len() % to != 0 {
        out.push(0);
    }
}

fn set_u32(out: &mut [u8], at: usize, v: u32) {
    out[at..at + 4].copy_from_slice(&v.to_le_bytes());
}

/// One method with a code item.
#[derive(Debug, Clone)]
pub struct MethodBody {
    pub method_idx: u32,
    pub access_flags: u32,
    pub insns: Vec<u16>,
}

impl MethodBody {
    pub fn new(method_idx: u32, insns: Vec<u16>) -> Self {
        Self {
            method_idx,
            access_flags: 0x0001,
            insns,
        }
    }
}

#[derive(Debug, Clone)]
struct ClassSpec {
    type_idx: u32,
    direct: Vec<MethodBody>,
    virtuals: Vec<MethodBody>,
}

/// Builds a minimal DEX file. Every method shares a single `()V` prototype.
#[derive(Debug, Clone)]
pub struct DexBuilder {
    version: u16,
    strings: Vec<String>,
    string_index: HashMap<String, u32>,
    types: Vec<u32>,
    type_index: HashMap<u32, u32>,
    proto: Option<(u32, u32)>,
    methods: Vec<(u32, u32)>,
    classes: Vec<ClassSpec>,
}

/// Output of [`DexBuilder::build_with_layout`].
#[derive(Debug, Clone)]
pub struct DexLayout {
    pub bytes: Vec<u8>,
    /// Byte offset of each method's instruction array, in traversal order
    /// (classes in order, direct before virtual methods).
    pub insns_offsets: Vec<usize>,
}

impl Default for DexBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl DexBuilder {
    pub fn new() -> Self {
        Self {
            version: 35,
            strings: Vec::new(),
            string_index: HashMap::new(),
            types: Vec::new(),
            type_index: HashMap::new(),
            proto: None,
            methods: Vec::new(),
            classes: Vec::new(),
        }
    }

    pub fn version(mut self, version: u16) -> Self {
        self.version = version;
        self
    }

    pub fn string(&mut self, s: &str) -> u32 {
        if let Some(&idx) = self.string_index.get(s) {
            return idx;
        }
        let idx = self.strings.len() as u32;
        self.strings.push(s.to_owned());
        self.string_index.insert(s.to_owned(), idx);
        idx
    }

    pub fn type_id(&mut self, descriptor: &str) -> u32 {
        let s = self.string(descriptor);
        if let Some(&idx) = self.type_index.get(&s) {
            return idx;
        }
        let idx = self.types.len() as u32;
        self.types.push(s);
        self.type_index.insert(s, idx);
        idx
    }

    /// Adds (or reuses) a method reference `class->name` and returns its index.
    pub fn method(&mut self, class: &str, name: &str) -> u32 {
        let class_idx = self.type_id(class);
        if self.proto.is_none() {
            let shorty = self.string("V");
            let ret = self.type_id("V");
            self.proto = Some((shorty, ret));
        }
        let name_idx = self.string(name);
        if let Some(pos) = self.methods.iter().position(|&m| m == (class_idx, name_idx)) {
            return pos as u32;
        }
        self.methods.push((class_idx, name_idx));
        (self.methods.len() - 1) as u32
    }

    /// Adds a class definition. Methods within each list are emitted sorted by
    /// method index, as the encoding requires.
    pub fn class(&mut self, descriptor: &str, mut direct: Vec<MethodBody>, mut virtuals: Vec<MethodBody>) {
        let type_idx = self.type_id(descriptor);
        direct.sort_by_key(|m| m.method_idx);
        virtuals.sort_by_key(|m| m.method_idx);
        self.classes.push(ClassSpec {
            type_idx,
            direct,
            virtuals,
        });
    }

    pub fn build(&self) -> Vec<u8> {
        self.build_with_layout().bytes
    }

    pub fn build_with_layout(&self) -> DexLayout {
        let protos: Vec<(u32, u32)> = self.proto.into_iter().collect();
        let string_ids_off = crate::dex::HEADER_SIZE;
        let type_ids_off = string_ids_off + 4 * self.strings.len();
        let proto_ids_off = type_ids_off + 4 * self.types.len();
        let method_ids_off = proto_ids_off + 12 * protos.len();
        let class_defs_off = method_ids_off + 8 * self.methods.len();
        let data_off = class_defs_off + 32 * self.classes.len();

        let mut out = vec![0u8; data_off];
        out[0..8].copy_from_slice(format!("dex\n{:03}\0", self.version).as_bytes());
        set_u32(&mut out, 36, crate::dex::HEADER_SIZE as u32);
        set_u32(&mut out, 40, crate::dex::ENDIAN_CONSTANT);
        let sections = [
            (56, self.strings.len(), string_ids_off),
            (64, self.types.len(), type_ids_off),
            (72, protos.len(), proto_ids_off),
            (88, self.methods.len(), method_ids_off),
            (96, self.classes.len(), class_defs_off),
        ];
        for (at, size, off) in sections {
            set_u32(&mut out, at, size as u32);
            set_u32(&mut out, at + 4, if size == 0 { 0 } else { off as u32 });
        }

        for (i, s) in self.strings.iter().enumerate() {
            let (encoded, utf16_len) = mutf8::encode(s);
            let here = out.len() as u32;
            set_u32(&mut out, string_ids_off + 4 * i, here);
            push_uleb128(&mut out, utf16_len as u32);
            out.extend_from_slice(&encoded);
            out.push(0);
        }
        for (i, &s) in self.types.iter().enumerate() {
            set_u32(&mut out, type_ids_off + 4 * i, s);
        }
        for (i, &(shorty, ret)) in protos.iter().enumerate() {
            set_u32(&mut out, proto_ids_off + 12 * i, shorty);
            set_u32(&mut out, proto_ids_off + 12 * i + 4, ret);
        }
        for (i, &(class_idx, name_idx)) in self.methods.iter().enumerate() {
            let at = method_ids_off + 8 * i;
            out[at..at + 2].copy_from_slice(&(class_idx as u16).to_le_bytes());
            out[at + 4..at + 8].copy_from_slice(&name_idx.to_le_bytes());
        }

        // Code items first so class_data can point at them.
        let mut insns_offsets = Vec::new();
        let mut code_offsets: Vec<Vec<u32>> = Vec::new();
        for class in &self.classes {
            let mut offs = Vec::new();
            for m in class.direct.iter().chain(&class.virtuals) {
                align(&mut out, 4);
                offs.push(out.len() as u32);
                push_u16(&mut out, 1); // registers
                push_u16(&mut out, 1); // ins
                push_u16(&mut out, 0); // outs
                push_u16(&mut out, 0); // tries
                push_u32(&mut out, 0); // debug_info_off
                push_u32(&mut out, m.insns.len() as u32);
                insns_offsets.push(out.len());
                for &unit in &m.insns {
                    push_u16(&mut out, unit);
                }
            }
            code_offsets.push(offs);
        }

        for (i, class) in self.classes.iter().enumerate() {
            let class_data_off = out.len() as u32;
            push_uleb128(&mut out, 0);
            push_uleb128(&mut out, 0);
            push_uleb128(&mut out, class.direct.len() as u32);
            push_uleb128(&mut out, class.virtuals.len() as u32);
            let mut code = code_offsets[i].iter();
            for list in [&class.direct, &class.virtuals] {
                let mut prev = 0;
                for m in list {
                    push_uleb128(&mut out, m.method_idx - prev);
                    prev = m.method_idx;
                    push_uleb128(&mut out, m.access_flags);
                    push_uleb128(&mut out, *code.next().expect("one code item per method"));
                }
            }
            let at = class_defs_off + 32 * i;
            set_u32(&mut out, at, class.type_idx);
            set_u32(&mut out, at + 4, 0x0001);
            set_u32(&mut out, at + 8, crate::dex::NO_INDEX);
            set_u32(&mut out, at + 16, crate::dex::NO_INDEX);
            set_u32(&mut out, at + 24, class_data_off);
        }

        align(&mut out, 4);
        let file_size = out.len() as u32;
        set_u32(&mut out, 32, file_size);
        set_u32(&mut out, 104, file_size - data_off as u32);
        set_u32(&mut out, 108, data_off as u32);
        let checksum = adler32(&out[12..]);
        set_u32(&mut out, 8, checksum);
        DexLayout {
            bytes: out,
            insns_offsets,
        }
    }
}

fn adler32(data: &[u8]) -> u32 {
    let (mut a, mut b) = (1u32, 0u32);
    for &byte in data {
        a = (a + byte as u32) % 65521;
        b = (b + a) % 65521;
    }
    (b << 16) | a
}

#[derive(Debug, Clone)]
enum AxmlEvent {
    StartNamespace { prefix: String, uri: String },
    EndNamespace { prefix: String, uri: String },
    Start { name: String, attrs: Vec<(String, String)> },
    End { name: String },
}

/// Builds a binary XML document (and the equivalent text rendering).
///
/// Attribute names may carry a declared prefix, e.g. `android:name`.
#[derive(Debug, Clone, Default)]
pub struct AxmlBuilder {
    events: Vec<AxmlEvent>,
    utf8: bool,
}

impl AxmlBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// A builder with the `android` namespace already opened.
    pub fn android() -> Self {
        let mut b = Self::new();
        b.start_namespace("android", ANDROID_NS_URI);
        b
    }

    pub fn utf8(mut self, utf8: bool) -> Self {
        self.utf8 = utf8;
        self
    }

    pub fn start_namespace(&mut self, prefix: &str, uri: &str) -> &mut Self {
        self.events.push(AxmlEvent::StartNamespace {
            prefix: prefix.into(),
            uri: uri.into(),
        });
        self
    }

    pub fn end_namespace(&mut self, prefix: &str, uri: &str) -> &mut Self {
        self.events.push(AxmlEvent::EndNamespace {
            prefix: prefix.into(),
            uri: uri.into(),
        });
        self
    }

    pub fn start(&mut self, name: &str, attrs: &[(&str, &str)]) -> &mut Self {
        let attrs = attrs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        self.events.push(AxmlEvent::Start {
            name: name.into(),
            attrs,
        });
        self
    }

    pub fn end(&mut self, name: &str) -> &mut Self {
        self.events.push(AxmlEvent::End { name: name.into() });
        self
    }

    /// `start` immediately followed by `end`.
    pub fn leaf(&mut self, name: &str, attrs: &[(&str, &str)]) -> &mut Self {
        self.start(name, attrs).end(name)
    }

    fn open_namespaces(&self) -> Vec<(String, String)> {
        let mut open: Vec<(String, String)> = Vec::new();
        for ev in &self.events {
            match ev {
                AxmlEvent::StartNamespace { prefix, uri } => open.push((prefix.clone(), uri.clone())),
                AxmlEvent::EndNamespace { prefix, .. } => open.retain(|(p, _)| p != prefix),
                _ => {}
            }
        }
        open
    }

    fn events_closed(&self) -> Vec<AxmlEvent> {
        let mut events = self.events.clone();
        for (prefix, uri) in self.open_namespaces().into_iter().rev() {
            events.push(AxmlEvent::EndNamespace { prefix, uri });
        }
        events
    }

    pub fn build(&self) -> Vec<u8> {
        let events = self.events_closed();
        let mut namespaces: HashMap<String, String> = HashMap::new();
        let mut pool = StringPool::default();
        // Attribute names bound to Android resource ids come first so the
        // resource map can index them, as aapt does.
        let mut uses_android_name = false;
        for ev in &events {
            if let AxmlEvent::Start { attrs, .. } = ev {
                uses_android_name |= attrs.iter().any(|(k, _)| k == "android:name");
            }
        }
        if uses_android_name {
            pool.intern("name");
        }
        let resource_ids: Vec<u32> = if uses_android_name {
            vec![ATTR_NAME_RESOURCE_ID]
        } else {
            Vec::new()
        };

        let mut body = Vec::new();
        for ev in &events {
            match ev {
                AxmlEvent::StartNamespace { prefix, uri } | AxmlEvent::EndNamespace { prefix, uri } => {
                    let start = matches!(ev, AxmlEvent::StartNamespace { .. });
                    if start {
                        namespaces.insert(prefix.clone(), uri.clone());
                    }
                    let ty = if start {
                        chunk::START_NAMESPACE
                    } else {
                        chunk::END_NAMESPACE
                    };
                    push_node_header(&mut body, ty, 0x18);
                    push_u32(&mut body, pool.intern(prefix));
                    push_u32(&mut body, pool.intern(uri));
                }
                AxmlEvent::Start { name, attrs } => {
                    push_node_header(&mut body, chunk::START_ELEMENT, 0x24 + 20 * attrs.len() as u32);
                    push_u32(&mut body, NO_ENTRY);
                    push_u32(&mut body, pool.intern(name));
                    push_u16(&mut body, 0x14);
                    push_u16(&mut body, 0x14);
                    push_u16(&mut body, attrs.len() as u16);
                    push_u16(&mut body, 0);
                    push_u16(&mut body, 0);
                    push_u16(&mut body, 0);
                    for (key, value) in attrs {
                        let (ns, local) = match key.split_once(':') {
                            Some((prefix, local)) => {
                                let uri = namespaces.get(prefix).cloned().unwrap_or_else(|| prefix.to_owned());
                                (pool.intern(&uri), local)
                            }
                            None => (NO_ENTRY, key.as_str()),
                        };
                        push_u32(&mut body, ns);
                        push_u32(&mut body, pool.intern(local));
                        let value_idx = pool.intern(value);
                        push_u32(&mut body, value_idx);
                        push_u16(&mut body, 8);
                        body.push(0);
                        body.push(TYPE_STRING);
                        push_u32(&mut body, value_idx);
                    }
                }
                AxmlEvent::End { name } => {
                    push_node_header(&mut body, chunk::END_ELEMENT, 0x18);
                    push_u32(&mut body, NO_ENTRY);
                    push_u32(&mut body, pool.intern(name));
                }
            }
        }

        let mut out = Vec::new();
        push_u16(&mut out, chunk::XML);
        push_u16(&mut out, 8);
        push_u32(&mut out, 0); // patched below
        out.extend_from_slice(&pool.encode(self.utf8));
        if !resource_ids.is_empty() {
            push_u16(&mut out, chunk::RESOURCE_MAP);
            push_u16(&mut out, 8);
            push_u32(&mut out, 8 + 4 * resource_ids.len() as u32);
            for id in resource_ids {
                push_u32(&mut out, id);
            }
        }
        out.extend_from_slice(&body);
        let total = out.len() as u32;
        set_u32(&mut out, 4, total);
        out
    }

    /// Text rendering of the same document.
    pub fn to_xml(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
        let mut pending_ns: Vec<(String, String)> = Vec::new();
        let mut depth = 0usize;
        let events = self.events_closed();
        let mut iter = events.iter().peekable();
        while let Some(ev) = iter.next() {
            match ev {
                AxmlEvent::StartNamespace { prefix, uri } => pending_ns.push((prefix.clone(), uri.clone())),
                AxmlEvent::EndNamespace { .. } => {}
                AxmlEvent::Start { name, attrs } => {
                    out.push_str(&"  ".repeat(depth));
                    out.push('<');
                    out.push_str(name);
                    for (prefix, uri) in pending_ns.drain(..) {
                        out.push_str(&format!(" xmlns:{prefix}=\"{}\"", escape(&uri)));
                    }
                    for (k, v) in attrs {
                        out.push_str(&format!(" {k}=\"{}\"", escape(v)));
                    }
                    if matches!(iter.peek(), Some(AxmlEvent::End { .. })) {
                        iter.next();
                        out.push_str("/>\n");
                    } else {
                        out.push_str(">\n");
                        depth += 1;
                    }
                }
                AxmlEvent::End { name } => {
                    depth = depth.saturating_sub(1);
                    out.push_str(&format!("{}</{name}>\n", "  ".repeat(depth)));
                }
            }
        }
        out
    }
}

fn push_node_header(out: &mut Vec<u8>, ty: u16, size: u32) {
    push_u16(out, ty);
    push_u16(out, 0x10);
    push_u32(out, size);
    push_u32(out, 1); // line number
    push_u32(out, NO_ENTRY); // comment
}

#[derive(Default)]
struct StringPool {
    strings: Vec<String>,
    index: HashMap<String, u32>,
}

impl StringPool {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.strings.len() as u32;
        self.strings.push(s.to_owned());
        self.index.insert(s.to_owned(), i);
        i
    }

    fn encode(&self, utf8: bool) -> Vec<u8> {
        let mut data = Vec::new();
        let mut offsets = Vec::new();
        for s in &self.strings {
            offsets.push(data.len() as u32);
            if utf8 {
                push_len8(&mut data, s.encode_utf16().count());
                push_len8(&mut data, s.len());
                data.extend_from_slice(s.as_bytes());
                data.push(0);
            } else {
                let units: Vec<u16> = s.encode_utf16().collect();
                if units.len() > 0x7fff {
                    push_u16(&mut data, 0x8000 | (units.len() >> 16) as u16);
                }
                push_u16(&mut data, units.len() as u16);
                for u in units {
                    push_u16(&mut data, u);
                }
                push_u16(&mut data, 0);
            }
        }
        align(&mut data, 4);
        let header_size = 0x1c;
        let strings_start = header_size + 4 * self.strings.len() as u32;
        let mut out = Vec::new();
        push_u16(&mut out, chunk::STRING_POOL);
        push_u16(&mut out, header_size as u16);
        push_u32(&mut out, strings_start + data.len() as u32);
        push_u32(&mut out, self.strings.len() as u32);
        push_u32(&mut out, 0);
        push_u32(&mut out, if utf8 { UTF8_FLAG } else { 0 });
        push_u32(&mut out, strings_start);
        push_u32(&mut out, 0);
        for off in offsets {
            push_u32(&mut out, off);
        }
        out.extend_from_slice(&data);
        out
    }
}

fn push_len8(out: &mut Vec<u8>, len: usize) {
    if len > 0x7f {
        out.push(0x80 | (len >> 8) as u8);
    }
    out.push(len as u8);
}

/// Builds a ZIP archive from named entries, stored or deflated.
#[derive(Debug, Clone, Default)]
pub struct ApkBuilder {
    entries: Vec<(String, Vec<u8>, bool)>,
}

impl ApkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stored(&mut self, name: &str, data: &[u8]) -> &mut Self {
        self.entries.push((name.into(), data.to_vec(), false));
        self
    }

    pub fn deflated(&mut self, name: &str, data: &[u8]) -> &mut Self {
        self.entries.push((name.into(), data.to_vec(), true));
        self
    }

    pub fn build(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut central = Vec::new();
        for (name, data, deflate) in &self.entries {
            let crc = crc32fast::hash(data);
            let (method, payload) = if *deflate {
                let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
                enc.write_all(data).expect("in-memory write");
                (8u16, enc.finish().expect("in-memory write"))
            } else {
                (0u16, data.clone())
            };
            let local_off = out.len() as u32;
            push_u32(&mut out, 0x0403_4b50);
            push_u16(&mut out, 20);
            push_u16(&mut out, 0);
            push_u16(&mut out, method);
            push_u16(&mut out, 0);
            push_u16(&mut out, 0x21);
            push_u32(&mut out, crc);
            push_u32(&mut out, payload.len() as u32);
            push_u32(&mut out, data.len() as u32);
            push_u16(&mut out, name.len() as u16);
            push_u16(&mut out, 0);
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&payload);

            push_u32(&mut central, 0x0201_4b50);
            push_u16(&mut central, 20);
            push_u16(&mut central, 20);
            push_u16(&mut central, 0);
            push_u16(&mut central, method);
            push_u16(&mut central, 0);
            push_u16(&mut central, 0x21);
            push_u32(&mut central, crc);
            push_u32(&mut central, payload.len() as u32);
            push_u32(&mut central, data.len() as u32);
            push_u16(&mut central, name.len() as u16);
            push_u16(&mut central, 0);
            push_u16(&mut central, 0);
            push_u16(&mut central, 0);
            push_u16(&mut central, 0);
            push_u32(&mut central, 0);
            push_u32(&mut central, local_off);
            central.extend_from_slice(name.as_bytes());
        }
        let cd_off = out.len() as u32;
        out.extend_from_slice(&central);
        push_u32(&mut out, 0x0605_4b50);
        push_u16(&mut out, 0);
        push_u16(&mut out, 0);
        push_u16(&mut out, self.entries.len() as u16);
        push_u16(&mut out, self.entries.len() as u16);
        push_u32(&mut out, central.len() as u32);
        push_u32(&mut out, cd_off);
        push_u16(&mut out, 0);
        out
    }
}
