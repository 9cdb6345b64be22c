use std::fmt;

use serde::Serialize;

use super::insn::{self, WidthError};
use super::{DexFile, EncodedMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TokenKind {
    Api,
    String,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenKind::Api => "API",
            TokenKind::String => "STRING",
        })
    }
}

/// A token pulled from a method body: an invoked method as
/// `L<class>;-><name>` or the literal of a `const-string`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct RawToken {
    pub kind: TokenKind,
    pub text: String,
    pub position: usize,
}

impl fmt::Display for RawToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.kind, self.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeError {
    UnknownOpcode(u8),
    Truncated,
    BadMethodIndex(u32),
    BadStringIndex(u32),
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeError::UnknownOpcode(op) => write!(f, "unknown opcode {op:#04x}"),
            DecodeError::Truncated => f.write_str("truncated instruction"),
            DecodeError::BadMethodIndex(i) => write!(f, "method index {i} out of bounds"),
            DecodeError::BadStringIndex(i) => write!(f, "string index {i} out of bounds"),
        }
    }
}

/// A method whose body could not be fully decoded. Its tokens are dropped and
/// the walk continues with the next method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeWarning {
    pub method_idx: u32,
    /// Code-unit offset of the failing instruction.
    pub pc: usize,
    pub error: DecodeError,
}

impl fmt::Display for DecodeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "method {} at pc {:#x}: {}", self.method_idx, self.pc, self.error)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeTokens {
    pub tokens: Vec<RawToken>,
    pub warnings: Vec<DecodeWarning>,
}

impl CodeTokens {
    /// Debug dump, one `<kind>\t<text>` line per token.
    pub fn dump(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }
}

/// Walks every class in file order (direct methods, then virtual methods) and
/// collects `invoke-*` targets and `const-string` literals in instruction
/// order.
pub fn extract_code_tokens(dex: &DexFile) -> CodeTokens {
    let mut out = CodeTokens::default();
    let mut scratch = Vec::new();
    for class in &dex.class_defs {
        for method in class.direct_methods.iter().chain(&class.virtual_methods) {
            scratch.clear();
            match decode_method(dex, method, &mut scratch) {
                Ok(()) => {
                    for (kind, text) in scratch.drain(..) {
                        let position = out.tokens.len();
                        out.tokens.push(RawToken { kind, text, position });
                    }
                }
                Err((pc, error)) => {
                    let warning = DecodeWarning {
                        method_idx: method.method_idx,
                        pc,
                        error,
                    };
                    log::warn!("skipping {warning}");
                    out.warnings.push(warning);
                }
            }
        }
    }
    out
}

fn decode_method(
    dex: &DexFile,
    method: &EncodedMethod,
    tokens: &mut Vec<(TokenKind, String)>,
) -> Result<(), (usize, DecodeError)> {
    let Some(code) = &method.code else { return Ok(()) };
    let insns = &code.insns;
    let version = dex.header.version;
    let mut pc = 0;
    while pc < insns.len() {
        let at = &insns[pc..];
        let width = insn::instruction_width(at, version).map_err(|e| {
            (
                pc,
                match e {
                    WidthError::UnknownOpcode(op) => DecodeError::UnknownOpcode(op),
                    WidthError::Truncated => DecodeError::Truncated,
                },
            )
        })?;
        let opcode = (at[0] & 0xff) as u8;
        match opcode {
            insn::INVOKE_VIRTUAL..=insn::INVOKE_INTERFACE
            | insn::INVOKE_VIRTUAL_RANGE..=insn::INVOKE_INTERFACE_RANGE => {
                let idx = at[1] as u32;
                let (class, name) = dex.method_ref(idx).ok_or((pc, DecodeError::BadMethodIndex(idx)))?;
                // Array receivers (e.g. `[I->clone`) have no class descriptor
                // and can never be dictionary APIs.
                if class.starts_with('L') && class.ends_with(';') {
                    tokens.push((TokenKind::Api, format!("{class}->{name}")));
                }
            }
            insn::CONST_STRING => {
                let idx = at[1] as u32;
                let s = dex.string(idx).ok_or((pc, DecodeError::BadStringIndex(idx)))?;
                tokens.push((TokenKind::String, s.to_owned()));
            }
            insn::CONST_STRING_JUMBO => {
                let idx = at[1] as u32 | (at[2] as u32) << 16;
                let s = dex.string(idx).ok_or((pc, DecodeError::BadStringIndex(idx)))?;
                tokens.push((TokenKind::String, s.to_owned()));
            }
            _ => {}
        }
        pc += width;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dex::parse_dex;
    use crate::fixture::{DexBuilder, MethodBody};

    fn api(text: &str) -> (TokenKind, &str) {
        (TokenKind::Api, text)
    }

    fn string(text: &str) -> (TokenKind, &str) {
        (TokenKind::String, text)
    }

    fn kinds(tokens: &CodeTokens) -> Vec<(TokenKind, &str)> {
        tokens.tokens.iter().map(|t| (t.kind, t.text.as_str())).collect()
    }

    #[test]
    fn const_string_then_invoke() {
        let mut b = DexBuilder::new();
        let main = b.method("LMain;", "run");
        let s = b.string("android.intent.action.CALL");
        let set_action = b.method("Landroid/content/Intent;", "setAction");
        let body = MethodBody::new(main, vec![0x001a, s as u16, 0x206e, set_action as u16, 0x0010, 0x000e]);
        b.class("LMain;", vec![], vec![body]);
        let dex = parse_dex(&b.build()).unwrap();
        let out = extract_code_tokens(&dex);
        assert_eq!(
            kinds(&out),
            vec![
                string("android.intent.action.CALL"),
                api("Landroid/content/Intent;->setAction")
            ]
        );
        assert_eq!(out.tokens[0].position, 0);
        assert_eq!(out.tokens[1].position, 1);
        assert!(out.warnings.is_empty());
        assert_eq!(
            out.dump(),
            "STRING\tandroid.intent.action.CALL\nAPI\tLandroid/content/Intent;->setAction\n"
        );
    }

    #[test]
    fn no_classes_no_tokens() {
        let dex = parse_dex(&DexBuilder::new().build()).unwrap();
        assert_eq!(extract_code_tokens(&dex), CodeTokens::default());
    }

    #[test]
    fn invalid_first_opcode_gives_warning_only() {
        let mut b = DexBuilder::new();
        let main = b.method("LMain;", "run");
        let s = b.string("x");
        b.class(
            "LMain;",
            vec![MethodBody::new(main, vec![0x00ff, 0x001a, s as u16, 0x000e])],
            vec![],
        );
        let dex = parse_dex(&b.build()).unwrap();
        let out = extract_code_tokens(&dex);
        assert!(out.tokens.is_empty());
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].error, DecodeError::UnknownOpcode(0xff));
        assert_eq!(out.warnings[0].pc, 0);
    }

    #[test]
    fn jumbo_range_and_payloads() {
        let mut b = DexBuilder::new();
        let main = b.method("LMain;", "run");
        let query = b.method("Landroid/content/ContentResolver;", "query");
        let s = b.string("android.provider.Telephony.SMS_RECEIVED");
        let insns = vec![
            0x001b,
            s as u16,
            0,      // const-string/jumbo v0
            0x0000, // nop (aligns payload)
            0x0574,
            query as u16,
            0x0000, // invoke-virtual/range {v0..v4}
            0x000e,
            0x0000, // align
            0x0100,
            1,
            0,
            0,
            0x001a,
            0, // packed-switch payload that looks like const-string inside
            0x0300,
            2,
            1,
            0,
            0x006e, // fill-array-data: one 2-byte element
        ];
        b.class("LMain;", vec![MethodBody::new(main, insns)], vec![]);
        let dex = parse_dex(&b.build()).unwrap();
        let out = extract_code_tokens(&dex);
        assert_eq!(
            kinds(&out),
            vec![
                string("android.provider.Telephony.SMS_RECEIVED"),
                api("Landroid/content/ContentResolver;->query"),
            ]
        );
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn invoke_polymorphic_ignored_in_v38() {
        let mut b = DexBuilder::new().version(38);
        let main = b.method("LMain;", "run");
        let invoke = b.method("Ljava/lang/invoke/MethodHandle;", "invoke");
        let insns = vec![
            0x10fa,
            invoke as u16,
            0x0000,
            0x0000,
            0x106e,
            invoke as u16,
            0x0000,
            0x000e,
        ];
        b.class("LMain;", vec![MethodBody::new(main, insns)], vec![]);
        let out = extract_code_tokens(&parse_dex(&b.build()).unwrap());
        assert_eq!(kinds(&out), vec![api("Ljava/lang/invoke/MethodHandle;->invoke")]);
    }

    #[test]
    fn array_receivers_are_skipped() {
        let mut b = DexBuilder::new();
        let main = b.method("LMain;", "run");
        let clone = b.method("[I", "clone");
        b.class(
            "LMain;",
            vec![MethodBody::new(main, vec![0x106e, clone as u16, 0, 0x000e])],
            vec![],
        );
        let out = extract_code_tokens(&parse_dex(&b.build()).unwrap());
        assert!(out.tokens.is_empty());
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn bad_operand_index_is_a_method_warning() {
        let mut b = DexBuilder::new();
        let main = b.method("LMain;", "run");
        b.class(
            "LMain;",
            vec![MethodBody::new(main, vec![0x001a, 0x7fff, 0x000e])],
            vec![],
        );
        let out = extract_code_tokens(&parse_dex(&b.build()).unwrap());
        assert_eq!(out.warnings[0].error, DecodeError::BadStringIndex(0x7fff));
    }

    #[test]
    fn truncated_tail_is_a_method_warning() {
        let mut b = DexBuilder::new();
        let main = b.method("LMain;", "run");
        let s = b.string("a");
        b.class(
            "LMain;",
            vec![MethodBody::new(main, vec![0x001a, s as u16, 0x006e, 0x0000])],
            vec![],
        );
        let out = extract_code_tokens(&parse_dex(&b.build()).unwrap());
        assert!(out.tokens.is_empty());
        assert_eq!(out.warnings[0].error, DecodeError::Truncated);
        assert_eq!(out.warnings[0].pc, 2);
    }
}
