//! Dalvik instruction widths.
//!
//! Widths are in 16-bit code units and follow the instruction formats of the
//! Dalvik bytecode reference. Unused opcodes have width 0.

pub const CONST_STRING: u8 = 0x1a;
pub const CONST_STRING_JUMBO: u8 = 0x1b;
pub const INVOKE_VIRTUAL: u8 = 0x6e;
pub const INVOKE_INTERFACE: u8 = 0x72;
pub const INVOKE_VIRTUAL_RANGE: u8 = 0x74;
pub const INVOKE_INTERFACE_RANGE: u8 = 0x78;

pub const PACKED_SWITCH_PAYLOAD: u16 = 0x0100;
pub const SPARSE_SWITCH_PAYLOAD: u16 = 0x0200;
pub const FILL_ARRAY_DATA_PAYLOAD: u16 = 0x0300;

#[rustfmt::skip]
const WIDTHS: [u8; 256] = {
    let mut w = [0u8; 256];
    let mut op = 0;
    while op < 256 {
        w[op] = match op {
            0x00 | 0x01 | 0x04 | 0x07 => 1,         // nop, move, move-wide, move-object
            0x02 | 0x05 | 0x08 => 2,                // */from16
            0x03 | 0x06 | 0x09 => 3,                // */16
            0x0a..=0x12 => 1,                       // move-result*, return*, const/4
            0x13 => 2,                              // const/16
            0x14 => 3,                              // const
            0x15 | 0x16 => 2,                       // const/high16, const-wide/16
            0x17 => 3,                              // const-wide/32
            0x18 => 5,                              // const-wide
            0x19 | 0x1a => 2,                       // const-wide/high16, const-string
            0x1b => 3,                              // const-string/jumbo
            0x1c => 2,                              // const-class
            0x1d | 0x1e => 1,                       // monitor-enter/exit
            0x1f | 0x20 => 2,                       // check-cast, instance-of
            0x21 => 1,                              // array-length
            0x22 | 0x23 => 2,                       // new-instance, new-array
            0x24..=0x26 => 3,                       // filled-new-array*, fill-array-data
            0x27 | 0x28 => 1,                       // throw, goto
            0x29 => 2,                              // goto/16
            0x2a..=0x2c => 3,                       // goto/32, packed-switch, sparse-switch
            0x2d..=0x3d => 2,                       // cmp*, if-*
            0x44..=0x6d => 2,                       // aget/aput, iget/iput, sget/sput
            0x6e..=0x72 | 0x74..=0x78 => 3,         // invoke-kind, invoke-kind/range
            0x7b..=0x8f => 1,                       // unop
            0x90..=0xaf => 2,                       // binop
            0xb0..=0xcf => 1,                       // binop/2addr
            0xd0..=0xe2 => 2,                       // binop/lit16, binop/lit8
            0xfa | 0xfb => 4,                       // invoke-polymorphic*
            0xfc | 0xfd => 3,                       // invoke-custom*
            0xfe | 0xff => 2,                       // const-method-handle, const-method-type
            _ => 0,
        };
        op += 1;
    }
    w
};

/// Minimum DEX version in which `opcode` is defined.
fn introduced_in(opcode: u8) -> u16 {
    match opcode {
        0xfa..=0xfd => 38,
        0xfe | 0xff => 39,
        _ => 35,
    }
}

/// Width of a regular (non-payload) opcode for a given DEX version, or `None`
/// when the opcode is unused in that version.
pub fn opcode_width(opcode: u8, dex_version: u16) -> Option<usize> {
    match WIDTHS[opcode as usize] {
        0 => None,
        _ if dex_version < introduced_in(opcode) => None,
        w => Some(w as usize),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthError {
    UnknownOpcode(u8),
    /// The instruction (or its payload header) runs past the end of the stream.
    Truncated,
}

/// Width of the instruction starting at `insns[0]`, including the variable
/// length switch and array payload pseudo-instructions.
pub fn instruction_width(insns: &[u16], dex_version: u16) -> Result<usize, WidthError> {
    let first = *insns.first().ok_or(WidthError::Truncated)?;
    let unit = |i: usize| insns.get(i).copied().ok_or(WidthError::Truncated);
    let width = match first {
        PACKED_SWITCH_PAYLOAD => 4 + unit(1)? as usize * 2,
        SPARSE_SWITCH_PAYLOAD => 2 + unit(1)? as usize * 4,
        FILL_ARRAY_DATA_PAYLOAD => {
            let element_width = unit(1)? as usize;
            let size = unit(2)? as usize | (unit(3)? as usize) << 16;
            4 + (size * element_width).div_ceil(2)
        }
        _ => {
            let opcode = (first & 0xff) as u8;
            opcode_width(opcode, dex_version).ok_or(WidthError::UnknownOpcode(opcode))?
        }
    };
    if width > insns.len() {
        return Err(WidthError::Truncated);
    }
    Ok(width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invoke_and_const_string_widths() {
        for op in INVOKE_VIRTUAL..=INVOKE_INTERFACE {
            assert_eq!(opcode_width(op, 35), Some(3));
        }
        for op in INVOKE_VIRTUAL_RANGE..=INVOKE_INTERFACE_RANGE {
            assert_eq!(opcode_width(op, 35), Some(3));
        }
        assert_eq!(opcode_width(CONST_STRING, 35), Some(2));
        assert_eq!(opcode_width(CONST_STRING_JUMBO, 35), Some(3));
        assert_eq!(opcode_width(0x18, 35), Some(5));
    }

    #[test]
    fn unused_opcodes() {
        for op in [0x3e, 0x43, 0x73, 0x79, 0x7a, 0xe3, 0xf9] {
            assert_eq!(opcode_width(op, 39), None, "{op:#x}");
        }
    }

    #[test]
    fn late_opcodes_depend_on_version() {
        assert_eq!(opcode_width(0xfa, 37), None);
        assert_eq!(opcode_width(0xfa, 38), Some(4));
        assert_eq!(opcode_width(0xff, 38), None);
        assert_eq!(opcode_width(0xff, 39), Some(2));
    }

    #[test]
    fn payload_widths() {
        // packed-switch with 3 targets: ident, size, first_key(2), targets(6)
        let packed = [0x0100, 3, 0, 0, 1, 0, 2, 0, 3, 0];
        assert_eq!(instruction_width(&packed, 35), Ok(10));
        // sparse-switch with 2 entries: ident, size, keys(4), targets(4)
        let sparse = [0x0200, 2, 0, 0, 0, 0, 0, 0, 0, 0];
        assert_eq!(instruction_width(&sparse, 35), Ok(10));
        // fill-array-data, 3 elements of width 1 byte -> 2 code units of data
        let fill = [0x0300, 1, 3, 0, 0x0201, 0x0003];
        assert_eq!(instruction_width(&fill, 35), Ok(6));
        assert_eq!(instruction_width(&fill[..5], 35), Err(WidthError::Truncated));
    }

    #[test]
    fn truncated_regular_instruction() {
        assert_eq!(instruction_width(&[0x006e, 0x0001], 35), Err(WidthError::Truncated));
        assert_eq!(instruction_width(&[], 35), Err(WidthError::Truncated));
    }
}
