//! Bundled 5x7 bitmap glyphs for the label alphabet.
//!
//! Bundling the font (rather than resolving a system font) is what makes the
//! rendered bytes identical on every platform. The alphabet covers exactly
//! the characters the four label styles can emit: digits, `#`, the letters of
//! "frame", and `t`, `=`, `:` for timestamps.
//!
//! Each glyph is 7 rows of 5 columns; bit 4 is the leftmost column.

pub const GLYPH_H: u32 = 7;
pub const GLYPH_W: u32 = 5;

/// Bit rows for a supported character, or `None` if outside the alphabet.
pub fn glyph_rows(c: char) -> Option<[u8; 7]> {
    let rows = match c {
        '0' => [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
        '1' => [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        '2' => [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
        '3' => [0b01110, 0b10001, 0b00001, 0b00110, 0b00001, 0b10001, 0b01110],
        '4' => [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
        '5' => [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
        '6' => [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
        '7' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
        '8' => [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
        '9' => [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
        '#' => [0b01010, 0b01010, 0b11111, 0b01010, 0b11111, 0b01010, 0b01010],
        'f' => [0b00110, 0b01001, 0b01000, 0b11100, 0b01000, 0b01000, 0b01000],
        'r' => [0b00000, 0b00000, 0b10110, 0b11001, 0b10000, 0b10000, 0b10000],
        'a' => [0b00000, 0b00000, 0b01110, 0b00001, 0b01111, 0b10001, 0b01111],
        'm' => [0b00000, 0b00000, 0b11010, 0b10101, 0b10101, 0b10101, 0b10101],
        'e' => [0b00000, 0b00000, 0b01110, 0b10001, 0b11111, 0b10000, 0b01110],
        't' => [0b01000, 0b01000, 0b11100, 0b01000, 0b01000, 0b01001, 0b00110],
        '=' => [0b00000, 0b00000, 0b11111, 0b00000, 0b11111, 0b00000, 0b00000],
        ':' => [0b00000, 0b00100, 0b00100, 0b00000, 0b00100, 0b00100, 0b00000],
        ' ' => [0; 7],
        _ => return None,
    };
    Some(rows)
}

/// True when every character of `text` is in the bundled alphabet.
pub fn covers(text: &str) -> bool {
    text.chars().all(|c| glyph_rows(c).is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_covers_all_label_styles() {
        assert!(covers("frame #0123456789"));
        assert!(covers("t=12:34"));
        assert!(!covers("panda"));
    }

    #[test]
    fn digit_glyphs_are_pairwise_distinct() {
        for a in '0'..='9' {
            for b in '0'..='9' {
                if a != b {
                    assert_ne!(glyph_rows(a), glyph_rows(b), "{a} vs {b}");
                }
            }
        }
    }
}
