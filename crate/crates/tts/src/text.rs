//! Character alphabet for the toy synthesizer.

/// Padding symbol appended after the text.
pub const FILLER: usize = 0;
pub const SPACE: usize = 27;
pub const OTHER: usize = 28;
pub const VOCAB_SIZE: usize = 29;

/// `a..z` map to 1..=26 (case-insensitive), whitespace to [`SPACE`], anything else to [`OTHER`].
pub fn symbol_id(c: char) -> usize {
    let c = c.to_ascii_lowercase();
    if c.is_ascii_lowercase() {
        (c as u8 - b'a') as usize + 1
    } else if c.is_whitespace() {
        SPACE
    } else {
        OTHER
    }
}

/// Symbols for `text`, truncated or padded with [`FILLER`] to exactly `frames`.
pub fn encode_text(text: &str, frames: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = text.chars().map(symbol_id).take(frames).collect();
    ids.resize(frames, FILLER);
    ids
}
