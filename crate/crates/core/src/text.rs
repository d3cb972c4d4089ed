//! Text canonicalization shared by the bank and the completion parser.

use unicode_normalization::UnicodeNormalization;

/// Canonical form used for echo matching: Unicode NFC, then all whitespace
/// runs collapsed to single spaces and outer whitespace trimmed.
pub fn normalize(s: &str) -> String {
    let composed: String = s.nfc().collect();
    composed.split_whitespace().collect::<Vec<_>>().join(" ")
}
