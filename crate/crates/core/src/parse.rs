//! Strict parsing of backend completions.
//!
//! Rating-study completions must contain exactly one line per expected item,
//! in prompt order, of the form
//!
//! ```text
//! "<statement>" | <CODE><digit>: <phrase>
//! ```
//!
//! where the echoed statement, attribute code, digit, and phrase all match
//! the canonical scale label. Echo matching is exact after Unicode NFC
//! normalization and whitespace collapsing; everything else is an error —
//! the parser never guesses. Framing-study completions are a single integer
//! whose first whitespace-delimited token must parse as a rating in 1..=7.

use serde::{Deserialize, Serialize};

use crate::bank::{Attribute, AttributeScale, Rating, Scale};
use crate::prompt::{Phase, PromptText};
use crate::text::normalize;

/// Failure taxonomy. Every rejected completion maps each offending line (or
/// missing item) to exactly one kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    /// An expected item has no rating line.
    MissingItem,
    /// A second rating line for an already-rated item.
    SurplusItem,
    /// The echoed statement matches no expected item.
    EchoMismatch,
    /// The attribute code is unknown or not the one asked for.
    BadCode,
    /// The rating digit is outside the scale.
    OutOfRange,
    /// The line does not match the rating grammar (or the phrase disagrees
    /// with the chosen scale point, or ratings arrive out of prompt order).
    Malformed,
    /// Framing-study completion whose first token is not an integer.
    NonNumericFirstToken,
}

/// One parse failure.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("{kind:?} at line {line:?}: {detail}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// 1-based completion line, when the failure is tied to a line.
    pub line: Option<usize>,
    pub detail: String,
}

impl ParseError {
    fn at(kind: ParseErrorKind, line: usize, detail: impl Into<String>) -> ParseError {
        ParseError {
            kind,
            line: Some(line),
            detail: detail.into(),
        }
    }
}

/// One accepted rating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub participant: u32,
    pub phase: Phase,
    /// Statement or probe id.
    pub item: String,
    pub scale: Scale,
    pub rating: Rating,
    /// The completion line the rating was parsed from, verbatim.
    pub raw_line: String,
}

/// Structural pieces of one grammar-conforming line.
struct LineParts<'a> {
    echo: &'a str,
    code: char,
    digits: &'a str,
    phrase: &'a str,
}

/// Split a normalized line into echo, code letter, digit string, and phrase.
/// Any structural deviation is `None`; the caller reports `Malformed`.
fn split_line(norm: &str) -> Option<LineParts<'_>> {
    let rest = norm.strip_prefix('"')?;
    let quote = rest.find('"')?;
    let echo = &rest[..quote];
    let tail = rest[quote + 1..].strip_prefix(" | ")?;
    let mut chars = tail.char_indices();
    let (_, code) = chars.next()?;
    if !code.is_ascii_alphabetic() {
        return None;
    }
    let after_code = &tail[code.len_utf8()..];
    let colon = after_code.find(':')?;
    let digits = &after_code[..colon];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let phrase = after_code[colon + 1..].strip_prefix(' ')?;
    if phrase.is_empty() {
        return None;
    }
    Some(LineParts {
        echo,
        code,
        digits,
        phrase,
    })
}

/// Parse a rating-study completion against the prompt it answers.
///
/// Success requires every expected item to be rated exactly once, in prompt
/// order, with a canonical scale label; the result preserves prompt order.
/// On failure, all detected errors are returned.
pub fn parse_ite_completion(
    text: &str,
    expected: &PromptText,
) -> Result<Vec<RatingRecord>, Vec<ParseError>> {
    let mut errors: Vec<ParseError> = Vec::new();

    // Index expected items by normalized text.
    let mut by_echo: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (idx, item) in expected.expected.iter().enumerate() {
        by_echo.insert(normalize(&item.text), idx);
    }

    let mut matched: Vec<Option<(u8, String)>> = vec![None; expected.expected.len()];
    let mut last_index: Option<usize> = None;
    for (line_idx, raw_line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let norm = normalize(raw_line);
        if norm.is_empty() {
            continue;
        }
        let Some(parts) = split_line(&norm) else {
            errors.push(ParseError::at(
                ParseErrorKind::Malformed,
                line_no,
                "line does not match `\"<statement>\" | <CODE><digit>: <phrase>`",
            ));
            continue;
        };
        let Some(&index) = by_echo.get(parts.echo) else {
            errors.push(ParseError::at(
                ParseErrorKind::EchoMismatch,
                line_no,
                format!("echoed statement matches no prompt item: {}", parts.echo),
            ));
            continue;
        };
        let item = &expected.expected[index];
        if matched[index].is_some() {
            errors.push(ParseError::at(
                ParseErrorKind::SurplusItem,
                line_no,
                format!("second rating for `{}`", item.id),
            ));
            continue;
        }
        let attr = item
            .scale
            .attribute()
            .expect("rating-study prompts expect attribute scales");
        match Attribute::from_code(parts.code) {
            None => {
                errors.push(ParseError::at(
                    ParseErrorKind::BadCode,
                    line_no,
                    format!("unknown attribute code `{}`", parts.code),
                ));
                continue;
            }
            Some(got) if got != attr => {
                errors.push(ParseError::at(
                    ParseErrorKind::BadCode,
                    line_no,
                    format!("rated {}, but the prompt asked for {}", got.name(), attr.name()),
                ));
                continue;
            }
            Some(_) => {}
        }
        let value: u32 = match parts.digits.parse::<u32>() {
            // Reject non-canonical digit strings like `04`.
            Ok(v) if parts.digits == v.to_string() => v,
            _ => {
                errors.push(ParseError::at(
                    ParseErrorKind::Malformed,
                    line_no,
                    format!("non-canonical rating digits `{}`", parts.digits),
                ));
                continue;
            }
        };
        let rating = match u8::try_from(value).ok().and_then(|v| Rating::new(v, item.scale).ok()) {
            Some(r) => r,
            None => {
                errors.push(ParseError::at(
                    ParseErrorKind::OutOfRange,
                    line_no,
                    format!("rating {} outside 1..={}", value, item.scale.max_value()),
                ));
                continue;
            }
        };
        let canonical = AttributeScale::of(attr).phrase(rating);
        if parts.phrase != canonical {
            errors.push(ParseError::at(
                ParseErrorKind::Malformed,
                line_no,
                format!("phrase `{}` is not the label of {}{}", parts.phrase, attr.code(), value),
            ));
            continue;
        }
        if let Some(last) = last_index {
            if index < last {
                errors.push(ParseError::at(
                    ParseErrorKind::Malformed,
                    line_no,
                    format!("rating for `{}` arrives out of prompt order", item.id),
                ));
                continue;
            }
        }
        last_index = Some(index);
        matched[index] = Some((rating.value(), raw_line.trim().to_string()));
    }

    for (item, slot) in expected.expected.iter().zip(&matched) {
        if slot.is_none() {
            errors.push(ParseError {
                kind: ParseErrorKind::MissingItem,
                line: None,
                detail: format!("no rating for `{}`", item.id),
            });
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(expected
        .expected
        .iter()
        .zip(matched)
        .map(|(item, slot)| {
            let (value, raw_line) = slot.expect("all matched");
            RatingRecord {
                participant: expected.participant,
                phase: expected.phase,
                item: item.id.clone(),
                scale: item.scale,
                rating: Rating::new(value, item.scale).expect("validated"),
                raw_line,
            }
        })
        .collect())
}

/// Parse a framing-study completion: the first whitespace-delimited token
/// must be an integer rating in 1..=7.
pub fn parse_pfn_completion(
    text: &str,
    expected: &PromptText,
) -> Result<RatingRecord, ParseError> {
    let item = expected
        .expected
        .first()
        .expect("probe prompts expect one item");
    let Some(token) = text.split_whitespace().next() else {
        return Err(ParseError {
            kind: ParseErrorKind::NonNumericFirstToken,
            line: Some(1),
            detail: "completion is empty".into(),
        });
    };
    let value: i64 = token.parse().map_err(|_| ParseError {
        kind: ParseErrorKind::NonNumericFirstToken,
        line: Some(1),
        detail: format!("first token `{token}` is not an integer"),
    })?;
    let rating = u8::try_from(value)
        .ok()
        .and_then(|v| Rating::new(v, Scale::Agreement).ok())
        .ok_or_else(|| ParseError {
            kind: ParseErrorKind::OutOfRange,
            line: Some(1),
            detail: format!("rating {value} outside 1..=7"),
        })?;
    let raw_line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .unwrap_or("")
        .trim()
        .to_string();
    Ok(RatingRecord {
        participant: expected.participant,
        phase: expected.phase,
        item: item.id.clone(),
        scale: Scale::Agreement,
        rating,
        raw_line,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{ExpectedItem, PfnPromptContext, ProbeKind};

    /// A three-item exposure prompt fixture.
    fn fixture() -> PromptText {
        PromptText {
            participant: 7,
            phase: Phase::Exposure,
            text: String::new(),
            expected: vec![
                ExpectedItem {
                    id: "s1".into(),
                    text: "Most frogs are green".into(),
                    scale: Scale::Attribute(Attribute::Interest),
                },
                ExpectedItem {
                    id: "s2".into(),
                    text: "The violin has five strings".into(),
                    scale: Scale::Attribute(Attribute::Truth),
                },
                ExpectedItem {
                    id: "s3".into(),
                    text: "Honey never spoils if stored sealed".into(),
                    scale: Scale::Attribute(Attribute::Sentiment),
                },
            ],
            recap: Vec::new(),
            pfn: None,
        }
    }

    const GOOD: &str = "\"Most frogs are green\" | I2: quite uninteresting\n\
                        \"The violin has five strings\" | T1: definitely false\n\
                        \"Honey never spoils if stored sealed\" | S4: slightly cheerful\n";

    #[test]
    fn accepts_canonical_completion() {
        let prompt = fixture();
        let records = parse_ite_completion(GOOD, &prompt).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].item, "s1");
        assert_eq!(records[0].rating.value(), 2);
        assert_eq!(records[0].participant, 7);
        assert_eq!(records[0].raw_line, "\"Most frogs are green\" | I2: quite uninteresting");
        assert_eq!(records[2].rating.value(), 4);
    }

    #[test]
    fn tolerates_whitespace_and_blank_lines() {
        let prompt = fixture();
        let sloppy = "\n  \"Most   frogs are green\"   |   I2:  quite   uninteresting  \n\n\
                      \"The violin has five strings\" | T1: definitely false\r\n\
                      \"Honey never spoils if stored sealed\" | S4: slightly cheerful\n\n";
        let records = parse_ite_completion(sloppy, &prompt).unwrap();
        assert_eq!(records.len(), 3);
        // Raw lines are preserved verbatim (trimmed of outer whitespace only).
        assert_eq!(records[0].raw_line, "\"Most   frogs are green\"   |   I2:  quite   uninteresting");
    }

    #[test]
    fn missing_item_is_reported_per_item() {
        let prompt = fixture();
        let two = GOOD.lines().take(2).collect::<Vec<_>>().join("\n");
        let errors = parse_ite_completion(&two, &prompt).unwrap_err();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].kind, ParseErrorKind::MissingItem);
        assert!(errors[0].detail.contains("s3"));

        let errors = parse_ite_completion("", &prompt).unwrap_err();
        assert_eq!(errors.len(), 3);
        assert!(errors.iter().all(|e| e.kind == ParseErrorKind::MissingItem));
    }

    #[test]
    fn surplus_and_echo_mismatch() {
        let prompt = fixture();
        let doubled = format!("{GOOD}\"Most frogs are green\" | I3: slightly uninteresting\n");
        let errors = parse_ite_completion(&doubled, &prompt).unwrap_err();
        assert!(errors.iter().any(|e| e.kind == ParseErrorKind::SurplusItem));

        let wrong = GOOD.replace("Most frogs are green", "Most dogs are green");
        let errors = parse_ite_completion(&wrong, &prompt).unwrap_err();
        assert!(errors.iter().any(|e| e.kind == ParseErrorKind::EchoMismatch));
        assert!(errors.iter().any(|e| e.kind == ParseErrorKind::MissingItem));
    }

    #[test]
    fn wrong_attribute_is_bad_code() {
        let prompt = fixture();
        let wrong = GOOD.replace("I2: quite uninteresting", "T2: probably false");
        let errors = parse_ite_completion(&wrong, &prompt).unwrap_err();
        assert_eq!(errors[0].kind, ParseErrorKind::BadCode);

        let unknown = GOOD.replace("I2: quite uninteresting", "Z2: quite uninteresting");
        let errors = parse_ite_completion(&unknown, &prompt).unwrap_err();
        assert_eq!(errors[0].kind, ParseErrorKind::BadCode);
    }

    #[test]
    fn out_of_range_digit() {
        let prompt = fixture();
        let wrong = GOOD.replace("T1: definitely false", "T9: definitely false");
        let errors = parse_ite_completion(&wrong, &prompt).unwrap_err();
        assert_eq!(errors[0].kind, ParseErrorKind::OutOfRange);
        assert_eq!(errors[0].line, Some(2));
    }

    #[test]
    fn phrase_must_match_digit() {
        let prompt = fixture();
        let wrong = GOOD.replace("I2: quite uninteresting", "I3: quite uninteresting");
        let errors = parse_ite_completion(&wrong, &prompt).unwrap_err();
        assert_eq!(errors[0].kind, ParseErrorKind::Malformed);
    }

    #[test]
    fn out_of_order_is_rejected() {
        let prompt = fixture();
        let mut lines: Vec<&str> = GOOD.lines().collect();
        lines.swap(0, 1);
        let errors = parse_ite_completion(&lines.join("\n"), &prompt).unwrap_err();
        assert!(errors
            .iter()
            .any(|e| e.kind == ParseErrorKind::Malformed && e.detail.contains("order")));
    }

    #[test]
    fn prose_line_is_malformed() {
        let prompt = fixture();
        let chatty = format!("Here are my ratings:\n{GOOD}");
        let errors = parse_ite_completion(&chatty, &prompt).unwrap_err();
        assert_eq!(errors[0].kind, ParseErrorKind::Malformed);
        assert_eq!(errors[0].line, Some(1));
    }

    #[test]
    fn unicode_echo_matches_after_nfc() {
        let mut prompt = fixture();
        prompt.expected[0].text = "Caf\u{e9} life".into();
        let completion = "\"Caf\u{65}\u{301} life\" | I2: quite uninteresting\n\
                          \"The violin has five strings\" | T1: definitely false\n\
                          \"Honey never spoils if stored sealed\" | S4: slightly cheerful\n";
        let records = parse_ite_completion(completion, &prompt).unwrap();
        assert_eq!(records[0].item, "s1");
    }

    /// Every single-character substitution that changes the normalized text
    /// must be rejected (compact version of the full fuzz in the acceptance
    /// suite).
    #[test]
    fn single_character_substitutions_are_detected() {
        let prompt = fixture();
        let line = "\"Most frogs are green\" | I2: quite uninteresting";
        let rest = "\"The violin has five strings\" | T1: definitely false\n\
                    \"Honey never spoils if stored sealed\" | S4: slightly cheerful\n";
        let chars: Vec<char> = line.chars().collect();
        let mut tried = 0;
        for pos in 0..chars.len() {
            for sub in ['x', '7', '"', '|'] {
                let mut corrupted: Vec<char> = chars.clone();
                if corrupted[pos] == sub {
                    continue;
                }
                corrupted[pos] = sub;
                let corrupted: String = corrupted.into_iter().collect();
                if normalize(&corrupted) == normalize(line) {
                    continue;
                }
                tried += 1;
                let completion = format!("{corrupted}\n{rest}");
                assert!(
                    parse_ite_completion(&completion, &prompt).is_err(),
                    "corruption accepted at pos {pos}: {corrupted}"
                );
            }
        }
        assert!(tried > 150);
    }

    fn pfn_prompt() -> PromptText {
        PromptText {
            participant: 3,
            phase: Phase::Probe,
            text: String::new(),
            expected: vec![ExpectedItem {
                id: "p1".into(),
                text: "The economy will face a decline in the near future".into(),
                scale: Scale::Agreement,
            }],
            recap: Vec::new(),
            pfn: Some(PfnPromptContext {
                country_index: 0,
                anti_elitist: false,
                anti_immigrant: false,
                deprivation: 4.0,
                probe_kind: ProbeKind::Persuasion,
            }),
        }
    }

    #[test]
    fn pfn_accepts_integer_first_token() {
        let prompt = pfn_prompt();
        let record = parse_pfn_completion("5", &prompt).unwrap();
        assert_eq!(record.rating.value(), 5);
        assert_eq!(record.item, "p1");

        let record = parse_pfn_completion("  7 (I agree strongly)\n", &prompt).unwrap();
        assert_eq!(record.rating.value(), 7);
    }

    #[test]
    fn pfn_rejects_bad_tokens() {
        let prompt = pfn_prompt();
        assert_eq!(
            parse_pfn_completion("8", &prompt).unwrap_err().kind,
            ParseErrorKind::OutOfRange
        );
        assert_eq!(
            parse_pfn_completion("0", &prompt).unwrap_err().kind,
            ParseErrorKind::OutOfRange
        );
        assert_eq!(
            parse_pfn_completion("I would say 6", &prompt).unwrap_err().kind,
            ParseErrorKind::NonNumericFirstToken
        );
        assert_eq!(
            parse_pfn_completion("6.0", &prompt).unwrap_err().kind,
            ParseErrorKind::NonNumericFirstToken
        );
        assert_eq!(
            parse_pfn_completion("", &prompt).unwrap_err().kind,
            ParseErrorKind::NonNumericFirstToken
        );
    }
}
