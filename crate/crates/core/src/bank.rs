//! Statements, rating attributes, and the six-point rating scales.
//!
//! A statement bank is a fixed list of short declarative statements that
//! participants rate on four attributes (truth, interest, sentiment,
//! importance), each on a six-point scale anchored at both ends. Scale points
//! have canonical labels of the form `<CODE><digit>: <phrase>` (for example
//! `I2: quite uninteresting`); prompts print them and completions must echo
//! them exactly.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// The four rated attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Truth,
    Interest,
    Sentiment,
    Importance,
}

impl Attribute {
    /// All attributes, in canonical order.
    pub const ALL: [Attribute; 4] = [
        Attribute::Truth,
        Attribute::Interest,
        Attribute::Sentiment,
        Attribute::Importance,
    ];

    /// One-letter code used in scale labels: `T`, `I`, `S`, `M`.
    pub fn code(self) -> char {
        match self {
            Attribute::Truth => 'T',
            Attribute::Interest => 'I',
            Attribute::Sentiment => 'S',
            Attribute::Importance => 'M',
        }
    }

    /// Inverse of [`Attribute::code`].
    pub fn from_code(code: char) -> Option<Attribute> {
        match code {
            'T' => Some(Attribute::Truth),
            'I' => Some(Attribute::Interest),
            'S' => Some(Attribute::Sentiment),
            'M' => Some(Attribute::Importance),
            _ => None,
        }
    }

    /// Lower-case attribute name as used in running prompt text.
    pub fn name(self) -> &'static str {
        match self {
            Attribute::Truth => "truth",
            Attribute::Interest => "interest",
            Attribute::Sentiment => "sentiment",
            Attribute::Importance => "importance",
        }
    }

    /// Canonical index into [`Attribute::ALL`].
    pub fn index(self) -> usize {
        match self {
            Attribute::Truth => 0,
            Attribute::Interest => 1,
            Attribute::Sentiment => 2,
            Attribute::Importance => 3,
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The scale a single rating was given on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Six-point attribute scale.
    Attribute(Attribute),
    /// Seven-point agreement scale (1 = completely disagree, 7 = completely agree).
    Agreement,
}

impl Scale {
    /// Largest admissible rating value on this scale (minimum is always 1).
    pub fn max_value(self) -> u8 {
        match self {
            Scale::Attribute(_) => 6,
            Scale::Agreement => 7,
        }
    }

    /// The attribute, if this is an attribute scale.
    pub fn attribute(self) -> Option<Attribute> {
        match self {
            Scale::Attribute(attr) => Some(attr),
            Scale::Agreement => None,
        }
    }
}

/// A validated rating value on some scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rating(u8);

impl Rating {
    /// Check `value` against `scale` bounds.
    pub fn new(value: u8, scale: Scale) -> Result<Rating, BankError> {
        if value >= 1 && value <= scale.max_value() {
            Ok(Rating(value))
        } else {
            Err(BankError::RatingOutOfRange {
                value,
                max: scale.max_value(),
            })
        }
    }

    /// The raw value.
    pub fn value(self) -> u8 {
        self.0
    }

    /// The value as a float, for statistics.
    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

/// Canonical phrases for the six points of each attribute scale, indexed by
/// `[attribute][value - 1]`. End phrases anchor the scale; interior points
/// grade toward the midpoint.
const PHRASES: [[&str; 6]; 4] = [
    [
        "definitely false",
        "probably false",
        "possibly false",
        "possibly true",
        "probably true",
        "definitely true",
    ],
    [
        "very uninteresting",
        "quite uninteresting",
        "slightly uninteresting",
        "slightly interesting",
        "quite interesting",
        "very interesting",
    ],
    [
        "very sad",
        "quite sad",
        "slightly sad",
        "slightly cheerful",
        "quite cheerful",
        "very cheerful",
    ],
    [
        "very unimportant",
        "quite unimportant",
        "slightly unimportant",
        "slightly important",
        "quite important",
        "very important",
    ],
];

/// Midpoint of the six-point scale; rating deltas pivot around this value.
pub const SCALE_MIDPOINT: f64 = 3.5;

/// One attribute's six-point scale: code letter plus the six labelled points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttributeScale {
    pub attribute: Attribute,
    pub code: char,
    pub phrases: [&'static str; 6],
}

impl AttributeScale {
    /// The scale for `attribute`.
    pub fn of(attribute: Attribute) -> AttributeScale {
        AttributeScale {
            attribute,
            code: attribute.code(),
            phrases: PHRASES[attribute.index()],
        }
    }

    /// Canonical phrase for a rating value, e.g. `quite uninteresting` for 2.
    pub fn phrase(&self, value: Rating) -> &'static str {
        self.phrases[usize::from(value.value() - 1)]
    }

    /// Canonical label for a rating value, e.g. `I2: quite uninteresting`.
    pub fn label(&self, value: Rating) -> String {
        format!("{}{}: {}", self.code, value.value(), self.phrase(value))
    }
}

/// Canonical label for `value` on `attribute`'s scale.
pub fn scale_label(attribute: Attribute, value: Rating) -> String {
    AttributeScale::of(attribute).label(value)
}

/// Parse a bare scale code such as `I2` into its attribute and value.
pub fn parse_scale_code(code: &str) -> Option<(Attribute, u8)> {
    let mut chars = code.chars();
    let letter = chars.next()?;
    let digit = chars.next()?;
    if chars.next().is_some() {
        return None;
    }
    let attribute = Attribute::from_code(letter)?;
    let value = digit.to_digit(10)? as u8;
    Some((attribute, value))
}

/// Ground-truth class of a statement, where known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthClass {
    True,
    False,
    Uncertain,
}

impl TruthClass {
    fn parse(s: &str) -> Option<TruthClass> {
        match s {
            "true" => Some(TruthClass::True),
            "false" => Some(TruthClass::False),
            "uncertain" => Some(TruthClass::Uncertain),
            _ => None,
        }
    }
}

/// A single bank statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub id: String,
    pub text: String,
    pub truth_class: Option<TruthClass>,
}

/// An ordered, id-addressable collection of unique statements.
#[derive(Debug, Clone)]
pub struct StatementBank {
    statements: Vec<Statement>,
    by_id: HashMap<String, usize>,
}

/// Errors loading or validating a statement bank.
#[derive(Debug, thiserror::Error)]
pub enum BankError {
    #[error("failed to read bank file: {0}")]
    Io(#[from] std::io::Error),
    #[error("bank contains no statements")]
    Empty,
    #[error("line {line}: malformed record: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("line {line}: duplicate statement id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: duplicate statement text")]
    DuplicateText { line: usize },
    #[error("line {line}: unknown truth class `{value}` (expected true, false, or uncertain)")]
    UnknownTruthClass { line: usize, value: String },
    #[error("rating {value} out of range 1..={max}")]
    RatingOutOfRange { value: u8, max: u8 },
}

impl StatementBank {
    /// Parse a pipe-delimited bank: one `id | text [| truth_class]` record per
    /// line. Blank lines and lines starting with `#` are skipped.
    ///
    /// Statement ids and texts must be unique; texts must be single-line and
    /// must not contain `"` or `|`, which the completion grammar reserves.
    pub fn parse(src: &str) -> Result<StatementBank, BankError> {
        let mut statements = Vec::new();
        let mut by_id = HashMap::new();
        let mut seen_text: HashMap<String, usize> = HashMap::new();
        for (idx, raw) in src.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('|').map(str::trim);
            let id = fields.next().unwrap_or("").to_string();
            let text = fields.next().map(str::to_string);
            let class_field = fields.next();
            if fields.next().is_some() {
                return Err(BankError::Malformed {
                    line: line_no,
                    detail: "more than three `|`-separated fields".into(),
                });
            }
            let text = match text {
                Some(t) if !t.is_empty() => t,
                _ => {
                    return Err(BankError::Malformed {
                        line: line_no,
                        detail: "expected `id | text`".into(),
                    })
                }
            };
            if id.is_empty() {
                return Err(BankError::Malformed {
                    line: line_no,
                    detail: "empty statement id".into(),
                });
            }
            if id.contains(char::is_whitespace) {
                return Err(BankError::Malformed {
                    line: line_no,
                    detail: format!("statement id `{id}` contains whitespace"),
                });
            }
            if text.contains('"') {
                return Err(BankError::Malformed {
                    line: line_no,
                    detail: "statement text contains `\"`, reserved by the completion grammar"
                        .into(),
                });
            }
            let truth_class = match class_field {
                None | Some("") => None,
                Some(value) => Some(TruthClass::parse(value).ok_or_else(|| {
                    BankError::UnknownTruthClass {
                        line: line_no,
                        value: value.to_string(),
                    }
                })?),
            };
            if by_id.contains_key(&id) {
                return Err(BankError::DuplicateId { line: line_no, id });
            }
            if seen_text.contains_key(&text) {
                return Err(BankError::DuplicateText { line: line_no });
            }
            seen_text.insert(text.clone(), line_no);
            by_id.insert(id.clone(), statements.len());
            statements.push(Statement {
                id,
                text,
                truth_class,
            });
        }
        if statements.is_empty() {
            return Err(BankError::Empty);
        }
        Ok(StatementBank { statements, by_id })
    }

    /// Load a bank from a file.
    pub fn load(path: &Path) -> Result<StatementBank, BankError> {
        StatementBank::parse(&std::fs::read_to_string(path)?)
    }

    /// The bank shipped with the crate: 100 statements, the first ten being
    /// stock example items and the rest editable stand-ins.
    pub fn builtin() -> &'static StatementBank {
        static BANK: std::sync::OnceLock<StatementBank> = std::sync::OnceLock::new();
        BANK.get_or_init(|| {
            StatementBank::parse(include_str!("../data/statement_bank.txt"))
                .expect("embedded statement bank must parse")
        })
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    /// Statement at a bank position.
    pub fn get(&self, index: usize) -> &Statement {
        &self.statements[index]
    }

    /// Look a statement up by id.
    pub fn by_id(&self, id: &str) -> Option<&Statement> {
        self.by_id.get(id).map(|&i| &self.statements[i])
    }

    /// Bank position of a statement id.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Statement> {
        self.statements.iter()
    }
}
