//! Core library for running dynamic-influence experiments against text
//! completion backends and analyzing the results.
//!
//! The crate covers two study designs end to end:
//!
//! * a **rating study**: participants rate statements on truth, interest,
//!   sentiment, and importance in an exposure phase and a test phase, laid
//!   out by a Latin-square balanced design ([`design`]); the analysis fits
//!   the exposure-shift model per attribute and exposure class with a
//!   two-way bootstrap ([`stats`]);
//! * a **framing study**: simulated survey respondents with sampled
//!   demographics and deprivation scores ([`sampler`]) read one of four
//!   framed news articles and rate probe statements; the analysis is a
//!   battery of country-clustered regressions ([`stats::battery`]).
//!
//! Prompts are rendered and parsed strictly ([`prompt`], [`parse`]), and
//! every source of randomness flows from one root seed ([`seed`]). The
//! [`backend`] module defines the completion interface plus deterministic
//! synthetic participants with configurable planted effects, which make the
//! whole pipeline testable without network access.

pub mod backend;
pub mod bank;
pub mod design;
pub mod parse;
pub mod prompt;
pub mod sampler;
pub mod seed;
pub mod stats;
pub mod text;
