//! Balanced within-block assignment of statements to participants.
//!
//! A block pairs 100 participants with a 100-statement bank. Each participant
//! sees 32 statements in an exposure phase and 32 in a test phase:
//!
//! * 16 statements are *exposure-only* (4 per attribute),
//! * 16 are *test-only* (4 per attribute, the "fresh" baseline),
//! * 16 are *both*: exposed under one attribute and tested under another,
//!   covering each ordered (exposure, test) attribute pair exactly once.
//!
//! The same balance holds per statement down the other axis: across the
//! block's participants every statement is exposure-only 4 times per
//! attribute, fresh-tested 4 times per attribute, and carries each
//! (exposure, test) pair exactly once, appearing in exactly 32 exposure
//! phases and 32 test phases overall.
//!
//! Construction assigns each (participant, statement) cell one of 100 role
//! symbols via a uniformly randomised Latin square of order 100; because each
//! row and column contains every symbol exactly once, all row-wise
//! (participant) and column-wise (statement) invariants hold by construction.
//! [`validate_block`] re-checks them by direct tally, trusting nothing.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bank::{Attribute, StatementBank};
use crate::seed::{self, tag};

/// Number of statements (and participants) a block requires.
pub const BLOCK_STATEMENTS: usize = 100;
/// Participants per block.
pub const BLOCK_PARTICIPANTS: usize = 100;
/// Statements per participant per phase.
pub const ITEMS_PER_PHASE: usize = 32;

const N_ATTRS: usize = Attribute::ALL.len();
/// Role symbols: 16 both-pairs, 16 exposure-only, 16 test-only; the rest of
/// the square's symbols mean "statement unused for this participant".
const EXPOSURE_BASE: usize = N_ATTRS * N_ATTRS;
const TEST_BASE: usize = 2 * N_ATTRS * N_ATTRS;
const USED_SYMBOLS: usize = 3 * N_ATTRS * N_ATTRS;

/// Errors constructing a design.
#[derive(Debug, thiserror::Error)]
pub enum DesignError {
    #[error("statement bank has {got} statements; a block requires exactly {BLOCK_STATEMENTS}")]
    WrongBankSize { got: usize },
    #[error("Latin square order must be between 1 and {max}, got {got}", max = u16::MAX)]
    BadOrder { got: usize },
}

/// A Latin square: an n x n grid in which every row and every column
/// contains each symbol `0..n` exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatinSquare {
    n: usize,
    cells: Vec<u16>,
}

impl LatinSquare {
    /// A uniformly seeded random Latin square of order `n`.
    ///
    /// Built from the cyclic square `(r + c) mod n` composed with independent
    /// random row, column, and symbol permutations; identical `(n, seed)`
    /// inputs produce identical squares.
    pub fn random(n: usize, seed: u64) -> Result<LatinSquare, DesignError> {
        if n == 0 || n > usize::from(u16::MAX) {
            return Err(DesignError::BadOrder { got: n });
        }
        let mut rng = seed::rng(seed, &[tag::DESIGN]);
        let mut row_perm: Vec<usize> = (0..n).collect();
        let mut col_perm: Vec<usize> = (0..n).collect();
        let mut sym_perm: Vec<u16> = (0..n as u16).collect();
        row_perm.shuffle(&mut rng);
        col_perm.shuffle(&mut rng);
        sym_perm.shuffle(&mut rng);
        let mut cells = vec![0u16; n * n];
        for r in 0..n {
            for c in 0..n {
                cells[r * n + c] = sym_perm[(row_perm[r] + col_perm[c]) % n];
            }
        }
        Ok(LatinSquare { n, cells })
    }

    /// Square order.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Symbol at row `r`, column `c`.
    pub fn get(&self, r: usize, c: usize) -> u16 {
        self.cells[r * self.n + c]
    }

    /// Whether every row and column is a permutation of `0..n`.
    pub fn is_valid(&self) -> bool {
        let n = self.n;
        let mut seen = vec![false; n];
        for r in 0..n {
            seen.fill(false);
            for c in 0..n {
                let s = usize::from(self.get(r, c));
                if s >= n || seen[s] {
                    return false;
                }
                seen[s] = true;
            }
        }
        for c in 0..n {
            seen.fill(false);
            for r in 0..n {
                let s = usize::from(self.get(r, c));
                if s >= n || seen[s] {
                    return false;
                }
                seen[s] = true;
            }
        }
        true
    }
}

/// What one (participant, statement) cell does with a used statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum CellRole {
    /// Rated in the exposure phase only.
    ExposureOnly { attribute: Attribute },
    /// Rated fresh in the test phase only.
    TestOnly { attribute: Attribute },
    /// Exposed under one attribute, then tested under another (or the same).
    Both { exposure: Attribute, test: Attribute },
}

/// Role of a square symbol, `None` meaning the statement is unused.
fn role_of_symbol(sym: usize) -> Option<CellRole> {
    if sym < EXPOSURE_BASE {
        Some(CellRole::Both {
            exposure: Attribute::ALL[sym / N_ATTRS],
            test: Attribute::ALL[sym % N_ATTRS],
        })
    } else if sym < TEST_BASE {
        Some(CellRole::ExposureOnly {
            attribute: Attribute::ALL[(sym - EXPOSURE_BASE) / N_ATTRS],
        })
    } else if sym < USED_SYMBOLS {
        Some(CellRole::TestOnly {
            attribute: Attribute::ALL[(sym - TEST_BASE) / N_ATTRS],
        })
    } else {
        None
    }
}

/// One participant's assignment: which statements to rate under which
/// attribute in each phase, in presentation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantDesign {
    /// Globally unique: `block_id * 100 + row`.
    pub participant_id: u32,
    pub block_id: u32,
    /// Exposure-phase items `(statement_id, attribute)` in presentation order.
    pub exposure_items: Vec<(String, Attribute)>,
    /// Test-phase items in presentation order.
    pub test_items: Vec<(String, Attribute)>,
    /// Role of every statement this participant uses.
    pub cell_roles: BTreeMap<String, CellRole>,
}

/// A full block of participant designs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub block_id: u32,
    pub designs: Vec<ParticipantDesign>,
}

/// Build one balanced block. Identical `(bank, block_id, seed)` inputs yield
/// an identical block; presentation order is shuffled independently per
/// participant and per phase.
pub fn build_block(
    bank: &StatementBank,
    block_id: u32,
    seed: u64,
) -> Result<Block, DesignError> {
    if bank.len() != BLOCK_STATEMENTS {
        return Err(DesignError::WrongBankSize { got: bank.len() });
    }
    let square_seed = seed::mix(seed, &[tag::DESIGN, u64::from(block_id)]);
    let square = LatinSquare::random(BLOCK_STATEMENTS, square_seed)?;
    let mut designs = Vec::with_capacity(BLOCK_PARTICIPANTS);
    for row in 0..BLOCK_PARTICIPANTS {
        let participant_id = block_id * BLOCK_PARTICIPANTS as u32 + row as u32;
        let mut exposure_items = Vec::with_capacity(ITEMS_PER_PHASE);
        let mut test_items = Vec::with_capacity(ITEMS_PER_PHASE);
        let mut cell_roles = BTreeMap::new();
        for col in 0..BLOCK_STATEMENTS {
            let Some(role) = role_of_symbol(usize::from(square.get(row, col))) else {
                continue;
            };
            let id = bank.get(col).id.clone();
            match role {
                CellRole::ExposureOnly { attribute } => {
                    exposure_items.push((id.clone(), attribute));
                }
                CellRole::TestOnly { attribute } => {
                    test_items.push((id.clone(), attribute));
                }
                CellRole::Both { exposure, test } => {
                    exposure_items.push((id.clone(), exposure));
                    test_items.push((id.clone(), test));
                }
            }
            cell_roles.insert(id, role);
        }
        let pid = u64::from(participant_id);
        exposure_items.shuffle(&mut seed::rng(seed, &[tag::ORDER, pid, 0]));
        test_items.shuffle(&mut seed::rng(seed, &[tag::ORDER, pid, 1]));
        designs.push(ParticipantDesign {
            participant_id,
            block_id,
            exposure_items,
            test_items,
            cell_roles,
        });
    }
    Ok(Block { block_id, designs })
}

/// One named balance check with the cells that violated it.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceCheck {
    pub name: &'static str,
    pub failures: Vec<String>,
}

impl BalanceCheck {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Outcome of [`validate_block`]: every invariant, checked by direct tally.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub checks: Vec<BalanceCheck>,
}

impl BalanceReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(BalanceCheck::pass)
    }

    /// Human-readable summary, one line per check.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for check in &self.checks {
            if check.pass() {
                out.push_str(&format!("{:<28} ok\n", check.name));
            } else {
                out.push_str(&format!(
                    "{:<28} FAILED ({} violations)\n",
                    check.name,
                    check.failures.len()
                ));
                for f in check.failures.iter().take(5) {
                    out.push_str(&format!("    {f}\n"));
                }
                if check.failures.len() > 5 {
                    out.push_str(&format!("    ... {} more\n", check.failures.len() - 5));
                }
            }
        }
        out
    }
}

/// Tally every block invariant from scratch. Works for any block whose cells
/// follow the 16/16/16 per-participant geometry, regardless of bank size.
pub fn validate_block(block: &Block) -> BalanceReport {
    let mut checks = Vec::new();

    // Per-participant invariants.
    let mut list_shape = BalanceCheck { name: "participant_phase_lists", failures: vec![] };
    let mut role_counts = BalanceCheck { name: "participant_role_counts", failures: vec![] };
    let mut exp_balance = BalanceCheck { name: "participant_exposure_balance", failures: vec![] };
    let mut test_balance = BalanceCheck { name: "participant_fresh_balance", failures: vec![] };
    let mut pair_cover = BalanceCheck { name: "participant_pair_coverage", failures: vec![] };

    // Per-statement tallies accumulated across participants.
    #[derive(Default, Clone)]
    struct StatementTally {
        pair_count: [[u32; N_ATTRS]; N_ATTRS],
        exposure_only: [u32; N_ATTRS],
        fresh: [u32; N_ATTRS],
        exposure_total: u32,
        test_total: u32,
    }
    let mut tallies: HashMap<&str, StatementTally> = HashMap::new();

    let mut seen_pids = HashSet::new();
    for d in &block.designs {
        let p = d.participant_id;
        if !seen_pids.insert(p) {
            list_shape.failures.push(format!("participant {p}: duplicate participant_id"));
        }
        if d.block_id != block.block_id {
            list_shape.failures.push(format!("participant {p}: block_id mismatch"));
        }

        // Phase lists must match the multiset of items implied by cell_roles.
        let mut want_exposure: Vec<(&str, Attribute)> = Vec::new();
        let mut want_test: Vec<(&str, Attribute)> = Vec::new();
        let mut n_expo = 0usize;
        let mut n_test = 0usize;
        let mut n_both = 0usize;
        let mut expo_attr = [0u32; N_ATTRS];
        let mut fresh_attr = [0u32; N_ATTRS];
        let mut pairs = [[0u32; N_ATTRS]; N_ATTRS];
        for (id, role) in &d.cell_roles {
            let tally = tallies.entry(id.as_str()).or_default();
            match *role {
                CellRole::ExposureOnly { attribute } => {
                    n_expo += 1;
                    expo_attr[attribute.index()] += 1;
                    want_exposure.push((id, attribute));
                    tally.exposure_only[attribute.index()] += 1;
                    tally.exposure_total += 1;
                }
                CellRole::TestOnly { attribute } => {
                    n_test += 1;
                    fresh_attr[attribute.index()] += 1;
                    want_test.push((id, attribute));
                    tally.fresh[attribute.index()] += 1;
                    tally.test_total += 1;
                }
                CellRole::Both { exposure, test } => {
                    n_both += 1;
                    pairs[exposure.index()][test.index()] += 1;
                    want_exposure.push((id, exposure));
                    want_test.push((id, test));
                    tally.pair_count[exposure.index()][test.index()] += 1;
                    tally.exposure_total += 1;
                    tally.test_total += 1;
                }
            }
        }

        let mut got_exposure: Vec<(&str, Attribute)> =
            d.exposure_items.iter().map(|(id, a)| (id.as_str(), *a)).collect();
        let mut got_test: Vec<(&str, Attribute)> =
            d.test_items.iter().map(|(id, a)| (id.as_str(), *a)).collect();
        let unique_expo: HashSet<&str> = got_exposure.iter().map(|(id, _)| *id).collect();
        let unique_test: HashSet<&str> = got_test.iter().map(|(id, _)| *id).collect();
        if unique_expo.len() != got_exposure.len() {
            list_shape.failures.push(format!("participant {p}: repeated exposure statement"));
        }
        if unique_test.len() != got_test.len() {
            list_shape.failures.push(format!("participant {p}: repeated test statement"));
        }
        got_exposure.sort_unstable();
        got_test.sort_unstable();
        want_exposure.sort_unstable();
        want_test.sort_unstable();
        if got_exposure != want_exposure {
            list_shape
                .failures
                .push(format!("participant {p}: exposure items disagree with cell roles"));
        }
        if got_test != want_test {
            list_shape
                .failures
                .push(format!("participant {p}: test items disagree with cell roles"));
        }
        if d.exposure_items.len() != ITEMS_PER_PHASE || d.test_items.len() != ITEMS_PER_PHASE {
            list_shape.failures.push(format!(
                "participant {p}: phase sizes {}/{} (want {ITEMS_PER_PHASE}/{ITEMS_PER_PHASE})",
                d.exposure_items.len(),
                d.test_items.len()
            ));
        }

        if (n_expo, n_test, n_both) != (16, 16, 16) {
            role_counts.failures.push(format!(
                "participant {p}: role counts exposure-only={n_expo} test-only={n_test} both={n_both} (want 16/16/16)"
            ));
        }
        for attr in Attribute::ALL {
            if expo_attr[attr.index()] != 4 {
                exp_balance.failures.push(format!(
                    "participant {p}: {} exposure-only statements for {attr} (want 4)",
                    expo_attr[attr.index()]
                ));
            }
            if fresh_attr[attr.index()] != 4 {
                test_balance.failures.push(format!(
                    "participant {p}: {} fresh statements for {attr} (want 4)",
                    fresh_attr[attr.index()]
                ));
            }
        }
        for e in Attribute::ALL {
            for t in Attribute::ALL {
                if pairs[e.index()][t.index()] != 1 {
                    pair_cover.failures.push(format!(
                        "participant {p}: pair ({e}, {t}) covered {} times (want 1)",
                        pairs[e.index()][t.index()]
                    ));
                }
            }
        }
    }

    // Per-statement invariants.
    let mut stmt_pairs = BalanceCheck { name: "statement_pair_coverage", failures: vec![] };
    let mut stmt_fresh = BalanceCheck { name: "statement_fresh_balance", failures: vec![] };
    let mut stmt_expo = BalanceCheck { name: "statement_exposure_balance", failures: vec![] };
    let mut stmt_totals = BalanceCheck { name: "statement_phase_totals", failures: vec![] };
    let mut ids: Vec<&&str> = tallies.keys().collect();
    ids.sort_unstable();
    for id in ids {
        let tally = &tallies[*id];
        for e in Attribute::ALL {
            for t in Attribute::ALL {
                if tally.pair_count[e.index()][t.index()] != 1 {
                    stmt_pairs.failures.push(format!(
                        "statement {id}: pair ({e}, {t}) appears {} times (want 1)",
                        tally.pair_count[e.index()][t.index()]
                    ));
                }
            }
            if tally.fresh[e.index()] != 4 {
                stmt_fresh.failures.push(format!(
                    "statement {id}: {} fresh tests for {e} (want 4)",
                    tally.fresh[e.index()]
                ));
            }
            if tally.exposure_only[e.index()] != 4 {
                stmt_expo.failures.push(format!(
                    "statement {id}: {} exposure-only appearances for {e} (want 4)",
                    tally.exposure_only[e.index()]
                ));
            }
        }
        if tally.exposure_total != ITEMS_PER_PHASE as u32
            || tally.test_total != ITEMS_PER_PHASE as u32
        {
            stmt_totals.failures.push(format!(
                "statement {id}: appears in {} exposure / {} test phases (want 32/32)",
                tally.exposure_total, tally.test_total
            ));
        }
    }

    checks.push(list_shape);
    checks.push(role_counts);
    checks.push(exp_balance);
    checks.push(test_balance);
    checks.push(pair_cover);
    checks.push(stmt_pairs);
    checks.push(stmt_fresh);
    checks.push(stmt_expo);
    checks.push(stmt_totals);
    BalanceReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::StatementBank;

    #[test]
    fn trivial_square() {
        let sq = LatinSquare::random(1, 0).unwrap();
        assert_eq!(sq.get(0, 0), 0);
        assert!(sq.is_valid());
        assert!(LatinSquare::random(0, 0).is_err());
    }

    #[test]
    fn random_squares_are_latin_and_deterministic() {
        for seed in 0..5 {
            let sq = LatinSquare::random(20, seed).unwrap();
            assert!(sq.is_valid());
            assert_eq!(sq, LatinSquare::random(20, seed).unwrap());
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_squares() {
        // With order 100 the chance of a seed collision over 50 consecutive
        // seeds is negligible; require at least 49 of 50 to differ.
        let squares: Vec<_> = (0..50)
            .map(|s| LatinSquare::random(100, s).unwrap())
            .collect();
        let distinct = squares
            .windows(2)
            .filter(|w| w[0] != w[1])
            .count();
        assert!(distinct >= 49, "only {distinct} of 49 adjacent pairs differ");
    }

    #[test]
    fn role_symbols_partition() {
        let mut both = 0;
        let mut expo = 0;
        let mut test = 0;
        let mut unused = 0;
        for sym in 0..100 {
            match role_of_symbol(sym) {
                Some(CellRole::Both { .. }) => both += 1,
                Some(CellRole::ExposureOnly { .. }) => expo += 1,
                Some(CellRole::TestOnly { .. }) => test += 1,
                None => unused += 1,
            }
        }
        assert_eq!((both, expo, test, unused), (16, 16, 16, 52));
        // Every ordered attribute pair appears exactly once among `Both`.
        let mut pairs = std::collections::HashSet::new();
        for sym in 0..16 {
            if let Some(CellRole::Both { exposure, test }) = role_of_symbol(sym) {
                assert!(pairs.insert((exposure, test)));
            }
        }
        assert_eq!(pairs.len(), 16);
    }

    #[test]
    fn built_block_passes_validation() {
        let bank = StatementBank::builtin();
        let block = build_block(bank, 0, 42).unwrap();
        let report = validate_block(&block);
        assert!(report.pass(), "{}", report.summary());
    }

    #[test]
    fn block_is_deterministic_and_seed_sensitive() {
        let bank = StatementBank::builtin();
        let a = build_block(bank, 3, 42).unwrap();
        let b = build_block(bank, 3, 42).unwrap();
        assert_eq!(a, b);
        let c = build_block(bank, 3, 43).unwrap();
        assert_ne!(a, c);
        let d = build_block(bank, 4, 42).unwrap();
        assert_ne!(a.designs[0].cell_roles, d.designs[0].cell_roles);
    }

    #[test]
    fn participant_ids_are_global() {
        let bank = StatementBank::builtin();
        let block = build_block(bank, 2, 7).unwrap();
        assert_eq!(block.designs[0].participant_id, 200);
        assert_eq!(block.designs[99].participant_id, 299);
    }

    #[test]
    fn wrong_bank_size_is_rejected() {
        let bank = StatementBank::parse("s1 | Alpha\ns2 | Beta\n").unwrap();
        assert!(matches!(
            build_block(&bank, 0, 0),
            Err(DesignError::WrongBankSize { got: 2 })
        ));
    }

    #[test]
    fn validator_flags_corrupted_block() {
        let bank = StatementBank::builtin();
        let mut block = build_block(bank, 0, 1).unwrap();
        // Swap one participant's test item for a statement they already use,
        // breaking several tallies at once.
        let d = &mut block.designs[0];
        let (swapped_id, attr) = d.test_items[0].clone();
        let replacement = d.test_items[1].0.clone();
        d.test_items[0] = (replacement, attr);
        let report = validate_block(&block);
        assert!(!report.pass());
        let broken: Vec<_> = report.checks.iter().filter(|c| !c.pass()).collect();
        assert!(!broken.is_empty());
        // The failure message names the offending participant.
        assert!(
            broken.iter().any(|c| c.failures.iter().any(|f| f.contains("participant 0"))),
            "failures should name participant 0: {}",
            report.summary()
        );
        let _ = swapped_id;
    }

    /// An independently hand-built block (cyclic square, no shuffling) at a
    /// reduced size of 48 statements x 48 participants must pass validation:
    /// the validator checks the 16/16/16 geometry, not the builder.
    #[test]
    fn hand_built_minimal_block_passes() {
        let n = USED_SYMBOLS; // 48: no unused symbols
        let mut designs = Vec::new();
        for row in 0..n {
            let mut exposure_items = Vec::new();
            let mut test_items = Vec::new();
            let mut cell_roles = BTreeMap::new();
            for col in 0..n {
                let sym = (row + col) % n;
                let role = role_of_symbol(sym).expect("all 48 symbols are used");
                let id = format!("m{col:02}");
                match role {
                    CellRole::ExposureOnly { attribute } => {
                        exposure_items.push((id.clone(), attribute))
                    }
                    CellRole::TestOnly { attribute } => test_items.push((id.clone(), attribute)),
                    CellRole::Both { exposure, test } => {
                        exposure_items.push((id.clone(), exposure));
                        test_items.push((id.clone(), test));
                    }
                }
                cell_roles.insert(id, role);
            }
            designs.push(ParticipantDesign {
                participant_id: row as u32,
                block_id: 0,
                exposure_items,
                test_items,
                cell_roles,
            });
        }
        let report = validate_block(&Block { block_id: 0, designs });
        assert!(report.pass(), "{}", report.summary());
    }
}
