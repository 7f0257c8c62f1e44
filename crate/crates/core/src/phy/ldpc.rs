//! LDPC codes: systematic encoding and flooding sum-product decoding.
//!
//! Codes are defined by a binary parity-check matrix with full row rank.
//! The default code is a seeded (3,6)-regular construction; arbitrary
//! codes load from the text format described at `LdpcCode::from_text`.
//! Decoding is the flooding sum-product algorithm with the boxplus-phi
//! check-node rule.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// A binary LDPC code with a systematic encoder derived at construction.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    n: usize,
    m: usize,
    /// Column indices of each check, sorted.
    check_cols: Vec<Vec<usize>>,
    /// Information (non-pivot) columns, in increasing order.
    info_cols: Vec<usize>,
    /// For each parity column: the information columns XORed into it,
    /// taken from the reduced row echelon form of the check matrix.
    parity_rows: Vec<(usize, Vec<usize>)>,
}

/// Dense GF(2) row as 64-bit blocks.
#[derive(Clone)]
struct BitRow {
    blocks: Vec<u64>,
}

impl BitRow {
    fn zero(n: usize) -> Self {
        BitRow { blocks: alloc::vec![0u64; n.div_ceil(64)] }
    }
    #[inline]
    fn get(&self, i: usize) -> bool {
        self.blocks[i / 64] >> (i % 64) & 1 == 1
    }
    #[inline]
    fn set(&mut self, i: usize) {
        self.blocks[i / 64] |= 1 << (i % 64);
    }
    fn xor_in(&mut self, other: &BitRow) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            *a ^= b;
        }
    }
}

impl LdpcCode {
    /// Build a code from explicit check lists. Fails unless the matrix has
    /// full row rank over GF(2).
    pub fn from_checks(n: usize, check_cols: Vec<Vec<usize>>) -> Result<Self> {
        let m = check_cols.len();
        if n == 0 || m == 0 || m >= n {
            return Err(Error::InvalidConfig(format!("need 0 < m < n, got m={m} n={n}")));
        }
        for (c, cols) in check_cols.iter().enumerate() {
            if cols.is_empty() {
                return Err(Error::InvalidConfig(format!("check {c} is empty")));
            }
            if cols.iter().any(|&v| v >= n) {
                return Err(Error::InvalidConfig(format!("check {c} references column >= {n}")));
            }
        }
        let mut checks = check_cols;
        for (c, cols) in checks.iter_mut().enumerate() {
            cols.sort_unstable();
            if cols.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidConfig(format!("check {c} lists a column twice")));
            }
        }

        // Reduced row echelon form over GF(2) for the systematic encoder.
        let mut rows: Vec<BitRow> = checks
            .iter()
            .map(|cols| {
                let mut r = BitRow::zero(n);
                for &c in cols {
                    r.set(c);
                }
                r
            })
            .collect();
        let mut pivots: Vec<usize> = Vec::with_capacity(m);
        let mut row = 0usize;
        for col in 0..n {
            if row == m {
                break;
            }
            let Some(p) = (row..m).find(|&r| rows[r].get(col)) else {
                continue;
            };
            rows.swap(row, p);
            let pivot_row = rows[row].clone();
            for (r, other) in rows.iter_mut().enumerate() {
                if r != row && other.get(col) {
                    other.xor_in(&pivot_row);
                }
            }
            pivots.push(col);
            row += 1;
        }
        if row < m {
            return Err(Error::InvalidConfig(format!(
                "check matrix rank {row} below row count {m}"
            )));
        }

        let pivot_set: Vec<bool> = {
            let mut v = alloc::vec![false; n];
            for &p in &pivots {
                v[p] = true;
            }
            v
        };
        let info_cols: Vec<usize> = (0..n).filter(|&c| !pivot_set[c]).collect();
        let parity_rows: Vec<(usize, Vec<usize>)> = pivots
            .iter()
            .enumerate()
            .map(|(r, &pc)| {
                let deps: Vec<usize> =
                    info_cols.iter().copied().filter(|&c| rows[r].get(c)).collect();
                (pc, deps)
            })
            .collect();

        Ok(LdpcCode { n, m, check_cols: checks, info_cols, parity_rows })
    }

    /// Seeded (3,6)-regular construction via stub matching with duplicate
    /// repair; retries until the matrix has full row rank.
    pub fn regular_3_6(n: usize, rng: &mut RngStream) -> Result<Self> {
        if n % 2 != 0 || n < 8 {
            return Err(Error::InvalidConfig("regular (3,6) code needs even n >= 8".into()));
        }
        let m = n / 2;
        for _attempt in 0..64 {
            // Column stubs: three per column, shuffled among 6m check slots.
            let mut stubs: Vec<usize> = (0..3 * n).map(|i| i / 3).collect();
            for i in (1..stubs.len()).rev() {
                let j = rng.below(i as u64 + 1) as usize;
                stubs.swap(i, j);
            }
            // Repair duplicate edges inside a check by swapping stubs.
            for _round in 0..10 * n {
                let mut dup = None;
                'scan: for c in 0..m {
                    let s = &stubs[6 * c..6 * (c + 1)];
                    for a in 0..6 {
                        for b in a + 1..6 {
                            if s[a] == s[b] {
                                dup = Some(6 * c + b);
                                break 'scan;
                            }
                        }
                    }
                }
                let Some(pos) = dup else {
                    break;
                };
                let other = rng.below(stubs.len() as u64) as usize;
                stubs.swap(pos, other);
            }
            // One clean verification pass; lingering duplicates force a
            // fresh attempt.
            let checks: Vec<Vec<usize>> =
                (0..m).map(|c| stubs[6 * c..6 * (c + 1)].to_vec()).collect();
            let clean = checks.iter().all(|cols| {
                let mut seen = cols.clone();
                seen.sort_unstable();
                seen.windows(2).all(|w| w[0] != w[1])
            });
            if !clean {
                continue;
            }
            if let Ok(code) = LdpcCode::from_checks(n, checks) {
                return Ok(code);
            }
        }
        Err(Error::InvalidConfig("could not draw a full-rank (3,6) code".into()))
    }

    /// Parse the text format: first line `m n`, then one line per check
    /// with the incident column indices, space separated.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::InvalidConfig("empty code file".into()))?;
        let mut it = header.split_whitespace();
        let m: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidConfig("bad header: expected `m n`".into()))?;
        let n: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::InvalidConfig("bad header: expected `m n`".into()))?;
        let mut checks = Vec::with_capacity(m);
        for (i, line) in lines.take(m).enumerate() {
            let cols: core::result::Result<Vec<usize>, _> =
                line.split_whitespace().map(|t| t.parse()).collect();
            let cols =
                cols.map_err(|_| Error::InvalidConfig(format!("bad column index on check {i}")))?;
            checks.push(cols);
        }
        if checks.len() != m {
            return Err(Error::InvalidConfig(format!(
                "expected {m} check lines, found {}",
                checks.len()
            )));
        }
        LdpcCode::from_checks(n, checks)
    }

    /// Serialize in the `from_text` format.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.m, self.n);
        for cols in &self.check_cols {
            let mut first = true;
            for c in cols {
                if !first {
                    out.push(' ');
                }
                out.push_str(&format!("{c}"));
                first = false;
            }
            out.push('\n');
        }
        out
    }

    pub fn block_len(&self) -> usize {
        self.n
    }

    pub fn info_len(&self) -> usize {
        self.n - self.m
    }

    pub fn rate(&self) -> f64 {
        self.info_len() as f64 / self.n as f64
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.check_cols
    }

    /// Positions of the information bits inside a codeword.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_cols
    }

    /// True iff `word` satisfies every parity check.
    pub fn syndrome_ok(&self, word: &[u8]) -> bool {
        self.check_cols
            .iter()
            .all(|cols| cols.iter().fold(0u8, |acc, &c| acc ^ (word[c] & 1)) == 0)
    }
}

/// Systematic encoding: information bits land on the non-pivot columns and
/// parities are solved so every check is satisfied.
pub fn ldpc_encode(info_bits: &[u8], code: &LdpcCode) -> Result<Vec<u8>> {
    if info_bits.len() != code.info_len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} info bits, got {}",
            code.info_len(),
            info_bits.len()
        )));
    }
    let mut word = alloc::vec![0u8; code.n];
    for (&col, &b) in code.info_cols.iter().zip(info_bits) {
        word[col] = b & 1;
    }
    for (pivot, deps) in &code.parity_rows {
        word[*pivot] = deps.iter().fold(0u8, |acc, &c| acc ^ word[c]);
    }
    Ok(word)
}

/// Boxplus-phi transform, guarded against log(0) for tiny arguments.
#[inline]
fn phi(x: f64) -> f64 {
    let x = x.max(1e-12);
    if x < 1e-6 {
        // tanh(x/2) ~ x/2 to double precision here.
        -(0.5 * x).ln()
    } else {
        -((0.5 * x).tanh().ln())
    }
}

/// Flooding sum-product decoding.
///
/// `llrs` use the crate-wide convention (positive means bit 1). Returns
/// the information bits and a success flag; success requires every parity
/// check to hold on committed (nonzero-posterior) decisions, so an
/// all-zero input reports failure rather than trivially "decoding" the
/// all-zero word.
pub fn spa_decode(llrs: &[f64], code: &LdpcCode, max_iter: usize) -> Result<(Vec<u8>, bool)> {
    if llrs.len() != code.n {
        return Err(Error::InvalidArgument(format!(
            "expected {} LLRs, got {}",
            code.n,
            llrs.len()
        )));
    }
    // Internal sign convention: alpha = ln(P0 / P1) = -llr.
    let alpha: Vec<f64> = llrs.iter().map(|&l| -l).collect();

    // Edge list grouped by check.
    let edges_per_check: Vec<&[usize]> = code.check_cols.iter().map(|v| v.as_slice()).collect();
    let num_edges: usize = edges_per_check.iter().map(|e| e.len()).sum();
    let mut check_offset = Vec::with_capacity(code.m + 1);
    check_offset.push(0usize);
    for e in &edges_per_check {
        check_offset.push(check_offset.last().unwrap() + e.len());
    }
    // Messages on edges, indexed by (check, slot-in-check).
    let mut c2v = alloc::vec![0.0f64; num_edges];
    let mut v2c = alloc::vec![0.0f64; num_edges];
    // Incoming check sum per variable, rebuilt each iteration.
    let mut post = alpha.clone();

    let mut hard = alloc::vec![0u8; code.n];
    let mut committed;
    for iter in 0..max_iter.max(1) {
        // Variable update: v2c = posterior minus this check's message.
        if iter == 0 {
            for (e, &v) in edge_vars(&edges_per_check).enumerate() {
                v2c[e] = alpha[v];
            }
        } else {
            for (e, &v) in edge_vars(&edges_per_check).enumerate() {
                v2c[e] = post[v] - c2v[e];
            }
        }
        // Check update: boxplus-phi over the other edges of the check.
        for (c, cols) in edges_per_check.iter().enumerate() {
            let base = check_offset[c];
            let deg = cols.len();
            let mut phi_sum = 0.0;
            let mut sign = 1.0f64;
            let mut zero_count = 0usize;
            for e in base..base + deg {
                let m = v2c[e];
                if m < 0.0 {
                    sign = -sign;
                } else if m == 0.0 {
                    zero_count += 1;
                }
                phi_sum += phi(m.abs());
            }
            for e in base..base + deg {
                let m = v2c[e];
                if zero_count > 1 || (zero_count == 1 && m != 0.0) {
                    c2v[e] = 0.0;
                    continue;
                }
                let s = if m < 0.0 { -sign } else { sign };
                c2v[e] = s * phi((phi_sum - phi(m.abs())).max(0.0));
            }
        }
        // Posterior and tentative decisions.
        post.copy_from_slice(&alpha);
        for (e, &v) in edge_vars(&edges_per_check).enumerate() {
            post[v] += c2v[e];
        }
        committed = true;
        for (v, &p) in post.iter().enumerate() {
            hard[v] = if p < 0.0 { 1 } else { 0 };
            if p == 0.0 {
                committed = false;
            }
        }
        if committed && code.syndrome_ok(&hard) {
            let info = code.info_cols.iter().map(|&c| hard[c]).collect();
            return Ok((info, true));
        }
    }
    let info = code.info_cols.iter().map(|&c| hard[c]).collect();
    Ok((info, false))
}

/// Iterator over the variable index of every edge, in check-major order.
fn edge_vars<'a>(edges_per_check: &'a [&'a [usize]]) -> impl Iterator<Item = &'a usize> + 'a {
    edges_per_check.iter().flat_map(|cols| cols.iter())
}
