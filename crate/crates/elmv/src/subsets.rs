//! Greedy dynamic program that extracts, for every reachable (rows, cols)
//! shape, a maximal submatrix of low missingness, plus the qualified-subset
//! filter and a brute-force oracle for small instances.

use serde::{Deserialize, Serialize};

use crate::data::MissingnessMask;
use crate::error::{ElmvError, Result};

/// Default missing-rate bin width used when grouping subsets of similar rate.
pub const DEFAULT_RATE_BIN_WIDTH: f64 = 0.05;

/// Default smallest retained patient count for an `n_rows`-patient mask.
pub fn default_min_rows(n_rows: usize) -> usize {
    (5usize.max((n_rows as f64 * 0.1).ceil() as usize)).min(n_rows)
}

/// Default smallest retained feature count for an `n_cols`-feature mask.
pub fn default_min_cols(n_cols: usize) -> usize {
    (2usize.max((n_cols as f64 * 0.1).ceil() as usize)).min(n_cols)
}

/// One extracted submatrix: retained identities plus its missingness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetDescriptor {
    /// Retained patient ids, in the order the extraction left them.
    pub row_ids: Vec<String>,
    /// Retained feature names, in the order the extraction left them.
    pub col_ids: Vec<String>,
    pub missing_count: u64,
    pub missing_rate: f64,
}

impl SubsetDescriptor {
    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_ids.len()
    }
}

/// Which neighbor a table cell was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// The full matrix; nothing removed.
    Root,
    /// Derived from the (rows, cols+1) cell by dropping its worst column.
    DroppedColumn,
    /// Derived from the (rows+1, cols) cell by dropping its worst row.
    DroppedRow,
}

/// Mutable submatrix state carried through the dynamic program: identity
/// lists (original indices) and per-row/per-column missing counts.
#[derive(Debug, Clone)]
struct SubState {
    rows: Vec<u32>,
    cols: Vec<u32>,
    row_counts: Vec<u32>,
    col_counts: Vec<u32>,
    total: u64,
}

impl SubState {
    fn full(mask: &MissingnessMask) -> Self {
        let n_rows = mask.n_rows();
        let n_cols = mask.n_cols();
        let mut row_counts = vec![0u32; n_rows];
        let mut col_counts = vec![0u32; n_cols];
        let mut total = 0u64;
        for i in 0..n_rows {
            for j in 0..n_cols {
                if mask.bit(i, j) {
                    row_counts[i] += 1;
                    col_counts[j] += 1;
                    total += 1;
                }
            }
        }
        SubState {
            rows: (0..n_rows as u32).collect(),
            cols: (0..n_cols as u32).collect(),
            row_counts,
            col_counts,
            total,
        }
    }

    /// Stable sort of both axes, ascending by missing count.
    fn order(&mut self) {
        let mut row_perm: Vec<usize> = (0..self.rows.len()).collect();
        row_perm.sort_by_key(|&i| self.row_counts[i]);
        apply_perm(&mut self.rows, &row_perm);
        apply_perm(&mut self.row_counts, &row_perm);

        let mut col_perm: Vec<usize> = (0..self.cols.len()).collect();
        col_perm.sort_by_key(|&j| self.col_counts[j]);
        apply_perm(&mut self.cols, &col_perm);
        apply_perm(&mut self.col_counts, &col_perm);
    }

    fn drop_last_col(&mut self, mask: &MissingnessMask) {
        let col = self.cols.pop().expect("non-empty column list");
        let removed = self.col_counts.pop().expect("count aligned with cols");
        if removed > 0 {
            for (idx, &row) in self.rows.iter().enumerate() {
                if mask.bit(row as usize, col as usize) {
                    self.row_counts[idx] -= 1;
                }
            }
        }
        self.total -= u64::from(removed);
    }

    fn drop_last_row(&mut self, mask: &MissingnessMask) {
        let row = self.rows.pop().expect("non-empty row list");
        let removed = self.row_counts.pop().expect("count aligned with rows");
        if removed > 0 {
            for (idx, &col) in self.cols.iter().enumerate() {
                if mask.bit(row as usize, col as usize) {
                    self.col_counts[idx] -= 1;
                }
            }
        }
        self.total -= u64::from(removed);
    }
}

fn apply_perm<T: Copy>(items: &mut [T], perm: &[usize]) {
    let reordered: Vec<T> = perm.iter().map(|&i| items[i]).collect();
    items.copy_from_slice(&reordered);
}

/// Row and column permutations sorting `mask` ascending by missing rate.
///
/// Ties keep the original index order.
pub fn order_mask(mask: &MissingnessMask) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..mask.n_rows()).collect();
    rows.sort_by(|&a, &b| mask.row_rates()[a].total_cmp(&mask.row_rates()[b]));
    let mut cols: Vec<usize> = (0..mask.n_cols()).collect();
    cols.sort_by(|&a, &b| mask.col_rates()[a].total_cmp(&mask.col_rates()[b]));
    (rows, cols)
}

/// The filled dynamic-programming grid over subset shapes.
///
/// Cell `(i, j)` records the missing count of the generated subset with `i`
/// patients and `j` features. Identity lists are not stored per cell; they
/// are replayed on demand from the provenance backpointers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissingCountTable {
    mask: MissingnessMask,
    min_rows: usize,
    min_cols: usize,
    /// Row-major over the full `(n_rows, n_cols)` shape grid; `None` outside
    /// the generated region.
    counts: Vec<Option<u64>>,
    provenance: Vec<Option<Provenance>>,
}

impl MissingCountTable {
    pub fn n_rows(&self) -> usize {
        self.mask.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.mask.n_cols()
    }

    pub fn min_rows(&self) -> usize {
        self.min_rows
    }

    pub fn min_cols(&self) -> usize {
        self.min_cols
    }

    pub fn mask(&self) -> &MissingnessMask {
        &self.mask
    }

    fn cell(&self, rows: usize, cols: usize) -> usize {
        (rows - 1) * self.n_cols() + (cols - 1)
    }

    /// Missing count of the generated subset with `rows` patients and `cols`
    /// features; `None` when outside the generated region.
    pub fn count(&self, rows: usize, cols: usize) -> Option<u64> {
        if rows == 0 || cols == 0 || rows > self.n_rows() || cols > self.n_cols() {
            return None;
        }
        self.counts[self.cell(rows, cols)]
    }

    pub fn provenance(&self, rows: usize, cols: usize) -> Option<Provenance> {
        if rows == 0 || cols == 0 || rows > self.n_rows() || cols > self.n_cols() {
            return None;
        }
        self.provenance[self.cell(rows, cols)]
    }

    /// All generated shapes, largest first.
    pub fn defined_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        for rows in (self.min_rows..=self.n_rows()).rev() {
            for cols in (self.min_cols..=self.n_cols()).rev() {
                if self.counts[self.cell(rows, cols)].is_some() {
                    shapes.push((rows, cols));
                }
            }
        }
        shapes
    }

    /// Materializes the descriptor for a shape by replaying the removal
    /// chain recorded in the provenance grid.
    pub fn descriptor(&self, rows: usize, cols: usize) -> Option<SubsetDescriptor> {
        self.count(rows, cols)?;
        let state = self.replay(rows, cols);
        Some(self.descriptor_from_state(&state))
    }

    fn descriptor_from_state(&self, state: &SubState) -> SubsetDescriptor {
        let row_ids = state
            .rows
            .iter()
            .map(|&r| self.mask.row_ids()[r as usize].clone())
            .collect();
        let col_ids = state
            .cols
            .iter()
            .map(|&c| self.mask.col_ids()[c as usize].clone())
            .collect();
        let cells = (state.rows.len() * state.cols.len()) as f64;
        SubsetDescriptor {
            row_ids,
            col_ids,
            missing_count: state.total,
            missing_rate: state.total as f64 / cells,
        }
    }

    fn replay(&self, rows: usize, cols: usize) -> SubState {
        // Collect the provenance chain back to the root, then apply it.
        let mut steps = Vec::with_capacity(self.n_rows() + self.n_cols());
        let (mut r, mut c) = (rows, cols);
        loop {
            match self.provenance[self.cell(r, c)].expect("defined cell") {
                Provenance::Root => break,
                Provenance::DroppedColumn => {
                    steps.push(Provenance::DroppedColumn);
                    c += 1;
                }
                Provenance::DroppedRow => {
                    steps.push(Provenance::DroppedRow);
                    r += 1;
                }
            }
        }
        let mut state = SubState::full(&self.mask);
        state.order();
        for step in steps.into_iter().rev() {
            state.order();
            match step {
                Provenance::DroppedColumn => state.drop_last_col(&self.mask),
                Provenance::DroppedRow => state.drop_last_row(&self.mask),
                Provenance::Root => unreachable!(),
            }
        }
        state
    }
}

/// Fills the shape grid from the full matrix down to `(min_rows, min_cols)`.
///
/// Each cell is produced from whichever of its right and lower neighbors has
/// the smaller missing count, re-ordering that neighbor and removing its
/// worst column or row. Ties prefer the column branch.
pub fn generate_table(
    mask: &MissingnessMask,
    min_rows: usize,
    min_cols: usize,
) -> Result<MissingCountTable> {
    let n_rows = mask.n_rows();
    let n_cols = mask.n_cols();
    if n_rows == 0 || n_cols == 0 {
        return Err(ElmvError::Argument("mask has no cells".into()));
    }
    if min_rows < 1 || min_rows > n_rows {
        return Err(ElmvError::Argument(format!(
            "min_rows {min_rows} out of range 1..={n_rows}"
        )));
    }
    if min_cols < 1 || min_cols > n_cols {
        return Err(ElmvError::Argument(format!(
            "min_cols {min_cols} out of range 1..={n_cols}"
        )));
    }

    let mut counts: Vec<Option<u64>> = vec![None; n_rows * n_cols];
    let mut provenance: Vec<Option<Provenance>> = vec![None; n_rows * n_cols];
    let cell = |rows: usize, cols: usize| (rows - 1) * n_cols + (cols - 1);

    // States for the DP row currently being filled and the one above it
    // (one more patient), indexed by `cols - 1`.
    let mut prev_row: Vec<Option<SubState>> = vec![None; n_cols];
    let mut curr_row: Vec<Option<SubState>> = vec![None; n_cols];

    for rows in (min_rows..=n_rows).rev() {
        for slot in curr_row.iter_mut() {
            *slot = None;
        }
        for cols in (min_cols..=n_cols).rev() {
            if rows == n_rows && cols == n_cols {
                let mut state = SubState::full(mask);
                state.order();
                counts[cell(rows, cols)] = Some(state.total);
                provenance[cell(rows, cols)] = Some(Provenance::Root);
                curr_row[cols - 1] = Some(state);
                continue;
            }
            let right = if cols < n_cols {
                counts[cell(rows, cols + 1)]
            } else {
                None
            };
            let below = if rows < n_rows {
                counts[cell(rows + 1, cols)]
            } else {
                None
            };
            let take_column = match (right, below) {
                (Some(r), Some(b)) => r <= b,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => unreachable!("interior cell with no defined neighbor"),
            };
            let mut state = if take_column {
                curr_row[cols].clone().expect("right neighbor state")
            } else {
                prev_row[cols - 1].clone().expect("lower neighbor state")
            };
            state.order();
            if take_column {
                state.drop_last_col(mask);
            } else {
                state.drop_last_row(mask);
            }
            counts[cell(rows, cols)] = Some(state.total);
            provenance[cell(rows, cols)] = Some(if take_column {
                Provenance::DroppedColumn
            } else {
                Provenance::DroppedRow
            });
            curr_row[cols - 1] = Some(state);
        }
        std::mem::swap(&mut prev_row, &mut curr_row);
    }

    Ok(MissingCountTable {
        mask: mask.clone(),
        min_rows,
        min_cols,
        counts,
        provenance,
    })
}

/// Guard for the exhaustive oracle; beyond this the subset count explodes.
pub const BRUTE_FORCE_LIMIT: usize = 14;

/// Exact minimum missing count over all `x`-row, `y`-column submatrices.
///
/// Exhaustive over column subsets; refuses masks larger than
/// [`BRUTE_FORCE_LIMIT`] on either axis.
pub fn brute_force_min(mask: &MissingnessMask, x: usize, y: usize) -> Result<u64> {
    let n_rows = mask.n_rows();
    let n_cols = mask.n_cols();
    if n_rows > BRUTE_FORCE_LIMIT || n_cols > BRUTE_FORCE_LIMIT {
        return Err(ElmvError::Refusal(format!(
            "mask is {n_rows}x{n_cols}; exhaustive search is limited to {BRUTE_FORCE_LIMIT} per axis"
        )));
    }
    if x == 0 || x > n_rows || y == 0 || y > n_cols {
        return Err(ElmvError::Argument(format!(
            "shape ({x}, {y}) out of range for a {n_rows}x{n_cols} mask"
        )));
    }
    let mut best = u64::MAX;
    let mut cols: Vec<usize> = (0..y).collect();
    loop {
        // Sum of the x smallest per-row counts restricted to `cols`.
        let mut row_counts: Vec<u32> = (0..n_rows)
            .map(|i| cols.iter().filter(|&&j| mask.bit(i, j)).count() as u32)
            .collect();
        row_counts.sort_unstable();
        let total: u64 = row_counts[..x].iter().map(|&c| u64::from(c)).sum();
        best = best.min(total);
        if !next_combination(&mut cols, n_cols) {
            break;
        }
    }
    Ok(best)
}

/// Advances `combo` to the next k-combination of `0..n`; false when done.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Subsets surviving the missing-rate cap and the near-duplicate filter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualifiedSubsetCollection {
    pub subsets: Vec<SubsetDescriptor>,
    pub cap: f64,
}

/// Keeps the shapes under `cap` that, within their missing-rate bin, hold
/// the most features for their patient count and the most patients for
/// their feature count.
pub fn filter_qualified(
    table: &MissingCountTable,
    cap: f64,
    rate_bin_width: f64,
) -> Result<QualifiedSubsetCollection> {
    if !(cap > 0.0 && cap <= 1.0) {
        return Err(ElmvError::Argument(format!(
            "cap must lie in (0,1], got {cap}"
        )));
    }
    if !(rate_bin_width > 0.0 && rate_bin_width <= 1.0) {
        return Err(ElmvError::Argument(format!(
            "rate_bin_width must lie in (0,1], got {rate_bin_width}"
        )));
    }

    // (bin, rows, cols) for every cell under the cap.
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for (rows, cols) in table.defined_shapes() {
        let count = table.count(rows, cols).expect("defined shape");
        let rate = count as f64 / (rows * cols) as f64;
        if rate <= cap {
            let bin = (rate / rate_bin_width).floor() as usize;
            candidates.push((bin, rows, cols));
        }
    }

    use std::collections::BTreeMap;
    // Within each bin: max cols per row count and max rows per col count.
    let mut max_cols: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut max_rows: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &(bin, rows, cols) in &candidates {
        let mc = max_cols.entry((bin, rows)).or_insert(0);
        *mc = (*mc).max(cols);
        let mr = max_rows.entry((bin, cols)).or_insert(0);
        *mr = (*mr).max(rows);
    }

    let mut kept: Vec<(usize, usize)> = candidates
        .iter()
        .filter(|&&(bin, rows, cols)| {
            max_cols[&(bin, rows)] == cols && max_rows[&(bin, cols)] == rows
        })
        .map(|&(_, rows, cols)| (rows, cols))
        .collect();
    kept.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)));
    kept.dedup();

    let subsets: Vec<SubsetDescriptor> = kept
        .into_iter()
        .map(|(rows, cols)| table.descriptor(rows, cols).expect("kept shape is defined"))
        .collect();

    if subsets.is_empty() {
        return Err(ElmvError::NoQualifiedSubsets { cap });
    }
    Ok(QualifiedSubsetCollection { subsets, cap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_mask(rng: &mut ChaCha8Rng, n_rows: usize, n_cols: usize, density: f64) -> MissingnessMask {
        let bits = (0..n_rows * n_cols)
            .map(|_| rng.gen_bool(density))
            .collect();
        MissingnessMask::from_bits(n_rows, n_cols, bits).unwrap()
    }

    /// Recount a descriptor's missing cells directly against the mask.
    fn recount(mask: &MissingnessMask, d: &SubsetDescriptor) -> u64 {
        let rows: Vec<usize> = d
            .row_ids
            .iter()
            .map(|id| mask.row_ids().iter().position(|r| r == id).unwrap())
            .collect();
        let cols: Vec<usize> = d
            .col_ids
            .iter()
            .map(|id| mask.col_ids().iter().position(|c| c == id).unwrap())
            .collect();
        let mut total = 0u64;
        for &r in &rows {
            for &c in &cols {
                total += u64::from(mask.bit(r, c));
            }
        }
        total
    }

    #[test]
    fn order_mask_is_stable_on_uniform_rates() {
        let mask = MissingnessMask::from_bits(3, 3, vec![false; 9]).unwrap();
        let (rows, cols) = order_mask(&mask);
        assert_eq!(rows, vec![0, 1, 2]);
        assert_eq!(cols, vec![0, 1, 2]);
    }

    #[test]
    fn order_mask_sorts_columns_by_rate() {
        // Column rates 0.5, 0.0, 0.25 -> order (1, 2, 0) zero-based.
        let bits = vec![
            true, false, false, //
            true, false, true, //
            false, false, false, //
            false, false, false,
        ];
        let mask = MissingnessMask::from_bits(4, 3, bits).unwrap();
        let (_, cols) = order_mask(&mask);
        assert_eq!(cols, vec![1, 2, 0]);
    }

    #[test]
    fn order_mask_monotone_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mask = random_mask(&mut rng, 8, 8, 0.3);
            let (rows, cols) = order_mask(&mask);
            for w in rows.windows(2) {
                assert!(mask.row_rates()[w[0]] <= mask.row_rates()[w[1]]);
            }
            for w in cols.windows(2) {
                assert!(mask.col_rates()[w[0]] <= mask.col_rates()[w[1]]);
            }
            // Independent check: sorted rate multisets agree.
            let mut expect: Vec<f64> = mask.row_rates().to_vec();
            expect.sort_by(f64::total_cmp);
            let got: Vec<f64> = rows.iter().map(|&i| mask.row_rates()[i]).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn all_zero_mask_keeps_leading_rows_and_columns() {
        let mask = MissingnessMask::from_bits(4, 4, vec![false; 16]).unwrap();
        let table = generate_table(&mask, 1, 1).unwrap();
        for rows in 1..=4 {
            for cols in 1..=4 {
                assert_eq!(table.count(rows, cols), Some(0));
            }
        }
        let d = table.descriptor(2, 3).unwrap();
        assert_eq!(d.row_ids, vec!["r1", "r2"]);
        assert_eq!(d.col_ids, vec!["c1", "c2", "c3"]);
    }

    #[test]
    fn fully_missing_column_is_dropped_first() {
        // Column 2 fully missing, everything else observed.
        let bits: Vec<bool> = (0..16).map(|i| i % 4 == 1).collect();
        let mask = MissingnessMask::from_bits(4, 4, bits).unwrap();
        let table = generate_table(&mask, 1, 1).unwrap();
        assert_eq!(table.count(4, 4), Some(4));
        assert_eq!(table.count(4, 3), Some(0));
        let d = table.descriptor(4, 3).unwrap();
        assert!(!d.col_ids.contains(&"c2".to_string()));
    }

    #[test]
    fn greedy_never_beats_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut equal = 0usize;
        let mut cells = 0usize;
        for _ in 0..100 {
            let mask = random_mask(&mut rng, 5, 5, 0.3);
            let table = generate_table(&mask, 1, 1).unwrap();
            for rows in 1..=5 {
                for cols in 1..=5 {
                    let greedy = table.count(rows, cols).unwrap();
                    let exact = brute_force_min(&mask, rows, cols).unwrap();
                    assert!(
                        greedy >= exact,
                        "greedy {greedy} below exact {exact} at ({rows},{cols})"
                    );
                    cells += 1;
                    equal += usize::from(greedy == exact);
                }
            }
        }
        // The greedy construction should be exact most of the time at this scale.
        assert!(equal as f64 / cells as f64 > 0.5);
    }

    #[test]
    fn brute_force_agrees_with_row_major_enumeration() {
        // Second, independently ordered enumeration: over row subsets.
        fn by_rows(mask: &MissingnessMask, x: usize, y: usize) -> u64 {
            let n_rows = mask.n_rows();
            let n_cols = mask.n_cols();
            let mut best = u64::MAX;
            let mut rows: Vec<usize> = (0..x).collect();
            loop {
                let mut col_counts: Vec<u32> = (0..n_cols)
                    .map(|j| rows.iter().filter(|&&i| mask.bit(i, j)).count() as u32)
                    .collect();
                col_counts.sort_unstable();
                let total: u64 = col_counts[..y].iter().map(|&c| u64::from(c)).sum();
                best = best.min(total);
                if !next_combination(&mut rows, n_rows) {
                    break;
                }
            }
            best
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mask = random_mask(&mut rng, 4, 4, 0.4);
            for x in 1..=4 {
                for y in 1..=4 {
                    assert_eq!(
                        brute_force_min(&mask, x, y).unwrap(),
                        by_rows(&mask, x, y),
                        "mismatch at ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn brute_force_trivial_cases() {
        let clean = MissingnessMask::from_bits(4, 4, vec![false; 16]).unwrap();
        assert_eq!(brute_force_min(&clean, 3, 2).unwrap(), 0);
        let one = MissingnessMask::from_bits(2, 2, vec![true, false, false, false]).unwrap();
        assert_eq!(brute_force_min(&one, 1, 1).unwrap(), 0);
        let big = MissingnessMask::from_bits(15, 3, vec![false; 45]).unwrap();
        assert!(matches!(
            brute_force_min(&big, 2, 2),
            Err(ElmvError::Refusal(_))
        ));
    }

    #[test]
    fn counts_monotone_and_descriptors_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..30 {
            let n_rows = rng.gen_range(3..=10);
            let n_cols = rng.gen_range(3..=10);
            let mask = random_mask(&mut rng, n_rows, n_cols, 0.35);
            let table = generate_table(&mask, 1, 1).unwrap();
            for rows in 1..=n_rows {
                for cols in 1..=n_cols {
                    let c = table.count(rows, cols).unwrap();
                    if rows < n_rows {
                        assert!(c <= table.count(rows + 1, cols).unwrap());
                    }
                    if cols < n_cols {
                        assert!(c <= table.count(rows, cols + 1).unwrap());
                    }
                    let d = table.descriptor(rows, cols).unwrap();
                    assert_eq!(d.missing_count, c);
                    assert_eq!(recount(&mask, &d), c);
                    assert!(
                        (d.missing_rate - c as f64 / (rows * cols) as f64).abs() < 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mask = random_mask(&mut rng, 12, 9, 0.4);
        let a = generate_table(&mask, 2, 2).unwrap();
        let b = generate_table(&mask, 2, 2).unwrap();
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.provenance, b.provenance);
        let da: Vec<_> = a.defined_shapes().iter().map(|&(r, c)| a.descriptor(r, c)).collect();
        let db: Vec<_> = b.defined_shapes().iter().map(|&(r, c)| b.descriptor(r, c)).collect();
        assert_eq!(da, db);
    }

    #[test]
    fn local_swap_never_improves_qualified_subsets() {
        // Surrogate maximality: swapping the worst retained column for the
        // most recently dropped one (the greedy's preferred excluded column)
        // never lowers the missing count; likewise for rows.
        let mut rng = ChaCha8Rng::seed_from_u64(171);
        for _ in 0..40 {
            let mask = random_mask(&mut rng, 10, 8, 0.3);
            let table = generate_table(&mask, 2, 2).unwrap();
            let collection = match filter_qualified(&table, 0.25, DEFAULT_RATE_BIN_WIDTH) {
                Ok(c) => c,
                Err(ElmvError::NoQualifiedSubsets { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            for d in &collection.subsets {
                let rows: Vec<usize> = d
                    .row_ids
                    .iter()
                    .map(|id| mask.row_ids().iter().position(|r| r == id).unwrap())
                    .collect();
                let cols: Vec<usize> = d
                    .col_ids
                    .iter()
                    .map(|id| mask.col_ids().iter().position(|c| c == id).unwrap())
                    .collect();
                let col_count = |c: usize, rows: &[usize]| -> u64 {
                    rows.iter().map(|&r| u64::from(mask.bit(r, c))).sum()
                };
                let row_count = |r: usize, cols: &[usize]| -> u64 {
                    cols.iter().map(|&c| u64::from(mask.bit(r, c))).sum()
                };
                // Most recently dropped column along this descriptor's chain.
                let dropped_col = last_dropped(&table, d.n_rows(), d.n_cols(), true);
                if let Some(excluded) = dropped_col {
                    let worst_retained = cols
                        .iter()
                        .copied()
                        .max_by_key(|&c| (col_count(c, &rows), cols.iter().position(|&x| x == c)))
                        .unwrap();
                    let delta = col_count(excluded, &rows) as i64
                        - col_count(worst_retained, &rows) as i64;
                    assert!(
                        delta >= 0,
                        "column swap improved a qualified subset: {delta}"
                    );
                }
                let dropped_row = last_dropped(&table, d.n_rows(), d.n_cols(), false);
                if let Some(excluded) = dropped_row {
                    let worst_retained = rows
                        .iter()
                        .copied()
                        .max_by_key(|&r| (row_count(r, &cols), rows.iter().position(|&x| x == r)))
                        .unwrap();
                    let delta = row_count(excluded, &cols) as i64
                        - row_count(worst_retained, &cols) as i64;
                    assert!(delta >= 0, "row swap improved a qualified subset: {delta}");
                }
            }
        }
    }

    /// Index of the last column (or row) dropped along the chain into
    /// `(rows, cols)`, if any.
    fn last_dropped(
        table: &MissingCountTable,
        rows: usize,
        cols: usize,
        want_column: bool,
    ) -> Option<usize> {
        let (mut r, mut c) = (rows, cols);
        loop {
            match table.provenance(r, c)? {
                Provenance::Root => return None,
                Provenance::DroppedColumn => {
                    if want_column {
                        // The dropped column is the one present in (r, c+1)
                        // but not (r, c).
                        let parent = table.descriptor(r, c + 1).unwrap();
                        let child = table.descriptor(r, c).unwrap();
                        let missing = parent
                            .col_ids
                            .iter()
                            .find(|id| !child.col_ids.contains(id))
                            .unwrap();
                        return table.mask().col_ids().iter().position(|x| x == missing);
                    }
                    c += 1;
                }
                Provenance::DroppedRow => {
                    if !want_column {
                        let parent = table.descriptor(r + 1, c).unwrap();
                        let child = table.descriptor(r, c).unwrap();
                        let missing = parent
                            .row_ids
                            .iter()
                            .find(|id| !child.row_ids.contains(id))
                            .unwrap();
                        return table.mask().row_ids().iter().position(|x| x == missing);
                    }
                    r += 1;
                }
            }
        }
    }

    #[test]
    fn filter_keeps_max_columns_within_bin() {
        // Build a tiny synthetic table by hand is awkward; use a crafted mask
        // where two shapes land in one bin with the same row count.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mask = random_mask(&mut rng, 10, 10, 0.2);
        let table = generate_table(&mask, 2, 2).unwrap();
        let collection = filter_qualified(&table, 1.0, 1.0).unwrap();
        // With a single bin covering everything, each row count appears once
        // with its maximum column count, and vice versa.
        for s in &collection.subsets {
            for t in &collection.subsets {
                if s.n_rows() == t.n_rows() {
                    assert!(s.n_cols() == t.n_cols());
                }
                if s.n_cols() == t.n_cols() {
                    assert!(s.n_rows() == t.n_rows());
                }
            }
        }
    }

    #[test]
    fn filter_cap_excluding_everything_errors() {
        // Every generated shape contains at least one missing value.
        let bits = vec![true; 9];
        let mask = MissingnessMask::from_bits(3, 3, bits).unwrap();
        let table = generate_table(&mask, 1, 1).unwrap();
        match filter_qualified(&table, 0.01, DEFAULT_RATE_BIN_WIDTH) {
            Err(ElmvError::NoQualifiedSubsets { .. }) => {}
            other => panic!("expected NoQualifiedSubsets, got {other:?}"),
        }
    }

    #[test]
    fn filter_shapes_are_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mask = random_mask(&mut rng, 20, 12, 0.45);
        let table = generate_table(&mask, 3, 2).unwrap();
        if let Ok(collection) = filter_qualified(&table, 0.3, DEFAULT_RATE_BIN_WIDTH) {
            let mut shapes: Vec<(usize, usize)> = collection
                .subsets
                .iter()
                .map(|d| (d.n_rows(), d.n_cols()))
                .collect();
            let before = shapes.len();
            shapes.sort_unstable();
            shapes.dedup();
            assert_eq!(before, shapes.len());
            for d in &collection.subsets {
                assert!(d.missing_rate <= 0.3 + 1e-12);
                assert_eq!(recount(table.mask(), d), d.missing_count);
            }
        }
    }
}
