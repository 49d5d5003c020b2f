use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("measurement {0} appears in more than one cell")]
    Duplicate(usize),
    #[error("measurement {0} is not covered by any cell")]
    Uncovered(usize),
    #[error("cell {cell} holds two measurements from step {k}")]
    SameStep { cell: usize, k: usize },
    #[error("empty cell")]
    EmptyCell,
    #[error("enumeration refused: {0} indices exceed the limit of {1}")]
    TooLarge(usize, usize),
}

/// A data-association hypothesis: flat measurement ids grouped by source.
///
/// Cells are kept sorted; because flat ids follow `(k, alpha)` order, the
/// time steps inside a sorted cell are non-decreasing, and strictly
/// increasing when the cell is valid.
#[derive(Debug, Clone)]
pub struct Partition {
    cells: Vec<Vec<usize>>,
    owner: Vec<usize>,
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.canonical() == other.canonical()
    }
}

impl Eq for Partition {}

impl Partition {
    /// Every measurement in its own cell.
    pub fn singletons(n: usize) -> Self {
        Self {
            cells: (0..n).map(|m| vec![m]).collect(),
            owner: (0..n).collect(),
        }
    }

    /// One cell per distinct label; unlabeled ids become singletons.
    pub fn from_labels(labels: &[Option<usize>]) -> Self {
        let mut by_label: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        let mut cells = Vec::new();
        for (m, l) in labels.iter().enumerate() {
            match l {
                Some(l) => by_label.entry(*l).or_default().push(m),
                None => cells.push(vec![m]),
            }
        }
        cells.extend(by_label.into_values());
        Self::from_cells_unchecked(cells, labels.len())
    }

    /// Builds a partition of `0..n`, checking coverage and disjointness.
    pub fn from_cells(cells: Vec<Vec<usize>>, n: usize) -> Result<Self, PartitionError> {
        let mut seen = vec![false; n];
        for c in &cells {
            if c.is_empty() {
                return Err(PartitionError::EmptyCell);
            }
            for &m in c {
                if m >= n {
                    return Err(PartitionError::Uncovered(m));
                }
                if std::mem::replace(&mut seen[m], true) {
                    return Err(PartitionError::Duplicate(m));
                }
            }
        }
        if let Some(m) = seen.iter().position(|s| !s) {
            return Err(PartitionError::Uncovered(m));
        }
        Ok(Self::from_cells_unchecked(cells, n))
    }

    fn from_cells_unchecked(mut cells: Vec<Vec<usize>>, n: usize) -> Self {
        let mut owner = vec![usize::MAX; n];
        for (i, c) in cells.iter_mut().enumerate() {
            c.sort_unstable();
            for &m in c.iter() {
                owner[m] = i;
            }
        }
        Self { cells, owner }
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &[usize] {
        &self.cells[i]
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_indices(&self) -> usize {
        self.owner.len()
    }

    pub fn owner(&self, m: usize) -> usize {
        self.owner[m]
    }

    /// Cells sorted lexicographically; equal for equal partitions.
    pub fn canonical(&self) -> Vec<Vec<usize>> {
        let mut c = self.cells.clone();
        c.sort();
        c
    }

    /// Cluster label per index, usable by partition-agreement metrics.
    pub fn labels(&self) -> Vec<usize> {
        self.owner.clone()
    }

    /// Checks disjointness, coverage and the one-per-step rule.
    pub fn check(&self, times: &[usize]) -> Result<(), PartitionError> {
        let mut seen = vec![false; self.owner.len()];
        for (ci, c) in self.cells.iter().enumerate() {
            if c.is_empty() {
                return Err(PartitionError::EmptyCell);
            }
            for (j, &m) in c.iter().enumerate() {
                if m >= seen.len() {
                    return Err(PartitionError::Uncovered(m));
                }
                if std::mem::replace(&mut seen[m], true) || self.owner[m] != ci {
                    return Err(PartitionError::Duplicate(m));
                }
                if j > 0 && times[c[j - 1]] == times[m] {
                    return Err(PartitionError::SameStep {
                        cell: ci,
                        k: times[m],
                    });
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(m) => Err(PartitionError::Uncovered(m)),
            None => Ok(()),
        }
    }

    pub fn is_valid(&self, times: &[usize]) -> bool {
        self.check(times).is_ok()
    }

    fn remove_from_cell(&mut self, m: usize) {
        let ci = self.owner[m];
        let cell = &mut self.cells[ci];
        let pos = cell.binary_search(&m).expect("owner table out of sync");
        cell.remove(pos);
        if cell.is_empty() {
            self.cells.swap_remove(ci);
            if ci < self.cells.len() {
                for &x in &self.cells[ci] {
                    self.owner[x] = ci;
                }
            }
        }
        self.owner[m] = usize::MAX;
    }

    fn insert_into(&mut self, m: usize, ci: usize) {
        let cell = &mut self.cells[ci];
        let pos = cell.binary_search(&m).unwrap_err();
        cell.insert(pos, m);
        self.owner[m] = ci;
    }

    /// Moves `m` into the cell that currently holds `anchor`, or into a new
    /// cell when `anchor` is `None`.
    pub fn move_index(&mut self, m: usize, anchor: Option<usize>) {
        if anchor == Some(m) {
            return;
        }
        self.remove_from_cell(m);
        match anchor {
            Some(a) => {
                let ci = self.owner[a];
                self.insert_into(m, ci);
            }
            None => {
                self.cells.push(vec![m]);
                self.owner[m] = self.cells.len() - 1;
            }
        }
    }

    /// Exchanges the cells of `a` and `b`.
    pub fn swap_indices(&mut self, a: usize, b: usize) {
        let (ca, cb) = (self.owner[a], self.owner[b]);
        if ca == cb {
            return;
        }
        for (x, from, to) in [(a, ca, cb), (b, cb, ca)] {
            let cell = &mut self.cells[from];
            let pos = cell.binary_search(&x).unwrap();
            cell.remove(pos);
            let cell = &mut self.cells[to];
            let pos = cell.binary_search(&x).unwrap_err();
            cell.insert(pos, x);
            self.owner[x] = to;
        }
    }

    /// Joins the cells holding `a` and `b`.
    pub fn merge_cells(&mut self, a: usize, b: usize) {
        let (ca, cb) = (self.owner[a], self.owner[b]);
        if ca == cb {
            return;
        }
        let moved = std::mem::take(&mut self.cells[cb]);
        let mut joined = Vec::with_capacity(self.cells[ca].len() + moved.len());
        let (mut i, mut j) = (0, 0);
        let left = &self.cells[ca];
        while i < left.len() || j < moved.len() {
            if j == moved.len() || (i < left.len() && left[i] < moved[j]) {
                joined.push(left[i]);
                i += 1;
            } else {
                joined.push(moved[j]);
                j += 1;
            }
        }
        self.cells[ca] = joined;
        for &x in &self.cells[ca] {
            self.owner[x] = ca;
        }
        self.cells.swap_remove(cb);
        if cb < self.cells.len() {
            for &x in &self.cells[cb] {
                self.owner[x] = cb;
            }
        }
    }

    /// Replaces cell `ci` by the two given parts (which must cover it).
    pub fn split_cell(&mut self, ci: usize, first: Vec<usize>, second: Vec<usize>) {
        debug_assert_eq!(first.len() + second.len(), self.cells[ci].len());
        for &x in &second {
            self.owner[x] = self.cells.len();
        }
        self.cells[ci] = first;
        self.cells.push(second);
    }
}

/// True when two sorted cells share a time step.
pub(crate) fn shares_step(a: &[usize], b: &[usize], times: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (ta, tb) = (times[a[i]], times[b[j]]);
        match ta.cmp(&tb) {
            std::cmp::Ordering::Equal => return true,
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    false
}

/// Largest index set [`enumerate_partitions`] accepts.
pub const ENUMERATION_LIMIT: usize = 10;

/// Every valid partition of `0..times.len()`.
pub fn enumerate_partitions(times: &[usize]) -> Result<Vec<Partition>, PartitionError> {
    let n = times.len();
    if n > ENUMERATION_LIMIT {
        return Err(PartitionError::TooLarge(n, ENUMERATION_LIMIT));
    }
    fn rec(
        m: usize,
        times: &[usize],
        cells: &mut Vec<Vec<usize>>,
        out: &mut Vec<Partition>,
    ) {
        if m == times.len() {
            out.push(Partition::from_cells_unchecked(cells.clone(), times.len()));
            return;
        }
        for ci in 0..cells.len() {
            if cells[ci].iter().all(|&x| times[x] != times[m]) {
                cells[ci].push(m);
                rec(m + 1, times, cells, out);
                cells[ci].pop();
            }
        }
        cells.push(vec![m]);
        rec(m + 1, times, cells, out);
        cells.pop();
    }
    let mut out = Vec::new();
    rec(0, times, &mut Vec::new(), &mut out);
    Ok(out)
}
