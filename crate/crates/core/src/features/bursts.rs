//! Temporal, degree and value bursts.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BurstParams {
    /// Largest block gap inside a temporal burst.
    pub temporal_gap_max: u64,
    /// Per-block count at or above which a block is a degree burst.
    pub degree_threshold: u64,
    /// Shortest run of equal values counted as a value burst.
    pub value_run_min: usize,
}

impl Default for BurstParams {
    fn default() -> Self {
        BurstParams { temporal_gap_max: 1, degree_threshold: 2, value_run_min: 2 }
    }
}

impl BurstParams {
    pub fn validate(self) -> Result<Self, String> {
        if self.degree_threshold < 1 {
            return Err("degree burst threshold must be at least 1".into());
        }
        if self.value_run_min < 2 {
            return Err("value run minimum must be at least 2".into());
        }
        Ok(self)
    }
}

/// `(count, longest)` over maximal runs of at least two events whose
/// successive gaps are within `gap_max`. Input must be ascending.
pub fn temporal_bursts(blocks: &[u64], gap_max: u64) -> (usize, usize) {
    let (mut count, mut longest, mut run) = (0, 0, 1usize);
    let mut close = |run: usize| {
        if run >= 2 {
            count += 1;
            longest = longest.max(run);
        }
    };
    for w in blocks.windows(2) {
        if w[1] - w[0] <= gap_max {
            run += 1;
        } else {
            close(run);
            run = 1;
        }
    }
    if !blocks.is_empty() {
        close(run);
    }
    (count, longest)
}

/// `(count, at_time)` for per-block counts keyed by ascending block.
/// `at_time` is the offset from the first active block of the block with the
/// highest count, earliest on ties, or 0 when no block reaches `threshold`.
pub fn degree_bursts(counts: &[(u64, u64)], threshold: u64) -> (usize, u64) {
    let Some(&(first, _)) = counts.first() else {
        return (0, 0);
    };
    let count = counts.iter().filter(|(_, c)| *c >= threshold).count();
    if count == 0 {
        return (0, 0);
    }
    let mut best = counts[0];
    for &(b, c) in &counts[1..] {
        if c > best.1 {
            best = (b, c);
        }
    }
    (count, best.0 - first)
}

/// `(count, instance)` over maximal runs of at least `run_min` equal values;
/// `instance` is the start index of the longest run, earliest on ties.
pub fn value_bursts(series: &[f64], run_min: usize) -> (usize, usize) {
    let (mut count, mut best_len, mut best_at) = (0, 0, 0);
    let mut start = 0;
    while start < series.len() {
        let mut end = start + 1;
        while end < series.len() && series[end] == series[start] {
            end += 1;
        }
        let len = end - start;
        if len >= run_min {
            count += 1;
            if len > best_len {
                best_len = len;
                best_at = start;
            }
        }
        start = end;
    }
    (count, best_at)
}
