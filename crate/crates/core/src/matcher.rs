//! Template-to-template scoring: exact tuple correspondence and the
//! normalized similarity score.
//!
//! Two tuples correspond only when all eight ridge counts (none truncated)
//! and all three neighbor distances are equal — no tolerance window
//! anywhere. Because correspondence is plain equality on an 11-integer
//! vector, the maximum one-to-one pairing between two tuple sets is simply
//! the multiset intersection size, which is what `count_correspondence`
//! computes.

use crate::error::{Error, Result};
use crate::features::{MinutiaTuple, Template};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    /// Number of corresponding tuple pairs.
    pub mc: usize,
    /// Probe good-quality tuple count.
    pub n: usize,
    /// Gallery good-quality tuple count.
    pub m: usize,
    /// (mc/n + mc/m) / 2.
    pub score: f64,
}

/// True when the two tuples agree on every ridge count (all non-negative)
/// and every neighbor distance.
pub fn correspond(p: &MinutiaTuple, g: &MinutiaTuple) -> bool {
    (0..8).all(|i| p.rcr[i] >= 0 && g.rcr[i] >= 0 && p.rcr[i] == g.rcr[i]) && p.dsq == g.dsq
}

/// Size of the maximum one-to-one correspondence between the two tuple
/// sets:
/// the sum over distinct vectors of the smaller multiplicity. Tuples with
/// any truncated axis can never correspond and are ignored.
pub fn count_correspondence(sp: &[MinutiaTuple], sg: &[MinutiaTuple]) -> usize {
    let keyed = |ts: &[MinutiaTuple]| -> Vec<([i32; 8], [u32; 3])> {
        let mut v: Vec<_> = ts
            .iter()
            .filter(|t| t.rcr.iter().all(|&c| c >= 0))
            .map(|t| t.vector())
            .collect();
        v.sort_unstable();
        v
    };
    let (a, b) = (keyed(sp), keyed(sg));
    let (mut i, mut j, mut mc) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                mc += 1;
                i += 1;
                j += 1;
            }
        }
    }
    mc
}

/// Score two templates: the average of the matched fraction on each side.
pub fn similarity(p: &Template, g: &Template) -> Result<MatchResult> {
    let (n, m) = (p.tuples.len(), g.tuples.len());
    if n == 0 || m == 0 {
        return Err(Error::EmptyTemplate);
    }
    let mc = count_correspondence(&p.tuples, &g.tuples);
    let score = (mc as f64 / n as f64 + mc as f64 / m as f64) / 2.0;
    Ok(MatchResult { mc, n, m, score })
}
