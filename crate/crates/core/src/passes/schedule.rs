//! Worksharing schedule computation.
//!
//! Partitions the normalized iteration space [0, T). Static schedules are a
//! pure function of (T, p, chunk, unit); dynamic and guided schedules produce
//! a deterministic chunk sequence that the interpreter's dispatcher hands to
//! the lowest-id unit at the dispatch point.

use crate::ast::SchedulePolicy;
use crate::ir::DistributeTarget;
use std::fmt;

/// A fully evaluated schedule request.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDescriptor {
    pub policy: SchedulePolicy,
    pub chunk_size: Option<i64>,
    pub lower: i64,
    pub upper: i64,
    pub step: i64,
    pub num_units: u32,
    pub distribute_target: DistributeTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleError(pub String);

impl fmt::Display for ScheduleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schedule error: {}", self.0)
    }
}

impl std::error::Error for ScheduleError {}

/// Trip count of the normalized half-open space {lower, lower+step, ...} < upper.
pub fn trip_count(lower: i64, upper: i64, step: i64) -> i64 {
    if upper <= lower || step <= 0 {
        0
    } else {
        (upper - lower + step - 1) / step
    }
}

/// Chunks assigned to `unit_id`, as half-open ranges of normalized indices.
///
/// static without chunk: one contiguous chunk per unit, the first T mod p
/// units take the larger share. static with chunk c: round-robin chunks of
/// size c. dynamic/guided: the deterministic dispatch-order chunk sequence
/// (identical for every unit; assignment happens at run time).
pub fn compute_schedule(desc: &ScheduleDescriptor, unit_id: u32) -> Result<Vec<(i64, i64)>, ScheduleError> {
    if desc.num_units == 0 {
        return Err(ScheduleError("num_units must be positive".into()));
    }
    if unit_id >= desc.num_units {
        return Err(ScheduleError(format!(
            "unit {unit_id} out of range for {} units",
            desc.num_units
        )));
    }
    let trip = trip_count(desc.lower, desc.upper, desc.step);
    match desc.policy {
        SchedulePolicy::Static | SchedulePolicy::Runtime | SchedulePolicy::Auto => {
            Ok(static_chunks(trip, desc.num_units, desc.chunk_size, unit_id))
        }
        SchedulePolicy::Dynamic | SchedulePolicy::Guided => {
            let mut d = DynDispatcher::new(desc.policy, 0, trip, desc.num_units, desc.chunk_size);
            let mut out = Vec::new();
            while let Some(c) = d.next_chunk() {
                out.push(c);
            }
            Ok(out)
        }
    }
}

/// Static partition of [0, trip): contiguous blocks without a chunk size,
/// round-robin chunks with one. Remainder iterations go to the lowest units.
pub fn static_chunks(trip: i64, p: u32, chunk: Option<i64>, unit: u32) -> Vec<(i64, i64)> {
    if trip <= 0 || p == 0 || unit >= p {
        return Vec::new();
    }
    let p64 = p as i64;
    let u = unit as i64;
    match chunk {
        None => {
            let base = trip / p64;
            let rem = trip % p64;
            let size = base + if u < rem { 1 } else { 0 };
            if size == 0 {
                return Vec::new();
            }
            let start = u * base + u.min(rem);
            vec![(start, start + size)]
        }
        Some(c) => {
            let c = c.max(1);
            let mut out = Vec::new();
            let mut start = c * u;
            while start < trip {
                out.push((start, (start + c).min(trip)));
                start += c * p64;
            }
            out
        }
    }
}

/// Deterministic chunk dispenser for dynamic/guided schedules over
/// [lower, upper) in normalized indices.
#[derive(Debug, Clone)]
pub struct DynDispatcher {
    policy: SchedulePolicy,
    next: i64,
    upper: i64,
    p: i64,
    min_chunk: i64,
}

impl DynDispatcher {
    pub fn new(policy: SchedulePolicy, lower: i64, upper: i64, p: u32, chunk: Option<i64>) -> Self {
        DynDispatcher {
            policy,
            next: lower,
            upper,
            p: p.max(1) as i64,
            min_chunk: chunk.unwrap_or(1).max(1),
        }
    }

    pub fn next_chunk(&mut self) -> Option<(i64, i64)> {
        if self.next >= self.upper {
            return None;
        }
        let remaining = self.upper - self.next;
        let size = match self.policy {
            SchedulePolicy::Dynamic => self.min_chunk,
            // guided: max(ceil(remaining/p), minimum chunk)
            SchedulePolicy::Guided => ((remaining + self.p - 1) / self.p).max(self.min_chunk),
            _ => remaining,
        }
        .min(remaining);
        let lo = self.next;
        self.next += size;
        Some((lo, self.next))
    }

    pub fn exhausted(&self) -> bool {
        self.next >= self.upper
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(policy: SchedulePolicy, chunk: Option<i64>, trip: i64, p: u32) -> ScheduleDescriptor {
        ScheduleDescriptor {
            policy,
            chunk_size: chunk,
            lower: 0,
            upper: trip,
            step: 1,
            num_units: p,
            distribute_target: DistributeTarget::Units,
        }
    }

    #[test]
    fn static_t10_p3() {
        let d = desc(SchedulePolicy::Static, None, 10, 3);
        assert_eq!(compute_schedule(&d, 0).unwrap(), vec![(0, 4)]);
        assert_eq!(compute_schedule(&d, 1).unwrap(), vec![(4, 7)]);
        assert_eq!(compute_schedule(&d, 2).unwrap(), vec![(7, 10)]);
    }

    #[test]
    fn static_chunked_round_robin() {
        let d = desc(SchedulePolicy::Static, Some(2), 8, 2);
        assert_eq!(compute_schedule(&d, 0).unwrap(), vec![(0, 2), (4, 6)]);
        assert_eq!(compute_schedule(&d, 1).unwrap(), vec![(2, 4), (6, 8)]);
    }

    #[test]
    fn single_unit_owns_everything() {
        for policy in [SchedulePolicy::Static, SchedulePolicy::Dynamic, SchedulePolicy::Guided] {
            let d = desc(policy, None, 7, 1);
            let chunks = compute_schedule(&d, 0).unwrap();
            assert_eq!(chunks.first().map(|c| c.0), Some(0));
            assert_eq!(chunks.last().map(|c| c.1), Some(7));
            let mut pos = 0;
            for (lo, hi) in chunks {
                assert_eq!(lo, pos);
                pos = hi;
            }
        }
    }

    #[test]
    fn zero_units_rejected() {
        let d = desc(SchedulePolicy::Static, None, 10, 0);
        assert!(compute_schedule(&d, 0).is_err());
    }

    #[test]
    fn partition_disjoint_union() {
        // sampled T <= 10^4, p <= 64, chunk <= 17
        for t in [0i64, 1, 2, 3, 7, 10, 63, 64, 100, 1000, 9999, 10000] {
            for p in [1u32, 2, 3, 5, 8, 17, 64] {
                for chunk in [None, Some(1), Some(2), Some(5), Some(17)] {
                    let d = desc(SchedulePolicy::Static, chunk, t, p);
                    let mut covered = vec![false; t as usize];
                    for u in 0..p {
                        for (lo, hi) in compute_schedule(&d, u).unwrap() {
                            for i in lo..hi {
                                assert!(!covered[i as usize], "overlap at {i} (T={t} p={p} {chunk:?})");
                                covered[i as usize] = true;
                            }
                        }
                    }
                    assert!(covered.iter().all(|&c| c), "gap in cover (T={t} p={p} {chunk:?})");
                }
            }
        }
    }

    #[test]
    fn guided_chunks_shrink() {
        let d = desc(SchedulePolicy::Guided, None, 100, 4);
        let chunks = compute_schedule(&d, 0).unwrap();
        assert_eq!(chunks[0], (0, 25));
        let sizes: Vec<i64> = chunks.iter().map(|(a, b)| b - a).collect();
        for w in sizes.windows(2) {
            assert!(w[0] >= w[1], "guided sizes must not grow: {sizes:?}");
        }
        assert_eq!(chunks.last().unwrap().1, 100);
    }

    #[test]
    fn dynamic_default_chunk_is_one() {
        let d = desc(SchedulePolicy::Dynamic, None, 4, 2);
        let chunks = compute_schedule(&d, 0).unwrap();
        assert_eq!(chunks, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
    }
}
