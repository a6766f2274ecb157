//! Uniform bucket grid over the unit square for radius and nearest queries.

use crate::workspace::Point;

#[derive(Debug, Clone)]
pub(crate) struct PointIndex {
    side: f64,
    k: usize,
    buckets: Vec<Vec<usize>>,
}

impl PointIndex {
    pub(crate) fn new(side: f64) -> Self {
        let k = (1.0 / side).ceil().max(1.0) as usize;
        PointIndex { side: 1.0 / k as f64, k, buckets: vec![Vec::new(); k * k] }
    }

    fn bucket(&self, p: Point) -> (usize, usize) {
        let f = |v: f64| ((v / self.side).floor().max(0.0) as usize).min(self.k - 1);
        (f(p.y), f(p.x))
    }

    pub(crate) fn insert(&mut self, id: usize, p: Point) {
        let (r, c) = self.bucket(p);
        self.buckets[r * self.k + c].push(id);
    }

    /// Visits the buckets at Chebyshev distance exactly `d` from `centre`.
    fn ring(&self, (r0, c0): (usize, usize), d: usize, mut f: impl FnMut(usize)) {
        let (r0, c0, d, k) = (r0 as isize, c0 as isize, d as isize, self.k as isize);
        let mut visit = |r: isize, c: isize| {
            if (0..k).contains(&r) && (0..k).contains(&c) {
                for &id in &self.buckets[(r * k + c) as usize] {
                    f(id);
                }
            }
        };
        if d == 0 {
            return visit(r0, c0);
        }
        for c in c0 - d..=c0 + d {
            visit(r0 - d, c);
            visit(r0 + d, c);
        }
        for r in r0 - d + 1..r0 + d {
            visit(r, c0 - d);
            visit(r, c0 + d);
        }
    }

    /// Ids within distance `r` of `p`, ascending.
    pub(crate) fn within(&self, points: &[Point], p: Point, r: f64) -> Vec<usize> {
        let reach = (r / self.side).ceil() as usize;
        let centre = self.bucket(p);
        let r2 = r * r;
        let mut out = Vec::new();
        for d in 0..=reach {
            self.ring(centre, d, |id| {
                if dist2(points[id], p) <= r2 {
                    out.push(id);
                }
            });
        }
        out.sort_unstable();
        out
    }

    /// Closest id to `p` (smallest id on ties).
    pub(crate) fn nearest(&self, points: &[Point], p: Point) -> Option<usize> {
        let centre = self.bucket(p);
        let mut best: Option<(f64, usize)> = None;
        for d in 0..self.k {
            // every point in ring d is at least (d - 1) * side away
            if let Some((bd, _)) = best {
                let gap = (d as f64 - 1.0) * self.side;
                if gap > 0.0 && gap * gap > bd {
                    break;
                }
            }
            self.ring(centre, d, |id| {
                let dd = dist2(points[id], p);
                if best.map_or(true, |(bd, bid)| dd < bd || (dd == bd && id < bid)) {
                    best = Some((dd, id));
                }
            });
        }
        best.map(|(_, id)| id)
    }
}

fn dist2(a: Point, b: Point) -> f64 {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    dx * dx + dy * dy
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn queries_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for side in [0.025, 0.1, 0.3, 1.0] {
            let mut idx = PointIndex::new(side);
            let mut pts = Vec::new();
            for i in 0..400 {
                let p = Point::new(rng.gen(), rng.gen());
                pts.push(p);
                idx.insert(i, p);
            }
            for _ in 0..200 {
                let q = Point::new(rng.gen(), rng.gen());
                let r = rng.gen_range(0.0..0.2);
                let brute: Vec<usize> = (0..pts.len()).filter(|&i| dist2(pts[i], q) <= r * r).collect();
                assert_eq!(idx.within(&pts, q, r), brute);
                let nn = (0..pts.len())
                    .min_by(|&a, &b| dist2(pts[a], q).partial_cmp(&dist2(pts[b], q)).unwrap())
                    .unwrap();
                assert_eq!(idx.nearest(&pts, q), Some(nn));
            }
        }
        assert_eq!(PointIndex::new(0.1).nearest(&[], Point::new(0.5, 0.5)), None);
    }
}
