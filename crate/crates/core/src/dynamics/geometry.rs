use std::collections::HashMap;

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn seg_dist(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut ab2 = 0.0;
    let mut t = 0.0;
    for i in 0..x.len() {
        let ab = b[i] - a[i];
        ab2 += ab * ab;
        t += (x[i] - a[i]) * ab;
    }
    let t = if ab2 > 0.0 { (t / ab2).clamp(0.0, 1.0) } else { 0.0 };
    let mut s = 0.0;
    for i in 0..x.len() {
        let p = a[i] + t * (b[i] - a[i]);
        s += (x[i] - p) * (x[i] - p);
    }
    s.sqrt()
}

type Key = [i64; 3];

/// Ramer–Douglas–Peucker simplification: drops vertices whose removal moves
/// the polyline by at most `tol`. End points are kept.
pub fn simplify(pl: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    if pl.len() < 3 {
        return pl.to_vec();
    }
    let mut keep = vec![false; pl.len()];
    keep[0] = true;
    keep[pl.len() - 1] = true;
    let mut stack = vec![(0usize, pl.len() - 1)];
    while let Some((i, j)) = stack.pop() {
        let mut far = (0.0, i);
        for k in i + 1..j {
            let e = seg_dist(&pl[k], &pl[i], &pl[j]);
            if e > far.0 {
                far = (e, k);
            }
        }
        if far.0 > tol {
            keep[far.1] = true;
            stack.push((i, far.1));
            stack.push((far.1, j));
        }
    }
    pl.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p.clone()).collect()
}

/// Uniform-grid index over line segments for capped nearest-distance queries.
///
/// Only the first three coordinates are hashed; in higher dimensions the
/// buckets are a coarser (still conservative) filter.
#[derive(Debug, Clone)]
pub struct SegmentIndex {
    segs: Vec<(Vec<f64>, Vec<f64>)>,
    cell: f64,
    grid: HashMap<Key, Vec<u32>>,
}

impl SegmentIndex {
    /// Build from polylines; a polyline with one point is a degenerate segment.
    pub fn new(polylines: &[Vec<Vec<f64>>], cell: f64) -> Self {
        let mut segs = Vec::new();
        for pl in polylines {
            match pl.len() {
                0 => {}
                1 => segs.push((pl[0].clone(), pl[0].clone())),
                _ => {
                    for w in pl.windows(2) {
                        segs.push((w[0].clone(), w[1].clone()));
                    }
                }
            }
        }
        let mut idx = Self {
            segs,
            cell,
            grid: HashMap::new(),
        };
        for (i, (a, b)) in idx.segs.iter().enumerate() {
            let lo: Vec<i64> = a.iter().zip(b).map(|(p, q)| (p.min(*q) / cell).floor() as i64).collect();
            let hi: Vec<i64> = a.iter().zip(b).map(|(p, q)| (p.max(*q) / cell).floor() as i64).collect();
            let d = lo.len().min(3);
            let mut key = [0i64; 3];
            enumerate_box(&lo[..d], &hi[..d], 0, &mut key, &mut |k| {
                idx.grid.entry(*k).or_default().push(i as u32);
            });
        }
        idx
    }

    pub fn is_empty(&self) -> bool {
        self.segs.is_empty()
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    fn key(&self, x: &[f64]) -> Key {
        let mut k = [0i64; 3];
        for (i, v) in x.iter().take(3).enumerate() {
            k[i] = (v / self.cell).floor() as i64;
        }
        k
    }

    /// `min(dist(x, segments), cap)`; exact whenever the true distance is below `cap ≤ cell`.
    pub fn nearest_capped(&self, x: &[f64], cap: f64) -> f64 {
        debug_assert!(cap <= self.cell * (1.0 + 1e-12));
        let c = self.key(x);
        let d = x.len().min(3);
        let mut best = cap;
        let mut key = [0i64; 3];
        let lo = c.map(|v| v - 1);
        let hi = c.map(|v| v + 1);
        enumerate_box(&lo[..d], &hi[..d], 0, &mut key, &mut |k| {
            if let Some(list) = self.grid.get(k) {
                for &i in list {
                    let (a, b) = &self.segs[i as usize];
                    let s = seg_dist(x, a, b);
                    if s < best {
                        best = s;
                    }
                }
            }
        });
        best
    }

    /// Exact distance by brute force.
    pub fn nearest(&self, x: &[f64]) -> f64 {
        self.segs
            .iter()
            .map(|(a, b)| seg_dist(x, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn enumerate_box(lo: &[i64], hi: &[i64], i: usize, key: &mut Key, f: &mut impl FnMut(&Key)) {
    if i == lo.len() {
        f(key);
        return;
    }
    for v in lo[i]..=hi[i] {
        key[i] = v;
        enumerate_box(lo, hi, i + 1, key, f);
    }
}
