//! Exact Euclidean distance transform by two passes of lower envelopes of
//! parabolas, tracking the nearest site. All comparisons are in integers.
//! Ties between equidistant sites go to the smallest column, then the
//! smallest row.

/// Squared distance and flat index of the nearest site for every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub h: usize,
    pub w: usize,
    pub sq_dist: Vec<u64>,
    pub nearest: Vec<usize>,
}

impl DistanceField {
    pub fn dist(&self, i: usize) -> f64 {
        (self.sq_dist[i] as f64).sqrt()
    }
}

/// Returns `None` when there are no sites.
pub fn distance_transform(sites: &[bool], h: usize, w: usize) -> Option<DistanceField> {
    assert_eq!(sites.len(), h * w, "distance_transform: {h}x{w} needs {} flags", h * w);
    if !sites.iter().any(|&s| s) {
        return None;
    }
    // column pass: nearest site row within each column, upper row on ties
    let mut col_row: Vec<Option<usize>> = vec![None; h * w];
    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if sites[y * w + x] {
                last = Some(y);
            }
            col_row[y * w + x] = last;
        }
        let mut next: Option<usize> = None;
        for y in (0..h).rev() {
            if sites[y * w + x] {
                next = Some(y);
            }
            let i = y * w + x;
            col_row[i] = match (col_row[i], next) {
                (Some(a), Some(b)) => Some(if b - y < y - a { b } else { a }),
                (a, b) => a.or(b),
            };
        }
    }

    let mut sq_dist = vec![0u64; h * w];
    let mut nearest = vec![0usize; h * w];
    let mut v: Vec<usize> = Vec::with_capacity(w);
    // boundaries between envelope pieces as rationals num / den, den > 0
    let mut z: Vec<(i64, i64)> = Vec::with_capacity(w);
    for y in 0..h {
        let f = |q: usize| -> Option<i64> { col_row[y * w + q].map(|r| (r as i64 - y as i64).pow(2)) };
        v.clear();
        z.clear();
        for q in 0..w {
            let Some(fq) = f(q) else { continue };
            loop {
                let Some(&p) = v.last() else {
                    v.push(q);
                    break;
                };
                let fp = f(p).expect("envelope holds sites only");
                let (qi, pi) = (q as i64, p as i64);
                let s = ((fq + qi * qi) - (fp + pi * pi), 2 * (qi - pi));
                // pop p while s <= z[last]
                if let Some(&zk) = z.last() {
                    if s.0 * zk.1 <= zk.0 * s.1 {
                        v.pop();
                        z.pop();
                        continue;
                    }
                }
                v.push(q);
                z.push(s);
                break;
            }
        }
        let mut k = 0;
        for x in 0..w {
            let xi = x as i64;
            while k < z.len() && z[k].0 < xi * z[k].1 {
                k += 1;
            }
            let q = v[k];
            let row = col_row[y * w + q].expect("envelope holds sites only");
            let dx = xi - q as i64;
            let dy = row as i64 - y as i64;
            sq_dist[y * w + x] = (dx * dx + dy * dy) as u64;
            nearest[y * w + x] = row * w + q;
        }
    }
    Some(DistanceField { h, w, sq_dist, nearest })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site() {
        let mut s = vec![false; 12];
        s[5] = true; // (1,1) in 3x4
        let d = distance_transform(&s, 3, 4).unwrap();
        assert_eq!(d.sq_dist, vec![2, 1, 2, 5, 1, 0, 1, 4, 2, 1, 2, 5]);
        assert!(d.nearest.iter().all(|&i| i == 5));
    }

    #[test]
    fn ties_prefer_left_then_up() {
        // sites at (0,0), (0,2), (2,0): pixel (1,1) is equidistant to all three
        let mut s = vec![false; 9];
        s[0] = true;
        s[2] = true;
        s[6] = true;
        let d = distance_transform(&s, 3, 3).unwrap();
        assert_eq!(d.nearest[4], 0);
        assert_eq!(d.sq_dist[4], 2);
        // (2,1) is equidistant to (2,0) and nothing else at distance 1
        assert_eq!(d.nearest[7], 6);
        // (1,2) ties between (0,2) and nothing closer; (1,0) ties (0,0)/(2,0)
        assert_eq!(d.nearest[3], 0);
    }

    #[test]
    fn empty_has_no_field() {
        assert!(distance_transform(&[false; 4], 2, 2).is_none());
    }
}
