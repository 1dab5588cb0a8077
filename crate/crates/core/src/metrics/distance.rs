//! Boundary extraction and exact Euclidean distance transforms.

use crate::grid::{Geometry, Mask2D};

/// Foreground pixels with a background 4-neighbour or lying on the image edge.
pub fn boundary(mask: &Mask2D) -> Vec<(usize, usize)> {
    let g = mask.geometry();
    let (w, h) = (g.width, g.height);
    let mut out = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if !mask.get(col, row) {
                continue;
            }
            let edge = col == 0 || row == 0 || col + 1 == w || row + 1 == h;
            if edge
                || !mask.get(col - 1, row)
                || !mask.get(col + 1, row)
                || !mask.get(col, row - 1)
                || !mask.get(col, row + 1)
            {
                out.push((col, row));
            }
        }
    }
    out
}

/// Squared distance along one line to the nearest site, where `f[i]` is the
/// squared distance already accumulated at position `i` (infinite for no
/// site). Lower envelope of parabolas, positions scaled by `step`.
fn envelope_1d(f: &[f64], step: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    let pos = |i: usize| i as f64 * step;
    let intersect = |q: usize, p: usize| {
        ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)))
    };
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = intersect(q, p);
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let x = pos(i);
        while k + 1 < v.len() && z[k + 1] < x {
            k += 1;
        }
        let d = x - pos(v[k]);
        *o = d * d + f[v[k]];
    }
}

/// Squared physical distance from every pixel centre to the nearest site.
/// Separable and exact for anisotropic spacing.
pub fn squared_distance_map(g: &Geometry, sites: &[(usize, usize)]) -> Vec<f64> {
    let (w, h) = (g.width, g.height);
    let mut grid = vec![f64::INFINITY; w * h];
    for &(c, r) in sites {
        grid[r * w + c] = 0.0;
    }
    let (mut v, mut z) = (Vec::new(), Vec::new());
    let mut line = vec![0.0; w.max(h)];
    let mut res = vec![0.0; w.max(h)];
    for row in 0..h {
        line[..w].copy_from_slice(&grid[row * w..(row + 1) * w]);
        envelope_1d(&line[..w], g.spacing.x, &mut res[..w], &mut v, &mut z);
        grid[row * w..(row + 1) * w].copy_from_slice(&res[..w]);
    }
    for col in 0..w {
        for row in 0..h {
            line[row] = grid[row * w + col];
        }
        envelope_1d(&line[..h], g.spacing.y, &mut res[..h], &mut v, &mut z);
        for row in 0..h {
            grid[row * w + col] = res[row];
        }
    }
    grid
}

/// Directed nearest-neighbour distances in mm from each point of `from`
/// to the set `to`.
pub fn directed_distances(g: &Geometry, from: &[(usize, usize)], to: &[(usize, usize)]) -> Vec<f64> {
    let map = squared_distance_map(g, to);
    from.iter().map(|&(c, r)| map[r * g.width + c].sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Vec2;

    #[test]
    fn boundary_of_filled_square_is_its_rim() {
        let g = Geometry::unit(6, 6);
        let m = Mask2D::from_fn(g, |p| (1.0..=4.0).contains(&p.x) && (1.0..=4.0).contains(&p.y)).unwrap();
        let b = boundary(&m);
        assert_eq!(b.len(), 12);
        assert!(!b.contains(&(2, 2)));
    }

    #[test]
    fn full_mask_boundary_is_image_edge() {
        let g = Geometry::unit(5, 4);
        let m = Mask2D::from_fn(g, |_| true).unwrap();
        assert_eq!(boundary(&m).len(), 2 * 5 + 2 * 2);
    }

    #[test]
    fn distance_map_matches_brute_force_anisotropic() {
        let g = Geometry::new(9, 7, Vec2::new(0.7, 1.9), Vec2::ZERO).unwrap();
        let sites = [(0, 0), (8, 3), (4, 6), (5, 5)];
        let map = squared_distance_map(&g, &sites);
        for r in 0..7 {
            for c in 0..9 {
                let brute = sites
                    .iter()
                    .map(|&(sc, sr)| {
                        let dx = (c as f64 - sc as f64) * 0.7;
                        let dy = (r as f64 - sr as f64) * 1.9;
                        dx * dx + dy * dy
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!((map[r * 9 + c] - brute).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn no_sites_gives_infinity() {
        let g = Geometry::unit(3, 3);
        assert!(squared_distance_map(&g, &[]).iter().all(|d| d.is_infinite()));
    }
}
