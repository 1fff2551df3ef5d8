//! Slow, obviously-correct reference computations for tests.
//!
//! Nothing here depends on the `crossview` crate; every routine works on
//! plain row-major slices so it cannot share a bug with the code it checks.

/// Gaussian elimination with partial pivoting. `a` is row-major `n x n`.
pub fn dense_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        assert!(d.abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * x[k];
        }
        x[row] = s / a[row * n + row];
    }
    x
}

/// Dense solve of the Dirichlet problem `Δu = rhs` on the interior of a
/// `w x h` rectangle, `u = boundary` on its border. Returns the full grid.
pub fn poisson_dense(w: usize, h: usize, rhs: &[f64], boundary: &[f64]) -> Vec<f64> {
    let interior = |x: usize, y: usize| x > 0 && y > 0 && x + 1 < w && y + 1 < h;
    let mut index = vec![usize::MAX; w * h];
    let mut n = 0;
    for y in 0..h {
        for x in 0..w {
            if interior(x, y) {
                index[y * w + x] = n;
                n += 1;
            }
        }
    }
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for y in 0..h {
        for x in 0..w {
            if !interior(x, y) {
                continue;
            }
            let row = index[y * w + x];
            a[row * n + row] = -4.0;
            b[row] = rhs[y * w + x];
            for (nx, ny) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
                if interior(nx, ny) {
                    a[row * n + index[ny * w + nx]] += 1.0;
                } else {
                    b[row] -= boundary[ny * w + nx];
                }
            }
        }
    }
    let sol = dense_solve(a, b);
    let mut out = boundary.to_vec();
    for i in 0..w * h {
        if index[i] != usize::MAX {
            out[i] = sol[index[i]];
        }
    }
    out
}

/// Discrete gradient-matching energy over every forward-difference edge of a
/// `w x h` rectangle: `Σ (∇u − ∇p)²`.
pub fn gradient_energy(w: usize, h: usize, u: &[f64], patch: &[f64]) -> f64 {
    let mut e = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                let d = (u[i + 1] - u[i]) - (patch[i + 1] - patch[i]);
                e += d * d;
            }
            if y + 1 < h {
                let d = (u[i + w] - u[i]) - (patch[i + w] - patch[i]);
                e += d * d;
            }
        }
    }
    e
}

/// Whole-window SSIM from raw moment sums, 8-bit constants.
pub fn ssim_scalar(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mu_a = a.iter().sum::<f64>() / n;
    let mu_b = b.iter().sum::<f64>() / n;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut cov = 0.0;
    for i in 0..a.len() {
        var_a += (a[i] - mu_a).powi(2) / n;
        var_b += (b[i] - mu_b).powi(2) / n;
        cov += (a[i] - mu_a) * (b[i] - mu_b) / n;
    }
    let luminance = (2.0 * mu_a * mu_b + c1) / (mu_a.powi(2) + mu_b.powi(2) + c1);
    let structure = (2.0 * cov + c2) / (var_a + var_b + c2);
    luminance * structure
}

/// Greedy Top-K by exhaustive rescans: each round picks the best remaining
/// admissible candidate (score desc, y asc, x asc). Candidates are `(x, y, score)`.
pub fn greedy_top_k(cands: &[(usize, usize, f64)], k: usize, min_sep: f64) -> Vec<(usize, usize, f64)> {
    let mut taken = vec![false; cands.len()];
    let mut out: Vec<(usize, usize, f64)> = Vec::new();
    while out.len() < k {
        let mut best: Option<usize> = None;
        for (i, c) in cands.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let far = out.iter().all(|o| {
                let dx = o.0 as f64 - c.0 as f64;
                let dy = o.1 as f64 - c.1 as f64;
                (dx * dx + dy * dy).sqrt() >= min_sep
            });
            if !far {
                continue;
            }
            let better = match best {
                None => true,
                Some(j) => {
                    let b = cands[j];
                    c.2 > b.2 || (c.2 == b.2 && (c.1 < b.1 || (c.1 == b.1 && c.0 < b.0)))
                }
            };
            if better {
                best = Some(i);
            }
        }
        match best {
            Some(i) => {
                taken[i] = true;
                out.push(cands[i]);
            }
            None => break,
        }
    }
    out
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// 8-connected components by union-find; each component is a list of `(x, y)`.
/// Components are ordered by their smallest raster index.
pub fn components(w: usize, h: usize, bits: &[bool]) -> Vec<Vec<(usize, usize)>> {
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            if !bits[y * w + x] {
                continue;
            }
            for (dx, dy) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
                let nx = x as i64 + dx;
                let ny = y as i64 + dy;
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if bits[j] {
                    let (ra, rb) = (find(&mut parent, y * w + x), find(&mut parent, j));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut roots: Vec<usize> = Vec::new();
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
        let r = find(&mut parent, i);
        match roots.iter().position(|&q| q == r) {
            Some(g) => groups[g].push((i % w, i / w)),
            None => {
                roots.push(r);
                groups.push(vec![(i % w, i / w)]);
            }
        }
    }
    groups
}

pub fn centroid(c: &[(usize, usize)]) -> (f64, f64) {
    let n = c.len() as f64;
    (
        c.iter().map(|p| p.0 as f64).sum::<f64>() / n,
        c.iter().map(|p| p.1 as f64).sum::<f64>() / n,
    )
}

/// `(intersection, union)` pixel counts.
pub fn iou_counts(pred: &[bool], gt: &[bool]) -> (usize, usize) {
    let i = pred.iter().zip(gt).filter(|(p, g)| **p && **g).count();
    let u = pred.iter().zip(gt).filter(|(p, g)| **p || **g).count();
    (i, u)
}

/// `(detected targets, total targets, false pixels)` under greedy one-to-one
/// centroid matching, found by repeatedly taking the globally closest
/// unmatched pair.
pub fn pd_fa_counts(w: usize, h: usize, pred: &[bool], gt: &[bool], thresh: f64) -> (usize, usize, usize) {
    let g = components(w, h, gt);
    let p = components(w, h, pred);
    let gc: Vec<_> = g.iter().map(|c| centroid(c)).collect();
    let pc: Vec<_> = p.iter().map(|c| centroid(c)).collect();
    let mut g_used = vec![false; g.len()];
    let mut p_used = vec![false; p.len()];
    let mut detected = 0;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for gi in 0..g.len() {
            for pi in 0..p.len() {
                if g_used[gi] || p_used[pi] {
                    continue;
                }
                let d = ((gc[gi].0 - pc[pi].0).powi(2) + (gc[gi].1 - pc[pi].1).powi(2)).sqrt();
                if d <= thresh && best.is_none_or(|b| d < b.0) {
                    best = Some((d, gi, pi));
                }
            }
        }
        match best {
            Some((_, gi, pi)) => {
                g_used[gi] = true;
                p_used[pi] = true;
                detected += 1;
            }
            None => break,
        }
    }
    let false_pixels = p.iter().zip(&p_used).filter(|(_, u)| !**u).map(|(c, _)| c.len()).sum();
    (detected, g.len(), false_pixels)
}
