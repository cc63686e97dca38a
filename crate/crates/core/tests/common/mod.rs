#![allow(dead_code)]

use privlabel::annotation::Annotation;
use privlabel::Label;

/// Straight-line MACE EM over a dense `items × workers` grid.
///
/// `grid[i][j]` is worker `j`'s label index on item `i` (0 = target), or `None`.
/// Returns posteriors `[P(target), P(non_target)]` per item after `iterations`
/// steps started from competence `theta0` and uniform spam distributions.
pub fn reference_mace(grid: &[Vec<Option<usize>>], theta0: f64, iterations: usize, smoothing: f64) -> Vec<[f64; 2]> {
    let n_items = grid.len();
    let n_workers = grid[0].len();
    let mut theta = vec![theta0; n_workers];
    let mut xi = vec![[0.5, 0.5]; n_workers];

    let posterior = |theta: &[f64], xi: &[[f64; 2]]| -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        for row in grid {
            let mut p = [0.5, 0.5];
            for (t, pt) in p.iter_mut().enumerate() {
                for j in 0..n_workers {
                    if let Some(a) = row[j] {
                        let copy = if a == t { theta[j] } else { 0.0 };
                        *pt *= copy + (1.0 - theta[j]) * xi[j][a];
                    }
                }
            }
            let z = p[0] + p[1];
            out.push([p[0] / z, p[1] / z]);
        }
        out
    };

    let mut post = posterior(&theta, &xi);
    for _ in 0..iterations {
        let mut new_theta = vec![0.0; n_workers];
        let mut new_xi = vec![[0.0, 0.0]; n_workers];
        for j in 0..n_workers {
            let mut copies = 0.0;
            let mut total = 0.0;
            let mut spam = [0.0, 0.0];
            for i in 0..n_items {
                if let Some(a) = grid[i][j] {
                    let c = theta[j];
                    let s = (1.0 - theta[j]) * xi[j][a];
                    let e_copy = post[i][a] * c / (c + s);
                    copies += e_copy;
                    total += 1.0;
                    spam[a] += 1.0 - e_copy;
                }
            }
            new_theta[j] = (copies + smoothing) / (total + 2.0 * smoothing);
            let st = spam[0] + spam[1] + 2.0 * smoothing;
            new_xi[j] = if st > 0.0 { [(spam[0] + smoothing) / st, (spam[1] + smoothing) / st] } else { xi[j] };
        }
        theta = new_theta;
        xi = new_xi;
        post = posterior(&theta, &xi);
    }
    post
}

pub fn grid_annotations(grid: &[Vec<Option<usize>>]) -> Vec<Annotation> {
    let mut out = Vec::new();
    for (i, row) in grid.iter().enumerate() {
        for (j, a) in row.iter().enumerate() {
            if let Some(a) = a {
                out.push(Annotation {
                    item_id: format!("i{i}"),
                    version_id: "v0".into(),
                    worker_id: format!("w{j}"),
                    label: Label::from_index(*a),
                });
            }
        }
    }
    out
}

/// Every full 3×3 binary pattern plus every 4×3 pattern with the top row fixed,
/// and a handful of 4×3 grids with missing cells.
pub fn small_patterns() -> Vec<Vec<Vec<Option<usize>>>> {
    let mut out = Vec::new();
    for bits in 0u32..(1 << 9) {
        out.push((0..3).map(|i| (0..3).map(|j| Some(((bits >> (3 * i + j)) & 1) as usize)).collect()).collect());
    }
    for bits in 0u32..(1 << 9) {
        let mut g: Vec<Vec<Option<usize>>> = vec![vec![Some(0), Some(0), Some(1)]];
        g.extend((0..3).map(|i| (0..3).map(|j| Some(((bits >> (3 * i + j)) & 1) as usize)).collect::<Vec<_>>()));
        out.push(g);
    }
    for bits in 0u32..64 {
        let mut g: Vec<Vec<Option<usize>>> = (0..4)
            .map(|i| (0..3).map(|j| Some(((bits >> ((i + j) % 6)) & 1) as usize)).collect())
            .collect();
        g[(bits % 4) as usize][(bits % 3) as usize] = None;
        out.push(g);
    }
    out
}
