use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// One `[x, y]` per input row.
    pub coords: Vec<[f64; 2]>,
    /// Unit principal directions, strongest first.
    pub components: [Vec<f64>; 2],
    /// Covariance eigenvalues in descending order (all of them).
    pub variances: Vec<f64>,
}

/// Projects centered rows onto the top two covariance eigenvectors. Each
/// component's sign makes the largest-magnitude coordinate positive.
pub fn project_2d(rows: &[&[f32]]) -> Result<Projection> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("PCA needs at least 3 vectors, got {n}")));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Contract("PCA rows must share a positive length".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] as f64);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let variances: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let magnitude = 1.0 + mean.iter().map(|m| m * m).sum::<f64>();
    if !(variances[0] > 1e-12 * magnitude) {
        return Err(Error::Degenerate("all vectors coincide; nothing to project".into()));
    }

    let mut components: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut coords = vec![[0.0; 2]; n];
    for (c, slot) in components.iter_mut().enumerate() {
        let Some(&idx) = order.get(c) else { break };
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let proj: Vec<f64> = (0..n)
            .map(|i| (0..d).map(|j| centered[(i, j)] * v[j]).sum())
            .collect();
        let extreme = proj
            .iter()
            .copied()
            .fold(0.0f64, |best, p| if p.abs() > best.abs() { p } else { best });
        let sign = if extreme < 0.0 { -1.0 } else { 1.0 };
        for x in &mut v {
            *x *= sign;
        }
        for (i, p) in proj.into_iter().enumerate() {
            coords[i][c] = sign * p;
        }
        *slot = v;
    }
    if components[1].is_empty() {
        components[1] = vec![0.0; d];
    }
    Ok(Projection {
        coords,
        components,
        variances,
    })
}

/// Mean silhouette coefficient under Euclidean distance. Points in
/// singleton clusters contribute 0.
pub fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::Contract("one label per point".into()));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::UndefinedMetric("silhouette needs at least two clusters".into()));
    }
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let li = labels[i];
        if sizes[li] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] += dist(p, q);
            }
        }
        let a = sums[li] / (sizes[li] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != li && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / points.len() as f64)
}

pub fn write_csv(path: &Path, ids: &[u32], coords: &[[f64; 2]]) -> Result<()> {
    let mut s = String::from("id,x,y\n");
    for (id, c) in ids.iter().zip(coords) {
        let _ = writeln!(s, "{id},{},{}", c[0], c[1]);
    }
    write_file(path, &s)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Scatter plot; points colored by `labels` when given.
pub fn write_svg(path: &Path, coords: &[[f64; 2]], labels: Option<&[usize]>) -> Result<()> {
    let (w, h, pad) = (480.0, 480.0, 20.0);
    let bound = |c: usize| {
        coords.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p[c]), hi.max(p[c]))
        })
    };
    let ((x0, x1), (y0, y1)) = (bound(0), bound(1));
    let sx = (w - 2.0 * pad) / (x1 - x0).max(1e-12);
    let sy = (h - 2.0 * pad) / (y1 - y0).max(1e-12);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, p) in coords.iter().enumerate() {
        let color = labels.map_or("#333333", |l| PALETTE[l[i] % PALETTE.len()]);
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.8\"/>",
            pad + (p[0] - x0) * sx,
            h - pad - (p[1] - y0) * sy
        );
    }
    s.push_str("</svg>\n");
    write_file(path, &s)
}

fn write_file(path: &Path, s: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
