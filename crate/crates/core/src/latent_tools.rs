//! Latent-space analysis: k-means clustering, interpolation strips and map
//! export to CSV and SVG.

use crate::manifold::{mix, AeModel, ManifoldError};
use crate::retarget::count_active_joints;
use crate::scalar::{lit, to_f64, Scalar};
use crate::screw_model::{activate_decoded, FullBodyStructure, ScrewModelError, SLOT_COUNT};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("points have inconsistent dimensions")]
    Ragged,
    #[error("a strip needs at least 2 points, got {0}")]
    ShortStrip(usize),
    #[error("SVG export needs 2-D coordinates, got {0}-D")]
    NotPlanar(usize),
    #[error("malformed map CSV at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Screw(#[from] ScrewModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, sq_dist(p, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Lloyd's algorithm from farthest-point seeding.
///
/// The first centre is a seeded random point; each further centre is the
/// point farthest from the centres chosen so far. Iteration stops when the
/// assignment no longer changes or after `max_iters` rounds. A cluster
/// that empties keeps its previous centre.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KMeans, LatentError> {
    if k == 0 {
        return Err(LatentError::ZeroK);
    }
    let n = points.len();
    if k > n {
        return Err(LatentError::KTooLarge { k, n });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(LatentError::Ragged);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    while centroids.len() < k {
        let far = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, nearest(p, &centroids).1))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        centroids.push(points[far.0].clone());
    }

    let mut labels = vec![usize::MAX; n];
    let mut inertia = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut total = 0.0;
        for (p, l) in points.iter().zip(labels.iter_mut()) {
            let (c, d) = nearest(p, &centroids);
            total += d;
            if *l != c {
                *l = c;
                changed = true;
            }
        }
        inertia.push(total);
        if !changed {
            break;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            let m = members.len() as f64;
            *centroid = (0..dim).map(|d| members.iter().map(|p| p[d]).sum::<f64>() / m).collect();
        }
    }
    Ok(KMeans {
        labels,
        centroids,
        inertia,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StripPoint<T: Scalar> {
    pub z: DVector<T>,
    pub decoded: DVector<T>,
    pub body: FullBodyStructure<T>,
    pub mask: [bool; SLOT_COUNT],
}

/// Decodes `n` evenly spaced latents from `za` to `zb` inclusive.
pub fn interpolate_strip<T: Scalar>(
    model: &AeModel<T>,
    za: &DVector<T>,
    zb: &DVector<T>,
    n: usize,
    epsilon: T,
) -> Result<Vec<StripPoint<T>>, LatentError> {
    if n < 2 {
        return Err(LatentError::ShortStrip(n));
    }
    let last: T = lit((n - 1) as f64);
    (0..n)
        .map(|i| {
            let z = mix(za, zb, lit::<T>(i as f64) / last);
            let decoded = model.decode(&z)?;
            let body = activate_decoded(decoded.as_slice(), epsilon)?;
            let mask = body.active_mask();
            Ok(StripPoint { z, decoded, body, mask })
        })
        .collect()
}

/// `step, z1.., n_tot, active_s00..active_s19`.
pub fn strip_csv<T: Scalar>(strip: &[StripPoint<T>]) -> String {
    let dim = strip.first().map_or(0, |p| p.z.len());
    let mut s = String::from("step");
    for i in 1..=dim {
        let _ = write!(s, ",z{i}");
    }
    s.push_str(",n_tot");
    for slot in 0..SLOT_COUNT {
        let _ = write!(s, ",active_s{slot:02}");
    }
    s.push('\n');
    for (i, p) in strip.iter().enumerate() {
        let _ = write!(s, "{i}");
        for v in p.z.iter() {
            let _ = write!(s, ",{}", to_f64(*v));
        }
        let _ = write!(s, ",{}", count_active_joints(&p.body));
        for a in p.mask {
            let _ = write!(s, ",{}", u8::from(a));
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentMap {
    pub names: Vec<String>,
    pub coords: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
}

impl LatentMap {
    /// Encodes every row and clusters the codes.
    pub fn build<T: Scalar>(
        model: &AeModel<T>,
        names: &[String],
        data: &[DVector<T>],
        k: usize,
        seed: u64,
    ) -> Result<Self, LatentError> {
        let coords = data
            .iter()
            .map(|x| Ok(model.encode(x)?.iter().map(|v| to_f64(*v)).collect()))
            .collect::<Result<Vec<Vec<f64>>, LatentError>>()?;
        let km = kmeans(&coords, k, seed, 100)?;
        Ok(Self {
            names: names.to_vec(),
            coords,
            labels: km.labels,
            centroids: km.centroids,
        })
    }

    pub fn dim(&self) -> usize {
        self.coords.first().map_or(2, |c| c.len())
    }

    /// `name, z1.., cluster`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name");
        for i in 1..=self.dim() {
            let _ = write!(s, ",z{i}");
        }
        s.push_str(",cluster\n");
        for ((name, c), l) in self.names.iter().zip(&self.coords).zip(&self.labels) {
            s.push_str(name);
            for v in c {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{l}");
        }
        s
    }

    /// Reads the output of [`LatentMap::to_csv`]; centroids are recomputed
    /// from the labels.
    pub fn from_csv(text: &str) -> Result<Self, LatentError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(LatentError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "name" || cols[cols.len() - 1] != "cluster" {
            return Err(LatentError::Parse {
                line: 1,
                message: format!("unexpected header {header:?}"),
            });
        }
        let dim = cols.len() - 2;
        let mut map = LatentMap {
            names: Vec::new(),
            coords: Vec::new(),
            labels: Vec::new(),
            centroids: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let bad = |m: String| LatentError::Parse { line: i + 2, message: m };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != dim + 2 {
                return Err(bad(format!("expected {} fields, got {}", dim + 2, f.len())));
            }
            map.names.push(f[0].to_string());
            let coords = f[1..=dim]
                .iter()
                .map(|v| v.parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            map.coords.push(coords);
            map.labels.push(f[dim + 1].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?);
        }
        let k = map.labels.iter().max().map_or(0, |m| m + 1);
        map.centroids = (0..k)
            .map(|c| {
                let members: Vec<&Vec<f64>> = map.coords.iter().zip(&map.labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect();
                let m = members.len().max(1) as f64;
                (0..dim).map(|d| members.iter().map(|p| p[d]).sum::<f64>() / m).collect()
            })
            .collect();
        Ok(map)
    }

    /// Scatter plot with one colour per cluster, point labels and centroid
    /// crosses.
    pub fn to_svg(&self) -> Result<String, LatentError> {
        if self.dim() != 2 {
            return Err(LatentError::NotPlanar(self.dim()));
        }
        const SIZE: f64 = 560.0;
        const PAD: f64 = 40.0;
        let all = self.coords.iter().chain(&self.centroids);
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for c in all {
            for d in 0..2 {
                lo[d] = lo[d].min(c[d]);
                hi[d] = hi[d].max(c[d]);
            }
        }
        if !lo[0].is_finite() {
            lo = [-1.0, -1.0];
            hi = [1.0, 1.0];
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let px = |c: &[f64]| {
            (
                PAD + (c[0] - lo[0]) / span * (SIZE - 2.0 * PAD),
                SIZE - PAD - (c[1] - lo[1]) / span * (SIZE - 2.0 * PAD),
            )
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r##"<rect x="{PAD}" y="{PAD}" width="{w}" height="{w}" fill="none" stroke="#bbbbbb"/>"##,
            w = SIZE - 2.0 * PAD
        );
        for ((name, c), l) in self.names.iter().zip(&self.coords).zip(&self.labels) {
            let (x, y) = px(c);
            let color = cluster_color(*l);
            let _ = writeln!(
                s,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{color}" class="cluster-{l}"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="9" font-family="sans-serif">{}</text>"#,
                x + 7.0,
                y + 3.0,
                escape(name)
            );
        }
        for (l, c) in self.centroids.iter().enumerate() {
            let (x, y) = px(c);
            let color = cluster_color(l);
            let _ = writeln!(
                s,
                r#"<path d="M{:.2} {:.2} L{:.2} {:.2} M{:.2} {:.2} L{:.2} {:.2}" stroke="{color}" stroke-width="2"/>"#,
                x - 6.0,
                y - 6.0,
                x + 6.0,
                y + 6.0,
                x - 6.0,
                y + 6.0,
                x + 6.0,
                y - 6.0
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn cluster_color(label: usize) -> &'static str {
    PALETTE[label % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<stem>.csv` and, for 2-D maps, `<stem>.svg`. Returns the paths
/// written.
pub fn export_map(map: &LatentMap, stem: &Path) -> Result<Vec<PathBuf>, LatentError> {
    let write = |path: PathBuf, body: String| -> Result<PathBuf, LatentError> {
        std::fs::write(&path, body).map_err(|source| LatentError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    };
    let mut out = vec![write(stem.with_extension("csv"), map.to_csv())?];
    if map.dim() == 2 {
        out.push(write(stem.with_extension("svg"), map.to_svg()?)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let km = kmeans(&pts, 1, 5, 100).unwrap();
        assert_eq!(km.labels, vec![0, 0, 0]);
        assert_eq!(km.centroids[0], vec![1.0, 1.0]);
    }

    #[test]
    fn k_equal_n_gives_zero_inertia() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0], vec![-4.0, 1.0]];
        let km = kmeans(&pts, 4, 9, 100).unwrap();
        let mut labels = km.labels.clone();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 4);
        assert_eq!(*km.inertia.last().unwrap(), 0.0);
    }

    #[test]
    fn k_too_large() {
        assert!(matches!(
            kmeans(&[vec![0.0]], 2, 0, 10),
            Err(LatentError::KTooLarge { k: 2, n: 1 })
        ));
    }

    #[test]
    fn empty_map_csv_has_header() {
        let m = LatentMap {
            names: vec![],
            coords: vec![],
            labels: vec![],
            centroids: vec![],
        };
        assert_eq!(m.to_csv(), "name,z1,z2,cluster\n");
        assert!(m.to_svg().unwrap().starts_with("<svg"));
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let m = LatentMap {
            names: vec!["a".into(), "b".into(), "c".into()],
            coords: vec![vec![0.1 + 0.2, -1e-17], vec![3.0, 1.0 / 3.0], vec![-7.25, 2.0f64.sqrt()]],
            labels: vec![0, 1, 0],
            centroids: vec![vec![0.0, 0.0], vec![3.0, 1.0 / 3.0]],
        };
        let back = LatentMap::from_csv(&m.to_csv()).unwrap();
        assert_eq!(back.names, m.names);
        assert_eq!(back.labels, m.labels);
        for (a, b) in back.coords.iter().zip(&m.coords) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
