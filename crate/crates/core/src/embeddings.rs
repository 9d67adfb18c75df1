//! Per-utterance embeddings (final GRU state) and their 2-D PCA projection.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Accent, UtteranceRecord};
use crate::dataset::FeatureStore;
use crate::error::{Error, Result};
use crate::eval::{load_inputs, EvalCrop, Failure};
use crate::model::{embed, Checkpoint};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub path: String,
    pub accent: Accent,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub rows: Vec<EmbeddingRow>,
    pub m: usize,
}

impl EmbeddingSet {
    pub fn new(rows: Vec<EmbeddingRow>) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.h.len());
        if let Some(r) = rows.iter().find(|r| r.h.len() != m) {
            return Err(Error::Shape(format!("{}: embedding length {} ≠ {m}", r.path, r.h.len())));
        }
        Ok(Self { rows, m })
    }

    /// CSV with columns `path,accent,h0,…,h{m-1}`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["path".to_string(), "accent".to_string()];
        header.extend((0..self.m).map(|i| format!("h{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.path.clone(), r.accent.as_str().to_string()];
            rec.extend(r.h.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(csv_err)?.clone();
        if header.len() < 3 || &header[0] != "path" || &header[1] != "accent" {
            return Err(Error::Format("embedding CSV must start with path,accent,h0".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            let accent: Accent = rec[1]
                .parse()
                .map_err(|_| Error::Format(format!("line {line}: unknown accent {:?}", &rec[1])))?;
            let h = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {line}: {e}")))?;
            rows.push(EmbeddingRow {
                path: rec[0].to_string(),
                accent,
                h,
            });
        }
        Self::new(rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Eval-mode embedding of each record's full sequence. Records that fail to
/// load are returned separately, as in evaluation.
pub fn extract_embeddings(
    ckpt: &Checkpoint,
    records: &[&UtteranceRecord],
    class_set: &[Accent],
    store: &FeatureStore,
) -> Result<(EmbeddingSet, Vec<Failure>)> {
    let inputs = load_inputs(records, class_set, store, EvalCrop::Full)?;
    let hs = par::map(&inputs, |input| -> Result<Vec<f64>> {
        let (_, seq) = input.as_ref().map_err(|e| Error::Format(e.to_string()))?;
        embed(&ckpt.params, seq)
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (record, h) in records.iter().zip(hs) {
        match h {
            Ok(h) => rows.push(EmbeddingRow {
                path: record.path.clone(),
                accent: record.accent,
                h,
            }),
            Err(e) => failures.push(Failure {
                path: record.path.clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok((EmbeddingSet::new(rows)?, failures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `m`.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component, descending.
    pub explained_variance: Vec<f64>,
    /// Set when the centered data has rank below `k`; the surplus
    /// components are arbitrary orthonormal directions with zero variance.
    pub rank_deficient: bool,
}

/// Top-`k` principal axes from the SVD of the centered data matrix.
pub fn pca_fit(set: &EmbeddingSet, k: usize) -> Result<PcaModel> {
    let (n, m) = (set.rows.len(), set.m);
    if n < 2 {
        return Err(Error::Argument(format!("PCA needs at least 2 rows, got {n}")));
    }
    if k == 0 || k > m.min(n - 1) {
        return Err(Error::Argument(format!(
            "k = {k} must be in 1..={} for {n} rows of width {m}",
            m.min(n - 1)
        )));
    }
    let mut mean = vec![0.0; m];
    for r in &set.rows {
        for (a, v) in mean.iter_mut().zip(&r.h) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|j| set.rows.iter().map(|r| r.h[j] - mean[j]).collect())
        .collect();
    let (sigma, v) = jacobi_svd(columns);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let tol = sigma[order[0]] * n.max(m) as f64 * f64::EPSILON;
    let axes = order.into_iter().map(|j| {
        let var = if sigma[j] <= tol { 0.0 } else { sigma[j] * sigma[j] / (n - 1) as f64 };
        (var, v[j].clone())
    });

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    let mut rank_deficient = false;
    for (var, mut row) in axes.take(k) {
        let pivot = row
            .iter()
            .enumerate()
            .fold(0, |best, (j, v)| if v.abs() > row[best].abs() { j } else { best });
        if row[pivot] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        rank_deficient |= var == 0.0;
        explained_variance.push(var);
        components.push(row);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        rank_deficient,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedRow {
    pub path: String,
    pub accent: Accent,
    pub p: Vec<f64>,
}

/// One-sided (Hestenes) Jacobi SVD. Takes the columns of an `n × m` matrix
/// and returns the singular values with the matching right singular vectors,
/// unsorted. Converges to full working precision even for clustered or
/// repeated singular values.
fn jacobi_svd(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = a.len();
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let rotate = |cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64| {
        let (lo, hi) = cols.split_at_mut(q);
        for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
            let (xp, yq) = (*x, *y);
            *x = c * xp - s * yq;
            *y = s * xp + c * yq;
        }
    };
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    (a.iter().map(|col| dot(col, col).sqrt()).collect(), v)
}

/// `p = components · (h − mean)` for every row.
pub fn pca_project(model: &PcaModel, set: &EmbeddingSet) -> Result<Vec<ProjectedRow>> {
    if set.m != model.mean.len() {
        return Err(Error::Shape(format!(
            "PCA fitted on width {}, embeddings have width {}",
            model.mean.len(),
            set.m
        )));
    }
    Ok(set
        .rows
        .iter()
        .map(|r| {
            let centered: Vec<f64> = r.h.iter().zip(&model.mean).map(|(h, m)| h - m).collect();
            ProjectedRow {
                path: r.path.clone(),
                accent: r.accent,
                p: model
                    .components
                    .iter()
                    .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
                    .collect(),
            }
        })
        .collect())
}

/// Mean pairwise Euclidean distance within classes and across classes.
pub fn cluster_distances(rows: &[ProjectedRow]) -> (f64, f64) {
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d = rows[i]
                .p
                .iter()
                .zip(&rows[j].p)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if rows[i].accent == rows[j].accent {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    (intra / n_intra.max(1) as f64, inter / n_inter.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScatterFormat {
    Csv,
    Svg,
}

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

pub fn scatter_csv(rows: &[ProjectedRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["path", "accent", "pc1", "pc2"]).map_err(csv_err)?;
    for r in rows {
        let coord = |i: usize| r.p.get(i).copied().unwrap_or(0.0).to_string();
        w.write_record([r.path.clone(), r.accent.as_str().to_string(), coord(0), coord(1)])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads back `path,accent,pc1,pc2` rows.
pub fn read_scatter_csv(text: &str) -> Result<Vec<ProjectedRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 4 {
            return Err(Error::Format("projection rows need 4 columns".into()));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| Error::Format(e.to_string()));
        out.push(ProjectedRow {
            path: rec[0].to_string(),
            accent: rec[1].parse().map_err(|_| Error::Format(format!("unknown accent {:?}", &rec[1])))?,
            p: vec![num(2)?, num(3)?],
        });
    }
    Ok(out)
}

/// One circle per row, colored by accent, with a legend of the accents present.
pub fn scatter_svg(rows: &[ProjectedRow]) -> String {
    let (w, h, margin, legend_w) = (640.0, 480.0, 40.0, 140.0);
    let xs = rows.iter().map(|r| r.p.first().copied().unwrap_or(0.0));
    let ys = rows.iter().map(|r| r.p.get(1).copied().unwrap_or(0.0));
    let span = |it: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) }
    };
    let (x0, x1) = span(&mut xs.clone());
    let (y0, y1) = span(&mut ys.clone());
    let plot_w = w - legend_w - 2.0 * margin;
    let plot_h = h - 2.0 * margin;
    let color = |a: Accent| PALETTE[Accent::ALL.iter().position(|&x| x == a).unwrap_or(0) % PALETTE.len()];

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{margin}" y="{margin}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#888"/>"##
    );
    for r in rows {
        let px = margin + (r.p.first().copied().unwrap_or(0.0) - x0) / (x1 - x0) * plot_w;
        let py = margin + plot_h - (r.p.get(1).copied().unwrap_or(0.0) - y0) / (y1 - y0) * plot_h;
        let _ = writeln!(
            s,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" fill="{}" fill-opacity="0.8"/>"#,
            color(r.accent)
        );
    }
    let present: Vec<Accent> = Accent::ALL.into_iter().filter(|a| rows.iter().any(|r| r.accent == *a)).collect();
    let lx = w - legend_w - margin / 2.0 + 20.0;
    for (i, a) in present.iter().enumerate() {
        let ly = margin + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{ly}" width="12" height="12" fill="{}"/>"#,
            color(*a)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 18.0,
            ly + 11.0,
            a.as_str()
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">PC1</text>"#,
        margin + plot_w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">PC2</text>"#,
        margin + plot_h / 2.0,
        margin + plot_h / 2.0
    );
    s.push_str("</svg>\n");
    s
}

pub fn export_scatter(rows: &[ProjectedRow], out: &Path, format: ScatterFormat) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Argument("nothing to plot".into()));
    }
    let text = match format {
        ScatterFormat::Csv => scatter_csv(rows)?,
        ScatterFormat::Svg => scatter_svg(rows),
    };
    std::fs::write(out, text).map_err(|e| Error::io(out, e))
}
