//! Count-table ingestion, transforms, column selection and bundled stand-in tables.

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub values: DMatrix<f64>,
    pub variable_names: Vec<String>,
    /// Source and every transform applied, in order.
    pub provenance: Vec<String>,
}

impl Dataset {
    pub fn new(values: DMatrix<f64>, variable_names: Vec<String>, source: impl Into<String>) -> Result<Self> {
        if variable_names.len() != values.ncols() {
            return Err(Error::Shape(format!("{} names for {} columns", variable_names.len(), values.ncols())));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::DegenerateData("entries must be finite and nonnegative".into()));
        }
        Ok(Self { values, variable_names, provenance: vec![source.into()] })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn zero_fractions(&self) -> Vec<f64> {
        zero_fractions(&self.values)
    }
}

pub fn zero_fractions(values: &DMatrix<f64>) -> Vec<f64> {
    let n = values.nrows() as f64;
    values.column_iter().map(|c| c.iter().filter(|&&v| v == 0.0).count() as f64 / n).collect()
}

/// Linear-interpolation sample quantile (type 7) of `xs` at level `q`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Read a header-plus-rows CSV of nonnegative numbers.
pub fn load_counts_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_counts_csv(&text, &path.display().to_string())
}

pub fn parse_counts_csv(text: &str, source: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { row: 1, column: 0, message: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Empty(source.to_owned()));
    }
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0;
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row, column: 0, message: e.to_string() })?;
        if rec.len() != names.len() {
            return Err(Error::Parse { row, column: rec.len() + 1, message: format!("expected {} fields", names.len()) });
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse { row, column: j + 1, message: format!("'{field}' is not a number") })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse { row, column: j + 1, message: format!("'{field}' is not a nonnegative count") });
            }
            rows.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty(source.to_owned()));
    }
    let values = DMatrix::from_row_slice(n, names.len(), &rows);
    Dataset::new(values, names, format!("csv:{source}"))
}

pub fn write_counts_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::Serialization(format!("{}: {e}", path.display()));
    w.write_record(&data.variable_names).map_err(err)?;
    for row in data.values.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Replace every entry by round(entry^exponent).
pub fn rescale_power(data: &Dataset, exponent: f64) -> Result<Dataset> {
    if !(exponent > 0.0 && exponent <= 1.0) {
        return Err(Error::InvalidParameter(format!("exponent {exponent} must lie in (0, 1]")));
    }
    let mut out = data.clone();
    out.values = data.values.map(|v| v.powf(exponent).round());
    out.provenance.push(format!("power:{exponent}"));
    Ok(out)
}

/// Indices of `p_out` columns whose zero fractions are nearest the targets, taken cyclically;
/// ties go to the lower column index and a column is used at most once.
pub fn select_by_zero_proportion(values: &DMatrix<f64>, targets: &[f64], p_out: usize) -> Result<Vec<usize>> {
    if p_out > values.ncols() {
        return Err(Error::Selection(format!("asked for {p_out} of {} columns", values.ncols())));
    }
    if targets.is_empty() {
        return Err(Error::Selection("no zero-fraction targets".into()));
    }
    let zf = zero_fractions(values);
    let mut used = vec![false; zf.len()];
    let mut out = Vec::with_capacity(p_out);
    for i in 0..p_out {
        let t = targets[i % targets.len()];
        let best = (0..zf.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| (zf[a] - t).abs().total_cmp(&(zf[b] - t).abs()).then(a.cmp(&b)))
            .ok_or_else(|| Error::Selection("ran out of columns".into()))?;
        used[best] = true;
        out.push(best);
    }
    Ok(out)
}

pub fn select_dataset(data: &Dataset, targets: &[f64], p_out: usize) -> Result<Dataset> {
    let cols = select_by_zero_proportion(&data.values, targets, p_out)?;
    let mut out = data.clone();
    out.values = data.values.select_columns(&cols);
    out.variable_names = cols.iter().map(|&j| data.variable_names[j].clone()).collect();
    out.provenance.push(format!("select:{cols:?}"));
    Ok(out)
}

/// Description of a bundled stand-in table.
#[derive(Debug, Clone, Copy)]
pub struct StandinSpec {
    pub n: usize,
    pub p: usize,
    /// Column zero fractions at levels 0.25, 0.5, 0.75 and 1.
    pub zero_quartiles: [f64; 4],
    /// Range of log-scale locations of the positive part.
    pub log_location: (f64, f64),
    pub log_scale: (f64, f64),
    pub factors: usize,
}

/// QMP-shaped: 135 samples by 101 genera, heavy-tailed counts.
pub const QMP_STANDIN: StandinSpec = StandinSpec {
    n: 135,
    p: 101,
    zero_quartiles: [0.037, 0.289, 0.578, 0.793],
    log_location: (8.0, 16.0),
    log_scale: (0.8, 2.0),
    factors: 3,
};

/// scRNA-shaped: 265 cells by 329 genes, small counts.
pub const SCRNA_STANDIN: StandinSpec = StandinSpec {
    n: 265,
    p: 329,
    zero_quartiles: [0.411, 0.657, 0.811, 0.898],
    log_location: (0.0, 1.0),
    log_scale: (0.3, 0.8),
    factors: 2,
};

/// Synthetic table whose column zero fractions follow the given quartiles. Columns share a few
/// latent Gaussian factors; each column is zero below its truncation level and log-normal
/// above it.
pub fn synthetic_standin(spec: &StandinSpec, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let (n, p) = (spec.n, spec.p);
    // piecewise-linear quantile function of the column zero fractions, starting at 0
    let knots = [(0.0, 0.0), (0.25, spec.zero_quartiles[0]), (0.5, spec.zero_quartiles[1]), (0.75, spec.zero_quartiles[2]), (1.0, spec.zero_quartiles[3])];
    let zf_at = |u: f64| {
        let k = knots.windows(2).find(|w| u <= w[1].0).unwrap_or(&knots[3..5]);
        let (a, b) = (k[0], k[1]);
        a.1 + (u - a.0) / (b.0 - a.0) * (b.1 - a.1)
    };
    let mut order: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let loadings = DMatrix::from_fn(p, spec.factors, |_, _| rng.random_range(-0.6..0.6));
    let mut values = DMatrix::zeros(n, p);
    let factors: DMatrix<f64> = DMatrix::from_fn(n, spec.factors, |_, _| StandardNormal.sample(&mut rng));
    for (rank, &j) in order.iter().enumerate() {
        let zeros = (zf_at(rank as f64 / (p - 1) as f64) * n as f64).round() as usize;
        let load = loadings.row(j);
        let common: f64 = load.iter().map(|l| l * l).sum();
        let scale = if common < 0.95 { (1.0 - common).sqrt() } else { 0.2 };
        let z: Vec<f64> = (0..n)
            .map(|i| {
                let shared: f64 = (0..spec.factors).map(|f| factors[(i, f)] * load[f]).sum();
                let own: f64 = StandardNormal.sample(&mut rng);
                shared + scale * own
            })
            .collect();
        let mut sorted = z.clone();
        sorted.sort_by(f64::total_cmp);
        let cut = if zeros == 0 { f64::NEG_INFINITY } else { sorted[zeros - 1] };
        let loc = rng.random_range(spec.log_location.0..=spec.log_location.1);
        let sd = rng.random_range(spec.log_scale.0..=spec.log_scale.1);
        for i in 0..n {
            values[(i, j)] = if z[i] <= cut { 0.0 } else { (loc + sd * z[i]).exp().ceil().max(1.0) };
        }
    }
    let names = (0..p).map(|j| format!("v{}", j + 1)).collect();
    Dataset::new(values, names, format!("synthetic-standin:n={n},p={p},seed={seed}")).expect("stand-in is valid")
}
