use super::{CellOutcome, CellResult, ExperimentResults, GridPoint};
use crate::count_models::Flavor;
use crate::data::quantile;
use crate::error::{Error, Result};
use crate::eval::ModelKind;
use serde::{Deserialize, Serialize, Serializer};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(u64),
    Num(f64),
    Text(String),
    Null,
}

impl Value {
    fn opt(v: Option<f64>) -> Self {
        v.map_or(Value::Null, Value::Num)
    }

    fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    fn csv(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Num(v) if v.is_finite() => format!("{v}"),
            Value::Num(_) | Value::Null => String::new(),
            Value::Text(s) => s.clone(),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Int(v) => s.serialize_u64(*v),
            Value::Num(v) if v.is_finite() => s.serialize_f64(*v),
            Value::Num(_) | Value::Null => s.serialize_none(),
            Value::Text(t) => s.serialize_str(t),
        }
    }
}

struct Table {
    name: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<Value>>,
}

/// Grid coordinates present in at least one point, in a fixed order.
struct Coords {
    keys: Vec<&'static str>,
}

impl Coords {
    fn new(cells: &[CellResult]) -> Self {
        let all = ["flavor", "zero_level", "pi_h", "beta1", "gamma0", "gamma1", "rho", "correlation", "transform"];
        let keys = all.into_iter().filter(|k| cells.iter().any(|c| !matches!(Self::get(&c.point, k), Value::Null))).collect();
        Self { keys }
    }

    fn get(p: &GridPoint, key: &str) -> Value {
        match key {
            "flavor" => p.flavor.map_or(Value::Null, |f| Value::text(format!("{f:?}"))),
            "zero_level" => Value::opt(p.zero_level),
            "pi_h" => Value::opt(p.pi_h),
            "beta1" => Value::opt(p.beta1),
            "gamma0" => Value::opt(p.gamma0),
            "gamma1" => Value::opt(p.gamma1),
            "rho" => Value::opt(p.rho),
            "correlation" => p.correlation.map_or(Value::Null, |c| Value::text(format!("{c:?}"))),
            "transform" => p.transform.map_or(Value::Null, |t| Value::text(serde_json::to_value(t).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())),
            _ => Value::Null,
        }
    }

    fn header(&self, rest: &[&str]) -> Vec<String> {
        self.keys.iter().chain(rest).map(|s| s.to_string()).collect()
    }

    fn row(&self, p: &GridPoint, rest: Vec<Value>) -> Vec<Value> {
        self.keys.iter().map(|k| Self::get(p, k)).chain(rest).collect()
    }
}

fn median(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| quantile(xs, 0.5))
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Cells grouped by grid point, in point order.
fn by_point(cells: &[CellResult]) -> BTreeMap<usize, Vec<&CellResult>> {
    let mut m: BTreeMap<usize, Vec<&CellResult>> = BTreeMap::new();
    for c in cells {
        m.entry(c.point_index).or_default().push(c);
    }
    m
}

fn aic_tables(res: &ExperimentResults, co: &Coords) -> Vec<Table> {
    let mut detail = Vec::new();
    let mut summary = Vec::new();
    for (pi, cells) in by_point(&res.cells) {
        let point = &cells[0].point;
        let truth = point.flavor.unwrap_or(Flavor::HNB);
        let mut gaps = Vec::new();
        for c in &cells {
            let Some(CellOutcome::Aic { gamma0, zero_basis, records }) = &c.outcome else {
                detail.push(co.row(point, vec![Value::Int(res.seed), Value::Int(pi as u64), Value::Int(c.replication as u64), Value::Null, Value::Null, Value::Null, Value::Null, Value::Null, Value::Null, Value::text(c.error.clone().unwrap_or_default())]));
                continue;
            };
            for r in records {
                detail.push(co.row(
                    point,
                    vec![
                        Value::Int(res.seed),
                        Value::Int(pi as u64),
                        Value::Int(c.replication as u64),
                        Value::Num(*gamma0),
                        Value::text(format!("{zero_basis:?}").to_lowercase()),
                        Value::text(format!("{:?}", r.model)),
                        Value::opt(r.aic),
                        Value::opt(r.loglik),
                        Value::text(r.converged.to_string()),
                        r.error.clone().map_or(Value::Null, Value::Text),
                    ],
                ));
            }
            let get = |f: Flavor| records.iter().find(|r| r.model == f).and_then(|r| r.aic);
            if let (Some(z), Some(h)) = (get(Flavor::ZINB), get(Flavor::HNB)) {
                gaps.push(z - h);
            }
        }
        let true_better = gaps.iter().filter(|&&g| if truth == Flavor::ZINB { g < 0.0 } else { g > 0.0 }).count();
        summary.push(co.row(
            point,
            vec![
                Value::Int(pi as u64),
                Value::text(format!("{truth:?}")),
                Value::Int(gaps.len() as u64),
                Value::opt(median(&gaps)),
                Value::opt((!gaps.is_empty()).then(|| true_better as f64 / gaps.len() as f64)),
            ],
        ));
    }
    vec![
        Table {
            name: "aic",
            header: co.header(&["master_seed", "point", "replication", "gamma0_calibrated", "zero_basis", "model", "aic", "loglik", "converged", "error"]),
            rows: detail,
        },
        Table {
            name: "aic_summary",
            header: co.header(&["point", "true_model", "replications", "median_gap_zinb_minus_hnb", "true_model_better_share"]),
            rows: summary,
        },
    ]
}

fn eval_tables(res: &ExperimentResults, co: &Coords) -> Vec<Table> {
    let comparisons: Vec<ModelKind> = res.config.models().into_iter().filter(|&m| m != ModelKind::Tlnpn).collect();
    let seed = Value::Int(res.seed);
    let mut records: Vec<Vec<Value>> = Vec::new();
    let mut marginal = Vec::new();
    let mut residuals = Vec::new();
    let mut amc_rows = Vec::new();
    let mut amc_marg = Vec::new();
    let mut heat = Vec::new();
    let mut corr = Vec::new();
    for (pi, cells) in by_point(&res.cells) {
        let point = &cells[0].point;
        let pv = Value::Int(pi as u64);
        let mut amcs: BTreeMap<ModelKind, Vec<f64>> = BTreeMap::new();
        let mut diffs: BTreeMap<ModelKind, Vec<f64>> = BTreeMap::new();
        for c in &cells {
            let rep = Value::Int(c.replication as u64);
            let Some(CellOutcome::Eval(report)) = &c.outcome else {
                records.push(co.row(point, vec![seed.clone(), pv.clone(), rep, Value::Null, Value::Null, Value::Null, Value::Null, Value::text(c.error.clone().unwrap_or_default())]));
                continue;
            };
            for r in &report.records {
                let fold = Value::Int(r.fold as u64);
                let model = Value::text(r.model.tag());
                records.push(co.row(
                    point,
                    vec![seed.clone(), pv.clone(), rep.clone(), fold.clone(), model.clone(), Value::opt(r.distance), Value::opt(r.corr_diff), r.error.clone().map_or(Value::Null, Value::Text)],
                ));
                for (v, d) in r.marginal.iter().enumerate() {
                    marginal.push(co.row(point, vec![seed.clone(), pv.clone(), rep.clone(), fold.clone(), model.clone(), Value::Int(v as u64), Value::Num(*d)]));
                }
                if let Some(res_v) = &r.residuals {
                    for (v, col) in res_v.iter().enumerate() {
                        for (k, x) in col.iter().enumerate() {
                            residuals.push(co.row(
                                point,
                                vec![seed.clone(), pv.clone(), rep.clone(), fold.clone(), model.clone(), Value::Int(v as u64), Value::Int(k as u64 + 1), Value::Num(*x)],
                            ));
                        }
                    }
                }
                if let Some(d) = r.corr_diff {
                    diffs.entry(r.model).or_default().push(d);
                }
            }
            for &cmp in &comparisons {
                let a = report.cv_amc(cmp);
                if let Some(a) = a {
                    amcs.entry(cmp).or_default().push(a);
                }
                amc_rows.push(co.row(point, vec![seed.clone(), pv.clone(), rep.clone(), Value::text(cmp.tag()), Value::opt(a)]));
                for (_, fold, v, a) in report.marginal_amcs(cmp) {
                    amc_marg.push(co.row(point, vec![seed.clone(), pv.clone(), rep.clone(), Value::Int(fold as u64), Value::Int(v as u64), Value::text(cmp.tag()), Value::Num(a)]));
                }
            }
        }
        for &cmp in &comparisons {
            let v = amcs.get(&cmp).cloned().unwrap_or_default();
            let neg = v.iter().filter(|&&a| a < 0.0).count();
            heat.push(co.row(
                point,
                vec![
                    pv.clone(),
                    Value::text(cmp.tag()),
                    Value::Int(v.len() as u64),
                    Value::opt(median(&v)),
                    Value::opt(mean(&v)),
                    Value::opt((!v.is_empty()).then(|| neg as f64 / v.len() as f64)),
                ],
            ));
        }
        for (m, v) in &diffs {
            corr.push(co.row(point, vec![pv.clone(), Value::text(m.tag()), Value::Int(v.len() as u64), Value::opt(median(v)), Value::opt(mean(v))]));
        }
    }
    let mut out = vec![
        Table { name: "records", header: co.header(&["master_seed", "point", "replication", "fold", "model", "distance", "corr_diff", "error"]), rows: records },
        Table { name: "marginal", header: co.header(&["master_seed", "point", "replication", "fold", "model", "variable", "distance"]), rows: marginal },
        Table { name: "amc", header: co.header(&["master_seed", "point", "replication", "comparison", "amc"]), rows: amc_rows },
        Table {
            name: "amc_marginal",
            header: co.header(&["master_seed", "point", "replication", "fold", "variable", "comparison", "amc"]),
            rows: amc_marg,
        },
        Table {
            name: "heatmap",
            header: co.header(&["point", "comparison", "replications", "median_amc", "mean_amc", "tlnpn_better_share"]),
            rows: heat,
        },
        Table { name: "correlation", header: co.header(&["point", "model", "folds", "median_corr_diff", "mean_corr_diff"]), rows: corr },
    ];
    if !residuals.is_empty() {
        out.push(Table {
            name: "residuals",
            header: co.header(&["master_seed", "point", "replication", "fold", "model", "variable", "rank", "residual"]),
            rows: residuals,
        });
    }
    out
}

fn tables(res: &ExperimentResults) -> Vec<Table> {
    let co = Coords::new(&res.cells);
    if res.cells.iter().any(|c| matches!(c.outcome, Some(CellOutcome::Aic { .. }))) || res.experiment.uses_aic() {
        aic_tables(res, &co)
    } else {
        eval_tables(res, &co)
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    experiment: super::Experiment,
    fingerprint: &'a str,
    version: &'a str,
    seed: u64,
    order: u32,
    tables: BTreeMap<&'static str, Vec<BTreeMap<&'a str, &'a Value>>>,
}

/// Write the flat report tables for `results` into `dir`; returns the files written.
pub fn emit_report(results: &ExperimentResults, dir: impl AsRef<Path>, format: ReportFormat) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tables = tables(results);
    match format {
        ReportFormat::Csv => {
            let mut written = Vec::new();
            for t in &tables {
                let path = dir.join(format!("{}.csv", t.name));
                let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
                let csv_err = |e: csv::Error| Error::Serialization(format!("{}: {e}", path.display()));
                w.write_record(&t.header).map_err(csv_err)?;
                for row in &t.rows {
                    w.write_record(row.iter().map(Value::csv)).map_err(csv_err)?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
            Ok(written)
        }
        ReportFormat::Json => {
            let path = dir.join("report.json");
            let report = JsonReport {
                experiment: results.experiment,
                fingerprint: &results.fingerprint,
                version: &results.version,
                seed: results.seed,
                order: results.order,
                tables: tables.iter().map(|t| (t.name, t.rows.iter().map(|r| t.header.iter().map(String::as_str).zip(r).collect()).collect())).collect(),
            };
            let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Serialization(e.to_string()))?;
            std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-17, 12345.678] {
            assert_eq!(Value::Num(v).csv().parse::<f64>().unwrap(), v);
        }
        assert_eq!(Value::Num(f64::NAN).csv(), "");
        assert_eq!(serde_json::to_string(&Value::Num(f64::INFINITY)).unwrap(), "null");
    }
}
