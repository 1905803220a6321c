use super::wasserstein::{amc, wasserstein_1d, wasserstein_pd};
use crate::copula::{fit_tlnpn_with, sample_tlnpn};
use crate::count_models::Flavor;
use crate::error::{Error, Result};
use crate::mle::{fit_intercept_only_with, fit_regression, simulate_fit, simulate_intercept_only, FitOptions};
use crate::par::{map_range, ExecMode};
use crate::rng::{derive_seed, substream};
use crate::special::pearson;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    /// Truncated latent Gaussian copula.
    #[serde(rename = "TLNPN")]
    Tlnpn,
    /// Per-variable intercept-only hurdle NB.
    #[serde(rename = "HNB")]
    Hnb,
    /// Per-variable hurdle NB with that variable's covariate in both parts.
    #[serde(rename = "HNB_COV")]
    HnbCovariates,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Tlnpn => "TLNPN",
            ModelKind::Hnb => "HNB",
            ModelKind::HnbCovariates => "HNB_COV",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Wasserstein order (1 or 2). Defaults to 1.
    pub order: u32,
    pub exec: ExecMode,
    pub fit: FitOptions,
    /// Keep sorted simulated-minus-test residuals per variable.
    pub keep_residuals: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { order: 1, exec: ExecMode::default(), fit: FitOptions::default(), keep_residuals: false }
    }
}

/// One model evaluated on one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub split: usize,
    pub fold: usize,
    pub model: ModelKind,
    pub distance: Option<f64>,
    /// Per-variable 1-D distances.
    pub marginal: Vec<f64>,
    /// Mean over variable pairs of corr(simulated) - corr(test), Pearson.
    pub corr_diff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub residuals: Option<Vec<Vec<f64>>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<FoldRecord>,
    pub order: u32,
    pub seed: u64,
    pub fingerprint: Option<String>,
}

impl EvalReport {
    fn distances(&self, model: ModelKind) -> BTreeMap<(usize, usize), f64> {
        self.records
            .iter()
            .filter(|r| r.model == model)
            .filter_map(|r| r.distance.map(|d| ((r.split, r.fold), d)))
            .collect()
    }

    /// Mean distance of `model` over its successful folds.
    pub fn mean_distance(&self, model: ModelKind) -> Option<f64> {
        let d = self.distances(model);
        (!d.is_empty()).then(|| d.values().sum::<f64>() / d.len() as f64)
    }

    /// AMC of the fold-averaged distances, over folds where both models produced data.
    pub fn cv_amc(&self, hnb: ModelKind) -> Option<f64> {
        let h = self.distances(hnb);
        let t = self.distances(ModelKind::Tlnpn);
        let both: Vec<_> = h.keys().filter(|k| t.contains_key(k)).collect();
        if both.is_empty() {
            return None;
        }
        let m = both.len() as f64;
        let wh = both.iter().map(|k| h[k]).sum::<f64>() / m;
        let wt = both.iter().map(|k| t[k]).sum::<f64>() / m;
        amc(wh, wt).ok()
    }

    /// AMC per split, each from that split's fold-averaged distances.
    pub fn split_amcs(&self, hnb: ModelKind) -> Vec<(usize, f64)> {
        let splits: std::collections::BTreeSet<usize> = self.records.iter().map(|r| r.split).collect();
        splits
            .into_iter()
            .filter_map(|s| {
                let sub = EvalReport { records: self.records.iter().filter(|r| r.split == s).cloned().collect(), ..self.clone_meta() };
                sub.cv_amc(hnb).map(|a| (s, a))
            })
            .collect()
    }

    /// AMC of per-variable distances for each (split, fold, variable) where both succeeded.
    pub fn marginal_amcs(&self, hnb: ModelKind) -> Vec<(usize, usize, usize, f64)> {
        let key = |r: &FoldRecord| (r.split, r.fold);
        let t: BTreeMap<_, _> = self.records.iter().filter(|r| r.model == ModelKind::Tlnpn && r.error.is_none()).map(|r| (key(r), r)).collect();
        let mut out = Vec::new();
        for h in self.records.iter().filter(|r| r.model == hnb && r.error.is_none()) {
            if let Some(tr) = t.get(&key(h)) {
                for (v, (a, b)) in h.marginal.iter().zip(&tr.marginal).enumerate() {
                    if let Ok(x) = amc(*a, *b) {
                        out.push((h.split, h.fold, v, x));
                    }
                }
            }
        }
        out
    }

    fn clone_meta(&self) -> EvalReport {
        EvalReport { records: Vec::new(), order: self.order, seed: self.seed, fingerprint: self.fingerprint.clone() }
    }

    pub fn failures(&self) -> impl Iterator<Item = &FoldRecord> {
        self.records.iter().filter(|r| r.error.is_some())
    }
}

/// Random permutation of 0..n split into k nearly equal consecutive blocks.
pub fn fold_partition(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, &[0xF01D]));
    (0..k).map(|f| idx[f * n / k..(f + 1) * n / k].to_vec()).collect()
}

fn column_u64(m: &DMatrix<f64>, j: usize) -> Vec<u64> {
    m.column(j).iter().map(|&v| v.round() as u64).collect()
}

fn constant(m: &DMatrix<f64>, j: usize) -> Option<f64> {
    let c = m.column(j);
    c.iter().all(|&v| v == c[0]).then(|| c[0])
}

struct FoldData<'a> {
    train: DMatrix<f64>,
    test: DMatrix<f64>,
    x_train: Option<DMatrix<f64>>,
    x_test: Option<DMatrix<f64>>,
    opts: &'a EvalOptions,
}

fn simulate_model(model: ModelKind, fd: &FoldData, seed: u64) -> Result<DMatrix<f64>> {
    let (n_test, p) = fd.test.shape();
    let mut out = DMatrix::zeros(n_test, p);
    let varying: Vec<usize> = (0..p).filter(|&j| constant(&fd.train, j).is_none()).collect();
    // constant training columns can only be reproduced as constants
    for j in 0..p {
        if let Some(c) = constant(&fd.train, j) {
            out.column_mut(j).fill(c);
        }
    }
    match model {
        ModelKind::Tlnpn => {
            if varying.len() >= 2 {
                let sub = fd.train.select_columns(&varying);
                let fit = fit_tlnpn_with(&sub, fd.opts.exec)?;
                let sim = sample_tlnpn(&fit, n_test, seed)?;
                for (k, &j) in varying.iter().enumerate() {
                    out.set_column(j, &sim.column(k));
                }
            } else if let Some(&j) = varying.first() {
                // a single free variable: resample its empirical distribution
                let mut sorted: Vec<f64> = fd.train.column(j).iter().copied().collect();
                sorted.sort_by(f64::total_cmp);
                let mut rng = substream(seed, &[j as u64]);
                for i in 0..n_test {
                    let u: f64 = rand::Rng::random(&mut rng);
                    let idx = ((u * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
                    out[(i, j)] = sorted[idx];
                }
            }
        }
        ModelKind::Hnb => {
            for &j in &varying {
                let y = column_u64(&fd.train, j);
                let fit = fit_intercept_only_with(&y, Flavor::HNB, &fd.opts.fit)?;
                let sim = simulate_intercept_only(&fit, n_test, &mut substream(seed, &[j as u64]))?;
                out.set_column(j, &nalgebra::DVector::from_iterator(n_test, sim.into_iter().map(|v| v as f64)));
            }
        }
        ModelKind::HnbCovariates => {
            let (xt, xs) = match (&fd.x_train, &fd.x_test) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Config("HNB with covariates needs covariates".into())),
            };
            for &j in &varying {
                let y = column_u64(&fd.train, j);
                let design = |x: &DMatrix<f64>| DMatrix::from_fn(x.nrows(), 2, |i, c| if c == 0 { 1.0 } else { x[(i, j)] });
                let (dt, ds) = (design(xt), design(xs));
                let fit = fit_regression(&y, &dt, &dt, Flavor::HNB, &fd.opts.fit)?;
                let sim = simulate_fit(&fit, &ds, &ds, &mut substream(seed, &[j as u64]))?;
                out.set_column(j, &nalgebra::DVector::from_iterator(n_test, sim.into_iter().map(|v| v as f64)));
            }
        }
    }
    Ok(out)
}

/// Mean over variable pairs of corr(a) - corr(b); pairs with an undefined correlation are skipped.
pub fn correlation_difference(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let p = a.ncols();
    let cols = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { (0..p).map(|j| m.column(j).iter().copied().collect()).collect() };
    let (ca, cb) = (cols(a), cols(b));
    let mut diffs = Vec::new();
    for j in 0..p {
        for k in (j + 1)..p {
            if let (Some(x), Some(y)) = (pearson(&ca[j], &ca[k]), pearson(&cb[j], &cb[k])) {
                diffs.push(x - y);
            }
        }
    }
    (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// Sorted simulated values minus sorted test values, per variable.
pub fn sorted_residuals(sim: &DMatrix<f64>, test: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..test.ncols())
        .map(|j| {
            let mut a: Vec<f64> = sim.column(j).iter().copied().collect();
            let mut b: Vec<f64> = test.column(j).iter().copied().collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            a.iter().zip(&b).map(|(x, y)| x - y).collect()
        })
        .collect()
}

fn evaluate(model: ModelKind, fd: &FoldData, split: usize, fold: usize, seed: u64) -> FoldRecord {
    let sim_seed = derive_seed(seed, &[split as u64, fold as u64, model.index()]);
    let res = simulate_model(model, fd, sim_seed).and_then(|sim| {
        let order = fd.opts.order;
        let d = wasserstein_pd(&sim, &fd.test, order)?;
        let marginal = (0..fd.test.ncols())
            .map(|j| wasserstein_1d(sim.column(j).as_slice(), fd.test.column(j).as_slice(), order))
            .collect::<Result<Vec<f64>>>()?;
        Ok((d, marginal, sim))
    });
    match res {
        Ok((d, marginal, sim)) => FoldRecord {
            split,
            fold,
            model,
            distance: Some(d),
            marginal,
            corr_diff: correlation_difference(&sim, &fd.test),
            residuals: fd.opts.keep_residuals.then(|| sorted_residuals(&sim, &fd.test)),
            error: None,
        },
        Err(e) => FoldRecord { split, fold, model, distance: None, marginal: Vec::new(), corr_diff: None, residuals: None, error: Some(e.to_string()) },
    }
}

fn check_inputs(data: &DMatrix<f64>, covariates: Option<&DMatrix<f64>>, k: usize, models: &[ModelKind]) -> Result<()> {
    if models.is_empty() {
        return Err(Error::Config("no models to evaluate".into()));
    }
    if k < 2 || k > data.nrows() {
        return Err(Error::InvalidParameter(format!("cannot split {} rows into {k} folds", data.nrows())));
    }
    if let Some(x) = covariates {
        if x.shape() != data.shape() {
            return Err(Error::Shape(format!("covariates {:?} vs data {:?}", x.shape(), data.shape())));
        }
    }
    if models.contains(&ModelKind::HnbCovariates) && covariates.is_none() {
        return Err(Error::Config("HNB with covariates needs covariates".into()));
    }
    Ok(())
}

fn fold_records(
    data: &DMatrix<f64>,
    covariates: Option<&DMatrix<f64>>,
    folds: &[Vec<usize>],
    held_out: usize,
    split: usize,
    models: &[ModelKind],
    seed: u64,
    opts: &EvalOptions,
) -> Vec<FoldRecord> {
    let train_idx: Vec<usize> = folds.iter().enumerate().filter(|(f, _)| *f != held_out).flat_map(|(_, v)| v.iter().copied()).collect();
    let test_idx = &folds[held_out];
    let fd = FoldData {
        train: data.select_rows(&train_idx),
        test: data.select_rows(test_idx),
        x_train: covariates.map(|x| x.select_rows(&train_idx)),
        x_test: covariates.map(|x| x.select_rows(test_idx)),
        opts,
    };
    models.iter().map(|&m| evaluate(m, &fd, split, held_out, seed)).collect()
}

/// k-fold cross-validation: every fold is held out once; each model is fitted on the rest and
/// a sample the size of the held-out fold is compared with it.
pub fn kfold_cv(data: &DMatrix<f64>, covariates: Option<&DMatrix<f64>>, k: usize, models: &[ModelKind], seed: u64, opts: &EvalOptions) -> Result<EvalReport> {
    check_inputs(data, covariates, k, models)?;
    let folds = fold_partition(data.nrows(), k, seed);
    let records = map_range(opts.exec, k, |f| fold_records(data, covariates, &folds, f, 0, models, seed, opts)).into_iter().flatten().collect();
    Ok(EvalReport { records, order: opts.order, seed, fingerprint: None })
}

/// Repeated random splits: each split shuffles the rows, holds out one of `folds` blocks and
/// trains on the others.
pub fn random_split_eval(data: &DMatrix<f64>, folds: usize, n_splits: usize, models: &[ModelKind], seed: u64, opts: &EvalOptions) -> Result<EvalReport> {
    check_inputs(data, None, folds, models)?;
    if n_splits == 0 {
        return Err(Error::InvalidParameter("need at least one split".into()));
    }
    let records = map_range(opts.exec, n_splits, |s| {
        let split_seed = derive_seed(seed, &[s as u64]);
        let parts = fold_partition(data.nrows(), folds, split_seed);
        fold_records(data, None, &parts, 0, s, models, seed, opts)
    })
    .into_iter()
    .flatten()
    .collect();
    Ok(EvalReport { records, order: opts.order, seed, fingerprint: None })
}
