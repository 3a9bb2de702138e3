use std::path::Path;

use nalgebra::{Cholesky, SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gains::{RelativeGainVector, BAND_CENTERS_HZ, N_BANDS};
use super::{EqError, Result};

type Vec7 = SVector<f64, N_BANDS>;
type Mat7 = SMatrix<f64, N_BANDS, N_BANDS>;

pub const GMM_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_COMPONENTS: usize = 7;
pub const MIN_SAMPLES_PER_COMPONENT: usize = 10;
pub const COV_REG: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-6;
pub const MAX_ITER: usize = 500;
const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: [f64; N_BANDS],
    pub covariance: [[f64; N_BANDS]; N_BANDS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
    pub fitted_on: usize,
}

/// A fitted model together with the EM trace.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean per-sample log-likelihood at the start of each EM iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct GmmDocument {
    version: u32,
    band_centers_hz: Vec<f64>,
    fitted_on: usize,
    components: Vec<GmmComponent>,
}

/// Cached per-component quantities for density evaluation.
struct Prepared {
    log_weight: f64,
    mean: Vec7,
    chol: Cholesky<f64, nalgebra::Const<N_BANDS>>,
    log_norm: f64,
}

impl Prepared {
    fn log_density(&self, x: &Vec7) -> f64 {
        let d = x - self.mean;
        let z = self.chol.l_dirty().solve_lower_triangular(&d).expect("nonzero diagonal");
        self.log_weight + self.log_norm - 0.5 * z.norm_squared()
    }
}

fn to_vec7(v: &RelativeGainVector) -> Vec7 {
    Vec7::from_column_slice(&v.gains_db)
}

fn mat_to_array(m: &Mat7) -> [[f64; N_BANDS]; N_BANDS] {
    let mut a = [[0.0; N_BANDS]; N_BANDS];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    a
}

fn array_to_mat(a: &[[f64; N_BANDS]; N_BANDS]) -> Mat7 {
    Mat7::from_fn(|i, j| a[i][j])
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl GmmModel {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(EqError::InvalidModel("no components".into()));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(EqError::InvalidModel(format!("weights sum to {total}")));
        }
        for (k, c) in self.components.iter().enumerate() {
            if !(c.weight >= 0.0) || c.mean.iter().any(|m| !m.is_finite()) {
                return Err(EqError::InvalidModel(format!("component {k} has bad weight or mean")));
            }
            let cov = array_to_mat(&c.covariance);
            if cov.iter().any(|v| !v.is_finite()) || (cov - cov.transpose()).amax() > 1e-9 * (1.0 + cov.amax()) {
                return Err(EqError::InvalidModel(format!("component {k} covariance not symmetric")));
            }
            if Cholesky::new(cov).is_none() {
                return Err(EqError::InvalidModel(format!("component {k} covariance not positive-definite")));
            }
        }
        Ok(())
    }

    fn prepare(&self) -> Result<Vec<Prepared>> {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.components
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let chol = Cholesky::new(array_to_mat(&c.covariance))
                    .ok_or_else(|| EqError::InvalidModel(format!("component {k} not positive-definite")))?;
                let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
                Ok(Prepared {
                    log_weight: c.weight.ln(),
                    mean: Vec7::from_column_slice(&c.mean),
                    chol,
                    log_norm: -0.5 * (N_BANDS as f64 * ln_2pi + log_det),
                })
            })
            .collect()
    }

    /// Mean per-sample log-likelihood of `vectors`.
    pub fn mean_log_likelihood(&self, vectors: &[RelativeGainVector]) -> Result<f64> {
        let prep = self.prepare()?;
        let mut buf = vec![0.0; prep.len()];
        let mut total = 0.0;
        for v in vectors {
            let x = to_vec7(v);
            for (b, p) in buf.iter_mut().zip(&prep) {
                *b = p.log_density(&x);
            }
            total += log_sum_exp(&buf);
        }
        Ok(total / vectors.len().max(1) as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GmmDocument {
            version: GMM_FORMAT_VERSION,
            band_centers_hz: BAND_CENTERS_HZ.to_vec(),
            fitted_on: self.fitted_on,
            components: self.components.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| EqError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: GmmDocument = serde_json::from_str(s).map_err(|e| EqError::Format(e.to_string()))?;
        if doc.version != GMM_FORMAT_VERSION {
            return Err(EqError::VersionMismatch {
                found: doc.version,
                expected: GMM_FORMAT_VERSION,
            });
        }
        if doc.band_centers_hz != BAND_CENTERS_HZ {
            return Err(EqError::InvalidModel("band centers differ".into()));
        }
        let model = GmmModel {
            components: doc.components,
            fitted_on: doc.fitted_on,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| EqError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| EqError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// k-means++ seeding: indices of the initial centers.
fn kmeans_pp(xs: &[Vec7], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut centers = vec![rng.random_range(0..xs.len())];
    let mut d2: Vec<f64> = xs.iter().map(|x| (x - xs[centers[0]]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = xs.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.random_range(0..xs.len())
        };
        centers.push(next);
        for (d, x) in d2.iter_mut().zip(xs) {
            *d = d.min((x - xs[next]).norm_squared());
        }
    }
    centers
}

/// M-step from a responsibility matrix `resp[i][k]`.
fn m_step(xs: &[Vec7], resp: &[Vec<f64>], k: usize, global_cov: &Mat7) -> Vec<GmmComponent> {
    let n = xs.len() as f64;
    let mut comps = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum();
        let (mean, cov) = if nk > 1e-12 {
            let mean = xs.iter().zip(resp).fold(Vec7::zeros(), |a, (x, r)| a + x * r[c]) / nk;
            let mut cov = xs.iter().zip(resp).fold(Mat7::zeros(), |a, (x, r)| {
                let d = x - mean;
                a + d * d.transpose() * r[c]
            }) / nk;
            cov = (cov + cov.transpose()) * 0.5;
            (mean, cov)
        } else {
            (Vec7::zeros(), *global_cov)
        };
        let mut cov = cov;
        for i in 0..N_BANDS {
            cov[(i, i)] += COV_REG;
        }
        comps.push(GmmComponent {
            weight: nk / n,
            mean: mean.into(),
            covariance: mat_to_array(&cov),
        });
    }
    // renormalize against rounding so the weight-sum invariant is tight
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in &mut comps {
        c.weight /= total;
    }
    comps
}

pub fn fit_gmm(vectors: &[RelativeGainVector], n_components: usize, seed: u64) -> Result<GmmModel> {
    fit_gmm_traced(vectors, n_components, seed).map(|f| f.model)
}

/// EM for a full-covariance mixture over 7-band gain vectors.
pub fn fit_gmm_traced(vectors: &[RelativeGainVector], n_components: usize, seed: u64) -> Result<GmmFit> {
    if n_components == 0 || vectors.len() < MIN_SAMPLES_PER_COMPONENT * n_components {
        return Err(EqError::TooFewSamples {
            got: vectors.len(),
            need: MIN_SAMPLES_PER_COMPONENT * n_components.max(1),
        });
    }
    let xs: Vec<Vec7> = vectors.iter().map(to_vec7).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().fold(Vec7::zeros(), |a, x| a + x) / n;
    let mut global_cov = xs.iter().fold(Mat7::zeros(), |a, x| {
        let d = x - mean;
        a + d * d.transpose()
    }) / n;
    if global_cov.diagonal().iter().all(|&v| v <= 1e-12 * (1.0 + mean.amax().powi(2))) {
        return Err(EqError::DegenerateData);
    }
    for i in 0..N_BANDS {
        global_cov[(i, i)] += COV_REG;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(&xs, n_components, &mut rng);
    let mut resp: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let best = (0..n_components)
                .min_by(|&a, &b| {
                    (x - xs[centers[a]])
                        .norm_squared()
                        .total_cmp(&(x - xs[centers[b]]).norm_squared())
                })
                .unwrap();
            let mut r = vec![0.0; n_components];
            r[best] = 1.0;
            r
        })
        .collect();
    let mut components = m_step(&xs, &resp, n_components, &global_cov);
    // an empty hard cluster keeps its seed point as mean
    for (c, comp) in components.iter_mut().enumerate() {
        if comp.weight == 0.0 {
            comp.mean = xs[centers[c]].into();
        }
    }
    let floor = 1e-12;
    let total: f64 = components.iter().map(|c| c.weight.max(floor)).sum();
    for c in &mut components {
        c.weight = c.weight.max(floor) / total;
    }

    let mut trace = Vec::new();
    let mut converged = false;
    let mut buf = vec![0.0; n_components];
    for _ in 0..MAX_ITER {
        let model = GmmModel {
            components: components.clone(),
            fitted_on: xs.len(),
        };
        let prep = model.prepare()?;
        let mut ll = 0.0;
        for (x, r) in xs.iter().zip(resp.iter_mut()) {
            for (b, p) in buf.iter_mut().zip(&prep) {
                *b = p.log_density(x);
            }
            let lse = log_sum_exp(&buf);
            ll += lse;
            for (rk, b) in r.iter_mut().zip(&buf) {
                *rk = (b - lse).exp();
            }
        }
        let ll = ll / n;
        if !ll.is_finite() {
            return Err(EqError::DegenerateData);
        }
        if let Some(&prev) = trace.last() {
            if ll - prev < TOLERANCE {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        components = m_step(&xs, &resp, n_components, &global_cov);
    }
    let model = GmmModel {
        components,
        fitted_on: xs.len(),
    };
    model.validate()?;
    Ok(GmmFit {
        model,
        log_likelihood: trace,
        converged,
    })
}

/// `n` i.i.d. draws from `model`, fully determined by `seed`.
pub fn sample_gains(model: &GmmModel, n: usize, seed: u64) -> Result<Vec<RelativeGainVector>> {
    model.validate()?;
    let chols: Vec<Mat7> = model
        .components
        .iter()
        .map(|c| Cholesky::new(array_to_mat(&c.covariance)).map(|ch| ch.l()))
        .collect::<Option<_>>()
        .ok_or_else(|| EqError::InvalidModel("covariance not positive-definite".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = model.components.len() - 1;
        for (i, c) in model.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                k = i;
                break;
            }
        }
        let z = Vec7::from_fn(|_, _| rng.sample(StandardNormal));
        let x = Vec7::from_column_slice(&model.components[k].mean) + chols[k] * z;
        out.push(RelativeGainVector::new(x.into())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(mean: [f64; N_BANDS], sd: f64) -> GmmModel {
        let mut cov = [[0.0; N_BANDS]; N_BANDS];
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] = sd * sd;
        }
        GmmModel {
            components: vec![GmmComponent {
                weight: 1.0,
                mean,
                covariance: cov,
            }],
            fitted_on: 0,
        }
    }

    #[test]
    fn too_few_samples() {
        let v = vec![RelativeGainVector::zeros(); 19];
        assert!(matches!(fit_gmm(&v, 2, 0), Err(EqError::TooFewSamples { got: 19, need: 20 })));
    }

    #[test]
    fn identical_vectors_are_degenerate() {
        let v = vec![RelativeGainVector::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap(); 100];
        assert!(matches!(fit_gmm(&v, 1, 0), Err(EqError::DegenerateData)));
    }

    #[test]
    fn sampling_is_deterministic_and_empty_for_zero() {
        let m = single([1.0; N_BANDS], 2.0);
        assert!(sample_gains(&m, 0, 3).unwrap().is_empty());
        assert_eq!(sample_gains(&m, 50, 3).unwrap(), sample_gains(&m, 50, 3).unwrap());
        assert_ne!(sample_gains(&m, 50, 3).unwrap(), sample_gains(&m, 50, 4).unwrap());
    }

    #[test]
    fn single_gaussian_recovery() {
        let mean = [-4.0, -2.0, -1.0, 0.5, 1.0, -3.0, -8.0];
        let truth = single(mean, 1.5);
        let xs = sample_gains(&truth, 1000, 11).unwrap();
        let fit = fit_gmm_traced(&xs, 1, 5).unwrap();
        let c = &fit.model.components[0];
        for b in 0..N_BANDS {
            assert!((c.mean[b] - mean[b]).abs() < 0.15, "{:?}", c.mean);
        }
        let est = array_to_mat(&c.covariance);
        let tru = array_to_mat(&truth.components[0].covariance);
        assert!((est - tru).norm() / tru.norm() < 0.1);
        assert!(fit.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let m = single([0.5; N_BANDS], 1.0);
        let back = GmmModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let bumped = m.to_json().unwrap().replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(GmmModel::from_json(&bumped), Err(EqError::VersionMismatch { found: 2, .. })));
    }

    #[test]
    fn invalid_weights_rejected() {
        let mut m = single([0.0; N_BANDS], 1.0);
        m.components[0].weight = 0.9;
        assert!(sample_gains(&m, 1, 0).is_err());
    }
}
