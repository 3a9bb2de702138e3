use rir_neural::{NeuralError, Scalar, Tensor};
use serde::{Deserialize, Serialize};

use super::model::{DiscriminatorNet, GeneratorNet};
use super::Result;

/// `mean log d_real + mean log(1 - d_fake)`, with logs clamped away from 0.
pub fn adversarial_loss<T: Scalar>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(d_real.log().mean().add(&d_fake.one_minus().log().mean())?)
}

/// Same as [`adversarial_loss`] but fails on probabilities at 0 or 1.
pub fn adversarial_loss_strict<T: Scalar>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<Tensor<T>> {
    for t in [d_real, d_fake] {
        if let Some(v) = t.values().iter().find(|v| !(**v > T::zero() && **v < T::one())) {
            return Err(NeuralError::DomainError(format!("probability {v} outside (0, 1)")).into());
        }
    }
    let real = d_real.log_unclamped()?.mean();
    let fake = d_fake.one_minus().log_unclamped()?.mean();
    Ok(real.add(&fake)?)
}

/// Mean absolute difference, i.e. the per-example L1 norm divided by the
/// length and averaged over the batch.
pub(crate) fn l1<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(a.sub(b)?.l1_norm())
}

pub fn cycle_loss<T: Scalar>(
    s: &Tensor<T>,
    r: &Tensor<T>,
    g_sr: &dyn GeneratorNet<T>,
    g_rs: &dyn GeneratorNet<T>,
) -> Result<Tensor<T>> {
    let fake_r = g_sr.forward(s)?;
    let fake_s = g_rs.forward(r)?;
    cycle_from(s, r, &fake_r, &fake_s, g_sr, g_rs)
}

pub(crate) fn cycle_from<T: Scalar>(
    s: &Tensor<T>,
    r: &Tensor<T>,
    fake_r: &Tensor<T>,
    fake_s: &Tensor<T>,
    g_sr: &dyn GeneratorNet<T>,
    g_rs: &dyn GeneratorNet<T>,
) -> Result<Tensor<T>> {
    let a = l1(&g_rs.forward(fake_r)?, s)?;
    let b = l1(&g_sr.forward(fake_s)?, r)?;
    Ok(a.add(&b)?)
}

/// `G_RS` is applied to synthetic input and `G_SR` to real input.
pub fn identity_loss<T: Scalar>(
    s: &Tensor<T>,
    r: &Tensor<T>,
    g_sr: &dyn GeneratorNet<T>,
    g_rs: &dyn GeneratorNet<T>,
) -> Result<Tensor<T>> {
    let a = l1(&g_rs.forward(s)?, s)?;
    let b = l1(&g_sr.forward(r)?, r)?;
    Ok(a.add(&b)?)
}

/// The four networks of the translation model, borrowed.
pub struct Models<'a, T: Scalar> {
    pub g_sr: &'a dyn GeneratorNet<T>,
    pub g_rs: &'a dyn GeneratorNet<T>,
    pub d_r: &'a dyn DiscriminatorNet<T>,
    pub d_s: &'a dyn DiscriminatorNet<T>,
}

/// Loss graph with every component kept separately.
pub struct Objective<T: Scalar> {
    pub total: Tensor<T>,
    pub adv_sr: Tensor<T>,
    pub adv_rs: Tensor<T>,
    pub cyc: Tensor<T>,
    pub id: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossMetrics {
    #[serde(rename = "L_total")]
    pub total: f64,
    #[serde(rename = "L_adv_SR")]
    pub adv_sr: f64,
    #[serde(rename = "L_adv_RS")]
    pub adv_rs: f64,
    #[serde(rename = "L_cyc")]
    pub cyc: f64,
    #[serde(rename = "L_id")]
    pub id: f64,
}

impl LossMetrics {
    pub fn is_finite(&self) -> bool {
        [self.total, self.adv_sr, self.adv_rs, self.cyc, self.id].iter().all(|v| v.is_finite())
    }

    pub fn csv_header() -> &'static str {
        "step,L_total,L_adv_SR,L_adv_RS,L_cyc,L_id"
    }

    pub fn csv_row(&self, step: u64) -> String {
        format!("{step},{},{},{},{},{}", self.total, self.adv_sr, self.adv_rs, self.cyc, self.id)
    }
}

impl std::fmt::Display for LossMetrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "L_total={} L_adv_SR={} L_adv_RS={} L_cyc={} L_id={}",
            self.total, self.adv_sr, self.adv_rs, self.cyc, self.id
        )
    }
}

impl<T: Scalar> Objective<T> {
    pub fn metrics(&self) -> LossMetrics {
        LossMetrics {
            total: self.total.item().f64(),
            adv_sr: self.adv_sr.item().f64(),
            adv_rs: self.adv_rs.item().f64(),
            cyc: self.cyc.item().f64(),
            id: self.id.item().f64(),
        }
    }
}

/// `L_adv(G_SR, D_R) + L_adv(G_RS, D_S) + λ_cyc L_cyc + λ_id L_id`.
pub fn full_objective<T: Scalar>(
    s: &Tensor<T>,
    r: &Tensor<T>,
    m: &Models<'_, T>,
    lambda_cyc: f64,
    lambda_id: f64,
) -> Result<Objective<T>> {
    let fake_r = m.g_sr.forward(s)?;
    let fake_s = m.g_rs.forward(r)?;
    let adv_sr = adversarial_loss(&m.d_r.forward(r)?, &m.d_r.forward(&fake_r)?)?;
    let adv_rs = adversarial_loss(&m.d_s.forward(s)?, &m.d_s.forward(&fake_s)?)?;
    let cyc = cycle_from(s, r, &fake_r, &fake_s, m.g_sr, m.g_rs)?;
    let id = identity_loss(s, r, m.g_sr, m.g_rs)?;
    let total = adv_sr
        .add(&adv_rs)?
        .add(&cyc.scale(T::of(lambda_cyc)))?
        .add(&id.scale(T::of(lambda_id)))?;
    Ok(Objective {
        total,
        adv_sr,
        adv_rs,
        cyc,
        id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Identity;
    impl GeneratorNet<f64> for Identity {
        fn forward(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
            Ok(x.clone())
        }
    }

    struct Offset(f64);
    impl GeneratorNet<f64> for Offset {
        fn forward(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
            Ok(x.add_scalar(self.0))
        }
    }

    struct Negate;
    impl GeneratorNet<f64> for Negate {
        fn forward(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
            Ok(x.neg())
        }
    }

    struct Half;
    impl DiscriminatorNet<f64> for Half {
        fn forward(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
            let b = x.shape()[0];
            Ok(Tensor::new(vec![b, 1], vec![0.5; b])?)
        }
    }

    fn probs(v: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    fn signal(v: f64) -> Tensor<f64> {
        Tensor::new(vec![2, 1, 8], vec![v; 16]).unwrap()
    }

    #[test]
    fn adversarial_values() {
        let l = adversarial_loss(&probs(&[0.5, 0.5]), &probs(&[0.5])).unwrap().item();
        assert!((l - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        let l = adversarial_loss(&probs(&[0.9]), &probs(&[0.1])).unwrap().item();
        assert!((l - 2.0 * 0.9f64.ln()).abs() < 1e-12);
        let l = adversarial_loss(&probs(&[1.0 - 1e-12]), &probs(&[1e-12])).unwrap().item();
        assert!(l.abs() < 1e-9);
        assert!(adversarial_loss_strict(&probs(&[1.0]), &probs(&[0.5])).is_err());
    }

    #[test]
    fn identity_generators_zero_reconstruction_terms() {
        let (s, r) = (signal(0.3), signal(-0.2));
        assert_eq!(cycle_loss(&s, &r, &Identity, &Identity).unwrap().item(), 0.0);
        assert_eq!(identity_loss(&s, &r, &Identity, &Identity).unwrap().item(), 0.0);
    }

    #[test]
    fn offset_cycle_term() {
        let (s, r) = (signal(0.3), signal(-0.2));
        // G_RS(G_SR(s)) = s + 0.1 when G_SR = +0.1 and G_RS = identity
        let first = l1(&Identity.forward(&Offset(0.1).forward(&s).unwrap()).unwrap(), &s).unwrap();
        assert!((first.item() - 0.1).abs() < 1e-12);
        assert!(cycle_loss(&s, &r, &Offset(0.1), &Identity).unwrap().item() >= 0.0);
    }

    #[test]
    fn negating_generator_identity_term() {
        let s = signal(0.0);
        let r = signal(1.0);
        let l = identity_loss(&s, &r, &Negate, &Identity).unwrap().item();
        assert!((l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn objective_composition() {
        let (s, r) = (signal(0.3), signal(-0.2));
        let m = Models {
            g_sr: &Identity,
            g_rs: &Identity,
            d_r: &Half,
            d_s: &Half,
        };
        let o = full_objective(&s, &r, &m, 10.0, 5.0).unwrap().metrics();
        assert!((o.total - 4.0 * 0.5f64.ln()).abs() < 1e-12);
        let m2 = Models { g_sr: &Offset(0.1), ..m };
        let o = full_objective(&s, &r, &m2, 10.0, 5.0).unwrap().metrics();
        let recomposed = o.adv_sr + o.adv_rs + 10.0 * o.cyc + 5.0 * o.id;
        assert!((o.total - recomposed).abs() < 1e-12);
        let z = full_objective(&s, &r, &m2, 0.0, 0.0).unwrap().metrics();
        assert_eq!(z.total, z.adv_sr + z.adv_rs);
        assert_eq!(z.adv_sr, o.adv_sr);
    }
}
