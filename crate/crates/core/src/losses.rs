//! Loss terms of the adaptation objective and their weighted composition.
//!
//! All functions take tensors of any float dtype and return scalar tensors,
//! so they differentiate through candle's autograd. ℓ1 terms are means over
//! elements. Adversarial terms follow the relativistic average form with
//! `g(x) = log σ(x)` and `h(x) = log(1 − σ(x))`, computed through stable
//! log-sigmoid identities.

use std::collections::BTreeMap;
use std::fmt;

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor on cosine denominators.
pub const COSINE_EPS: f64 = 1e-12;

/// `log σ(x) = −(relu(−x) + log(1 + e^{−|x|}))`.
pub fn log_sigmoid(x: &Tensor) -> Result<Tensor> {
    let tail = ((x.abs()?.neg()?.exp()? + 1.0)?).log()?;
    Ok((x.neg()?.relu()? + tail)?.neg()?)
}

/// Mean cross-entropy of `(N, K)` logits against integer labels.
pub fn cls_loss(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape {
            context: "cls_loss(labels)",
            expected: vec![n],
            actual: vec![labels.len()],
        });
    }
    if n == 0 {
        return Err(Error::Argument("cls_loss on an empty batch".into()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Label { label, classes: k });
    }
    let max = logits.max_keepdim(1)?.detach();
    let shifted = logits.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(1)?.log()?;
    let log_probs = shifted.broadcast_sub(&lse)?;
    let idx: Vec<u32> = labels.iter().map(|&l| l as u32).collect();
    let idx = Tensor::from_vec(idx, (n, 1), logits.device())?;
    Ok(log_probs.gather(&idx, 1)?.mean_all()?.neg()?)
}

/// Mean absolute difference of two equally shaped tensors.
pub fn l1_mean(a: &Tensor, b: &Tensor, context: &'static str) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(Error::Shape {
            context,
            expected: a.dims().to_vec(),
            actual: b.dims().to_vec(),
        });
    }
    Ok((a - b)?.abs()?.mean_all()?)
}

/// Reconstruction and cycle terms of the decoder objective:
/// `|G(E_f(y_f)) − y_f| + |fake − G(E_cont(fake))| + |y_e − G(E_cont(y_e))|`.
pub fn decoder_loss(
    recon_frame: &Tensor,
    y_f: &Tensor,
    fake: &Tensor,
    recon_fake: &Tensor,
    y_e: &Tensor,
    recon_event: &Tensor,
) -> Result<Tensor> {
    let a = l1_mean(recon_frame, y_f, "decoder_loss(frame)")?;
    let b = l1_mean(fake, recon_fake, "decoder_loss(fake)")?;
    let c = l1_mean(y_e, recon_event, "decoder_loss(event)")?;
    Ok(((a + b)? + c)?)
}

/// `|E_f(y_f) − E_cont(fake)|`.
pub fn cycle_content_loss(z_frame: &Tensor, z_fake: &Tensor) -> Result<Tensor> {
    l1_mean(z_frame, z_fake, "cycle_content_loss")
}

/// `|E_att(y_e) − E_att(fake)|`.
pub fn cycle_attribute_loss(a_real: &Tensor, a_fake: &Tensor) -> Result<Tensor> {
    l1_mean(a_real, a_fake, "cycle_attribute_loss")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversarialRole {
    /// `mean g(a − mean b) + mean h(b − mean a)`.
    Discriminator,
    /// `mean h(a − mean b) + mean g(b − mean a)`.
    Generator,
}

/// Relativistic average log-likelihood of logits `a` (treated as real) and
/// `b` (treated as fake). Values are ≤ 0; each player maximizes its own form.
pub fn relativistic_pair(a: &Tensor, b: &Tensor, role: AdversarialRole) -> Result<Tensor> {
    let n = a.dims1()?;
    if b.dims1()? != n {
        return Err(Error::Shape {
            context: "relativistic_pair",
            expected: vec![n],
            actual: b.dims().to_vec(),
        });
    }
    if n == 0 {
        return Err(Error::Argument("relativistic_pair on an empty batch".into()));
    }
    let a_rel = a.broadcast_sub(&b.mean_all()?)?;
    let b_rel = b.broadcast_sub(&a.mean_all()?)?;
    // h(x) = log(1 − σ(x)) = log σ(−x)
    let (first, second) = match role {
        AdversarialRole::Discriminator => (log_sigmoid(&a_rel)?, log_sigmoid(&b_rel.neg()?)?),
        AdversarialRole::Generator => (log_sigmoid(&a_rel.neg()?)?, log_sigmoid(&b_rel)?),
    };
    Ok((first.mean_all()? + second.mean_all()?)?)
}

/// Negated [`relativistic_pair`]: the quantity an optimizer minimizes.
pub fn adversarial_loss(a: &Tensor, b: &Tensor, role: AdversarialRole) -> Result<Tensor> {
    Ok(relativistic_pair(a, b, role)?.neg()?)
}

/// `β Σ_W ‖WᵀW ⊙ (1 − I)‖²_F` over 2-D weights of shape `(out, fan_in)`.
///
/// Wide matrices use `‖WWᵀ‖²_F − Σ_j ‖w_j‖⁴` (column norms `w_j`), which is
/// the same quantity computed through the smaller Gram matrix.
pub fn orth_loss(weights: &[Tensor], beta: f64) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for w in weights {
        let (rows, cols) = w.dims2()?;
        let term = if cols <= rows {
            let gram = w.t()?.matmul(w)?;
            let mask = (Tensor::ones((cols, cols), w.dtype(), w.device())?
                - Tensor::eye(cols, w.dtype(), w.device())?)?;
            (gram * mask)?.sqr()?.sum_all()?
        } else {
            let gram = w.matmul(&w.t()?)?;
            let col_norms = w.sqr()?.sum(0)?;
            (gram.sqr()?.sum_all()? - col_norms.sqr()?.sum_all()?)?
        };
        total = Some(match total {
            Some(t) => (t + term)?,
            None => term,
        });
    }
    match total {
        Some(t) => Ok((t * beta)?),
        None => Ok(Tensor::zeros((), DType::F32, &Device::Cpu)?),
    }
}

fn as_rows(v: &Tensor) -> Result<Tensor> {
    match v.rank() {
        1 => Ok(v.unsqueeze(0)?),
        2 => Ok(v.clone()),
        r => Err(Error::Argument(format!(
            "projection vectors must be rank 1 or 2, got rank {r}"
        ))),
    }
}

/// Row-wise cosine similarity of `(N, D)` (or `(D,)`) tensors. Rows with an
/// exactly zero norm are rejected.
pub fn cosine_rows(a: &Tensor, b: &Tensor, context: &'static str) -> Result<Tensor> {
    let (a, b) = (as_rows(a)?, as_rows(b)?);
    if a.dims() != b.dims() {
        return Err(Error::Shape {
            context,
            expected: a.dims().to_vec(),
            actual: b.dims().to_vec(),
        });
    }
    let na = a.sqr()?.sum(1)?.sqrt()?;
    let nb = b.sqr()?.sum(1)?.sqrt()?;
    for n in [&na, &nb] {
        let vals: Vec<f64> = n.to_dtype(DType::F64)?.to_vec1()?;
        if vals.contains(&0.0) {
            return Err(Error::Degenerate(context));
        }
    }
    let dot = (&a * &b)?.sum(1)?;
    let denom = (na * nb)?.maximum(COSINE_EPS)?;
    Ok((dot / denom)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfSupMetric {
    /// Negative cosine similarity.
    Cos,
    /// Squared Euclidean distance.
    L2,
}

/// Augmentation-invariance penalty `−cos(v_a, v_b)`, averaged over rows.
pub fn selfsup_loss(v_a: &Tensor, v_b: &Tensor) -> Result<Tensor> {
    Ok(cosine_rows(v_a, v_b, "selfsup_loss")?.mean_all()?.neg()?)
}

pub fn selfsup_loss_with(v_a: &Tensor, v_b: &Tensor, metric: SelfSupMetric) -> Result<Tensor> {
    match metric {
        SelfSupMetric::Cos => selfsup_loss(v_a, v_b),
        SelfSupMetric::L2 => {
            let (a, b) = (as_rows(v_a)?, as_rows(v_b)?);
            if a.dims() != b.dims() {
                return Err(Error::Shape {
                    context: "selfsup_loss",
                    expected: a.dims().to_vec(),
                    actual: b.dims().to_vec(),
                });
            }
            Ok((a - b)?.sqr()?.sum(D::Minus1)?.mean_all()?)
        }
    }
}

/// Uncorrelated-conditioning penalty `|cos(v_att, v_cont)|`, averaged over rows.
pub fn uncorr_loss(v_att: &Tensor, v_cont: &Tensor) -> Result<Tensor> {
    Ok(cosine_rows(v_att, v_cont, "uncorr_loss")?.abs()?.mean_all()?)
}

/// Every term of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    ClsFrame,
    ClsFake,
    Decoder,
    CycCont,
    CycAtt,
    DisCont,
    EncCont,
    DisE,
    GenE,
    Orth,
    SelfsupFrame,
    SelfsupEventCont,
    SelfsupEventAtt,
    Uncorr,
}

impl Term {
    pub const ALL: [Term; 14] = [
        Term::ClsFrame,
        Term::ClsFake,
        Term::Decoder,
        Term::CycCont,
        Term::CycAtt,
        Term::DisCont,
        Term::EncCont,
        Term::DisE,
        Term::GenE,
        Term::Orth,
        Term::SelfsupFrame,
        Term::SelfsupEventCont,
        Term::SelfsupEventAtt,
        Term::Uncorr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::ClsFrame => "cls_frame",
            Term::ClsFake => "cls_fake",
            Term::Decoder => "decoder",
            Term::CycCont => "cyc_cont",
            Term::CycAtt => "cyc_att",
            Term::DisCont => "dis_cont",
            Term::EncCont => "enc_cont",
            Term::DisE => "dis_e",
            Term::GenE => "gen_e",
            Term::Orth => "orth",
            Term::SelfsupFrame => "selfsup_frame",
            Term::SelfsupEventCont => "selfsup_event_cont",
            Term::SelfsupEventAtt => "selfsup_event_att",
            Term::Uncorr => "uncorr",
        }
    }

    /// Terms optimized by the discriminators rather than the generator side.
    pub fn is_discriminator(self) -> bool {
        matches!(self, Term::DisCont | Term::DisE)
    }

    pub fn weight(self, w: &LossWeights) -> f64 {
        match self {
            Term::ClsFrame => w.cls_frame,
            Term::ClsFake => w.cls_fake,
            Term::Decoder => w.decoder,
            Term::CycCont => w.cyc_cont,
            Term::CycAtt => w.cyc_att,
            Term::DisCont => w.dis_cont,
            Term::EncCont => w.enc_cont,
            Term::DisE => w.dis_e,
            Term::GenE => w.gen_e,
            Term::Orth => w.orth,
            Term::SelfsupEventAtt => w.lambda1,
            Term::SelfsupEventCont => w.lambda2,
            Term::SelfsupFrame => w.lambda3,
            Term::Uncorr => w.lambda4,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Trade-off weights. `lambda1..=lambda4` weight the event-attribute,
/// event-content and frame invariance terms and the decorrelation term;
/// `beta` scales the orthogonality penalty; the rest weight one term each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub beta: f64,
    pub cls_frame: f64,
    pub cls_fake: f64,
    pub decoder: f64,
    pub cyc_cont: f64,
    pub cyc_att: f64,
    pub dis_cont: f64,
    pub enc_cont: f64,
    pub dis_e: f64,
    pub gen_e: f64,
    pub orth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            lambda4: 1.0,
            beta: 1e-4,
            cls_frame: 1.0,
            cls_fake: 1.0,
            decoder: 1.0,
            cyc_cont: 1.0,
            cyc_att: 1.0,
            dis_cont: 1.0,
            enc_cont: 1.0,
            dis_e: 1.0,
            gen_e: 1.0,
            orth: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [("beta", self.beta)]
            .into_iter()
            .chain(Term::ALL.iter().map(|t| (t.name(), t.weight(self))));
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "loss weight `{name}` must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Scalar loss tensors for the terms active in one step. Adversarial entries
/// hold the minimized (negated log-likelihood) form.
#[derive(Debug, Clone, Default)]
pub struct LossTerms {
    terms: BTreeMap<Term, Tensor>,
}

impl LossTerms {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, term: Term, value: Tensor) {
        self.terms.insert(term, value);
    }

    pub fn get(&self, term: Term) -> Option<&Tensor> {
        self.terms.get(&term)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Term, &Tensor)> {
        self.terms.iter().map(|(t, v)| (*t, v))
    }
}

/// Unweighted value of every active term plus the weighted total.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub terms: BTreeMap<Term, f64>,
    pub total: f64,
}

impl LossReport {
    pub fn get(&self, term: Term) -> Option<f64> {
        self.terms.get(&term).copied()
    }

    pub fn active_terms(&self) -> Vec<Term> {
        self.terms.keys().copied().collect()
    }

    /// CSV header cells: every term name, then `total`.
    pub fn csv_header() -> Vec<&'static str> {
        Term::ALL
            .iter()
            .map(|t| t.name())
            .chain(std::iter::once("total"))
            .collect()
    }

    /// CSV cells matching [`LossReport::csv_header`]; inactive terms are blank.
    pub fn csv_cells(&self) -> Vec<String> {
        Term::ALL
            .iter()
            .map(|t| self.get(*t).map(|v| format!("{v:e}")).unwrap_or_default())
            .chain(std::iter::once(format!("{:e}", self.total)))
            .collect()
    }

    /// Element-wise mean of several reports; a term is kept if any report has it.
    pub fn mean(reports: &[LossReport]) -> LossReport {
        let mut sums: BTreeMap<Term, (f64, usize)> = BTreeMap::new();
        let mut total = 0.0;
        for r in reports {
            for (t, v) in &r.terms {
                let e = sums.entry(*t).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
            total += r.total;
        }
        LossReport {
            terms: sums.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect(),
            total: if reports.is_empty() {
                0.0
            } else {
                total / reports.len() as f64
            },
        }
    }
}

/// Weighted sum of the supplied terms. Fails on the first term whose value
/// or weighted value is not finite.
pub fn total_loss(terms: &LossTerms, weights: &LossWeights) -> Result<(Tensor, LossReport)> {
    let mut report = LossReport::default();
    let mut total: Option<Tensor> = None;
    for (term, value) in terms.iter() {
        let v = value.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        let w = term.weight(weights);
        // the graph itself runs in the tensor dtype, usually f32
        let weighted_v = w * v;
        report.total += weighted_v;
        if !(v.is_finite() && (weighted_v as f32).is_finite() && report.total.is_finite()) {
            return Err(Error::NonFinite {
                term: term.name().to_string(),
            });
        }
        report.terms.insert(term, v);
        let weighted = (value * w)?;
        total = Some(match total {
            Some(t) => (t + weighted)?,
            None => weighted,
        });
    }
    let total = match total {
        Some(t) => t,
        None => Tensor::zeros((), DType::F32, &Device::Cpu)?,
    };
    Ok((total, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t64(v: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_vec(v.to_vec(), shape, &Device::Cpu).unwrap()
    }

    fn scalar(t: &Tensor) -> f64 {
        t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let logits = Tensor::zeros((4, 10), DType::F64, &Device::Cpu).unwrap();
        let l = scalar(&cls_loss(&logits, &[0, 3, 9, 5]).unwrap());
        assert_abs_diff_eq!(l, 10f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn confident_correct_logits_approach_zero() {
        let logits = t64(&[200.0, 0.0, 0.0, 0.0, 200.0, 0.0], &[2, 3]);
        assert!(scalar(&cls_loss(&logits, &[0, 1]).unwrap()) < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let logits = t64(&[0.0; 6], &[2, 3]);
        assert!(matches!(
            cls_loss(&logits, &[0, 3]),
            Err(Error::Label { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn decoder_loss_identity_and_offset() {
        let x = t64(&[0.1, 0.5, 0.9, 0.3], &[1, 1, 2, 2]);
        let zero = decoder_loss(&x, &x, &x, &x, &x, &x).unwrap();
        assert_eq!(scalar(&zero), 0.0);
        let shifted = (&x + 1.0).unwrap();
        let one = decoder_loss(&shifted, &x, &x, &x, &x, &x).unwrap();
        assert_abs_diff_eq!(scalar(&one), 1.0, epsilon = 1e-12);
        let bad = t64(&[0.0; 3], &[3]);
        assert!(decoder_loss(&x, &bad, &x, &x, &x, &x).is_err());
    }

    #[test]
    fn cycle_losses_offset() {
        let a = t64(&[1.0, -2.0, 3.0], &[3]);
        let b = (&a + 0.5).unwrap();
        assert_abs_diff_eq!(scalar(&cycle_content_loss(&a, &b).unwrap()), 0.5, epsilon = 1e-12);
        assert_eq!(scalar(&cycle_attribute_loss(&a, &a).unwrap()), 0.0);
    }

    #[test]
    fn relativistic_fixed_point_and_limit() {
        let c = t64(&[0.3; 5], &[5]);
        let v = scalar(&relativistic_pair(&c, &c, AdversarialRole::Discriminator).unwrap());
        assert_abs_diff_eq!(v, 2.0 * 0.5f64.ln(), epsilon = 1e-12);
        let a = t64(&[10.0; 4], &[4]);
        let b = t64(&[-10.0; 4], &[4]);
        let v = scalar(&relativistic_pair(&a, &b, AdversarialRole::Discriminator).unwrap());
        let expected = -2.0 * (1.0 + (-20f64).exp()).ln();
        assert_abs_diff_eq!(v, expected, epsilon = 1e-15);
        assert!((v + 4.12e-9).abs() < 1e-11);
    }

    #[test]
    fn relativistic_rejects_empty_and_mismatched() {
        let e = t64(&[], &[0]);
        assert!(relativistic_pair(&e, &e, AdversarialRole::Generator).is_err());
        let a = t64(&[1.0, 2.0], &[2]);
        let b = t64(&[1.0], &[1]);
        assert!(relativistic_pair(&a, &b, AdversarialRole::Generator).is_err());
    }

    #[test]
    fn orth_loss_reference_values() {
        let eye = Tensor::eye(5, DType::F64, &Device::Cpu).unwrap();
        assert_eq!(scalar(&orth_loss(&[eye], 1.0).unwrap()), 0.0);
        let w = t64(&[1.0, 1.0, 0.0, 1.0], &[2, 2]);
        assert_abs_diff_eq!(scalar(&orth_loss(&[w], 1.0).unwrap()), 2.0, epsilon = 1e-12);
        let wide = t64(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0], &[2, 3]);
        assert_eq!(scalar(&orth_loss(&[wide], 1.0).unwrap()), 0.0);
    }

    #[test]
    fn cosine_penalties() {
        let v = t64(&[1.0, 2.0, -1.0], &[3]);
        let w = t64(&[3.0, 6.0, -3.0], &[3]);
        assert_abs_diff_eq!(scalar(&selfsup_loss(&v, &v).unwrap()), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scalar(&selfsup_loss(&v, &w).unwrap()), -1.0, epsilon = 1e-12);
        let e1 = t64(&[1.0, 0.0], &[2]);
        let e2 = t64(&[0.0, 1.0], &[2]);
        assert_eq!(scalar(&selfsup_loss(&e1, &e2).unwrap()), 0.0);
        assert_eq!(scalar(&uncorr_loss(&e1, &e2).unwrap()), 0.0);
        assert_abs_diff_eq!(scalar(&uncorr_loss(&v, &v).unwrap()), 1.0, epsilon = 1e-12);
        let z = t64(&[0.0, 0.0], &[2]);
        assert!(matches!(selfsup_loss(&z, &e1), Err(Error::Degenerate(_))));
        assert!(matches!(uncorr_loss(&e1, &z), Err(Error::Degenerate(_))));
    }

    #[test]
    fn l2_metric() {
        let a = t64(&[1.0, 2.0], &[1, 2]);
        let b = t64(&[0.0, 0.0], &[1, 2]);
        assert_eq!(scalar(&selfsup_loss_with(&a, &b, SelfSupMetric::L2).unwrap()), 5.0);
    }

    #[test]
    fn total_loss_weighting() {
        let (t, r) = total_loss(&LossTerms::new(), &LossWeights::default()).unwrap();
        assert_eq!(scalar(&t), 0.0);
        assert_eq!(r.total, 0.0);

        let mut terms = LossTerms::new();
        terms.insert(Term::CycAtt, t64(&[0.75], &[]));
        let w = LossWeights {
            cyc_att: 2.0,
            ..LossWeights::default()
        };
        let (t, r) = total_loss(&terms, &w).unwrap();
        assert_eq!(scalar(&t), 1.5);
        assert_eq!(r.total, 1.5);
        assert_eq!(r.get(Term::CycAtt), Some(0.75));
        assert_eq!(r.get(Term::ClsFrame), None);
    }

    #[test]
    fn total_loss_names_non_finite_term() {
        let mut terms = LossTerms::new();
        terms.insert(Term::ClsFrame, t64(&[1.0], &[]));
        terms.insert(Term::Uncorr, t64(&[f64::NAN], &[]));
        match total_loss(&terms, &LossWeights::default()) {
            Err(Error::NonFinite { term }) => assert_eq!(term, "uncorr"),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn weights_reject_negative() {
        let w = LossWeights {
            lambda4: -1.0,
            ..LossWeights::default()
        };
        assert!(w.validate().is_err());
    }

    #[test]
    fn csv_cells_align_with_header() {
        let mut r = LossReport::default();
        r.terms.insert(Term::Orth, 0.5);
        r.total = 0.5;
        let cells = r.csv_cells();
        assert_eq!(cells.len(), LossReport::csv_header().len());
        assert_eq!(cells[9], "5e-1");
        assert_eq!(cells[0], "");
    }
}
