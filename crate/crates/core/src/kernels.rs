//! Covariance functions on the joint decision-parameter space.
//!
//! Every kernel reads a contiguous slice of the joint input vector, so a
//! composite such as `k_lin(x) * k_se(x, θ)` is expressed by giving each child
//! its own slice. All kernels are rescaled so that `k(z, z) <= 1`:
//! linear inputs are projected into the unit ball and sums are halved.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Diagonal jitter added to Gram matrices before factorization.
pub const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    Linear,
    SquaredExponential { lengthscale: f64 },
    Matern { nu: f64, lengthscale: f64 },
    Sum(Box<KernelSpec>, Box<KernelSpec>),
    Product(Box<KernelSpec>, Box<KernelSpec>),
}

/// A kernel together with the slice of the joint input it reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct KernelSpec {
    kind: KernelKind,
    slice: Range<usize>,
}

impl KernelSpec {
    pub fn linear(slice: Range<usize>) -> Result<Self> {
        Self::leaf(KernelKind::Linear, slice)
    }

    pub fn squared_exponential(lengthscale: f64, slice: Range<usize>) -> Result<Self> {
        check_positive("lengthscale", lengthscale)?;
        Self::leaf(KernelKind::SquaredExponential { lengthscale }, slice)
    }

    pub fn matern(nu: f64, lengthscale: f64, slice: Range<usize>) -> Result<Self> {
        check_positive("nu", nu)?;
        check_positive("lengthscale", lengthscale)?;
        Self::leaf(KernelKind::Matern { nu, lengthscale }, slice)
    }

    /// `(left + right) / 2`, reading the union of both children's slices.
    pub fn sum(left: KernelSpec, right: KernelSpec) -> Self {
        let slice = hull(&left.slice, &right.slice);
        Self {
            kind: KernelKind::Sum(Box::new(left), Box::new(right)),
            slice,
        }
    }

    pub fn product(left: KernelSpec, right: KernelSpec) -> Self {
        let slice = hull(&left.slice, &right.slice);
        Self {
            kind: KernelKind::Product(Box::new(left), Box::new(right)),
            slice,
        }
    }

    fn leaf(kind: KernelKind, slice: Range<usize>) -> Result<Self> {
        if slice.start >= slice.end {
            return Err(Error::domain(format!("empty kernel slice {slice:?}")));
        }
        Ok(Self { kind, slice })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn slice(&self) -> Range<usize> {
        self.slice.clone()
    }

    /// Smallest joint-input dimension this kernel can read.
    pub fn input_dim(&self) -> usize {
        self.slice.end
    }

    /// `k(z, z')`. Both inputs must have the same length, covering the slice.
    pub fn eval(&self, z: &[f64], z2: &[f64]) -> Result<f64> {
        if z.len() != z2.len() {
            return Err(Error::Dimension {
                expected: z.len(),
                got: z2.len(),
            });
        }
        if z.len() < self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: z.len(),
            });
        }
        Ok(self.eval_unchecked(z, z2))
    }

    /// Same as [`eval`](Self::eval) without dimension checks, for hot loops
    /// that validated their inputs once.
    pub fn eval_unchecked(&self, z: &[f64], z2: &[f64]) -> f64 {
        let a = &z[self.slice.clone()];
        let b = &z2[self.slice.clone()];
        match &self.kind {
            KernelKind::Linear => {
                let sa = unit_ball_scale(a);
                let sb = unit_ball_scale(b);
                a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>() * (sa * sb)
            }
            KernelKind::SquaredExponential { lengthscale } => {
                (-0.5 * squared_distance(a, b) / (lengthscale * lengthscale)).exp()
            }
            KernelKind::Matern { nu, lengthscale } => matern(*nu, squared_distance(a, b).sqrt() / lengthscale),
            KernelKind::Sum(l, r) => 0.5 * (l.eval_unchecked(z, z2) + r.eval_unchecked(z, z2)),
            KernelKind::Product(l, r) => l.eval_unchecked(z, z2) * r.eval_unchecked(z, z2),
        }
    }

    /// Gram matrix over `points`, exactly symmetric.
    pub fn gram(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let n = points.len();
        if let Some(p) = points.iter().find(|p| p.len() != points[0].len()) {
            return Err(Error::Dimension {
                expected: points[0].len(),
                got: p.len(),
            });
        }
        if let Some(p) = points.first() {
            if p.len() < self.input_dim() {
                return Err(Error::Dimension {
                    expected: self.input_dim(),
                    got: p.len(),
                });
            }
        }
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.eval_unchecked(&points[i], &points[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("kernel {name} must be positive, got {v}")))
    }
}

fn hull(a: &Range<usize>, b: &Range<usize>) -> Range<usize> {
    a.start.min(b.start)..a.end.max(b.end)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn unit_ball_scale(a: &[f64]) -> f64 {
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1.0 {
        1.0 / norm
    } else {
        1.0
    }
}

/// Matérn correlation at scaled distance `d = r / l`.
pub fn matern(nu: f64, d: f64) -> f64 {
    if d == 0.0 {
        return 1.0;
    }
    if nu == 0.5 {
        (-d).exp()
    } else if nu == 1.5 {
        let s = 3f64.sqrt() * d;
        (1.0 + s) * (-s).exp()
    } else if nu == 2.5 {
        let s = 5f64.sqrt() * d;
        (1.0 + s + s * s / 3.0) * (-s).exp()
    } else {
        matern_general(nu, d)
    }
}

/// `2^{1-ν} / Γ(ν) · s^ν · K_ν(s)` with `s = √(2ν) d`.
pub fn matern_general(nu: f64, d: f64) -> f64 {
    if d == 0.0 {
        return 1.0;
    }
    let s = (2.0 * nu).sqrt() * d;
    let log_prefactor = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu) + nu * s.ln();
    let k = bessel_k(nu, s);
    if k == 0.0 {
        return 0.0;
    }
    (log_prefactor + k.ln()).exp().min(1.0)
}

/// Modified Bessel function of the second kind `K_ν(x)` for `x > 0`, from
/// `K_ν(x) = ∫_0^∞ exp(-x cosh t) cosh(ν t) dt`.
///
/// The integrand is analytic and decays double-exponentially, so the
/// trapezoid rule converges geometrically in the step size.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let nu = nu.abs();
    let exponent = |t: f64| -x * t.cosh() + nu * t;
    // Integrate until the integrand is 1e-17 of its peak at sinh(t) = ν / x.
    let peak = exponent((nu / x).asinh());
    let mut t_max = (nu / x).asinh() + 1.0;
    while exponent(t_max) > peak - 40.0 {
        t_max += 0.5;
    }
    let h = 0.005_f64.min(t_max / 200.0);
    let steps = (t_max / h).ceil() as usize;
    let integrand = |t: f64| (-x * t.cosh() + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
    let mut acc = 0.5 * integrand(0.0);
    for k in 1..=steps {
        acc += integrand(k as f64 * h);
    }
    acc * h
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KernelRepr {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lengthscale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    slice: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    children: Option<Vec<KernelRepr>>,
}

impl TryFrom<KernelRepr> for KernelSpec {
    type Error = Error;

    fn try_from(r: KernelRepr) -> Result<Self> {
        let slice = r.slice[0]..r.slice[1];
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Parse(format!("{} kernel needs `{name}`", r.kind)));
        match r.kind.as_str() {
            "linear" => KernelSpec::linear(slice),
            "se" | "squared_exponential" => KernelSpec::squared_exponential(need(r.lengthscale, "lengthscale")?, slice),
            "matern" => KernelSpec::matern(need(r.nu, "nu")?, need(r.lengthscale, "lengthscale")?, slice),
            "sum" | "product" => {
                let children = r.children.unwrap_or_default();
                let [left, right]: [KernelRepr; 2] = children
                    .try_into()
                    .map_err(|_| Error::Parse(format!("{} kernel needs exactly two children", r.kind)))?;
                let (left, right) = (KernelSpec::try_from(left)?, KernelSpec::try_from(right)?);
                for child in [&left, &right] {
                    if child.slice.start < slice.start || child.slice.end > slice.end {
                        return Err(Error::domain(format!(
                            "child slice {:?} escapes parent slice {slice:?}",
                            child.slice
                        )));
                    }
                }
                let mut spec = if r.kind == "sum" {
                    KernelSpec::sum(left, right)
                } else {
                    KernelSpec::product(left, right)
                };
                spec.slice = slice;
                Ok(spec)
            }
            other => Err(Error::Parse(format!("unknown kernel type `{other}`"))),
        }
    }
}

impl From<KernelSpec> for KernelRepr {
    fn from(k: KernelSpec) -> Self {
        let name = k.kind_name();
        let slice = [k.slice.start, k.slice.end];
        let leaf = |kind: &str, lengthscale, nu| KernelRepr {
            kind: kind.to_string(),
            lengthscale,
            nu,
            slice,
            children: None,
        };
        match k.kind {
            KernelKind::Linear => leaf("linear", None, None),
            KernelKind::SquaredExponential { lengthscale } => leaf("se", Some(lengthscale), None),
            KernelKind::Matern { nu, lengthscale } => leaf("matern", Some(lengthscale), Some(nu)),
            KernelKind::Sum(l, r) | KernelKind::Product(l, r) => KernelRepr {
                kind: name.to_string(),
                lengthscale: None,
                nu: None,
                slice,
                children: Some(vec![(*l).into(), (*r).into()]),
            },
        }
    }
}

impl KernelSpec {
    fn kind_name(&self) -> &'static str {
        match self.kind {
            KernelKind::Linear => "linear",
            KernelKind::SquaredExponential { .. } => "se",
            KernelKind::Matern { .. } => "matern",
            KernelKind::Sum(..) => "sum",
            KernelKind::Product(..) => "product",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn se_values() {
        let k = KernelSpec::squared_exponential(1.0, 0..2).unwrap();
        assert_eq!(k.eval(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        let v = k.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn linear_dot_product_inside_unit_ball() {
        // Linear inputs are projected to the unit ball; inside it the kernel is
        // the plain dot product.
        let k = KernelSpec::linear(0..2).unwrap();
        assert!((k.eval(&[0.1, 0.2], &[0.3, 0.4]).unwrap() - 0.11).abs() < 1e-15);
        let far = k.eval(&[3.0, 4.0], &[3.0, 4.0]).unwrap();
        assert!((far - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_raw_dot_product_is_eleven_before_projection() {
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let raw: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
        assert_eq!(raw, 11.0);
        let k = KernelSpec::linear(0..2).unwrap();
        let projected = raw / (5f64.sqrt() * 5.0);
        assert!((k.eval(&a, &b).unwrap() - projected).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = KernelSpec::squared_exponential(1.0, 0..3).unwrap();
        assert!(matches!(k.eval(&[0.0, 1.0], &[0.0, 1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(k.eval(&[0.0; 3], &[0.0; 4]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(KernelSpec::squared_exponential(0.0, 0..1).is_err());
        assert!(KernelSpec::matern(-1.0, 1.0, 0..1).is_err());
        assert!(KernelSpec::linear(1..1).is_err());
    }

    #[test]
    fn general_matern_agrees_with_closed_forms() {
        for nu in [0.5, 1.5, 2.5] {
            for d in [1e-3, 0.1, 0.5, 1.0, 2.0, 5.0] {
                let closed = matern(nu, d);
                let general = matern_general(nu, d);
                assert!((closed - general).abs() < 1e-10, "nu={nu} d={d}: {closed} vs {general}");
            }
        }
    }

    #[test]
    fn composite_is_arithmetic_of_children() {
        let a = KernelSpec::squared_exponential(0.7, 0..1).unwrap();
        let b = KernelSpec::matern(2.5, 0.4, 1..3).unwrap();
        let z = [0.2, -0.3, 0.9];
        let w = [-0.5, 0.1, 0.4];
        let (ka, kb) = (a.eval(&z, &w).unwrap(), b.eval(&z, &w).unwrap());
        let s = KernelSpec::sum(a.clone(), b.clone());
        let p = KernelSpec::product(a, b);
        assert_eq!(s.eval(&z, &w).unwrap(), 0.5 * (ka + kb));
        assert_eq!(p.eval(&z, &w).unwrap(), ka * kb);
        assert_eq!(s.slice(), 0..3);
    }

    #[test]
    fn gram_small_cases() {
        let k = KernelSpec::squared_exponential(1.0, 0..1).unwrap();
        assert_eq!(k.gram(&[vec![0.5]]).unwrap(), DMatrix::from_element(1, 1, 1.0));
        assert_eq!(k.gram(&[vec![0.5], vec![0.5]]).unwrap(), DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn serde_round_trip() {
        let k = KernelSpec::product(
            KernelSpec::linear(0..1).unwrap(),
            KernelSpec::sum(
                KernelSpec::squared_exponential(0.2, 0..2).unwrap(),
                KernelSpec::matern(2.5, 0.3, 1..2).unwrap(),
            ),
        );
        let json = serde_json::to_string(&k).unwrap();
        assert!(json.contains("\"type\":\"product\""));
        let back: KernelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, k);
        let bad = r#"{"type":"sum","slice":[0,1],"children":[{"type":"linear","slice":[0,2]},{"type":"linear","slice":[0,1]}]}"#;
        assert!(serde_json::from_str::<KernelSpec>(bad).is_err());
    }

    fn any_kernel() -> impl Strategy<Value = KernelSpec> {
        let leaf = prop_oneof![
            Just(KernelSpec::linear(0..2).unwrap()),
            (0.05f64..3.0).prop_map(|l| KernelSpec::squared_exponential(l, 0..3).unwrap()),
            (prop_oneof![Just(0.5), Just(1.5), Just(2.5), 0.3f64..4.0], 0.05f64..3.0)
                .prop_map(|(nu, l)| KernelSpec::matern(nu, l, 1..3).unwrap()),
        ];
        leaf.prop_recursive(2, 6, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| KernelSpec::sum(a, b)),
                (inner.clone(), inner).prop_map(|(a, b)| KernelSpec::product(a, b)),
            ]
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(k in any_kernel(),
                                 z in prop::collection::vec(-2.0f64..2.0, 3),
                                 w in prop::collection::vec(-2.0f64..2.0, 3)) {
            prop_assert_eq!(k.eval(&z, &w).unwrap(), k.eval(&w, &z).unwrap());
            prop_assert!(k.eval(&z, &z).unwrap() <= 1.0 + 1e-12);
        }
    }
}
