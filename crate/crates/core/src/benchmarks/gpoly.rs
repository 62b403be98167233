//! The degree-6 bivariate polynomial benchmark of Bertsimas, Nohadani and Teo
//! (2010), in maximization form: `g_poly = -f_poly`.
//!
//! Coefficients live in `data/gpoly.csv`, pinned by SHA-256 so an edited
//! table fails loudly instead of silently changing the benchmark.

use std::sync::OnceLock;

use sha2::{Digest, Sha256};

const COEFFICIENTS_CSV: &str = include_str!("../../data/gpoly.csv");
const COEFFICIENTS_SHA256: &str = "09a0ff4a07ebfb477750f97bec3fc7b6164aadc230ee424cc2a8875ebf2d8a68";

/// Decision box the benchmark is usually posed on.
pub const X1_RANGE: (f64, f64) = (-0.95, 3.2);
pub const X2_RANGE: (f64, f64) = (-0.45, 4.4);

/// One monomial `c · x^px · y^py` of `f_poly`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub x_power: i32,
    pub y_power: i32,
    pub coefficient: f64,
}

fn parse(csv_text: &str) -> Vec<Monomial> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    reader
        .records()
        .map(|r| {
            let r = r.expect("gpoly.csv is well formed");
            Monomial {
                x_power: r[0].parse().expect("x_power"),
                y_power: r[1].parse().expect("y_power"),
                coefficient: r[2].parse().expect("coefficient"),
            }
        })
        .collect()
}

/// Monomials of `f_poly`, verified against the pinned checksum on first use.
pub fn monomials() -> &'static [Monomial] {
    static TERMS: OnceLock<Vec<Monomial>> = OnceLock::new();
    TERMS.get_or_init(|| {
        let digest = hex::encode(Sha256::digest(COEFFICIENTS_CSV.as_bytes()));
        assert_eq!(digest, COEFFICIENTS_SHA256, "gpoly.csv does not match its pinned checksum");
        parse(COEFFICIENTS_CSV)
    })
}

/// `g_poly(x) = -f_poly(x_1, x_2)`.
pub fn g_poly(x: [f64; 2]) -> f64 {
    -monomials()
        .iter()
        .map(|m| m.coefficient * x[0].powi(m.x_power) * x[1].powi(m.y_power))
        .sum::<f64>()
}

/// Analytic gradient of `g_poly`.
pub fn g_poly_gradient(x: [f64; 2]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for m in monomials() {
        if m.x_power > 0 {
            g[0] -= m.coefficient * m.x_power as f64 * x[0].powi(m.x_power - 1) * x[1].powi(m.y_power);
        }
        if m.y_power > 0 {
            g[1] -= m.coefficient * m.y_power as f64 * x[0].powi(m.x_power) * x[1].powi(m.y_power - 1);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_terms_of_degree_at_most_six() {
        let terms = monomials();
        assert_eq!(terms.len(), 16);
        assert!(terms.iter().all(|m| m.x_power + m.y_power <= 6));
    }

    #[test]
    fn origin_is_zero() {
        assert_eq!(g_poly([0.0, 0.0]), 0.0);
    }
}
