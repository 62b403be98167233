//! Random GP draws on a finite joint grid and uniform unit-ball samples.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algorithms::JointInputs;
use crate::domain::{Normalization, PayoffTable};
use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelSpec, JITTER};

const MAX_SAMPLE_JITTER: f64 = 1e-2;

/// One draw of `f ~ GP(0, k)` on the joint grid, before and after the affine
/// map onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub raw: PayoffTable,
    pub table: PayoffTable,
    pub normalization: Normalization,
}

/// Lower-triangular `L` with `L Lᵀ = K + jI` for the Gram matrix of `points`.
/// Starts at [`JITTER`] and multiplies by ten until the factorization succeeds.
pub fn covariance_factor(kernel: &KernelSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::domain("cannot sample on an empty grid"));
    }
    let gram = kernel.gram(points)?;
    let n = gram.nrows();
    let mut jitter = JITTER;
    while jitter <= MAX_SAMPLE_JITTER {
        let k = &gram + DMatrix::identity(n, n) * jitter;
        if let Some(chol) = k.cholesky() {
            return Ok(chol.l());
        }
        jitter *= 10.0;
    }
    Err(Error::numeric("Gram matrix is not positive definite even with jitter"))
}

/// One term `weight · Π factors` of a kernel expanded into a sum of products.
struct ProductTerm {
    weight: f64,
    factors: Vec<KernelSpec>,
}

fn expand(k: &KernelSpec) -> Vec<ProductTerm> {
    match k.kind() {
        KernelKind::Sum(a, b) => expand(a)
            .into_iter()
            .chain(expand(b))
            .map(|t| ProductTerm {
                weight: 0.5 * t.weight,
                factors: t.factors,
            })
            .collect(),
        KernelKind::Product(a, b) => {
            let right = expand(b);
            let mut out = Vec::new();
            for l in expand(a) {
                for r in &right {
                    let mut factors = l.factors.clone();
                    factors.extend(r.factors.iter().cloned());
                    out.push(ProductTerm {
                        weight: l.weight * r.weight,
                        factors,
                    });
                }
            }
            out
        }
        _ => vec![ProductTerm {
            weight: 1.0,
            factors: vec![k.clone()],
        }],
    }
}

/// Writes the kernel as `Σ_j w_j k^x_j ⊗ k^θ_j`, returning per term the weight
/// and the factors reading only `x` and only `θ`. `None` if some factor
/// straddles both blocks.
fn kronecker_split(kernel: &KernelSpec, x_dim: usize) -> Option<Vec<(f64, Vec<KernelSpec>, Vec<KernelSpec>)>> {
    expand(kernel)
        .into_iter()
        .map(|term| {
            let (mut xs, mut thetas) = (Vec::new(), Vec::new());
            for f in term.factors {
                let s = f.slice();
                if s.end <= x_dim {
                    xs.push(f);
                } else if s.start >= x_dim {
                    thetas.push(f);
                } else {
                    return None;
                }
            }
            Some((term.weight, xs, thetas))
        })
        .collect()
}

fn factor_gram(factors: &[KernelSpec], points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = points.len();
    let mut gram = DMatrix::from_element(n, n, 1.0);
    for f in factors {
        gram.component_mul_assign(&f.gram(points)?);
    }
    Ok(gram)
}

fn jittered_factor(gram: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = gram.nrows();
    let mut jitter = JITTER;
    while jitter <= MAX_SAMPLE_JITTER {
        if let Some(chol) = (&gram + DMatrix::identity(n, n) * jitter).cholesky() {
            return Ok(chol.l());
        }
        jitter *= 10.0;
    }
    Err(Error::numeric("Gram matrix is not positive definite even with jitter"))
}

/// Draws `f ~ GP(0, k)` on the `x_points × θ_points` product grid (row `x`,
/// column `θ`), where the joint input is `x` followed by `θ`.
///
/// When `k` expands into a sum of products whose factors each read only `x`
/// or only `θ`, the covariance is a sum of Kronecker products and the draw is
/// `Σ_j √w_j L^x_j Z_j (L^θ_j)ᵀ` with independent `Z_j`, far cheaper than
/// factoring the full Gram matrix. Otherwise the joint Gram matrix is factored.
pub fn sample_gp_function(
    kernel: &KernelSpec,
    x_points: &[Vec<f64>],
    theta_points: &[Vec<f64>],
    seed: u64,
) -> Result<SampledFunction> {
    let (n, m) = (x_points.len(), theta_points.len());
    if n == 0 || m == 0 {
        return Err(Error::domain("cannot sample on an empty grid"));
    }
    let x_dim = x_points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normals = || DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));

    let values = match kronecker_split(kernel, x_dim) {
        Some(terms) => {
            // Factors on θ read absolute slices, so pad θ with the x prefix.
            let padded: Vec<Vec<f64>> = theta_points
                .iter()
                .map(|t| {
                    let mut v = x_points[0].clone();
                    v.extend_from_slice(t);
                    v
                })
                .collect();
            let mut total = DMatrix::zeros(n, m);
            for (weight, xs, thetas) in terms {
                let lx = jittered_factor(factor_gram(&xs, x_points)?)?;
                let lt = jittered_factor(factor_gram(&thetas, &padded)?)?;
                total += (lx * normals() * lt.transpose()) * weight.sqrt();
            }
            total
        }
        None => {
            let z = normals();
            let joint: Vec<Vec<f64>> = x_points
                .iter()
                .flat_map(|x| {
                    theta_points.iter().map(move |t| {
                        let mut v = x.clone();
                        v.extend_from_slice(t);
                        v
                    })
                })
                .collect();
            let l = covariance_factor(kernel, &joint)?;
            // Row-major flattening of z matches the x * m + i joint order.
            let flat = DVector::from_iterator(n * m, (0..n).flat_map(|x| (0..m).map(move |i| (x, i))).map(|(x, i)| z[(x, i)]));
            let f = l * flat;
            DMatrix::from_fn(n, m, |x, i| f[x * m + i])
        }
    };

    let raw = PayoffTable::from_fn(n, m, |x, i| values[(x, i)])?;
    let (table, normalization) = raw.normalized();
    Ok(SampledFunction {
        raw,
        table,
        normalization,
    })
}

/// Draws the joint GP sample directly from a factor and a standard-normal
/// vector; `f = L z`. Exposed so relabelling can be checked with a shared `z`.
pub fn draw_with_factor(factor: &DMatrix<f64>, normals: &[f64]) -> Result<Vec<f64>> {
    if normals.len() != factor.ncols() {
        return Err(Error::Dimension {
            expected: factor.ncols(),
            got: normals.len(),
        });
    }
    Ok((factor * DVector::from_column_slice(normals)).iter().copied().collect())
}

/// `n` i.i.d. points uniform in the `dim`-dimensional unit ball: a Gaussian
/// direction scaled by `U^{1/dim}`.
pub fn sample_unit_ball(n: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            continue;
        }
        let radius = rng.random::<f64>().powf(1.0 / dim as f64);
        out.push(dir.iter().map(|v| v / norm * radius).collect());
    }
    Ok(out)
}

/// Joint inputs for a product grid; convenience over [`JointInputs::from_fn`].
pub fn joint_inputs(x_points: &[Vec<f64>], theta_points: &[Vec<f64>]) -> Result<JointInputs> {
    JointInputs::from_fn(x_points.len(), theta_points.len(), |x, i| {
        let mut v = x_points[x].clone();
        v.extend_from_slice(&theta_points[i]);
        v
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![-1.0 + 2.0 * i as f64 / (n - 1) as f64]).collect()
    }

    #[test]
    fn deterministic_and_normalized() {
        let k = KernelSpec::product(KernelSpec::linear(0..1).unwrap(), KernelSpec::squared_exponential(0.2, 0..2).unwrap());
        let a = sample_gp_function(&k, &grid(12), &grid(5), 3).unwrap();
        let b = sample_gp_function(&k, &grid(12), &grid(5), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.table.min(), 0.0);
        assert_eq!(a.table.max(), 1.0);
    }

    #[test]
    fn kronecker_split_detects_structure() {
        let se = KernelSpec::product(
            KernelSpec::squared_exponential(0.3, 0..1).unwrap(),
            KernelSpec::squared_exponential(0.3, 1..2).unwrap(),
        );
        assert!(kronecker_split(&se, 1).is_some());
        let joint = KernelSpec::squared_exponential(0.3, 0..2).unwrap();
        assert!(kronecker_split(&joint, 1).is_none());
    }

    #[test]
    fn ball_points_inside() {
        let pts = sample_unit_ball(500, 3, 1).unwrap();
        assert!(pts.iter().all(|p| p.iter().map(|v| v * v).sum::<f64>() <= 1.0));
        assert_eq!(pts, sample_unit_ball(500, 3, 1).unwrap());
    }
}
