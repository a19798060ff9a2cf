//! Clamped-clamped Euler buckling modes.
//!
//! The lateral displacement obeys `w'''' + n² w'' = 0` with `w = w' = 0` at
//! both ends. Nontrivial solutions exist when `u = nL` satisfies
//! `1 - cos u = (u/2) sin u`, which factors into `sin(u/2) = 0` (symmetric
//! family, `u = 2kπ`) and `tan(u/2) = u/2` (antisymmetric family). The two
//! families interleave, so mode 0 is the single arch, mode 1 the S-shape, and
//! so on.
//!
//! Shapes are scaled to unit peak displacement. A modal amplitude is then the
//! largest lateral excursion of that mode in meters.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Simpson;

/// Highest supported mode count.
pub const MAX_MODES: usize = 16;

/// Default number of Simpson intervals for Gram matrices.
pub const DEFAULT_QUADRATURE: usize = 4096;

/// Smallest accepted number of Simpson intervals.
pub const MIN_QUADRATURE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `1 - cos(n x)`, symmetric about midspan.
    Symmetric,
    /// `1 - cos(n x) - 2/(nL) (n x - sin(n x))`, antisymmetric about midspan.
    Antisymmetric,
}

/// `sin(u/2) - (u/2) cos(u/2)`: zero exactly on the antisymmetric roots, and
/// free of the poles of `tan(u/2) - u/2`.
fn odd_residual(u: f64) -> f64 {
    let h = 0.5 * u;
    h.sin() - h * h.cos()
}

fn odd_residual_slope(u: f64) -> f64 {
    // d/du [sin h - h cos h] with h = u/2 is (h sin h)/2.
    let h = 0.5 * u;
    0.5 * h * h.sin()
}

/// k-th antisymmetric root, k ≥ 1, bracketed in `(2kπ, (2k+1)π)`.
fn odd_root(k: usize) -> f64 {
    let (mut lo, mut hi) = (2.0 * k as f64 * PI, (2.0 * k as f64 + 1.0) * PI);
    let f_lo = odd_residual(lo);
    // Bisect until the bracket is small enough for Newton to be safe.
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if (odd_residual(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..50 {
        let step = odd_residual(u) / odd_residual_slope(u);
        let next = (u - step).clamp(lo, hi);
        if (next - u).abs() < 1e-15 * u {
            u = next;
            break;
        }
        u = next;
    }
    u
}

/// First `count` positive roots `u_i = n_i L` of `1 - cos u = (u/2) sin u`,
/// in increasing order, with their family.
pub fn solve_eigenvalues_with_family(count: usize) -> Result<Vec<(f64, Family)>> {
    if count == 0 {
        return Err(crate::error::invalid("count", "need at least one mode"));
    }
    if count > MAX_MODES {
        return Err(Error::TooManyModes {
            requested: count,
            cap: MAX_MODES,
        });
    }
    // Symmetric roots 2kπ and antisymmetric roots in (2kπ, (2k+1)π) alternate.
    Ok((0..count)
        .map(|i| {
            let k = i / 2 + 1;
            if i % 2 == 0 {
                (2.0 * k as f64 * PI, Family::Symmetric)
            } else {
                (odd_root(k), Family::Antisymmetric)
            }
        })
        .collect())
}

/// First `count` buckling roots `u_i = n_i L`.
pub fn solve_eigenvalues(count: usize) -> Result<Vec<f64>> {
    Ok(solve_eigenvalues_with_family(count)?
        .into_iter()
        .map(|(u, _)| u)
        .collect())
}

/// Residual of the characteristic equation, `1 - cos u - (u/2) sin u`.
pub fn characteristic_residual(u: f64) -> f64 {
    1.0 - u.cos() - 0.5 * u * u.sin()
}

/// Unnormalized shape and its first two derivatives with respect to the
/// dimensionless coordinate ξ = x/L.
fn raw_shape(family: Family, u: f64, xi: f64) -> [f64; 3] {
    let th = u * xi;
    let (s, c) = th.sin_cos();
    match family {
        Family::Symmetric => [1.0 - c, u * s, u * u * c],
        Family::Antisymmetric => {
            let k = 2.0 / u;
            [
                1.0 - c - k * (th - s),
                u * (s - k * (1.0 - c)),
                u * u * (c - k * s),
            ]
        }
    }
}

/// Peak of |raw shape| over [0, 1].
fn raw_peak(family: Family, u: f64) -> f64 {
    match family {
        Family::Symmetric => 2.0,
        Family::Antisymmetric => {
            const SAMPLES: usize = 4096;
            let f = |xi: f64| raw_shape(family, u, xi)[0].abs();
            let best = (0..=SAMPLES)
                .max_by(|&a, &b| {
                    f(a as f64 / SAMPLES as f64).total_cmp(&f(b as f64 / SAMPLES as f64))
                })
                .unwrap_or(0);
            // Golden-section refinement inside the neighbouring cells.
            let step = 1.0 / SAMPLES as f64;
            let mut lo = (best as f64 - 1.0).max(0.0) * step;
            let mut hi = (best as f64 + 1.0).min(SAMPLES as f64) * step;
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let mut x1 = hi - g * (hi - lo);
            let mut x2 = lo + g * (hi - lo);
            let (mut f1, mut f2) = (f(x1), f(x2));
            while hi - lo > 1e-13 {
                if f1 < f2 {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + g * (hi - lo);
                    f2 = f(x2);
                } else {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - g * (hi - lo);
                    f1 = f(x1);
                }
            }
            f(0.5 * (lo + hi))
        }
    }
}

/// A single normalized buckling mode on a beam of given length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub root: f64,
    pub family: Family,
    pub length: f64,
    scale: f64,
}

impl Mode {
    pub fn new(root: f64, family: Family, length: f64) -> Self {
        Self {
            root,
            family,
            length,
            scale: 1.0 / raw_peak(family, root),
        }
    }

    /// Wavenumber n = u / L (1/m).
    pub fn wavenumber(&self) -> f64 {
        self.root / self.length
    }

    /// Shape φ(x), slope φ'(x) and curvature φ''(x) at `x` in meters.
    /// No domain check; callers validate.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        let [f, d1, d2] = raw_shape(self.family, self.root, x / self.length);
        let l = self.length;
        [
            self.scale * f,
            self.scale * d1 / l,
            self.scale * d2 / (l * l),
        ]
    }
}

/// Buckling eigenvalues, normalized shapes sampled on a Simpson grid, and the
/// Gram matrices of slopes, curvatures and displacements.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    length: f64,
    modes: Vec<Mode>,
    quad: Simpson,
    /// `shapes[i][k] = φ_i(x_k)`.
    shapes: Vec<Vec<f64>>,
    gram_slope: DMatrix<f64>,
    gram_curvature: DMatrix<f64>,
    gram_mass: DMatrix<f64>,
}

impl ModeBasis {
    pub fn new(length: f64, count: usize) -> Result<Self> {
        Self::with_quadrature(length, count, DEFAULT_QUADRATURE)
    }

    /// Build a basis of `count` modes using `intervals` Simpson intervals.
    pub fn with_quadrature(length: f64, count: usize, intervals: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(crate::error::invalid("length", "must be positive"));
        }
        if intervals < MIN_QUADRATURE {
            return Err(crate::error::invalid(
                "quadrature_points",
                format!("{intervals} below minimum {MIN_QUADRATURE}"),
            ));
        }
        let roots = solve_eigenvalues_with_family(count)?;
        let quad = Simpson::new(length, intervals)?;
        let modes: Vec<Mode> = roots
            .iter()
            .map(|&(u, fam)| Mode::new(u, fam, length))
            .collect();

        let n_nodes = quad.nodes().len();
        let mut shapes = vec![vec![0.0; n_nodes]; count];
        let mut slopes = vec![vec![0.0; n_nodes]; count];
        let mut curvs = vec![vec![0.0; n_nodes]; count];
        for (i, m) in modes.iter().enumerate() {
            for (k, &x) in quad.nodes().iter().enumerate() {
                let [f, d1, d2] = m.eval(x);
                shapes[i][k] = f;
                slopes[i][k] = d1;
                curvs[i][k] = d2;
            }
        }
        let gram = |rows: &[Vec<f64>]| {
            DMatrix::from_fn(count, count, |i, j| {
                rows[i]
                    .iter()
                    .zip(&rows[j])
                    .zip(quad.weights())
                    .map(|((a, b), w)| a * b * w)
                    .sum()
            })
        };
        let basis = Self {
            length,
            gram_slope: gram(&slopes),
            gram_curvature: gram(&curvs),
            gram_mass: gram(&shapes),
            modes,
            quad,
            shapes,
        };
        basis.check_invariants()?;
        Ok(basis)
    }

    fn check_invariants(&self) -> Result<()> {
        let n = self.count();
        for (name, m) in [
            ("slope", &self.gram_slope),
            ("curvature", &self.gram_curvature),
            ("mass", &self.gram_mass),
        ] {
            if m.clone().cholesky().is_none() {
                return Err(Error::QuadratureUnderresolved(format!(
                    "{name} Gram matrix not positive definite"
                )));
            }
        }
        let s = &self.gram_slope;
        for i in 0..n {
            let want = self.wavenumber(i).powi(2);
            let got = self.gram_curvature[(i, i)] / s[(i, i)];
            if ((got - want) / want).abs() > 1e-6 {
                return Err(Error::QuadratureUnderresolved(format!(
                    "mode {i}: curvature/slope ratio {got:.6e} vs n² {want:.6e}"
                )));
            }
            for j in 0..i {
                if s[(i, j)].abs() > 1e-6 * (s[(i, i)] * s[(j, j)]).sqrt() {
                    return Err(Error::QuadratureUnderresolved(format!(
                        "slopes of modes {i} and {j} not orthogonal"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn count(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Dimensionless roots `u_i = n_i L`.
    pub fn roots(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.root).collect()
    }

    pub fn family(&self, i: usize) -> Family {
        self.modes[i].family
    }

    pub fn wavenumber(&self, i: usize) -> f64 {
        self.modes[i].wavenumber()
    }

    pub fn quadrature(&self) -> &Simpson {
        &self.quad
    }

    /// Mode shapes sampled on the quadrature nodes, `[mode][node]`.
    pub fn sampled_shapes(&self) -> &[Vec<f64>] {
        &self.shapes
    }

    /// S_ij = ∫ φ_i' φ_j' dx (1/m).
    pub fn gram_slope(&self) -> &DMatrix<f64> {
        &self.gram_slope
    }

    /// B_ij = ∫ φ_i'' φ_j'' dx (1/m³).
    pub fn gram_curvature(&self) -> &DMatrix<f64> {
        &self.gram_curvature
    }

    /// Mq_ij = ∫ φ_i φ_j dx (m).
    pub fn gram_mass(&self) -> &DMatrix<f64> {
        &self.gram_mass
    }

    /// φ_i(x) for `x` in `[0, L]`.
    pub fn mode_shape(&self, i: usize, x: f64) -> Result<f64> {
        Ok(self.eval(i, x)?[0])
    }

    /// `[φ_i, φ_i', φ_i'']` at `x`.
    pub fn eval(&self, i: usize, x: f64) -> Result<[f64; 3]> {
        if i >= self.count() {
            return Err(crate::error::invalid("mode", format!("index {i} out of range")));
        }
        if !(0.0..=self.length).contains(&x) {
            return Err(Error::Domain {
                what: "x",
                value: x,
                lo: 0.0,
                hi: self.length,
            });
        }
        Ok(self.modes[i].eval(x))
    }

    /// Lateral deflection w(x) = Σ a_i φ_i(x) at every quadrature node.
    pub fn deflection_samples(&self, amplitudes: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.quad.nodes().len()];
        for (a, row) in amplitudes.iter().zip(&self.shapes) {
            for (wk, phi) in w.iter_mut().zip(row) {
                *wk += a * phi;
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Plain bisection on tan(u/2) - u/2, independent of the solver above.
    fn bisect_tan(mut lo: f64, mut hi: f64) -> f64 {
        let g = |u: f64| (0.5 * u).tan() - 0.5 * u;
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if (g(mid) > 0.0) == (g(lo) > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    // Frozen from the bisection oracle over (2π + 1e-6, 3π - 1e-6).
    const U1: f64 = 8.986_818_915_818_128;

    #[test]
    fn first_root_is_two_pi() {
        assert_eq!(solve_eigenvalues(1).unwrap(), vec![2.0 * PI]);
    }

    #[test]
    fn three_roots() {
        let r = solve_eigenvalues(3).unwrap();
        assert_eq!(r[0], 2.0 * PI);
        assert_eq!(r[2], 4.0 * PI);
        let oracle = bisect_tan(2.0 * PI + 1e-6, 3.0 * PI - 1e-6);
        assert!((oracle - U1).abs() < 1e-12);
        assert!((r[1] - oracle).abs() < 1e-10);
    }

    #[test]
    fn residuals_vanish() {
        for u in solve_eigenvalues(MAX_MODES).unwrap() {
            assert!(characteristic_residual(u).abs() < 1e-10, "u = {u}");
        }
    }

    #[test]
    fn cap_enforced() {
        assert!(matches!(
            solve_eigenvalues(MAX_MODES + 1),
            Err(Error::TooManyModes { .. })
        ));
        assert!(solve_eigenvalues(0).is_err());
    }

    #[test]
    fn mode_zero_values() {
        let b = ModeBasis::new(1e-5, 2).unwrap();
        assert_relative_eq!(b.mode_shape(0, 0.5e-5).unwrap(), 1.0, max_relative = 1e-14);
        assert_eq!(b.mode_shape(0, 0.0).unwrap(), 0.0);
        assert!(b.mode_shape(0, 1e-5).unwrap().abs() < 1e-15);
        assert!(b.mode_shape(1, 0.5e-5).unwrap().abs() < 1e-9);
        assert!(matches!(b.mode_shape(0, 1.1e-5), Err(Error::Domain { .. })));
    }

    #[test]
    fn peaks_are_unit() {
        let b = ModeBasis::new(1.0, 8).unwrap();
        for i in 0..8 {
            let peak = (0..=200_000)
                .map(|k| b.mode_shape(i, k as f64 / 200_000.0).unwrap().abs())
                .fold(0.0, f64::max);
            assert!((peak - 1.0).abs() < 1e-9, "mode {i}: {peak}");
        }
    }

    #[test]
    fn clamped_boundary_conditions() {
        let l = 12e-6;
        let b = ModeBasis::new(l, MAX_MODES).unwrap();
        for i in 0..b.count() {
            for x in [0.0, l] {
                let [f, d1, _] = b.eval(i, x).unwrap();
                assert!(f.abs() < 1e-9 && (d1 * l).abs() < 1e-9, "mode {i} x {x}");
            }
        }
    }

    #[test]
    fn mode_zero_gram_entries() {
        let l = 7e-6;
        let b = ModeBasis::new(l, 3).unwrap();
        let s = b.gram_slope()[(0, 0)];
        let bb = b.gram_curvature()[(0, 0)];
        assert_relative_eq!(s, PI * PI / (2.0 * l), max_relative = 1e-10);
        assert_relative_eq!(bb, 2.0 * PI.powi(4) / l.powi(3), max_relative = 1e-10);
        assert_relative_eq!(bb / s, (2.0 * PI / l).powi(2), max_relative = 1e-10);
        assert_relative_eq!(b.gram_mass()[(0, 0)], 3.0 * l / 8.0, max_relative = 1e-10);
    }

    #[test]
    fn gram_converges_and_orders() {
        let l = 12e-6;
        let a = ModeBasis::with_quadrature(l, 8, 2048).unwrap();
        let b = ModeBasis::with_quadrature(l, 8, 4096).unwrap();
        for (ma, mb) in [
            (a.gram_slope(), b.gram_slope()),
            (a.gram_curvature(), b.gram_curvature()),
            (a.gram_mass(), b.gram_mass()),
        ] {
            for i in 0..8 {
                for j in 0..8 {
                    let scale = (mb[(i, i)] * mb[(j, j)]).sqrt();
                    assert!((ma[(i, j)] - mb[(i, j)]).abs() < 1e-9 * scale);
                }
            }
        }
        let ratios: Vec<f64> = (0..8)
            .map(|i| b.gram_curvature()[(i, i)] / b.gram_slope()[(i, i)])
            .collect();
        assert!(ratios.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_coarse_quadrature() {
        assert!(ModeBasis::with_quadrature(1.0, 2, 256).is_err());
    }
}
