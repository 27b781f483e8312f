//! Initial densities, radial cutoffs and the concentrated-data parameter recipe.

use alloc::vec::Vec;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::{exp, sqrt, PI};
use crate::rng;
use crate::spectral::{Grid, Plan, ScalarField};

/// Periodized Gaussian `Σ_images exp(-|x - c|²/a²)` rescaled so the grid mass is exactly `M`.
pub fn gaussian_bump(grid: Grid, mass: f64, a: f64, center: &[f64]) -> Result<ScalarField> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::param("M", "mass must be positive"));
    }
    if !(a < 0.25) || !(a > 0.0) {
        return Err(Error::param("a", "width must lie in (0, 1/4)"));
    }
    if a < 3.0 * grid.spacing() {
        return Err(Error::param("a", "width below 3 grid spacings is not resolvable"));
    }
    if center.len() != grid.dim() {
        return Err(Error::param("center", "needs one coordinate per dimension"));
    }
    let dim = grid.dim();
    let images = 3usize.pow(dim as u32);
    let inv_a2 = 1.0 / (a * a);
    let raw = ScalarField::from_fn(grid, |x| {
        let mut acc = 0.0;
        for img in 0..images {
            let mut r2 = 0.0;
            let mut code = img;
            for axis in 0..dim {
                let shift = (code % 3) as f64 - 1.0;
                code /= 3;
                let d = x[axis] - center[axis] - shift;
                r2 += d * d;
            }
            acc += exp(-r2 * inv_a2);
        }
        acc
    });
    let scale = mass / raw.mean();
    Ok(raw.scaled(scale))
}

/// `C^∞` step: 0 for `t ≤ 0`, 1 for `t ≥ 1`, `g(t)/(g(t)+g(1-t))` with `g(t) = e^{-1/t}`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let g = |s: f64| exp(-1.0 / s);
    let (a, b) = (g(t), g(1.0 - t));
    a / (a + b)
}

/// Radial cutoff profile: 1 on `r ≤ b`, 0 on `r ≥ 2b`, `|φ'| ≤ 2/b`.
pub fn cutoff_profile(r: f64, b: f64) -> f64 {
    smooth_step((2.0 * b - r) / b)
}

/// `φ(x) = cutoff_profile(|x|, b)` with `|x|` taken in the fundamental domain.
pub fn radial_cutoff(grid: Grid, b: f64) -> Result<ScalarField> {
    if !(b > 0.0 && b <= 0.25) {
        return Err(Error::param("b", "cutoff scale must lie in (0, 1/4]"));
    }
    if b < 4.0 * grid.spacing() {
        return Err(Error::param("b", "cutoff scale below 4 grid spacings"));
    }
    Ok(ScalarField::from_fn(grid, |x| {
        let r = sqrt(x.iter().map(|c| c * c).sum::<f64>());
        cutoff_profile(r, b)
    }))
}

/// Mean-zero field with coefficients `z(k)/|k|^decay` on `0 < |k| ≤ n/3`, where `z(k)` is a
/// standard complex Gaussian keyed by `(seed, k)`, so a seed names the same field at every
/// resolution (up to the cutoff).
pub fn random_smooth_field(grid: Grid, seed: u64, decay: f64) -> Result<ScalarField> {
    let min_decay = grid.dim() as f64 / 2.0 + 1.0;
    if !(decay > min_decay) {
        return Err(Error::param("decay", "must exceed dim/2 + 1"));
    }
    let cut = (grid.n() / 3) as f64;
    let cut2 = cut * cut;
    let mut coeffs = alloc::vec![Complex64::new(0.0, 0.0); grid.len()];
    for flat in 1..grid.len() {
        let partner = grid.conjugate_index(flat);
        if partner < flat {
            continue;
        }
        let k2 = grid.k_squared(flat);
        if k2 > cut2 {
            continue;
        }
        let (x, y) = rng::normal_pair(seed, mode_key(grid.wavevector(flat)));
        let amp = libm::pow(k2, -0.5 * decay) / core::f64::consts::SQRT_2;
        let z = Complex64::new(x * amp, y * amp);
        coeffs[flat] = z;
        coeffs[partner] = z.conj();
    }
    let values: Vec<f64> = Plan::new(grid).inverse(&coeffs);
    ScalarField::new(grid, values)
}

fn mode_key(k: [i64; 3]) -> u64 {
    const OFF: i64 = 1 << 20;
    k.iter().fold(0u64, |acc, &c| (acc << 21) | (c + OFF) as u64)
}

/// Parameters of the concentrated-data contradiction argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupRecipe {
    pub mass: f64,
    pub a: f64,
    pub b: f64,
    pub tau: f64,
    pub c: [f64; 4],
}

/// Floor on `M` when `1000·C4` would not exceed 1.
pub const MASS_FLOOR: f64 = 1.0 + 1e-6;

pub fn blowup_parameters(c1: f64, c2: f64, c3: f64, c4: f64) -> Result<BlowupRecipe> {
    for (name, v) in [("C1", c1), ("C2", c2), ("C3", c3), ("C4", c4)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(name, alloc::format!("constant {name} must be positive")));
        }
    }
    let b = f64::min(0.25, 0.001 / c3);
    let mass = f64::max(1000.0 * c4, MASS_FLOOR);
    let a = (b / 2.0).min(b / (10.0 * sqrt(2.0 * c1))).min(b / (100.0 * sqrt(c2)));
    let tau = 100.0 * a * a / mass;
    Ok(BlowupRecipe {
        mass,
        a,
        b,
        tau,
        c: [c1, c2, c3, c4],
    })
}

/// Result of substituting a recipe into the inequalities of the argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecipeCheck {
    /// Each of the four selection rules holds.
    pub choices_hold: bool,
    /// `τ` lies inside the window `b²/(C1 M)` where the moment bound is valid.
    pub within_window: bool,
    /// Largest value over `[0, τ]` of the upper bound on the moment derivative.
    pub max_rate_bound: f64,
    /// `-M²/50`.
    pub target: f64,
    /// Initial moment bound `a² M` minus the guaranteed decrease `τ M²/50`.
    pub final_moment_bound: f64,
}

impl RecipeCheck {
    pub fn ok(&self) -> bool {
        self.choices_hold && self.within_window && self.max_rate_bound <= self.target && self.final_moment_bound < 0.0
    }
}

/// Upper bound `-(M - C1 M² t/b²)²/(2π) + C2 M³ t/b² + C3 M² b + C4 M`.
pub fn moment_rate_bound(r: &BlowupRecipe, t: f64) -> f64 {
    let [c1, c2, c3, c4] = r.c;
    let m = r.mass;
    let b2 = r.b * r.b;
    let kept = m - c1 * m * m * t / b2;
    -kept * kept / (2.0 * PI) + c2 * m * m * m * t / b2 + c3 * m * m * r.b + c4 * m
}

pub fn verify_recipe(r: &BlowupRecipe) -> RecipeCheck {
    let [c1, c2, c3, c4] = r.c;
    let tol = 1e-12;
    let choices_hold = c3 * r.b <= 0.001 * (1.0 + tol)
        && r.b <= 0.25
        && r.mass >= 1000.0 * c4 * (1.0 - tol)
        && r.mass > 1.0
        && r.a <= r.b / 2.0
        && r.a <= r.b / (10.0 * sqrt(2.0 * c1)) * (1.0 + tol)
        && r.a <= r.b / (100.0 * sqrt(c2)) * (1.0 + tol)
        && (r.tau - 100.0 * r.a * r.a / r.mass).abs() <= tol * r.tau;
    let within_window = r.tau <= r.b * r.b / (c1 * r.mass);
    // The bound is concave in t; a dense sample plus the endpoints brackets its maximum.
    let samples = 2000;
    let max_rate_bound = (0..=samples)
        .map(|i| moment_rate_bound(r, r.tau * i as f64 / samples as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    let target = -r.mass * r.mass / 50.0;
    RecipeCheck {
        choices_hold,
        within_window,
        max_rate_bound,
        target,
        final_moment_bound: r.a * r.a * r.mass + r.tau * target,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{lp_norm, spectral_gradient, to_physical, to_spectral};

    fn g2(n: usize) -> Grid {
        Grid::new(2, n).unwrap()
    }

    #[test]
    fn gaussian_mass_positivity_symmetry() {
        let g = g2(128);
        let f = gaussian_bump(g, 60.0, 0.03, &[0.0, 0.0]).unwrap();
        assert!((f.mean() - 60.0).abs() <= 1e-12 * 60.0);
        assert!(f.min() > 0.0);
        let n = g.n();
        for i in 0..n {
            for j in 0..n {
                let a = f.values()[i * n + j];
                let b = f.values()[((n - i) % n) * n + (n - j) % n];
                assert!((a - b).abs() <= 1e-12 * f.max());
            }
        }
        assert!(gaussian_bump(g, 1.0, 0.02, &[0.0, 0.0]).is_err());
        assert!(gaussian_bump(g, 1.0, 0.3, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn gaussian_second_moment() {
        // ⟨|x|²⟩ of exp(-r²/a²) in 2D is a².
        let g = g2(256);
        let a = 0.05;
        let f = gaussian_bump(g, 1.0, a, &[0.0, 0.0]).unwrap();
        let m2 = ScalarField::from_fn(g, |x| x[0] * x[0] + x[1] * x[1]).inner(&f).unwrap();
        assert!((m2 - a * a).abs() < 1e-10);
    }

    #[test]
    fn cutoff_support_and_gradient() {
        let g = g2(128);
        let b = 0.1;
        let phi = radial_cutoff(g, b).unwrap();
        let origin = g.flatten(&[64, 64]);
        assert_eq!(phi.values()[origin], 1.0);
        assert_eq!(cutoff_profile(2.0 * b + g.spacing(), b), 0.0);
        assert!(phi.min() >= 0.0 && phi.max() <= 1.0);
        let grad = spectral_gradient(&to_spectral(&phi));
        let gmax = grad
            .iter()
            .map(|c| lp_norm(&to_physical(c).unwrap(), f64::INFINITY).unwrap())
            .fold(0.0, f64::max);
        assert!(gmax <= 4.0 / b, "{gmax}");
        assert!(radial_cutoff(g, 3.0 * g.spacing()).is_err());
    }

    #[test]
    fn cutoff_dilation() {
        for i in 0..200 {
            let r = i as f64 * 0.002;
            assert_eq!(cutoff_profile(2.0 * r, 0.1), cutoff_profile(r, 0.05));
        }
        // Peak slope 2/b at the midpoint.
        let b = 0.1;
        let h = 1e-7;
        let slope = (cutoff_profile(1.5 * b - h, b) - cutoff_profile(1.5 * b + h, b)) / (2.0 * h);
        assert!((slope - 2.0 / b).abs() < 1e-5);
    }

    #[test]
    fn random_field_mean_and_determinism() {
        let g = g2(64);
        let f = random_smooth_field(g, 3, 2.5).unwrap();
        assert!(f.mean().abs() < 1e-14);
        assert_eq!(f, random_smooth_field(g, 3, 2.5).unwrap());
        assert_ne!(f, random_smooth_field(g, 4, 2.5).unwrap());
        assert!(random_smooth_field(g, 3, 2.0).is_err());
        let c = to_spectral(&f);
        let cut = (g.n() / 3) as f64;
        for (i, z) in c.coeffs().iter().enumerate() {
            if g.k_squared(i) > cut * cut {
                assert!(z.norm() < 1e-15);
            }
        }
    }

    #[test]
    fn recipe_unit_constants() {
        let r = blowup_parameters(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((r.b - 1e-3).abs() < 1e-18);
        assert_eq!(r.mass, 1000.0);
        assert!((r.a - 1e-5).abs() < 1e-18);
        assert!((r.tau - 1e-11).abs() < 1e-24);
        assert!(2.0 * r.a <= r.b);
        assert!(verify_recipe(&r).ok());
    }

    #[test]
    fn recipe_monotone_in_c3() {
        let mut last = f64::INFINITY;
        for c3 in [0.001, 0.01, 1.0, 10.0, 100.0] {
            let r = blowup_parameters(1.0, 1.0, c3, 1.0).unwrap();
            assert!(r.b <= last);
            last = r.b;
        }
        assert!(blowup_parameters(0.0, 1.0, 1.0, 1.0).is_err());
    }
}
