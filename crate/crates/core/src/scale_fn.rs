//! q-scale functions of the dual (spectrally negative) process.
//!
//! For the phase-type models of [`crate::levy_model`], `1 / (psi(s) - q)` is a
//! proper rational function of `s` with simple poles `zeta_j`, so
//!
//! ```text
//! 1 / (psi(s) - q) = sum_j w_j / (s - zeta_j),      w_j = 1 / psi'(zeta_j)
//! W(x)             = sum_j w_j exp(zeta_j x),        x >= 0
//! ```
//!
//! Exactly one pole is real and positive (`Phi(q)`); all others have negative
//! real part. Two partial-fraction identities follow from evaluating the
//! expansion at `s = 0` and at `s = theta`:
//!
//! ```text
//! sum_j w_j / zeta_j           = 1 / q                        (q > 0)
//! sum_j w_j / (theta - zeta_j) = 1 / (psi(theta) - q)
//! ```
//!
//! The fluctuation identities use them to cancel the dominant `exp(Phi x)`
//! terms analytically.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::levy_model::{LevyModel, Variation};

/// Minimum separation between poles before the simple-pole expansion is refused.
pub const REPEATED_ROOT_TOL: f64 = 1e-8;

/// One pole of `1 / (psi - q)` together with its residue.
///
/// Complex poles are stored once (upper half-plane) with `multiplicity = 2`;
/// the conjugate contribution is folded in by taking twice the real part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub root: Complex64,
    pub weight: Complex64,
    multiplicity: f64,
}

impl Pole {
    pub fn is_real(&self) -> bool {
        self.multiplicity == 1.0
    }
}

#[derive(Debug, Clone)]
pub struct ScaleFunction {
    q: f64,
    phi: f64,
    // poles[0] is the dominant pole Phi(q).
    poles: Vec<Pole>,
    variation: Variation,
    drift: f64,
    model: LevyModel,
}

impl ScaleFunction {
    pub fn build(model: &LevyModel, q: f64) -> Result<Self> {
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::Domain(format!("scale function needs q >= 0, got {q}")));
        }
        let phi = model.phi(q)?;
        let numerator = numerator_polynomial(model, q);
        let raw = polynomial_roots(&numerator);

        let mut roots = Vec::with_capacity(raw.len());
        for guess in raw {
            if let Some(root) = polish(model, q, guess) {
                roots.push(root);
            }
        }
        let separation = min_separation(&roots);
        if separation < REPEATED_ROOT_TOL {
            return Err(Error::RepeatedRoot { q, separation });
        }

        let poles = pair_poles(model, q, phi, &roots)?;
        let sf =
            Self { q, phi, poles, variation: model.variation(), drift: model.drift(), model: model.clone() };
        sf.check_expansion()?;
        Ok(sf)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// The dominant pole `Phi(q)`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn variation(&self) -> Variation {
        self.variation
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    /// Poles as stored (one per conjugate pair, dominant first).
    pub fn poles(&self) -> &[Pole] {
        &self.poles
    }

    /// All poles `zeta_j` including conjugates.
    pub fn roots(&self) -> Vec<Complex64> {
        self.expanded().map(|(z, _)| z).collect()
    }

    /// All residues `w_j = 1 / psi'(zeta_j)`, aligned with [`Self::roots`].
    pub fn weights(&self) -> Vec<Complex64> {
        self.expanded().map(|(_, w)| w).collect()
    }

    fn expanded(&self) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
        self.poles.iter().flat_map(|p| {
            let first = std::iter::once((p.root, p.weight));
            let second = (!p.is_real()).then(|| (p.root.conj(), p.weight.conj()));
            first.chain(second)
        })
    }

    /// `sum_j term(zeta_j, w_j)` over all poles, assuming `term` commutes with
    /// conjugation. `skip_dominant` drops the `Phi(q)` pole.
    pub fn sum_over_poles<F>(&self, skip_dominant: bool, term: F) -> f64
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        let start = usize::from(skip_dominant);
        self.poles[start..].iter().map(|p| p.multiplicity * term(p.root, p.weight).re).sum()
    }

    /// `W^{(q)}(x)`; zero on the negative half-line.
    pub fn w(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        // Factor out the dominant growth so that large x cannot overflow the
        // subdominant terms before the final scaling.
        let phi = self.phi;
        let scaled = self.sum_over_poles(false, |z, w| w * ((z - phi) * x).exp());
        scaled * (phi * x).exp()
    }

    /// Right derivative of `W^{(q)}` on `[0, inf)`.
    pub fn w_prime(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let phi = self.phi;
        let scaled = self.sum_over_poles(false, |z, w| w * z * ((z - phi) * x).exp());
        scaled * (phi * x).exp()
    }

    /// `W-bar(x) = int_0^x W(u) du`.
    pub fn w_bar(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.sum_over_poles(false, |z, w| w * exprel(z, x))
    }

    /// Second scale function
    /// `Z(x; theta) = e^{theta x} (1 + (q - psi(theta)) int_0^x e^{-theta z} W(z) dz)`.
    pub fn z(&self, x: f64, theta: f64) -> f64 {
        if x <= 0.0 {
            return (theta * x).exp();
        }
        let gap = self.q - self.model.psi(theta);
        let near_pole = self.expanded().any(|(z, _)| (z - theta).norm() < 1e-6 * (1.0 + theta.abs()));
        if near_pole {
            self.z_direct_with(x, theta, gap)
        } else {
            // The e^{theta x} coefficient vanishes identically by the
            // partial-fraction identity at s = theta.
            -gap * self.sum_over_poles(false, |z, w| w * (z * x).exp() / (theta - z))
        }
    }

    /// `Z(x; theta)` evaluated literally from its defining integral.
    pub fn z_direct(&self, x: f64, theta: f64) -> f64 {
        if x <= 0.0 {
            return (theta * x).exp();
        }
        let gap = self.q - self.model.psi(theta);
        self.z_direct_with(x, theta, gap)
    }

    fn z_direct_with(&self, x: f64, theta: f64, gap: f64) -> f64 {
        let integral = self.sum_over_poles(false, |z, w| w * exprel(z - theta, x));
        (theta * x).exp() * (1.0 + gap * integral)
    }

    /// `W(0)`: zero for unbounded variation, `1 / |c|` for bounded variation.
    pub fn w_at_zero(&self) -> f64 {
        match self.variation {
            Variation::Unbounded => 0.0,
            Variation::Bounded => 1.0 / self.drift.abs(),
        }
    }

    fn check_expansion(&self) -> Result<()> {
        // Partial fractions must reproduce 1 / (psi - q) away from the poles.
        for s in [
            Complex64::new(self.phi + 1.0, 0.0),
            Complex64::new(self.phi + 0.5, 2.0),
            Complex64::new(0.25 * self.phi + 0.1, -1.5),
        ] {
            let exact = match self.model.laplace_exponent(s) {
                Ok(psi) => 1.0 / (psi - self.q),
                Err(_) => continue,
            };
            let approx: Complex64 = self.expanded().map(|(z, w)| w / (s - z)).sum();
            let err = (approx - exact).norm();
            if !(err <= 1e-8 * (1.0 + exact.norm())) {
                return Err(Error::ScaleFunction {
                    q: self.q,
                    detail: format!("partial-fraction mismatch {err:e} at s = {s}"),
                });
            }
        }
        let w0 = self.sum_over_poles(false, |_, w| w);
        if (w0 - self.w_at_zero()).abs() > 1e-8 * (1.0 + self.w_at_zero()) {
            return Err(Error::ScaleFunction {
                q: self.q,
                detail: format!("W(0) = {w0}, expected {}", self.w_at_zero()),
            });
        }
        Ok(())
    }
}

/// `(e^{z x} - 1) / z`, with the limit `x` at `z = 0`.
fn exprel(z: Complex64, x: f64) -> Complex64 {
    let zx = z * x;
    if zx.norm() < 1e-4 {
        x * (1.0 + zx / 2.0 + zx * zx / 6.0 + zx * zx * zx / 24.0)
    } else {
        (zx.exp() - 1.0) / z
    }
}

/// Coefficients (ascending) of `N(s) = (psi(s) - q) det(sI - T)`.
fn numerator_polynomial(model: &LevyModel, q: f64) -> Vec<f64> {
    let k2 = 0.5 * model.sigma() * model.sigma();
    let k1 = -model.drift();
    if !model.has_jumps() {
        return trim(vec![-q, k1, k2]);
    }
    let jumps = model.jumps();
    let (charpoly, adjugate) = faddeev_leverrier(jumps.generator());
    let rate = model.jump_rate();
    let k0 = -rate * jumps.alpha().sum() - q;

    // rate * alpha adj(sI - T) t
    let alpha = jumps.alpha();
    let exit = jumps.exit_rates();
    let n = jumps.phases();
    let mut coupled = vec![0.0; n];
    for (k, m) in adjugate.iter().enumerate() {
        // adj(sI - T) = sum_{k=1}^{n} M_k s^{n-k}
        coupled[n - 1 - k] = rate * alpha.dot(&(m * exit));
    }

    let mut out = vec![0.0; charpoly.len() + 2];
    for (i, c) in charpoly.iter().enumerate() {
        out[i] += k0 * c;
        out[i + 1] += k1 * c;
        out[i + 2] += k2 * c;
    }
    for (i, c) in coupled.iter().enumerate() {
        out[i] += c;
    }
    trim(out)
}

fn trim(mut coeffs: Vec<f64>) -> Vec<f64> {
    while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
        coeffs.pop();
    }
    coeffs
}

/// Characteristic polynomial `det(sI - A)` (ascending, monic) and the matrices
/// `M_1..M_n` with `adj(sI - A) = sum_k M_k s^{n-k}`.
fn faddeev_leverrier(a: &DMatrix<f64>) -> (Vec<f64>, Vec<DMatrix<f64>>) {
    let n = a.nrows();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut mats = Vec::with_capacity(n);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + DMatrix::from_diagonal_element(n, n, coeffs[n - k + 1]);
        coeffs[n - k] = -(a * &m).trace() / k as f64;
        mats.push(m.clone());
    }
    (coeffs, mats)
}

/// Roots of a real polynomial (ascending coefficients) as eigenvalues of the
/// companion matrix.
fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    let lead = coeffs[degree];
    let companion = DMatrix::from_fn(degree, degree, |i, j| {
        if i == 0 {
            -coeffs[degree - 1 - j] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion.complex_eigenvalues().iter().copied().collect()
}

/// Newton refinement on `psi(s) - q`. Returns `None` for spurious roots
/// (common factors of numerator and denominator, where `psi` has a pole).
fn polish(model: &LevyModel, q: f64, guess: Complex64) -> Option<Complex64> {
    let mut s = guess;
    let scale = 1.0 + q.abs();
    for _ in 0..60 {
        let f = model.laplace_exponent(s).ok()? - q;
        let d = model.laplace_exponent_deriv(s).ok()?;
        if d.norm() == 0.0 {
            break;
        }
        let step = f / d;
        s -= step;
        if step.norm() <= 1e-15 * (1.0 + s.norm()) {
            break;
        }
    }
    let residual = (model.laplace_exponent(s).ok()? - q).norm();
    (residual <= 1e-9 * scale && (s - guess).norm() <= 1e-3 * (1.0 + guess.norm())).then_some(s)
}

fn min_separation(roots: &[Complex64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            best = best.min((roots[i] - roots[j]).norm());
        }
    }
    best
}

fn pair_poles(model: &LevyModel, q: f64, phi: f64, roots: &[Complex64]) -> Result<Vec<Pole>> {
    let is_real = |z: &Complex64| z.im.abs() <= 1e-10 * (1.0 + z.re.abs());
    let residue = |z: Complex64| -> Result<Complex64> { Ok(1.0 / model.laplace_exponent_deriv(z)?) };

    let dominant = roots
        .iter()
        .copied()
        .filter(is_real)
        .min_by(|a, b| (a.re - phi).abs().total_cmp(&(b.re - phi).abs()))
        .filter(|z| (z.re - phi).abs() <= 1e-8 * (1.0 + phi))
        .ok_or_else(|| Error::ScaleFunction { q, detail: format!("no real pole at Phi(q) = {phi}") })?;

    let dom = Complex64::new(phi, 0.0);
    let mut poles =
        vec![Pole { root: dom, weight: Complex64::new(1.0 / model.psi_deriv(phi), 0.0), multiplicity: 1.0 }];
    let mut lower = Vec::new();
    for &z in roots {
        if z == dominant {
            continue;
        }
        if z.re >= phi {
            return Err(Error::ScaleFunction {
                q,
                detail: format!("pole {z} has real part >= Phi(q) = {phi}"),
            });
        }
        if is_real(&z) {
            let z = Complex64::new(z.re, 0.0);
            poles.push(Pole { root: z, weight: Complex64::new(residue(z)?.re, 0.0), multiplicity: 1.0 });
        } else if z.im > 0.0 {
            poles.push(Pole { root: z, weight: residue(z)?, multiplicity: 2.0 });
        } else {
            lower.push(z);
        }
    }
    // Every lower-half pole must mirror a stored upper-half pole.
    let uppers: Vec<Complex64> = poles.iter().filter(|p| !p.is_real()).map(|p| p.root).collect();
    if lower.len() != uppers.len()
        || lower.iter().any(|z| !uppers.iter().any(|u| (u.conj() - z).norm() <= 1e-8 * (1.0 + z.norm())))
    {
        return Err(Error::ScaleFunction { q, detail: "complex poles are not in conjugate pairs".into() });
    }
    Ok(poles)
}
