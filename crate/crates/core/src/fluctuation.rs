//! Fluctuation identities of the spectrally positive process `X`, below zero,
//! under continuous observation (`gamma`, `g`) and under observation at the
//! arrival times of an independent Poisson process of rate `lambda`
//! (`J`, `Lambda`, `R`).
//!
//! Every identity is evaluated in closed form from the pole expansion of the
//! scale function. Wherever `W`, `W-bar` and `Z` would combine into a
//! difference of `exp(Phi(q) x)`-sized terms, the combination is rewritten with
//! the partial-fraction identities so that the dominant pole drops out
//! exactly. The literal expressions are kept in the test suites.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::levy_model::LevyModel;
use crate::scale_fn::ScaleFunction;

/// Which one-sided derivative to report at a kink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    Left,
    #[default]
    Right,
}

/// A model plus lazily built `Phi(q)` values and scale functions keyed by `q`.
#[derive(Debug)]
pub struct FluctuationContext {
    model: LevyModel,
    phis: RwLock<HashMap<u64, f64>>,
    scales: RwLock<HashMap<u64, Arc<ScaleFunction>>>,
}

impl Clone for FluctuationContext {
    fn clone(&self) -> Self {
        Self::new(self.model.clone())
    }
}

impl FluctuationContext {
    pub fn new(model: LevyModel) -> Self {
        Self { model, phis: RwLock::new(HashMap::new()), scales: RwLock::new(HashMap::new()) }
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn phi(&self, q: f64) -> Result<f64> {
        let key = q.to_bits();
        if let Some(v) = self.phis.read().expect("phi cache poisoned").get(&key) {
            return Ok(*v);
        }
        let v = self.model.phi(q)?;
        self.phis.write().expect("phi cache poisoned").insert(key, v);
        Ok(v)
    }

    pub fn scale(&self, q: f64) -> Result<Arc<ScaleFunction>> {
        let key = q.to_bits();
        if let Some(sf) = self.scales.read().expect("scale cache poisoned").get(&key) {
            return Ok(Arc::clone(sf));
        }
        let sf = Arc::new(ScaleFunction::build(&self.model, q)?);
        self.scales.write().expect("scale cache poisoned").insert(key, Arc::clone(&sf));
        Ok(sf)
    }

    /// `gamma(x; q) = E_x[1 - e^{-q tau_0^-}; tau_0^- < inf] = 1 - e^{-Phi(q) x}`.
    pub fn gamma(&self, x: f64, q: f64) -> Result<f64> {
        check_start(x)?;
        check_rate(q)?;
        Ok(-(-self.phi(q)? * x).exp_m1())
    }

    /// `d gamma / dx = Phi(q) e^{-Phi(q) x}`, the right derivative at `x = 0`.
    pub fn gamma_deriv(&self, x: f64, q: f64) -> Result<f64> {
        check_start(x)?;
        check_rate(q)?;
        let phi = self.phi(q)?;
        Ok(phi * (-phi * x).exp())
    }

    /// Discounted occupation of `[a, inf)` before `tau_0^-`:
    ///
    /// `g(x; q, a) = (1 - e^{-Phi x}) / q + W-bar(a - x) - e^{-Phi x} W-bar(a)`.
    pub fn g(&self, x: f64, q: f64, a: f64) -> Result<f64> {
        check_start(x)?;
        check_rate(q)?;
        if a <= 0.0 {
            return Ok(self.gamma(x, q)? / q);
        }
        let sf = self.scale(q)?;
        let phi = sf.phi();
        if a <= x {
            let s = sf.sum_over_poles(false, |z, w| w / z * (z * a - phi * x).exp());
            Ok(1.0 / q - s)
        } else {
            Ok(sf.sum_over_poles(true, |z, w| w / z * ((z * (a - x)).exp() - (z * a - phi * x).exp())))
        }
    }

    /// `dg/dx = e^{-Phi x} Phi / q + Phi e^{-Phi x} W-bar(a) - W(a - x)`.
    ///
    /// At `x = a` the derivative jumps by `W(0)` for bounded-variation models;
    /// `side` selects the one-sided value.
    pub fn g_deriv(&self, x: f64, q: f64, a: f64, side: Side) -> Result<f64> {
        check_start(x)?;
        check_rate(q)?;
        let phi = self.phi(q)?;
        if a <= 0.0 && !(a == 0.0 && x == 0.0 && side == Side::Left) {
            return Ok(phi * (-phi * x).exp() / q);
        }
        let sf = self.scale(q)?;
        let below = x < a || (x == a && side == Side::Left);
        if below {
            // W(a - x) is live and its dominant term cancels.
            Ok(sf.sum_over_poles(true, |z, w| w * (phi / z * (z * a - phi * x).exp() - (z * (a - x)).exp())))
        } else {
            Ok(phi * sf.sum_over_poles(false, |z, w| w / z * (z * a - phi * x).exp()))
        }
    }

    /// `J(x; beta) = E_x[e^{-q T_0^- + beta X_{T_0^-}}; T_0^- < inf]` for the
    /// first observed passage below zero:
    /// `(Phi(lambda + q) - Phi(q)) / (beta + Phi(lambda + q)) e^{-Phi(q) x}`.
    pub fn j_transform(&self, x: f64, q: f64, beta: f64, lambda: f64) -> Result<f64> {
        check_start(x)?;
        check_rate(q)?;
        check_lambda(lambda)?;
        if !(beta >= 0.0) {
            return Err(Error::Domain(format!("beta must be >= 0, got {beta}")));
        }
        let phi = self.phi(q)?;
        let theta = self.phi(lambda + q)?;
        Ok((theta - phi) / (beta + theta) * (-phi * x).exp())
    }

    /// `dJ/dx = -Phi(q) J`.
    pub fn j_deriv(&self, x: f64, q: f64, beta: f64, lambda: f64) -> Result<f64> {
        Ok(-self.phi(q)? * self.j_transform(x, q, beta, lambda)?)
    }

    /// Discounted time spent at or above `log_vt` before the first observed
    /// passage below `z`, started from `x` (absolute log levels, `x >= z`):
    ///
    /// `Lambda(x, z) = E_x[int_0^{T_z^-} e^{-qt} 1{X_t >= log V_T} dt]`.
    ///
    /// `vt = 0` switches the indicator off (`Lambda = (1 - J(x - z; 0)) / q`).
    pub fn lambda_occupation(&self, x: f64, z: f64, q: f64, lambda: f64, vt: f64) -> Result<f64> {
        check_rate(q)?;
        check_lambda(lambda)?;
        check_threshold(vt)?;
        if !(x >= z) {
            return Err(Error::Domain(format!("Lambda(x, z) needs x >= z, got x = {x}, z = {z}")));
        }
        let u = x - z;
        if vt == 0.0 {
            return Ok((1.0 - self.j_transform(u, q, 0.0, lambda)?) / q);
        }
        let phi = self.phi(q)?;
        let theta = self.phi(lambda + q)?;
        let y = vt.ln() - z;
        if y <= 0.0 {
            let decay = (-phi * u).exp();
            return Ok((1.0 - (theta - phi) / theta * decay) / q
                - (theta - phi) / (lambda * theta) * (theta * y - phi * u).exp());
        }
        let sf = self.scale(q)?;
        if y <= u {
            let s =
                sf.sum_over_poles(false, |zeta, w| w * (zeta * y - phi * u).exp() / (zeta * (theta - zeta)));
            Ok(1.0 / q - (theta - phi) * s)
        } else {
            Ok(sf.sum_over_poles(true, |zeta, w| {
                w / zeta
                    * ((zeta * (y - u)).exp() - (theta - phi) / (theta - zeta) * (zeta * y - phi * u).exp())
            }))
        }
    }

    /// `Lambda(z, z)`:
    ///
    /// `Phi/Phi_l [1/q + W-bar(log V_T - z)] - (Phi_l - Phi)/(lambda Phi_l) Z(log V_T - z; Phi_l)`
    /// with `Phi_l = Phi(lambda + q)`.
    pub fn lambda_diag(&self, z: f64, q: f64, lambda: f64, vt: f64) -> Result<f64> {
        check_rate(q)?;
        check_lambda(lambda)?;
        check_threshold(vt)?;
        let phi = self.phi(q)?;
        let theta = self.phi(lambda + q)?;
        if vt == 0.0 {
            return Ok(phi / (q * theta));
        }
        let y = vt.ln() - z;
        if y <= 0.0 {
            return Ok(phi / (theta * q) - (theta - phi) / (lambda * theta) * (theta * y).exp());
        }
        let sf = self.scale(q)?;
        Ok(sf.sum_over_poles(true, |zeta, w| w * (zeta * y).exp() * (phi - zeta) / (zeta * (theta - zeta))))
    }

    /// Resolvent density of the dual process killed at its first observed
    /// passage above zero, for `x <= 0`:
    ///
    /// `R(x, y) = (Phi_l - Phi)/lambda e^{Phi x} Z(-y; Phi_l) - W(x - y)`.
    pub fn resolvent_density(&self, x: f64, y: f64, q: f64, lambda: f64) -> Result<f64> {
        check_rate(q)?;
        check_lambda(lambda)?;
        if !(x <= 0.0) {
            return Err(Error::Domain(format!("R(x, y) needs x <= 0, got {x}")));
        }
        let phi = self.phi(q)?;
        let theta = self.phi(lambda + q)?;
        let sf = self.scale(q)?;
        if y < x {
            return Ok(sf.sum_over_poles(true, |zeta, w| {
                w * ((theta - phi) / (theta - zeta) * (phi * x - zeta * y).exp() - (zeta * (x - y)).exp())
            }));
        }
        Ok((theta - phi) / lambda * (phi * x).exp() * sf.z(-y, theta) - sf.w(x - y))
    }

    /// `W(y) - Phi(q) W-bar(y)`, equal to `Phi(q)/q (1 - E_{-y}[e^{-q tau_0^+}])`
    /// for `y >= 0` and zero for `y < 0`.
    pub fn w_minus_phi_wbar(&self, y: f64, q: f64) -> Result<f64> {
        check_rate(q)?;
        if y < 0.0 {
            return Ok(0.0);
        }
        let sf = self.scale(q)?;
        let phi = sf.phi();
        Ok(phi / q + sf.sum_over_poles(true, |z, w| w * (1.0 - phi / z) * (z * y).exp()))
    }

    /// Right derivative in `y` of [`Self::w_minus_phi_wbar`],
    /// `W'(y) - Phi(q) W(y)`; non-negative.
    pub fn w_minus_phi_wbar_deriv(&self, y: f64, q: f64) -> Result<f64> {
        check_rate(q)?;
        if y < 0.0 {
            return Ok(0.0);
        }
        let sf = self.scale(q)?;
        let phi = sf.phi();
        Ok(sf.sum_over_poles(true, |z, w| w * (z - phi) * (z * y).exp()))
    }
}

fn check_start(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("start level must be >= 0, got {x}")))
    }
}

fn check_rate(q: f64) -> Result<()> {
    if q > 0.0 && q.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("discount rate must be > 0, got {q}")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("observation rate must be > 0, got {lambda}")))
    }
}

fn check_threshold(vt: f64) -> Result<()> {
    if vt >= 0.0 && vt.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("tax threshold must be >= 0, got {vt}")))
    }
}
