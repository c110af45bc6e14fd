//! Continuum band theory: spectral function, correlation function, Lamb
//! shift, core frequencies and the characteristic time scales.
//!
//! The coupling band is characterised by its spectral function
//! `C̃(ω) = 2π ε² |ω|^(s-1)` cut off at `ω_c`, together with the level
//! spacing `ω_ϱ = 1/ϱ` of the underlying lattice.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate, integrate_pieces};

/// High-frequency cutoff of the spectral function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoffKind {
    /// `C̃(ω) ∝ |ω|^(s-1) exp(-|ω|/ω_c)`.
    Exponential,
    /// `C̃(ω) ∝ |ω|^(s-1)` for `|ω| ≤ ω_c`, zero beyond.
    Sharp,
}

/// Parameters of a power-law coupling band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandProfile {
    pub s: f64,
    pub epsilon: f64,
    pub omega_c: f64,
    pub omega_rho: f64,
    pub cutoff: CutoffKind,
}

/// Which closed form of the Wigner time to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WignerVariant {
    Exact,
    /// Replaces `Γ(3-s) sin(sπ/2)` by `(2-s) s`.
    Approx,
}

/// Formula used for the Lamb shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambShiftFormula {
    /// Universal formula inside the scaling window, logarithmic marginal
    /// forms when `s` is within `1/ln(ω_c/|ω|)` of 2 or `1/ln(|ω|/ω_ϱ)` of 0.
    Auto,
    Universal,
    /// `s → 2`: `-ε² ω ln|1 - (ω_c/ω)²|`.
    MarginalUpper,
    /// `s → 0`: `(ε²/ω) ln|(ω/ω_ϱ)² - 1|`.
    MarginalLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambShift {
    pub value: f64,
    pub formula: LambShiftFormula,
    /// Whether `ω` lies inside `ω_ϱ e^(1/s) < |ω| < ω_c e^(-1/(2-s))`.
    pub in_window: bool,
}

/// Which branch produced `γ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoreRegime {
    Universal,
    MarginalUpper,
    MarginalLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreFrequencies {
    /// Width of the LDOS core, `(ε²/|sin(sπ/2)|)^(1/(2-s))`.
    pub gamma0: f64,
    /// Width of the spreading core, `(ε²/(2-s))^(1/(2-s))`.
    pub gamma_o: f64,
    pub regime: CoreRegime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScales {
    /// Wigner time from the exact prefactor.
    pub t0: f64,
    pub t0_approx: f64,
    /// Crossover from stretched-exponential to power-law decay (closed form).
    pub t_inf: f64,
    /// Last intersection of the two asymptotic curves, if they cross.
    pub t_inf_numeric: Option<f64>,
    pub t_o: f64,
    /// Heisenberg time `2π/ω_ϱ`.
    pub t_h: f64,
    /// Cutoff time `2π/ω_c`.
    pub t_c: f64,
}

impl TimeScales {
    /// The ordering `t_c < t₀ < t_H` under which the universal regime exists.
    pub fn ordered(&self) -> bool {
        self.t_c < self.t0 && self.t0 < self.t_h
    }
}

/// How the core border was limited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clamp {
    Floor,
    Ceiling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreBorder {
    pub gamma: f64,
    pub clamp: Option<Clamp>,
}

fn gamma_fn(x: f64) -> f64 {
    libm::tgamma(x)
}

fn require_band(s: f64, quantity: &'static str) -> Result<()> {
    if s > 0.0 && s < 2.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            quantity,
            s,
            range: "0 < s < 2",
        })
    }
}

impl BandProfile {
    pub fn new(
        s: f64,
        epsilon: f64,
        omega_c: f64,
        omega_rho: f64,
        cutoff: CutoffKind,
    ) -> Result<Self> {
        let p = BandProfile {
            s,
            epsilon,
            omega_c,
            omega_rho,
            cutoff,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(invalid(format!("s must be positive, got {}", self.s)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.omega_rho.is_finite() && self.omega_rho > 0.0) {
            return Err(invalid(format!("omega_rho must be positive, got {}", self.omega_rho)));
        }
        if !(self.omega_c.is_finite() && self.omega_c > self.omega_rho) {
            return Err(invalid(format!(
                "omega_c must exceed omega_rho, got {} <= {}",
                self.omega_c, self.omega_rho
            )));
        }
        Ok(())
    }

    fn eps2(&self) -> f64 {
        self.epsilon * self.epsilon
    }

    /// Cutoff factor `χ(|ω|)` multiplying the bare power law.
    pub fn cutoff_factor(&self, abs_omega: f64) -> f64 {
        match self.cutoff {
            CutoffKind::Exponential => (-abs_omega / self.omega_c).exp(),
            CutoffKind::Sharp => {
                if abs_omega <= self.omega_c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `C̃(ω)`. Returns `+∞` at `ω = 0` when `s < 1`.
    pub fn spectral_function(&self, omega: f64) -> f64 {
        let a = omega.abs();
        let chi = self.cutoff_factor(a);
        if chi == 0.0 {
            return 0.0;
        }
        if a == 0.0 {
            return if self.s < 1.0 {
                f64::INFINITY
            } else if self.s == 1.0 {
                2.0 * PI * self.eps2()
            } else {
                0.0
            };
        }
        2.0 * PI * self.eps2() * a.powf(self.s - 1.0) * chi
    }

    /// `C(0) = ∫ C̃(ω) dω/2π`.
    pub fn c0(&self) -> f64 {
        match self.cutoff {
            CutoffKind::Sharp => 2.0 * self.eps2() * self.omega_c.powf(self.s) / self.s,
            CutoffKind::Exponential => {
                2.0 * self.eps2() * gamma_fn(self.s) * self.omega_c.powf(self.s)
            }
        }
    }

    /// Correlation function `C(t) = ∫ C̃(ω) e^(-iωt) dω/2π`.
    ///
    /// Real and even in `t` for a symmetric band; returned as complex to
    /// match the realized kernels of finite lattices.
    pub fn correlation_function(&self, t: f64) -> Result<Complex64> {
        if !t.is_finite() {
            return Err(invalid(format!("time must be finite, got {t}")));
        }
        let e2 = self.eps2();
        let s = self.s;
        let wc = self.omega_c;
        let re = match self.cutoff {
            CutoffKind::Exponential => {
                2.0 * e2
                    * gamma_fn(s)
                    * (wc.powi(-2) + t * t).powf(-0.5 * s)
                    * (s * (wc * t).atan()).cos()
            }
            CutoffKind::Sharp => 2.0 * e2 * wc.powf(s) * sharp_cosine_moment(s, wc * t.abs())?,
        };
        Ok(Complex64::new(re, 0.0))
    }

    /// Wigner time `t₀ = [2πε²/(Γ(3-s) sin(sπ/2))]^(-1/(2-s))`.
    pub fn wigner_time(&self, variant: WignerVariant) -> Result<f64> {
        require_band(self.s, "wigner_time")?;
        if self.epsilon == 0.0 {
            return Ok(f64::INFINITY);
        }
        let s = self.s;
        let denom = match variant {
            WignerVariant::Exact => gamma_fn(3.0 - s) * (0.5 * s * PI).sin(),
            WignerVariant::Approx => (2.0 - s) * s,
        };
        Ok((2.0 * PI * self.eps2() / denom).powf(-1.0 / (2.0 - s)))
    }

    /// Bounds of the universal scaling window `(ω_ϱ e^(1/s), ω_c e^(-1/(2-s)))`.
    pub fn universal_window(&self) -> (f64, f64) {
        let s = self.s;
        let lo = self.omega_rho * (1.0 / s).exp();
        let hi = if s < 2.0 {
            self.omega_c * (-1.0 / (2.0 - s)).exp()
        } else {
            0.0
        };
        (lo, hi)
    }

    /// Lamb shift from the universal formula `πε² cot(sπ/2) |ω|^(s-1) sgn ω`,
    /// flagged when `ω` is outside the scaling window.
    pub fn lamb_shift(&self, omega: f64) -> Result<LambShift> {
        self.lamb_shift_with(omega, LambShiftFormula::Universal)
    }

    pub fn lamb_shift_with(&self, omega: f64, formula: LambShiftFormula) -> Result<LambShift> {
        let a = omega.abs();
        let (lo, hi) = self.universal_window();
        let in_window = a > lo && a < hi;
        let e2 = self.eps2();
        let s = self.s;
        let chosen = match formula {
            LambShiftFormula::Auto => {
                if a == 0.0 || in_window || !(s > 0.0 && s < 2.0) {
                    LambShiftFormula::Universal
                } else if a >= hi {
                    LambShiftFormula::MarginalUpper
                } else {
                    LambShiftFormula::MarginalLower
                }
            }
            f => f,
        };
        let value = if omega == 0.0 {
            0.0
        } else {
            match chosen {
                LambShiftFormula::Universal => {
                    require_band(s, "lamb_shift")?;
                    PI * e2 / (0.5 * s * PI).tan() * a.powf(s - 1.0) * omega.signum()
                }
                LambShiftFormula::MarginalUpper => {
                    -e2 * omega * (1.0 - (self.omega_c / omega).powi(2)).abs().ln()
                }
                LambShiftFormula::MarginalLower => {
                    e2 / omega * ((omega / self.omega_rho).powi(2) - 1.0).abs().ln()
                }
                LambShiftFormula::Auto => unreachable!(),
            }
        };
        Ok(LambShift {
            value,
            formula: chosen,
            in_window,
        })
    }

    /// Integration range `[lo, hi]` in `|ω'|` used by the finite-band Lamb
    /// shift, plus the cutoff factor on it.
    fn finite_band(&self) -> (f64, f64) {
        match self.cutoff {
            CutoffKind::Sharp => (self.omega_rho, self.omega_c),
            CutoffKind::Exponential => (0.0, f64::INFINITY),
        }
    }

    /// Lamb shift `PV ∫ C̃(ω')/(ω-ω') dω'/2π` evaluated numerically with the
    /// profile's cutoffs. For the sharp cutoff the band is `ω_ϱ ≤ |ω'| ≤ ω_c`.
    pub fn lamb_shift_finite(&self, omega: f64) -> Result<f64> {
        let (lo, hi) = self.finite_band();
        self.lamb_shift_pv(omega, lo, hi)
    }

    /// Like [`lamb_shift_finite`](Self::lamb_shift_finite) but with the band
    /// extending down to `ω' = 0`, so that `Δ - iC̃/2` is an exact Hilbert
    /// pair.
    pub fn lamb_shift_hilbert(&self, omega: f64) -> Result<f64> {
        let (_, hi) = self.finite_band();
        self.lamb_shift_pv(omega, 0.0, hi)
    }

    fn lamb_shift_pv(&self, omega: f64, lo: f64, hi: f64) -> Result<f64> {
        if omega == 0.0 || self.epsilon == 0.0 {
            return Ok(0.0);
        }
        let a = omega.abs();
        let s = self.s;
        let x_lo = if lo > 0.0 { (lo / a).ln() } else { -40.0 / s };
        let x_hi = if hi.is_finite() {
            (hi / a).ln()
        } else {
            (40.0 * self.omega_c / a).ln().max(1.0)
        };
        if x_hi <= x_lo {
            return Ok(0.0);
        }
        let chi = |x: f64| match self.cutoff {
            CutoffKind::Sharp => 1.0,
            CutoffKind::Exponential => (-(a * x.exp()) / self.omega_c).exp(),
        };
        let g = |x: f64| ((s - 1.0) * x).exp() * chi(x);
        let tol = 1e-13;
        let pv = if x_lo < 0.0 && x_hi > 0.0 {
            let g0 = g(0.0);
            let h = |x: f64| {
                if x.abs() < 1e-6 {
                    // g(x)/sinh x - g0/x → g'(0) + O(x)
                    let d = 1e-4;
                    (g(d) - g(-d)) / (2.0 * d)
                } else {
                    g(x) / x.sinh() - g0 / x
                }
            };
            integrate_pieces(h, &[x_lo, 0.0, x_hi], tol, 1e-12)? + g0 * (x_hi / -x_lo).ln()
        } else {
            integrate(|x| g(x) / x.sinh(), x_lo, x_hi, tol, 1e-12)?
        };
        Ok(-self.eps2() * a.powf(s - 1.0) * omega.signum() * pv)
    }

    /// Core frequencies `γ₀` and `γₒ`, switching to the logarithmic limits
    /// when the universal `γ₀` falls outside the scaling window.
    pub fn core_frequencies(&self) -> Result<CoreFrequencies> {
        require_band(self.s, "core_frequencies")?;
        let s = self.s;
        let e2 = self.eps2();
        let g0 = (e2 / (0.5 * s * PI).sin().abs()).powf(1.0 / (2.0 - s));
        let go = (e2 / (2.0 - s)).powf(1.0 / (2.0 - s));
        let (lo, hi) = self.universal_window();
        let (gamma0, regime) = if g0 >= hi && s > 1.0 {
            (self.omega_c * (-0.5 / e2).exp(), CoreRegime::MarginalUpper)
        } else if g0 <= lo && s < 1.0 {
            let v = self.epsilon * (self.epsilon / self.omega_rho).ln();
            (v.abs(), CoreRegime::MarginalLower)
        } else {
            (g0, CoreRegime::Universal)
        };
        Ok(CoreFrequencies {
            gamma0,
            gamma_o: go,
            regime,
        })
    }

    /// `∫_{|ω|>γ} C̃(ω)/ω² dω/2π`, the first-order probability carried by
    /// the band outside `γ`.
    pub fn tail_weight(&self, gamma: f64) -> Result<f64> {
        let s = self.s;
        let (y_hi, chi): (f64, Box<dyn Fn(f64) -> f64>) = match self.cutoff {
            CutoffKind::Sharp => {
                if gamma >= self.omega_c {
                    return Ok(0.0);
                }
                (self.omega_c.ln(), Box::new(|_| 1.0))
            }
            CutoffKind::Exponential => {
                let wc = self.omega_c;
                (
                    (60.0 * wc).ln().max(gamma.ln() + 1.0),
                    Box::new(move |w: f64| (-w / wc).exp()),
                )
            }
        };
        // ω = e^y turns ω^(s-3) dω into e^((s-2)y) dy.
        let f = |y: f64| ((s - 2.0) * y).exp() * chi(y.exp());
        let v = integrate(f, gamma.ln(), y_hi, 1e-15, 1e-12)?;
        Ok(2.0 * self.eps2() * v)
    }

    /// Solve `tail_weight(γ) = fraction` for `γ` by bisection.
    pub fn crossover_frequency_self_consistent(&self, fraction: f64) -> Result<f64> {
        require_band(self.s, "crossover_frequency")?;
        if !(fraction > 0.0 && fraction.is_finite()) {
            return Err(invalid("fraction must be positive"));
        }
        if self.epsilon == 0.0 {
            return Err(invalid("epsilon = 0 has no crossover frequency"));
        }
        let mut hi = match self.cutoff {
            CutoffKind::Sharp => self.omega_c,
            CutoffKind::Exponential => 50.0 * self.omega_c,
        };
        let mut lo = hi;
        while self.tail_weight(lo)? < fraction {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(Error::Numerical("crossover frequency underflow".into()));
            }
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if self.tail_weight(mid)? > fraction {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-13 {
                break;
            }
        }
        Ok((lo * hi).sqrt())
    }

    pub fn time_scales(&self) -> Result<TimeScales> {
        require_band(self.s, "time_scales")?;
        let s = self.s;
        let t0 = self.wigner_time(WignerVariant::Exact)?;
        let t0_approx = self.wigner_time(WignerVariant::Approx)?;
        let amp = 2.0 * ((s - 1.0).abs() * PI).sin() / ((2.0 - s) * PI);
        let t_inf = if amp == 0.0 {
            f64::INFINITY
        } else {
            (2.0 * amp.ln()).abs().powf(1.0 / (2.0 - s)) * t0
        };
        let cf = self.core_frequencies()?;
        Ok(TimeScales {
            t0,
            t0_approx,
            t_inf,
            t_inf_numeric: asymptote_crossing(s).map(|x| x * t0),
            t_o: 1.0 / cf.gamma_o,
            t_h: 2.0 * PI / self.omega_rho,
            t_c: 2.0 * PI / self.omega_c,
        })
    }

    /// Border `γ(t)` of the spreading core at time `t`, clamped to
    /// `[ω_ϱ, γₒ]`.
    ///
    /// Solves `ε²[(t^(2-s) - γ^s t²)/s + t^(2-s)/(2-s)] = 1/2`. That balance
    /// assumes `γ t ≤ 1`; for `γ t > 1` only the tail term survives with its
    /// lower limit moved to `γ`, which keeps the root monotone in `t`.
    pub fn core_border_of_time(&self, t: f64) -> Result<CoreBorder> {
        require_band(self.s, "core_border_of_time")?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid(format!("time must be positive, got {t}")));
        }
        let s = self.s;
        let e2 = self.eps2();
        let f = |g: f64| {
            if g * t <= 1.0 {
                e2 * ((t.powf(2.0 - s) - g.powf(s) * t * t) / s + t.powf(2.0 - s) / (2.0 - s))
            } else {
                e2 * g.powf(s - 2.0) / (2.0 - s)
            }
        };
        let floor = self.omega_rho;
        let ceil = self.core_frequencies()?.gamma_o.max(floor);
        if f(floor) <= 0.5 {
            return Ok(CoreBorder {
                gamma: floor,
                clamp: Some(Clamp::Floor),
            });
        }
        if f(ceil) >= 0.5 {
            return Ok(CoreBorder {
                gamma: ceil,
                clamp: Some(Clamp::Ceiling),
            });
        }
        let (mut lo, mut hi) = (floor, ceil);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        Ok(CoreBorder {
            gamma: 0.5 * (lo + hi),
            clamp: None,
        })
    }
}

/// `∫₀¹ u^(s-1) cos(x u) du`.
fn sharp_cosine_moment(s: f64, x: f64) -> Result<f64> {
    if x >= 12.0 {
        return Ok(sharp_cosine_moment_cf(s, x));
    }
    sharp_cosine_moment_quad(s, x)
}

/// `∫₀¹ u^(s-1) cos(xu) du = Γ(s) cos(πs/2) x^(-s) - Re[e^(ix) h(-ix)]`,
/// where `Γ(s, z) = e^(-z) z^s h(z)` is evaluated by its continued fraction
/// (modified Lentz). Converges quickly for `x` beyond a few units.
fn sharp_cosine_moment_cf(s: f64, x: f64) -> f64 {
    let z = Complex64::new(0.0, -x);
    let tiny = Complex64::new(1e-300, 0.0);
    let mut b = z + 1.0 - s;
    let mut c = Complex64::new(1e300, 0.0);
    let mut d = b.finv();
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.norm() < 1e-300 {
            d = tiny;
        }
        c = b + an * c.finv();
        if c.norm() < 1e-300 {
            c = tiny;
        }
        d = d.finv();
        let del = d * c;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    gamma_fn(s) * (0.5 * PI * s).cos() * x.powf(-s) - (Complex64::from_polar(1.0, x) * h).re
}

fn sharp_cosine_moment_quad(s: f64, x: f64) -> Result<f64> {
    if x < 1e-3 {
        // Two-term series is exact to ~1e-13 here.
        return Ok(1.0 / s - x * x / (2.0 * (s + 2.0)) + x.powi(4) / (24.0 * (s + 4.0)));
    }
    let first = (PI / x).min(1.0);
    // u = v^(1/s) removes the endpoint singularity on the first panel.
    let head = integrate(
        |v: f64| (x * v.powf(1.0 / s)).cos(),
        0.0,
        first.powf(s),
        1e-15,
        1e-13,
    )? / s;
    if first >= 1.0 {
        return Ok(head);
    }
    let mut breaks = vec![first];
    let mut u = first;
    while u < 1.0 {
        u = (u + PI / x).min(1.0);
        breaks.push(u);
    }
    let tail = integrate_pieces(|u: f64| u.powf(s - 1.0) * (x * u).cos(), &breaks, 1e-15, 1e-13)?;
    Ok(head + tail)
}

/// Largest `x = t/t₀` at which `|2 sin((s-1)π)/((2-s)π)| x^(-(2-s))` overtakes
/// `exp(-x^(2-s)/2)`, or `None` when the power law dominates everywhere.
fn asymptote_crossing(s: f64) -> Option<f64> {
    let amp = (2.0 * ((s - 1.0) * PI).sin() / ((2.0 - s) * PI)).abs();
    if amp == 0.0 {
        return None;
    }
    let a = 2.0 - s;
    let f = |lx: f64| amp.ln() - a * lx + 0.5 * lx.exp().powf(a);
    let grid: Vec<f64> = (0..=2000).map(|i| -7.0 + 17.0 * i as f64 / 2000.0).collect();
    let mut last = None;
    for w in grid.windows(2) {
        if f(w[0]) < 0.0 && f(w[1]) >= 0.0 {
            last = Some((w[0], w[1]));
        }
    }
    let (mut lo, mut hi) = last?;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((0.5 * (lo + hi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_moment_branches_agree() {
        for s in [0.3, 0.5, 1.0, 1.5, 1.9, 2.5] {
            for x in [12.0, 13.7, 40.0, 200.0, 1234.5] {
                let q = sharp_cosine_moment_quad(s, x).unwrap();
                let c = sharp_cosine_moment_cf(s, x);
                assert!((q - c).abs() < 1e-12 * (1.0 + q.abs()), "s={s} x={x} {q} {c}");
            }
        }
    }

    fn sharp(s: f64, eps: f64, wc: f64, wr: f64) -> BandProfile {
        BandProfile::new(s, eps, wc, wr, CutoffKind::Sharp).unwrap()
    }

    fn expo(s: f64, eps: f64, wc: f64) -> BandProfile {
        BandProfile::new(s, eps, wc, 1e-6, CutoffKind::Exponential).unwrap()
    }

    #[test]
    fn rejects_invalid_profiles() {
        assert!(BandProfile::new(0.0, 1.0, 10.0, 1.0, CutoffKind::Sharp).is_err());
        assert!(BandProfile::new(1.0, -1.0, 10.0, 1.0, CutoffKind::Sharp).is_err());
        assert!(BandProfile::new(1.0, 1.0, 1.0, 1.0, CutoffKind::Sharp).is_err());
        assert!(BandProfile::new(1.0, 1.0, 10.0, 0.0, CutoffKind::Sharp).is_err());
    }

    #[test]
    fn spectral_function_values() {
        let p = expo(1.0, 0.3, 1e12);
        assert!((p.spectral_function(0.0) - 2.0 * PI * 0.09).abs() < 1e-15);
        assert_eq!(sharp(1.5, 1.0, 10.0, 1.0).spectral_function(0.0), 0.0);
        assert_eq!(sharp(0.5, 1.0, 10.0, 1.0).spectral_function(0.0), f64::INFINITY);
        let v = sharp(1.5, 1.44, 800.0, 1.0).spectral_function(1.0);
        assert!((v - 13.028_813_052_967_589).abs() < 1e-10, "{v}");
        assert_eq!(sharp(1.5, 1.0, 10.0, 1.0).spectral_function(10.5), 0.0);
    }

    #[test]
    fn correlation_at_zero_matches_closed_form() {
        for s in [0.3, 0.75, 1.0, 1.5, 1.9] {
            let p = sharp(s, 0.7, 37.0, 1.0);
            let c = p.correlation_function(0.0).unwrap().re;
            assert!((c / p.c0() - 1.0).abs() < 1e-9);
            let c = p.correlation_function(1e-9).unwrap().re;
            assert!((c / p.c0() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn exponential_ohmic_correlation_is_lorentzian() {
        let p = expo(1.0, 0.4, 20.0);
        for t in [0.0, 0.01, 0.1, 1.0, 5.0] {
            let c = p.correlation_function(t).unwrap();
            let exact = 2.0 * 0.16 * 20.0 / (1.0 + (20.0 * t).powi(2));
            assert!((c.re - exact).abs() < 1e-13 * exact.max(1.0));
            assert_eq!(c.im, 0.0);
        }
    }

    #[test]
    fn sharp_correlation_matches_riemann_sum() {
        // Midpoint sum with 10^6 cells of 2ε² ∫₀^ωc ω^(s-1) cos(ωt) dω, with the
        // first cell integrated analytically to tame the endpoint singularity.
        let (s, eps, wc, t) = (1.5, 1.0, 100.0, 0.5);
        let n = 1_000_000usize;
        let h = wc / n as f64;
        let mut sum = h.powf(s) / s; // ∫₀^h ω^(s-1) dω, cos ≈ 1 there
        for k in 1..n {
            let w = (k as f64 + 0.5) * h;
            sum += h * w.powf(s - 1.0) * (w * t).cos();
        }
        let oracle = 2.0 * eps * eps * sum;
        let c = sharp(s, eps, wc, 1.0).correlation_function(t).unwrap().re;
        assert!(((c - oracle) / oracle).abs() < 1e-6, "{c} vs {oracle}");
    }

    #[test]
    fn correlation_is_even() {
        let p = sharp(1.3, 0.5, 50.0, 1.0);
        for t in [0.01, 0.3, 2.0, 17.0] {
            let a = p.correlation_function(t).unwrap();
            let b = p.correlation_function(-t).unwrap();
            assert_eq!(a, b.conj());
        }
    }

    #[test]
    fn wigner_time_values() {
        let p = sharp(1.0, 0.3, 100.0, 1.0);
        let t0 = p.wigner_time(WignerVariant::Exact).unwrap();
        assert!((t0 - 1.0 / (2.0 * PI * 0.09)).abs() < 1e-12);
        let ta = p.wigner_time(WignerVariant::Approx).unwrap();
        assert!((t0 - ta).abs() < 1e-12);
        let t0 = sharp(1.5, 1.44, 800.0, 1.0).wigner_time(WignerVariant::Exact).unwrap();
        assert!((t0 / 2.314e-3 - 1.0).abs() < 1e-3, "{t0}");
        assert!(sharp(2.0, 1.0, 10.0, 1.0).wigner_time(WignerVariant::Exact).is_err());
    }

    #[test]
    fn universal_lamb_shift() {
        let p = sharp(1.0, 0.7, 100.0, 1.0);
        assert!(p.lamb_shift(3.0).unwrap().value.abs() < 1e-15);
        let p = sharp(0.5, 1.0, 1e4, 1e-3);
        let l = p.lamb_shift(1.0).unwrap();
        assert!((l.value - PI).abs() < 1e-12);
        assert!(l.in_window);
        assert!(!p.lamb_shift(9e3).unwrap().in_window);
    }

    #[test]
    fn universal_lamb_shift_matches_finite_band_pv() {
        // Deep inside the window the cutoffs contribute corrections of order
        // (ω/ω_c)^(2-s) and (ω_ϱ/ω)^s.
        let p = sharp(0.5, 1.0, 1e6, 1e-6);
        let finite = p.lamb_shift_finite(1.0).unwrap();
        assert!((finite / PI - 1.0).abs() < 0.01, "{finite}");
        for s in [0.5, 1.3, 1.7] {
            let p = sharp(s, 0.8, 1e8, 1e-8);
            let u = p.lamb_shift(1.0).unwrap().value;
            let f = p.lamb_shift_finite(1.0).unwrap();
            assert!((f / u - 1.0).abs() < 0.02, "s={s}: {f} vs {u}");
        }
    }

    #[test]
    fn finite_band_lamb_shift_matches_direct_pv_integral() {
        // Oracle: ε² PV∫ C̃/(ω-ω') with the singular point excised
        // symmetrically, integrated on a plain midpoint grid.
        let p = sharp(1.4, 0.6, 5.0, 0.01);
        let w = 1.3;
        // h chosen so that ω sits on a cell boundary.
        let n = 1_996_000usize;
        let (lo, hi) = (0.01, 5.0);
        let mut sum = 0.0;
        for sign in [1.0, -1.0] {
            let h = (hi - lo) / n as f64;
            for k in 0..n {
                let x = lo + (k as f64 + 0.5) * h;
                let wp = sign * x;
                sum += h * x.powf(0.4) / (w - wp);
            }
        }
        let oracle = 0.36 * sum;
        let v = p.lamb_shift_finite(w).unwrap();
        assert!((v - oracle).abs() < 1e-4 * oracle.abs(), "{v} vs {oracle}");
        assert!((p.lamb_shift_finite(-w).unwrap() + v).abs() < 1e-12);
    }

    #[test]
    fn finite_band_lamb_shift_reduces_to_upper_marginal_at_s2() {
        let p = BandProfile::new(2.0, 0.5, 10.0, 1e-9, CutoffKind::Sharp).unwrap();
        for w in [0.5, 3.0, 9.0, 12.0] {
            let exact = p.lamb_shift_finite(w).unwrap();
            let marginal = p.lamb_shift_with(w, LambShiftFormula::MarginalUpper).unwrap().value;
            assert!((exact - marginal).abs() < 1e-9 * marginal.abs().max(1.0), "{w}");
        }
    }

    #[test]
    fn lamb_shift_auto_dispatch() {
        let p = sharp(1.95, 0.5, 10.0, 0.01);
        let l = p.lamb_shift_with(2.0, LambShiftFormula::Auto).unwrap();
        assert_eq!(l.formula, LambShiftFormula::MarginalUpper);
        let p = sharp(0.05, 0.5, 10.0, 0.01);
        let l = p.lamb_shift_with(0.5, LambShiftFormula::Auto).unwrap();
        assert_eq!(l.formula, LambShiftFormula::MarginalLower);
        let p = sharp(1.0, 0.5, 1e4, 0.01);
        let l = p.lamb_shift_with(1.0, LambShiftFormula::Auto).unwrap();
        assert_eq!(l.formula, LambShiftFormula::Universal);
    }

    #[test]
    fn exponential_finite_lamb_shift_is_odd_and_decays() {
        let p = expo(1.5, 0.5, 10.0);
        let a = p.lamb_shift_finite(200.0).unwrap();
        // Far above the band Δ(ω) → C(0)/ω.
        assert!((a * 200.0 / p.c0() - 1.0).abs() < 0.1, "{}", a * 200.0 / p.c0());
        let b = p.lamb_shift_finite(-200.0).unwrap();
        assert!((a + b).abs() < 1e-15);
    }

    #[test]
    fn core_frequencies_ohmic() {
        let p = sharp(1.0, 0.3, 100.0, 0.01);
        let c = p.core_frequencies().unwrap();
        assert!((c.gamma0 - 0.09).abs() < 1e-14);
        assert!((c.gamma_o - 0.09).abs() < 1e-14);
        assert_eq!(c.regime, CoreRegime::Universal);
    }

    #[test]
    fn core_frequency_upper_marginal_limit() {
        let p = sharp(1.999, 0.5, 100.0, 0.01);
        let c = p.core_frequencies().unwrap();
        assert_eq!(c.regime, CoreRegime::MarginalUpper);
        assert!((c.gamma0 - 100.0 * (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn self_consistent_crossover_frequency() {
        for s in [0.3, 0.8, 1.0, 1.5, 1.7] {
            let p = sharp(s, 0.4, 1e9, 1e-9);
            let g = p.crossover_frequency_self_consistent(0.5).unwrap();
            assert!((p.tail_weight(g).unwrap() - 0.5).abs() < 1e-6);
            // 2ε²(γ^(s-2) - ω_c^(s-2))/(2-s) = f in closed form.
            let root = |f: f64| (f * (2.0 - s) / (2.0 * 0.16) + 1e9f64.powf(s - 2.0)).powf(1.0 / (s - 2.0));
            assert!((g / root(0.5) - 1.0).abs() < 1e-9, "s={s}");
            // The closed-form γₒ corresponds to a tail weight of 2, so the 50%
            // root is 4^(1/(2-s)) times larger.
            let go = p.core_frequencies().unwrap().gamma_o;
            assert!((g / go / 4f64.powf(1.0 / (2.0 - s)) - 1.0).abs() < 2e-2, "s={s}");
            let g2 = p.crossover_frequency_self_consistent(2.0).unwrap();
            assert!((g2 / root(2.0) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn crossover_time_values() {
        let p = sharp(1.5, 1.44, 800.0, 1.0);
        let ts = p.time_scales().unwrap();
        let expected = (2.0 * (4.0 / PI).ln()).abs().powi(2);
        assert!((ts.t_inf / ts.t0 - expected).abs() < 1e-12);
        assert!((expected - 0.2336).abs() < 5e-4);
        // The asymptotes never cross at s = 1.5.
        assert!(ts.t_inf_numeric.is_none());
        let ts = sharp(1.0, 0.2, 100.0, 0.01).time_scales().unwrap();
        assert!(ts.t_inf.is_infinite());
        let ts = sharp(1.1, 0.2, 100.0, 0.01).time_scales().unwrap();
        let x = ts.t_inf_numeric.unwrap() / ts.t0;
        let amp = 2.0 * (0.1 * PI).sin() / (0.9 * PI);
        assert!(((-0.5 * x.powf(0.9)).exp() - amp * x.powf(-0.9)).abs() < 1e-10);
        assert!(x > ts.t_inf / ts.t0);
    }

    #[test]
    fn time_scale_ordering() {
        let ts = sharp(1.5, 1.44, 800.0, 1.0).time_scales().unwrap();
        assert!((ts.t_h - 2.0 * PI).abs() < 1e-14);
        assert!((ts.t_c - 2.0 * PI / 800.0).abs() < 1e-14);
        assert!(!ts.ordered(), "t0 = {} is below t_c", ts.t0);
        let ts = sharp(1.5, 0.5, 800.0, 1.0).time_scales().unwrap();
        assert!(ts.ordered());
    }

    #[test]
    fn core_border_clamps_and_residual() {
        let p = sharp(1.5, 1.0, 1e3, 1e-3);
        let ts = p.time_scales().unwrap();
        let b = p.core_border_of_time(1e-3 * ts.t0).unwrap();
        assert_eq!(b.clamp, Some(Clamp::Floor));
        assert_eq!(b.gamma, 1e-3);
        let b = p.core_border_of_time(100.0 * ts.t_o).unwrap();
        assert_eq!(b.clamp, Some(Clamp::Ceiling));
        let go = p.core_frequencies().unwrap().gamma_o;
        assert_eq!(b.gamma, go);

        let mut prev = 0.0;
        let mut unclamped = 0;
        for k in 0..4000 {
            let t = ts.t0 * (ts.t_o / ts.t0).powf(k as f64 / 3999.0);
            let b = p.core_border_of_time(t).unwrap();
            assert!(b.gamma >= prev);
            prev = b.gamma;
            if b.clamp.is_none() {
                unclamped += 1;
                let g = b.gamma;
                let (s, e2) = (1.5, 1.0);
                let lhs = if g * t <= 1.0 {
                    e2 * ((t.powf(2.0 - s) - g.powf(s) * t * t) / s + t.powf(2.0 - s) / (2.0 - s))
                } else {
                    e2 * g.powf(s - 2.0) / (2.0 - s)
                };
                assert!((lhs - 0.5).abs() < 1e-10);
            }
        }
        assert!(unclamped > 5);
    }

    proptest! {
        #[test]
        fn spectral_function_even(s in 0.1f64..3.0, w in -50.0f64..50.0) {
            let p = sharp(s, 0.8, 30.0, 0.1);
            prop_assert_eq!(p.spectral_function(w), p.spectral_function(-w));
            let q = expo(s, 0.8, 30.0);
            prop_assert_eq!(q.spectral_function(w), q.spectral_function(-w));
        }

        #[test]
        fn lamb_shift_odd(s in 0.1f64..1.95, w in 0.01f64..50.0) {
            let p = sharp(s, 0.8, 30.0, 0.1);
            let a = p.lamb_shift(w).unwrap().value;
            let b = p.lamb_shift(-w).unwrap().value;
            prop_assert!((a + b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn wigner_time_scaling(s in 0.05f64..1.95, eps in 0.01f64..3.0) {
            let a = sharp(s, eps, 100.0, 0.01).wigner_time(WignerVariant::Exact).unwrap();
            let b = sharp(s, 2.0 * eps, 100.0, 0.01).wigner_time(WignerVariant::Exact).unwrap();
            let expected = 2f64.powf(-2.0 / (2.0 - s));
            prop_assert!((b / a / expected - 1.0).abs() < 1e-12);
        }

        #[test]
        fn crossover_ratio_independent_of_eps(s in 0.2f64..1.9, eps in 0.05f64..3.0) {
            let ts = sharp(s, eps, 100.0, 0.01).time_scales().unwrap();
            let r = sharp(s, 1.0, 100.0, 0.01).time_scales().unwrap();
            if ts.t_inf.is_finite() {
                prop_assert!((ts.t_inf / ts.t0 - r.t_inf / r.t0).abs() < 1e-9 * r.t_inf / r.t0);
            }
        }
    }
}
