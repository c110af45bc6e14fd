//! Time evolution on the self-expanding lattice.
//!
//! `e^{-iHt}` is applied by a Chebyshev expansion over the banded (or
//! arrowhead) matvec. Amplitudes are kept as separate real and imaginary
//! arrays inside the recursion so the band loops vectorize.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen;
use crate::error::{invalid, Error, Result};
use crate::hamiltonian::{CouplingMatrix, ModelKind, ModelSpec, Storage};

/// Lattice amplitudes at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavepacket {
    pub amps: Vec<Complex64>,
    /// Lattice index of `amps[0]`.
    pub lo: i64,
    pub rho: f64,
    pub t: f64,
}

impl Wavepacket {
    /// `ψ_n = δ_{n,0}` on `[lo, hi]`.
    pub fn initial(spec: &ModelSpec, lattice: (i64, i64)) -> Result<Self> {
        let (lo, hi) = lattice;
        if lo > 0 || hi < 0 {
            return Err(invalid("lattice must contain site 0"));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); (hi - lo + 1) as usize];
        amps[(-lo) as usize] = Complex64::new(1.0, 0.0);
        Ok(Wavepacket {
            amps,
            lo,
            rho: spec.rho,
            t: 0.0,
        })
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.amps.len() as i64 - 1
    }

    pub fn amplitude(&self, n: i64) -> Complex64 {
        if n < self.lo || n > self.hi() {
            Complex64::new(0.0, 0.0)
        } else {
            self.amps[(n - self.lo) as usize]
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Energies `E_n` of the lattice sites.
    pub fn energies(&self) -> Vec<f64> {
        (0..self.amps.len())
            .map(|i| (self.lo + i as i64) as f64 / self.rho)
            .collect()
    }

    fn pad_to(&mut self, lo: i64, hi: i64) {
        let zero = Complex64::new(0.0, 0.0);
        let front = (self.lo - lo) as usize;
        let back = (hi - self.hi()) as usize;
        let mut amps = Vec::with_capacity(self.amps.len() + front + back);
        amps.resize(front, zero);
        amps.extend_from_slice(&self.amps);
        amps.resize(amps.len() + back, zero);
        self.amps = amps;
        self.lo = lo;
    }
}

/// How the spectral interval of `H` is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsMethod {
    /// Gershgorin discs: always safe, loose for wide random bands.
    Gershgorin,
    /// `[min E - ‖V‖, max E + ‖V‖]` with `‖V‖` from a Lanczos estimate plus
    /// a safety margin; chunks that lose unitarity are redone with
    /// Gershgorin bounds. Arrowhead matrices always use their exact
    /// secular-equation bounds.
    #[default]
    Estimated,
}

/// Options for [`Propagator`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagatorOptions {
    pub tol: f64,
    /// Edge probability that triggers lattice growth.
    pub threshold: f64,
    /// Sites added per edge on growth; `None` means `10 b`.
    pub growth: Option<usize>,
    /// Longest time advanced between edge checks, in units of `1/‖H‖`.
    pub max_chunk: f64,
    pub bounds: BoundsMethod,
    /// Upper limit on the lattice size.
    pub max_sites: usize,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        PropagatorOptions {
            tol: 1e-10,
            threshold: 1e-12,
            growth: None,
            max_chunk: 400.0,
            bounds: BoundsMethod::Estimated,
            max_sites: 2_000_000,
        }
    }
}

/// Per-run diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationStats {
    pub matvecs: u64,
    pub expansions: u32,
    pub chunks_redone: u32,
    pub max_norm_drift: f64,
}

/// `H = diag(E_n) + V` for one realization, with its spectral bounds.
#[derive(Debug, Clone)]
pub struct Propagator {
    spec: ModelSpec,
    v: CouplingMatrix,
    opts: PropagatorOptions,
    bounds: (f64, f64),
    pub stats: PropagationStats,
}

impl Propagator {
    pub fn new(spec: ModelSpec, v: CouplingMatrix, opts: PropagatorOptions) -> Result<Self> {
        if !(opts.tol > 0.0 && opts.tol <= 1e-4) {
            return Err(invalid(format!("tol must be in (0, 1e-4], got {}", opts.tol)));
        }
        if spec.kind != v.kind() {
            return Err(invalid("spec and matrix disagree on the model kind"));
        }
        let mut p = Propagator {
            spec,
            v,
            opts,
            bounds: (0.0, 0.0),
            stats: PropagationStats::default(),
        };
        p.bounds = p.compute_bounds(opts.bounds);
        Ok(p)
    }

    /// Build the initial matrix for `spec` and wrap it.
    pub fn for_spec(spec: &ModelSpec, opts: PropagatorOptions) -> Result<Self> {
        let v = CouplingMatrix::build(spec)?;
        Self::new(*spec, v, opts)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn matrix(&self) -> &CouplingMatrix {
        &self.v
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn initial_state(&self) -> Result<Wavepacket> {
        Wavepacket::initial(&self.spec, self.v.lattice())
    }

    fn energy(&self, i: usize) -> f64 {
        self.spec.energy(self.v.lattice().0 + i as i64)
    }

    fn compute_bounds(&self, method: BoundsMethod) -> (f64, f64) {
        let n = self.v.size();
        let (lo, hi) = self.v.lattice();
        let (emin, emax) = (self.spec.energy(lo), self.spec.energy(hi));
        match (&self.v.storage, method) {
            (Storage::Arrow(row), _) => arrow_bounds(&self.spec, lo, row),
            (Storage::Banded(diags), BoundsMethod::Gershgorin) => {
                let mut radius = vec![0.0; n];
                for (k, d) in diags.iter().enumerate() {
                    for (i, v) in d.iter().enumerate() {
                        radius[i] += v.abs();
                        radius[i + k + 1] += v.abs();
                    }
                }
                let mut b = (f64::INFINITY, f64::NEG_INFINITY);
                for (i, r) in radius.iter().enumerate() {
                    let e = self.energy(i);
                    b.0 = f64::min(b.0, e - r);
                    b.1 = f64::max(b.1, e + r);
                }
                b
            }
            (Storage::Banded(diags), BoundsMethod::Estimated) => {
                let vn = lanczos_norm(diags, n, 60);
                let margin = 0.1 * vn + 1e-12;
                (emin - vn - margin, emax + vn + margin)
            }
        }
    }

    /// Scaled diagonal `(E_n - a)/h` of the current lattice.
    fn scaled_diagonal(&self, a: f64, h: f64) -> Vec<f64> {
        let lo = self.v.lattice().0;
        (0..self.v.size())
            .map(|i| (self.spec.energy(lo + i as i64) - a) / h)
            .collect()
    }

    /// `y ← α(D x + V x / h) - [subtract] y` on split real/imaginary arrays,
    /// where `D` is a precomputed scaled diagonal.
    #[allow(clippy::too_many_arguments)]
    fn apply_into(
        &self,
        diag: &[f64],
        h: f64,
        alpha: f64,
        subtract: bool,
        xr: &[f64],
        xi: &[f64],
        yr: &mut [f64],
        yi: &mut [f64],
    ) {
        let n = xr.len();
        let (yr, yi) = (&mut yr[..n], &mut yi[..n]);
        let diag = &diag[..n];
        if subtract {
            for i in 0..n {
                yr[i] = alpha * diag[i] * xr[i] - yr[i];
                yi[i] = alpha * diag[i] * xi[i] - yi[i];
            }
        } else {
            for i in 0..n {
                yr[i] = alpha * diag[i] * xr[i];
                yi[i] = alpha * diag[i] * xi[i];
            }
        }
        let scale = alpha / h;
        match &self.v.storage {
            Storage::Arrow(row) => {
                let c = (-self.v.lattice().0) as usize;
                let (xcr, xci) = (xr[c] * scale, xi[c] * scale);
                let row = &row[..n];
                // Eight independent partial sums let the reduction vectorize.
                let (mut sr, mut si) = ([0.0f64; 8], [0.0f64; 8]);
                let whole = n - n % 8;
                for j in (0..whole).step_by(8) {
                    for l in 0..8 {
                        let v = row[j + l];
                        sr[l] += v * xr[j + l];
                        si[l] += v * xi[j + l];
                    }
                }
                for i in whole..n {
                    sr[0] += row[i] * xr[i];
                    si[0] += row[i] * xi[i];
                }
                for i in 0..n {
                    yr[i] += row[i] * xcr;
                    yi[i] += row[i] * xci;
                }
                yr[c] += scale * sr.iter().sum::<f64>();
                yi[c] += scale * si.iter().sum::<f64>();
            }
            Storage::Banded(diags) => banded_accumulate(diags, scale, xr, xi, yr, yi),
        }
    }

    /// `Hψ` for a full complex vector on the current lattice.
    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let n = psi.len();
        let xr: Vec<f64> = psi.iter().map(|c| c.re).collect();
        let xi: Vec<f64> = psi.iter().map(|c| c.im).collect();
        let mut yr = vec![0.0; n];
        let mut yi = vec![0.0; n];
        let diag = self.scaled_diagonal(0.0, 1.0);
        self.apply_into(&diag, 1.0, 1.0, false, &xr, &xi, &mut yr, &mut yi);
        yr.into_iter().zip(yi).map(|(r, i)| Complex64::new(r, i)).collect()
    }

    /// `⟨ψ|H|ψ⟩`.
    pub fn energy_expectation(&self, psi: &Wavepacket) -> f64 {
        let hp = self.apply(&psi.amps);
        psi.amps.iter().zip(&hp).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Advance `psi` by `dt` with a single Chebyshev series.
    fn chebyshev_step(&mut self, psi: &mut Wavepacket, dt: f64, bounds: (f64, f64)) -> Result<()> {
        let (emin, emax) = bounds;
        let a = 0.5 * (emax + emin);
        let h = (0.5 * (emax - emin)).max(1e-300);
        let tau = h * dt;
        let coeffs = bessel_series(tau)?;
        let n = psi.amps.len();
        let diag = self.scaled_diagonal(a, h);
        let mut pr: Vec<f64> = psi.amps.iter().map(|c| c.re).collect();
        let mut pi: Vec<f64> = psi.amps.iter().map(|c| c.im).collect();
        let mut qr = vec![0.0; n];
        let mut qi = vec![0.0; n];
        // Result accumulators: Σ c_k φ_k, c_k = (2-δ_k0)(-i)^k J_k(τ).
        let mut rr: Vec<f64> = pr.iter().map(|x| coeffs[0] * x).collect();
        let mut ri: Vec<f64> = pi.iter().map(|x| coeffs[0] * x).collect();
        if coeffs.len() > 1 {
            self.apply_into(&diag, h, 1.0, false, &pr, &pi, &mut qr, &mut qi);
            self.stats.matvecs += 1;
            accumulate(&mut rr, &mut ri, &qr, &qi, 1, 2.0 * coeffs[1]);
        }
        for (k, &jk) in coeffs.iter().enumerate().skip(2) {
            // φ_k = 2 H̃ φ_{k-1} - φ_{k-2}, written over φ_{k-2} in (pr, pi).
            self.apply_into(&diag, h, 2.0, true, &qr, &qi, &mut pr, &mut pi);
            self.stats.matvecs += 1;
            accumulate(&mut rr, &mut ri, &pr, &pi, k, 2.0 * jk);
            std::mem::swap(&mut pr, &mut qr);
            std::mem::swap(&mut pi, &mut qi);
        }
        let phase = Complex64::from_polar(1.0, -a * dt);
        for (out, (r, i)) in psi.amps.iter_mut().zip(rr.into_iter().zip(ri)) {
            *out = phase * Complex64::new(r, i);
        }
        psi.t += dt;
        Ok(())
    }

    /// Advance to `t_target` without changing the lattice.
    pub fn evolve(&mut self, psi: &mut Wavepacket, t_target: f64) -> Result<()> {
        self.check_state(psi)?;
        if !(t_target >= psi.t) || !t_target.is_finite() {
            return Err(invalid(format!(
                "target time {t_target} precedes current time {}",
                psi.t
            )));
        }
        while psi.t < t_target {
            let dt = (t_target - psi.t).min(self.chunk_len());
            if dt <= 1e-15 * t_target.abs().max(1.0) {
                psi.t = t_target;
                break;
            }
            self.guarded_step(psi, dt)?;
        }
        Ok(())
    }

    fn chunk_len(&self) -> f64 {
        let h = 0.5 * (self.bounds.1 - self.bounds.0);
        self.opts.max_chunk / h.max(1e-300)
    }

    fn guarded_step(&mut self, psi: &mut Wavepacket, dt: f64) -> Result<()> {
        let before = psi.norm_sqr();
        let saved = if matches!(self.v.storage, Storage::Banded(_))
            && self.opts.bounds == BoundsMethod::Estimated
        {
            Some(psi.clone())
        } else {
            None
        };
        self.chebyshev_step(psi, dt, self.bounds)?;
        let drift = (psi.norm_sqr() - before).abs();
        if drift > 1e-11 || !drift.is_finite() {
            if let Some(saved) = saved {
                *psi = saved;
                self.bounds = self.compute_bounds(BoundsMethod::Gershgorin);
                self.stats.chunks_redone += 1;
                self.chebyshev_step(psi, dt, self.bounds)?;
            }
        }
        let drift = (psi.norm_sqr() - 1.0).abs();
        self.stats.max_norm_drift = self.stats.max_norm_drift.max(drift);
        if !(drift < 1e-8) {
            return Err(Error::Numerical(format!(
                "norm drift {drift:e} at t = {} exceeds the unitarity budget",
                psi.t
            )));
        }
        Ok(())
    }

    fn check_state(&self, psi: &Wavepacket) -> Result<()> {
        if psi.lo != self.v.lattice().0 || psi.amps.len() != self.v.size() {
            return Err(invalid("wavepacket lattice does not match the Hamiltonian"));
        }
        Ok(())
    }

    /// Largest probability among the `b` outermost sites on either side.
    pub fn edge_probability(&self, psi: &Wavepacket) -> f64 {
        let n = psi.amps.len();
        let w = self.spec.b.min(n);
        psi.amps[..w]
            .iter()
            .chain(&psi.amps[n - w..])
            .map(|a| a.norm_sqr())
            .fold(0.0, f64::max)
    }

    /// Grow the lattice by `growth` sites per edge (default `10 b`) when the
    /// edge probability exceeds `threshold`. Returns whether it grew.
    ///
    /// A Friedrichs lattice that already covers the band never grows: no
    /// site outside it couples to anything.
    pub fn expand_if_needed(
        &mut self,
        psi: &mut Wavepacket,
        threshold: f64,
        growth: Option<usize>,
    ) -> Result<bool> {
        self.check_state(psi)?;
        if !self.may_grow() {
            return Ok(false);
        }
        if self.edge_probability(psi) <= threshold {
            return Ok(false);
        }
        self.grow(psi, growth)?;
        Ok(true)
    }

    fn may_grow(&self) -> bool {
        let (lo, hi) = self.v.lattice();
        let b = self.spec.b as i64;
        !(self.spec.kind == ModelKind::Friedrichs && -lo >= b && hi >= b)
    }

    fn force_expand(&mut self, psi: &mut Wavepacket) -> Result<()> {
        self.grow(psi, self.opts.growth)
    }

    fn grow(&mut self, psi: &mut Wavepacket, growth: Option<usize>) -> Result<()> {
        let g = growth.unwrap_or(10 * self.spec.b);
        let new_size = self.v.size() + 2 * g;
        if new_size > self.opts.max_sites {
            return Err(Error::DimensionExceeded {
                requested: new_size,
                limit: self.opts.max_sites,
            });
        }
        self.v = self.v.extend(&self.spec, g)?;
        let (nlo, nhi) = self.v.lattice();
        psi.pad_to(nlo, nhi);
        self.bounds = self.compute_bounds(self.opts.bounds);
        self.stats.expansions += 1;
        Ok(())
    }

    /// Propagate through increasing `times`, growing the lattice as needed
    /// and calling `sample` at each time.
    pub fn run<F>(&mut self, psi: &mut Wavepacket, times: &[f64], mut sample: F) -> Result<()>
    where
        F: FnMut(&Wavepacket, &Propagator) -> Result<()>,
    {
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("sample times must be non-decreasing"));
        }
        for &t in times {
            while psi.t < t {
                self.expand_if_needed(psi, self.opts.threshold, self.opts.growth)?;
                let dt = (t - psi.t).min(self.chunk_len());
                if dt <= 1e-15 * t.abs().max(1.0) {
                    psi.t = t;
                    break;
                }
                // Amplitude can reach the edge within a chunk; if it did,
                // redo the chunk on the grown lattice.
                let saved = psi.clone();
                self.guarded_step(psi, dt)?;
                if self.may_grow() && self.edge_probability(psi) > self.opts.threshold {
                    *psi = saved;
                    self.force_expand(psi)?;
                    self.stats.chunks_redone += 1;
                }
            }
            sample(psi, self)?;
        }
        Ok(())
    }
}

const TILE: usize = 512;

/// `y += scale · V x` for a symmetric banded `V` stored by superdiagonal.
///
/// Rows are processed in tiles so the touched parts of `x` and `y` stay in
/// L1 while every diagonal is swept.
fn banded_accumulate(diags: &[Vec<f64>], scale: f64, xr: &[f64], xi: &[f64], yr: &mut [f64], yi: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected above.
            unsafe { banded_accumulate_fma(diags, scale, xr, xi, yr, yi) };
            return;
        }
    }
    banded_accumulate_generic(diags, scale, xr, xi, yr, yi, |a, b, c| a * b + c)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn banded_accumulate_fma(diags: &[Vec<f64>], scale: f64, xr: &[f64], xi: &[f64], yr: &mut [f64], yi: &mut [f64]) {
    banded_accumulate_generic(diags, scale, xr, xi, yr, yi, f64::mul_add)
}

#[inline(always)]
fn banded_accumulate_generic<F: Fn(f64, f64, f64) -> f64 + Copy>(
    diags: &[Vec<f64>],
    scale: f64,
    xr: &[f64],
    xi: &[f64],
    yr: &mut [f64],
    yi: &mut [f64],
    fma: F,
) {
    let n = xr.len();
    let mut t0 = 0;
    while t0 < n {
        let t1 = (t0 + TILE).min(n);
        for (k, d) in diags.iter().enumerate() {
            let off = k + 1;
            let m = d.len();
            // y[i] += v_i x[i+off]
            let e = t1.min(m);
            if t0 < e {
                let dd = &d[t0..e];
                let (ur, ui) = (&mut yr[t0..e], &mut yi[t0..e]);
                let (sr, si) = (&xr[t0 + off..e + off], &xi[t0 + off..e + off]);
                for i in 0..dd.len() {
                    let v = dd[i] * scale;
                    ur[i] = fma(v, sr[i], ur[i]);
                    ui[i] = fma(v, si[i], ui[i]);
                }
            }
            // y[i] += v_{i-off} x[i-off]
            let b = t0.max(off);
            if b < t1 {
                let dd = &d[b - off..t1 - off];
                let (lr, li) = (&mut yr[b..t1], &mut yi[b..t1]);
                let (sr, si) = (&xr[b - off..t1 - off], &xi[b - off..t1 - off]);
                for i in 0..dd.len() {
                    let v = dd[i] * scale;
                    lr[i] = fma(v, sr[i], lr[i]);
                    li[i] = fma(v, si[i], li[i]);
                }
            }
        }
        t0 = t1;
    }
}

fn accumulate(rr: &mut [f64], ri: &mut [f64], xr: &[f64], xi: &[f64], k: usize, c: f64) {
    // (-i)^k c: real for even k, imaginary for odd k.
    match k % 4 {
        0 => {
            for i in 0..rr.len() {
                rr[i] += c * xr[i];
                ri[i] += c * xi[i];
            }
        }
        1 => {
            for i in 0..rr.len() {
                rr[i] += c * xi[i];
                ri[i] -= c * xr[i];
            }
        }
        2 => {
            for i in 0..rr.len() {
                rr[i] -= c * xr[i];
                ri[i] -= c * xi[i];
            }
        }
        _ => {
            for i in 0..rr.len() {
                rr[i] -= c * xi[i];
                ri[i] += c * xr[i];
            }
        }
    }
}

/// `J_0(τ), …, J_K(τ)` truncated where the tail drops below 1e-18, by
/// Miller's backward recurrence normalized with `J_0 + 2 Σ J_2k = 1`.
pub fn bessel_series(tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(invalid(format!("Chebyshev argument must be finite, got {tau}")));
    }
    if tau < 1e-300 {
        return Ok(vec![1.0]);
    }
    let start = (tau + 20.0 * tau.cbrt() + 40.0).ceil() as usize;
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-300;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / tau * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in &mut j[k - 1..] {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = j[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * j[k];
    }
    for v in &mut j {
        *v /= norm;
    }
    let mut last = start;
    while last > 1 && j[last].abs() < 1e-18 && (last as f64) > tau {
        last -= 1;
    }
    j.truncate(last + 1);
    if j.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("Bessel recurrence overflow".into()));
    }
    Ok(j)
}

/// Exact spectral interval of an arrowhead matrix from its secular equation.
fn arrow_bounds(spec: &ModelSpec, lo: i64, row: &[f64]) -> (f64, f64) {
    let e = |i: usize| spec.energy(lo + i as i64);
    let c = (-lo) as usize;
    let e0 = e(c);
    let coupled: Vec<(f64, f64)> = row
        .iter()
        .enumerate()
        .filter(|&(i, v)| i != c && *v != 0.0)
        .map(|(i, v)| (e(i), v * v))
        .collect();
    let (emin, emax) = (e(0), e(row.len() - 1));
    if coupled.is_empty() {
        return (emin.min(e0), emax.max(e0));
    }
    let f = |x: f64| x - e0 - coupled.iter().map(|&(en, g)| g / (x - en)).sum::<f64>();
    let cmax = coupled.iter().map(|p| p.0).fold(e0, f64::max);
    let cmin = coupled.iter().map(|p| p.0).fold(e0, f64::min);
    let total: f64 = coupled.iter().map(|p| p.1).sum();
    // f is increasing above cmax and below cmin; roots lie within sqrt(Σg).
    let reach = total.sqrt() + (cmax - cmin) + 1.0;
    let root = |mut a: f64, mut b: f64| {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        (a, b)
    };
    let upper = root(cmax + 1e-300_f64.max(1e-14 * cmax.abs()), cmax + reach).1;
    let lower = root(cmin - reach, cmin - 1e-300_f64.max(1e-14 * cmin.abs())).0;
    let pad = 1e-12 * (upper - lower);
    (emin.min(lower) - pad, emax.max(upper) + pad)
}

/// Lanczos estimate of `‖V‖₂` for a zero-diagonal banded matrix.
fn lanczos_norm(diags: &[Vec<f64>], n: usize, steps: usize) -> f64 {
    if diags.is_empty() || n < 2 {
        return 0.0;
    }
    let matvec = |x: &[f64], y: &mut [f64]| {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (k, d) in diags.iter().enumerate() {
            let off = k + 1;
            for i in 0..d.len() {
                y[i] += d[i] * x[i + off];
                y[i + off] += d[i] * x[i];
            }
        }
    };
    // Deterministic, generic start vector.
    let mut q: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5).collect();
    let nrm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    q.iter_mut().for_each(|x| *x /= nrm);
    let mut q_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..steps.min(n) {
        matvec(&q, &mut w);
        let a: f64 = w.iter().zip(&q).map(|(x, y)| x * y).sum();
        let bprev = if j > 0 { beta[j - 1] } else { 0.0 };
        for i in 0..n {
            w[i] -= a * q[i] + bprev * q_prev[i];
        }
        alpha.push(a);
        let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if b < 1e-12 {
            break;
        }
        beta.push(b);
        std::mem::swap(&mut q_prev, &mut q);
        for i in 0..n {
            q[i] = w[i] / b;
        }
    }
    let m = alpha.len();
    let mut t = vec![0.0; m * m];
    for i in 0..m {
        t[i * m + i] = alpha[i];
        if i + 1 < m {
            t[i * m + i + 1] = beta[i];
            t[(i + 1) * m + i] = beta[i];
        }
    }
    match eigen::eigh(&t, m) {
        Ok(e) => e.values.iter().map(|v| v.abs()).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    }
}

/// Exact propagation by dense diagonalization, for small lattices.
pub fn dense_propagate(spec: &ModelSpec, v: &CouplingMatrix, times: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    let n = v.size();
    if n > 4000 {
        return Err(Error::DimensionExceeded {
            requested: n,
            limit: 4000,
        });
    }
    let h = v.dense_hamiltonian(spec);
    let flat: Vec<f64> = h.into_iter().flatten().collect();
    let eig = eigen::eigh(&flat, n)?;
    let c = (-v.lattice().0) as usize;
    Ok(times
        .iter()
        .map(|&t| {
            let mut psi = vec![Complex64::new(0.0, 0.0); n];
            for (l, vec) in eig.values.iter().zip(&eig.vectors) {
                let amp = Complex64::from_polar(vec[c], -l * t);
                for (p, x) in psi.iter_mut().zip(vec) {
                    *p += amp * x;
                }
            }
            psi
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::CouplingAmplitude;

    fn opts() -> PropagatorOptions {
        PropagatorOptions::default()
    }

    #[test]
    fn bessel_values() {
        let j = bessel_series(1.0).unwrap();
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-15);
        let j = bessel_series(100.0).unwrap();
        assert!((j[0] - 0.019_985_850_304_223_122).abs() < 1e-14);
        assert!((j[100] - 0.096_366_673_295_861_54).abs() < 1e-14);
        let j = bessel_series(5000.0).unwrap();
        let s: f64 = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
        assert!((s - 1.0).abs() < 1e-13);
    }

    #[test]
    fn uncoupled_state_stays_put() {
        let spec = ModelSpec::new(ModelKind::Wigner, 1.5, 0.0, 1.0, 4, 10, 1).unwrap();
        let mut p = Propagator::for_spec(&spec, opts()).unwrap();
        let mut psi = p.initial_state().unwrap();
        p.evolve(&mut psi, 123.4).unwrap();
        assert!((psi.amplitude(0).norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rabi_oscillation() {
        // Degenerate pair (ϱ → ∞ puts both levels at E = 0) coupled by v.
        let spec = ModelSpec::new(ModelKind::Friedrichs, 1.0, 0.3, 1e12, 1, 1, 0)
            .unwrap()
            .with_amplitude(CouplingAmplitude::Rms);
        let v = CouplingMatrix::build(&spec).unwrap();
        let coupling = v.get(1, 0);
        // Three levels; the symmetric combination of ±1 couples with √2 v.
        let g = (2.0f64).sqrt() * coupling;
        let mut p = Propagator::new(spec, v, opts()).unwrap();
        let mut psi = p.initial_state().unwrap();
        for t in [0.5, 1.0, 3.0, 10.0, 100.0] {
            p.evolve(&mut psi, t).unwrap();
            let p0 = psi.amplitude(0).norm_sqr();
            assert!((p0 - (g * t).cos().powi(2)).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn small_friedrichs_matches_dense_oracle() {
        let spec = ModelSpec::new(ModelKind::Friedrichs, 1.3, 0.4, 1.0, 3, 3, 17).unwrap();
        let v = CouplingMatrix::build(&spec).unwrap();
        assert_eq!(v.size(), 7);
        let times: Vec<f64> = (1..=10).map(|k| 0.7 * k as f64).collect();
        let oracle = dense_propagate(&spec, &v, &times).unwrap();
        let mut p = Propagator::new(spec, v, opts()).unwrap();
        let mut psi = p.initial_state().unwrap();
        for (t, exact) in times.iter().zip(&oracle) {
            p.evolve(&mut psi, *t).unwrap();
            let err: f64 = psi.amps.iter().zip(exact).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-8, "t={t} err={err}");
        }
    }

    #[test]
    fn banded_matches_dense_oracle_and_conserves() {
        let spec = ModelSpec::new(ModelKind::Wigner, 1.5, 0.6, 1.0, 12, 100, 5).unwrap();
        let v = CouplingMatrix::build(&spec).unwrap();
        let times: Vec<f64> = (1..=20).map(|k| 0.35 * k as f64).collect();
        let oracle = dense_propagate(&spec, &v, &times).unwrap();
        for method in [BoundsMethod::Gershgorin, BoundsMethod::Estimated] {
            let o = PropagatorOptions { bounds: method, ..opts() };
            let mut p = Propagator::new(spec, v.clone(), o).unwrap();
            let mut psi = p.initial_state().unwrap();
            let e0 = p.energy_expectation(&psi);
            for (t, exact) in times.iter().zip(&oracle) {
                p.evolve(&mut psi, *t).unwrap();
                let err: f64 = psi.amps.iter().zip(exact).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                assert!(err < 1e-9, "t={t} err={err}");
                assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
                assert!((p.energy_expectation(&psi) - e0).abs() < 1e-10 * 100.0);
            }
        }
    }

    #[test]
    fn time_reversal() {
        let spec = ModelSpec::new(ModelKind::Wigner, 1.2, 0.5, 1.0, 8, 60, 2).unwrap();
        let mut p = Propagator::for_spec(&spec, opts()).unwrap();
        let mut psi = p.initial_state().unwrap();
        p.evolve(&mut psi, 7.5).unwrap();
        let mut back = psi.clone();
        back.amps.iter_mut().for_each(|a| *a = a.conj());
        back.t = 0.0;
        p.evolve(&mut back, 7.5).unwrap();
        let err = (back.amplitude(0) - Complex64::new(1.0, 0.0)).norm();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn estimated_bounds_contain_spectrum() {
        let spec = ModelSpec::new(ModelKind::Wigner, 1.5, 0.8, 1.0, 30, 150, 8).unwrap();
        let v = CouplingMatrix::build(&spec).unwrap();
        let n = v.size();
        let flat: Vec<f64> = v.dense_hamiltonian(&spec).into_iter().flatten().collect();
        let eig = eigen::eigh(&flat, n).unwrap();
        let est = Propagator::new(spec, v.clone(), opts()).unwrap().bounds();
        let ger = Propagator::new(spec, v, PropagatorOptions { bounds: BoundsMethod::Gershgorin, ..opts() })
            .unwrap()
            .bounds();
        let (lmin, lmax) = (eig.values[0], eig.values[n - 1]);
        assert!(est.0 < lmin && est.1 > lmax);
        assert!(ger.0 <= est.0 && ger.1 >= est.1);

        let fspec = ModelSpec::new(ModelKind::Friedrichs, 1.5, 0.8, 1.0, 30, 30, 8).unwrap();
        let fv = CouplingMatrix::build(&fspec).unwrap();
        let n = fv.size();
        let flat: Vec<f64> = fv.dense_hamiltonian(&fspec).into_iter().flatten().collect();
        let eig = eigen::eigh(&flat, n).unwrap();
        let b = Propagator::new(fspec, fv, opts()).unwrap().bounds();
        assert!(b.0 <= eig.values[0] && b.1 >= eig.values[n - 1]);
        assert!((b.0 - eig.values[0]).abs() < 1e-9 && (b.1 - eig.values[n - 1]).abs() < 1e-9);
    }

    #[test]
    fn expansion_rule() {
        let spec = ModelSpec::new(ModelKind::Wigner, 1.0, 0.3, 1.0, 5, 20, 3).unwrap();
        let mut p = Propagator::for_spec(&spec, opts()).unwrap();
        let mut psi = p.initial_state().unwrap();
        assert!(!p.expand_if_needed(&mut psi, 1e-12, None).unwrap());
        // Plant 1e-11 on an edge site.
        let last = psi.amps.len() - 1;
        psi.amps[last] = Complex64::new((1e-11f64).sqrt(), 0.0);
        let norm = psi.norm_sqr();
        assert!(p.expand_if_needed(&mut psi, 1e-12, None).unwrap());
        assert_eq!(p.matrix().lattice(), (-70, 70));
        assert_eq!(psi.lo, -70);
        assert_eq!(psi.norm_sqr(), norm);
        assert_eq!(psi.amplitude(20), Complex64::new((1e-11f64).sqrt(), 0.0));
    }

    #[test]
    fn friedrichs_never_grows() {
        let spec = ModelSpec::new(ModelKind::Friedrichs, 1.0, 0.5, 1.0, 5, 5, 3).unwrap();
        let mut p = Propagator::for_spec(&spec, opts()).unwrap();
        let mut psi = p.initial_state().unwrap();
        p.evolve(&mut psi, 3.0).unwrap();
        assert!(p.edge_probability(&psi) > 1e-12);
        assert!(!p.expand_if_needed(&mut psi, 1e-12, None).unwrap());
    }

    #[test]
    fn self_expanding_run_matches_large_fixed_lattice() {
        let spec = ModelSpec::new(ModelKind::Wigner, 1.2, 0.4, 1.0, 6, 8, 21).unwrap();
        let times: Vec<f64> = (1..=12).map(|k| 0.8 * k as f64).collect();
        let o = PropagatorOptions { growth: Some(6), ..opts() };
        let mut p = Propagator::for_spec(&spec, o).unwrap();
        let mut psi = p.initial_state().unwrap();
        let mut p0 = Vec::new();
        p.run(&mut psi, &times, |w, _| {
            p0.push(w.amplitude(0).norm_sqr());
            Ok(())
        })
        .unwrap();
        assert!(p.stats.expansions > 0);
        let (lo, hi) = p.matrix().lattice();
        let big = ModelSpec { n_levels: 200, ..spec };
        let v = CouplingMatrix::build(&big).unwrap();
        let oracle = dense_propagate(&big, &v, &times).unwrap();
        for (k, exact) in oracle.iter().enumerate() {
            let c = 200usize;
            assert!((exact[c].norm_sqr() - p0[k]).abs() < 1e-9, "k={k}");
        }
        // Regrowing from scratch is deterministic.
        let mut q = Propagator::for_spec(&spec, o).unwrap();
        let mut psi2 = q.initial_state().unwrap();
        q.run(&mut psi2, &times, |_, _| Ok(())).unwrap();
        assert_eq!(q.matrix().lattice(), (lo, hi));
        assert_eq!(psi2, psi);
    }
}
