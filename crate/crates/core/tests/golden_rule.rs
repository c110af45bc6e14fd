//! Exponential decay at the golden-rule rate once the decay width spans
//! many levels (rate times density of states well above one).

use std::f64::consts::PI;

use decaylab::hamiltonian::{CouplingAmplitude, ModelKind, ModelSpec};
use decaylab::observables::simulate;
use decaylab::propagator::PropagatorOptions;
use decaylab::stats::linear_fit;

#[test]
fn ohmic_friedrichs_decays_at_golden_rule_rate() {
    let (eps, rho, wc) = (0.1, 2000.0, 5.0);
    let b = (rho * wc) as usize;
    let spec = ModelSpec::new(ModelKind::Friedrichs, 1.0, eps, rho, b, b, 3)
        .unwrap()
        .with_amplitude(CouplingAmplitude::Rms);
    let rate = 2.0 * PI * eps * eps;
    // From ten cutoff times to three decay times, far below 2πϱ.
    let (lo, hi) = (10.0 * 2.0 * PI / wc, 3.0 / rate);
    let times: Vec<f64> = (0..=30).map(|k| lo + (hi - lo) * k as f64 / 30.0).collect();
    let sim = simulate(&spec, &times, PropagatorOptions::default()).unwrap();
    let y: Vec<f64> = sim.samples.iter().map(|s| -s.p0.ln()).collect();
    let fit = linear_fit(&times, &y).unwrap();
    assert!((fit.slope / rate - 1.0).abs() < 0.02, "rate {} vs {rate}", fit.slope);
}
