//! Central finite-difference checks of [`Mlp::gradient`].

use crate::approximator::Mlp;
use crate::error::LearnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSettings {
    pub step: f64,
    pub rel_tol: f64,
    /// Differences below this pass regardless of the relative error.
    pub abs_floor: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_floor: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates skipped because a perturbation flipped a ReLU.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    /// `(kind, index, analytic, numeric)` of every failure.
    pub failures: Vec<(&'static str, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.failures.extend(other.failures);
    }
}

fn scalar(net: &Mlp, x: &[f64], upstream: &[f64]) -> Result<(f64, Vec<bool>), LearnError> {
    let trace = net.forward_trace(x)?;
    let v = trace.output().iter().zip(upstream).map(|(o, u)| o * u).sum();
    Ok((v, net.relu_pattern(&trace)))
}

fn compare(
    report: &mut GradCheckReport,
    s: &GradCheckSettings,
    kind: &'static str,
    index: usize,
    analytic: f64,
    numeric: f64,
) {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    let rel = if scale > 0.0 { diff / scale } else { 0.0 };
    report.checked += 1;
    if scale > s.abs_floor {
        report.max_rel_error = report.max_rel_error.max(rel);
    }
    if diff > s.abs_floor && rel > s.rel_tol {
        report.failures.push((kind, index, analytic, numeric));
    }
}

/// Compares the analytic gradient of `upstream · f(x)` with central
/// differences at the listed parameter indices and at every input.
pub fn check_gradient(
    net: &Mlp,
    x: &[f64],
    upstream: &[f64],
    params: &[usize],
    s: &GradCheckSettings,
) -> Result<GradCheckReport, LearnError> {
    let (grad, input_grad) = net.gradient(x, upstream)?;
    let (_, pattern) = scalar(net, x, upstream)?;
    let mut report = GradCheckReport::default();

    let mut probe = net.clone();
    for &i in params {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + s.step;
        let (plus, pp) = scalar(&probe, x, upstream)?;
        probe.params_mut()[i] = orig - s.step;
        let (minus, pm) = scalar(&probe, x, upstream)?;
        probe.params_mut()[i] = orig;
        if pp != pattern || pm != pattern {
            report.skipped_kinks += 1;
            continue;
        }
        compare(&mut report, s, "param", i, grad[i], (plus - minus) / (2.0 * s.step));
    }

    let mut inputs = GradCheckReport::default();
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + s.step;
        let (plus, pp) = scalar(net, &xp, upstream)?;
        xp[j] = x[j] - s.step;
        let (minus, pm) = scalar(net, &xp, upstream)?;
        xp[j] = x[j];
        if pp != pattern || pm != pattern {
            inputs.skipped_kinks += 1;
            continue;
        }
        compare(
            &mut inputs,
            s,
            "input",
            j,
            input_grad[j],
            (plus - minus) / (2.0 * s.step),
        );
    }
    report.merge(inputs);
    Ok(report)
}
