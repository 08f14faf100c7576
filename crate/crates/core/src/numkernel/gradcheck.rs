//! Verification of tape gradients against five-point central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Number of random coordinates to probe.
    pub probes: usize,
    /// Finite-difference step. The stencil's truncation error is O(step⁴),
    /// so the step can stay large enough to keep roundoff small.
    pub step: f64,
    /// Denominator floor of the relative error, so coordinates whose true
    /// gradient is ~0 are judged on absolute error instead.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            probes: 100,
            step: 1e-3,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub param: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub probes: Vec<ProbeResult>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ProbeResult> {
        self.probes.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn eval<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let loss = f(&mut tape)?;
    let v = tape.value(loss);
    if v.shape() != (1, 1) {
        return Err(Error::shape("check_gradients loss", v.shape(), (1, 1)));
    }
    let v = v.get(0, 0);
    if !v.is_finite() {
        return Err(Error::NonFinite {
            what: "loss",
            detail: format!("{v}"),
        });
    }
    Ok(v)
}

/// Compares the tape gradient of the scalar built by `f` against central
/// differences on randomly sampled coordinates of `params`.
///
/// `f` must be deterministic: any sampling it does has to be fixed up front.
pub fn check_gradients<F>(
    store: &ParamStore,
    params: &[ParamId],
    config: &GradCheckConfig,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let candidates: Vec<ParamId> = params.iter().copied().filter(|&p| !store.get(p).is_empty()).collect();
    if candidates.is_empty() {
        return Err(Error::Empty("gradient check parameter set"));
    }

    let grads = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        let v = tape.value(loss).get(0, 0);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                detail: format!("{v}"),
            });
        }
        tape.backward(loss)?.into_params()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut work = store.clone();
    let mut report = GradCheckReport::default();
    for _ in 0..config.probes {
        let id = candidates[rng.random_range(0..candidates.len())];
        let (rows, cols) = store.get(id).shape();
        let (row, col) = (rng.random_range(0..rows), rng.random_range(0..cols));
        let idx = row * cols + col;
        let orig = store.get(id).data()[idx];

        let h = config.step;
        let mut at = |offset: f64| -> Result<f64> {
            work.get_mut(id).data_mut()[idx] = orig + offset;
            eval(&work, &f)
        };
        let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
        work.get_mut(id).data_mut()[idx] = orig;

        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
        let analytic = grads.get(id, row, col);
        let rel_err = relative_error(analytic, numeric, config.floor);
        report.max_rel_err = report.max_rel_err.max(rel_err);
        report.probes.push(ProbeResult {
            param: store.name(id).to_string(),
            row,
            col,
            analytic,
            numeric,
            rel_err,
        });
    }
    Ok(report)
}
