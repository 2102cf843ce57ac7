use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::param::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Pass threshold on the maximum relative error.
    pub tol: f64,
    /// Check at most this many randomly chosen entries per parameter
    /// (`None` checks every entry).
    pub max_entries_per_param: Option<usize>,
    /// Seed for entry selection.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            tol: 1e-4,
            max_entries_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_pair: (f64, f64),
    /// Entries compared.
    pub checked: usize,
    /// Entries skipped because a perturbation crossed a kink.
    pub skipped: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err < self.tol
    }
}

fn evaluate<F>(f: &mut F, store: &ParamStore<f64>) -> Result<(f64, Option<u64>)>
where
    F: FnMut(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut tape = Tape::with_kink_tracking();
    let loss = f(&mut tape, store)?;
    let value = tape.value(loss).item()?;
    Ok((value, tape.kink_signature()))
}

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences `(f(θ + eps) - f(θ - eps)) / (2 eps)` for every selected entry
/// of `params`.
///
/// An entry is skipped when either perturbed evaluation lands on a different
/// smooth piece than the unperturbed one (a relu sign flip, a sampling point
/// changing cell or clamp state), since central differences are meaningless
/// across a kink.
pub fn grad_check<F>(
    store: &mut ParamStore<f64>,
    params: &[ParamId],
    cfg: &GradCheckConfig,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    if cfg.eps <= 0.0 {
        return Err(Error::Config(format!("eps must be > 0, got {}", cfg.eps)));
    }
    store.zero_grads();
    let mut tape = Tape::with_kink_tracking();
    let loss = f(&mut tape, store)?;
    let base_sig = tape.kink_signature();
    let base = tape.value(loss).item()?;
    if !base.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite ({base})")));
    }
    tape.backward(loss, store)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_pair: (0.0, 0.0),
        checked: 0,
        skipped: 0,
        tol: cfg.tol,
    };
    for &id in params {
        let analytic = store.grad(id).clone();
        let name = store.get(id).name.clone();
        if let Err(e) = analytic.validate() {
            return Err(Error::Numeric(format!("analytic gradient of {name}: {e}")));
        }
        let n = analytic.numel();
        let entries: Vec<usize> = match cfg.max_entries_per_param {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for idx in entries {
            let orig = store.value(id).data()[idx];
            store.get_mut(id).value.data_mut()[idx] = orig + cfg.eps;
            let plus = evaluate(&mut f, store);
            store.get_mut(id).value.data_mut()[idx] = orig - cfg.eps;
            let minus = evaluate(&mut f, store);
            store.get_mut(id).value.data_mut()[idx] = orig;
            let ((fp, sp), (fm, sm)) = (plus?, minus?);
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss while perturbing {name}[{idx}]"
                )));
            }
            if sp != base_sig || sm != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * cfg.eps);
            let err = relative_error(analytic.data()[idx], numeric);
            report.checked += 1;
            if report.checked == 1 || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.worst_pair = (analytic.data()[idx], numeric);
            }
        }
    }
    Ok(report)
}
