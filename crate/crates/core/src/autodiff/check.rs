//! Central finite-difference gradient checking.

use super::{AutodiffError, ParamId, ParamStore, Tape, Var};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Backward rule to corrupt on every tape (see [`Tape::inject_fault`]).
    pub fault: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed a kink.
    pub excluded: usize,
    /// Coordinate with the largest error: parameter, index, analytic, numeric.
    pub worst: Option<(ParamId, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn merge(&mut self, other: GradCheckReport) {
        if other.max_rel_error > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self.excluded += other.excluded;
    }
}

fn run<E, F>(store: &ParamStore, opts: &GradCheckOptions, f: &mut F) -> Result<(Tape, Var), E>
where
    E: From<AutodiffError>,
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, E>,
{
    let mut tape = Tape::new();
    if let Some(op) = &opts.fault {
        tape.inject_fault(op);
    }
    let out = f(&mut tape, store)?;
    Ok((tape, out))
}

/// Compares the tape gradient of the scalar `f` with central differences
/// for every coordinate of `params`. Coordinates where either perturbation
/// changes the branch signature are excluded.
pub fn grad_check<E, F>(
    store: &mut ParamStore,
    params: &[ParamId],
    opts: &GradCheckOptions,
    mut f: F,
) -> Result<GradCheckReport, E>
where
    E: From<AutodiffError>,
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, E>,
{
    let (tape, out) = run(store, opts, &mut f)?;
    let grads = tape.backward(out)?;
    let base_sig = tape.branch_signature().to_vec();
    let mut report = GradCheckReport::default();
    for &id in params {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            let mut eval = |x: f64, store: &mut ParamStore| -> Result<(f64, bool), E> {
                store.get_mut(id).data_mut()[i] = x;
                let (t, o) = run(store, opts, &mut f)?;
                Ok((t.item(o), t.branch_signature() == base_sig.as_slice()))
            };
            let (fp, same_p) = eval(orig + opts.eps, store)?;
            let (fm, same_m) = eval(orig - opts.eps, store)?;
            store.get_mut(id).data_mut()[i] = orig;
            if !(same_p && same_m) {
                report.excluded += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * opts.eps);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[i]);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let err = (analytic - numeric).abs() / denom;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((id, i, analytic, numeric));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
