//! Central finite differences against the tape's gradients.

use serde::Serialize;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// Floor of the relative-error denominator.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / REL_ERROR_FLOOR.max(a.abs() + b.abs())
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub size: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstCoordinate {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub coordinates: usize,
    /// Coordinates re-differenced in wider precision.
    pub refined: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub worst: Option<WorstCoordinate>,
    pub params: Vec<ParamCheck>,
}

/// Compares `backward` with `(f(θ + h e_i) − f(θ − h e_i)) / 2h` on every
/// flat coordinate. `f` must build the same deterministic scalar on each call.
pub fn grad_check<T, F>(store: &ParamStore<T>, step: f64, f: F) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&ParamStore<T>, &mut Tape<T>) -> Result<Var>,
{
    grad_check_refined(store, step, f64::INFINITY, &f, |s: &ParamStore<T>| {
        let mut tape = Tape::new();
        let v = f(s, &mut tape)?;
        tape.value(v).item()
    })
}

/// Like [`grad_check`], but coordinates whose relative error exceeds `refine_above`
/// are differenced again with `oracle`, which evaluates the same objective in the
/// wider scalar `U`. The wider quotient replaces the first one, so a genuine
/// mismatch survives while rounding noise in the difference of two nearly equal
/// losses does not.
pub fn grad_check_refined<T, U, F, G>(
    store: &ParamStore<T>,
    step: f64,
    refine_above: f64,
    f: F,
    mut oracle: G,
) -> Result<GradCheckReport>
where
    T: Scalar,
    U: Scalar,
    F: Fn(&ParamStore<T>, &mut Tape<T>) -> Result<Var>,
    G: FnMut(&ParamStore<U>) -> Result<U>,
{
    let mut tape = Tape::new();
    let loss = f(store, &mut tape)?;
    let analytic = tape.backward(loss, store)?.to_flat();

    let mut eval = |s: &ParamStore<T>| -> Result<T> {
        let mut tape = Tape::new();
        let v = f(s, &mut tape)?;
        tape.value(v).item()
    };

    let mut probe = store.clone();
    let mut wide: Option<ParamStore<U>> = None;
    let mut params = Vec::with_capacity(store.len());
    let mut worst: Option<WorstCoordinate> = None;
    let mut total = 0.0;
    let mut refined = 0;

    for ((id, name, _), range) in store.iter().zip(store.offsets()) {
        let mut check = ParamCheck {
            name: name.to_string(),
            size: range.len(),
            max_rel_error: 0.0,
            mean_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for i in range.clone() {
            let local = i - range.start;
            let a = analytic[i].to_f64_lossy();
            let mut numeric = central_difference(&mut probe, id, local, step, &mut eval)?;
            let mut rel = relative_error(a, numeric);
            if rel > refine_above {
                let wide = wide.get_or_insert_with(|| store.cast());
                numeric = central_difference(wide, id, local, step, &mut oracle)?;
                rel = relative_error(a, numeric);
                refined += 1;
            }
            check.max_rel_error = check.max_rel_error.max(rel);
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
            check.mean_rel_error += rel;
            total += rel;
            if worst.as_ref().is_none_or(|w| rel > w.rel_error) {
                worst = Some(WorstCoordinate { param: name.to_string(), index: local, analytic: a, numeric, rel_error: rel });
            }
        }
        if check.size > 0 {
            check.mean_rel_error /= check.size as f64;
        }
        params.push(check);
    }
    let coordinates = store.flat_len();
    Ok(GradCheckReport {
        step,
        coordinates,
        refined,
        max_rel_error: params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max),
        mean_rel_error: if coordinates > 0 { total / coordinates as f64 } else { 0.0 },
        worst,
        params,
    })
}

/// Central difference along one coordinate, restoring it afterwards. Divides by
/// the step actually taken after rounding.
fn central_difference<U: Scalar>(
    probe: &mut ParamStore<U>,
    id: ParamId,
    local: usize,
    step: f64,
    eval: &mut impl FnMut(&ParamStore<U>) -> Result<U>,
) -> Result<f64> {
    let h = U::of(step);
    let original = probe.get(id).data()[local];
    probe.get_mut(id).data_mut()[local] = original + h;
    let plus = eval(probe);
    probe.get_mut(id).data_mut()[local] = original - h;
    let minus = eval(probe);
    probe.get_mut(id).data_mut()[local] = original;
    let taken = (original + h) - (original - h);
    Ok(((plus? - minus?) / taken).to_f64_lossy())
}
