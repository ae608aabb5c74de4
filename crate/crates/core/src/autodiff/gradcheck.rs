use super::{OpKind, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |g_ad - g_fd| / (|g_fd| + 1e-8)` over checked coordinates.
    pub max_rel_error: f64,
    /// Coordinate achieving `max_rel_error`.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Coordinates where both gradients vanish or the difference quotient is
    /// unstable under step halving (the point sits on a kink).
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Options for [`check_gradient_with`].
#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Coordinates whose `|g_fd|` and `|g_ad|` are both below this are skipped.
    pub magnitude_floor: f64,
    /// Relative disagreement between step `h` and `h/2` quotients above which
    /// the coordinate is treated as non-smooth and skipped.
    pub smoothness_tol: f64,
    /// Restrict the check to these coordinates (all when `None`).
    pub coords: Option<Vec<usize>>,
    /// Backward-rule corruption for the reverse pass, to exercise failure
    /// reporting.
    pub fault: Option<(OpKind, f64)>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            magnitude_floor: 1e-6,
            smoothness_tol: 1e-3,
            coords: None,
            fault: None,
        }
    }
}

/// Check `f` at `point` with step `h` over every coordinate.
///
/// `f` receives a fresh tape and the `n x 1` input leaf and returns a scalar
/// node.
pub fn check_gradient<F>(f: F, point: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    check_gradient_with(
        f,
        point,
        &GradCheckOptions {
            step: h,
            ..Default::default()
        },
    )
}

pub fn check_gradient_with<F>(f: F, point: &[f64], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(opts.step > 0.0) {
        return Err(Error::usage("finite-difference step must be positive"));
    }
    let mut tape = Tape::new();
    tape.set_fault(opts.fault);
    let x = tape.leaf(Tensor::column(point));
    let y = f(&mut tape, x)?;
    tape.backward(y)?;
    let ad = tape.grad(x);

    let eval = |p: &[f64], index: usize| -> Result<f64> {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::column(p));
        let y = f(&mut t, x)?;
        let v = t.item(y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { index })
        }
    };
    let quotient = |i: usize, h: f64| -> Result<f64> {
        let mut p = point.to_vec();
        p[i] = point[i] + h;
        let up = eval(&p, i)?;
        p[i] = point[i] - h;
        let down = eval(&p, i)?;
        Ok((up - down) / (2.0 * h))
    };

    let coords: Vec<usize> = match &opts.coords {
        Some(c) => c.clone(),
        None => (0..point.len()).collect(),
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        skipped: 0,
    };
    for i in coords {
        if i >= point.len() {
            return Err(Error::usage(format!("coordinate {i} out of range")));
        }
        let fd = quotient(i, opts.step)?;
        let g = ad.as_slice()[i];
        if fd.abs() <= opts.magnitude_floor && g.abs() <= opts.magnitude_floor {
            report.skipped += 1;
            continue;
        }
        let fd_half = quotient(i, opts.step / 2.0)?;
        if (fd - fd_half).abs() > opts.smoothness_tol * fd.abs().max(opts.magnitude_floor) {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        let rel = (g - fd).abs() / (fd.abs() + 1e-8);
        if report.worst_index.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let r = check_gradient(
            |t, x| {
                let s = t.square(x);
                Ok(t.sum(s))
            },
            &[3.0],
            1e-5,
        )
        .unwrap();
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn non_finite_probe_reports_coordinate() {
        let err = check_gradient(
            |t, x| {
                let s = t.sqrt(x);
                Ok(t.sum(s))
            },
            &[1.0, 0.0],
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Evaluation { index: 1 }));
    }

    #[test]
    fn corrupted_rule_is_caught() {
        let f = |t: &mut Tape, x: Var| {
            let s = t.tanh(x);
            Ok::<_, Error>(t.sum(s))
        };
        let point = [0.3, -0.7];
        let mut t = Tape::new().with_fault(OpKind::Tanh, 1.01);
        let x = t.leaf(Tensor::column(&point));
        let y = f(&mut t, x).unwrap();
        t.backward(y).unwrap();
        let wrong = t.grad(x);
        let expected = 1.0 - 0.3f64.tanh().powi(2);
        assert!((wrong.as_slice()[0] - 1.01 * expected).abs() < 1e-12);
        let opts = GradCheckOptions {
            fault: Some((OpKind::Tanh, 1.01)),
            ..GradCheckOptions::default()
        };
        let r = check_gradient_with(f, &point, &opts).unwrap();
        assert!(!r.passes(1e-4) && r.max_rel_error > 5e-3, "{r:?}");
    }

    #[test]
    fn rejects_non_positive_step() {
        let r = check_gradient(|t, x| Ok(t.sum(x)), &[1.0], 0.0);
        assert!(matches!(r, Err(Error::Usage(_))));
    }
}
