//! Direct retarded-potential sum and error norms.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::scenarios::Source;

/// Field values at a set of targets at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    pub targets: Vec<[f64; 3]>,
    pub values: Vec<f64>,
}

/// `u(x, t) = sum_j sigma_j(t - r_j) / (4 pi r_j)`, skipping `r = 0`.
pub fn evaluate_direct(sources: &[Source], targets: &[[f64; 3]], t: f64) -> FieldSnapshot {
    let values = targets
        .par_iter()
        .map(|x| {
            let mut u = 0.0;
            for s in sources {
                let y = s.position;
                let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
                if r > 0.0 {
                    u += s.signal.eval(t - r) / (4.0 * PI * r);
                }
            }
            u
        })
        .collect();
    FieldSnapshot {
        t,
        targets: targets.to_vec(),
        values,
    }
}

/// Max-norm errors; `rel_max` is `None` when the reference is identically zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics {
    pub abs_max: f64,
    pub rel_max: Option<f64>,
}

pub fn error_metrics(approx: &FieldSnapshot, exact: &FieldSnapshot) -> Result<ErrorMetrics> {
    if approx.values.len() != exact.values.len() {
        return Err(invalid("approx", "target counts differ"));
    }
    if approx.t != exact.t {
        return Err(invalid("approx", format!("times differ: {} vs {}", approx.t, exact.t)));
    }
    Ok(compare(&approx.values, &exact.values))
}

/// Max-norm comparison of two plain value arrays of equal length.
pub fn compare(approx: &[f64], exact: &[f64]) -> ErrorMetrics {
    let abs_max = approx
        .iter()
        .zip(exact)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let norm = exact.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    ErrorMetrics {
        abs_max,
        rel_max: (norm > 0.0).then(|| abs_max / norm),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::Signal;

    fn ramp(p: [f64; 3]) -> Source {
        Source {
            position: p,
            signal: Signal::custom(|t| t, None),
        }
    }

    #[test]
    fn closed_form_examples() {
        let s = [ramp([0.0; 3])];
        let u = evaluate_direct(&s, &[[0.5, 0.0, 0.0]], 1.0);
        assert!((u.values[0] - 0.079_577_471_545_947_67).abs() < 1e-15);
        assert_eq!(evaluate_direct(&s, &[[0.5, 0.0, 0.0]], 0.25).values[0], 0.0);
        assert_eq!(evaluate_direct(&s, &[[0.0; 3]], 1.0).values[0], 0.0);
    }

    #[test]
    fn superposition_and_inverse_distance() {
        let two = [ramp([0.3, 0.2, 0.0]), ramp([-0.3, 0.2, 0.0])];
        let one = &two[..1];
        let x = [[0.0, -0.4, 0.5]];
        let u2 = evaluate_direct(&two, &x, 2.0).values[0];
        let u1 = evaluate_direct(one, &x, 2.0).values[0];
        assert!((u2 - 2.0 * u1).abs() < 1e-15);
        let c = [Source {
            position: [0.0; 3],
            signal: Signal::custom(|_| 1.0, None),
        }];
        for r in [0.1, 0.4, 0.9] {
            let u = evaluate_direct(&c, &[[r, 0.0, 0.0]], 5.0).values[0];
            assert!((u * r - 1.0 / (4.0 * PI)).abs() < 1e-15);
        }
    }

    #[test]
    fn metric_examples() {
        let snap = |v: Vec<f64>| FieldSnapshot {
            t: 1.0,
            targets: vec![[0.0; 3]; v.len()],
            values: v,
        };
        let a = snap(vec![1.0, -2.0, 0.5]);
        assert_eq!(
            error_metrics(&a, &a).unwrap(),
            ErrorMetrics { abs_max: 0.0, rel_max: Some(0.0) }
        );
        let b = snap(vec![1.25, -1.75, 0.75]);
        let m = error_metrics(&b, &a).unwrap();
        assert_eq!(m.abs_max, 0.25);
        assert_eq!(m.rel_max, Some(0.125));
        let z = snap(vec![0.0; 3]);
        assert_eq!(error_metrics(&a, &z).unwrap().rel_max, None);
        assert!(error_metrics(&a, &snap(vec![1.0])).is_err());
    }
}
