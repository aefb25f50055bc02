//! Derivative-free minimizers used by the fits.

/// Result of a one-dimensional minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum1D {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Brent's method on `[lo, hi]`: golden-section steps with parabolic
/// interpolation once the bracket is smooth enough. Stops when the bracket is
/// narrower than `rel_tol·|x| + abs_tol`.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_iter: usize,
) -> Minimum1D {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut evaluations = 1;
    let (mut d, mut e) = (0.0f64, 0.0f64);

    for _ in 0..max_iter {
        let mid = 0.5 * (a + b);
        let tol1 = rel_tol * x.abs() + abs_tol;
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < mid { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x < mid { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        evaluations += 1;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Minimum1D { x, value: fx, evaluations }
}

/// Where a bracketed minimum ended up relative to the search interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketPosition {
    Interior,
    Lower,
    Upper,
}

/// Scans `n_scan` equally spaced points of `[lo, hi]`, then polishes the best
/// one with [`brent`] inside its neighbouring scan cell. The position flag
/// reports a minimum sitting on either end of the interval.
pub fn scan_then_brent<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    n_scan: usize,
    abs_tol: f64,
) -> (Minimum1D, BracketPosition) {
    let n_scan = n_scan.max(3);
    let step = (hi - lo) / (n_scan - 1) as f64;
    let grid: Vec<f64> = (0..n_scan).map(|i| lo + step * i as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("scan grid is non-empty");
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(n_scan - 1)];
    let mut refined = brent(&mut f, a, b, 0.0, abs_tol, 200);
    refined.evaluations += n_scan;
    if values[best] < refined.value {
        refined.x = grid[best];
        refined.value = values[best];
    }
    let edge = 2.0 * abs_tol.max(1e-12 * (hi - lo));
    let position = if refined.x - lo <= edge {
        BracketPosition::Lower
    } else if hi - refined.x <= edge {
        BracketPosition::Upper
    } else {
        BracketPosition::Interior
    };
    (refined, position)
}

/// Result of a Nelder-Mead search.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimumND {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex search started from `start` with per-coordinate
/// initial steps. Converges when the spread of simplex values drops below
/// `f_tol` and the simplex diameter below `x_tol` in every coordinate.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    steps: &[f64],
    x_tol: f64,
    f_tol: f64,
    max_eval: usize,
) -> MinimumND {
    let dim = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..dim {
        let mut p = start.to_vec();
        p[i] += steps[i];
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let mut evaluations = simplex.len();
    let mut converged = false;

    while evaluations < max_eval {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[dim] - values[0];
        let diameter = (0..dim)
            .map(|k| {
                simplex
                    .iter()
                    .map(|p| (p[k] - simplex[0][k]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread.abs() <= f_tol && diameter <= x_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|p| p[k]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..dim)
                .map(|k| centroid[k] + t * (simplex[dim][k] - centroid[k]))
                .collect()
        };

        let reflected = along(-1.0);
        let fr = f(&reflected);
        evaluations += 1;
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            evaluations += 1;
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
        } else {
            let (contracted, fc) = if fr < values[dim] {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            };
            evaluations += 1;
            if fc < values[dim].min(fr) {
                simplex[dim] = contracted;
                values[dim] = fc;
            } else {
                for i in 1..=dim {
                    for k in 0..dim {
                        simplex[i][k] = simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]);
                    }
                    values[i] = f(&simplex[i]);
                    evaluations += 1;
                }
            }
        }
    }
    let best = (0..=dim)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("simplex is non-empty");
    MinimumND {
        x: simplex[best].clone(),
        value: values[best],
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_parabola_vertex() {
        let m = brent(|x| (x - 0.3).powi(2) + 1.0, -2.0, 5.0, 1e-10, 1e-12, 200);
        assert!((m.x - 0.3).abs() < 1e-8, "{m:?}");
        assert!((m.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn brent_handles_non_smooth_minimum() {
        let m = brent(|x: f64| (x - 1.25).abs(), 0.0, 10.0, 1e-10, 1e-12, 500);
        assert!((m.x - 1.25).abs() < 1e-8);
    }

    #[test]
    fn scan_flags_boundary_minima() {
        let (m, pos) = scan_then_brent(|x| x, 0.0, 1.0, 11, 1e-10);
        assert_eq!(pos, BracketPosition::Lower);
        assert!(m.x < 1e-9);
        let (_, pos) = scan_then_brent(|x| -x, 0.0, 1.0, 11, 1e-10);
        assert_eq!(pos, BracketPosition::Upper);
        let (m, pos) = scan_then_brent(|x: f64| (x - 0.42).powi(2), 0.0, 1.0, 11, 1e-10);
        assert_eq!(pos, BracketPosition::Interior);
        assert!((m.x - 0.42).abs() < 1e-7);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let rosen = |p: &[f64]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let m = nelder_mead(rosen, &[-1.2, 1.0], &[0.1, 0.1], 1e-10, 1e-20, 10_000);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{m:?}");
    }
}
