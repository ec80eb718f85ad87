//! Derivative-free minimizers: a box-constrained Nelder–Mead simplex and a
//! golden-section line search.

/// Stopping and shape parameters for the simplex search.
#[derive(Debug, Clone)]
pub struct NelderMeadOpts {
    pub max_iter: usize,
    /// Stop when the spread of simplex function values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
    /// Initial simplex edge length.
    pub step: f64,
}

impl Default for NelderMeadOpts {
    fn default() -> Self {
        NelderMeadOpts {
            max_iter: 0, // 0 means 250 * dimension
            f_tol: 1e-10,
            x_tol: 1e-8,
            step: 0.5,
        }
    }
}

/// Outcome of a single simplex run.
#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

fn clamp_to(lo: &[f64], hi: &[f64], x: &mut [f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

/// Minimizes `f` over the box `[lo, hi]` starting from `x0`.
///
/// Non-finite objective values are treated as +inf so the simplex retreats
/// from failed regions instead of aborting. Returns the best point ever
/// evaluated, or None when every evaluation was non-finite.
pub fn nelder_mead_box<F>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOpts,
) -> Option<OptimOutcome>
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    assert!(dim > 0 && lo.len() == dim && hi.len() == dim);
    let max_iter = if opts.max_iter == 0 {
        250 * dim
    } else {
        opts.max_iter
    };

    let mut evals = 0usize;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut eval = |x: &[f64], evals: &mut usize, best: &mut Option<(Vec<f64>, f64)>| -> f64 {
        *evals += 1;
        let v = f(x);
        let v = if v.is_finite() { v } else { f64::INFINITY };
        if v.is_finite() && best.as_ref().is_none_or(|(_, b)| v < *b) {
            *best = Some((x.to_vec(), v));
        }
        v
    };

    // Initial simplex: x0 plus one perturbed vertex per coordinate.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let mut start = x0.to_vec();
    clamp_to(lo, hi, &mut start);
    let v0 = eval(&start, &mut evals, &mut best);
    simplex.push((start.clone(), v0));
    for k in 0..dim {
        let mut x = start.clone();
        let span = hi[k] - lo[k];
        let mut h = opts.step.min(0.25 * span.max(opts.step));
        if x[k] + h > hi[k] {
            h = -h;
        }
        x[k] += h;
        clamp_to(lo, hi, &mut x);
        let v = eval(&x, &mut evals, &mut best);
        simplex.push((x, v));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let f_best = simplex[0].1;
        let f_worst = simplex[dim].1;
        if f_worst.is_finite() && (f_worst - f_best).abs() < opts.f_tol {
            break;
        }
        let diam = (0..dim)
            .map(|k| {
                let (mn, mx) = simplex
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), (x, _)| {
                        (mn.min(x[k]), mx.max(x[k]))
                    });
                mx - mn
            })
            .fold(0.0f64, f64::max);
        if diam < opts.x_tol {
            break;
        }

        // Centroid of all vertices but the worst.
        let mut centroid = vec![0.0; dim];
        for (x, _) in simplex.iter().take(dim) {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / dim as f64;
            }
        }

        let propose = |coef: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            clamp_to(lo, hi, &mut x);
            x
        };

        let xr = propose(alpha);
        let fr = eval(&xr, &mut evals, &mut best);
        if fr < simplex[0].1 {
            let xe = propose(gamma);
            let fe = eval(&xe, &mut evals, &mut best);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let xc = propose(-rho);
            let fc = eval(&xc, &mut evals, &mut best);
            if fc < simplex[dim].1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                // Shrink toward the best vertex.
                let x_best = simplex[0].0.clone();
                for vtx in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = x_best
                        .iter()
                        .zip(&vtx.0)
                        .map(|(b, v)| b + sigma * (v - b))
                        .collect();
                    clamp_to(lo, hi, &mut x);
                    let fv = eval(&x, &mut evals, &mut best);
                    *vtx = (x, fv);
                }
            }
        }
    }

    best.map(|(x, value)| OptimOutcome { x, value, evals })
}

/// Golden-section minimization of a unimodal `f` on `[a, b]` to absolute
/// tolerance `tol` in the argument.
pub fn golden_section<F>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    assert!(b >= a);
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
