//! Derivative-free Nelder-Mead simplex minimizer.
//!
//! The objective may return `+inf` (or NaN, treated as `+inf`) to reject a
//! point; the likelihood fits use this for parameters whose support excludes
//! an observation.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Maximum number of objective evaluations.
    pub max_evals: usize,
    /// Convergence tolerance on both the simplex spread in parameter space
    /// and the spread of objective values (relative to max(1, |f|)).
    pub tolerance: f64,
    /// Initial simplex step along each coordinate.
    pub initial_step: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

pub fn nelder_mead<F>(mut objective: F, start: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    assert_eq!(opts.initial_step.len(), dim, "one step per coordinate");
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let f0 = eval(start, &mut evals);
    simplex.push((start.to_vec(), f0));
    for i in 0..dim {
        let mut x = start.to_vec();
        x[i] += opts.initial_step[i];
        let f = eval(&x, &mut evals);
        simplex.push((x, f));
    }

    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best_f = simplex[0].1;
        let worst_f = simplex[dim].1;

        if best_f.is_finite() && worst_f.is_finite() {
            let f_spread = worst_f - best_f;
            let x_spread = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)))
                .fold(0.0, f64::max);
            if f_spread <= opts.tolerance * best_f.abs().max(1.0) && x_spread <= opts.tolerance {
                converged = true;
                break;
            }
        }

        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / dim as f64;
            }
        }
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let reflected = along(REFLECT);
        let f_r = eval(&reflected, &mut evals);
        let second_worst = simplex[dim - 1].1;

        if f_r < best_f {
            let expanded = along(EXPAND);
            let f_e = eval(&expanded, &mut evals);
            simplex[dim] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
            continue;
        }
        if f_r < second_worst {
            simplex[dim] = (reflected, f_r);
            continue;
        }
        // contraction: outside if the reflection improved on the worst point
        let outside = f_r < worst_f;
        let candidate = along(if outside { CONTRACT } else { -CONTRACT });
        let f_c = eval(&candidate, &mut evals);
        let accept = if outside { f_c <= f_r } else { f_c < worst_f };
        if accept {
            simplex[dim] = (candidate, f_c);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + SHRINK * (v - b))
                .collect();
            let f = eval(&x, &mut evals);
            *vertex = (x, f);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        f,
        evals,
        converged: converged && f.is_finite(),
    }
}
