//! Derivative-free simplex descent restricted to a box.

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions<T> {
    /// Hard cap on objective evaluations.
    pub max_evals: usize,
    /// Stop once `f(worst) - f(best)` over the simplex drops below this.
    pub spread_tol: T,
    /// Initial edge length as a fraction of each box side.
    pub initial_step: T,
}

impl<T: Real> Default for NelderMeadOptions<T> {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            spread_tol: T::lit(1e-10),
            initial_step: T::lit(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult<T> {
    pub x: Vec<T>,
    pub f: T,
    pub n_evals: usize,
    pub converged: bool,
}

fn project<T: Real>(x: &mut [T], lb: &[T], ub: &[T]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lb).zip(ub) {
        *v = v.max(lo).min(hi);
    }
}

/// Minimises `f` from `x0`; trial points outside `[lb, ub]` are clamped onto
/// the box before evaluation.
pub fn minimize_in_box<T: Real, F: FnMut(&[T]) -> T>(
    mut f: F,
    x0: &[T],
    lb: &[T],
    ub: &[T],
    opts: &NelderMeadOptions<T>,
) -> NelderMeadResult<T> {
    let dim = x0.len();
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut n_evals = 0usize;
    let mut eval = |x: &[T], n: &mut usize| {
        *n += 1;
        let v = f(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    project(&mut start, lb, ub);
    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(dim + 1);
    let f0 = eval(&start, &mut n_evals);
    simplex.push((start.clone(), f0));
    for j in 0..dim {
        let step = opts.initial_step * (ub[j] - lb[j]);
        let mut v = start.clone();
        v[j] = if start[j] + step <= ub[j] {
            start[j] + step
        } else {
            start[j] - step
        };
        project(&mut v, lb, ub);
        let fv = eval(&v, &mut n_evals);
        simplex.push((v, fv));
    }

    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if worst - best < opts.spread_tol {
            converged = true;
            break;
        }
        // one iteration costs at most dim + 2 evaluations (reflect, contract, shrink)
        if n_evals + dim + 2 > opts.max_evals {
            break;
        }

        let mut centroid = vec![T::zero(); dim];
        for (v, _) in &simplex[..dim] {
            for (c, &x) in centroid.iter_mut().zip(v) {
                *c = *c + x;
            }
        }
        let inv = T::one() / T::from_count(dim);
        centroid.iter_mut().for_each(|c| *c = *c * inv);

        let along = |scale: T, from: &[T]| -> Vec<T> {
            let mut p: Vec<T> = centroid
                .iter()
                .zip(from)
                .map(|(&c, &w)| c + scale * (c - w))
                .collect();
            project(&mut p, lb, ub);
            p
        };
        let worst_x = simplex[dim].0.clone();
        let second_worst = simplex[dim - 1].1;

        let reflected = along(T::one(), &worst_x);
        let f_r = eval(&reflected, &mut n_evals);
        if f_r < best {
            let expanded = along(two, &worst_x);
            let f_e = eval(&expanded, &mut n_evals);
            simplex[dim] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
            continue;
        }
        if f_r < second_worst {
            simplex[dim] = (reflected, f_r);
            continue;
        }
        let (contracted, f_c, accept) = if f_r < worst {
            let c = along(half, &worst_x);
            let fc = eval(&c, &mut n_evals);
            let ok = fc <= f_r;
            (c, fc, ok)
        } else {
            let c = along(-half, &worst_x);
            let fc = eval(&c, &mut n_evals);
            let ok = fc < worst;
            (c, fc, ok)
        };
        if accept {
            simplex[dim] = (contracted, f_c);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            for (x, &a) in v.iter_mut().zip(&anchor) {
                *x = a + half * (*x - a);
            }
            *fv = eval(v, &mut n_evals);
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        f,
        n_evals,
        converged,
    }
}
