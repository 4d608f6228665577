//! Small gradient-free optimizer used by the maximization routines.
//!
//! Nelder-Mead over R^n with standard reflection/expansion/contraction
//! coefficients. Deterministic given the starting simplex, which the callers
//! derive from seeded RNG restarts.

/// Minimize `f` starting from `x0`; the initial simplex is `x0` plus steps of
/// size `step` along each coordinate. Returns (argmin, min).
pub(crate) fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_iter: usize,
    ftol: f64,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push(x);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|x| f(x)).collect();

    for _ in 0..max_iter {
        // order ascending by f
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap());
        let simplex_sorted: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let fvals_sorted: Vec<f64> = order.iter().map(|&i| fvals[i]).collect();
        simplex = simplex_sorted;
        fvals = fvals_sorted;

        if (fvals[n] - fvals[0]).abs() < ftol {
            break;
        }

        // centroid of all but worst
        let mut centroid = vec![0.0; n];
        for x in simplex.iter().take(n) {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }

        let worst = simplex[n].clone();
        let reflect: Vec<f64> = centroid.iter().zip(&worst).map(|(&c, &w)| c + alpha * (c - w)).collect();
        let fr = f(&reflect);

        if fr < fvals[0] {
            let expand: Vec<f64> = centroid.iter().zip(&worst).map(|(&c, &w)| c + gamma * (c - w)).collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[n] = expand;
                fvals[n] = fe;
            } else {
                simplex[n] = reflect;
                fvals[n] = fr;
            }
        } else if fr < fvals[n - 1] {
            simplex[n] = reflect;
            fvals[n] = fr;
        } else {
            let contract: Vec<f64> = centroid.iter().zip(&worst).map(|(&c, &w)| c + rho * (w - c)).collect();
            let fc = f(&contract);
            if fc < fvals[n] {
                simplex[n] = contract;
                fvals[n] = fc;
            } else {
                // shrink toward the best vertex
                let best = simplex[0].clone();
                for x in simplex.iter_mut().skip(1) {
                    for (xi, &bi) in x.iter_mut().zip(&best) {
                        *xi = bi + sigma * (*xi - bi);
                    }
                }
                for (i, x) in simplex.iter().enumerate().skip(1) {
                    fvals[i] = f(x);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    (simplex[best].clone(), fvals[best])
}
