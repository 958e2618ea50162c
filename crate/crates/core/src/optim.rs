//! Derivative-free minimizers used by the estimation steps.

/// Axis-aligned bounds applied to every trial point by coordinatewise clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn project(&self, x: &mut [f64]) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(lo, hi);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop once every vertex lies within this sup-norm distance of the best one.
    pub tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex search started from `x0` with initial edge vector `step`.
///
/// Vertex `k` of the initial simplex is `x0 + step[k] e_k`. When `bounds` is
/// given every trial point is clamped into the box before evaluation. NaN
/// objective values are treated as `+∞`.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    bounds: Option<&Bounds>,
    opts: NelderMeadOptions,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &mut Vec<f64>| {
        if let Some(b) = bounds {
            b.project(x);
        }
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    let f0 = eval(&mut start);
    let mut simplex = vec![(start.clone(), f0)];
    for k in 0..dim {
        let mut v = start.clone();
        v[k] += step[k];
        let fv = eval(&mut v);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex_size(&simplex) <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let worst = simplex[dim].clone();
        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|(v, _)| v[k]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };

        let mut reflected = along(1.0);
        let f_r = eval(&mut reflected);
        if f_r < simplex[0].1 {
            let mut expanded = along(2.0);
            let f_e = eval(&mut expanded);
            simplex[dim] = if f_e < f_r {
                (expanded, f_e)
            } else {
                (reflected, f_r)
            };
            continue;
        }
        if f_r < simplex[dim - 1].1 {
            simplex[dim] = (reflected, f_r);
            continue;
        }
        let (mut contracted, f_c) = if f_r < worst.1 {
            let mut c = along(0.5);
            let fc = eval(&mut c);
            (c, fc)
        } else {
            let mut c = along(-0.5);
            let fc = eval(&mut c);
            (c, fc)
        };
        if f_c < worst.1.min(f_r) {
            simplex[dim] = (std::mem::take(&mut contracted), f_c);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut v: Vec<f64> = best
                .iter()
                .zip(&vertex.0)
                .map(|(&b, &x)| b + 0.5 * (x - b))
                .collect();
            let fv = eval(&mut v);
            *vertex = (v, fv);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        value,
        iterations,
        evaluations,
        converged,
    }
}

fn simplex_size(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .flat_map(|(v, _)| v.iter().zip(best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMin {
    pub x: f64,
    pub value: f64,
}

/// Golden-section search for a minimum of `f` on `[lo, hi]` to interval width `tol`.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> ScalarMin
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
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
    if fc <= fd {
        ScalarMin { x: c, value: fc }
    } else {
        ScalarMin { x: d, value: fd }
    }
}

/// Minimizes `f` over `[lo, hi]`: a uniform grid of `grid_points` values
/// locates the best cell, golden-section search refines inside the bracket
/// formed by its neighbours. Returns the better of the grid and refined points
/// together with all grid values.
pub fn grid_then_golden<F>(mut f: F, lo: f64, hi: f64, grid_points: usize, tol: f64) -> (ScalarMin, Vec<(f64, f64)>)
where
    F: FnMut(f64) -> f64,
{
    let m = grid_points.max(2);
    let grid: Vec<(f64, f64)> = (0..m)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (m - 1) as f64;
            let v = f(x);
            (x, if v.is_nan() { f64::INFINITY } else { v })
        })
        .collect();
    let best = (0..m)
        .min_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1))
        .expect("non-empty grid");
    let a = grid[best.saturating_sub(1)].0;
    let b = grid[(best + 1).min(m - 1)].0;
    let refined = golden_section(&mut f, a, b, tol);
    let out = if refined.value < grid[best].1 {
        refined
    } else {
        ScalarMin {
            x: grid[best].0,
            value: grid[best].1,
        }
    };
    (out, grid)
}
