//! Derivative-free minimisation: Nelder–Mead restarts alternated with
//! coordinate-wise golden-section sweeps.

use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub(crate) struct Optimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evaluations: usize,
    pub converged: bool,
}

struct Budget<F> {
    f: F,
    used: usize,
    max: usize,
    best_x: Vec<f64>,
    best_f: f64,
}

impl<F: FnMut(&[f64]) -> f64> Budget<F> {
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.used >= self.max {
            return None;
        }
        self.used += 1;
        let v = (self.f)(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < self.best_f {
            self.best_f = v;
            self.best_x = x.to_vec();
        }
        Some(v)
    }
}

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Minimises `f` from `x0`. Converged when the coordinate sweep after a
/// Nelder–Mead run improves the objective by less than `tol`.
pub(crate) fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, max_evals: usize, tol: f64) -> Optimum {
    let mut b = Budget { f, used: 0, max: max_evals, best_x: x0.to_vec(), best_f: f64::INFINITY };
    let mut converged = false;
    if b.eval(x0).is_some() {
        let mut step = step;
        loop {
            if nelder_mead(&mut b, step, tol).is_none() {
                break;
            }
            let start = b.best_f;
            if sweep(&mut b).is_none() {
                break;
            }
            if start - b.best_f < tol {
                converged = b.best_f.is_finite();
                break;
            }
            step = (0.5 * step).max(0.05);
        }
    }
    Optimum { x: b.best_x, fx: b.best_f, evaluations: b.used, converged }
}

fn nelder_mead<F: FnMut(&[f64]) -> f64>(b: &mut Budget<F>, step: f64, tol: f64) -> Option<()> {
    let d = b.best_x.len();
    let x0 = b.best_x.clone();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.clone(), b.best_f));
    for k in 0..d {
        let mut x = x0.clone();
        x[k] += step;
        let fx = b.eval(&x)?;
        simplex.push((x, fx));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..200 * (d + 1) {
        simplex.sort_by(|a, c| a.1.total_cmp(&c.1));
        let spread = simplex[d].1 - simplex[0].1;
        if spread.is_finite() && spread < tol {
            break;
        }
        let mut centroid = alloc::vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / d as f64;
            }
        }
        let towards = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid.iter().zip(worst).map(|(c, w)| c + t * (w - c)).collect()
        };
        let worst = simplex[d].0.clone();
        let xr = towards(-alpha, &worst);
        let fr = b.eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = towards(-gamma, &worst);
            let fe = b.eval(&xe)?;
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = towards(-rho, &worst);
                let fc = b.eval(&xc)?;
                (xc, fc)
            } else {
                let xc = towards(rho, &worst);
                let fc = b.eval(&xc)?;
                (xc, fc)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (x, fx) in simplex.iter_mut().skip(1) {
                    for (v, bv) in x.iter_mut().zip(&best) {
                        *v = bv + sigma * (*v - bv);
                    }
                    *fx = b.eval(x)?;
                }
            }
        }
    }
    Some(())
}

/// One golden-section line search along each coordinate from the best point.
fn sweep<F: FnMut(&[f64]) -> f64>(b: &mut Budget<F>) -> Option<()> {
    let d = b.best_x.len();
    for k in 0..d {
        let x0 = b.best_x.clone();
        let f0 = b.best_f;
        let at = |t: f64| {
            let mut x = x0.clone();
            x[k] += t;
            x
        };
        let h = 0.02;
        let fp = b.eval(&at(h))?;
        let fm = b.eval(&at(-h))?;
        // Bracket [lo, hi] around the best of the three probes.
        let (mut lo, mut hi) = if fp < f0 && fp <= fm {
            let (mut a, mut c, mut fc) = (0.0, h, fp);
            loop {
                let t = 2.0 * c + h;
                let ft = b.eval(&at(t))?;
                if ft >= fc || t > 10.0 {
                    break (a, t);
                }
                a = c;
                c = t;
                fc = ft;
            }
        } else if fm < f0 {
            let (mut a, mut c, mut fc) = (0.0, -h, fm);
            loop {
                let t = 2.0 * c - h;
                let ft = b.eval(&at(t))?;
                if ft >= fc || t < -10.0 {
                    break (t, a);
                }
                a = c;
                c = t;
                fc = ft;
            }
        } else {
            (-h, h)
        };
        let mut x1 = lo + GOLDEN * (hi - lo);
        let mut x2 = hi - GOLDEN * (hi - lo);
        let mut f1 = b.eval(&at(x1))?;
        let mut f2 = b.eval(&at(x2))?;
        while hi - lo > 1e-3 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = lo + GOLDEN * (hi - lo);
                f1 = b.eval(&at(x1))?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = hi - GOLDEN * (hi - lo);
                f2 = b.eval(&at(x2))?;
            }
        }
    }
    Some(())
}
