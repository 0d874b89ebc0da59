//! Derivative-free minimisation used to refine grid-scan optima.

/// Result of a Nelder–Mead run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder–Mead simplex minimisation from an explicit initial simplex
/// (`n + 1` vertices in `n` dimensions). Fully deterministic.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, simplex: Vec<Vec<f64>>, xtol: f64, ftol: f64, max_iter: usize) -> Minimum {
    let n = simplex.len() - 1;
    let mut pts = simplex;
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut iterations = 0;
    let point = |base: &[f64], dir: &[f64], t: f64| -> Vec<f64> {
        base.iter().zip(dir).map(|(b, d)| b + t * (d - b)).collect()
    };
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let diameter = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < xtol && (vals[n] - vals[0]).abs() < ftol {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64)
            .collect();
        let reflected = point(&centroid, &pts[n], -1.0);
        let fr = f(&reflected);
        if fr < vals[0] {
            let expanded = point(&centroid, &pts[n], -2.0);
            let fe = f(&expanded);
            if fe < fr {
                pts[n] = expanded;
                vals[n] = fe;
            } else {
                pts[n] = reflected;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = reflected;
            vals[n] = fr;
        } else {
            let (contracted, fc) = if fr < vals[n] {
                let c = point(&centroid, &pts[n], -0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = point(&centroid, &pts[n], 0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = contracted;
                vals[n] = fc;
            } else {
                let best = pts[0].clone();
                for i in 1..=n {
                    pts[i] = point(&best, &pts[i], 0.5);
                    vals[i] = f(&pts[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    Minimum { x: pts[best].clone(), value: vals[best], iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, vec![vec![-1.0, 1.0], vec![-0.9, 1.0], vec![-1.0, 1.1]], 1e-10, 1e-14, 10_000);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn one_dimensional_quadratic() {
        let m = nelder_mead(|x: &[f64]| (x[0] - 2.5).powi(2), vec![vec![0.0], vec![0.1]], 1e-12, 1e-16, 1000);
        assert!((m.x[0] - 2.5).abs() < 1e-8);
    }
}
