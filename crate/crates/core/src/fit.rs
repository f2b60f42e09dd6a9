//! Least-squares trend fitting for cost plots.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// `a`
    Constant,
    /// `a + b n`
    Linear,
    /// `a + b n ln n`
    NLogN,
    /// `a n^b`
    PowerLaw,
}

impl Model {
    /// In order of increasing complexity.
    pub const ALL: [Model; 4] = [Model::Constant, Model::Linear, Model::NLogN, Model::PowerLaw];

    pub fn name(self) -> &'static str {
        match self {
            Model::Constant => "constant",
            Model::Linear => "linear",
            Model::NLogN => "nlogn",
            Model::PowerLaw => "power",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub model: Model,
    pub a: f64,
    pub b: f64,
    /// Growth exponent in `n`, ignoring log factors.
    pub exponent: f64,
    /// Sum of squared residuals over the sum of squared observations.
    pub residual: f64,
}

impl Fit {
    pub fn predict(&self, n: f64) -> f64 {
        match self.model {
            Model::Constant => self.a,
            Model::Linear => self.a + self.b * n,
            Model::NLogN => self.a + self.b * nlogn(n),
            Model::PowerLaw => self.a * n.powf(self.b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("need at least 3 distinct sizes, got {distinct}")]
    InsufficientPoints { distinct: usize },
}

const TIE: f64 = 1e-9;

fn nlogn(n: f64) -> f64 {
    if n > 0.0 {
        n * n.ln()
    } else {
        0.0
    }
}

/// Ordinary least squares `y = a + b x`.
fn ols(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

fn residual(fit: &Fit, points: &[(f64, f64)]) -> f64 {
    let ssr: f64 = points.iter().map(|&(n, y)| (y - fit.predict(n)).powi(2)).sum();
    let scale: f64 = points.iter().map(|&(_, y)| y * y).sum();
    if scale == 0.0 {
        ssr
    } else {
        ssr / scale
    }
}

/// Fits a single model; `None` when the data cannot support it.
pub fn fit_model(points: &[(f64, f64)], model: Model) -> Option<Fit> {
    if points.is_empty() {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (a, b, exponent) = match model {
        Model::Constant => (ys.iter().sum::<f64>() / ys.len() as f64, 0.0, 0.0),
        Model::Linear => {
            let (a, b) = ols(&xs, &ys)?;
            (a, b, 1.0)
        }
        Model::NLogN => {
            let tx: Vec<f64> = xs.iter().map(|&n| nlogn(n)).collect();
            let (a, b) = ols(&tx, &ys)?;
            (a, b, 1.0)
        }
        Model::PowerLaw => {
            let (lx, ly): (Vec<f64>, Vec<f64>) = points
                .iter()
                .filter(|(n, y)| *n > 0.0 && *y > 0.0)
                .map(|(n, y)| (n.ln(), y.ln()))
                .unzip();
            if lx.len() < 2 {
                return None;
            }
            let (la, b) = ols(&lx, &ly)?;
            (la.exp(), b, b)
        }
    };
    let mut fit = Fit {
        model,
        a,
        b,
        exponent,
        residual: 0.0,
    };
    fit.residual = residual(&fit, points);
    Some(fit)
}

fn distinct_sizes(points: &[(f64, f64)]) -> usize {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.len()
}

/// Every model that could be fitted, in model order.
pub fn fit_all(points: &[(f64, f64)]) -> Result<Vec<Fit>, FitError> {
    let distinct = distinct_sizes(points);
    if distinct < 3 {
        return Err(FitError::InsufficientPoints { distinct });
    }
    Ok(Model::ALL
        .into_iter()
        .filter_map(|m| fit_model(points, m))
        .collect())
}

/// The model with the smallest residual; near-ties go to the simpler model.
pub fn fit_curve(points: &[(f64, f64)]) -> Result<Fit, FitError> {
    let fits = fit_all(points)?;
    let mut best = fits[0];
    for f in &fits[1..] {
        if f.residual < best.residual - TIE {
            best = *f;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (1..=20).map(|i| (5.0 * i as f64, f(5.0 * i as f64))).collect()
    }

    #[test]
    fn exact_line() {
        let fit = fit_curve(&data(|n| 2.0 * n)).unwrap();
        assert_eq!(fit.model, Model::Linear);
        assert!((fit.b - 2.0).abs() < 1e-9);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn constant_data() {
        let fit = fit_curve(&data(|_| 7.0)).unwrap();
        assert_eq!(fit.model, Model::Constant);
        assert_eq!(fit.exponent, 0.0);
    }

    #[test]
    fn quadratic() {
        let fit = fit_curve(&data(|n| 3.0 * n * n)).unwrap();
        assert_eq!(fit.model, Model::PowerLaw);
        assert!((fit.exponent - 2.0).abs() < 1e-6);
    }

    #[test]
    fn n_log_n() {
        let fit = fit_curve(&data(|n| n * n.ln())).unwrap();
        assert_eq!(fit.model, Model::NLogN);
    }

    #[test]
    fn too_few_sizes() {
        let pts = [(1.0, 1.0), (2.0, 2.0), (2.0, 3.0)];
        assert_eq!(
            fit_curve(&pts),
            Err(FitError::InsufficientPoints { distinct: 2 })
        );
    }

    #[test]
    fn power_law_ignores_nonpositive_points() {
        let mut pts = data(|n| n.powf(1.5));
        pts.push((0.0, 0.0));
        let f = fit_model(&pts, Model::PowerLaw).unwrap();
        assert!((f.exponent - 1.5).abs() < 1e-9);
    }
}
