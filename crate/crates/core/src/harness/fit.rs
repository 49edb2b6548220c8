//! Convergence-rate fits over sweep reports.

use serde::Serialize;
use thiserror::Error;

use super::report::{SweepKind, SweepReport};

/// Fits need at least this many grid points.
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("{points} usable points, at least {MIN_FIT_POINTS} needed")]
    Underdetermined { points: usize },
    #[error("log-log fit needs positive values, found {0}")]
    NonPositive(f64),
    #[error("report has no column `{0}`")]
    MissingColumn(String),
    #[error("model {model:?} does not apply to {kind:?} sweeps")]
    WrongModel { model: RateModel, kind: SweepKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// error ≈ C1·f² + C2·g with C1, C2 ≥ 0.
    F2PlusG,
    /// error ≈ C/(1 − p).
    InverseOneMinusP,
    /// ln error ≈ slope·ln x + intercept, x = δ or 1/(1 − p).
    LoglogSlope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWindow {
    /// The half of the grid closest to the limit, at least four points.
    Asymptotic,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub model: RateModel,
    /// [C1, C2], [C] or [slope, intercept].
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub points: usize,
}

fn r_squared(y: &[f64], fitted: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

fn check_points(n: usize) -> Result<(), FitError> {
    if n < MIN_FIT_POINTS {
        return Err(FitError::Underdetermined { points: n });
    }
    Ok(())
}

/// Non-negative least squares for y ≈ C1·f² + C2·g by enumerating active sets.
pub fn fit_f2_plus_g(f: &[f64], g: &[f64], y: &[f64]) -> Result<RateFit, FitError> {
    check_points(y.len())?;
    let a: Vec<f64> = f.iter().map(|v| v * v).collect();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, z)| x * z).sum::<f64>();
    let single = |col: &[f64]| -> f64 {
        let n = dot(col, col);
        if n > 0.0 {
            (dot(col, y) / n).max(0.0)
        } else {
            0.0
        }
    };
    let mut candidates = vec![[0.0, 0.0], [single(&a), 0.0], [0.0, single(g)]];
    let (aa, gg, ag) = (dot(&a, &a), dot(g, g), dot(&a, g));
    let det = aa * gg - ag * ag;
    if det > 1e-14 * aa * gg {
        let (ay, gy) = (dot(&a, y), dot(g, y));
        let c1 = (gg * ay - ag * gy) / det;
        let c2 = (aa * gy - ag * ay) / det;
        if c1 >= 0.0 && c2 >= 0.0 {
            candidates.push([c1, c2]);
        }
    }
    let residual = |c: &[f64; 2]| -> f64 {
        a.iter()
            .zip(g)
            .zip(y)
            .map(|((ai, gi), yi)| (c[0] * ai + c[1] * gi - yi).powi(2))
            .sum()
    };
    let best = candidates
        .into_iter()
        .min_by(|p, q| residual(p).total_cmp(&residual(q)))
        .expect("candidate list is non-empty");
    let fitted: Vec<f64> = a
        .iter()
        .zip(g)
        .map(|(ai, gi)| best[0] * ai + best[1] * gi)
        .collect();
    Ok(RateFit {
        model: RateModel::F2PlusG,
        coefficients: best.to_vec(),
        r_squared: r_squared(y, &fitted),
        points: y.len(),
    })
}

/// Least squares through the origin for y ≈ C·x with x = 1/(1 − p).
pub fn fit_inverse(x: &[f64], y: &[f64]) -> Result<RateFit, FitError> {
    check_points(y.len())?;
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let c = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let fitted: Vec<f64> = x.iter().map(|v| c * v).collect();
    Ok(RateFit {
        model: RateModel::InverseOneMinusP,
        coefficients: vec![c],
        r_squared: r_squared(y, &fitted),
        points: y.len(),
    })
}

/// Ordinary least squares of ln y on ln x.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<RateFit, FitError> {
    check_points(y.len())?;
    if let Some(&bad) = x.iter().chain(y).find(|v| !(**v > 0.0)) {
        return Err(FitError::NonPositive(bad));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let fitted: Vec<f64> = lx.iter().map(|a| intercept + slope * a).collect();
    Ok(RateFit {
        model: RateModel::LoglogSlope,
        coefficients: vec![slope, intercept],
        r_squared: r_squared(&ly, &fitted),
        points: y.len(),
    })
}

/// Fits `model` to one column of `report`. Rows at δ = 0 are skipped; the
/// asymptotic window keeps the last max(4, ⌈n/2⌉) remaining rows.
pub fn fit_rate(
    report: &SweepReport,
    column: &str,
    model: RateModel,
    window: FitWindow,
) -> Result<RateFit, FitError> {
    let get = |name: &str| {
        report
            .column(name)
            .ok_or_else(|| FitError::MissingColumn(name.to_string()))
    };
    let y = get(column)?;
    let x = match report.kind {
        SweepKind::Delta => get("delta")?,
        SweepKind::P => get("one_minus_p")?.iter().map(|v| 1.0 / v).collect(),
    };
    let mut keep: Vec<usize> = (0..y.len()).filter(|&i| x[i] > 0.0).collect();
    if window == FitWindow::Asymptotic {
        let n = keep.len();
        let take = MIN_FIT_POINTS.max(n.div_ceil(2)).min(n);
        keep.drain(..n - take);
    }
    let pick = |v: &[f64]| -> Vec<f64> { keep.iter().map(|&i| v[i]).collect() };
    let (xs, ys) = (pick(&x), pick(&y));
    match (model, report.kind) {
        (RateModel::F2PlusG, SweepKind::Delta) => {
            fit_f2_plus_g(&pick(&get("f")?), &pick(&get("g")?), &ys)
        }
        (RateModel::InverseOneMinusP, SweepKind::P) => fit_inverse(&xs, &ys),
        (RateModel::LoglogSlope, _) => fit_loglog(&xs, &ys),
        (model, kind) => Err(FitError::WrongModel { model, kind }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn synthetic_f2_plus_g() {
        let f = [0.2, 0.1, 0.05, 0.025, 0.0125];
        let g = [0.3, 0.02, 0.01, 0.004, 0.001];
        let y: Vec<f64> = f
            .iter()
            .zip(&g)
            .map(|(a, b)| 3.0 * a * a + 5.0 * b)
            .collect();
        let fit = fit_f2_plus_g(&f, &g, &y).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[1], 5.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn negative_coefficient_is_clamped() {
        let f = [0.0; 4];
        let g = [0.4, 0.3, 0.2, 0.1];
        let y = [0.8, 0.6, 0.4, 0.2];
        let fit = fit_f2_plus_g(&f, &g, &y).unwrap();
        assert_eq!(fit.coefficients[0], 0.0);
        assert_abs_diff_eq!(fit.coefficients[1], 2.0, epsilon = 1e-14);
        let y = [-0.8, -0.6, -0.4, -0.2];
        assert_eq!(
            fit_f2_plus_g(&f, &g, &y).unwrap().coefficients,
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn inverse_model() {
        let p = [-7.0, -15.0, -31.0, -63.0];
        let x: Vec<f64> = p.iter().map(|p| 1.0 / (1.0 - p)).collect();
        let y: Vec<f64> = x.iter().map(|v| 7.0 * v).collect();
        let fit = fit_inverse(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let x = [0.2, 0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|v: &f64| 4.0 * v.powi(2)).collect();
        let fit = fit_loglog(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 4f64.ln(), epsilon = 1e-12);
        assert!(matches!(
            fit_loglog(&x, &[1.0, 0.0, 1.0, 1.0]),
            Err(FitError::NonPositive(_))
        ));
    }

    #[test]
    fn too_few_points() {
        assert_eq!(
            fit_loglog(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            FitError::Underdetermined { points: 3 }
        );
    }
}
