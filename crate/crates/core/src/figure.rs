//! Detection-probability curves over a grid of false-alarm periods.

use std::io::{self, Write};

use crate::model::{make_gaussian_ar1, GaussianAr1Params};
use crate::shewhart::{GaussianQuantities, GaussianShewhart, ShewhartError};

pub const CSV_HEADER: &str = "gamma,nu1,nu2,beta1,beta2,beta1_tilde,beta2_tilde";
pub const DEFAULT_POINTS: usize = 60;
pub const DEFAULT_LOW: f64 = 1.05;
pub const DEFAULT_HIGH: f64 = 1000.0;

pub const FIGURE_PARAMS: GaussianAr1Params = GaussianAr1Params {
    alpha: 0.5,
    mu: 1.0,
    sigma2: 0.5,
};

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    i if i == n - 1 => hi,
                    i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

pub fn figure1_rows(params: GaussianAr1Params, gammas: &[f64]) -> Result<Vec<GaussianQuantities>, ShewhartError> {
    let model = make_gaussian_ar1(params).map_err(|e| ShewhartError::UnsupportedPrior(e.to_string()))?;
    gammas
        .iter()
        .map(|&g| Ok(GaussianShewhart::new(&model, g)?.quantities()))
        .collect()
}

/// C `printf("%.10e")`.
pub fn c_exp(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.10e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn csv_row(q: &GaussianQuantities) -> String {
    [q.gamma, q.nu1, q.nu2, q.beta1, q.beta2, q.beta1_tilde, q.beta2_tilde]
        .map(c_exp)
        .join(",")
}

pub fn write_csv<W: Write>(mut out: W, rows: &[GaussianQuantities]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", csv_row(r))?;
    }
    Ok(())
}

/// Parses a CSV written by [`write_csv`].
pub fn read_csv(text: &str) -> Result<Vec<GaussianQuantities>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("unexpected header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let v: Vec<f64> = line
                .split(',')
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| format!("row {}: {e}", i + 1))?;
            match v[..] {
                [gamma, nu1, nu2, beta1, beta2, beta1_tilde, beta2_tilde] => Ok(GaussianQuantities {
                    gamma,
                    nu1,
                    nu2,
                    beta1,
                    beta2,
                    beta1_tilde,
                    beta2_tilde,
                }),
                _ => Err(format!("row {}: expected 7 fields", i + 1)),
            }
        })
        .collect()
}

/// Interpolates every column linearly in `ln γ`.
pub fn interpolate(rows: &[GaussianQuantities], gamma: f64) -> Option<GaussianQuantities> {
    let i = rows.windows(2).position(|w| w[0].gamma <= gamma && gamma <= w[1].gamma)?;
    let (a, b) = (&rows[i], &rows[i + 1]);
    let t = (gamma.ln() - a.gamma.ln()) / (b.gamma.ln() - a.gamma.ln());
    let mix = |x: f64, y: f64| x + t * (y - x);
    Some(GaussianQuantities {
        gamma,
        nu1: mix(a.nu1, b.nu1),
        nu2: mix(a.nu2, b.nu2),
        beta1: mix(a.beta1, b.beta1),
        beta2: mix(a.beta2, b.beta2),
        beta1_tilde: mix(a.beta1_tilde, b.beta1_tilde),
        beta2_tilde: mix(a.beta2_tilde, b.beta2_tilde),
    })
}

/// `β₁ >= β̃₂ >= β₂ >= β̃₁`, all in `[0, 1]`, thresholds positive.
pub fn row_is_ordered(q: &GaussianQuantities) -> bool {
    let tol = 1e-12;
    let unit = [q.beta1, q.beta2, q.beta1_tilde, q.beta2_tilde]
        .iter()
        .all(|b| (0.0..=1.0).contains(b));
    unit && q.nu1 > 0.0
        && q.nu2 > 0.0
        && q.beta1 + tol >= q.beta2_tilde
        && q.beta2_tilde + tol >= q.beta2
        && q.beta2 + tol >= q.beta1_tilde
}

/// Every probability column is nonincreasing down the rows.
pub fn columns_nonincreasing(rows: &[GaussianQuantities]) -> bool {
    rows.windows(2).all(|w| {
        let (a, b) = (&w[0], &w[1]);
        b.beta1 <= a.beta1 && b.beta2 <= a.beta2 && b.beta1_tilde <= a.beta1_tilde && b.beta2_tilde <= a.beta2_tilde
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_format_matches_printf() {
        assert_eq!(c_exp(100.0), "1.0000000000e+02");
        assert_eq!(c_exp(0.00178), "1.7800000000e-03");
        assert_eq!(c_exp(0.0), "0.0000000000e+00");
        assert_eq!(c_exp(-2.5e-120), "-2.5000000000e-120");
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = log_grid(DEFAULT_LOW, DEFAULT_HIGH, DEFAULT_POINTS);
        assert_eq!(g.len(), 60);
        assert_eq!(g[0], 1.05);
        assert_eq!(g[59], 1000.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn csv_roundtrip() {
        let rows = figure1_rows(FIGURE_PARAMS, &log_grid(2.0, 100.0, 5)).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = read_csv(&text).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            assert!((a.beta2 - b.beta2).abs() <= 1e-10 * a.beta2);
        }
        assert!(back.iter().all(row_is_ordered));
        assert!(columns_nonincreasing(&back));
    }
}
