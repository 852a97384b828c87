//! Compactly supported test functions `f` and their Gaussian smoothings `f * phi`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// A compactly supported, bounded, non-trivial function on `R^d`.
///
/// Every family is a product or a piecewise-constant table, so `f * phi` is
/// available in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    /// `1{|x_i| <= half_width for all i}`.
    IndicatorBox { half_width: f64 },
    /// `prod_i (1 - |x_i| / half_width)_+`.
    Tent { half_width: f64 },
    /// `sign(x_1) * prod_i (1 - |x_i| / half_width)_+`; odd in `x_1`.
    SignTent { half_width: f64 },
    /// Piecewise constant on the `cells^d` equal cells of `[-half_width, half_width]^d`,
    /// row-major with the last coordinate fastest.
    CustomGrid {
        half_width: f64,
        cells: usize,
        values: Vec<f64>,
    },
}

impl Default for TestFunction {
    fn default() -> Self {
        TestFunction::IndicatorBox { half_width: 1.0 }
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `int_a^b (c0 + c1 x) phi(z - x) dx`.
fn linear_piece_conv(a: f64, b: f64, c0: f64, c1: f64, z: f64) -> f64 {
    // u = x - z
    let (ua, ub) = (a - z, b - z);
    (c0 + c1 * z) * (std_normal_cdf(ub) - std_normal_cdf(ua)) + c1 * (std_normal_pdf(ua) - std_normal_pdf(ub))
}

impl TestFunction {
    pub fn validate(&self, d: usize) -> Result<()> {
        let hw = self.half_width();
        if !(hw.is_finite() && hw > 0.0) {
            return Err(Error::Domain(format!("half_width must be positive, got {hw}")));
        }
        if let TestFunction::CustomGrid { cells, values, .. } = self {
            if *cells == 0 || values.len() != cells.pow(d as u32) {
                return Err(Error::Domain(format!(
                    "custom grid needs cells^d = {} values, got {}",
                    cells.pow(d as u32),
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("custom grid values must be finite".into()));
            }
            if values.iter().all(|&v| v == 0.0) {
                return Err(Error::Domain("test function is identically zero".into()));
            }
        }
        Ok(())
    }

    /// Minimal `L` with `supp f` inside `[-L, L]^d`.
    pub fn half_width(&self) -> f64 {
        match self {
            TestFunction::IndicatorBox { half_width }
            | TestFunction::Tent { half_width }
            | TestFunction::SignTent { half_width }
            | TestFunction::CustomGrid { half_width, .. } => *half_width,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, TestFunction::Tent { .. })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::IndicatorBox { half_width } => {
                if x.iter().all(|v| v.abs() <= *half_width) {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Tent { half_width } => tent(x, *half_width),
            TestFunction::SignTent { half_width } => {
                let s = if x[0] > 0.0 {
                    1.0
                } else if x[0] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                s * tent(x, *half_width)
            }
            TestFunction::CustomGrid {
                half_width,
                cells,
                values,
            } => match self.cell_index(x, *half_width, *cells) {
                Some(i) => values[i],
                None => 0.0,
            },
        }
    }

    fn cell_index(&self, x: &[f64], hw: f64, cells: usize) -> Option<usize> {
        let h = 2.0 * hw / cells as f64;
        let mut idx = 0usize;
        for &v in x {
            if v.abs() > hw {
                return None;
            }
            let c = (((v + hw) / h).floor() as usize).min(cells - 1);
            idx = idx * cells + c;
        }
        Some(idx)
    }

    /// Identifier of the continuity piece containing `x`; `f` is Lipschitz on
    /// each piece. `None` outside the support.
    pub fn piece(&self, x: &[f64]) -> Option<usize> {
        let hw = self.half_width();
        if x.iter().any(|v| v.abs() > hw) {
            return None;
        }
        match self {
            TestFunction::IndicatorBox { .. } | TestFunction::Tent { .. } => Some(0),
            TestFunction::SignTent { .. } => Some(if x[0] > 0.0 {
                1
            } else if x[0] < 0.0 {
                2
            } else {
                0
            }),
            TestFunction::CustomGrid { cells, .. } => self.cell_index(x, hw, *cells),
        }
    }

    /// Lipschitz constant of `f` restricted to one continuity piece, for the
    /// Euclidean distance.
    pub fn piece_lipschitz(&self, d: usize) -> f64 {
        match self {
            TestFunction::IndicatorBox { .. } | TestFunction::CustomGrid { .. } => 0.0,
            TestFunction::Tent { half_width } | TestFunction::SignTent { half_width } => {
                (d as f64).sqrt() / half_width
            }
        }
    }

    /// `(f * phi)(z) = int f(x) phi(z - x) dx` with `phi` the standard Gaussian density on `R^d`.
    pub fn gaussian_smoothing(&self, z: &[f64]) -> f64 {
        match self {
            TestFunction::IndicatorBox { half_width } => {
                let l = *half_width;
                z.iter().map(|&zi| linear_piece_conv(-l, l, 1.0, 0.0, zi)).product()
            }
            TestFunction::Tent { half_width } => z.iter().map(|&zi| tent_conv(zi, *half_width)).product(),
            TestFunction::SignTent { half_width } => {
                let l = *half_width;
                let first = linear_piece_conv(0.0, l, 1.0, -1.0 / l, z[0]) - linear_piece_conv(-l, 0.0, 1.0, 1.0 / l, z[0]);
                first * z[1..].iter().map(|&zi| tent_conv(zi, l)).product::<f64>()
            }
            TestFunction::CustomGrid {
                half_width,
                cells,
                values,
            } => {
                let d = z.len();
                let h = 2.0 * half_width / *cells as f64;
                let axis: Vec<Vec<f64>> = z
                    .iter()
                    .map(|&zi| {
                        (0..*cells)
                            .map(|c| {
                                let a = -half_width + c as f64 * h;
                                linear_piece_conv(a, a + h, 1.0, 0.0, zi)
                            })
                            .collect()
                    })
                    .collect();
                let mut total = 0.0;
                for (flat, &v) in values.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let mut r = flat;
                    let mut w = v;
                    for k in (0..d).rev() {
                        w *= axis[k][r % cells];
                        r /= cells;
                    }
                    total += w;
                }
                total
            }
        }
    }
}

fn tent(x: &[f64], l: f64) -> f64 {
    x.iter().map(|v| (1.0 - v.abs() / l).max(0.0)).product()
}

fn tent_conv(z: f64, l: f64) -> f64 {
    linear_piece_conv(-l, 0.0, 1.0, 1.0 / l, z) + linear_piece_conv(0.0, l, 1.0, -1.0 / l, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson in 1D as an independent check of the closed forms.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn smoothing_matches_simpson_in_one_dimension() {
        let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let fams = [
            TestFunction::IndicatorBox { half_width: 1.0 },
            TestFunction::Tent { half_width: 1.5 },
            TestFunction::SignTent { half_width: 0.7 },
        ];
        for f in &fams {
            let l = f.half_width();
            for &z in &[-2.3, -0.4, 0.0, 0.9, 3.1] {
                // Split at the kinks so Simpson sees smooth pieces.
                let g = |x: f64| f.eval(&[x]) * phi(z - x);
                let num = simpson(g, -l, -1e-15, 2000) + simpson(g, 1e-15, l, 2000);
                let exact = f.gaussian_smoothing(&[z]);
                assert!((num - exact).abs() < 1e-10, "{f:?} z={z}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn custom_grid_matches_indicator() {
        let g = TestFunction::CustomGrid {
            half_width: 1.0,
            cells: 2,
            values: vec![1.0; 4],
        };
        let ind = TestFunction::IndicatorBox { half_width: 1.0 };
        for z in [[0.0, 0.0], [0.5, -1.2], [2.0, 0.3]] {
            assert!((g.gaussian_smoothing(&z) - ind.gaussian_smoothing(&z)).abs() < 1e-15);
        }
        assert_eq!(g.eval(&[0.2, -0.9]), 1.0);
        assert_eq!(g.eval(&[1.2, 0.0]), 0.0);
    }

    #[test]
    fn sign_tent_is_odd() {
        let f = TestFunction::SignTent { half_width: 1.0 };
        assert!(f.gaussian_smoothing(&[0.0, 0.3]).abs() < 1e-16);
        let a = f.gaussian_smoothing(&[0.4, 0.1]);
        let b = f.gaussian_smoothing(&[-0.4, 0.1]);
        assert!((a + b).abs() < 1e-16 && a > 0.0);
    }

    #[test]
    fn validation() {
        assert!(TestFunction::IndicatorBox { half_width: 0.0 }.validate(2).is_err());
        let bad = TestFunction::CustomGrid {
            half_width: 1.0,
            cells: 2,
            values: vec![0.0; 4],
        };
        assert!(bad.validate(2).is_err());
        assert!(TestFunction::default().validate(3).is_ok());
    }
}
