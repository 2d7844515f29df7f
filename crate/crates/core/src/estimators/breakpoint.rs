use serde::{Deserialize, Serialize};

use super::FitError;

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub rmse: f64,
}

/// Continuous two-segment fit `y = level + slope_left (x - bp)` left of the
/// breakpoint and `level + slope_right (x - bp)` right of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakpointFit {
    pub slope_left: f64,
    pub slope_right: f64,
    pub breakpoint: f64,
    pub level: f64,
    pub rmse: f64,
}

impl BreakpointFit {
    pub fn predict(&self, x: f64) -> f64 {
        let dx = x - self.breakpoint;
        self.level + if dx < 0.0 { self.slope_left * dx } else { self.slope_right * dx }
    }
}

fn check_xs(xs: &[f64], ys: &[f64], needed: usize) -> Result<(), FitError> {
    if xs.len() != ys.len() {
        return Err(FitError::InvalidInput(format!("{} xs but {} ys", xs.len(), ys.len())));
    }
    if xs.len() < needed {
        return Err(FitError::TooFewSamples { needed, got: xs.len() });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput("non-finite value".into()));
    }
    if !xs.windows(2).all(|w| w[0] < w[1]) {
        return Err(FitError::InvalidInput("xs must be strictly increasing".into()));
    }
    Ok(())
}

/// Line through centered data; returns `(mean_x, mean_y, slope, sse)`.
fn centered_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    (mx, my, slope, sse)
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit, FitError> {
    check_xs(xs, ys, 2)?;
    let (mx, my, slope, sse) = centered_line(xs, ys);
    Ok(LineFit {
        intercept: my - slope * mx,
        slope,
        rmse: (sse / xs.len() as f64).sqrt(),
    })
}

/// Least squares with the breakpoint held at `bp`.
fn hinge_at(xs: &[f64], ys: &[f64], bp: f64) -> (f64, f64, f64, f64) {
    // basis: 1, min(x - bp, 0), max(x - bp, 0)
    let mut a = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - bp;
        let phi = [1.0, dx.min(0.0), dx.max(0.0)];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += phi[i] * phi[j];
            }
            r[i] += phi[i] * y;
        }
    }
    let beta = solve(a, r);
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let dx = x - bp;
            (y - beta[0] - beta[1] * dx.min(0.0) - beta[2] * dx.max(0.0)).powi(2)
        })
        .sum();
    (beta[0], beta[1], beta[2], sse)
}

/// Gaussian elimination with partial pivoting; singular columns get zero.
fn solve<const N: usize>(mut a: [[f64; N]; N], mut r: [f64; N]) -> [f64; N] {
    for col in 0..N {
        let piv = (col..N)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        r.swap(col, piv);
        if a[col][col].abs() < 1e-300 {
            continue;
        }
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; N];
    for col in (0..N).rev() {
        if a[col][col].abs() < 1e-300 {
            continue;
        }
        let mut acc = r[col];
        for k in col + 1..N {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    x
}

/// Continuous two-segment least-squares fit.
///
/// Every gap between consecutive xs (leaving at least two points on each
/// side) is scanned. Within a gap the optimum is found exactly: if the two
/// independent least-squares lines meet inside the gap, that is the
/// constrained optimum; otherwise it lies at one of the gap ends. The
/// problem is solved on centered xs, so a shift of the data shifts the
/// breakpoint by the same amount.
pub fn fit_breakpoint(xs: &[f64], ys: &[f64]) -> Result<BreakpointFit, FitError> {
    check_xs(xs, ys, 8)?;
    let n = xs.len();
    let center = xs.iter().sum::<f64>() / n as f64;
    let cx: Vec<f64> = xs.iter().map(|x| x - center).collect();

    let mut best: Option<(f64, f64, f64, f64, f64)> = None; // sse, bp, level, sl, sr
    let mut consider = |cand: (f64, f64, f64, f64, f64)| {
        if best.is_none_or(|b| cand.0 < b.0) {
            best = Some(cand);
        }
    };
    for j in 1..n - 2 {
        let (lo, hi) = (cx[j], cx[j + 1]);
        let (mxl, myl, sl, ssel) = centered_line(&cx[..=j], &ys[..=j]);
        let (mxr, myr, sr, sser) = centered_line(&cx[j + 1..], &ys[j + 1..]);
        if sl != sr {
            let al = myl - sl * mxl;
            let ar = myr - sr * mxr;
            let meet = (ar - al) / (sl - sr);
            if meet >= lo && meet <= hi {
                consider((ssel + sser, meet, al + sl * meet, sl, sr));
                continue;
            }
        }
        for bp in [lo, hi] {
            let (level, s_left, s_right, sse) = hinge_at(&cx, ys, bp);
            consider((sse, bp, level, s_left, s_right));
        }
    }
    let (sse, bp, level, slope_left, slope_right) = best.expect("at least one gap is scanned");
    Ok(BreakpointFit {
        slope_left,
        slope_right,
        breakpoint: bp + center,
        level,
        rmse: (sse.max(0.0) / n as f64).sqrt(),
    })
}

/// Three-segment description obtained from successive two-segment fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreePhaseFit {
    /// Breakpoints in increasing order.
    pub breakpoints: [f64; 2],
    /// Slopes of the left, middle and right segments.
    pub slopes: [f64; 3],
    /// Rmse of the continuous three-segment least-squares fit with both
    /// breakpoints held fixed.
    pub rmse: f64,
    /// Number of two-segment fits performed.
    pub fits: usize,
}

impl ThreePhaseFit {
    /// Flat, then falling, then flat: the middle slope is negative and both
    /// outer slopes are at most `flat_ratio` times its magnitude.
    pub fn is_flat_falling_flat(&self, flat_ratio: f64) -> bool {
        let [left, mid, right] = self.slopes;
        mid < 0.0 && left.abs() <= flat_ratio * mid.abs() && right.abs() <= flat_ratio * mid.abs()
    }
}

/// Continuous piecewise-linear least squares with fixed breakpoints
/// `bp1 < bp2`; returns the three slopes and the sse.
fn two_hinges(xs: &[f64], ys: &[f64], bp1: f64, bp2: f64) -> ([f64; 3], f64) {
    let basis = |x: f64| [1.0, x - bp1, (x - bp1).max(0.0), (x - bp2).max(0.0)];
    let mut a = [[0.0f64; 4]; 4];
    let mut r = [0.0f64; 4];
    for (&x, &y) in xs.iter().zip(ys) {
        let phi = basis(x);
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] += phi[i] * phi[j];
            }
            r[i] += phi[i] * y;
        }
    }
    let beta = solve(a, r);
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let phi = basis(x);
            (y - (0..4).map(|i| beta[i] * phi[i]).sum::<f64>()).powi(2)
        })
        .sum();
    ([beta[1], beta[1] + beta[2], beta[1] + beta[2] + beta[3]], sse)
}

/// Locates two knees by successive two-segment fits.
///
/// The first fit runs on all points. The second runs on whichever side of
/// the first breakpoint leaves the smaller residual. The knee found first is
/// then refitted on the points beyond the other knee, alternating until the
/// pair stops moving.
pub fn fit_three_phase(xs: &[f64], ys: &[f64]) -> Result<ThreePhaseFit, FitError> {
    let first = fit_breakpoint(xs, ys)?;
    let split = xs.partition_point(|&x| x < first.breakpoint);
    let mut fits = 1;
    let mut pair: Option<([f64; 2], f64)> = None;
    for left_side in [true, false] {
        let range = if left_side { 0..split } else { split..xs.len() };
        let Ok(second) = fit_breakpoint(&xs[range.clone()], &ys[range]) else {
            continue;
        };
        fits += 1;
        let bps = if left_side {
            [second.breakpoint, first.breakpoint]
        } else {
            [first.breakpoint, second.breakpoint]
        };
        if bps[0] >= bps[1] {
            continue;
        }
        let sse = two_hinges(xs, ys, bps[0], bps[1]).1;
        if pair.is_none_or(|(_, best)| sse < best) {
            pair = Some((bps, sse));
        }
    }
    let (mut bps, _) = pair.ok_or(FitError::TooFewSamples {
        needed: 16,
        got: xs.len(),
    })?;

    for round in 0..20 {
        let moved_right = round % 2 == 0;
        let (range, slot) = if moved_right {
            (xs.partition_point(|&x| x <= bps[0])..xs.len(), 1)
        } else {
            (0..xs.partition_point(|&x| x < bps[1]), 0)
        };
        let Ok(refit) = fit_breakpoint(&xs[range.clone()], &ys[range]) else {
            break;
        };
        fits += 1;
        let mut next = bps;
        next[slot] = refit.breakpoint;
        if next[0] >= next[1] || two_hinges(xs, ys, next[0], next[1]).1 > two_hinges(xs, ys, bps[0], bps[1]).1 {
            break;
        }
        let shift = (next[slot] - bps[slot]).abs();
        bps = next;
        if shift <= 1e-12 * (1.0 + bps[slot].abs()) && round > 0 {
            break;
        }
    }
    let (slopes, sse) = two_hinges(xs, ys, bps[0], bps[1]);
    Ok(ThreePhaseFit {
        breakpoints: bps,
        slopes,
        rmse: (sse / xs.len() as f64).sqrt(),
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn knee(bp: f64) -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..=140).map(|i| i as f64 * 0.1).collect();
        let ys = xs.iter().map(|&x| if x < bp { x } else { bp }).collect();
        (xs, ys)
    }

    #[test]
    fn exact_knee_is_recovered() {
        let (xs, ys) = knee(9.0);
        let fit = fit_breakpoint(&xs, &ys).unwrap();
        assert!((fit.breakpoint - 9.0).abs() < 0.05, "{fit:?}");
        assert!((fit.slope_left - 1.0).abs() < 1e-9 && fit.slope_right.abs() < 1e-9);
        assert!(fit.rmse < 1e-9);
        // knee between grid points
        let (xs, ys) = knee(6.33);
        let fit = fit_breakpoint(&xs, &ys).unwrap();
        assert!((fit.breakpoint - 6.33).abs() < 1e-9);
    }

    #[test]
    fn straight_line_does_no_worse_than_one_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.3 * x + rng.random::<f64>() * 0.1).collect();
        let two = fit_breakpoint(&xs, &ys).unwrap();
        let one = fit_line(&xs, &ys).unwrap();
        assert!(two.rmse <= one.rmse);
        let exact: Vec<f64> = xs.iter().map(|x| 1.0 + 0.5 * x).collect();
        let two = fit_breakpoint(&xs, &exact).unwrap();
        assert!(two.rmse <= fit_line(&xs, &exact).unwrap().rmse + 1e-12);
        assert!(two.breakpoint >= xs[0] && two.breakpoint <= xs[49]);
    }

    #[test]
    fn shift_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let xs: Vec<f64> = (0..60).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| if x < 7.3 { 0.8 * x } else { 0.8 * 7.3 - 0.2 * (x - 7.3) } + rng.random::<f64>() * 0.3)
            .collect();
        let base = fit_breakpoint(&xs, &ys).unwrap();
        for shift in [-100.0, 3.0, 1e3] {
            let moved: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            let fit = fit_breakpoint(&moved, &ys).unwrap();
            assert!((fit.breakpoint - base.breakpoint - shift).abs() < 1e-9);
            assert!((fit.slope_left - base.slope_left).abs() < 1e-9);
            assert!((fit.slope_right - base.slope_right).abs() < 1e-9);
        }
    }

    #[test]
    fn input_errors() {
        assert!(matches!(fit_breakpoint(&[1.0; 3], &[1.0; 3]), Err(FitError::TooFewSamples { .. })));
        let xs = [0.0, 1.0, 2.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert!(matches!(fit_breakpoint(&xs, &[0.0; 8]), Err(FitError::InvalidInput(_))));
    }

    #[test]
    fn three_phases_of_a_ramp() {
        let xs: Vec<f64> = (0..=80).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 5.0 - 4.0 * ((x - 3.0) / 2.0).clamp(0.0, 1.0)).collect();
        let fit = fit_three_phase(&xs, &ys).unwrap();
        assert!((fit.breakpoints[0] - 3.0).abs() < 1e-6 && (fit.breakpoints[1] - 5.0).abs() < 1e-6);
        assert!(fit.is_flat_falling_flat(0.05));
        assert!(fit.rmse < 1e-9);
    }
}
