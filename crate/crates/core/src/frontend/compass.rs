use super::FrontendError;

/// Histogram bin width (m) of the entropy estimate.
pub const DEFAULT_BIN_WIDTH: f64 = 0.05;

fn histogram_entropy(values: impl Iterator<Item = f64> + Clone, bin_width: f64) -> f64 {
    let (lo, hi) = values
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let bins = ((hi - lo) / bin_width).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    let mut n = 0usize;
    for v in values {
        counts[(((v - lo) / bin_width).floor() as usize).min(bins - 1)] += 1;
        n += 1;
    }
    let n = n as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Sum of the Shannon entropies of the x and y histograms after rotating `points` by `yaw`.
pub fn compass_objective(points: &[[f64; 2]], yaw: f64, bin_width: f64) -> f64 {
    let (s, c) = yaw.sin_cos();
    let xs = points.iter().map(move |p| c * p[0] - s * p[1]);
    let ys = points.iter().map(move |p| s * p[0] + c * p[1]);
    histogram_entropy(xs, bin_width) + histogram_entropy(ys, bin_width)
}

/// Heading that aligns sensor-frame horizontal points with the Manhattan axes.
///
/// Scans `center_yaw + k·step` for `|k·step| ≤ radius` and returns the candidate minimising
/// [`compass_objective`]; ties go to the candidate nearest `center_yaw`. Returns `None` with
/// fewer than 10 points or a non-positive step.
pub fn entropy_compass(points: &[[f64; 2]], center_yaw: f64, radius: f64, step: f64, bin_width: f64) -> Option<f64> {
    if points.len() < 10 || !(step > 0.0) || !(radius >= 0.0) || !(bin_width > 0.0) {
        return None;
    }
    let k_max = (radius / step + 1e-9).floor() as i64;
    let mut best = (compass_objective(points, center_yaw, bin_width), center_yaw);
    for k in 1..=k_max {
        for yaw in [center_yaw - k as f64 * step, center_yaw + k as f64 * step] {
            let h = compass_objective(points, yaw, bin_width);
            if h < best.0 - 1e-12 {
                best = (h, yaw);
            }
        }
    }
    Some(best.1)
}

/// Absolute yaw per frame from relative odometry yaw and optional compass estimates.
///
/// A compass estimate, when present, is taken as is; otherwise the previous yaw is advanced by
/// the odometry delta. Frames before the first estimate are dead-reckoned backwards from it;
/// with no estimate at all the sequence starts at 0.
pub fn fuse_orientation(odom_yaw_deltas: &[f64], compass_yaws: &[Option<f64>]) -> Result<Vec<f64>, FrontendError> {
    let n = compass_yaws.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if odom_yaw_deltas.len() + 1 != n {
        return Err(FrontendError::DimensionMismatch(format!(
            "{} frames need {} yaw deltas, got {}",
            n,
            n - 1,
            odom_yaw_deltas.len()
        )));
    }
    let start = match compass_yaws.iter().position(Option::is_some) {
        Some(k) => compass_yaws[k].unwrap() - odom_yaw_deltas[..k].iter().sum::<f64>(),
        None => 0.0,
    };
    let mut out = Vec::with_capacity(n);
    out.push(compass_yaws[0].unwrap_or(start));
    for i in 1..n {
        let yaw = compass_yaws[i].unwrap_or(out[i - 1] + odom_yaw_deltas[i - 1]);
        out.push(yaw);
    }
    Ok(out)
}
