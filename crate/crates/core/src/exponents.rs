//! Exponent estimators: QR moving frames, per-coordinate averages of
//! triangular diagonals, and the windowed Liao-type exponent.

use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{IntervalSource, Trajectory};
use crate::lie::ClosedForm;
use crate::matkit::{qr, qr_with_tol, CMatrix, RMatrix};

/// Orthonormal frame carried along the flow with the accumulated
/// `log r_kk`, i.e. the integrals of the qualitative functions `Ω_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameState {
    pub q: RMatrix,
    pub logs: Vec<f64>,
    pub elapsed: f64,
}

impl FrameState {
    pub fn identity(n: usize) -> Self {
        Self::start(RMatrix::identity(n))
    }

    /// Starts from a caller-supplied frame, which must be orthonormal.
    pub fn from_frame(q: RMatrix) -> Result<Self> {
        let n = q.require_square()?;
        let defect = (&(&q.transpose() * &q) - &RMatrix::identity(n)).max_abs();
        if !(defect <= 1e-10) {
            return Err(Error::InvalidInput(format!(
                "frame is not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Self::start(q))
    }

    /// Haar-distributed frame: QR of a Gaussian-like matrix with positive diagonal.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        loop {
            let g = RMatrix::from_fn(n, n, |_, _| {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                let v: f64 = rng.random();
                (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
            });
            if let Ok(p) = qr(&g) {
                return Self::start(p.q);
            }
        }
    }

    fn start(q: RMatrix) -> Self {
        let n = q.nrows();
        FrameState {
            q,
            logs: vec![0.0; n],
            elapsed: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn orthogonality_defect(&self) -> f64 {
        (&(&self.q.transpose() * &self.q) - &RMatrix::identity(self.dim())).max_abs()
    }
}

/// `∫ Ω_j dt` over one switching interval, and the interval length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalLog {
    pub logs: Vec<f64>,
    pub length: f64,
}

/// One re-orthonormalization: `M q = q' R`, logging `log r_jj`.
///
/// Only an exactly vanishing diagonal is treated as singular, since stiff
/// but invertible propagators legitimately produce tiny `r_jj`.
pub fn frame_step(state: &FrameState, m: &RMatrix, length: f64) -> Result<(FrameState, IntervalLog, RMatrix)> {
    if m.nrows() != state.dim() || !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: m.nrows(),
        });
    }
    let qr = qr_with_tol(&(m * &state.q), 0.0)?;
    let logs: Vec<f64> = (0..state.dim()).map(|j| qr.r[(j, j)].ln()).collect();
    let acc = state.logs.iter().zip(&logs).map(|(a, b)| a + b).collect();
    let next = FrameState {
        q: qr.q,
        logs: acc,
        elapsed: state.elapsed + length,
    };
    Ok((next, IntervalLog { logs, length }, qr.r))
}

/// Outcome of a QR run over `[0, T]`.
#[derive(Debug, Clone)]
pub struct QrRun {
    /// `max_k (accumulated log_k) / T`.
    pub chi_plus: f64,
    pub series: Vec<IntervalLog>,
    pub frame: FrameState,
    /// `log ‖Φ(t)‖_F` at every switching boundary.
    pub trajectory: Trajectory,
}

impl QrRun {
    pub fn horizon(&self) -> f64 {
        self.frame.elapsed
    }
}

const ACC_RESCALE: f64 = 1e100;

/// Runs the frame over every switching interval meeting `[0, T]`.
pub fn lyapunov_qr(src: &dyn IntervalSource, t_end: f64, frame: FrameState) -> Result<QrRun> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {t_end}")));
    }
    if t_end > src.horizon() + 1e-12 {
        return Err(Error::PrefixExhausted {
            needed: t_end.ceil() as usize + 1,
            available: src.horizon().ceil() as usize,
        });
    }
    if frame.dim() != src.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            found: frame.dim(),
        });
    }
    let n = src.dim();
    let mut state = frame;
    let mut series = Vec::new();
    // Φ b = q R_acc, so ‖Φ‖_F = ‖R_acc b^T‖_F = ‖R_acc‖_F.
    let mut acc = RMatrix::identity(n);
    let mut acc_log = 0.0;
    let mut times = vec![0.0];
    let mut log_norms = vec![(n as f64).sqrt().ln()];
    let mut k = 0;
    loop {
        let start = src.boundary(k);
        if start >= t_end {
            break;
        }
        let len = src.boundary(k + 1).min(t_end) - start;
        let m = src.propagator(k, len)?;
        let (next, log, r) = frame_step(&state, &m, len)?;
        state = next;
        series.push(log);
        acc = &r * &acc;
        let s = acc.max_abs();
        if !s.is_finite() || s == 0.0 {
            return Err(Error::NonFinite { t: start + len });
        }
        if !(1.0 / ACC_RESCALE..=ACC_RESCALE).contains(&s) {
            acc = acc.scale_real(1.0 / s);
            acc_log += s.ln();
        }
        times.push(start + len);
        log_norms.push(acc_log + acc.norm_fro().ln());
        k += 1;
    }
    let chi_plus = max_of(&state.logs) / state.elapsed;
    let trajectory = Trajectory {
        times,
        log_norms,
        rescales: 0,
        direction: state.q.column(0),
    };
    Ok(QrRun {
        chi_plus,
        series,
        frame: state,
        trajectory,
    })
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Upper-triangular coefficients `C(t)`, piecewise constant or sampled from a function.
pub enum CoefficientSeries<'a> {
    /// `(length, C)` pieces laid end to end from `t = 0`.
    Piecewise(&'a [(f64, CMatrix)]),
    /// `C(t)` integrated with 5-point Gauss–Legendre on unit cells.
    Function(&'a dyn Fn(f64) -> CMatrix),
}

/// Relative sub-diagonal mass tolerated in a triangular coefficient.
pub const TRIANGULAR_INPUT_TOL: f64 = 1e-10;

const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn check_triangular(c: &CMatrix, t: f64) -> Result<()> {
    let mass = c.lower_max_abs();
    if mass > TRIANGULAR_INPUT_TOL * c.max_abs().max(1.0) {
        return Err(Error::NotTriangular { t, mass });
    }
    Ok(())
}

/// `ϑ_i = (1/T) ∫_0^T Re c_ii(t) dt`.
pub fn theta_upper_triangular(series: CoefficientSeries<'_>, t_end: f64) -> Result<Vec<f64>> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {t_end}")));
    }
    let mut integral: Vec<f64> = Vec::new();
    let mut add = |c: &CMatrix, w: f64| {
        if integral.is_empty() {
            integral = vec![0.0; c.nrows()];
        }
        for (acc, d) in integral.iter_mut().zip(c.diagonal()) {
            *acc += w * d.re;
        }
    };
    match series {
        CoefficientSeries::Piecewise(pieces) => {
            let mut t = 0.0;
            for (len, c) in pieces {
                if t >= t_end {
                    break;
                }
                check_triangular(c, t)?;
                let w = len.min(t_end - t);
                add(c, w);
                t += len;
            }
            if t < t_end * (1.0 - 1e-12) {
                return Err(Error::InsufficientSeries {
                    needed: t_end.ceil() as usize,
                    available: t.floor() as usize,
                });
            }
        }
        CoefficientSeries::Function(f) => {
            let cells = t_end.ceil() as usize;
            for k in 0..cells {
                let a = k as f64;
                let b = (a + 1.0).min(t_end);
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                for (x, w) in GL5 {
                    let t = mid + half * x;
                    let c = f(t);
                    check_triangular(&c, t)?;
                    add(&c, w * half);
                }
            }
        }
    }
    Ok(integral.into_iter().map(|v| v / t_end).collect())
}

/// Piecewise-constant triangular coefficient series of a triangular family
/// driven along the switching intervals of `[0, T]`.
pub fn piecewise_from_modes(mats: &[CMatrix], pieces: &[(usize, f64)]) -> Vec<(f64, CMatrix)> {
    pieces.iter().map(|&(mode, len)| (len, mats[mode].clone())).collect()
}

/// `χ*⁺ = (1/T_{k_m}) Σ_{i<m} max_j Σ_{window i} log_j` over windows of `2^ℓ` intervals.
pub fn liao_type_exponent(series: &[IntervalLog], tau: f64, ell: u32, m: usize) -> Result<f64> {
    Ok(liao_windows(series, tau, ell, m)?.chi_star)
}

/// Per-window coordinate sums behind one Liao-type estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiaoWindows {
    pub ell: u32,
    pub delta: usize,
    pub windows: usize,
    /// `T_{k_m} = k_m - τ`.
    pub horizon: f64,
    pub chi_star: f64,
    #[serde(skip)]
    pub sums: Vec<Vec<f64>>,
}

pub fn liao_windows(series: &[IntervalLog], tau: f64, ell: u32, m: usize) -> Result<LiaoWindows> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("tau must lie in [0, 1), got {tau}")));
    }
    let delta = 1usize
        .checked_shl(ell)
        .filter(|&d| d > 0 && ell < usize::BITS)
        .ok_or_else(|| Error::InvalidInput(format!("window exponent {ell} too large")))?;
    let needed = m
        .checked_mul(delta)
        .ok_or_else(|| Error::InvalidInput("window count overflows".into()))?;
    if m == 0 || needed > series.len() {
        return Err(Error::InsufficientSeries {
            needed: needed.max(1),
            available: series.len(),
        });
    }
    let n = series[0].logs.len();
    let mut sums = Vec::with_capacity(m);
    let mut total = 0.0;
    for w in 0..m {
        let mut s = vec![0.0; n];
        for log in &series[w * delta..(w + 1) * delta] {
            for (a, b) in s.iter_mut().zip(&log.logs) {
                *a += b;
            }
        }
        total += max_of(&s);
        sums.push(s);
    }
    // `needed - τ` unless the last interval was clipped at the end of the run.
    let horizon: f64 = series[..needed].iter().map(|l| l.length).sum();
    Ok(LiaoWindows {
        ell,
        delta,
        windows: m,
        horizon,
        chi_star: total / horizon,
        sums,
    })
}

/// Largest window exponent reported by default.
pub const DEFAULT_MAX_ELL: u32 = 8;

/// `χ*⁺` for every `ℓ ≤ max_ell` that fits at least one window in the series.
pub fn liao_profile(series: &[IntervalLog], tau: f64, max_ell: u32) -> Vec<LiaoWindows> {
    (0..=max_ell)
        .filter_map(|ell| {
            let m = series.len() >> ell;
            liao_windows(series, tau, ell, m).ok()
        })
        .collect()
}

/// `(accumulated log_k) / T` for each coordinate.
pub fn birkhoff_coordinate_averages(series: &[IntervalLog], t_end: f64) -> Vec<f64> {
    let n = series.first().map_or(0, |l| l.logs.len());
    let mut acc = vec![0.0; n];
    for log in series {
        for (a, b) in acc.iter_mut().zip(&log.logs) {
            *a += b;
        }
    }
    acc.into_iter().map(|v| v / t_end).collect()
}

/// QR exponent over the first `k` intervals, `max_j S_j(T_k) / T_k`.
pub fn chi_plus_prefix(series: &[IntervalLog], k: usize) -> f64 {
    let t: f64 = series[..k].iter().map(|l| l.length).sum();
    max_of(&birkhoff_coordinate_averages(&series[..k], t))
}

/// Largest per-interval `|log_j| / length`.
pub fn max_interval_rate(series: &[IntervalLog]) -> f64 {
    series
        .iter()
        .filter(|l| l.length > 0.0)
        .flat_map(|l| l.logs.iter().map(move |v| v.abs() / l.length))
        .fold(0.0, f64::max)
}

/// `C = n max_i ‖A_i‖₂ + margin`, bounding every per-interval rate.
pub fn growth_bound(n: usize, max_norm: f64) -> f64 {
    n as f64 * max_norm + 1e-6
}

/// Everything one QR run says about the exponents.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentReport {
    pub horizon: f64,
    pub tau: f64,
    pub chi_plus: f64,
    /// `max_{t ≥ T/2} max_k S_k(t)/t`, a finite-horizon proxy for the limsup.
    pub chi_plus_limsup: f64,
    pub theta: Vec<f64>,
    pub liao: Vec<LiaoWindows>,
    pub growth_bound: f64,
    pub max_interval_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<ClosedForm>,
}

impl ExponentReport {
    pub fn new(run: &QrRun, tau: f64, max_ell: u32, growth_bound: f64) -> Self {
        let t = run.horizon();
        let mut running = vec![0.0; run.frame.dim()];
        let mut elapsed = 0.0;
        let mut limsup = f64::NEG_INFINITY;
        for log in &run.series {
            for (a, b) in running.iter_mut().zip(&log.logs) {
                *a += b;
            }
            elapsed += log.length;
            if elapsed >= 0.5 * t {
                limsup = limsup.max(max_of(&running) / elapsed);
            }
        }
        ExponentReport {
            horizon: t,
            tau,
            chi_plus: run.chi_plus,
            chi_plus_limsup: limsup,
            theta: birkhoff_coordinate_averages(&run.series, t),
            liao: liao_profile(&run.series, tau, max_ell),
            growth_bound,
            max_interval_rate: max_interval_rate(&run.series),
            closed_form: None,
        }
    }
}

/// CSV of per-window coordinate sums for one window size.
pub fn window_series_csv(w: &LiaoWindows) -> String {
    let n = w.sums.first().map_or(0, Vec::len);
    let mut s = String::from("window,t_end");
    for j in 0..n {
        write!(s, ",sum_{j}").expect("writing to a String cannot fail");
    }
    s.push_str(",max\n");
    let mut t_end = -(w.horizon - (w.windows * w.delta) as f64);
    for (i, sums) in w.sums.iter().enumerate() {
        t_end += w.delta as f64;
        write!(s, "{i},{t_end}").expect("writing to a String cannot fail");
        for v in sums {
            write!(s, ",{v}").expect("writing to a String cannot fail");
        }
        writeln!(s, ",{}", max_of(sums)).expect("writing to a String cannot fail");
    }
    s
}

/// Interval series as CSV: one row per interval with its length and logs.
pub fn interval_series_csv(series: &[IntervalLog]) -> String {
    let n = series.first().map_or(0, |l| l.logs.len());
    let mut s = String::from("interval,length");
    for j in 0..n {
        write!(s, ",log_{j}").expect("writing to a String cannot fail");
    }
    s.push('\n');
    for (i, l) in series.iter().enumerate() {
        write!(s, "{i},{}", l.length).expect("writing to a String cannot fail");
        for v in &l.logs {
            write!(s, ",{v}").expect("writing to a String cannot fail");
        }
        s.push('\n');
    }
    s
}

/// Complex copy of real triangular coefficients.
pub fn complexify(mats: &[RMatrix]) -> Vec<CMatrix> {
    mats.iter().map(RMatrix::to_complex).collect()
}
