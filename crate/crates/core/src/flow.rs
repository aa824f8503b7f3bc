//! Trajectory engines: the exact linear cocycle `Φ_{[ι,τ]}(t)` built from
//! per-mode matrix exponentials, and fixed-step RK4 integration of the
//! perturbed system `ẋ = A_σ(t) x + f_σ(t)(x, t)`.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::MatrixFamily;
use crate::matkit::{expm, norm2, spectral_norm, RMatrix};
use crate::symdyn::{suspension_advance, SwitchPoint};

/// Switching boundaries `T_0 = 0`, `T_k = k - τ` and the matrix propagating
/// the state across any sub-interval that starts at one of them.
pub trait IntervalSource {
    fn dim(&self) -> usize;

    /// `T_k`.
    fn boundary(&self, k: usize) -> f64;

    /// Propagator over `[T_k, T_k + len]`, `0 < len ≤ T_{k+1} - T_k`.
    fn propagator(&self, k: usize, len: f64) -> Result<RMatrix>;

    /// Latest time the source can drive.
    fn horizon(&self) -> f64;
}

/// `e^{A_i}` for each mode, shared by every propagator of a family.
#[derive(Debug, Clone)]
pub struct ModeCache {
    family: MatrixFamily,
    unit: Vec<RMatrix>,
}

impl ModeCache {
    pub fn new(family: &MatrixFamily) -> Self {
        let unit = family.mats().iter().map(expm).collect();
        ModeCache {
            family: family.clone(),
            unit,
        }
    }

    pub fn family(&self) -> &MatrixFamily {
        &self.family
    }

    /// `e^{len A_mode}`; unit lengths come from the cache.
    pub fn piece(&self, mode: usize, len: f64) -> RMatrix {
        if len == 1.0 {
            self.unit[mode].clone()
        } else {
            expm(&self.family.mats()[mode].scale(len))
        }
    }
}

/// The principal matrix of the switched system driven from `[ι, τ]`.
#[derive(Debug, Clone)]
pub struct Propagator {
    point: SwitchPoint,
    modes: Arc<ModeCache>,
}

impl Propagator {
    pub fn new(family: &MatrixFamily, point: SwitchPoint) -> Result<Self> {
        Self::with_cache(Arc::new(ModeCache::new(family)), point)
    }

    pub fn with_cache(modes: Arc<ModeCache>, point: SwitchPoint) -> Result<Self> {
        if point.seq.alphabet() != modes.family.len() {
            return Err(Error::DimensionMismatch {
                expected: modes.family.len(),
                found: point.seq.alphabet(),
            });
        }
        Ok(Propagator { point, modes })
    }

    pub fn point(&self) -> &SwitchPoint {
        &self.point
    }

    pub fn family(&self) -> &MatrixFamily {
        &self.modes.family
    }

    pub fn modes(&self) -> &Arc<ModeCache> {
        &self.modes
    }

    /// Mode driving the `k`-th switching interval.
    pub fn mode(&self, k: usize) -> Result<usize> {
        self.point.seq.get(k)
    }

    /// Switching intervals meeting `[0, t]`, clipped to it: `(k, start, len)`.
    pub fn pieces(&self, t: f64) -> Result<Vec<(usize, f64, f64)>> {
        check_time(t, self.horizon())?;
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let start = self.boundary(k);
            if start >= t {
                break;
            }
            let end = self.boundary(k + 1).min(t);
            out.push((k, start, end - start));
            k += 1;
        }
        Ok(out)
    }

    /// Propagator shifted along the semiflow, sharing the mode cache.
    pub fn advance(&self, t: f64) -> Result<Propagator> {
        Ok(Propagator {
            point: suspension_advance(&self.point, t)?,
            modes: Arc::clone(&self.modes),
        })
    }
}

impl IntervalSource for Propagator {
    fn dim(&self) -> usize {
        self.modes.family.dim()
    }

    fn boundary(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            k as f64 - self.point.tau
        }
    }

    fn propagator(&self, k: usize, len: f64) -> Result<RMatrix> {
        Ok(self.modes.piece(self.mode(k)?, len))
    }

    fn horizon(&self) -> f64 {
        self.point.horizon()
    }
}

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("time must be non-negative, got {t}")));
    }
    if t > horizon + 1e-12 {
        return Err(Error::PrefixExhausted {
            needed: t.ceil() as usize + 1,
            available: horizon.ceil() as usize,
        });
    }
    Ok(())
}

/// `Φ_{[ι,τ]}(t)` as the ordered product of per-piece exponentials.
pub fn propagate_linear(prop: &Propagator, t: f64) -> Result<RMatrix> {
    let mut phi = RMatrix::identity(prop.dim());
    for (k, _, len) in prop.pieces(t)? {
        phi = &prop.propagator(k, len)? * &phi;
    }
    Ok(phi)
}

/// `‖Φ(t1+t2) - Φ_{Θ(t1)}(t2) Φ(t1)‖_F`.
pub fn cocycle_check(prop: &Propagator, t1: f64, t2: f64) -> Result<f64> {
    let whole = propagate_linear(prop, t1 + t2)?;
    let first = propagate_linear(prop, t1)?;
    let second = propagate_linear(&prop.advance(t1)?, t2)?;
    Ok((&whole - &(&second * &first)).norm_fro())
}

/// A non-switched system `ẋ = A(t) x`, cut into unit intervals and propagated
/// with frozen midpoint coefficients on substeps of length at most `dt`.
#[derive(Clone)]
pub struct TimeVarying {
    dim: usize,
    a: Arc<dyn Fn(f64) -> RMatrix + Send + Sync>,
    dt: f64,
    horizon: f64,
}

impl std::fmt::Debug for TimeVarying {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeVarying")
            .field("dim", &self.dim)
            .field("dt", &self.dt)
            .finish_non_exhaustive()
    }
}

impl TimeVarying {
    pub fn new(dim: usize, dt: f64, a: impl Fn(f64) -> RMatrix + Send + Sync + 'static) -> Result<Self> {
        if !(dt > 0.0 && dt <= 1.0) {
            return Err(Error::InvalidInput(format!("substep must lie in (0, 1], got {dt}")));
        }
        Ok(TimeVarying {
            dim,
            a: Arc::new(a),
            dt,
            horizon: f64::INFINITY,
        })
    }

    pub fn coefficient(&self, t: f64) -> RMatrix {
        (self.a)(t)
    }

    /// Marcus–Yamabe system with the explicit solution `(-e^t cos t, e^t sin t)`:
    /// `[[-1 + 2cos²t, 1 - sin 2t], [-1 - sin 2t, -1 + 2sin²t]]`, whose frozen
    /// coefficients have the double eigenvalue 0.
    pub fn marcus_yamabe(dt: f64) -> Result<Self> {
        Self::marcus_yamabe_shifted(0.0, dt)
    }

    /// The same matrix minus the identity. Every frozen coefficient has the
    /// double eigenvalue -1, and the solutions are `(-cos t, sin t)` and
    /// `e^{-2t}(sin t, cos t)`, so the exponent is 0.
    pub fn marcus_yamabe_printed(dt: f64) -> Result<Self> {
        Self::marcus_yamabe_shifted(-1.0, dt)
    }

    fn marcus_yamabe_shifted(shift: f64, dt: f64) -> Result<Self> {
        Self::new(2, dt, move |t| {
            let (s, c) = t.sin_cos();
            let s2 = (2.0 * t).sin();
            RMatrix::from_row_major(
                2,
                2,
                vec![
                    -1.0 + 2.0 * c * c + shift,
                    1.0 - s2,
                    -1.0 - s2,
                    -1.0 + 2.0 * s * s + shift,
                ],
            )
            .expect("finite coefficients")
        })
    }

    /// Upper-triangular `[[-1/(1+t), a12], [0, -1/(1+t)]]`.
    pub fn triangular_decay(a12: f64, dt: f64) -> Result<Self> {
        Self::new(2, dt, move |t| {
            let d = -1.0 / (1.0 + t);
            RMatrix::from_row_major(2, 2, vec![d, a12, 0.0, d]).expect("finite coefficients")
        })
    }
}

impl IntervalSource for TimeVarying {
    fn dim(&self) -> usize {
        self.dim
    }

    fn boundary(&self, k: usize) -> f64 {
        k as f64
    }

    fn propagator(&self, k: usize, len: f64) -> Result<RMatrix> {
        let steps = (len / self.dt).ceil().max(1.0) as usize;
        let h = len / steps as f64;
        let t0 = k as f64;
        let mut phi = RMatrix::identity(self.dim);
        for s in 0..steps {
            let mid = t0 + (s as f64 + 0.5) * h;
            let a = (self.a)(mid);
            if !a.is_finite() {
                return Err(Error::NonFinite { t: mid });
            }
            phi = &expm(&a.scale(h)) * &phi;
        }
        Ok(phi)
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Shape of the perturbation `f_i(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    None,
    /// `f(x) = L x`.
    LinearCoupling,
    /// `f(x, t) = L R(t) x` with `R(t)` the rotation by angle `t` in the first coordinate plane.
    Rotation,
    /// `f(x, t) = L ‖x‖ e(t)` with `e` a fresh random unit vector on each step.
    RandomDirection,
    /// `f(x, t) = B_i(x) u(t)` with `‖B_i(x)‖ ≤ β‖x‖` and `‖u‖ = δ`.
    ControlProduct,
}

impl PerturbationKind {
    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::None => "none",
            PerturbationKind::LinearCoupling => "linear-coupling",
            PerturbationKind::Rotation => "rotation",
            PerturbationKind::RandomDirection => "random-direction",
            PerturbationKind::ControlProduct => "control-product",
        }
    }
}

/// Control map `B_i(x)`, an `n × m` matrix depending on the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum ControlMap {
    /// `B(x) = ‖x‖ D`. Continuous but not linear in `x`.
    NormScaled { direction: RMatrix },
    /// Column `j` of `B(x)` is `M_j x`.
    Linear { columns: Vec<RMatrix> },
}

impl ControlMap {
    pub fn inputs(&self) -> usize {
        match self {
            ControlMap::NormScaled { direction } => direction.ncols(),
            ControlMap::Linear { columns } => columns.len(),
        }
    }

    fn rows(&self) -> usize {
        match self {
            ControlMap::NormScaled { direction } => direction.nrows(),
            ControlMap::Linear { columns } => columns.first().map_or(0, RMatrix::nrows),
        }
    }

    pub fn eval(&self, x: &[f64]) -> RMatrix {
        match self {
            ControlMap::NormScaled { direction } => direction.scale(norm2(x)),
            ControlMap::Linear { columns } => {
                let cols: Vec<Vec<f64>> = columns.iter().map(|m| m.matvec(x)).collect();
                RMatrix::from_columns(&cols)
            }
        }
    }

    /// Adds `B(x) u` to `out` without forming `B(x)`.
    fn apply_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match self {
            ControlMap::NormScaled { direction } => {
                let nx = norm2(x);
                for (i, o) in out.iter_mut().enumerate() {
                    *o += nx * (0..u.len()).map(|j| direction[(i, j)] * u[j]).sum::<f64>();
                }
            }
            ControlMap::Linear { columns } => {
                for (m, &uj) in columns.iter().zip(u) {
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += uj * (0..x.len()).map(|j| m[(i, j)] * x[j]).sum::<f64>();
                    }
                }
            }
        }
    }
}

/// Per-mode control maps with growth bound `beta` and input bound `delta_u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub maps: Vec<ControlMap>,
    pub beta: f64,
    pub delta_u: f64,
}

/// Samples on which the growth bound of a control map is checked.
pub const GROWTH_SAMPLES: usize = 256;

impl ControlSpec {
    /// Checks shapes and samples `‖B_i(x)‖ / ‖x‖ ≤ β` on random states.
    pub fn validate<R: Rng>(&self, dim: usize, modes: usize, rng: &mut R) -> Result<()> {
        if self.maps.len() != modes {
            return Err(Error::DimensionMismatch {
                expected: modes,
                found: self.maps.len(),
            });
        }
        if !(self.beta >= 0.0) || !(self.delta_u >= 0.0) {
            return Err(Error::InvalidInput("beta and delta_u must be non-negative".into()));
        }
        let m = self.maps[0].inputs();
        for map in &self.maps {
            if map.rows() != dim || map.inputs() != m {
                return Err(Error::InvalidInput("control maps must all be dim × m".into()));
            }
            if let ControlMap::Linear { columns } = map {
                if columns.iter().any(|c| c.ncols() != dim) {
                    return Err(Error::InvalidInput("linear control columns must be dim × dim".into()));
                }
            }
        }
        for (mode, map) in self.maps.iter().enumerate() {
            for s in 0..GROWTH_SAMPLES {
                // Basis vectors first, then random directions and magnitudes.
                let x: Vec<f64> = if s < dim {
                    (0..dim).map(|i| if i == s { 1.0 } else { 0.0 }).collect()
                } else {
                    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
                    (0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
                };
                let nx = norm2(&x);
                if nx == 0.0 {
                    continue;
                }
                let ratio = spectral_norm(&map.eval(&x)) / nx;
                if ratio > self.beta * (1.0 + 1e-12) {
                    return Err(Error::GrowthBoundViolated {
                        mode,
                        ratio,
                        beta: self.beta,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.maps.first().map_or(0, ControlMap::inputs)
    }
}

/// A perturbation `f_i` with `‖f_i(x, t)‖ ≤ L ‖x‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub magnitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
}

impl PerturbationSpec {
    pub fn none() -> Self {
        PerturbationSpec {
            kind: PerturbationKind::None,
            magnitude: 0.0,
            control: None,
        }
    }

    pub fn new(kind: PerturbationKind, magnitude: f64) -> Result<Self> {
        if kind == PerturbationKind::ControlProduct {
            return Err(Error::InvalidInput("control-product needs a ControlSpec".into()));
        }
        if !(magnitude >= 0.0) || !magnitude.is_finite() {
            return Err(Error::InvalidInput(format!(
                "magnitude must be non-negative, got {magnitude}"
            )));
        }
        Ok(PerturbationSpec {
            kind,
            magnitude,
            control: None,
        })
    }

    /// `f = B_i(x) u` with `L = β δ`.
    pub fn control(control: ControlSpec) -> Self {
        PerturbationSpec {
            kind: PerturbationKind::ControlProduct,
            magnitude: control.beta * control.delta_u,
            control: Some(control),
        }
    }
}

/// Per-step realization of the perturbation's random input.
/// Fills `buf` with a uniform random unit vector of length `dim`.
fn random_unit_into<R: Rng>(dim: usize, rng: &mut R, buf: &mut Vec<f64>) {
    loop {
        buf.clear();
        buf.extend((0..dim).map(|_| rng.random_range(-1.0..1.0)));
        let n = norm2(buf);
        if n > 1e-3 && n <= 1.0 {
            buf.iter_mut().for_each(|x| *x /= n);
            return;
        }
    }
}

impl PerturbationSpec {
    /// Draws the step's random input into `input`; empty when there is none.
    fn draw<R: Rng>(&self, dim: usize, rng: &mut R, input: &mut Vec<f64>) {
        input.clear();
        match self.kind {
            PerturbationKind::RandomDirection if self.magnitude > 0.0 => random_unit_into(dim, rng, input),
            PerturbationKind::ControlProduct => {
                let c = self.control.as_ref().expect("control-product carries a ControlSpec");
                if c.delta_u != 0.0 {
                    random_unit_into(c.inputs(), rng, input);
                    input.iter_mut().for_each(|v| *v *= c.delta_u);
                }
            }
            _ => {}
        }
    }

    fn eval(&self, mode: usize, x: &[f64], rot: (f64, f64), input: &[f64], out: &mut [f64]) {
        let l = self.magnitude;
        match self.kind {
            PerturbationKind::LinearCoupling => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o += l * v;
                }
            }
            PerturbationKind::Rotation => {
                let (s, c) = rot;
                for (o, v) in out.iter_mut().zip(x) {
                    *o += l * v;
                }
                if x.len() >= 2 {
                    out[0] += l * ((c - 1.0) * x[0] - s * x[1]);
                    out[1] += l * (s * x[0] + (c - 1.0) * x[1]);
                }
            }
            PerturbationKind::RandomDirection if !input.is_empty() => {
                let nx = norm2(x);
                for (o, v) in out.iter_mut().zip(input) {
                    *o += l * nx * v;
                }
            }
            PerturbationKind::ControlProduct if !input.is_empty() => {
                let c = self.control.as_ref().expect("control-product carries a ControlSpec");
                c.maps[mode].apply_into(x, input, out);
            }
            _ => {}
        }
    }
}

/// `log ‖x(t)‖` sampled at every switching boundary and at the final time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub log_norms: Vec<f64>,
    /// Number of renormalizations of the state.
    pub rescales: usize,
    /// `x(T) / ‖x(T)‖`.
    pub direction: Vec<f64>,
}

impl Trajectory {
    pub fn terminal_log_norm(&self) -> f64 {
        *self.log_norms.last().expect("trajectory has samples")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("trajectory has samples")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,log_norm\n");
        for (t, l) in self.times.iter().zip(&self.log_norms) {
            writeln!(s, "{t},{l}").expect("writing to a String cannot fail");
        }
        s
    }
}

const RESCALE_LOW: f64 = 1e-150;
const RESCALE_HIGH: f64 = 1e150;
/// Largest integration step accepted.
pub const MAX_DT: f64 = 0.01;

/// Classical RK4 with steps shortened to land exactly on switching times.
pub fn integrate_perturbed<R: Rng>(
    prop: &Propagator,
    pert: &PerturbationSpec,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let n = prop.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::InvalidInput(format!("dt must lie in (0, {MAX_DT}], got {dt}")));
    }
    let x_norm = norm2(x0);
    if !(x_norm > 0.0) || !x_norm.is_finite() {
        return Err(Error::InvalidInput("initial state must be finite and non-zero".into()));
    }
    let mats = prop.family().mats();
    let mut x: Vec<f64> = x0.iter().map(|v| v / x_norm).collect();
    let mut offset = x_norm.ln();
    let mut rescales = 0;
    let mut times = vec![0.0];
    let mut log_norms = vec![offset];

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut input = Vec::new();

    for (k, start, len) in prop.pieces(t_end)? {
        let mode = prop.mode(k)?;
        let a = &mats[mode];
        let rhs = |x: &[f64], rot: (f64, f64), input: &[f64], out: &mut [f64]| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..n).map(|j| a[(i, j)] * x[j]).sum();
            }
            pert.eval(mode, x, rot, input, out);
        };
        let steps = (len / dt).ceil().max(1.0) as usize;
        let h = len / steps as f64;
        let rotating = pert.kind == PerturbationKind::Rotation;
        let angle = |t: f64| if rotating { t.sin_cos() } else { (0.0, 1.0) };
        for s in 0..steps {
            let t = start + s as f64 * h;
            pert.draw(n, rng, &mut input);
            let (r0, r1, r2) = (angle(t), angle(t + 0.5 * h), angle(t + h));
            rhs(&x, r0, &input, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            rhs(&tmp, r1, &input, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            rhs(&tmp, r1, &input, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            rhs(&tmp, r2, &input, &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let nx = norm2(&x);
            if !nx.is_finite() {
                return Err(Error::NonFinite { t: t + h });
            }
            if !(RESCALE_LOW..=RESCALE_HIGH).contains(&nx) {
                if nx == 0.0 {
                    return Err(Error::NonFinite { t: t + h });
                }
                x.iter_mut().for_each(|v| *v /= nx);
                offset += nx.ln();
                rescales += 1;
            }
        }
        times.push(start + len);
        log_norms.push(offset + norm2(&x).ln());
    }
    let nx = norm2(&x);
    Ok(Trajectory {
        times,
        log_norms,
        rescales,
        direction: x.iter().map(|v| v / nx).collect(),
    })
}
