//! Experiment orchestration: trajectory verdicts, Monte-Carlo stability of
//! sampled switching signals, the (★)-versus-simulation dichotomy check, and
//! perturbation-threshold sweeps.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::{growth_bound, lyapunov_qr, FrameState};
use crate::flow::{
    integrate_perturbed, ControlMap, ControlSpec, ModeCache, PerturbationKind, PerturbationSpec, Propagator,
};
use crate::lie::{
    closed_form_exponents, is_solvable, simultaneous_triangularize, star_condition, ClosedForm, MatrixFamily,
    ProbabilityVector,
};
use crate::matkit::{inverse, singular_values, spectral_abscissa, RMatrix};
use crate::symdyn::{sample_switch_point_with, stream_rng};

/// Slopes within `±CLASSIFY_BAND` are Indeterminate.
pub const CLASSIFY_BAND: f64 = 0.01;
/// Shortest trajectory `classify` accepts.
pub const MIN_CLASSIFY_HORIZON: f64 = 50.0;
/// Stable fraction read as "almost surely stable".
pub const AS_THRESHOLD: f64 = 0.95;
/// Stable fraction read as "almost surely not stable".
pub const NULL_THRESHOLD: f64 = 0.05;
/// `|max θ_i|` below this is reported Marginal and not judged.
pub const MARGINAL_BAND: f64 = 0.1;
/// Stable fraction a sweep cell needs to count toward `delta_emp`.
pub const SWEEP_THRESHOLD: f64 = 0.9;
/// Initial states per perturbed trial.
pub const INITIAL_STATES: usize = 8;
/// Default RK4 step.
pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityClass {
    Stable,
    Unstable,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub class: StabilityClass,
    pub slope: f64,
    pub band: f64,
    /// Standard error of the fitted slope.
    pub stderr: f64,
}

/// Least-squares slope of `log ‖x(t)‖` over the final half of the horizon.
pub fn classify(traj: &crate::flow::Trajectory) -> Result<Verdict> {
    let horizon = traj.horizon();
    if horizon < MIN_CLASSIFY_HORIZON {
        return Err(Error::HorizonTooShort {
            horizon,
            required: MIN_CLASSIFY_HORIZON,
        });
    }
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.log_norms)
        .filter(|(t, _)| **t >= 0.5 * horizon)
        .map(|(&t, &l)| (t, l))
        .collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stl: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let slope = stl / stt;
    let resid: f64 = pts.iter().map(|p| (p.1 - ml - slope * (p.0 - mt)).powi(2)).sum();
    let stderr = if pts.len() > 2 {
        (resid / (n - 2.0) / stt).sqrt()
    } else {
        0.0
    };
    let class = if slope <= -CLASSIFY_BAND {
        StabilityClass::Stable
    } else if slope >= CLASSIFY_BAND {
        StabilityClass::Unstable
    } else {
        StabilityClass::Indeterminate
    };
    Ok(Verdict {
        class,
        slope,
        band: CLASSIFY_BAND,
        stderr,
    })
}

/// Wilson score interval at 95% for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let z = 1.959_963_984_540_054;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    [(centre - half).max(0.0), (centre + half).min(1.0)]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub const HISTOGRAM_BINS: usize = 20;

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if !lo.is_finite() {
            (-0.5, 0.5)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }
}

/// Monte-Carlo stability summary over sampled switch points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub trials: usize,
    pub horizon: f64,
    pub seed: u64,
    pub stable: usize,
    pub unstable: usize,
    pub indeterminate: usize,
    pub stable_fraction: f64,
    pub wilson_95: [f64; 2],
    pub mean_exponent: f64,
    pub std_exponent: f64,
    pub exponents: Vec<f64>,
    pub verdicts: Vec<StabilityClass>,
    pub histogram: Histogram,
    pub star_condition: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<ClosedForm>,
}

/// Closed-form exponents when the family triangularizes.
pub fn solvable_closed_form(fam: &MatrixFamily, alpha: &ProbabilityVector) -> Option<ClosedForm> {
    if !is_solvable(fam).solvable {
        return None;
    }
    let tri = simultaneous_triangularize(fam).ok()?;
    closed_form_exponents(&tri, alpha).ok()
}

/// Linear-case outcome of trial `trial`: QR exponent and the verdict on `log ‖Φ(t)‖`.
fn linear_trial(
    cache: &Arc<ModeCache>,
    alpha: &ProbabilityVector,
    horizon: f64,
    seed: u64,
    trial: usize,
) -> Result<(f64, Verdict)> {
    let mut rng = stream_rng(seed, trial as u64);
    let point = sample_switch_point_with(alpha, horizon, &mut rng);
    let prop = Propagator::with_cache(Arc::clone(cache), point)?;
    let run = lyapunov_qr(&prop, horizon, FrameState::identity(prop.family().dim()))?;
    let verdict = classify(&run.trajectory)?;
    Ok((run.chi_plus, verdict))
}

fn check_alpha(fam: &MatrixFamily, alpha: &ProbabilityVector) -> Result<()> {
    if alpha.len() != fam.len() {
        return Err(Error::DimensionMismatch {
            expected: fam.len(),
            found: alpha.len(),
        });
    }
    Ok(())
}

pub const MIN_TRIALS: usize = 20;

pub fn mc_stability(
    fam: &MatrixFamily,
    alpha: &ProbabilityVector,
    trials: usize,
    horizon: f64,
    seed: u64,
) -> Result<McReport> {
    check_alpha(fam, alpha)?;
    if trials < MIN_TRIALS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let cache = Arc::new(ModeCache::new(fam));
    let outcomes: Vec<(f64, Verdict)> = (0..trials)
        .into_par_iter()
        .map(|i| linear_trial(&cache, alpha, horizon, seed, i))
        .collect::<Result<_>>()?;
    let exponents: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let verdicts: Vec<StabilityClass> = outcomes.iter().map(|o| o.1.class).collect();
    let count = |c| verdicts.iter().filter(|&&v| v == c).count();
    let stable = count(StabilityClass::Stable);
    let mean = exponents.iter().sum::<f64>() / trials as f64;
    let var = exponents.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok(McReport {
        trials,
        horizon,
        seed,
        stable,
        unstable: count(StabilityClass::Unstable),
        indeterminate: count(StabilityClass::Indeterminate),
        stable_fraction: stable as f64 / trials as f64,
        wilson_95: wilson_interval(stable, trials),
        mean_exponent: mean,
        std_exponent: var.sqrt(),
        histogram: Histogram::new(&exponents, HISTOGRAM_BINS),
        exponents,
        verdicts,
        star_condition: star_condition(fam, alpha)?,
        closed_form: solvable_closed_form(fam, alpha),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Judgement {
    Pass,
    Fail,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyReport {
    pub star_condition: bool,
    pub closed_form: ClosedForm,
    pub mc: McReport,
    pub judgement: Judgement,
}

/// Checks that (★) agrees with the simulated almost-sure verdict.
pub fn dichotomy_check(
    fam: &MatrixFamily,
    alpha: &ProbabilityVector,
    trials: usize,
    horizon: f64,
    seed: u64,
) -> Result<DichotomyReport> {
    check_alpha(fam, alpha)?;
    let solv = is_solvable(fam);
    if !solv.solvable {
        return Err(Error::NotSolvable { series: solv.series });
    }
    let tri = simultaneous_triangularize(fam)?;
    let closed_form = closed_form_exponents(&tri, alpha)?;
    let star = star_condition(fam, alpha)?;
    let mc = mc_stability(fam, alpha, trials, horizon, seed)?;
    let judgement = if closed_form.chi.abs() < MARGINAL_BAND {
        Judgement::Marginal
    } else if (star && mc.stable_fraction >= AS_THRESHOLD) || (!star && mc.stable_fraction <= NULL_THRESHOLD) {
        Judgement::Pass
    } else {
        Judgement::Fail
    };
    Ok(DichotomyReport {
        star_condition: star,
        closed_form,
        mc,
        judgement,
    })
}

/// A solvable family built as `T⁻¹ U_i T` from random upper-triangular `U_i`.
#[derive(Debug, Clone)]
pub struct SolvableCase {
    pub family: MatrixFamily,
    pub alpha: ProbabilityVector,
    pub triangulars: Vec<RMatrix>,
    pub conjugator: RMatrix,
    /// `Σ_j α_j (U_j)_ii` from the construction.
    pub theta: Vec<f64>,
}

impl SolvableCase {
    pub fn chi(&self) -> f64 {
        self.theta.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Diagonal entries are drawn from `diag`, off-diagonal ones from `[-1, 1]`.
pub fn random_solvable_case<R: Rng>(rng: &mut R, n: usize, modes: usize, diag: (f64, f64)) -> SolvableCase {
    let conjugator = loop {
        let t = RMatrix::from_fn(n, n, |i, j| {
            rng.random_range(-0.5..0.5) + if i == j { 1.0 } else { 0.0 }
        });
        if singular_values(&t).last().is_some_and(|&s| s > 0.3) {
            break t;
        }
    };
    let t_inv = inverse(&conjugator).expect("conjugator is well conditioned");
    let triangulars: Vec<RMatrix> = (0..modes)
        .map(|_| {
            RMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
                std::cmp::Ordering::Less => rng.random_range(-1.0..1.0),
                std::cmp::Ordering::Equal => rng.random_range(diag.0..diag.1),
                std::cmp::Ordering::Greater => 0.0,
            })
        })
        .collect();
    let weights: Vec<f64> = (0..modes).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut a: Vec<f64> = weights.iter().map(|w| w / total).collect();
    // Absorb rounding so the entries sum to 1 within the validator's tolerance.
    let drift = 1.0 - a.iter().sum::<f64>();
    a[0] += drift;
    let alpha = ProbabilityVector::new(a).expect("weights are positive and normalized");
    let theta = (0..n)
        .map(|i| {
            triangulars
                .iter()
                .zip(alpha.as_slice())
                .map(|(u, w)| w * u[(i, i)])
                .sum()
        })
        .collect();
    let mats = triangulars.iter().map(|u| &(&t_inv * u) * &conjugator).collect();
    SolvableCase {
        family: MatrixFamily::new(mats).expect("conjugated family is finite"),
        alpha,
        triangulars,
        conjugator,
        theta,
    }
}

/// Default diagonal range of generated suites.
pub const SUITE_DIAG: (f64, f64) = (-1.5, 1.0);

/// `count` random solvable families with `|max θ_i| ≥ MARGINAL_BAND`,
/// dimensions 2–3 and 2–3 modes.
pub fn solvable_suite(seed: u64, count: usize) -> Vec<SolvableCase> {
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let n = rng.random_range(2..=3);
        let modes = rng.random_range(2..=3);
        let case = random_solvable_case(&mut rng, n, modes, SUITE_DIAG);
        if case.chi().abs() >= MARGINAL_BAND {
            out.push(case);
        }
    }
    out
}

/// Stable fractions per `(grid value, perturbation column)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Name of the swept parameter (`L` or `delta_u`).
    pub parameter: String,
    pub grid: Vec<f64>,
    /// Perturbation magnitude `L` at each grid value.
    pub magnitudes: Vec<f64>,
    pub kinds: Vec<String>,
    /// `fractions[g][k]`: stable fraction at grid value `g` for column `k`.
    pub fractions: Vec<Vec<f64>>,
    pub trials: usize,
    pub horizon: f64,
    pub seed: u64,
    pub threshold: f64,
    /// Largest grid value up to which every cell meets the threshold.
    pub delta_emp: Option<f64>,
    /// `n max_i ‖A_i‖ + margin`, reported beside `delta_emp`.
    pub growth_bound: f64,
}

impl SweepResult {
    /// Rows are grid values, columns perturbation kinds, cells stable fractions.
    pub fn to_csv(&self) -> String {
        let mut s = self.parameter.clone();
        for k in &self.kinds {
            write!(s, ",{k}").expect("writing to a String cannot fail");
        }
        s.push('\n');
        for (g, row) in self.grid.iter().zip(&self.fractions) {
            write!(s, "{g}").expect("writing to a String cannot fail");
            for f in row {
                write!(s, ",{f}").expect("writing to a String cannot fail");
            }
            s.push('\n');
        }
        s
    }

    pub fn column(&self, kind: &str) -> Option<Vec<f64>> {
        let k = self.kinds.iter().position(|x| x == kind)?;
        Some(self.fractions.iter().map(|r| r[k]).collect())
    }
}

/// Sweep settings shared by both sweep entry points.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub grid: Vec<f64>,
    pub trials: usize,
    pub horizon: f64,
    pub seed: u64,
    pub dt: f64,
}

/// Default control maps for a sweep column: `B_i(x) = R_i x` with `R_i` a
/// plane rotation by `(i+1)π/(N+1)`, one scalar input, `β = 1`.
pub fn default_control_maps(n: usize, modes: usize) -> Vec<ControlMap> {
    (0..modes)
        .map(|i| {
            let angle = (i + 1) as f64 * std::f64::consts::PI / (modes + 1) as f64;
            let (s, c) = angle.sin_cos();
            let mut r = RMatrix::identity(n);
            if n >= 2 {
                r[(0, 0)] = c;
                r[(0, 1)] = -s;
                r[(1, 0)] = s;
                r[(1, 1)] = c;
            }
            ControlMap::Linear { columns: vec![r] }
        })
        .collect()
}

type ColumnMaker = Box<dyn Fn(f64) -> PerturbationSpec + Send + Sync>;

fn require_star(fam: &MatrixFamily, alpha: &ProbabilityVector) -> Result<()> {
    if !star_condition(fam, alpha)? {
        return Err(Error::StarConditionFails {
            abscissa: spectral_abscissa(&fam.mean(alpha)?)?,
        });
    }
    Ok(())
}

fn validate_config(cfg: &SweepConfig) -> Result<()> {
    if cfg.grid.is_empty() || cfg.grid.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidInput("grid must be non-empty and non-negative".into()));
    }
    if cfg.grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be strictly increasing".into()));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidInput("sweep needs at least one trial".into()));
    }
    Ok(())
}

/// Stream offset of cell `cell` so cells draw independent perturbation inputs.
fn cell_seed(seed: u64, cell: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (cell as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn perturbed_trial(
    cache: &Arc<ModeCache>,
    alpha: &ProbabilityVector,
    spec: &PerturbationSpec,
    cfg: &SweepConfig,
    cell: usize,
    trial: usize,
) -> Result<bool> {
    if spec.magnitude == 0.0 {
        let (_, v) = linear_trial(cache, alpha, cfg.horizon, cfg.seed, trial)?;
        return Ok(v.class == StabilityClass::Stable);
    }
    let mut rng = stream_rng(cfg.seed, trial as u64);
    let point = sample_switch_point_with(alpha, cfg.horizon, &mut rng);
    let prop = Propagator::with_cache(Arc::clone(cache), point)?;
    let n = prop.family().dim();
    let mut prng = stream_rng(cell_seed(cfg.seed, cell), trial as u64);
    let mut states: Vec<Vec<f64>> = (0..2 * n)
        .take(INITIAL_STATES)
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
            e
        })
        .collect();
    while states.len() < INITIAL_STATES {
        let v: Vec<f64> = (0..n).map(|_| prng.random_range(-1.0..1.0)).collect();
        let nv = crate::matkit::norm2(&v);
        if nv > 1e-3 {
            states.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    for x0 in &states {
        let traj = integrate_perturbed(&prop, spec, x0, cfg.horizon, cfg.dt, &mut prng)?;
        if classify(&traj)?.class != StabilityClass::Stable {
            return Ok(false);
        }
    }
    Ok(true)
}

fn run_sweep(
    fam: &MatrixFamily,
    alpha: &ProbabilityVector,
    cfg: &SweepConfig,
    parameter: &str,
    columns: Vec<(String, ColumnMaker)>,
) -> Result<SweepResult> {
    let cache = Arc::new(ModeCache::new(fam));
    let g = cfg.grid.len();
    let k = columns.len();
    let specs: Vec<Vec<PerturbationSpec>> = cfg
        .grid
        .iter()
        .map(|&x| columns.iter().map(|(_, make)| make(x)).collect())
        .collect();
    let jobs = g * k * cfg.trials;
    let stable: Vec<bool> = (0..jobs)
        .into_par_iter()
        .map(|job| {
            let cell = job / cfg.trials;
            let trial = job % cfg.trials;
            perturbed_trial(&cache, alpha, &specs[cell / k][cell % k], cfg, cell, trial)
        })
        .collect::<Result<_>>()?;
    let fractions: Vec<Vec<f64>> = (0..g)
        .map(|gi| {
            (0..k)
                .map(|ki| {
                    let cell = gi * k + ki;
                    let hits = stable[cell * cfg.trials..(cell + 1) * cfg.trials]
                        .iter()
                        .filter(|&&s| s)
                        .count();
                    hits as f64 / cfg.trials as f64
                })
                .collect()
        })
        .collect();
    let delta_emp = cfg
        .grid
        .iter()
        .zip(&fractions)
        .take_while(|(_, row)| row.iter().all(|&f| f >= SWEEP_THRESHOLD))
        .last()
        .map(|(&x, _)| x);
    let magnitudes = specs
        .iter()
        .map(|row| row.first().map_or(0.0, |s| s.magnitude))
        .collect();
    Ok(SweepResult {
        parameter: parameter.to_string(),
        grid: cfg.grid.clone(),
        magnitudes,
        kinds: columns.into_iter().map(|(name, _)| name).collect(),
        fractions,
        trials: cfg.trials,
        horizon: cfg.horizon,
        seed: cfg.seed,
        threshold: SWEEP_THRESHOLD,
        delta_emp,
        growth_bound: growth_bound(fam.dim(), fam.max_norm()),
    })
}

/// Stable fractions over the `L` grid for each perturbation kind. Refused
/// when (★) fails, since no positive threshold is then promised.
pub fn perturbation_sweep(
    fam: &MatrixFamily,
    alpha: &ProbabilityVector,
    kinds: &[PerturbationKind],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    check_alpha(fam, alpha)?;
    validate_config(cfg)?;
    require_star(fam, alpha)?;
    if kinds.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one perturbation kind".into()));
    }
    let (n, modes) = (fam.dim(), fam.len());
    let columns = kinds
        .iter()
        .map(|&kind| {
            let make: ColumnMaker = match kind {
                PerturbationKind::ControlProduct => {
                    let maps = default_control_maps(n, modes);
                    Box::new(move |l| {
                        PerturbationSpec::control(ControlSpec {
                            maps: maps.clone(),
                            beta: 1.0,
                            delta_u: l,
                        })
                    })
                }
                PerturbationKind::None => Box::new(|_| PerturbationSpec::none()),
                other => Box::new(move |l| PerturbationSpec::new(other, l).expect("grid is validated")),
            };
            (kind.name().to_string(), make)
        })
        .collect();
    run_sweep(fam, alpha, cfg, "L", columns)
}

/// Sweeps the input bound `delta_u` of `f_i = B_i(x) u` with `L = β δ`.
pub fn control_product_experiment(
    fam: &MatrixFamily,
    alpha: &ProbabilityVector,
    maps: Vec<ControlMap>,
    beta: f64,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    check_alpha(fam, alpha)?;
    validate_config(cfg)?;
    let spec = ControlSpec {
        maps,
        beta,
        delta_u: 0.0,
    };
    spec.validate(fam.dim(), fam.len(), &mut stream_rng(cfg.seed, u64::MAX))?;
    require_star(fam, alpha)?;
    let make: ColumnMaker = Box::new(move |d| {
        PerturbationSpec::control(ControlSpec {
            delta_u: d,
            ..spec.clone()
        })
    });
    run_sweep(
        fam,
        alpha,
        cfg,
        "delta_u",
        vec![(PerturbationKind::ControlProduct.name().to_string(), make)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Trajectory;

    fn traj(f: impl Fn(f64) -> f64, t_end: f64, step: f64) -> Trajectory {
        let times: Vec<f64> = (0..=((t_end / step) as usize)).map(|i| i as f64 * step).collect();
        let log_norms = times.iter().map(|&t| f(t)).collect();
        Trajectory {
            times,
            log_norms,
            rescales: 0,
            direction: vec![1.0],
        }
    }

    fn diag_pair() -> MatrixFamily {
        MatrixFamily::new(vec![RMatrix::diag(&[-2.0, 1.0]), RMatrix::diag(&[1.0, -2.0])]).unwrap()
    }

    #[test]
    fn classify_examples() {
        let v = classify(&traj(|t| -t, 100.0, 1.0)).unwrap();
        assert_eq!(v.class, StabilityClass::Stable);
        assert!((v.slope + 1.0).abs() < 1e-12);
        assert_eq!(
            classify(&traj(|t| 0.1 * t, 100.0, 1.0)).unwrap().class,
            StabilityClass::Unstable
        );
        assert_eq!(
            classify(&traj(f64::sin, 400.0, 0.1)).unwrap().class,
            StabilityClass::Indeterminate
        );
        assert!(matches!(
            classify(&traj(|t| -t, 20.0, 1.0)),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn classify_is_scale_invariant() {
        let a = classify(&traj(|t| -0.3 * t + (0.7 * t).sin(), 120.0, 1.0)).unwrap();
        let b = classify(&traj(|t| -0.3 * t + (0.7 * t).sin() + 1000f64.ln(), 120.0, 1.0)).unwrap();
        assert_eq!(a.class, b.class);
        assert!((a.slope - b.slope).abs() < 1e-12);
    }

    #[test]
    fn wilson_bounds() {
        let [lo, hi] = wilson_interval(50, 50);
        assert!(lo > 0.92 && hi == 1.0);
        let [lo, hi] = wilson_interval(25, 50);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn mc_diag_pair() {
        let fam = diag_pair();
        let rep = mc_stability(&fam, &ProbabilityVector::uniform(2), 50, 2000.0, 1).unwrap();
        assert!(rep.stable_fraction >= 0.95);
        assert!((rep.mean_exponent + 0.5).abs() <= 0.05);
        assert!((rep.closed_form.as_ref().unwrap().chi + 0.5).abs() < 1e-9);
        let skew = ProbabilityVector::new(vec![0.9, 0.1]).unwrap();
        let rep = mc_stability(&fam, &skew, 50, 2000.0, 1).unwrap();
        assert!(rep.stable_fraction <= 0.05);
        assert!((rep.mean_exponent - 0.7).abs() <= 0.05);
    }

    #[test]
    fn single_hurwitz_mode_always_stable() {
        let fam = MatrixFamily::new(vec![RMatrix::from_rows(&[vec![-0.5, 3.0], vec![-3.0, -0.5]]).unwrap()]).unwrap();
        let rep = mc_stability(&fam, &ProbabilityVector::uniform(1), 20, 100.0, 4).unwrap();
        assert_eq!(rep.stable_fraction, 1.0);
    }

    #[test]
    fn mc_requires_enough_trials() {
        let fam = diag_pair();
        assert!(mc_stability(&fam, &ProbabilityVector::uniform(2), 5, 100.0, 0).is_err());
    }

    #[test]
    fn dichotomy_examples() {
        let fam = diag_pair();
        let r = dichotomy_check(&fam, &ProbabilityVector::uniform(2), 50, 2000.0, 3).unwrap();
        assert_eq!(r.judgement, Judgement::Pass);
        assert!(r.star_condition);
        let r = dichotomy_check(&fam, &ProbabilityVector::new(vec![0.9, 0.1]).unwrap(), 50, 2000.0, 3).unwrap();
        assert_eq!(r.judgement, Judgement::Pass);
        assert!(!r.star_condition);
        let sym = MatrixFamily::new(vec![RMatrix::diag(&[-1.0, 1.0]), RMatrix::diag(&[1.0, -1.0])]).unwrap();
        let r = dichotomy_check(&sym, &ProbabilityVector::uniform(2), 20, 200.0, 3).unwrap();
        assert_eq!(r.judgement, Judgement::Marginal);
    }

    #[test]
    fn dichotomy_rejects_sl2() {
        let e = RMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let f = RMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let fam = MatrixFamily::new(vec![e, f]).unwrap();
        assert!(matches!(
            dichotomy_check(&fam, &ProbabilityVector::uniform(2), 20, 100.0, 0),
            Err(Error::NotSolvable { .. })
        ));
    }

    #[test]
    fn suite_cases_have_ground_truth_theta() {
        for case in solvable_suite(7, 6) {
            assert!(case.chi().abs() >= MARGINAL_BAND);
            let cf = solvable_closed_form(&case.family, &case.alpha).unwrap();
            assert!((cf.chi - case.chi()).abs() < 1e-6);
        }
    }

    #[test]
    fn sweep_refuses_without_star() {
        let fam = diag_pair();
        let cfg = SweepConfig {
            grid: vec![0.0, 0.1],
            trials: 2,
            horizon: 60.0,
            seed: 0,
            dt: 0.01,
        };
        let skew = ProbabilityVector::new(vec![0.9, 0.1]).unwrap();
        assert!(matches!(
            perturbation_sweep(&fam, &skew, &[PerturbationKind::Rotation], &cfg),
            Err(Error::StarConditionFails { .. })
        ));
    }

    #[test]
    fn zero_column_reproduces_mc_verdicts() {
        let fam = diag_pair();
        let alpha = ProbabilityVector::uniform(2);
        let cfg = SweepConfig {
            grid: vec![0.0],
            trials: 20,
            horizon: 80.0,
            seed: 12,
            dt: 0.01,
        };
        let mc = mc_stability(&fam, &alpha, 20, 80.0, 12).unwrap();
        let sw = perturbation_sweep(&fam, &alpha, &[PerturbationKind::Rotation], &cfg).unwrap();
        assert_eq!(sw.fractions[0][0], mc.stable_fraction);
        let ctl = control_product_experiment(&fam, &alpha, default_control_maps(2, 2), 1.0, &cfg).unwrap();
        assert_eq!(ctl.fractions[0][0], mc.stable_fraction);
    }

    #[test]
    fn small_sweep_is_deterministic() {
        let fam = diag_pair();
        let alpha = ProbabilityVector::uniform(2);
        let cfg = SweepConfig {
            grid: vec![0.0, 0.2],
            trials: 4,
            horizon: 60.0,
            seed: 99,
            dt: 0.01,
        };
        let kinds = [PerturbationKind::RandomDirection, PerturbationKind::ControlProduct];
        let a = perturbation_sweep(&fam, &alpha, &kinds, &cfg).unwrap();
        let b = perturbation_sweep(&fam, &alpha, &kinds, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv().lines().next().unwrap(), "L,random-direction,control-product");
    }

    #[test]
    fn growth_violation_is_reported() {
        let fam = diag_pair();
        let alpha = ProbabilityVector::uniform(2);
        let cfg = SweepConfig {
            grid: vec![0.0],
            trials: 1,
            horizon: 60.0,
            seed: 0,
            dt: 0.01,
        };
        let maps = vec![
            ControlMap::Linear {
                columns: vec![RMatrix::diag(&[2.0, 1.0])]
            };
            2
        ];
        assert!(matches!(
            control_product_experiment(&fam, &alpha, maps, 1.0, &cfg),
            Err(Error::GrowthBoundViolated { .. })
        ));
    }
}
