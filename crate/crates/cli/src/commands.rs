//! Subcommand drivers: run the analysis, print a summary, write reports.

use std::fmt::Write as _;
use std::path::PathBuf;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use switchstab_core::exponents::{
    chi_plus_prefix, growth_bound, liao_windows, lyapunov_qr, theta_upper_triangular, window_series_csv,
    CoefficientSeries, ExponentReport, FrameState, LiaoWindows, DEFAULT_MAX_ELL,
};
use switchstab_core::flow::{IntervalSource, Propagator};
use switchstab_core::lie::{
    closed_form_exponents, is_solvable, simultaneous_triangularize, ClosedForm, MatrixFamily, ProbabilityVector,
    Solvability, Triangularization,
};
use switchstab_core::matkit::{spectral_abscissa, CMatrix};
use switchstab_core::stability::{
    control_product_experiment, dichotomy_check, mc_stability, perturbation_sweep, solvable_closed_form,
    solvable_suite, DichotomyReport, Judgement, McReport, SweepConfig, SweepResult,
};
use switchstab_core::symdyn::{sample_switch_point_with, stream_rng};

use crate::scenario::{Scenario, System, TimeVaryingSystem};
use crate::{CliError, Format, VERSION};

/// Where and in which formats reports go.
pub struct Output {
    dir: Option<PathBuf>,
    format: Format,
}

impl Output {
    pub fn new(dir: Option<PathBuf>, format: Format) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).map_err(|e| CliError::Input(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Output { dir, format })
    }

    fn write(&self, name: &str, text: &str) -> Result<(), CliError> {
        if let Some(d) = &self.dir {
            let path = d.join(name);
            std::fs::write(&path, text)
                .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, command: &str, sc: &Scenario, report: &T) -> Result<(), CliError> {
        if self.format == Format::Csv {
            return Ok(());
        }
        let env = Envelope {
            tool: "switchstab",
            version: VERSION,
            command,
            scenario: &sc.name,
            seed: sc.seed,
            report,
        };
        let text = serde_json::to_string_pretty(&env).expect("reports serialize") + "\n";
        self.write(&format!("{command}.json"), &text)
    }

    fn csv(&self, name: &str, text: &str) -> Result<(), CliError> {
        if self.format == Format::Json {
            return Ok(());
        }
        self.write(name, text)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    scenario: &'a str,
    seed: u64,
    report: &'a T,
}

fn switched<'a>(sc: &'a Scenario, command: &str) -> Result<(&'a MatrixFamily, &'a ProbabilityVector), CliError> {
    match sc.system() {
        System::Switched(f, a) => Ok((f, a)),
        _ => Err(CliError::Input(format!(
            "{command} needs a scenario with a matrix family"
        ))),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

#[derive(Serialize)]
struct SolvableReport {
    solvability: Solvability,
    #[serde(skip_serializing_if = "Option::is_none")]
    triangularization: Option<Triangularization>,
}

#[derive(Serialize)]
struct SuiteSolvable {
    families: Vec<Solvability>,
}

pub fn check_solvable(sc: &Scenario, out: &Output) -> Result<(), CliError> {
    if let System::Suite(s) = sc.system() {
        let families: Vec<Solvability> = solvable_suite(s.seed, s.count)
            .iter()
            .map(|c| is_solvable(&c.family))
            .collect();
        let ok = families.iter().filter(|f| f.solvable).count();
        println!("solvable: {ok}/{}", families.len());
        return out.json("check-solvable", sc, &SuiteSolvable { families });
    }
    let (fam, _) = switched(sc, "check-solvable")?;
    let solvability = is_solvable(fam);
    println!("derived series: {:?}", solvability.series);
    match solvability.ell {
        Some(ell) => println!("solvable: true, ell={ell}"),
        None => println!("solvable: false"),
    }
    let triangularization = if solvability.solvable {
        let tri = simultaneous_triangularize(fam)?;
        println!("triangularization residue: {:.3e}", tri.lower_residue);
        Some(tri)
    } else {
        None
    };
    out.json(
        "check-solvable",
        sc,
        &SolvableReport {
            solvability,
            triangularization,
        },
    )
}

fn complex_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    m.to_rows()
        .iter()
        .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

#[derive(Serialize)]
struct TriangularizeReport {
    t: Vec<Vec<[f64; 2]>>,
    t_inv: Vec<Vec<[f64; 2]>>,
    triangularization: Triangularization,
    closed_form: ClosedForm,
}

pub fn triangularize(sc: &Scenario, out: &Output) -> Result<(), CliError> {
    let (fam, alpha) = switched(sc, "triangularize")?;
    let tri = simultaneous_triangularize(fam)?;
    let cf = closed_form_exponents(&tri, alpha)?;
    println!("triangularization residue: {:.3e}", tri.lower_residue);
    for (i, d) in tri.diag.iter().enumerate() {
        let parts: Vec<String> = d.iter().map(fmt_complex).collect();
        println!("diag A_{i}: [{}]", parts.join(", "));
    }
    println!("theta: {}", fmt_vec(&cf.theta));
    println!("closed-form chi: {:.6}", cf.chi);
    let mut csv = String::from("mode,index,re,im\n");
    for (i, d) in tri.diag.iter().enumerate() {
        for (j, z) in d.iter().enumerate() {
            writeln!(csv, "{i},{j},{},{}", z.re, z.im).expect("writing to a String cannot fail");
        }
    }
    out.csv("triangularize.csv", &csv)?;
    out.json(
        "triangularize",
        sc,
        &TriangularizeReport {
            t: complex_rows(&tri.t),
            t_inv: complex_rows(&tri.t_inv),
            closed_form: cf,
            triangularization: tri,
        },
    )
}

fn fmt_complex(z: &Complex64) -> String {
    if z.im == 0.0 {
        format!("{:.6}", z.re)
    } else {
        format!("{:.6}{:+.6}i", z.re, z.im)
    }
}

#[derive(Serialize)]
struct LiaoSummary {
    ell: u32,
    mean_chi_star: f64,
    /// Smallest `χ*⁺(ℓ) - χ⁺(T_{k_m})` over signals.
    min_margin: f64,
}

#[derive(Serialize)]
struct ExponentsReport {
    signals: usize,
    horizon: f64,
    mean_chi_plus: f64,
    mean_theta: Vec<f64>,
    liao: Vec<LiaoSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<ClosedForm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectral_abscissa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_upper_triangular: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_analytic: Option<f64>,
    runs: Vec<ExponentReport>,
}

fn select_ells(rep: &mut ExponentReport, run_series: &[switchstab_core::exponents::IntervalLog], ells: &[u32]) {
    rep.liao = ells
        .iter()
        .filter_map(|&ell| {
            let m = run_series.len() >> ell.min(63);
            liao_windows(run_series, rep.tau, ell, m).ok()
        })
        .collect();
}

pub fn exponents(sc: &Scenario, out: &Output) -> Result<(), CliError> {
    let max_ell = sc.ells.iter().copied().max().unwrap_or(DEFAULT_MAX_ELL);
    let mut runs: Vec<(ExponentReport, Vec<LiaoWindows>, Vec<f64>)> = Vec::new();
    let mut closed_form = None;
    let mut abscissa = None;
    let mut theta_tri = None;
    let mut theta_analytic = None;
    match sc.system() {
        System::Switched(fam, alpha) => {
            let cache = std::sync::Arc::new(switchstab_core::flow::ModeCache::new(fam));
            let bound = growth_bound(fam.dim(), fam.max_norm());
            runs = (0..sc.trials.max(1))
                .into_par_iter()
                .map(|i| -> Result<_, CliError> {
                    let mut rng = stream_rng(sc.seed, i as u64);
                    let point = sample_switch_point_with(alpha, sc.horizon, &mut rng);
                    let tau = point.tau;
                    let prop = Propagator::with_cache(cache.clone(), point)?;
                    let run = lyapunov_qr(&prop, sc.horizon, FrameState::identity(fam.dim()))?;
                    let mut rep = ExponentReport::new(&run, tau, max_ell, bound);
                    select_ells(&mut rep, &run.series, &sc.ells);
                    let prefix = rep
                        .liao
                        .iter()
                        .map(|w| chi_plus_prefix(&run.series, w.windows * w.delta))
                        .collect();
                    let windows = rep.liao.clone();
                    Ok((rep, windows, prefix))
                })
                .collect::<Result<_, _>>()?;
            closed_form = solvable_closed_form(fam, alpha);
            if fam.len() == 1 {
                abscissa = Some(spectral_abscissa(&fam.mats()[0])?);
            }
        }
        System::TimeVarying(tv) => {
            let sys = tv.build()?;
            let run = lyapunov_qr(&sys, sc.horizon, FrameState::identity(sys.dim()))?;
            let mut rep = ExponentReport::new(&run, 0.0, max_ell, f64::INFINITY);
            select_ells(&mut rep, &run.series, &sc.ells);
            let prefix = rep
                .liao
                .iter()
                .map(|w| chi_plus_prefix(&run.series, w.windows * w.delta))
                .collect();
            let windows = rep.liao.clone();
            runs.push((rep, windows, prefix));
            if tv.system == TimeVaryingSystem::TriangularDecay {
                let f = |t: f64| sys.coefficient(t).to_complex();
                theta_tri = Some(theta_upper_triangular(CoefficientSeries::Function(&f), sc.horizon)?);
                theta_analytic = Some(-(1.0 + sc.horizon).ln() / sc.horizon);
            }
        }
        System::Suite(_) => return Err(CliError::Input("exponents needs a single system, not a suite".into())),
    }

    let count = runs.len() as f64;
    let mean_chi_plus = runs.iter().map(|r| r.0.chi_plus).sum::<f64>() / count;
    let n = runs[0].0.theta.len();
    let mean_theta: Vec<f64> = (0..n)
        .map(|j| runs.iter().map(|r| r.0.theta[j]).sum::<f64>() / count)
        .collect();
    let liao: Vec<LiaoSummary> = sc
        .ells
        .iter()
        .filter_map(|&ell| {
            let per_run: Vec<(f64, f64)> = runs
                .iter()
                .filter_map(|(rep, _, prefix)| {
                    rep.liao
                        .iter()
                        .position(|w| w.ell == ell)
                        .map(|k| (rep.liao[k].chi_star, rep.liao[k].chi_star - prefix[k]))
                })
                .collect();
            (per_run.len() == runs.len()).then(|| LiaoSummary {
                ell,
                mean_chi_star: per_run.iter().map(|p| p.0).sum::<f64>() / count,
                min_margin: per_run.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
            })
        })
        .collect();

    println!("signals: {}, horizon: {}", runs.len(), sc.horizon);
    println!("chi+ = {mean_chi_plus:.6}");
    println!("theta = {}", fmt_vec(&mean_theta));
    if let Some(cf) = &closed_form {
        println!("closed-form chi = {:.6}, theta = {}", cf.chi, fmt_vec(&cf.theta));
    }
    if let Some(a) = abscissa {
        println!("spectral abscissa = {a:.6}");
    }
    if let Some(t) = &theta_tri {
        println!("theta (upper-triangular) = {}", fmt_vec(t));
    }
    if let Some(a) = theta_analytic {
        println!("theta (analytic) = {a:.6}");
    }
    for l in &liao {
        println!("chi*+ (ell={}) = {:.6}", l.ell, l.mean_chi_star);
    }

    let mut summary = String::from("signal,tau,chi_plus");
    for j in 0..n {
        write!(summary, ",theta_{j}").expect("writing to a String cannot fail");
    }
    for l in &liao {
        write!(summary, ",chi_star_l{}", l.ell).expect("writing to a String cannot fail");
    }
    summary.push('\n');
    for (i, (rep, _, _)) in runs.iter().enumerate() {
        write!(summary, "{i},{},{}", rep.tau, rep.chi_plus).expect("writing to a String cannot fail");
        for t in &rep.theta {
            write!(summary, ",{t}").expect("writing to a String cannot fail");
        }
        for l in &liao {
            let w = rep
                .liao
                .iter()
                .find(|w| w.ell == l.ell)
                .expect("summarized ells exist in every run");
            write!(summary, ",{}", w.chi_star).expect("writing to a String cannot fail");
        }
        summary.push('\n');
    }
    out.csv("exponents.csv", &summary)?;
    let mut windows = String::new();
    for w in &runs[0].1 {
        for (i, line) in window_series_csv(w).lines().enumerate() {
            if i == 0 {
                if windows.is_empty() {
                    writeln!(windows, "ell,{line}").expect("writing to a String cannot fail");
                }
            } else {
                writeln!(windows, "{},{line}", w.ell).expect("writing to a String cannot fail");
            }
        }
    }
    out.csv("windows.csv", &windows)?;

    let report = ExponentsReport {
        signals: runs.len(),
        horizon: sc.horizon,
        mean_chi_plus,
        mean_theta,
        liao,
        closed_form,
        spectral_abscissa: abscissa,
        theta_upper_triangular: theta_tri,
        theta_analytic,
        runs: runs.into_iter().map(|r| r.0).collect(),
    };
    out.json("exponents", sc, &report)
}

#[derive(Serialize)]
struct SuiteMc {
    passed: usize,
    failed: usize,
    marginal: usize,
    families: Vec<DichotomyReport>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum McOutcome {
    Plain(McReport),
    Checked(DichotomyReport),
}

fn mc_csv(rows: &mut String, family: usize, mc: &McReport) {
    for (i, (e, v)) in mc.exponents.iter().zip(&mc.verdicts).enumerate() {
        let v = serde_json::to_value(v).expect("verdict serializes");
        writeln!(rows, "{family},{i},{e},{}", v.as_str().unwrap_or_default()).expect("writing to a String cannot fail");
    }
}

pub fn mc(sc: &Scenario, out: &Output) -> Result<(), CliError> {
    let mut csv = String::from("family,trial,exponent,verdict\n");
    match sc.system() {
        System::Suite(s) => {
            let cases = solvable_suite(s.seed, s.count);
            let mut families = Vec::with_capacity(cases.len());
            for (i, case) in cases.iter().enumerate() {
                let r = dichotomy_check(
                    &case.family,
                    &case.alpha,
                    sc.trials,
                    sc.horizon,
                    sc.seed.wrapping_add(i as u64),
                )?;
                mc_csv(&mut csv, i, &r.mc);
                families.push(r);
            }
            let count = |j| families.iter().filter(|r| r.judgement == j).count();
            let (passed, failed, marginal) = (
                count(Judgement::Pass),
                count(Judgement::Fail),
                count(Judgement::Marginal),
            );
            println!("PASS {passed}/{}, {marginal} marginal", families.len() - marginal);
            if failed > 0 {
                println!("FAIL {failed}");
            }
            out.csv("mc.csv", &csv)?;
            out.json(
                "mc",
                sc,
                &SuiteMc {
                    passed,
                    failed,
                    marginal,
                    families,
                },
            )
        }
        System::Switched(fam, alpha) => {
            let outcome = if is_solvable(fam).solvable {
                McOutcome::Checked(dichotomy_check(fam, alpha, sc.trials, sc.horizon, sc.seed)?)
            } else {
                McOutcome::Plain(mc_stability(fam, alpha, sc.trials, sc.horizon, sc.seed)?)
            };
            let rep = match &outcome {
                McOutcome::Plain(m) => m,
                McOutcome::Checked(r) => &r.mc,
            };
            println!(
                "stable fraction: {:.4} ({}/{}), wilson 95%: [{:.4}, {:.4}]",
                rep.stable_fraction, rep.stable, rep.trials, rep.wilson_95[0], rep.wilson_95[1]
            );
            println!("mean exponent: {:.6} (sd {:.6})", rep.mean_exponent, rep.std_exponent);
            println!("star condition: {}", rep.star_condition);
            if let Some(cf) = &rep.closed_form {
                println!("closed-form chi: {:.6}", cf.chi);
            }
            if let McOutcome::Checked(r) = &outcome {
                let j = serde_json::to_value(r.judgement).expect("judgement serializes");
                println!("dichotomy: {}", j.as_str().unwrap_or_default().to_uppercase());
            }
            mc_csv(&mut csv, 0, rep);
            out.csv("mc.csv", &csv)?;
            out.json("mc", sc, &outcome)
        }
        System::TimeVarying(_) => Err(CliError::Input("mc needs a switched family or a suite".into())),
    }
}

fn print_sweep(res: &SweepResult) {
    print!("{}", res.to_csv());
    match res.delta_emp {
        Some(d) => println!("delta_emp: {d}"),
        None => println!(
            "delta_emp: none (threshold {} not met at the first grid value)",
            res.threshold
        ),
    }
    println!("growth bound C: {:.6}", res.growth_bound);
}

pub fn sweep(sc: &Scenario, out: &Output) -> Result<(), CliError> {
    let (fam, alpha) = switched(sc, "sweep")?;
    let grid = sc
        .perturbation
        .as_ref()
        .ok_or_else(|| CliError::Input("sweep needs a `perturbation` section".into()))?;
    let cfg = SweepConfig {
        grid: grid.grid.clone(),
        trials: grid.trials.unwrap_or(sc.trials),
        horizon: grid.horizon.unwrap_or(sc.horizon),
        seed: sc.seed,
        dt: grid.dt,
    };
    let res = perturbation_sweep(fam, alpha, &grid.kinds, &cfg)?;
    print_sweep(&res);
    out.csv("sweep.csv", &res.to_csv())?;
    out.json("sweep", sc, &res)
}

pub fn control_sweep(sc: &Scenario, out: &Output) -> Result<(), CliError> {
    let (fam, alpha) = switched(sc, "control-sweep")?;
    let ctl = sc
        .control
        .as_ref()
        .ok_or_else(|| CliError::Input("control-sweep needs a `control` section".into()))?;
    let cfg = SweepConfig {
        grid: ctl.delta_grid.clone(),
        trials: ctl.trials.unwrap_or(sc.trials),
        horizon: ctl.horizon.unwrap_or(sc.horizon),
        seed: sc.seed,
        dt: ctl.dt,
    };
    let res = control_product_experiment(fam, alpha, ctl.maps_for(fam), ctl.beta, &cfg)?;
    print_sweep(&res);
    out.csv("control-sweep.csv", &res.to_csv())?;
    out.json("control-sweep", sc, &res)
}
