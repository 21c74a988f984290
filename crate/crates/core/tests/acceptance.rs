//! Acceptance suite: one PASS/FAIL line per criterion.

use mhd2d::appio::config::{parse_config, Config};
use mhd2d::appio::csvio::read_timeseries_csv;
use mhd2d::appio::snapshot::read_snapshot;
use mhd2d::appio::{invariant_checks, run_config};
use mhd2d::diagnostics::*;
use mhd2d::init::{init_state, InitialDataSpec, Profile};
use mhd2d::ops::*;
use mhd2d::solver::*;
use mhd2d::verification::mms::{centered_study, run_mms, upwind_study};
use mhd2d::verification::sweep::*;
use mhd2d::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

const MASS_TOL: f64 = 1e-11;
const RUNTIME_C1: Duration = Duration::from_secs(60);
const RATIO_TOL: f64 = 1e-10;
const HALVING_BAND: (f64, f64) = (0.35, 0.65);
/// Per-step energy-balance allowance `ETA_COEF * E(0) * dt^2`.
const ETA_COEF: f64 = 5.0;
const F_TOL: f64 = 1e-8;
const FIXED_POINT_TOL: f64 = 1e-13;
const HEAT_TOL: f64 = 5e-3;
const UPWIND_ORDER: (f64, f64) = (0.8, 1.3);
const CENTERED_ORDER: (f64, f64) = (1.7, 2.3);
const RUNTIME_MMS: Duration = Duration::from_secs(300);
const DELTA_SCALING: f64 = 2.0;
const RESIDUAL_FACTOR: f64 = 1.5;
const SBP_TOL: f64 = 1e-13;
const BOUNDS_TOL: f64 = 1e-13;
const PROPERTY_CASES: usize = 100;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ratio_profile() -> InitialDataSpec {
    InitialDataSpec::new(Profile::RatioProfile {
        rho_base: 1.0,
        rho_amp: 0.1,
        ratio_lo: 0.5,
        ratio_hi: 2.0,
    })
    .with_swirl(0.2)
}

fn regularized(n: usize, t_final: f64) -> SimulationParams {
    SimulationParams {
        nx: n,
        ny: n,
        eps: 1e-2,
        delta: 1e-2,
        big_gamma: 6.0,
        gamma: 1.4,
        t_final,
        ..Default::default()
    }
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

struct MainRun {
    output: RunOutput,
    envelope: mhd2d::init::RatioEnvelope,
    elapsed: Duration,
}

fn main_run() -> MainRun {
    let p = regularized(64, 1.0);
    let g = Grid::new(p.lx, p.ly, p.nx, p.ny).unwrap();
    let (s0, envelope) = init_state(&g, &ratio_profile()).unwrap();
    let start = Instant::now();
    let output = simulate(&Solver::new(g, p), s0, &RunControl::default(), |_, _| {}).unwrap();
    MainRun {
        output,
        envelope,
        elapsed: start.elapsed(),
    }
}

fn c1_conservation(run: &MainRun) -> Outcome {
    let s = &run.output.series;
    let drift = |f: fn(&DiagnosticsRecord) -> f64| {
        let m0 = f(&s[0]);
        s.iter().map(|r| ((f(r) - m0) / m0).abs()).fold(0.0, f64::max)
    };
    let (dr, db) = (drift(|r| r.mass_rho), drift(|r| r.mass_b));
    check(
        dr <= MASS_TOL && db <= MASS_TOL && run.elapsed <= RUNTIME_C1,
        format!(
            "drift rho {dr:.2e}, b {db:.2e} (tol {MASS_TOL:.0e}); {} steps in {:.1} s (limit {} s)",
            run.output.steps(),
            run.elapsed.as_secs_f64(),
            RUNTIME_C1.as_secs()
        ),
    )
}

fn c2_maximum_principle(run: &MainRun) -> Outcome {
    let s = &run.output.series;
    let lo = s.iter().map(|r| r.ratio_min).fold(f64::INFINITY, f64::min);
    let hi = s.iter().map(|r| r.ratio_max).fold(f64::NEG_INFINITY, f64::max);
    let env = run.envelope;
    check(
        env.c_star == 0.5 && env.c_upper == 2.0 && env.contains(lo, hi, RATIO_TOL),
        format!(
            "b/rho in [{lo:.13}, {hi:.13}] over {} records, envelope [0.5, 2.0]",
            s.len()
        ),
    )
}

fn c3_energy() -> Outcome {
    let p = SimulationParams {
        nx: 32,
        ny: 32,
        t_final: 0.25,
        transport: Transport::Centered,
        ..Default::default()
    };
    let g = Grid::new(p.lx, p.ly, p.nx, p.ny).unwrap();
    let spec = InitialDataSpec::new(Profile::Cosine {
        base: 1.0,
        amplitude: 0.3,
        kx: 1.0,
        ky: 1.0,
        ratio: 1.0,
    });
    let (s0, _) = init_state(&g, &spec).unwrap();
    let e0 = total_energy(&g, &s0, &p);
    let dt0 = stable_dt(&g, &s0, &p).unwrap();
    let mut drifts = Vec::new();
    let mut eta_ok = true;
    let mut worst = 0.0f64;
    for k in 0..4 {
        let dt = dt0 / 2f64.powi(k);
        let control = RunControl {
            fixed_dt: Some(dt),
            frames: FrameSchedule::EverySteps(1),
            ..Default::default()
        };
        let run = simulate(&Solver::new(g.clone(), p.clone()), s0.clone(), &control, |_, _| {}).unwrap();
        let eta = ETA_COEF * e0 * dt * dt;
        let mut positive = 0.0;
        for (w, s) in run.series.windows(2).zip(run.trajectory.frames.iter().skip(1)) {
            let step = w[1].t - w[0].t;
            let defect = w[1].energy - w[0].energy + step * dissipation_rate(&g, s, &p);
            positive += defect.max(0.0);
            worst = worst.max(defect / eta);
            eta_ok &= defect <= eta;
        }
        drifts.push(positive);
    }
    let ratios: Vec<f64> = drifts.windows(2).map(|w| w[1] / w[0]).collect();
    let ok = eta_ok && drifts[0] > 0.0 && ratios.iter().all(|r| (HALVING_BAND.0..=HALVING_BAND.1).contains(r));
    check(
        ok,
        format!(
            "positive balance drift {:.3e} -> ratios {:?} (band {HALVING_BAND:?}); worst step / eta {worst:.3}",
            drifts[0],
            ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    )
}

fn c4_convex_functional(run: &MainRun) -> Outcome {
    let mut cases: Vec<(String, SimulationParams, InitialDataSpec)> = vec![
        (
            "centered cosine".into(),
            SimulationParams {
                transport: Transport::Centered,
                ..regularized(32, 0.5)
            },
            InitialDataSpec::new(Profile::Cosine {
                base: 1.0,
                amplitude: 0.3,
                kx: 1.0,
                ky: 2.0,
                ratio: 1.5,
            }),
        ),
        (
            "isothermal".into(),
            SimulationParams {
                gamma: 1.0,
                ..regularized(32, 0.5)
            },
            ratio_profile(),
        ),
        (
            "strong artificial pressure".into(),
            SimulationParams {
                delta: 0.1,
                ..regularized(32, 0.5)
            },
            ratio_profile(),
        ),
    ];
    cases.push((
        "constant".into(),
        regularized(16, 0.2),
        InitialDataSpec::new(Profile::Constant { rho: 1.0, b: 1.0 }),
    ));
    let increase = |series: &[DiagnosticsRecord]| {
        let f0 = series[0].f_convex;
        series
            .windows(2)
            .map(|w| (w[1].f_convex - w[0].f_convex) / f0)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut worst = increase(&run.output.series);
    let mut failed = Vec::new();
    if worst > F_TOL {
        failed.push("main".to_string());
    }
    for (name, p, spec) in &cases {
        let g = Grid::new(p.lx, p.ly, p.nx, p.ny).unwrap();
        let (s0, envelope) = init_state(&g, spec).unwrap();
        let result = simulate(&Solver::new(g, p.clone()), s0, &RunControl::default(), |_, _| {});
        if invariant_checks(&result, envelope, p.eps).iter().any(|c| !c.passed) {
            failed.push(format!("{name} (verify)"));
        }
        match result {
            Ok(out) => {
                let w = increase(&out.series);
                worst = worst.max(w);
                if w > F_TOL {
                    failed.push(name.clone());
                }
            }
            Err(e) => failed.push(format!("{name}: {}", e.error)),
        }
    }
    check(
        failed.is_empty(),
        format!(
            "{} runs, largest per-step increase {:.2e} F(0) (tol {F_TOL:.0e}){}",
            cases.len() + 1,
            worst.max(0.0),
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failing {failed:?}")
            }
        ),
    )
}

fn c5_fixed_point() -> Outcome {
    let p = regularized(32, 1.0);
    let g = Grid::new(p.lx, p.ly, p.nx, p.ny).unwrap();
    let (s0, _) = init_state(&g, &InitialDataSpec::new(Profile::Constant { rho: 1.0, b: 1.0 })).unwrap();
    let solver = Solver::new(g, p);
    let mut s = s0.clone();
    for _ in 0..1000 {
        s = solver.step(&s).unwrap().0;
    }
    let diff = |a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let worst = diff(&s.rho, &s0.rho)
        .max(diff(&s.b, &s0.b))
        .max(diff(&s.u.ux, &s0.u.ux))
        .max(diff(&s.u.uy, &s0.u.uy));
    check(
        worst <= FIXED_POINT_TOL,
        format!("max entry change {worst:.2e} after 1000 steps (tol {FIXED_POINT_TOL:.0e})"),
    )
}

fn c6_heat_mode() -> Outcome {
    let p = SimulationParams {
        eps: 1e-2,
        ..regularized(64, 1.0)
    };
    let g = Grid::new(p.lx, p.ly, p.nx, p.ny).unwrap();
    let amplitude = 0.1;
    let spec = InitialDataSpec::new(Profile::Cosine {
        base: 1.0,
        amplitude,
        kx: 1.0,
        ky: 1.0,
        ratio: 1.0,
    });
    let (s0, _) = init_state(&g, &spec).unwrap();
    let run = simulate(
        &Solver::new(g.clone(), p.clone()).with_frozen_velocity(),
        s0,
        &RunControl::default(),
        |_, _| {},
    )
    .unwrap();
    let lam = neumann_eigenvalue(1.0, p.lx, g.hx) + neumann_eigenvalue(1.0, p.ly, g.hy);
    let amp = amplitude * (p.eps * lam * run.final_state.t).exp();
    let mode = g.sample_cells(|x, y| (PI * x / p.lx).cos() * (PI * y / p.ly).cos());
    let rel = |q: &ndarray::Array2<f64>| {
        let (mut err, mut norm) = (0.0, 0.0);
        for (v, m) in q.iter().zip(&mode) {
            err += (v - 1.0 - amp * m).powi(2);
            norm += (amp * m).powi(2);
        }
        (err / norm).sqrt()
    };
    let (er, eb) = (rel(&run.final_state.rho), rel(&run.final_state.b));
    check(
        er <= HEAT_TOL && eb <= HEAT_TOL && run.final_state.t == p.t_final,
        format!(
            "relative L2 error rho {er:.2e}, b {eb:.2e} at t = {} (tol {HEAT_TOL:.0e})",
            run.final_state.t
        ),
    )
}

fn c7_mms() -> Outcome {
    let start = Instant::now();
    let base = SimulationParams::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, study, band) in [
        ("upwind", upwind_study as fn(&SimulationParams) -> _, UPWIND_ORDER),
        ("centered", centered_study, CENTERED_ORDER),
    ] {
        let (p, ms, opts) = study(&base);
        match run_mms(&p, &ms, &opts) {
            Ok(r) => {
                let inside = |v: f64| (band.0..=band.1).contains(&v);
                ok &= inside(r.order_l2) && inside(r.order_linf) && r.resolutions == [32, 64, 128];
                parts.push(format!(
                    "{name} L2 {:.3} Linf {:.3} in {band:?}",
                    r.order_l2, r.order_linf
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        ok && elapsed <= RUNTIME_MMS,
        format!(
            "{}; {:.1} s (limit {} s)",
            parts.join("; "),
            elapsed.as_secs_f64(),
            RUNTIME_MMS.as_secs()
        ),
    )
}

fn c8_epsilon_limit() -> Outcome {
    let p = regularized(64, 0.5);
    let r = match epsilon_sweep(&p, &ratio_profile(), &default_eps_list(), &SweepOptions::default()) {
        Ok(r) => r,
        Err(e) => return Err(e.to_string()),
    };
    let members: Vec<_> = r.successful().collect();
    let grad: Vec<f64> = members.iter().map(|m| m.eps_grad_rho).collect();
    let dr: Vec<f64> = r.cauchy.iter().map(|c| c.defect_rho).collect();
    let db: Vec<f64> = r.cauchy.iter().map(|c| c.defect_b).collect();
    check(
        members.len() == 5
            && r.cauchy.len() == 4
            && strictly_decreasing(&grad)
            && strictly_decreasing(&dr)
            && strictly_decreasing(&db),
        format!(
            "defects rho {}; b {}; |eps grad rho| {}",
            sci(&dr),
            sci(&db),
            sci(&grad)
        ),
    )
}

fn c9_delta_limit() -> Outcome {
    let p = regularized(64, 0.5);
    let values = default_delta_list();
    let r = match delta_sweep(&p, &ratio_profile(), &values, &SweepOptions::default()) {
        Ok(r) => r,
        Err(e) => return Err(e.to_string()),
    };
    let members: Vec<_> = r.successful().collect();
    let dp: Vec<f64> = members.iter().map(|m| m.delta_pressure_int).collect();
    let scaled = members.len() == values.len()
        && dp
            .iter()
            .zip(&values)
            .all(|(v, d)| *v <= DELTA_SCALING * d / values[0] * dp[0]);
    check(
        scaled && strictly_decreasing(&dp) && members.iter().all(|m| m.ratio_ok),
        format!(
            "int delta (rho+b)^Gamma {}; bound {DELTA_SCALING} delta/delta_max; envelopes ok {}",
            sci(&dp),
            members.iter().all(|m| m.ratio_ok)
        ),
    )
}

fn c10_residuals() -> Outcome {
    let mut rows = Vec::new();
    for n in [64usize, 128] {
        let p = regularized(n, 0.25);
        let g = Grid::new(p.lx, p.ly, p.nx, p.ny).unwrap();
        let (s0, _) = init_state(&g, &ratio_profile()).unwrap();
        let control = RunControl {
            frames: FrameSchedule::EverySteps(1),
            ..Default::default()
        };
        let run = simulate(&Solver::new(g.clone(), p.clone()), s0, &control, |_, _| {}).unwrap();
        let test = TestFunction::centered(&g, p.t_final);
        let traj = &run.trajectory;
        let row = [
            weak_residual(traj, &test, &p, Equation::Mass, None),
            weak_residual(traj, &test, &p, Equation::Magnetic, None),
            renormalized_residual(traj, &test, &p, Renormalization::Cutoff(1.0), Scalar::Rho, None),
            renormalized_residual(traj, &test, &p, Renormalization::Cutoff(1.0), Scalar::B, None),
        ];
        let row: Result<Vec<f64>, _> = row.into_iter().collect();
        rows.push(row.map_err(|e| e.to_string())?);
    }
    let factors: Vec<f64> = rows[0].iter().zip(&rows[1]).map(|(a, b)| a.abs() / b.abs()).collect();
    check(
        factors.iter().all(|f| *f >= RESIDUAL_FACTOR),
        format!(
            "64->128 reduction mass {:.2}, magnetic {:.2}, T_1(rho) {:.2}, T_1(b) {:.2} (min {RESIDUAL_FACTOR})",
            factors[0], factors[1], factors[2], factors[3]
        ),
    )
}

const DETERMINISM_CONFIG: &str = r#"
run_id = "acc"

[grid]
nx = 32
ny = 32

[time]
t_final = 0.1

[initial]
kind = "ratio_profile"
rho_amp = 0.1
ratio_lo = 0.5
ratio_hi = 2.0
swirl = 0.2

[output]
snapshot_interval = 20
"#;

fn c11_determinism() -> Outcome {
    let config_in = |dir: &std::path::Path| -> Config {
        let mut c = parse_config(DETERMINISM_CONFIG).unwrap();
        c.output.output_dir = dir.to_path_buf();
        c
    };
    let (d1, d2, d3) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    let (a, fa) = run_config(&config_in(d1.path())).map_err(|e| e.to_string())?;
    let (b, fb) = run_config(&config_in(d2.path())).map_err(|e| e.to_string())?;
    let repeat = a.final_state.bit_identical(&b.final_state)
        && std::fs::read(&fa.series_csv).unwrap() == std::fs::read(&fb.series_csv).unwrap();
    let series = read_timeseries_csv(&fa.series_csv).map_err(|e| e.to_string())?;
    let csv_exact = series.len() == a.series.len()
        && series.iter().zip(&a.series).all(|(x, y)| {
            x.values()
                .iter()
                .zip(y.values())
                .all(|(p, q)| p.to_bits() == q.to_bits())
        });
    let snap_exact = read_snapshot(&fa.final_snapshot)
        .map_err(|e| e.to_string())?
        .bit_identical(&a.final_state);
    let checkpoint = fa.snapshots.iter().find(|p| p.ends_with("acc_00000020.mhd2")).cloned();
    let resume = match checkpoint {
        Some(path) => {
            let mut c = config_in(d3.path());
            c.initial = InitialDataSpec::new(Profile::Snapshot { path });
            let (r, _) = run_config(&c).map_err(|e| e.to_string())?;
            r.final_state.bit_identical(&a.final_state) && r.steps() + 20 == a.steps()
        }
        None => false,
    };
    check(
        repeat && csv_exact && snap_exact && resume,
        format!("repeat {repeat}, csv round-trip {csv_exact}, snapshot round-trip {snap_exact}, resume at step 20 {resume} ({} steps)", a.steps()),
    )
}

fn c12_unit_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut sbp_worst = 0.0f64;
    for _ in 0..PROPERTY_CASES {
        let (nx, ny) = (rng.random_range(4..40), rng.random_range(4..40));
        let g = Grid::new(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), nx, ny).unwrap();
        let q = CellField::from_shape_fn(g.cell_shape(), |_| rng.random_range(-1.0..1.0));
        let mut f = g.face_zeros();
        f.ux.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        f.uy.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        f.clear_boundary_normal();
        let area = g.cell_area();
        let lhs = gradient_cc_to_face(&g, &q).dot(&f, area);
        let rhs = -(&q * &divergence_face_to_cc(&g, &f)).sum() * area;
        sbp_worst = sbp_worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    let mut bounds_worst = 0.0f64;
    for _ in 0..PROPERTY_CASES {
        let (nx, ny) = (rng.random_range(4..40), rng.random_range(4..40));
        let g = Grid::new(1.0, 1.0, nx, ny).unwrap();
        let mut psi = ndarray::Array2::<f64>::zeros((nx + 1, ny + 1));
        for i in 1..nx {
            for j in 1..ny {
                psi[[i, j]] = rng.random_range(-0.1..0.1);
            }
        }
        let u = g.curl_of_nodal_values(&psi);
        let q = CellField::from_shape_fn(g.cell_shape(), |_| rng.random_range(0.2..3.0));
        let (mx, my) = u.max_abs();
        let cfl = rng.random_range(0.05..1.0);
        let dt = cfl / (2.0 * (mx / g.hx + my / g.hy));
        let next = &q - &(upwind_scalar_flux_div(&g, &q, &u) * dt);
        let (lo, hi) = q
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let over = next
            .iter()
            .map(|v| (lo - v).max(v - hi))
            .fold(f64::NEG_INFINITY, f64::max);
        bounds_worst = bounds_worst.max(over);
    }
    check(
        sbp_worst <= SBP_TOL && bounds_worst <= BOUNDS_TOL,
        format!(
            "summation by parts worst {sbp_worst:.1e} (tol {SBP_TOL:.0e}); upwind bound overshoot {:.1e} over {PROPERTY_CASES} cases",
            bounds_worst.max(0.0)
        ),
    )
}

fn run_criterion(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{tag} {id:2} {name}: {detail}");
    ok
}

fn main() {
    let main = catch_unwind(main_run).ok();
    let needs_main = |f: fn(&MainRun) -> Outcome| {
        let m = main.as_ref();
        move || m.map_or_else(|| Err("main run failed".to_string()), f)
    };
    let results = [
        run_criterion(1, "conservation", needs_main(c1_conservation)),
        run_criterion(2, "maximum principle", needs_main(c2_maximum_principle)),
        run_criterion(3, "energy dissipation", c3_energy),
        run_criterion(4, "monotone convex functional", needs_main(c4_convex_functional)),
        run_criterion(5, "constant-state fixed point", c5_fixed_point),
        run_criterion(6, "heat-mode oracle", c6_heat_mode),
        run_criterion(7, "MMS order", c7_mms),
        run_criterion(8, "epsilon limit", c8_epsilon_limit),
        run_criterion(9, "delta limit", c9_delta_limit),
        run_criterion(10, "weak and renormalized residuals", c10_residuals),
        run_criterion(11, "determinism and round-trips", c11_determinism),
        run_criterion(12, "adjointness and upwind bounds", c12_unit_properties),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
