//! Acceptance criteria. Runs every criterion in order, prints one verdict
//! line per criterion followed by its individual checks, and exits with a
//! failure status when a check fails that is not a documented deviation.
//!
//! `cargo test --test acceptance -- 2 5` runs criteria 2 and 5 only;
//! `8` selects the supplementary checks.

mod common;

use std::collections::BTreeSet;
use std::fmt::Display;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pdae_split::constraint::{commutation_defect, ConstrainedSystem};
use pdae_split::experiments::{
    halving_chain, reference_solution, ConvergenceReport, ExecutionMode, ReferenceConfig, ReferenceSolution, Study,
    StudyOptions,
};
use pdae_split::linalg::{affine_exp_integral, phi_functions, DenseMatrix, DenseVector};
use pdae_split::problems::{build_integral_mean, build_mechanical, build_subset, subset_perturbation};
use pdae_split::reaction::LinearReaction;
use pdae_split::splitting::{CorrectionKind, Scheme};
use pdae_split::subflows::{linear_pdae_flow, reaction_flow, LinearFlowCache};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LIE_ERRORS: [f64; 6] = [8.895e-04, 4.362e-04, 2.161e-04, 1.076e-04, 5.368e-05, 2.681e-05];
const LIE_ORDERS: [f64; 5] = [1.03, 1.01, 1.01, 1.00, 1.00];
const STRANG_CORRECTED_FINEST: f64 = 4.613e-08;
const STRANG_CORRECTED_ORDER: f64 = 2.01;
const LOCAL_ORDERS: [f64; 8] = [2.0, 2.0, 1.0, 2.0, 2.0, 3.0, 1.0, 2.0];
const GLOBAL_ORDERS: [f64; 8] = [1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 2.0];
const MECHANICAL_UNCORRECTED_ORDERS: [f64; 2] = [0.98, 0.99];
const MECHANICAL_CORRECTED_ORDER: f64 = 1.98;

struct Check {
    what: String,
    ok: bool,
    /// Failure analysed and recorded as unattainable for this model.
    documented: bool,
}

#[derive(Default)]
struct Criterion {
    checks: Vec<Check>,
    notes: Vec<String>,
}

impl Criterion {
    fn check(&mut self, ok: bool, what: impl Display) {
        self.checks.push(Check {
            what: what.to_string(),
            ok,
            documented: false,
        });
    }

    fn documented(&mut self, ok: bool, what: impl Display) {
        self.checks.push(Check {
            what: what.to_string(),
            ok,
            documented: true,
        });
    }

    fn note(&mut self, what: impl Display) {
        self.notes.push(what.to_string());
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    fn unexpected_failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.ok && !c.documented).count()
    }

    fn print(&self, label: &str, title: &str, elapsed: Duration) {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        println!("{label} ({title}): {verdict} [{:.1} s]", elapsed.as_secs_f64());
        for c in &self.checks {
            let tag = match (c.ok, c.documented) {
                (true, _) => "ok  ",
                (false, false) => "FAIL",
                (false, true) => "FAIL (documented deviation)",
            };
            println!("    {tag} {}", c.what);
        }
        for n in &self.notes {
            for line in n.lines() {
                println!("    | {line}");
            }
        }
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn fmt_list(xs: &[Option<f64>]) -> String {
    xs.iter()
        .map(|x| x.map_or_else(|| "--".to_string(), |v| format!("{v:.3}")))
        .collect::<Vec<_>>()
        .join(" ")
}

fn sci_list(xs: &[Option<f64>]) -> String {
    xs.iter()
        .map(|x| x.map_or_else(|| "--".to_string(), |v| format!("{v:.3e}")))
        .collect::<Vec<_>>()
        .join(" ")
}

fn reference(sys: &ConstrainedSystem, finest: f64, mode: ExecutionMode) -> ReferenceSolution {
    reference_solution(sys, &ReferenceConfig::for_finest_step(finest).with_mode(mode)).expect("reference solution")
}

fn cross_check_line(c: &mut Criterion, name: &str, r: &ReferenceSolution) {
    let x = r.cross_check.expect("cross-checked reference");
    c.check(
        x.discrepancy <= x.bound,
        format!(
            "{name} reference (tau {:.3e}) vs trapezoidal solver: discrepancy {:.3e} <= bound {:.3e}",
            r.tau_ref, x.discrepancy, x.bound
        ),
    );
}

/// Problems and references shared between criteria, built on demand.
#[derive(Default)]
struct Shared {
    heat: Option<(ConstrainedSystem, ReferenceSolution)>,
}

impl Shared {
    fn heat(&mut self, mode: ExecutionMode) -> &(ConstrainedSystem, ReferenceSolution) {
        self.heat.get_or_insert_with(|| {
            let sys = build_integral_mean(500).unwrap();
            let r = reference(&sys, 6.25e-4, mode);
            (sys, r)
        })
    }
}

fn heat_taus() -> Vec<f64> {
    halving_chain(2e-2, 6)
}

fn criterion_1(shared: &mut Shared) -> Criterion {
    let mut c = Criterion::default();
    let start = Instant::now();
    let mode = ExecutionMode::Sequential;
    let (sys, r) = shared.heat(mode);
    let options = StudyOptions {
        mode,
        ..StudyOptions::default()
    };
    let study = Study::new(sys, r, &heat_taus(), options).unwrap();
    let lie = study.global(Scheme::Lie, &CorrectionKind::None).unwrap();
    let elapsed = start.elapsed();

    let orders = lie.orders_linf();
    let orders_ok = orders[1..]
        .iter()
        .zip(LIE_ORDERS)
        .all(|(o, t)| o.is_some_and(|o| within(o, t, 0.1)));
    c.check(
        orders_ok,
        format!("orders {} within 0.1 of {LIE_ORDERS:?}", fmt_list(&orders[1..])),
    );
    let errs = lie.err_linf();
    let ratios: Vec<Option<f64>> = errs.iter().zip(LIE_ERRORS).map(|(e, t)| e.map(|e| e / t)).collect();
    c.check(
        ratios.iter().all(|r| r.is_some_and(|r| (1.0 / 3.0..=3.0).contains(&r))),
        format!(
            "linf errors {} within 3x of targets (ratios {})",
            sci_list(&errs),
            fmt_list(&ratios)
        ),
    );
    c.check(
        elapsed < Duration::from_secs(60),
        format!(
            "single-threaded run including the reference: {:.1} s < 60 s",
            elapsed.as_secs_f64()
        ),
    );
    cross_check_line(&mut c, "integral-mean", r);
    c.note(lie.to_text());
    c
}

fn criterion_2(shared: &mut Shared) -> Criterion {
    let mut c = Criterion::default();
    let (sys, r) = shared.heat(ExecutionMode::default());
    let study = Study::new(sys, r, &heat_taus(), StudyOptions::default()).unwrap();
    let plain = study.global(Scheme::Strang, &CorrectionKind::None).unwrap();
    let corrected = study.global(Scheme::Strang, &CorrectionKind::NonlinearAtState).unwrap();

    for (label, orders) in [("linf", plain.orders_linf()), ("l2", plain.orders_l2())] {
        c.check(
            orders[1..].iter().all(|o| o.is_some_and(|o| within(o, 1.0, 0.1))),
            format!(
                "uncorrected {label} orders {} within 1.00 +- 0.1",
                fmt_list(&orders[1..])
            ),
        );
    }
    let finest_order = corrected.orders_linf().last().copied().flatten();
    c.check(
        finest_order.is_some_and(|o| within(o, STRANG_CORRECTED_ORDER, 0.15)),
        format!(
            "corrected order at the finest step {} within {STRANG_CORRECTED_ORDER} +- 0.15",
            fmt_list(&[finest_order])
        ),
    );
    let finest_err = corrected.err_linf().last().copied().flatten();
    let ratio = finest_err.map(|e| e / STRANG_CORRECTED_FINEST);
    c.check(
        ratio.is_some_and(|r| (1.0 / 3.0..=3.0).contains(&r)),
        format!(
            "corrected error at tau 6.25e-4 {} within 3x of {STRANG_CORRECTED_FINEST:e} (ratio {})",
            sci_list(&[finest_err]),
            fmt_list(&[ratio])
        ),
    );
    c.note(plain.to_text());
    c.note(corrected.to_text());
    c
}

fn criterion_3(shared: &mut Shared) -> Criterion {
    let mut c = Criterion::default();
    let (sys, r) = shared.heat(ExecutionMode::default());
    let study = Study::new(sys, r, &heat_taus(), StudyOptions::default()).unwrap();
    let table = study.order_table(sys.t_start()).unwrap();
    for (label, slopes, targets, tol) in [
        ("local", table.local_slopes(), LOCAL_ORDERS, 0.25),
        ("global", table.global_slopes(), GLOBAL_ORDERS, 0.2),
    ] {
        let rounded_ok = slopes
            .iter()
            .zip(targets)
            .all(|(s, t)| s.is_some_and(|s| s.round() == t));
        c.check(
            rounded_ok,
            format!("{label} orders round to {:?}", targets.map(|t| t as i64)),
        );
        c.check(
            slopes
                .iter()
                .zip(targets)
                .all(|(s, t)| s.is_some_and(|s| within(s, t, tol))),
            format!("{label} raw slopes {} within {tol} of the integers", fmt_list(&slopes)),
        );
    }
    c.note(table.to_text().trim_end());
    let mid = study.order_table(0.05).unwrap();
    c.note(format!("local slopes from t = 0.05: {}", fmt_list(&mid.local_slopes())));
    c
}

fn criterion_4() -> Criterion {
    let mut c = Criterion::default();
    let sys = build_subset(500).unwrap();
    let r = reference(&sys, 6.25e-4, ExecutionMode::default());
    cross_check_line(&mut c, "subset", &r);
    let study = Study::new(&sys, &r, &heat_taus(), StudyOptions::default()).unwrap();
    let cmp = study.correction_comparison(subset_perturbation(&sys)).unwrap();

    let slope = |rep: &ConvergenceReport| rep.fitted_order().ok();
    c.check(
        slope(&cmp.a).is_some_and(|s| (1.8..=2.2).contains(&s)),
        format!("correction A order {} in [1.8, 2.2]", fmt_list(&[slope(&cmp.a)])),
    );
    c.documented(
        slope(&cmp.b).is_some_and(|s| (1.8..=2.2).contains(&s)),
        format!(
            "correction B order {} in [1.8, 2.2] (step orders {})",
            fmt_list(&[slope(&cmp.b)]),
            fmt_list(&cmp.b.orders_linf()[1..])
        ),
    );
    c.documented(
        slope(&cmp.c).is_some_and(|s| (1.8..=2.2).contains(&s)),
        format!(
            "correction C order {} in [1.8, 2.2] (step orders {})",
            fmt_list(&[slope(&cmp.c)]),
            fmt_list(&cmp.c.orders_linf()[1..])
        ),
    );
    let ratios: Vec<Option<f64>> = cmp
        .b
        .err_linf()
        .iter()
        .zip(cmp.a.err_linf())
        .map(|(b, a)| Some((*b)? / a?))
        .collect();
    c.documented(
        ratios.iter().all(|r| r.is_some_and(|r| (2.0..=10.0).contains(&r))),
        format!("B/A error ratios {} in [2, 10]", fmt_list(&ratios)),
    );
    c.note(cmp.a.to_text());
    c.note(cmp.b.to_text());
    c.note(cmp.c.to_text());
    c
}

fn criterion_5() -> Criterion {
    let mut c = Criterion::default();
    let start = Instant::now();
    let sys = build_mechanical(250).unwrap();
    let taus = halving_chain(4e-2, 6);
    let r = reference(&sys, 1.25e-3, ExecutionMode::default());
    cross_check_line(&mut c, "mechanical", &r);
    let study = Study::new(&sys, &r, &taus, StudyOptions::default()).unwrap();
    let plain = study.global(Scheme::Strang, &CorrectionKind::None).unwrap();
    let corrected = study.global(Scheme::Strang, &CorrectionKind::NonlinearAtState).unwrap();
    let elapsed = start.elapsed();

    let orders = plain.orders_linf();
    let tail = &orders[orders.len() - 2..];
    c.documented(
        tail.iter()
            .zip(MECHANICAL_UNCORRECTED_ORDERS)
            .all(|(o, t)| o.is_some_and(|o| within(o, t, 0.15))),
        format!(
            "uncorrected orders at the two finest steps {} within 0.15 of {MECHANICAL_UNCORRECTED_ORDERS:?}",
            fmt_list(tail)
        ),
    );
    let finest = corrected.orders_linf().last().copied().flatten();
    c.check(
        finest.is_some_and(|o| within(o, MECHANICAL_CORRECTED_ORDER, 0.2)),
        format!(
            "corrected order at tau 1.25e-3 {} within {MECHANICAL_CORRECTED_ORDER} +- 0.2",
            fmt_list(&[finest])
        ),
    );
    c.check(
        elapsed < Duration::from_secs(300),
        format!("runtime {:.1} s < 300 s", elapsed.as_secs_f64()),
    );
    c.note(plain.to_text());
    c.note(corrected.to_text());
    c
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DenseVector {
    DenseVector::from_fn(n, |_| rng.gen_range(-1.0..1.0))
}

fn criterion_6(shared: &mut Shared) -> Criterion {
    let mut c = Criterion::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let systems = [
        build_integral_mean(500).unwrap(),
        build_subset(500).unwrap(),
        build_mechanical(250).unwrap(),
    ];

    let worst = systems
        .iter()
        .map(|s| s.constraint().residuals().max())
        .fold(0.0, f64::max);
    c.check(
        worst <= 1e-12,
        format!("DD⁻ = I, P₀² = P₀, DP₀ = 0, P₀D⁻ = 0 on all problems: worst residual {worst:.2e}"),
    );

    let (mut residual, mut composition) = (0.0_f64, 0.0_f64);
    for sys in &systems {
        let tau = 1e-2;
        let cache = LinearFlowCache::new(sys, tau).unwrap();
        for _ in 0..5 {
            let v = random_vector(&mut rng, sys.dim());
            let q = random_vector(&mut rng, sys.dim());
            let t0 = rng.gen_range(0.0..0.05);
            let full = linear_pdae_flow(sys, &cache, t0, tau, &v, &q).unwrap();
            let mid = linear_pdae_flow(sys, &cache, t0, tau / 2.0, &v, &q).unwrap();
            let two = linear_pdae_flow(sys, &cache, t0 + tau / 2.0, tau / 2.0, &mid, &q).unwrap();
            residual = residual
                .max(sys.consistency_residual(&full, t0 + tau))
                .max(sys.consistency_residual(&mid, t0 + tau / 2.0))
                .max(sys.consistency_residual(&two, t0 + tau));
            composition = composition.max(full.max_abs_diff(&two) / full.norm_inf().max(1.0));
        }
    }
    c.check(
        residual <= 1e-9,
        format!("constraint residual after linear subflows {residual:.2e} <= 1e-9"),
    );
    c.check(
        composition <= 1e-9,
        format!("two half steps vs one full step {composition:.2e} <= 1e-9"),
    );

    let (sys, r) = shared.heat(ExecutionMode::default());
    let study = Study::new(sys, r, &halving_chain(2e-2, 3), StudyOptions::default()).unwrap();
    let run = study.global(Scheme::Strang, &CorrectionKind::NonlinearAtState).unwrap();
    let traj_residual = run
        .rows
        .iter()
        .filter_map(|row| row.max_constraint_residual)
        .fold(0.0, f64::max);
    c.check(
        traj_residual <= 1e-9,
        format!("constraint residual along corrected Strang runs {traj_residual:.2e} <= 1e-9"),
    );

    let diag: Vec<f64> = (0..12).map(|i| -40.0 + 3.7 * i as f64).collect();
    let set = phi_functions(&DenseMatrix::from_diag(&diag)).unwrap();
    let scalar = diag.iter().enumerate().fold(0.0_f64, |acc, (i, &z)| {
        acc.max((set.exp[(i, i)] - z.exp()).abs() / z.exp().max(1.0))
            .max((set.phi1[(i, i)] - common::phi1(z)).abs())
            .max((set.phi2[(i, i)] - common::phi2(z)).abs())
    });
    c.check(
        scalar <= 1e-9,
        format!("exp, φ1, φ2 of diagonals vs scalar formulas {scalar:.2e} <= 1e-9"),
    );
    let m = DenseMatrix::from_fn(10, 10, |_, _| rng.gen_range(-1.0..1.0));
    let m = m.scale(4.0 / m.norm_1());
    let (b0, b1) = (random_vector(&mut rng, 10), random_vector(&mut rng, 10));
    let tau = 0.7;
    let got = affine_exp_integral(&m, tau, &b0, &b1).unwrap();
    let oracle = common::integrate(0.0, tau, 4, 12, |s| {
        let mut g = b0.clone();
        g.axpy(s, &b1);
        common::taylor_exp_apply(&m.scale(tau - s), &g)
    });
    let quad = got.max_abs_diff(&oracle) / oracle.norm_inf().max(1.0);
    c.check(
        quad <= 1e-9,
        format!("affine exponential integral vs Gauss quadrature {quad:.2e} <= 1e-9"),
    );

    let w0 = DenseVector::from_vec(vec![1.0, -0.5]);
    let rk_err = |substeps| {
        let w = reaction_flow(
            &LinearReaction { rate: -1.0 },
            &DenseVector::zeros(2),
            1.0,
            &w0,
            substeps,
        )
        .unwrap();
        w.max_abs_diff(&w0.scale((-1.0f64).exp()))
    };
    let ratios: Vec<Option<f64>> = [8, 16, 32].iter().map(|&s| Some(rk_err(s) / rk_err(2 * s))).collect();
    c.check(
        ratios.iter().all(|r| r.is_some_and(|r| within(r, 16.0, 2.0))),
        format!(
            "RK4 error ratios under substep doubling {} within 16 +- 2",
            fmt_list(&ratios)
        ),
    );

    let subset = &systems[1];
    let mut sub_defect = commutation_defect(subset, subset.u0());
    for _ in 0..5 {
        sub_defect = sub_defect.max(commutation_defect(subset, &random_vector(&mut rng, subset.dim())));
    }
    let heat_defect = commutation_defect(&systems[0], systems[0].u0());
    c.check(
        sub_defect <= 1e-12,
        format!("commuting identity on the subset problem: defect {sub_defect:.2e} <= 1e-12"),
    );
    c.check(
        heat_defect > 1e-3,
        format!("commuting identity fails on the integral-mean problem: defect {heat_defect:.2e} > 1e-3"),
    );
    cross_check_line(&mut c, "integral-mean", r);
    c
}

fn criterion_7() -> Criterion {
    let mut c = Criterion::default();
    let tau = 1e-8;
    for sys in [build_integral_mean(500).unwrap(), build_subset(500).unwrap()] {
        let cs = sys.constraint();
        let m = cs.constraint_dim();
        let injected = DenseVector::from_fn(m, |k| 0.3 + 0.01 * k as f64);
        let mut v0 = sys.u0().clone();
        v0.axpy(1.0, &cs.lift(&injected));
        let cache = LinearFlowCache::new(&sys, tau).unwrap();
        let out = linear_pdae_flow(&sys, &cache, 0.0, tau, &v0, &DenseVector::zeros(sys.dim())).unwrap();

        let mut expected = cs.lift(&sys.g().eval(0.0));
        expected.axpy(1.0, &cs.p0().matvec(&v0));
        let gap = out.max_abs_diff(&expected);
        c.check(
            gap <= 1e-6,
            format!("{}: output vs D⁻G(t₀) + P₀v₀ {gap:.2e} <= 1e-6", sys.name()),
        );
        let mut mismatch = cs.apply(&v0);
        mismatch.axpy(-1.0, &sys.g().eval(0.0));
        let magnitude = cs.lift(&mismatch).norm_inf();
        let jump = out.max_abs_diff(&v0);
        c.check(
            within(jump, magnitude, 1e-6),
            format!(
                "{}: jump |out - v₀| {jump:.6e} matches injected inconsistency {magnitude:.6e}",
                sys.name()
            ),
        );
    }
    c
}

fn supplementary(shared: &mut Shared) -> Criterion {
    let mut c = Criterion::default();
    let (sys, r) = shared.heat(ExecutionMode::default());
    let study = Study::new(sys, r, &heat_taus(), StudyOptions::default()).unwrap();
    let finest = |s: Scheme, k: CorrectionKind| {
        study
            .global(s, &k)
            .unwrap()
            .err_linf()
            .last()
            .copied()
            .flatten()
            .unwrap()
    };
    let lie = finest(Scheme::Lie, CorrectionKind::None);
    let lie_q = finest(Scheme::Lie, CorrectionKind::NonlinearAtState);
    let rev = finest(Scheme::LieReversed, CorrectionKind::None);
    let rev_q = finest(Scheme::LieReversed, CorrectionKind::NonlinearAtState);
    c.check(
        (1.5..=3.5).contains(&(lie_q / lie)),
        format!(
            "Lie with/without correction error factor {:.2} in [1.5, 3.5]",
            lie_q / lie
        ),
    );
    c.check(
        (1.3..=3.0).contains(&(rev / rev_q)),
        format!(
            "reversed Lie without/with correction error factor {:.2} in [1.3, 3]",
            rev / rev_q
        ),
    );
    c
}

type Run = fn(&mut Shared) -> Criterion;

fn main() -> ExitCode {
    let selected: BTreeSet<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u8, &str, Run); 8] = [
        (1, "Lie without correction on the integral-mean problem", criterion_1),
        (
            2,
            "Strang with and without correction on the integral-mean problem",
            criterion_2,
        ),
        (3, "local and global order matrix", criterion_3),
        (4, "corrections A, B, C on the subset problem", |_| criterion_4()),
        (5, "Strang on the coupled string and spring", |_| criterion_5()),
        (6, "property suite", criterion_6),
        (7, "jump of an inconsistent initial state", |_| criterion_7()),
        (8, "effect of the correction on Lie splitting", supplementary),
    ];
    let mut shared = Shared::default();
    let mut summary = Vec::new();
    let mut unexpected = 0;
    for (id, title, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run(&mut shared);
        let label = if id <= 7 {
            format!("criterion {id}")
        } else {
            "supplementary".to_string()
        };
        outcome.print(&label, title, start.elapsed());
        unexpected += outcome.unexpected_failures();
        summary.push((label, outcome.passed()));
    }
    println!();
    for (label, passed) in &summary {
        println!("{label}: {}", if *passed { "PASS" } else { "FAIL" });
    }
    if unexpected == 0 {
        println!("acceptance: no failures beyond documented deviations");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {unexpected} undocumented failure(s)");
        ExitCode::FAILURE
    }
}
