//! Acceptance suite: one pass/fail line per criterion, tolerances pinned here.
//!
//! Runs without the libtest harness so the lines are always printed; the
//! process exits non-zero if any criterion fails.

use std::time::Instant;

use qclick::stats::{ks_critical_one_sample, ks_critical_two_sample};
use qclick_cli::scenarios::{self, CheckContext, CheckReport};

const EXP_MEAN_TOL: f64 = 0.03;
const EXP_KS_ALPHA: f64 = 0.01;
const JUMP_TIME_TOL: f64 = 1e-6;
const TRACE_DISTANCE_TOL: f64 = 0.05;
const TRACE_DEFECT_TOL: f64 = 1e-8;
const FACTORIZATION_TOL: f64 = 1e-6;
const INTENSITY_TOL: f64 = 1e-8;
const EQUIVALENCE_KS_ALPHA: f64 = 0.05;
const POSITIVITY_REL_TOL: f64 = 1e-12;
const HERMITICITY_TOL: f64 = 1e-10;
const SIMPLEX_TOL: f64 = 1e-12;
const SYMMETRY_SIGMAS: f64 = 3.0;
const SLOPE_TARGET: f64 = 2.0;
const SLOPE_TOL: f64 = 0.1;

fn run(name: &str) -> CheckReport {
    scenarios::find(name)
        .unwrap_or_else(|| panic!("scenario {name} is missing"))
        .run(&CheckContext::default())
        .unwrap_or_else(|e| panic!("scenario {name} errored: {e}"))
}

/// `(passed, detail)` for one criterion.
type Verdict = (bool, String);

fn exp_law(name: &str) -> Verdict {
    let r = run(name);
    let (n, mean, ks) = (r.value("n"), r.value("mean"), r.value("ks"));
    let crit = ks_critical_one_sample(n as usize, EXP_KS_ALPHA);
    (
        n >= 1e4 && (mean - 1.0).abs() < EXP_MEAN_TOL && ks < crit,
        format!("n={n} mean={mean:.4} ks={ks:.4} (crit {crit:.4})"),
    )
}

fn criterion_1() -> Verdict {
    exp_law("exp-law-nonrel")
}

fn criterion_2() -> Verdict {
    let r = run("jump-time-ln2");
    let err = (r.value("tau") - std::f64::consts::LN_2).abs();
    (
        r.value("clicked") == 1.0 && err < JUMP_TIME_TOL,
        format!("tau={:.9} |tau - ln2|={err:.2e}", r.value("tau")),
    )
}

fn criterion_3() -> Verdict {
    let r = run("ensemble-vs-liouville");
    let d: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|t| r.value(&format!("distance@{t}"))).collect();
    (
        r.value("n") >= 5e3 && d.iter().all(|x| *x < TRACE_DISTANCE_TOL),
        format!("n={} trace distances {:.4} {:.4} {:.4}", r.value("n"), d[0], d[1], d[2]),
    )
}

fn criterion_4() -> Verdict {
    let r = run("liouville-trace");
    let d = r.value("max_trace_defect");
    (
        d < TRACE_DEFECT_TOL,
        format!("max defect {d:.2e} over {} steps", r.value("steps")),
    )
}

fn criterion_5() -> Verdict {
    let r = run("propertime-factorization");
    let d = r.value("max_deviation");
    (d < FACTORIZATION_TOL, format!("max deviation {d:.2e}"))
}

fn criterion_6() -> Verdict {
    let r = run("propertime-vs-nonrel");
    let n = r.value("n") as usize;
    let crit = ks_critical_two_sample(n, n, EQUIVALENCE_KS_ALPHA);
    let (dev, ks) = (r.value("intensity_deviation"), r.value("ks"));
    (
        n >= 10_000 && dev < INTENSITY_TOL && ks < crit,
        format!("n={n} intensity dev {dev:.2e} ks={ks:.4} (crit {crit:.4})"),
    )
}

fn criterion_7() -> Verdict {
    let r = run("rel-positivity");
    let (min, rel) = (r.value("min_expectation"), r.value("max_relative_deviation"));
    (
        r.value("samples") >= 1e3 && min >= 0.0 && rel < POSITIVITY_REL_TOL,
        format!("min {min:.3e} max rel dev {rel:.2e}"),
    )
}

fn criterion_8() -> Verdict {
    let r = run("rel-hermiticity");
    let (a, b) = (r.value("defect_d"), r.value("defect_d2"));
    (
        a < HERMITICITY_TOL && b < HERMITICITY_TOL,
        format!("D {a:.2e}  D^2 {b:.2e}"),
    )
}

fn criterion_9() -> Verdict {
    let r = run("gamma-algebra");
    let e = r.value("max_entry_error");
    (e == 0.0, format!("max entry error {e:e}"))
}

fn criterion_10() -> Verdict {
    exp_law("exp-law-rel")
}

fn mirror(name: &str) -> (bool, String) {
    let r = run(name);
    let n = r.value("first_clicks");
    let frac = r.value("left_fraction");
    let simplex = r.value("max_simplex_defect");
    let bound = SYMMETRY_SIGMAS * 0.5 / n.sqrt();
    (
        n >= 1e4 && simplex <= SIMPLEX_TOL && (frac - 0.5).abs() < bound,
        format!("{name}: n={n} left={frac:.4} (+-{bound:.4}) simplex {simplex:.1e}"),
    )
}

fn criterion_11() -> Verdict {
    let (a, da) = mirror("mirror-detectors-nonrel");
    let (b, db) = mirror("mirror-detectors-rel");
    (a && b, format!("{da}; {db}"))
}

fn criterion_12() -> Verdict {
    let r = run("determinism");
    let diff = r.value("differing_bytes");
    (
        r.value("bytes") > 0.0 && diff == 0.0,
        format!("{} bytes, {diff} differing", r.value("bytes")),
    )
}

fn criterion_13() -> Verdict {
    let r = run("backend-refinement");
    let s = r.value("slope");
    (
        (s - SLOPE_TARGET).abs() < SLOPE_TOL,
        format!("slope {s:.4}"),
    )
}

fn main() {
    let criteria: [(u8, &str, fn() -> Verdict); 13] = [
        (1, "exponential click law (nonrel)", criterion_1),
        (2, "jump time ln 2", criterion_2),
        (3, "ensemble vs master equation", criterion_3),
        (4, "trace conservation", criterion_4),
        (5, "proper-time factorization", criterion_5),
        (6, "proper-time / coordinate-time equivalence", criterion_6),
        (7, "relativistic positivity identity", criterion_7),
        (8, "indefinite Hermiticity", criterion_8),
        (9, "gamma algebra", criterion_9),
        (10, "exponential click law (relativistic)", criterion_10),
        (11, "multi-detector simplex and symmetry", criterion_11),
        (12, "determinism across thread counts", criterion_12),
        (13, "cross-backend refinement", criterion_13),
    ];
    let mut failed = 0;
    for (id, title, check) in criteria {
        let start = Instant::now();
        let (ok, detail) = check();
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {verdict} {title}: {detail} [{:.1} s]",
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", 13 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
