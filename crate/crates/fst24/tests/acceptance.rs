//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::process::ExitCode;

use fst24::suite::{self, Check};
use fst24_core::optim::EXTENDED_CANDIDATES;
use fst24_core::trainer::TrainConfig;

fn report(n: usize, check: &Check) -> bool {
    println!(
        "{} criterion {n}: {}",
        if check.passed { "PASS" } else { "FAIL" },
        strip(check)
    );
    check.passed
}

fn strip(check: &Check) -> String {
    let line = check.line();
    line.split_once(' ').map_or(line.clone(), |(_, rest)| rest.to_string())
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= report(1, &suite::pattern_table());
    let [equal, bounds] = suite::search_corpus(1000);
    ok &= report(2, &equal);
    ok &= report(3, &bounds);
    ok &= report(4, &suite::mvue_unbiased(10_000, 100_000));
    ok &= report(5, &suite::spmm_exact(500));
    ok &= report(6, &suite::layout_table());
    ok &= report(7, &suite::gradient_checks());

    let decay = suite::decay_modes();

    let base = TrainConfig::default();
    let study: Result<Vec<_>, _> = (0..5)
        .map(|s| suite::study_seed(&base, s, &EXTENDED_CANDIDATES))
        .collect();
    match study {
        Ok(study) => {
            ok &= report(8, &suite::flip_dynamics(&study));
            ok &= report(9, &decay);
            ok &= report(10, &suite::schedule_comparison(&study));
            ok &= report(11, &suite::end_to_end(&study));
        }
        Err(e) => {
            println!("FAIL criterion 8: training failed: {e:#}");
            report(9, &decay);
            for n in [10, 11] {
                println!("FAIL criterion {n}: training failed: {e:#}");
            }
            ok = false;
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
