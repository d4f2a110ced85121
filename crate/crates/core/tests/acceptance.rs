//! The twelve acceptance criteria at full scale. Each test prints its
//! PASS/FAIL line directly to stdout so it appears even when output is
//! captured.

use std::io::Write;

use spinsys_core::verify::{self, CriterionOutcome, SuiteOptions};

fn report(outcome: CriterionOutcome) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{outcome}").unwrap();
    out.flush().unwrap();
    assert!(outcome.passed, "{outcome}");
}

macro_rules! criterion {
    ($test:ident, $run:path) => {
        #[test]
        fn $test() {
            report($run(&SuiteOptions::default()));
        }
    };
}

criterion!(criterion_01_oracle_equivalence, verify::oracle_equivalence);
criterion!(
    criterion_02_coupling_containment,
    verify::coupling_containment
);
criterion!(
    criterion_03_two_config_discrepancy,
    verify::two_config_discrepancy
);
criterion!(criterion_04_duality, verify::duality);
criterion!(criterion_05_growth_bound, verify::growth_bound);
criterion!(criterion_06_monotone_coupling, verify::monotone_coupling);
criterion!(criterion_07_generator_limit, verify::generator_limit);
criterion!(criterion_08_integral_identity, verify::integral_identity);
criterion!(criterion_09_norm_growth, verify::norm_growth);
criterion!(criterion_10_invariance, verify::invariance);
criterion!(
    criterion_11_influence_correctness,
    verify::influence_correctness
);
criterion!(
    criterion_12_limit_stabilization,
    verify::limit_stabilization
);
