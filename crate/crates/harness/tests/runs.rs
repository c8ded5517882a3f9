use cotransport_core::config::SimConfig;
use cotransport_harness::experiments::{exp1_trial, run_exp1, run_study};
use cotransport_harness::properties::{check_scenario, random_scenario};
use cotransport_harness::report::{csv_string, COLUMNS};
use proptest::prelude::*;

#[test]
fn csv_has_one_row_per_record_and_a_stable_header() {
    let out = run_exp1(&SimConfig::default(), 2, 5).unwrap();
    let text = csv_string(&out.records).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .unwrap()
        .iter()
        .map(str::to_owned)
        .collect();
    assert_eq!(header, COLUMNS);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][2], "5");
    assert_eq!(&rows[1][2], "6");
    assert!(rows.iter().all(|r| &r[4] == "true"));
}

#[test]
fn a_trial_does_not_depend_on_its_neighbours() {
    let cfg = SimConfig::default();
    let batch = run_exp1(&cfg, 3, 11).unwrap();
    let alone = exp1_trial(&cfg, 2, 13).unwrap();
    assert_eq!(
        csv_string(&batch.records[2..]).unwrap(),
        csv_string(&alone.records).unwrap()
    );
}

#[test]
fn study_counts_come_from_the_audit_log() {
    let out = run_study(&SimConfig::default(), 2, 3).unwrap();
    assert!(out.ok(), "{:?}", out.failures);
    for r in &out.records {
        match r.experiment {
            "study_combined" => assert_eq!(r.interactions, 1),
            "study_robot_only" => assert!(r.interactions >= 8),
            other => panic!("unexpected label {other}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_scenarios_keep_every_invariant(seed in 10_000u64..1_000_000) {
        let spec = random_scenario(seed);
        let report = check_scenario(&SimConfig::default(), &spec)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(report.completed, "scenario {seed} ran out of budget");
    }
}
