//! Hand-simulated oracle fixtures: small static topologies whose full
//! message transcripts were worked out by hand and checked in. Any drift in
//! engine or protocol semantics shows up as a byte diff here.

use dissem::adversary::ObliviousTrace;
use dissem::config::RunConfig;
use dissem::engine::{run, ExecutionReport, Placement, RunSetup};
use dissem::graph::DynamicGraphTrace;
use dissem::protocol::{Flooding, MultiSource, Protocol, SingleSource};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("tests/fixtures/{name}")).unwrap()
}

fn run_on_trace(
    protocol: &mut dyn Protocol,
    trace_file: &str,
    placement: &Placement,
) -> (ExecutionReport, String) {
    let trace = DynamicGraphTrace::parse(&fixture(trace_file)).unwrap();
    let n = trace.n();
    let mut adversary = ObliviousTrace::new(trace);
    let mut log = String::new();
    let report = run(RunSetup {
        protocol,
        adversary: &mut adversary,
        n,
        placement,
        horizon: 100,
        seed: 1,
        sigma: 3,
        event_log: Some(&mut log),
    })
    .unwrap();
    (report, log)
}

#[test]
fn single_source_path_transcript() {
    let placement = Placement::single(0, 1);
    let mut protocol = SingleSource::new(3, 1, 0);
    let (report, log) = run_on_trace(&mut protocol, "path.trace", &placement);
    assert_eq!(log, fixture("path.events"));
    assert_eq!(report.completion_round, Some(6));
    assert_eq!(report.total_messages(), 7);
    // 2 Token, 2 Request, 3 Completeness.
    assert_eq!(report.ledger.totals, [2, 2, 3, 0, 0]);
    assert_eq!(report.tc, 2);
}

#[test]
fn single_source_star_transcript() {
    let placement = Placement::single(0, 1);
    let mut protocol = SingleSource::new(4, 1, 0);
    let (report, log) = run_on_trace(&mut protocol, "star.trace", &placement);
    assert_eq!(log, fixture("star.events"));
    assert_eq!(report.completion_round, Some(3));
    assert_eq!(report.total_messages(), 9);
    assert_eq!(report.ledger.per_round[0], [0, 0, 3, 0, 0]);
    assert_eq!(report.ledger.per_round[1], [0, 3, 0, 0, 0]);
    assert_eq!(report.ledger.per_round[2], [3, 0, 0, 0, 0]);
}

#[test]
fn flooding_triangle_transcript() {
    let placement = Placement::single(0, 1);
    let mut protocol = Flooding::new(3, &placement);
    let (report, log) = run_on_trace(&mut protocol, "triangle.trace", &placement);
    assert_eq!(log, fixture("triangle.events"));
    assert_eq!(report.total_messages(), 9);
    assert!(report.completion_round.unwrap() <= 2);
}

#[test]
fn multi_source_with_one_source_reduces_to_single_source() {
    let placement = Placement::single(0, 1);
    let mut single = SingleSource::new(3, 1, 0);
    let (single_report, single_log) = run_on_trace(&mut single, "path.trace", &placement);
    let mut multi = MultiSource::new(3, &placement.sources().unwrap());
    let (multi_report, multi_log) = run_on_trace(&mut multi, "path.trace", &placement);
    assert_eq!(multi_log, single_log);
    assert_eq!(multi_report.ledger.totals, single_report.ledger.totals);
    assert_eq!(multi_report.completion_round, single_report.completion_round);
}

#[test]
fn golden_config_csv_row() {
    let mut cfg = RunConfig::default();
    cfg.apply_manifest(&fixture("path.config")).unwrap();
    let (report, _) = cfg.execute(false).unwrap();
    let got = format!("{}\n{}\n", ExecutionReport::CSV_HEADER, report.csv_row("run"));
    assert_eq!(got, fixture("path.csv"));
}
