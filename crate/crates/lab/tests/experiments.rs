use pmean_fair::Execution;
use pmean_lab::experiments::{run_experiment, welfarist_conflict, Context, AGGREGATORS};
use pmean_lab::manifest::Manifest;
use pmean_lab::report::write_csv;

fn strip_runtime(r: &mut pmean_lab::ExperimentReport) {
    r.rows.retain(|row| !row.claim.starts_with("runtime"));
}

#[test]
fn same_seed_same_report() {
    let ctx = Context::default();
    for id in ["thm-rounding", "lemma-properties", "thm-div-goods"] {
        let mut a = run_experiment(id, &ctx).unwrap();
        let mut b = run_experiment(id, &ctx).unwrap();
        strip_runtime(&mut a);
        strip_runtime(&mut b);
        assert_eq!(a, b, "{id}");
    }
}

#[test]
fn sequential_and_parallel_agree() {
    let par = Context::default();
    let seq = Context {
        exec: Execution::Sequential,
        ..Context::default()
    };
    for id in ["thm-two-agent-ef1", "ef1-failure-boundaries", "thm-div-chore-prop"] {
        let mut a = run_experiment(id, &par).unwrap();
        let mut b = run_experiment(id, &seq).unwrap();
        strip_runtime(&mut a);
        strip_runtime(&mut b);
        assert_eq!(a, b, "{id}");
    }
}

#[test]
fn other_seeds_still_pass() {
    for seed in [1, 7] {
        let ctx = Context::new(seed);
        for id in ["thm-div-goods", "thm-div-chore-prop", "thm-rounding", "thm-two-agent-ef1"] {
            let r = run_experiment(id, &ctx).unwrap();
            assert!(r.passed(), "seed {seed}\n{r}");
        }
    }
}

#[test]
fn coarse_oracle_fails_the_split_claim() {
    // The split must be located to within 1e-3; a 0.1 grid cannot do that.
    let mut manifest = Manifest::embedded();
    manifest.oracle.resolution = 10;
    let ctx = Context {
        manifest,
        ..Context::default()
    };
    let r = run_experiment("thm-div-goods-negative", &ctx).unwrap();
    assert!(!r.passed());
    assert_eq!(
        r.row("p=0.5: oracle split of good 1 to agent 1 vs 0.10256").unwrap().verdict,
        pmean_lab::Verdict::Fail
    );
}

#[test]
fn custom_aggregator_conflict() {
    // A user-supplied strictly increasing aggregator hits the same conflict.
    let agg = |a: f64, b: f64| 2.0 * a + b + a * b;
    let o = welfarist_conflict(1, 0.01, &agg).unwrap();
    assert!(!(o.some_minimizer_ef[0] && o.some_minimizer_ef[1]));
    for (name, f) in AGGREGATORS {
        let o = welfarist_conflict(2, 0.01, &f).unwrap();
        assert!(!(o.some_minimizer_ef[0] && o.some_minimizer_ef[1]), "{name}");
    }
}

#[test]
fn csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let r = run_experiment("lemma-not-ef", &Context::default()).unwrap();
    write_csv(&path, std::slice::from_ref(&r)).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "experiment,claim,measured,bound,tolerance,verdict");
    assert_eq!(lines.count(), r.rows.len());
    assert!(text.contains("lemma-not-ef,x_21,"));
}

#[test]
fn manifest_parses_and_rejects_garbage() {
    let m = Manifest::embedded();
    assert_eq!(m.random.instances, 500);
    assert_eq!(m.lemmas.samples, 100_000);
    assert!(Manifest::parse("seed = 1").is_err());
}
