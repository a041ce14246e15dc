use std::path::{Path, PathBuf};

use roletrack::config::OUT_ENV;
use roletrack::{CliError, PipelineConfig};
use roletrack_core::classify::TrainerConfig;

fn parse(text: &str) -> Result<PipelineConfig, CliError> {
    PipelineConfig::from_toml(text, Path::new("/base"))
}

#[test]
fn empty_file_gives_defaults() {
    let c = parse("").unwrap();
    assert_eq!(c.dtm.topics, 7);
    assert!((c.dtm.alpha - 50.0 / 7.0).abs() < 1e-12);
    assert_eq!(c.nmf.clusters, 10);
    assert_eq!(c.churn.window, 4);
    assert_eq!(c.eval.folds, 10);
    assert!(matches!(c.classifier, TrainerConfig::RandomForest(_)));
    assert_eq!(c.paths.out, PathBuf::from("/base/out"));
}

#[test]
fn alpha_follows_topic_count_unless_given() {
    let c = parse("[dtm]\ntopics = 10\n").unwrap();
    assert_eq!(c.dtm.alpha, 5.0);
    let c = parse("[dtm]\ntopics = 10\nalpha = 0.1\n").unwrap();
    assert_eq!(c.dtm.alpha, 0.1);
}

#[test]
fn relative_paths_resolve_against_the_config_directory() {
    let c = parse("[paths]\nevents = \"data/events.tsv\"\nnamespace_map = \"/abs/ns.txt\"\nout = \"run\"\n").unwrap();
    assert_eq!(c.paths.events, Some(PathBuf::from("/base/data/events.tsv")));
    assert_eq!(c.paths.namespace_map, Some(PathBuf::from("/abs/ns.txt")));
    assert_eq!(c.events_path(), PathBuf::from("/base/data/events.tsv"));
    let c = parse("").unwrap();
    assert_eq!(c.events_path(), PathBuf::from("/base/out/synth/events.tsv"));
}

#[test]
fn unknown_keys_are_rejected() {
    let err = parse("[nmf]\nclusterz = 3\n").unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert!(err.to_string().contains("clusterz"), "{err}");
    assert!(parse("[nonsense]\n").is_err());
    assert!(parse("seed = \"zero\"\n").is_err());
}

#[test]
fn validation_names_the_section_and_rule() {
    let cases = [
        ("[dtm]\ntopics = 0\n", "[dtm]"),
        ("[churn]\ndeparted_horizon = 3\nstaying_horizon = 3\n", "[churn]"),
        ("[eval]\nfolds = 1\n", "[eval]"),
        ("[ingest]\nsingle_quarter_fraction = 1.5\n", "[ingest]"),
        ("[classifier]\nkind = \"random_forest\"\nn_trees = 0\n", "[classifier]"),
        ("[nmf]\nclusters = 0\n", "[nmf]"),
        ("[synth]\nquarters = 0\n", "[synth]"),
    ];
    for (text, section) in cases {
        let err = parse(text).unwrap().validate().expect_err(text);
        assert!(err.to_string().contains(section), "{text}: {err}");
    }
}

#[test]
fn overrides_seed_and_output_directory() {
    // Only this test touches the environment.
    std::env::remove_var(OUT_ENV);
    let c = parse("seed = 3\n[dtm]\nseed = 99\n")
        .unwrap()
        .finish(None, None)
        .unwrap();
    assert_eq!((c.seed, c.dtm.seed, c.synth.seed), (3, 3, 3));
    assert_eq!(c.paths.out, PathBuf::from("/base/out"));

    std::env::set_var(OUT_ENV, "/from/env");
    let c = parse("").unwrap().finish(Some(8), None).unwrap();
    assert_eq!(c.paths.out, PathBuf::from("/from/env"));
    assert_eq!(c.dtm.seed, 8);
    let c = parse("").unwrap().finish(None, Some("/from/flag".into())).unwrap();
    assert_eq!(c.paths.out, PathBuf::from("/from/flag"));
    std::env::remove_var(OUT_ENV);
}

#[test]
fn hash_ignores_output_directory_only() {
    let a = parse("[paths]\nout = \"a\"\n").unwrap();
    let b = parse("[paths]\nout = \"b\"\n").unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    let c = parse("seed = 1\n[paths]\nout = \"a\"\n").unwrap();
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn shipped_configs_load_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["small.toml", "acceptance.toml"] {
        let c = PipelineConfig::load(&dir.join(name)).unwrap();
        c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn missing_config_file_is_named() {
    let err = PipelineConfig::load(Path::new("/no/such/config.toml")).unwrap_err();
    assert!(err.to_string().contains("/no/such/config.toml"), "{err}");
}
