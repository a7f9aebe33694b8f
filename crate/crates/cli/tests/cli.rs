use paretoflow::env::EnvSpec;
use paretoflow::pareto::Scalarization;
use paretoflow_cli::config::{self, apply_override, Command, ConfigError, ObjectiveSpec, RunConfig, Variant};
use paretoflow_cli::experiments::{run_command, run_synthetic, synthetic_preferences, RunError};
use std::fs;
use std::path::Path;
use std::process::Command as Proc;

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_paretoflow"))
}

fn tiny_synthetic() -> RunConfig {
    let mut cfg = config::resolve(
        r#"
seeds = [3]
[env]
kind = "hyper_grid"
dims = 2
side = 5
[model]
trunk_width = 16
hyper_width = 8
[train]
steps = 40
online_batch = 4
[synthetic]
eval_samples = 50
top = 10
cor_test_size = 40
"#
        .parse()
        .unwrap(),
        &[],
    )
    .unwrap();
    cfg.train.hindsight_gamma = 0.0;
    cfg
}

const TINY_MOBO: &str = r#"
seeds = [1]
[env]
kind = "hyper_grid"
dims = 2
side = 8
[model]
trunk_width = 16
hyper_width = 8
[train]
steps = 20
[surrogate]
max_iterations = 60
hidden = 8
[mobo]
rounds = 2
batch = 6
initial = 20
k = 2
cor_test_size = 60
"#;

#[test]
fn defaults_match_the_documented_protocol() {
    let cfg = RunConfig::default();
    let m = cfg.mobo_config();
    assert_eq!((m.rounds, m.batch, m.initial), (8, 100, 200));
    assert_eq!(m.k_for(2), 5);
    assert_eq!(m.k_for(4), 10);
    assert_eq!(cfg.synthetic.eval_samples, 1000);
    assert_eq!(cfg.seeds.len(), 3);
    assert_eq!(cfg.ablation.scalarizations, vec![Scalarization::WeightedSum, Scalarization::Tchebycheff]);
    assert!(cfg.ablation.alphas.contains(&vec![3.0, 4.0, 2.0, 1.0]));
}

#[test]
fn evaluation_grid_is_five_evenly_spaced_pairs() {
    let cfg = RunConfig::default();
    let grid: Vec<Vec<f64>> = synthetic_preferences(&cfg).iter().map(|p| p.weights().to_vec()).collect();
    assert_eq!(
        grid,
        vec![vec![1.0, 0.0], vec![0.75, 0.25], vec![0.5, 0.5], vec![0.25, 0.75], vec![0.0, 1.0]]
    );
}

#[test]
fn overrides_set_nested_typed_values() {
    let mut t = toml::Table::new();
    apply_override(&mut t, "mobo.rounds=3").unwrap();
    apply_override(&mut t, "train.alpha=[3.0, 4.0]").unwrap();
    apply_override(&mut t, "conditioning=concat").unwrap();
    apply_override(&mut t, "env.kind=bag_builder").unwrap();
    apply_override(&mut t, "env.vocab=3").unwrap();
    apply_override(&mut t, "env.max_items=4").unwrap();
    let cfg = config::resolve(t, &[]).unwrap();
    assert_eq!(cfg.mobo.rounds, 3);
    assert_eq!(cfg.train.alpha, vec![3.0, 4.0]);
    assert_eq!(cfg.env, EnvSpec::BagBuilder { vocab: 3, max_items: 4 });
    assert!(matches!(apply_override(&mut toml::Table::new(), "novalue"), Err(ConfigError::Override(_))));
    assert!(matches!(apply_override(&mut toml::Table::new(), "a..b=1"), Err(ConfigError::Override(_))));
}

#[test]
fn overrides_win_over_file_values() {
    let table: toml::Table = "[mobo]\nrounds = 5\nbatch = 7".parse().unwrap();
    let cfg = config::resolve(table, &["mobo.rounds=2".into()]).unwrap();
    assert_eq!((cfg.mobo.rounds, cfg.mobo.batch), (2, 7));
}

#[test]
fn unknown_keys_are_rejected() {
    for text in ["colour = 1", "[train]\nstepz = 3", "[env]\nkind = \"hyper_grid\"\ndims = 2\nside = 3\nwidth = 1"] {
        let err = config::resolve(text.parse().unwrap(), &[]).unwrap_err();
        assert!(err.to_string().contains("unknown"), "{text}: {err}");
    }
}

#[test]
fn empty_seed_list_is_a_config_error() {
    let cfg = RunConfig {
        seeds: vec![],
        ..RunConfig::default()
    };
    assert!(matches!(cfg.validate(Command::Mobo), Err(ConfigError::Invalid(_))));
}

#[test]
fn synthetic_requires_two_objectives() {
    let cfg = RunConfig {
        objectives: ObjectiveSpec::Four,
        ..RunConfig::default()
    };
    assert!(cfg.validate(Command::Synthetic).is_err());
}

#[test]
fn missing_fixture_is_a_config_error() {
    let mut cfg = RunConfig::default();
    cfg.mobo.fixture = Some("/nonexistent/front.json".into());
    let dir = tempfile::tempdir().unwrap();
    let err = run_command(Command::Mobo, &cfg, dir.path(), false).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn manifest_reproduces_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_synthetic();
    run_command(Command::OracleFixtures, &cfg, dir.path(), false).unwrap();
    let again = config::load(Some(&dir.path().join("manifest.json")), &[]).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn synthetic_tables_have_the_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_synthetic();
    let runs = run_synthetic(&cfg, dir.path()).unwrap();
    assert_eq!(runs.len(), 3);
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "variant,seeds,hv_mean,hv_sd,div_mean,div_sd,cor_mean,cor_sd,l1_mean,l1_sd"
    );
    let variants: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(variants, ["hypernet", "concat", "preference_specific"]);
    for r in &runs {
        assert_eq!(r.preferences.len(), 5);
        for p in &r.preferences {
            let l1 = p.l1.unwrap();
            assert!((0.0..=2.0).contains(&l1));
        }
    }
    // Preference-specific models split the step budget.
    let log = fs::read_to_string(dir.path().join("train_round_0.csv")).unwrap();
    let ps = log.lines().filter(|l| l.starts_with("preference_specific,")).count();
    let hn = log.lines().filter(|l| l.starts_with("hypernet,")).count();
    assert_eq!(ps, 40);
    assert_eq!(hn, 40);
}

#[test]
fn synthetic_variant_subset() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_synthetic();
    cfg.synthetic.variants = vec![Variant::Concat];
    let runs = run_synthetic(&cfg, dir.path()).unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].variant, Variant::Concat);
}

fn read_all_csv(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("mobo.toml");
    fs::write(&cfg_path, TINY_MOBO).unwrap();

    let ok = bin()
        .args(["run", "mobo", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("a"))
        .args(["--override", "mobo.random_baseline=false"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    for f in ["manifest.json", "rounds.csv", "metrics.csv", "front.csv", "seed_1/train_round_1.csv", "seed_1/train_round_2.csv"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }

    let bad = bin()
        .args(["run", "mobo", "--config"])
        .arg(&cfg_path)
        .args(["--override", "mobo.nonsense=1"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));

    let missing = bin().args(["run", "mobo", "--config", "/no/such/file.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));

    // Asking a 16-object grid for 30 distinct initial objects aborts at run time.
    let abort = bin()
        .args(["run", "mobo", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("b"))
        .args(["--override", "env.side=4", "--override", "mobo.initial=30"])
        .output()
        .unwrap();
    assert_eq!(abort.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&abort.stderr).contains("checkpoint"));
}

#[test]
fn seed_flag_replaces_the_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("mobo.toml");
    fs::write(&cfg_path, TINY_MOBO).unwrap();
    let out = dir.path().join("run");
    let status = bin()
        .args(["run", "oracle-fixtures", "--config"])
        .arg(&cfg_path)
        .args(["--seed", "9", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let cfg = config::load(Some(&out.join("manifest.json")), &[]).unwrap();
    assert_eq!(cfg.seeds, vec![9]);
}

#[test]
fn resume_continues_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let base: toml::Table = TINY_MOBO.parse().unwrap();
    let full = config::resolve(base.clone(), &[]).unwrap();
    let short = config::resolve(base, &["mobo.rounds=1".into()]).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_command(Command::Mobo, &full, &a, false).unwrap();
    run_command(Command::Mobo, &short, &b, false).unwrap();
    run_command(Command::Mobo, &full, &b, true).unwrap();
    assert_eq!(read_all_csv(&a), read_all_csv(&b));

    // A different configuration cannot resume these checkpoints.
    let other = config::resolve(TINY_MOBO.parse().unwrap(), &["train.steps=21".into()]).unwrap();
    let err = run_command(Command::Mobo, &other, &b, true).unwrap_err();
    assert!(matches!(err, RunError::Config(_)));
}
