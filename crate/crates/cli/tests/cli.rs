use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 4
allele_frequency = 5.000125006250391e-5
design = ["genotype", "genotype"]
male_zero_hazard_causes = []
iterations = 60
burn_in = 20
thin = 4
chains = 2
roc_repetitions = 2
roc_age = 0.5

[simulate]
family_count = 6
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_penetrance"));
    c.env_remove("PENETRANCE_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn p(x: &Path) -> &str {
    x.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    pedigrees: PathBuf,
}

fn fixture(text: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("tiny.toml");
    fs::write(&config, text).unwrap();
    let sim = root.join("sim");
    ok(&["simulate", "--config", p(&config), "--out", p(&sim)]);
    Fixture {
        _dir: dir,
        pedigrees: sim.join("pedigrees.tsv"),
        root,
        config,
    }
}

fn fit(f: &Fixture, out: &str, extra: &[&str]) -> PathBuf {
    let out = f.root.join(out);
    let mut args = vec!["fit", p(&f.pedigrees), "--config", p(&f.config), "--out", p(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

#[test]
fn single_family_simulation() {
    let f = fixture(&TINY.replace("family_count = 6", "family_count = 1"));
    let text = fs::read_to_string(&f.pedigrees).unwrap();
    assert_eq!(text.lines().count(), 31);
    let manifest = read(f.pedigrees.parent().unwrap(), "manifest.json");
    assert!(manifest.contains("\"pedigrees.tsv\""));
}

#[test]
fn fit_writes_every_table() {
    let f = fixture(TINY);
    let out = fit(&f, "fit", &["--threads", "1"]);
    for name in ["model.json", "config.toml", "draws.tsv", "trace.tsv", "summary.tsv", "acceptance.tsv", "curves.tsv", "manifest.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    // Two chains of 60 iterations each, plus the header.
    assert_eq!(read(&out, "trace.tsv").lines().count(), 121);
    assert_eq!(read(&out, "draws.tsv").lines().count(), 1 + 2 * 10);
    assert!(read(&out, "summary.tsv").starts_with("parameter\tmean\tsd\t2.5%\t97.5%\trhat"));
}

#[test]
fn reruns_are_byte_identical() {
    let f = fixture(TINY);
    let sim2 = f.root.join("sim2");
    ok(&["simulate", "--config", p(&f.config), "--out", p(&sim2)]);
    assert_eq!(fs::read(&f.pedigrees).unwrap(), fs::read(sim2.join("pedigrees.tsv")).unwrap());
    let a = fit(&f, "a", &["--threads", "1"]);
    let b = fit(&f, "b", &["--threads", "1"]);
    for name in ["draws.tsv", "trace.tsv", "summary.tsv", "model.json", "manifest.json"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
}

#[test]
fn seed_flag_overrides_environment_and_config() {
    let f = fixture(TINY);
    let a = fit(&f, "a", &["--seed", "9"]);
    let b = f.root.join("b");
    let o = bin()
        .env("PENETRANCE_SEED", "123")
        .args(["fit", p(&f.pedigrees), "--config", p(&f.config), "--out", p(&b), "--seed", "9"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(read(&a, "trace.tsv"), read(&b, "trace.tsv"));
    let c = f.root.join("c");
    let o = bin()
        .env("PENETRANCE_SEED", "123")
        .args(["fit", p(&f.pedigrees), "--config", p(&f.config), "--out", p(&c)])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(read(&c, "manifest.json").contains("\"seed\": 123"));
}

#[test]
fn resumed_fit_matches_an_uninterrupted_one() {
    let f = fixture(TINY);
    let full = fit(&f, "full", &[]);
    let half_cfg = f.root.join("half.toml");
    fs::write(&half_cfg, TINY.replace("iterations = 60", "iterations = 40\ncheckpoint_every = 40")).unwrap();
    let half = f.root.join("half");
    ok(&["fit", p(&f.pedigrees), "--config", p(&half_cfg), "--out", p(&half)]);
    let ck = half.join("checkpoint.json");
    assert!(ck.exists());
    let resumed = fit(&f, "resumed", &["--resume", p(&ck)]);
    assert_eq!(read(&full, "trace.tsv"), read(&resumed, "trace.tsv"));
    assert_eq!(read(&full, "draws.tsv"), read(&resumed, "draws.tsv"));
}

#[test]
fn predict_and_evaluate_on_a_fitted_model() {
    let f = fixture(TINY);
    let model = fit(&f, "fit", &[]);
    let pred = f.root.join("pred");
    ok(&["predict", "--model", p(&model), p(&f.pedigrees), "--counselee", "7", "--out", p(&pred)]);
    let risk = read(&pred, "risk.tsv");
    assert!(risk.starts_with("family\tmember\tcause\tage\trisk_mean\trisk_lo\trisk_hi"));
    // One carrier row per family containing member 7.
    assert_eq!(read(&pred, "carrier.tsv").lines().count(), 1 + 6);

    let cpo = f.root.join("cpo");
    ok(&["evaluate", "cpo", "--model", p(&model), p(&f.pedigrees), "--out", p(&cpo)]);
    let text = read(&cpo, "cpo.tsv");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 6);
    assert!(text.contains("# psml"));

    let dic = f.root.join("dic");
    ok(&["evaluate", "dic", "--model", p(&model), p(&f.pedigrees), "--out", p(&dic)]);
    assert_eq!(read(&dic, "dic.tsv").lines().count(), 2);
}

#[test]
fn cpo_on_one_family_gives_one_row() {
    let f = fixture(&TINY.replace("family_count = 6", "family_count = 1"));
    let model = fit(&f, "fit", &[]);
    let cpo = f.root.join("cpo");
    ok(&["evaluate", "cpo", "--model", p(&model), p(&f.pedigrees), "--out", p(&cpo)]);
    let rows: Vec<String> = read(&cpo, "cpo.tsv").lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect();
    assert_eq!(rows.len(), 2);
    let (fam, value) = rows[1].split_once('\t').unwrap();
    assert_eq!(fam, "1");
    assert!(value.parse::<f64>().unwrap() < 0.0);
}

#[test]
fn roc_writes_a_band() {
    let f = fixture(&TINY.replace("family_count = 6", "family_count = 12"));
    let out = f.root.join("roc");
    ok(&["evaluate", "roc", p(&f.pedigrees), "--config", p(&f.config), "--out", p(&out)]);
    assert_eq!(read(&out, "roc_band.tsv").lines().count(), 1 + 101);
    assert!(read(&out, "roc.tsv").contains("# auc\tmean"));
}

#[test]
fn missing_counselee_is_a_usage_error() {
    let f = fixture(TINY);
    let model = fit(&f, "fit", &[]);
    let o = run(&["predict", "--model", p(&model), p(&f.pedigrees), "--counselee", "nobody", "--out", p(&f.root.join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nobody"));
}

#[test]
fn unknown_metric_is_a_usage_error() {
    let o = run(&["evaluate", "waic", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_pedigrees_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    fs::write(
        &bad,
        "family_id\tindividual_id\tfather_id\tmother_id\tsex\tgenotype\tage\tcause\tproband\nF\ta\t\t\tF\tNA\t30\t0\t1\nF\tb\ta\tz\tM\tNA\t20\t0\t0\n",
    )
    .unwrap();
    let o = run(&["fit", p(&bad), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fit", p(&dir.path().join("absent.tsv")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn bad_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "iterations = 10\nburn_in = 20\n").unwrap();
    let o = run(&["simulate", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        penetrance::config::Config::from_toml(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
