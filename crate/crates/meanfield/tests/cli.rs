use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command as Process, Output};

use meanfield::config::{parse, Command};
use meanfield::control_file::{read_control, write_control};
use meanfield::output::sha256_hex;
use meanfield::run::Manifest;
use meanfield_core::control::{ControlFamily, FamilyShape};
use meanfield_core::model::ModelDims;
use proptest::prelude::*;

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_meanfield"))
}

fn run_cli(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_LAPLACE: &str = r#"
schema_version = 1
seed = 4
n = 10
replicas = 200

[model]
family = "linear_mean_field"
reversion = 1.0
coupling = 0.5
sigma = 1.0
alpha = 1.0

[grid]
horizon = 1.0
steps = 5

[kappa]
rule = "critical"
lambda = 1.0

[functional]
kind = "clipped_endpoint_mean"
coord = 0
scale = 0.5
low = -0.5
high = 0.5

[control]
pieces = 2

[laplace]
random_controls = 2
control_replicas = 100
control_scale = 0.2
"#;

const SMALL_EVENT: &str = r#"
schema_version = 1
seed = 3
n = 20
replicas = 400

[model]
family = "pure_brownian"

[initial]
law = "dirac"
point = [0.0]

[grid]
horizon = 1.0
steps = 4

[kappa]
rule = "critical"
lambda = 1.0

[event]
kind = "endpoint_mean_at_least"
threshold = 0.5

[optimize]
budget = 20
search_replicas = 100
final_replicas = 200
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_ok(command: &str, config: &Path, out: &Path, threads: &str) -> Manifest {
    let o = run_cli(&["run", command, config.to_str().unwrap(), "--output-dir", out.to_str().unwrap(), "--threads", threads]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    Manifest::parse(&fs::read_to_string(out.join("manifest.txt")).unwrap()).unwrap()
}

#[test]
fn bundled_configs_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let pairs = [
        ("validate.toml", Command::Validate),
        ("lln.toml", Command::Lln),
        ("feynman_kac.toml", Command::FeynmanKac),
        ("variance.toml", Command::Variance),
        ("laplace.toml", Command::Laplace),
        ("optimize.toml", Command::Optimize),
        ("rare_event.toml", Command::RareEvent),
        ("rate_critical.toml", Command::Rate),
        ("regimes.toml", Command::Regimes),
    ];
    for (file, command) in pairs {
        let text = fs::read_to_string(dir.join(file)).unwrap();
        let cfg = parse(&text, command).unwrap_or_else(|e| panic!("{file}: {e}"));
        let again = parse(&cfg.to_toml(), command).unwrap();
        assert_eq!(cfg, again, "{file}");
        assert_eq!(cfg.to_toml(), again.to_toml(), "{file}");
    }
}

#[test]
fn outputs_carry_header_run_id_and_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "laplace.toml", SMALL_LAPLACE);
    let out = tmp.path().join("out");
    let m = run_ok("laplace", &config, &out, "2");
    let run_id = m.get("run_id").unwrap().to_string();
    assert_eq!(m.get("command"), Some("laplace"));
    assert_eq!(m.get("seed"), Some("4"));
    assert!(m.get("wall_time_seconds").is_some());
    let outputs = m.outputs();
    assert_eq!(outputs.iter().map(|(n, _)| *n).collect::<Vec<_>>(), ["laplace.csv", "controls.csv"]);
    for (name, hash) in outputs {
        let bytes = fs::read(out.join(name)).unwrap();
        assert_eq!(sha256_hex(&bytes), hash);
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        assert_eq!(&reader.headers().unwrap()[0], "run_id");
        for rec in reader.records() {
            assert_eq!(&rec.unwrap()[0], run_id.as_str());
        }
    }
    let copy = fs::read_to_string(out.join("config.toml")).unwrap();
    assert_eq!(sha256_hex(copy.as_bytes()), m.get("config_sha256").unwrap());
    assert_eq!(parse(&copy, Command::Laplace).unwrap(), parse(SMALL_LAPLACE, Command::Laplace).unwrap());
}

#[test]
fn replay_passes_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "laplace.toml", SMALL_LAPLACE);
    let out = tmp.path().join("out");
    run_ok("laplace", &config, &out, "1");
    let manifest = out.join("manifest.txt");
    let m = manifest.to_str().unwrap();

    let o = run_cli(&["replay", m]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run_cli(&["replay", m, "--threads", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let original = fs::read_to_string(&manifest).unwrap();
    fs::write(&manifest, original.replace("seed=4", "seed=5")).unwrap();
    let o = run_cli(&["replay", m]);
    assert_eq!(code(&o), 4);
    let err = stderr(&o);
    assert!(err.contains("kind=replay_mismatch") && err.contains("file=laplace.csv"), "{err}");

    fs::write(&manifest, &original).unwrap();
    let copy = out.join("config.toml");
    let text = fs::read_to_string(&copy).unwrap();
    fs::write(&copy, text.replace("replicas = 200", "replicas = 201")).unwrap();
    let o = run_cli(&["replay", m]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("file=config.toml"));
}

#[test]
fn config_errors_list_every_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = SMALL_LAPLACE
        .replace("steps = 5", "steps = 0")
        .replace("lambda = 1.0", "lambda = 0.0\ncolour = 1")
        .replace("coupling = 0.5", "level = 0.5");
    let config = write(tmp.path(), "bad.toml", &bad);
    let out = tmp.path().join("out");
    let o = run_cli(&["run", "laplace", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    for field in ["grid.steps", "kappa.lambda", "kappa.colour", "model.level", "model.coupling"] {
        assert!(err.contains(&format!("={field}:")), "{field} missing from\n{err}");
    }
    assert!(err.contains("violations=5"), "{err}");
    assert_eq!(fs::read_to_string(out.join("error.txt")).unwrap(), err);
    assert!(!out.join("manifest.txt").exists());

    let o = run_cli(&["run", "rate", config.to_str().unwrap()]);
    assert!(stderr(&o).contains("=n_list: required"));
}

#[test]
fn runtime_errors_report_step_and_particle() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_LAPLACE
        .replace("[kappa]", "[model.weights]\nrate = 1e5\n\n[kappa]")
        .replace("steps = 5", "steps = 1");
    let config = write(tmp.path(), "overflow.toml", &text);
    let out = tmp.path().join("out");
    let o = run_cli(&["run", "feynman-kac", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let err = stderr(&o);
    assert!(err.contains("kind=runtime") && err.contains("step=0") && err.contains("particle=0"), "{err}");
    assert!(out.join("error.txt").exists());

    let unreachable = SMALL_EVENT.replace("threshold = 0.5", "threshold = 5.0") + "\n[rate]\ntilt = \"none\"\n";
    let config = write(tmp.path(), "unreachable.toml", &unreachable);
    let o = run_cli(&["run", "rare-event", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("never observed"));
}

#[test]
fn optimized_control_reloads_for_importance_sampling() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write(tmp.path(), "event.toml", SMALL_EVENT);
    let first = tmp.path().join("optimized");
    run_ok("rare-event", &config, &first, "1");
    let control = fs::read_to_string(first.join("control.txt")).unwrap();
    let policy = read_control(&control, Some(ModelDims::scalar())).unwrap();
    assert_eq!(write_control(&policy).unwrap(), control);

    fs::write(tmp.path().join("tilt.txt"), &control).unwrap();
    let reuse = SMALL_EVENT.to_string() + "\n[control]\nfile = \"tilt.txt\"\n\n[rate]\ntilt = \"file\"\n";
    let config = write(tmp.path(), "reuse.toml", &reuse);
    let second = tmp.path().join("reused");
    let m = run_ok("rare-event", &config, &second, "1");
    assert_eq!(m.get("control_input"), Some("control_input.txt"));
    assert_eq!(m.get("control_input_sha256"), Some(sha256_hex(control.as_bytes()).as_str()));
    let rows = fs::read_to_string(second.join("probability.csv")).unwrap();
    assert!(rows.lines().nth(1).unwrap().contains(",file,"), "{rows}");
    // The replay reads the copied control, not the original next to the config.
    fs::remove_file(tmp.path().join("tilt.txt")).unwrap();
    let o = run_cli(&["replay", second.join("manifest.txt").to_str().unwrap(), "--threads", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn unknown_command_is_rejected() {
    let o = run_cli(&["run", "nonsense", "x.toml"]);
    assert_ne!(code(&o), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn control_tables_round_trip(
        pieces in 1usize..4,
        d in 1usize..3,
        m in 1usize..3,
        k in 1usize..3,
        affine in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let dims = ModelDims::new(d, m, k).unwrap();
        let family = ControlFamily {
            shape: if affine { FamilyShape::Affine } else { FamilyShape::PiecewiseConstant },
            pieces,
            individual: true,
            common: true,
        };
        let mut rng = meanfield_core::rng::NoisePlan::new(seed).sequence(0, 0);
        let params: Vec<f64> = (0..family.dim(dims)).map(|_| rng.normal() * 1e3f64.powf(rng.uniform_in(-3.0, 1.0))).collect();
        let policy = family.policy(dims, &params).unwrap().with_radius(2.5);
        let text = write_control(&policy).unwrap();
        let back = read_control(&text, Some(dims)).unwrap();
        prop_assert_eq!(write_control(&back).unwrap(), text);
        prop_assert_eq!(back.common(), policy.common());
        prop_assert_eq!(format!("{:?}", back.feedback()), format!("{:?}", policy.feedback()));
        prop_assert_eq!(back.radius(), Some(2.5));
    }
}
