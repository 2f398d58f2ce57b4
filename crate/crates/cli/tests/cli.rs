use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use netbend_core::ImageBuffer;

const GOLDEN: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../core/tests/fixtures/baseline_w1_z42.ppm"
);

fn netbend(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netbend"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = netbend(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

struct Dir(tempfile::TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

fn read_image(path: &Path) -> ImageBuffer {
    ImageBuffer::decode(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn init_weights_then_render_matches_golden() {
    let d = Dir::new();
    ok(&["init-weights", "--seed", "1", "--out", &d.arg("w.nbw")]);
    ok(&["init-weights", "--seed", "1", "--out", &d.arg("w2.nbw")]);
    assert_eq!(
        std::fs::read(d.path("w.nbw")).unwrap(),
        std::fs::read(d.path("w2.nbw")).unwrap()
    );
    ok(&["render", "--weights", &d.arg("w.nbw"), "--seed", "42", "--out", &d.arg("a.ppm")]);
    assert_eq!(
        std::fs::read(d.path("a.ppm")).unwrap(),
        std::fs::read(GOLDEN).unwrap()
    );
    // without --weights the same seeded weights are drawn in memory
    ok(&["render", "--init-seed", "1", "--seed", "42", "--out", &d.arg("b.ppm")]);
    assert_eq!(
        std::fs::read(d.path("b.ppm")).unwrap(),
        std::fs::read(GOLDEN).unwrap()
    );
}

#[test]
fn render_is_repeatable_and_png_matches_ppm() {
    let d = Dir::new();
    let patch = d.path("p.json");
    std::fs::write(
        &patch,
        r#"{"version":1,"activation_overrides":{"syn.1.conv":{"kind":"poly","params":{"degree":2,"w0":1.2,"w1":0.7,"w2":1.0}}}}"#,
    )
    .unwrap();
    let patch = patch.to_string_lossy().into_owned();
    for out in ["a.ppm", "b.ppm", "c.png"] {
        ok(&["render", "--seed", "3", "--patch", &patch, "--out", &d.arg(out)]);
    }
    let a = std::fs::read(d.path("a.ppm")).unwrap();
    assert_eq!(a, std::fs::read(d.path("b.ppm")).unwrap());
    assert!(std::fs::read(d.path("c.png")).unwrap().starts_with(b"\x89PNG"));
    assert_eq!(read_image(&d.path("a.ppm")), read_image(&d.path("c.png")));
}

#[test]
fn missing_patch_file_is_an_io_error() {
    let d = Dir::new();
    let missing = d.arg("absent.json");
    let out = netbend(&["render", "--patch", &missing, "--out", &d.arg("x.ppm")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&missing));
    assert!(!d.path("x.ppm").exists());
}

#[test]
fn invalid_patch_is_a_validation_error() {
    let d = Dir::new();
    let patch = d.path("p.json");
    std::fs::write(&patch, r#"{"version":1,"enable_overrides":{"syn.7.conv":false}}"#).unwrap();
    let out = netbend(&[
        "render",
        "--patch",
        &patch.to_string_lossy(),
        "--out",
        &d.arg("x.ppm"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_layer"));

    std::fs::write(&patch, "{ nope").unwrap();
    let out = netbend(&["render", "--patch", &patch.to_string_lossy(), "--out", &d.arg("x.ppm")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse_error"));
}

#[test]
fn unreadable_weights_are_an_io_error() {
    let d = Dir::new();
    std::fs::write(d.path("w.nbw"), b"NBW1garbage").unwrap();
    let out = netbend(&["render", "--weights", &d.arg("w.nbw"), "--out", &d.arg("x.ppm")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("w.nbw"));
}

#[test]
fn plot_writes_shortest_float_csv() {
    let d = Dir::new();
    ok(&["plot", "--activation", "relu", "--range", "-1", "1", "--points", "3", "--out", &d.arg("r.csv")]);
    assert_eq!(
        std::fs::read_to_string(d.path("r.csv")).unwrap(),
        "x,y\n-1,0\n0,0\n1,1\n"
    );

    ok(&["plot", "--activation", "sinlu", "--params", "a=1,b=1", "--range", "0", "1", "--points", "2", "--out", &d.arg("s.csv")]);
    let text = std::fs::read_to_string(d.path("s.csv")).unwrap();
    let last = text.lines().last().unwrap();
    let (x, y) = last.split_once(',').unwrap();
    assert_eq!(x, "1");
    let y: f64 = y.parse().unwrap();
    let sigma = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((y - (1.0 + 1f64.sin()) * sigma).abs() < 1e-6, "{y}");

    ok(&["plot", "--activation", "poly", "--params", "degree=1", "--range", "0", "1", "--out", &d.arg("p.csv")]);
    assert_eq!(std::fs::read_to_string(d.path("p.csv")).unwrap().lines().count(), 65);
}

#[test]
fn plot_rejects_invalid_requests() {
    let d = Dir::new();
    for args in [
        &["--activation", "relun", "--params", "n=0", "--range", "0", "1"][..],
        &["--activation", "sinlu", "--params", "q=1", "--range", "0", "1"],
        &["--activation", "relu", "--range", "1", "0"],
    ] {
        let mut full = vec!["plot"];
        full.extend_from_slice(args);
        let out_path = d.arg("x.csv");
        full.extend_from_slice(&["--out", &out_path]);
        assert_eq!(netbend(&full).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn sweep_layout_and_neutral_cells() {
    let d = Dir::new();
    ok(&[
        "sweep", "--layer", "syn.2.conv", "--activation", "sinlu", "--param", "a",
        "--from", "-1", "--to", "1", "--steps", "4", "--seed", "5", "--out", &d.arg("g.ppm"),
    ]);
    let grid = read_image(&d.path("g.ppm"));
    assert_eq!((grid.width, grid.height), (5 * 32, 32));

    let cell = |img: &ImageBuffer, i: usize| -> Vec<u8> {
        (0..32)
            .flat_map(|y| {
                let row = (y * img.width + i * 32) * 3;
                img.data[row..row + 32 * 3].to_vec()
            })
            .collect()
    };

    // constant sweep: every swept cell identical
    ok(&[
        "sweep", "--layer", "map.2", "--activation", "sinlu", "--param", "a",
        "--from", "0", "--to", "0", "--steps", "2", "--out", &d.arg("c.ppm"),
    ]);
    let c = read_image(&d.path("c.ppm"));
    assert_eq!(c.width, 3 * 32);
    assert_eq!(cell(&c, 1), cell(&c, 2));

    // re-stating the base LeakyReLU(0.2) is a neutral sweep
    ok(&[
        "sweep", "--layer", "syn.0.conv", "--activation", "leaky_relu", "--param", "slope",
        "--from", "0.2", "--to", "0.2", "--steps", "3", "--seed", "5", "--out", &d.arg("n.ppm"),
    ]);
    let n = read_image(&d.path("n.ppm"));
    for i in 1..4 {
        assert_eq!(cell(&n, i), cell(&n, 0));
    }
    // the baseline cell is an ordinary render
    ok(&["render", "--seed", "5", "--out", &d.arg("base.ppm")]);
    assert_eq!(cell(&grid, 0), read_image(&d.path("base.ppm")).data);
}

#[test]
fn sweep_rejects_bad_requests() {
    let d = Dir::new();
    let out = d.arg("g.ppm");
    for extra in [
        &["--layer", "map.0", "--activation", "sinlu", "--param", "a", "--steps", "1"][..],
        &["--layer", "map.0", "--activation", "sinlu", "--param", "zz", "--steps", "3"],
        &["--layer", "nope", "--activation", "sinlu", "--param", "a", "--steps", "3"],
    ] {
        let mut args = vec!["sweep", "--from", "0", "--to", "1", "--out", &out];
        args.extend_from_slice(extra);
        assert_eq!(netbend(&args).status.code(), Some(2), "{extra:?}");
    }
}

#[test]
fn serve_on_occupied_port_fails_cleanly() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = netbend(&["serve", "--port", &port]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("already in use") && stderr.contains(&port), "{stderr}");
}
