use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn higita(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_higita"))
        .args(args)
        .output()
        .expect("run higita")
}

fn ok(args: &[&str]) -> String {
    let out = higita(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn lines(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = higita(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flags_are_usage_errors() {
    let out = higita(&["lexicon-validate", "--lexicon", "x", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn operational_failures_exit_1_with_a_message() {
    let out = higita(&["lexicon-validate", "--lexicon", "/nonexistent/lexicon.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn splits_of_a_3755_class_lexicon() {
    let dir = tempfile::tempdir().unwrap();
    let lex = dir.path().join("lex.txt");
    ok(&[
        "synth-lexicon",
        "--out",
        s(&lex),
        "--characters",
        "3755",
        "--radicals",
        "200",
    ]);
    let (train, test) = (dir.path().join("train.txt"), dir.path().join("test.txt"));
    ok(&[
        "make-splits",
        "--lexicon",
        s(&lex),
        "--mode",
        "char",
        "--m",
        "500",
        "--k",
        "1000",
        "--train-out",
        s(&train),
        "--test-out",
        s(&test),
    ]);
    assert_eq!((lines(&train), lines(&test)), (500, 1000));

    ok(&[
        "make-splits",
        "--lexicon",
        s(&lex),
        "--mode",
        "radical",
        "--n",
        "50",
        "--train-out",
        s(&train),
        "--test-out",
        s(&test),
    ]);
    assert_eq!(lines(&train) + lines(&test), 3755);

    let out = higita(&[
        "make-splits",
        "--lexicon",
        s(&lex),
        "--mode",
        "char",
        "--m",
        "500",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn prediction_dump_fixture_reproduces_its_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump.tsv");
    fs::write(
        &dump,
        "image_id\tgold\ttop1\ttop1_score\n\
         a.pgm\t一\t一\t0.5\n\
         b.pgm\t二\t一\t0.25\n\
         c.pgm\t二\t二\t1.0\n\
         d.pgm\t三\t二\t-0.125\n",
    )
    .unwrap();
    let per_class = dir.path().join("per_class.csv");
    let out = ok(&[
        "evaluate",
        "--predictions",
        s(&dump),
        "--per-class",
        s(&per_class),
    ]);
    assert_eq!(out, "cacc\t0.500000\t2/4\n");
    assert_eq!(
        fs::read_to_string(&per_class).unwrap(),
        "char,correct,total,accuracy\n一,1,1,1.0\n二,1,2,0.5\n三,0,1,0.0\n"
    );
}

#[test]
fn full_pipeline_from_lexicon_to_attention_maps() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    ok(&[
        "synth-lexicon",
        "--out",
        s(&p("lex.txt")),
        "--characters",
        "20",
        "--radicals",
        "10",
    ]);
    let stats = ok(&["lexicon-validate", "--lexicon", s(&p("lex.txt"))]);
    assert!(stats.starts_with("characters\t20\nradicals\t10\n"));
    ok(&[
        "make-splits",
        "--lexicon",
        s(&p("lex.txt")),
        "--mode",
        "char",
        "--m",
        "15",
        "--k",
        "5",
        "--train-out",
        s(&p("train.txt")),
        "--test-out",
        s(&p("test.txt")),
    ]);
    ok(&[
        "render-dataset",
        "--lexicon",
        s(&p("lex.txt")),
        "--chars",
        s(&p("test.txt")),
        "--size",
        "32",
        "--variants",
        "2",
        "--seed",
        "1000",
        "--out",
        s(&p("test_data")),
    ]);
    assert_eq!(lines(&p("test_data/manifest.tsv")), 10);

    fs::write(
        p("train.cfg"),
        format!(
            "lexicon = {}\nclasses = {}\nimage_size = 32\nwidths = 4,8,8\ndim = 8\n\
             layers = 1\nfusion_layers = 1\nheads = 2\nbatch_size = 5\nmax_steps = 4\n\
             checkpoint = {}\nlog = {}\n",
            s(&p("lex.txt")),
            s(&p("train.txt")),
            s(&p("model.ck")),
            s(&p("loss.csv"))
        ),
    )
    .unwrap();
    ok(&["train", "--config", s(&p("train.cfg"))]);
    let log = fs::read_to_string(p("loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(log.starts_with("step,stroke,refined_stroke,radical,refined_radical,total\n0,"));

    ok(&[
        "embed-gallery",
        "--checkpoint",
        s(&p("model.ck")),
        "--lexicon",
        s(&p("lex.txt")),
        "--candidates",
        s(&p("test.txt")),
        "--out",
        s(&p("gallery.bin")),
    ]);
    let from_gallery = ok(&[
        "evaluate",
        "--checkpoint",
        s(&p("model.ck")),
        "--lexicon",
        s(&p("lex.txt")),
        "--data",
        s(&p("test_data")),
        "--gallery",
        s(&p("gallery.bin")),
        "--dump",
        s(&p("dump.tsv")),
    ]);
    let on_the_fly = ok(&[
        "evaluate",
        "--checkpoint",
        s(&p("model.ck")),
        "--lexicon",
        s(&p("lex.txt")),
        "--data",
        s(&p("test_data")),
        "--candidates",
        s(&p("test.txt")),
        "--repr",
        "refined-stroke",
        "--components",
        "both",
    ]);
    let replay = ok(&["evaluate", "--predictions", s(&p("dump.tsv"))]);
    assert!(from_gallery.starts_with("cacc\t"));
    assert_eq!(from_gallery, on_the_fly);
    assert_eq!(from_gallery, replay);
    assert_eq!(lines(&p("dump.tsv")), 11);

    let first = fs::read_to_string(p("test_data/manifest.tsv")).unwrap();
    let (image, c) = first.lines().next().unwrap().split_once('\t').unwrap();
    let image = p("test_data").join(image);
    let ranked = ok(&[
        "recognize",
        "--checkpoint",
        s(&p("model.ck")),
        "--gallery",
        s(&p("gallery.bin")),
        "--image",
        s(&image),
        "--top",
        "3",
    ]);
    assert_eq!(ranked.lines().count(), 3);

    ok(&[
        "visualize-attention",
        "--checkpoint",
        s(&p("model.ck")),
        "--lexicon",
        s(&p("lex.txt")),
        "--image",
        s(&image),
        "--char",
        c,
        "--out",
        s(&p("maps")),
    ]);
    let lex = higita::files::load_lexicon(&p("lex.txt")).unwrap();
    let e = lex.get(c.chars().next().unwrap()).unwrap();
    let (k1, j1) = (e.radical_seq.len(), e.stroke_seq.len());
    let structure = e
        .stroke_seq
        .mask()
        .flags
        .iter()
        .filter(|f| **f == higita_core::lexicon::Component::Structure)
        .count();
    let written = fs::read_dir(p("maps")).unwrap().count();
    assert_eq!(written, 2 * (k1 + j1) + structure);
    assert!(p("maps/stroke_0.pgm").is_file());
}
