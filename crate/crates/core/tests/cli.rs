use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mklvc::io;
use mklvc::stats::EmbeddingSequence;
use mklvc::transport::factorize_apply;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn mklvc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mklvc")).args(args).output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn random_file(dir: &Path, name: &str, frames: usize, dim: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..frames * dim)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            // f32-representable so files round-trip exactly
            (2f64.powi((i % dim) as i32) * z) as f32 as f64
        })
        .collect();
    let path = dir.join(name);
    io::write_embeddings(&path, &EmbeddingSequence::new(data, frames, dim).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mkl_output_shape_and_saved_map() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_file(dir.path(), "src.embf", 80, 8, 1);
    let reference = random_file(dir.path(), "ref.embf", 120, 8, 2);
    let out = dir.path().join("out.embf");
    let map = dir.path().join("map.embf");
    let run = mklvc(&[
        "convert", "--method", "mkl", "--K", "2", "--src", s(&src), "--ref", s(&reference), "--out", s(&out),
        "--save-map", s(&map),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));

    let converted = io::read_embeddings(&out).unwrap();
    assert_eq!((converted.frames(), converted.dim()), (80, 8));
    let loaded = io::read_map(&map).unwrap();
    assert_eq!(loaded.block_dim(), 2);
    let again = factorize_apply(&loaded, &io::read_embeddings(&src).unwrap()).unwrap();
    for (a, b) in again.as_slice().iter().zip(converted.as_slice()) {
        assert!((a - b).abs() < 1e-4 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn knn_self_conversion_reproduces_input_file() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_file(dir.path(), "src.embf", 40, 6, 3);
    let out = dir.path().join("out.embf");
    let run = mklvc(&["convert", "--method", "knn", "--k", "1", "--src", s(&src), "--ref", s(&src), "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));
    assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(&out).unwrap());
}

#[test]
fn score_reproduces_published_totals() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.tsv");
    std::fs::write(
        &pairs,
        "# method\tpair\twer\tcer\tsim\n\
         MKL-K2\tp0\t0.08131\t0.03846\t0.94579\n\
         FACodec\tp0\t0.08488\t0.03897\t0.94981\n\
         kNN-VC\tp0\t0.32292\t0.18877\t0.97219\n",
    )
    .unwrap();
    let board = dir.path().join("board.tsv");
    let run = mklvc(&["score", "--pairs", s(&pairs), "-o", s(&board)]);
    assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));

    let table = std::fs::read_to_string(&board).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "method\tpairs\ttotal\twer\tcer\tsim\tmean_pair_total");
    let expected = [("MKL-K2", 0.105), ("FACodec", 0.106), ("kNN-VC", 0.375)];
    for ((method, published), line) in expected.iter().zip(lines) {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields[0], *method);
        let total: f64 = fields[2].parse().unwrap();
        assert!((total - published).abs() <= 5e-4, "{line}");
    }
}

#[test]
fn usage_and_input_errors_exit_1() {
    assert_eq!(mklvc(&["convert", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(mklvc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mklvc(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.embf");
    let missing = dir.path().join("missing.embf");
    let run = mklvc(&["convert", "--method", "knn", "--src", s(&missing), "--ref", s(&missing), "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(1));
    assert!(!out.exists());

    // K must divide D
    let src = random_file(dir.path(), "src.embf", 30, 6, 4);
    let run = mklvc(&["convert", "--method", "mkl", "--K", "4", "--src", s(&src), "--ref", s(&src), "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(1));
    assert!(!out.exists());

    let garbage = dir.path().join("garbage.embf");
    std::fs::write(&garbage, b"EMBF\x09\x00").unwrap();
    let run = mklvc(&["w2", "--a", s(&garbage), "--b", s(&src)]);
    assert_eq!(run.status.code(), Some(1));
    assert!(text(&run.stderr).contains("header"), "{}", text(&run.stderr));
}

#[test]
fn singular_source_block_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    // Columns 0 and 1 are identical and carry the largest std, so they form
    // the first block and its covariance is singular.
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|t| {
            let a = 10.0 * ((t as f64) * 0.7).sin();
            vec![a, a, ((t * 7 % 11) as f64) * 0.1, ((t * 5 % 13) as f64) * 0.1]
        })
        .collect();
    let src = dir.path().join("src.embf");
    io::write_embeddings(&src, &EmbeddingSequence::from_rows(&rows).unwrap()).unwrap();
    let reference = random_file(dir.path(), "ref.embf", 50, 4, 5);
    let out = dir.path().join("out.embf");
    let map = dir.path().join("map.embf");
    let run = mklvc(&[
        "convert", "--method", "mkl", "--K", "2", "--ridge", "0", "--src", s(&src), "--ref", s(&reference), "--out",
        s(&out), "--save-map", s(&map),
    ]);
    assert_eq!(run.status.code(), Some(2), "{}", text(&run.stderr));
    assert!(text(&run.stderr).contains("block 0"), "{}", text(&run.stderr));
    assert!(!out.exists() && !map.exists());
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let src = random_file(dir.path(), "src.embf", 60, 16, 6);
    let reference = random_file(dir.path(), "ref.embf", 70, 16, 7);
    for method in ["mkl", "knn", "sinkhorn"] {
        let outputs: Vec<Vec<u8>> = (0..2)
            .map(|i| {
                let out = dir.path().join(format!("{method}{i}.embf"));
                let run = mklvc(&["convert", "--method", method, "--src", s(&src), "--ref", s(&reference), "--out", s(&out)]);
                assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));
                std::fs::read(out).unwrap()
            })
            .collect();
        assert_eq!(outputs[0], outputs[1], "{method}");
    }

    let diagnose = || {
        mklvc(&["diagnose", "--input", s(&src), "--K", "4", "--subsample", "40", "--mc-samples", "50", "--seed", "9"])
    };
    let (a, b) = (diagnose(), diagnose());
    assert_eq!(a.status.code(), Some(0), "{}", text(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let table = text(&a.stdout);
    for key in ["# solver: exact-assignment", "# seed: 9", "# sample_size: 40"] {
        assert!(table.contains(key), "missing {key:?} in\n{table}");
    }
    assert!(table.contains("start_index\tw2_per_dim"));
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2);
}

#[test]
fn stochastic_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = random_file(dir.path(), "a.embf", 30, 3, 8);
    let b = random_file(dir.path(), "b.embf", 40, 3, 9);
    assert_eq!(mklvc(&["diagnose", "--input", s(&a), "--K", "3"]).status.code(), Some(1));
    assert_eq!(mklvc(&["w2", "--a", s(&a), "--b", s(&b)]).status.code(), Some(1));

    let run = mklvc(&["w2", "--a", s(&a), "--b", s(&b), "--seed", "1"]);
    assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));
    let out = text(&run.stdout);
    assert!(out.starts_with("empirical_w2\t") && out.contains("\ngaussian_w2\t"), "{out}");

    // same-size clouds within the subsample are deterministic without a seed
    let run = mklvc(&["w2", "--a", s(&a), "--b", s(&a)]);
    assert_eq!(run.status.code(), Some(0));
    assert_eq!(text(&run.stdout), "empirical_w2\t0\ngaussian_w2\t0\n");
}

#[test]
fn fit_stats_profile_drives_trimmed_knn() {
    let dir = tempfile::tempdir().unwrap();
    let a = random_file(dir.path(), "a.embf", 30, 6, 10);
    let b = random_file(dir.path(), "b.embf", 30, 6, 11);
    let profile = dir.path().join("profile.embf");
    let run = mklvc(&["fit-stats", s(&a), s(&b), "-o", s(&profile)]);
    assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));
    let p = io::read_profile(&profile).unwrap();
    // std grows with the column index in these files
    assert_eq!(p.permutation[0], 5);

    let out = dir.path().join("out.embf");
    let run = mklvc(&[
        "convert", "--method", "knn", "--n-trim", "3", "--profile", s(&profile), "--src", s(&a), "--ref", s(&b),
        "--out", s(&out),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", text(&run.stderr));
    assert_eq!(io::read_embeddings(&out).unwrap().frames(), 30);
}

#[test]
fn batch_manifest_reports_failures_per_entry() {
    let dir = tempfile::tempdir().unwrap();
    let a = random_file(dir.path(), "a.embf", 30, 4, 12);
    let b = random_file(dir.path(), "b.embf", 35, 4, 13);
    let (good, bad) = (dir.path().join("good.embf"), dir.path().join("bad.embf"));
    let manifest = dir.path().join("pairs.txt");
    std::fs::write(
        &manifest,
        format!("{}\t{}\t{}\n{}\t{}\t{}\n", s(&a), s(&b), s(&good), s(&dir.path().join("nope.embf")), s(&b), s(&bad)),
    )
    .unwrap();
    let run = mklvc(&["convert", "--method", "sinkhorn", "--manifest", s(&manifest)]);
    assert_eq!(run.status.code(), Some(1));
    assert!(good.exists());
    assert!(!bad.exists());
    assert!(text(&run.stderr).contains("nope.embf"));
}
