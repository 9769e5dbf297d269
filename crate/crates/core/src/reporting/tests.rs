use super::*;
use crate::dataset::SplitFractions;
use crate::explainers::MethodSpec;
use crate::harness::{build_challenge, run_challenge, ChallengeManifest, GeneratorConfig, LeaderboardEntry, RunOptions};
use crate::models::ModelSpec;
use crate::tris::{BackgroundKind, Scenario, TrisConfig};

fn board(entries: Vec<LeaderboardEntry>) -> Leaderboard {
    Leaderboard { challenge_id: "c".into(), primary_metric: Metric::Emd, entries }
}

fn entry(rank: usize, method: &str, emd: f64) -> LeaderboardEntry {
    LeaderboardEntry {
        rank,
        method: method.into(),
        emd: Some(emd),
        ima: Some(0.5),
        precision: None,
        accuracy: Some(0.875),
        runs: 2,
        best_run: "run-0001".into(),
    }
}

#[test]
fn table_layout() {
    let text = render_leaderboard(&board(vec![entry(1, "gradient", 0.91234), entry(2, "sobel", 0.5)]), LeaderboardFormat::Table);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1].split_whitespace().collect::<Vec<_>>(), LEADERBOARD_COLUMNS);
    assert_eq!(lines[2].split_whitespace().collect::<Vec<_>>(), ["1", "gradient", "0.9123", "0.5000", "-", "0.8750", "2"]);
    // Numeric columns are right-aligned: every row ends at the same column.
    let ends: Vec<usize> = lines[1..].iter().map(|l| l.len()).collect();
    assert!(ends.iter().all(|&e| e == ends[0]), "{text}");
}

#[test]
fn csv_round_trip() {
    let b = board(vec![entry(1, "a,b", 0.1 + 0.2), entry(2, "c", 1.0 / 3.0)]);
    let text = render_leaderboard(&b, LeaderboardFormat::Csv);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), LEADERBOARD_COLUMNS);
    for (rec, e) in r.records().zip(&b.entries) {
        let rec = rec.unwrap();
        assert_eq!(rec[0].parse::<usize>().unwrap(), e.rank);
        assert_eq!(&rec[1], e.method);
        assert_eq!(rec[2].parse::<f64>().unwrap(), e.emd.unwrap());
        assert_eq!(&rec[4], "");
        assert_eq!(rec[6].parse::<usize>().unwrap(), e.runs);
    }
}

#[test]
fn json_round_trip_and_schema() {
    let b = board(vec![entry(1, "x", 0.25)]);
    let text = render_leaderboard(&b, LeaderboardFormat::Json);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["primary_metric"], "emd");
    let keys: Vec<&str> = v["entries"][0].as_object().unwrap().keys().map(String::as_str).collect();
    for k in LEADERBOARD_COLUMNS {
        assert!(keys.contains(&k), "missing {k}");
    }
    assert_eq!(serde_json::from_value::<Leaderboard>(v).unwrap(), b);
    assert_eq!("csv".parse::<LeaderboardFormat>().unwrap(), LeaderboardFormat::Csv);
    assert!("xml".parse::<LeaderboardFormat>().is_err());
}

#[test]
fn panel_size_arithmetic() {
    // One 64x64 sample, one method: three columns.
    assert_eq!(panel_size(1, 3, 64, 64), (3 * 64 + 4 * 2, 7 + 64 + 2 * 2));
    assert_eq!(panel_scale(8), 8);
}

#[test]
fn panels_from_a_store() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("c");
    let mut cfg = TrisConfig::new(Scenario::Lin, BackgroundKind::White, 8);
    cfg.n_samples = 40;
    cfg.split = SplitFractions { train: 0.5, val: 0.25, test: 0.25 };
    let mut m = ChallengeManifest::new("c", 1, GeneratorConfig::Tris(cfg), ModelSpec::llr(8, 8));
    m.training.epochs = 2;
    build_challenge(&m, &dir).unwrap();
    let ideal = run_challenge(&dir, &MethodSpec::Ideal, RunOptions { self_test: true }).unwrap();
    run_challenge(&dir, &MethodSpec::Gradient, RunOptions::default()).unwrap();
    let before = std::fs::read(dir.join("leaderboard.json")).unwrap();

    let spec = PanelSpec { samples: vec![0, 3], methods: vec![ideal.run_id.clone(), "gradient".into()], output: tmp.path().join("p/panel.png"), shared_scale: false };
    let out = render_panel(&dir, &spec).unwrap();
    let img = image::open(&out).unwrap().to_luma8();
    let (w, h) = panel_size(2, 4, 8, 8);
    assert_eq!(img.dimensions(), (w as u32, h as u32));

    // The oracle column matches the ground-truth column pixel for pixel.
    let cell = 64;
    for row in 0..2 {
        let y0 = CAPTION_H + GAP + row * (cell + GAP);
        for y in y0..y0 + cell {
            for x in 0..cell {
                let truth = img.get_pixel((GAP + (cell + GAP) + x) as u32, y as u32);
                let oracle = img.get_pixel((GAP + 2 * (cell + GAP) + x) as u32, y as u32);
                assert_eq!(truth, oracle);
            }
        }
    }
    let again = tmp.path().join("again.png");
    render_panel(&dir, &PanelSpec { output: again.clone(), ..spec.clone() }).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
    assert_eq!(std::fs::read(dir.join("leaderboard.json")).unwrap(), before);

    let missing = PanelSpec { methods: vec!["occlusion".into()], ..spec.clone() };
    assert!(matches!(render_panel(&dir, &missing), Err(Error::Store(_))));
    let shared = PanelSpec { shared_scale: true, output: tmp.path().join("s.png"), ..spec };
    render_panel(&dir, &shared).unwrap();
}
