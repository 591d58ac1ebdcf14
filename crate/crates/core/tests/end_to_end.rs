use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use colhybrid::par::Exec;
use colhybrid::pipeline::{load_trace, run_pipeline, summary_csv, Dirs, ExperimentConfig};
use colhybrid::sched::Strategy;
use colhybrid::sim::HardwareConfig;
use colhybrid::workload::{LayerDescriptor, Network, Shape};

fn config(out: &Path) -> ExperimentConfig {
    let conv = LayerDescriptor {
        name: "conv".into(),
        shape: Shape::Conv {
            cin: 8,
            h: 6,
            w: 6,
            cout: 48,
            kernel: 3,
            stride: 1,
            pad: 1,
        },
        act_density: 0.5,
        weight_density: 0.3,
        zipf: 1.3,
    };
    let fc = LayerDescriptor {
        name: "fc".into(),
        shape: Shape::Gemm { m: 4, k: 288, n: 40 },
        act_density: 0.2,
        weight_density: 0.4,
        zipf: 0.8,
    };
    ExperimentConfig {
        networks: vec![
            Network {
                name: "small".into(),
                layers: vec![conv.clone(), fc.clone()],
            },
            Network {
                name: "fc_only".into(),
                layers: vec![fc],
            },
        ],
        hardware: HardwareConfig {
            snn_pes: 3,
            ann_pes: 3,
            ..Default::default()
        },
        strategies: vec![Strategy::Cost, Strategy::Random, Strategy::AnnOnly, Strategy::SnnOnly],
        seeds: vec![1, 2],
        samples: 4,
        out: out.to_path_buf(),
        ..Default::default()
    }
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn every_schedule_computes_the_same_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let rows = run_pipeline(Exec::default(), &cfg).unwrap();
    assert_eq!(rows.len(), 2 * 5);

    for net in ["small", "fc_only"] {
        let of_net: Vec<_> = rows.iter().filter(|r| r.network == net).collect();
        let tags: Vec<&str> = of_net.iter().map(|r| r.tag.as_str()).collect();
        assert_eq!(tags, ["cost", "random-1", "random-2", "ann-only", "snn-only"]);
        assert!(of_net
            .iter()
            .all(|r| r.report.output_hashes == of_net[0].report.output_hashes));
    }

    let csv = summary_csv(&rows);
    let ann = csv.lines().find(|l| l.starts_with("small,ann-only,")).unwrap();
    assert!(ann.ends_with(",1.000000,1.000000"), "{ann}");
    assert_eq!(fs::read_to_string(Dirs::new(dir.path()).summary()).unwrap(), csv);

    let trace = load_trace(&Dirs::new(dir.path()), &cfg, "small").unwrap();
    assert_eq!(trace.lambdas.len(), 2);
    assert!(trace.refine.iter().all(|r| r.phi.windows(2).all(|w| w[1] <= w[0])));
}

#[test]
fn execution_mode_does_not_change_any_file() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(Exec::Parallel, &config(a.path())).unwrap();
    run_pipeline(Exec::Sequential, &config(b.path())).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.len() > 10);
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ta {
        assert!(bytes == &tb[name], "{name} differs");
    }
}
