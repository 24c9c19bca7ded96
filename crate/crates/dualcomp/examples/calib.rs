// Scratch calibration runs; deleted before release.

use dualcomp::config::RunConfig;
use dualcomp::lexicon::Lexicon;
use dualcomp::pipeline::compress_grid;
use dualcomp::router::{train_router, InstructionRepr, RouterDims, RouterModel, TaskPolicy};
use dualcomp::scene::{
    self, embed_text, generate_scene, lexicon_corpus, path_recall, object_preservation,
    SceneSpec, TaskKind, Variant,
};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "router" => router_calib(),
        "scene" => scene_calib(),
        "dump" => {
            let seed = std::env::args()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            dump_seed(seed);
        }
        _ => {
            router_calib();
            scene_calib();
        }
    }
}

fn dump_seed(seed: u64) {
    use dualcomp::fusion::Stream;
    use dualcomp::grid::{Coord, TokenSource};
    let config = RunConfig::default();
    let spec = SceneSpec {
        seed,
        n_objects: 2,
        object_size_range: (4, 6),
        n_roads: 1,
        n_clutter: 0,
        task_kind: TaskKind::Geometric,
        ..Default::default()
    };
    let (grid, truth) = generate_scene(&spec).unwrap();
    let policy = TaskPolicy { lambda: 0.9, rho: 0.05 };
    let full = compress_grid(&grid, &policy, &config, &Variant::Full.options()).unwrap();
    let topk = compress_grid(&grid, &policy, &config, &Variant::TopK.options()).unwrap();
    let (h, w) = (truth.height, truth.width);
    let geo_cells = |out: &dualcomp::pipeline::PipelineOutput| -> Vec<Coord> {
        out.sequence
            .tokens
            .iter()
            .filter(|t| t.stream == Stream::Geometric)
            .filter_map(|t| match t.source {
                TokenSource::Cell(c) => Some(c),
                _ => None,
            })
            .collect()
    };
    let anchors: Vec<Coord> = full.anchors.as_ref().unwrap().anchors.clone();
    println!("anchors: {anchors:?}");
    println!("budget: {:?}", full.budget);
    for (label, cells) in [("FULL", geo_cells(&full)), ("TOPK", geo_cells(&topk))] {
        let (recall, conn, _) = path_recall(
            if label == "FULL" { &full.sequence } else { &topk.sequence },
            &truth,
            1,
        );
        println!("{label}: {} geo tokens, recall {recall:.3}, connected {conn:?}", cells.len());
        for r in 0..h {
            let mut line = String::new();
            for c in 0..w {
                let coord = Coord::new(r, c);
                let i = r * w + c;
                let road = truth.road_masks.iter().any(|m| m[i]);
                let ch = if cells.contains(&coord) && label == "FULL" && anchors.contains(&coord) {
                    'A'
                } else if cells.contains(&coord) {
                    if road { '#' } else { '+' }
                } else if truth.object_mask[i] {
                    'O'
                } else if road {
                    '.'
                } else {
                    ' '
                };
                line.push(ch);
            }
            println!("  {line}");
        }
    }
    // Cost stats along roads.
    let field = full.field.as_ref().unwrap();
    let mut road_costs: Vec<f64> = Vec::new();
    for i in 0..h * w {
        if truth.road_masks.iter().any(|m| m[i]) {
            road_costs.push(field.s_struct[i]);
        }
    }
    road_costs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    println!(
        "road cells {}: cost max {:.3} median {:.3} min {:.3}",
        road_costs.len(),
        road_costs[0],
        road_costs[road_costs.len() / 2],
        road_costs[road_costs.len() - 1]
    );
    let mut object_costs: Vec<f64> = (0..h * w)
        .filter(|&i| truth.object_mask[i])
        .map(|i| field.s_struct[i])
        .collect();
    object_costs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if !object_costs.is_empty() {
        println!(
            "object cells {}: cost max {:.3} median {:.3}",
            object_costs.len(),
            object_costs[0],
            object_costs[object_costs.len() / 2]
        );
    }
}

fn router_calib() {
    let config = RunConfig::default();
    let lexicon = Lexicon::default();
    let corpus = lexicon_corpus(
        &lexicon,
        300,
        768,
        &config.router.rho_targets,
        0.5,
        0.01,
        42,
    )
    .unwrap();
    let model = RouterModel::init(RouterDims::default(), 0.01, 42).unwrap();
    for lr in [0.02f64, 0.05, 0.1, 0.2, 0.4] {
        let start = std::time::Instant::now();
        let (trained, log) = train_router(&model, &corpus, 2000, lr, 43).unwrap();
        let mut geo_min = 1.0f64;
        let mut sem_max = 0.0f64;
        let mut rng = dualcomp::rng::SplitMix64::new(777);
        for _ in 0..20 {
            let phrase = scene::sample_phrase(&lexicon, TaskKind::Geometric, &mut rng);
            let input = InstructionRepr::new(embed_text(&phrase, 768)).unwrap();
            let p = trained.forward(&input).unwrap();
            geo_min = geo_min.min(p.lambda);
            let phrase = scene::sample_phrase(&lexicon, TaskKind::Semantic, &mut rng);
            let input = InstructionRepr::new(embed_text(&phrase, 768)).unwrap();
            let p = trained.forward(&input).unwrap();
            sem_max = sem_max.max(p.lambda);
        }
        println!(
            "lr {:.2}: loss {:.4} -> {:.4} (reduction {:.1}%), holdout geo min λ {:.3}, sem max λ {:.3}, {:.1}s",
            lr,
            log.initial_corpus_loss,
            log.final_corpus_loss,
            100.0 * (1.0 - log.final_corpus_loss / log.initial_corpus_loss),
            geo_min,
            sem_max,
            start.elapsed().as_secs_f64()
        );
    }
}

fn scene_calib() {
    for (label, base) in [
        (
            "28x28 1road obj2(3-5)",
            SceneSpec {
                height: 28,
                width: 28,
                n_objects: 2,
                object_size_range: (3, 5),
                n_roads: 1,
                n_clutter: 0,
                ..Default::default()
            },
        ),
        (
            "28x28 1road obj3(3-5)",
            SceneSpec {
                height: 28,
                width: 28,
                n_objects: 3,
                object_size_range: (3, 5),
                n_roads: 1,
                n_clutter: 0,
                ..Default::default()
            },
        ),
        (
            "28x28 1road obj2(4-6)",
            SceneSpec {
                height: 28,
                width: 28,
                n_objects: 2,
                object_size_range: (4, 6),
                n_roads: 1,
                n_clutter: 0,
                ..Default::default()
            },
        ),
        (
            "24x24 1road obj2(3-5)",
            SceneSpec {
                n_objects: 2,
                object_size_range: (3, 5),
                n_roads: 1,
                n_clutter: 0,
                ..Default::default()
            },
        ),
    ] {
        println!("--- {label} ---");
        scene_calib_with(base);
    }
}

fn scene_calib_with(base: SceneSpec) {
    let config = RunConfig::default();
    let mut full_wins = 0;
    let mut ties = 0;
    let mut preservation_fail = 0;
    let mut full_conn = 0;
    let mut topk_conn = 0;
    let mut min_margin = f64::INFINITY;
    let mut full_recall_sum = 0.0;
    let mut topk_recall_sum = 0.0;
    for seed in 0..100u64 {
        // (b) geometric ordering at rho = 0.05, λ = 0.9.
        let spec = SceneSpec {
            seed,
            task_kind: TaskKind::Geometric,
            ..base
        };
        let (grid, truth) = generate_scene(&spec).unwrap();
        let policy = TaskPolicy { lambda: 0.9, rho: 0.05 };
        let full = compress_grid(&grid, &policy, &config, &Variant::Full.options()).unwrap();
        let topk = compress_grid(&grid, &policy, &config, &Variant::TopK.options()).unwrap();
        let (fr, fconn, _) = path_recall(&full.sequence, &truth, 1);
        let (tr, tconn, _) = path_recall(&topk.sequence, &truth, 1);
        full_recall_sum += fr;
        topk_recall_sum += tr;
        if fr > tr {
            full_wins += 1;
        } else if fr == tr {
            ties += 1;
        }
        min_margin = min_margin.min(fr - tr);
        if fconn.iter().all(|&c| c) {
            full_conn += 1;
        }
        if tconn.iter().all(|&c| c) {
            topk_conn += 1;
        }

        // (a) semantic preservation at λ = 0.1 as rho drops to 0.04.
        let spec = SceneSpec {
            seed,
            task_kind: TaskKind::Semantic,
            ..base
        };
        let (grid, truth) = generate_scene(&spec).unwrap();
        let policy = TaskPolicy { lambda: 0.1, rho: 0.04 };
        let out = compress_grid(&grid, &policy, &config, &Variant::Full.options()).unwrap();
        let (p, _) = object_preservation(&out.sequence, out.clusters.as_ref(), &truth);
        if p < 0.95 {
            preservation_fail += 1;
            if preservation_fail < 5 {
                println!("  seed {seed}: preservation {p:.3}, tokens {}", out.sequence.tokens.len());
            }
        }
    }
    println!(
        "geometric: full wins {full_wins}/100 (ties {ties}), mean recall full {:.3} vs topk {:.3}, min margin {:.3}",
        full_recall_sum / 100.0,
        topk_recall_sum / 100.0,
        min_margin
    );
    println!("connectivity: full all-connected {full_conn}/100, topk {topk_conn}/100");
    println!("semantic: preservation < 0.95 in {preservation_fail}/100 seeds");
}
