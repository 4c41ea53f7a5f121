//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line; run with
//! `cargo test -p depthforge --test acceptance -- --nocapture` to see them.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use depthforge::acw::{
    self, backward, confidence_loss, cosine_logits, interpolate_logits, total_loss,
    AcwTrainConfig, BatchGradient, ClassPrototypes, ConfidenceHead, EmbeddingSet, ModalityTerm,
    ProbeModality, TrainModality,
};
use depthforge::datagen::{self, GenConfig};
use depthforge::evalkit::{self, EvalReport, FusionMode, Probe, Protocol, ToyConfig};
use depthforge::model3d::{self, Mesh, ShapeCoefficients};
use depthforge::render::{depth_to_normals, render_depth, Camera, HemisphereRig, Intrinsics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn criterion(name: &str, budget: Option<Duration>, body: impl FnOnce() -> String) {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    match outcome {
        Ok(detail) => {
            if let Some(limit) = budget {
                if elapsed > limit {
                    println!("[FAIL] {name}: took {elapsed:.2?}, limit {limit:?}");
                    panic!("{name} exceeded its runtime limit");
                }
            }
            println!("[PASS] {name}: {detail} ({elapsed:.2?})");
        }
        Err(e) => {
            println!("[FAIL] {name} ({elapsed:.2?})");
            panic::resume_unwind(e);
        }
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    diff / scale
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

#[test]
fn ac1_linear_shape_model() {
    criterion("AC1 linear shape model", Some(Duration::from_secs(5)), || {
        let mut worst: f64 = 0.0;
        for inst in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
            let rings = rng.random_range(4..12);
            let (kid, kexp) = (rng.random_range(0..8), rng.random_range(0..6));
            let model = model3d::make_toy_model(inst, rings, kid, kexp).unwrap();

            let zero = model3d::synthesize_shape(&model, &ShapeCoefficients::zeros(&model)).unwrap();
            assert!(zero
                .vertices
                .iter()
                .zip(model.mean_shape())
                .all(|(a, b)| a.to_bits() == b.to_bits()));

            let a = model3d::sample_coefficients(&mut rng, &model, 3.0).unwrap();
            let b = model3d::sample_coefficients(&mut rng, &model, 3.0).unwrap();
            let (s, t): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let combo = ShapeCoefficients {
                alpha_id: a.alpha_id.iter().zip(&b.alpha_id).map(|(x, y)| s * x + t * y).collect(),
                alpha_exp: a.alpha_exp.iter().zip(&b.alpha_exp).map(|(x, y)| s * x + t * y).collect(),
            };
            let mean = model.mean_shape();
            let disp = |c: &ShapeCoefficients| -> Vec<f64> {
                let m = model3d::synthesize_shape(&model, c).unwrap();
                m.vertices.iter().zip(mean).map(|(v, m)| v - m).collect()
            };
            let (da, db, dc) = (disp(&a), disp(&b), disp(&combo));
            let expect: Vec<f64> = da.iter().zip(&db).map(|(x, y)| s * x + t * y).collect();

            // independent evaluation straight from the basis columns
            let mut oracle = vec![0.0; mean.len()];
            for k in 0..model.id_dim() {
                let w = combo.alpha_id[k] * model.id_sigma()[k];
                oracle.iter_mut().zip(model.id_column(k)).for_each(|(o, e)| *o += w * e);
            }
            for k in 0..model.exp_dim() {
                let w = combo.alpha_exp[k] * model.exp_sigma()[k];
                oracle.iter_mut().zip(model.exp_column(k)).for_each(|(o, e)| *o += w * e);
            }
            if oracle.iter().any(|&v| v != 0.0) {
                worst = worst.max(rel_err(&dc, &expect)).max(rel_err(&dc, &oracle));
            }
        }
        assert!(worst < 1e-9, "worst relative error {worst:e}");
        format!("100 instances, worst superposition error {worst:.1e}")
    });
}

fn front_camera(distance: f64, focal: f64, res: usize) -> Camera {
    Camera::orbit(0.0, 0.0, distance, [0.0; 3], Intrinsics::centered(focal, res))
        .unwrap()
        .with_clip(100.0, 3000.0)
        .unwrap()
}

fn uv_sphere(r: f64, rings: usize, segments: usize) -> Mesh {
    let mut v = Vec::new();
    for i in 0..=rings {
        let theta = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
            v.extend([r * theta.sin() * phi.cos(), r * theta.cos(), r * theta.sin() * phi.sin()]);
        }
    }
    let mut t = Vec::new();
    for i in 0..rings {
        for j in 0..segments {
            let a = (i * segments + j) as u32;
            let b = (i * segments + (j + 1) % segments) as u32;
            let c = a + segments as u32;
            let d = b + segments as u32;
            t.push([a, c, b]);
            t.push([b, c, d]);
        }
    }
    Mesh::new(v, t)
}

/// Camera-space ray through the center of pixel (i, j).
fn ray(intr: &Intrinsics, i: usize, j: usize) -> [f64; 3] {
    [
        (i as f64 + 0.5 - intr.cx) / intr.focal,
        (j as f64 + 0.5 - intr.cy) / intr.focal,
        1.0,
    ]
}

fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    (d / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

#[test]
fn ac2_renderer_oracles() {
    criterion("AC2 renderer oracles", Some(Duration::from_secs(30)), || {
        // fronto-parallel plane at 799.7 mm
        let cam = front_camera(800.0, 200.0, 128);
        let h = 100.0;
        let plane = Mesh::new(
            vec![-h, -h, 0.3, h, -h, 0.3, h, h, 0.3, -h, h, 0.3],
            vec![[0, 1, 2], [0, 2, 3]],
        );
        let depth = render_depth(&plane, &cam);
        let z = cam.to_view([0.0, 0.0, 0.3])[2];
        let mut plane_px = 0;
        for j in 0..128 {
            for i in 0..128 {
                let r = ray(&cam.intrinsics, i, j);
                let inside = (r[0] * z).abs() < h && (r[1] * z).abs() < h;
                let d = depth.get(i, j);
                if inside {
                    assert_eq!(d, z.round() as u16, "plane pixel ({i},{j})");
                    plane_px += 1;
                } else {
                    assert_eq!(d, 0);
                }
            }
        }

        // sphere depth against the analytic ray/sphere hit
        let (radius, dist) = (300.0, 1200.0);
        let cam = front_camera(dist, 200.0, 128);
        let depth = render_depth(&uv_sphere(radius, 128, 256), &cam);
        let normals = depth_to_normals(&depth, &cam.intrinsics);
        let c = cam.to_view([0.0; 3]);
        let (mut worst_depth, mut interior, mut ang_sum, mut ang_n) = (0.0f64, 0, 0.0, 0);
        for j in 0..128 {
            for i in 0..128 {
                let d = ray(&cam.intrinsics, i, j);
                let dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let dc = d[0] * c[0] + d[1] * c[1] + d[2] * c[2];
                let cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
                let closest = (cc - dc * dc / dd).max(0.0).sqrt();
                if closest > 0.9 * radius {
                    continue;
                }
                interior += 1;
                let t = (dc - (dc * dc - dd * (cc - radius * radius)).sqrt()) / dd;
                let err = (depth.get(i, j) as f64 - t).abs();
                worst_depth = worst_depth.max(err);
                let p = [d[0] * t, d[1] * t, d[2] * t];
                let analytic = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
                if let Some(n) = normals.normal(i, j) {
                    ang_sum += angle_deg(n, analytic);
                    ang_n += 1;
                }
            }
        }
        assert!(interior > 2000 && ang_n > 2000);
        assert!(worst_depth <= 1.0, "sphere depth error {worst_depth}");
        let mean_angle = ang_sum / ang_n as f64;
        assert!(mean_angle < 3.0, "sphere normal error {mean_angle} deg");

        // plane tilted 45 degrees about the vertical axis
        let cam = front_camera(1500.0, 100.0, 128);
        let (s, half) = (std::f64::consts::FRAC_1_SQRT_2, 400.0);
        let corner = |u: f64, v: f64| [u * s, v, u * s];
        let mut verts = Vec::new();
        for (u, v) in [(-half, -half), (half, -half), (half, half), (-half, half)] {
            verts.extend(corner(u, v));
        }
        let tilted = Mesh::new(verts, vec![[0, 1, 2], [0, 2, 3]]);
        let depth = render_depth(&tilted, &cam);
        let normals = depth_to_normals(&depth, &cam.intrinsics);
        let rot = cam.rotation();
        let world_n = [s, 0.0, -s];
        let mut n_cam = [0.0; 3];
        for k in 0..3 {
            n_cam[k] = rot[k].iter().zip(&world_n).map(|(a, b)| a * b).sum();
        }
        if n_cam[2] > 0.0 {
            n_cam = n_cam.map(|v| -v);
        }
        let (mut worst_tilt, mut tilt_px) = (0.0f64, 0);
        for j in 0..128 {
            for i in 0..128 {
                if let Some(n) = normals.normal(i, j) {
                    let e = ((n[0] - n_cam[0]).powi(2) + (n[1] - n_cam[1]).powi(2) + (n[2] - n_cam[2]).powi(2)).sqrt();
                    worst_tilt = worst_tilt.max(e);
                    tilt_px += 1;
                }
            }
        }
        assert!(tilt_px > 500, "only {tilt_px} tilted-plane normals");
        assert!(worst_tilt <= 0.03, "tilted normal error {worst_tilt}");
        format!(
            "plane {plane_px} px exact; sphere max depth err {worst_depth:.3} mm over {interior} px, \
             mean normal err {mean_angle:.2} deg; tilted max normal err {worst_tilt:.4} over {tilt_px} px"
        )
    });
}

#[test]
fn ac3_generation_scale_and_determinism() {
    criterion("AC3 generation scale law and determinism", None, || {
        let model = model3d::make_toy_model(3, 32, 20, 10).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let config = |dir: &std::path::Path| GenConfig {
            n_identities: 10,
            n_random_expressions: 40,
            cameras: HemisphereRig::default(),
            seed: 2024,
            out_dir: dir.to_path_buf(),
            trunc: 3.0,
        };
        let t0 = Instant::now();
        let ma = datagen::generate_dataset_with_threads(&model, &config(a.path()), 1).unwrap();
        let t1 = t0.elapsed();
        let mb = datagen::generate_dataset_with_threads(&model, &config(b.path()), 4).unwrap();
        let t2 = t0.elapsed() - t1;

        let count = |root: &std::path::Path, ext: &str| {
            walk(root).into_iter().filter(|p| p.extension().is_some_and(|e| e == ext)).count()
        };
        for root in [a.path(), b.path()] {
            assert_eq!(count(root, "pgm"), 4920);
            assert_eq!(count(root, "ppm"), 4920);
        }
        assert_eq!(ma.total_count, 4920);
        assert_eq!(ma.entries, mb.entries);
        let diffs = datagen::diff_datasets(&ma, a.path(), &mb, b.path());
        assert!(diffs.is_empty(), "{} differing files, first {:?}", diffs.len(), diffs.first());
        let report = datagen::verify_dataset(&ma, a.path(), &Default::default());
        assert!(report.is_clean(), "{:?}", report.violations.first());
        format!(
            "4920 depth + 4920 normal files, bit-identical at 1 and 4 threads \
             ({t1:.1?} and {t2:.1?} on {} hardware threads)",
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        )
    });
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn flat(g: &BatchGradient) -> Vec<f64> {
    let mut v = g.w1.clone();
    v.extend(&g.b1);
    v.extend(&g.w2);
    v.push(g.b2);
    v
}

#[test]
fn ac4_loss_and_gradient_correctness() {
    criterion("AC4 loss and gradient correctness", Some(Duration::from_secs(30)), || {
        let z = [0.37, -0.81, 0.05, 0.66];
        assert_eq!(interpolate_logits(&z, 1, 1.0), z.to_vec());
        assert_eq!(interpolate_logits(&z, 1, 0.0), vec![0.0, 1.0, 0.0, 0.0]);
        assert!((confidence_loss(0.5) - 0.693_147_180_559_945_3).abs() < 1e-9);

        let (classes, dim, hidden, h) = (7, 16, 8, 1e-5);
        let mut worst: f64 = 0.0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut head = ConfidenceHead::init(dim, hidden, &mut rng);
            head.b1 = gaussian(&mut rng, hidden).iter().map(|v| 0.3 * v).collect();
            head.b2 = rng.random_range(-1.0..1.0);
            let protos = ClassPrototypes::new(dim, gaussian(&mut rng, classes * dim)).unwrap();
            let xs: Vec<Vec<f64>> = (0..5).map(|_| gaussian(&mut rng, dim)).collect();
            let ys: Vec<usize> = (0..5).map(|_| rng.random_range(0..classes)).collect();
            let (lambda, tau) = (rng.random_range(0.0..0.5), rng.random_range(1.0..10.0));

            let loss = |head: &ConfidenceHead| -> f64 {
                xs.iter()
                    .zip(&ys)
                    .map(|(x, &y)| {
                        let z = cosine_logits(&protos, x).unwrap();
                        let c = head.confidence(x).unwrap();
                        total_loss(&[ModalityTerm { logits: &z, label: y, confidence: c }], lambda, tau)
                    })
                    .sum::<f64>()
                    / xs.len() as f64
            };
            let n_params = head.parameter_count();
            let mut numeric = Vec::with_capacity(n_params);
            for k in 0..n_params {
                let nudge = |delta: f64| {
                    let mut p = head.clone();
                    let (n1, n2) = (p.w1.len(), p.b1.len());
                    match k {
                        k if k < n1 => p.w1[k] += delta,
                        k if k < n1 + n2 => p.b1[k - n1] += delta,
                        k if k < n_params - 1 => p.w2[k - n1 - n2] += delta,
                        _ => p.b2 += delta,
                    }
                    loss(&p)
                };
                numeric.push((nudge(h) - nudge(-h)) / (2.0 * h));
            }
            let batch: Vec<(&[f64], usize)> = xs.iter().map(|x| x.as_slice()).zip(ys.iter().copied()).collect();
            let analytic = flat(&backward(&head, &protos, &batch, lambda, tau).unwrap());
            let e = rel_err(&analytic, &numeric);
            worst = worst.max(e);
            assert!(e < 1e-4, "seed {seed}: relative error {e:e}");
        }
        format!("endpoints exact, -log 0.5 ok, worst gradient error {worst:.1e} over 100 instances")
    });
}

/// Rank-1 recount from raw similarity matrices, without the library's
/// gallery or fusion code.
fn brute_force_rank1(protocol: &Protocol, weight: impl Fn(&Probe, &str) -> Option<f64>) -> (usize, f64) {
    let unit = |v: &[f64]| -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    };
    let mut correct = 0;
    for probe in &protocol.probes {
        let mut fused = vec![0.0; protocol.classes];
        for m in &probe.modalities {
            let Some(w) = weight(probe, &m.modality) else { continue };
            let g = &protocol.gallery[&m.modality];
            let mut best = vec![-1.0f64; protocol.classes];
            let mut seen = vec![false; protocol.classes];
            let p = unit(&m.vector);
            for r in 0..g.len() {
                let row = unit(&g.row_f64(r));
                let s: f64 = row.iter().zip(&p).map(|(a, b)| a * b).sum();
                let l = g.labels[r] as usize;
                if !seen[l] || s > best[l] {
                    best[l] = s;
                    seen[l] = true;
                }
            }
            fused.iter_mut().zip(&best).for_each(|(f, s)| *f += w * s);
        }
        let mut pred = 0;
        for i in 1..fused.len() {
            if fused[i] > fused[pred] {
                pred = i;
            }
        }
        correct += (pred == probe.label as usize) as usize;
    }
    (correct, 100.0 * correct as f64 / protocol.probes.len() as f64)
}

fn toy_run() -> (evalkit::ToyData, BTreeMap<String, ConfidenceHead>) {
    let toy = evalkit::synth_toy_embeddings(&ToyConfig::default()).unwrap();
    let mods: Vec<TrainModality<'_>> = toy
        .train
        .iter()
        .zip(&toy.prototypes)
        .map(|(e, p)| TrainModality { embeddings: e, prototypes: p })
        .collect();
    let out = acw::train(&mods, &AcwTrainConfig::default(), 7).unwrap();
    let heads = out.modalities.iter().cloned().zip(out.heads.iter().cloned()).collect();
    (toy, heads)
}

#[test]
fn ac5_acw_beats_fixed_fusion() {
    criterion("AC5 ACW trend on the toy protocol", Some(Duration::from_secs(60)), || {
        let (toy, heads) = toy_run();
        let p = &toy.protocol;
        let single_a = evalkit::evaluate(p, None, &FusionMode::Single("rgb".into())).unwrap();
        let single_b = evalkit::evaluate(p, None, &FusionMode::Single("depth".into())).unwrap();
        let fixed = evalkit::evaluate(p, None, &FusionMode::Fixed(vec![1.0, 1.0])).unwrap();
        let fused = evalkit::evaluate(p, Some(&heads), &FusionMode::Acw).unwrap();

        let conf = |probe: &Probe, m: &str| -> Option<f64> {
            let v = &probe.modalities.iter().find(|x| x.modality == m)?.vector;
            Some(heads[m].confidence(v).unwrap())
        };
        assert_eq!(brute_force_rank1(p, |_, m| (m == "rgb").then_some(1.0)).1, single_a.overall_rank1);
        assert_eq!(brute_force_rank1(p, |_, m| (m == "depth").then_some(1.0)).1, single_b.overall_rank1);
        assert_eq!(brute_force_rank1(p, |_, _| Some(1.0)).1, fixed.overall_rank1);
        assert_eq!(brute_force_rank1(p, conf).1, fused.overall_rank1);

        assert!(single_b.overall_rank1 < single_a.overall_rank1);
        assert!(
            fused.overall_rank1 >= fixed.overall_rank1 + 1.0,
            "acw {} vs fixed {}",
            fused.overall_rank1,
            fixed.overall_rank1
        );
        assert!(fused.overall_rank1 >= single_a.overall_rank1);
        assert!(fused.overall_rank1 >= single_b.overall_rank1);
        format!(
            "rank-1 rgb {:.1}, depth {:.1}, fixed {:.1}, acw {:.1}",
            single_a.overall_rank1, single_b.overall_rank1, fixed.overall_rank1, fused.overall_rank1
        )
    });
}

#[test]
fn ac6_confidence_tracks_quality() {
    criterion("AC6 confidence/quality correlation", Some(Duration::from_secs(60)), || {
        let (toy, heads) = toy_run();
        let r: EvalReport = evalkit::evaluate(&toy.protocol, Some(&heads), &FusionMode::Acw).unwrap();
        let clean = r.mean_confidence("depth", Some(evalkit::TAG_CLEAN)).unwrap();
        let corrupted = r.mean_confidence("depth", Some(evalkit::TAG_CORRUPTED_B)).unwrap();
        assert!(clean - corrupted >= 0.05, "clean {clean:.4} corrupted {corrupted:.4}");
        format!("mean depth confidence clean {clean:.4}, corrupted {corrupted:.4}, drop {:.4}", clean - corrupted)
    });
}

#[test]
fn ac7_missing_modality() {
    criterion("AC7 missing-modality robustness", None, || {
        let (toy, heads) = toy_run();
        let mut details = Vec::new();
        for keep in ["rgb", "depth"] {
            let mut p = toy.protocol.clone();
            for probe in &mut p.probes {
                probe.modalities.retain(|m| m.modality == keep);
            }
            let fused = evalkit::evaluate(&p, Some(&heads), &FusionMode::Acw).unwrap();
            let single = evalkit::evaluate(&toy.protocol, None, &FusionMode::Single(keep.into())).unwrap();
            let protos = &toy.prototypes[if keep == "rgb" { 0 } else { 1 }];
            for ((f, s), probe) in fused.probes.iter().zip(&single.probes).zip(&p.probes) {
                let z = cosine_logits(protos, &probe.modalities[0].vector).unwrap();
                let argmax = acw::argmax(&z).unwrap();
                assert_eq!(f.prediction, argmax, "probe {}", probe.id);
                assert_eq!(s.prediction, argmax, "probe {}", probe.id);
                assert_eq!(f.confidences.len(), 1);
            }
            assert_eq!(fused.overall_rank1, single.overall_rank1);
            details.push(format!("{keep}-only {:.1}", fused.overall_rank1));
        }
        format!("{} (probe-for-probe equal to cosine argmax)", details.join(", "))
    });
}

#[test]
fn ac8_rank1_oracle_equivalence() {
    criterion("AC8 rank-1 oracle equivalence", None, || {
        let mut rates = Vec::new();
        for inst in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + inst);
            let (classes, dim) = (rng.random_range(3..9), rng.random_range(4..12));
            let mut gallery = Vec::new();
            for m in ["rgb", "depth"] {
                let per = rng.random_range(1..4);
                let labels: Vec<u32> = (0..classes * per).map(|k| (k % classes) as u32).collect();
                let v: Vec<f32> = gaussian(&mut rng, labels.len() * dim).iter().map(|&x| x as f32).collect();
                gallery.push(EmbeddingSet::new(m, dim, labels, v).unwrap());
            }
            let labels: Vec<u32> = (0..20).map(|_| rng.random_range(0..classes as u32)).collect();
            let probes: Vec<EmbeddingSet> = ["rgb", "depth"]
                .iter()
                .map(|m| {
                    let v: Vec<f32> = labels
                        .iter()
                        .flat_map(|&l| {
                            let g = &gallery[if *m == "rgb" { 0 } else { 1 }];
                            let row = g.row_f64(l as usize);
                            let noise = gaussian(&mut rng, dim);
                            row.iter().zip(noise).map(|(r, n)| (r + 0.9 * n) as f32).collect::<Vec<_>>()
                        })
                        .collect();
                    EmbeddingSet::new(*m, dim, labels.clone(), v).unwrap()
                })
                .collect();
            let tags = (0..20).map(|i| if i % 3 == 0 { "a" } else { "b" }.to_string()).collect();
            let mut protocol = Protocol::from_sets(gallery, probes, Some(tags)).unwrap();
            // drop one modality from a few probes to exercise partial probes
            for probe in protocol.probes.iter_mut().step_by(7) {
                probe.modalities.truncate(1);
            }
            let heads: BTreeMap<String, ConfidenceHead> = ["rgb", "depth"]
                .iter()
                .map(|m| (m.to_string(), ConfidenceHead::init(dim, 6, &mut rng)))
                .collect();
            let w = [rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)];

            let fixed = evalkit::evaluate(&protocol, None, &FusionMode::Fixed(w.to_vec())).unwrap();
            let oracle = brute_force_rank1(&protocol, |_, m| Some(if m == "rgb" { w[0] } else { w[1] }));
            assert_eq!(fixed.overall_rank1, oracle.1, "instance {inst} fixed");

            let fused = evalkit::evaluate(&protocol, Some(&heads), &FusionMode::Acw).unwrap();
            let oracle = brute_force_rank1(&protocol, |probe, m| {
                let v: &ProbeModality = probe.modalities.iter().find(|x| x.modality == m)?;
                Some(heads[m].confidence(&v.vector).unwrap())
            });
            assert_eq!(fused.overall_rank1, oracle.1, "instance {inst} acw");
            let by_subset: usize = fused.subsets.values().map(|s| s.correct).sum();
            assert_eq!(by_subset, oracle.0);
            rates.push(format!("{:.0}", fused.overall_rank1));
        }
        format!("10 instances x 20 probes match the recount (acw rates {})", rates.join(" "))
    });
}
