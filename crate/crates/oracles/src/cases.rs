//! Equivalence cases: production routine next to its independent reference.

use mdcn::blocks::{
    cam_forward, drb_forward, hfdb_forward, mdcb_forward, msrb_forward, resblock_forward, BlockKind, BlockParams,
    CamParams, ConvSpec, DrbParams, HfdbParams, Hierarchy, MdcbParams, Paths,
};
use mdcn::data::{augment, decode_ppm, degrade, resize_plane, Image, PairSet, Plane};
use mdcn::metrics;
use mdcn::model::{build, encode_checkpoint, param_count, Model, ModelConfig, ParameterStore, Partition, StoreBinder};
use mdcn::optim::{adam_step, sample_batch, AdamState, TrainConfig};
use mdcn::tensor::{Tape, Tensor};
use mdcn::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{self, Weights};
use crate::reference::{self, Arr};
use crate::{adam, resample, Case, Comparison, Measure, Module};

fn random_arr(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Arr {
    let mut a = Arr::zeros(n, c, h, w);
    a.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    a
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

/// A store holding random weights and biases for the listed layers.
fn store_for(specs: &[ConvSpec], seed: u64) -> ParameterStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    for s in specs {
        let bound = 1.0 / ((s.in_c * s.kernel * s.kernel) as f64).sqrt();
        let w = random_tensor(&mut rng, [s.out_c, s.in_c, s.kernel, s.kernel], bound);
        store
            .insert(
                format!("{}.weight", s.name),
                w,
                vec![s.out_c, s.in_c, s.kernel, s.kernel],
                Partition::Trunk,
            )
            .expect("fresh name");
        let b = random_tensor(&mut rng, [s.out_c, 1, 1, 1], 0.2);
        store
            .insert(format!("{}.bias", s.name), b, vec![s.out_c], Partition::Trunk)
            .expect("fresh name");
    }
    store
}

/// A built model whose biases are made nonzero so they are exercised.
fn model_with_biases(config: &ModelConfig, seed: u64) -> Result<ParameterStore<f64>> {
    let mut store: ParameterStore<f64> = build(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for (_, p) in store.iter_mut() {
        if p.dims.len() == 1 {
            p.value = random_tensor(&mut rng, [p.dims[0], 1, 1, 1], 0.2);
        }
    }
    Ok(store)
}

fn values(t: &Tensor<f64>) -> Vec<f64> {
    t.data().to_vec()
}

/// Horizontal flip (optional) then `rot` counter-clockwise quarter turns.
fn dihedral(a: &Arr, flip: bool, rot: usize) -> Arr {
    let mut cur = a.clone();
    if flip {
        let mut out = cur.clone();
        for n in 0..a.n {
            for c in 0..a.c {
                for y in 0..a.h {
                    for x in 0..a.w {
                        out.set(n, c, y, a.w - 1 - x, cur.get(n, c, y, x));
                    }
                }
            }
        }
        cur = out;
    }
    for _ in 0..rot {
        let mut out = Arr::zeros(cur.n, cur.c, cur.w, cur.h);
        for n in 0..cur.n {
            for c in 0..cur.c {
                for y in 0..out.h {
                    for x in 0..out.w {
                        out.set(n, c, y, x, cur.get(n, c, x, cur.w - 1 - y));
                    }
                }
            }
        }
        cur = out;
    }
    cur
}

fn undo_dihedral(a: &Arr, flip: bool, rot: usize) -> Arr {
    let back = dihedral(a, false, (4 - rot) % 4);
    if flip {
        dihedral(&back, true, 0)
    } else {
        back
    }
}

fn tensor_core_cases(out: &mut Vec<Case>) {
    for k in [1usize, 3, 5] {
        out.push(Case::new(
            format!("conv2d/loop_k{k}"),
            Module::TensorCore,
            Measure::Absolute,
            1e-6,
            move || {
                let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
                let x = random_arr(&mut rng, 1, 2, 4, 4);
                let w = random_arr(&mut rng, 3, 2, k, k);
                let b = random_arr(&mut rng, 3, 1, 1, 1);
                let mut tape = Tape::<f64>::new();
                let (xv, wv, bv) = (
                    tape.constant(x.to_tensor()),
                    tape.constant(w.to_tensor()),
                    tape.constant(b.to_tensor()),
                );
                let y = tape.conv2d(xv, wv, bv)?;
                Ok(Comparison::new(
                    values(tape.value(y)),
                    reference::conv(&x, &w, &b.data).data,
                ))
            },
        ));
    }
    out.push(Case::new(
        "conv2d/loop_f32",
        Module::TensorCore,
        Measure::Absolute,
        1e-5,
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let x = random_arr(&mut rng, 2, 4, 6, 6);
            let w = random_arr(&mut rng, 4, 4, 3, 3);
            let b = random_arr(&mut rng, 4, 1, 1, 1);
            let mut tape = Tape::<f32>::new();
            let (xv, wv, bv) = (
                tape.constant(x.to_tensor()),
                tape.constant(w.to_tensor()),
                tape.constant(b.to_tensor()),
            );
            let y = tape.conv2d(xv, wv, bv)?;
            // reference on the f32-rounded inputs
            let round = |a: &Arr| Arr::from_tensor(&a.to_tensor::<f32>());
            Ok(Comparison::new(
                tape.value(y).data().iter().map(|&v| f64::from(v)).collect(),
                reference::conv(&round(&x), &round(&w), &round(&b).data).data,
            ))
        },
    ));
    out.push(Case::new(
        "add/elementwise",
        Module::TensorCore,
        Measure::Absolute,
        0.0,
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let a = random_arr(&mut rng, 2, 3, 4, 5);
            let b = random_arr(&mut rng, 2, 3, 4, 5);
            let mut tape = Tape::<f64>::new();
            let (av, bv) = (tape.constant(a.to_tensor()), tape.constant(b.to_tensor()));
            let y = tape.add(av, bv)?;
            Ok(Comparison::new(values(tape.value(y)), reference::add(&a, &b).data))
        },
    ));
    out.push(Case::new(
        "concat_channels/layout",
        Module::TensorCore,
        Measure::Absolute,
        0.0,
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let a = random_arr(&mut rng, 2, 2, 3, 3);
            let b = random_arr(&mut rng, 2, 3, 3, 3);
            let mut tape = Tape::<f64>::new();
            let (av, bv) = (tape.constant(a.to_tensor()), tape.constant(b.to_tensor()));
            let y = tape.concat_channels(&[av, bv])?;
            Ok(Comparison::new(
                values(tape.value(y)),
                reference::concat(&[&a, &b]).data,
            ))
        },
    ));
    out.push(Case::new(
        "global_avg_pool/mean",
        Module::TensorCore,
        Measure::Absolute,
        1e-12,
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let a = random_arr(&mut rng, 2, 8, 5, 7);
            let mut tape = Tape::<f64>::new();
            let av = tape.constant(a.to_tensor());
            let y = tape.global_avg_pool(av)?;
            Ok(Comparison::new(
                values(tape.value(y)),
                reference::global_avg_pool(&a).data,
            ))
        },
    ));
    out.push(Case::new(
        "scale_channels/product",
        Module::TensorCore,
        Measure::Absolute,
        0.0,
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(14);
            let a = random_arr(&mut rng, 2, 3, 4, 4);
            let s = random_arr(&mut rng, 2, 3, 1, 1);
            let mut tape = Tape::<f64>::new();
            let (av, sv) = (tape.constant(a.to_tensor()), tape.constant(s.to_tensor()));
            let y = tape.scale_channels(av, sv)?;
            Ok(Comparison::new(
                values(tape.value(y)),
                reference::scale_channels(&a, &s).data,
            ))
        },
    ));
    for r in [2usize, 3] {
        out.push(Case::new(
            format!("pixel_shuffle/mapping_r{r}"),
            Module::TensorCore,
            Measure::Absolute,
            0.0,
            move || {
                let mut rng = ChaCha8Rng::seed_from_u64(15);
                let a = random_arr(&mut rng, 2, 2 * r * r, 3, 4);
                let y = mdcn::tensor::pixel_shuffle(&a.to_tensor::<f64>(), r)?;
                Ok(Comparison::new(values(&y), reference::pixel_shuffle(&a, r).data))
            },
        ));
    }
    out.push(Case::new(
        "l1_loss/mean_abs",
        Module::TensorCore,
        Measure::Absolute,
        1e-15,
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(16);
            let a = random_arr(&mut rng, 2, 3, 4, 4);
            let b = random_arr(&mut rng, 2, 3, 4, 4);
            let mut tape = Tape::<f64>::new();
            let (av, bv) = (tape.constant(a.to_tensor()), tape.constant(b.to_tensor()));
            let y = tape.l1_loss(av, bv)?;
            Ok(Comparison::scalar(tape.value(y).item()?, reference::l1(&a, &b)))
        },
    ));
}

fn block_cases(out: &mut Vec<Case>) {
    for (fefm, residual) in [(true, true), (false, true), (true, false)] {
        let name = format!("mdcb/straight_line_fefm_{fefm}_residual_{residual}");
        out.push(Case::new(name, Module::Blocks, Measure::Absolute, 1e-6, move || {
            let store = store_for(&MdcbParams::layers("b", 2, Paths::Dual, fefm), 21);
            let mut rng = ChaCha8Rng::seed_from_u64(22);
            let x = random_arr(&mut rng, 1, 2, 4, 4);
            let mut tape = Tape::<f64>::new();
            let p = MdcbParams::bind(
                &mut StoreBinder::new(&store, &mut tape, false),
                "b",
                Paths::Dual,
                fefm,
                residual,
            )?;
            let xv = tape.constant(x.to_tensor());
            let y = mdcb_forward(&mut tape, xv, &p)?;
            Ok(Comparison::new(
                values(tape.value(y)),
                network::mdcb(&Weights { store: &store }, "b", &x, fefm, residual).data,
            ))
        }));
    }
    out.push(Case::new(
        "mdcb/straight_line_top_only",
        Module::Blocks,
        Measure::Absolute,
        1e-6,
        || {
            let store = store_for(&MdcbParams::layers("b", 3, Paths::Top, false), 23);
            let mut rng = ChaCha8Rng::seed_from_u64(24);
            let x = random_arr(&mut rng, 1, 3, 4, 4);
            let mut tape = Tape::<f64>::new();
            let p = MdcbParams::bind(
                &mut StoreBinder::new(&store, &mut tape, false),
                "b",
                Paths::Top,
                false,
                true,
            )?;
            let xv = tape.constant(x.to_tensor());
            let y = mdcb_forward(&mut tape, xv, &p)?;
            Ok(Comparison::new(
                values(tape.value(y)),
                network::mdcb_top_only(&Weights { store: &store }, "b", &x, true).data,
            ))
        },
    ));
    out.push(Case::new(
        "cam/composition",
        Module::Blocks,
        Measure::Absolute,
        1e-12,
        || {
            let store = store_for(&CamParams::layers("cam", 8, 4), 25);
            let mut rng = ChaCha8Rng::seed_from_u64(26);
            let x = random_arr(&mut rng, 2, 8, 3, 5);
            let mut tape = Tape::<f64>::new();
            let p = CamParams::bind(&mut StoreBinder::new(&store, &mut tape, false), "cam")?;
            let xv = tape.constant(x.to_tensor());
            let y = cam_forward(&mut tape, xv, &p)?;
            Ok(Comparison::new(
                values(tape.value(y)),
                network::cam(&Weights { store: &store }, "cam", &x).data,
            ))
        },
    ));
    out.push(Case::new(
        "hfdb/composition",
        Module::Blocks,
        Measure::Absolute,
        1e-12,
        || {
            // N = 3 blocks, so two hierarchical features of width 4 into inner width 2
            let store = store_for(&HfdbParams::layers("hfdb", 2, 4, 2, 16), 27);
            let mut rng = ChaCha8Rng::seed_from_u64(28);
            let f1 = random_arr(&mut rng, 1, 4, 4, 4);
            let f2 = random_arr(&mut rng, 1, 4, 4, 4);
            let mut tape = Tape::<f64>::new();
            let p = HfdbParams::bind(&mut StoreBinder::new(&store, &mut tape, false), "hfdb")?;
            let v1 = tape.constant(f1.to_tensor());
            let v2 = tape.constant(f2.to_tensor());
            let y = hfdb_forward(&mut tape, &[v1, v2], &p)?;
            Ok(Comparison::new(
                values(tape.value(y)),
                network::hfdb(&Weights { store: &store }, "hfdb", &[&f1, &f2]).data,
            ))
        },
    ));
    for kind in [BlockKind::Resblock, BlockKind::Msrb] {
        out.push(Case::new(
            format!("{kind}/straight_line"),
            Module::Blocks,
            Measure::Absolute,
            1e-12,
            move || {
                let store = store_for(&BlockParams::layers(kind, "blk", 3, Paths::Dual, true), 29);
                let mut rng = ChaCha8Rng::seed_from_u64(30);
                let x = random_arr(&mut rng, 1, 3, 5, 4);
                let mut tape = Tape::<f64>::new();
                let p = BlockParams::bind(
                    &mut StoreBinder::new(&store, &mut tape, false),
                    kind,
                    "blk",
                    Paths::Dual,
                    true,
                    true,
                )?;
                let xv = tape.constant(x.to_tensor());
                let (y, oracle) = match p {
                    BlockParams::Resblock(p) => (
                        resblock_forward(&mut tape, xv, &p)?,
                        network::resblock(&Weights { store: &store }, "blk", &x),
                    ),
                    BlockParams::Msrb(p) => (
                        msrb_forward(&mut tape, xv, &p)?,
                        network::msrb(&Weights { store: &store }, "blk", &x),
                    ),
                    BlockParams::Mdcb(_) => unreachable!("baseline kinds only"),
                };
                Ok(Comparison::new(values(tape.value(y)), oracle.data))
            },
        ));
    }
    for factor in [2u32, 3, 4] {
        out.push(Case::new(
            format!("drb/straight_line_x{factor}"),
            Module::Blocks,
            Measure::Absolute,
            1e-12,
            move || {
                let specs = DrbParams::head_layers("drb", 4, factor)?;
                let store = store_for(&specs, 31);
                let mut rng = ChaCha8Rng::seed_from_u64(32);
                let x = random_arr(&mut rng, 1, 4, 3, 2);
                let mut tape = Tape::<f64>::new();
                let p = DrbParams::bind(&mut StoreBinder::new(&store, &mut tape, false), "drb", &[factor])?;
                let xv = tape.constant(x.to_tensor());
                let y = drb_forward(&mut tape, xv, factor, &p)?;
                Ok(Comparison::new(
                    values(tape.value(y)),
                    network::drb(&Weights { store: &store }, factor, &x).data,
                ))
            },
        ));
    }
}

fn model_cases(out: &mut Vec<Case>) {
    let tiny = ModelConfig::tiny(2, 4, &[2, 3, 4]);
    for factor in [2u32, 3, 4] {
        let config = tiny.clone();
        out.push(Case::new(
            format!("model/straight_line_x{factor}"),
            Module::Model,
            Measure::Absolute,
            1e-6,
            move || {
                let params = model_with_biases(&config, 41)?;
                let model = Model {
                    config: config.clone(),
                    params,
                };
                let mut rng = ChaCha8Rng::seed_from_u64(42);
                let mut x = Arr::zeros(1, 3, 5, 4);
                x.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
                let y = model.forward(&x.to_tensor(), factor)?;
                Ok(Comparison::new(
                    values(&y),
                    network::model(&Weights { store: &model.params }, &config, &x, factor).data,
                ))
            },
        ));
    }
    let variants: Vec<(&str, ModelConfig)> = vec![
        ("n3_hfdb", ModelConfig::tiny(3, 4, &[2])),
        (
            "method_a",
            ModelConfig {
                hierarchy: Hierarchy::A,
                ..ModelConfig::tiny(2, 4, &[2])
            },
        ),
        (
            "method_b",
            ModelConfig {
                hierarchy: Hierarchy::B,
                ..ModelConfig::tiny(3, 4, &[2])
            },
        ),
        (
            "method_c",
            ModelConfig {
                hierarchy: Hierarchy::C,
                ..ModelConfig::tiny(3, 4, &[2])
            },
        ),
        (
            "method_d",
            ModelConfig {
                hierarchy: Hierarchy::D,
                ..ModelConfig::tiny(3, 4, &[2])
            },
        ),
        (
            "resblock",
            ModelConfig {
                block_kind: BlockKind::Resblock,
                ..ModelConfig::tiny(2, 4, &[2])
            },
        ),
        (
            "msrb",
            ModelConfig {
                block_kind: BlockKind::Msrb,
                ..ModelConfig::tiny(2, 4, &[2])
            },
        ),
        (
            "top_only",
            ModelConfig {
                paths: Paths::Top,
                fefm: false,
                ..ModelConfig::tiny(2, 4, &[2])
            },
        ),
    ];
    for (tag, config) in variants {
        out.push(Case::new(
            format!("model/straight_line_{tag}"),
            Module::Model,
            Measure::Absolute,
            1e-6,
            move || {
                let params = model_with_biases(&config, 43)?;
                let model = Model {
                    config: config.clone(),
                    params,
                };
                let mut rng = ChaCha8Rng::seed_from_u64(44);
                let mut x = Arr::zeros(2, 3, 4, 3);
                x.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
                let y = model.forward(&x.to_tensor(), 2)?;
                Ok(Comparison::new(
                    values(&y),
                    network::model(&Weights { store: &model.params }, &config, &x, 2).data,
                ))
            },
        ));
    }

    let counted: Vec<(&str, ModelConfig)> = vec![
        ("tiny_n2_c8_x2", ModelConfig::tiny(2, 8, &[2])),
        ("tiny_n3_c16_all", ModelConfig::tiny(3, 16, &[2, 3, 4])),
        ("full", ModelConfig::full()),
        (
            "method_d",
            ModelConfig {
                hierarchy: Hierarchy::D,
                ..ModelConfig::tiny(4, 8, &[3])
            },
        ),
        (
            "no_fefm",
            ModelConfig {
                fefm: false,
                ..ModelConfig::tiny(2, 8, &[4])
            },
        ),
        (
            "top_only",
            ModelConfig {
                paths: Paths::Top,
                fefm: false,
                ..ModelConfig::tiny(2, 8, &[2])
            },
        ),
        (
            "bottom_only",
            ModelConfig {
                paths: Paths::Bottom,
                fefm: false,
                ..ModelConfig::tiny(2, 8, &[2])
            },
        ),
        (
            "msrb",
            ModelConfig {
                block_kind: BlockKind::Msrb,
                ..ModelConfig::tiny(2, 8, &[2])
            },
        ),
        (
            "resblock",
            ModelConfig {
                block_kind: BlockKind::Resblock,
                hierarchy: Hierarchy::A,
                ..ModelConfig::tiny(1, 8, &[2])
            },
        ),
    ];
    for (tag, config) in counted {
        out.push(Case::new(
            format!("param_count/enumeration_{tag}"),
            Module::Model,
            Measure::Absolute,
            0.0,
            move || {
                let built: ParameterStore<f32> = build(&config, 0)?;
                Ok(Comparison::new(
                    vec![param_count(&config)? as f64, built.numel() as f64],
                    vec![network::enumerate_param_count(&config) as f64; 2],
                ))
            },
        ));
    }

    out.push(Case::new(
        "checkpoint/size_arithmetic",
        Module::Model,
        Measure::Absolute,
        0.0,
        || {
            let config = ModelConfig::tiny(2, 8, &[2, 4]);
            let store: ParameterStore<f32> = build(&config, 3)?;
            let bytes = encode_checkpoint(&store, &config)?;
            let tensors: Vec<(String, Vec<usize>)> =
                store.iter().map(|(n, p)| (n.to_string(), p.dims.clone())).collect();
            let expected = network::checkpoint_size(config.to_json().len(), &tensors);
            Ok(Comparison::scalar(bytes.len() as f64, expected as f64))
        },
    ));

    out.push(Case::new(
        "self_ensemble/manual_pipeline",
        Module::Model,
        Measure::Absolute,
        1e-12,
        || {
            let config = ModelConfig::tiny(2, 4, &[2]);
            let model = Model {
                config: config.clone(),
                params: model_with_biases(&config, 45)?,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(46);
            let mut x = Arr::zeros(1, 3, 4, 3);
            x.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
            let production = model.self_ensemble_forward(&x.to_tensor(), 2)?;
            let mut acc: Option<Arr> = None;
            for flip in [false, true] {
                for rot in 0..4 {
                    let view = dihedral(&x, flip, rot);
                    let y = Arr::from_tensor(&model.forward(&view.to_tensor(), 2)?);
                    let back = undo_dihedral(&y, flip, rot);
                    acc = Some(match acc {
                        Some(a) => reference::add(&a, &back),
                        None => back,
                    });
                }
            }
            let mean: Vec<f64> = acc.expect("eight views").data.iter().map(|v| v / 8.0).collect();
            Ok(Comparison::new(values(&production), mean))
        },
    ));
}

fn optim_cases(out: &mut Vec<Case>) {
    out.push(Case::new(
        "adam/quadratic_three_steps",
        Module::Optim,
        Measure::Absolute,
        1e-12,
        || {
            let (theta0, a, c, lr) = (0.7, 3.0, -0.2, 0.05);
            let mut store = ParameterStore::<f64>::new();
            store.insert("theta", Tensor::scalar(theta0), vec![1], Partition::Trunk)?;
            let mut state = AdamState::new();
            let names = vec!["theta".to_string()];
            let mut production = Vec::new();
            for _ in 0..3 {
                let theta = store.value("theta")?.item()?;
                store.get_mut("theta").expect("inserted").grad = Some(Tensor::scalar(a * (theta - c)));
                adam_step(&mut store, &mut state, lr, &names)?;
                production.push(store.value("theta")?.item()?);
            }
            Ok(Comparison::new(
                production,
                adam::quadratic_trajectory(theta0, a, c, lr, 3),
            ))
        },
    ));
    out.push(Case::new(
        "sample_batch/factor_frequencies",
        Module::Optim,
        Measure::Absolute,
        5.0,
        || {
            // largest |count − n/3| in binomial standard deviations over 3000 draws
            let hr = Image::from_fn(24, 24, |x, y| [(x * 10) as u8, (y * 10) as u8, 0])?;
            let pairs = PairSet::from_hr_images(&[("a".to_string(), hr)], &[2, 3, 4])?;
            let cfg = TrainConfig {
                batch_size: 1,
                hr_patch: 12,
                factors: vec![2, 3, 4],
                ..TrainConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(47);
            let draws = 3000;
            let mut counts = [0usize; 3];
            for _ in 0..draws {
                let b = sample_batch::<f32, _>(&pairs, &cfg, &mut rng)?;
                counts[(b.factor - 2) as usize] += 1;
            }
            let p = 1.0 / 3.0;
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            let z = counts
                .iter()
                .map(|&k| (k as f64 - draws as f64 * p).abs() / sd)
                .fold(0.0, f64::max);
            Ok(Comparison::scalar(z, 0.0))
        },
    ));
}

fn data_cases(out: &mut Vec<Case>) {
    out.push(Case::new(
        "bicubic/ramp_half",
        Module::Data,
        Measure::Absolute,
        1e-6,
        || {
            let ramp: Vec<f64> = (0..16).map(f64::from).collect();
            let plane = Plane::new(16, 1, ramp.clone())?;
            let y = resize_plane(&plane, 8, 1, true)?;
            Ok(Comparison::new(y.data, resample::resample_1d(&ramp, 8, true)))
        },
    ));
    for (tag, (ow, oh), aa) in [
        ("down_aa", (5usize, 4usize), true),
        ("down_plain", (5, 4), false),
        ("up", (23, 17), true),
        ("mixed", (13, 5), true),
    ] {
        out.push(Case::new(
            format!("bicubic/dense_{tag}"),
            Module::Data,
            Measure::Absolute,
            1e-9,
            move || {
                let mut rng = ChaCha8Rng::seed_from_u64(51);
                let (w, h) = (11, 9);
                let data: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..255.0)).collect();
                let y = resize_plane(&Plane::new(w, h, data.clone())?, ow, oh, aa)?;
                Ok(Comparison::new(y.data, resample::resample_2d(&data, w, h, ow, oh, aa)))
            },
        ));
    }
    out.push(Case::new(
        "ppm/hand_written_2x2",
        Module::Data,
        Measure::Absolute,
        0.0,
        || {
            let mut bytes = b"P6\n# two by two\n2 2\n255\n".to_vec();
            let samples: [u8; 12] = [255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30];
            bytes.extend_from_slice(&samples);
            let img = decode_ppm(&bytes)?;
            let mut production: Vec<f64> = img.data().iter().map(|&v| f64::from(v)).collect();
            production.extend([img.width() as f64, img.height() as f64]);
            let mut oracle: Vec<f64> = samples.iter().map(|&v| f64::from(v)).collect();
            oracle.extend([2.0, 2.0]);
            Ok(Comparison::new(production, oracle))
        },
    ));
    out.push(Case::new(
        "augment/alignment",
        Module::Data,
        Measure::Absolute,
        0.0,
        || {
            // LR pixel (x, y) carries its own coordinates; HR pixels carry the
            // coordinates of the LR pixel whose block they belong to.
            let f = 3;
            let (lw, lh) = (4, 3);
            let lr = Image::from_fn(lw, lh, |x, y| [x as u8, y as u8, 7])?;
            let hr = Image::from_fn(lw * f, lh * f, |x, y| [(x / f) as u8, (y / f) as u8, 7])?;
            let mut rng = ChaCha8Rng::seed_from_u64(52);
            let mut mismatches = 0usize;
            let mut seen = std::collections::HashSet::new();
            for _ in 0..64 {
                let (th, tl, d) = augment(&hr, &lr, &mut rng);
                seen.insert(d);
                if th.width() != tl.width() * f || th.height() != tl.height() * f {
                    mismatches += 1;
                    continue;
                }
                for y in 0..tl.height() {
                    for x in 0..tl.width() {
                        let want = tl.pixel(x, y);
                        for dy in 0..f {
                            for dx in 0..f {
                                if th.pixel(f * x + dx, f * y + dy) != want {
                                    mismatches += 1;
                                }
                            }
                        }
                    }
                }
            }
            Ok(Comparison::new(
                vec![mismatches as f64, seen.len() as f64],
                vec![0.0, 8.0],
            ))
        },
    ));
    out.push(Case::new(
        "degrade/divisibility_101x77_x4",
        Module::Data,
        Measure::Absolute,
        0.0,
        || {
            let hr = Image::from_fn(101, 77, |x, y| [(x % 256) as u8, (y % 256) as u8, 0])?;
            let (crop, lr) = degrade(&hr, 4)?;
            Ok(Comparison::new(
                [crop.width(), crop.height(), lr.width(), lr.height()]
                    .map(|v| v as f64)
                    .to_vec(),
                vec![
                    (101 / 4 * 4) as f64,
                    (77 / 4 * 4) as f64,
                    (101 / 4) as f64,
                    (77 / 4) as f64,
                ],
            ))
        },
    ));
}

fn noisy_pair(seed: u64, w: usize, h: usize, noise: i32) -> Result<(Image, Image)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Image::from_fn(w, h, |x, y| {
        [
            ((x * 7 + y * 3) % 256) as u8,
            ((x * y) % 256) as u8,
            ((x + 5 * y) % 256) as u8,
        ]
    })?;
    let data = a
        .data()
        .iter()
        .map(|&v| (i32::from(v) + rng.gen_range(-noise..=noise)).clamp(0, 255) as u8)
        .collect();
    Ok((a, Image::new(w, h, data)?))
}

fn metric_cases(out: &mut Vec<Case>) {
    out.push(Case::new(
        "psnr/direct_formula",
        Module::Metrics,
        Measure::Absolute,
        1e-9,
        || {
            let (a, b) = noisy_pair(61, 30, 26, 12)?;
            Ok(Comparison::scalar(
                metrics::psnr(&a, &b, 2)?,
                crate::metrics::psnr(&a, &b, 2),
            ))
        },
    ));
    out.push(Case::new(
        "rmse/direct_formula",
        Module::Metrics,
        Measure::Absolute,
        1e-9,
        || {
            let (a, b) = noisy_pair(62, 30, 26, 12)?;
            Ok(Comparison::scalar(
                metrics::rmse(&a, &b, 3)?,
                crate::metrics::rmse(&a, &b, 3),
            ))
        },
    ));
    out.push(Case::new(
        "ssim/windowed_formula",
        Module::Metrics,
        Measure::Absolute,
        1e-6,
        || {
            let (a, b) = noisy_pair(63, 30, 26, 20)?;
            Ok(Comparison::scalar(
                metrics::ssim(&a, &b, 2)?,
                crate::metrics::ssim(&a, &b, 2),
            ))
        },
    ));
    out.push(Case::new(
        "luma/studio_swing",
        Module::Metrics,
        Measure::Absolute,
        1e-9,
        || {
            let (a, _) = noisy_pair(64, 9, 7, 0)?;
            Ok(Comparison::new(
                mdcn::data::rgb_to_ycbcr_y(&a).data,
                crate::metrics::luma(&a),
            ))
        },
    ));
}

pub fn equivalence_cases() -> Vec<Case> {
    let mut out = Vec::new();
    tensor_core_cases(&mut out);
    block_cases(&mut out);
    model_cases(&mut out);
    optim_cases(&mut out);
    data_cases(&mut out);
    metric_cases(&mut out);
    out
}
