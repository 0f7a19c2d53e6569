//! Central finite differences against the production tape, in double
//! precision. Each case reduces its output `y` to the scalar probe
//! `mean |M·y − (M·y₀ + R)|`, with `M` a fixed random 1×1 channel mix and `R`
//! a fixed random offset bounded away from zero, so the probe is locally
//! linear in `y`.

use mdcn::blocks::{
    cam_forward, drb_forward, hfdb_forward, hierarchical_aggregate, mdcb_forward, msrb_forward, resblock_forward,
    Binder, BlockKind, BlockParams, CamParams, ConvSpec, ConvVars, DrbParams, HfdbParams, Hierarchy, MdcbParams, Paths,
};
use mdcn::model::{bind, forward_on_tape, ModelConfig, ParameterStore};
use mdcn::tensor::{Activation, Tape, Tensor, Var};
use mdcn::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::reference::{conv, l1, Arr};
use crate::{Case, Comparison, Measure, Module};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;
/// Floor of the relative-error denominator.
pub const FLOOR: f64 = 1e-8;
const PROBE_CHANNELS: usize = 4;

/// Builds a scalar output on a fresh tape; returns the tape, the output and the input vars.
pub type Probe<'a> = dyn Fn(&[Tensor<f64>]) -> Result<(Tape<f64>, Var, Vec<Var>)> + 'a;

/// Analytic gradients of every input element next to their central differences.
pub fn finite_difference(inputs: &[Tensor<f64>], eval: &Probe, seed: u64) -> Result<Comparison> {
    let (tape, out, vars) = eval(inputs)?;
    let y0 = Arr::from_tensor(tape.value(out));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Random 1×1 channel mix ahead of the L1 probe, so upstream gradients
    // take continuous values rather than ±1/numel patterns that can cancel.
    let mut mix = Arr::zeros(PROBE_CHANNELS, y0.c, 1, 1);
    mix.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let zero_bias = vec![0.0; PROBE_CHANNELS];
    let z0 = conv(&y0, &mix, &zero_bias);
    let mut target = z0.clone();
    for v in target.data.iter_mut() {
        let m = rng.gen_range(0.01..0.02);
        *v += if rng.gen_bool(0.5) { m } else { -m };
    }
    let probe = |y: &Tensor<f64>| l1(&conv(&Arr::from_tensor(y), &mix, &zero_bias), &target);

    let mut tape = tape;
    let mv = tape.constant(mix.to_tensor());
    let bv = tape.constant(Tensor::zeros([PROBE_CHANNELS, 1, 1, 1]));
    let z = tape.conv2d(out, mv, bv)?;
    let t = tape.constant(target.to_tensor());
    let loss = tape.l1_loss(z, t)?;
    let grads = tape.backward(loss)?;

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        match grads.get(vars[i]) {
            Some(g) => analytic.extend_from_slice(g.data()),
            None => analytic.extend(std::iter::repeat_n(0.0, input.numel())),
        }
        for j in 0..input.numel() {
            let mut shifted = inputs.to_vec();
            let base = input.data()[j];
            shifted[i].data_mut()[j] = base + STEP;
            let (tp, op, _) = eval(&shifted)?;
            let plus = probe(tp.value(op));
            shifted[i].data_mut()[j] = base - STEP;
            let (tm, om, _) = eval(&shifted)?;
            let minus = probe(tm.value(om));
            numeric.push((plus - minus) / (2.0 * STEP));
        }
    }
    Ok(Comparison {
        production: analytic,
        oracle: numeric,
        groups: inputs.iter().map(Tensor::numel).collect(),
    })
}

fn uniform(rng: &mut ChaCha8Rng, shape: [usize; 4], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

/// Values bounded away from zero so no ReLU kink sits within a step.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn leaves(tape: &mut Tape<f64>, xs: &[Tensor<f64>]) -> Vec<Var> {
    xs.iter().map(|x| tape.leaf(x.clone(), true)).collect()
}

/// Resolves `{layer}.weight` / `{layer}.bias` against a parallel list of names and vars.
struct Named<'a> {
    names: &'a [String],
    vars: &'a [Var],
}

impl Binder for Named<'_> {
    fn conv(&mut self, layer: &str) -> Result<ConvVars> {
        let find = |n: String| {
            self.names
                .iter()
                .position(|m| *m == n)
                .map(|i| self.vars[i])
                .ok_or_else(|| Error::contract("gradcheck", format!("no tensor {n}")))
        };
        Ok(ConvVars {
            weight: find(format!("{layer}.weight"))?,
            bias: find(format!("{layer}.bias"))?,
        })
    }
}

/// Random weights and biases for a layer list; names are `{layer}.weight|bias`.
fn layer_tensors(rng: &mut ChaCha8Rng, specs: &[ConvSpec]) -> (Vec<String>, Vec<Tensor<f64>>) {
    let mut names = Vec::new();
    let mut values = Vec::new();
    for s in specs {
        let bound = 1.0 / ((s.in_c * s.kernel * s.kernel) as f64).sqrt();
        names.push(format!("{}.weight", s.name));
        values.push(uniform(rng, [s.out_c, s.in_c, s.kernel, s.kernel], bound));
        names.push(format!("{}.bias", s.name));
        values.push(uniform(rng, [s.out_c, 1, 1, 1], 0.1));
    }
    (names, values)
}

fn op_case(
    name: &str,
    inputs: Vec<Tensor<f64>>,
    f: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'static,
    seed: u64,
) -> Case {
    Case::new(name, Module::TensorCore, Measure::GroupRelative, TOLERANCE, move || {
        let eval = |xs: &[Tensor<f64>]| {
            let mut tape = Tape::new();
            let vars = leaves(&mut tape, xs);
            let out = f(&mut tape, &vars)?;
            Ok((tape, out, vars))
        };
        finite_difference(&inputs, &eval, seed)
    })
}

/// A block case: the first input is the feature map, the rest are the
/// block's layers; `f` receives the feature vars and a binder over the layers.
fn block_case(
    name: &str,
    module: Module,
    features: Vec<Tensor<f64>>,
    specs: Vec<ConvSpec>,
    seed: u64,
    f: impl Fn(&mut Tape<f64>, &[Var], &mut Named) -> Result<Var> + 'static,
) -> Case {
    Case::new(name, module, Measure::GroupRelative, TOLERANCE, move || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (names, weights) = layer_tensors(&mut rng, &specs);
        let k = features.len();
        let inputs: Vec<Tensor<f64>> = features.iter().cloned().chain(weights).collect();
        let eval = |xs: &[Tensor<f64>]| {
            let mut tape = Tape::new();
            let vars = leaves(&mut tape, xs);
            let mut binder = Named {
                names: &names,
                vars: &vars[k..],
            };
            let out = f(&mut tape, &vars[..k], &mut binder)?;
            Ok((tape, out, vars))
        };
        finite_difference(&inputs, &eval, seed)
    })
}

fn model_case(name: &str, config: ModelConfig, factor: u32, seed: u64) -> Case {
    Case::new(name, Module::Model, Measure::GroupRelative, TOLERANCE, move || {
        let mut store: ParameterStore<f64> = mdcn::model::build(&config, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for (_, p) in store.iter_mut() {
            if p.dims.len() == 1 {
                p.value = uniform(&mut rng, [p.dims[0], 1, 1, 1], 0.1);
            }
        }
        let names = store.active_names(factor);
        let x = Tensor::from_fn([1, 3, 4, 4], |_| rng.gen_range(0.0..1.0));
        let mut inputs = vec![x];
        inputs.extend(names.iter().map(|n| store.value(n).expect("active name").clone()));
        let eval = |xs: &[Tensor<f64>]| {
            let mut s = store.clone();
            for (n, v) in names.iter().zip(&xs[1..]) {
                s.get_mut(n).expect("active name").value = v.clone();
            }
            let mut tape = Tape::new();
            let (vars, bound) = bind(&config, &s, &mut tape, factor, true)?;
            let x = tape.leaf(xs[0].clone(), true);
            let out = forward_on_tape(&mut tape, &config, &vars, x)?;
            let mut order = vec![x];
            for n in &names {
                let v = bound
                    .iter()
                    .find(|(b, _)| b == n)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::contract("gradcheck", format!("{n} not bound")))?;
                order.push(v);
            }
            Ok((tape, out, order))
        };
        finite_difference(&inputs, &eval, seed)
    })
}

/// Every differentiable op, every composite block and a tiny model.
pub fn gradient_cases() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut cases = Vec::new();

    for k in [1usize, 3, 5] {
        let bound = 1.0 / ((4 * k * k) as f64).sqrt();
        let inputs = vec![
            uniform(&mut rng, [2, 4, 6, 6], 1.0),
            uniform(&mut rng, [3, 4, k, k], bound),
            uniform(&mut rng, [3, 1, 1, 1], 0.5),
        ];
        cases.push(op_case(
            &format!("grad/conv2d_k{k}"),
            inputs,
            |t, v| t.conv2d(v[0], v[1], v[2]),
            100 + k as u64,
        ));
    }
    cases.push(op_case(
        "grad/relu",
        vec![away_from_zero(&mut rng, [2, 4, 6, 6])],
        |t, v| Ok(t.activation(v[0], Activation::Relu)),
        110,
    ));
    cases.push(op_case(
        "grad/sigmoid",
        vec![uniform(&mut rng, [2, 4, 6, 6], 3.0)],
        |t, v| Ok(t.activation(v[0], Activation::Sigmoid)),
        111,
    ));
    cases.push(op_case(
        "grad/add",
        vec![
            uniform(&mut rng, [2, 4, 6, 6], 1.0),
            uniform(&mut rng, [2, 4, 6, 6], 1.0),
        ],
        |t, v| t.add(v[0], v[1]),
        112,
    ));
    cases.push(op_case(
        "grad/concat_channels",
        vec![
            uniform(&mut rng, [2, 1, 6, 6], 1.0),
            uniform(&mut rng, [2, 2, 6, 6], 1.0),
            uniform(&mut rng, [2, 1, 6, 6], 1.0),
        ],
        |t, v| t.concat_channels(v),
        113,
    ));
    cases.push(op_case(
        "grad/global_avg_pool",
        vec![uniform(&mut rng, [2, 4, 6, 6], 1.0)],
        |t, v| t.global_avg_pool(v[0]),
        114,
    ));
    cases.push(op_case(
        "grad/scale_channels",
        vec![
            uniform(&mut rng, [2, 4, 6, 6], 1.0),
            uniform(&mut rng, [2, 4, 1, 1], 1.0),
        ],
        |t, v| t.scale_channels(v[0], v[1]),
        115,
    ));
    cases.push(op_case(
        "grad/pixel_shuffle",
        vec![uniform(&mut rng, [2, 4, 3, 3], 1.0)],
        |t, v| t.pixel_shuffle(v[0], 2),
        116,
    ));
    let target = uniform(&mut rng, [2, 4, 6, 6], 1.0);
    cases.push(op_case(
        "grad/l1_loss",
        vec![uniform(&mut rng, [2, 4, 6, 6], 1.0)],
        move |t, v| {
            let c = t.constant(target.clone());
            t.l1_loss(v[0], c)
        },
        117,
    ));
    cases.push(op_case(
        "grad/mean",
        vec![uniform(&mut rng, [2, 4, 6, 6], 1.0)],
        |t, v| t.mean(v[0]),
        118,
    ));
    cases.push(op_case(
        "grad/sigmoid_conv_chain",
        vec![
            uniform(&mut rng, [1, 2, 5, 5], 1.0),
            uniform(&mut rng, [2, 2, 3, 3], 0.5),
            uniform(&mut rng, [2, 1, 1, 1], 0.5),
        ],
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2])?;
            Ok(t.sigmoid(y))
        },
        119,
    ));

    let c = 4;
    let x = uniform(&mut rng, [2, c, 5, 5], 1.0);
    for (fefm, residual) in [(true, true), (false, false)] {
        let name = format!("grad/mdcb_fefm_{fefm}_residual_{residual}");
        cases.push(block_case(
            &name,
            Module::Blocks,
            vec![x.clone()],
            MdcbParams::layers("b", c, Paths::Dual, fefm),
            200 + u64::from(fefm),
            move |t, f, b| {
                let p = MdcbParams::bind(b, "b", Paths::Dual, fefm, residual)?;
                mdcb_forward(t, f[0], &p)
            },
        ));
    }
    cases.push(block_case(
        "grad/cam",
        Module::Blocks,
        vec![uniform(&mut rng, [2, c, 6, 6], 1.0)],
        CamParams::layers("cam", c, 2),
        210,
        |t, f, b| {
            let p = CamParams::bind(b, "cam")?;
            cam_forward(t, f[0], &p)
        },
    ));
    cases.push(block_case(
        "grad/hfdb",
        Module::Blocks,
        vec![
            uniform(&mut rng, [2, c, 5, 5], 1.0),
            uniform(&mut rng, [2, c, 5, 5], 1.0),
        ],
        HfdbParams::layers("hfdb", 2, c, 2, 1),
        211,
        |t, f, b| {
            let p = HfdbParams::bind(b, "hfdb")?;
            hfdb_forward(t, f, &p)
        },
    ));
    for factor in [2u32, 3, 4] {
        cases.push(block_case(
            &format!("grad/drb_x{factor}"),
            Module::Blocks,
            vec![uniform(&mut rng, [2, c, 3, 3], 1.0)],
            DrbParams::head_layers("drb", c, factor).expect("supported factor"),
            220 + u64::from(factor),
            move |t, f, b| {
                let p = DrbParams::bind(b, "drb", &[factor])?;
                drb_forward(t, f[0], factor, &p)
            },
        ));
    }
    for kind in [BlockKind::Resblock, BlockKind::Msrb] {
        cases.push(block_case(
            &format!("grad/{kind}"),
            Module::Blocks,
            vec![uniform(&mut rng, [1, c, 5, 5], 1.0)],
            BlockParams::layers(kind, "blk", c, Paths::Dual, true),
            230,
            move |t, f, b| match BlockParams::bind(b, kind, "blk", Paths::Dual, true, true)? {
                BlockParams::Resblock(p) => resblock_forward(t, f[0], &p),
                BlockParams::Msrb(p) => msrb_forward(t, f[0], &p),
                BlockParams::Mdcb(_) => unreachable!("baseline kinds only"),
            },
        ));
    }
    for method in [Hierarchy::B, Hierarchy::C, Hierarchy::D] {
        let feats = vec![
            uniform(&mut rng, [1, c, 4, 4], 1.0),
            uniform(&mut rng, [1, c, 4, 4], 1.0),
            uniform(&mut rng, [1, c, 4, 4], 1.0),
        ];
        let specs = if method == Hierarchy::D {
            vec![ConvSpec::new("fusion", 2 * c, c, 1)]
        } else {
            Vec::new()
        };
        cases.push(block_case(
            &format!("grad/hierarchy_{method:?}"),
            Module::Blocks,
            feats,
            specs,
            240,
            move |t, f, b| {
                let fusion = if method == Hierarchy::D {
                    Some(b.conv("fusion")?)
                } else {
                    None
                };
                hierarchical_aggregate(t, method, &f[..2], f[2], fusion.as_ref())
            },
        ));
    }

    let config = ModelConfig::tiny(2, 4, &[2, 3, 4]);
    for factor in [2u32, 4] {
        cases.push(model_case(
            &format!("grad/model_x{factor}"),
            config.clone(),
            factor,
            300 + u64::from(factor),
        ));
    }
    cases
}
