use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::params::{ParameterStore, Partition};
use crate::blocks::{
    block_forward, drb_forward, hfdb_forward, hierarchical_aggregate, Binder, BlockParams, ConvSpec, ConvVars,
    DrbParams, HfdbParams, Hierarchy,
};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tape, Tensor, Var};

/// One convolution of the network together with its partition.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LayerEntry {
    pub spec: ConvSpec,
    pub partition: Partition,
}

/// Convolutions in build order: input, blocks, hierarchy unit, mix, DRB heads, output.
pub fn inventory(config: &ModelConfig) -> Result<Vec<LayerEntry>> {
    config.validate()?;
    let c = config.channels;
    let mut trunk = vec![ConvSpec::new("input", 3, c, 3)];
    for i in 0..config.n_blocks {
        trunk.extend(BlockParams::layers(
            config.block_kind,
            &format!("blocks.{i}"),
            c,
            config.paths,
            config.fefm,
        ));
    }
    let features = config.n_blocks - 1;
    match config.hierarchy {
        Hierarchy::Hfdb => trunk.extend(HfdbParams::layers(
            "hfdb",
            features,
            c,
            config.hfdb_inner,
            config.cam_reduction,
        )),
        Hierarchy::D => trunk.push(ConvSpec::new("fusion", features * c, c, 1)),
        Hierarchy::A | Hierarchy::B | Hierarchy::C => {}
    }
    trunk.push(ConvSpec::new("mix", c, c, 3));

    let mut out: Vec<LayerEntry> = trunk
        .into_iter()
        .map(|spec| LayerEntry {
            spec,
            partition: Partition::Trunk,
        })
        .collect();
    for f in config.sorted_factors() {
        for spec in DrbParams::head_layers("drb", c, f)? {
            out.push(LayerEntry {
                spec,
                partition: Partition::Head(f),
            });
        }
    }
    out.push(LayerEntry {
        spec: ConvSpec::new("output", c, 3, 3),
        partition: Partition::Trunk,
    });
    Ok(out)
}

/// Number of scalars [`build`] creates for `config`.
pub fn param_count(config: &ModelConfig) -> Result<usize> {
    Ok(inventory(config)?.iter().map(|l| l.spec.param_count()).sum())
}

/// Scalar counts per partition, in partition order.
pub fn param_breakdown(config: &ModelConfig) -> Result<Vec<(Partition, usize)>> {
    let mut out: Vec<(Partition, usize)> = Vec::new();
    for l in inventory(config)? {
        match out.iter_mut().find(|(p, _)| *p == l.partition) {
            Some((_, n)) => *n += l.spec.param_count(),
            None => out.push((l.partition, l.spec.param_count())),
        }
    }
    out.sort_by_key(|(p, _)| *p);
    Ok(out)
}

pub fn weight_name(layer: &str) -> String {
    format!("{layer}.weight")
}

pub fn bias_name(layer: &str) -> String {
    format!("{layer}.bias")
}

/// Initialises every convolution: weights uniform in `±1/sqrt(fan_in)`, zero biases.
pub fn build<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ParameterStore<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    for layer in inventory(config)? {
        let s = &layer.spec;
        let fan_in = s.in_c * s.kernel * s.kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let shape = Shape::new(s.out_c, s.in_c, s.kernel, s.kernel);
        let weights = (0..shape.numel())
            .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
            .collect();
        store.insert(
            weight_name(&s.name),
            Tensor::from_vec(shape, weights)?,
            vec![s.out_c, s.in_c, s.kernel, s.kernel],
            layer.partition,
        )?;
        store.insert(
            bias_name(&s.name),
            Tensor::zeros([s.out_c, 1, 1, 1]),
            vec![s.out_c],
            layer.partition,
        )?;
    }
    Ok(store)
}

/// Puts store parameters on a tape on demand and remembers what was bound.
pub struct StoreBinder<'a, T> {
    store: &'a ParameterStore<T>,
    tape: &'a mut Tape<T>,
    trainable: bool,
    pub bound: Vec<(String, Var)>,
}

impl<'a, T: Scalar> StoreBinder<'a, T> {
    pub fn new(store: &'a ParameterStore<T>, tape: &'a mut Tape<T>, trainable: bool) -> Self {
        StoreBinder {
            store,
            tape,
            trainable,
            bound: Vec::new(),
        }
    }

    fn leaf(&mut self, name: String) -> Result<Var> {
        let value = self.store.value(&name)?.clone();
        let var = self.tape.leaf(value, self.trainable);
        self.bound.push((name, var));
        Ok(var)
    }
}

impl<T: Scalar> Binder for StoreBinder<'_, T> {
    fn conv(&mut self, name: &str) -> Result<ConvVars> {
        Ok(ConvVars {
            weight: self.leaf(weight_name(name))?,
            bias: self.leaf(bias_name(name))?,
        })
    }
}

#[derive(Clone, Debug)]
pub enum HierarchyVars {
    None,
    Fusion(ConvVars),
    Hfdb(HfdbParams),
}

/// Tape handles for one forward pass at one factor.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub factor: u32,
    pub input: ConvVars,
    pub blocks: Vec<BlockParams>,
    pub hierarchy: HierarchyVars,
    pub mix: ConvVars,
    pub drb: DrbParams,
    pub output: ConvVars,
}

fn unsupported(config: &ModelConfig, factor: u32) -> Error {
    Error::UnsupportedFactor {
        factor,
        available: config.sorted_factors(),
    }
}

/// Binds the trunk and the head for `factor`; other heads stay off the tape.
pub fn bind<T: Scalar>(
    config: &ModelConfig,
    store: &ParameterStore<T>,
    tape: &mut Tape<T>,
    factor: u32,
    trainable: bool,
) -> Result<(ModelVars, Vec<(String, Var)>)> {
    if !config.supports(factor) {
        return Err(unsupported(config, factor));
    }
    let mut b = StoreBinder::new(store, tape, trainable);
    let input = b.conv("input")?;
    let blocks = (0..config.n_blocks)
        .map(|i| {
            BlockParams::bind(
                &mut b,
                config.block_kind,
                &format!("blocks.{i}"),
                config.paths,
                config.fefm,
                config.residual,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let hierarchy = match config.hierarchy {
        Hierarchy::Hfdb => HierarchyVars::Hfdb(HfdbParams::bind(&mut b, "hfdb")?),
        Hierarchy::D => HierarchyVars::Fusion(b.conv("fusion")?),
        Hierarchy::A | Hierarchy::B | Hierarchy::C => HierarchyVars::None,
    };
    let mix = b.conv("mix")?;
    let drb = DrbParams::bind(&mut b, "drb", &[factor])?;
    let output = b.conv("output")?;
    let vars = ModelVars {
        factor,
        input,
        blocks,
        hierarchy,
        mix,
        drb,
        output,
    };
    Ok((vars, b.bound))
}

/// `L_in = conv_in(x)`, block chain → `L_out`, `L_dis` from outputs 1…N−1,
/// `L_mix = conv_mix(L_in + L_dis + L_out)`, `I_SR = conv_out(DRB(L_mix))`.
pub fn forward_on_tape<T: Scalar>(tape: &mut Tape<T>, config: &ModelConfig, vars: &ModelVars, x: Var) -> Result<Var> {
    let xs = tape.shape(x);
    if xs.c != 3 {
        return Err(Error::contract("forward", format!("expected an RGB batch, got {xs}")));
    }
    let l_input = vars.input.apply(tape, x)?;
    let mut hier = Vec::with_capacity(vars.blocks.len());
    let mut h = l_input;
    for block in &vars.blocks {
        h = block_forward(tape, h, block)?;
        hier.push(h);
    }
    let l_output = h;
    let earlier = &hier[..hier.len() - 1];
    let l_dis = match (&vars.hierarchy, config.hierarchy) {
        (_, Hierarchy::A) => None,
        (HierarchyVars::Hfdb(p), Hierarchy::Hfdb) => Some(hfdb_forward(tape, earlier, p)?),
        (HierarchyVars::Fusion(f), Hierarchy::D) => {
            Some(hierarchical_aggregate(tape, Hierarchy::D, earlier, l_input, Some(f))?)
        }
        (HierarchyVars::None, m @ (Hierarchy::B | Hierarchy::C)) => {
            Some(hierarchical_aggregate(tape, m, earlier, l_input, None)?)
        }
        _ => {
            return Err(Error::contract(
                "forward",
                "bound parameters do not match the hierarchy",
            ))
        }
    };
    let mut sum = l_input;
    if let Some(d) = l_dis {
        sum = tape.add(sum, d)?;
    }
    let sum = tape.add(sum, l_output)?;
    let l_mix = vars.mix.apply(tape, sum)?;
    let up = drb_forward(tape, l_mix, vars.factor, &vars.drb)?;
    vars.output.apply(tape, up)
}

/// A configuration with its parameters.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParameterStore<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = build(&config, seed)?;
        Ok(Model { config, params })
    }

    /// Inference on a `(n, 3, h, w)` batch; output is `(n, 3, f·h, f·w)`, unclamped.
    pub fn forward(&self, x: &Tensor<T>, factor: u32) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let (vars, _) = bind(&self.config, &self.params, &mut tape, factor, false)?;
        let x = tape.constant(x.clone());
        let y = forward_on_tape(&mut tape, &self.config, &vars, x)?;
        Ok(tape.value(y).clone())
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }
}
