//! Straight-line compositions of the network, term by term, on top of the
//! loop primitives. Parameters are looked up by their stored names.

use mdcn::blocks::{BlockKind, Hierarchy, Paths};
use mdcn::model::{ModelConfig, ParameterStore};

use crate::reference::{add, concat, conv, global_avg_pool, pixel_shuffle, relu, scale_channels, sigmoid, Arr};

pub struct Weights<'a> {
    pub store: &'a ParameterStore<f64>,
}

impl Weights<'_> {
    pub fn conv(&self, layer: &str, x: &Arr) -> Arr {
        let w = Arr::from_tensor(
            self.store
                .value(&format!("{layer}.weight"))
                .unwrap_or_else(|_| panic!("missing {layer}.weight")),
        );
        let b = Arr::from_tensor(
            self.store
                .value(&format!("{layer}.bias"))
                .unwrap_or_else(|_| panic!("missing {layer}.bias")),
        );
        conv(x, &w, &b.data)
    }
}

/// Dual-path block:
/// L22 = relu(C3(x)), H22 = relu(C5(x)),
/// L33 = relu(C3'(F[x, L22, H22])), H33 = relu(C5'(F'[x, H22, L22])),
/// out = T[L22, L33, H22, H33, x] (+ x).
pub fn mdcb(p: &Weights, prefix: &str, x: &Arr, fefm: bool, residual: bool) -> Arr {
    let l22 = relu(&p.conv(&format!("{prefix}.top.extract"), x));
    let h22 = relu(&p.conv(&format!("{prefix}.bottom.extract"), x));
    let top_in = if fefm {
        concat(&[x, &l22, &h22])
    } else {
        concat(&[x, &l22])
    };
    let bottom_in = if fefm {
        concat(&[x, &h22, &l22])
    } else {
        concat(&[x, &h22])
    };
    let m35 = p.conv(&format!("{prefix}.top.fuse"), &top_in);
    let m53 = p.conv(&format!("{prefix}.bottom.fuse"), &bottom_in);
    let l33 = relu(&p.conv(&format!("{prefix}.top.refine"), &m35));
    let h33 = relu(&p.conv(&format!("{prefix}.bottom.refine"), &m53));
    let out = p.conv(&format!("{prefix}.tail"), &concat(&[&l22, &l33, &h22, &h33, x]));
    if residual {
        add(&out, x)
    } else {
        out
    }
}

/// Single 3×3 path only.
pub fn mdcb_top_only(p: &Weights, prefix: &str, x: &Arr, residual: bool) -> Arr {
    let l22 = relu(&p.conv(&format!("{prefix}.top.extract"), x));
    let m = p.conv(&format!("{prefix}.top.fuse"), &concat(&[x, &l22]));
    let l33 = relu(&p.conv(&format!("{prefix}.top.refine"), &m));
    let out = p.conv(&format!("{prefix}.tail"), &concat(&[&l22, &l33, x]));
    if residual {
        add(&out, x)
    } else {
        out
    }
}

pub fn resblock(p: &Weights, prefix: &str, x: &Arr) -> Arr {
    let h = relu(&p.conv(&format!("{prefix}.conv1"), x));
    add(x, &p.conv(&format!("{prefix}.conv2"), &h))
}

pub fn msrb(p: &Weights, prefix: &str, x: &Arr) -> Arr {
    let s1 = relu(&p.conv(&format!("{prefix}.s1"), x));
    let p1 = relu(&p.conv(&format!("{prefix}.p1"), x));
    let s2 = relu(&p.conv(&format!("{prefix}.s2"), &concat(&[&s1, &p1])));
    let p2 = relu(&p.conv(&format!("{prefix}.p2"), &concat(&[&p1, &s1])));
    add(&p.conv(&format!("{prefix}.tail"), &concat(&[&s2, &p2])), x)
}

pub fn cam(p: &Weights, prefix: &str, x: &Arr) -> Arr {
    let z = global_avg_pool(x);
    let d = relu(&p.conv(&format!("{prefix}.down"), &z));
    let s = sigmoid(&p.conv(&format!("{prefix}.up"), &d));
    scale_channels(x, &s)
}

pub fn hfdb(p: &Weights, prefix: &str, features: &[&Arr]) -> Arr {
    let cat = concat(features);
    let squeezed = p.conv(&format!("{prefix}.head"), &cat);
    let attended = cam(p, &format!("{prefix}.cam"), &squeezed);
    p.conv(&format!("{prefix}.tail"), &attended)
}

pub fn drb(p: &Weights, factor: u32, x: &Arr) -> Arr {
    match factor {
        2 | 3 => pixel_shuffle(&p.conv(&format!("drb.x{factor}.0"), x), factor as usize),
        4 => {
            let h = pixel_shuffle(&p.conv("drb.x4.0", x), 2);
            pixel_shuffle(&p.conv("drb.x4.1", &h), 2)
        }
        _ => panic!("no head for x{factor}"),
    }
}

/// L_in = conv_in(x); L_n = B_n(L_{n−1}); L_dis from L_1…L_{N−1};
/// L_mix = conv_mix(L_in + L_dis + L_N); I_SR = conv_out(DRB(L_mix)).
pub fn model(p: &Weights, config: &ModelConfig, x: &Arr, factor: u32) -> Arr {
    let l_in = p.conv("input", x);
    let mut feats = Vec::new();
    let mut h = l_in.clone();
    for i in 0..config.n_blocks {
        let prefix = format!("blocks.{i}");
        h = match (config.block_kind, config.paths) {
            (BlockKind::Mdcb, Paths::Dual) => mdcb(p, &prefix, &h, config.fefm, config.residual),
            (BlockKind::Mdcb, Paths::Top) => mdcb_top_only(p, &prefix, &h, config.residual),
            (BlockKind::Mdcb, Paths::Bottom) => panic!("bottom-only blocks are not composed here"),
            (BlockKind::Resblock, _) => resblock(p, &prefix, &h),
            (BlockKind::Msrb, _) => msrb(p, &prefix, &h),
        };
        feats.push(h.clone());
    }
    let l_out = feats.last().expect("at least one block").clone();
    let earlier: Vec<&Arr> = feats[..feats.len() - 1].iter().collect();
    let mut sum = add(&l_in, &l_out);
    match config.hierarchy {
        Hierarchy::A => {}
        Hierarchy::B => sum = add(&sum, &add(earlier[earlier.len() - 1], &l_in)),
        Hierarchy::C => {
            let mut dis = add(earlier[earlier.len() - 1], &l_in);
            for f in &earlier[..earlier.len() - 1] {
                dis = add(&dis, f);
            }
            sum = add(&sum, &dis);
        }
        Hierarchy::D => sum = add(&sum, &p.conv("fusion", &concat(&earlier))),
        Hierarchy::Hfdb => sum = add(&sum, &hfdb(p, "hfdb", &earlier)),
    }
    let l_mix = p.conv("mix", &sum);
    p.conv("output", &drb(p, factor, &l_mix))
}

/// `(kernel, in, out)` of every convolution, listed from the architecture.
pub fn enumerate_layers(config: &ModelConfig) -> Vec<(usize, usize, usize)> {
    let c = config.channels;
    let mut layers = vec![(3, 3, c)];
    for _ in 0..config.n_blocks {
        match config.block_kind {
            BlockKind::Mdcb => {
                let dual = config.paths == Paths::Dual;
                let fuse_in = if dual && config.fefm { 3 * c } else { 2 * c };
                let mut kernels = Vec::new();
                if config.paths != Paths::Bottom {
                    kernels.push(3);
                }
                if config.paths != Paths::Top {
                    kernels.push(5);
                }
                for &k in &kernels {
                    layers.extend([(k, c, c), (1, fuse_in, c), (k, c, c)]);
                }
                layers.push((1, (2 * kernels.len() + 1) * c, c));
            }
            BlockKind::Resblock => layers.extend([(3, c, c), (3, c, c)]),
            BlockKind::Msrb => layers.extend([
                (3, c, c),
                (5, c, c),
                (3, 2 * c, 2 * c),
                (5, 2 * c, 2 * c),
                (1, 4 * c, c),
            ]),
        }
    }
    let m = (config.n_blocks - 1) * c;
    match config.hierarchy {
        Hierarchy::Hfdb => {
            let inner = config.hfdb_inner;
            let hidden = inner.div_ceil(config.cam_reduction).max(1);
            layers.extend([(1, m, inner), (1, inner, hidden), (1, hidden, inner), (1, inner, c)]);
        }
        Hierarchy::D => layers.push((1, m, c)),
        _ => {}
    }
    layers.push((3, c, c));
    for &f in &config.factors {
        match f {
            2 => layers.push((1, c, 4 * c)),
            3 => layers.push((1, c, 9 * c)),
            4 => layers.extend([(1, c, 4 * c), (1, c, 4 * c)]),
            _ => {}
        }
    }
    layers.push((3, c, 3));
    layers
}

/// Σ k²·in·out + out over the architecture's convolutions.
pub fn enumerate_param_count(config: &ModelConfig) -> usize {
    enumerate_layers(config)
        .iter()
        .map(|&(k, i, o)| k * k * i * o + o)
        .sum()
}

/// 16-byte header plus config plus per-tensor records
/// `2 + name + 1 + 4·rank + 4·numel`.
pub fn checkpoint_size(config_json_len: usize, tensors: &[(String, Vec<usize>)]) -> usize {
    let header = 4 + 4 + 4 + 4;
    header
        + config_json_len
        + tensors
            .iter()
            .map(|(name, dims)| 2 + name.len() + 1 + 4 * dims.len() + 4 * dims.iter().product::<usize>())
            .sum::<usize>()
}
