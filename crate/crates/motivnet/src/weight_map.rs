//! Explicit base<->motivated parameter association and the region copy
//! routines used when training switches between the two models.
//!
//! Every base tensor maps to a prefix region of its motivated counterpart:
//! per-dimension `(offset, length)` ranges with offset 0 and the base
//! extent as length. Depth growth is handled by a block-index rule per
//! stage: with `l` base blocks and `l'` motivated blocks, base blocks
//! `0..l-2` keep their index and the last base block maps to the last
//! motivated block, leaving the blocks in between unmapped (the
//! differential layers).

use crate::error::{Error, Result};
use crate::optim::OptimizerState;
use crate::store::ParamStore;
use crate::tensor::{strides_of, Tensor};
use crate::zoo::{ArchConfig, Model};

/// A rectangular sub-region of one named tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionRef {
    pub name: String,
    /// (offset, length) per dimension.
    pub slice: Vec<(usize, usize)>,
}

impl RegionRef {
    pub fn volume(&self) -> usize {
        self.slice.iter().map(|&(_, l)| l).product()
    }

    fn fits(&self, shape: &[usize]) -> bool {
        self.slice.len() == shape.len()
            && self
                .slice
                .iter()
                .zip(shape)
                .all(|(&(o, l), &d)| o + l <= d)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapEntry {
    pub base: RegionRef,
    pub motivated: RegionRef,
    pub trainable: bool,
}

#[derive(Clone, Debug, Default)]
pub struct WeightMap {
    pub entries: Vec<MapEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    SmallToBig,
    BigToSmall,
}

fn full_slice(shape: &[usize]) -> Vec<(usize, usize)> {
    shape.iter().map(|&d| (0, d)).collect()
}

/// Rewrite a base parameter name to its motivated counterpart, applying the
/// per-stage block-index rule. Names without a `stageS.blockB.` component
/// pass through unchanged.
fn map_name(name: &str, base_cfg: &ArchConfig, mot_cfg: &ArchConfig) -> Result<String> {
    let Some(rest) = name.strip_prefix("stage") else {
        return Ok(name.to_string());
    };
    let (stage_str, rest) = rest
        .split_once(".block")
        .ok_or_else(|| Error::Map(format!("unrecognized name `{name}`")))?;
    let (block_str, tail) = rest
        .split_once('.')
        .ok_or_else(|| Error::Map(format!("unrecognized name `{name}`")))?;
    let s: usize = stage_str
        .parse()
        .map_err(|_| Error::Map(format!("unrecognized name `{name}`")))?;
    let b: usize = block_str
        .parse()
        .map_err(|_| Error::Map(format!("unrecognized name `{name}`")))?;
    let l = base_cfg.stage_layers[s];
    let l_big = mot_cfg.stage_layers[s];
    let b_big = if b + 1 == l { l_big - 1 } else { b };
    Ok(format!("stage{s}.block{b_big}.{tail}"))
}

/// Construct the canonical map between two levels of one family.
///
/// Covers every base parameter and buffer exactly once; motivated-side
/// regions are pairwise disjoint. Fails listing the unmappable names when
/// the motivated model does not structurally contain the base one.
pub fn build_map(base_cfg: &ArchConfig, mot_cfg: &ArchConfig) -> Result<WeightMap> {
    if base_cfg.family != mot_cfg.family {
        return Err(Error::Map(format!(
            "family mismatch: {:?} vs {:?}",
            base_cfg.family, mot_cfg.family
        )));
    }
    if base_cfg.level > mot_cfg.level {
        return Err(Error::Map(format!(
            "base level {} exceeds motivated level {}",
            base_cfg.level, mot_cfg.level
        )));
    }
    if base_cfg
        .stage_layers
        .iter()
        .zip(&mot_cfg.stage_layers)
        .any(|(l, lb)| l > lb)
    {
        return Err(Error::Map(format!(
            "stage layers {:?} not contained in {:?}",
            base_cfg.stage_layers, mot_cfg.stage_layers
        )));
    }
    // the stores only provide names and shapes here; seed is irrelevant
    let base = Model::build(base_cfg.clone(), 0)?.store;
    let mot = Model::build(mot_cfg.clone(), 0)?.store;
    let mut entries = Vec::new();
    let mut unmappable = Vec::new();
    for name in base.all_names() {
        let mot_name = map_name(&name, base_cfg, mot_cfg)?;
        let base_shape = base.value(&name)?.shape().to_vec();
        match mot.value(&mot_name) {
            Err(_) => unmappable.push(format!("{name} (no counterpart `{mot_name}`)")),
            Ok(t) => {
                let mot_shape = t.shape();
                if base_shape.len() != mot_shape.len()
                    || base_shape.iter().zip(mot_shape).any(|(a, b)| a > b)
                {
                    unmappable.push(format!(
                        "{name} (shape {base_shape:?} not contained in {mot_shape:?})"
                    ));
                    continue;
                }
                entries.push(MapEntry {
                    base: RegionRef {
                        name: name.clone(),
                        slice: full_slice(&base_shape),
                    },
                    motivated: RegionRef {
                        name: mot_name,
                        slice: full_slice(&base_shape),
                    },
                    trainable: base.is_param(&name),
                });
            }
        }
    }
    if !unmappable.is_empty() {
        return Err(Error::Map(unmappable.join(", ")));
    }
    Ok(WeightMap { entries })
}

impl WeightMap {
    /// Total number of base-side elements covered.
    pub fn base_volume(&self) -> usize {
        self.entries.iter().map(|e| e.base.volume()).sum()
    }

    /// Audit dump: one `base_name[slices] -> mot_name[slices]` line per
    /// entry, in map order.
    pub fn dump(&self) -> String {
        let fmt = |r: &RegionRef| {
            let slices: Vec<String> = r
                .slice
                .iter()
                .map(|&(o, l)| format!("{o}..{}", o + l))
                .collect();
            format!("{}[{}]", r.name, slices.join(","))
        };
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&fmt(&e.base));
            out.push_str(" -> ");
            out.push_str(&fmt(&e.motivated));
            out.push('\n');
        }
        out
    }
}

/// Copy `src` restricted to `src_region` into `dst` at `dst_region`.
fn copy_region(
    src: &Tensor,
    src_region: &RegionRef,
    dst: &mut Tensor,
    dst_region: &RegionRef,
) -> Result<()> {
    if !src_region.fits(src.shape()) || !dst_region.fits(dst.shape()) {
        return Err(Error::Integrity(format!(
            "region out of bounds: {}{:?} in {:?} / {}{:?} in {:?}",
            src_region.name,
            src_region.slice,
            src.shape(),
            dst_region.name,
            dst_region.slice,
            dst.shape()
        )));
    }
    let lens: Vec<usize> = src_region.slice.iter().map(|&(_, l)| l).collect();
    let dst_lens: Vec<usize> = dst_region.slice.iter().map(|&(_, l)| l).collect();
    if lens != dst_lens {
        return Err(Error::Integrity(format!(
            "slice length mismatch {lens:?} vs {dst_lens:?} ({} -> {})",
            src_region.name, dst_region.name
        )));
    }
    let src_strides = strides_of(src.shape());
    let dst_strides = strides_of(dst.shape());
    let ndim = lens.len();
    let volume: usize = lens.iter().product();
    let mut idx = vec![0usize; ndim];
    let dst_data = dst.data_mut();
    for _ in 0..volume {
        let mut si = 0;
        let mut di = 0;
        for d in 0..ndim {
            si += (src_region.slice[d].0 + idx[d]) * src_strides[d];
            di += (dst_region.slice[d].0 + idx[d]) * dst_strides[d];
        }
        dst_data[di] = src.data()[si];
        for d in (0..ndim).rev() {
            idx[d] += 1;
            if idx[d] < lens[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(())
}

/// Write every mapped base region into the motivated store. Elements of the
/// motivated model outside the mapped regions (the differential layers) are
/// untouched.
pub fn copy_small_big(base: &ParamStore, mot: &mut ParamStore, map: &WeightMap) -> Result<()> {
    for e in &map.entries {
        let src = base.value(&e.base.name)?.clone();
        let dst = mot.value_mut(&e.motivated.name)?;
        copy_region(&src, &e.base, dst, &e.motivated)?;
    }
    Ok(())
}

/// Mirror image of [`copy_small_big`]: base regions := motivated regions.
pub fn copy_big_small(base: &mut ParamStore, mot: &ParamStore, map: &WeightMap) -> Result<()> {
    for e in &map.entries {
        let src = mot.value(&e.motivated.name)?.clone();
        let dst = base.value_mut(&e.base.name)?;
        copy_region(&src, &e.motivated, dst, &e.base)?;
    }
    Ok(())
}

/// Region-wise transfer of per-parameter optimizer slots (momentum, m, v)
/// along the map. Step counters stay with their own optimizer.
pub fn copy_optimizer_state(
    src: &OptimizerState,
    dst: &mut OptimizerState,
    map: &WeightMap,
    direction: Direction,
) -> Result<()> {
    if src.slot_names() != dst.slot_names() {
        return Err(Error::Map(format!(
            "optimizer slot sets differ: {:?} vs {:?}",
            src.slot_names(),
            dst.slot_names()
        )));
    }
    let slots: Vec<String> = src.slot_names().to_vec();
    for e in &map.entries {
        if !e.trainable {
            continue;
        }
        let (src_region, dst_region) = match direction {
            Direction::SmallToBig => (&e.base, &e.motivated),
            Direction::BigToSmall => (&e.motivated, &e.base),
        };
        for slot in &slots {
            let s = src.slot(&src_region.name, slot)?.clone();
            let d = dst.slot_mut(&dst_region.name, slot)?;
            copy_region(&s, src_region, d, dst_region)?;
        }
    }
    Ok(())
}

/// Pull the base-shaped view back out of a motivated store, producing a
/// store with the base model's layout.
pub fn extract(mot: &ParamStore, map: &WeightMap) -> Result<ParamStore> {
    let mut out = ParamStore::new();
    for e in &map.entries {
        let shape: Vec<usize> = e.base.slice.iter().map(|&(_, l)| l).collect();
        let mut t = Tensor::zeros(&shape);
        let src = mot.value(&e.motivated.name)?;
        let base_region = RegionRef {
            name: e.base.name.clone(),
            slice: full_slice(&shape),
        };
        copy_region(src, &e.motivated, &mut t, &base_region)?;
        out.register(&e.base.name, t, e.trainable)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::Family;

    fn depth_cfg(level: u32) -> ArchConfig {
        ArchConfig::preset(Family::DepthResNet, level, 10, (3, 8, 8))
    }

    #[test]
    fn depth_rule_skips_middle_blocks() {
        // l = 2 vs l' = 3: block0 -> block0, block1 -> block2
        let base = ArchConfig {
            stage_layers: vec![2, 2, 2],
            ..depth_cfg(1)
        };
        let mot = ArchConfig {
            stage_layers: vec![3, 3, 3],
            level: 2,
            ..depth_cfg(1)
        };
        let map = build_map(&base, &mot).unwrap();
        let dump = map.dump();
        assert!(dump.contains("stage0.block0.conv0.weight[0..8,0..8,0..3,0..3] -> stage0.block0.conv0.weight["));
        assert!(dump.contains("stage0.block1.conv0.weight[0..8,0..8,0..3,0..3] -> stage0.block2.conv0.weight["));
        assert!(!dump.contains("-> stage0.block1."));
    }

    #[test]
    fn width_rule_is_per_dim_prefix() {
        let base = ArchConfig::preset(Family::WidthMlp, 0, 4, (1, 1, 6));
        let mot = ArchConfig::preset(Family::WidthMlp, 1, 4, (1, 1, 6));
        let map = build_map(&base, &mot).unwrap();
        let e = map
            .entries
            .iter()
            .find(|e| e.base.name == "layer1.weight")
            .unwrap();
        assert_eq!(e.base.slice, vec![(0, 32), (0, 32)]);
        assert_eq!(e.motivated.slice, vec![(0, 32), (0, 32)]);
        let emb = map
            .entries
            .iter()
            .find(|e| e.base.name == "class_embed")
            .unwrap();
        // dims 0,1 equal; prefix bites on the last dim only
        assert_eq!(emb.motivated.slice, vec![(0, 1), (0, 4), (0, 32)]);
    }

    #[test]
    fn equal_configs_give_total_identity() {
        let cfg = depth_cfg(1);
        let map = build_map(&cfg, &cfg).unwrap();
        let store = Model::build(cfg, 0).unwrap().store;
        assert_eq!(map.base_volume(), store.num_elements());
        for e in &map.entries {
            assert_eq!(e.base, e.motivated);
        }
    }

    #[test]
    fn map_is_total_over_consecutive_levels() {
        for family in [Family::DepthResNet, Family::WidthMlp, Family::WidthConvNet] {
            for level in 0..3 {
                let base_cfg = ArchConfig::preset(family, level, 7, (3, 8, 8));
                let mot_cfg = ArchConfig::preset(family, level + 1, 7, (3, 8, 8));
                let map = build_map(&base_cfg, &mot_cfg).unwrap();
                let base = Model::build(base_cfg, 0).unwrap().store;
                assert_eq!(
                    map.base_volume(),
                    base.num_elements(),
                    "{family:?} level {level}"
                );
                // each base name exactly once; motivated regions on distinct
                // names or disjoint blocks
                let mut names: Vec<&str> = map.entries.iter().map(|e| e.base.name.as_str()).collect();
                names.sort_unstable();
                names.dedup();
                assert_eq!(names.len(), map.entries.len());
                let mut mot_names: Vec<&str> =
                    map.entries.iter().map(|e| e.motivated.name.as_str()).collect();
                mot_names.sort_unstable();
                mot_names.dedup();
                assert_eq!(mot_names.len(), map.entries.len());
            }
        }
    }

    #[test]
    fn family_mismatch_and_non_containment_are_errors() {
        let a = ArchConfig::preset(Family::DepthResNet, 0, 10, (3, 8, 8));
        let b = ArchConfig::preset(Family::WidthMlp, 1, 10, (3, 8, 8));
        assert!(matches!(build_map(&a, &b), Err(Error::Map(_))));
        let big = depth_cfg(2);
        let small = depth_cfg(0);
        let err = build_map(&big, &small).unwrap_err();
        assert!(matches!(err, Error::Map(_)));
    }

    #[test]
    fn round_trip_preserves_base_bitwise() {
        let base_cfg = depth_cfg(0);
        let mot_cfg = depth_cfg(1);
        let map = build_map(&base_cfg, &mot_cfg).unwrap();
        let mut base = Model::build(base_cfg, 17).unwrap().store;
        let mut mot = Model::build(mot_cfg, 99).unwrap().store;
        let before = base.snapshot();
        copy_small_big(&base, &mut mot, &map).unwrap();
        copy_big_small(&mut base, &mot, &map).unwrap();
        assert_eq!(base.snapshot(), before);
        // and the motivated mapped region now holds the base values
        let extracted = extract(&mot, &map).unwrap();
        for name in base.all_names() {
            assert_eq!(
                extracted.value(&name).unwrap().data(),
                base.value(&name).unwrap().data()
            );
        }
    }

    #[test]
    fn copy_small_big_leaves_differential_layers_untouched() {
        let base_cfg = depth_cfg(0);
        let mot_cfg = depth_cfg(2);
        let map = build_map(&base_cfg, &mot_cfg).unwrap();
        let base = Model::build(base_cfg, 1).unwrap().store;
        let mut mot = Model::build(mot_cfg, 2).unwrap().store;
        // checksum over everything outside mapped regions
        let complement_sum = |mot: &ParamStore| -> f64 {
            let mut marked = mot.clone();
            for e in &map.entries {
                let nan = Tensor::full(
                    &e.base.slice.iter().map(|&(_, l)| l).collect::<Vec<_>>(),
                    f64::NAN,
                );
                let dst = marked.value_mut(&e.motivated.name).unwrap();
                let src_region = RegionRef {
                    name: e.base.name.clone(),
                    slice: full_slice(nan.shape()),
                };
                copy_region(&nan, &src_region, dst, &e.motivated).unwrap();
            }
            marked
                .all_names()
                .iter()
                .flat_map(|n| marked.value(n).unwrap().data().to_vec())
                .filter(|v| !v.is_nan())
                .sum()
        };
        let before = complement_sum(&mot);
        copy_small_big(&base, &mut mot, &map).unwrap();
        assert_eq!(complement_sum(&mot), before);
    }

    #[test]
    fn optimizer_state_round_trip() {
        use crate::optim::{Optimizer, OptimizerKind};
        let base_cfg = ArchConfig::preset(Family::WidthMlp, 0, 3, (1, 1, 4));
        let mot_cfg = ArchConfig::preset(Family::WidthMlp, 1, 3, (1, 1, 4));
        let map = build_map(&base_cfg, &mot_cfg).unwrap();
        let base = Model::build(base_cfg, 5).unwrap().store;
        let mot = Model::build(mot_cfg, 6).unwrap().store;
        let kind = OptimizerKind::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut small = Optimizer::new(kind.clone(), &base);
        let mut big = Optimizer::new(kind, &mot);
        // fill the small slots with recognizable values
        for name in small.state.param_names().to_vec() {
            for slot in small.state.slot_names().to_vec() {
                small
                    .state
                    .slot_mut(&name, &slot)
                    .unwrap()
                    .fill(name.len() as f64 + slot.len() as f64 * 0.25);
            }
        }
        let before = small.state.snapshot();
        copy_optimizer_state(&small.state, &mut big.state, &map, Direction::SmallToBig).unwrap();
        // region equality after small -> big
        let e = map
            .entries
            .iter()
            .find(|e| e.base.name == "layer0.bias")
            .unwrap();
        let m_small = small.state.slot("layer0.bias", "m").unwrap();
        let m_big = big.state.slot("layer0.bias", "m").unwrap();
        assert_eq!(&m_big.data()[..e.base.volume()], m_small.data());
        copy_optimizer_state(&big.state, &mut small.state, &map, Direction::BigToSmall).unwrap();
        assert_eq!(small.state.snapshot(), before);
    }

    #[test]
    fn slot_set_mismatch_is_an_error() {
        use crate::optim::{Optimizer, OptimizerKind};
        let cfg = ArchConfig::preset(Family::WidthMlp, 0, 3, (1, 1, 4));
        let map = build_map(&cfg, &cfg).unwrap();
        let store = Model::build(cfg, 0).unwrap().store;
        let sgd = Optimizer::new(
            OptimizerKind::Sgd {
                momentum: 0.9,
                weight_decay: 0.0,
            },
            &store,
        );
        let mut adamw = Optimizer::new(
            OptimizerKind::AdamW {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                weight_decay: 0.0,
            },
            &store,
        );
        assert!(copy_optimizer_state(&sgd.state, &mut adamw.state, &map, Direction::SmallToBig).is_err());
    }
}
