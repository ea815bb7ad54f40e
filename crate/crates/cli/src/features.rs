use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use log::warn;

use mrccg::cg::fit;
use mrccg::{InstanceMap, MrcModel};

use crate::args::{data_args, FeaturesArgs};

/// A raw component of `Ψ` and the classes whose copy of it is used.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawFeature {
    pub l1: f64,
    pub classes: Vec<usize>,
}

/// Support of `μ` collapsed from `Φ` coordinates to `Ψ` components.
pub fn raw_support(model: &MrcModel) -> BTreeMap<usize, RawFeature> {
    let mut out: BTreeMap<usize, RawFeature> = BTreeMap::new();
    for (j, v) in model.mu.iter() {
        let (class, p) = model.fmap.decompose(j);
        let e = out.entry(p).or_default();
        e.l1 += v.abs();
        e.classes.push(class);
    }
    out
}

fn component_name(model: &MrcModel, p: usize) -> String {
    match &model.fmap.instance_map {
        InstanceMap::Identity { .. } => model
            .feature_names
            .as_ref()
            .map_or_else(|| format!("x{p}"), |names| names[p].clone()),
        InstanceMap::Rff { components, .. } if p < *components => format!("cos_{p}"),
        InstanceMap::Rff { components, .. } => format!("sin_{}", p - components),
    }
}

pub fn run(a: &FeaturesArgs) -> Result<()> {
    let model = match (&a.model, &a.data) {
        (Some(path), _) => MrcModel::load(path)?,
        (None, Some(data)) => {
            let data = data_args(data, &a.label_col, a.no_header).load()?;
            fit(&data, &a.fmap.spec(), &a.cg.config(), a.cg.standardize())?.0
        }
        (None, None) => bail!("either --model or --data is required"),
    };
    let support = raw_support(&model);
    if support.is_empty() {
        warn!("the model has no nonzero coefficients");
    }
    let mut w =
        csv::Writer::from_path(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    w.write_record(["feature", "name", "l1_coefficient", "classes"])?;
    for (p, f) in &support {
        let classes: Vec<String> = f.classes.iter().map(|&c| model.label_name(c)).collect();
        w.write_record([
            p.to_string(),
            component_name(&model, *p),
            format!("{:?}", f.l1),
            classes.join(";"),
        ])?;
    }
    w.flush()?;
    println!("selected raw features = {}", support.len());
    println!("features: {}", a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mrccg::{FeatureMap, SparseVector};

    #[test]
    fn class_copies_collapse() {
        let model = MrcModel::new(
            FeatureMap::new(InstanceMap::identity(3), 2),
            None,
            SparseVector::from_pairs(vec![(0, 0.5), (3, -0.25)]),
            vec![0, 3],
            1.0,
            0.3,
            vec![],
            None,
        )
        .unwrap();
        let s = raw_support(&model);
        assert_eq!(s.len(), 1);
        assert_eq!(s[&0].classes, vec![0, 1]);
        assert_eq!(s[&0].l1, 0.75);
        assert_eq!(component_name(&model, 0), "x0");
    }
}
