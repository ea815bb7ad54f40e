use std::io::Write;

use anyhow::{anyhow, Context, Result};

use mrccg::{Dataset, MrcModel};

use crate::args::PredictArgs;

/// Re-encodes the labels of `data` with the model's label values.
fn align_labels(model: &MrcModel, data: &Dataset) -> Result<Dataset> {
    let names: Vec<String> = (0..model.n_classes())
        .map(|c| model.label_name(c))
        .collect();
    let map: Vec<usize> = data
        .label_values
        .iter()
        .map(|v| {
            names
                .iter()
                .position(|n| n == v)
                .ok_or_else(|| anyhow!("label {v:?} is not known to the model"))
        })
        .collect::<Result<_>>()?;
    let mut out = data.clone();
    out.labels = data.labels.iter().map(|&y| map[y]).collect();
    out.n_classes = model.n_classes();
    out.label_values = names;
    Ok(out)
}

pub fn run(a: &PredictArgs) -> Result<()> {
    let model = MrcModel::load(&a.model)?;
    let data = align_labels(&model, &a.data.load()?)?;

    let sink: Box<dyn Write> = match &a.out {
        Some(p) => {
            Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![
        "row".to_string(),
        "label".to_string(),
        "prediction".to_string(),
    ];
    header.extend((0..model.n_classes()).map(|c| format!("p_{}", model.label_name(c))));
    w.write_record(&header)?;
    for i in 0..data.n_samples() {
        let x = data.instance(i);
        let h = model.predict_proba(x)?;
        let y = model.predict(x)?;
        let mut rec = vec![
            i.to_string(),
            model.label_name(data.labels[i]),
            model.label_name(y),
        ];
        rec.extend(h.iter().map(|p| format!("{p:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    drop(w);

    let err = model.empirical_error(&data)?;
    eprintln!(
        "deterministic error = {:.4}, randomized loss = {:.4}, R* = {:.4}",
        err.deterministic, err.randomized, model.r_star
    );
    Ok(())
}
