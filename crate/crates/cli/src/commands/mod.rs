pub mod explain;
pub mod gen_synth;
pub mod rank;
pub mod select;
pub mod sweep;
pub mod train_eval;

use comet::data::Dataset;

use crate::error::{CliError, CliResult};

/// Class id of `name` in `ds`, or an error listing the available classes.
pub(crate) fn class_by_name(ds: &Dataset, name: &str) -> CliResult<usize> {
    ds.class_id(name).ok_or_else(|| {
        CliError::config(format!("unknown class '{name}'; available: {}", ds.class_names.join(", ")))
    })
}

pub(crate) fn rows_of_class(ds: &Dataset, class: usize) -> Vec<usize> {
    (0..ds.len()).filter(|&r| ds.y[r] == class).collect()
}

/// Concept prototypes of `classes`, each built from all of its rows in `ds`.
pub(crate) fn full_class_bank(
    model: &comet::model::CometModel,
    ds: &Dataset,
    classes: &[usize],
) -> CliResult<comet::model::PrototypeBank> {
    let support: Vec<Vec<usize>> = classes.iter().map(|&c| rows_of_class(ds, c)).collect();
    Ok(comet::model::compute_prototypes(
        model,
        ds,
        classes,
        &support,
        comet::nn::ForwardMode::Eval,
        &mut comet::model::eval_rng(),
    )?)
}
