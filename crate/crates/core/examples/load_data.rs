//! Bundled datasets, delimited and sparse files, splits and standardization.

use std::io::Cursor;

use quantile_surrogate::data::{
    housing, ionosphere, read_delimited, read_sparse, split, standardize, DelimitedOptions, LabelColumn,
    LabelRule, SplitSpec,
};

fn main() -> quantile_surrogate::Result<()> {
    for (name, ds) in [("ionosphere", ionosphere()), ("housing", housing())] {
        println!("{name}: {} samples, {} features, {} positive", ds.len(), ds.dimension(), ds.positive_indices().len());
    }

    let text = "label;a;b\nyes;1.0;2.0\nno;0.5;-1.0\nyes;2.0;0.0\n";
    let options = DelimitedOptions {
        delimiter: ';',
        has_header: true,
        label_column: LabelColumn::Index(0),
        label_rule: LabelRule::Category { positive: "yes".into(), negative: Some("no".into()) },
    };
    let ds = read_delimited(Cursor::new(text), &options)?;
    println!("delimited: {} samples, labels {:?}", ds.len(), ds.labels());

    let sparse = "# label index:value ...\n+1 1:0.5 3:2.0\n-1 2:1.0\n";
    let ds = read_sparse(Cursor::new(sparse))?;
    println!("sparse: dimension {}, first row {:?}", ds.dimension(), ds.samples()[0].features());

    let (train, test) = split(&ionosphere(), &SplitSpec::new(0.3, 0).stratified())?;
    let (train, _test, scaler) = standardize(&train, &test)?;
    println!("split {} / {}, first feature mean {:.3}", train.len(), test.len(), scaler.mean[0]);
    Ok(())
}
