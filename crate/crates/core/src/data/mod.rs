//! Datasets, file formats, and seeded split/fold planning.

mod dataset;
mod io;
mod split;

pub use dataset::{SparseDataset, SparseRow};
pub use io::{
    parse_dataset, parse_dense_pair, parse_label_lines, parse_label_list, parse_svmlight, read_dense_pair,
    read_label_file, read_svmlight, write_label_lines, write_svmlight, DataSource, ParseOptions,
};
pub use split::{make_folds, make_split, FoldPlan, SplitPlan};
