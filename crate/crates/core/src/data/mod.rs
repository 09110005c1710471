mod design;
mod formula;
mod scaling;
mod table;

pub use design::{encode_design, Design, Encoding, ModelSpec, RandomEncoding, TermEncoding, X2Encoding, X2Selection};
pub use formula::{parse_formula, Formula, RandomTerm};
pub use scaling::{scale_response, ScalingRecord};
pub use table::{load_table, Column, ColumnData, Table};
