//! File formats: dataset and prediction JSON, rating CSV, reports and SVG plots.
//!
//! Loaders collect every problem of a file before failing, so one run shows
//! all of them.

mod load;
mod model;
mod report;
mod svg;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use load::{
    dataset_to_json, load_dataset, load_predictions, load_ratings, parse_dataset, parse_predictions,
    parse_ratings, predictions_to_json, write_dataset, write_predictions, write_ratings,
};
pub use model::*;
pub use report::{emit_report, load_report, round_sig, Cell, Report, ReportFormat, Table};
pub use svg::{bars_svg, boxplot_svg, curves_svg, emit_plot, PlotKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Syntax,
    MissingField,
    InvalidValue,
    OutOfRange,
    DanglingReference,
    Duplicate,
    EmptyMask,
    /// Warning only: a box was clamped to its image.
    Clamped,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiagnosticKind::Syntax => "syntax error",
            DiagnosticKind::MissingField => "missing field",
            DiagnosticKind::InvalidValue => "invalid value",
            DiagnosticKind::OutOfRange => "out of range",
            DiagnosticKind::DanglingReference => "dangling reference",
            DiagnosticKind::Duplicate => "duplicate id",
            DiagnosticKind::EmptyMask => "empty mask",
            DiagnosticKind::Clamped => "clamped",
        };
        f.write_str(s)
    }
}

/// One finding in an input file. `location` is `line:column` for syntax
/// errors, a path such as `annotations[3].mask` for JSON content, and
/// `line N` for CSV rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub location: String,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.file, self.location, self.kind, self.message)
    }
}
