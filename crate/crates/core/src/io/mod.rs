mod case;
mod report;

pub use self::case::*;
pub use self::report::{render_report, write_report, ReportError, ReportFormat, REPORT_COLUMNS};
