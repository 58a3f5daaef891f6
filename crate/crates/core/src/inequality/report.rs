use serde::{Deserialize, Serialize};

/// Where the constant of a checked bound comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Stated numerically in the source of the inequality.
    PaperExplicit,
    /// Supplied by the user for an implicit constant.
    Configured,
    /// Measured on the data; the row records a ratio, not a verdict.
    MeasuredEnvelope,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Self::PaperExplicit => "paper-explicit",
            Self::Configured => "configured",
            Self::MeasuredEnvelope => "measured-envelope",
        }
    }
}

/// Ordered so that failures sort first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Fail,
    Pass,
    ReportOnly,
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Fail => "fail",
            Self::Pass => "pass",
            Self::ReportOnly => "report-only",
        }
    }
}

/// Relative float slack granted to exact comparisons.
pub const FLOAT_SLACK: f64 = 1e-12;

/// One checked inequality, always stated as `lhs <= constant * rhs`; lower
/// bounds are rewritten with the sides swapped. Equality rows (check ids
/// ending in `.equality`) require `|lhs - constant * rhs| <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckReport {
    pub check_id: String,
    pub case_id: String,
    pub p: f64,
    pub q: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub provenance: Provenance,
    pub status: Status,
    pub tolerance: f64,
    pub seed: Option<u64>,
    pub runtime_ms: Option<f64>,
    pub note: String,
}

impl CheckReport {
    /// A bound `lhs <= constant * rhs + tolerance`, judged on the spot.
    /// `0 <= c * 0` passes with a note.
    #[allow(clippy::too_many_arguments)]
    pub fn bound(
        check_id: &str,
        p: f64,
        q: Option<f64>,
        lhs: f64,
        rhs: f64,
        constant: f64,
        provenance: Provenance,
        tolerance: f64,
    ) -> Self {
        let mut r = Self {
            check_id: check_id.to_string(),
            case_id: String::new(),
            p,
            q,
            lhs,
            rhs,
            constant,
            provenance,
            status: Status::Pass,
            tolerance,
            seed: None,
            runtime_ms: None,
            note: String::new(),
        };
        if lhs == 0.0 && rhs == 0.0 {
            r.note = "degenerate 0 <= 0".into();
        } else if !(lhs <= constant * rhs + tolerance) {
            r.status = Status::Fail;
        }
        r
    }

    /// `bound` with the default float slack relative to the larger side.
    pub fn exact_bound(check_id: &str, p: f64, q: Option<f64>, lhs: f64, rhs: f64, constant: f64) -> Self {
        let tol = FLOAT_SLACK * lhs.max(constant * rhs);
        Self::bound(check_id, p, q, lhs, rhs, constant, Provenance::PaperExplicit, tol)
    }

    /// Two-sided: `|lhs - constant * rhs| <= tolerance`.
    pub fn equality(check_id: &str, p: f64, q: Option<f64>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let mut r = Self::bound(check_id, p, q, lhs, rhs, 1.0, Provenance::PaperExplicit, tolerance);
        if !((lhs - rhs).abs() <= tolerance) {
            r.status = Status::Fail;
        }
        r
    }

    /// A measured ratio with no verdict; `constant` is `lhs / rhs`.
    pub fn measured(check_id: &str, p: f64, q: Option<f64>, lhs: f64, rhs: f64) -> Self {
        let ratio = ratio(lhs, rhs);
        let mut r = Self::bound(check_id, p, q, lhs, rhs, ratio, Provenance::MeasuredEnvelope, 0.0);
        r.status = Status::ReportOnly;
        r
    }

    pub fn report_only(mut self) -> Self {
        self.status = Status::ReportOnly;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        if self.note.is_empty() {
            self.note = note;
        } else if !note.is_empty() {
            self.note = format!("{}; {note}", self.note);
        }
        self
    }

    pub fn with_case(mut self, case_id: impl Into<String>) -> Self {
        self.case_id = case_id.into();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    pub fn ratio(&self) -> f64 {
        ratio(self.lhs, self.rhs)
    }
}

/// `lhs / rhs` with `0 / 0 = 1` and `x / 0 = inf`.
pub fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Asserts `max / min <= band` over a family of measured ratios; `widths`
/// holds a per-ratio uncertainty that widens the comparison (zero if exact).
pub fn stability(check_id: &str, p: f64, q: Option<f64>, ratios: &[f64], widths: &[f64], band: f64) -> CheckReport {
    let hi = ratios.iter().zip(widths).map(|(r, w)| r - w).fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().zip(widths).map(|(r, w)| r + w).fold(f64::INFINITY, f64::min);
    let raw_hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw_lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut r = CheckReport::bound(check_id, p, q, hi.max(0.0), lo, band, Provenance::Configured, 0.0);
    r.note = format!("{} ratios in [{raw_lo:.6e}, {raw_hi:.6e}]", ratios.len());
    if ratios.is_empty() || !raw_lo.is_finite() || raw_lo <= 0.0 {
        r.status = Status::Fail;
        r.note.push_str("; empty or degenerate family");
    }
    r
}
